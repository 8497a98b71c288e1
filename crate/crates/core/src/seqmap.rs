//! Channel-to-sequence mappings and their design.
//!
//! The terminal signals its detected downlink beam by choosing an uplink
//! reference sequence; the map from beams to sequences is what gets
//! designed here. Three worst-pair metrics score a mapping against a beam
//! set, and a randomized search (draw, normalize, keep the best) minimizes
//! a chosen metric, optionally with correlated draws shaped by the beam
//! set's Gram structure.

use std::path::Path;

use nalgebra::{DMatrix, DVector, DVectorView};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::beamworld::BeamSet;
use crate::error::{Error, Result};
use crate::matfile;
use crate::numerics::{derived_rng, standard_complex_gaussian};

/// Relative tolerance on unit sequence norms.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Entries of a Gram matrix at or below this fraction of the largest entry
/// magnitude count as zero in the correlation recipes.
const GRAM_ZERO_TOLERANCE: f64 = 1e-12;

/// A `tau x n` matrix of unit-norm uplink sequences, column `j` paired
/// with beam `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMap {
    mat: DMatrix<Complex64>,
}

impl SequenceMap {
    pub fn new(mat: DMatrix<Complex64>) -> Result<Self> {
        if mat.nrows() == 0 || mat.ncols() == 0 {
            return Err(Error::invalid("sequence map needs at least one row and column"));
        }
        for (idx, col) in mat.column_iter().enumerate() {
            let norm_sq = col.norm_squared();
            if (norm_sq - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::invalid(format!(
                    "sequence {idx} has squared norm {norm_sq}, expected 1"
                )));
            }
        }
        Ok(SequenceMap { mat })
    }

    /// Orthogonal assignment: beam `j` (zero-based) gets standard basis
    /// sequence `(j + 1) mod tau`, cycling `tau` orthonormal sequences over
    /// the beams.
    pub fn orthogonal(beams: usize, tau: usize) -> Result<Self> {
        if tau == 0 {
            return Err(Error::invalid("sequence length must be nonzero"));
        }
        if tau > beams {
            return Err(Error::invalid(format!(
                "sequence length {tau} exceeds beam count {beams}"
            )));
        }
        let mat = DMatrix::from_fn(tau, beams, |t, j| {
            if t == (j + 1) % tau {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Ok(SequenceMap { mat })
    }

    /// Sequence length tau.
    pub fn tau(&self) -> usize {
        self.mat.nrows()
    }

    /// Number of mapped beams.
    pub fn count(&self) -> usize {
        self.mat.ncols()
    }

    pub fn sequence(&self, j: usize) -> DVectorView<'_, Complex64> {
        self.mat.column(j)
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    /// Whether all columns coincide (the no-CSI benchmark shape).
    pub fn is_uniform(&self) -> bool {
        let first = self.mat.column(0);
        self.mat
            .column_iter()
            .all(|c| (c - first).norm_squared() <= 1e-24)
    }

    /// Write in the text format `tau n` + `re:im` rows.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = format!("{} {}", self.tau(), self.count());
        std::fs::write(path, matfile::format_matrix(&header, &self.mat))?;
        Ok(())
    }

    /// Load a map saved by [`SequenceMap::save`]. Columns within the norm
    /// tolerance are kept bit exact, columns within 1% are renormalized.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path)?;
        let mat = matfile::parse_matrix(path, &contents, 2, |header| {
            let tau: usize = matfile::parse_header_field(path, header, 0, "sequence length")?;
            let n: usize = matfile::parse_header_field(path, header, 1, "beam count")?;
            if tau == 0 || n == 0 {
                return Err(Error::invalid("sequence length and beam count must be nonzero"));
            }
            Ok((tau, n))
        })?;
        let mut mat = mat;
        for (idx, mut col) in mat.column_iter_mut().enumerate() {
            let norm_sq = col.norm_squared();
            let rel = (norm_sq - 1.0).abs();
            if rel <= NORM_TOLERANCE {
                continue;
            }
            if rel <= 1e-2 {
                col.scale_mut(norm_sq.sqrt().recip());
            } else {
                return Err(Error::invalid(format!(
                    "sequence {idx} in {} has squared norm {norm_sq}, more than 1% from 1",
                    path.display()
                )));
            }
        }
        SequenceMap::new(mat)
    }
}

/// Which worst-pair statistic a design run minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignMetric {
    /// `max |phi_a^H phi_b * g_a^H g_b|` over distinct pairs; governs
    /// detection with an unknown phase shift.
    UnknownPhase,
    /// `max Re{phi_a^H phi_b * g_a^H g_b}`; governs detection with a
    /// compensated phase shift.
    KnownPhase,
    /// `max |phi_a^H phi_b|`; governs the non-reciprocal uplink.
    NonReciprocal,
}

/// Worst coupling magnitude between distinct beam/sequence pairs.
pub fn unknown_phase_metric(beams: &BeamSet, map: &SequenceMap) -> Result<f64> {
    check_pairing(beams, map)?;
    let coupling = beams.gram();
    pair_metric(&coupling, map.matrix(), DesignMetric::UnknownPhase)
}

/// Worst coupling real part between distinct beam/sequence pairs.
pub fn known_phase_metric(beams: &BeamSet, map: &SequenceMap) -> Result<f64> {
    check_pairing(beams, map)?;
    let coupling = beams.gram();
    pair_metric(&coupling, map.matrix(), DesignMetric::KnownPhase)
}

/// Worst sequence cross-correlation magnitude; 0 for single-beam maps.
pub fn nonreciprocal_metric(map: &SequenceMap) -> f64 {
    if map.count() < 2 {
        return 0.0;
    }
    pair_metric(&DMatrix::zeros(0, 0), map.matrix(), DesignMetric::NonReciprocal)
        .expect("nonreciprocal metric needs no coupling")
}

/// Evaluate any of the three metrics against a beam set.
pub fn evaluate_metric(metric: DesignMetric, beams: &BeamSet, map: &SequenceMap) -> Result<f64> {
    match metric {
        DesignMetric::UnknownPhase => unknown_phase_metric(beams, map),
        DesignMetric::KnownPhase => known_phase_metric(beams, map),
        DesignMetric::NonReciprocal => {
            check_pairing(beams, map)?;
            Ok(nonreciprocal_metric(map))
        }
    }
}

/// Metric value together with every unordered pair attaining it (within
/// 1e-12 relative), for diagnostics.
pub fn attaining_pairs(
    metric: DesignMetric,
    beams: &BeamSet,
    map: &SequenceMap,
) -> Result<(f64, Vec<(usize, usize)>)> {
    let value = evaluate_metric(metric, beams, map)?;
    let coupling = beams.gram();
    let tol = 1e-12 * value.abs().max(1.0);
    let mut pairs = Vec::new();
    let phi = map.matrix();
    for a in 0..map.count() {
        for b in (a + 1)..map.count() {
            let stat = pair_statistic(&coupling, phi, a, b, metric);
            if (stat - value).abs() <= tol {
                pairs.push((a, b));
            }
        }
    }
    Ok((value, pairs))
}

fn check_pairing(beams: &BeamSet, map: &SequenceMap) -> Result<()> {
    if beams.count() != map.count() {
        return Err(Error::dimension(format!(
            "beam set has {} beams but map covers {}",
            beams.count(),
            map.count()
        )));
    }
    if beams.count() < 2 {
        return Err(Error::invalid("pair metrics need at least two beams"));
    }
    Ok(())
}

fn pair_statistic(
    coupling: &DMatrix<Complex64>,
    phi: &DMatrix<Complex64>,
    a: usize,
    b: usize,
    metric: DesignMetric,
) -> f64 {
    let seq = phi.column(a).dotc(&phi.column(b));
    match metric {
        DesignMetric::UnknownPhase => (seq * coupling[(a, b)]).norm(),
        DesignMetric::KnownPhase => (seq * coupling[(a, b)]).re,
        DesignMetric::NonReciprocal => seq.norm(),
    }
}

/// Both orderings of a pair share each statistic (conjugates have equal
/// modulus and real part), so the scan covers unordered pairs only.
fn pair_metric(
    coupling: &DMatrix<Complex64>,
    phi: &DMatrix<Complex64>,
    metric: DesignMetric,
) -> Result<f64> {
    let n = phi.ncols();
    if n < 2 {
        return Err(Error::invalid("pair metrics need at least two beams"));
    }
    let mut worst = f64::NEG_INFINITY;
    for a in 0..n {
        for b in (a + 1)..n {
            let stat = pair_statistic(coupling, phi, a, b, metric);
            if stat > worst {
                worst = stat;
            }
        }
    }
    Ok(worst)
}

/// An `n x n` Hermitian, positive semidefinite sequence correlation.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    mat: DMatrix<Complex64>,
}

impl CorrelationMatrix {
    /// Validate Hermitian symmetry (1e-9 entrywise) and eigenvalues above
    /// -1e-9.
    pub fn new(mat: DMatrix<Complex64>) -> Result<Self> {
        if !mat.is_square() || mat.nrows() == 0 {
            return Err(Error::invalid("correlation matrix must be square and nonempty"));
        }
        let asym = (&mat - mat.adjoint()).camax();
        if asym > 2e-9 {
            return Err(Error::invalid(format!(
                "correlation matrix is not Hermitian (max deviation {asym})"
            )));
        }
        let eig = mat.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < -1e-9 {
            return Err(Error::invalid(format!(
                "correlation matrix has negative eigenvalue {min}"
            )));
        }
        Ok(CorrelationMatrix { mat })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    /// Hermitian square root with negative eigenvalues clamped, usable even
    /// when the matrix is singular.
    pub fn hermitian_sqrt(&self) -> DMatrix<Complex64> {
        let eig = self.mat.clone().symmetric_eigen();
        let roots =
            DMatrix::from_diagonal(&eig.eigenvalues.map(|v| Complex64::new(v.max(0.0).sqrt(), 0.0)));
        &eig.eigenvectors * roots * eig.eigenvectors.adjoint()
    }
}

/// Frobenius-nearest positive semidefinite matrix to the Hermitian part of
/// `a`: symmetrize, eigendecompose, clamp negative eigenvalues to zero.
pub fn nearest_psd(a: &DMatrix<Complex64>) -> Result<CorrelationMatrix> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(Error::invalid("nearest-PSD projection needs a square matrix"));
    }
    let herm = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let clamped =
        DMatrix::from_diagonal(&eig.eigenvalues.map(|v| Complex64::new(v.max(0.0), 0.0)));
    let rebuilt = &eig.eigenvectors * clamped * eig.eigenvectors.adjoint();
    // Kill the rounding skew so the constructor's Hermitian check is exact.
    let symmetrized = (&rebuilt + rebuilt.adjoint()) * Complex64::new(0.5, 0.0);
    CorrelationMatrix::new(symmetrized)
}

/// Correlation recipe for the unknown-phase metric: invert the beam
/// coupling magnitudes so strongly coupled beam pairs get weakly correlated
/// sequences.
///
/// `R = proj_psd(1 ./ (|G^H G / m| * min_nonzero))`, with zero entries
/// mapping to 1.
pub fn unknown_phase_correlation(beams: &BeamSet) -> Result<CorrelationMatrix> {
    if beams.count() < 2 {
        return Err(Error::invalid("correlation design needs at least two beams"));
    }
    let gram = beams.gram() / Complex64::new(beams.antennas() as f64, 0.0);
    let zero_tol = GRAM_ZERO_TOLERANCE * gram.camax();
    let mut min_mag = f64::INFINITY;
    for v in gram.iter() {
        let mag = v.norm();
        if mag > zero_tol && mag < min_mag {
            min_mag = mag;
        }
    }
    let target = DMatrix::from_fn(beams.count(), beams.count(), |i, j| {
        let mag = gram[(i, j)].norm();
        let re = if mag <= zero_tol { 1.0 } else { 1.0 / (mag * min_mag) };
        Complex64::new(re, 0.0)
    });
    nearest_psd(&target)
}

/// Correlation recipe for the known-phase metric: invert real and
/// imaginary Gram parts separately so the pre-projection target stays
/// Hermitian.
///
/// Zero divisions map to 1 in the real part and 0 in the imaginary part.
pub fn known_phase_correlation(beams: &BeamSet) -> Result<CorrelationMatrix> {
    if beams.count() < 2 {
        return Err(Error::invalid("correlation design needs at least two beams"));
    }
    let gram = beams.gram() / Complex64::new(beams.antennas() as f64, 0.0);
    let zero_tol = GRAM_ZERO_TOLERANCE * gram.camax();
    let mut min_re = f64::INFINITY;
    let mut min_im = f64::INFINITY;
    for v in gram.iter() {
        if v.re.abs() > zero_tol && v.re.abs() < min_re {
            min_re = v.re.abs();
        }
        if v.im.abs() > zero_tol && v.im.abs() < min_im {
            min_im = v.im.abs();
        }
    }
    // An all-real Gram leaves min_im unset; every imaginary part then maps
    // to zero and the scale is irrelevant.
    if !min_im.is_finite() {
        min_im = 1.0;
    }
    let target = DMatrix::from_fn(beams.count(), beams.count(), |i, j| {
        let v = gram[(i, j)];
        let re = if v.re.abs() <= zero_tol { 1.0 } else { 1.0 / (v.re * min_re) };
        let im = if v.im.abs() <= zero_tol { 0.0 } else { 1.0 / (v.im * min_im) };
        Complex64::new(re, im)
    });
    nearest_psd(&target)
}

/// Candidate distribution for the randomized search.
#[derive(Debug, Clone)]
pub enum SequenceDistribution {
    /// Entrywise standard circularly symmetric Gaussian.
    White,
    /// Rows drawn as N-dimensional Gaussians with the given covariance, so
    /// sequence pairs are correlated according to it.
    Correlated(CorrelationMatrix),
}

/// Result of a randomized sequence search.
#[derive(Debug, Clone)]
pub struct SgaOutcome {
    pub map: SequenceMap,
    pub metric: f64,
    /// Best-so-far metric at each improving iteration, starting with the
    /// first draw; non-increasing by construction.
    pub trace: Vec<(u64, f64)>,
}

/// Randomized sequence search: draw candidate maps from `dist`, normalize
/// columns, keep the strictly best metric seen.
///
/// Candidate `i` uses the generator derived from `(seed, i)`, so results
/// are reproducible and independent of evaluation order; candidates are
/// scored in parallel.
pub fn sga(
    beams: &BeamSet,
    metric: DesignMetric,
    dist: &SequenceDistribution,
    tau: usize,
    iters: u64,
    seed: u64,
) -> Result<SgaOutcome> {
    if iters == 0 {
        return Err(Error::invalid("sequence search needs at least one iteration"));
    }
    if tau == 0 {
        return Err(Error::invalid("sequence length must be nonzero"));
    }
    let n = beams.count();
    if n < 2 {
        return Err(Error::invalid("sequence design needs at least two beams"));
    }
    let sqrt = match dist {
        SequenceDistribution::White => None,
        SequenceDistribution::Correlated(r) => {
            if r.dim() != n {
                return Err(Error::dimension(format!(
                    "correlation is {}x{} but the beam set has {n} beams",
                    r.dim(),
                    r.dim()
                )));
            }
            Some(r.hermitian_sqrt())
        }
    };
    let coupling = match metric {
        DesignMetric::NonReciprocal => DMatrix::zeros(0, 0),
        _ => beams.gram(),
    };

    let metrics: Vec<f64> = (0..iters)
        .into_par_iter()
        .map(|i| {
            let phi = draw_candidate(sqrt.as_ref(), tau, n, seed, i);
            pair_metric(&coupling, &phi, metric).expect("candidate evaluation")
        })
        .collect();

    let mut trace = Vec::new();
    let mut best = f64::INFINITY;
    let mut best_idx = 0u64;
    for (i, &m) in metrics.iter().enumerate() {
        if m < best {
            best = m;
            best_idx = i as u64;
            trace.push((best_idx, best));
        }
    }
    let winner = draw_candidate(sqrt.as_ref(), tau, n, seed, best_idx);
    Ok(SgaOutcome {
        map: SequenceMap::new(winner)?,
        metric: best,
        trace,
    })
}

fn draw_candidate(
    sqrt: Option<&DMatrix<Complex64>>,
    tau: usize,
    n: usize,
    seed: u64,
    index: u64,
) -> DMatrix<Complex64> {
    let mut rng = derived_rng(seed, index);
    let mut phi = match sqrt {
        None => DMatrix::from_fn(tau, n, |_, _| standard_complex_gaussian(&mut rng)),
        Some(l) => {
            let mut phi = DMatrix::zeros(tau, n);
            for t in 0..tau {
                let white = DVector::from_fn(n, |_, _| standard_complex_gaussian(&mut rng));
                let row = l * white;
                for j in 0..n {
                    phi[(t, j)] = row[j];
                }
            }
            phi
        }
    };
    for (j, mut col) in phi.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm > 1e-300 {
            col.scale_mut(norm.recip());
        } else {
            // Degenerate draw (possible only for a singular correlation);
            // fall back to a basis sequence.
            col.fill(Complex64::new(0.0, 0.0));
            col[j % tau] = Complex64::new(1.0, 0.0);
        }
    }
    phi
}
