//! Beam dictionaries and uplink signal synthesis.
//!
//! A beam set is a finite dictionary of candidate downlink channel vectors,
//! all with the same squared norm `M * beta`. This module builds DFT and
//! best-effort Grassmannian dictionaries, loads externally generated ones
//! from file, draws true-channel realizations under the supported channel
//! models, and synthesizes the noisy uplink observation.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector, DVectorView};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matfile;
use crate::numerics::{standard_complex_gaussian, uniform_half_angle, uniform_phase};

/// Relative tolerance on the per-beam norm constraint.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Loaded files may deviate from the norm constraint by up to this much
/// before renormalization is refused.
const LOAD_NORM_SLACK: f64 = 1e-2;

/// A dictionary of `n` candidate downlink channels over `m` antennas,
/// stored column-wise with every column satisfying `||g||^2 = m * beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamSet {
    mat: DMatrix<Complex64>,
    beta: f64,
}

impl BeamSet {
    /// Wrap a matrix of beams, validating the common-norm invariant.
    pub fn new(mat: DMatrix<Complex64>, beta: f64) -> Result<Self> {
        if mat.nrows() == 0 || mat.ncols() == 0 {
            return Err(Error::invalid("beam set needs at least one antenna and one beam"));
        }
        if !(beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        let target = mat.nrows() as f64 * beta;
        for (idx, col) in mat.column_iter().enumerate() {
            let norm_sq = col.norm_squared();
            if (norm_sq - target).abs() > NORM_TOLERANCE * target {
                return Err(Error::invalid(format!(
                    "beam {idx} has squared norm {norm_sq}, expected {target}"
                )));
            }
        }
        Ok(BeamSet { mat, beta })
    }

    /// DFT dictionary: entry (m, n) is `sqrt(beta) * exp(2 pi i m n / N)`
    /// with zero-based m, n.
    pub fn dft(antennas: usize, beams: usize, beta: f64) -> Result<Self> {
        if antennas == 0 || beams == 0 {
            return Err(Error::invalid("antenna and beam counts must be nonzero"));
        }
        if !(beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        let scale = beta.sqrt();
        let mat = DMatrix::from_fn(antennas, beams, |m, n| {
            let phase = 2.0 * PI * (m as f64) * (n as f64) / beams as f64;
            Complex64::from_polar(scale, phase)
        });
        Ok(BeamSet { mat, beta })
    }

    /// Best-effort low-coherence dictionary from a seeded random start.
    ///
    /// Alternating worst-pair reduction: each iteration finds the beam pair
    /// with the largest normalized inner product and pushes one endpoint
    /// away from the other, keeping the best configuration seen. No
    /// optimality is claimed; externally computed packings can be loaded
    /// with [`BeamSet::load`] instead.
    pub fn grassmann_packing(
        antennas: usize,
        beams: usize,
        beta: f64,
        iters: usize,
        seed: u64,
    ) -> Result<Self> {
        if antennas == 0 || beams < antennas {
            return Err(Error::invalid(format!(
                "need beams >= antennas >= 1, got antennas={antennas} beams={beams}"
            )));
        }
        if !(beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        let target = (antennas as f64 * beta).sqrt();
        let mut rng = crate::numerics::derived_rng(seed, 0);
        let mut mat = DMatrix::from_fn(antennas, beams, |_, _| standard_complex_gaussian(&mut rng));
        for mut col in mat.column_iter_mut() {
            let norm = col.norm();
            col.scale_mut(target / norm);
        }

        let mut best = mat.clone();
        let mut best_coherence = max_abs_offdiag_coherence(&mat, antennas as f64 * beta);
        let mut step = 1.0;
        for iter in 0..if beams > 1 { iters } else { 0 } {
            let (a, b, _) = worst_pair(&mat, antennas as f64 * beta);
            // Alternate which endpoint moves so pairs do not chase each other.
            let (keep, mov) = if iter % 2 == 0 { (a, b) } else { (b, a) };
            let corr = mat.column(keep).dotc(&mat.column(mov)) / (antennas as f64 * beta);
            let update = mat.column(keep) * (corr * step);
            let mut moved = mat.column(mov) - update;
            let norm = moved.norm();
            if norm < 1e-12 {
                continue;
            }
            moved.scale_mut(target / norm);
            mat.set_column(mov, &moved);
            let coherence = max_abs_offdiag_coherence(&mat, antennas as f64 * beta);
            if coherence < best_coherence {
                best_coherence = coherence;
                best.copy_from(&mat);
                step = (step * 1.1).min(1.0);
            } else {
                step = (step * 0.5).max(0.05);
            }
        }
        BeamSet::new(best, beta)
    }

    /// Number of antennas (rows).
    pub fn antennas(&self) -> usize {
        self.mat.nrows()
    }

    /// Number of beams (columns).
    pub fn count(&self) -> usize {
        self.mat.ncols()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The common squared beam norm `m * beta`.
    pub fn norm_sq(&self) -> f64 {
        self.mat.nrows() as f64 * self.beta
    }

    pub fn beam(&self, n: usize) -> DVectorView<'_, Complex64> {
        self.mat.column(n)
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    /// Inner product `g_a^H g_b` between two beams.
    pub fn inner_product(&self, a: usize, b: usize) -> Result<Complex64> {
        let n = self.count();
        if a >= n || b >= n {
            return Err(Error::invalid(format!(
                "beam index out of range: ({a}, {b}) with {n} beams"
            )));
        }
        Ok(self.mat.column(a).dotc(&self.mat.column(b)))
    }

    /// Gram matrix `G^H G` of all pairwise beam inner products.
    pub fn gram(&self) -> DMatrix<Complex64> {
        self.mat.adjoint() * &self.mat
    }

    /// Largest normalized off-diagonal coherence `|g_a^H g_b| / (m beta)`.
    pub fn max_coherence(&self) -> f64 {
        max_abs_offdiag_coherence(&self.mat, self.norm_sq())
    }

    /// Write the dictionary in the text format `m n beta` + `re:im` rows.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = format!("{} {} {}", self.antennas(), self.count(), self.beta);
        std::fs::write(path, matfile::format_matrix(&header, &self.mat))?;
        Ok(())
    }

    /// Load a dictionary saved by [`BeamSet::save`] (or produced externally).
    ///
    /// Columns already satisfying the norm invariant are kept bit-exact;
    /// columns within 1% of it are renormalized; anything further off is
    /// rejected.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path)?;
        let mut beta = 0.0;
        let mat = matfile::parse_matrix(path, &contents, 3, |header| {
            let m: usize = matfile::parse_header_field(path, header, 0, "antenna count")?;
            let n: usize = matfile::parse_header_field(path, header, 1, "beam count")?;
            beta = matfile::parse_header_field(path, header, 2, "beta")?;
            if m == 0 || n == 0 {
                return Err(Error::invalid("antenna and beam counts must be nonzero"));
            }
            Ok((m, n))
        })?;
        if !(beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        let mut mat = mat;
        let target = mat.nrows() as f64 * beta;
        for (idx, mut col) in mat.column_iter_mut().enumerate() {
            let norm_sq = col.norm_squared();
            let rel = (norm_sq - target).abs() / target;
            if rel <= NORM_TOLERANCE {
                continue;
            }
            if rel <= LOAD_NORM_SLACK {
                col.scale_mut((target / norm_sq).sqrt());
            } else {
                return Err(Error::invalid(format!(
                    "beam {idx} in {} has squared norm {norm_sq}, more than 1% from {target}",
                    path.display()
                )));
            }
        }
        BeamSet::new(mat, beta)
    }
}

fn max_abs_offdiag_coherence(mat: &DMatrix<Complex64>, norm_sq: f64) -> f64 {
    let n = mat.ncols();
    let mut worst = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            let c = mat.column(a).dotc(&mat.column(b)).norm() / norm_sq;
            if c > worst {
                worst = c;
            }
        }
    }
    worst
}

fn worst_pair(mat: &DMatrix<Complex64>, norm_sq: f64) -> (usize, usize, f64) {
    let n = mat.ncols();
    let mut best = (0, 1, -1.0);
    for a in 0..n {
        for b in (a + 1)..n {
            let c = mat.column(a).dotc(&mat.column(b)).norm() / norm_sq;
            if c > best.2 {
                best = (a, b, c);
            }
        }
    }
    best
}

/// Half-wavelength uniform linear array response `[1, e^{-i pi sin psi},
/// ..., e^{-i pi (m-1) sin psi}]`.
pub fn steering_vector(antennas: usize, psi: f64) -> DVector<Complex64> {
    let w = Complex64::from_polar(1.0, -PI * psi.sin());
    let mut cur = Complex64::new(1.0, 0.0);
    DVector::from_fn(antennas, |_, _| {
        let v = cur;
        cur *= w;
        v
    })
}

/// True-channel generator selection for one trial.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// The terminal sits exactly on one uniformly drawn beam of the grid.
    OnGrid,
    /// Line-of-sight channel with a uniformly drawn angle of arrival; the
    /// terminal quantizes it to the closest beam.
    LosOffGrid,
    /// Line-of-sight component plus an i.i.d. Gaussian component of
    /// per-antenna variance `sigma2`; the terminal knows and quantizes only
    /// the line-of-sight part.
    Rician { sigma2: f64 },
    /// Line-of-sight channel, but the terminal's angle estimate carries a
    /// Gaussian error in degrees with variance `scale / (rho cos^2 angle)`,
    /// clamped to (-90, 90) degrees. The base station still sees the true
    /// channel.
    LosAoaError { scale: f64, rho: f64 },
    /// Non-reciprocal world: the downlink channel is a uniformly drawn grid
    /// beam, while the uplink is an independent line-of-sight channel,
    /// optionally carrying a uniform phase shift.
    UplinkLos { phase_shift: bool },
}

/// One realized channel state: the downlink truth, the uplink channel the
/// base station actually observes, and what the terminal signalled.
#[derive(Debug, Clone)]
pub struct ChannelDraw {
    /// True downlink channel.
    pub g_true: DVector<Complex64>,
    /// Uplink channel; equals `e^{i theta} g_true` when reciprocity holds.
    pub h_uplink: DVector<Complex64>,
    /// Phase shift between downlink and uplink chains.
    pub theta: f64,
    /// Beam index the terminal selected (zero-based).
    pub quantized_index: usize,
    /// Angle of arrival behind line-of-sight draws.
    pub aoa: Option<f64>,
    /// Uplink distance phase for non-reciprocal line-of-sight draws.
    pub xi: Option<f64>,
}

/// Draw one channel realization under `model`.
pub fn draw_channel<R: Rng + ?Sized>(
    model: &ChannelModel,
    beams: &BeamSet,
    rng: &mut R,
) -> Result<ChannelDraw> {
    let m = beams.antennas();
    let scale = beams.beta().sqrt();
    let theta = uniform_phase(rng);
    match model {
        ChannelModel::OnGrid => {
            let idx = rng.gen_range(0..beams.count());
            let g: DVector<Complex64> = beams.beam(idx).into_owned();
            let h = &g * Complex64::from_polar(1.0, theta);
            Ok(ChannelDraw {
                g_true: g,
                h_uplink: h,
                theta,
                quantized_index: idx,
                aoa: None,
                xi: None,
            })
        }
        ChannelModel::LosOffGrid => {
            let psi = uniform_half_angle(rng);
            let g = steering_vector(m, psi) * Complex64::new(scale, 0.0);
            let idx = quantize_to_grid(&g.as_view(), beams);
            let h = &g * Complex64::from_polar(1.0, theta);
            Ok(ChannelDraw {
                g_true: g,
                h_uplink: h,
                theta,
                quantized_index: idx,
                aoa: Some(psi),
                xi: None,
            })
        }
        ChannelModel::Rician { sigma2 } => {
            if *sigma2 < 0.0 {
                return Err(Error::invalid(format!(
                    "Rician variance must be nonnegative, got {sigma2}"
                )));
            }
            let psi = uniform_half_angle(rng);
            let los = steering_vector(m, psi) * Complex64::new(scale, 0.0);
            let idx = quantize_to_grid(&los.as_view(), beams);
            let sd = sigma2.sqrt();
            let nlos = DVector::from_fn(m, |_, _| standard_complex_gaussian(rng) * sd);
            let g = &los + nlos;
            let h = &g * Complex64::from_polar(1.0, theta);
            Ok(ChannelDraw {
                g_true: g,
                h_uplink: h,
                theta,
                quantized_index: idx,
                aoa: Some(psi),
                xi: None,
            })
        }
        ChannelModel::LosAoaError { scale: err_scale, rho } => {
            if *err_scale < 0.0 {
                return Err(Error::invalid(format!(
                    "angle error scale must be nonnegative, got {err_scale}"
                )));
            }
            let psi = uniform_half_angle(rng);
            let g = steering_vector(m, psi) * Complex64::new(scale, 0.0);
            let psi_deg = psi.to_degrees();
            let variance = err_scale / (rho * psi.cos().powi(2));
            // Degenerate at rho -> 0 or |psi| -> 90 degrees; a huge but
            // finite deviation followed by clamping keeps the draw defined.
            let sd = variance.sqrt().min(1e9);
            let noise: f64 = rng.sample(StandardNormal);
            let est_deg = (psi_deg + sd * noise).clamp(-90.0, 90.0);
            let est = steering_vector(m, est_deg.to_radians()) * Complex64::new(scale, 0.0);
            let idx = quantize_to_grid(&est.as_view(), beams);
            let h = &g * Complex64::from_polar(1.0, theta);
            Ok(ChannelDraw {
                g_true: g,
                h_uplink: h,
                theta,
                quantized_index: idx,
                aoa: Some(psi),
                xi: None,
            })
        }
        ChannelModel::UplinkLos { phase_shift } => {
            let idx = rng.gen_range(0..beams.count());
            let g: DVector<Complex64> = beams.beam(idx).into_owned();
            let psi = uniform_half_angle(rng);
            let xi = if *phase_shift { uniform_phase(rng) } else { 0.0 };
            let h = steering_vector(m, psi) * Complex64::from_polar(scale, xi);
            Ok(ChannelDraw {
                g_true: g,
                h_uplink: h,
                theta,
                quantized_index: idx,
                aoa: Some(psi),
                xi: phase_shift.then_some(xi),
            })
        }
    }
}

/// Index of the beam closest to `g` in squared Euclidean distance, lowest
/// index on ties.
pub fn quantize_to_grid(g: &DVectorView<'_, Complex64>, beams: &BeamSet) -> usize {
    assert_eq!(g.nrows(), beams.antennas(), "channel/beam dimension mismatch");
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (idx, col) in beams.matrix().column_iter().enumerate() {
        let dist = (col - g).norm_squared();
        if dist < best_dist {
            best_dist = dist;
            best = idx;
        }
    }
    best
}

/// One uplink observation `Y = sqrt(rho) h phi^T + W` together with the
/// coherent-integration SNR it was generated at.
#[derive(Debug, Clone)]
pub struct ReceivedSignal {
    y: DMatrix<Complex64>,
    rho: f64,
}

impl ReceivedSignal {
    /// Noise-free observation `sqrt(rho) h phi^T`.
    pub fn noiseless(
        h: &DVectorView<'_, Complex64>,
        phi: &DVectorView<'_, Complex64>,
        rho: f64,
    ) -> Self {
        let y = scaled_outer(h, phi, rho);
        ReceivedSignal { y, rho }
    }

    pub fn from_matrix(y: DMatrix<Complex64>, rho: f64) -> Self {
        ReceivedSignal { y, rho }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.y
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn antennas(&self) -> usize {
        self.y.nrows()
    }

    pub fn sequence_length(&self) -> usize {
        self.y.ncols()
    }
}

fn scaled_outer(
    h: &DVectorView<'_, Complex64>,
    phi: &DVectorView<'_, Complex64>,
    rho: f64,
) -> DMatrix<Complex64> {
    let amp = Complex64::new(rho.sqrt(), 0.0);
    DMatrix::from_fn(h.nrows(), phi.nrows(), |m, t| amp * h[m] * phi[t])
}

/// Synthesize `Y = sqrt(rho) h_eff phi^T + W` with unit-variance complex
/// Gaussian noise.
///
/// With `theta_compensated` set, the terminal pre-rotates its symbols and
/// the phase factor `e^{i theta}` is removed from `h` before transmission.
pub fn synthesize_received<R: Rng + ?Sized>(
    h: &DVectorView<'_, Complex64>,
    phi: &DVectorView<'_, Complex64>,
    rho: f64,
    theta_compensated: bool,
    theta: f64,
    rng: &mut R,
) -> Result<ReceivedSignal> {
    if rho < 0.0 {
        return Err(Error::invalid(format!("rho must be nonnegative, got {rho}")));
    }
    let norm_sq = phi.norm_squared();
    if (norm_sq - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::invalid(format!(
            "sequence must have unit norm, got squared norm {norm_sq}"
        )));
    }
    let h_eff = if theta_compensated {
        h * Complex64::from_polar(1.0, -theta)
    } else {
        h.into_owned()
    };
    let mut y = scaled_outer(&h_eff.as_view(), phi, rho);
    for v in y.iter_mut() {
        *v += standard_complex_gaussian(rng);
    }
    Ok(ReceivedSignal { y, rho })
}
