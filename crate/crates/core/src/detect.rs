//! Maximum-likelihood and marginalized-likelihood beam detectors.
//!
//! Every detector scans the candidate beam/sequence pairs, scores each one
//! from the received uplink block, and returns the best index with ties
//! broken toward the lowest index. Detectors that marginalize nuisance
//! parameters accumulate in the log domain so scores stay finite at very
//! high SNR.

use nalgebra::{DMatrix, DVector, DVectorView};
use num_complex::Complex64;

use crate::beamworld::{BeamSet, ReceivedSignal};
use crate::numerics::{gauss_legendre, wrap_phase, LogSumExp};
use crate::pep::ln_i0;
use crate::seqmap::SequenceMap;

/// Outcome of one detection pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    /// Detected beam index (zero-based).
    pub index: usize,
    /// Phase estimate at the winning pair, for detectors that concentrate
    /// the phase shift.
    pub theta_hat: Option<f64>,
    /// Winning decision statistic; log-domain where the detector
    /// marginalizes.
    pub score: f64,
}

/// `phi^T Y^H g`, the matched statistic of one beam/sequence pair.
pub(crate) fn pair_statistic(
    y: &DMatrix<Complex64>,
    phi: &DVectorView<'_, Complex64>,
    g: &DVectorView<'_, Complex64>,
) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for t in 0..y.ncols() {
        acc += phi[t] * y.column(t).dotc(g);
    }
    acc
}

/// Maximum-likelihood phase shift conditioned on a beam:
/// `-arg(phi^T Y^H g)`.
///
/// A exactly zero statistic (a measure-zero event) yields 0.
pub fn phase_mle(
    y: &ReceivedSignal,
    phi: &DVectorView<'_, Complex64>,
    g: &DVectorView<'_, Complex64>,
) -> f64 {
    assert_eq!(y.antennas(), g.nrows(), "beam/observation dimension mismatch");
    assert_eq!(y.sequence_length(), phi.nrows(), "sequence/observation length mismatch");
    let s = pair_statistic(y.matrix(), phi, g);
    if s.re == 0.0 && s.im == 0.0 {
        0.0
    } else {
        wrap_phase(-s.arg())
    }
}

fn argmax(scores: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (idx, s) in scores.enumerate() {
        if s > best.1 {
            best = (idx, s);
        }
    }
    best
}

fn check_pairing(y: &ReceivedSignal, map: &SequenceMap) {
    assert_eq!(
        y.sequence_length(),
        map.tau(),
        "sequence/observation length mismatch"
    );
    assert!(map.count() >= 1, "empty sequence map");
}

/// Reciprocal uplink, phase shift unknown: maximize `|phi_n^T Y^H g_n|`
/// over the paired candidates, with the phase shift concentrated out.
///
/// A map with all-identical columns covers the no-CSI case where a single
/// pilot is reused for every beam.
pub fn detect_reciprocal_unknown_phase(
    y: &ReceivedSignal,
    beams: &BeamSet,
    map: &SequenceMap,
) -> Detection {
    check_pairing(y, map);
    assert_eq!(beams.count(), map.count(), "beam/sequence count mismatch");
    let mut best = (0usize, f64::NEG_INFINITY, Complex64::new(0.0, 0.0));
    for n in 0..beams.count() {
        let s = pair_statistic(y.matrix(), &map.sequence(n), &beams.beam(n));
        let score = s.norm();
        if score > best.1 {
            best = (n, score, s);
        }
    }
    let theta = if best.2.re == 0.0 && best.2.im == 0.0 {
        0.0
    } else {
        wrap_phase(-best.2.arg())
    };
    Detection {
        index: best.0,
        theta_hat: Some(theta),
        score: best.1,
    }
}

/// Reciprocal uplink with the phase shift pre-compensated by the terminal:
/// maximize `Re{phi_n^T Y^H g_n}`.
pub fn detect_reciprocal_known_phase(
    y: &ReceivedSignal,
    beams: &BeamSet,
    map: &SequenceMap,
) -> Detection {
    check_pairing(y, map);
    assert_eq!(beams.count(), map.count(), "beam/sequence count mismatch");
    let (index, score) = argmax(
        (0..beams.count())
            .map(|n| pair_statistic(y.matrix(), &map.sequence(n), &beams.beam(n)).re),
    );
    Detection {
        index,
        theta_hat: None,
        score,
    }
}

/// Non-reciprocal uplink marginalized over Rayleigh fading: maximize
/// `||Y phi_n^*||^2`.
pub fn detect_nonreciprocal_rayleigh(y: &ReceivedSignal, map: &SequenceMap) -> Detection {
    check_pairing(y, map);
    let (index, score) = argmax((0..map.count()).map(|n| {
        let phic: DVector<Complex64> = map.sequence(n).map(|z| z.conj());
        (y.matrix() * phic).norm_squared()
    }));
    Detection {
        index,
        theta_hat: None,
        score,
    }
}

/// Angles of the endpoint-exclusive uniform grid on (-pi/2, pi/2].
fn psi_grid(points: usize) -> impl Iterator<Item = f64> {
    let step = std::f64::consts::PI / points as f64;
    (0..points).map(move |j| -std::f64::consts::FRAC_PI_2 + step * (j + 1) as f64)
}

/// Correlations of a scaled steering vector with each column of `v`:
/// entry n is `h(psi)^H v_n` for `h = sqrt(beta) a(psi)`.
fn steered_correlations(v: &DMatrix<Complex64>, psi: f64, beta: f64) -> Vec<Complex64> {
    let m = v.nrows();
    let w = Complex64::from_polar(1.0, std::f64::consts::PI * psi.sin());
    let scale = beta.sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); v.ncols()];
    for (n, col) in v.column_iter().enumerate() {
        let mut phase = Complex64::new(scale, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..m {
            acc += phase * col[k];
            phase *= w;
        }
        out[n] = acc;
    }
    out
}

/// Non-reciprocal line-of-sight uplink with both the distance phase and
/// the impinging angle concentrated: maximize
/// `max_psi |h(psi)^H Y phi_n^*|` over a uniform angle grid.
pub fn detect_nonreciprocal_los_concentrated(
    y: &ReceivedSignal,
    map: &SequenceMap,
    beta: f64,
    grid_size: usize,
) -> Detection {
    check_pairing(y, map);
    assert!(grid_size >= 2, "angle grid needs at least two points");
    let v = y.matrix() * map.matrix().conjugate();
    let mut best = vec![f64::NEG_INFINITY; map.count()];
    for psi in psi_grid(grid_size) {
        for (n, corr) in steered_correlations(&v, psi, beta).into_iter().enumerate() {
            let mag = corr.norm();
            if mag > best[n] {
                best[n] = mag;
            }
        }
    }
    let (index, score) = argmax(best.into_iter());
    Detection {
        index,
        theta_hat: None,
        score,
    }
}

/// Non-reciprocal line-of-sight uplink with the impinging angle
/// marginalized by Gauss-Legendre quadrature.
///
/// With `phase_marginalized` set the distance phase has been concentrated
/// out and the integrand is `exp(2 sqrt(rho) |h^H Y phi^*|)`; without it
/// the uplink carries no distance phase and the integrand uses the real
/// part. Scores are log-domain quadrature values (constant prior factors
/// dropped), so relative order is preserved without overflow.
pub fn detect_nonreciprocal_los_integral(
    y: &ReceivedSignal,
    map: &SequenceMap,
    beta: f64,
    phase_marginalized: bool,
    nodes: usize,
) -> Detection {
    check_pairing(y, map);
    assert!(nodes >= 8, "quadrature needs at least 8 nodes");
    let v = y.matrix() * map.matrix().conjugate();
    let rule = gauss_legendre(nodes);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let gain = 2.0 * y.rho().sqrt();
    let mut acc: Vec<LogSumExp> = vec![LogSumExp::new(); map.count()];
    for (x, w) in rule.0.iter().zip(rule.1.iter()) {
        let psi = x * half_pi;
        let ln_w = (w * half_pi).ln();
        for (n, corr) in steered_correlations(&v, psi, beta).into_iter().enumerate() {
            let exponent = if phase_marginalized {
                gain * corr.norm()
            } else {
                gain * corr.re
            };
            acc[n].push(ln_w + exponent);
        }
    }
    let (index, score) = argmax(acc.into_iter().map(|a| a.value()));
    Detection {
        index,
        theta_hat: None,
        score,
    }
}

/// Calibrated non-reciprocal array: the uplink channel lives in its own
/// finite set, and the likelihood sums over it.
///
/// Scores are `log sum_h exp(2 sqrt(rho) Re{phi_n^T Y^H h})`, or with
/// `phase_marginalized` set (uplink beams carry an unknown phase)
/// `log sum_h I_0(2 sqrt(rho) |phi_n^T Y^H h|)`.
pub fn detect_calibrated(
    y: &ReceivedSignal,
    map: &SequenceMap,
    uplink_set: &BeamSet,
    phase_marginalized: bool,
) -> Detection {
    check_pairing(y, map);
    assert_eq!(
        y.antennas(),
        uplink_set.antennas(),
        "uplink set/observation dimension mismatch"
    );
    let gain = 2.0 * y.rho().sqrt();
    let scores = (0..map.count()).map(|n| {
        let mut acc = LogSumExp::new();
        for k in 0..uplink_set.count() {
            let s = pair_statistic(y.matrix(), &map.sequence(n), &uplink_set.beam(k));
            let term = if phase_marginalized {
                ln_i0(gain * s.norm())
            } else {
                gain * s.re
            };
            acc.push(term);
        }
        acc.value()
    });
    let (index, score) = argmax(scores);
    Detection {
        index,
        theta_hat: None,
        score,
    }
}
