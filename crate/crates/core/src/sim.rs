//! Seeded Monte Carlo harness over beam worlds, mappings, and detectors.
//!
//! Trials are derived from (seed, trial index), so sweeps reproduce
//! bit-for-bit regardless of worker count or scheduling; aggregation folds
//! fixed-size chunks in index order.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::beamworld::{
    draw_channel, synthesize_received, BeamSet, ChannelModel, ReceivedSignal,
};
use crate::detect::{
    detect_calibrated, detect_nonreciprocal_los_concentrated, detect_nonreciprocal_los_integral,
    detect_nonreciprocal_rayleigh, detect_reciprocal_known_phase,
    detect_reciprocal_unknown_phase, pair_statistic, Detection,
};
use crate::error::{Error, Result};
use crate::numerics::{derived_rng, standard_complex_gaussian, uniform_phase};
use crate::pep::{
    pep_known_phase, pep_nonreciprocal_rayleigh, pep_unknown_phase, PepQuery,
    DEFAULT_QUADRATURE_NODES,
};
use crate::seqmap::SequenceMap;

/// Trials aggregated per parallel work item; fixed so sums fold in a
/// scheduling-independent order.
const CHUNK: u64 = 4096;

/// Which detector (and knowledge assumption) a scenario runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Reciprocal uplink, fixed pilot, unknown phase shift.
    ReciprocalNoCsi,
    /// Reciprocal uplink, mapped sequences, unknown phase shift.
    ReciprocalPartialCsi,
    /// Reciprocal uplink, mapped sequences, compensated phase shift.
    ReciprocalFullCsi,
    /// Non-reciprocal uplink, Rayleigh-marginalized detector.
    NonReciprocalRayleigh,
    /// Non-reciprocal uplink, line-of-sight detector with the angle
    /// marginalized by quadrature.
    NonReciprocalLosIntegral { phase_marginalized: bool },
    /// Non-reciprocal uplink, line-of-sight detector with the angle
    /// concentrated on a grid.
    NonReciprocalLosConcentrated,
    /// Calibrated array: uplink drawn from its own beam set.
    Calibrated { phase_marginalized: bool },
}

impl Regime {
    /// Regimes whose detector concentrates an unknown phase; their MSE uses
    /// the detector's phase estimate.
    fn phase_unknown(self) -> bool {
        matches!(self, Regime::ReciprocalNoCsi | Regime::ReciprocalPartialCsi)
    }
}

/// Grid and node counts for the marginalizing detectors.
#[derive(Debug, Clone, Copy)]
pub struct DetectorParams {
    pub psi_grid: usize,
    pub quadrature_nodes: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            psi_grid: 1024,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
        }
    }
}

/// One fully specified simulated configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    regime: Regime,
    channel: ChannelModel,
    beams: BeamSet,
    mapping: SequenceMap,
    params: DetectorParams,
    uplink_set: Option<BeamSet>,
    /// Test hook: skip the noise term during synthesis.
    pub noise_free: bool,
}

impl Scenario {
    pub fn new(
        regime: Regime,
        channel: ChannelModel,
        beams: BeamSet,
        mapping: SequenceMap,
        params: DetectorParams,
        uplink_set: Option<BeamSet>,
    ) -> Result<Self> {
        if mapping.count() != beams.count() {
            return Err(Error::Config(format!(
                "mapping covers {} beams but the beam set has {}",
                mapping.count(),
                beams.count()
            )));
        }
        let reciprocal_channel = !matches!(channel, ChannelModel::UplinkLos { .. });
        match regime {
            Regime::ReciprocalNoCsi => {
                if !reciprocal_channel {
                    return Err(Error::Config(
                        "reciprocal regimes need a reciprocal channel model".into(),
                    ));
                }
                if !mapping.is_uniform() {
                    return Err(Error::Config(
                        "the no-CSI benchmark sends one fixed pilot; use a single-sequence map"
                            .into(),
                    ));
                }
            }
            Regime::ReciprocalPartialCsi | Regime::ReciprocalFullCsi => {
                if !reciprocal_channel {
                    return Err(Error::Config(
                        "reciprocal regimes need a reciprocal channel model".into(),
                    ));
                }
            }
            Regime::NonReciprocalRayleigh
            | Regime::NonReciprocalLosIntegral { .. }
            | Regime::NonReciprocalLosConcentrated => {
                if reciprocal_channel {
                    return Err(Error::Config(
                        "non-reciprocal regimes need the independent uplink channel model".into(),
                    ));
                }
            }
            Regime::Calibrated { .. } => {
                if !matches!(channel, ChannelModel::OnGrid) {
                    return Err(Error::Config(
                        "calibrated scenarios draw the downlink on the grid".into(),
                    ));
                }
                match &uplink_set {
                    None => {
                        return Err(Error::Config(
                            "calibrated scenarios need an uplink beam set".into(),
                        ))
                    }
                    Some(set) if set.antennas() != beams.antennas() => {
                        return Err(Error::Config(
                            "uplink and downlink sets must share the antenna count".into(),
                        ))
                    }
                    _ => {}
                }
            }
        }
        if let ChannelModel::Rician { sigma2 } = channel {
            if sigma2 < 0.0 {
                return Err(Error::Config("Rician variance must be nonnegative".into()));
            }
        }
        if let ChannelModel::LosAoaError { scale, .. } = channel {
            if scale < 0.0 {
                return Err(Error::Config("angle error scale must be nonnegative".into()));
            }
        }
        if params.psi_grid < 2 {
            return Err(Error::Config("angle grid needs at least two points".into()));
        }
        if params.quadrature_nodes < 8 {
            return Err(Error::Config("quadrature needs at least 8 nodes".into()));
        }
        Ok(Scenario {
            regime,
            channel,
            beams,
            mapping,
            params,
            uplink_set,
            noise_free: false,
        })
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn beams(&self) -> &BeamSet {
        &self.beams
    }

    pub fn mapping(&self) -> &SequenceMap {
        &self.mapping
    }

    /// Channel model for one SNR point; the angle-error model scales its
    /// variance with rho.
    fn channel_for(&self, rho: f64) -> ChannelModel {
        match &self.channel {
            ChannelModel::LosAoaError { scale, .. } => ChannelModel::LosAoaError {
                scale: *scale,
                rho,
            },
            other => other.clone(),
        }
    }
}

/// Outcome of a single trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    pub error: bool,
    pub sq_err: f64,
}

/// Run trial `trial_index` of a scenario at linear SNR `rho`.
///
/// The generator is derived from (seed, trial_index) only.
pub fn run_trial(sc: &Scenario, rho: f64, trial_index: u64, seed: u64) -> TrialOutcome {
    let mut rng = derived_rng(seed, trial_index);
    let model = sc.channel_for(rho);
    let mut draw = draw_channel(&model, &sc.beams, &mut rng).expect("scenario was validated");
    if let Regime::Calibrated { phase_marginalized } = sc.regime {
        let set = sc.uplink_set.as_ref().expect("scenario was validated");
        let k = rng.gen_range(0..set.count());
        let nu = if phase_marginalized {
            uniform_phase(&mut rng)
        } else {
            0.0
        };
        draw.h_uplink = set.beam(k) * Complex64::from_polar(1.0, nu);
    }

    let phi = sc.mapping.sequence(draw.quantized_index);
    let compensate = sc.regime == Regime::ReciprocalFullCsi;
    let y = if sc.noise_free {
        let h_eff = if compensate {
            &draw.h_uplink * Complex64::from_polar(1.0, -draw.theta)
        } else {
            draw.h_uplink.clone()
        };
        ReceivedSignal::noiseless(&h_eff.as_view(), &phi, rho)
    } else {
        synthesize_received(
            &draw.h_uplink.as_view(),
            &phi,
            rho,
            compensate,
            draw.theta,
            &mut rng,
        )
        .expect("scenario was validated")
    };

    let det: Detection = match sc.regime {
        Regime::ReciprocalNoCsi | Regime::ReciprocalPartialCsi => {
            detect_reciprocal_unknown_phase(&y, &sc.beams, &sc.mapping)
        }
        Regime::ReciprocalFullCsi => detect_reciprocal_known_phase(&y, &sc.beams, &sc.mapping),
        Regime::NonReciprocalRayleigh => detect_nonreciprocal_rayleigh(&y, &sc.mapping),
        Regime::NonReciprocalLosIntegral { phase_marginalized } => {
            detect_nonreciprocal_los_integral(
                &y,
                &sc.mapping,
                sc.beams.beta(),
                phase_marginalized,
                sc.params.quadrature_nodes,
            )
        }
        Regime::NonReciprocalLosConcentrated => detect_nonreciprocal_los_concentrated(
            &y,
            &sc.mapping,
            sc.beams.beta(),
            sc.params.psi_grid,
        ),
        Regime::Calibrated { phase_marginalized } => detect_calibrated(
            &y,
            &sc.mapping,
            sc.uplink_set.as_ref().expect("scenario was validated"),
            phase_marginalized,
        ),
    };

    let error = det.index != draw.quantized_index;
    let detected = sc.beams.beam(det.index).into_owned();
    let sq_err = if sc.regime.phase_unknown() {
        // The base station knows the effective (phase-shifted) channel at
        // best, so score its rotated estimate against the effective truth.
        let est = detected * Complex64::from_polar(1.0, det.theta_hat.unwrap_or(0.0));
        let truth = &draw.g_true * Complex64::from_polar(1.0, draw.theta);
        (truth - est).norm_squared()
    } else {
        (&draw.g_true - detected).norm_squared()
    };
    TrialOutcome { error, sq_err }
}

/// Aggregated sweep output, one entry per SNR point.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub snr_db: Vec<f64>,
    pub trials: u64,
    pub errors: Vec<u64>,
    pub p_err: Vec<f64>,
    /// Wilson 95% half-width around the error ratio.
    pub ci95: Vec<f64>,
    pub mse: Vec<f64>,
    pub seed: u64,
}

pub fn snr_db_to_rho(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Wilson 95% score interval for `errors` out of `trials`.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    assert!(trials > 0 && errors <= trials);
    let z = 1.959963984540054f64;
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn wilson_half_width(errors: u64, trials: u64) -> f64 {
    let (lo, hi) = wilson_interval(errors, trials);
    0.5 * (hi - lo)
}

/// Monte Carlo sweep over an SNR grid.
///
/// Identical (scenario, grid, trials, seed) inputs produce identical
/// results for any rayon worker count.
pub fn sweep(sc: &Scenario, snr_db: &[f64], trials: u64, seed: u64) -> Result<SimResult> {
    if trials == 0 {
        return Err(Error::invalid("sweep needs at least one trial"));
    }
    if snr_db.is_empty() {
        return Err(Error::invalid("sweep needs at least one SNR point"));
    }
    let mut result = SimResult {
        snr_db: snr_db.to_vec(),
        trials,
        errors: Vec::new(),
        p_err: Vec::new(),
        ci95: Vec::new(),
        mse: Vec::new(),
        seed,
    };
    for &db in snr_db {
        let rho = snr_db_to_rho(db);
        let chunks = trials.div_ceil(CHUNK);
        let partials: Vec<(u64, f64)> = (0..chunks)
            .into_par_iter()
            .map(|chunk| {
                let lo = chunk * CHUNK;
                let hi = (lo + CHUNK).min(trials);
                let mut errors = 0u64;
                let mut sse = 0.0f64;
                for t in lo..hi {
                    let out = run_trial(sc, rho, t, seed);
                    errors += out.error as u64;
                    sse += out.sq_err;
                }
                (errors, sse)
            })
            .collect();
        let mut errors = 0u64;
        let mut sse = 0.0f64;
        for (e, s) in partials {
            errors += e;
            sse += s;
        }
        result.errors.push(errors);
        result.p_err.push(errors as f64 / trials as f64);
        result.ci95.push(wilson_half_width(errors, trials));
        result.mse.push(sse / trials as f64);
    }
    Ok(result)
}

/// Two-hypothesis event regimes cross-checked against the analytic
/// evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrosscheckRegime {
    KnownPhase,
    UnknownPhase,
    NonreciprocalRayleigh,
}

/// Simulate the pairwise error event for beams (a, b) of an actual
/// beam/mapping pair and return (Monte Carlo frequency, analytic value).
///
/// The event compares only the two matched statistics, exactly as in the
/// corresponding error-probability derivation.
pub fn pep_crosscheck(
    pair: (usize, usize),
    map: &SequenceMap,
    beams: &BeamSet,
    regime: CrosscheckRegime,
    rho: f64,
    trials: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    let (a, b) = pair;
    if a >= beams.count() || b >= beams.count() || a == b {
        return Err(Error::invalid(format!(
            "need two distinct beam indices below {}, got ({a}, {b})",
            beams.count()
        )));
    }
    if trials == 0 {
        return Err(Error::invalid("cross-check needs at least one trial"));
    }
    if map.count() != beams.count() {
        return Err(Error::dimension(format!(
            "beam set has {} beams but map covers {}",
            beams.count(),
            map.count()
        )));
    }
    let analytic = match regime {
        CrosscheckRegime::KnownPhase => {
            pep_known_phase(&PepQuery::from_pair(beams, map, a, b, rho)?)?
        }
        CrosscheckRegime::UnknownPhase => pep_unknown_phase(
            &PepQuery::from_pair(beams, map, a, b, rho)?,
            DEFAULT_QUADRATURE_NODES,
        )?,
        CrosscheckRegime::NonreciprocalRayleigh => {
            let alpha = map.sequence(a).dotc(&map.sequence(b)).norm();
            pep_nonreciprocal_rayleigh(rho * beams.beta(), beams.antennas(), alpha.min(1.0))?
        }
    };

    let chunks = trials.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(trials);
            let mut count = 0u64;
            for t in lo..hi {
                let mut rng = derived_rng(seed, t);
                let event = match regime {
                    CrosscheckRegime::KnownPhase => {
                        let g: DVector<Complex64> = beams.beam(a).into_owned();
                        let y = synthesize_received(
                            &g.as_view(),
                            &map.sequence(a),
                            rho,
                            false,
                            0.0,
                            &mut rng,
                        )
                        .expect("validated");
                        let sb = pair_statistic(y.matrix(), &map.sequence(b), &beams.beam(b));
                        let sa = pair_statistic(y.matrix(), &map.sequence(a), &beams.beam(a));
                        sb.re > sa.re
                    }
                    CrosscheckRegime::UnknownPhase => {
                        let theta = uniform_phase(&mut rng);
                        let h = beams.beam(a) * Complex64::from_polar(1.0, theta);
                        let y = synthesize_received(
                            &h.as_view(),
                            &map.sequence(a),
                            rho,
                            false,
                            theta,
                            &mut rng,
                        )
                        .expect("validated");
                        let sb = pair_statistic(y.matrix(), &map.sequence(b), &beams.beam(b));
                        let sa = pair_statistic(y.matrix(), &map.sequence(a), &beams.beam(a));
                        sb.norm() > sa.norm()
                    }
                    CrosscheckRegime::NonreciprocalRayleigh => {
                        let sd = beams.beta().sqrt();
                        let h = DVector::from_fn(beams.antennas(), |_, _| {
                            standard_complex_gaussian(&mut rng) * sd
                        });
                        let y = synthesize_received(
                            &h.as_view(),
                            &map.sequence(a),
                            rho,
                            false,
                            0.0,
                            &mut rng,
                        )
                        .expect("validated");
                        let norm = |j: usize| {
                            let phic: DVector<Complex64> =
                                map.sequence(j).map(|z| z.conj());
                            (y.matrix() * phic).norm_squared()
                        };
                        norm(b) > norm(a)
                    }
                };
                count += event as u64;
            }
            count
        })
        .sum();
    Ok((hits as f64 / trials as f64, analytic))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dft_world() -> BeamSet {
        BeamSet::dft(10, 70, 1.0).unwrap()
    }

    fn full_csi_scenario(tau: usize) -> Scenario {
        Scenario::new(
            Regime::ReciprocalFullCsi,
            ChannelModel::OnGrid,
            dft_world(),
            SequenceMap::orthogonal(70, tau).unwrap(),
            DetectorParams::default(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn trials_are_reproducible() {
        let sc = full_csi_scenario(7);
        let a = run_trial(&sc, 2.0, 123, 9);
        let b = run_trial(&sc, 2.0, 123, 9);
        assert_eq!(a, b);
        let c = run_trial(&sc, 2.0, 124, 9);
        // Different index gives an independent draw (almost surely a
        // different squared error).
        assert!(a.sq_err != c.sq_err || a.error != c.error);
    }

    #[test]
    fn noise_free_full_csi_never_errs() {
        let mut sc = full_csi_scenario(7);
        sc.noise_free = true;
        for t in 0..300 {
            let out = run_trial(&sc, 1.0, t, 3);
            assert!(!out.error, "trial {t}");
            assert!(out.sq_err < 1e-18);
        }
    }

    #[test]
    fn zero_snr_is_uniform_guessing() {
        let sc = Scenario::new(
            Regime::ReciprocalNoCsi,
            ChannelModel::OnGrid,
            dft_world(),
            SequenceMap::orthogonal(70, 1).unwrap(),
            DetectorParams::default(),
            None,
        )
        .unwrap();
        let trials = 100_000u64;
        let res = sweep(&sc, &[f64::NEG_INFINITY], trials, 17).unwrap();
        // rho = 10^(-inf/10) = 0: pure noise, every beam equally likely.
        let expected = 69.0 / 70.0;
        let sigma = (expected * (1.0 - expected) / trials as f64).sqrt();
        assert!(
            (res.p_err[0] - expected).abs() <= 3.0 * sigma,
            "p_err {} expected {expected} (3 sigma {})",
            res.p_err[0],
            3.0 * sigma
        );
    }

    #[test]
    fn sweep_is_prefix_deterministic() {
        let sc = full_csi_scenario(3);
        let t = 600u64;
        let manual: u64 = (0..t)
            .map(|i| run_trial(&sc, snr_db_to_rho(2.0), i, 5).error as u64)
            .sum();
        let swept = sweep(&sc, &[2.0], t, 5).unwrap();
        assert_eq!(swept.errors[0], manual);
        let doubled = sweep(&sc, &[2.0], 2 * t, 5).unwrap();
        let manual2: u64 = (0..2 * t)
            .map(|i| run_trial(&sc, snr_db_to_rho(2.0), i, 5).error as u64)
            .sum();
        assert_eq!(doubled.errors[0], manual2);
    }

    #[test]
    fn sweep_single_trial_echoes_the_trial() {
        let sc = full_csi_scenario(3);
        let res = sweep(&sc, &[0.0], 1, 21).unwrap();
        let one = run_trial(&sc, 1.0, 0, 21);
        assert_eq!(res.errors[0], one.error as u64);
        assert!((res.mse[0] - one.sq_err).abs() < 1e-15);
        assert!(sweep(&sc, &[0.0], 0, 21).is_err());
    }

    #[test]
    fn wilson_interval_behaves() {
        let (lo, hi) = wilson_interval(0, 1000);
        assert_eq!(lo, 0.0);
        assert!(hi < 0.005);
        let (lo, hi) = wilson_interval(1000, 1000);
        assert_eq!(hi, 1.0);
        assert!(lo > 0.995);
        let (lo, hi) = wilson_interval(500, 1000);
        assert!((0.5 - lo - (hi - 0.5)).abs() < 1e-12);
        assert!(hi - lo < 0.07);
    }

    #[test]
    fn scenario_validation_rejects_incompatible_combinations() {
        let beams = dft_world();
        let os3 = SequenceMap::orthogonal(70, 3).unwrap();
        // No-CSI needs a uniform map.
        assert!(Scenario::new(
            Regime::ReciprocalNoCsi,
            ChannelModel::OnGrid,
            beams.clone(),
            os3.clone(),
            DetectorParams::default(),
            None,
        )
        .is_err());
        // Reciprocal regime with a non-reciprocal channel.
        assert!(Scenario::new(
            Regime::ReciprocalFullCsi,
            ChannelModel::UplinkLos { phase_shift: true },
            beams.clone(),
            os3.clone(),
            DetectorParams::default(),
            None,
        )
        .is_err());
        // Non-reciprocal regime with a reciprocal channel.
        assert!(Scenario::new(
            Regime::NonReciprocalRayleigh,
            ChannelModel::OnGrid,
            beams.clone(),
            os3.clone(),
            DetectorParams::default(),
            None,
        )
        .is_err());
        // Calibrated without an uplink set.
        assert!(Scenario::new(
            Regime::Calibrated {
                phase_marginalized: false
            },
            ChannelModel::OnGrid,
            beams.clone(),
            os3.clone(),
            DetectorParams::default(),
            None,
        )
        .is_err());
        // Mismatched mapping width.
        assert!(Scenario::new(
            Regime::ReciprocalFullCsi,
            ChannelModel::OnGrid,
            beams,
            SequenceMap::orthogonal(69, 3).unwrap(),
            DetectorParams::default(),
            None,
        )
        .is_err());
    }

    #[test]
    fn nonreciprocal_and_calibrated_scenarios_run() {
        let beams = dft_world();
        let sc = Scenario::new(
            Regime::NonReciprocalRayleigh,
            ChannelModel::UplinkLos { phase_shift: true },
            beams.clone(),
            SequenceMap::orthogonal(70, 70).unwrap(),
            DetectorParams::default(),
            None,
        )
        .unwrap();
        let res = sweep(&sc, &[10.0], 200, 3).unwrap();
        assert!(res.errors[0] <= 200);

        let sc = Scenario::new(
            Regime::Calibrated {
                phase_marginalized: true,
            },
            ChannelModel::OnGrid,
            beams.clone(),
            SequenceMap::orthogonal(70, 7).unwrap(),
            DetectorParams::default(),
            Some(BeamSet::dft(10, 16, 1.0).unwrap()),
        )
        .unwrap();
        let res = sweep(&sc, &[10.0], 50, 3).unwrap();
        assert!(res.errors[0] <= 50);
    }

    #[test]
    fn angle_error_scenario_runs_and_degrades_gracefully() {
        let beams = dft_world();
        let sc = Scenario::new(
            Regime::ReciprocalFullCsi,
            ChannelModel::LosAoaError {
                scale: 0.1,
                rho: 1.0,
            },
            beams,
            SequenceMap::orthogonal(70, 3).unwrap(),
            DetectorParams::default(),
            None,
        )
        .unwrap();
        let res = sweep(&sc, &[12.0], 400, 7).unwrap();
        assert!(res.p_err[0] <= 1.0);
        assert!(res.mse[0].is_finite());
    }

    #[test]
    fn crosscheck_known_phase_orthogonal_pair() {
        // Orthogonal beams and sequences: alpha = 0, analytic Q(sqrt(10)).
        let beams = BeamSet::dft(10, 70, 1.0).unwrap();
        let map = SequenceMap::orthogonal(70, 7).unwrap();
        let trials = 200_000u64;
        let (mc, analytic) =
            pep_crosscheck((0, 7), &map, &beams, CrosscheckRegime::KnownPhase, 1.0, trials, 11)
                .unwrap();
        assert!((analytic - 7.827011290012748e-4).abs() < 1e-12);
        let sigma = (analytic * (1.0 - analytic) / trials as f64).sqrt();
        assert!((mc - analytic).abs() <= 4.0 * sigma, "mc {mc} analytic {analytic}");
    }

    #[test]
    fn crosscheck_unknown_phase_orthogonal_pair() {
        let beams = BeamSet::dft(10, 70, 1.0).unwrap();
        let map = SequenceMap::orthogonal(70, 7).unwrap();
        let trials = 200_000u64;
        let (mc, analytic) = pep_crosscheck(
            (0, 7),
            &map,
            &beams,
            CrosscheckRegime::UnknownPhase,
            1.0,
            trials,
            13,
        )
        .unwrap();
        assert!((analytic - 3.3689734995427335e-3).abs() < 1e-12);
        let sigma = (analytic * (1.0 - analytic) / trials as f64).sqrt();
        assert!((mc - analytic).abs() <= 4.0 * sigma, "mc {mc} analytic {analytic}");
    }

    #[test]
    fn crosscheck_rayleigh_single_antenna() {
        let beams = BeamSet::dft(1, 4, 1.0).unwrap();
        let map = SequenceMap::orthogonal(4, 4).unwrap();
        let trials = 200_000u64;
        let (mc, analytic) = pep_crosscheck(
            (0, 1),
            &map,
            &beams,
            CrosscheckRegime::NonreciprocalRayleigh,
            1.0,
            trials,
            19,
        )
        .unwrap();
        assert!((analytic - 1.0 / 3.0).abs() < 1e-12);
        let sigma = (analytic * (1.0 - analytic) / trials as f64).sqrt();
        assert!((mc - analytic).abs() <= 4.0 * sigma, "mc {mc} analytic {analytic}");
    }

    #[test]
    fn crosscheck_validates_inputs() {
        let beams = dft_world();
        let map = SequenceMap::orthogonal(70, 7).unwrap();
        assert!(
            pep_crosscheck((3, 3), &map, &beams, CrosscheckRegime::KnownPhase, 1.0, 10, 0)
                .is_err()
        );
        assert!(
            pep_crosscheck((0, 99), &map, &beams, CrosscheckRegime::KnownPhase, 1.0, 10, 0)
                .is_err()
        );
        assert!(
            pep_crosscheck((0, 1), &map, &beams, CrosscheckRegime::KnownPhase, 1.0, 0, 0)
                .is_err()
        );
    }
}
