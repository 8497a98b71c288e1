//! Batch front-end: structured config files plus flag overrides driving
//! beam-set construction, mapping design, analytic PEP tables, and Monte
//! Carlo sweeps, all emitted as CSV.
//!
//! Every run is reproducible from (config file, seed): simulation outputs
//! carry a sidecar with the config hash and versions, CSV files use `.`
//! decimals and LF endings, and partially written outputs are removed on
//! failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::beamworld::BeamSet;
use crate::error::{Error, Result};
use crate::matfile;
use crate::pep::{
    pep_known_phase, pep_nonreciprocal_rayleigh, pep_unknown_phase, PepQuery,
    DEFAULT_QUADRATURE_NODES,
};
use crate::seqmap::{
    evaluate_metric, known_phase_correlation, nonreciprocal_metric, sga, unknown_phase_correlation,
    DesignMetric, SequenceDistribution, SequenceMap,
};
use crate::sim::{snr_db_to_rho, sweep, DetectorParams, Regime, Scenario};

// Re-exported so front-end code can build channel models without another
// import path.
pub use crate::beamworld::ChannelModel;

/// Parsed config file plus the hash that identifies it in run metadata.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
    pub path: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let raw = std::fs::read(&path)?;
        let text = String::from_utf8_lossy(&raw);
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut hasher = Sha256::new();
        hasher.update(&raw);
        let sha256 = hex_digest(hasher.finalize().as_slice());
        Ok(LoadedConfig {
            config,
            sha256,
            path,
        })
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Key-value config, one section per subcommand.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub beamset: Option<BeamsetConfig>,
    pub mapping: Option<MappingConfig>,
    pub metrics: Option<MetricsConfig>,
    pub design: Option<DesignConfig>,
    pub pep: Option<PepConfig>,
    pub simulate: Option<SimulateConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamsetConfig {
    /// dft | file | grassmann
    pub source: String,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub beta: Option<f64>,
    pub path: Option<PathBuf>,
    pub iters: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingConfig {
    /// os | file | sga
    pub source: String,
    pub tau: Option<usize>,
    pub path: Option<PathBuf>,
    /// mu_u | mu_k | mu_nr (sga source only)
    pub metric: Option<String>,
    /// white | upsca | kpsca (sga source only)
    pub distribution: Option<String>,
    pub iters: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub metric: String,
    pub distribution: String,
    pub tau: usize,
    pub iters: u64,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PepConfig {
    /// known-phase | unknown-phase | rayleigh
    pub evaluator: String,
    pub m: usize,
    pub beta: f64,
    pub snr_db: Vec<f64>,
    /// Coupling values as [re, im] pairs; the rayleigh evaluator uses the
    /// magnitude.
    pub alpha: Vec<[f64; 2]>,
    pub nodes: Option<usize>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// no-csi | partial-csi | full-csi | nr-rayleigh | nr-los-integral |
    /// nr-los-concentrated | calibrated
    pub regime: String,
    /// on-grid | off-grid-los | rician | aoa-error | uplink-los
    pub channel: String,
    pub sigma2: Option<f64>,
    pub aoa_error_scale: Option<f64>,
    pub uplink_phase_shift: Option<bool>,
    pub detector_phase_marginalized: Option<bool>,
    pub psi_grid: Option<usize>,
    pub nodes: Option<usize>,
    pub snr_db: Vec<f64>,
    pub trials: u64,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub normalize_mse: Option<bool>,
    pub uplink_path: Option<PathBuf>,
    pub out: PathBuf,
}

/// Flag overrides; any set field wins over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trials: Option<u64>,
    pub snr_db: Option<Vec<f64>>,
    pub threads: Option<usize>,
}

fn resolve_beamset(cfg: &RunConfig) -> Result<BeamSet> {
    let b = cfg
        .beamset
        .as_ref()
        .ok_or_else(|| Error::Config("missing [beamset] section".into()))?;
    let beta = b.beta.unwrap_or(1.0);
    match b.source.as_str() {
        "dft" => {
            let m = b.m.ok_or_else(|| Error::Config("beamset.m is required for dft".into()))?;
            let n = b.n.ok_or_else(|| Error::Config("beamset.n is required for dft".into()))?;
            BeamSet::dft(m, n, beta)
        }
        "file" => {
            let path = b
                .path
                .as_ref()
                .ok_or_else(|| Error::Config("beamset.path is required for file".into()))?;
            BeamSet::load(path)
        }
        "grassmann" => {
            let m = b
                .m
                .ok_or_else(|| Error::Config("beamset.m is required for grassmann".into()))?;
            let n = b
                .n
                .ok_or_else(|| Error::Config("beamset.n is required for grassmann".into()))?;
            BeamSet::grassmann_packing(m, n, beta, b.iters.unwrap_or(2000), b.seed.unwrap_or(0))
        }
        other => Err(Error::Config(format!(
            "unknown beamset source {other:?} (expected dft, file, or grassmann)"
        ))),
    }
}

fn parse_metric(name: &str) -> Result<DesignMetric> {
    match name {
        "mu_u" => Ok(DesignMetric::UnknownPhase),
        "mu_k" => Ok(DesignMetric::KnownPhase),
        "mu_nr" => Ok(DesignMetric::NonReciprocal),
        other => Err(Error::Config(format!(
            "unknown metric {other:?} (expected mu_u, mu_k, or mu_nr)"
        ))),
    }
}

fn parse_distribution(name: &str, beams: &BeamSet) -> Result<SequenceDistribution> {
    match name {
        "white" => Ok(SequenceDistribution::White),
        "upsca" => Ok(SequenceDistribution::Correlated(unknown_phase_correlation(
            beams,
        )?)),
        "kpsca" => Ok(SequenceDistribution::Correlated(known_phase_correlation(
            beams,
        )?)),
        other => Err(Error::Config(format!(
            "unknown draw distribution {other:?} (expected white, upsca, or kpsca)"
        ))),
    }
}

fn resolve_mapping(cfg: &RunConfig, beams: &BeamSet) -> Result<SequenceMap> {
    let m = cfg
        .mapping
        .as_ref()
        .ok_or_else(|| Error::Config("missing [mapping] section".into()))?;
    let map = match m.source.as_str() {
        "os" => {
            let tau = m
                .tau
                .ok_or_else(|| Error::Config("mapping.tau is required for os".into()))?;
            SequenceMap::orthogonal(beams.count(), tau)?
        }
        "file" => {
            let path = m
                .path
                .as_ref()
                .ok_or_else(|| Error::Config("mapping.path is required for file".into()))?;
            SequenceMap::load(path)?
        }
        "sga" => {
            let tau = m
                .tau
                .ok_or_else(|| Error::Config("mapping.tau is required for sga".into()))?;
            let metric = parse_metric(m.metric.as_deref().unwrap_or("mu_k"))?;
            let dist = parse_distribution(m.distribution.as_deref().unwrap_or("white"), beams)?;
            let iters = m.iters.unwrap_or(10_000);
            sga(beams, metric, &dist, tau, iters, m.seed.unwrap_or(0))?.map
        }
        other => {
            return Err(Error::Config(format!(
                "unknown mapping source {other:?} (expected os, file, or sga)"
            )))
        }
    };
    if map.count() != beams.count() {
        return Err(Error::Config(format!(
            "mapping covers {} beams but the beam set has {}",
            map.count(),
            beams.count()
        )));
    }
    Ok(map)
}

/// Write all outputs or none: already-written files are removed when a
/// later write fails.
fn write_outputs(outputs: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    let mut written: Vec<&PathBuf> = Vec::new();
    for (path, bytes) in outputs {
        if let Err(e) = std::fs::write(path, bytes) {
            for done in written {
                let _ = std::fs::remove_file(done);
            }
            return Err(e.into());
        }
        written.push(path);
    }
    Ok(())
}

fn run_in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("cannot build a {t}-thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Evaluate all three mapping metrics, print them, and write a one-row CSV.
pub fn cmd_metrics(loaded: &LoadedConfig, ov: &Overrides) -> Result<()> {
    let cfg = &loaded.config;
    let beams = resolve_beamset(cfg)?;
    let map = resolve_mapping(cfg, &beams)?;
    let mu_u = evaluate_metric(DesignMetric::UnknownPhase, &beams, &map)?;
    let mu_k = evaluate_metric(DesignMetric::KnownPhase, &beams, &map)?;
    let mu_nr = nonreciprocal_metric(&map);
    println!("mu_u = {mu_u:.6}");
    println!("mu_k = {mu_k:.6}");
    println!("mu_nr = {mu_nr:.6}");
    let out = ov
        .out
        .clone()
        .or_else(|| cfg.metrics.as_ref().and_then(|m| m.out.clone()))
        .ok_or_else(|| Error::Config("metrics output path required (metrics.out or --out)".into()))?;
    let csv = format!("mu_u,mu_k,mu_nr\n{mu_u},{mu_k},{mu_nr}\n");
    write_outputs(&[(out, csv.into_bytes())])
}

/// Run the randomized sequence design and write the mapping plus its
/// improvement trace.
pub fn cmd_design(loaded: &LoadedConfig, ov: &Overrides) -> Result<()> {
    let cfg = &loaded.config;
    let d = cfg
        .design
        .as_ref()
        .ok_or_else(|| Error::Config("missing [design] section".into()))?;
    let beams = resolve_beamset(cfg)?;
    let metric = parse_metric(&d.metric)?;
    let dist = parse_distribution(&d.distribution, &beams)?;
    let seed = ov.seed.unwrap_or(d.seed.unwrap_or(0));
    let outcome = run_in_pool(ov.threads, || {
        sga(&beams, metric, &dist, d.tau, d.iters, seed)
    })??;
    println!(
        "designed tau={} mapping over {} beams: {} = {:.6} after {} iterations",
        d.tau,
        beams.count(),
        d.metric,
        outcome.metric,
        d.iters
    );
    let out = ov.out.clone().unwrap_or_else(|| d.out.clone());
    let trace_out = d
        .trace_out
        .clone()
        .unwrap_or_else(|| suffixed(&out, ".trace.csv"));
    let header = format!("{} {}", outcome.map.tau(), outcome.map.count());
    let map_text = matfile::format_matrix(&header, outcome.map.matrix());
    let mut trace = String::from("iteration,best_metric\n");
    for (iter, value) in &outcome.trace {
        let _ = writeln!(trace, "{iter},{value}");
    }
    write_outputs(&[
        (out, map_text.into_bytes()),
        (trace_out, trace.into_bytes()),
    ])
}

/// Evaluate an analytic PEP grid and write it as CSV.
pub fn cmd_pep(loaded: &LoadedConfig, ov: &Overrides) -> Result<()> {
    let cfg = &loaded.config;
    let p = cfg
        .pep
        .as_ref()
        .ok_or_else(|| Error::Config("missing [pep] section".into()))?;
    let snr_db = ov.snr_db.clone().unwrap_or_else(|| p.snr_db.clone());
    if snr_db.is_empty() || p.alpha.is_empty() {
        return Err(Error::Config("pep needs at least one SNR point and one alpha".into()));
    }
    let nodes = p.nodes.unwrap_or(DEFAULT_QUADRATURE_NODES);
    let mut csv = String::from("snr_db,alpha_re,alpha_im_or_mag,pep\n");
    for &db in &snr_db {
        let rho = snr_db_to_rho(db);
        for &[re, im] in &p.alpha {
            let alpha = Complex64::new(re, im);
            let query = PepQuery::new(rho, p.m, p.beta, alpha);
            let (third, value) = match p.evaluator.as_str() {
                "known-phase" => (im, pep_known_phase(&query)?),
                "unknown-phase" => (im, pep_unknown_phase(&query, nodes)?),
                "rayleigh" => {
                    let mag = alpha.norm();
                    (mag, pep_nonreciprocal_rayleigh(rho * p.beta, p.m, mag)?)
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown evaluator {other:?} (expected known-phase, unknown-phase, or rayleigh)"
                    )))
                }
            };
            let _ = writeln!(csv, "{db},{re},{third},{value}");
        }
    }
    let out = ov.out.clone().unwrap_or_else(|| p.out.clone());
    write_outputs(&[(out, csv.into_bytes())])
}

fn parse_regime(s: &SimulateConfig) -> Result<Regime> {
    let marginalized = s.detector_phase_marginalized;
    Ok(match s.regime.as_str() {
        "no-csi" => Regime::ReciprocalNoCsi,
        "partial-csi" => Regime::ReciprocalPartialCsi,
        "full-csi" => Regime::ReciprocalFullCsi,
        "nr-rayleigh" => Regime::NonReciprocalRayleigh,
        "nr-los-integral" => Regime::NonReciprocalLosIntegral {
            phase_marginalized: marginalized.unwrap_or(true),
        },
        "nr-los-concentrated" => Regime::NonReciprocalLosConcentrated,
        "calibrated" => Regime::Calibrated {
            phase_marginalized: marginalized.unwrap_or(false),
        },
        other => {
            return Err(Error::Config(format!(
                "unknown regime {other:?} (expected no-csi, partial-csi, full-csi, nr-rayleigh, \
                 nr-los-integral, nr-los-concentrated, or calibrated)"
            )))
        }
    })
}

fn parse_channel(s: &SimulateConfig) -> Result<ChannelModel> {
    Ok(match s.channel.as_str() {
        "on-grid" => ChannelModel::OnGrid,
        "off-grid-los" => ChannelModel::LosOffGrid,
        "rician" => ChannelModel::Rician {
            sigma2: s.sigma2.unwrap_or(0.1),
        },
        "aoa-error" => ChannelModel::LosAoaError {
            scale: s.aoa_error_scale.unwrap_or(0.1),
            rho: 1.0,
        },
        "uplink-los" => ChannelModel::UplinkLos {
            phase_shift: s.uplink_phase_shift.unwrap_or(true),
        },
        other => {
            return Err(Error::Config(format!(
                "unknown channel {other:?} (expected on-grid, off-grid-los, rician, aoa-error, \
                 or uplink-los)"
            )))
        }
    })
}

/// Run a Monte Carlo sweep and write the per-SNR CSV plus a metadata
/// sidecar.
pub fn cmd_simulate(loaded: &LoadedConfig, ov: &Overrides) -> Result<()> {
    let cfg = &loaded.config;
    let s = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("missing [simulate] section".into()))?;
    let trials = ov.trials.unwrap_or(s.trials);
    if trials == 0 {
        return Err(Error::Config("simulate.trials must be at least 1".into()));
    }
    let snr_db = ov.snr_db.clone().unwrap_or_else(|| s.snr_db.clone());
    if snr_db.is_empty() {
        return Err(Error::Config("simulate.snr_db must list at least one point".into()));
    }
    let seed = ov.seed.unwrap_or(s.seed.unwrap_or(0));
    let threads = ov.threads.or(s.threads);

    let beams = resolve_beamset(cfg)?;
    let mapping = resolve_mapping(cfg, &beams)?;
    let regime = parse_regime(s)?;
    let channel = parse_channel(s)?;
    let uplink = match (&regime, &s.uplink_path) {
        (Regime::Calibrated { .. }, Some(path)) => Some(BeamSet::load(path)?),
        (Regime::Calibrated { .. }, None) => {
            return Err(Error::Config(
                "calibrated scenarios need simulate.uplink_path".into(),
            ))
        }
        _ => None,
    };
    let params = DetectorParams {
        psi_grid: s.psi_grid.unwrap_or(DetectorParams::default().psi_grid),
        quadrature_nodes: s.nodes.unwrap_or(DetectorParams::default().quadrature_nodes),
    };
    let scenario = Scenario::new(regime, channel, beams, mapping, params, uplink)?;
    let result = run_in_pool(threads, || sweep(&scenario, &snr_db, trials, seed))??;

    let norm = if s.normalize_mse.unwrap_or(false) {
        scenario.beams().norm_sq()
    } else {
        1.0
    };
    let mut csv = String::from("snr_db,trials,errors,p_err,ci95,mse\n");
    for i in 0..result.snr_db.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            result.snr_db[i],
            result.trials,
            result.errors[i],
            result.p_err[i],
            result.ci95[i],
            result.mse[i] / norm,
        );
    }
    let out = ov.out.clone().unwrap_or_else(|| s.out.clone());
    let meta_path = suffixed(&out, ".meta.txt");
    let meta = format!(
        "tool = beamgrid {}\nconfig = {}\nconfig_sha256 = {}\nseed = {}\ntrials = {}\nthreads = {}\n",
        env!("CARGO_PKG_VERSION"),
        loaded.path.display(),
        loaded.sha256,
        seed,
        trials,
        threads.map_or_else(|| "default".to_string(), |t| t.to_string()),
    );
    write_outputs(&[(out, csv.into_bytes()), (meta_path, meta.into_bytes())])
}

/// Build a beam set (or rewrite a loaded one) and save it.
pub fn cmd_beamset(loaded: &LoadedConfig, ov: &Overrides) -> Result<()> {
    let cfg = &loaded.config;
    let beams = resolve_beamset(cfg)?;
    let out = ov
        .out
        .clone()
        .or_else(|| cfg.beamset.as_ref().and_then(|b| b.out.clone()))
        .ok_or_else(|| Error::Config("beamset output path required (beamset.out or --out)".into()))?;
    println!(
        "beam set: {} antennas, {} beams, beta = {}, max coherence = {:.6}",
        beams.antennas(),
        beams.count(),
        beams.beta(),
        beams.max_coherence()
    );
    let header = format!("{} {} {}", beams.antennas(), beams.count(), beams.beta());
    let text = matfile::format_matrix(&header, beams.matrix());
    write_outputs(&[(out, text.into_bytes())])
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(suffix);
    PathBuf::from(os)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_and_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            r#"
[beamset]
source = "dft"
m = 10
n = 70
beta = 1.0

[mapping]
source = "os"
tau = 3
"#,
        )
        .unwrap();
        let loaded = LoadedConfig::load(&path).unwrap();
        assert_eq!(loaded.sha256.len(), 64);
        let beams = resolve_beamset(&loaded.config).unwrap();
        assert_eq!(beams.count(), 70);
        let map = resolve_mapping(&loaded.config, &beams).unwrap();
        assert_eq!(map.tau(), 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "[beamset]\nsource = \"dft\"\nbogus = 3\n").unwrap();
        assert!(LoadedConfig::load(&path).is_err());
    }

    #[test]
    fn write_outputs_removes_partial_results() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("a.csv");
        let bad = dir.path().join("no-such-dir").join("b.csv");
        let res = write_outputs(&[
            (good.clone(), b"x".to_vec()),
            (bad, b"y".to_vec()),
        ]);
        assert!(res.is_err());
        assert!(!good.exists());
    }
}
