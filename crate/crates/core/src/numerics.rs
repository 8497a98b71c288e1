//! Shared numerical machinery: Gauss-Legendre rules, log-domain
//! accumulation, complex Gaussian sampling, and counter-based generator
//! derivation.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::sync::RwLock;

/// A Gauss-Legendre rule on [-1, 1]: paired nodes and weights.
pub type QuadratureRule = Arc<(Vec<f64>, Vec<f64>)>;

static RULE_CACHE: Lazy<RwLock<HashMap<usize, QuadratureRule>>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
///
/// Rules are cached; repeated calls with the same n return the same
/// allocation.
pub fn gauss_legendre(n: usize) -> QuadratureRule {
    assert!(n >= 1, "quadrature rule needs at least one node");
    if let Some(rule) = RULE_CACHE.read().unwrap().get(&n) {
        return Arc::clone(rule);
    }
    let rule = Arc::new(compute_gauss_legendre(n));
    RULE_CACHE
        .write()
        .unwrap()
        .entry(n)
        .or_insert(rule)
        .clone()
}

/// Newton iteration on the Legendre recurrence, exploiting node symmetry.
fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess for the i-th positive root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() <= 1e-15 * x.abs().max(1.0) {
                let (p2, d2) = legendre_with_derivative(n, x);
                dp = d2;
                x -= p2 / d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Legendre polynomial P_n and its derivative at x via the three-term
/// recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// log(sum exp(t)) over a slice, with max shifting.
///
/// Empty input yields -inf; -inf entries are absorbed.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Streaming log-sum-exp accumulator for detectors that marginalize.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn push(&mut self, term: f64) {
        if term == f64::NEG_INFINITY {
            return;
        }
        if term <= self.max {
            self.sum += (term - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - term).exp() + 1.0;
            self.max = term;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max.is_finite() {
            self.max + self.sum.ln()
        } else {
            self.max
        }
    }
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

/// Circularly symmetric complex Gaussian with unit variance per complex
/// entry (each component has variance 1/2).
pub fn standard_complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Generator for the `index`-th independent substream of `seed`.
///
/// Counter-based: the result depends only on (seed, index), so callers may
/// evaluate substreams in any order or in parallel and still reproduce the
/// sequential outcome.
pub fn derived_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw on (-pi, pi].
pub fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    std::f64::consts::PI * (1.0 - 2.0 * u)
}

/// Uniform draw on (-pi/2, pi/2].
pub fn uniform_half_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    std::f64::consts::FRAC_PI_2 * (1.0 - 2.0 * u)
}

/// Wrap a phase into (-pi, pi].
pub fn wrap_phase(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * std::f64::consts::PI);
    if t > std::f64::consts::PI {
        t -= 2.0 * std::f64::consts::PI;
    }
    t
}
