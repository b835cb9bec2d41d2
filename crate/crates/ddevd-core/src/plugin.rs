//! Iterative plug-in bandwidth selection with a pooled kernel pilot.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use libm::{pow, sqrt};

use crate::bandwidth::{assemble_with, min_eigenvalue, stationary_point, TailOptions};
use crate::distributions::{tail_regression_over, BaseModel, BlockedSample, TailDomain, TailPoint};
use crate::error::{Error, Result};
use crate::estimator::{BandwidthVector, SortedBlock};
use crate::kernels::KernelSpec;

#[derive(Debug, Clone)]
pub struct PluginConfig {
    pub lambda: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub q: f64,
    pub kernel: KernelSpec,
}

impl PluginConfig {
    pub fn new(q: f64, kernel: KernelSpec) -> Self {
        Self { lambda: 0.5, epsilon: 1e-4, max_iter: 100, q, kernel }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Config(format!("lambda = {} must lie in (0, 1]", self.lambda)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon = {} must be positive", self.epsilon)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config(String::from("max_iter must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.q) {
            return Err(Error::Config(format!("q = {} must lie in [0, 1)", self.q)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureMode {
    NegativeBandwidth,
    Oscillation,
    CollapseToZero,
    IndefiniteHessian,
    MaxIter,
    /// The pilot quadrature itself failed.
    NumericalFailure,
}

impl FailureMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureMode::NegativeBandwidth => "negative_bandwidth",
            FailureMode::Oscillation => "oscillation",
            FailureMode::CollapseToZero => "collapse_to_zero",
            FailureMode::IndefiniteHessian => "indefinite_hessian",
            FailureMode::MaxIter => "max_iter",
            FailureMode::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub iteration: usize,
    pub h: Vec<f64>,
    /// Smallest eigenvalue of the pilot Q; NaN when assembly failed.
    pub min_eig: f64,
    pub rel_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PluginResult {
    pub h_final: BandwidthVector,
    pub iterations: usize,
    pub converged: bool,
    pub trajectory: Vec<TrajectoryStep>,
    pub failure_mode: Option<FailureMode>,
    pub note: Option<String>,
}

/// 1.06 sd n^(-1/5), sd with divisor n - 1.
pub fn silverman_init(block: &[f64]) -> Result<f64> {
    let n = block.len();
    if n < 2 {
        return Err(Error::DegenerateBlock(n));
    }
    let mean = block.iter().sum::<f64>() / n as f64;
    let var = block.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::DegenerateBlock(n));
    }
    Ok(1.06 * sqrt(var) * pow(n as f64, -0.2))
}

/// Pooled kernel estimate of F_X with per-block bandwidths.
#[derive(Debug, Clone)]
pub struct KdePilot {
    blocks: Vec<SortedBlock>,
    kernel: KernelSpec,
    total: f64,
    pooled: Vec<f64>,
    lo: f64,
    hi: f64,
    gamma: Option<f64>,
    tail_scale: Option<f64>,
}

impl KdePilot {
    pub fn new(sample: &BlockedSample, h: &BandwidthVector, kernel: &KernelSpec) -> Result<Self> {
        if h.len() != sample.m() {
            return Err(Error::InvalidInput(format!("{} bandwidths for {} blocks", h.len(), sample.m())));
        }
        let kernel = if kernel.density_prime(0.0).is_some() { kernel.clone() } else { KernelSpec::gaussian() };
        let blocks: Vec<SortedBlock> =
            sample.blocks().iter().zip(h.as_slice()).map(|(b, &hi)| SortedBlock::new(b, hi)).collect();
        let mut pooled = sample.pooled();
        pooled.sort_by(|a, b| a.total_cmp(b));
        let (dmin, dmax) = (pooled[0], pooled[pooled.len() - 1]);
        let reach = kernel.reach() * h.max();
        let mut p = Self {
            blocks,
            kernel,
            total: sample.total() as f64,
            pooled,
            lo: dmin - reach,
            hi: dmax + reach,
            gamma: None,
            tail_scale: None,
        };
        let t_lo = (10.0 / p.total).max(1e-5);
        let t_hi = (200.0 / p.total).clamp(5e-3, 0.1);
        if t_hi > t_lo {
            if let Some(fit) = tail_regression_over(&p, t_lo, t_hi) {
                p.gamma = Some(fit.gamma);
                p.tail_scale = Some(fit.tail_scale);
            }
        }
        Ok(p)
    }

    /// Number of pooled observations above the empirical q-quantile.
    pub fn tail_count(&self, q: f64) -> usize {
        let n = self.pooled.len();
        let k = ((q * n as f64).ceil() as usize).min(n);
        n - k
    }

    pub fn low_confidence(&self, q: f64) -> bool {
        self.tail_count(q) < 30
    }

    fn eval(&self, y: f64) -> TailPoint {
        let mut p = TailPoint { cdf: 0.0, sf: 0.0, pdf: 0.0, pdf_prime: 0.0 };
        for b in &self.blocks {
            let s = b.sums(&self.kernel, y);
            p.cdf += s.cdf;
            p.sf += s.sf;
            p.pdf += s.pdf;
            p.pdf_prime += s.pdf_prime;
        }
        let n = self.total;
        TailPoint { cdf: (p.cdf / n).clamp(0.0, 1.0), sf: (p.sf / n).clamp(0.0, 1.0), pdf: p.pdf / n, pdf_prime: p.pdf_prime / n }
    }

    /// Safeguarded Newton on sf (upper) or cdf (lower) inside the support.
    fn invert(&self, target: f64, upper: bool) -> f64 {
        let (mut a, mut b) = (self.lo, self.hi);
        let mut x = 0.5 * (a + b);
        for _ in 0..200 {
            let p = self.eval(x);
            let g = if upper { target - p.sf } else { p.cdf - target };
            if g == 0.0 {
                return x;
            }
            if g < 0.0 {
                a = x;
            } else {
                b = x;
            }
            let tol = 1e-14 * (1.0 + x.abs());
            if b - a <= tol {
                break;
            }
            let newton = if p.pdf > 0.0 { x - g / p.pdf } else { f64::NAN };
            let next = if newton > a && newton < b { newton } else { 0.5 * (a + b) };
            if (next - x).abs() <= tol && newton == next {
                return next;
            }
            x = next;
        }
        0.5 * (a + b)
    }
}

impl BaseModel for KdePilot {
    fn name(&self) -> String {
        format!("kde-pilot({})", self.kernel.name())
    }
    fn cdf(&self, y: f64) -> f64 {
        self.eval(y).cdf
    }
    fn sf(&self, y: f64) -> f64 {
        self.eval(y).sf
    }
    fn pdf(&self, y: f64) -> f64 {
        self.eval(y).pdf
    }
    fn pdf_prime(&self, y: f64) -> f64 {
        self.eval(y).pdf_prime
    }
    fn quantile(&self, p: f64) -> f64 {
        if p > 0.5 {
            self.invert(1.0 - p, true)
        } else {
            self.invert(p, false)
        }
    }
    fn isf(&self, t: f64) -> f64 {
        self.invert(t, true)
    }
    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
    fn gamma(&self) -> Option<f64> {
        self.gamma
    }
    fn tail_scale(&self) -> Option<f64> {
        self.tail_scale
    }
    fn tail_domain(&self) -> TailDomain {
        TailDomain::Abscissa { upper: self.hi }
    }
    fn tail_point(&self, y: f64) -> TailPoint {
        self.eval(y)
    }
    fn tail_point_at_sf(&self, t: f64) -> TailPoint {
        self.eval(self.isf(t))
    }
}

pub fn pilot_estimates(sample: &BlockedSample, h: &BandwidthVector, kernel: &KernelSpec) -> Result<KdePilot> {
    KdePilot::new(sample, h, kernel)
}

fn norm(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}

const OSCILLATION_WINDOW: usize = 10;
const COLLAPSE_FRACTION: f64 = 1e-10;

fn oscillating(rel: &[f64], steps: &[Vec<f64>]) -> bool {
    if rel.len() < OSCILLATION_WINDOW + 1 {
        return false;
    }
    let w = &rel[rel.len() - OSCILLATION_WINDOW - 1..];
    if w[w.len() - 1] < w[0] {
        return false;
    }
    let s = &steps[steps.len() - OSCILLATION_WINDOW..];
    (0..s[0].len()).any(|i| s.windows(2).all(|p| p[0][i] * p[1][i] < 0.0))
}

/// Damped fixed-point iteration h <- (1 - lambda) h + lambda h*, with
/// h* = -Q^{-1} c / 2 from the pilot built on the current h.
pub fn plugin_iterate(sample: &BlockedSample, config: &PluginConfig) -> Result<PluginResult> {
    config.validate()?;
    let init: Vec<f64> = sample.blocks().iter().map(|b| silverman_init(b)).collect::<Result<_>>()?;
    let h0 = BandwidthVector::new(init)?;
    plugin_iterate_from(sample, config, h0)
}

pub fn plugin_iterate_from(sample: &BlockedSample, config: &PluginConfig, h0: BandwidthVector) -> Result<PluginResult> {
    config.validate()?;
    let sizes = sample.block_sizes();
    let (dlo, dhi) = sample.range();
    let range = (dhi - dlo).max(f64::MIN_POSITIVE);
    let pilot_kernel = KernelSpec::gaussian();
    let opts = TailOptions { rel_tol: 1e-6, ..TailOptions::default() };
    let mut h = h0.as_slice().to_vec();
    let mut trajectory = Vec::new();
    let mut rel_hist: Vec<f64> = Vec::new();
    let mut steps: Vec<Vec<f64>> = Vec::new();
    let mut failure = None;
    let mut note = None;
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..config.max_iter {
        iterations = k + 1;
        let hv = BandwidthVector::new(h.clone())?;
        let pilot = KdePilot::new(sample, &hv, &pilot_kernel)?;
        if k == 0 && pilot.low_confidence(config.q) {
            note = Some(format!("pilot tail holds {} points; gamma estimate is low-confidence", pilot.tail_count(config.q)));
        }
        let mq = match assemble_with(&pilot, &sizes, &config.kernel, config.q, &opts) {
            Ok(mq) => mq,
            Err(e) => {
                trajectory.push(TrajectoryStep { iteration: k, h: h.clone(), min_eig: f64::NAN, rel_change: f64::NAN });
                failure = Some(FailureMode::NumericalFailure);
                note = Some(format!("{e}"));
                break;
            }
        };
        let lam = min_eigenvalue(&mq);
        let target = match stationary_point(&mq) {
            Ok(t) => t,
            Err(_) => {
                trajectory.push(TrajectoryStep { iteration: k, h: h.clone(), min_eig: lam, rel_change: f64::NAN });
                failure = Some(FailureMode::IndefiniteHessian);
                break;
            }
        };
        if target.iter().any(|v| !(*v > 0.0)) {
            trajectory.push(TrajectoryStep { iteration: k, h: h.clone(), min_eig: lam, rel_change: f64::NAN });
            failure = Some(FailureMode::NegativeBandwidth);
            break;
        }
        let next: Vec<f64> =
            h.iter().zip(&target).map(|(a, b)| (1.0 - config.lambda) * a + config.lambda * b).collect();
        let step: Vec<f64> = next.iter().zip(&h).map(|(a, b)| a - b).collect();
        let rel = norm(&step) / norm(&h);
        trajectory.push(TrajectoryStep { iteration: k, h: next.clone(), min_eig: lam, rel_change: rel });
        rel_hist.push(rel);
        steps.push(step);
        h = next;
        if h.iter().copied().fold(0.0, f64::max) < COLLAPSE_FRACTION * range {
            failure = Some(FailureMode::CollapseToZero);
            break;
        }
        if rel < config.epsilon {
            converged = true;
            break;
        }
        if oscillating(&rel_hist, &steps) {
            failure = Some(FailureMode::Oscillation);
            break;
        }
    }
    if !converged && failure.is_none() {
        failure = Some(FailureMode::MaxIter);
    }
    let h_final = BandwidthVector::new(h.iter().map(|v| v.max(f64::MIN_POSITIVE)).collect())?;
    Ok(PluginResult { h_final, iterations, converged, trajectory, failure_mode: failure, note })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandwidth::{assemble_mise_quadratic, solve_h_opt};
    use crate::distributions::{sample_blocks, Builtin};
    use crate::quad::{integrate, QuadConfig};
    use alloc::vec;

    #[test]
    fn silverman_examples() {
        let unit: Vec<f64> = {
            // 32 points with sample sd exactly 1.
            let base: Vec<f64> = (0..32).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
            let s = sqrt(32.0 / 31.0);
            base.iter().map(|x| x / s).collect()
        };
        assert!((silverman_init(&unit).unwrap() - 0.53).abs() < 1e-12);
        let twice: Vec<f64> = unit.iter().map(|x| 2.0 * x).collect();
        assert!((silverman_init(&twice).unwrap() - 1.06).abs() < 1e-12);
        assert!(matches!(silverman_init(&[1.0, 1.0]), Err(Error::DegenerateBlock(_))));
        let s = sample_blocks(&Builtin::Normal { mu: 0.0, sigma: 1.0 }, &[1000], 3).unwrap();
        let h = silverman_init(&s.blocks()[0]).unwrap();
        assert!((h / 0.26622 - 1.0).abs() < 0.1);
    }

    #[test]
    fn pilot_examples() {
        let s = BlockedSample::new(vec![vec![2.0]]).unwrap();
        let p = KdePilot::new(&s, &BandwidthVector::uniform(1.0, 1).unwrap(), &KernelSpec::gaussian()).unwrap();
        assert!((p.cdf(2.0) - 0.5).abs() < 1e-15);

        let s = sample_blocks(&Builtin::Exponential { rate: 1.0 }, &[40, 60], 5).unwrap();
        let h = BandwidthVector::new(vec![0.3, 0.2]).unwrap();
        let p = KdePilot::new(&s, &h, &KernelSpec::gaussian()).unwrap();
        let (lo, hi) = p.support();
        let mass = integrate(|y| p.pdf(y), &[lo, 0.0, 1.0, 2.0, 4.0, hi], &QuadConfig::default());
        assert!((mass.value[0] - 1.0).abs() < 1e-6);
        let (_, dmax) = s.range();
        assert!((p.cdf(dmax + 10.0 * 0.3) - 1.0).abs() < 1e-10);
        for y in [0.1, 0.7, 2.5] {
            let d = 1e-5;
            let fd = (p.pdf(y + d) - p.pdf(y - d)) / (2.0 * d);
            assert!((fd - p.pdf_prime(y)).abs() < 1e-5);
            assert!((p.sf(p.isf(1e-3)) / 1e-3 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn pilot_gamma_is_near_zero_for_exponential() {
        let s = sample_blocks(&Builtin::Exponential { rate: 1.0 }, &[200; 20], 1).unwrap();
        let h = BandwidthVector::uniform(0.2, 20).unwrap();
        let p = KdePilot::new(&s, &h, &KernelSpec::gaussian()).unwrap();
        assert!(p.gamma().unwrap().abs() < 0.5, "{:?}", p.gamma());
        assert!(!p.low_confidence(0.9));
    }

    #[test]
    fn config_validation() {
        let mut c = PluginConfig::new(0.9, KernelSpec::gaussian());
        assert!(c.validate().is_ok());
        c.lambda = 0.0;
        assert!(c.validate().is_err());
        c.lambda = 1.0;
        c.epsilon = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn exponential_converges_near_truth() {
        let model = Builtin::Exponential { rate: 1.0 };
        let k = KernelSpec::gaussian();
        let s = sample_blocks(&model, &[200; 10], 11).unwrap();
        let r = plugin_iterate(&s, &PluginConfig::new(0.9, k.clone())).unwrap();
        assert!(r.converged, "{:?}", r.failure_mode);
        assert!(r.iterations <= 50);
        let truth = solve_h_opt(&assemble_mise_quadratic(&model, &[200; 10], &k, 0.9).unwrap()).unwrap();
        let ratio = r.h_final.as_slice()[0] / truth.as_slice()[0];
        assert!((ratio - 1.0).abs() < 0.6, "ratio {ratio}");
        let last = r.trajectory.last().unwrap();
        assert!(last.rel_change < 1e-4);
    }

    #[test]
    fn damping_identity() {
        let model = Builtin::Exponential { rate: 1.0 };
        let s = sample_blocks(&model, &[100; 4], 2).unwrap();
        let mut c = PluginConfig::new(0.9, KernelSpec::gaussian());
        c.max_iter = 3;
        let r1 = plugin_iterate(&s, &c).unwrap();
        let r2 = plugin_iterate(&s, &c).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn oscillation_detector() {
        let rel: Vec<f64> = (0..11).map(|_| 0.1).collect();
        let steps: Vec<Vec<f64>> = (0..11).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }, 1.0]).collect();
        assert!(oscillating(&rel, &steps));
        let steps: Vec<Vec<f64>> = (0..11).map(|_| vec![1.0, 1.0]).collect();
        assert!(!oscillating(&rel, &steps));
        let falling: Vec<f64> = (0..11).map(|i| 1.0 / (i + 1) as f64).collect();
        let steps: Vec<Vec<f64>> = (0..11).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect();
        assert!(!oscillating(&falling, &steps));
    }
}
