//! Integrated squared error against a known MEV target and Monte Carlo MISE.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use libm::sqrt;

use crate::bandwidth::{assemble_mise_quadratic, solve_h_opt};
use crate::distributions::{mev_target_cdf, sample_blocks, BaseModel, BlockedSample, TailDomain};
use crate::error::{Error, Result};
use crate::estimator::{ddevd_eval, BandwidthVector, DdevdFit, Staircase};
use crate::kernels::KernelSpec;
use crate::plugin::{plugin_iterate, PluginConfig};
use crate::quad::{geometric_breakpoints, integrate, QuadConfig};
use crate::special::derive_seed;

/// Upper-tail probability where ISE integration stops.
pub const ISE_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IseConfig {
    pub rel_tol: f64,
    pub cutoff: f64,
    pub max_intervals: usize,
}

impl Default for IseConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-7, cutoff: ISE_CUTOFF, max_intervals: 20_000 }
    }
}

/// int over [F^{-1}(q), upper) of (estimate - target)^2 dy. `jumps` lists
/// abscissae where the estimate may be discontinuous.
pub fn integrated_squared_error<M, E, T>(
    estimate: E,
    target: T,
    q: f64,
    model: &M,
    jumps: &[f64],
    cfg: &IseConfig,
) -> Result<f64>
where
    M: BaseModel + ?Sized,
    E: Fn(f64) -> f64,
    T: Fn(f64) -> f64,
{
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidInput(format!("q = {q} not in [0, 1)")));
    }
    let qc = QuadConfig { rel_tol: cfg.rel_tol, abs_tol: 1e-300, max_intervals: cfg.max_intervals };
    let r = match model.tail_domain() {
        TailDomain::Probability => {
            let t_hi = 1.0 - q;
            let t_lo = cfg.cutoff.min(t_hi);
            let mut bp: Vec<f64> = geometric_breakpoints(t_hi, t_lo, 2.0).into_iter().filter(|&t| t >= t_lo).collect();
            bp.push(t_lo);
            bp.extend(jumps.iter().map(|&y| model.sf(y)).filter(|&t| t > t_lo && t < t_hi));
            bp.sort_by(|a, b| a.total_cmp(b));
            bp.dedup();
            integrate(
                |t| {
                    let y = model.isf(t);
                    let f = model.pdf(y);
                    if !(f > 0.0) {
                        return 0.0;
                    }
                    let d = estimate(y) - target(y);
                    d * d / f
                },
                &bp,
                &qc,
            )
        }
        TailDomain::Abscissa { upper } => {
            let lo = model.quantile(q);
            let mut bp = alloc::vec![lo, upper.max(lo)];
            bp.extend(jumps.iter().copied().filter(|&y| y > lo && y < upper));
            bp.sort_by(|a, b| a.total_cmp(b));
            bp.dedup();
            integrate(
                |y| {
                    let d = estimate(y) - target(y);
                    d * d
                },
                &bp,
                &qc,
            )
        }
    };
    if !r.converged || !r.value[0].is_finite() {
        return Err(Error::Integration {
            coefficient: String::from("ISE"),
            detail: format!(
                "value {:e}, error {:e}, {} evaluations over {} panels",
                r.value[0],
                r.error[0],
                r.evaluations,
                jumps.len() + 1
            ),
        });
    }
    Ok(r.value[0])
}

#[derive(Debug, Clone)]
pub enum Selector {
    FixedH(f64),
    AnalyticOpt,
    Plugin(PluginConfig),
    Staircase,
}

impl Selector {
    pub fn name(&self) -> String {
        match self {
            Selector::FixedH(h) => format!("fixed_h({h})"),
            Selector::AnalyticOpt => String::from("analytic_opt"),
            Selector::Plugin(_) => String::from("plugin"),
            Selector::Staircase => String::from("staircase"),
        }
    }
}

/// A selector with data-independent work done once.
#[derive(Debug, Clone)]
pub enum PreparedSelector {
    Fixed(BandwidthVector),
    Plugin(PluginConfig),
    Staircase,
}

pub fn prepare_selector<M: BaseModel + ?Sized>(
    selector: &Selector,
    model: &M,
    sizes: &[usize],
    kernel: &KernelSpec,
    q: f64,
) -> Result<PreparedSelector> {
    Ok(match selector {
        Selector::FixedH(h) => PreparedSelector::Fixed(BandwidthVector::uniform(*h, sizes.len())?),
        Selector::AnalyticOpt => {
            PreparedSelector::Fixed(solve_h_opt(&assemble_mise_quadratic(model, sizes, kernel, q)?)?)
        }
        Selector::Plugin(c) => PreparedSelector::Plugin(c.clone()),
        Selector::Staircase => PreparedSelector::Staircase,
    })
}

fn jumps(sample: &BlockedSample) -> Vec<f64> {
    sample.pooled()
}

/// ISE of one replicate: sample with `seed`, select, fit, compare.
pub fn mise_replicate<M: BaseModel + ?Sized>(
    model: &M,
    sizes: &[usize],
    kernel: &KernelSpec,
    selector: &PreparedSelector,
    q: f64,
    seed: u64,
    cfg: &IseConfig,
) -> Result<f64> {
    let sample = sample_blocks(model, sizes, seed)?;
    let target = |y: f64| mev_target_cdf(model, sizes, y);
    let data = jumps(&sample);
    match selector {
        PreparedSelector::Staircase => {
            let s = Staircase::new(&sample);
            integrated_squared_error(|y| s.eval(y), target, q, model, &data, cfg)
        }
        PreparedSelector::Fixed(h) => {
            let fit = DdevdFit::new(sample, kernel.clone(), h.clone())?;
            integrated_squared_error(|y| ddevd_eval(&fit, y), target, q, model, &data, cfg)
        }
        PreparedSelector::Plugin(c) => {
            let r = plugin_iterate(&sample, c)?;
            if !r.converged {
                return Err(Error::Config(format!(
                    "plug-in did not converge: {}",
                    r.failure_mode.map_or("unknown", |f| f.as_str())
                )));
            }
            let fit = DdevdFit::new(sample, kernel.clone(), r.h_final)?;
            integrated_squared_error(|y| ddevd_eval(&fit, y), target, q, model, &data, cfg)
        }
    }
}

pub fn replicate_seed(seed: u64, rep: usize) -> u64 {
    derive_seed(seed, &[rep as u64])
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiseEstimate {
    pub selector: String,
    pub mean_ise: f64,
    pub standard_error: f64,
    pub replicates: usize,
    pub failed_replicates: usize,
    pub q: f64,
    pub cutoff: f64,
    pub rel_tol: f64,
    /// Per-replicate ISE, NaN for failures, in replicate order.
    pub values: Vec<f64>,
}

/// Mean and standard error over the successful entries of `values`.
pub fn summarize(selector: String, values: Vec<f64>, q: f64, cfg: &IseConfig) -> MiseEstimate {
    let ok: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let k = ok.len() as f64;
    let mean = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / k };
    let se = if ok.len() < 2 {
        f64::NAN
    } else {
        sqrt(ok.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0) / k)
    };
    MiseEstimate {
        selector,
        mean_ise: mean,
        standard_error: se,
        replicates: values.len(),
        failed_replicates: values.len() - ok.len(),
        q,
        cutoff: cfg.cutoff,
        rel_tol: cfg.rel_tol,
        values,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn mise_monte_carlo<M: BaseModel + ?Sized>(
    model: &M,
    sizes: &[usize],
    kernel: &KernelSpec,
    selector: &Selector,
    q: f64,
    replicates: usize,
    seed: u64,
    cfg: &IseConfig,
) -> Result<MiseEstimate> {
    if replicates < 2 {
        return Err(Error::InvalidInput(String::from("at least 2 replicates are needed")));
    }
    let prepared = prepare_selector(selector, model, sizes, kernel, q)?;
    let values: Vec<f64> = (0..replicates)
        .map(|r| mise_replicate(model, sizes, kernel, &prepared, q, replicate_seed(seed, r), cfg).unwrap_or(f64::NAN))
        .collect();
    Ok(summarize(selector.name(), values, q, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Builtin;

    fn exp1() -> Builtin {
        Builtin::Exponential { rate: 1.0 }
    }

    #[test]
    fn identical_is_zero() {
        let m = exp1();
        let t = |y: f64| mev_target_cdf(&m, &[10; 3], y);
        assert_eq!(integrated_squared_error(t, t, 0.9, &m, &[], &IseConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_on_unit_interval() {
        let m = exp1();
        let t = |y: f64| mev_target_cdf(&m, &[10; 3], y);
        let a = 3.0;
        let e = |y: f64| if (a..a + 1.0).contains(&y) { t(y) + 0.1 } else { t(y) };
        let v = integrated_squared_error(e, t, 0.9, &m, &[a, a + 1.0], &IseConfig::default()).unwrap();
        assert!((v - 0.01).abs() < 1e-9, "{v}");
    }

    #[test]
    fn staircase_matches_riemann_oracle() {
        let m = exp1();
        let sizes = [10usize; 3];
        let s = sample_blocks(&m, &sizes, 42).unwrap();
        let st = Staircase::new(&s);
        let t = |y: f64| mev_target_cdf(&m, &sizes, y);
        let v = integrated_squared_error(|y| st.eval(y), t, 0.9, &m, &s.pooled(), &IseConfig::default()).unwrap();
        let (lo, hi) = (m.quantile(0.9), m.isf(ISE_CUTOFF));
        let k = 1_000_000;
        let dy = (hi - lo) / k as f64;
        let riemann: f64 = (0..k)
            .map(|i| {
                let y = lo + (i as f64 + 0.5) * dy;
                let d = st.eval(y) - t(y);
                d * d * dy
            })
            .sum();
        assert!((v / riemann - 1.0).abs() < 1e-5, "{v} {riemann}");
    }

    #[test]
    fn summary_statistics() {
        let cfg = IseConfig::default();
        let e = summarize(String::from("x"), alloc::vec![1.0, 3.0, f64::NAN], 0.9, &cfg);
        assert_eq!(e.mean_ise, 2.0);
        assert_eq!(e.failed_replicates, 1);
        assert!((e.standard_error - 1.0).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let m = exp1();
        let k = KernelSpec::gaussian();
        let cfg = IseConfig::default();
        let a = mise_monte_carlo(&m, &[20; 3], &k, &Selector::FixedH(0.5), 0.9, 4, 7, &cfg).unwrap();
        let b = mise_monte_carlo(&m, &[20; 3], &k, &Selector::FixedH(0.5), 0.9, 4, 7, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.mean_ise > 0.0 && a.standard_error >= 0.0);
        assert!(mise_monte_carlo(&m, &[20; 3], &k, &Selector::Staircase, 0.9, 1, 7, &cfg).is_err());
    }
}
