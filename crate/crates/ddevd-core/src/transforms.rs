//! Monotone scale transforms, fit diagnostics, the transform-and-refit recipe
//! and return levels.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use libm::{ceil, exp, log, pow};

use crate::distributions::BlockedSample;
use crate::error::{Error, Result};
use crate::estimator::{ddevd_density, ddevd_eval, ddevd_quantile, DdevdFit};
use crate::plugin::{plugin_iterate, FailureMode, PluginConfig, PluginResult};

/// A strictly increasing map y -> z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformSpec {
    Identity,
    Log,
    /// ((y + shift)^lambda - 1) / lambda, or ln(y + shift) at lambda = 0.
    BoxCox { lambda: f64, shift: f64 },
    /// scale y + offset with scale > 0.
    Affine { scale: f64, offset: f64 },
}

impl TransformSpec {
    pub fn name(&self) -> String {
        match self {
            TransformSpec::Identity => String::from("identity"),
            TransformSpec::Log => String::from("log"),
            TransformSpec::BoxCox { lambda, shift } => format!("box-cox(lambda={lambda}, shift={shift})"),
            TransformSpec::Affine { scale, offset } => format!("affine(scale={scale}, offset={offset})"),
        }
    }

    /// Open interval of valid y.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            TransformSpec::Identity | TransformSpec::Affine { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            TransformSpec::Log => (0.0, f64::INFINITY),
            TransformSpec::BoxCox { shift, .. } => (-shift, f64::INFINITY),
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        let (lo, hi) = self.domain();
        y > lo && y < hi
    }

    pub fn forward(&self, y: f64) -> f64 {
        match *self {
            TransformSpec::Identity => y,
            TransformSpec::Log => log(y),
            TransformSpec::BoxCox { lambda, shift } => {
                if lambda == 0.0 {
                    log(y + shift)
                } else {
                    (pow(y + shift, lambda) - 1.0) / lambda
                }
            }
            TransformSpec::Affine { scale, offset } => scale * y + offset,
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        match *self {
            TransformSpec::Identity => z,
            TransformSpec::Log => exp(z),
            TransformSpec::BoxCox { lambda, shift } => {
                if lambda == 0.0 {
                    exp(z) - shift
                } else {
                    pow(lambda * z + 1.0, 1.0 / lambda) - shift
                }
            }
            TransformSpec::Affine { scale, offset } => (z - offset) / scale,
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        match *self {
            TransformSpec::Identity => 1.0,
            TransformSpec::Log => 1.0 / y,
            TransformSpec::BoxCox { lambda, shift } => pow(y + shift, lambda - 1.0),
            TransformSpec::Affine { scale, .. } => scale,
        }
    }

    /// Checks T' > 0 and the round trip on a grid spanning `[lo, hi]`.
    pub fn validate_on(&self, lo: f64, hi: f64) -> Result<()> {
        if let TransformSpec::Affine { scale, .. } = self {
            if !(*scale > 0.0) {
                return Err(Error::Config(format!("affine scale {scale} must be positive")));
            }
        }
        for i in 0..=64 {
            let y = lo + (hi - lo) * i as f64 / 64.0;
            if !self.contains(y) {
                return Err(Error::Domain(format!("{} undefined at {y}", self.name())));
            }
            if !(self.derivative(y) > 0.0) {
                return Err(Error::Config(format!("{} not increasing at {y}", self.name())));
            }
            let back = self.inverse(self.forward(y));
            if (back - y).abs() > 1e-9 * (1.0 + y.abs()) {
                return Err(Error::Config(format!("{} does not invert at {y}", self.name())));
            }
        }
        Ok(())
    }

    /// Log for positive data, otherwise log-shifted Box-Cox.
    pub fn default_candidates(sample: &BlockedSample) -> Vec<TransformSpec> {
        let (lo, hi) = sample.range();
        if lo > 0.0 {
            alloc::vec![TransformSpec::Log]
        } else {
            let shift = (-lo).max(0.0) + 1e-6 * (hi - lo);
            alloc::vec![TransformSpec::BoxCox { lambda: 0.0, shift }]
        }
    }
}

/// The estimate on the y scale from a fit on z = T(y).
pub fn back_transformed_cdf(fit_on_z: &DdevdFit, t: &TransformSpec, y: f64) -> Result<f64> {
    if !t.contains(y) {
        return Err(Error::Domain(format!("{y} outside the domain of {}", t.name())));
    }
    Ok(ddevd_eval(fit_on_z, t.forward(y)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsConfig {
    /// Pass when min h >= spacing_ratio * median tail gap.
    pub spacing_ratio: f64,
    /// Pass when tail modes <= max(1, ceil(fraction * tail points)).
    pub spikiness_fraction: f64,
    pub grid_points: usize,
    pub min_tail_points: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { spacing_ratio: 1.0, spikiness_fraction: 0.2, grid_points: 2048, min_tail_points: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticsStatus {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub status: DiagnosticsStatus,
    pub convergence_pass: bool,
    pub failure_mode: Option<FailureMode>,
    pub spacing_pass: bool,
    pub h_star: f64,
    pub median_tail_spacing: f64,
    pub spacing_ratio: f64,
    pub spikiness_pass: bool,
    pub tail_mode_count: usize,
    pub tail_point_count: usize,
    pub overall_pass: bool,
}

impl DiagnosticsReport {
    pub fn passes(&self) -> usize {
        [self.convergence_pass, self.spacing_pass, self.spikiness_pass].iter().filter(|&&b| b).count()
    }
}

/// Pooled observations above the empirical q-quantile, ascending.
pub fn tail_points(sample: &BlockedSample, q: f64) -> Vec<f64> {
    let mut pooled = sample.pooled();
    pooled.sort_by(|a, b| a.total_cmp(b));
    let n = pooled.len();
    let k = (ceil(q * n as f64) as usize).min(n);
    pooled.split_off(k)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Strict interior maxima of the fitted density on a uniform grid over [lo, hi].
pub fn count_modes(fit: &DdevdFit, lo: f64, hi: f64, points: usize) -> usize {
    let d: Vec<f64> =
        (0..points).map(|i| ddevd_density(fit, lo + (hi - lo) * i as f64 / (points - 1) as f64)).collect();
    let peak = d.iter().copied().fold(0.0, f64::max);
    let floor = 1e-12 * peak;
    d.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2] && w[1] > floor).count()
}

pub fn run_diagnostics(fit: &DdevdFit, plugin: &PluginResult, q: f64) -> DiagnosticsReport {
    run_diagnostics_with(fit, plugin, q, &DiagnosticsConfig::default())
}

pub fn run_diagnostics_with(fit: &DdevdFit, plugin: &PluginResult, q: f64, cfg: &DiagnosticsConfig) -> DiagnosticsReport {
    let tail = tail_points(fit.sample(), q);
    let h_star = fit.bandwidths().min();
    let convergence_pass = plugin.converged;
    let mut report = DiagnosticsReport {
        status: DiagnosticsStatus::Inconclusive,
        convergence_pass,
        failure_mode: plugin.failure_mode,
        spacing_pass: false,
        h_star,
        median_tail_spacing: f64::NAN,
        spacing_ratio: f64::NAN,
        spikiness_pass: false,
        tail_mode_count: 0,
        tail_point_count: tail.len(),
        overall_pass: false,
    };
    if tail.len() < cfg.min_tail_points {
        return report;
    }
    let gaps: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).collect();
    let g = median(gaps);
    report.median_tail_spacing = g;
    report.spacing_ratio = h_star / g;
    report.spacing_pass = h_star >= cfg.spacing_ratio * g;
    let lo = tail[0];
    let hi = tail[tail.len() - 1] + 3.0 * fit.bandwidths().max();
    report.tail_mode_count = count_modes(fit, lo, hi, cfg.grid_points);
    let allowed = (ceil(cfg.spikiness_fraction * tail.len() as f64) as usize).max(1);
    report.spikiness_pass = report.tail_mode_count <= allowed;
    report.overall_pass = report.convergence_pass && report.spacing_pass && report.spikiness_pass;
    report.status = if report.overall_pass { DiagnosticsStatus::Pass } else { DiagnosticsStatus::Fail };
    report
}

/// One scale tried by the recipe.
#[derive(Debug, Clone)]
pub struct ScaleAttempt {
    pub transform: TransformSpec,
    pub fit: Option<DdevdFit>,
    pub plugin: Option<PluginResult>,
    pub report: Option<DiagnosticsReport>,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RecipeOutcome {
    pub chosen: usize,
    pub attempts: Vec<ScaleAttempt>,
    pub passed: bool,
}

impl RecipeOutcome {
    pub fn chosen_attempt(&self) -> &ScaleAttempt {
        &self.attempts[self.chosen]
    }

    pub fn fit(&self) -> &DdevdFit {
        self.chosen_attempt().fit.as_ref().expect("chosen attempt carries a fit")
    }

    pub fn transform(&self) -> TransformSpec {
        self.chosen_attempt().transform
    }

    pub fn identity_report(&self) -> Option<&DiagnosticsReport> {
        self.attempts[0].report.as_ref()
    }

    pub fn chosen_report(&self) -> Option<&DiagnosticsReport> {
        self.chosen_attempt().report.as_ref()
    }
}

/// Plug-in fit on the scale of `t` with diagnostics.
pub fn fit_on_scale(sample: &BlockedSample, config: &PluginConfig, t: TransformSpec) -> ScaleAttempt {
    let (lo, hi) = sample.range();
    let mut attempt = ScaleAttempt { transform: t, fit: None, plugin: None, report: None, note: None };
    if !(t.contains(lo) && t.contains(hi)) {
        attempt.note = Some(format!("{} skipped: data outside its domain", t.name()));
        return attempt;
    }
    let z = match sample.map(|y| t.forward(y)) {
        Ok(z) => z,
        Err(e) => {
            attempt.note = Some(format!("{} skipped: {e}", t.name()));
            return attempt;
        }
    };
    let plugin = match plugin_iterate(&z, config) {
        Ok(p) => p,
        Err(e) => {
            attempt.note = Some(format!("{} skipped: {e}", t.name()));
            return attempt;
        }
    };
    match DdevdFit::new(z, config.kernel.clone(), plugin.h_final.clone()) {
        Ok(fit) => {
            let fit = fit.with_transform(t);
            attempt.report = Some(run_diagnostics(&fit, &plugin, config.q));
            attempt.fit = Some(fit);
        }
        Err(e) => attempt.note = Some(format!("{e}")),
    }
    attempt.plugin = Some(plugin);
    attempt
}

/// Identity scale first, then each candidate until diagnostics pass; the
/// best-scoring attempt (ties to the earliest) when none does.
pub fn recipe_fit(sample: &BlockedSample, config: &PluginConfig, candidates: &[TransformSpec]) -> Result<RecipeOutcome> {
    let mut attempts = alloc::vec![fit_on_scale(sample, config, TransformSpec::Identity)];
    if attempts[0].report.as_ref().is_some_and(|r| r.overall_pass) {
        return Ok(RecipeOutcome { chosen: 0, attempts, passed: true });
    }
    for &t in candidates {
        let a = fit_on_scale(sample, config, t);
        let pass = a.report.as_ref().is_some_and(|r| r.overall_pass);
        attempts.push(a);
        if pass {
            let chosen = attempts.len() - 1;
            return Ok(RecipeOutcome { chosen, attempts, passed: true });
        }
    }
    let mut chosen = None;
    let mut best = 0;
    for (i, a) in attempts.iter().enumerate() {
        if a.fit.is_none() {
            continue;
        }
        let score = a.report.as_ref().map_or(0, |r| r.passes());
        if chosen.is_none() || score > best {
            chosen = Some(i);
            best = score;
        }
    }
    let chosen = chosen.ok_or_else(|| {
        Error::InvalidInput(attempts.iter().filter_map(|a| a.note.clone()).collect::<Vec<_>>().join("; "))
    })?;
    Ok(RecipeOutcome { chosen, attempts, passed: false })
}

/// T^{-1}(F_Z^{-1}(1 - 1/T_ret)) from a fit on the working scale.
pub fn return_level(fit: &DdevdFit, t: &TransformSpec, t_ret: f64) -> Result<f64> {
    if !(t_ret > 1.0) {
        return Err(Error::InvalidInput(format!("return period {t_ret} must exceed 1")));
    }
    Ok(t.inverse(ddevd_quantile(fit, 1.0 - 1.0 / t_ret)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{sample_blocks, Builtin};
    use crate::estimator::BandwidthVector;
    use crate::kernels::KernelSpec;
    use alloc::vec;
    use proptest::prelude::*;

    fn fit_of(sample: BlockedSample, h: f64) -> DdevdFit {
        let m = sample.m();
        DdevdFit::new(sample, KernelSpec::gaussian(), BandwidthVector::uniform(h, m).unwrap()).unwrap()
    }

    #[test]
    fn round_trips_and_domains() {
        let ts = [
            TransformSpec::Identity,
            TransformSpec::Log,
            TransformSpec::BoxCox { lambda: 0.0, shift: 1.0 },
            TransformSpec::BoxCox { lambda: 0.5, shift: 0.0 },
            TransformSpec::Affine { scale: 3.0, offset: -1.0 },
        ];
        for t in ts {
            t.validate_on(0.5, 50.0).unwrap();
        }
        assert!(TransformSpec::Log.validate_on(-1.0, 2.0).is_err());
        assert!(TransformSpec::Affine { scale: -1.0, offset: 0.0 }.validate_on(0.0, 1.0).is_err());
    }

    #[test]
    fn composition_is_exact() {
        let s = sample_blocks(&Builtin::Exponential { rate: 1.0 }, &[30; 4], 2).unwrap();
        let fit = fit_of(s.clone(), 0.3);
        for y in [0.5, 1.0, 3.0] {
            assert_eq!(back_transformed_cdf(&fit, &TransformSpec::Identity, y).unwrap(), ddevd_eval(&fit, y));
        }
        let z = fit_of(s.map(log).unwrap(), 0.2);
        let z0: f64 = 0.7;
        assert_eq!(back_transformed_cdf(&z, &TransformSpec::Log, exp(z0)).unwrap(), ddevd_eval(&z, log(exp(z0))));
        assert!(matches!(back_transformed_cdf(&z, &TransformSpec::Log, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn return_level_examples() {
        let s = sample_blocks(&Builtin::Exponential { rate: 1.0 }, &[30; 4], 2).unwrap();
        let fit = fit_of(s, 0.3);
        let id = TransformSpec::Identity;
        assert_eq!(return_level(&fit, &id, 10.0).unwrap(), ddevd_quantile(&fit, 0.9).unwrap());
        assert_eq!(return_level(&fit, &id, 2.0).unwrap(), ddevd_quantile(&fit, 0.5).unwrap());
        assert!(return_level(&fit, &id, 100.0).unwrap() >= return_level(&fit, &id, 10.0).unwrap());
        assert!(return_level(&fit, &id, 1.0).is_err());
        let r = return_level(&fit, &id, 50.0).unwrap();
        assert!((back_transformed_cdf(&fit, &id, r).unwrap() - 0.98).abs() < 1e-6);
    }

    #[test]
    fn diverged_plugin_fails_convergence() {
        let s = sample_blocks(&Builtin::Exponential { rate: 1.0 }, &[100; 4], 4).unwrap();
        let fit = fit_of(s, 0.5);
        let plugin = PluginResult {
            h_final: BandwidthVector::uniform(0.5, 4).unwrap(),
            iterations: 3,
            converged: false,
            trajectory: Vec::new(),
            failure_mode: Some(FailureMode::Oscillation),
            note: None,
        };
        let r = run_diagnostics(&fit, &plugin, 0.9);
        assert!(!r.convergence_pass && !r.overall_pass);
        assert_eq!(r.status, DiagnosticsStatus::Fail);
    }

    #[test]
    fn wide_bandwidth_passes_spacing_and_spikiness() {
        let s = sample_blocks(&Builtin::Exponential { rate: 1.0 }, &[100; 4], 4).unwrap();
        let fit = fit_of(s, 2.0);
        let plugin = PluginResult {
            h_final: BandwidthVector::uniform(2.0, 4).unwrap(),
            iterations: 3,
            converged: true,
            trajectory: Vec::new(),
            failure_mode: None,
            note: None,
        };
        let r = run_diagnostics(&fit, &plugin, 0.9);
        assert!(r.spacing_pass && r.spikiness_pass && r.overall_pass);
        assert_eq!(r.tail_point_count, 40);
        let tiny = fit_of(fit.sample().clone(), 1e-4);
        let r = run_diagnostics(&tiny, &plugin, 0.9);
        assert!(!r.spacing_pass && !r.spikiness_pass);
    }

    #[test]
    fn few_tail_points_are_inconclusive() {
        let s = BlockedSample::new(vec![vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let fit = fit_of(s, 0.5);
        let plugin = PluginResult {
            h_final: BandwidthVector::uniform(0.5, 1).unwrap(),
            iterations: 1,
            converged: true,
            trajectory: Vec::new(),
            failure_mode: None,
            note: None,
        };
        assert_eq!(run_diagnostics(&fit, &plugin, 0.5).status, DiagnosticsStatus::Inconclusive);
    }

    #[test]
    fn default_candidates_follow_sign() {
        let pos = BlockedSample::new(vec![vec![1.0, 2.0]]).unwrap();
        assert_eq!(TransformSpec::default_candidates(&pos), vec![TransformSpec::Log]);
        let neg = BlockedSample::new(vec![vec![-1.0, 3.0]]).unwrap();
        match TransformSpec::default_candidates(&neg)[0] {
            TransformSpec::BoxCox { lambda, shift } => {
                assert_eq!(lambda, 0.0);
                assert!((shift - (1.0 + 4e-6)).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn back_transform_is_monotone(lambda in -1.0f64..1.5, y0 in 0.1f64..20.0, dy in 0.0f64..5.0) {
            let s = BlockedSample::new(vec![vec![1.0, 2.5, 4.0], vec![0.5, 3.0]]).unwrap();
            let t = TransformSpec::BoxCox { lambda, shift: 0.0 };
            let fit = fit_of(s.map(|y| t.forward(y)).unwrap(), 0.3);
            let a = back_transformed_cdf(&fit, &t, y0).unwrap();
            let b = back_transformed_cdf(&fit, &t, y0 + dy).unwrap();
            prop_assert!(b >= a);
        }
    }
}
