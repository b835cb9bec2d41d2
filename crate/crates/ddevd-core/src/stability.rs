//! The stability discriminant, its asymptotic boundary, Watson checks and
//! the phase-diagram experiments.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log, pow, round, sqrt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bandwidth::{integrate_over_tail, TailOptions};
use crate::distributions::{least_squares, normal_deviate, sample_blocks, BaseModel};
use crate::error::{Error, Result};
use crate::expansion::{CoefficientEvaluator, ModeChoice};
use crate::kernels::KernelSpec;
use crate::plugin::{plugin_iterate, PluginConfig};
use crate::quad::{integrate, QuadConfig};
use crate::special::{derive_seed, gamma as gamma_fn};

/// Tail integrals of one block size; D(m) = 2 m int_b0b2 + int_v2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscriminantParts {
    pub n: usize,
    pub q: f64,
    pub int_b0b2: f64,
    pub int_v2: f64,
    pub int_b1sq: f64,
}

impl DiscriminantParts {
    pub fn d(&self, m: usize) -> f64 {
        2.0 * m as f64 * self.int_b0b2 + self.int_v2
    }

    /// Largest stable m as a real number, when the bias integral is negative.
    pub fn m_star(&self) -> Option<f64> {
        if self.int_b0b2 < 0.0 {
            Some(-self.int_v2 / (2.0 * self.int_b0b2))
        } else {
            None
        }
    }

    /// Eigenvalues (a, a + m b) of the equal-size Hessian.
    pub fn eigenvalues(&self, m: usize) -> (f64, f64) {
        let a = self.d(m);
        (a, a + m as f64 * self.int_b1sq)
    }
}

fn large_opts() -> TailOptions {
    TailOptions { mode: ModeChoice::LargeN, ..TailOptions::default() }
}

pub fn discriminant_parts<M: BaseModel + ?Sized>(
    model: &M,
    kernel: &KernelSpec,
    n: usize,
    q: f64,
) -> Result<DiscriminantParts> {
    discriminant_parts_with(model, kernel, n, q, &large_opts())
}

pub fn discriminant_parts_with<M: BaseModel + ?Sized>(
    model: &M,
    kernel: &KernelSpec,
    n: usize,
    q: f64,
    opts: &TailOptions,
) -> Result<DiscriminantParts> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("block size {n} must exceed 1")));
    }
    if !kernel.is_zero_mean() {
        return Err(Error::InvalidInput(format!("kernel {} does not have zero mean", kernel.name())));
    }
    let ev = CoefficientEvaluator::new(n, kernel.moments(), opts.mode.resolve(n))?;
    let r = integrate_over_tail(model, q, 3, opts, |p, _, out| {
        let c = ev.at(p);
        out[0] = c.b0 * c.b2();
        out[1] = c.v2();
        out[2] = c.b1 * c.b1;
    })?;
    if !r.converged || r.value.iter().any(|v| !v.is_finite()) {
        let names = ["b0 b2", "V2", "b1^2"];
        let w = r.worst_component(&QuadConfig::with_rel_tol(opts.rel_tol));
        return Err(Error::Integration {
            coefficient: String::from(names[w]),
            detail: format!("value {:e}, error {:e}", r.value[w], r.error[w]),
        });
    }
    Ok(DiscriminantParts { n, q, int_b0b2: r.value[0], int_v2: r.value[1], int_b1sq: r.value[2] })
}

/// int (2 m b0 b2 + V2) over the q-tail.
pub fn discriminant_d<M: BaseModel + ?Sized>(model: &M, kernel: &KernelSpec, m: usize, n: usize, q: f64) -> Result<f64> {
    Ok(discriminant_parts(model, kernel, n, q)?.d(m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticConstants {
    pub gamma: f64,
    pub tail_scale: f64,
    pub cb: f64,
    /// Closed form D mu_{K^2,1}^2 Gamma(gamma/2 + 1) 2^(-1 - gamma/2).
    pub cv: f64,
    /// Plateau of n^(gamma/2 - 1) int V2, extrapolated like cb.
    pub cv_numeric: f64,
    /// cv / (2 cb); None when cb <= 0.
    pub c_boundary: Option<f64>,
    pub warning: Option<String>,
}

impl AsymptoticConstants {
    pub fn m_max(&self, n: f64) -> Option<f64> {
        self.c_boundary.map(|c| c * pow(n, 1.0 + self.gamma / 2.0))
    }
}

pub const CB_SIZES: [usize; 4] = [200, 400, 800, 1600];

pub fn cv_closed_form(tail_scale: f64, gamma: f64, kernel: &KernelSpec) -> f64 {
    let mu = kernel.moments().mu_k2_1;
    tail_scale * mu * mu * gamma_fn(gamma / 2.0 + 1.0) * pow(2.0, -1.0 - gamma / 2.0)
}

pub fn asymptotic_constants<M: BaseModel + ?Sized>(model: &M, kernel: &KernelSpec, q: f64) -> Result<AsymptoticConstants> {
    let g = model.gamma().ok_or_else(|| Error::Domain(format!("{}: extreme value index unknown", model.name())))?;
    let d = model.tail_scale().ok_or_else(|| Error::Domain(format!("{}: tail scale unknown", model.name())))?;
    if !(g > -0.5) {
        return Err(Error::Domain(format!("gamma = {g} is not above -1/2")));
    }
    let mut cb_seq = Vec::new();
    let mut cv_seq = Vec::new();
    for &n in &CB_SIZES {
        let p = discriminant_parts(model, kernel, n, q)?;
        let nf = n as f64;
        cb_seq.push(-pow(nf, g) * p.int_b0b2);
        cv_seq.push(pow(nf, g / 2.0 - 1.0) * p.int_v2);
    }
    let k = CB_SIZES.len();
    let cb = 2.0 * cb_seq[k - 1] - cb_seq[k - 2];
    let cv_numeric = 2.0 * cv_seq[k - 1] - cv_seq[k - 2];
    let cv = cv_closed_form(d, g, kernel);
    let (c_boundary, warning) = if cb > 0.0 {
        (Some(cv / (2.0 * cb)), None)
    } else {
        (None, Some(format!("C_b = {cb:e} is not positive; the boundary is undefined")))
    };
    Ok(AsymptoticConstants { gamma: g, tail_scale: d, cb, cv, cv_numeric, c_boundary, warning })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub model: String,
    pub n: usize,
    pub m: usize,
    pub q: f64,
    pub d: f64,
    pub eig_small: f64,
    pub eig_large: f64,
    pub constants: Option<AsymptoticConstants>,
    pub m_max: Option<f64>,
    pub stable: bool,
    pub caveat: Option<String>,
}

pub fn gumbel_caveat<M: BaseModel + ?Sized>(model: &M) -> Option<String> {
    match model.gamma() {
        Some(0.0) if model.name().starts_with("normal") => {
            Some(String::from("gumbel linear form used; log-correction unmodeled"))
        }
        Some(0.0) => Some(String::from("approximate: exponential-like gumbel tail")),
        _ => None,
    }
}

pub fn stability_report<M: BaseModel + ?Sized>(
    model: &M,
    kernel: &KernelSpec,
    m: usize,
    n: usize,
    q: f64,
) -> Result<StabilityReport> {
    let parts = discriminant_parts(model, kernel, n, q)?;
    let (eig_small, eig_large) = parts.eigenvalues(m);
    let constants = asymptotic_constants(model, kernel, q).ok();
    let m_max = constants.as_ref().and_then(|c| c.m_max(n as f64));
    let d = parts.d(m);
    Ok(StabilityReport {
        model: model.name(),
        n,
        m,
        q,
        d,
        eig_small,
        eig_large,
        constants,
        m_max,
        stable: d > 0.0,
        caveat: gumbel_caveat(model),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WatsonVariant {
    Plain,
    /// exp(-c n t^2) with the given c.
    SquaredExponent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WatsonRow {
    pub n: f64,
    pub numeric: f64,
    pub leading: f64,
    pub ratio: f64,
}

/// Numeric int_0^upper e^{-n t} t^k g(t) dt (or e^{-c n t^2}) against the
/// leading Watson term.
pub fn watson_check<G: Fn(f64) -> f64>(
    k: f64,
    g: G,
    n_values: &[f64],
    variant: WatsonVariant,
    c: f64,
    upper: f64,
) -> Vec<WatsonRow> {
    let g0 = g(0.0);
    n_values
        .iter()
        .map(|&n| {
            let scale = match variant {
                WatsonVariant::Plain => 1.0 / n,
                WatsonVariant::SquaredExponent => 1.0 / sqrt(c * n),
            };
            let mut bp = vec![0.0];
            let mut x = scale * 1e-6;
            while x < upper {
                bp.push(x);
                x *= 2.0;
            }
            bp.push(upper);
            let cfg = QuadConfig { rel_tol: 1e-12, abs_tol: 1e-300, max_intervals: 4000 };
            let numeric = integrate(
                |t| {
                    let e = match variant {
                        WatsonVariant::Plain => -n * t,
                        WatsonVariant::SquaredExponent => -c * n * t * t,
                    };
                    exp(e) * pow(t, k) * g(t)
                },
                &bp,
                &cfg,
            )
            .value[0];
            let leading = match variant {
                WatsonVariant::Plain => g0 * gamma_fn(k + 1.0) / pow(n, k + 1.0),
                WatsonVariant::SquaredExponent => g0 * gamma_fn((k + 1.0) / 2.0) / (2.0 * pow(c * n, (k + 1.0) / 2.0)),
            };
            WatsonRow { n, numeric, leading, ratio: numeric / leading }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMode {
    AnalyticD,
    PluginEmpirical,
}

#[derive(Debug, Clone)]
pub struct PhaseConfig {
    pub mode: PhaseMode,
    pub replicates: usize,
    pub threshold: f64,
    pub q: f64,
    pub plugin: PluginConfig,
    pub seed: u64,
}

impl PhaseConfig {
    pub fn analytic(q: f64, kernel: KernelSpec) -> Self {
        Self { mode: PhaseMode::AnalyticD, replicates: 1, threshold: 0.5, q, plugin: PluginConfig::new(q, kernel), seed: 0 }
    }

    pub fn empirical(q: f64, kernel: KernelSpec, replicates: usize, seed: u64) -> Self {
        Self { mode: PhaseMode::PluginEmpirical, replicates, threshold: 0.5, q, plugin: PluginConfig::new(q, kernel), seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseCell {
    pub n: usize,
    pub m: usize,
    pub replicates: usize,
    pub stable_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagram {
    pub model: String,
    pub gamma: Option<f64>,
    pub mode: PhaseMode,
    pub cells: Vec<PhaseCell>,
    /// (n, m*) for every n with a transition inside the m grid.
    pub transitions: Vec<(usize, f64)>,
    pub excluded: Vec<usize>,
    /// (slope, intercept) of log m* against log n, with at least 4 points.
    pub fit: Option<(f64, f64)>,
    pub threshold: f64,
    pub theory_slope: Option<f64>,
    pub warnings: Vec<String>,
    pub caveat: Option<String>,
}

/// Analytic cells for one n; D is affine in m so one quadrature serves the row.
pub fn analytic_row<M: BaseModel + ?Sized>(
    model: &M,
    kernel: &KernelSpec,
    n: usize,
    m_grid: &[usize],
    q: f64,
) -> Result<Vec<PhaseCell>> {
    let parts = discriminant_parts(model, kernel, n, q)?;
    Ok(m_grid
        .iter()
        .map(|&m| PhaseCell { n, m, replicates: 1, stable_fraction: if parts.d(m) > 0.0 { 1.0 } else { 0.0 } })
        .collect())
}

/// Seed of replicate `rep` in cell (n, m).
pub fn cell_seed(seed: u64, n: usize, m: usize, rep: usize) -> u64 {
    derive_seed(seed, &[n as u64, m as u64, rep as u64])
}

/// Whether the plug-in converges on one replicate of cell (n, m).
pub fn empirical_replicate<M: BaseModel + ?Sized>(
    model: &M,
    sizes: &[usize],
    config: &PhaseConfig,
    data_seed: u64,
) -> Result<bool> {
    let sample = sample_blocks(model, sizes, data_seed)?;
    Ok(plugin_iterate(&sample, &config.plugin)?.converged)
}

pub fn empirical_cell<M: BaseModel + ?Sized>(model: &M, n: usize, m: usize, config: &PhaseConfig) -> Result<PhaseCell> {
    let sizes = vec![n; m];
    let mut ok = 0;
    for rep in 0..config.replicates {
        if empirical_replicate(model, &sizes, config, cell_seed(config.seed, n, m, rep))? {
            ok += 1;
        }
    }
    Ok(PhaseCell { n, m, replicates: config.replicates, stable_fraction: ok as f64 / config.replicates as f64 })
}

/// Builds transitions and the boundary fit from classified cells.
pub fn summarize_phase<M: BaseModel + ?Sized>(model: &M, mut cells: Vec<PhaseCell>, config: &PhaseConfig) -> PhaseDiagram {
    cells.sort_by_key(|c| (c.n, c.m));
    let mut ns: Vec<usize> = cells.iter().map(|c| c.n).collect();
    ns.dedup();
    let mut transitions = Vec::new();
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    for &n in &ns {
        let row: Vec<&PhaseCell> = cells.iter().filter(|c| c.n == n).collect();
        let stable = |c: &PhaseCell| c.stable_fraction >= config.threshold;
        let first_unstable = row.iter().position(|c| !stable(c));
        match first_unstable {
            Some(j) if j > 0 => {
                let mstar = sqrt(row[j - 1].m as f64 * row[j].m as f64);
                transitions.push((n, mstar));
            }
            _ => {
                excluded.push(n);
                warnings.push(format!("n = {n}: no transition inside the m grid"));
            }
        }
    }
    let fit = if transitions.len() >= 4 {
        let pts: Vec<(f64, f64)> = transitions.iter().map(|&(n, m)| (log(n as f64), log(m))).collect();
        least_squares(&pts)
    } else {
        warnings.push(format!("only {} transition points; boundary fit needs 4", transitions.len()));
        None
    };
    PhaseDiagram {
        model: model.name(),
        gamma: model.gamma(),
        mode: config.mode,
        cells,
        transitions,
        excluded,
        fit,
        threshold: config.threshold,
        theory_slope: model.gamma().map(|g| 1.0 + g / 2.0),
        warnings,
        caveat: gumbel_caveat(model),
    }
}

fn check_grid(grid: &[usize], what: &str) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!("{what} grid must be nonempty and strictly ascending")));
    }
    Ok(())
}

pub fn phase_diagram<M: BaseModel + ?Sized>(
    model: &M,
    n_grid: &[usize],
    m_grid: &[usize],
    config: &PhaseConfig,
) -> Result<PhaseDiagram> {
    check_grid(n_grid, "n")?;
    check_grid(m_grid, "m")?;
    let mut cells = Vec::new();
    for &n in n_grid {
        match config.mode {
            PhaseMode::AnalyticD => cells.extend(analytic_row(model, &config.plugin.kernel, n, m_grid, config.q)?),
            PhaseMode::PluginEmpirical => {
                for &m in m_grid {
                    cells.push(empirical_cell(model, n, m, config)?);
                }
            }
        }
    }
    let mut config = config.clone();
    if config.mode == PhaseMode::AnalyticD {
        config.replicates = 1;
    }
    Ok(summarize_phase(model, cells, &config))
}

/// Block sizes round(n_mean (1 + rel_sd Z)), clipped below at 2.
pub fn perturbed_sizes(n_mean: usize, m: usize, rel_sd: f64, seed: u64) -> Vec<usize> {
    if rel_sd == 0.0 {
        return vec![n_mean; m];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| {
            let v = round(n_mean as f64 * (1.0 + rel_sd * normal_deviate(&mut rng)));
            if v < 2.0 {
                2
            } else {
                v as usize
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaryingRow {
    pub rel_sd: f64,
    pub replicates: usize,
    pub stable_fraction: f64,
}

/// Sizes for replicate `rep`; data seeds match the equal-size cell (n_mean, m).
pub fn varying_replicate<M: BaseModel + ?Sized>(
    model: &M,
    n_mean: usize,
    m: usize,
    rel_sd: f64,
    rep: usize,
    config: &PhaseConfig,
) -> Result<bool> {
    let seed = cell_seed(config.seed, n_mean, m, rep);
    let sizes = perturbed_sizes(n_mean, m, rel_sd, derive_seed(seed, &[0x5153]));
    empirical_replicate(model, &sizes, config, seed)
}

pub fn varying_blocks_experiment<M: BaseModel + ?Sized>(
    model: &M,
    n_mean: usize,
    rel_sd_grid: &[f64],
    m: usize,
    config: &PhaseConfig,
) -> Result<Vec<VaryingRow>> {
    let mut rows = Vec::new();
    for &rel_sd in rel_sd_grid {
        let mut ok = 0;
        for rep in 0..config.replicates {
            if varying_replicate(model, n_mean, m, rel_sd, rep, config)? {
                ok += 1;
            }
        }
        rows.push(VaryingRow { rel_sd, replicates: config.replicates, stable_fraction: ok as f64 / config.replicates as f64 });
    }
    Ok(rows)
}

/// Largest rise of stable_fraction between consecutive rel_sd levels.
pub fn max_increase(rows: &[VaryingRow]) -> f64 {
    rows.windows(2).map(|w| w[1].stable_fraction - w[0].stable_fraction).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandwidth::{assemble_mise_quadratic, min_eigenvalue, MiseQuadratic, QStructure};
    use crate::distributions::Builtin;
    use core::f64::consts::PI;

    fn exp1() -> Builtin {
        Builtin::Exponential { rate: 1.0 }
    }

    #[test]
    fn exponential_small_m_is_stable_and_d_falls_with_m() {
        let k = KernelSpec::gaussian();
        let p = discriminant_parts(&exp1(), &k, 200, 0.9).unwrap();
        assert!(p.d(5) > 0.0);
        assert!(p.int_b0b2 < 0.0);
        assert!(p.d(6) < p.d(5) && p.d(50) < p.d(6));
    }

    #[test]
    fn eigenvalues_match_assembled_q() {
        let k = KernelSpec::gaussian();
        let p = discriminant_parts_with(&exp1(), &k, 50, 0.9, &TailOptions::default()).unwrap();
        let mq: MiseQuadratic = assemble_mise_quadratic(&exp1(), &[50; 7], &k, 0.9).unwrap();
        let (a, l) = p.eigenvalues(7);
        if let QStructure::Toeplitz { a: qa, b: qb } = mq.structure {
            assert!((a - qa).abs() < 1e-6 * qa.abs());
            assert!((l - (qa + 7.0 * qb)).abs() < 1e-6 * l.abs());
        } else {
            panic!("equal sizes must give Toeplitz structure");
        }
        assert!((min_eigenvalue(&mq) - a.min(l)).abs() < 1e-6 * a.abs());
    }

    #[test]
    fn cv_examples() {
        let k = KernelSpec::gaussian();
        assert!((cv_closed_form(1.0, 0.0, &k) - 1.0 / (2.0 * PI)).abs() < 1e-10);
        let r = cv_closed_form(1.0, 1.0, &k) / (cv_closed_form(1.0, 0.0, &k) * pow(2.0, -0.5));
        assert!((r - sqrt(PI) / 2.0).abs() < 1e-10);
    }

    #[test]
    fn exponential_cb_positive() {
        let c = asymptotic_constants(&exp1(), &KernelSpec::gaussian(), 0.9).unwrap();
        assert!(c.cb > 0.0);
        assert!(c.c_boundary.unwrap() > 0.0);
        assert!(c.warning.is_none());
    }

    #[test]
    fn watson_examples() {
        let t = 5.0;
        let rows = watson_check(0.0, |_| 1.0, &[10.0, 100.0, 1000.0], WatsonVariant::Plain, 1.0, t);
        for r in &rows {
            let exact = (1.0 - exp(-r.n * t)) / r.n;
            assert!((r.numeric / exact - 1.0).abs() < 1e-10);
        }
        assert!((rows[2].ratio - 1.0).abs() < 1e-10);
        let r = watson_check(1.0, |_| 1.0, &[1e4], WatsonVariant::Plain, 1.0, 1.0);
        assert!((r[0].ratio - 1.0).abs() < 1e-3);
        let r = watson_check(1.0, |_| 1.0, &[1e4], WatsonVariant::SquaredExponent, 1.0, 1.0);
        assert!((r[0].numeric * 2.0 * 1e4 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn phase_summary_geometric_mean() {
        let cfg = PhaseConfig::analytic(0.9, KernelSpec::gaussian());
        let mut cells = Vec::new();
        for (i, n) in [10usize, 20, 40, 80].iter().enumerate() {
            for m in [1usize, 2, 4, 8, 16, 32] {
                let stable = m <= (1 << i);
                cells.push(PhaseCell { n: *n, m, replicates: 1, stable_fraction: if stable { 1.0 } else { 0.0 } });
            }
        }
        let d = summarize_phase(&exp1(), cells, &cfg);
        assert_eq!(d.transitions[0], (10, sqrt(2.0)));
        let (slope, _) = d.fit.unwrap();
        assert!((slope - 1.0).abs() < 1e-12);
        assert!(d.excluded.is_empty());
    }

    #[test]
    fn perturbed_sizes_contract() {
        assert_eq!(perturbed_sizes(50, 4, 0.0, 1), vec![50; 4]);
        let s = perturbed_sizes(10, 500, 2.0, 3);
        assert!(s.iter().all(|&n| n >= 2));
        assert_eq!(perturbed_sizes(100, 20, 0.3, 9), perturbed_sizes(100, 20, 0.3, 9));
    }

    #[test]
    fn zero_spread_matches_equal_size_cell() {
        let mut cfg = PhaseConfig::empirical(0.9, KernelSpec::gaussian(), 2, 17);
        cfg.plugin.max_iter = 5;
        let model = exp1();
        let cell = empirical_cell(&model, 60, 3, &cfg).unwrap();
        let rows = varying_blocks_experiment(&model, 60, &[0.0], 3, &cfg).unwrap();
        assert_eq!(rows[0].stable_fraction, cell.stable_fraction);
    }
}
