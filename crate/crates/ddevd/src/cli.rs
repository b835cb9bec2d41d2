//! Command-line surface.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ddevd_core::evaluation::{IseConfig, Selector};
use ddevd_core::plugin::{plugin_iterate, KdePilot};
use ddevd_core::stability::{stability_report, PhaseConfig, PhaseMode};
use ddevd_core::transforms::{fit_on_scale, recipe_fit, return_level, RecipeOutcome, ScaleAttempt, TransformSpec};
use ddevd_core::{builtin_model, sample_blocks, BlockedSample, Builtin};

use crate::config::{PhaseModeOption, RunConfig, TransformOption};
use crate::error::{CliError, CliResult};
use crate::io::{csv_text, parse_blocked_csv, write_blocked_csv};
use crate::parallel;
use crate::report::*;

#[derive(Parser, Debug)]
#[command(name = "ddevd", version, about = "Kernel estimation of block-maximum distributions")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// JSON configuration file; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// CDF kernel: gaussian or epanechnikov
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    /// Quantile level defining the tail
    #[arg(long, global = true)]
    pub q: Option<f64>,
    /// Plug-in damping in (0, 1]
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Plug-in relative-change tolerance
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long = "max-iter", global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap on worker threads
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory for reports and tables
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the JSON report instead of the text summary
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// Base model: normal, exponential, pareto, cauchy, uniform, lognormal
    #[arg(long)]
    pub model: Option<String>,
    /// Model parameters, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Vec<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct BlockArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Explicit block sizes, comma separated
    #[arg(long = "block-sizes", value_delimiter = ',')]
    pub block_sizes: Vec<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Plug-in fit with diagnostics and return levels
    Fit {
        #[arg(long)]
        input: Option<PathBuf>,
        /// none, log or box-cox
        #[arg(long)]
        transform: Option<String>,
        /// Refit on transformed scales when diagnostics fail
        #[arg(long = "auto-transform")]
        auto_transform: bool,
        #[arg(long = "return-periods", value_delimiter = ',')]
        return_periods: Vec<f64>,
    },
    /// Plug-in bandwidth trajectory
    Bandwidth {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Stability discriminant and asymptotic boundary
    Stability {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        blocks: BlockArgs,
        /// Use a pilot estimate from this data instead of a model
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Stability classification over an (n, m) grid
    PhaseDiagram {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "n-grid", value_delimiter = ',')]
        n_grid: Vec<usize>,
        #[arg(long = "m-grid", value_delimiter = ',')]
        m_grid: Vec<usize>,
        /// analytic or plugin
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Monte Carlo q-MISE of bandwidth selectors
    Mise {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        blocks: BlockArgs,
        /// staircase, analytic, plugin, fixed (comma separated)
        #[arg(long, value_delimiter = ',')]
        selector: Vec<String>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Convergence, spacing and spikiness checks
    Diagnose {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        transform: Option<String>,
    },
    /// Synthetic blocked data as CSV
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        blocks: BlockArgs,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_model(cfg: &mut RunConfig, m: ModelArgs) {
    set(&mut cfg.model, m.model);
    if !m.params.is_empty() {
        cfg.model_params = m.params;
    }
}

fn set_blocks(cfg: &mut RunConfig, b: BlockArgs) {
    if b.n.is_some() {
        cfg.n = b.n;
    }
    if b.m.is_some() {
        cfg.m = b.m;
    }
    if !b.block_sizes.is_empty() {
        cfg.block_sizes = b.block_sizes;
    }
}

impl Cli {
    /// The resolved configuration: file values, then flags.
    pub fn resolve(self) -> CliResult<(RunConfig, bool)> {
        let c = self.common;
        let mut cfg = match &c.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.kernel, c.kernel);
        set(&mut cfg.q, c.q);
        set(&mut cfg.lambda, c.lambda);
        set(&mut cfg.epsilon, c.epsilon);
        set(&mut cfg.max_iter, c.max_iter);
        set(&mut cfg.seed, c.seed);
        if c.threads.is_some() {
            cfg.threads = c.threads;
        }
        if c.out.is_some() {
            cfg.out = c.out;
        }
        let name = match self.command {
            Command::Fit { input, transform, auto_transform, return_periods } => {
                if input.is_some() {
                    cfg.input = input;
                }
                if let Some(t) = transform {
                    cfg.transform = TransformOption::parse(&t)?;
                }
                cfg.auto_transform |= auto_transform;
                if !return_periods.is_empty() {
                    cfg.return_periods = return_periods;
                }
                "fit"
            }
            Command::Bandwidth { input } => {
                if input.is_some() {
                    cfg.input = input;
                }
                "bandwidth"
            }
            Command::Stability { model, blocks, input } => {
                set_model(&mut cfg, model);
                set_blocks(&mut cfg, blocks);
                if input.is_some() {
                    cfg.input = input;
                }
                "stability"
            }
            Command::PhaseDiagram { model, n_grid, m_grid, mode, replicates } => {
                set_model(&mut cfg, model);
                if !n_grid.is_empty() {
                    cfg.n_grid = n_grid;
                }
                if !m_grid.is_empty() {
                    cfg.m_grid = m_grid;
                }
                if let Some(mode) = mode {
                    cfg.mode = match mode.as_str() {
                        "analytic" => PhaseModeOption::Analytic,
                        "plugin" => PhaseModeOption::Plugin,
                        other => return Err(CliError::Config(format!("unknown mode `{other}` (analytic, plugin)"))),
                    };
                }
                set(&mut cfg.replicates, replicates);
                "phase-diagram"
            }
            Command::Mise { model, blocks, selector, h, replicates } => {
                set_model(&mut cfg, model);
                set_blocks(&mut cfg, blocks);
                if !selector.is_empty() {
                    cfg.selectors = selector;
                }
                if h.is_some() {
                    cfg.h = h;
                }
                set(&mut cfg.replicates, replicates);
                "mise"
            }
            Command::Diagnose { input, transform } => {
                if input.is_some() {
                    cfg.input = input;
                }
                if let Some(t) = transform {
                    cfg.transform = TransformOption::parse(&t)?;
                }
                "diagnose"
            }
            Command::Simulate { model, blocks } => {
                set_model(&mut cfg, model);
                set_blocks(&mut cfg, blocks);
                "simulate"
            }
        };
        if !cfg.command.is_empty() && cfg.command != name {
            return Err(CliError::Config(format!("configuration file is for `{}`, not `{name}`", cfg.command)));
        }
        cfg.command = name.to_string();
        cfg.validate()?;
        Ok((cfg, c.json))
    }
}

/// What a command produced.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: String,
    /// Main machine-readable report.
    pub report: String,
    /// (file name, contents) written under the output directory.
    pub artifacts: Vec<(String, String)>,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DIAGNOSTICS: i32 = 2;

fn model_of(cfg: &RunConfig) -> CliResult<Builtin> {
    Ok(builtin_model(&cfg.model, &cfg.model_params)?)
}

fn input_sample(cfg: &RunConfig) -> CliResult<BlockedSample> {
    let path = cfg.input.as_ref().ok_or_else(|| CliError::Config("--input is required".into()))?;
    parse_blocked_csv(path)
}

fn json<T: serde::Serialize>(v: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

pub fn run_command(cfg: &RunConfig) -> CliResult<Outcome> {
    parallel::with_threads(cfg.threads, || match cfg.command.as_str() {
        "fit" => cmd_fit(cfg),
        "bandwidth" => cmd_bandwidth(cfg),
        "stability" => cmd_stability(cfg),
        "phase-diagram" => cmd_phase(cfg),
        "mise" => cmd_mise(cfg),
        "diagnose" => cmd_diagnose(cfg),
        "simulate" => cmd_simulate(cfg),
        other => Err(CliError::Config(format!("unknown command `{other}`"))),
    })?
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn diagnostics_text(out: &mut String, d: &DiagnosticsJson) {
    let mark = |b: bool| if b { "pass" } else { "fail" };
    let _ = writeln!(
        out,
        "convergence: {} (failure mode: {})",
        mark(d.convergence_pass),
        d.failure_mode.unwrap_or("none")
    );
    let _ = writeln!(
        out,
        "spacing:     {} (h* = {:.6}, median tail spacing = {}, ratio = {})",
        mark(d.spacing_pass),
        d.h_star,
        d.median_tail_spacing.map_or("n/a".into(), |v| format!("{v:.6}")),
        d.spacing_ratio.map_or("n/a".into(), |v| format!("{v:.4}"))
    );
    let _ = writeln!(
        out,
        "spikiness:   {} ({} tail modes over {} tail points)",
        mark(d.spikiness_pass),
        d.tail_mode_count,
        d.tail_point_count
    );
    let _ = writeln!(out, "overall:     {}", d.status);
}

fn cmd_fit(cfg: &RunConfig) -> CliResult<Outcome> {
    let sample = input_sample(cfg)?;
    let plugin_cfg = cfg.plugin_config()?;
    let outcome = if cfg.auto_transform {
        let candidates = match cfg.transform {
            TransformOption::None => TransformSpec::default_candidates(&sample),
            t => vec![t.resolve(&sample)],
        };
        recipe_fit(&sample, &plugin_cfg, &candidates)?
    } else {
        let attempt = fit_on_scale(&sample, &plugin_cfg, cfg.transform.resolve(&sample));
        if attempt.fit.is_none() {
            return Err(CliError::Config(attempt.note.unwrap_or_else(|| "fit failed".into())));
        }
        let passed = attempt.report.as_ref().is_some_and(|r| r.overall_pass);
        RecipeOutcome { chosen: 0, attempts: vec![attempt], passed }
    };
    let chosen: &ScaleAttempt = outcome.chosen_attempt();
    let fit = outcome.fit();
    let t = outcome.transform();
    let return_levels = cfg
        .return_periods
        .iter()
        .map(|&p| match return_level(fit, &t, p) {
            Ok(v) => ReturnLevel { period: p, level: Some(v), error: None },
            Err(e) => ReturnLevel { period: p, level: None, error: Some(e.to_string()) },
        })
        .collect::<Vec<_>>();
    let report = FitReport {
        config: cfg.clone(),
        sample: SampleSummary::from(&sample),
        kernel: fit.kernel().name().to_string(),
        transform: t.name(),
        bandwidths: fit.bandwidths().as_slice().to_vec(),
        diagnostics_pass: outcome.passed,
        attempts: outcome.attempts.iter().map(AttemptReport::from).collect(),
        plugin: chosen.plugin.as_ref().map(PluginReport::from),
        return_levels,
    };
    let mut s = String::new();
    let _ = writeln!(s, "scale: {}", report.transform);
    let _ = writeln!(s, "bandwidths: {}", fmt_vec(&report.bandwidths));
    if let Some(d) = chosen.report.as_ref() {
        diagnostics_text(&mut s, &DiagnosticsJson::from(d));
    }
    for r in &report.return_levels {
        match r.level {
            Some(v) => {
                let _ = writeln!(s, "return level T = {}: {v:.6}", r.period);
            }
            None => {
                let _ = writeln!(s, "return level T = {}: unavailable ({})", r.period, r.error.as_deref().unwrap_or(""));
            }
        }
    }
    let text = json(&report)?;
    Ok(Outcome {
        exit_code: if outcome.passed { EXIT_OK } else { EXIT_DIAGNOSTICS },
        summary: s,
        report: text.clone(),
        artifacts: vec![("fit.json".into(), text)],
    })
}

fn cmd_bandwidth(cfg: &RunConfig) -> CliResult<Outcome> {
    let sample = input_sample(cfg)?;
    let r = plugin_iterate(&sample, &cfg.plugin_config()?)?;
    let plugin = PluginReport::from(&r);
    let mut s = String::new();
    let _ = writeln!(s, "{:>5} {:>14} {:>12} {:>14}", "iter", "|h|", "rel-change", "min-eig");
    for st in &plugin.trajectory {
        let _ = writeln!(
            s,
            "{:>5} {:>14.6e} {:>12} {:>14}",
            st.iteration,
            st.h_norm,
            st.rel_change.map_or("-".into(), |v| format!("{v:.3e}")),
            st.min_eig.map_or("-".into(), |v| format!("{v:.6e}"))
        );
    }
    let _ = writeln!(s, "converged: {} after {} iterations", plugin.converged, plugin.iterations);
    if let Some(f) = plugin.failure_mode {
        let _ = writeln!(s, "failure mode: {f}");
    }
    let _ = writeln!(s, "h: {}", fmt_vec(&plugin.h_final));
    let rows: Vec<_> = plugin
        .trajectory
        .iter()
        .map(|st| (st.iteration, st.h_norm, st.rel_change, st.min_eig))
        .collect();
    #[derive(serde::Serialize)]
    struct Row {
        iteration: usize,
        h_norm: f64,
        rel_change: Option<f64>,
        min_eig: Option<f64>,
    }
    let rows: Vec<Row> =
        rows.into_iter().map(|(iteration, h_norm, rel_change, min_eig)| Row { iteration, h_norm, rel_change, min_eig }).collect();
    let report = BandwidthReport { config: cfg.clone(), sample: SampleSummary::from(&sample), plugin };
    let text = json(&report)?;
    Ok(Outcome {
        exit_code: EXIT_OK,
        summary: s,
        report: text.clone(),
        artifacts: vec![("bandwidth.json".into(), text), ("trajectory.csv".into(), csv_text(&rows)?)],
    })
}

fn cmd_stability(cfg: &RunConfig) -> CliResult<Outcome> {
    let kernel = cfg.kernel_spec()?;
    let report = match &cfg.input {
        Some(_) => {
            let sample = input_sample(cfg)?;
            let r = plugin_iterate(&sample, &cfg.plugin_config()?)?;
            let pilot = KdePilot::new(&sample, &r.h_final, &kernel)?;
            let sizes = sample.block_sizes();
            let n = cfg.n.unwrap_or_else(|| (sizes.iter().sum::<usize>() as f64 / sizes.len() as f64).round() as usize);
            stability_report(&pilot, &kernel, cfg.m.unwrap_or(sample.m()), n, cfg.q)?
        }
        None => {
            let model = model_of(cfg)?;
            stability_report(&model, &kernel, cfg.m.unwrap_or(1), cfg.n.unwrap_or(2), cfg.q)?
        }
    };
    let j = StabilityJson::new(cfg.clone(), &report);
    let mut s = String::new();
    let _ = writeln!(s, "model: {} (n = {}, m = {}, q = {})", j.model, j.n, j.m, j.q);
    let _ = writeln!(s, "D = {:.6e}  eigenvalues: a = {:.6e}, a + m b = {:.6e}", j.d, j.eig_small, j.eig_large);
    let _ = writeln!(s, "stable: {}", j.stable);
    if let Some(c) = &j.constants {
        let _ = writeln!(
            s,
            "gamma = {:.4}, Cb = {:.6e}, Cv = {:.6e}, C = {}",
            c.gamma,
            c.cb,
            c.cv,
            c.c_boundary.map_or("undefined".into(), |v| format!("{v:.6e}"))
        );
    }
    if let Some(mm) = j.m_max {
        let _ = writeln!(s, "predicted m_max(n) = {mm:.3}");
    }
    if let Some(c) = &j.caveat {
        let _ = writeln!(s, "note: {c}");
    }
    let text = json(&j)?;
    Ok(Outcome { exit_code: EXIT_OK, summary: s, report: text.clone(), artifacts: vec![("stability.json".into(), text)] })
}

fn cmd_phase(cfg: &RunConfig) -> CliResult<Outcome> {
    let model = model_of(cfg)?;
    let kernel = cfg.kernel_spec()?;
    let mut pc = match cfg.mode {
        PhaseModeOption::Analytic => PhaseConfig::analytic(cfg.q, kernel),
        PhaseModeOption::Plugin => PhaseConfig::empirical(cfg.q, kernel, cfg.replicates, cfg.seed),
    };
    pc.plugin = cfg.plugin_config()?;
    if pc.mode == PhaseMode::AnalyticD {
        pc.replicates = 1;
    }
    let d = parallel::phase_diagram(&model, &cfg.n_grid, &cfg.m_grid, &pc)?;
    let summary = PhaseSummary::new(cfg.clone(), &d);
    let rows = phase_rows(&d);
    let mut s = String::new();
    let _ = writeln!(s, "model: {} ({} mode), {} cells", summary.model, summary.mode, rows.len());
    for (n, m) in &summary.transitions {
        let _ = writeln!(s, "  n = {n}: m* = {m:.3}");
    }
    match (summary.slope, summary.theory_slope) {
        (Some(sl), Some(th)) => {
            let _ = writeln!(s, "boundary slope {sl:.4} (theory {th:.4}), intercept {:.4}", summary.intercept.unwrap_or(f64::NAN));
        }
        (Some(sl), None) => {
            let _ = writeln!(s, "boundary slope {sl:.4}");
        }
        _ => {}
    }
    for w in &summary.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    let text = json(&summary)?;
    Ok(Outcome {
        exit_code: EXIT_OK,
        summary: s,
        report: text.clone(),
        artifacts: vec![("phase.csv".into(), csv_text(&rows)?), ("phase.json".into(), text)],
    })
}

fn cmd_mise(cfg: &RunConfig) -> CliResult<Outcome> {
    let model = model_of(cfg)?;
    let kernel = cfg.kernel_spec()?;
    let sizes = cfg.sizes()?;
    let ise = IseConfig::default();
    let mut rows = Vec::new();
    for name in &cfg.selectors {
        let selector = match name.as_str() {
            "staircase" => Selector::Staircase,
            "analytic" => Selector::AnalyticOpt,
            "plugin" => Selector::Plugin(cfg.plugin_config()?),
            "fixed" => Selector::FixedH(cfg.h.unwrap_or(f64::NAN)),
            other => return Err(CliError::Config(format!("unknown selector `{other}`"))),
        };
        let e = parallel::mise_monte_carlo(&model, &sizes, &kernel, &selector, cfg.q, cfg.replicates, cfg.seed, &ise)?;
        rows.push(MiseRow::new(&e, &sizes));
    }
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>5} {:>6} {:>6} {:>14} {:>12} {:>7}", "selector", "m", "n", "q", "mean_ise", "se", "failed");
    for r in &rows {
        let _ = writeln!(
            s,
            "{:<16} {:>5} {:>6} {:>6} {:>14} {:>12} {:>7}",
            r.selector,
            r.m,
            r.n,
            r.q,
            r.mean_ise.map_or("-".into(), |v| format!("{v:.6e}")),
            r.se.map_or("-".into(), |v| format!("{v:.3e}")),
            r.failed_replicates
        );
    }
    let report = MiseReport { config: cfg.clone(), rows: rows.clone(), cutoff: ise.cutoff, rel_tol: ise.rel_tol };
    let text = json(&report)?;
    Ok(Outcome {
        exit_code: EXIT_OK,
        summary: s,
        report: text.clone(),
        artifacts: vec![("mise.csv".into(), csv_text(&rows)?), ("mise.json".into(), text)],
    })
}

fn cmd_diagnose(cfg: &RunConfig) -> CliResult<Outcome> {
    let sample = input_sample(cfg)?;
    let attempt = fit_on_scale(&sample, &cfg.plugin_config()?, cfg.transform.resolve(&sample));
    let (fit, d) = match (&attempt.fit, &attempt.report) {
        (Some(f), Some(d)) => (f, d),
        _ => return Err(CliError::Config(attempt.note.unwrap_or_else(|| "fit failed".into()))),
    };
    let report = DiagnoseReport {
        config: cfg.clone(),
        sample: SampleSummary::from(&sample),
        transform: attempt.transform.name(),
        bandwidths: fit.bandwidths().as_slice().to_vec(),
        diagnostics: DiagnosticsJson::from(d),
    };
    let mut s = String::new();
    let _ = writeln!(s, "scale: {}", report.transform);
    diagnostics_text(&mut s, &report.diagnostics);
    let text = json(&report)?;
    Ok(Outcome {
        exit_code: if d.overall_pass { EXIT_OK } else { EXIT_DIAGNOSTICS },
        summary: s,
        report: text.clone(),
        artifacts: vec![("diagnostics.json".into(), text)],
    })
}

fn cmd_simulate(cfg: &RunConfig) -> CliResult<Outcome> {
    let model = model_of(cfg)?;
    let sample = sample_blocks(&model, &cfg.sizes()?, cfg.seed)?;
    let mut buf = Vec::new();
    write_blocked_csv(&sample, &mut buf)?;
    let text = String::from_utf8(buf).expect("csv output is utf-8");
    Ok(Outcome {
        exit_code: EXIT_OK,
        summary: text.clone(),
        report: text.clone(),
        artifacts: vec![("sample.csv".into(), text)],
    })
}

/// Runs a resolved configuration, writing artifacts and printing output.
pub fn execute(cfg: &RunConfig, json_stdout: bool) -> CliResult<i32> {
    let outcome = run_command(cfg)?;
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
        for (name, contents) in &outcome.artifacts {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        }
        if cfg.command == "simulate" && !json_stdout {
            return Ok(outcome.exit_code);
        }
    }
    if json_stdout {
        print!("{}", outcome.report);
    } else {
        print!("{}", outcome.summary);
    }
    Ok(outcome.exit_code)
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = cli.resolve().and_then(|(cfg, json_stdout)| execute(&cfg, json_stdout));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            eprintln!("hint: {}", e.hint());
            EXIT_ERROR
        }
    }
}
