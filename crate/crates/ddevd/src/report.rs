//! Serializable reports. Field names are part of the output schema.

use ddevd_core::evaluation::MiseEstimate;
use ddevd_core::plugin::{PluginResult, TrajectoryStep};
use ddevd_core::stability::{AsymptoticConstants, PhaseDiagram, PhaseMode, StabilityReport};
use ddevd_core::transforms::{DiagnosticsReport, DiagnosticsStatus, ScaleAttempt};
use ddevd_core::BlockedSample;
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct SampleSummary {
    pub digest: String,
    pub blocks: usize,
    pub block_sizes: Vec<usize>,
    pub total: usize,
    pub min: f64,
    pub max: f64,
}

impl From<&BlockedSample> for SampleSummary {
    fn from(s: &BlockedSample) -> Self {
        let (min, max) = s.range();
        Self {
            digest: format!("{:016x}", s.digest()),
            blocks: s.m(),
            block_sizes: s.block_sizes(),
            total: s.total(),
            min,
            max,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub iteration: usize,
    pub h: Vec<f64>,
    pub h_norm: f64,
    pub rel_change: Option<f64>,
    pub min_eig: Option<f64>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl From<&TrajectoryStep> for StepReport {
    fn from(s: &TrajectoryStep) -> Self {
        Self {
            iteration: s.iteration,
            h: s.h.clone(),
            h_norm: s.h.iter().map(|v| v * v).sum::<f64>().sqrt(),
            rel_change: finite(s.rel_change),
            min_eig: finite(s.min_eig),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PluginReport {
    pub converged: bool,
    pub iterations: usize,
    pub failure_mode: Option<&'static str>,
    pub h_final: Vec<f64>,
    pub note: Option<String>,
    pub trajectory: Vec<StepReport>,
}

impl From<&PluginResult> for PluginReport {
    fn from(r: &PluginResult) -> Self {
        Self {
            converged: r.converged,
            iterations: r.iterations,
            failure_mode: r.failure_mode.map(|f| f.as_str()),
            h_final: r.h_final.as_slice().to_vec(),
            note: r.note.clone(),
            trajectory: r.trajectory.iter().map(StepReport::from).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsJson {
    pub status: &'static str,
    pub overall_pass: bool,
    pub convergence_pass: bool,
    pub failure_mode: Option<&'static str>,
    pub spacing_pass: bool,
    pub h_star: f64,
    pub median_tail_spacing: Option<f64>,
    pub spacing_ratio: Option<f64>,
    pub spikiness_pass: bool,
    pub tail_mode_count: usize,
    pub tail_point_count: usize,
}

impl From<&DiagnosticsReport> for DiagnosticsJson {
    fn from(r: &DiagnosticsReport) -> Self {
        Self {
            status: match r.status {
                DiagnosticsStatus::Pass => "pass",
                DiagnosticsStatus::Fail => "fail",
                DiagnosticsStatus::Inconclusive => "inconclusive",
            },
            overall_pass: r.overall_pass,
            convergence_pass: r.convergence_pass,
            failure_mode: r.failure_mode.map(|f| f.as_str()),
            spacing_pass: r.spacing_pass,
            h_star: r.h_star,
            median_tail_spacing: finite(r.median_tail_spacing),
            spacing_ratio: finite(r.spacing_ratio),
            spikiness_pass: r.spikiness_pass,
            tail_mode_count: r.tail_mode_count,
            tail_point_count: r.tail_point_count,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AttemptReport {
    pub transform: String,
    pub bandwidths: Option<Vec<f64>>,
    pub diagnostics: Option<DiagnosticsJson>,
    pub plugin_converged: Option<bool>,
    pub note: Option<String>,
}

impl From<&ScaleAttempt> for AttemptReport {
    fn from(a: &ScaleAttempt) -> Self {
        Self {
            transform: a.transform.name(),
            bandwidths: a.fit.as_ref().map(|f| f.bandwidths().as_slice().to_vec()),
            diagnostics: a.report.as_ref().map(DiagnosticsJson::from),
            plugin_converged: a.plugin.as_ref().map(|p| p.converged),
            note: a.note.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReturnLevel {
    pub period: f64,
    pub level: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub config: RunConfig,
    pub sample: SampleSummary,
    pub kernel: String,
    pub transform: String,
    pub bandwidths: Vec<f64>,
    pub diagnostics_pass: bool,
    pub attempts: Vec<AttemptReport>,
    pub plugin: Option<PluginReport>,
    pub return_levels: Vec<ReturnLevel>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BandwidthReport {
    pub config: RunConfig,
    pub sample: SampleSummary,
    pub plugin: PluginReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseReport {
    pub config: RunConfig,
    pub sample: SampleSummary,
    pub transform: String,
    pub bandwidths: Vec<f64>,
    pub diagnostics: DiagnosticsJson,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsJson {
    pub gamma: f64,
    pub tail_scale: f64,
    pub cb: f64,
    pub cv: f64,
    pub cv_numeric: f64,
    pub c_boundary: Option<f64>,
    pub warning: Option<String>,
}

impl From<&AsymptoticConstants> for ConstantsJson {
    fn from(c: &AsymptoticConstants) -> Self {
        Self {
            gamma: c.gamma,
            tail_scale: c.tail_scale,
            cb: c.cb,
            cv: c.cv,
            cv_numeric: c.cv_numeric,
            c_boundary: c.c_boundary,
            warning: c.warning.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityJson {
    pub config: RunConfig,
    pub model: String,
    pub n: usize,
    pub m: usize,
    pub q: f64,
    pub d: f64,
    pub eig_small: f64,
    pub eig_large: f64,
    pub constants: Option<ConstantsJson>,
    pub m_max: Option<f64>,
    pub stable: bool,
    pub caveat: Option<String>,
}

impl StabilityJson {
    pub fn new(config: RunConfig, r: &StabilityReport) -> Self {
        Self {
            config,
            model: r.model.clone(),
            n: r.n,
            m: r.m,
            q: r.q,
            d: r.d,
            eig_small: r.eig_small,
            eig_large: r.eig_large,
            constants: r.constants.as_ref().map(ConstantsJson::from),
            m_max: r.m_max,
            stable: r.stable,
            caveat: r.caveat.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseRow {
    pub n: usize,
    pub m: usize,
    pub replicates: usize,
    pub stable_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseSummary {
    pub config: RunConfig,
    pub model: String,
    pub mode: &'static str,
    pub gamma: Option<f64>,
    pub theory_slope: Option<f64>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub threshold: f64,
    pub transitions: Vec<(usize, f64)>,
    pub excluded: Vec<usize>,
    pub warnings: Vec<String>,
    pub caveat: Option<String>,
}

pub fn phase_rows(d: &PhaseDiagram) -> Vec<PhaseRow> {
    d.cells
        .iter()
        .map(|c| PhaseRow { n: c.n, m: c.m, replicates: c.replicates, stable_fraction: c.stable_fraction })
        .collect()
}

impl PhaseSummary {
    pub fn new(config: RunConfig, d: &PhaseDiagram) -> Self {
        Self {
            config,
            model: d.model.clone(),
            mode: match d.mode {
                PhaseMode::AnalyticD => "analytic",
                PhaseMode::PluginEmpirical => "plugin",
            },
            gamma: d.gamma,
            theory_slope: d.theory_slope,
            slope: d.fit.map(|f| f.0),
            intercept: d.fit.map(|f| f.1),
            threshold: d.threshold,
            transitions: d.transitions.clone(),
            excluded: d.excluded.clone(),
            warnings: d.warnings.clone(),
            caveat: d.caveat.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MiseRow {
    pub selector: String,
    pub m: usize,
    pub n: usize,
    pub q: f64,
    pub mean_ise: Option<f64>,
    pub se: Option<f64>,
    pub failed_replicates: usize,
}

impl MiseRow {
    pub fn new(e: &MiseEstimate, sizes: &[usize]) -> Self {
        let n = (sizes.iter().sum::<usize>() as f64 / sizes.len() as f64).round() as usize;
        Self {
            selector: e.selector.clone(),
            m: sizes.len(),
            n,
            q: e.q,
            mean_ise: finite(e.mean_ise),
            se: finite(e.standard_error),
            failed_replicates: e.failed_replicates,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MiseReport {
    pub config: RunConfig,
    pub rows: Vec<MiseRow>,
    pub cutoff: f64,
    pub rel_tol: f64,
}
