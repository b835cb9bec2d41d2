//! Resolved run configuration, loadable from JSON and validated before use.

use std::path::{Path, PathBuf};

use ddevd_core::plugin::PluginConfig;
use ddevd_core::transforms::TransformSpec;
use ddevd_core::{BlockedSample, KernelSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TransformOption {
    #[default]
    None,
    Log,
    BoxCox,
}

impl TransformOption {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "none" | "identity" => Ok(Self::None),
            "log" => Ok(Self::Log),
            "box-cox" | "boxcox" => Ok(Self::BoxCox),
            other => Err(CliError::Config(format!("unknown transform `{other}` (none, log, box-cox)"))),
        }
    }

    /// The concrete transform for `sample`; Box-Cox uses lambda 0 with a
    /// shift that makes the data positive.
    pub fn resolve(&self, sample: &BlockedSample) -> TransformSpec {
        match self {
            Self::None => TransformSpec::Identity,
            Self::Log => TransformSpec::Log,
            Self::BoxCox => {
                let (lo, hi) = sample.range();
                TransformSpec::BoxCox { lambda: 0.0, shift: (-lo).max(0.0) + 1e-6 * (hi - lo) }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseModeOption {
    #[default]
    Analytic,
    Plugin,
}

/// Every option of every command; commands read the fields they need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    pub input: Option<PathBuf>,
    pub kernel: String,
    pub q: f64,
    pub transform: TransformOption,
    pub auto_transform: bool,
    pub lambda: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub model: String,
    pub model_params: Vec<f64>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub block_sizes: Vec<usize>,
    pub n_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub replicates: usize,
    pub mode: PhaseModeOption,
    pub selectors: Vec<String>,
    pub h: Option<f64>,
    pub return_periods: Vec<f64>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            input: None,
            kernel: "gaussian".into(),
            q: 0.9,
            transform: TransformOption::None,
            auto_transform: false,
            lambda: 0.5,
            epsilon: 1e-4,
            max_iter: 100,
            model: "exponential".into(),
            model_params: Vec::new(),
            n: None,
            m: None,
            block_sizes: Vec::new(),
            n_grid: Vec::new(),
            m_grid: Vec::new(),
            replicates: 200,
            mode: PhaseModeOption::Analytic,
            selectors: vec!["staircase".into(), "analytic".into()],
            h: None,
            return_periods: vec![10.0, 100.0],
            seed: 0,
            threads: None,
            out: None,
        }
    }
}

pub const COMMANDS: [&str; 7] = ["fit", "bandwidth", "stability", "phase-diagram", "mise", "diagnose", "simulate"];

impl RunConfig {
    pub fn from_json_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn kernel_spec(&self) -> CliResult<KernelSpec> {
        Ok(KernelSpec::by_name(&self.kernel)?)
    }

    pub fn plugin_config(&self) -> CliResult<PluginConfig> {
        let c = PluginConfig {
            lambda: self.lambda,
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            q: self.q,
            kernel: self.kernel_spec()?,
        };
        c.validate()?;
        Ok(c)
    }

    /// Block sizes from `block_sizes`, or `m` copies of `n`.
    pub fn sizes(&self) -> CliResult<Vec<usize>> {
        if !self.block_sizes.is_empty() {
            return Ok(self.block_sizes.clone());
        }
        match (self.n, self.m) {
            (Some(n), Some(m)) if n > 0 && m > 0 => Ok(vec![n; m]),
            _ => Err(CliError::Config(format!("`{}` needs --n and --m (or --block-sizes)", self.command))),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if !COMMANDS.contains(&self.command.as_str()) {
            return Err(CliError::Config(format!("unknown command `{}`", self.command)));
        }
        if !(0.0..1.0).contains(&self.q) {
            return Err(CliError::Config(format!("q = {} must lie in [0, 1)", self.q)));
        }
        self.kernel_spec()?;
        self.plugin_config()?;
        if self.threads == Some(0) {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        let needs_input = matches!(self.command.as_str(), "fit" | "bandwidth" | "diagnose");
        if needs_input && self.input.is_none() {
            return Err(CliError::Config(format!("`{}` needs --input", self.command)));
        }
        if self.return_periods.iter().any(|t| t.is_nan() || *t <= 1.0) {
            return Err(CliError::Config("return periods must exceed 1".into()));
        }
        match self.command.as_str() {
            "phase-diagram" => {
                for (name, g) in [("n-grid", &self.n_grid), ("m-grid", &self.m_grid)] {
                    if g.is_empty() || g.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(CliError::Config(format!("--{name} must be nonempty and strictly ascending")));
                    }
                }
                if self.replicates == 0 {
                    return Err(CliError::Config("--replicates must be at least 1".into()));
                }
            }
            "mise" => {
                self.sizes()?;
                if self.replicates < 2 {
                    return Err(CliError::Config("--replicates must be at least 2".into()));
                }
                for s in &self.selectors {
                    if !["staircase", "analytic", "plugin", "fixed"].contains(&s.as_str()) {
                        return Err(CliError::Config(format!("unknown selector `{s}`")));
                    }
                    if s == "fixed" && !self.h.is_some_and(|h| h > 0.0) {
                        return Err(CliError::Config("selector `fixed` needs a positive --h".into()));
                    }
                }
            }
            "simulate" => {
                self.sizes()?;
            }
            "stability" if self.input.is_none() && (self.n.is_none() || self.m.is_none()) => {
                return Err(CliError::Config("`stability` needs --n and --m, or --input".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json_str(r#"{"command": "fit", "bogus": 1}"#).is_err());
        let c = RunConfig::from_json_str(r#"{"command": "fit", "q": 0.95, "transform": "box-cox"}"#).unwrap();
        assert_eq!(c.q, 0.95);
        assert_eq!(c.transform, TransformOption::BoxCox);
        assert_eq!(c.lambda, 0.5);
    }

    #[test]
    fn validation() {
        let mut c = RunConfig { command: "fit".into(), ..RunConfig::default() };
        assert!(c.validate().is_err());
        c.input = Some("x.csv".into());
        assert!(c.validate().is_ok());
        c.lambda = 1.5;
        assert!(c.validate().is_err());
        c.lambda = 0.5;
        c.kernel = "cauchy".into();
        assert!(c.validate().is_err());
        let c = RunConfig { command: "phase-diagram".into(), n_grid: vec![50, 20], m_grid: vec![2], ..RunConfig::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { command: "nope".into(), ..RunConfig::default() };
        assert!(c.validate().is_err());
    }
}
