//! Rayon drivers for the independent units of the experiments: grid cells,
//! replicates and seeds. Results do not depend on scheduling.

use ddevd_core::evaluation::{
    prepare_selector, mise_replicate, replicate_seed, summarize, IseConfig, MiseEstimate, Selector,
};
use ddevd_core::stability::{
    analytic_row, cell_seed, empirical_replicate, summarize_phase, varying_replicate, PhaseCell, PhaseConfig,
    PhaseDiagram, PhaseMode, VaryingRow,
};
use ddevd_core::{BaseModel, KernelSpec};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};

/// Runs `f` on a pool capped at `threads` workers, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Order-preserving parallel map.
pub fn par_map<I: Sync, T: Send>(items: &[I], f: impl Fn(&I) -> T + Sync + Send) -> Vec<T> {
    items.par_iter().map(f).collect()
}

pub fn phase_diagram<M: BaseModel + ?Sized>(
    model: &M,
    n_grid: &[usize],
    m_grid: &[usize],
    config: &PhaseConfig,
) -> CliResult<PhaseDiagram> {
    let cells: Vec<PhaseCell> = match config.mode {
        PhaseMode::AnalyticD => {
            let rows: Vec<_> = n_grid
                .par_iter()
                .map(|&n| analytic_row(model, &config.plugin.kernel, n, m_grid, config.q))
                .collect::<Result<_, _>>()?;
            rows.into_iter().flatten().collect()
        }
        PhaseMode::PluginEmpirical => {
            let jobs: Vec<(usize, usize, usize)> = n_grid
                .iter()
                .flat_map(|&n| m_grid.iter().flat_map(move |&m| (0..config.replicates).map(move |r| (n, m, r))))
                .collect();
            let ok: Vec<bool> = jobs
                .par_iter()
                .map(|&(n, m, r)| empirical_replicate(model, &vec![n; m], config, cell_seed(config.seed, n, m, r)))
                .collect::<Result<_, _>>()?;
            let mut cells = Vec::new();
            for (i, chunk) in ok.chunks(config.replicates).enumerate() {
                let (n, m, _) = jobs[i * config.replicates];
                let frac = chunk.iter().filter(|&&b| b).count() as f64 / config.replicates as f64;
                cells.push(PhaseCell { n, m, replicates: config.replicates, stable_fraction: frac });
            }
            cells
        }
    };
    let mut config = config.clone();
    if config.mode == PhaseMode::AnalyticD {
        config.replicates = 1;
    }
    Ok(summarize_phase(model, cells, &config))
}

pub fn varying_blocks<M: BaseModel + ?Sized>(
    model: &M,
    n_mean: usize,
    rel_sd_grid: &[f64],
    m: usize,
    config: &PhaseConfig,
) -> CliResult<Vec<VaryingRow>> {
    let jobs: Vec<(usize, usize)> =
        (0..rel_sd_grid.len()).flat_map(|i| (0..config.replicates).map(move |r| (i, r))).collect();
    let ok: Vec<bool> = jobs
        .par_iter()
        .map(|&(i, r)| varying_replicate(model, n_mean, m, rel_sd_grid[i], r, config))
        .collect::<Result<_, _>>()?;
    Ok(rel_sd_grid
        .iter()
        .zip(ok.chunks(config.replicates))
        .map(|(&rel_sd, c)| VaryingRow {
            rel_sd,
            replicates: config.replicates,
            stable_fraction: c.iter().filter(|&&b| b).count() as f64 / config.replicates as f64,
        })
        .collect())
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
) -> CliResult<MiseEstimate> {
    if replicates < 2 {
        return Err(CliError::Config("at least 2 replicates are needed".into()));
    }
    let prepared = prepare_selector(selector, model, sizes, kernel, q)?;
    let values: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| mise_replicate(model, sizes, kernel, &prepared, q, replicate_seed(seed, r), cfg).unwrap_or(f64::NAN))
        .collect();
    Ok(summarize(selector.name(), values, q, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ddevd_core::Builtin;

    #[test]
    fn matches_sequential() {
        let model = Builtin::Exponential { rate: 1.0 };
        let k = KernelSpec::gaussian();
        let cfg = IseConfig::default();
        let seq = ddevd_core::evaluation::mise_monte_carlo(&model, &[10; 3], &k, &Selector::Staircase, 0.9, 8, 5, &cfg)
            .unwrap();
        let par = with_threads(Some(2), || mise_monte_carlo(&model, &[10; 3], &k, &Selector::Staircase, 0.9, 8, 5, &cfg))
            .unwrap()
            .unwrap();
        assert_eq!(seq, par);
        let pc = PhaseConfig::analytic(0.9, k);
        let a = ddevd_core::stability::phase_diagram(&model, &[50, 100], &[2, 8, 32, 128], &pc).unwrap();
        let b = phase_diagram(&model, &[50, 100], &[2, 8, 32, 128], &pc).unwrap();
        assert_eq!(a, b);
    }
}
