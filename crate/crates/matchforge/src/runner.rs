//! Monte Carlo experiment orchestration: pruning sweeps over the hypercube
//! scenarios and the binary-confounding experiment.
//!
//! Runs are independent tasks with per-run seeds derived by counter from the
//! master seed, executed on a worker pool capped by `MATCHFORGE_THREADS`
//! (default: available parallelism) and merged in run-index order — results
//! are bit-identical for any worker count.

use rayon::prelude::*;

use crate::encoders::{identity_encoder, mahalanobis_encoder, odm_encoder, propensity_encoder};
use crate::estimators::{model_dependence_opts, plugin_estimate, simple_regression_estimate};
use crate::kernels::percentile_interval;
use crate::matching::{apply_caliper, greedy_match, prune_worst};
use crate::model::{Encoder, EncoderKind, Sample};
use crate::scenarios::{gen_confounding_binary, gen_king_nielson, ScenarioSpec};
use crate::{Error, Result};

/// Worker pool sized from `MATCHFORGE_THREADS` (falls back to available
/// parallelism when unset or unparsable).
pub fn worker_pool() -> rayon::ThreadPool {
    let threads = std::env::var("MATCHFORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        });
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("worker pool construction")
}

/// Builds the encoder of the requested kind from a sample.
pub fn build_encoder(sample: &Sample, kind: EncoderKind) -> Result<Encoder> {
    match kind {
        EncoderKind::Identity => Ok(identity_encoder(sample.n_covariates())),
        EncoderKind::Propensity => propensity_encoder(sample),
        EncoderKind::Mahalanobis => Ok(mahalanobis_encoder(sample)),
        EncoderKind::Odm => odm_encoder(sample),
    }
}

/// One aggregated sweep cell: a method at a pruning level.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: EncoderKind,
    /// Matched pairs removed.
    pub pairs_pruned: usize,
    /// Units removed (two per pair: the treated unit and its match).
    pub units_pruned: usize,
    /// Mean simple-specification estimate over runs.
    pub mean_estimate: f64,
    /// Model-dependence spread: by default the per-run variance of the
    /// 512-specification estimates, averaged over runs.
    pub spec_variance: f64,
    /// Mean squared error of the simple-specification estimate against the
    /// scenario's ATT.
    pub mse: f64,
    pub runs: usize,
}

/// Sweep output: one row per (method, pruning level), methods in request
/// order, levels ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Knobs for [`run_pruning_sweep_with`].
#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    /// Whether covariates beyond the first two enter the 512-specification
    /// designs linearly.
    pub include_extra_linear: bool,
    /// Pool all runs' specification estimates into one variance instead of
    /// averaging per-run variances.
    pub pool_spec_estimates: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { include_extra_linear: true, pool_spec_estimates: false }
    }
}

struct RunCell {
    estimate: f64,
    sq_error: f64,
    spec_variance: f64,
    spec_estimates: Vec<f64>,
}

/// Runs the scenario `runs` times; for each run and method, matches all
/// treated units greedily, then evaluates the simple-specification estimate
/// (for the MSE against the scenario ATT) and the 512-specification spread
/// at every pruning level in `prune_grid`.
pub fn run_pruning_sweep(
    spec: &ScenarioSpec,
    methods: &[EncoderKind],
    runs: usize,
    prune_grid: &[usize],
    master_seed: u64,
) -> Result<SweepResult> {
    run_pruning_sweep_with(spec, methods, runs, prune_grid, master_seed, SweepOptions::default())
}

/// [`run_pruning_sweep`] with explicit options.
pub fn run_pruning_sweep_with(
    spec: &ScenarioSpec,
    methods: &[EncoderKind],
    runs: usize,
    prune_grid: &[usize],
    master_seed: u64,
    options: SweepOptions,
) -> Result<SweepResult> {
    assert!(runs >= 1, "sweep needs at least one run");
    spec.validate()?;
    let mut grid = prune_grid.to_vec();
    if grid.is_empty() {
        grid.push(0);
    }
    let att = spec.analytic_att();

    // per run, per method, per level
    let cells: Vec<Result<Vec<Vec<RunCell>>>> = worker_pool().install(|| {
        (0..runs as u64)
            .into_par_iter()
            .map(|run| {
                single_sweep_run(spec, methods, &grid, master_seed, run, att, options)
                    .map_err(|e| Error::RunFailed { run: run as usize, source: Box::new(e) })
            })
            .collect()
    });

    let mut per_run = Vec::with_capacity(runs);
    for cell in cells {
        per_run.push(cell?);
    }

    let mut rows = Vec::with_capacity(methods.len() * grid.len());
    for (m_idx, &method) in methods.iter().enumerate() {
        for (l_idx, &level) in grid.iter().enumerate() {
            let cells: Vec<&RunCell> = per_run.iter().map(|r| &r[m_idx][l_idx]).collect();
            let n = cells.len() as f64;
            let mean_estimate = cells.iter().map(|c| c.estimate).sum::<f64>() / n;
            let mse = cells.iter().map(|c| c.sq_error).sum::<f64>() / n;
            let spec_variance = if options.pool_spec_estimates {
                let pooled: Vec<f64> =
                    cells.iter().flat_map(|c| c.spec_estimates.iter().copied()).collect();
                crate::estimators::population_variance(&pooled)
            } else {
                cells.iter().map(|c| c.spec_variance).sum::<f64>() / n
            };
            rows.push(SweepRow {
                method,
                pairs_pruned: level,
                units_pruned: 2 * level,
                mean_estimate,
                spec_variance,
                mse,
                runs: cells.len(),
            });
        }
    }
    Ok(SweepResult { rows })
}

#[allow(clippy::too_many_arguments)]
fn single_sweep_run(
    spec: &ScenarioSpec,
    methods: &[EncoderKind],
    grid: &[usize],
    master_seed: u64,
    run: u64,
    att: f64,
    options: SweepOptions,
) -> Result<Vec<Vec<RunCell>>> {
    let data_seed = crate::seeds::derive_seed(master_seed, &[1, run]);
    let (sample, _) = gen_king_nielson(spec, data_seed)?;
    let mut out = Vec::with_capacity(methods.len());
    for (m_idx, &method) in methods.iter().enumerate() {
        let encoder = build_encoder(&sample, method)?;
        let order_seed = crate::seeds::derive_seed(master_seed, &[2, run, m_idx as u64]);
        let pairs = greedy_match(&sample, &encoder, order_seed)?;
        let mut cells = Vec::with_capacity(grid.len());
        for &level in grid {
            if level >= pairs.len() {
                return Err(Error::KTooLarge { k: level, available: pairs.len() });
            }
            let kept = prune_worst(&pairs, level)?;
            let estimate = simple_regression_estimate(&sample, &kept)?;
            let dependence =
                model_dependence_opts(&sample, &kept, options.include_extra_linear)?;
            cells.push(RunCell {
                estimate,
                sq_error: (estimate - att) * (estimate - att),
                spec_variance: dependence.variance,
                spec_estimates: dependence.estimates.iter().flatten().copied().collect(),
            });
        }
        out.push(cells);
    }
    Ok(out)
}

/// Result of the binary-confounding experiment: 95% intervals of the
/// plug-in estimate over independent runs, on the raw sample and after
/// exact 1-1 matching.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfoundingResult {
    pub unmatched: (f64, f64),
    pub matched: (f64, f64),
    pub runs_used: usize,
    pub runs_failed: usize,
}

/// Per run: draw a fresh confounding sample, compute the plug-in estimate
/// raw and after exact 1-1 matching (identity encoder, caliper 0), then
/// report the 95% percentile interval of each estimate distribution. Runs
/// where either arm fails are dropped and counted.
pub fn run_confounding_experiment(
    n: usize,
    runs: usize,
    master_seed: u64,
) -> Result<ConfoundingResult> {
    assert!(runs >= 100, "confounding experiment needs at least 100 runs");
    let estimates: Vec<Option<(f64, f64)>> = worker_pool().install(|| {
        (0..runs as u64)
            .into_par_iter()
            .map(|run| confounding_run(n, master_seed, run).ok())
            .collect()
    });
    let kept: Vec<(f64, f64)> = estimates.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(Error::AllReplicationsFailed(runs));
    }
    let unmatched: Vec<f64> = kept.iter().map(|&(u, _)| u).collect();
    let matched: Vec<f64> = kept.iter().map(|&(_, m)| m).collect();
    Ok(ConfoundingResult {
        unmatched: percentile_interval(&unmatched, 0.95)?,
        matched: percentile_interval(&matched, 0.95)?,
        runs_used: kept.len(),
        runs_failed: runs - kept.len(),
    })
}

fn confounding_run(n: usize, master_seed: u64, run: u64) -> Result<(f64, f64)> {
    let (sample, _) = gen_confounding_binary(n, crate::seeds::derive_seed(master_seed, &[3, run]))?;
    let raw = plugin_estimate(&sample)?;
    let encoder = identity_encoder(sample.n_covariates());
    let order_seed = crate::seeds::derive_seed(master_seed, &[4, run]);
    let pairs = apply_caliper(&greedy_match(&sample, &encoder, order_seed)?, 0.0);
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let matched_sample = sample.subset(&pairs.pooled_indices())?;
    let matched = plugin_estimate(&matched_sample)?;
    Ok((raw, matched))
}
