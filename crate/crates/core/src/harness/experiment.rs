//! Parallel sweeps over setups, privacy vectors and seeds, and the
//! normalized comparison across setups.

use std::collections::BTreeMap;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{vector_id, ExperimentConfig};
use super::output::{write_rounds, write_summary};
use super::{regret_bound, run_episode, Episode};
use crate::error::{Error, Result};
use crate::estimation::beta;
use crate::policy::{known_safe_set, lambda_check};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "SAFEPRIV_THREADS";

pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        })
}

/// `min(⌈(2/λ̌)(β̃_T T)^{2/3}⌉, ⌊T/3⌋)`, at least one round.
pub fn capped_t_prime(cfg: &ExperimentConfig, alpha: &[f64], horizon: usize) -> Result<usize> {
    let params = cfg.confidence_params()?;
    let (_, ball) = known_safe_set(&cfg.safe_set, cfg.d, cfg.s, cfg.k)?;
    let lc = lambda_check(ball.radius, cfg.m, cfg.d);
    let bt = alpha
        .iter()
        .map(|&a| beta(horizon, a, &params))
        .fold(0.0, f64::max);
    let rate = (2.0 / lc * (bt * horizon as f64).powf(2.0 / 3.0)).ceil();
    Ok((rate.min((horizon / 3) as f64) as usize).max(1))
}

/// One row of the summary file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub setup_id: String,
    pub privacy_vector_id: String,
    pub seed: u64,
    pub final_cum_regret: f64,
    /// `R_T/(T f*)`.
    pub normalized_final: f64,
    pub violations_total: usize,
    pub coverage_fraction: f64,
    pub bound_value: f64,
}

/// Cumulative regret curve of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub setup_id: String,
    pub vector_id: String,
    pub seed: u64,
    pub f_star: f64,
    pub cum_regret: Vec<f64>,
}

impl RunTrace {
    pub fn from_episode(setup_id: &str, vector_id: &str, seed: u64, ep: &Episode) -> Self {
        Self {
            setup_id: setup_id.into(),
            vector_id: vector_id.into(),
            seed,
            f_star: ep.f_star,
            cum_regret: ep.records.iter().map(|r| r.cum_regret).collect(),
        }
    }
}

pub fn summarize(cfg: &ExperimentConfig, alpha: &[f64], seed: u64, ep: &Episode) -> RunSummary {
    let horizon = ep.records.len();
    let bound_value = match regret_bound(cfg, alpha, horizon) {
        Ok(b) => b.total,
        Err(e) => {
            warn!("no regret bound for setup {} vector {:?}: {e}", cfg.setup_id, alpha);
            f64::NAN
        }
    };
    RunSummary {
        setup_id: cfg.setup_id.clone(),
        privacy_vector_id: vector_id(alpha),
        seed,
        final_cum_regret: ep.final_regret(),
        normalized_final: ep.final_regret() / (horizon as f64 * ep.f_star),
        violations_total: ep.violations(),
        coverage_fraction: ep.coverage_fraction(),
        bound_value,
    }
}

/// Runs every (config, privacy vector, seed) triple on a pool of
/// [`thread_count`] workers. With `out_dir`, each run writes
/// `rounds_<setup>_<vector>_<seed>.csv` and the sweep writes `summary.csv`.
/// Results are in job order.
pub fn run_sweep(
    cfgs: &[ExperimentConfig],
    out_dir: Option<&Path>,
) -> Result<(Vec<RunSummary>, Vec<RunTrace>)> {
    let mut jobs = Vec::new();
    for cfg in cfgs {
        for alpha in cfg.sweep()? {
            for &seed in &cfg.seeds {
                jobs.push((cfg, alpha.clone(), seed));
            }
        }
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let results: Vec<Result<(RunSummary, RunTrace)>> = pool.install(|| {
        jobs.par_iter()
            .map(|(cfg, alpha, seed)| {
                let ep = run_episode(cfg, alpha, *seed)?;
                let id = vector_id(alpha);
                if let Some(dir) = out_dir {
                    let name = format!("rounds_{}_{}_{}.csv", cfg.setup_id, id, seed);
                    write_rounds(&dir.join(name), &cfg.setup_id, &id, *seed, &ep.records)?;
                }
                let summary = summarize(cfg, alpha, *seed, &ep);
                info!(
                    "setup {} vector {} seed {}: regret {:.3}, violations {}",
                    cfg.setup_id, id, seed, summary.final_cum_regret, summary.violations_total
                );
                Ok((summary, RunTrace::from_episode(&cfg.setup_id, &id, *seed, &ep)))
            })
            .collect()
    });
    let (summaries, traces): (Vec<_>, Vec<_>) =
        results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    if let Some(dir) = out_dir {
        write_summary(&dir.join("summary.csv"), &summaries)?;
    }
    Ok((summaries, traces))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Cumulative regret at `t` divided by `t f*` of the setup.
    #[default]
    PerRoundOptimum,
    /// Cumulative regret divided by the largest final regret in the setup.
    WorstFinal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCurve {
    pub vector_id: String,
    /// Mean over seeds of the setup-averaged normalized regret.
    pub mean: Vec<f64>,
    pub final_mean: f64,
    /// Standard error of the final value across seeds (0 for one seed).
    pub final_stderr: f64,
    pub n_seeds: usize,
}

/// Normalizes each trace within its setup, averages over setups for each
/// (vector, seed) and then over seeds. Curves follow the order in which
/// vectors first appear.
pub fn normalized_average(traces: &[RunTrace], norm: Normalization) -> Result<Vec<NormalizedCurve>> {
    let Some(first) = traces.first() else {
        return Ok(Vec::new());
    };
    let horizon = first.cum_regret.len();
    if let Some(bad) = traces.iter().find(|t| t.cum_regret.len() != horizon) {
        return Err(Error::MismatchedHorizons(horizon, bad.cum_regret.len()));
    }
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    for t in traces {
        let last = t.cum_regret.last().copied().unwrap_or(0.0);
        let w = worst.entry(t.setup_id.as_str()).or_insert(f64::NEG_INFINITY);
        *w = w.max(last);
    }
    let normalized = |t: &RunTrace| -> Result<Vec<f64>> {
        match norm {
            Normalization::PerRoundOptimum => {
                if t.f_star == 0.0 {
                    return Err(Error::DivisionByZero(format!(
                        "normalization of setup {}: optimum is zero",
                        t.setup_id
                    )));
                }
                Ok(t.cum_regret
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c / ((i + 1) as f64 * t.f_star))
                    .collect())
            }
            Normalization::WorstFinal => {
                let w = worst[t.setup_id.as_str()];
                if w == 0.0 {
                    return Err(Error::DivisionByZero(format!(
                        "normalization of setup {}: worst final regret is zero",
                        t.setup_id
                    )));
                }
                Ok(t.cum_regret.iter().map(|c| c / w).collect())
            }
        }
    };

    let mut order: Vec<&str> = Vec::new();
    // vector -> seed -> (sum over setups, count)
    let mut acc: BTreeMap<&str, BTreeMap<u64, (Vec<f64>, usize)>> = BTreeMap::new();
    for t in traces {
        if !order.contains(&t.vector_id.as_str()) {
            order.push(&t.vector_id);
        }
        let curve = normalized(t)?;
        let slot = acc
            .entry(&t.vector_id)
            .or_default()
            .entry(t.seed)
            .or_insert_with(|| (vec![0.0; horizon], 0));
        for (s, v) in slot.0.iter_mut().zip(&curve) {
            *s += v;
        }
        slot.1 += 1;
    }
    Ok(order
        .into_iter()
        .map(|id| {
            let per_seed: Vec<Vec<f64>> = acc[id]
                .values()
                .map(|(sum, n)| sum.iter().map(|s| s / *n as f64).collect())
                .collect();
            let n = per_seed.len();
            let mean: Vec<f64> = (0..horizon)
                .map(|i| per_seed.iter().map(|c| c[i]).sum::<f64>() / n as f64)
                .collect();
            let final_mean = mean.last().copied().unwrap_or(0.0);
            let final_stderr = if n > 1 && horizon > 0 {
                let var = per_seed
                    .iter()
                    .map(|c| (c[horizon - 1] - final_mean).powi(2))
                    .sum::<f64>()
                    / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            NormalizedCurve {
                vector_id: id.to_string(),
                mean,
                final_mean,
                final_stderr,
                n_seeds: n,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproduceOptions {
    pub horizon: usize,
    pub n_seeds: usize,
    /// Fixed exploration length; [`capped_t_prime`] when absent.
    pub t_prime: Option<usize>,
    pub normalization: Normalization,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        Self {
            horizon: 30_000,
            n_seeds: 5,
            t_prime: None,
            normalization: Normalization::PerRoundOptimum,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub summaries: Vec<RunSummary>,
    pub curves: Vec<NormalizedCurve>,
}

/// Three setups, six privacy orderings and seeds `1..=n_seeds`. Writes the
/// round and summary files to `out_dir` when given.
pub fn reproduce_experiment(out_dir: Option<&Path>, opts: &ReproduceOptions) -> Result<Reproduction> {
    let seeds: Vec<u64> = (1..=opts.n_seeds as u64).collect();
    let mut cfgs = Vec::with_capacity(3);
    for setup in 1..=3 {
        let mut cfg = ExperimentConfig::experiment(setup, opts.horizon, seeds.clone())?;
        let t_prime = match opts.t_prime {
            Some(t) => t,
            None => {
                // Every ordering shares the same largest level, so one value
                // serves the whole sweep.
                let mut t = 0;
                for a in cfg.sweep()? {
                    t = t.max(capped_t_prime(&cfg, &a, opts.horizon)?);
                }
                t
            }
        };
        info!("setup {setup}: exploration length {t_prime} of {}", opts.horizon);
        cfg.t_prime_override = Some(t_prime);
        cfgs.push(cfg);
    }
    let (summaries, traces) = run_sweep(&cfgs, out_dir)?;
    let curves = normalized_average(&traces, opts.normalization)?;
    Ok(Reproduction { summaries, curves })
}
