//! Penalized maximum-likelihood order estimation and the recovery experiment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counts::ContextCounts;
use crate::error::{Error, Result};
use crate::likelihood::{lil_statistic, max_loglik};
use crate::model::{MarkovModel, Symbol};
use crate::penalty::{cutoff_value, penalty_value, CutoffSpec, PenaltySpec};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub order: usize,
    pub loglik: f64,
    pub penalty: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub chosen_order: usize,
    pub table: Vec<ScoreRow>,
    pub kappa_used: usize,
    /// Another order reached the same maximal score.
    pub tie_broken: bool,
}

/// Argmax of `loglik[r] - penalty[r]`, smallest `r` on ties. Returns the
/// chosen order and whether a tie was broken.
pub fn select_order(logliks: &[f64], penalties: &[f64]) -> Result<(usize, bool)> {
    if logliks.is_empty() || logliks.len() != penalties.len() {
        return Err(Error::InvalidParameter(format!("score table lengths {} and {}", logliks.len(), penalties.len())));
    }
    let mut best = 0;
    let mut best_score = logliks[0] - penalties[0];
    let mut tie = false;
    for (r, (l, p)) in logliks.iter().zip(penalties).enumerate().skip(1) {
        let s = l - p;
        if s > best_score {
            best = r;
            best_score = s;
            tie = false;
        } else if s == best_score {
            tie = true;
        }
    }
    Ok((best, tie))
}

pub fn estimate_order(counts: &ContextCounts, pen: &PenaltySpec, cut: &CutoffSpec) -> Result<EstimateResult> {
    let m = counts.alphabet().size();
    let n = counts.n() as f64;
    let kappa = cutoff_value(cut, n, m)?;
    if counts.depth_cap() + 1 < kappa {
        return Err(Error::DepthCapTooSmall { cap: counts.depth_cap(), required: kappa - 1 });
    }
    let kappa = kappa.min(counts.n() as usize);
    let table = (0..kappa)
        .map(|r| {
            let loglik = max_loglik(counts, r)?;
            let penalty = penalty_value(pen, n, r, m)?;
            Ok(ScoreRow { order: r, loglik, penalty, score: loglik - penalty })
        })
        .collect::<Result<Vec<_>>>()?;
    let logliks: Vec<f64> = table.iter().map(|row| row.loglik).collect();
    let penalties: Vec<f64> = table.iter().map(|row| row.penalty).collect();
    let (chosen_order, tie_broken) = select_order(&logliks, &penalties)?;
    Ok(EstimateResult { chosen_order, table, kappa_used: kappa, tie_broken })
}

/// Deepest order any length in `n_grid` can query, plus one.
pub fn depth_cap_for(cut: &CutoffSpec, n_grid: &[usize], m: usize) -> Result<usize> {
    let mut cap = 0;
    for &n in n_grid {
        cap = cap.max(cutoff_value(cut, n as f64, m)?);
    }
    Ok(cap)
}

/// One record per (replication, n, penalty).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub n: usize,
    pub penalty: String,
    pub cutoff: String,
    pub replication: u64,
    pub chosen_order: usize,
    pub true_order: usize,
    /// `None` when no order lies strictly between the true order and the cutoff.
    pub lil_stat: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub n: usize,
    pub penalty: String,
    pub replications: usize,
    pub recovered: usize,
    pub under: usize,
    pub over: usize,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTable {
    pub rows: Vec<ExperimentRow>,
    pub summary: Vec<RecoveryRow>,
}

fn check_grid(n_grid: &[usize]) -> Result<()> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("n_grid must be nonempty and strictly increasing".into()));
    }
    Ok(())
}

/// An experiment row together with the score table behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub row: ExperimentRow,
    pub estimate: EstimateResult,
}

/// Evaluates every penalty at every grid length on prefixes of `symbols`,
/// which must cover the largest grid length.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_path(
    model: &MarkovModel,
    symbols: &[Symbol],
    pens: &[PenaltySpec],
    cut: &CutoffSpec,
    n_grid: &[usize],
    replication: u64,
    seed: u64,
) -> Result<Vec<Evaluation>> {
    check_grid(n_grid)?;
    let last = *n_grid.last().unwrap();
    if symbols.len() < last {
        return Err(Error::InvalidParameter(format!("path of length {} is shorter than n = {last}", symbols.len())));
    }
    let m = model.alphabet_size();
    let cap = depth_cap_for(cut, n_grid, m)?;
    let mut counts = ContextCounts::new(model.alphabet(), cap)?;
    let r_star = model.true_order();
    let mut out = Vec::with_capacity(n_grid.len() * pens.len());
    for &n in n_grid {
        counts.extend(&symbols[counts.n() as usize..n])?;
        let kappa = cutoff_value(cut, n as f64, m)?.min(n);
        let lil = lil_statistic(&counts, r_star, kappa)?;
        for pen in pens {
            let estimate = estimate_order(&counts, pen, cut)?;
            let row = ExperimentRow {
                n,
                penalty: pen.label(),
                cutoff: cut.label(),
                replication,
                chosen_order: estimate.chosen_order,
                true_order: r_star,
                lil_stat: (!lil.empty_range).then_some(lil.value),
                seed,
            };
            out.push(Evaluation { row, estimate });
        }
    }
    Ok(out)
}

/// Samples one path of the largest grid length and evaluates it.
pub fn run_replication(
    model: &MarkovModel,
    pens: &[PenaltySpec],
    cut: &CutoffSpec,
    n_grid: &[usize],
    replication: u64,
    seed: u64,
) -> Result<Vec<ExperimentRow>> {
    check_grid(n_grid)?;
    let path = model.sample_path(*n_grid.last().unwrap(), seed)?;
    Ok(evaluate_path(model, &path.symbols, pens, cut, n_grid, replication, seed)?.into_iter().map(|e| e.row).collect())
}

/// Runs `replications` growing paths with seeds `derive_seed(seed, i)` and
/// evaluates all penalties on the same paths. Rows are ordered by
/// replication, then `n`, then penalty.
pub fn sweep_experiment(
    model: &MarkovModel,
    pens: &[PenaltySpec],
    cut: &CutoffSpec,
    n_grid: &[usize],
    replications: u64,
    seed: u64,
) -> Result<RecoveryTable> {
    check_grid(n_grid)?;
    if pens.is_empty() {
        return Err(Error::InvalidParameter("at least one penalty is required".into()));
    }
    if replications == 0 {
        return Err(Error::InvalidParameter("replications must be at least 1".into()));
    }
    for p in pens {
        p.validate()?;
    }
    cut.validate()?;
    model.stationary_distribution()?;
    let per_rep = (0..replications)
        .into_par_iter()
        .map(|i| run_replication(model, pens, cut, n_grid, i, derive_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<ExperimentRow> = per_rep.into_iter().flatten().collect();
    let summary = summarize(&rows, n_grid, pens);
    Ok(RecoveryTable { rows, summary })
}

pub fn consistency_experiment(
    model: &MarkovModel,
    pen: &PenaltySpec,
    cut: &CutoffSpec,
    n_grid: &[usize],
    replications: u64,
    seed: u64,
) -> Result<RecoveryTable> {
    sweep_experiment(model, std::slice::from_ref(pen), cut, n_grid, replications, seed)
}

/// Recovery counts per (n, penalty) in grid order.
pub fn summarize(rows: &[ExperimentRow], n_grid: &[usize], pens: &[PenaltySpec]) -> Vec<RecoveryRow> {
    let mut out = Vec::with_capacity(n_grid.len() * pens.len());
    for &n in n_grid {
        for pen in pens {
            let label = pen.label();
            let (mut total, mut recovered, mut under, mut over) = (0, 0, 0, 0);
            for row in rows.iter().filter(|r| r.n == n && r.penalty == label) {
                total += 1;
                match row.chosen_order.cmp(&row.true_order) {
                    std::cmp::Ordering::Equal => recovered += 1,
                    std::cmp::Ordering::Less => under += 1,
                    std::cmp::Ordering::Greater => over += 1,
                }
            }
            let rate = if total == 0 { 0.0 } else { recovered as f64 / total as f64 };
            out.push(RecoveryRow { n, penalty: label, replications: total, recovered, under, over, rate });
        }
    }
    out
}

/// Per-symbol log-likelihood loss of the best order-`r` predictor against
/// the true kernel under the stationary law:
/// `E[log P*(X | past)] - E[log Q_r(X | last r symbols)]`.
pub fn underestimation_gap(model: &MarkovModel, r: usize) -> Result<f64> {
    let s = model.true_order();
    if r >= s {
        return Ok(0.0);
    }
    let m = model.alphabet_size();
    let block = model.block_probabilities(s)?;
    let coarse = model.alphabet().contexts(r)? as usize;
    let mut joint = vec![0.0; coarse * m];
    for (a, &pa) in block.iter().enumerate() {
        let c = a % coarse;
        for (b, &p) in model.true_row(a).iter().enumerate() {
            joint[c * m + b] += pa * p;
        }
    }
    let mut gap = 0.0;
    for (a, &pa) in block.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        let c = a % coarse;
        let row_mass: f64 = joint[c * m..(c + 1) * m].iter().sum();
        for (b, &p) in model.true_row(a).iter().enumerate() {
            if p > 0.0 {
                let q = joint[c * m + b] / row_mass;
                gap += pa * p * (p / q).ln();
            }
        }
    }
    Ok(gap.max(0.0))
}
