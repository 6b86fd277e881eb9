//! Monte Carlo estimates of tail probabilities and trend summaries.
//!
//! Replication `i` uses the seed `derive_seed(seed, i)`; results are merged
//! in replication order, so reports do not depend on thread scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::bernstein_tail_bound;
use super::typicality::TypicalityChecker;
use crate::counts::ContextCounts;
use crate::error::{Error, Result};
use crate::likelihood::{lil_statistic, mixture_kernel, DeltaTracker, StepTerms};
use crate::model::{MarkovModel, Symbol};
use crate::penalty::{cutoff_value, CutoffSpec};
use crate::rng::derive_seed;

/// Smallest replication count accepted by the tail checks.
pub const MIN_REPLICATIONS: u64 = 10_000;

/// Ordinary least squares fit: `(slope, intercept, r_squared)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, my - slope * mx, r2))
}

fn binomial_margin(p: f64, reps: u64) -> f64 {
    3.0 * (p * (1.0 - p) / reps as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernsteinMcRow {
    pub alpha: f64,
    pub empirical: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernsteinMcReport {
    pub replications: u64,
    pub n: usize,
    pub r: usize,
    pub k: f64,
    pub big_r: f64,
    /// Fraction of replications with `R_n <= R`.
    pub norm_below_r: f64,
    pub rows: Vec<BernsteinMcRow>,
    pub all_pass: bool,
}

/// Frequency of `{max_{j<=n} M_j >= alpha and R_n <= R}` for the mixture of
/// `candidate` with `truth`, against `exp(-alpha^2 / (2 (K alpha + R)))`
/// with `K = 2`.
#[allow(clippy::too_many_arguments)]
pub fn bernstein_mc_check(
    truth: &MarkovModel,
    candidate: &MarkovModel,
    r: usize,
    n: usize,
    alpha_grid: &[f64],
    big_r: f64,
    replications: u64,
    seed: u64,
) -> Result<BernsteinMcReport> {
    if replications < MIN_REPLICATIONS {
        return Err(Error::InvalidParameter(format!("replications = {replications} is below {MIN_REPLICATIONS}")));
    }
    let k = 2.0;
    let mix = mixture_kernel(candidate, truth, r)?;
    let terms = StepTerms::new(truth, &mix)?;
    let draws = (0..replications)
        .into_par_iter()
        .map(|i| {
            let path = truth.sample_path(n, derive_seed(seed, i))?.symbols;
            let (mut m, mut max_m, mut norm) = (0.0f64, 0.0f64, 0.0);
            terms.walk(&path, n, |_, ctx, lr| {
                m += lr + terms.compensator[ctx];
                max_m = max_m.max(m);
                norm += terms.bernstein[ctx];
            })?;
            Ok((max_m, norm))
        })
        .collect::<Result<Vec<_>>>()?;
    let below = draws.iter().filter(|(_, norm)| *norm <= big_r).count();
    let rows = alpha_grid
        .iter()
        .map(|&alpha| {
            let hits = draws.iter().filter(|(mx, norm)| *mx >= alpha && *norm <= big_r).count();
            let empirical = hits as f64 / replications as f64;
            let bound = bernstein_tail_bound(alpha, k, big_r)?;
            let margin = binomial_margin(bound, replications);
            Ok(BernsteinMcRow { alpha, empirical, bound, margin, pass: empirical <= bound + margin })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BernsteinMcReport {
        replications,
        n,
        r,
        k,
        big_r,
        norm_below_r: below as f64 / replications as f64,
        all_pass: rows.iter().all(|row| row.pass),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationTailRow {
    pub eps: f64,
    pub frequency: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationTailReport {
    pub replications: u64,
    pub n: usize,
    pub r: usize,
    /// Frequency of the typical event on its own.
    pub typical_frequency: f64,
    pub rows: Vec<DeviationTailRow>,
    pub nonincreasing: bool,
    /// Fit of `ln(frequency)` against `eps` over rows with `frequency > 10 / replications`.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r_squared: Option<f64>,
    pub points_used: usize,
}

/// Frequency of `{F_n and max_{i=n..2n} Delta_{i,r} >= eps}` over paths of length `2n`.
#[allow(clippy::too_many_arguments)]
pub fn deviation_tail_mc(
    truth: &MarkovModel,
    r: usize,
    n: usize,
    eps_grid: &[f64],
    replications: u64,
    eta: f64,
    rho: usize,
    seed: u64,
) -> Result<DeviationTailReport> {
    if r <= truth.true_order() {
        return Err(Error::InvalidParameter(format!("order {r} must exceed the true order {}", truth.true_order())));
    }
    if replications == 0 {
        return Err(Error::InvalidParameter("replications must be at least 1".into()));
    }
    if eps_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("eps grid must be increasing".into()));
    }
    if n <= r {
        return Err(Error::OrderTooLarge { order: r, n });
    }
    let checker = TypicalityChecker::new(truth, rho)?;
    let draws = (0..replications)
        .into_par_iter()
        .map(|i| {
            let path = truth.sample_path(2 * n, derive_seed(seed, i))?.symbols;
            if !checker.event_f(truth, &path, eta)? {
                return Ok(None);
            }
            let mut tracker = DeltaTracker::new(truth, r)?;
            let mut best = 0.0f64;
            for (k, &s) in path.iter().enumerate() {
                tracker.push(s)?;
                if k + 1 >= n {
                    best = best.max(tracker.delta());
                }
            }
            Ok(Some(best))
        })
        .collect::<Result<Vec<_>>>()?;
    let typical: Vec<f64> = draws.into_iter().flatten().collect();
    let reps = replications as f64;
    let rows: Vec<DeviationTailRow> = eps_grid
        .iter()
        .map(|&eps| {
            let count = typical.iter().filter(|&&d| d >= eps).count();
            DeviationTailRow { eps, frequency: count as f64 / reps, count }
        })
        .collect();
    let nonincreasing = rows.windows(2).all(|w| w[1].count <= w[0].count);
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter(|row| row.frequency > 10.0 / reps).map(|row| (row.eps, row.frequency.ln())).unzip();
    let fit = least_squares(&xs, &ys);
    Ok(DeviationTailReport {
        replications,
        n,
        r,
        typical_frequency: typical.len() as f64 / reps,
        rows,
        nonincreasing,
        slope: fit.map(|f| f.0),
        intercept: fit.map(|f| f.1),
        r_squared: fit.map(|f| f.2),
        points_used: xs.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LilSeries {
    pub seed: u64,
    pub checkpoints: Vec<usize>,
    /// Likelihood-ratio supremum; zero when no order lies in range.
    pub raw: Vec<f64>,
    /// `raw / ln ln n`.
    pub normalized: Vec<f64>,
    pub max: f64,
    /// Least-squares slope of `normalized` against `log2 n`.
    pub slope: f64,
}

/// The normalized likelihood-ratio supremum along one growing path.
pub fn lil_trajectory(truth: &MarkovModel, checkpoints: &[usize], cutoff: &CutoffSpec, seed: u64) -> Result<LilSeries> {
    if checkpoints.is_empty() || checkpoints[0] < 16 || checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("checkpoints must be increasing and at least 16".into()));
    }
    let m = truth.alphabet_size();
    let r_star = truth.true_order();
    let mut cap = 0;
    for &n in checkpoints {
        cap = cap.max(cutoff_value(cutoff, n as f64, m)?);
    }
    let mut counts = ContextCounts::new(truth.alphabet(), cap.max(r_star))?;
    let mut sampler = truth.sampler(seed);
    let mut buf: Vec<Symbol> = Vec::new();
    let mut raw = Vec::with_capacity(checkpoints.len());
    let mut normalized = Vec::with_capacity(checkpoints.len());
    for &n in checkpoints {
        buf.clear();
        sampler.fill(&mut buf, n - counts.n() as usize);
        counts.extend(&buf)?;
        let kappa = cutoff_value(cutoff, n as f64, m)?;
        let lil = lil_statistic(&counts, r_star, kappa)?;
        raw.push(lil.value);
        normalized.push(lil.value / (n as f64).ln().ln());
    }
    let xs: Vec<f64> = checkpoints.iter().map(|&n| (n as f64).log2()).collect();
    let slope = least_squares(&xs, &normalized).map_or(0.0, |f| f.0);
    let max = normalized.iter().copied().fold(0.0, f64::max);
    Ok(LilSeries { seed, checkpoints: checkpoints.to_vec(), raw, normalized, max, slope })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LilSummary {
    pub series: Vec<LilSeries>,
    /// Mean of the normalized series across seeds, per checkpoint.
    pub mean_normalized: Vec<f64>,
    /// Slope of `mean_normalized` against `log2 n`.
    pub slope: f64,
    pub max: f64,
}

pub fn lil_trajectory_seeds(
    truth: &MarkovModel,
    checkpoints: &[usize],
    cutoff: &CutoffSpec,
    seeds: u64,
    seed: u64,
) -> Result<LilSummary> {
    if seeds == 0 {
        return Err(Error::InvalidParameter("at least one seed is required".into()));
    }
    let series = (0..seeds)
        .into_par_iter()
        .map(|i| lil_trajectory(truth, checkpoints, cutoff, derive_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let mean_normalized: Vec<f64> =
        (0..checkpoints.len()).map(|k| series.iter().map(|s| s.normalized[k]).sum::<f64>() / seeds as f64).collect();
    let xs: Vec<f64> = checkpoints.iter().map(|&n| (n as f64).log2()).collect();
    let slope = least_squares(&xs, &mean_normalized).map_or(0.0, |f| f.0);
    let max = series.iter().map(|s| s.max).fold(0.0, f64::max);
    Ok(LilSummary { series, mean_normalized, slope, max })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypicalityTrendRow {
    pub n: usize,
    pub frequency: f64,
}

/// Frequency of the typical event on paths of length `2n`, for each `n`.
pub fn typicality_trend(
    truth: &MarkovModel,
    ns: &[usize],
    eta: f64,
    rho: usize,
    replications: u64,
    seed: u64,
) -> Result<Vec<TypicalityTrendRow>> {
    let checker = TypicalityChecker::new(truth, rho)?;
    ns.iter()
        .map(|&n| {
            let hits = (0..replications)
                .into_par_iter()
                .map(|i| {
                    let path = truth.sample_path(2 * n, derive_seed(seed ^ n as u64, i))?.symbols;
                    checker.event_f(truth, &path, eta)
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .filter(|&b| b)
                .count();
            Ok(TypicalityTrendRow { n, frequency: hits as f64 / replications as f64 })
        })
        .collect()
}
