//! Square-root grid brackets around a candidate kernel.
//!
//! With `s(a) = sqrt(P*(a)) / beta`, the lower bracket is
//! `(floor(s sqrt(P(b|a))) / s)^2` and the upper bracket uses `ceil`, so that
//! `sqrt(gamma) - sqrt(lambda) <= beta / sqrt(P*(a))`. Contexts of zero
//! stationary mass are left unconstrained.

use serde::{Deserialize, Serialize};

use super::phi;
use crate::error::{Error, Result};
use crate::model::{MarkovModel, Symbol};

/// Scaled values within this relative distance of an integer are treated as on the grid.
const GRID_SNAP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketGrid {
    pub order: usize,
    pub alphabet_size: usize,
    pub beta: f64,
    /// Candidate kernel lifted to `order`.
    pub kernel: Vec<f64>,
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Grid indices `floor` and `ceil` of `s sqrt(P)`; zero on unsupported contexts.
    pub lower_index: Vec<u64>,
    pub upper_index: Vec<u64>,
    /// Stationary mass of each context.
    pub context_mass: Vec<f64>,
}

/// Grid indices `(floor, ceil)` of `s sqrt(p)`, equal when it sits on the grid.
pub(crate) fn cell(s: f64, p: f64) -> (u64, u64) {
    let v = s * p.sqrt();
    let nearest = v.round();
    if (v - nearest).abs() <= GRID_SNAP * v.max(1.0) {
        (nearest as u64, nearest as u64)
    } else {
        (v.floor() as u64, v.ceil() as u64)
    }
}

pub fn bracket_grid(truth: &MarkovModel, candidate: &MarkovModel, r: usize, beta: f64) -> Result<BracketGrid> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be positive")));
    }
    if candidate.alphabet_size() != truth.alphabet_size() {
        return Err(Error::InvalidParameter("alphabet sizes differ".into()));
    }
    if r < candidate.order() {
        return Err(Error::OrderBelowTruth { order: r, true_order: candidate.order() });
    }
    let m = truth.alphabet_size();
    let context_mass = truth.block_probabilities(r)?;
    let cand_mod = candidate.num_contexts();
    let cells = context_mass.len() * m;
    let mut grid = BracketGrid {
        order: r,
        alphabet_size: m,
        beta,
        kernel: Vec::with_capacity(cells),
        lambda: Vec::with_capacity(cells),
        gamma: Vec::with_capacity(cells),
        lower_index: Vec::with_capacity(cells),
        upper_index: Vec::with_capacity(cells),
        context_mass: context_mass.clone(),
    };
    for (ctx, &mass) in context_mass.iter().enumerate() {
        let row = candidate.row(ctx % cand_mod);
        grid.kernel.extend_from_slice(row);
        if mass <= 0.0 {
            grid.lambda.extend(std::iter::repeat_n(0.0, m));
            grid.gamma.extend(std::iter::repeat_n(1.0, m));
            grid.lower_index.extend(std::iter::repeat_n(0, m));
            grid.upper_index.extend(std::iter::repeat_n(0, m));
            continue;
        }
        let s = mass.sqrt() / beta;
        for &p in row {
            let (lo, hi) = cell(s, p);
            if lo == hi {
                grid.lambda.push(p);
                grid.gamma.push(p);
            } else {
                grid.lambda.push((lo as f64 / s).powi(2));
                grid.gamma.push((hi as f64 / s).powi(2));
            }
            grid.lower_index.push(lo);
            grid.upper_index.push(hi);
        }
    }
    Ok(grid)
}

impl BracketGrid {
    /// Number of cells violating `lambda <= P <= gamma` or the root-gap bound.
    pub fn pointwise_violations(&self) -> usize {
        let m = self.alphabet_size;
        let mut bad = 0;
        for (ctx, &mass) in self.context_mass.iter().enumerate() {
            if mass <= 0.0 {
                continue;
            }
            let limit = self.beta / mass.sqrt();
            for b in 0..m {
                let k = ctx * m + b;
                let (l, p, g) = (self.lambda[k], self.kernel[k], self.gamma[k]);
                let gap = g.sqrt() - l.sqrt();
                if !(l <= p && p <= g) || gap > limit * (1.0 + 1e-12) {
                    bad += 1;
                }
            }
        }
        bad
    }

    /// Identifies the bracket: grid indices over supported contexts.
    pub fn key(&self) -> (Vec<u64>, Vec<u64>) {
        (self.lower_index.clone(), self.upper_index.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathBracketReport {
    /// Steps with `Lambda_i <= xi_i <= Upsilon_i` violated.
    pub violations: usize,
    pub steps: usize,
    /// `8 sum_i sum_b P*(b|ctx_i) phi((Upsilon - Lambda)(b|ctx_i) / 2)`.
    pub phi_gap: f64,
}

/// Walks a path and compares the log-ratio of the candidate mixture with
/// the log-ratios of the bracket mixtures.
pub fn path_bracket_check(truth: &MarkovModel, grid: &BracketGrid, path: &[Symbol]) -> Result<PathBracketReport> {
    let m = grid.alphabet_size;
    let r = grid.order;
    if r < truth.true_order() {
        return Err(Error::OrderBelowTruth { order: r, true_order: truth.true_order() });
    }
    let rows = grid.context_mass.len();
    let log_mix = |bound: f64, q: f64| (0.5 * (bound + q) / q).ln();
    // Expected phi gap per context.
    let mut gap_per_ctx = vec![0.0; rows];
    for (ctx, gap) in gap_per_ctx.iter_mut().enumerate() {
        let q = truth.true_row(ctx);
        for (b, &qb) in q.iter().enumerate().filter(|(_, &qb)| qb > 0.0) {
            let k = ctx * m + b;
            let width = log_mix(grid.gamma[k], qb) - log_mix(grid.lambda[k], qb);
            *gap += qb * phi(0.5 * width);
        }
        *gap *= 8.0;
    }
    let mut ctx = 0usize;
    let mut report = PathBracketReport { violations: 0, steps: 0, phi_gap: 0.0 };
    for (i, &s) in path.iter().enumerate() {
        let b = s as usize;
        if b >= m {
            return Err(Error::SymbolOutOfRange { symbol: s, position: i, size: m });
        }
        if i >= r {
            let q = truth.true_row(ctx)[b];
            if q <= 0.0 {
                return Err(Error::ImpossiblePath);
            }
            let k = ctx * m + b;
            let lower = log_mix(grid.lambda[k], q);
            let xi = log_mix(grid.kernel[k], q);
            let upper = log_mix(grid.gamma[k], q);
            if !(lower <= xi && xi <= upper) {
                report.violations += 1;
            }
            report.steps += 1;
            report.phi_gap += gap_per_ctx[ctx];
        }
        ctx = (ctx * m + b) % rows;
    }
    Ok(report)
}
