use serde::{Deserialize, Serialize};

use crate::counts::ContextCounts;
use crate::error::{Error, Result};
use crate::model::{MarkovModel, Symbol};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypicalityReport {
    pub eta: f64,
    pub rho: usize,
    /// `max_a |N(a) / ((n - r) P*(a)) - 1|` over contexts with `P*(a) > 0`, for `r < rho`.
    pub deviations: Vec<f64>,
    pub holds: bool,
}

/// Stationary block laws up to a fixed depth, reused across many paths.
#[derive(Clone, Debug)]
pub struct TypicalityChecker {
    rho: usize,
    blocks: Vec<Vec<f64>>,
}

impl TypicalityChecker {
    pub fn new(truth: &MarkovModel, rho: usize) -> Result<Self> {
        let blocks = (0..rho).map(|r| truth.block_probabilities(r)).collect::<Result<Vec<_>>>()?;
        Ok(TypicalityChecker { rho, blocks })
    }

    pub fn rho(&self) -> usize {
        self.rho
    }

    pub fn deviations(&self, counts: &ContextCounts) -> Result<Vec<f64>> {
        if self.rho > counts.depth_cap() + 1 {
            return Err(Error::DepthCapTooSmall { cap: counts.depth_cap(), required: self.rho - 1 });
        }
        let n = counts.n();
        self.blocks
            .iter()
            .enumerate()
            .map(|(r, block)| {
                if n <= r as u64 {
                    return Err(Error::OrderTooLarge { order: r, n: n as usize });
                }
                let windows = (n - r as u64) as f64;
                let mut worst = 0.0f64;
                for (a, &p) in block.iter().enumerate() {
                    if p > 0.0 {
                        let observed = counts.context_count(r, a as u64)? as f64;
                        worst = worst.max((observed / (windows * p) - 1.0).abs());
                    }
                }
                Ok(worst)
            })
            .collect()
    }

    pub fn check(&self, counts: &ContextCounts, eta: f64) -> Result<TypicalityReport> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidParameter(format!("eta = {eta} must lie in (0, 1)")));
        }
        let deviations = self.deviations(counts)?;
        let holds = deviations.iter().all(|&d| d < eta);
        Ok(TypicalityReport { eta, rho: self.rho, deviations, holds })
    }

    /// Typicality at both `n` and `2n` for a path of length `2n`.
    pub fn event_f(&self, truth: &MarkovModel, path: &[Symbol], eta: f64) -> Result<bool> {
        if !path.len().is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("path length {} is odd", path.len())));
        }
        let n = path.len() / 2;
        if 2 * self.rho > n {
            return Err(Error::InvalidParameter(format!("rho = {} exceeds n / 2 = {}", self.rho, n / 2)));
        }
        let cap = self.rho.saturating_sub(1);
        let mut counts = ContextCounts::from_symbols(&path[..n], truth.alphabet(), cap)?;
        if !self.check(&counts, eta)?.holds {
            return Ok(false);
        }
        counts.extend(&path[n..])?;
        Ok(self.check(&counts, eta)?.holds)
    }
}

pub fn typicality_check(truth: &MarkovModel, counts: &ContextCounts, eta: f64, rho: usize) -> Result<TypicalityReport> {
    TypicalityChecker::new(truth, rho)?.check(counts, eta)
}

pub fn event_f(truth: &MarkovModel, path: &[Symbol], eta: f64, rho: usize) -> Result<bool> {
    TypicalityChecker::new(truth, rho)?.event_f(truth, path, eta)
}
