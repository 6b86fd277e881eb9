use crate::counts::ContextCounts;
use crate::error::{Error, Result};
use crate::likelihood::{MixtureKernel, StepTerms};
use crate::model::{MarkovModel, Symbol};

fn row_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2)).sum()
}

fn check_pair(a: &MixtureKernel, b: &MixtureKernel) -> Result<()> {
    if a.order() != b.order() {
        return Err(Error::OrderMismatch(a.order(), b.order()));
    }
    if a.alphabet_size() != b.alphabet_size() {
        return Err(Error::InvalidParameter("alphabet sizes differ".into()));
    }
    Ok(())
}

/// `H_n = sum_a N(a) sum_b (sqrt(A(b|a)) - sqrt(B(b|a)))^2`.
pub fn hellinger_path_distance(counts: &ContextCounts, a: &MixtureKernel, b: &MixtureKernel) -> Result<f64> {
    check_pair(a, b)?;
    let r = a.order();
    let mut total = 0.0;
    for (ctx, n) in counts.nonzero_contexts(r)? {
        let ctx = ctx as usize;
        total += n as f64 * row_distance(a.row(ctx), b.row(ctx));
    }
    Ok(total)
}

/// `H = sum_a P*(a) sum_b (sqrt(A(b|a)) - sqrt(B(b|a)))^2` under the stationary block law.
pub fn hellinger_stationary_distance(truth: &MarkovModel, a: &MixtureKernel, b: &MixtureKernel) -> Result<f64> {
    check_pair(a, b)?;
    let block = truth.block_probabilities(a.order())?;
    Ok(block
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(ctx, &p)| p * row_distance(a.row(ctx), b.row(ctx)))
        .sum())
}

/// `R_n = 8 sum_{i=r+1}^{up_to} sum_b P*(b|ctx_i) phi(|log(mix(b|ctx_i) / P*(b|ctx_i))| / 2)`.
pub fn bernstein_norm(truth: &MarkovModel, mix: &MixtureKernel, path: &[Symbol], up_to: usize) -> Result<f64> {
    let terms = StepTerms::new(truth, mix)?;
    let mut total = 0.0;
    terms.walk(path, up_to, |_, ctx, _| total += terms.bernstein[ctx])?;
    Ok(total)
}

/// Stationary expectation of `R_n`: `(n - r) sum_a P*(a) R_step(a)`.
pub fn expected_bernstein_norm(truth: &MarkovModel, mix: &MixtureKernel, n: usize) -> Result<f64> {
    let terms = StepTerms::new(truth, mix)?;
    let block = truth.block_probabilities(mix.order())?;
    let per_step: f64 = block.iter().zip(&terms.bernstein).map(|(p, b)| p * b).sum();
    Ok(n.saturating_sub(mix.order()) as f64 * per_step)
}
