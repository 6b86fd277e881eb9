//! Instance-level checks of the deterministic inequalities between the
//! Bernstein norm, the Hellinger distances and the bracket grid.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::bracket::{bracket_grid, path_bracket_check};
use super::hellinger::{bernstein_norm, hellinger_path_distance, hellinger_stationary_distance};
use super::params::BoundParams;
use super::typicality::TypicalityChecker;
use super::{entropy_bound, BracketGrid};
use crate::counts::ContextCounts;
use crate::error::{Error, Result};
use crate::likelihood::{mixture_kernel, MixtureKernel};
use crate::model::{MarkovModel, Symbol};
use crate::rng::{derive_seed, random_simplex, rng_from_seed, uniform};

/// Relative slack allowed for floating-point rounding in exact inequalities.
const REL_TOL: f64 = 1e-9;

/// A true chain, two candidate chains of order `r` and a path from the truth.
#[derive(Clone, Debug)]
pub struct Instance {
    pub truth: MarkovModel,
    pub candidate: MarkovModel,
    pub other: MarkovModel,
    pub r: usize,
    pub path: Vec<Symbol>,
}

/// Draws an instance with a true order strictly below `r`.
pub fn random_instance(seed: u64, m: usize, r: usize, path_len: usize) -> Result<Instance> {
    if r == 0 {
        return Err(Error::InvalidParameter("instances need r >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let true_order = (uniform(&mut rng) * r as f64) as usize;
    let truth = MarkovModel::random(m, true_order.min(r - 1), &mut rng)?;
    let candidate = MarkovModel::random(m, r, &mut rng)?;
    let other = MarkovModel::random(m, r, &mut rng)?;
    let path = truth.sample_path(path_len, derive_seed(seed, 0))?.symbols;
    Ok(Instance { truth, candidate, other, r, path })
}

/// Deliberate corruption of the mixture, used to confirm that a check can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureFault {
    #[default]
    None,
    /// `(P + P*) / 8`: rows sum to 1/4.
    #[serde(alias = "unnormalized_mixture")]
    Unnormalized,
}

impl MixtureFault {
    pub fn apply(self, mix: MixtureKernel) -> MixtureKernel {
        match self {
            MixtureFault::None => mix,
            MixtureFault::Unnormalized => {
                let table = mix.table().iter().map(|p| p / 4.0).collect();
                MixtureKernel::from_table_unchecked(mix.alphabet_size(), mix.order(), table)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceCheckReport {
    pub instances: usize,
    /// Instances on which the inequality was evaluated.
    pub evaluated: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` seen; at most 1 when the inequality holds.
    pub worst_ratio: f64,
}

impl InstanceCheckReport {
    fn new(instances: usize) -> Self {
        InstanceCheckReport { instances, evaluated: 0, violations: 0, worst_ratio: 0.0 }
    }

    fn record(&mut self, lhs: f64, rhs: f64) {
        if rhs > 0.0 {
            self.worst_ratio = self.worst_ratio.max(lhs / rhs);
        } else if lhs > 0.0 {
            self.worst_ratio = f64::INFINITY;
        }
        if lhs > rhs * (1.0 + REL_TOL) + f64::MIN_POSITIVE {
            self.violations += 1;
        }
    }

    pub fn pass(&self) -> bool {
        self.violations == 0 && self.evaluated > 0
    }
}

/// `R_n <= 8 H_n(P, P*)` on every instance.
pub fn bernstein_norm_check(instances: &[Instance], fault: MixtureFault) -> Result<InstanceCheckReport> {
    let mut report = InstanceCheckReport::new(instances.len());
    for inst in instances {
        let mix = fault.apply(mixture_kernel(&inst.candidate, &inst.truth, inst.r)?);
        let star = mixture_kernel(&inst.truth, &inst.truth, inst.r)?;
        let counts = ContextCounts::from_symbols(&inst.path, inst.truth.alphabet(), inst.r)?;
        let rn = bernstein_norm(&inst.truth, &mix, &inst.path, inst.path.len())?;
        let hn = hellinger_path_distance(&counts, &mix, &star)?;
        report.evaluated += 1;
        report.record(rn, 8.0 * hn);
    }
    Ok(report)
}

/// On paths of length `2n` where the typical event holds with `rho = r + 1`:
/// `(n - r) H / C4 <= H_n <= (n - r) C4 H` and `H_{2n} <= C3 H_n`, for the
/// pairs (candidate, other) and (candidate, truth).
pub fn hellinger_sandwich_check(instances: &[Instance], params: &BoundParams) -> Result<InstanceCheckReport> {
    let (c3, c4) = (params.c3(), params.c4());
    let mut report = InstanceCheckReport::new(instances.len());
    for inst in instances {
        let r = inst.r;
        if !inst.path.len().is_multiple_of(2) {
            return Err(Error::InvalidParameter("sandwich instances need even path length".into()));
        }
        let n = inst.path.len() / 2;
        let checker = TypicalityChecker::new(&inst.truth, r + 1)?;
        if !checker.event_f(&inst.truth, &inst.path, params.eta)? {
            continue;
        }
        report.evaluated += 1;
        let a = mixture_kernel(&inst.candidate, &inst.truth, r)?;
        let b = mixture_kernel(&inst.other, &inst.truth, r)?;
        let star = mixture_kernel(&inst.truth, &inst.truth, r)?;
        let first = ContextCounts::from_symbols(&inst.path[..n], inst.truth.alphabet(), r)?;
        let full = ContextCounts::from_symbols(&inst.path, inst.truth.alphabet(), r)?;
        for other in [&b, &star] {
            let h = hellinger_stationary_distance(&inst.truth, &a, other)?;
            let hn = hellinger_path_distance(&first, &a, other)?;
            let h2n = hellinger_path_distance(&full, &a, other)?;
            let w = (n - r) as f64;
            report.record(w * h / c4, hn);
            report.record(hn, w * c4 * h);
            report.record(h2n, c3 * hn);
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketingCheckReport {
    pub kernels: usize,
    pub paths_per_kernel: usize,
    pub pointwise_violations: usize,
    pub path_violations: usize,
    /// Paths on which the typical event held and the gap condition was evaluated.
    pub gap_evaluated: usize,
    pub gap_violations: usize,
    /// Largest `phi_gap / delta^2` on evaluated paths.
    pub worst_gap_ratio: f64,
}

impl BracketingCheckReport {
    pub fn pass(&self) -> bool {
        self.pointwise_violations == 0
            && self.path_violations == 0
            && self.gap_violations == 0
            && self.gap_evaluated > 0
    }
}

/// `beta = delta / sqrt(4 C4 (2n - r) m^{r+1})`, the grid spacing making the
/// bracket family satisfy the gap condition at level `delta`.
pub fn bracket_beta(params: &BoundParams, n: usize, r: usize, m: usize, delta: f64) -> f64 {
    delta / (4.0 * params.c4() * (2 * n - r) as f64 * (m as f64).powi(r as i32 + 1)).sqrt()
}

/// Random (truth, candidate) kernels, each bracketed and checked along
/// `paths_per_kernel` sampled paths of length `2n`.
#[allow(clippy::too_many_arguments)]
pub fn bracketing_check(
    kernels: usize,
    paths_per_kernel: usize,
    m: usize,
    r: usize,
    n: usize,
    delta: f64,
    params: &BoundParams,
    seed: u64,
) -> Result<BracketingCheckReport> {
    let beta = bracket_beta(params, n, r, m, delta);
    let mut report = BracketingCheckReport {
        kernels,
        paths_per_kernel,
        pointwise_violations: 0,
        path_violations: 0,
        gap_evaluated: 0,
        gap_violations: 0,
        worst_gap_ratio: 0.0,
    };
    for k in 0..kernels as u64 {
        let inst = random_instance(derive_seed(seed, k), m, r, 2)?;
        let grid = bracket_grid(&inst.truth, &inst.candidate, r, beta)?;
        report.pointwise_violations += grid.pointwise_violations();
        let checker = TypicalityChecker::new(&inst.truth, r + 1)?;
        for j in 0..paths_per_kernel as u64 {
            let path = inst.truth.sample_path(2 * n, derive_seed(derive_seed(seed, k), j + 1))?.symbols;
            let rep = path_bracket_check(&inst.truth, &grid, &path)?;
            report.path_violations += rep.violations;
            if checker.event_f(&inst.truth, &path, params.eta)? {
                report.gap_evaluated += 1;
                let ratio = rep.phi_gap / (delta * delta);
                report.worst_gap_ratio = report.worst_gap_ratio.max(ratio);
                if ratio > 1.0 + REL_TOL {
                    report.gap_violations += 1;
                }
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketCountReport {
    pub sampled: usize,
    pub distinct_brackets: usize,
    pub entropy_bound: f64,
    /// `exp(entropy_bound)`.
    pub count_bound: f64,
}

impl BracketCountReport {
    pub fn pass(&self) -> bool {
        (self.distinct_brackets as f64) <= self.count_bound
    }
}

/// Samples kernels with `H(P, P*) <= sigma` and counts the distinct brackets
/// they fall into at level `delta`.
#[allow(clippy::too_many_arguments)]
pub fn bracket_count_check(
    truth: &MarkovModel,
    r: usize,
    n: usize,
    sigma: f64,
    delta: f64,
    samples: usize,
    params: &BoundParams,
    seed: u64,
) -> Result<BracketCountReport> {
    let m = truth.alphabet_size();
    let bound = entropy_bound(n, r, sigma, delta, m, params.c5(), params.c_entropy())?;
    let beta = bracket_beta(params, n, r, m, delta);
    let star = mixture_kernel(truth, truth, r)?;
    let rows = truth.alphabet().contexts(r)? as usize;
    let mut rng = rng_from_seed(seed);
    let mut keys: HashSet<(Vec<u64>, Vec<u64>)> = HashSet::new();
    let mut accepted = 0;
    let mut attempts = 0usize;
    while accepted < samples {
        attempts += 1;
        if attempts > 1000 * samples.max(1) {
            return Err(Error::InvalidParameter(format!("could not sample the ball of radius {sigma}")));
        }
        let spread = uniform(&mut rng);
        let mut table = Vec::with_capacity(rows * m);
        for ctx in 0..rows {
            let noise = random_simplex(&mut rng, m);
            let t = spread * uniform(&mut rng);
            table.extend(truth.true_row(ctx).iter().zip(&noise).map(|(q, u)| (1.0 - t) * q + t * u));
        }
        let cand = MarkovModel::new(truth.alphabet(), r, table, Some(truth.block_probabilities(r)?))?;
        let mix = mixture_kernel(&cand, truth, r)?;
        if hellinger_stationary_distance(truth, &mix, &star)? > sigma {
            continue;
        }
        accepted += 1;
        let grid: BracketGrid = bracket_grid(truth, &cand, r, beta)?;
        keys.insert(grid.key());
    }
    Ok(BracketCountReport {
        sampled: accepted,
        distinct_brackets: keys.len(),
        entropy_bound: bound,
        count_bound: bound.exp(),
    })
}

/// Exact count of the brackets meeting the ball `H(P, P*) <= sigma` on a
/// binary alphabet, by walking every grid cell of every context row.
///
/// The row distance is convex in `P(1|a)`, so its minimum over a cell is
/// attained at the point of the cell closest to `P*(1|a)`. In the report,
/// `sampled` is the number of row cells visited.
pub fn enumerated_bracket_count(
    truth: &MarkovModel,
    r: usize,
    n: usize,
    sigma: f64,
    delta: f64,
    params: &BoundParams,
) -> Result<BracketCountReport> {
    if truth.alphabet_size() != 2 {
        return Err(Error::InvalidParameter("bracket enumeration needs a binary alphabet".into()));
    }
    if r < truth.true_order() {
        return Err(Error::OrderBelowTruth { order: r, true_order: truth.true_order() });
    }
    let bound = entropy_bound(n, r, sigma, delta, 2, params.c5(), params.c_entropy())?;
    let beta = bracket_beta(params, n, r, 2, delta);
    let mass = truth.block_probabilities(r)?;
    let mut visited = 0;
    // Per supported context: weighted minimal distance of each cell inside the ball, sorted.
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ctx, &pi) in mass.iter().enumerate() {
        if pi <= 0.0 {
            continue;
        }
        let q = truth.true_row(ctx);
        let term = |p: f64, q: f64| (((p + q) / 2.0).sqrt() - q.sqrt()).powi(2);
        let dist = |t: f64| term(1.0 - t, q[0]) + term(t, q[1]);
        let s = pi.sqrt() / beta;
        let mut cuts: Vec<f64> = (0..=s.floor() as u64)
            .flat_map(|k| {
                let t = (k as f64 / s).powi(2);
                [t, 1.0 - t]
            })
            .chain([0.0, 1.0])
            .filter(|t| (0.0..=1.0).contains(t))
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let key = |t: f64| (super::bracket::cell(s, 1.0 - t), super::bracket::cell(s, t));
        let mut best: HashMap<_, f64> = HashMap::new();
        let mut visit = |t: f64, h: f64| {
            let e = best.entry(key(t)).or_insert(f64::INFINITY);
            *e = e.min(pi * h);
        };
        for w in cuts.windows(2) {
            visit(w[0], dist(w[0]));
            visit(0.5 * (w[0] + w[1]), dist(q[1].clamp(w[0], w[1])));
        }
        visit(1.0, dist(1.0));
        visited += best.len();
        let mut inside: Vec<f64> = best.into_values().filter(|&h| h <= sigma).collect();
        inside.sort_by(f64::total_cmp);
        rows.push(inside);
    }
    Ok(BracketCountReport {
        sampled: visited,
        distinct_brackets: count_within(&rows, sigma),
        entropy_bound: bound,
        count_bound: bound.exp(),
    })
}

/// Number of ways to pick one value per row with total at most `budget`.
fn count_within(rows: &[Vec<f64>], budget: f64) -> usize {
    fn go(rows: &[Vec<f64>], acc: f64, budget: f64) -> usize {
        match rows.split_first() {
            None => 1,
            Some((last, [])) => last.partition_point(|&h| acc + h <= budget),
            Some((first, rest)) => {
                first.iter().take_while(|&&h| acc + h <= budget).map(|&h| go(rest, acc + h, budget)).sum()
            }
        }
    }
    go(rows, 0.0, budget)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instances(count: u64, path_len: usize) -> Vec<Instance> {
        (0..count)
            .map(|k| random_instance(derive_seed(40, k), 2 + (k % 2) as usize, 1 + (k % 3) as usize, path_len).unwrap())
            .collect()
    }

    #[test]
    fn bernstein_norm_bound_holds() {
        let rep = bernstein_norm_check(&instances(200, 300), MixtureFault::None).unwrap();
        assert!(rep.pass(), "{rep:?}");
        assert!(rep.worst_ratio <= 1.0);
    }

    #[test]
    fn unnormalized_mixture_breaks_bernstein_norm_bound() {
        let rep = bernstein_norm_check(&instances(10, 300), MixtureFault::Unnormalized).unwrap();
        assert!(rep.violations > 0, "{rep:?}");
    }

    #[test]
    fn sandwich_holds_on_typical_paths() {
        let params = BoundParams::new(0.5).unwrap();
        let rep = hellinger_sandwich_check(&instances(100, 4096), &params).unwrap();
        assert!(rep.evaluated > 50, "{rep:?}");
        assert!(rep.pass(), "{rep:?}");
    }

    #[test]
    fn bracketing_small_run() {
        let params = BoundParams::new(0.5).unwrap();
        let rep = bracketing_check(10, 10, 2, 2, 512, 1.0, &params, 3).unwrap();
        assert!(rep.pass(), "{rep:?}");
    }

    #[test]
    fn bracket_count_below_bound() {
        let params = BoundParams::new(0.5).unwrap();
        let truth = MarkovModel::iid(&[0.4, 0.6]).unwrap();
        let n = 256;
        let sigma = 0.01;
        let delta = 0.5 * params.c_entropy() * ((2 * n - 1) as f64 * sigma).sqrt();
        let rep = bracket_count_check(&truth, 1, n, sigma, delta, 500, &params, 1).unwrap();
        assert!(rep.pass(), "{rep:?}");
        assert!(rep.distinct_brackets > 1);
    }

    #[test]
    fn enumeration_covers_sampled_brackets() {
        let params = BoundParams::new(0.5).unwrap();
        let truth = MarkovModel::two_state(0.3, 0.8).unwrap();
        let (n, sigma) = (128, 0.02);
        let delta = 0.5 * params.c_entropy() * ((2 * n - 1) as f64 * sigma).sqrt();
        let exact = enumerated_bracket_count(&truth, 1, n, sigma, delta, &params).unwrap();
        let sampled = bracket_count_check(&truth, 1, n, sigma, delta, 2000, &params, 3).unwrap();
        assert!(exact.pass(), "{exact:?}");
        assert!(exact.distinct_brackets >= sampled.distinct_brackets, "{exact:?} {sampled:?}");
        assert!(sampled.distinct_brackets > 1);
        let ternary = MarkovModel::iid(&[0.2, 0.3, 0.5]).unwrap();
        assert!(enumerated_bracket_count(&ternary, 1, n, sigma, delta, &params).is_err());
    }

    #[test]
    fn count_within_matches_brute_force() {
        let rows = vec![vec![0.0, 0.1, 0.25, 0.4], vec![0.0, 0.05, 0.3], vec![0.0, 0.2]];
        for budget in [0.0, 0.1, 0.3, 0.5, 1.0] {
            let mut brute = 0;
            for a in &rows[0] {
                for b in &rows[1] {
                    for c in &rows[2] {
                        if a + b + c <= budget {
                            brute += 1;
                        }
                    }
                }
            }
            assert_eq!(count_within(&rows, budget), brute, "budget {budget}");
        }
    }
}
