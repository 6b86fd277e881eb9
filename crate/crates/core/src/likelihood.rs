//! Maximized likelihoods, likelihood-ratio statistics and the martingale
//! decomposition of the log-likelihood ratio against the true law.
//!
//! The supremum of `log P(x_1..x_n)` over order-`r` chains puts unit mass on
//! the observed first `r` symbols and uses the empirical kernel, so it equals
//! `sum N(a,b) log(N(a,b) / N(a))` over transitions seen at depth `r`, with
//! `0 log 0 = 0`.

use serde::{Deserialize, Serialize};

use crate::counts::ContextCounts;
use crate::diagnostics::phi;
use crate::error::{Error, Result};
use crate::model::{LogLik, MarkovModel, Symbol, NORMALIZATION_TOL};

fn check_order(counts: &ContextCounts, r: usize) -> Result<()> {
    if r > counts.depth_cap() {
        return Err(Error::DepthCapTooSmall { cap: counts.depth_cap(), required: r });
    }
    if r as u64 >= counts.n() {
        return Err(Error::OrderTooLarge { order: r, n: counts.n() as usize });
    }
    Ok(())
}

/// `sup_{P in order-r chains} log P(x_1..x_n)`; always `<= 0`.
pub fn max_loglik(counts: &ContextCounts, r: usize) -> Result<f64> {
    check_order(counts, r)?;
    let mut total = 0.0;
    counts.for_each_transition(r, |_, n_ctx, n_tr| {
        if n_tr != n_ctx {
            total += n_tr as f64 * (n_tr as f64 / n_ctx as f64).ln();
        }
    });
    Ok(total)
}

/// `max_loglik(r) - max_loglik(r_star)`, nonnegative since the order-`r_star`
/// chains are nested in the order-`r` chains. Negative rounding residue is
/// clamped to zero.
pub fn lr_statistic(counts: &ContextCounts, r: usize, r_star: usize) -> Result<f64> {
    if r_star > r {
        return Err(Error::InvalidParameter(format!("reference order {r_star} exceeds order {r}")));
    }
    if r == r_star {
        check_order(counts, r)?;
        return Ok(0.0);
    }
    Ok((max_loglik(counts, r)? - max_loglik(counts, r_star)?).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LilStatistic {
    /// `max_{r_star < r < kappa} lr_statistic(r, r_star) / m^r`, or 0 when the range is empty.
    pub value: f64,
    pub argmax: Option<usize>,
    pub empty_range: bool,
}

pub fn lil_statistic(counts: &ContextCounts, r_star: usize, kappa: usize) -> Result<LilStatistic> {
    if kappa <= r_star + 1 {
        return Ok(LilStatistic { value: 0.0, argmax: None, empty_range: true });
    }
    check_order(counts, kappa - 1)?;
    let m = counts.alphabet().size() as f64;
    let base = max_loglik(counts, r_star)?;
    let mut best = LilStatistic { value: f64::NEG_INFINITY, argmax: None, empty_range: false };
    for r in r_star + 1..kappa {
        let v = (max_loglik(counts, r)? - base).max(0.0) / m.powi(r as i32);
        if v > best.value {
            best.value = v;
            best.argmax = Some(r);
        }
    }
    Ok(best)
}

/// `max_loglik(r) - log P*(x_{r+1..n} | x_1..x_r)` at the endpoint `n` of `path`.
pub fn delta_statistic(model: &MarkovModel, counts: &ContextCounts, path: &[Symbol], r: usize) -> Result<f64> {
    if counts.n() != path.len() as u64 {
        return Err(Error::InvalidParameter(format!("counts cover {} symbols, path has {}", counts.n(), path.len())));
    }
    let fitted = max_loglik(counts, r)?;
    match model.log_conditional_likelihood(path, r)? {
        LogLik::Finite(truth) => Ok((fitted - truth).max(0.0)),
        LogLik::NegInfinity => Err(Error::ImpossiblePath),
    }
}

/// Tracks `Delta_{i,r}` as symbols arrive, in O(1) per symbol.
///
/// The maximized likelihood is updated through `N log N` differences, so
/// the value after `i` symbols agrees with [`delta_statistic`] up to rounding.
#[derive(Clone, Debug)]
pub struct DeltaTracker<'a> {
    model: &'a MarkovModel,
    r: usize,
    modulus: usize,
    ctx: usize,
    seen: usize,
    context_counts: Vec<u64>,
    transition_counts: Vec<u64>,
    fitted: f64,
    truth: f64,
}

#[inline]
fn xlogx(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        let x = n as f64;
        x * x.ln()
    }
}

impl<'a> DeltaTracker<'a> {
    pub fn new(model: &'a MarkovModel, r: usize) -> Result<Self> {
        if r < model.true_order() {
            return Err(Error::OrderBelowTruth { order: r, true_order: model.true_order() });
        }
        let modulus = model.alphabet().contexts(r)? as usize;
        Ok(DeltaTracker {
            model,
            r,
            modulus,
            ctx: 0,
            seen: 0,
            context_counts: vec![0; modulus],
            transition_counts: vec![0; modulus * model.alphabet_size()],
            fitted: 0.0,
            truth: 0.0,
        })
    }

    /// Adds one symbol; fails if it has probability zero under the model.
    pub fn push(&mut self, s: Symbol) -> Result<()> {
        let m = self.model.alphabet_size();
        if s as usize >= m {
            return Err(Error::SymbolOutOfRange { symbol: s, position: self.seen, size: m });
        }
        if self.seen >= self.r {
            let p = self.model.true_row(self.ctx)[s as usize];
            if p <= 0.0 {
                return Err(Error::ImpossiblePath);
            }
            self.truth += p.ln();
            let t = self.ctx * m + s as usize;
            let nt = self.transition_counts[t];
            let nc = self.context_counts[self.ctx];
            self.fitted += (xlogx(nt + 1) - xlogx(nt)) - (xlogx(nc + 1) - xlogx(nc));
            self.transition_counts[t] = nt + 1;
            self.context_counts[self.ctx] = nc + 1;
        }
        self.ctx = (self.ctx * m + s as usize) % self.modulus;
        self.seen += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.seen
    }

    pub fn is_empty(&self) -> bool {
        self.seen == 0
    }

    /// Current `Delta_{i,r}` with `i = len()`; zero while `i <= r`.
    pub fn delta(&self) -> f64 {
        (self.fitted - self.truth).max(0.0)
    }
}

/// `max_{i = from..=path.len()} Delta_{i,r}`.
pub fn running_max_delta(model: &MarkovModel, path: &[Symbol], r: usize, from: usize) -> Result<f64> {
    if from > path.len() || from <= r {
        return Err(Error::InvalidParameter(format!("window start {from} must lie in ({r}, {}]", path.len())));
    }
    let mut tracker = DeltaTracker::new(model, r)?;
    let mut best = 0.0f64;
    for (k, &s) in path.iter().enumerate() {
        tracker.push(s)?;
        if k + 1 >= from {
            best = best.max(tracker.delta());
        }
    }
    Ok(best)
}

/// Order-`r` kernel `(P(b|a) + P*(b|a)) / 2`, with `P*` read through its own
/// true order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureKernel {
    alphabet_size: usize,
    order: usize,
    table: Vec<f64>,
}

impl MixtureKernel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    #[inline]
    pub fn row(&self, ctx: usize) -> &[f64] {
        let m = self.alphabet_size;
        &self.table[ctx * m..(ctx + 1) * m]
    }

    /// Wraps an arbitrary order-`r` table without checking row sums. Used to
    /// exercise the diagnostics against deliberately broken kernels.
    pub fn from_table_unchecked(alphabet_size: usize, order: usize, table: Vec<f64>) -> Self {
        MixtureKernel { alphabet_size, order, table }
    }

    pub fn check_rows(&self) -> Result<()> {
        for (c, row) in self.table.chunks(self.alphabet_size).enumerate() {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > NORMALIZATION_TOL || row.iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidDistribution(format!("mixture row {c} sums to {total}")));
            }
        }
        Ok(())
    }
}

pub fn mixture_kernel(candidate: &MarkovModel, truth: &MarkovModel, r: usize) -> Result<MixtureKernel> {
    if candidate.alphabet_size() != truth.alphabet_size() {
        return Err(Error::InvalidParameter("alphabet sizes differ".into()));
    }
    if r < candidate.order() {
        return Err(Error::OrderBelowTruth { order: r, true_order: candidate.order() });
    }
    if r < truth.true_order() {
        return Err(Error::OrderBelowTruth { order: r, true_order: truth.true_order() });
    }
    let m = truth.alphabet_size();
    let rows = truth.alphabet().contexts(r)? as usize;
    let cand_mod = candidate.num_contexts();
    let mut table = Vec::with_capacity(rows * m);
    for c in 0..rows {
        let p = candidate.row(c % cand_mod);
        let q = truth.true_row(c);
        table.extend(p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)));
    }
    Ok(MixtureKernel { alphabet_size: m, order: r, table })
}

/// Per-context quantities of a mixture against the truth, so path functionals
/// cost O(1) per step.
#[derive(Clone, Debug)]
pub struct StepTerms {
    pub(crate) alphabet_size: usize,
    pub(crate) order: usize,
    /// `log(mix / P*)` per transition; NaN where `P* = 0`.
    pub(crate) log_ratio: Vec<f64>,
    /// `-sum_a P*(a) log(mix(a) / P*(a))` per context.
    pub(crate) compensator: Vec<f64>,
    /// `8 sum_a P*(a) phi(|log(mix(a) / P*(a))| / 2)` per context.
    pub(crate) bernstein: Vec<f64>,
}

impl StepTerms {
    pub fn new(truth: &MarkovModel, mix: &MixtureKernel) -> Result<Self> {
        let m = truth.alphabet_size();
        if mix.alphabet_size != m {
            return Err(Error::InvalidParameter("alphabet sizes differ".into()));
        }
        if mix.order < truth.true_order() {
            return Err(Error::OrderBelowTruth { order: mix.order, true_order: truth.true_order() });
        }
        let rows = mix.table.len() / m;
        let mut log_ratio = Vec::with_capacity(rows * m);
        let mut compensator = Vec::with_capacity(rows);
        let mut bernstein = Vec::with_capacity(rows);
        for c in 0..rows {
            let q = truth.true_row(c);
            let p = mix.row(c);
            let (mut kl, mut bern) = (0.0, 0.0);
            for (&pa, &qa) in p.iter().zip(q) {
                if qa > 0.0 {
                    let lr = (pa / qa).ln();
                    log_ratio.push(lr);
                    kl -= qa * lr;
                    bern += qa * phi(0.5 * lr.abs());
                } else {
                    log_ratio.push(f64::NAN);
                }
            }
            compensator.push(kl);
            bernstein.push(8.0 * bern);
        }
        Ok(StepTerms { alphabet_size: m, order: mix.order, log_ratio, compensator, bernstein })
    }

    /// Calls `f(i, ctx, log_ratio_i)` for `i = r+1..=up_to` (1-based).
    pub(crate) fn walk(&self, path: &[Symbol], up_to: usize, mut f: impl FnMut(usize, usize, f64)) -> Result<()> {
        if up_to > path.len() {
            return Err(Error::InvalidParameter(format!("up_to {up_to} exceeds path length {}", path.len())));
        }
        let m = self.alphabet_size;
        let modulus = m.pow(self.order as u32);
        let mut ctx = 0usize;
        for (k, &s) in path[..up_to].iter().enumerate() {
            if s as usize >= m {
                return Err(Error::SymbolOutOfRange { symbol: s, position: k, size: m });
            }
            if k >= self.order {
                let lr = self.log_ratio[ctx * m + s as usize];
                if lr.is_nan() {
                    return Err(Error::ImpossiblePath);
                }
                f(k + 1, ctx, lr);
            }
            ctx = (ctx * m + s as usize) % modulus;
        }
        Ok(())
    }
}

/// `D = -sum_{i=r+1}^{up_to} sum_a P*(a|ctx_i) log(mix(a|ctx_i) / P*(a|ctx_i))`.
pub fn kl_compensator(truth: &MarkovModel, mix: &MixtureKernel, path: &[Symbol], up_to: usize) -> Result<f64> {
    let terms = StepTerms::new(truth, mix)?;
    let mut total = 0.0;
    terms.walk(path, up_to, |_, ctx, _| total += terms.compensator[ctx])?;
    Ok(total)
}

/// `M_0..M_n` with `M_i = sum_{l=r+1}^{i} log(mix/P*)(x_l) + D_i`, zero for `i <= r`.
pub fn martingale_path(truth: &MarkovModel, mix: &MixtureKernel, path: &[Symbol]) -> Result<Vec<f64>> {
    let terms = StepTerms::new(truth, mix)?;
    let mut out = vec![0.0; path.len() + 1];
    let mut acc = 0.0;
    terms.walk(path, path.len(), |i, ctx, lr| {
        acc += lr + terms.compensator[ctx];
        out[i] = acc;
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Alphabet;
    use crate::rng::{derive_seed, rng_from_seed};

    fn binary() -> Alphabet {
        Alphabet::new(2).unwrap()
    }

    fn counts(path: &[Symbol], cap: usize) -> ContextCounts {
        ContextCounts::from_symbols(path, binary(), cap).unwrap()
    }

    /// Grid-search maximum of the Bernoulli likelihood `p^k (1-p)^(n-k)`.
    fn bernoulli_grid_max(zeros: u32, ones: u32) -> f64 {
        (0..=10_000)
            .map(|k| {
                let p = k as f64 * 1e-4;
                let term = |c: u32, q: f64| if c == 0 { 0.0 } else { c as f64 * q.ln() };
                term(ones, p) + term(zeros, 1.0 - p)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn constant_path_has_zero_loglik() {
        let c = counts(&[1; 20], 4);
        for r in 0..=4 {
            assert_eq!(max_loglik(&c, r).unwrap(), 0.0);
            assert_eq!(lr_statistic(&c, r, 0).unwrap(), 0.0);
        }
        assert_eq!(lil_statistic(&c, 0, 5).unwrap().value, 0.0);
    }

    #[test]
    fn iid_fit_matches_grid_oracle() {
        let c = counts(&[0, 0, 1, 0], 1);
        let oracle = bernoulli_grid_max(3, 1);
        let v = max_loglik(&c, 0).unwrap();
        assert!((v - oracle).abs() < 1e-6, "{v} vs {oracle}");
        assert!((v - (-2.249340578)).abs() < 1e-6);
    }

    #[test]
    fn alternating_path_is_deterministic_at_order_one() {
        let c = counts(&[0, 1, 0, 1], 1);
        assert_eq!(max_loglik(&c, 1).unwrap(), 0.0);
    }

    #[test]
    fn lr_statistic_on_small_path() {
        let c = counts(&[0, 0, 1, 0], 1);
        // Order 1: context 0 -> (1,1), context 1 -> (1,0). Oracle: per-row grid maxima.
        let oracle1 = bernoulli_grid_max(1, 1) + bernoulli_grid_max(1, 0);
        let oracle0 = bernoulli_grid_max(3, 1);
        let lr = lr_statistic(&c, 1, 0).unwrap();
        assert!((lr - (oracle1 - oracle0)).abs() < 1e-6);
        assert_eq!(lr_statistic(&c, 1, 1).unwrap(), 0.0);
        assert!(lr_statistic(&c, 0, 1).is_err());
    }

    #[test]
    fn errors_for_orders_out_of_range() {
        let c = counts(&[0, 1, 1], 2);
        assert!(matches!(max_loglik(&c, 3), Err(Error::DepthCapTooSmall { .. })));
        let c = counts(&[0, 1], 2);
        assert!(matches!(max_loglik(&c, 2), Err(Error::OrderTooLarge { .. })));
    }

    #[test]
    fn lil_statistic_empty_range_and_brute_force() {
        let c = counts(&[0, 1, 1, 0, 1], 3);
        let empty = lil_statistic(&c, 1, 2).unwrap();
        assert!(empty.empty_range);
        assert_eq!(empty.value, 0.0);

        let mut rng = rng_from_seed(5);
        let path: Vec<Symbol> = (0..64).map(|_| crate::rng::categorical(&mut rng, &[0.5, 0.5]) as Symbol).collect();
        let c = counts(&path, 3);
        let brute = (1..4)
            .map(|r| (max_loglik(&c, r).unwrap() - max_loglik(&c, 0).unwrap()) / 2f64.powi(r as i32))
            .fold(f64::NEG_INFINITY, f64::max);
        let lil = lil_statistic(&c, 0, 4).unwrap();
        assert!((lil.value - brute).abs() < 1e-12);
        assert!(!lil.empty_range);
    }

    #[test]
    fn delta_examples() {
        let iid = MarkovModel::iid(&[0.75, 0.25]).unwrap();
        let path = [0, 0, 1, 0];
        let d = delta_statistic(&iid, &counts(&path, 1), &path, 0).unwrap();
        let expected = -(3.0 * 0.75f64.ln() + 0.25f64.ln()) + bernoulli_grid_max(3, 1);
        assert!((d - expected).abs() < 1e-6);
        assert!(d >= 0.0);

        let det = MarkovModel::from_rows(2, 1, &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let path = [1, 0, 1, 0, 1];
        assert_eq!(delta_statistic(&det, &counts(&path, 1), &path, 1).unwrap(), 0.0);
        let bad = [1, 1, 0];
        assert_eq!(delta_statistic(&det, &counts(&bad, 1), &bad, 1), Err(Error::ImpossiblePath));
    }

    #[test]
    fn delta_nonnegative_on_sampled_pairs() {
        let mut rng = rng_from_seed(99);
        for k in 0..1000u64 {
            let order = (k % 3) as usize;
            let m = 2 + (k % 2) as usize;
            let model = MarkovModel::random(m, order, &mut rng).unwrap();
            let path = model.sample_path(20 + (k as usize % 50), derive_seed(1, k)).unwrap();
            let r = model.true_order() + (k % 2) as usize;
            let c = ContextCounts::from_symbols(&path.symbols, model.alphabet(), r).unwrap();
            assert!(delta_statistic(&model, &c, &path.symbols, r).unwrap() >= 0.0);
        }
    }

    #[test]
    fn tracker_agrees_with_batch_delta() {
        let model = MarkovModel::two_state(0.3, 0.8).unwrap();
        let path = model.sample_path(400, 12).unwrap().symbols;
        for r in 1..4 {
            let mut t = DeltaTracker::new(&model, r).unwrap();
            for (k, &s) in path.iter().enumerate() {
                t.push(s).unwrap();
                let i = k + 1;
                if i > r && i % 37 == 0 {
                    let c = ContextCounts::from_symbols(&path[..i], model.alphabet(), r).unwrap();
                    let batch = delta_statistic(&model, &c, &path[..i], r).unwrap();
                    assert!((t.delta() - batch).abs() < 1e-9, "r={r} i={i}");
                }
            }
        }
        let best = running_max_delta(&model, &path, 2, 200).unwrap();
        let brute = (200..=400)
            .map(|i| {
                let c = ContextCounts::from_symbols(&path[..i], model.alphabet(), 2).unwrap();
                delta_statistic(&model, &c, &path[..i], 2).unwrap()
            })
            .fold(0.0, f64::max);
        assert!((best - brute).abs() < 1e-9);
    }

    #[test]
    fn mixture_examples() {
        let truth = MarkovModel::two_state(0.3, 0.8).unwrap();
        let same = mixture_kernel(&truth, &truth, 1).unwrap();
        assert_eq!(same.table(), truth.kernel());

        let det = MarkovModel::from_rows(2, 1, &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(det.is_err()); // reducible without an explicit initial law
        let det = MarkovModel::new(binary(), 1, vec![1.0, 0.0, 0.0, 1.0], Some(vec![0.5, 0.5])).unwrap();
        let uniform = MarkovModel::iid(&[0.5, 0.5]).unwrap();
        let mix = mixture_kernel(&det, &uniform, 1).unwrap();
        assert_eq!(mix.table(), &[0.75, 0.25, 0.25, 0.75]);

        assert!(mixture_kernel(&truth, &truth, 0).is_err());
    }

    #[test]
    fn mixture_rows_normalized_for_random_pairs() {
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            let truth = MarkovModel::random(3, 1, &mut rng).unwrap();
            let cand = MarkovModel::random(3, 2, &mut rng).unwrap();
            let mix = mixture_kernel(&cand, &truth, 2).unwrap();
            mix.check_rows().unwrap();
            let floor = truth.min_positive_transition() / 2.0;
            assert!(mix.table().iter().all(|&p| p >= floor - 1e-15));
        }
    }

    #[test]
    fn compensator_and_martingale_vanish_for_truth() {
        let truth = MarkovModel::two_state(0.3, 0.8).unwrap();
        let mix = mixture_kernel(&truth, &truth, 2).unwrap();
        let path = truth.sample_path(200, 1).unwrap().symbols;
        assert_eq!(kl_compensator(&truth, &mix, &path, 200).unwrap(), 0.0);
        assert!(martingale_path(&truth, &mix, &path).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn martingale_decomposes_into_log_ratio_plus_compensator() {
        let mut rng = rng_from_seed(21);
        let truth = MarkovModel::random(3, 1, &mut rng).unwrap();
        let cand = MarkovModel::random(3, 2, &mut rng).unwrap();
        let mix = mixture_kernel(&cand, &truth, 2).unwrap();
        let path = truth.sample_path(150, 4).unwrap().symbols;
        let mpath = martingale_path(&truth, &mix, &path).unwrap();
        assert_eq!(mpath.len(), 151);
        assert_eq!(&mpath[..3], &[0.0, 0.0, 0.0]);
        for i in [3usize, 10, 77, 150] {
            let mut log_ratio = 0.0;
            for l in 3..=i {
                let ctx = (path[l - 3] as usize) * 3 + path[l - 2] as usize;
                let b = path[l - 1] as usize;
                log_ratio += (mix.row(ctx)[b] / truth.row(path[l - 2] as usize)[b]).ln();
            }
            let d = kl_compensator(&truth, &mix, &path, i).unwrap();
            assert!(d >= 0.0);
            assert!((mpath[i] - (log_ratio + d)).abs() < 1e-10);
        }
    }

    #[test]
    fn martingale_mean_is_zero() {
        let truth = MarkovModel::two_state(0.3, 0.8).unwrap();
        let cand =
            MarkovModel::from_rows(2, 2, &[vec![0.5, 0.5], vec![0.1, 0.9], vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        let mix = mixture_kernel(&cand, &truth, 2).unwrap();
        let reps = 100_000u64;
        let n = 64;
        let (mut sum, mut sq) = (0.0, 0.0);
        for k in 0..reps {
            let path = truth.sample_path(n, derive_seed(77, k)).unwrap().symbols;
            let mn = *martingale_path(&truth, &mix, &path).unwrap().last().unwrap();
            sum += mn;
            sq += mn * mn;
        }
        let mean = sum / reps as f64;
        let sd = (sq / reps as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 4.0 * sd / (reps as f64).sqrt(), "mean {mean} sd {sd}");
    }
}
