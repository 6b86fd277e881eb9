//! Finite-alphabet, time-homogeneous Markov chains.
//!
//! A chain of order `r` over an alphabet of size `m` is stored as a dense
//! `m^r x m` transition table plus an initial law over length-`r` blocks.
//!
//! Contexts are indexed as base-`m` integers with the most recent symbol in
//! the least significant digit, so sliding the window by one symbol `b` is
//! `ctx' = (ctx * m + b) mod m^r`. A transition `(ctx, b)` at depth `r` has
//! the index `ctx * m + b`, which is also the depth `r + 1` context index of
//! the window ending in `b`.

mod io;
mod stationary;

pub use io::{format_model, parse_model};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{categorical, rng_from_seed, SimRng};

pub type Symbol = u32;

/// Row sums and the initial law must be within this of one.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Rows closer than this entrywise are treated as identical by [`MarkovModel::true_order`].
pub const ROW_EQUALITY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet {
    size: usize,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::AlphabetTooSmall(size));
        }
        Ok(Alphabet { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of contexts of the given depth, `m^depth`.
    pub fn contexts(&self, depth: usize) -> Result<u64> {
        checked_pow(self.size, depth)
    }

    pub fn check_symbols(&self, symbols: &[Symbol], offset: usize) -> Result<()> {
        for (k, &s) in symbols.iter().enumerate() {
            if s as usize >= self.size {
                return Err(Error::SymbolOutOfRange { symbol: s, position: offset + k, size: self.size });
            }
        }
        Ok(())
    }
}

pub(crate) fn checked_pow(base: usize, exp: usize) -> Result<u64> {
    let mut acc: u64 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base as u64).ok_or(Error::ContextOverflow { size: base, depth: exp })?;
    }
    Ok(acc)
}

/// Log-likelihood that may be `-inf` when a zero-probability transition occurs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LogLik {
    Finite(f64),
    NegInfinity,
}

impl LogLik {
    pub fn finite(self) -> Option<f64> {
        match self {
            LogLik::Finite(v) => Some(v),
            LogLik::NegInfinity => None,
        }
    }

    pub fn is_neg_infinity(self) -> bool {
        matches!(self, LogLik::NegInfinity)
    }
}

/// An observed or simulated path `x_1..x_n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSample {
    pub symbols: Vec<Symbol>,
    pub seed: u64,
    pub model_id: String,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovModel {
    alphabet: Alphabet,
    order: usize,
    kernel: Vec<f64>,
    initial: Vec<f64>,
    stationary: std::result::Result<Vec<f64>, String>,
    true_order: usize,
    true_modulus: usize,
}

impl MarkovModel {
    /// Builds a model from a row-major `m^order x m` kernel.
    ///
    /// When `initial` is `None` the stationary law of the block chain is used;
    /// this fails if the chain has more than one closed communicating class.
    pub fn new(alphabet: Alphabet, order: usize, kernel: Vec<f64>, initial: Option<Vec<f64>>) -> Result<Self> {
        let m = alphabet.size();
        let rows = alphabet.contexts(order)?;
        let rows = usize::try_from(rows).map_err(|_| Error::ContextOverflow { size: m, depth: order })?;
        let expected = rows.checked_mul(m).ok_or(Error::ContextOverflow { size: m, depth: order + 1 })?;
        if kernel.len() != expected {
            return Err(Error::InvalidDistribution(format!(
                "kernel has {} entries, expected {rows} rows of {m}",
                kernel.len()
            )));
        }
        for (c, row) in kernel.chunks(m).enumerate() {
            check_distribution(row)
                .map_err(|e| Error::InvalidDistribution(format!("kernel row for context {c}: {e}")))?;
        }
        if let Some(init) = &initial {
            if init.len() != rows {
                return Err(Error::InvalidDistribution(format!(
                    "initial law has {} entries, expected {rows}",
                    init.len()
                )));
            }
            check_distribution(init).map_err(|e| Error::InvalidDistribution(format!("initial law: {e}")))?;
        }

        let true_order = detect_true_order(m, order, &kernel);
        let stationary = stationary::solve(m, order, &kernel).map_err(|e| e.to_string());
        let initial = match initial {
            Some(init) => init,
            None => stationary.clone().map_err(Error::Reducible)?,
        };
        Ok(MarkovModel {
            alphabet,
            order,
            kernel,
            initial,
            stationary,
            true_order,
            true_modulus: m.pow(true_order as u32),
        })
    }

    /// Builds a model from one probability vector per context.
    pub fn from_rows(alphabet_size: usize, order: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let alphabet = Alphabet::new(alphabet_size)?;
        let kernel = rows.iter().flatten().copied().collect();
        MarkovModel::new(alphabet, order, kernel, None)
    }

    /// i.i.d. process with the given marginal.
    pub fn iid(probs: &[f64]) -> Result<Self> {
        MarkovModel::from_rows(probs.len(), 0, &[probs.to_vec()])
    }

    /// Binary order-1 chain with `P(1|0) = p01` and `P(1|1) = p11`.
    pub fn two_state(p01: f64, p11: f64) -> Result<Self> {
        MarkovModel::from_rows(2, 1, &[vec![1.0 - p01, p01], vec![1.0 - p11, p11]])
    }

    /// Random kernel with rows drawn uniformly from the simplex.
    pub fn random(alphabet_size: usize, order: usize, rng: &mut SimRng) -> Result<Self> {
        let alphabet = Alphabet::new(alphabet_size)?;
        let rows = alphabet.contexts(order)? as usize;
        let kernel = (0..rows).flat_map(|_| crate::rng::random_simplex(rng, alphabet_size)).collect();
        MarkovModel::new(alphabet, order, kernel, None)
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet.size()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn num_contexts(&self) -> usize {
        self.kernel.len() / self.alphabet.size()
    }

    /// Transition row for a context of depth `self.order()`.
    #[inline]
    pub fn row(&self, ctx: usize) -> &[f64] {
        let m = self.alphabet.size();
        &self.kernel[ctx * m..(ctx + 1) * m]
    }

    /// Transition row for a context index of any depth `>= true_order()`.
    ///
    /// Only the most recent `true_order()` symbols are read.
    #[inline]
    pub fn true_row(&self, ctx: usize) -> &[f64] {
        self.row(ctx % self.true_modulus)
    }

    /// Smallest `s <= order` such that each kernel row depends only on the
    /// last `s` symbols of its context.
    pub fn true_order(&self) -> usize {
        self.true_order
    }

    /// Stationary law of the order-`r` block chain, with `r = self.order()`.
    pub fn stationary_distribution(&self) -> Result<&[f64]> {
        self.stationary.as_deref().map_err(|e| Error::Reducible(e.clone()))
    }

    /// Whether the block chain has a single closed communicating class.
    pub fn is_irreducible(&self) -> bool {
        self.stationary.is_ok()
    }

    /// Minimum strictly positive transition probability.
    pub fn min_positive_transition(&self) -> f64 {
        self.kernel.iter().copied().filter(|&p| p > 0.0).fold(1.0, f64::min)
    }

    /// Stationary probabilities of all blocks `a_1..a_depth`, indexed with the
    /// most recent symbol least significant.
    pub fn block_probabilities(&self, depth: usize) -> Result<Vec<f64>> {
        let pi = self.stationary_distribution()?;
        self.extend_block_law(pi, depth)
    }

    /// Probabilities of the first `depth` symbols under the initial law.
    pub fn prefix_probabilities(&self, depth: usize) -> Result<Vec<f64>> {
        self.extend_block_law(&self.initial, depth)
    }

    fn extend_block_law(&self, base: &[f64], depth: usize) -> Result<Vec<f64>> {
        let m = self.alphabet.size();
        if depth <= self.order {
            // Keep the first `depth` symbols, i.e. the high digits.
            let shift = m.pow((self.order - depth) as u32);
            let mut out = vec![0.0; m.pow(depth as u32)];
            for (c, &p) in base.iter().enumerate() {
                out[c / shift] += p;
            }
            return Ok(out);
        }
        let size = self.alphabet.contexts(depth)? as usize;
        let mut law = base.to_vec();
        let mut d = self.order;
        while d < depth {
            let mut next = Vec::with_capacity(law.len() * m);
            for (c, &p) in law.iter().enumerate() {
                let row = self.true_row(c);
                for &q in row {
                    next.push(p * q);
                }
            }
            law = next;
            d += 1;
        }
        debug_assert_eq!(law.len(), size);
        Ok(law)
    }

    /// The same law represented at a higher order `r`.
    ///
    /// Rows are duplicated across the older symbols and the initial law is
    /// replaced by the prefix law of the first `r` symbols.
    pub fn lift(&self, r: usize) -> Result<MarkovModel> {
        if r < self.order {
            return Err(Error::OrderBelowTruth { order: r, true_order: self.order });
        }
        let m = self.alphabet.size();
        let rows = self.alphabet.contexts(r)? as usize;
        let mut kernel = Vec::with_capacity(rows * m);
        let modulus = m.pow(self.order as u32);
        for c in 0..rows {
            kernel.extend_from_slice(self.row(c % modulus));
        }
        let initial = self.prefix_probabilities(r)?;
        MarkovModel::new(self.alphabet, r, kernel, Some(initial))
    }

    /// Sum of `log P(x_i | x_{i-r*..i-1})` for `i = r+1..n`, where `r*` is the
    /// true order. Valid for any `r >= r*` by the Markov property.
    pub fn log_conditional_likelihood(&self, path: &[Symbol], r: usize) -> Result<LogLik> {
        if r < self.true_order {
            return Err(Error::OrderBelowTruth { order: r, true_order: self.true_order });
        }
        if r >= path.len() {
            return Err(Error::OrderTooLarge { order: r, n: path.len() });
        }
        self.alphabet.check_symbols(path, 0)?;
        let m = self.alphabet.size();
        let mut ctx = 0usize;
        for &s in &path[..r] {
            ctx = (ctx * m + s as usize) % self.true_modulus;
        }
        let mut total = 0.0;
        for &s in &path[r..] {
            let p = self.true_row(ctx)[s as usize];
            if p <= 0.0 {
                return Ok(LogLik::NegInfinity);
            }
            total += p.ln();
            ctx = (ctx * m + s as usize) % self.true_modulus;
        }
        Ok(LogLik::Finite(total))
    }

    /// Streaming sampler; yields the same symbols as [`MarkovModel::sample_path`].
    pub fn sampler(&self, seed: u64) -> PathSampler<'_> {
        PathSampler {
            model: self,
            rng: rng_from_seed(seed),
            pending: Vec::new(),
            started: false,
            ctx: 0,
            modulus: self.num_contexts(),
        }
    }

    pub fn sample_path(&self, n: usize, seed: u64) -> Result<PathSample> {
        self.sample_path_with_id(n, seed, "")
    }

    pub fn sample_path_with_id(&self, n: usize, seed: u64, model_id: &str) -> Result<PathSample> {
        if n == 0 {
            return Err(Error::EmptyPath);
        }
        let mut sampler = self.sampler(seed);
        let symbols = (0..n).map(|_| sampler.next_symbol()).collect();
        Ok(PathSample { symbols, seed, model_id: model_id.to_string() })
    }
}

/// Draws the first `r` symbols from the initial law, then one symbol per
/// call from the kernel.
#[derive(Debug)]
pub struct PathSampler<'a> {
    model: &'a MarkovModel,
    rng: SimRng,
    pending: Vec<Symbol>,
    started: bool,
    ctx: usize,
    modulus: usize,
}

impl PathSampler<'_> {
    pub fn next_symbol(&mut self) -> Symbol {
        let m = self.model.alphabet_size();
        if !self.started {
            self.started = true;
            let r = self.model.order();
            if r > 0 {
                let mut block = categorical(&mut self.rng, self.model.initial());
                self.ctx = block;
                // Oldest symbol is the most significant digit; pop from the end.
                for _ in 0..r {
                    self.pending.push((block % m) as Symbol);
                    block /= m;
                }
            }
        }
        if let Some(s) = self.pending.pop() {
            return s;
        }
        let b = categorical(&mut self.rng, self.model.row(self.ctx));
        self.ctx = (self.ctx * m + b) % self.modulus;
        b as Symbol
    }

    pub fn fill(&mut self, buf: &mut Vec<Symbol>, count: usize) {
        buf.reserve(count);
        for _ in 0..count {
            buf.push(self.next_symbol());
        }
    }
}

fn check_distribution(p: &[f64]) -> std::result::Result<(), String> {
    for (k, &x) in p.iter().enumerate() {
        if !x.is_finite() || !(0.0..=1.0).contains(&x) {
            return Err(format!("entry {k} = {x} is not in [0, 1]"));
        }
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(format!("sums to {total}"));
    }
    Ok(())
}

fn detect_true_order(m: usize, order: usize, kernel: &[f64]) -> usize {
    let rows = kernel.len() / m;
    let row = |c: usize| &kernel[c * m..(c + 1) * m];
    (0..order)
        .find(|&s| {
            let modulus = m.pow(s as u32);
            (0..rows).all(|c| row(c).iter().zip(row(c % modulus)).all(|(a, b)| (a - b).abs() <= ROW_EQUALITY_TOL))
        })
        .unwrap_or(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn order1() -> MarkovModel {
        MarkovModel::from_rows(2, 1, &[vec![0.3, 0.7], vec![0.8, 0.2]]).unwrap()
    }

    #[test]
    fn rejects_bad_rows() {
        let err = MarkovModel::from_rows(2, 1, &[vec![0.3, 0.6], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(err, Error::InvalidDistribution(_)));
        assert!(MarkovModel::from_rows(2, 0, &[vec![1.2, -0.2]]).is_err());
        assert!(matches!(Alphabet::new(1), Err(Error::AlphabetTooSmall(1))));
    }

    #[test]
    fn true_order_of_identical_rows_is_zero() {
        let m = MarkovModel::from_rows(2, 1, &[vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        assert_eq!(m.true_order(), 0);
        assert_eq!(order1().true_order(), 1);
    }

    #[test]
    fn lifting_preserves_true_order() {
        let base = order1();
        for r in 1..5 {
            let lifted = base.lift(r).unwrap();
            assert_eq!(lifted.order(), r);
            assert_eq!(lifted.true_order(), 1);
            // Recomputed from the table, not inherited.
            let rebuilt = MarkovModel::new(lifted.alphabet(), r, lifted.kernel().to_vec(), None).unwrap();
            assert_eq!(rebuilt.true_order(), 1);
        }
    }

    #[test]
    fn min_positive_transition_examples() {
        assert_eq!(MarkovModel::iid(&[0.5, 0.5]).unwrap().min_positive_transition(), 0.5);
        assert_eq!(order1().min_positive_transition(), 0.2);
        let sparse = MarkovModel::from_rows(2, 1, &[vec![0.0, 1.0], vec![0.4, 0.6]]).unwrap();
        assert_eq!(sparse.min_positive_transition(), 0.4);
    }

    #[test]
    fn deterministic_kernel_gives_forced_path() {
        // 0 -> 1 -> 2 -> 0, started at 0.
        let alphabet = Alphabet::new(3).unwrap();
        let kernel = vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let m = MarkovModel::new(alphabet, 1, kernel, Some(vec![1.0, 0.0, 0.0])).unwrap();
        let path = m.sample_path(9, 123).unwrap();
        assert_eq!(path.symbols, vec![0, 1, 2, 0, 1, 2, 0, 1, 2]);
    }

    #[test]
    fn sampling_is_deterministic_and_rejects_empty() {
        let m = order1();
        assert_eq!(m.sample_path(500, 9).unwrap(), m.sample_path(500, 9).unwrap());
        assert_ne!(m.sample_path(500, 9).unwrap(), m.sample_path(500, 10).unwrap());
        assert_eq!(m.sample_path(0, 1), Err(Error::EmptyPath));
    }

    #[test]
    fn sampler_matches_sample_path_for_higher_order() {
        let mut rng = rng_from_seed(5);
        let m = MarkovModel::random(3, 2, &mut rng).unwrap();
        let path = m.sample_path(100, 77).unwrap();
        let mut s = m.sampler(77);
        let streamed: Vec<Symbol> = (0..100).map(|_| s.next_symbol()).collect();
        assert_eq!(path.symbols, streamed);
        // Short paths take a prefix of the initial block.
        assert_eq!(m.sample_path(1, 77).unwrap().symbols[0], path.symbols[0]);
    }

    #[test]
    fn empirical_frequencies_follow_stationary_law() {
        let m = MarkovModel::two_state(0.3, 0.8).unwrap();
        let n = 1_000_000;
        let path = m.sample_path(n, 2024).unwrap();
        let ones = path.symbols.iter().filter(|&&s| s == 1).count() as f64 / n as f64;
        let pi = m.stationary_distribution().unwrap();
        assert!((ones - pi[1]).abs() < 3.0 / (n as f64).sqrt(), "{ones} vs {}", pi[1]);
    }

    #[test]
    fn conditional_likelihood_examples() {
        let iid = MarkovModel::iid(&[0.75, 0.25]).unwrap();
        let ll = iid.log_conditional_likelihood(&[0, 0, 1, 0], 0).unwrap();
        let expected = 3.0 * 0.75f64.ln() + 0.25f64.ln();
        assert!((ll.finite().unwrap() - expected).abs() < 1e-14);

        let det = MarkovModel::from_rows(2, 1, &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let ll = det.log_conditional_likelihood(&[0, 1, 0, 1, 0], 1).unwrap();
        assert_eq!(ll, LogLik::Finite(0.0));
        let ll = det.log_conditional_likelihood(&[0, 1, 1, 0], 1).unwrap();
        assert!(ll.is_neg_infinity());

        assert_eq!(
            order1().log_conditional_likelihood(&[0, 1, 0], 0),
            Err(Error::OrderBelowTruth { order: 0, true_order: 1 })
        );
    }

    #[test]
    fn higher_r_reads_only_true_order_symbols() {
        let m = order1();
        let path = m.sample_path(50, 3).unwrap().symbols;
        let l1 = m.log_conditional_likelihood(&path, 1).unwrap().finite().unwrap();
        let l3 = m.log_conditional_likelihood(&path, 3).unwrap().finite().unwrap();
        // Dropping the factors for i = 2, 3.
        let mut dropped = 0.0;
        for i in 1..3 {
            dropped += m.row(path[i - 1] as usize)[path[i] as usize].ln();
        }
        assert!((l1 - dropped - l3).abs() < 1e-12);
    }

    #[test]
    fn prefix_probabilities_exceed_min_transition_power() {
        let mut rng = rng_from_seed(11);
        for _ in 0..20 {
            let m = MarkovModel::random(3, 2, &mut rng).unwrap();
            let lambda = m.min_positive_transition();
            let blocks = m.block_probabilities(5).unwrap();
            for &p in blocks.iter().filter(|&&p| p > 0.0) {
                assert!(p >= lambda.powi(5) * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn block_probabilities_are_consistent_marginals() {
        let m = order1();
        let b3 = m.block_probabilities(3).unwrap();
        let b2 = m.block_probabilities(2).unwrap();
        // Summing out the most recent symbol gives the depth-2 law.
        for c in 0..4 {
            assert!((b3[2 * c] + b3[2 * c + 1] - b2[c]).abs() < 1e-14);
        }
        let b0 = m.block_probabilities(0).unwrap();
        assert_eq!(b0.len(), 1);
        assert!((b0[0] - 1.0).abs() < 1e-14);
    }
}
