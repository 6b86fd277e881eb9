//! Context and transition counts for every depth up to a cap.
//!
//! For depth `r`, `N_n(a)` counts the positions `i in r+1..n` whose preceding
//! window `x_{i-r..i-1}` equals `a`, and `N_n(a, b)` additionally requires
//! `x_i = b`. Each depth is stored independently, densely while the table has
//! at most 2^20 cells and in a hash map above that.
//!
//! # Dump format
//!
//! All integers little-endian.
//!
//! ```text
//! magic        4 bytes  "MOCT"
//! version      u32      1
//! alphabet     u32
//! depth_cap    u32
//! n            u64
//! tail         u64      index of the last min(n, depth_cap) symbols
//! then for r = 0..=depth_cap, the context table then the transition table:
//!   kind       u8       0 = dense, 1 = sparse
//!   len        u64      dense: number of cells, sparse: number of entries
//!   payload             dense: len x u64 counts
//!                       sparse: len x (u64 index, u64 count), increasing index
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::model::{checked_pow, Alphabet, PathSample, Symbol};

pub const DENSE_LIMIT: u64 = 1 << 20;
const MAGIC: &[u8; 4] = b"MOCT";
const DUMP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
enum Table {
    Dense(Vec<u64>),
    Sparse(HashMap<u64, u64>),
}

impl Table {
    fn with_size(size: u64) -> Self {
        if size <= DENSE_LIMIT {
            Table::Dense(vec![0; size as usize])
        } else {
            Table::Sparse(HashMap::new())
        }
    }

    #[inline]
    fn get(&self, idx: u64) -> u64 {
        match self {
            Table::Dense(v) => v[idx as usize],
            Table::Sparse(h) => h.get(&idx).copied().unwrap_or(0),
        }
    }

    #[inline]
    fn incr(&mut self, idx: u64) {
        match self {
            Table::Dense(v) => v[idx as usize] += 1,
            Table::Sparse(h) => *h.entry(idx).or_insert(0) += 1,
        }
    }

    /// Nonzero cells in increasing index order.
    fn nonzero(&self) -> Vec<(u64, u64)> {
        match self {
            Table::Dense(v) => v.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i as u64, c)).collect(),
            Table::Sparse(h) => {
                let mut cells: Vec<(u64, u64)> = h.iter().filter(|(_, &c)| c > 0).map(|(&i, &c)| (i, c)).collect();
                cells.sort_unstable();
                cells
            }
        }
    }

    fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        match self {
            Table::Dense(v) => {
                w.write_all(&[0])?;
                w.write_all(&(v.len() as u64).to_le_bytes())?;
                for c in v {
                    w.write_all(&c.to_le_bytes())?;
                }
            }
            Table::Sparse(_) => {
                let cells = self.nonzero();
                w.write_all(&[1])?;
                w.write_all(&(cells.len() as u64).to_le_bytes())?;
                for (i, c) in cells {
                    w.write_all(&i.to_le_bytes())?;
                    w.write_all(&c.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    fn read_from<R: Read>(r: &mut R, size: u64) -> Result<Self> {
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let len = read_u64(r)?;
        match kind[0] {
            0 => {
                if len != size || size > DENSE_LIMIT {
                    return Err(Error::CorruptDump(format!("dense table of {len} cells, expected {size}")));
                }
                let v = (0..len).map(|_| read_u64(r)).collect::<Result<Vec<_>>>()?;
                Ok(Table::Dense(v))
            }
            1 => {
                if size <= DENSE_LIMIT {
                    return Err(Error::CorruptDump("sparse table below dense limit".into()));
                }
                let mut h = HashMap::with_capacity(len as usize);
                let mut prev: Option<u64> = None;
                for _ in 0..len {
                    let i = read_u64(r)?;
                    let c = read_u64(r)?;
                    if i >= size || prev.is_some_and(|p| p >= i) {
                        return Err(Error::CorruptDump(format!("bad sparse index {i}")));
                    }
                    prev = Some(i);
                    h.insert(i, c);
                }
                Ok(Table::Sparse(h))
            }
            k => Err(Error::CorruptDump(format!("unknown table kind {k}"))),
        }
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| Error::CorruptDump(e.to_string()))?;
    Ok(u64::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::CorruptDump(e.to_string()))?;
    Ok(u32::from_le_bytes(b))
}

#[derive(Clone, Debug, PartialEq)]
struct DepthTables {
    contexts: Table,
    transitions: Table,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextCounts {
    alphabet: Alphabet,
    depth_cap: usize,
    n: u64,
    tail: u64,
    depths: Vec<DepthTables>,
    /// `m^r` for `r = 0..=depth_cap + 1`.
    powers: Vec<u64>,
}

/// Counts of `path` for all depths `0..=depth_cap`; requires `depth_cap < n`.
pub fn build_counts(path: &PathSample, alphabet: Alphabet, depth_cap: usize) -> Result<ContextCounts> {
    if depth_cap >= path.len() {
        return Err(Error::DepthCapNotBelowLength { cap: depth_cap, n: path.len() });
    }
    let mut counts = ContextCounts::new(alphabet, depth_cap)?;
    counts.extend(&path.symbols)?;
    Ok(counts)
}

impl ContextCounts {
    /// Empty counts (`n = 0`).
    pub fn new(alphabet: Alphabet, depth_cap: usize) -> Result<Self> {
        let m = alphabet.size();
        // Transition indices at the cap need m^(cap + 1) to fit.
        checked_pow(m, depth_cap + 1)?;
        let powers: Vec<u64> = (0..=depth_cap + 1).map(|r| (m as u64).pow(r as u32)).collect();
        let depths = (0..=depth_cap)
            .map(|r| DepthTables {
                contexts: Table::with_size(powers[r]),
                transitions: Table::with_size(powers[r + 1]),
            })
            .collect();
        Ok(ContextCounts { alphabet, depth_cap, n: 0, tail: 0, depths, powers })
    }

    pub fn from_symbols(symbols: &[Symbol], alphabet: Alphabet, depth_cap: usize) -> Result<Self> {
        let mut counts = ContextCounts::new(alphabet, depth_cap)?;
        counts.extend(symbols)?;
        Ok(counts)
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn depth_cap(&self) -> usize {
        self.depth_cap
    }

    /// Current path length.
    pub fn n(&self) -> u64 {
        self.n
    }

    /// Appends symbols; the counts are left untouched if any symbol is out
    /// of range.
    pub fn extend(&mut self, symbols: &[Symbol]) -> Result<()> {
        self.alphabet.check_symbols(symbols, self.n as usize)?;
        for &s in symbols {
            self.push_unchecked(s);
        }
        Ok(())
    }

    pub fn push(&mut self, symbol: Symbol) -> Result<()> {
        self.alphabet.check_symbols(&[symbol], self.n as usize)?;
        self.push_unchecked(symbol);
        Ok(())
    }

    #[inline]
    fn push_unchecked(&mut self, symbol: Symbol) {
        let m = self.powers[1];
        let s = symbol as u64;
        let reach = (self.n as usize).min(self.depth_cap);
        for r in 0..=reach {
            let ctx = self.tail % self.powers[r];
            let tables = &mut self.depths[r];
            tables.contexts.incr(ctx);
            tables.transitions.incr(ctx * m + s);
        }
        self.tail = (self.tail * m + s) % self.powers[self.depth_cap];
        self.n += 1;
    }

    fn check_depth(&self, r: usize) -> Result<()> {
        if r > self.depth_cap {
            return Err(Error::DepthCapTooSmall { cap: self.depth_cap, required: r });
        }
        Ok(())
    }

    pub fn context_count(&self, r: usize, ctx: u64) -> Result<u64> {
        self.check_depth(r)?;
        Ok(self.depths[r].contexts.get(ctx))
    }

    pub fn transition_count(&self, r: usize, ctx: u64, symbol: Symbol) -> Result<u64> {
        self.check_depth(r)?;
        Ok(self.depths[r].transitions.get(ctx * self.powers[1] + symbol as u64))
    }

    /// `(context, N(context))` for contexts seen at depth `r`, in index order.
    pub fn nonzero_contexts(&self, r: usize) -> Result<Vec<(u64, u64)>> {
        self.check_depth(r)?;
        Ok(self.depths[r].contexts.nonzero())
    }

    /// `(ctx * m + b, N(ctx, b))` for transitions seen at depth `r`, in index order.
    pub fn nonzero_transitions(&self, r: usize) -> Result<Vec<(u64, u64)>> {
        self.check_depth(r)?;
        Ok(self.depths[r].transitions.nonzero())
    }

    /// Calls `f(ctx, N(ctx), N(ctx, b))` for every nonzero transition at depth `r`.
    pub(crate) fn for_each_transition(&self, r: usize, mut f: impl FnMut(u64, u64, u64)) {
        let m = self.powers[1];
        let tables = &self.depths[r];
        match &tables.transitions {
            Table::Dense(v) => {
                for (idx, &c) in v.iter().enumerate() {
                    if c > 0 {
                        let ctx = idx as u64 / m;
                        f(ctx, tables.contexts.get(ctx), c);
                    }
                }
            }
            sparse @ Table::Sparse(_) => {
                // Sorted, so floating-point sums over the cells are reproducible.
                for (idx, c) in sparse.nonzero() {
                    let ctx = idx / m;
                    f(ctx, tables.contexts.get(ctx), c);
                }
            }
        }
    }

    /// Row-sum and total-mass identities at every depth.
    pub fn check_invariants(&self) -> Result<()> {
        let m = self.powers[1];
        for r in 0..=self.depth_cap {
            let contexts = self.depths[r].contexts.nonzero();
            let total: u64 = contexts.iter().map(|&(_, c)| c).sum();
            let expected = self.n.saturating_sub(r as u64);
            if total != expected {
                return Err(Error::CorruptDump(format!("depth {r}: context mass {total}, expected {expected}")));
            }
            let mut row_sums: HashMap<u64, u64> = HashMap::new();
            for (idx, c) in self.depths[r].transitions.nonzero() {
                *row_sums.entry(idx / m).or_insert(0) += c;
            }
            for &(ctx, c) in &contexts {
                if row_sums.remove(&ctx).unwrap_or(0) != c {
                    return Err(Error::CorruptDump(format!("depth {r}: row sum mismatch at context {ctx}")));
                }
            }
            if !row_sums.is_empty() {
                return Err(Error::CorruptDump(format!("depth {r}: transitions from unseen contexts")));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&(self.alphabet.size() as u32).to_le_bytes())?;
        w.write_all(&(self.depth_cap as u32).to_le_bytes())?;
        w.write_all(&self.n.to_le_bytes())?;
        w.write_all(&self.tail.to_le_bytes())?;
        for tables in &self.depths {
            tables.contexts.write_to(w)?;
            tables.transitions.write_to(w)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| Error::CorruptDump(e.to_string()))?;
        if &magic != MAGIC {
            return Err(Error::CorruptDump("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != DUMP_VERSION {
            return Err(Error::CorruptDump(format!("unsupported version {version}")));
        }
        let m = read_u32(r)? as usize;
        let depth_cap = read_u32(r)? as usize;
        let alphabet = Alphabet::new(m).map_err(|e| Error::CorruptDump(e.to_string()))?;
        let mut counts = ContextCounts::new(alphabet, depth_cap)?;
        counts.n = read_u64(r)?;
        counts.tail = read_u64(r)?;
        if counts.tail >= counts.powers[depth_cap] {
            return Err(Error::CorruptDump("tail index out of range".into()));
        }
        for d in 0..=depth_cap {
            counts.depths[d].contexts = Table::read_from(r, counts.powers[d])?;
            counts.depths[d].transitions = Table::read_from(r, counts.powers[d + 1])?;
        }
        counts.check_invariants()?;
        Ok(counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary() -> Alphabet {
        Alphabet::new(2).unwrap()
    }

    /// Brute-force window scanner, independent of the incremental update.
    fn scan(path: &[Symbol], m: usize, r: usize) -> (HashMap<u64, u64>, HashMap<(u64, u64), u64>) {
        let mut ctx = HashMap::new();
        let mut tr = HashMap::new();
        for i in r..path.len() {
            let mut a = 0u64;
            for &s in &path[i - r..i] {
                a = a * m as u64 + s as u64;
            }
            *ctx.entry(a).or_insert(0) += 1;
            *tr.entry((a, path[i] as u64)).or_insert(0) += 1;
        }
        (ctx, tr)
    }

    #[test]
    fn small_path_depth_one_and_zero() {
        let c = ContextCounts::from_symbols(&[0, 0, 1, 0], binary(), 1).unwrap();
        assert_eq!(c.context_count(1, 0).unwrap(), 2);
        assert_eq!(c.context_count(1, 1).unwrap(), 1);
        assert_eq!(c.transition_count(1, 0, 0).unwrap(), 1);
        assert_eq!(c.transition_count(1, 0, 1).unwrap(), 1);
        assert_eq!(c.transition_count(1, 1, 0).unwrap(), 1);
        assert_eq!(c.context_count(0, 0).unwrap(), 4);
        assert_eq!(c.transition_count(0, 0, 0).unwrap(), 3);
        assert_eq!(c.transition_count(0, 0, 1).unwrap(), 1);
    }

    #[test]
    fn matches_scanner_on_random_ternary_path() {
        let alphabet = Alphabet::new(3).unwrap();
        let mut rng = crate::rng::rng_from_seed(17);
        let path: Vec<Symbol> =
            (0..300).map(|_| crate::rng::categorical(&mut rng, &[0.2, 0.5, 0.3]) as Symbol).collect();
        let c = ContextCounts::from_symbols(&path, alphabet, 4).unwrap();
        for r in 0..=4 {
            let (ctx, tr) = scan(&path, 3, r);
            let seen: HashMap<u64, u64> = c.nonzero_contexts(r).unwrap().into_iter().collect();
            assert_eq!(seen, ctx);
            for ((a, b), n) in tr {
                assert_eq!(c.transition_count(r, a, b as Symbol).unwrap(), n);
            }
        }
    }

    #[test]
    fn constant_path_single_context() {
        let n = 50;
        let c = ContextCounts::from_symbols(&vec![0; n], binary(), 5).unwrap();
        for r in 0..=5 {
            assert_eq!(c.nonzero_contexts(r).unwrap(), vec![(0, (n - r) as u64)]);
        }
    }

    #[test]
    fn build_requires_cap_below_length() {
        let path = PathSample { symbols: vec![0, 1, 0], seed: 0, model_id: String::new() };
        assert_eq!(build_counts(&path, binary(), 3), Err(Error::DepthCapNotBelowLength { cap: 3, n: 3 }));
        assert!(build_counts(&path, binary(), 2).is_ok());
    }

    #[test]
    fn extend_rejects_bad_symbols_atomically() {
        let mut c = ContextCounts::from_symbols(&[0, 1], binary(), 1).unwrap();
        let before = c.clone();
        let err = c.extend(&[1, 0, 2]).unwrap_err();
        assert_eq!(err, Error::SymbolOutOfRange { symbol: 2, position: 4, size: 2 });
        assert_eq!(c, before);
        c.extend(&[]).unwrap();
        assert_eq!(c, before);
    }

    #[test]
    fn one_symbol_increments_one_window_per_depth() {
        let mut c = ContextCounts::from_symbols(&[0, 1, 1], binary(), 4).unwrap();
        let before: Vec<u64> = (0..=4).map(|r| c.nonzero_contexts(r).unwrap().iter().map(|x| x.1).sum()).collect();
        c.push(0).unwrap();
        for (r, prev) in before.iter().enumerate() {
            let after: u64 = c.nonzero_contexts(r).unwrap().iter().map(|x| x.1).sum();
            let expected = if r <= 3 { 1 } else { 0 };
            assert_eq!(after - prev, expected, "depth {r}");
        }
    }

    #[test]
    fn sparse_tables_above_dense_limit() {
        // 2^20 contexts at depth 20 stay dense, transitions at depth 20 go sparse.
        let mut rng = crate::rng::rng_from_seed(2);
        let path: Vec<Symbol> = (0..2000).map(|_| crate::rng::categorical(&mut rng, &[0.5, 0.5]) as Symbol).collect();
        let c = ContextCounts::from_symbols(&path, binary(), 21).unwrap();
        assert!(matches!(c.depths[21].contexts, Table::Sparse(_)));
        c.check_invariants().unwrap();
        let (ctx, _) = scan(&path, 2, 21);
        let seen: HashMap<u64, u64> = c.nonzero_contexts(21).unwrap().into_iter().collect();
        assert_eq!(seen, ctx);

        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(ContextCounts::read_from(&mut buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn dump_round_trip_and_corruption() {
        let c = ContextCounts::from_symbols(&[0, 1, 1, 0, 1, 0, 0], binary(), 3).unwrap();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"MOCT");
        let back = ContextCounts::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, c);

        // Resuming from a checkpoint matches counting in one go.
        let mut resumed = back;
        resumed.extend(&[1, 1]).unwrap();
        let full = ContextCounts::from_symbols(&[0, 1, 1, 0, 1, 0, 0, 1, 1], binary(), 3).unwrap();
        assert_eq!(resumed, full);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(ContextCounts::read_from(&mut bad.as_slice()).is_err());
        let mut bad = buf.clone();
        let last = bad.len() - 1;
        bad[last] ^= 1;
        assert!(matches!(ContextCounts::read_from(&mut bad.as_slice()), Err(Error::CorruptDump(_))));
        assert!(ContextCounts::read_from(&mut &buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn exhaustive_incremental_equivalence() {
        for len in 1..=10usize {
            for bits in 0u32..(1 << len) {
                let path: Vec<Symbol> = (0..len).map(|k| (bits >> k) & 1).collect();
                let full = ContextCounts::from_symbols(&path, binary(), 3).unwrap();
                full.check_invariants().unwrap();
                for split in 0..=len {
                    let mut c = ContextCounts::from_symbols(&path[..split], binary(), 3).unwrap();
                    c.check_invariants().unwrap();
                    c.extend(&path[split..]).unwrap();
                    assert_eq!(c, full);
                }
            }
        }
    }
}
