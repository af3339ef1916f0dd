//! Bit-dimension permutations over power-of-two index spaces.
//!
//! Bit 0 is the least significant bit. A permutation stores, for every
//! destination bit `i`, the source bit `map[i]` that feeds it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported index width.
pub const MAX_BITS: usize = 32;

/// Bijective map over the `n` bit positions of an index.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitPermutation {
    map: Vec<u8>,
}

impl BitPermutation {
    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n as u8).collect(),
        }
    }

    /// Builds a permutation from `map[i]` = source bit of destination `i`.
    pub fn from_map(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        if n > MAX_BITS {
            return Err(Error::Domain(format!("width {n} exceeds {MAX_BITS} bits")));
        }
        let mut seen = vec![false; n];
        for &src in &map {
            if src >= n || seen[src] {
                return Err(Error::Domain(format!("{map:?} is not a bijection")));
            }
            seen[src] = true;
        }
        Ok(Self {
            map: map.into_iter().map(|b| b as u8).collect(),
        })
    }

    /// Transposition of bits `a` and `b`.
    pub fn transposition(n: usize, a: usize, b: usize) -> Result<Self> {
        if a >= n || b >= n {
            return Err(Error::Domain(format!("bits {a},{b} outside width {n}")));
        }
        let mut p = Self::identity(n);
        p.map.swap(a, b);
        Ok(p)
    }

    pub fn width(&self) -> usize {
        self.map.len()
    }

    /// Source bit feeding destination bit `i`.
    pub fn source(&self, i: usize) -> usize {
        self.map[i] as usize
    }

    pub fn map(&self) -> Vec<usize> {
        self.map.iter().map(|&b| b as usize).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &b)| i == b as usize)
    }

    pub fn is_involution(&self) -> bool {
        compose(self, self).map(|p| p.is_identity()).unwrap_or(false)
    }

    /// Permutes the bits of `index`; `index` must be below `2^n`.
    pub fn apply(&self, index: u64) -> Result<u64> {
        if self.width() < 64 && index >> self.width() != 0 {
            return Err(Error::Domain(format!(
                "index {index} outside [0, 2^{})",
                self.width()
            )));
        }
        Ok(self.apply_unchecked(index))
    }

    /// As [`apply`](Self::apply) without the range check; bits above `n` are dropped.
    #[inline]
    pub fn apply_unchecked(&self, index: u64) -> u64 {
        let mut out = 0;
        for (i, &src) in self.map.iter().enumerate() {
            out |= ((index >> src) & 1) << i;
        }
        out
    }

    pub fn inverse(&self) -> Self {
        let mut map = vec![0u8; self.map.len()];
        for (i, &src) in self.map.iter().enumerate() {
            map[src as usize] = i as u8;
        }
        Self { map }
    }

    /// Extends the permutation with fixed bits up to width `n`.
    pub fn widen(&self, n: usize) -> Result<Self> {
        if n < self.width() || n > MAX_BITS {
            return Err(Error::Domain(format!(
                "cannot widen {} bits to {n}",
                self.width()
            )));
        }
        let mut map = self.map.clone();
        map.extend(self.width() as u8..n as u8);
        Ok(Self { map })
    }

    /// Materialises the permutation as a table over `[0, 2^n)`.
    pub fn table(&self) -> Vec<u64> {
        (0..1u64 << self.width())
            .map(|i| self.apply_unchecked(i))
            .collect()
    }
}

impl fmt::Debug for BitPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitPermutation{:?}", self.map)
    }
}

/// Applies `perm` to `index` (free-function form).
pub fn apply_perm(perm: &BitPermutation, index: u64) -> Result<u64> {
    perm.apply(index)
}

/// `apply(compose(a, b), i) == apply(a, apply(b, i))`.
pub fn compose(outer: &BitPermutation, inner: &BitPermutation) -> Result<BitPermutation> {
    if outer.width() != inner.width() {
        return Err(Error::Domain(format!(
            "width mismatch: {} vs {}",
            outer.width(),
            inner.width()
        )));
    }
    Ok(BitPermutation {
        map: outer.map.iter().map(|&o| inner.map[o as usize]).collect(),
    })
}

pub fn inverse(perm: &BitPermutation) -> BitPermutation {
    perm.inverse()
}

/// Reverses bits `hi..=lo` in place.
pub fn reverse_segment(n: usize, hi: usize, lo: usize) -> Result<BitPermutation> {
    if lo > hi || hi >= n || n > MAX_BITS {
        return Err(Error::Domain(format!(
            "invalid segment [{hi}:{lo}] for width {n}"
        )));
    }
    let mut p = BitPermutation::identity(n);
    for i in lo..=hi {
        p.map[i] = (hi + lo - i) as u8;
    }
    Ok(p)
}

/// Reverses the low `w` bits; `w = 0` is the identity.
pub fn reverse_low(n: usize, w: usize) -> Result<BitPermutation> {
    match w {
        0 => Ok(BitPermutation::identity(n)),
        _ => reverse_segment(n, w - 1, 0),
    }
}

/// Reverses the `w` bits directly below bit `top` (exclusive).
pub fn reverse_below(n: usize, top: usize, w: usize) -> Result<BitPermutation> {
    match w {
        0 => Ok(BitPermutation::identity(n)),
        _ if w > top => Err(Error::Domain(format!("cannot reverse {w} bits below {top}"))),
        _ => reverse_segment(n, top - 1, top - w),
    }
}

/// Split of an `n`-bit index into `p` parallel (bank) bits on top and serial (address) bits below.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexLayout {
    pub n: usize,
    pub p: usize,
}

impl IndexLayout {
    pub fn new(n: usize, p: usize) -> Result<Self> {
        if p < 1 || p > n || n > MAX_BITS {
            return Err(Error::Domain(format!("invalid layout n={n}, p={p}")));
        }
        Ok(Self { n, p })
    }

    /// Layout for `P` parallel MDCs (`p = log2(2P)`).
    pub fn for_parallelism(n: usize, parallelism: usize) -> Result<Self> {
        Self::new(n, parallelism_bits(parallelism)? + 1)
    }

    pub fn serial_bits(&self) -> usize {
        self.n - self.p
    }

    pub fn bank(&self, index: u64) -> usize {
        (index >> self.serial_bits()) as usize
    }

    pub fn address(&self, index: u64) -> u64 {
        index & ((1u64 << self.serial_bits()) - 1)
    }

    pub fn position(&self, bank: usize, address: u64) -> u64 {
        ((bank as u64) << self.serial_bits()) | address
    }

    pub fn banks(&self) -> usize {
        1 << self.p
    }

    pub fn depth(&self) -> u64 {
        1 << self.serial_bits()
    }
}

/// One σ₃ transposition between a parallel bit and a serial bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SwapStep {
    /// Branch distance, a power of two.
    pub h: u64,
    /// Delay-line length, a power of two.
    pub l: u64,
}

impl SwapStep {
    pub fn new(h: u64, l: u64) -> Result<Self> {
        if !h.is_power_of_two() || !l.is_power_of_two() {
            return Err(Error::Domain(format!("h={h}, l={l} must be powers of two")));
        }
        Ok(Self { h, l })
    }

    pub fn from_logs(h_log: usize, l_log: usize) -> Self {
        Self {
            h: 1 << h_log,
            l: 1 << l_log,
        }
    }

    pub fn h_log(&self) -> usize {
        self.h.trailing_zeros() as usize
    }

    pub fn l_log(&self) -> usize {
        self.l.trailing_zeros() as usize
    }
}

impl fmt::Display for SwapStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.h, self.l)
    }
}

/// `log2 P` for `P` in {1, 2, 4}.
pub fn parallelism_bits(parallelism: usize) -> Result<usize> {
    match parallelism {
        1 => Ok(0),
        2 => Ok(1),
        4 => Ok(2),
        _ => Err(Error::Config(format!(
            "parallelism {parallelism} not in {{1, 2, 4}}"
        ))),
    }
}

fn log2_len(len: u64) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() || len.trailing_zeros() as usize > MAX_BITS {
        return Err(Error::Domain(format!("N = {len} is not a supported power of two")));
    }
    Ok(len.trailing_zeros() as usize)
}

fn stage_count(n: usize, k: usize) -> Result<usize> {
    if !(1..=5).contains(&k) {
        return Err(Error::Domain(format!("radix exponent k = {k} outside 1..=5")));
    }
    Ok(n.div_ceil(k))
}

fn check_stage(s: usize, stages: usize) -> Result<()> {
    if s < 1 || s > stages {
        return Err(Error::Domain(format!("stage {s} outside 1..={stages}")));
    }
    Ok(())
}

/// Width of the serial bit reversal performed before stage `s` of a pipeline.
///
/// First and last stages reverse `n − 1 − log2 P` bits, intermediate stages
/// `k(⌊n/k⌋ + s − S) + n mod k − 1 − log2 P`. A single-stage transform
/// (`N ≤ 2^k`) uses the first-stage branch. Negative values clamp to 0.
pub fn w_pipeline(len: u64, s: usize, k: usize, parallelism: usize) -> Result<usize> {
    let n = log2_len(len)?;
    let stages = stage_count(n, k)?;
    check_stage(s, stages)?;
    let lp = parallelism_bits(parallelism)? as i64;
    let (n, k, s, stages) = (n as i64, k as i64, s as i64, stages as i64);
    let w = if s == 1 || s == stages {
        n - 1 - lp
    } else {
        k * (n / k + s - stages) + n % k - 1 - lp
    };
    Ok(w.max(0) as usize)
}

/// σ₁: reversal of the low `w` serial bits (all serial bits when `w` exceeds them).
pub fn sigma1(len: u64, s: usize, k: usize, parallelism: usize) -> Result<BitPermutation> {
    let layout = IndexLayout::for_parallelism(log2_len(len)?, parallelism)?;
    let w = w_pipeline(len, s, k, parallelism)?.min(layout.serial_bits());
    reverse_low(layout.n, w)
}

/// σ₂: reversal of the parallel bits.
pub fn sigma2(len: u64, s: usize, k: usize, parallelism: usize) -> Result<BitPermutation> {
    let n = log2_len(len)?;
    check_stage(s, stage_count(n, k)?)?;
    let layout = IndexLayout::for_parallelism(n, parallelism)?;
    reverse_segment(n, n - 1, layout.serial_bits())
}

/// σ₃ step: transposition of parallel bit `n−p+log2 h` with serial bit `log2 l`.
pub fn sigma3_step(layout: &IndexLayout, step: SwapStep) -> Result<BitPermutation> {
    let max_h = 1u64 << (layout.p - 1);
    if !step.h.is_power_of_two() || step.h > max_h {
        return Err(Error::Domain(format!("h = {} outside 1..={max_h}", step.h)));
    }
    if !step.l.is_power_of_two() || step.l_log() >= layout.serial_bits() {
        return Err(Error::Domain(format!(
            "l = {} outside 1..={}",
            step.l,
            1u64 << (layout.serial_bits() - 1)
        )));
    }
    BitPermutation::transposition(layout.n, layout.serial_bits() + step.h_log(), step.l_log())
}

/// Whether `N` lies in the default memory-based range `(2^{2k}, 2^{3k}]`
/// or, with `extended`, also in `(2^k, 2^{2k}]`.
pub fn memory_range_ok(n: usize, k: usize, extended: bool) -> bool {
    (2 * k < n && n <= 3 * k) || (extended && k < n && n <= 2 * k)
}

/// Reversal widths `(w, w̃)` for iteration `s` of the memory-based mode.
pub fn w_membased(len: u64, s: usize, k: usize, parallelism: usize) -> Result<(usize, usize)> {
    let n = log2_len(len)?;
    let stages = stage_count(n, k)?;
    if !memory_range_ok(n, k, true) {
        return Err(Error::ModeUnsupported {
            mode: "memory",
            len,
            reason: format!("requires 2^{k} < N <= 2^{}", 3 * k),
        });
    }
    check_stage(s, stages)?;
    let lp = parallelism_bits(parallelism)? as i64;
    let (ni, ki) = (n as i64, k as i64);
    let tail = ki * (ni / ki - 1) + ni % ki - 1 - lp;
    let (w, wt) = if n > 2 * k {
        match s {
            1 => (ni - 1 - lp, 0),
            2 => (ni - 1 - lp, tail),
            _ => (tail, 0),
        }
    } else if s == 1 {
        (ni - 1 - lp, 0)
    } else {
        (0, 0)
    };
    Ok((w.max(0) as usize, wt.max(0) as usize))
}

/// Absolute read-address pattern of memory-based iteration `s`.
///
/// Iterations 1 and 2 reverse the low `w` serial bits followed by the top `w̃`
/// serial bits. The final iteration of a three-pass transform reverses the top
/// `w` serial bits, which undoes the preceding pattern where needed.
pub fn sigma_hat(len: u64, s: usize, k: usize, parallelism: usize) -> Result<BitPermutation> {
    let n = log2_len(len)?;
    let layout = IndexLayout::for_parallelism(n, parallelism)?;
    let ser = layout.serial_bits();
    let (w, wt) = w_membased(len, s, k, parallelism)?;
    let (w, wt) = (w.min(ser), wt.min(ser));
    if s == 3 {
        return reverse_below(n, ser, w);
    }
    compose(&reverse_below(n, ser, wt)?, &reverse_low(n, w)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reversal_example() {
        let p = reverse_segment(4, 2, 0).unwrap();
        assert_eq!(p.map(), vec![2, 1, 0, 3]);
        assert_eq!(apply_perm(&p, 0b0110).unwrap(), 0b0011);
        assert!(p.is_involution());
    }

    #[test]
    fn apply_rejects_out_of_range() {
        let p = BitPermutation::identity(4);
        assert_eq!(p.apply(42 & 15).unwrap(), 10);
        assert!(p.apply(16).is_err());
        assert_eq!(BitPermutation::identity(8).apply(42).unwrap(), 42);
    }

    #[test]
    fn from_map_validates() {
        assert!(BitPermutation::from_map(vec![0, 0]).is_err());
        assert!(BitPermutation::from_map(vec![2, 0]).is_err());
        assert!(BitPermutation::from_map(vec![1, 0]).is_ok());
    }

    #[test]
    fn compose_semantics() {
        let a = BitPermutation::from_map(vec![1, 2, 0]).unwrap();
        let b = reverse_segment(3, 2, 0).unwrap();
        let c = compose(&a, &b).unwrap();
        for i in 0..8 {
            assert_eq!(c.apply(i).unwrap(), a.apply(b.apply(i).unwrap()).unwrap());
        }
        assert!(compose(&a, &a.inverse()).unwrap().is_identity());
        assert_eq!(compose(&BitPermutation::identity(3), &a).unwrap(), a);
        assert!(compose(&a, &BitPermutation::identity(4)).is_err());
    }

    #[test]
    fn segment_bounds() {
        assert!(reverse_segment(4, 1, 2).is_err());
        assert!(reverse_segment(4, 4, 0).is_err());
        assert!(reverse_segment(5, 3, 3).unwrap().is_identity());
    }

    #[test]
    fn w_pipeline_reference_values() {
        assert_eq!(w_pipeline(4096, 1, 5, 1).unwrap(), 11);
        assert_eq!(w_pipeline(4096, 2, 5, 1).unwrap(), 6);
        assert_eq!(w_pipeline(4096, 3, 5, 1).unwrap(), 11);
        assert!(w_pipeline(4096, 4, 5, 1).is_err());
        assert!(w_pipeline(4096, 0, 5, 1).is_err());
        assert!(w_pipeline(48, 1, 5, 1).is_err());
    }

    #[test]
    fn sigma1_examples() {
        assert_eq!(sigma1(4096, 1, 5, 1).unwrap(), reverse_segment(12, 10, 0).unwrap());
        assert_eq!(sigma1(4096, 2, 5, 1).unwrap(), reverse_segment(12, 5, 0).unwrap());
        // single stage
        assert_eq!(sigma1(32, 1, 5, 1).unwrap(), reverse_segment(5, 3, 0).unwrap());
    }

    #[test]
    fn sigma2_examples() {
        assert!(sigma2(64, 1, 5, 1).unwrap().is_identity());
        let p = sigma2(64, 1, 5, 4).unwrap();
        let layout = IndexLayout::for_parallelism(6, 4).unwrap();
        let bank_of = |bank: usize| layout.bank(p.apply(layout.position(bank, 5)).unwrap());
        assert_eq!(bank_of(1), 4);
        assert_eq!(bank_of(4), 1);
        assert_eq!(bank_of(2), 2);
    }

    #[test]
    fn sigma3_step_examples() {
        let l1 = IndexLayout::for_parallelism(12, 1).unwrap();
        let t = sigma3_step(&l1, SwapStep::new(1, 1).unwrap()).unwrap();
        assert_eq!(t, BitPermutation::transposition(12, 11, 0).unwrap());
        let l4 = IndexLayout::for_parallelism(12, 4).unwrap();
        let t = sigma3_step(&l4, SwapStep::new(4, 4).unwrap()).unwrap();
        assert_eq!(t, BitPermutation::transposition(12, 11, 2).unwrap());
        assert!(t.is_involution());
        assert!(sigma3_step(&l4, SwapStep::new(8, 1).unwrap()).is_err());
        assert!(sigma3_step(&l1, SwapStep::new(1, 2048).unwrap()).is_err());
        assert!(SwapStep::new(3, 1).is_err());
    }

    #[test]
    fn w_membased_reference_values() {
        assert_eq!(w_membased(4096, 1, 5, 4).unwrap(), (9, 0));
        assert_eq!(w_membased(4096, 2, 5, 4).unwrap(), (9, 4));
        assert_eq!(w_membased(4096, 3, 5, 4).unwrap(), (4, 0));
        assert!(matches!(
            w_membased(1 << 16, 1, 5, 4),
            Err(Error::ModeUnsupported { .. })
        ));
    }

    #[test]
    fn sigma_hat_examples() {
        let all = reverse_segment(12, 8, 0).unwrap();
        assert_eq!(sigma_hat(4096, 1, 5, 4).unwrap(), all);
        let top4 = reverse_segment(12, 8, 5).unwrap();
        assert_eq!(sigma_hat(4096, 2, 5, 4).unwrap(), compose(&top4, &all).unwrap());
        assert_eq!(sigma_hat(4096, 3, 5, 4).unwrap(), top4);
    }

    #[test]
    fn sigma_hat_is_cumulative_pipeline_pattern() {
        for k in 3..=5 {
            for n in k + 1..=3 * k {
                for par in [1usize, 2, 4] {
                    let len = 1u64 << n;
                    if n <= parallelism_bits(par).unwrap() + 1 {
                        continue;
                    }
                    let mut cum = BitPermutation::identity(n);
                    for s in 1..=n.div_ceil(k) {
                        cum = compose(&cum, &sigma1(len, s, k, par).unwrap()).unwrap();
                        assert_eq!(sigma_hat(len, s, k, par).unwrap(), cum, "k={k} n={n} P={par} s={s}");
                    }
                }
            }
        }
    }
}
