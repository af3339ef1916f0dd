//! Radix-2^k multi-path delay commutator unit (k ≤ 5).
//!
//! The unit has five physical butterfly columns. A radix-2^k stage uses the
//! last `k` of them; earlier columns are bypassed. Column `c` works on digit
//! `c` of a 5-digit frame, and a stage's local label occupies the low `k`
//! frame bits (digit `c` lives in frame bit `5 − c`).

use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexSample = Complex64;

/// Number of physical butterfly columns.
pub const COLUMNS: usize = 5;

/// `(a + b, a − b)`.
#[inline]
pub fn butterfly2(a: ComplexSample, b: ComplexSample) -> (ComplexSample, ComplexSample) {
    (a + b, a - b)
}

/// `exp(−2πi·e/len)` with `e` reduced modulo `len`.
pub fn twiddle(len: u64, e: i64) -> ComplexSample {
    let e = e.rem_euclid(len as i64) as u64;
    // exact values on the axes
    if (4 * e).is_multiple_of(len) {
        return [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, 1.0),
        ][(4 * e / len) as usize];
    }
    let (s, c) = (-2.0 * PI * e as f64 / len as f64).sin_cos();
    Complex64::new(c, s)
}

/// Rotator category of one butterfly column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RotatorKind {
    /// Bypassed column.
    None,
    /// Multiplication by ±1 or ±j.
    Trivial,
    /// Rotation drawn from a fixed table of `base` points.
    Constant(u32),
    /// General rotation between stages.
    NonTrivial,
}

fn check_radix(k: usize) -> Result<()> {
    if !(1..=COLUMNS).contains(&k) {
        return Err(Error::Domain(format!("radix exponent {k} outside 1..=5")));
    }
    Ok(())
}

/// Rotator kinds of the `k` active columns of a radix-2^k stage.
pub fn classify_rotators(k: usize) -> Result<Vec<RotatorKind>> {
    use RotatorKind::*;
    check_radix(k)?;
    Ok(match k {
        5 => vec![Constant(32), Trivial, Constant(32), Trivial, NonTrivial],
        4 => vec![Trivial, Constant(16), Trivial, NonTrivial],
        3 => vec![Constant(8), Trivial, NonTrivial],
        2 => vec![Trivial, NonTrivial],
        _ => vec![NonTrivial],
    })
}

/// Active physical columns: the last `k` of five.
pub fn bypass_config(k: usize) -> Result<[bool; COLUMNS]> {
    check_radix(k)?;
    let mut mask = [false; COLUMNS];
    for m in mask.iter_mut().skip(COLUMNS - k) {
        *m = true;
    }
    Ok(mask)
}

/// Time digits `n₁…n₅`, frequency digits `k₁…k₅` and the low index part `n₆`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DigitState {
    pub n: [u8; COLUMNS],
    pub k: [u8; COLUMNS],
    pub n6: u64,
}

impl DigitState {
    /// Digits seen by the rotator after physical column `column` for a sample
    /// carrying local label `label` of a radix-2^k stage.
    pub fn from_label(k: usize, column: usize, label: u64, n6: u64) -> Self {
        let mut st = DigitState {
            n6,
            ..Default::default()
        };
        for d in (COLUMNS - k + 1)..=COLUMNS {
            let bit = ((label >> (COLUMNS - d)) & 1) as u8;
            if d <= column {
                st.k[d - 1] = bit;
            } else {
                st.n[d - 1] = bit;
            }
        }
        st
    }
}

/// A rotation `W_base^exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rotation {
    pub base: u64,
    pub exponent: u64,
}

impl Rotation {
    pub fn value(&self) -> ComplexSample {
        twiddle(self.base, (self.exponent % self.base) as i64)
    }
}

/// Rotation applied after physical column `column` (1..=5).
///
/// `sub_len` is the length of the sub-transform handled by the stage
/// (`2^k · ε`); `n6` must lie below `sub_len / 2^k`.
pub fn stage_twiddle_exponent(
    k: usize,
    column: usize,
    digits: &DigitState,
    sub_len: u64,
) -> Result<Rotation> {
    check_radix(k)?;
    if !(1..=COLUMNS).contains(&column) {
        return Err(Error::Domain(format!("column {column} outside 1..=5")));
    }
    if digits.n.iter().chain(digits.k.iter()).any(|&d| d > 1) {
        return Err(Error::Domain("digits must be binary".into()));
    }
    if !sub_len.is_power_of_two() || sub_len < 1 << k || digits.n6 >= sub_len >> k {
        return Err(Error::Domain(format!(
            "n6 = {} invalid for sub-transform length {sub_len}",
            digits.n6
        )));
    }
    if column <= COLUMNS - k {
        return Ok(Rotation { base: 1, exponent: 0 });
    }
    let n = |i: usize| digits.n[i - 1] as u64;
    let kd = |i: usize| digits.k[i - 1] as u64;
    Ok(match column {
        1 => Rotation {
            base: 32,
            exponent: kd(1) * (8 * n(2) + 4 * n(3) + 2 * n(4) + n(5)),
        },
        2 => Rotation {
            base: 4,
            exponent: n(3) * kd(2),
        },
        3 => Rotation {
            base: 32,
            exponent: 2 * (kd(2) + 2 * kd(3)) * (2 * n(4) + n(5)),
        },
        4 => Rotation {
            base: 4,
            exponent: n(5) * kd(4),
        },
        _ => {
            let first = COLUMNS - k + 1;
            let f: u64 = (first..=COLUMNS).map(|c| kd(c) << (c - first)).sum();
            Rotation {
                base: sub_len,
                exponent: (f * digits.n6) % sub_len,
            }
        }
    })
}

/// Static configuration of one MDC unit for one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdcConfig {
    /// Radix exponent `k_s`.
    pub radix: usize,
    /// Sub-transform length `2^{k_s} · ε_s` for the non-trivial rotator.
    pub sub_len: u64,
    /// Stage index `s` (1-based).
    pub stage: usize,
    /// Rotator kind per physical column.
    pub rotators: [RotatorKind; COLUMNS],
}

impl MdcConfig {
    pub fn new(radix: usize, sub_len: u64, stage: usize) -> Result<Self> {
        check_radix(radix)?;
        if !sub_len.is_power_of_two() || sub_len < 1 << radix {
            return Err(Error::Domain(format!(
                "sub-transform length {sub_len} invalid for radix 2^{radix}"
            )));
        }
        let mut rotators = [RotatorKind::None; COLUMNS];
        for (slot, kind) in rotators[COLUMNS - radix..]
            .iter_mut()
            .zip(classify_rotators(radix)?)
        {
            *slot = kind;
        }
        Ok(Self {
            radix,
            sub_len,
            stage,
            rotators,
        })
    }

    /// Index stride `ε` between neighbouring labels.
    pub fn stride(&self) -> u64 {
        self.sub_len >> self.radix
    }

    /// Local label and low index part of a sample with global index `index`.
    #[inline]
    pub fn label_of(&self, index: u64) -> (u64, u64) {
        let eps = self.stride();
        ((index / eps) % (1 << self.radix), index % eps)
    }

    /// Rotation after logical column `i` (0-based) for a sample with `index`.
    pub fn rotation(&self, i: usize, index: u64) -> Rotation {
        let column = COLUMNS - self.radix + 1 + i;
        let (label, n6) = self.label_of(index);
        let digits = DigitState::from_label(self.radix, column, label, n6);
        stage_twiddle_exponent(self.radix, column, &digits, self.sub_len)
            .expect("digits derived from a valid label")
    }
}

/// A 2 × 2^(k−1) arrangement of samples.
///
/// Element `(r, c)` is stored at `r · cols + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub radix: usize,
    pub index: Vec<u64>,
    pub value: Vec<ComplexSample>,
}

impl Block {
    /// A block of indices with zero values.
    pub fn from_indices(radix: usize, index: Vec<u64>) -> Result<Self> {
        let value = vec![ComplexSample::default(); index.len()];
        Self::new(radix, index, value)
    }

    pub fn new(radix: usize, index: Vec<u64>, value: Vec<ComplexSample>) -> Result<Self> {
        check_radix(radix)?;
        if index.len() != 1 << radix || value.len() != index.len() {
            return Err(Error::Domain(format!(
                "block of radix 2^{radix} needs {} entries",
                1 << radix
            )));
        }
        Ok(Self {
            radix,
            index,
            value,
        })
    }

    pub fn cols(&self) -> usize {
        1 << (self.radix - 1)
    }

    pub fn at(&self, r: usize, c: usize) -> (u64, ComplexSample) {
        let i = r * self.cols() + c;
        (self.index[i], self.value[i])
    }

    /// Index rows `[row0, row1]`.
    pub fn index_rows(&self) -> [Vec<u64>; 2] {
        let (a, b) = self.index.split_at(self.cols());
        [a.to_vec(), b.to_vec()]
    }

    /// Index rows as conventionally printed: time runs right to left, so
    /// `b_{r,0}` is the rightmost entry.
    pub fn display_rows(&self) -> [Vec<u64>; 2] {
        self.index_rows().map(|mut row| {
            row.reverse();
            row
        })
    }

    /// Index `b_{0,0}`.
    pub fn leading_index(&self) -> u64 {
        self.index[0]
    }
}

/// Processes one block through the `k` butterfly columns of `config`.
///
/// Input element `(r, c)` carries local label `2^{k−1}·r + c`. The output
/// element `(r, t)` holds local label `2t + r`, computed in place, so its
/// value is frequency `bitrev_k(2t + r)` of the radix-2^k sub-DFT with the
/// inter-stage rotation applied. Output indices follow the same placement.
pub fn mdc_process_block(block: &Block, config: &MdcConfig) -> Result<Block> {
    let k = config.radix;
    if block.radix != k {
        return Err(Error::Domain(format!(
            "block radix 2^{} does not match stage radix 2^{k}",
            block.radix
        )));
    }
    let size = 1usize << k;
    let mut v = block.value.clone();
    for i in 0..k {
        let bit = 1usize << (k - 1 - i);
        for j in 0..size {
            if j & bit == 0 {
                let (a, b) = butterfly2(v[j], v[j | bit]);
                v[j] = a;
                v[j | bit] = b;
            }
        }
        for (j, x) in v.iter_mut().enumerate() {
            *x *= config.rotation(i, block.index[j]).value();
        }
    }
    let cols = size / 2;
    let mut index = vec![0; size];
    let mut value = vec![ComplexSample::default(); size];
    for r in 0..2 {
        for t in 0..cols {
            let j = 2 * t + r;
            index[r * cols + t] = block.index[j];
            value[r * cols + t] = v[j];
        }
    }
    Block::new(k, index, value)
}

/// A sample travelling through the datapath, tagged with its input index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub index: u64,
    pub value: ComplexSample,
}

/// Two-lane commutator exchanging the lane bit with time bit `log2 delay`.
///
/// Latency equals `delay`. Control follows the local counter, which is zero
/// when the first sample of a stream reaches the input.
#[derive(Clone, Debug)]
pub struct Commutator<T> {
    delay: usize,
    bit: u32,
    origin: i64,
    input_line: VecDeque<Option<T>>,
    output_line: VecDeque<Option<T>>,
}

impl<T: Clone> Commutator<T> {
    pub fn new(delay: usize, origin: i64) -> Self {
        assert!(delay.is_power_of_two());
        Self {
            delay,
            bit: delay.trailing_zeros(),
            origin,
            input_line: std::iter::repeat_n(None, delay).collect(),
            output_line: std::iter::repeat_n(None, delay).collect(),
        }
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn step(&mut self, cycle: i64, inputs: [Option<T>; 2]) -> [Option<T>; 2] {
        let [in0, in1] = inputs;
        self.input_line.push_back(in1);
        let delayed = self.input_line.pop_front().flatten();
        let tau = cycle - self.origin;
        let upper = tau >= 0 && (tau >> self.bit) & 1 == 1;
        let (direct, buffered) = if upper { (in0, delayed) } else { (delayed, in0) };
        self.output_line.push_back(buffered);
        let out0 = self.output_line.pop_front().flatten();
        [out0, direct]
    }

    pub fn is_empty(&self) -> bool {
        self.input_line.iter().chain(&self.output_line).all(Option::is_none)
    }
}

/// Streaming MDC unit: butterfly, rotator and commutator per column.
#[derive(Clone, Debug)]
pub struct MdcUnit {
    config: MdcConfig,
    commutators: Vec<Commutator<Sample>>,
}

impl MdcUnit {
    /// `origin` is the cycle at which label-time 0 reaches the unit's input.
    pub fn new(config: MdcConfig, origin: i64) -> Self {
        let k = config.radix;
        let mut at = origin;
        let commutators = (0..k.saturating_sub(1))
            .map(|i| {
                let d = 1usize << (k - 2 - i);
                let c = Commutator::new(d, at);
                at += d as i64;
                c
            })
            .collect();
        Self {
            config,
            commutators,
        }
    }

    pub fn config(&self) -> &MdcConfig {
        &self.config
    }

    /// Cycles between a label-time entering and leaving the unit.
    pub fn latency(&self) -> u64 {
        (1u64 << (self.config.radix - 1)) - 1
    }

    pub fn step(&mut self, cycle: i64, inputs: [Option<Sample>; 2]) -> Result<[Option<Sample>; 2]> {
        let k = self.config.radix;
        let eps = self.config.stride();
        let mut lanes = inputs;
        for i in 0..k {
            lanes = match lanes {
                [Some(a), Some(b)] => {
                    let span = eps << (k - 1 - i);
                    if b.index.wrapping_sub(a.index) != span {
                        return Err(Error::Internal(format!(
                            "stage {} column {i}: lanes carry x({}) and x({})",
                            self.config.stage, a.index, b.index
                        )));
                    }
                    let (s, d) = butterfly2(a.value, b.value);
                    [
                        Some(Sample {
                            index: a.index,
                            value: s * self.config.rotation(i, a.index).value(),
                        }),
                        Some(Sample {
                            index: b.index,
                            value: d * self.config.rotation(i, b.index).value(),
                        }),
                    ]
                }
                [None, None] => [None, None],
                _ => {
                    return Err(Error::Internal(format!(
                        "stage {} column {i}: unpaired sample at cycle {cycle}",
                        self.config.stage
                    )))
                }
            };
            if i + 1 < k {
                lanes = self.commutators[i].step(cycle, lanes);
            }
        }
        Ok(lanes)
    }
}
