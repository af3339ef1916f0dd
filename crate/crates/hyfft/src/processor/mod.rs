//! Stage planning, execution engines and performance metrics.

mod engine;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::bitperm::{
    compose, memory_range_ok, parallelism_bits, reverse_segment, sigma1, sigma3_step, sigma_hat,
    w_membased, w_pipeline, BitPermutation, IndexLayout, SwapStep,
};
use crate::error::{Error, Result};
use crate::mdc::{Block, MdcConfig, COLUMNS};
use crate::oracle::search_swaps;

pub use engine::{run, run_batches, run_with, RunOptions, RunOutput, SimReport};

/// Largest supported transform, `2^19`.
pub const MAX_LOG_LEN: usize = 19;
/// MDC units available in hardware.
pub const MDC_UNITS: usize = 4;
/// Butterflies provisioned across all MDC units.
pub const PROVISIONED_BUTTERFLIES: usize = MDC_UNITS * COLUMNS;
/// Default bound on σ₃ steps per stage.
pub const MAX_SIGMA3_STEPS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One MDC unit per stage; `P` lane groups stream independent batches.
    Pipeline,
    /// `P` MDC units iterate over all stages of one batch, in place.
    Memory,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pipeline => "pipeline",
            Mode::Memory => "memory",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pipeline" => Ok(Mode::Pipeline),
            "memory" | "memory-based" => Ok(Mode::Memory),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlanConfig {
    pub len: u64,
    pub k: usize,
    pub parallelism: usize,
    pub mode: Mode,
    /// Admit memory-based transforms with `2^k < N ≤ 2^{2k}`.
    pub extended_memory_range: bool,
    pub max_sigma3_steps: usize,
}

impl PlanConfig {
    pub fn new(len: u64, k: usize, parallelism: usize, mode: Mode) -> Self {
        Self {
            len,
            k,
            parallelism,
            mode,
            extended_memory_range: false,
            max_sigma3_steps: MAX_SIGMA3_STEPS,
        }
    }

    pub fn pipeline(len: u64, parallelism: usize) -> Self {
        Self::new(len, 5, parallelism, Mode::Pipeline)
    }

    pub fn memory(len: u64, parallelism: usize) -> Self {
        Self::new(len, 5, parallelism, Mode::Memory)
    }

    pub fn with_extended_range(mut self, on: bool) -> Self {
        self.extended_memory_range = on;
        self
    }

    pub fn log_len(&self) -> usize {
        self.len.trailing_zeros() as usize
    }

    pub fn stages(&self) -> usize {
        self.log_len().div_ceil(self.k)
    }

    /// Parallel MDC lanes working on one transform.
    pub fn transform_parallelism(&self) -> usize {
        match self.mode {
            Mode::Pipeline => 1,
            Mode::Memory => self.parallelism,
        }
    }

    /// Samples per cycle for one transform (`P_c`).
    pub fn lanes(&self) -> usize {
        2 * self.transform_parallelism()
    }

    /// Bank/branch layout of one lane group.
    pub fn lane_layout(&self) -> Result<IndexLayout> {
        IndexLayout::new(self.log_len(), parallelism_bits(self.transform_parallelism())? + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.len;
        if len < 2 || !len.is_power_of_two() || self.log_len() > MAX_LOG_LEN {
            return Err(Error::Config(format!(
                "N = {len} must be a power of two in [2, 2^{MAX_LOG_LEN}]"
            )));
        }
        if !(1..=COLUMNS).contains(&self.k) {
            return Err(Error::Config(format!("k = {} outside 1..=5", self.k)));
        }
        parallelism_bits(self.parallelism)?;
        let n = self.log_len();
        let stages = self.stages();
        match self.mode {
            Mode::Pipeline => {
                if stages * self.parallelism > MDC_UNITS {
                    return Err(Error::ModeUnsupported {
                        mode: "pipeline",
                        len,
                        reason: format!(
                            "{stages} stages x P = {} lane groups exceed {MDC_UNITS} MDC units",
                            self.parallelism
                        ),
                    });
                }
            }
            Mode::Memory => {
                if !memory_range_ok(n, self.k, self.extended_memory_range) {
                    let lo = if self.extended_memory_range { self.k } else { 2 * self.k };
                    return Err(Error::ModeUnsupported {
                        mode: "memory",
                        len,
                        reason: format!("requires 2^{lo} < N <= 2^{}", 3 * self.k),
                    });
                }
                let widest = stage_radices(len, self.k)?.into_iter().max().unwrap_or(1);
                if len < (self.parallelism as u64) << widest {
                    return Err(Error::ModeUnsupported {
                        mode: "memory",
                        len,
                        reason: format!(
                            "a radix-2^{widest} block does not fit {} parallel MDCs",
                            self.parallelism
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Radix exponents per stage: `k₁ = n − k(S−1)`, the rest `k`.
pub fn stage_radices(len: u64, k: usize) -> Result<Vec<usize>> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::Domain(format!("N = {len} is not a power of two >= 2")));
    }
    if !(1..=COLUMNS).contains(&k) {
        return Err(Error::Domain(format!("k = {k} outside 1..=5")));
    }
    let n = len.trailing_zeros() as usize;
    let stages = n.div_ceil(k);
    let mut r = vec![k; stages];
    r[0] = n - k * (stages - 1);
    Ok(r)
}

/// `ε_s = N / 2^{k₁+…+k_s}`; `ε₀ = N`.
pub fn epsilon(len: u64, s: usize, radices: &[usize]) -> u64 {
    len >> radices.iter().take(s).sum::<usize>()
}

fn check_stage(s: usize, radices: &[usize]) -> Result<()> {
    if s < 1 || s > radices.len() {
        return Err(Error::Domain(format!("stage {s} outside 1..={}", radices.len())));
    }
    Ok(())
}

/// Leading indices `m` of the blocks processed at stage `s`, ascending.
pub fn block_leading_indices(len: u64, s: usize, radices: &[usize]) -> Result<Vec<u64>> {
    check_stage(s, radices)?;
    if s == radices.len() {
        return Ok((0..len).step_by(1 << radices[s - 1]).collect());
    }
    let prev = epsilon(len, s - 1, radices);
    let eps = epsilon(len, s, radices);
    Ok((0..len / prev)
        .flat_map(|v| v * prev..v * prev + eps)
        .collect())
}

/// Block of stage `s` led by `m`: `b_{r,c} = x(m + ε_s(2^{k_s−1} r + c))`.
pub fn build_block(len: u64, s: usize, radices: &[usize], m: u64) -> Result<Block> {
    check_stage(s, radices)?;
    let k = radices[s - 1];
    let eps = epsilon(len, s, radices);
    let index: Vec<u64> = (0..1u64 << k).map(|j| m + eps * j).collect();
    if index.last().is_some_and(|&i| i >= len) {
        return Err(Error::Domain(format!("block led by {m} exceeds N = {len}")));
    }
    Block::from_indices(k, index)
}

/// Stream ordering of one stage: `index = layout.apply(position)`, where a
/// position holds the branch number in its parallel bits and the time in its
/// serial bits.
pub type StreamLayout = BitPermutation;

/// How the stream reaching the MDCs is rearranged when no σ₃ sequence exists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Reshuffle {
    Swaps(Vec<SwapStep>),
    /// Explicit frame buffer applying an arbitrary position permutation.
    Buffer(BitPermutation),
}

/// Everything needed to run one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub stage: usize,
    pub radix: usize,
    pub epsilon: u64,
    /// `(w, w̃)` reversal widths.
    pub widths: (usize, usize),
    /// Read-address pattern (σ₁ in pipeline mode, σ̂ in memory-based mode).
    pub read_pattern: BitPermutation,
    /// Write-address pattern for the stage output (identity in pipeline mode).
    pub write_pattern: BitPermutation,
    pub sigma2: BitPermutation,
    pub reshuffle: Reshuffle,
    pub mdc: MdcConfig,
    /// Stream entering the MDCs.
    pub input_layout: StreamLayout,
    /// Stream leaving the MDCs.
    pub output_layout: StreamLayout,
    /// Cycles between a stream time entering the stage and leaving the MDCs.
    pub latency: u64,
}

impl StageSchedule {
    pub fn sigma3(&self) -> &[SwapStep] {
        match &self.reshuffle {
            Reshuffle::Swaps(s) => s,
            Reshuffle::Buffer(_) => &[],
        }
    }

    /// Leading index of each block per MDC, in arrival order.
    pub fn block_order(&self, lanes: &IndexLayout) -> Vec<Vec<u64>> {
        let cols = 1u64 << (self.radix - 1);
        let ser = lanes.serial_bits();
        (0..lanes.banks() / 2)
            .map(|g| {
                (0..lanes.depth() / cols)
                    .map(|b| self.input_layout.apply_unchecked(((2 * g as u64) << ser) | (b * cols)))
                    .collect()
            })
            .collect()
    }

    /// The blocks fed to MDC `g`, reconstructed from the input layout.
    pub fn mdc_blocks(&self, lanes: &IndexLayout, g: usize) -> Result<Vec<Block>> {
        let cols = 1u64 << (self.radix - 1);
        let ser = lanes.serial_bits();
        (0..lanes.depth() / cols)
            .map(|b| {
                let index = (0..2u64)
                    .flat_map(|r| {
                        (0..cols).map(move |c| ((2 * g as u64 + r) << ser) | (b * cols + c))
                    })
                    .map(|pos| self.input_layout.apply_unchecked(pos))
                    .collect();
                Block::from_indices(self.radix, index)
            })
            .collect()
    }
}

/// A complete schedule for one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub config: PlanConfig,
    pub radices: Vec<usize>,
    pub lanes: IndexLayout,
    pub stages: Vec<StageSchedule>,
    /// Ordering of the raw output: final MDC stream (pipeline) or bank contents (memory-based).
    pub output_layout: StreamLayout,
    /// Maps frequency `f` to its raw output position.
    pub output_permutation: BitPermutation,
    /// Set when some stage could not be reshuffled within the step bound.
    pub fallback: bool,
}

impl StagePlan {
    pub fn sigma3_sequences(&self) -> Vec<Vec<SwapStep>> {
        self.stages.iter().map(|s| s.sigma3().to_vec()).collect()
    }

    /// Cycles per stage window.
    pub fn window(&self) -> u64 {
        self.lanes.depth()
    }
}

/// Position permutation of an MDC: output position `y` holds what input position `M(y)` held.
fn mdc_shuffle(lanes: &IndexLayout, k: usize) -> BitPermutation {
    let n = lanes.n;
    let lane = lanes.serial_bits();
    let mut map: Vec<usize> = (0..n).collect();
    if k >= 2 {
        map[lane] = k - 2;
        map[0] = lane;
        for (i, m) in map.iter_mut().enumerate().take(k - 1).skip(1) {
            *m = i - 1;
        }
    }
    BitPermutation::from_map(map).expect("valid shuffle")
}

/// Index bits required at fixed positions when entering stage `s`:
/// `(index bit, position)`.
fn required_bits(lanes: &IndexLayout, radices: &[usize], s: usize) -> Vec<(usize, usize)> {
    let k = radices[s - 1];
    let base = lanes.n - radices[..s].iter().sum::<usize>();
    let mut req = vec![(base + k - 1, lanes.serial_bits())];
    req.extend((0..k - 1).map(|i| (base + i, i)));
    req
}

/// Whether a stream layout feeds every MDC complete stage-`s` blocks.
pub fn is_valid_mdc_input(layout: &StreamLayout, lanes: &IndexLayout, radices: &[usize], s: usize) -> bool {
    required_bits(lanes, radices, s)
        .into_iter()
        .all(|(bit, pos)| layout.source(bit) == pos)
}

/// Swaps reaching the MDC input class from `layout`, or `None` past `max_steps`.
fn reshuffle_for(
    layout: &StreamLayout,
    lanes: &IndexLayout,
    radices: &[usize],
    s: usize,
    max_steps: usize,
) -> Result<Option<Vec<SwapStep>>> {
    let req = required_bits(lanes, radices, s);
    let start: Vec<usize> = req.iter().map(|&(bit, _)| layout.source(bit)).collect();
    let home: Vec<usize> = req.iter().map(|&(_, pos)| pos).collect();
    match search_swaps(lanes, &start, &home, max_steps) {
        Ok(seq) => Ok(Some(seq)),
        Err(Error::SearchFailure { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Position permutation moving each required bit straight to its position.
fn direct_reshuffle(layout: &StreamLayout, lanes: &IndexLayout, radices: &[usize], s: usize) -> BitPermutation {
    // new position of each index bit: required ones go home, displaced ones fill the vacated slots
    let mut pos_of: Vec<usize> = (0..lanes.n).map(|b| layout.source(b)).collect();
    for (bit, home) in required_bits(lanes, radices, s) {
        let other = (0..lanes.n).find(|&b| pos_of[b] == home).expect("bijection");
        pos_of.swap(bit, other);
    }
    // compose(layout, τ) must place bit b at pos_of[b]: τ(new) = old
    let mut map = vec![0; lanes.n];
    for b in 0..lanes.n {
        map[pos_of[b]] = layout.source(b);
    }
    BitPermutation::from_map(map).expect("bijection")
}

/// Derives stage layouts for given read/write patterns.
fn derive_stages(
    config: &PlanConfig,
    lanes: &IndexLayout,
    radices: &[usize],
    patterns: &[(BitPermutation, BitPermutation, (usize, usize))],
) -> Result<(Vec<StageSchedule>, StreamLayout, bool)> {
    let len = config.len;
    let n = lanes.n;
    let mut memory = BitPermutation::identity(n);
    let mut stages = Vec::with_capacity(radices.len());
    let mut fallback = false;
    for (i, (read, write, widths)) in patterns.iter().enumerate() {
        let s = i + 1;
        let k = radices[i];
        let sig2 = sigma2_for(lanes)?;
        let mut layout = compose(&compose(&memory, read)?, &sig2)?;
        let window = lanes.depth();
        let (reshuffle, extra) = match reshuffle_for(&layout, lanes, radices, s, config.max_sigma3_steps)? {
            Some(seq) => {
                for &st in &seq {
                    layout = compose(&layout, &sigma3_step(lanes, st)?)?;
                }
                let delay: u64 = seq.iter().map(|st| st.l).sum();
                (Reshuffle::Swaps(seq), delay)
            }
            None => {
                fallback = true;
                let tau = direct_reshuffle(&layout, lanes, radices, s);
                layout = compose(&layout, &tau)?;
                (Reshuffle::Buffer(tau), window)
            }
        };
        if !is_valid_mdc_input(&layout, lanes, radices, s) {
            return Err(Error::Internal(format!("stage {s} input layout {layout:?} invalid")));
        }
        let eps = epsilon(len, s, radices);
        let mdc = MdcConfig::new(k, eps << k, s)?;
        let output = compose(&layout, &mdc_shuffle(lanes, k))?;
        memory = compose(&output, &write.inverse())?;
        stages.push(StageSchedule {
            stage: s,
            radix: k,
            epsilon: eps,
            widths: *widths,
            read_pattern: read.clone(),
            write_pattern: write.clone(),
            sigma2: sig2,
            reshuffle,
            mdc,
            input_layout: layout,
            output_layout: output,
            latency: extra + (1u64 << (k - 1)) - 1,
        });
    }
    let out = match config.mode {
        Mode::Pipeline => stages.last().expect("at least one stage").output_layout.clone(),
        Mode::Memory => memory,
    };
    Ok((stages, out, fallback))
}

fn sigma2_for(lanes: &IndexLayout) -> Result<BitPermutation> {
    reverse_segment(lanes.n, lanes.n - 1, lanes.serial_bits())
}

/// Read pattern, write pattern and `(w, w̃)` of one stage.
type StagePatterns = (BitPermutation, BitPermutation, (usize, usize));

fn read_patterns(config: &PlanConfig, lanes: &IndexLayout) -> Result<Vec<StagePatterns>> {
    let len = config.len;
    let par = config.transform_parallelism();
    let n = lanes.n;
    (1..=config.stages())
        .map(|s| match config.mode {
            Mode::Pipeline if lanes.serial_bits() == 0 => {
                Ok((BitPermutation::identity(n), BitPermutation::identity(n), (0, 0)))
            }
            Mode::Pipeline => {
                let w = w_pipeline(len, s, config.k, par)?;
                Ok((sigma1(len, s, config.k, par)?, BitPermutation::identity(n), (w, 0)))
            }
            Mode::Memory => {
                let hat = sigma_hat(len, s, config.k, par)?;
                Ok((hat.clone(), hat, w_membased(len, s, config.k, par)?))
            }
        })
        .collect()
}

fn plan_cache() -> &'static Mutex<HashMap<PlanConfig, StagePlan>> {
    static CACHE: OnceLock<Mutex<HashMap<PlanConfig, StagePlan>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Builds (or fetches from cache) the stage plan of a configuration.
pub fn plan(config: &PlanConfig) -> Result<StagePlan> {
    config.validate()?;
    if let Some(p) = plan_cache().lock().expect("plan cache").get(config) {
        return Ok(p.clone());
    }
    let radices = stage_radices(config.len, config.k)?;
    let lanes = config.lane_layout()?;
    let patterns = read_patterns(config, &lanes)?;
    let (stages, output_layout, fallback) = derive_stages(config, &lanes, &radices, &patterns)?;
    let rev = reverse_segment(lanes.n, lanes.n - 1, 0)?;
    let output_permutation = compose(&rev, &output_layout)?.inverse();
    let p = StagePlan {
        config: *config,
        radices,
        lanes,
        stages,
        output_layout,
        output_permutation,
        fallback,
    };
    plan_cache()
        .lock()
        .expect("plan cache")
        .insert(*config, p.clone());
    Ok(p)
}

/// Stage-`stage` σ₃ sequences per residue `n mod k`, for `P`-parallel MDCs
/// on one transform. Each row uses a representative `n` (the smallest in
/// `[3k, 4k)` with that residue, capped at 19).
pub fn sigma3_table(k: usize, parallelism: usize, stage: usize) -> Result<Vec<(usize, usize, Vec<SwapStep>)>> {
    if !(1..=COLUMNS).contains(&k) {
        return Err(Error::Config(format!("k = {k} outside 1..=5")));
    }
    parallelism_bits(parallelism)?;
    (0..k)
        .map(|r| {
            let mut n = 3 * k + r;
            while n > MAX_LOG_LEN {
                n -= k;
            }
            let seqs = sigma3_chain(n, k, parallelism)?;
            let row = seqs
                .get(stage - 1)
                .ok_or_else(|| Error::Config(format!("n = {n} has fewer than {stage} stages")))?;
            Ok((r, n, row.clone()))
        })
        .collect()
}

/// σ₃ sequences of all stages for `P` MDCs working on one `2^n`-point transform.
pub fn sigma3_chain(n: usize, k: usize, parallelism: usize) -> Result<Vec<Vec<SwapStep>>> {
    let len = 1u64 << n;
    let config = PlanConfig {
        len,
        k,
        parallelism,
        mode: Mode::Memory,
        extended_memory_range: true,
        max_sigma3_steps: MAX_SIGMA3_STEPS,
    };
    let lanes = IndexLayout::for_parallelism(n, parallelism)?;
    let radices = stage_radices(len, k)?;
    let patterns = (1..=radices.len())
        .map(|s| {
            Ok((
                sigma1(len, s, k, parallelism)?,
                BitPermutation::identity(n),
                (w_pipeline(len, s, k, parallelism)?, 0),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (stages, _, fallback) = derive_stages(&config, &lanes, &radices, &patterns)?;
    if fallback {
        return Err(Error::SearchFailure {
            max_steps: MAX_SIGMA3_STEPS,
        });
    }
    Ok(stages.iter().map(|s| s.sigma3().to_vec()).collect())
}

/// Closed-form performance figures of a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub iterations: usize,
    /// Samples per cycle for one transform (`P_c`).
    pub lanes: usize,
    pub cycles_model: u64,
    /// Active butterflies over the 20 provisioned ones.
    pub utilization: f64,
}

pub fn metrics(config: &PlanConfig) -> Result<Metrics> {
    config.validate()?;
    let n = config.log_len();
    let iterations = config.stages();
    let lanes = config.lanes();
    let active = match config.mode {
        Mode::Pipeline => (n * config.parallelism) as f64,
        Mode::Memory => (n * config.parallelism) as f64 / iterations as f64,
    };
    Ok(Metrics {
        iterations,
        lanes,
        cycles_model: iterations as u64 * config.len / lanes as u64,
        utilization: active / PROVISIONED_BUTTERFLIES as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radices_examples() {
        assert_eq!(stage_radices(4096, 5).unwrap(), vec![2, 5, 5]);
        assert_eq!(stage_radices(32, 5).unwrap(), vec![5]);
        assert_eq!(stage_radices(1 << 19, 5).unwrap(), vec![4, 5, 5, 5]);
        assert_eq!(stage_radices(2, 5).unwrap(), vec![1]);
        assert!(stage_radices(48, 5).is_err());
    }

    #[test]
    fn epsilon_examples() {
        let r = [2, 5, 5];
        assert_eq!(epsilon(4096, 1, &r), 1024);
        assert_eq!(epsilon(4096, 2, &r), 32);
        assert_eq!(epsilon(4096, 0, &r), 4096);
    }

    #[test]
    fn leading_index_examples() {
        let r = [2, 5, 5];
        assert_eq!(block_leading_indices(4096, 1, &r).unwrap(), (0..1024).collect::<Vec<_>>());
        let m2: Vec<u64> = [0u64, 1024, 2048, 3072]
            .iter()
            .flat_map(|&v| v..v + 32)
            .collect();
        assert_eq!(block_leading_indices(4096, 2, &r).unwrap(), m2);
        assert_eq!(
            block_leading_indices(4096, 3, &r).unwrap(),
            (0..4096).step_by(32).collect::<Vec<_>>()
        );
        assert!(block_leading_indices(4096, 4, &r).is_err());
    }

    #[test]
    fn block_examples() {
        let r = [2, 5, 5];
        let b = build_block(4096, 1, &r, 0).unwrap();
        assert_eq!(b.index_rows(), [vec![0, 1024], vec![2048, 3072]]);
        let b = build_block(4096, 2, &r, 0).unwrap();
        assert_eq!(b.index_rows()[0], (0..16).map(|c| 32 * c).collect::<Vec<_>>());
        assert_eq!(b.index_rows()[1], (16..32).map(|c| 32 * c).collect::<Vec<_>>());
        let b = build_block(4096, 3, &r, 64).unwrap();
        assert_eq!(b.index, (64..96).collect::<Vec<_>>());
        assert!(build_block(4096, 1, &r, 1024).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PlanConfig::pipeline(48, 1).validate().is_err());
        assert!(PlanConfig::pipeline(1 << 20, 1).validate().is_err());
        assert!(PlanConfig::pipeline(1 << 19, 1).validate().is_ok());
        assert!(PlanConfig::pipeline(1024, 2).validate().is_ok());
        assert!(PlanConfig::pipeline(2048, 2).validate().is_err());
        assert!(PlanConfig::pipeline(32, 4).validate().is_ok());
        assert!(PlanConfig::pipeline(64, 4).validate().is_err());
        assert!(PlanConfig::pipeline(64, 3).validate().is_err());
        assert!(PlanConfig::memory(4096, 4).validate().is_ok());
        assert!(PlanConfig::memory(1024, 4).validate().is_err());
        assert!(PlanConfig::memory(1024, 2).with_extended_range(true).validate().is_ok());
        assert!(PlanConfig::memory(64, 4).with_extended_range(true).validate().is_err());
        assert!(PlanConfig::memory(1 << 16, 1).validate().is_err());
    }

    #[test]
    fn worked_plan_4096() {
        let p = plan(&PlanConfig::pipeline(4096, 1)).unwrap();
        assert_eq!(p.radices, vec![2, 5, 5]);
        assert!(p.stages[0].sigma3().is_empty());
        let w: Vec<usize> = p.stages.iter().map(|s| s.widths.0).collect();
        assert_eq!(w, vec![11, 6, 11]);
    }

    #[test]
    fn memory_plan_widths() {
        let p = plan(&PlanConfig::memory(4096, 4)).unwrap();
        let w: Vec<(usize, usize)> = p.stages.iter().map(|s| s.widths).collect();
        assert_eq!(w, vec![(9, 0), (9, 4), (4, 0)]);
        assert!(!p.fallback);
    }

    #[test]
    fn blocks_cover_each_stage() {
        for (len, par, mode) in [(4096, 1, Mode::Pipeline), (4096, 4, Mode::Memory), (256, 2, Mode::Pipeline)] {
            let p = plan(&PlanConfig::new(len, 5, par, mode)).unwrap();
            for st in &p.stages {
                let mut ms: Vec<u64> = p.stages[st.stage - 1]
                    .block_order(&p.lanes)
                    .concat();
                ms.sort_unstable();
                assert_eq!(ms, block_leading_indices(len, st.stage, &p.radices).unwrap());
                for g in 0..p.lanes.banks() / 2 {
                    for b in st.mdc_blocks(&p.lanes, g).unwrap() {
                        assert_eq!(b, build_block(len, st.stage, &p.radices, b.leading_index()).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn fallback_reshuffle_is_valid() {
        let mut cfg = PlanConfig::pipeline(1 << 10, 1);
        cfg.max_sigma3_steps = 0;
        let p = plan(&cfg).unwrap();
        assert!(p.fallback);
        assert!(p.stages.iter().any(|s| matches!(s.reshuffle, Reshuffle::Buffer(_))));
    }

    #[test]
    fn metrics_closed_forms() {
        let m = metrics(&PlanConfig::memory(4096, 4)).unwrap();
        assert_eq!(m.iterations, 3);
        assert_eq!(m.lanes, 8);
        assert_eq!(m.cycles_model, 3 * 4096 / 8);
        let m = metrics(&PlanConfig::pipeline(4096, 1)).unwrap();
        assert_eq!(m.cycles_model, 3 * 2048);
        assert!((m.utilization - 12.0 / 20.0).abs() < 1e-15);
    }
}
