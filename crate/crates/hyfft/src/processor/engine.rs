//! Cycle-by-cycle execution of a [`StagePlan`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{metrics, plan, Mode, PlanConfig, Reshuffle, StagePlan, StageSchedule};
use crate::banks::{next_schedule, AccessMonitor, AccessOp, AccessTrace, BankArray, CounterSchedule};
use crate::bitperm::{BitPermutation, IndexLayout};
use crate::error::{Error, Result};
use crate::mdc::{Commutator, ComplexSample, MdcUnit, Sample};
use crate::oracle::{dft_direct, fft_radix2, max_abs_error, unscramble};

/// Largest transform checked against the direct DFT; larger ones use the radix-2 oracle.
const DIRECT_ORACLE_MAX: usize = 4096;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Keep every memory access in the returned trace.
    pub trace: bool,
    /// Exchange read and write schedules of `(bank set, batch)`; pipeline mode only.
    pub swap_schedule: Option<(usize, usize)>,
}

/// Summary of one simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub n: usize,
    pub k: usize,
    pub mode: Mode,
    pub parallelism: usize,
    pub stages: usize,
    pub radices: Vec<usize>,
    pub iterations: usize,
    pub cycles_model: u64,
    pub cycles_observed: u64,
    pub conflicts: usize,
    pub utilization: f64,
    pub max_abs_error: f64,
    /// `output_permutation[b]`: raw output position bit holding frequency bit `b`.
    pub output_permutation: Vec<usize>,
    pub batches: usize,
    pub lanes: usize,
    /// Fill latency of each stage in cycles.
    pub fill_latency: Vec<u64>,
    /// Cycles from the first input write to the last output.
    pub cycles_total: u64,
    pub accesses: u64,
    /// `(w, w̃)` per stage.
    pub bit_reverse_widths: Vec<(usize, usize)>,
    /// σ₃ `(h, l)` steps per stage.
    pub sigma3: Vec<Vec<(u64, u64)>>,
    pub fallback: bool,
}

/// Results of [`run_with`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    /// Raw output of each batch, in hardware order.
    pub outputs: Vec<Vec<ComplexSample>>,
    pub report: SimReport,
    pub plan: StagePlan,
    pub trace: Option<AccessTrace>,
}

/// Frame buffer realising an arbitrary position permutation with one window of latency.
#[derive(Debug)]
struct FrameBuffer {
    inverse: BitPermutation,
    origin: i64,
    window: i64,
    serial: usize,
    pending: BTreeMap<i64, Vec<Option<Sample>>>,
}

impl FrameBuffer {
    fn step(&mut self, cycle: i64, inputs: Vec<Option<Sample>>) -> Vec<Option<Sample>> {
        let lanes = inputs.len();
        for (q, s) in inputs.into_iter().enumerate() {
            let Some(s) = s else { continue };
            let rel = cycle - self.origin;
            let (frame, t) = (rel.div_euclid(self.window), rel.rem_euclid(self.window));
            let y = self.inverse.apply_unchecked(((q as u64) << self.serial) | t as u64);
            let mask = (1u64 << self.serial) - 1;
            let at = self.origin + (frame + 1) * self.window + (y & mask) as i64;
            self.pending.entry(at).or_insert_with(|| vec![None; lanes])[(y >> self.serial) as usize] = Some(s);
        }
        self.pending.remove(&cycle).unwrap_or_else(|| vec![None; lanes])
    }
}

/// Branch exchange, reshuffle and MDC row of one stage.
struct Datapath {
    stage: usize,
    layout: IndexLayout,
    branch_source: Vec<usize>,
    swaps: Vec<(usize, Vec<Commutator<Sample>>)>,
    buffer: Option<FrameBuffer>,
    mdcs: Vec<MdcUnit>,
    mdc_origin: i64,
    input_layout: BitPermutation,
}

impl Datapath {
    fn new(st: &StageSchedule, layout: IndexLayout, origin: i64) -> Self {
        let ser = layout.serial_bits();
        let branches = layout.banks();
        let branch_source = (0..branches)
            .map(|q| (st.sigma2.apply_unchecked((q as u64) << ser) >> ser) as usize)
            .collect();
        let mut at = origin;
        let mut swaps = Vec::new();
        let mut buffer = None;
        match &st.reshuffle {
            Reshuffle::Swaps(seq) => {
                for step in seq {
                    let coms = (0..branches / 2)
                        .map(|_| Commutator::new(step.l as usize, at))
                        .collect();
                    swaps.push((step.h as usize, coms));
                    at += step.l as i64;
                }
            }
            Reshuffle::Buffer(tau) => {
                buffer = Some(FrameBuffer {
                    inverse: tau.inverse(),
                    origin: at,
                    window: layout.depth() as i64,
                    serial: ser,
                    pending: BTreeMap::new(),
                });
                at += layout.depth() as i64;
            }
        }
        let mdcs = (0..branches / 2).map(|_| MdcUnit::new(st.mdc.clone(), at)).collect();
        Self {
            stage: st.stage,
            layout,
            branch_source,
            swaps,
            buffer,
            mdcs,
            mdc_origin: at,
            input_layout: st.input_layout.clone(),
        }
    }

    fn step(&mut self, cycle: i64, inputs: Vec<Option<Sample>>) -> Result<Vec<Option<Sample>>> {
        let mut lanes: Vec<Option<Sample>> = self.branch_source.iter().map(|&q| inputs[q]).collect();
        for (h, coms) in &mut self.swaps {
            let lows = (0..lanes.len()).filter(|q| q & *h == 0);
            for (com, q) in coms.iter_mut().zip(lows) {
                let [a, b] = com.step(cycle, [lanes[q], lanes[q | *h]]);
                lanes[q] = a;
                lanes[q | *h] = b;
            }
        }
        if let Some(buf) = self.buffer.as_mut() {
            lanes = buf.step(cycle, lanes);
        }
        let ser = self.layout.serial_bits();
        let t = (cycle - self.mdc_origin).rem_euclid(self.layout.depth() as i64) as u64;
        for (q, s) in lanes.iter().enumerate() {
            if let Some(s) = s {
                let want = self.input_layout.apply_unchecked(((q as u64) << ser) | t);
                if s.index != want {
                    return Err(Error::Internal(format!(
                        "stage {} branch {q} time {t}: got x({}) expected x({want})",
                        self.stage, s.index
                    )));
                }
            }
        }
        let mut out = Vec::with_capacity(lanes.len());
        for (g, unit) in self.mdcs.iter_mut().enumerate() {
            let [a, b] = unit.step(cycle, [lanes[2 * g], lanes[2 * g + 1]])?;
            out.push(a);
            out.push(b);
        }
        Ok(out)
    }
}

fn serial_part(p: &BitPermutation, serial: usize) -> BitPermutation {
    BitPermutation::from_map(p.map()[..serial].to_vec()).expect("pattern fixes the parallel bits")
}

fn expect_full(out: &[Option<Sample>], stage: usize, cycle: u64) -> Result<Vec<Sample>> {
    out.iter()
        .map(|s| {
            s.ok_or_else(|| Error::Internal(format!("stage {stage} produced a bubble at cycle {cycle}")))
        })
        .collect()
}

fn expect_idle(out: &[Option<Sample>], stage: usize, cycle: u64) -> Result<()> {
    if out.iter().any(Option::is_some) {
        return Err(Error::Internal(format!(
            "stage {stage} emitted data outside its window at cycle {cycle}"
        )));
    }
    Ok(())
}

struct GroupRun {
    outputs: Vec<Vec<ComplexSample>>,
    cycles_observed: u64,
    cycles_total: u64,
}

/// One lane group of the pipeline mode streaming `inputs` back to back.
fn run_pipeline_group(
    plan: &StagePlan,
    group: usize,
    inputs: &[&[ComplexSample]],
    opts: &RunOptions,
    monitor: &mut AccessMonitor,
) -> Result<GroupRun> {
    let lay = plan.lanes;
    let ser = lay.serial_bits();
    let window = lay.depth();
    let stages = plan.stages.len();
    let batches = inputs.len();
    let lanes = lay.banks();
    let bank_id = |set: usize, q: usize| (group * stages + set) * lanes + q;

    // bank set s feeds stage s (0-based)
    let mut memories: Vec<BankArray> = (0..stages).map(|_| BankArray::new(lanes, window)).collect();
    let mut schedules: Vec<Vec<CounterSchedule>> = Vec::with_capacity(stages);
    for (set, st) in plan.stages.iter().enumerate() {
        let mem = serial_part(&st.read_pattern, ser);
        let mut list = vec![CounterSchedule::first(&mem)];
        for _ in 1..batches {
            let next = next_schedule(list.last().expect("non-empty"), &mem)?;
            list.push(next);
        }
        if let Some((s, b)) = opts.swap_schedule {
            if s == set && b < batches {
                let sch = &mut list[b];
                std::mem::swap(&mut sch.read, &mut sch.write);
            }
        }
        schedules.push(list);
    }

    let mut read_start = vec![window as i64; stages];
    for s in 1..stages {
        read_start[s] = read_start[s - 1] + plan.stages[s - 1].latency as i64 + window as i64;
    }
    let out_start: Vec<i64> = (0..stages)
        .map(|s| read_start[s] + plan.stages[s].latency as i64)
        .collect();
    let span = (batches as u64 * window) as i64;
    let end = out_start[stages - 1] + span;
    let mut paths: Vec<Datapath> = plan
        .stages
        .iter()
        .zip(&read_start)
        .map(|(st, &o)| Datapath::new(st, lay, o))
        .collect();
    let mut outputs = vec![vec![ComplexSample::default(); plan.config.len as usize]; batches];

    for cycle in 0..end {
        let cyc = cycle as u64;
        let mut produced = Vec::with_capacity(stages);
        for s in 0..stages {
            let rel = cycle - read_start[s];
            let inputs = if (0..span).contains(&rel) {
                let (b, c) = ((rel as u64 / window) as usize, rel as u64 % window);
                let addr = schedules[s][b].read.apply_unchecked(c);
                (0..lanes)
                    .map(|q| {
                        monitor.record(cyc, AccessOp::Read, bank_id(s, q), addr, b)?;
                        memories[s].read(q, addr)
                    })
                    .collect::<Result<Vec<_>>>()?
            } else {
                vec![None; lanes]
            };
            produced.push(paths[s].step(cycle, inputs)?);
        }
        if cycle < span {
            let (b, c) = ((cyc / window) as usize, cyc % window);
            let addr = schedules[0][b].write.apply_unchecked(c);
            for q in 0..lanes {
                let index = ((q as u64) << ser) | c;
                monitor.record(cyc, AccessOp::Write, bank_id(0, q), addr, b)?;
                memories[0].write(
                    q,
                    addr,
                    Sample {
                        index,
                        value: inputs[b][index as usize],
                    },
                )?;
            }
        }
        for (s, out) in produced.iter().enumerate() {
            let rel = cycle - out_start[s];
            if !(0..span).contains(&rel) {
                expect_idle(out, s + 1, cyc)?;
                continue;
            }
            let samples = expect_full(out, s + 1, cyc)?;
            let (b, t) = ((rel as u64 / window) as usize, rel as u64 % window);
            if s + 1 < stages {
                let addr = schedules[s + 1][b].write.apply_unchecked(t);
                for (q, smp) in samples.into_iter().enumerate() {
                    monitor.record(cyc, AccessOp::Write, bank_id(s + 1, q), addr, b)?;
                    memories[s + 1].write(q, addr, smp)?;
                }
            } else {
                for (q, smp) in samples.into_iter().enumerate() {
                    outputs[b][(((q as u64) << ser) | t) as usize] = smp.value;
                }
            }
        }
    }
    Ok(GroupRun {
        outputs,
        cycles_observed: (out_start[stages - 1] + window as i64 - read_start[0]) as u64,
        cycles_total: end as u64,
    })
}

/// Memory-based mode: load, `S` in-place iterations, drain.
fn run_memory_batch(
    plan: &StagePlan,
    input: &[ComplexSample],
    start: u64,
    monitor: &mut AccessMonitor,
) -> Result<GroupRun> {
    let lay = plan.lanes;
    let ser = lay.serial_bits();
    let window = lay.depth();
    let lanes = lay.banks();
    let mut mem = BankArray::new(lanes, window);
    let mut cycle = start;
    for c in 0..window {
        for q in 0..lanes {
            let index = ((q as u64) << ser) | c;
            monitor.record(cycle, AccessOp::Write, q, c, 0)?;
            mem.write(
                q,
                c,
                Sample {
                    index,
                    value: input[index as usize],
                },
            )?;
        }
        cycle += 1;
    }
    let first = cycle;
    for st in &plan.stages {
        let pattern = serial_part(&st.read_pattern, ser);
        let origin = cycle as i64;
        let mut path = Datapath::new(st, lay, origin);
        let done = window + st.latency;
        for rel in 0..done {
            let inputs = if rel < window {
                let addr = pattern.apply_unchecked(rel);
                (0..lanes)
                    .map(|q| {
                        monitor.record(cycle, AccessOp::Read, q, addr, st.stage)?;
                        mem.read(q, addr)
                    })
                    .collect::<Result<Vec<_>>>()?
            } else {
                vec![None; lanes]
            };
            let out = path.step(cycle as i64, inputs)?;
            if rel >= st.latency {
                let t = rel - st.latency;
                let addr = pattern.apply_unchecked(t);
                for (q, smp) in expect_full(&out, st.stage, cycle)?.into_iter().enumerate() {
                    monitor.record(cycle, AccessOp::Write, q, addr, st.stage)?;
                    mem.write(q, addr, smp)?;
                }
            } else {
                expect_idle(&out, st.stage, cycle)?;
            }
            cycle += 1;
        }
    }
    let observed = cycle - first;
    let mut output = vec![ComplexSample::default(); plan.config.len as usize];
    let drain = plan.stages.len() + 1;
    for c in 0..window {
        for q in 0..lanes {
            monitor.record(cycle, AccessOp::Read, q, c, drain)?;
            let s = mem
                .read(q, c)?
                .ok_or_else(|| Error::Internal(format!("bank {q} address {c} empty at drain")))?;
            output[(((q as u64) << ser) | c) as usize] = s.value;
        }
        cycle += 1;
    }
    Ok(GroupRun {
        outputs: vec![output],
        cycles_observed: observed,
        cycles_total: cycle - start,
    })
}

fn reference(x: &[ComplexSample]) -> Result<Vec<ComplexSample>> {
    if x.len() <= DIRECT_ORACLE_MAX {
        Ok(dft_direct(x))
    } else {
        fft_radix2(x)
    }
}

/// Simulates a batch sequence. Pipeline mode deals batch `i` to lane group `i mod P`;
/// memory-based mode processes batches one after another.
pub fn run_with(config: &PlanConfig, inputs: &[Vec<ComplexSample>], opts: &RunOptions) -> Result<RunOutput> {
    let plan = plan(config)?;
    let m = metrics(config)?;
    if inputs.is_empty() {
        return Err(Error::Config("no input batches".into()));
    }
    for x in inputs {
        if x.len() as u64 != config.len {
            return Err(Error::Config(format!("input has {} samples, N = {}", x.len(), config.len)));
        }
        if let Some(i) = x.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numeric {
                index: i,
                error: f64::NAN,
                tolerance: 0.0,
            });
        }
    }
    let lay = plan.lanes;
    let (outputs, observed, total, monitor) = match config.mode {
        Mode::Pipeline => {
            let groups = config.parallelism;
            let mut monitor = AccessMonitor::new(groups * plan.stages.len() * lay.banks(), lay.depth(), opts.trace);
            let mut outputs = vec![Vec::new(); inputs.len()];
            let (mut observed, mut total) = (0, 0);
            for g in 0..groups.min(inputs.len()) {
                let mine: Vec<&[ComplexSample]> = inputs.iter().skip(g).step_by(groups).map(Vec::as_slice).collect();
                let r = run_pipeline_group(&plan, g, &mine, opts, &mut monitor)?;
                for (j, out) in r.outputs.into_iter().enumerate() {
                    outputs[g + j * groups] = out;
                }
                observed = r.cycles_observed;
                total = total.max(r.cycles_total);
            }
            (outputs, observed, total, monitor)
        }
        Mode::Memory => {
            let mut monitor = AccessMonitor::new(lay.banks(), lay.depth(), opts.trace);
            let mut outputs = Vec::with_capacity(inputs.len());
            let (mut observed, mut total) = (0, 0);
            for x in inputs {
                let r = run_memory_batch(&plan, x, total, &mut monitor)?;
                observed = r.cycles_observed;
                total += r.cycles_total;
                outputs.extend(r.outputs);
            }
            (outputs, observed, total, monitor)
        }
    };
    let mut err: f64 = 0.0;
    for (x, raw) in inputs.iter().zip(&outputs) {
        err = err.max(max_abs_error(&unscramble(raw, &plan.output_permutation)?, &reference(x)?));
    }
    let report = SimReport {
        n: config.log_len(),
        k: config.k,
        mode: config.mode,
        parallelism: config.parallelism,
        stages: plan.stages.len(),
        radices: plan.radices.clone(),
        iterations: m.iterations,
        cycles_model: m.cycles_model,
        cycles_observed: observed,
        conflicts: monitor.report.count,
        utilization: m.utilization,
        max_abs_error: err,
        output_permutation: plan.output_permutation.map(),
        batches: inputs.len(),
        lanes: m.lanes,
        fill_latency: plan.stages.iter().map(|s| s.latency).collect(),
        cycles_total: total,
        accesses: monitor.accesses,
        bit_reverse_widths: plan.stages.iter().map(|s| s.widths).collect(),
        sigma3: plan
            .stages
            .iter()
            .map(|s| s.sigma3().iter().map(|st| (st.h, st.l)).collect())
            .collect(),
        fallback: plan.fallback,
    };
    Ok(RunOutput {
        outputs,
        report,
        plan,
        trace: monitor.trace,
    })
}

/// Runs one transform; returns the raw output and the report.
pub fn run(config: &PlanConfig, input: &[ComplexSample]) -> Result<(Vec<ComplexSample>, SimReport)> {
    let mut r = run_with(config, &[input.to_vec()], &RunOptions::default())?;
    Ok((r.outputs.remove(0), r.report))
}

/// Runs several transforms back to back.
pub fn run_batches(config: &PlanConfig, inputs: &[Vec<ComplexSample>]) -> Result<(Vec<Vec<ComplexSample>>, SimReport)> {
    let r = run_with(config, inputs, &RunOptions::default())?;
    Ok((r.outputs, r.report))
}
