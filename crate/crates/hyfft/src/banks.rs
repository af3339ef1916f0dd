//! Banked sample memory, counter-driven address schedules and access auditing.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bitperm::{compose, BitPermutation};
use crate::error::{Error, Result};
use crate::mdc::Sample;

/// `2P` memory banks of equal depth.
#[derive(Clone, Debug)]
pub struct BankArray {
    depth: u64,
    banks: Vec<Vec<Option<Sample>>>,
}

impl BankArray {
    pub fn new(banks: usize, depth: u64) -> Self {
        Self {
            depth,
            banks: vec![vec![None; depth as usize]; banks],
        }
    }

    pub fn banks(&self) -> usize {
        self.banks.len()
    }

    pub fn depth(&self) -> u64 {
        self.depth
    }

    fn slot(&mut self, bank: usize, address: u64) -> Result<&mut Option<Sample>> {
        let depth = self.depth;
        self.banks
            .get_mut(bank)
            .and_then(|b| b.get_mut(address as usize))
            .ok_or_else(|| {
                Error::Internal(format!("access to bank {bank} address {address} (depth {depth})"))
            })
    }

    /// Returns the stored sample, leaving the slot readable again.
    pub fn peek(&self, bank: usize, address: u64) -> Option<Sample> {
        self.banks.get(bank)?.get(address as usize).copied().flatten()
    }

    pub fn read(&mut self, bank: usize, address: u64) -> Result<Option<Sample>> {
        Ok(*self.slot(bank, address)?)
    }

    pub fn write(&mut self, bank: usize, address: u64, sample: Sample) -> Result<()> {
        *self.slot(bank, address)? = Some(sample);
        Ok(())
    }
}

/// Read and write address permutations of one batch, over the counter bits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSchedule {
    pub batch: usize,
    pub write: BitPermutation,
    pub read: BitPermutation,
}

impl CounterSchedule {
    /// Schedule of the first batch: natural write order, reads permuted by `sigma_mem`.
    pub fn first(sigma_mem: &BitPermutation) -> Self {
        Self {
            batch: 0,
            write: BitPermutation::identity(sigma_mem.width()),
            read: sigma_mem.clone(),
        }
    }

    /// Schedule of batch `batch` (0-based) under a fixed `sigma_mem`.
    pub fn for_batch(sigma_mem: &BitPermutation, batch: usize) -> Result<Self> {
        let mut s = Self::first(sigma_mem);
        for _ in 0..batch {
            s = next_schedule(&s, sigma_mem)?;
        }
        Ok(s)
    }

    /// Net order seen by a reader: counter `c` yields the sample written at counter `net(c)`.
    pub fn net(&self) -> Result<BitPermutation> {
        compose(&self.write.inverse(), &self.read)
    }
}

/// Next batch writes where the previous one is read; reads restore `sigma_mem`.
pub fn next_schedule(prev: &CounterSchedule, sigma_mem: &BitPermutation) -> Result<CounterSchedule> {
    let write = prev.read.clone();
    let read = compose(sigma_mem, &write.inverse())?;
    Ok(CounterSchedule {
        batch: prev.batch + 1,
        write,
        read,
    })
}

/// Reads `count` counter steps across all banks: `(bank, address, sample)` in counter order.
pub fn read_batch(
    banks: &mut BankArray,
    schedule: &CounterSchedule,
    count: u64,
) -> Result<Vec<(usize, u64, Sample)>> {
    let mut out = Vec::with_capacity(count as usize * banks.banks());
    for c in 0..count {
        let address = schedule.read.apply(c)?;
        for q in 0..banks.banks() {
            let s = banks.read(q, address)?.ok_or_else(|| {
                Error::Internal(format!("bank {q} address {address} read before written"))
            })?;
            out.push((q, address, s));
        }
    }
    Ok(out)
}

/// Writes `stream[c][q]` to bank `q` at address `σ_W(c)`.
pub fn write_batch(banks: &mut BankArray, schedule: &CounterSchedule, stream: &[Vec<Sample>]) -> Result<()> {
    for (c, lanes) in stream.iter().enumerate() {
        let address = schedule.write.apply(c as u64)?;
        for (q, s) in lanes.iter().enumerate() {
            banks.write(q, address, *s)?;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AccessOp {
    #[serde(rename = "R")]
    Read,
    #[serde(rename = "W")]
    Write,
}

/// One memory access. `batch` is the batch number in pipeline mode and the
/// pass number in memory-based mode (0 = load, S + 1 = drain).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Access {
    pub cycle: u64,
    pub op: AccessOp,
    pub bank: usize,
    pub address: u64,
    pub batch: usize,
}

/// Append-only access log.
#[derive(Clone, Debug, Default)]
pub struct AccessTrace {
    pub records: Vec<Access>,
}

impl AccessTrace {
    pub fn push(&mut self, cycle: u64, op: AccessOp, bank: usize, address: u64, batch: usize) {
        self.records.push(Access {
            cycle,
            op,
            bank,
            address,
            batch,
        });
    }

    pub fn merge(&mut self, other: AccessTrace) {
        self.records.extend(other.records);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One JSON object per line.
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConflictReport {
    pub count: usize,
    pub first: Option<Access>,
}

/// Replays the trace in cycle order (reads before writes within a cycle) and
/// counts overwrites of unread data and reads of empty locations.
pub fn audit_conflicts(trace: &[Access]) -> ConflictReport {
    let mut order: Vec<&Access> = trace.iter().collect();
    order.sort_by_key(|a| (a.cycle, a.op));
    let depth = trace.iter().map(|a| a.address + 1).max().unwrap_or(0) as usize;
    let banks = trace.iter().map(|a| a.bank + 1).max().unwrap_or(0);
    let mut full = vec![false; depth * banks];
    let mut report = ConflictReport::default();
    for a in order {
        let slot = &mut full[a.bank * depth + a.address as usize];
        let bad = match a.op {
            AccessOp::Read => !std::mem::replace(slot, false),
            AccessOp::Write => std::mem::replace(slot, true),
        };
        if bad {
            report.count += 1;
            report.first.get_or_insert(*a);
        }
    }
    report
}

/// Online form of [`audit_conflicts`] for callers that issue each cycle's
/// reads before its writes. Optionally keeps the full trace.
#[derive(Clone, Debug)]
pub struct AccessMonitor {
    depth: u64,
    full: Vec<bool>,
    pub accesses: u64,
    pub report: ConflictReport,
    pub trace: Option<AccessTrace>,
}

impl AccessMonitor {
    pub fn new(banks: usize, depth: u64, keep_trace: bool) -> Self {
        Self {
            depth,
            full: vec![false; banks * depth as usize],
            accesses: 0,
            report: ConflictReport::default(),
            trace: keep_trace.then(AccessTrace::default),
        }
    }

    /// Logs one access; fails on the first conflict.
    pub fn record(&mut self, cycle: u64, op: AccessOp, bank: usize, address: u64, batch: usize) -> Result<()> {
        let a = Access {
            cycle,
            op,
            bank,
            address,
            batch,
        };
        if let Some(t) = self.trace.as_mut() {
            t.records.push(a);
        }
        self.accesses += 1;
        let slot = &mut self.full[bank * self.depth as usize + address as usize];
        let detail = match op {
            AccessOp::Read if !std::mem::replace(slot, false) => "read of an empty location",
            AccessOp::Write if std::mem::replace(slot, true) => "overwrite of unread data",
            _ => return Ok(()),
        };
        self.report.count += 1;
        self.report.first.get_or_insert(a);
        Err(Error::Conflict {
            cycle,
            bank,
            address,
            detail: format!("{detail} (batch {batch})"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitperm::{reverse_low, sigma1};
    use num_complex::Complex64;

    fn sample(i: u64) -> Sample {
        Sample {
            index: i,
            value: Complex64::new(i as f64, 0.0),
        }
    }

    #[test]
    fn schedule_recurrence() {
        let mem = reverse_low(5, 3).unwrap();
        let s1 = CounterSchedule::first(&mem);
        assert!(s1.write.is_identity());
        assert_eq!(s1.read, mem);
        let s2 = next_schedule(&s1, &mem).unwrap();
        assert_eq!(s2.write, mem);
        assert!(s2.read.is_identity());
        let s3 = next_schedule(&s2, &mem).unwrap();
        assert_eq!(s3, CounterSchedule { batch: 2, ..s1.clone() });
        for s in [&s1, &s2, &s3] {
            assert_eq!(compose(&s.read, &s.write).unwrap(), mem);
            assert_eq!(s.net().unwrap(), mem);
        }
        let id = BitPermutation::identity(4);
        let t = CounterSchedule::for_batch(&id, 3).unwrap();
        assert!(t.read.is_identity() && t.write.is_identity());
    }

    #[test]
    fn identity_round_trip() {
        let id = BitPermutation::identity(4);
        let sched = CounterSchedule::first(&id);
        let mut banks = BankArray::new(2, 16);
        let stream: Vec<Vec<Sample>> = (0..16).map(|c| vec![sample(c), sample(16 + c)]).collect();
        write_batch(&mut banks, &sched, &stream).unwrap();
        let out = read_batch(&mut banks, &sched, 16).unwrap();
        let addrs: Vec<u64> = out.iter().filter(|r| r.0 == 0).map(|r| r.1).collect();
        assert_eq!(addrs, (0..16).collect::<Vec<_>>());
        assert_eq!(out.iter().map(|r| r.2.index).collect::<Vec<_>>(), {
            let mut v = Vec::new();
            for c in 0..16 {
                v.push(c);
                v.push(16 + c);
            }
            v
        });
    }

    #[test]
    fn permuted_write_then_identity_read() {
        let mem = reverse_low(5, 5).unwrap();
        let sched = CounterSchedule {
            batch: 0,
            write: mem.clone(),
            read: BitPermutation::identity(5),
        };
        let mut banks = BankArray::new(2, 32);
        let stream: Vec<Vec<Sample>> = (0..32).map(|c| vec![sample(c), sample(c)]).collect();
        write_batch(&mut banks, &sched, &stream).unwrap();
        let out = read_batch(&mut banks, &sched, 32).unwrap();
        for (c, chunk) in out.chunks(2).enumerate() {
            assert_eq!(chunk[0].2.index, mem.apply(c as u64).unwrap());
        }
        let again = read_batch(&mut banks, &sched, 32).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn stage_one_read_order_is_bit_reversed() {
        let mem = sigma1(4096, 1, 5, 1).unwrap();
        let counter = crate::bitperm::reverse_low(11, 11).unwrap();
        for c in [1u64, 2, 3, 1000] {
            assert_eq!(mem.apply(c).unwrap(), counter.apply(c).unwrap());
        }
    }

    #[test]
    fn out_of_depth_is_fatal() {
        let mut banks = BankArray::new(2, 4);
        assert!(matches!(banks.write(0, 4, sample(0)), Err(Error::Internal(_))));
        assert!(matches!(banks.read(2, 0), Err(Error::Internal(_))));
    }

    fn interleaved_trace(swap_first: bool) -> Vec<Access> {
        let mem = reverse_low(3, 3).unwrap();
        let depth = 8u64;
        let mut trace = AccessTrace::default();
        let mut sched = CounterSchedule::first(&mem);
        for batch in 0..3usize {
            let (w, r) = if swap_first && batch == 0 {
                (&sched.read, &sched.write)
            } else {
                (&sched.write, &sched.read)
            };
            for c in 0..depth {
                trace.push(batch as u64 * depth + c, AccessOp::Write, 0, w.apply(c).unwrap(), batch);
                trace.push((batch as u64 + 1) * depth + c, AccessOp::Read, 0, r.apply(c).unwrap(), batch);
            }
            sched = next_schedule(&sched, &mem).unwrap();
        }
        trace.records
    }

    #[test]
    fn audit_clean_and_violating_schedules() {
        assert_eq!(audit_conflicts(&interleaved_trace(false)).count, 0);
        let bad = audit_conflicts(&interleaved_trace(true));
        assert!(bad.count >= 1);
        assert!(bad.first.is_some());
    }

    #[test]
    fn audit_detects_read_before_write() {
        let t = [Access {
            cycle: 0,
            op: AccessOp::Read,
            bank: 1,
            address: 3,
            batch: 0,
        }];
        assert_eq!(audit_conflicts(&t).count, 1);
    }

    #[test]
    fn ndjson_format() {
        let mut t = AccessTrace::default();
        t.push(5, AccessOp::Write, 1, 2, 0);
        let mut buf = Vec::new();
        t.write_ndjson(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"cycle\":5,\"op\":\"W\",\"bank\":1,\"address\":2,\"batch\":0}\n"
        );
    }
}
