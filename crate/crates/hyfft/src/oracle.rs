//! Reference transforms, output-order recovery and the σ₃ swap search.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bitperm::{BitPermutation, IndexLayout, SwapStep};
use crate::error::{Error, Result};
use crate::mdc::{twiddle, ComplexSample};

/// Direct `O(N²)` DFT.
pub fn dft_direct(x: &[ComplexSample]) -> Vec<ComplexSample> {
    let len = x.len() as u64;
    if len == 0 {
        return Vec::new();
    }
    let table: Vec<ComplexSample> = (0..len).map(|e| twiddle(len, e as i64)).collect();
    (0..len)
        .map(|f| {
            let mut acc = ComplexSample::default();
            let mut e = 0u64;
            for &v in x {
                acc += v * table[e as usize];
                e += f;
                if e >= len {
                    e -= len;
                }
            }
            acc
        })
        .collect()
}

/// Iterative radix-2 decimation-in-time FFT.
pub fn fft_radix2(x: &[ComplexSample]) -> Result<Vec<ComplexSample>> {
    let len = x.len();
    if !len.is_power_of_two() {
        return Err(Error::Domain(format!("length {len} is not a power of two")));
    }
    let bits = len.trailing_zeros();
    let mut a: Vec<ComplexSample> = if bits == 0 {
        x.to_vec()
    } else {
        (0..len).map(|i| x[i.reverse_bits() >> (usize::BITS - bits)]).collect()
    };
    let table: Vec<ComplexSample> = (0..len / 2).map(|e| twiddle(len as u64, e as i64)).collect();
    let mut half = 1;
    while half < len {
        let step = len / (2 * half);
        for start in (0..len).step_by(2 * half) {
            for j in 0..half {
                let t = a[start + j + half] * table[j * step];
                let u = a[start + j];
                a[start + j] = u + t;
                a[start + j + half] = u - t;
            }
        }
        half *= 2;
    }
    Ok(a)
}

/// Uniform random samples in the unit square, reproducible from `seed`.
pub fn random_signal(len: usize, seed: u64) -> Vec<ComplexSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| ComplexSample::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

/// Random-phase samples with strictly increasing magnitude.
pub fn probe_signal(len: usize, seed: u64) -> Vec<ComplexSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|i| {
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            ComplexSample::from_polar(1.0 + i as f64 / len as f64, phase)
        })
        .collect()
}

pub fn max_abs_error(a: &[ComplexSample], b: &[ComplexSample]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Reorders raw output into natural frequency order: `natural[i] = raw[π(i)]`.
pub fn unscramble(raw: &[ComplexSample], perm: &BitPermutation) -> Result<Vec<ComplexSample>> {
    if raw.len() != 1 << perm.width() {
        return Err(Error::Domain(format!(
            "{} samples for a {}-bit permutation",
            raw.len(),
            perm.width()
        )));
    }
    (0..raw.len() as u64)
        .map(|i| Ok(raw[perm.apply(i)? as usize]))
        .collect()
}

/// Finds the bit-dimension permutation `π` with `simulated[π(i)] ≈ reference[i]`.
pub fn recover_output_order(simulated: &[ComplexSample], reference: &[ComplexSample]) -> Result<BitPermutation> {
    let len = reference.len();
    if simulated.len() != len || !len.is_power_of_two() {
        return Err(Error::Domain(format!(
            "cannot align {} samples with {len}",
            simulated.len()
        )));
    }
    let n = len.trailing_zeros() as usize;
    let scale = reference.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let tol = 1e-7 * scale;
    let mut map = vec![0usize; n];
    let mut used = vec![false; n];
    for b in 0..n {
        let want = reference[1 << b];
        let hits: Vec<usize> = (0..len)
            .filter(|&j| (simulated[j] - want).norm() <= tol)
            .collect();
        match hits.as_slice() {
            [j] if j.is_power_of_two() && !used[j.trailing_zeros() as usize] => {
                let pos = j.trailing_zeros() as usize;
                used[pos] = true;
                map[pos] = b;
            }
            [_] | [] => {
                return Err(Error::OrderMismatch(format!(
                    "frequency {} has no single-bit position",
                    1usize << b
                )))
            }
            _ => {
                return Err(Error::NeedsNewProbe(format!(
                    "frequency {} matches {} positions",
                    1usize << b,
                    hits.len()
                )))
            }
        }
    }
    let perm = BitPermutation::from_map(map)?;
    for i in 0..len as u64 {
        let j = perm.apply_unchecked(i) as usize;
        if (simulated[j] - reference[i as usize]).norm() > tol {
            return Err(Error::OrderMismatch(format!(
                "frequency {i} not found at position {j}"
            )));
        }
    }
    Ok(perm)
}

/// Order in which [`search_swaps`] prefers among equally short moves.
fn preference(placed: usize, h: usize, l: usize) -> (usize, i64, i64) {
    if placed > 0 {
        (placed, h as i64, l as i64)
    } else {
        (0, -(h as i64), l as i64)
    }
}

const TOKEN_BITS: usize = 5;
const MAX_TOKENS: usize = 64 / TOKEN_BITS;

fn encode(pos: &[usize]) -> u64 {
    pos.iter()
        .enumerate()
        .fold(0, |acc, (i, &p)| acc | (p as u64) << (TOKEN_BITS * i))
}

fn swap_code(code: u64, tokens: usize, a: usize, b: usize) -> u64 {
    let mut out = code;
    for i in 0..tokens {
        let p = ((code >> (TOKEN_BITS * i)) & 31) as usize;
        let q = if p == a {
            b
        } else if p == b {
            a
        } else {
            continue;
        };
        out = (out & !(31 << (TOKEN_BITS * i))) | (q as u64) << (TOKEN_BITS * i);
    }
    out
}

/// Shortest sequence of σ₃ swaps moving tracked bits from `start` to `home`
/// positions (`start[t]`, `home[t]` are positions of token `t`).
///
/// Among shortest sequences each step prefers the move placing the most
/// tokens at home; ties go to the largest `(h, l)`. Moves placing nothing
/// prefer the smallest `h`, then the largest `l`.
pub fn search_swaps(
    layout: &IndexLayout,
    start: &[usize],
    home: &[usize],
    max_steps: usize,
) -> Result<Vec<SwapStep>> {
    let tokens = start.len();
    if tokens != home.len() || tokens > MAX_TOKENS {
        return Err(Error::Domain(format!("cannot track {tokens} bit dimensions")));
    }
    if start.iter().chain(home).any(|&p| p >= layout.n) {
        return Err(Error::Domain("bit position outside layout".into()));
    }
    let ser = layout.serial_bits();
    let moves: Vec<(usize, usize)> = (0..layout.p)
        .flat_map(|h| (0..ser).map(move |l| (h, l)))
        .collect();
    let goal = encode(home);
    let origin = encode(start);
    let mut dist: HashMap<u64, u8> = HashMap::from([(goal, 0)]);
    let mut frontier = vec![goal];
    let mut depth = 0;
    while !dist.contains_key(&origin) {
        if depth == max_steps || frontier.is_empty() {
            return Err(Error::SearchFailure { max_steps });
        }
        depth += 1;
        let mut next = Vec::new();
        for &s in &frontier {
            for &(h, l) in &moves {
                let t = swap_code(s, tokens, ser + h, l);
                dist.entry(t).or_insert_with(|| {
                    next.push(t);
                    depth as u8
                });
            }
        }
        frontier = next;
    }
    let mut seq = Vec::new();
    let mut state = origin;
    let mut pos = start.to_vec();
    while dist[&state] > 0 {
        let d = dist[&state];
        let (h, l) = moves
            .iter()
            .copied()
            .filter(|&(h, l)| dist.get(&swap_code(state, tokens, ser + h, l)) == Some(&(d - 1)))
            .max_by_key(|&(h, l)| {
                let placed = (0..tokens)
                    .filter(|&t| pos[t] != home[t] && (pos[t] == ser + h || pos[t] == l))
                    .filter(|&t| {
                        let moved = if pos[t] == l { ser + h } else { l };
                        moved == home[t]
                    })
                    .count();
                preference(placed, h, l)
            })
            .expect("a neighbour one step closer exists");
        for p in pos.iter_mut() {
            if *p == ser + h {
                *p = l;
            } else if *p == l {
                *p = ser + h;
            }
        }
        state = swap_code(state, tokens, ser + h, l);
        seq.push(SwapStep::from_logs(h, l));
    }
    Ok(seq)
}

/// Position-to-index layout of a stream that is a bit-dimension permutation
/// of `0..N`: `stream[y] == layout.apply(y)`.
pub fn stream_layout(stream: &[u64]) -> Result<BitPermutation> {
    let len = stream.len();
    if !len.is_power_of_two() || len < 2 {
        return Err(Error::Domain(format!("stream length {len} is not a power of two")));
    }
    let n = len.trailing_zeros() as usize;
    let map = (0..n)
        .map(|b| {
            let y = stream
                .iter()
                .position(|&v| v == 1 << b)
                .ok_or_else(|| Error::Domain(format!("index {} missing", 1u64 << b)))?;
            if !y.is_power_of_two() {
                return Err(Error::Domain("stream is not a bit-dimension ordering".into()));
            }
            Ok(y.trailing_zeros() as usize)
        })
        .collect::<Result<Vec<_>>>()?;
    let layout = BitPermutation::from_map(map)
        .map_err(|_| Error::Domain("stream is not a bit-dimension ordering".into()))?;
    if stream
        .iter()
        .enumerate()
        .any(|(y, &v)| layout.apply_unchecked(y as u64) != v)
    {
        return Err(Error::Domain("stream is not a bit-dimension ordering".into()));
    }
    Ok(layout)
}

/// Applies swap steps to a stream: after a step `τ`, position `y` holds what
/// position `τ(y)` held.
pub fn apply_swaps(stream: &[u64], layout: &IndexLayout, steps: &[SwapStep]) -> Result<Vec<u64>> {
    let mut cur = stream.to_vec();
    for &st in steps {
        let t = crate::bitperm::sigma3_step(layout, st)?;
        cur = (0..cur.len() as u64)
            .map(|y| cur[t.apply_unchecked(y) as usize])
            .collect();
    }
    Ok(cur)
}

/// Shortest σ₃ sequence transforming stream `from_order` into `to_order`
/// with `P`-parallel branches (`p = log2 2P` parallel bits).
pub fn search_sigma3_sequence(
    from_order: &[u64],
    to_order: &[u64],
    parallelism: usize,
    max_steps: usize,
) -> Result<Vec<SwapStep>> {
    if from_order.len() != to_order.len() {
        return Err(Error::Domain("streams differ in length".into()));
    }
    let from = stream_layout(from_order)?;
    let to = stream_layout(to_order)?;
    let layout = IndexLayout::for_parallelism(from.width(), parallelism)?;
    // index bit b sits at position bit source(b)
    let start: Vec<usize> = (0..from.width()).map(|b| from.source(b)).collect();
    let home: Vec<usize> = (0..to.width()).map(|b| to.source(b)).collect();
    search_swaps(&layout, &start, &home, max_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitperm::reverse_segment;

    fn c(re: f64, im: f64) -> ComplexSample {
        ComplexSample::new(re, im)
    }

    #[test]
    fn dft_basics() {
        let mut d = vec![c(0., 0.); 8];
        d[0] = c(1., 0.);
        assert!(dft_direct(&d).iter().all(|v| (v - c(1., 0.)).norm() < 1e-15));
        let ones = vec![c(1., 0.); 8];
        let x = dft_direct(&ones);
        assert!((x[0] - c(8., 0.)).norm() < 1e-12);
        assert!(x[1..].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn fft_examples() {
        let x = fft_radix2(&[c(2., 1.), c(0.5, -1.)]).unwrap();
        assert_eq!(x, vec![c(2.5, 0.), c(1.5, 2.)]);
        let x = fft_radix2(&[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]).unwrap();
        let want = [c(1., 0.), c(0., -1.), c(-1., 0.), c(0., 1.)];
        assert!(max_abs_error(&x, &want) < 1e-15);
        assert!(fft_radix2(&[c(0., 0.); 6]).is_err());
        assert_eq!(fft_radix2(&[c(3., 0.)]).unwrap(), vec![c(3., 0.)]);
    }

    #[test]
    fn oracles_agree() {
        let x = random_signal(64, 1);
        assert!(max_abs_error(&dft_direct(&x), &fft_radix2(&x).unwrap()) < 1e-10);
    }

    #[test]
    fn recover_identity_and_reversal() {
        let r = dft_direct(&probe_signal(8, 3));
        assert!(recover_output_order(&r, &r).unwrap().is_identity());
        let rev = reverse_segment(3, 2, 0).unwrap();
        let sim: Vec<_> = (0..8u64).map(|y| r[rev.apply(y).unwrap() as usize]).collect();
        let got = recover_output_order(&sim, &r).unwrap();
        assert_eq!(got, rev);
        assert_eq!(unscramble(&sim, &got).unwrap(), r);
    }

    #[test]
    fn recover_rejects_non_bit_permutation() {
        let r = dft_direct(&probe_signal(8, 3));
        let mut sim = r.clone();
        sim.swap(3, 5);
        assert!(matches!(recover_output_order(&sim, &r), Err(Error::OrderMismatch(_))));
        let flat = vec![c(1., 0.); 8];
        assert!(matches!(recover_output_order(&flat, &flat), Err(Error::NeedsNewProbe(_))));
    }

    #[test]
    fn probe_magnitudes_increase() {
        let p = probe_signal(32, 9);
        assert!(p.windows(2).all(|w| w[1].norm() > w[0].norm()));
    }

    #[test]
    fn search_identical_is_empty() {
        let s: Vec<u64> = (0..64).collect();
        assert!(search_sigma3_sequence(&s, &s, 1, 6).unwrap().is_empty());
    }

    #[test]
    fn search_inverts_known_sequence() {
        let layout = IndexLayout::for_parallelism(6, 2).unwrap();
        let from: Vec<u64> = (0..64).collect();
        let steps = [SwapStep::new(2, 4).unwrap(), SwapStep::new(1, 1).unwrap()];
        let to = apply_swaps(&from, &layout, &steps).unwrap();
        let found = search_sigma3_sequence(&from, &to, 2, 6).unwrap();
        assert_eq!(found.len(), 2);
        assert_eq!(apply_swaps(&from, &layout, &found).unwrap(), to);
    }

    #[test]
    fn search_reports_failure() {
        let layout = IndexLayout::for_parallelism(6, 1).unwrap();
        let from: Vec<u64> = (0..64).collect();
        let steps = [SwapStep::new(1, 1).unwrap(), SwapStep::new(1, 2).unwrap()];
        let to = apply_swaps(&from, &layout, &steps).unwrap();
        assert_eq!(
            search_sigma3_sequence(&from, &to, 1, 1),
            Err(Error::SearchFailure { max_steps: 1 })
        );
    }

    #[test]
    fn stream_layout_rejects_scrambles() {
        let mut s: Vec<u64> = (0..8).collect();
        s.swap(3, 5);
        assert!(stream_layout(&s).is_err());
    }
}
