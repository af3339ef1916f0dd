use hyfft::bitperm::{
    compose, reverse_segment, sigma1, sigma2, sigma3_step, BitPermutation, IndexLayout, SwapStep,
};
use hyfft::mdc::{butterfly2, mdc_process_block, twiddle, Block, MdcConfig};
use hyfft::oracle::{
    apply_swaps, dft_direct, probe_signal, random_signal, recover_output_order, search_sigma3_sequence,
};
use hyfft::processor::{block_leading_indices, build_block, plan, run_with, stage_radices, RunOptions};
use hyfft::{ComplexSample, PlanConfig};
use proptest::prelude::*;

fn perm(n: usize) -> impl Strategy<Value = BitPermutation> {
    Just((0..n).collect::<Vec<usize>>())
        .prop_shuffle()
        .prop_map(|m| BitPermutation::from_map(m).unwrap())
}

fn bijective(p: &BitPermutation) -> bool {
    let mut t = p.table();
    t.sort_unstable();
    t.into_iter().eq(0..1u64 << p.width())
}

fn sample() -> impl Strategy<Value = ComplexSample> {
    (-1e3..1e3f64, -1e3..1e3f64).prop_map(|(re, im)| ComplexSample::new(re, im))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permutations_are_bijective(p in (1usize..=14).prop_flat_map(perm)) {
        prop_assert!(bijective(&p));
        prop_assert_eq!(compose(&p, &p.inverse()).unwrap(), BitPermutation::identity(p.width()));
    }

    #[test]
    fn reversals_are_involutions((n, hi, lo) in (1usize..=16).prop_flat_map(|n| (Just(n), 0..n)).prop_flat_map(|(n, hi)| (Just(n), Just(hi), 0..=hi))) {
        let r = reverse_segment(n, hi, lo).unwrap();
        prop_assert!(r.is_involution());
        prop_assert!(bijective(&r));
    }

    #[test]
    fn compose_is_associative((a, b, c) in (1usize..=12).prop_flat_map(|n| (perm(n), perm(n), perm(n)))) {
        let left = compose(&compose(&a, &b).unwrap(), &c).unwrap();
        let right = compose(&a, &compose(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(left, right);
    }

    #[test]
    fn compose_matches_application((a, b, x) in (1usize..=12).prop_flat_map(|n| (perm(n), perm(n), 0..1u64 << n))) {
        let ab = compose(&a, &b).unwrap();
        prop_assert_eq!(ab.apply(x).unwrap(), a.apply(b.apply(x).unwrap()).unwrap());
    }

    #[test]
    fn sigma_patterns_touch_their_own_bits(n in 2usize..=19, par in prop::sample::select(vec![1usize, 2, 4])) {
        let len = 1u64 << n;
        let Ok(layout) = IndexLayout::for_parallelism(n, par) else { return Ok(()) };
        for s in 1..=stage_radices(len, 5).unwrap().len() {
            let ser = layout.serial_bits();
            let s1 = sigma1(len, s, 5, par).unwrap().map();
            let s2 = sigma2(len, s, 5, par).unwrap().map();
            prop_assert!((ser..n).all(|b| s1[b] == b));
            prop_assert!((0..ser).all(|b| s2[b] == b));
        }
    }

    #[test]
    fn sigma3_steps_are_involutions(n in 4usize..=19, par in prop::sample::select(vec![1usize, 2, 4]), h in 0usize..3, l in 0usize..19) {
        let layout = IndexLayout::for_parallelism(n, par).unwrap();
        let (h, l) = (h % layout.p, l % layout.serial_bits());
        let t = sigma3_step(&layout, SwapStep::from_logs(h, l)).unwrap();
        prop_assert!(t.is_involution());
        prop_assert_eq!(t.map()[layout.serial_bits() + h], l);
    }

    #[test]
    fn radices_cover_all_bits(n in 1usize..=19, k in 1usize..=5) {
        let r = stage_radices(1 << n, k).unwrap();
        prop_assert_eq!(r.iter().sum::<usize>(), n);
        prop_assert!(r.iter().all(|&x| (1..=k).contains(&x)));
    }

    #[test]
    fn blocks_partition_the_indices(n in 1usize..=12) {
        let len = 1u64 << n;
        let r = stage_radices(len, 5).unwrap();
        for s in 1..=r.len() {
            let mut all: Vec<u64> = block_leading_indices(len, s, &r)
                .unwrap()
                .into_iter()
                .flat_map(|m| build_block(len, s, &r, m).unwrap().index)
                .collect();
            all.sort_unstable();
            prop_assert!(all.into_iter().eq(0..len));
        }
    }

    #[test]
    fn mdc_block_is_linear(k in 1usize..=5, x in prop::collection::vec(sample(), 32), y in prop::collection::vec(sample(), 32), a in sample(), b in sample()) {
        let size = 1usize << k;
        let cfg = MdcConfig::new(k, 4 * size as u64, 2).unwrap();
        let idx: Vec<u64> = (0..size as u64).map(|j| 1 + 4 * j).collect();
        let run = |v: Vec<ComplexSample>| mdc_process_block(&Block::new(k, idx.clone(), v).unwrap(), &cfg).unwrap().value;
        let (x, y) = (x[..size].to_vec(), y[..size].to_vec());
        let mix = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (fx, fy, fm) = (run(x), run(y), run(mix));
        let scale = 1.0 + fx.iter().chain(&fy).map(|v| v.norm()).fold(0.0, f64::max) * (a.norm() + b.norm());
        for i in 0..size {
            prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn twiddles_have_unit_magnitude(n in 1u32..=19, e in -(1i64 << 20)..(1i64 << 20)) {
        prop_assert!((twiddle(1u64 << n, e).norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn butterfly_doubles_energy(a in sample(), b in sample()) {
        let (u, v) = butterfly2(a, b);
        let lhs = u.norm_sqr() + v.norm_sqr();
        let rhs = 2.0 * (a.norm_sqr() + b.norm_sqr());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
    }

    #[test]
    fn search_round_trips((n, start, swaps) in (4usize..=10).prop_flat_map(|n| (Just(n), perm(n), prop::collection::vec((0usize..2, 0usize..8), 0..4)))) {
        let layout = IndexLayout::for_parallelism(n, 2).unwrap();
        let from: Vec<u64> = (0..1u64 << n).map(|y| start.apply_unchecked(y)).collect();
        let steps: Vec<SwapStep> = swaps.iter().map(|&(h, l)| SwapStep::from_logs(h % layout.p, l % layout.serial_bits())).collect();
        let to = apply_swaps(&from, &layout, &steps).unwrap();
        let found = search_sigma3_sequence(&from, &to, 2, 6).unwrap();
        prop_assert!(found.len() <= steps.len());
        prop_assert_eq!(apply_swaps(&from, &layout, &found).unwrap(), to);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn parseval_holds(n in 1usize..=12, seed in any::<u64>(), memory in any::<bool>()) {
        let len = 1u64 << n;
        let cfg = if memory { PlanConfig::memory(len, 1).with_extended_range(true) } else { PlanConfig::pipeline(len, 1) };
        let cfg = if cfg.validate().is_ok() { cfg } else { PlanConfig::pipeline(len, 1) };
        let x = random_signal(len as usize, seed);
        let r = run_with(&cfg, std::slice::from_ref(&x), &RunOptions::default()).unwrap();
        let ex: f64 = x.iter().map(|v| v.norm_sqr()).sum::<f64>() * len as f64;
        let ey: f64 = r.outputs[0].iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((ex - ey).abs() <= 1e-9 * ex);
    }

    #[test]
    fn output_order_is_input_independent(n in 2usize..=10, s1 in any::<u64>(), s2 in any::<u64>()) {
        let len = 1u64 << n;
        let cfg = PlanConfig::pipeline(len, 1);
        let orders: Vec<BitPermutation> = [s1, s2]
            .iter()
            .map(|&s| {
                let x = probe_signal(len as usize, s);
                let raw = run_with(&cfg, std::slice::from_ref(&x), &RunOptions::default()).unwrap().outputs.remove(0);
                recover_output_order(&raw, &dft_direct(&x)).unwrap()
            })
            .collect();
        prop_assert_eq!(&orders[0], &orders[1]);
        prop_assert_eq!(&orders[0], &plan(&cfg).unwrap().output_permutation);
    }
}

#[test]
fn memory_plans_need_few_sigma3_steps() {
    for n in 6..=19usize {
        for par in [1, 2, 4] {
            for ext in [false, true] {
                let cfg = PlanConfig::memory(1 << n, par).with_extended_range(ext);
                if cfg.validate().is_err() {
                    continue;
                }
                let p = plan(&cfg).unwrap();
                for seq in p.sigma3_sequences() {
                    assert!(seq.len() <= 6, "n={n} P={par}: {seq:?}");
                }
            }
        }
    }
}
