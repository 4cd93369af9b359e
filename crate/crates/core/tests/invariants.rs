use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dms_core::harness::MinMax;
use dms_core::secagg::{
    reconstruct, secure_aggregate, share, FixedPointCodec, PrimeField, SharingParams,
};
use dms_core::topology::mixing_matrix;
use dms_core::WeightVector;
use dms_core::{Graph, MarkovSchedule};

fn random_graph(n: usize, mask: &[bool]) -> Graph {
    let mut g = Graph::empty(n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            if mask[k % mask.len()] {
                g.add_edge(i, j, 1.0).unwrap();
            }
            k += 1;
        }
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn field_operations_are_consistent(a in any::<u128>(), b in any::<u128>(), c in any::<u128>()) {
        let f = PrimeField::default();
        let (a, b, c) = (f.elem(a), f.elem(b), f.elem(c));
        prop_assert_eq!(f.mul(f.add(a, b), c), f.add(f.mul(a, c), f.mul(b, c)));
        prop_assert_eq!(f.sub(f.add(a, b), b), a);
        if a != f.zero() {
            prop_assert_eq!(f.mul(a, f.inv(a).unwrap()), f.one());
        }
    }

    #[test]
    fn any_threshold_subset_reconstructs(seed in any::<u64>(), parties in 3usize..8, pick in any::<u64>()) {
        let f = PrimeField::default();
        let params = SharingParams::new(parties, (parties - 1) / 2, f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let secret = f.random(&mut rng);
        let shares = share(secret, &params, &mut rng);
        let mut order: Vec<usize> = (0..parties).collect();
        order.sort_by_key(|&i| pick.rotate_left(i as u32 * 7) ^ i as u64);
        let subset: Vec<_> = order[..params.degree() + 1].iter().map(|&i| shares[i]).collect();
        prop_assert_eq!(reconstruct(&subset, &params).unwrap(), secret);
    }

    #[test]
    fn codec_round_trip_within_resolution(x in -1.0e6f64..1.0e6) {
        let f = PrimeField::default();
        let c = FixedPointCodec::default();
        let back: f64 = c.decode(c.encode(x, &f).unwrap(), &f);
        prop_assert!((back - x).abs() <= 0.5 * c.resolution());
    }

    #[test]
    fn secure_sum_equals_plain_sum_of_dyadics(
        seed in any::<u64>(),
        raw in prop::collection::vec(prop::collection::vec(-(1i64 << 36)..(1i64 << 36), 3), 3..10),
    ) {
        let f = PrimeField::default();
        let params = SharingParams::new(3, 1, f).unwrap();
        let inputs: Vec<WeightVector> = raw
            .iter()
            .map(|v| WeightVector::from(v.iter().map(|&q| q as f64 / 65536.0).collect::<Vec<_>>()))
            .collect();
        let mut plain = WeightVector::zeros(3);
        for x in &inputs {
            plain.axpy(1.0, x).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sum, _) = secure_aggregate(&inputs, &params, &FixedPointCodec::default(), &mut rng).unwrap();
        prop_assert_eq!(sum, plain);
    }

    #[test]
    fn mixing_rows_are_stochastic_and_supported_on_edges(n in 1usize..12, mask in prop::collection::vec(any::<bool>(), 1..80)) {
        let g = random_graph(n, &mask);
        let a = mixing_matrix(&g);
        for (i, s) in a.row_sums().into_iter().enumerate() {
            prop_assert!((s - 1.0).abs() < 1e-12);
            for j in 0..n {
                let w = a.get(i, j);
                prop_assert!(w >= 0.0);
                if i != j && g.weight(i, j).is_none() {
                    prop_assert_eq!(w, 0.0);
                }
            }
        }
    }

    #[test]
    fn mixing_preserves_constant_vectors(n in 1usize..12, mask in prop::collection::vec(any::<bool>(), 1..80), c in -10.0f64..10.0) {
        let a = mixing_matrix(&random_graph(n, &mask));
        for v in a.apply(&vec![c; n]) {
            prop_assert!((v - c).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_stays_within_its_substructures(n in 4usize..16, seed in any::<u64>()) {
        let m = (n * 7).div_ceil(10).max(2);
        let mut s: MarkovSchedule = MarkovSchedule::subsets(n, m, 4, None, seed).unwrap();
        let pi = s.stationary_distribution();
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for _ in 0..20 {
            let state = s.advance().clone();
            prop_assert!(s.substructures().contains(&state));
            prop_assert_eq!(state.agent_count(), n);
        }
    }

    #[test]
    fn minmax_inverts(values in prop::collection::vec(-1.0e3f64..1.0e3, 2..50)) {
        let s = MinMax::fit(&values);
        for &v in &values {
            let u = s.apply(v);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&u));
            if s.range > 0.0 {
                prop_assert!((s.invert(u) - v).abs() < 1e-9);
            }
        }
    }
}
