use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rdc_core::acceptance::{prepare, random_spec};
use rdc_core::codetree::{
    codetree_path_law, induced_metrics, merge_codetree, run_codetree, split_codetree, CodetreeShape,
};
use rdc_core::info::{directed_information, mutual_information, mutual_information_between, JointTable};
use rdc_core::problem::Problem;
use rdc_core::solver::{ba_solve, midpoint_convexity_gap, rdc_at, reduce_support, BaOptions, TargetOptions};

fn law(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn random_tree(rng: &mut ChaCha8Rng, shape: &CodetreeShape) -> rdc_core::codetree::JointCodetree {
    let digits: Vec<usize> = shape.entry_radices().iter().map(|&r| rng.random_range(0..r)).collect();
    shape.from_digits(&digits)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn path_law_is_a_distribution(seed in any::<u64>(), functional in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = Problem::new(random_spec(&mut rng, functional, false, u64::MAX)).unwrap();
        let shape = CodetreeShape::new(problem.alphabets());
        let tree = random_tree(&mut rng, &shape);
        let y_radix = problem.alphabets().y_radix();
        for &x in problem.support() {
            let total: f64 = (0..y_radix.len())
                .map(|k| codetree_path_law(&problem, x, &tree, &y_radix.digits(k)).unwrap())
                .sum();
            prop_assert!((total - 1.0).abs() <= 1e-10, "x = {x}: {total}");
        }
    }

    #[test]
    fn induced_distortion_within_row_range(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = Problem::new(random_spec(&mut rng, seed % 2 == 0, false, u64::MAX)).unwrap();
        let shape = CodetreeShape::new(problem.alphabets());
        let tree = random_tree(&mut rng, &shape);
        let nxh = problem.alphabets().xhat_count();
        for &x in problem.support() {
            let (d, g) = induced_metrics(&problem, &tree, x).unwrap();
            let row: Vec<f64> = (0..nxh).map(|k| problem.distortion(x, k)).collect();
            let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(d >= lo - 1e-12 && d <= hi + 1e-12);
            prop_assert!(g >= 0.0);
        }
    }

    #[test]
    fn split_merge_and_ordinals_roundtrip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = Problem::new(random_spec(&mut rng, false, false, u64::MAX)).unwrap();
        let shape = CodetreeShape::new(problem.alphabets());
        let tree = random_tree(&mut rng, &shape);
        let (actions, estimates) = split_codetree(&tree);
        let y_radix = problem.alphabets().y_radix();
        for k in 0..y_radix.len() {
            let y = y_radix.digits(k);
            let (a, xhat) = run_codetree(&tree, &y).unwrap();
            prop_assert_eq!(actions.run(&y), a);
            prop_assert_eq!(estimates.run(&y), xhat);
        }
        prop_assert_eq!(merge_codetree(actions, estimates), tree.clone());
        if let Ok(ordinal) = shape.encode(&tree) {
            prop_assert_eq!(shape.decode(ordinal).unwrap(), tree);
        }
    }

    #[test]
    fn distortion_scaling_rescales_the_multiplier(seed in any::<u64>(), c in 0.25f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, metrics) = prepare(random_spec(&mut rng, false, false, 2000)).unwrap();
        let (ld, lg) = (6.0 * rng.random::<f64>(), 3.0 * rng.random::<f64>());
        let opts = BaOptions { tol: 0.0, max_iter: 50 };
        let a = ba_solve(&metrics, ld, lg, opts).unwrap();
        let b = ba_solve(&metrics.scale_distortion(c), ld / c, lg, opts).unwrap();
        for (x, y) in a.pj_given_x.as_slice().iter().zip(b.pj_given_x.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
        prop_assert!((a.rate - b.rate).abs() <= 1e-9);
        prop_assert!((c * a.distortion - b.distortion).abs() <= 1e-9 * c.max(1.0));
    }

    #[test]
    fn lagrangian_tradeoff_is_monotone(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, metrics) = prepare(random_spec(&mut rng, seed % 2 == 1, false, 2000)).unwrap();
        let mut prev: Option<(f64, f64)> = None;
        for ld in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let p = ba_solve(&metrics, ld, 0.0, BaOptions::default()).unwrap();
            if let Some((rate, dist)) = prev {
                prop_assert!(p.rate >= rate - 1e-7, "rate fell from {rate} to {}", p.rate);
                prop_assert!(p.distortion <= dist + 1e-7);
            }
            prev = Some((p.rate, p.distortion));
        }
    }

    #[test]
    fn rate_nonincreasing_in_targets(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, metrics) = prepare(random_spec(&mut rng, false, false, 500)).unwrap();
        let (d_floor, _) = metrics.floors();
        let opts = TargetOptions::default();
        let mut prev = f64::INFINITY;
        for k in 1..=4 {
            let d = d_floor + 0.1 * k as f64;
            let p = rdc_at(&metrics, d, f64::INFINITY, opts).unwrap();
            prop_assert!(p.rate <= prev + 1e-6, "R({d}) = {} above {prev}", p.rate);
            prev = p.rate;
        }
    }

    #[test]
    fn surface_midpoint_convex(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, metrics) = prepare(random_spec(&mut rng, false, false, 500)).unwrap();
        let (d_floor, g_floor) = metrics.floors();
        let a = (d_floor + 0.05, g_floor + 2.0);
        let b = (d_floor + 0.4 * rng.random::<f64>(), g_floor + 2.0 * rng.random::<f64>());
        match midpoint_convexity_gap(&metrics, a, b, TargetOptions::default()) {
            // Targets are met to within 1e-4, which moves rates by a little.
            Ok(gap) => prop_assert!(gap <= 1e-3, "gap {gap}"),
            Err(e) => prop_assert!(e.to_string().contains("cost") || e.to_string().contains("distortion"), "{e}"),
        }
    }

    #[test]
    fn reduction_keeps_the_operating_point(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, metrics) = prepare(random_spec(&mut rng, seed % 2 == 0, false, 3000)).unwrap();
        let p = ba_solve(&metrics, 4.0 * rng.random::<f64>(), rng.random::<f64>(), BaOptions::default()).unwrap();
        let r = reduce_support(&metrics, &p.pj_given_x, None).unwrap();
        prop_assert!(r.support_after <= metrics.x_count() + 3);
        prop_assert!(r.drift < 1e-9);
    }

    #[test]
    fn directed_information_bounded_by_mutual(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [2, 3, 2, 2];
        let joint = JointTable::new(&dims, law(&mut rng, 24)).unwrap();
        let di = directed_information(&joint, 2).unwrap();
        let mi = mutual_information_between(&joint, &[0, 1], &[2, 3]);
        prop_assert!(di <= mi + 1e-10);
    }

    #[test]
    fn mutual_information_is_symmetric(seed in any::<u64>(), nu in 1usize..5, nv in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let joint = JointTable::new(&[nu, nv], law(&mut rng, nu * nv)).unwrap();
        let forward = mutual_information(&joint).unwrap();
        let backward = mutual_information(&joint.transpose(1)).unwrap();
        prop_assert!((forward - backward).abs() <= 1e-12);
        prop_assert!(forward >= 0.0);
    }
}
