use lcqp::datasets::{generate, Family, GenConfig};
use lcqp::nullspace::{compute_nullspace, feasible_initial_point};
use lcqp::oracle::brute_force_optimum;
use lcqp::problem::primal_residual;
use lcqp::rng::SeededRng;
use lcqp::{constraint_violation, objective, LcqpInstance, SparseMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::Generic), Just(Family::Svm), Just(Family::Portfolio)]
}

fn gen_cfg() -> impl Strategy<Value = GenConfig> {
    (family(), 2usize..9, 1usize..4, 0.2f64..1.0, 0.1f64..1.0, any::<u64>()).prop_map(|(family, n, half_m, da, dq, seed)| GenConfig {
        family,
        n,
        m: 2 * half_m,
        density_a: da,
        density_q: dq,
        svm_lambda: 1.0,
        seed,
    })
}

fn dense_a(rows: usize, cols: usize, density: f64, rng: &mut SeededRng) -> SparseMatrix {
    let mut t = Vec::new();
    for i in 0..rows {
        t.push((i, i % cols, 1.0 + rng.uniform()));
        for j in 0..cols {
            if j != i % cols && rng.bernoulli(density) {
                t.push((i, j, rng.normal()));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn generation_is_deterministic(cfg in gen_cfg()) {
        prop_assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
    }

    #[test]
    fn generated_instances_are_well_formed(cfg in gen_cfg()) {
        let inst = generate(&cfg).unwrap();
        prop_assert!(inst.q.is_symmetric());
        prop_assert!(inst.psd_check(16, cfg.seed));
        prop_assert!(inst.m <= inst.n);
        let x0 = feasible_initial_point(&inst).unwrap();
        prop_assert!(x0.iter().all(|&v| v > 0.0));
        prop_assert!(primal_residual(&inst, &x0).unwrap() <= 1e-8);
        if cfg.family == Family::Portfolio {
            let total: f64 = x0.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn instance_json_round_trip(cfg in gen_cfg()) {
        let inst = generate(&cfg).unwrap();
        let text = serde_json::to_string(&inst).unwrap();
        let back: LcqpInstance = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, inst);
    }

    #[test]
    fn projector_properties(seed in any::<u64>(), n in 1usize..16, frac in 0.0f64..1.0, density in 0.1f64..1.0) {
        let mut rng = SeededRng::new(seed);
        let m = ((n as f64) * frac) as usize;
        let a = dense_a(m, n, density, &mut rng);
        let proj = match compute_nullspace(&a) {
            Ok(p) => p,
            // Sparse draws can be rank deficient; that path has its own test.
            Err(_) => return Ok(()),
        };
        let d: Vec<f64> = (0..n).map(|_| 10.0 * rng.normal()).collect();
        let pd = proj.project(&d).unwrap();
        let apd = a.mul_vec(&pd).unwrap();
        prop_assert!(apd.iter().all(|v| v.abs() <= 1e-10));
        let ppd = proj.project(&pd).unwrap();
        prop_assert!(ppd.iter().zip(&pd).all(|(a, b)| (a - b).abs() <= 1e-10));
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm(&pd) <= norm(&d) * (1.0 + 1e-14));
    }

    #[test]
    fn projector_matches_normal_equations(seed in any::<u64>(), n in 2usize..12) {
        let mut rng = SeededRng::new(seed);
        let m = rng.int_in(1, n - 1);
        let a = dense_a(m, n, 1.0, &mut rng);
        let proj = compute_nullspace(&a).unwrap();
        prop_assert_eq!(proj.dim(), n - m);
        let ad = a.to_dense();
        let gram = &ad * ad.transpose();
        let reference = DMatrix::identity(n, n) - ad.transpose() * gram.try_inverse().unwrap() * &ad;
        let d = DVector::from_fn(n, |_, _| rng.normal());
        let expected = &reference * &d;
        let got = proj.project(d.as_slice()).unwrap();
        prop_assert!(got.iter().zip(expected.iter()).all(|(a, b)| (a - b).abs() <= 1e-9));
    }

    #[test]
    fn violation_is_zero_exactly_on_feasible_points(cfg in gen_cfg()) {
        let inst = generate(&cfg).unwrap();
        let x0 = feasible_initial_point(&inst).unwrap();
        prop_assert!(constraint_violation(&inst, &x0).unwrap() <= 1e-8);
        let shifted: Vec<f64> = x0.iter().map(|v| v + 1.0).collect();
        let moved = inst.a.mul_vec(&vec![1.0; inst.n]).unwrap().iter().any(|v| v.abs() > 1e-9);
        prop_assert_eq!(constraint_violation(&inst, &shifted).unwrap() > 1e-9, moved);
    }
}

#[test]
fn fifty_generic_instances_have_interior_points() {
    for seed in 0..50 {
        let inst = generate(&GenConfig { n: 20, m: 10, seed, ..GenConfig::default() }).unwrap();
        let x0 = feasible_initial_point(&inst).unwrap();
        assert!(x0.iter().all(|&v| v > 0.0));
        assert!(primal_residual(&inst, &x0).unwrap() <= 1e-8);
    }
}

#[test]
fn optimum_is_feasible_and_no_worse_than_start() {
    for seed in 0..20 {
        let inst = generate(&GenConfig { n: 6, m: 3, seed, ..GenConfig::default() }).unwrap();
        let bf = brute_force_optimum(&inst).unwrap();
        assert!(primal_residual(&inst, &bf.x).unwrap() <= 1e-8);
        assert!(bf.x.iter().all(|&v| v >= 0.0));
        let x0 = feasible_initial_point(&inst).unwrap();
        assert!(bf.objective <= objective(&inst, &x0).unwrap() + 1e-9);
    }
}
