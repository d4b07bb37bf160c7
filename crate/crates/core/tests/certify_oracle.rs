use nalgebra::{DMatrix, DVector};
use ncbf_core::boundprop::HyperCube;
use ncbf_core::certify::{
    check_pattern_interior, corollary_fast_path, recheck_counterexample, tangent_cone_contains, verify, CertifyConfig,
    Condition, Status, VerifyConfig,
};
use ncbf_core::dynamics::{builtin, builtin_source, parse, SafetyProblem};
use ncbf_core::enumerate::{build_atlas, EnumConfig};
use ncbf_core::feasolver::{farkas_check, primal_point};
use ncbf_core::network::{builtin_network, ReluNetwork};
use ncbf_core::oracle::{boundary_samples, diamond_distance, liminf_contains, primal_feasible_by_vertices, random_network};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
    (0usize..=3, 1usize..=8).prop_flat_map(|(m, k)| {
        (
            proptest::collection::vec(-3i32..=3, m * k),
            proptest::collection::vec(-3i32..=3, k),
        )
            .prop_map(move |(t, l)| {
                (
                    DMatrix::from_row_iterator(k, m, t.into_iter().map(f64::from)),
                    DVector::from_iterator(k, l.into_iter().map(f64::from)),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn farkas_alternative_is_exclusive((theta, lambda) in system()) {
        let cert = farkas_check(&theta, &lambda, 1e-7);
        let primal = primal_point(&theta, &lambda);
        prop_assert!(cert.is_some() != primal.is_some());
        prop_assert_eq!(primal.is_some(), primal_feasible_by_vertices(&theta, &lambda, 1e-9));
        if let Some(y) = cert {
            prop_assert!(y.iter().all(|&v| v >= 0.0));
            prop_assert!(theta.tr_mul(&y).amax() <= 1e-8);
            prop_assert!(lambda.dot(&y) <= -1e-7);
        }
        if let Some(u) = primal {
            prop_assert!((&theta * &u - &lambda).max() <= 1e-7);
        }
    }
}

#[test]
fn tangent_cone_matches_liminf_estimate() {
    let net = builtin_network("l1_diamond").unwrap();
    let corners = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
    let inv = 1.0 / 2f64.sqrt();
    let normals = [[inv, inv], [-inv, inv], [-inv, -inv], [inv, -inv]];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut total, mut disagree) = (0usize, 0usize);
    for i in 0..200 {
        let e = rng.gen_range(0..4);
        let t = if i % 10 == 0 { 0.0 } else { rng.gen_range(0.0..1.0) };
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        for _ in 0..5 {
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let d = [ang.cos(), ang.sin()];
            total += 1;
            let exact = tangent_cone_contains(&net, &x, &d).unwrap();
            let numeric = liminf_contains(diamond_distance, &x, &d, 1e-3);
            if exact != numeric {
                disagree += 1;
                let near_face = normals.iter().any(|n| (n[0] * d[0] + n[1] * d[1]).abs() < 1e-3);
                assert!(near_face, "x = {x:?}, d = {d:?}");
            }
        }
    }
    assert!(disagree * 100 <= total, "{disagree} of {total}");
}

fn rotation() -> SafetyProblem {
    let src = builtin_source("contraction")
        .unwrap()
        .replace("f1 = -x1", "f1 = -x2 + 0.3*x1")
        .replace("f2 = -x2", "f2 = x1 - 0.2*x2");
    parse(&src).unwrap()
}

/// Direct sign check of `W̄ᵀf(x)` at a generic boundary point.
fn open_loop_margin(prob: &SafetyProblem, net: &ReluNetwork, x: &[f64]) -> f64 {
    let (p, _) = net.activation_pattern(x, 1e-9).unwrap();
    let grad = net.affine_region(&p).unwrap().output_gradient;
    grad.dot(&prob.eval_f(x).unwrap())
}

#[test]
fn open_loop_checks_reduce_to_sign_conditions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bx = HyperCube::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
    let cfg = CertifyConfig::default();
    for prob in [builtin("contraction").unwrap(), rotation()] {
        for _ in 0..8 {
            let width = rng.gen_range(3..=6);
            let net = random_network(&mut rng, 2, &[width]);
            let samples = boundary_samples(&net, &bx, 12, 200).unwrap();
            let mut sample_fails = false;
            for (x, _) in &samples {
                let margin = open_loop_margin(&prob, &net, x);
                if margin.abs() < 1e-6 || prob.eval_h(x).unwrap() < 0.0 {
                    continue;
                }
                let cx = recheck_counterexample(&prob, &net, x, &cfg).unwrap();
                assert_eq!(cx.is_some(), margin < 0.0, "x = {x:?}, margin = {margin}");
                sample_fails |= margin < 0.0;
            }
            let res = verify(&prob, &net, &VerifyConfig::default()).unwrap();
            if sample_fails {
                assert_eq!(res.status, Status::Unsafe);
            }
            if res.status == Status::Safe {
                assert!(!sample_fails);
            }
            if let Some((_, cx)) = res.counterexample {
                assert!(recheck_counterexample(&prob, &net, &cx.x, &cfg).unwrap().is_some());
            }
        }
    }
}

#[test]
fn fast_path_implies_full_check() {
    let prob = builtin("example32").unwrap();
    let bx = HyperCube::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
    let full = CertifyConfig {
        use_fast_paths: false,
        ..CertifyConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut nets = vec![builtin_network("l1_diamond").unwrap()];
    nets.extend((0..6).map(|_| random_network(&mut rng, 2, &[5])));
    let mut checked = 0;
    for net in &nets {
        let atlas = build_atlas(net, &bx, &EnumConfig::default()).unwrap();
        for p in &atlas.patterns {
            let fast = corollary_fast_path(&prob, net, &p.pattern, 1e-9).unwrap();
            if fast.is_some_and(|v| v.status == Status::Safe) {
                let (_, c1) = check_pattern_interior(&prob, net, &p.pattern, &p.witness, &full).unwrap();
                assert_eq!(c1.status, Status::Safe, "pattern {}", p.pattern);
                checked += 1;
            }
        }
    }
    assert!(checked >= 10);
}

#[test]
fn counterexamples_are_independently_rechecked() {
    let prob = builtin("example32").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..6 {
        let net = random_network(&mut rng, 2, &[4]);
        let res = verify(&prob, &net, &VerifyConfig::default()).unwrap();
        if let Some((_, cx)) = &res.counterexample {
            let again = recheck_counterexample(&prob, &net, &cx.x, &CertifyConfig::default())
                .unwrap()
                .unwrap();
            assert_eq!(again.condition, cx.condition);
            if cx.condition == Condition::Feasibility {
                assert!(cx.b.abs() <= 1e-6);
            }
        }
    }
}
