use proptest::prelude::*;
use rand::Rng as _;

use ddopt::checks::{capped_simplex_kkt_violation, random_linear};
use ddopt::distributions::{draw_minibatch, sample_hemisphere, sample_simplex};
use ddopt::dynamics::DynamicsModel;
use ddopt::linalg::vector;
use ddopt::optimizers::{project_capped_simplex, project_norm_ball};
use ddopt::rng::{keyed_rng, Purpose};
use ddopt::sensitivity::{sensitivity_implicit, sensitivity_softmax};
use ddopt::transport::{w1_categorical_1d, w1_discrete_exact, DiscreteMeasure, GroundMetric};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 128,
        ..ProptestConfig::default()
    }
}

fn simplex(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

/// `(v, b, qbar)` with `0 < b < m qbar`.
fn capped_input() -> impl Strategy<Value = (Vec<f64>, f64, f64)> {
    (2usize..12).prop_flat_map(|m| {
        (
            prop::collection::vec(-10.0..10.0f64, m),
            0.01..0.99f64,
            0.1..5.0f64,
        )
            .prop_map(move |(v, frac, qbar)| (v, frac * m as f64 * qbar, qbar))
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn capped_simplex_kkt_and_idempotence((v, b, qbar) in capped_input()) {
        let q = project_capped_simplex(&v, b, qbar).unwrap();
        prop_assert!((q.iter().sum::<f64>() - b).abs() <= 1e-10 * (1.0 + b));
        prop_assert!(q.iter().all(|&x| (0.0..=qbar).contains(&x)));
        prop_assert!(capped_simplex_kkt_violation(&v, &q, qbar) <= 1e-9 * (1.0 + v.iter().fold(0.0f64, |a, x| a.max(x.abs()))));
        let again = project_capped_simplex(&q, b, qbar).unwrap();
        prop_assert!(vector::dist(&q, &again) <= 1e-10 * (1.0 + b));
    }

    #[test]
    fn capped_simplex_is_nonexpansive((v, b, qbar) in capped_input(), shift in prop::collection::vec(-3.0..3.0f64, 12)) {
        let w: Vec<f64> = v.iter().zip(&shift).map(|(a, s)| a + s).collect();
        let pv = project_capped_simplex(&v, b, qbar).unwrap();
        let pw = project_capped_simplex(&w, b, qbar).unwrap();
        prop_assert!(vector::dist(&pv, &pw) <= vector::dist(&v, &w) + 1e-9);
    }

    #[test]
    fn norm_ball_projection(v in prop::collection::vec(-10.0..10.0f64, 1..10), w_shift in prop::collection::vec(-3.0..3.0f64, 10), r in 0.1..5.0f64) {
        let p = project_norm_ball(&v, r);
        prop_assert!(vector::norm(&p) <= r * (1.0 + 1e-12));
        prop_assert!(vector::dist(&project_norm_ball(&p, r), &p) <= 1e-12 * r);
        let w: Vec<f64> = v.iter().zip(&w_shift).map(|(a, s)| a + s).collect();
        prop_assert!(vector::dist(&p, &project_norm_ball(&w, r)) <= vector::dist(&v, &w) + 1e-12);
    }

    #[test]
    fn w1_metric_axioms(m in 2usize..6, raw in prop::collection::vec(0.01..1.0f64, 18)) {
        let a = simplex(&raw[..m]);
        let b = simplex(&raw[6..6 + m]);
        let c = simplex(&raw[12..12 + m]);
        let idx: Vec<Vec<f64>> = (0..m).map(|i| vec![i as f64]).collect();
        let w = |p: &[f64], q: &[f64]| {
            let mu = DiscreteMeasure::new(idx.clone(), p.to_vec()).unwrap();
            let nu = DiscreteMeasure::new(idx.clone(), q.to_vec()).unwrap();
            w1_discrete_exact(&mu, &nu, &GroundMetric::IndexAbs).unwrap().cost
        };
        let (ab, ba, bc, ac) = (w(&a, &b), w(&b, &a), w(&b, &c), w(&a, &c));
        prop_assert!(ab >= -1e-12);
        prop_assert!(w(&a, &a).abs() <= 1e-12);
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert!((ab - w1_categorical_1d(&a, &b).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn transport_plan_marginals(n in 1usize..6, k in 1usize..6, seed in any::<u64>()) {
        let mut rng = keyed_rng(seed, 0, Purpose::Check, 0);
        let mut measure = |len: usize| {
            let support: Vec<Vec<f64>> = (0..len).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
            let mass: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + 0.01).collect();
            DiscreteMeasure::new(support, simplex(&mass)).unwrap()
        };
        let (mu, nu) = (measure(n), measure(k));
        let plan = w1_discrete_exact(&mu, &nu, &GroundMetric::Euclidean).unwrap();
        for i in 0..n {
            let row: f64 = plan.plan.row(i).iter().sum();
            prop_assert!((row - mu.mass()[i]).abs() <= 1e-9);
        }
        for j in 0..k {
            let col: f64 = plan.plan.column(j).iter().sum();
            prop_assert!((col - nu.mass()[j]).abs() <= 1e-9);
        }
        prop_assert!(plan.plan.as_slice().iter().all(|&x| x >= -1e-12));
    }

    #[test]
    fn softmax_step_stays_on_simplex(seed in any::<u64>(), m in 2usize..30, scale in 0.0..50.0f64) {
        let model = DynamicsModel::softmax(0.2, 0.5, 0.5).unwrap();
        let pop = sample_simplex::<f64>(m, 2, seed).unwrap();
        let ind = &pop.individuals()[0];
        let mut p = pop.individuals()[1].p0.clone();
        let mut rng = keyed_rng(seed, 1, Purpose::Check, 0);
        let u: Vec<f64> = (0..m).map(|_| scale * (rng.random::<f64>() - 0.5)).collect();
        for _ in 0..5 {
            p = model.step(&p, &u, &ind.d).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn softmax_sensitivity_rows_sum_to_zero_and_match_implicit(seed in any::<u64>(), m in 2usize..12) {
        let model = DynamicsModel::softmax(0.2, 0.5, 0.5).unwrap();
        let mut rng = keyed_rng(seed, 0, Purpose::Check, 0);
        let u: Vec<f64> = (0..m).map(|_| 4.0 * rng.random::<f64>()).collect();
        let d = simplex(&(0..m).map(|_| rng.random::<f64>() + 0.01).collect::<Vec<_>>());
        let h = sensitivity_softmax(&u, 0.2, 0.5, 0.5).unwrap();
        let ones = vec![1.0; m];
        prop_assert!(vector::norm(&h.apply(&ones).unwrap()) <= 1e-12);
        let ss = model.steady_state(&u, &d, 1e-14, 100_000).unwrap();
        let implicit = sensitivity_implicit(&model, &u, &d, &ss.p_ss).unwrap();
        prop_assert!(h.h.sub(&implicit.h).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn linear_contraction_in_certified_metric(seed in any::<u64>(), m in 1usize..7) {
        let mut rng = keyed_rng(seed, 0, Purpose::Check, 0);
        let norm = 0.1 + 0.8 * rng.random::<f64>();
        let model = random_linear(&mut rng, m, 2, norm).unwrap();
        let cert = model.contraction_certificate(m).unwrap();
        let ch = cert.p.cholesky().unwrap();
        let u = [rng.random::<f64>(), rng.random::<f64>()];
        let d: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        let p: Vec<f64> = (0..m).map(|_| 3.0 * (rng.random::<f64>() - 0.5)).collect();
        let q: Vec<f64> = (0..m).map(|_| 3.0 * (rng.random::<f64>() - 0.5)).collect();
        let fp = model.step(&p, &u, &d).unwrap();
        let fq = model.step(&q, &u, &d).unwrap();
        let before = ch.weighted_norm(&vector::sub(&p, &q));
        let after = ch.weighted_norm(&vector::sub(&fp, &fq));
        prop_assert!(after <= cert.lfp * before + 1e-9 * (1.0 + before));
    }

    #[test]
    fn steady_states_are_fixed_points(seed in any::<u64>(), m in 2usize..8) {
        let tol = 1e-10;
        let mut rng = keyed_rng(seed, 0, Purpose::Check, 0);
        let linear = random_linear(&mut rng, m, 2, 0.9).unwrap();
        let u2 = [rng.random::<f64>(), rng.random::<f64>()];
        let d: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        let ss = linear.steady_state(&u2, &d, tol, 100_000).unwrap();
        prop_assert!(vector::dist(&linear.step(&ss.p_ss, &u2, &d).unwrap(), &ss.p_ss) <= 10.0 * tol);

        let pol = DynamicsModel::polarized(0.4, 0.5).unwrap();
        let pop = sample_hemisphere::<f64>(m, 1, seed).unwrap();
        let d0 = &pop.individuals()[0].d;
        let u: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
        let u = project_norm_ball(&u, 1.0);
        let ss = pol.steady_state(&u, d0, tol, 100_000).unwrap();
        prop_assert!(vector::dist(&pol.step(&ss.p_ss, &u, d0).unwrap(), &ss.p_ss) <= 10.0 * tol);
    }

    #[test]
    fn polarized_sign_and_angle_monotone(seed in any::<u64>(), m in 2usize..10, steps in 1usize..40) {
        let model = DynamicsModel::polarized(0.4, 0.5).unwrap();
        let pop = sample_hemisphere::<f64>(m, 1, seed).unwrap();
        let p0 = pop.individuals()[0].p0.clone();
        let mut rng = keyed_rng(seed, 2, Purpose::Check, 0);
        let q: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
        let q = project_norm_ball(&q, 1.0);
        let s0 = vector::dot(&p0, &q);
        prop_assume!(s0.abs() > 1e-6);
        let angle = |p: &[f64]| (vector::dot(p, &q) / (vector::norm(p) * vector::norm(&q))).clamp(-1.0, 1.0).acos();
        let mut p = p0.clone();
        let mut prev = angle(&p);
        for _ in 0..steps {
            p = model.step(&p, &q, &p0).unwrap();
            prop_assert_eq!(vector::dot(&p, &q).signum(), s0.signum());
            if s0 > 0.0 {
                let a = angle(&p);
                prop_assert!(a <= prev + 1e-12, "angle grew from {} to {}", prev, a);
                prev = a;
            }
        }
    }

    #[test]
    fn hemisphere_samples_unit_and_oriented(seed in any::<u64>(), m in 2usize..25, count in 1usize..40) {
        let pop = sample_hemisphere::<f64>(m, count, seed).unwrap();
        let r = pop.reference().unwrap().to_vec();
        for ind in pop.individuals() {
            prop_assert!((vector::norm(&ind.p0) - 1.0).abs() <= 1e-12);
            prop_assert!(vector::dot(&ind.p0, &r) > 0.0);
        }
        prop_assert_eq!(sample_hemisphere::<f64>(m, count, seed).unwrap(), pop);
    }

    #[test]
    fn minibatch_indices_distinct_and_in_range(seed in any::<u64>(), len in 1usize..300, frac in 0.0..1.0f64) {
        let n = 1 + ((len - 1) as f64 * frac) as usize;
        let mut rng = keyed_rng(seed, 0, Purpose::Minibatch, 0);
        let mut idx = draw_minibatch(len, n, &mut rng).unwrap();
        prop_assert_eq!(idx.len(), n);
        prop_assert!(idx.iter().all(|&i| i < len));
        idx.sort_unstable();
        idx.dedup();
        prop_assert_eq!(idx.len(), n);
    }
}
