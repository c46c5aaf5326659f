use proptest::prelude::*;

use qedq_core::empirical::SeqEmpirical;
use qedq_core::maps::{compose, solve_integral_rep, solve_reflected_rep, DriftFn};
use qedq_core::paths::{max_jump, optional_qv, reflect_upper};
use qedq_core::scaling::{clt_scale, fluid_scale, qed_params, truncate_initial};
use qedq_core::stats::{EnsembleStats, Moments};
use qedq_core::{Cadlag, LinearPath, StepPath};

const T: f64 = 4.0;

/// Step paths on `[0, 4]` with dyadic epochs and small integer values, so
/// sums and integrals are exact in binary.
fn step_path() -> impl Strategy<Value = StepPath> {
    (
        -5i32..=5,
        prop::collection::btree_set(1u32..=64, 0..12),
        prop::collection::vec(-5i32..=5, 12),
    )
        .prop_map(|(x0, epochs, vals)| {
            let epochs: Vec<f64> = epochs.into_iter().map(|e| e as f64 / 16.0).collect();
            let values = vals[..epochs.len()].iter().map(|&v| v as f64).collect();
            StepPath::new(x0 as f64, epochs, values, T).unwrap()
        })
}

/// Nondecreasing continuous time changes with slope in `[0, 1]`, so the range
/// stays inside `[0, T]`.
fn time_change() -> impl Strategy<Value = LinearPath> {
    (prop::collection::btree_set(1u32..=63, 0..6), prop::collection::vec(0u32..=4, 7)).prop_map(
        |(epochs, rates)| {
            let epochs: Vec<f64> = epochs.into_iter().map(|e| e as f64 / 16.0).collect();
            let values = rates[1..=epochs.len()].iter().map(|&r| r as f64 / 4.0).collect();
            let rate = StepPath::new(rates[0] as f64 / 4.0, epochs, values, T).unwrap();
            LinearPath::integral_of(&rate, |v| v)
        },
    )
}

fn dyadic() -> impl Strategy<Value = f64> {
    (0u32..=64).prop_map(|k| k as f64 / 16.0)
}

fn probe_times() -> Vec<f64> {
    (0..=400).map(|k| k as f64 * T / 400.0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn time_integral_is_additive(p in step_path(), a in dyadic(), b in dyadic(), c in dyadic()) {
        let mut v = [a, b, c];
        v.sort_by(f64::total_cmp);
        let [a, b, c] = v;
        let left = p.time_integral(a, b).unwrap() + p.time_integral(b, c).unwrap();
        prop_assert_eq!(left, p.time_integral(a, c).unwrap());
    }

    #[test]
    fn optional_qv_symmetric_and_bilinear(p in step_path(), q in step_path(), r in step_path(), k in -3i32..=3) {
        let pq = optional_qv(&p, &q);
        prop_assert_eq!(&pq, &optional_qv(&q, &p));
        prop_assert!(optional_qv(&p, &p).terminal() >= 0.0);
        let sum = q.add(&r).unwrap();
        let lhs = optional_qv(&p, &sum.scale(k as f64));
        let rhs = optional_qv(&p, &q).add(&optional_qv(&p, &r)).unwrap().scale(k as f64);
        for t in probe_times() {
            prop_assert_eq!(lhs.value(t), rhs.value(t));
        }
    }

    #[test]
    fn reflection_respects_barrier(p in step_path(), kappa in 0i32..=4) {
        let kappa = kappa as f64;
        let r = reflect_upper(&p, kappa).unwrap();
        prop_assert!(r.barrier_excess(kappa) <= 0.0);
        prop_assert!(r.regulator.is_nondecreasing());
        prop_assert!(r.regulator.min_value() >= 0.0);
        prop_assert_eq!(r.complementarity_residual(kappa), 0.0);
    }

    #[test]
    fn max_jump_is_subadditive(p in step_path(), q in step_path()) {
        let s = p.add(&q).unwrap();
        prop_assert!(max_jump(&s, T) <= max_jump(&p, T) + max_jump(&q, T));
    }

    #[test]
    fn truncate_is_idempotent(p in step_path(), h in 1u32..=64) {
        let h = h as f64 / 16.0;
        let once = p.truncate(h).unwrap();
        prop_assert_eq!(once.truncate(h).unwrap(), once.clone());
        for t in probe_times().into_iter().filter(|&t| t <= h) {
            prop_assert_eq!(once.value(t), p.value(t));
        }
    }

    #[test]
    fn truncate_initial_idempotent_and_monotone(a in 0u64..1000, b in 0u64..1000, n in 1u64..300) {
        let once = truncate_initial(a, n);
        prop_assert_eq!(truncate_initial(once, n), once);
        if a <= b {
            prop_assert!(truncate_initial(a, n) <= truncate_initial(b, n));
        }
    }

    #[test]
    fn qed_relation_is_exact(n in 1u64..1_000_000, mu in 0.1f64..5.0, beta in -2.0f64..2.0) {
        if let Ok(lambda) = qed_params(n, mu, beta) {
            let nf = n as f64;
            let got = (nf * mu - lambda) / nf.sqrt();
            prop_assert!((got - beta * mu).abs() <= 1e-12 * (nf * mu) / nf.sqrt());
        }
    }

    #[test]
    fn clt_scale_is_fluid_recentred(p in step_path(), k in 0u32..6) {
        let n = 4u64.pow(k);
        let root = (n as f64).sqrt();
        let x = clt_scale(&p, n).unwrap();
        let f = fluid_scale(&p, n).unwrap();
        for t in probe_times() {
            let want = root * (f.value(t) - 1.0);
            prop_assert!((x.value(t) - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
        // linearity in the path
        let x2 = clt_scale(&p.scale(2.0), n).unwrap();
        for t in probe_times() {
            let want = 2.0 * x.value(t) + (n as f64) / root;
            prop_assert!((x2.value(t) - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn composition_is_associative(p in step_path(), t1 in time_change(), t2 in time_change()) {
        let x = LinearPath::from_step(&p);
        let nested = compose(&compose(&x, &t1).unwrap(), &t2).unwrap();
        let joint = compose(&x, &compose(&t1, &t2).unwrap()).unwrap();
        for t in probe_times() {
            prop_assert!((nested.value(t) - joint.value(t)).abs() < 1e-9, "t = {}", t);
        }
        let id = LinearPath::affine(0.0, 1.0, T);
        let same = compose(&x, &id).unwrap();
        for t in probe_times() {
            prop_assert!((same.value(t) - x.value(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_barrier_is_unreflected(p in step_path(), b in -2.0f64..2.0) {
        let h = DriftFn::PiecewiseLinear { mu: 1.0, theta: 0.5, offset: 0.3 };
        let free = solve_integral_rep(b, &p, &h, 0.01).unwrap();
        let walled = solve_reflected_rep(b, &p, &h, f64::INFINITY, 0.01).unwrap();
        prop_assert_eq!(free, walled.content);
    }

    #[test]
    fn moment_merge_is_associative(
        a in prop::collection::vec(-1e6f64..1e6, 0..40),
        b in prop::collection::vec(-1e6f64..1e6, 0..40),
        c in prop::collection::vec(-1e-3f64..1e-3, 0..40),
    ) {
        let acc = |xs: &[f64]| {
            let mut m = Moments::new();
            xs.iter().for_each(|&x| m.push(x));
            m
        };
        let (ma, mb, mc) = (acc(&a), acc(&b), acc(&c));
        let mut left = ma.clone();
        left.merge(&mb);
        left.merge(&mc);
        let mut bc = mb.clone();
        bc.merge(&mc);
        let mut right = ma.clone();
        right.merge(&bc);
        prop_assert_eq!(left.count(), right.count());
        prop_assert_eq!(left.mean().to_bits(), right.mean().to_bits());
        prop_assert_eq!(left.variance().map(f64::to_bits), right.variance().map(f64::to_bits));
    }

    #[test]
    fn ensemble_merge_is_associative(rows in prop::collection::vec(prop::collection::vec(-50f64..50.0, 3), 0..30), cut1 in 0usize..30, cut2 in 0usize..30) {
        let (i, j) = (cut1.min(cut2).min(rows.len()), cut1.max(cut2).min(rows.len()));
        let grid = vec![0.0, 1.0, 2.0];
        let part = |rs: &[Vec<f64>]| {
            let mut e = EnsembleStats::new(grid.clone());
            rs.iter().for_each(|r| e.push(r).unwrap());
            e
        };
        let (a, b, c) = (part(&rows[..i]), part(&rows[i..j]), part(&rows[j..]));
        let mut left = a.clone();
        left.merge(&b).unwrap();
        left.merge(&c).unwrap();
        let mut bc = b.clone();
        bc.merge(&c).unwrap();
        let mut right = a;
        right.merge(&bc).unwrap();
        for k in 0..3 {
            let (l, r) = (left.point(k).moments(), right.point(k).moments());
            prop_assert_eq!(l.mean().to_bits(), r.mean().to_bits());
            prop_assert_eq!(l.variance().map(f64::to_bits), r.variance().map(f64::to_bits));
        }
    }

    #[test]
    fn k_field_is_monotone_and_bounded(
        eta in prop::collection::vec(0.0f64..5.0, 40),
        n in 1u64..10,
        t1 in 0.0f64..4.0, t2 in 0.0f64..4.0, x1 in 0.0f64..6.0, x2 in 0.0f64..6.0,
    ) {
        let e = SeqEmpirical::new(n, eta, qedq_core::dist::Law::exponential(1.0)).unwrap();
        let (ta, tb) = (t1.min(t2), t1.max(t2));
        let (xa, xb) = (x1.min(x2), x1.max(x2));
        let lo = e.k_field(ta, xa).unwrap();
        prop_assert!(lo <= e.k_field(tb, xa).unwrap());
        prop_assert!(lo <= e.k_field(ta, xb).unwrap());
        let cap = ((n as f64 * tb).floor() / n as f64).min(40.0 / n as f64);
        prop_assert!(e.k_field(tb, xb).unwrap() <= cap);
        prop_assert_eq!(e.k_field(ta, f64::INFINITY).unwrap(), (n as f64 * ta).floor() / n as f64);
    }
}
