mod common;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use ctrlopt::consensus::{build_triplet, validate_triplet, GainInterval, TripletName};
use ctrlopt::cost::{finite_difference_check, random_spd, NonQuadraticAgentCost, QuadraticAgentCost, SignalGenerator, SignalKind};
use ctrlopt::dynamics::LocalOperator;
use ctrlopt::graph::{make_graph, metropolis_weights, GraphKind};
use ctrlopt::internal_model::{
    companion_realization, distributed_common_denominator, poly_from_roots, roots_of, union_roots, MonicPolynomial,
    RootMultiset,
};
use ctrlopt::synthesis::verify_robust_stability;

use common::floyd_warshall_diameter;

fn connected_graph() -> impl Strategy<Value = ctrlopt::graph::Graph> {
    (3usize..14, 0.2f64..0.8, any::<u64>())
        .prop_filter_map("disconnected", |(n, p, seed)| make_graph(GraphKind::ErdosRenyi { p, seed }, n).ok())
}

/// Conjugate-closed root sets on the unit circle with well-separated angles.
fn unit_circle_roots() -> impl Strategy<Value = RootMultiset> {
    (prop::collection::btree_set(1u32..30, 0..4), any::<bool>(), 1usize..3).prop_map(|(slots, integrator, mult)| {
        let mut roots = Vec::new();
        for s in slots {
            let theta = 0.1 * s as f64;
            roots.push((Complex64::from_polar(1.0, theta), 1));
            roots.push((Complex64::from_polar(1.0, -theta), 1));
        }
        if integrator || roots.is_empty() {
            roots.push((Complex64::new(1.0, 0.0), mult));
        }
        RootMultiset::new(roots)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metropolis_is_symmetric_doubly_stochastic_and_local(g in connected_graph()) {
        let w = metropolis_weights(&g);
        let m = w.matrix();
        let n = g.node_count();
        prop_assert!(w.check(&g).is_ok());
        prop_assert!((m - m.transpose()).amax() < 1e-15);
        for i in 0..n {
            prop_assert!((m.row(i).sum() - 1.0).abs() < 1e-12);
            for j in 0..n {
                if i != j && !g.has_edge(i, j) {
                    prop_assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
        prop_assert!(w.second_largest_modulus() < 1.0);
    }

    #[test]
    fn diameter_matches_floyd_warshall(g in connected_graph()) {
        let n = g.node_count();
        let adj: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| g.has_edge(i, j)).collect()).collect();
        prop_assert_eq!(Some(g.diameter().unwrap()), floyd_warshall_diameter(&adj));
    }

    #[test]
    fn table_triplets_validate_on_connected_graphs(g in connected_graph(), n in 1usize..4) {
        let w = metropolis_weights(&g);
        for name in TripletName::TABLE {
            let t = build_triplet(name, &w, n).unwrap();
            let r = validate_triplet(&t);
            prop_assert!(r.passed(), "{}: {:?}", name, r.failures);
        }
    }

    #[test]
    fn roots_round_trip(r in unit_circle_roots()) {
        let p = poly_from_roots(&r).unwrap();
        prop_assert_eq!(p.degree(), r.degree());
        prop_assert!(roots_of(&p).approx_eq(&r, 1e-8));
        for (z, _) in r.roots() {
            prop_assert!(p.eval(*z).norm() < 1e-9);
        }
    }

    #[test]
    fn companion_spectrum_is_the_root_set(r in unit_circle_roots()) {
        let p = poly_from_roots(&r).unwrap();
        let real = companion_realization(&p);
        let chi = real.characteristic_polynomial();
        for (a, b) in chi.coeffs().iter().zip(p.coeffs()) {
            prop_assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
        // Repeated roots make raw eigenvalues ill-conditioned; their backward error stays tiny.
        let full = p.full_coeffs();
        for z in ctrlopt::spectrum::eigenvalues(&real.f).iter() {
            let scale: f64 = full.iter().enumerate().map(|(i, c)| c.abs() * z.norm().powi(i as i32)).sum();
            prop_assert!(p.eval(*z).norm() < 1e-12 * scale, "eigenvalue {} is not a root", z);
        }
        for (z, _) in roots_of(&p).roots() {
            prop_assert!((z.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn union_is_commutative_and_idempotent(a in unit_circle_roots(), b in unit_circle_roots()) {
        let ab = union_roots(&a, &b);
        prop_assert!(ab.approx_eq(&union_roots(&b, &a), 1e-12));
        prop_assert!(union_roots(&ab, &a).approx_eq(&ab, 1e-12));
        prop_assert!(ab.degree() >= a.degree().max(b.degree()));
        prop_assert!(ab.degree() <= a.degree() + b.degree());
    }

    #[test]
    fn diameter_rounds_reach_global_denominator(g in connected_graph(), picks in prop::collection::vec(0u32..5, 14)) {
        let n = g.node_count();
        let locals: Vec<MonicPolynomial> = (0..n)
            .map(|i| MonicPolynomial::oscillator(0.2 + 0.4 * picks[i] as f64))
            .collect();
        let global = locals.iter().map(roots_of).fold(RootMultiset::default(), |a, r| union_roots(&a, &r));
        let sets = distributed_common_denominator(&g, &locals, g.diameter().unwrap()).unwrap();
        for s in &sets {
            prop_assert!(s.approx_eq(&global, 1e-9));
        }
    }

    #[test]
    fn robust_radius_is_invariant_to_gain_scaling(
        h in prop::collection::vec(-2.0f64..2.0, 2),
        lo in 0.05f64..1.0,
        width in 0.0f64..3.0,
        c in 0.1f64..10.0,
    ) {
        let real = companion_realization(&MonicPolynomial::oscillator(0.7));
        let h = DVector::from_vec(h);
        let base = GainInterval::new(lo, lo + width).unwrap();
        let scaled = GainInterval::new(c * lo, c * (lo + width)).unwrap();
        let a = verify_robust_stability(&real, &h, &base, 50);
        let b = verify_robust_stability(&real, &(&h / c), &scaled, 50);
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
    }

    #[test]
    fn local_operator_equals_dense_lift(g in connected_graph(), n in 1usize..4, seed in any::<u64>()) {
        let t = build_triplet(TripletName::Diging, &metropolis_weights(&g), n).unwrap();
        let x = ctrlopt::cost::random_gaussian_vector(t.lifted_dim(), seed);
        for base in [&t.w1, &t.w2sq, &t.w3] {
            let dense = base.kronecker(&DMatrix::<f64>::identity(n, n)) * &x;
            prop_assert!((LocalOperator::new(base, n).apply(&x) - dense).amax() < 1e-13);
        }
    }

    #[test]
    fn gradients_match_finite_differences(seed in 0u64..1000, k in 0usize..10_000, n in 1usize..6) {
        let a = random_spd(n, 1.0, 10.0, seed).unwrap();
        let x = ctrlopt::cost::random_gaussian_vector(n, seed + 1);
        let q = QuadraticAgentCost::new(
            a.clone(),
            SignalGenerator::new(SignalKind::Sine, ctrlopt::cost::random_gaussian_vector(n, seed + 2), 0.1),
        )
        .unwrap();
        prop_assert!(finite_difference_check(&q, k, &x, 1e-5) < 1e-6);
        let nq = NonQuadraticAgentCost::new(
            a,
            ctrlopt::cost::random_gaussian_vector(n, seed + 3),
            ctrlopt::cost::random_unit_vector(n, seed + 4),
            5.0,
        )
        .unwrap();
        prop_assert!(finite_difference_check(&nq, k, &x, 1e-5) < 1e-6);
    }

    #[test]
    fn random_spd_respects_spectrum(n in 1usize..8, lo in 0.1f64..2.0, width in 0.0f64..5.0, seed in any::<u64>()) {
        let a = random_spd(n, lo, lo + width, seed).unwrap();
        let ev = a.symmetric_eigenvalues();
        prop_assert!(ev.min() >= lo - 1e-9 && ev.max() <= lo + width + 1e-9);
    }
}
