use nalgebra::DMatrix;
use proptest::prelude::*;

use polydesign::criteria::{grad_phi, phi, Criterion, DualPolynomial};
use polydesign::moments::{localizing_matrix, moment_matrix, riesz, MomentSequence};
use polydesign::polybasis::{basis_size, enumerate_monomials, eval_monomial_vector, RegressionBasis};
use polydesign::recovery::{self, compute_weights, RecoveryConfig};
use polydesign::semialg;

fn criterion() -> impl Strategy<Value = Criterion> {
    prop_oneof![Just(Criterion::D), Just(Criterion::A), Just(Criterion::E)]
}

fn spd(p: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-1.0f64..1.0, p * p).prop_map(move |v| {
        let b = DMatrix::from_vec(p, p, v);
        &b * b.transpose() + DMatrix::identity(p, p) * 0.3
    })
}

/// Points of `[-1, 1]` with weights summing to one.
fn interval_measure(max_atoms: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    proptest::collection::vec((-1.0f64..1.0, 0.05f64..1.0), 1..=max_atoms).prop_map(|atoms| {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        (
            atoms.iter().map(|a| vec![a.0]).collect(),
            atoms.iter().map(|a| a.1 / total).collect(),
        )
    })
}

fn well_separated(points: &[Vec<f64>], gap: f64) -> bool {
    points
        .iter()
        .enumerate()
        .all(|(i, p)| points[i + 1..].iter().all(|q| (p[0] - q[0]).abs() >= gap))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lower_order_basis_is_a_prefix(n in 1usize..4, k in 0usize..5, extra in 0usize..3) {
        let low = enumerate_monomials(n, k).unwrap();
        let high = enumerate_monomials(n, k + extra).unwrap();
        prop_assert_eq!(low.len(), basis_size(n, k).unwrap());
        prop_assert_eq!(high.prefix_len(k), low.len());
        prop_assert_eq!(&high.as_slice()[..low.len()], low.as_slice());
    }

    #[test]
    fn monomial_vector_starts_with_one(x in proptest::collection::vec(-2.0f64..2.0, 1..4), d in 0usize..4) {
        let v = eval_monomial_vector(&x, d).unwrap();
        prop_assert_eq!(v.len(), basis_size(x.len(), d).unwrap());
        prop_assert_eq!(v[0], 1.0);
    }

    #[test]
    fn phi_is_positively_homogeneous(m in spd(4), t in 0.1f64..10.0, c in criterion()) {
        let v = phi(&m, c).unwrap();
        let scaled = phi(&(&m * t), c).unwrap();
        prop_assert!((scaled - t * v).abs() <= 1e-8 * t.max(1.0) * v.abs().max(1.0));
    }

    #[test]
    fn euler_identity_holds(m in spd(4), c in criterion()) {
        let g = grad_phi(&m, c).unwrap();
        prop_assume!(!g.ambiguous);
        let v = phi(&m, c).unwrap();
        prop_assert!((g.matrix.dot(&m) - v).abs() <= 1e-8 * v.abs().max(1.0));
    }

    #[test]
    fn gradient_matches_central_differences(m in spd(3), h in proptest::collection::vec(-1.0f64..1.0, 9), c in criterion()) {
        let g = grad_phi(&m, c).unwrap();
        prop_assume!(!g.ambiguous && g.gap > 1e-3);
        let h = DMatrix::from_vec(3, 3, h);
        let h = (&h + h.transpose()) * 0.5;
        let step = 1e-5;
        let fd = (phi(&(&m + &h * step), c).unwrap() - phi(&(&m - &h * step), c).unwrap()) / (2.0 * step);
        prop_assert!((g.matrix.dot(&h) - fd).abs() <= 1e-5 * fd.abs().max(1e-3));
    }

    #[test]
    fn atomic_moment_matrices_are_psd((pts, w) in interval_measure(6)) {
        let y = MomentSequence::from_atoms(&pts, &w, 8).unwrap();
        let m = moment_matrix(&y, 4).unwrap().into_entries();
        prop_assert!(m.symmetric_eigenvalues().min() >= -1e-10 * m.amax().max(1.0));
        let g = semialg::interval().inequalities().next().unwrap().clone();
        let l = localizing_matrix(&y, &g, 3).unwrap().into_entries();
        prop_assert!(l.symmetric_eigenvalues().min() >= -1e-10 * l.amax().max(1.0));
    }

    #[test]
    fn riesz_of_square_is_nonnegative((pts, w) in interval_measure(5), coeffs in proptest::collection::vec(-1.0f64..1.0, 4)) {
        let y = MomentSequence::from_atoms(&pts, &w, 6).unwrap();
        let basis = enumerate_monomials(1, 3).unwrap();
        let p = polydesign::polybasis::Polynomial::from_coefficients(&basis, &coeffs);
        prop_assert!(riesz(&y, &p.mul(&p)).unwrap() >= -1e-12);
    }

    #[test]
    fn weights_of_exact_measures_are_recovered((pts, w) in interval_measure(4)) {
        prop_assume!(well_separated(&pts, 0.05));
        let y = MomentSequence::from_atoms(&pts, &w, 8).unwrap();
        let fit = compute_weights(&pts, &y).unwrap();
        for (a, b) in fit.design.weights.iter().zip(&w) {
            prop_assert!((a - b).abs() <= 1e-7);
        }
    }

    #[test]
    fn moments_survive_json(pts in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 2), 1..5)) {
        let w = vec![1.0 / pts.len() as f64; pts.len()];
        let y = MomentSequence::from_atoms(&pts, &w, 4).unwrap();
        let back: MomentSequence = serde_json::from_str(&serde_json::to_string(&y).unwrap()).unwrap();
        prop_assert_eq!(back.max_abs_diff(&y).unwrap(), 0.0);
    }

    #[test]
    fn canonical_order_is_idempotent(pts in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 2), 1..8)) {
        let once = recovery::canonical_points(pts.clone());
        prop_assert_eq!(recovery::canonical_points(once.clone()), once.clone());
        prop_assert_eq!(once.len(), pts.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn recovery_round_trip_on_the_interval((pts, w) in interval_measure(3)) {
        prop_assume!(well_separated(&pts, 0.1));
        let y = MomentSequence::from_atoms(&pts, &w, 6).unwrap();
        let rec = recovery::recover_with_escalation(&y, None, &semialg::interval(), &RecoveryConfig::default(), 4).unwrap();
        prop_assert!(rec.design.moments(6).unwrap().max_abs_diff(&y).unwrap() <= 1e-5);
    }

    #[test]
    fn dual_polynomial_vanishes_in_expectation_at_d_optimum(d in 1usize..4) {
        // Equal weights on the roots of (1 - t^2) P_d'(t) are D-optimal.
        let roots: Vec<f64> = match d {
            1 => vec![-1.0, 1.0],
            2 => vec![-1.0, 0.0, 1.0],
            _ => vec![-1.0, -(0.2f64).sqrt(), (0.2f64).sqrt(), 1.0],
        };
        let pts: Vec<Vec<f64>> = roots.iter().map(|&t| vec![t]).collect();
        let w = vec![1.0 / pts.len() as f64; pts.len()];
        let y = MomentSequence::from_atoms(&pts, &w, 2 * d).unwrap();
        let basis = RegressionBasis::identity(1, d).unwrap();
        let pstar = DualPolynomial::from_moments(&y, &basis, Criterion::D, d).unwrap();
        prop_assert!(riesz(&y, &pstar.to_polynomial()).unwrap().abs() <= 1e-9);
        for t in (0..=40).map(|i| -1.0 + i as f64 / 20.0) {
            prop_assert!(pstar.eval(&[t]) >= -1e-9);
        }
    }
}
