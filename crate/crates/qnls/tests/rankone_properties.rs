use nalgebra::DMatrix;
use proptest::prelude::*;
use qnls::fields::{FieldModel, FieldSet, FieldSetSpec};
use qnls::numerics::{gauss_panels, lu_determinant, QuadGrid};
use qnls::rankone::{
    det2, inf_norm, inv2, jump_det_closed, make_vectors, mul2, rep_hat, GridOperator, RegVectors,
};
use qnls::C64;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn fields(cc: f64, a: f64, b: f64, hf: f64, phase: f64) -> FieldSet {
    let h = hf * cc;
    let spec = FieldSetSpec {
        psi: FieldModel::AffineLog { a: c(a, 0.0), b: c(b, 0.0) },
        phi_a: FieldModel::Rational { num: vec![c(0.0, -h), c(1.0, 0.0)], den: vec![c(0.0, h), c(1.0, 0.0)] },
        phi_d: FieldModel::AffineLog { a: c(0.0, 0.0), b: c(0.0, phase) },
    };
    FieldSet::new(&spec, cc).unwrap()
}

fn window_grid(lambda: f64, eps: f64) -> QuadGrid {
    let w = 6.0 * eps.sqrt();
    gauss_panels(c(lambda - w, 0.0), c(lambda + w, 0.0), 10, 10).unwrap()
}

fn field_strategy() -> impl Strategy<Value = (FieldSet, RegVectors)> {
    (0.5f64..4.0, -0.5f64..0.5, -0.5f64..0.5, 1.2f64..2.0, -0.5f64..0.5, -1.0f64..1.0, 0.005f64..0.05).prop_map(
        |(cc, a, b, hf, phase, lam, eps)| {
            let f = fields(cc, a, b, hf, phase);
            let v = make_vectors(&f, lam, eps, &window_grid(lam, eps)).unwrap();
            (f, v)
        },
    )
}

fn matrix() -> impl Strategy<Value = [[C64; 2]; 2]> {
    prop::array::uniform4((-1.0f64..1.0, -1.0f64..1.0))
        .prop_map(|e| [[c(e[0].0, e[0].1), c(e[1].0, e[1].1)], [c(e[2].0, e[2].1), c(e[3].0, e[3].1)]])
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(24) })]

    #[test]
    fn representation_is_multiplicative((_f, v) in field_strategy(), a in matrix(), b in matrix()) {
        let lhs = rep_hat(&a, &v).dense() * rep_hat(&b, &v).dense();
        let rhs = rep_hat(&mul2(&a, &b), &v).dense();
        let scale = inf_norm(&rhs).max(1.0);
        prop_assert!(inf_norm(&(lhs - rhs)) < 1e-10 * scale);
    }

    #[test]
    fn inverse_is_represented((_f, v) in field_strategy(), a in matrix()) {
        prop_assume!(det2(&a).norm() > 0.05);
        let prod = rep_hat(&a, &v).dense() * rep_hat(&inv2(&a).unwrap(), &v).dense();
        let n = prod.nrows();
        prop_assert!(inf_norm(&(prod - DMatrix::<C64>::identity(n, n))) < 1e-9 / det2(&a).norm());
    }

    #[test]
    fn determinant_is_preserved((_f, v) in field_strategy(), a in matrix()) {
        prop_assume!(det2(&a).norm() > 1e-3);
        let op = rep_hat(&a, &v);
        let dense = lu_determinant(op.dense()).unwrap().det;
        let analytic = op.analytic_det().unwrap().det;
        prop_assert!((dense - det2(&a)).norm() < 1e-8 * det2(&a).norm());
        prop_assert!((analytic - det2(&a)).norm() < 1e-10 * det2(&a).norm());
    }

    #[test]
    fn transpose_swaps_the_diagonal_projectors((_f, v) in field_strategy()) {
        let w = &v.ugrid.weights;
        let p11 = GridOperator::zero(w).with_term(c(1.0, 0.0), &v.ket1, &v.bra1);
        let p22 = GridOperator::zero(w).with_term(c(1.0, 0.0), &v.ket2, &v.bra2);
        prop_assert_eq!(inf_norm(&(p11.dense().transpose() - p22.dense())), 0.0);
        prop_assert_eq!(p11.transpose().dense(), p11.dense().transpose());
    }

    #[test]
    fn jump_determinant_switches_form_at_the_split((f, v) in field_strategy(), theta in 0.05f64..0.6) {
        let phi = f.phi(c(v.lambda, 0.0)).unwrap();
        let left = jump_det_closed(&f, theta, &v, v.lambda + 0.5).unwrap();
        let right = jump_det_closed(&f, theta, &v, v.lambda - 0.5).unwrap();
        let expect_left = 1.0 - theta * (1.0 + (-phi).exp());
        let expect_right = 1.0 / (1.0 - theta * (1.0 + phi.exp()));
        prop_assert!((left - expect_left).norm() < 1e-11 * expect_left.norm().max(1.0));
        prop_assert!((right - expect_right).norm() < 1e-11 * expect_right.norm().max(1.0));
    }
}
