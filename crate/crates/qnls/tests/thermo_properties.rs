use num_complex::Complex64 as C64;
use proptest::prelude::*;
use qnls::numerics::gauss_panels;
use qnls::thermo::{default_grid, fermi_weight, kernel, ThermoParams, ThermoState};
use std::f64::consts::PI;

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(256) })]

    #[test]
    fn fermi_weight_symmetry_and_monotonicity(e in -50.0f64..50.0, de in 1e-3f64..5.0, t in 0.05f64..5.0) {
        prop_assert!((fermi_weight(e, t) + fermi_weight(-e, t) - 1.0).abs() < 1e-15);
        prop_assert!(fermi_weight(e + de, t) <= fermi_weight(e, t));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(6) })]

    #[test]
    fn converged_state_satisfies_its_equations(c in 0.5f64..6.0, mag in 0.8f64..1.5, positive: bool, t in 0.1f64..2.0) {
        let h = if positive { mag } else { -mag };
        let p = ThermoParams::new(c, h, t).unwrap();
        let st = ThermoState::solve(p).unwrap();
        prop_assert!(st.report.converged && st.report.residual <= 1e-13);
        let x = st.grid.real_nodes();
        let n = x.len();
        for i in (0..n).step_by(37) {
            let mut integral = 0.0;
            for j in 0..n {
                integral += kernel(x[i] - x[j], c) * st.theta[j] * st.rho_t[j] * st.grid.weights[j].re;
            }
            prop_assert!((2.0 * PI * st.rho_t[i] - 1.0 - integral).abs() < 1e-10);
            prop_assert!((st.rho_t[i] - st.rho_t[n - 1 - i]).abs() < 1e-12);
        }
    }

    #[test]
    fn epsilon_is_stable_under_grid_refinement(c in 0.5f64..6.0, mag in 0.8f64..1.5, positive: bool, t in 0.1f64..2.0) {
        let h = if positive { mag } else { -mag };
        let p = ThermoParams::new(c, h, t).unwrap();
        let base = ThermoState::solve(p).unwrap();
        let g = default_grid(&p, 1e-16, 64, 16).unwrap();
        let l = g.panel_edges.last().unwrap().re;
        let fine = ThermoState::solve_on(p, gauss_panels(C64::from(-l), C64::from(l), 128, 16).unwrap(), 1e-13).unwrap();
        for k in 0..=40 {
            let z = C64::from(-l + 2.0 * l * k as f64 / 40.0);
            prop_assert!((base.epsilon_at(z) - fine.epsilon_at(z)).norm() < 1e-8);
        }
    }
}
