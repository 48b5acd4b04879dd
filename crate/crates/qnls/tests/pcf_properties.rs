use num_complex::Complex64 as C64;
use proptest::prelude::*;
use qnls::pcf::{pcf_d, pcf_d_rk4, pcf_d_series, recurrence_residuals, weber_residual, PcfMethod};

fn cross_error(nu: C64, xi: C64) -> f64 {
    let auto = pcf_d(nu, xi).unwrap();
    let (series, canc) = pcf_d_series(nu, xi).unwrap();
    let reference = if canc <= 1e4 {
        (series.value, series.derivative)
    } else {
        pcf_d_rk4(nu, xi, 1e-3).unwrap()
    };
    let ev = (auto.value - reference.0).norm() / reference.0.norm();
    let ed = (auto.derivative - reference.1).norm() / reference.1.norm();
    ev.max(ed)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn methods_agree_on_overlap(r in 3.0f64..8.0, th in -3.14159f64..3.14159,
                                nr in -3.0f64..3.0, ni in -3.0f64..3.0) {
        let nu = C64::new(nr, ni);
        prop_assume!(nu.norm() <= 3.0);
        let xi = C64::from_polar(r, th);
        let e = cross_error(nu, xi);
        prop_assert!(e < 1e-8, "nu={} xi={} err={:e}", nu, xi, e);
    }

    #[test]
    fn recurrences_hold(r in 0.0f64..40.0, th in -3.14159f64..3.14159,
                        nr in -3.0f64..3.0, ni in -3.0f64..3.0) {
        let nu = C64::new(nr, ni);
        let xi = C64::from_polar(r, th);
        let rr = recurrence_residuals(nu, xi).unwrap();
        prop_assert!(rr.r1.norm() < 1e-8 * rr.scale, "r1 {:e} scale {:e}", rr.r1.norm(), rr.scale);
        prop_assert!(rr.r2.norm() < 1e-8 * rr.scale, "r2 {:e} scale {:e}", rr.r2.norm(), rr.scale);
    }

    #[test]
    fn weber_bound(r in 0.0f64..40.0, th in -3.14159f64..3.14159,
                   nr in -5.0f64..5.0, ni in -5.0f64..5.0) {
        let nu = C64::new(nr, ni);
        let xi = C64::from_polar(r, th);
        let (res, scale) = weber_residual(nu, xi).unwrap();
        prop_assert!(res.norm() < 1e-7 * scale);
    }

    #[test]
    fn origin_ode_matches(r in 0.0f64..5.0, th in -3.14159f64..3.14159,
                          nr in -3.0f64..3.0, ni in -3.0f64..3.0) {
        let nu = C64::new(nr, ni);
        let xi = C64::from_polar(r, th);
        let v = pcf_d(nu, xi).unwrap();
        let (y, _) = pcf_d_rk4(nu, xi, 1e-3).unwrap();
        prop_assert!((v.value - y).norm() < 1e-8 * y.norm().max(1e-300));
    }
}

#[test]
fn method_labels_follow_radius() {
    let nu = C64::new(0.3, 0.2);
    assert_eq!(pcf_d(nu, C64::new(1.0, 0.5)).unwrap().method, PcfMethod::Series);
    assert_eq!(pcf_d(nu, C64::new(40.0, 3.0)).unwrap().method, PcfMethod::Asymptotic);
}

/// The coefficient of the dominant solution `D_{-ν-1}(-iξ)` in `D_ν` is zero
/// for `|arg ξ| < 3π/4` and jumps to a non-zero constant across the anti-Stokes ray.
#[test]
fn connection_coefficient_is_piecewise_constant() {
    let nu = C64::new(0.4, 0.3);
    let coeff = |xi: C64| {
        let (a, _, _) = qnls::pcf::asymptotic(nu, xi);
        let d = pcf_d(nu, xi).unwrap().value;
        let (dominant, _, _) = qnls::pcf::asymptotic(-nu - 1.0, C64::new(0.0, -1.0) * xi);
        (d - a) / dominant
    };
    for th in [-std::f64::consts::FRAC_PI_4, 0.0, std::f64::consts::FRAC_PI_2] {
        let c = coeff(C64::from_polar(30.0, th));
        assert!(c.norm() < 1e-6, "th={th} c={c}");
    }
    let th = 0.9 * std::f64::consts::PI;
    let c1 = coeff(C64::from_polar(30.0, th));
    let c2 = coeff(C64::from_polar(34.0, th));
    let expect = (2.0 * std::f64::consts::PI).sqrt() * qnls::pcf::rgamma(-nu)
        * (C64::new(0.0, std::f64::consts::FRAC_PI_2) * (nu + 1.0)).exp();
    assert!(c1.norm() > 0.1);
    assert!((c1 - c2).norm() < 1e-8 * c1.norm(), "{c1} {c2}");
    assert!((c1 - expect).norm() < 1e-8 * expect.norm(), "{c1} {expect}");
}
