//! End-to-end acceptance run: one PASS/FAIL line per criterion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;

use qnls::asym::{
    derivative_consistency, fit_linear_log, free_fermion_reduce, lagrange_series, logdet_leading, nu_at,
    shifted_saddle, solve_saddle, LeadingMode,
};
use qnls::fields::{FieldModel, FieldSet, FieldSetSpec};
use qnls::fredholm::{det_v, KernelConfig};
use qnls::localized::{asymptotic_match_all, model_scalars, verify_sector_jumps};
use qnls::numerics::{gauss_panels, lu_determinant, QuadGrid};
use qnls::pcf::{pcf_d, pcf_d_rk4, pcf_d_series, recurrence_residuals, weber_residual, SERIES_MAX_CANCELLATION};
use qnls::rankone::{det2, g22_inverse_transpose_closed, jump_g, make_vectors, quasidet_check, rep_hat, tau, RegVectors};
use qnls::scalar_rhp::{Contour, DeltaRhp};
use qnls::thermo::{ThermoParams, ThermoState};
use qnls::{Result, C64};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn thermo(cc: f64, h: f64, temp: f64) -> Result<ThermoState> {
    ThermoState::solve(ThermoParams::new(cc, h, temp)?)
}

/// Outcome of one criterion.
struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

/// Field set with an affine `ψ`, a unimodular Möbius `e^{φ_A}` and a constant phase `φ_D`.
fn random_fields(rng: &mut ChaCha8Rng, cc: f64) -> Result<FieldSet> {
    let h = rng.gen_range(1.2..2.0) * cc;
    let spec = FieldSetSpec {
        psi: FieldModel::AffineLog { a: c(rng.gen_range(-0.5..0.5), 0.0), b: c(rng.gen_range(-0.5..0.5), 0.0) },
        phi_a: FieldModel::Rational { num: vec![c(0.0, -h), c(1.0, 0.0)], den: vec![c(0.0, h), c(1.0, 0.0)] },
        phi_d: FieldModel::AffineLog { a: c(0.0, 0.0), b: c(0.0, rng.gen_range(-0.5..0.5)) },
    };
    FieldSet::new(&spec, cc)
}

fn sample_fields(cc: f64) -> Result<FieldSet> {
    let spec = FieldSetSpec {
        psi: FieldModel::AffineLog { a: c(0.3, 0.0), b: c(0.1, 0.0) },
        phi_a: FieldModel::Rational { num: vec![c(0.0, -1.5 * cc), c(1.0, 0.0)], den: vec![c(0.0, 1.5 * cc), c(1.0, 0.0)] },
        phi_d: FieldModel::AffineLog { a: c(0.0, 0.0), b: c(0.0, -0.2) },
    };
    FieldSet::new(&spec, cc)
}

/// 100 nodes on `λ ± 6√ε`, so that a 2×2 block operator has dimension 200.
fn window_grid(lambda: f64, eps: f64) -> Result<QuadGrid> {
    let w = 6.0 * eps.sqrt();
    gauss_panels(c(lambda - w, 0.0), c(lambda + w, 0.0), 10, 10)
}

fn random_vectors(rng: &mut ChaCha8Rng) -> Result<(FieldSet, RegVectors)> {
    let f = random_fields(rng, 2.0)?;
    let lam = rng.gen_range(-1.0..1.0);
    let eps = rng.gen_range(0.005..0.05);
    let v = make_vectors(&f, lam, eps, &window_grid(lam, eps)?)?;
    Ok((f, v))
}

fn random_c(rng: &mut ChaCha8Rng) -> C64 {
    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

fn criterion1() -> Result<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut dim = 0;
    for _ in 0..10 {
        let (_, v) = random_vectors(&mut rng)?;
        for _ in 0..100 {
            let g = [[random_c(&mut rng), random_c(&mut rng)], [random_c(&mut rng), random_c(&mut rng)]];
            let op = rep_hat(&g, &v);
            let dense = op.dense();
            dim = dense.nrows();
            let d = lu_determinant(dense)?.det;
            worst = worst.max((d - det2(&g)).norm() / det2(&g).norm());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-8 && secs < 30.0 && dim == 200,
        format!("1000 matrices, dimension {dim}: max rel err {worst:.2e} (< 1e-8), {secs:.1} s (< 30 s)"),
    )
}

fn criterion2() -> Result<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (f, v) = random_vectors(&mut rng)?;
        let theta = rng.gen_range(0.05..0.6);
        let (x, t) = (rng.gen_range(-3.0..3.0), rng.gen_range(0.1..3.0));
        let g = jump_g(&f, theta, v.lambda, tau(c(v.lambda, 0.0), x, t), &v)?;
        let closed = g22_inverse_transpose_closed(&f, theta, &v)?;
        worst = worst.max(quasidet_check(&g, &closed)?.max_residual());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-8 && secs < 60.0,
        format!("100 draws: max residual {worst:.2e} (< 1e-8), {secs:.1} s (< 60 s)"),
    )
}

fn criterion3() -> Result<Outcome> {
    let neg = (sample_fields(2.0)?, thermo(2.0, -0.5, 1.0)?, 0.4);
    let pos = (FieldSet::zero(4.0), thermo(4.0, 1.0, 0.25)?, 1.3);
    let mut jump: f64 = 0.0;
    let mut fit: f64 = 0.0;
    let mut gamma: f64 = 0.0;
    for (f, th, l0) in [&neg, &pos] {
        let rhp = DeltaRhp::new(f, th, Contour::for_config(f, th, c(*l0, 0.0))?)?;
        jump = jump.max(rhp.jump_relation_residual(f, th, 20)?);
        let (e, x) = (rhp.coeffs(), rhp.fit_large_lambda(f, th)?);
        let rel = |a: C64, b: C64| (a - b).norm() / b.norm();
        fit = fit.max(rel(x.delta0, e.delta0)).max(rel(x.delta1, e.delta1));
        if rhp.contour.roots.is_some() {
            let wide = DeltaRhp::new(f, th, rhp.contour.with_radius(2.0 * rhp.contour.detour_radius)?)?.coeffs();
            gamma = gamma.max((wide.delta0 - e.delta0).norm()).max((wide.delta1 - e.delta1).norm());
        }
    }
    outcome(
        jump < 1e-5 && fit < 1e-3 && gamma < 1e-8,
        format!(
            "jump at 20 points {jump:.2e} (< 1e-5), large-λ fit {fit:.2e} (< 1e-3), Γ radius doubling {gamma:.2e} (< 1e-8)"
        ),
    )
}

fn criterion4() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut cross, mut rec, mut weber): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..200 {
        let nu = C64::from_polar(rng.gen_range(0.0..3.0), rng.gen_range(-PI..PI));
        let xi = C64::from_polar(rng.gen_range(3.0..8.0), rng.gen_range(-PI..PI));
        let auto = pcf_d(nu, xi)?;
        let (series, canc) = pcf_d_series(nu, xi)?;
        let (v, d) = if canc <= SERIES_MAX_CANCELLATION {
            (series.value, series.derivative)
        } else {
            pcf_d_rk4(nu, xi, 1e-3)?
        };
        cross = cross.max((auto.value - v).norm() / v.norm()).max((auto.derivative - d).norm() / d.norm());
        let far = C64::from_polar(rng.gen_range(0.0..40.0), rng.gen_range(-PI..PI));
        let r = recurrence_residuals(nu, far)?;
        rec = rec.max(r.r1.norm().max(r.r2.norm()) / r.scale);
        let (res, scale) = weber_residual(nu, far)?;
        weber = weber.max(res.norm() / scale);
    }
    let d0 = pcf_d(c(0.0, 0.0), c(2.0, 0.0))?.value;
    let d0_err = (d0 - (-1.0f64).exp()).norm();
    let rounding = 2.0 * f64::EPSILON * (-1.0f64).exp();
    outcome(
        cross < 1e-8 && rec < 1e-8 && weber < 1e-7 && d0_err <= rounding,
        format!(
            "cross {cross:.2e} (< 1e-8), recurrences {rec:.2e} (< 1e-8), Weber {weber:.2e} (< 1e-7), \
             |D0(2) - e^-1| = {d0_err:.1e} (<= {rounding:.1e})"
        ),
    )
}

fn criterion5() -> Result<Outcome> {
    let cases = [
        (sample_fields(2.0)?, thermo(2.0, -0.5, 1.0)?, 0.3, 10.0),
        (sample_fields(3.0)?, thermo(3.0, -0.2, 0.5)?, -0.4, 25.0),
        (FieldSet::zero(4.0), thermo(4.0, 1.0, 0.25)?, 1.3, 10.0),
    ];
    let (mut jumps, mut ident, mut nu_inv, mut matched): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for (f, th, l0, t) in &cases {
        let m = model_scalars(f, th, c(*l0, 0.0), 2.0 * t * l0, *t)?;
        let j = verify_sector_jumps(&m, *t)?;
        jumps = jumps.max(j.max_jump());
        ident = ident.max(j.identity);
        nu_inv = nu_inv.max(j.nu_invariance / m.nu.norm().max(1.0));
        for a in asymptotic_match_all(&m, *t, 40.0)? {
            matched = matched.max(a.max_rel_err);
        }
    }
    outcome(
        jumps < 1e-10 && ident < 1e-10 && nu_inv < 1e-13 && matched < 1e-3,
        format!(
            "sector jumps {jumps:.2e} (< 1e-10), identity {ident:.2e} (< 1e-10), \
             ν invariance {nu_inv:.1e} (< 1e-13), match at |ξ| = 40 {matched:.2e} (< 1e-3)"
        ),
    )
}

fn criterion6() -> Result<Outcome> {
    let start = Instant::now();
    let th = thermo(50.0, -0.5, 1.0)?;
    let f = FieldSet::zero(50.0);
    let l0 = 1.0;
    let ts = [10.0, 15.0, 20.0, 30.0, 40.0];
    let mut ys = Vec::new();
    for t in ts {
        let cfg = KernelConfig::new(f.clone(), th.clone(), 2.0 * t * l0, t)?;
        ys.push(det_v(&cfg, None)?.log_det.re);
    }
    let fit = fit_linear_log(&ts, &ys)?;
    let lead = logdet_leading(&f, &th, 2.0 * l0, 1.0, LeadingMode::Shifted)?;
    let fe = lead.integral.re;
    let nu = nu_at(&f, &th, c(l0, 0.0))?;
    let p_target = (-0.5 * nu * nu).re;
    let b_err = (fit.b - fe).abs() / fe.abs();
    let p_err = (fit.p - p_target).abs();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        b_err < 0.05 && p_err < 0.15 && secs < 600.0,
        format!(
            "b = {:.5} vs Re F_e = {fe:.5} (rel {b_err:.2e} < 0.05), p = {:.4} vs {p_target:.4} \
             (|diff| {p_err:.2e} < 0.15), {secs:.0} s",
            fit.b, fit.p
        ),
    )
}

fn criterion7() -> Result<Outcome> {
    let th = thermo(3.0, -0.4, 1.0)?;
    let f = FieldSet::new(
        &FieldSetSpec {
            psi: FieldModel::Zero,
            phi_a: FieldModel::AffineLog { a: c(0.0, 0.0), b: c(0.0, 0.3) },
            phi_d: FieldModel::AffineLog { a: c(0.0, 0.0), b: c(0.0, -0.2) },
        },
        3.0,
    )?;
    let mut worst: f64 = 0.0;
    for l0 in [-0.8, -0.3, 0.2, 0.5, 1.1] {
        worst = worst.max(derivative_consistency(&f, &th, l0, 10.0, 1e-2)?.rel_err);
    }
    outcome(worst < 1e-6, format!("5 points: max rel err {worst:.2e} (< 1e-6)"))
}

fn criterion8() -> Result<Outcome> {
    let with_psi = |psi: FieldModel, cc: f64| FieldSet::new(&FieldSetSpec { psi, ..Default::default() }, cc);
    let mobius = with_psi(
        FieldModel::Rational { num: vec![c(0.0, -3.0), c(1.0, 0.0)], den: vec![c(0.0, 3.0), c(1.0, 0.0)] },
        8.0,
    )?;
    let th = thermo(8.0, -0.5, 1.0)?;
    let mut residual: f64 = 0.0;
    for t in [5.0, 10.0, 20.0, 40.0] {
        for l0 in [-1.0, 0.0, 0.5] {
            residual = residual.max(shifted_saddle(&mobius, &th, 2.0 * t * l0, t)?.residual);
        }
    }
    let err = |t: f64| -> Result<f64> {
        let (lam, _, _) = solve_saddle(&mobius, 0.5, t)?;
        Ok((lam - lagrange_series(&mobius, 0.5, t, 3)?).norm())
    };
    let ratio = err(10.0)? / err(20.0)?;
    let (a, b) = (0.7, 0.4);
    let constant = with_psi(FieldModel::AffineLog { a: c(a, 0.0), b: c(0.0, 0.0) }, 4.0)?;
    let linear = with_psi(FieldModel::PolyLog { coeffs: vec![c(0.0, 0.0), c(b, 0.0), c(0.5 * a, 0.0)] }, 4.0)?;
    let mut closed: f64 = 0.0;
    for t in [2.0, 10.0, 40.0] {
        let (lam, _, _) = solve_saddle(&constant, 0.8, t)?;
        closed = closed.max((lam - (0.8 + c(0.0, a / (2.0 * t)))).norm());
        let (lam, _, _) = solve_saddle(&linear, 0.8, t)?;
        let exact = (0.8 + c(0.0, b / (2.0 * t))) / (1.0 - c(0.0, a / (2.0 * t)));
        closed = closed.max((lam - exact).norm());
    }
    outcome(
        residual <= 1e-12 && (ratio - 16.0).abs() < 1.5 && closed < 1e-12,
        format!(
            "fixed-point residual {residual:.1e} (<= 1e-12), Lagrange error ratio under t doubling {ratio:.2} \
             (16 for t^-4), closed forms {closed:.1e} (< 1e-12)"
        ),
    )
}

fn criterion9() -> Result<Outcome> {
    let start = Instant::now();
    let th = thermo(2.0, -0.5, 1.0)?;
    let f = sample_fields(2.0)?;
    let eps = qnls::rankone::default_eps_reg(1.0);
    let (x, t) = (6.0, 10.0);
    // The asymptotic pipeline never receives a regularization width; running it
    // once per width demonstrates that its outputs carry no such dependence.
    let leading = |_eps: f64| -> Result<[C64; 6]> {
        let rhp = DeltaRhp::new(&f, &th, Contour::for_config(&f, &th, c(x / (2.0 * t), 0.0))?)?;
        let e = rhp.coeffs();
        let law = qnls::asym::assemble(&f, &th, x, t)?;
        Ok([e.delta0, e.delta1, law.saddle.nu, law.exp_exponent, law.power_exponent, law.log_value()])
    };
    let identical = leading(eps)? == leading(10.0 * eps)?;
    let config = |f: &FieldSet, th: &ThermoState, x: f64, t: f64, e: f64| -> Result<KernelConfig> {
        let mut k = KernelConfig::new(f.clone(), th.clone(), x, t)?.with_eps_reg(e);
        k.principal_value_offset = e.sqrt();
        Ok(k)
    };
    let mut change: f64 = 0.0;
    let free = (FieldSet::zero(50.0), thermo(50.0, -0.5, 1.0)?);
    for (f, th, x, t) in [(&f, &th, 6.0, 10.0), (&free.0, &free.1, 80.0, 40.0)] {
        let e0 = qnls::rankone::default_eps_reg(th.params.temperature);
        let a = det_v(&config(f, th, x, t, e0)?, None)?.det;
        let b = det_v(&config(f, th, x, t, 0.1 * e0)?, None)?.det;
        change = change.max((a - b).norm() / a.norm());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        identical && change < 0.02,
        format!(
            "Δ0, Δ1, ν, exponents bit-identical under eps x10: {identical}; det_V change under eps/10 \
             {change:.2e} (< 2e-2), {secs:.0} s"
        ),
    )
}

fn criterion10() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let neg = thermo(50.0, -0.5, 1.0)?;
    let neg2 = thermo(2.0, -1.0, 0.5)?;
    let pos = thermo(50.0, 0.5, 0.3)?;
    for (th, x, t) in [
        (&neg, 20.0, 10.0),
        (&neg, -7.0, 3.0),
        (&neg2, 4.0, 8.0),
        (&pos, 30.0, 10.0),
        (&pos, 60.0, 20.0),
    ] {
        worst = worst.max(free_fermion_reduce(th, x, t)?.max_deviation);
    }
    outcome(worst <= 1e-14, format!("5 configurations, max deviation {worst:.1e} (<= 1e-14)"))
}

fn main() {
    let criteria: [(usize, fn() -> Result<Outcome>); 10] = [
        (1, criterion1),
        (2, criterion2),
        (3, criterion3),
        (4, criterion4),
        (5, criterion5),
        (6, criterion6),
        (7, criterion7),
        (8, criterion8),
        (9, criterion9),
        (10, criterion10),
    ];
    let mut failed = 0;
    for (n, run) in criteria {
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {n:2}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
