//! Shifted saddle point, the exponent `ν`, the assembled asymptotic laws for
//! both signs of the chemical potential, trace-level corrections, residuals
//! of the scalar-reduced NLS system and the free-fermion reduction.
//!
//! The constant factors `C±` and the trace `tr Ĉ₀` are not computable from
//! the data available here. Results carry explicit flags for them and never
//! fold a guessed value into the reported exponents.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{QnlsError, Result};
use crate::fields::{find_capital_lambdas, Block, FieldSet};
use crate::localized::{kappas, model_scalars, nu_from_factors};
use crate::numerics::{gauss_legendre, I};
use crate::scalar_rhp::{Contour, DeltaRhp};
use crate::thermo::{epsilon_roots, ThermoState};

/// Largest admissible residual of the saddle-point equation.
pub const SADDLE_TOL: f64 = 1e-12;
const SADDLE_MAX_ITER: usize = 60;

/// Shifted saddle point `Λ = λ₀ + (i/2t)ψ′(Λ)` and the quantities evaluated there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleData {
    pub lambda0: f64,
    #[serde(rename = "Lambda")]
    pub lambda: C64,
    /// `t - (i/2)ψ″(Λ)`.
    pub t_s: C64,
    /// `ν(Λ)`.
    pub nu: C64,
    /// `|Λ - λ₀ - (i/2t)ψ′(Λ)|`.
    pub residual: f64,
    pub iterations: usize,
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(QnlsError::Config(format!("t = {t} must be positive and finite")));
    }
    Ok(())
}

/// `Λ - λ₀ - (i/2t)ψ′(Λ)`.
pub fn saddle_equation(fields: &FieldSet, lambda0: f64, t: f64, lam: C64) -> Result<C64> {
    Ok(lam - lambda0 - I / (2.0 * t) * fields.psi_derivative(lam, 1)?)
}

/// Newton solution of the saddle-point equation started at `λ₀`.
pub fn solve_saddle(fields: &FieldSet, lambda0: f64, t: f64) -> Result<(C64, f64, usize)> {
    check_time(t)?;
    if !lambda0.is_finite() {
        return Err(QnlsError::Config(format!("λ₀ = {lambda0} must be finite")));
    }
    let k = I / (2.0 * t);
    let mut lam = C64::from(lambda0);
    let mut residual = f64::INFINITY;
    for it in 0..SADDLE_MAX_ITER {
        let f = saddle_equation(fields, lambda0, t, lam)?;
        residual = f.norm();
        if residual <= 1e-15 * (1.0 + lam.norm()) {
            return Ok((lam, residual, it));
        }
        let df = 1.0 - k * fields.psi_derivative(lam, 2)?;
        if !(df.norm() > 1e-300) {
            return Err(QnlsError::Singular(format!("saddle-point Newton step degenerates at Λ = {lam}")));
        }
        let step = f / df;
        lam -= step;
        if !lam.re.is_finite() || !lam.im.is_finite() {
            break;
        }
        if step.norm() <= 1e-16 * (1.0 + lam.norm()) {
            let r = saddle_equation(fields, lambda0, t, lam)?.norm();
            if r <= SADDLE_TOL {
                return Ok((lam, r, it + 1));
            }
        }
    }
    if residual <= SADDLE_TOL {
        return Ok((lam, residual, SADDLE_MAX_ITER));
    }
    Err(QnlsError::NonConvergence {
        what: "shifted saddle point".into(),
        iterations: SADDLE_MAX_ITER,
        residual,
    })
}

/// Shifted saddle point for `λ₀ = x/2t` together with `t_s` and `ν(Λ)`.
pub fn shifted_saddle(fields: &FieldSet, thermo: &ThermoState, x: f64, t: f64) -> Result<SaddleData> {
    check_time(t)?;
    let lambda0 = x / (2.0 * t);
    let (lambda, residual, iterations) = solve_saddle(fields, lambda0, t)?;
    let t_s = t - 0.5 * I * fields.psi_derivative(lambda, 2)?;
    Ok(SaddleData {
        lambda0,
        lambda,
        t_s,
        nu: nu_at(fields, thermo, lambda)?,
        residual,
        iterations,
    })
}

/// Partial sums of the Lagrange inversion series
/// `Λ = λ₀ + Σₙ (1/n!)(i/2t)ⁿ dⁿ⁻¹/dλ₀ⁿ⁻¹[(ψ′)ⁿ]` with up to three terms.
pub fn lagrange_series(fields: &FieldSet, lambda0: f64, t: f64, terms: usize) -> Result<C64> {
    check_time(t)?;
    if terms > 3 {
        return Err(QnlsError::Config(format!("at most three series terms are available, got {terms}")));
    }
    let z = C64::from(lambda0);
    let d1 = fields.psi_derivative(z, 1)?;
    let d2 = fields.psi_derivative(z, 2)?;
    let d3 = fields.psi_derivative(z, 3)?;
    let k = I / (2.0 * t);
    let series = [
        k * d1,
        k * k * d1 * d2,
        k * k * k * (d1 * d2 * d2 + 0.5 * d1 * d1 * d3),
    ];
    Ok(z + series.iter().take(terms).sum::<C64>())
}

/// The two factors `1 - ϑZe^{φ_D}` and `1 - ϑZe^{φ_A}` at `λ`.
fn nu_factors(fields: &FieldSet, thermo: &ThermoState, lam: C64) -> Result<(C64, C64)> {
    let theta = thermo.theta_at(lam);
    let a = fields.det_g(theta, lam, Block::G11)?;
    let b = fields.det_g(theta, lam, Block::G22)?;
    if a.norm() < 1e-14 || b.norm() < 1e-14 || !a.re.is_finite() || !b.re.is_finite() {
        return Err(QnlsError::Singular(format!(
            "Λ = {lam} sits on a root of 1 - ϑZe^{{φ}}; ν is undefined there"
        )));
    }
    Ok((a, b))
}

/// `ν(Λ) = -(1/2πi)ln[(1 - ϑZe^{φ_D})(1 - ϑZe^{φ_A})]` with the principal
/// logarithm of each factor.
pub fn nu_at(fields: &FieldSet, thermo: &ThermoState, lam: C64) -> Result<C64> {
    let (a, b) = nu_factors(fields, thermo, lam)?;
    Ok(nu_from_factors(a, b))
}

/// `ν` along a path, continued from the principal branch at the first point
/// by following the argument of each factor.
pub fn nu_along(fields: &FieldSet, thermo: &ThermoState, path: &[C64]) -> Result<Vec<C64>> {
    let mut out = Vec::with_capacity(path.len());
    let mut prev: Option<(C64, C64)> = None;
    for lam in path {
        let (a, b) = nu_factors(fields, thermo, *lam)?;
        let (mut la, mut lb) = (a.ln(), b.ln());
        if let Some((pa, pb)) = prev {
            la += I * (2.0 * PI * ((pa.im - la.im) / (2.0 * PI)).round());
            lb += I * (2.0 * PI * ((pb.im - lb.im) / (2.0 * PI)).round());
        }
        prev = Some((la, lb));
        out.push(-(la + lb) / (2.0 * PI * I));
    }
    Ok(out)
}

/// `ν`, `ν′` and `ν″` at `λ` from the jets of `ϑ` and `φ`.
pub fn nu_jet(fields: &FieldSet, thermo: &ThermoState, lam: C64) -> Result<(C64, C64, C64)> {
    fields.check_strip(lam)?;
    let (th, th1, th2) = thermo.theta_jet(lam);
    let phi = fields.phi(lam)?;
    let p1 = fields.phi_a.derivative(lam, 1) - fields.phi_d.derivative(lam, 1);
    let p2 = fields.phi_a.derivative(lam, 2) - fields.phi_d.derivative(lam, 2);
    let mut logs = [C64::new(0.0, 0.0); 3];
    for s in [-1.0, 1.0] {
        // g = 1 - ϑ(1 + e^{sφ})
        let e = (s * phi).exp();
        let e1 = s * p1 * e;
        let e2 = (p1 * p1 + s * p2) * e;
        let g = 1.0 - th * (1.0 + e);
        if g.norm() < 1e-14 {
            return Err(QnlsError::Singular(format!("λ = {lam} sits on a root of 1 - ϑ(1 + e^{{±φ}})")));
        }
        let g1 = -th1 * (1.0 + e) - th * e1;
        let g2 = -th2 * (1.0 + e) - 2.0 * th1 * e1 - th * e2;
        let l1 = g1 / g;
        logs[0] += g.ln();
        logs[1] += l1;
        logs[2] += g2 / g - l1 * l1;
    }
    let f = -1.0 / (2.0 * PI * I);
    Ok((logs[0] * f, logs[1] * f, logs[2] * f))
}

/// How the leading logarithm of the determinant is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeadingMode {
    /// Weight `|x - 2μt|` and split at `λ₀`.
    Plain,
    /// Weight `(x - 2μt + iψ′(μ))sign(Λ - μ)`, split at `Λ`, plus `-(ν²/2)ln 2t`.
    Shifted,
}

impl std::str::FromStr for LeadingMode {
    type Err = QnlsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(LeadingMode::Plain),
            "shifted" => Ok(LeadingMode::Shifted),
            other => Err(QnlsError::Config(format!("unknown mode '{other}' (expected plain or shifted)"))),
        }
    }
}

/// Leading terms of `ln det(I + V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadingLogDet {
    pub mode: LeadingMode,
    pub split: C64,
    /// The `t`-extensive integral.
    pub integral: C64,
    /// The part of `integral` carried by `iψ′`.
    pub psi_part: C64,
    /// `-ν²/2` in shifted mode, `0` in plain mode.
    pub power_exponent: C64,
    pub log_scale: f64,
    /// `integral + power_exponent·log_scale`.
    pub value: C64,
}

/// `(1/2π)∫ (x - 2μt + iψ′(μ)) L(μ) dμ` on the discretized contour of `rhp`,
/// where `L` is the signed logarithm of the jump. Returns the full integral and
/// its `iψ′` part.
fn contour_integral(fields: &FieldSet, rhp: &DeltaRhp, x: f64, t: f64, with_psi: bool) -> Result<(C64, C64)> {
    let mut total = C64::new(0.0, 0.0);
    let mut psi_part = C64::new(0.0, 0.0);
    for ((mu, w), l) in rhp.nodes.nodes.iter().zip(&rhp.nodes.weights).zip(&rhp.log_jump) {
        let wl = w * l;
        total += (x - 2.0 * t * mu) * wl;
        if with_psi {
            let p = I * fields.psi_derivative(*mu, 1)? * wl;
            total += p;
            psi_part += p;
        }
    }
    let f = 1.0 / (2.0 * PI);
    Ok((total * f, psi_part * f))
}

fn require_negative_h(thermo: &ThermoState) -> Result<()> {
    if !(thermo.params.h < 0.0) {
        return Err(QnlsError::Assumption(format!(
            "this evaluation requires h < 0, got h = {}",
            thermo.params.h
        )));
    }
    Ok(())
}

fn real_line_rhp(fields: &FieldSet, thermo: &ThermoState, split: C64) -> Result<DeltaRhp> {
    let l = thermo.half_width();
    DeltaRhp::new(fields, thermo, Contour::real_line(-l, l, split)?)
}

/// Leading asymptotics of `ln det(I + V)` for `h < 0`.
pub fn logdet_leading(
    fields: &FieldSet,
    thermo: &ThermoState,
    x: f64,
    t: f64,
    mode: LeadingMode,
) -> Result<LeadingLogDet> {
    check_time(t)?;
    require_negative_h(thermo)?;
    find_capital_lambdas(fields, thermo, None)?;
    let log_scale = (2.0 * t).ln();
    match mode {
        LeadingMode::Plain => {
            let split = C64::from(x / (2.0 * t));
            let rhp = real_line_rhp(fields, thermo, split)?;
            let (integral, _) = contour_integral(fields, &rhp, x, t, false)?;
            Ok(LeadingLogDet {
                mode,
                split,
                integral,
                psi_part: C64::new(0.0, 0.0),
                power_exponent: C64::new(0.0, 0.0),
                log_scale,
                value: integral,
            })
        }
        LeadingMode::Shifted => {
            let sd = shifted_saddle(fields, thermo, x, t)?;
            let rhp = real_line_rhp(fields, thermo, sd.lambda)?;
            let (integral, psi_part) = contour_integral(fields, &rhp, x, t, true)?;
            let power_exponent = -0.5 * sd.nu * sd.nu;
            Ok(LeadingLogDet {
                mode,
                split: sd.lambda,
                integral,
                psi_part,
                power_exponent,
                log_scale,
                value: integral + power_exponent * log_scale,
            })
        }
    }
}

/// `(1/2π)∫ iψ′(μ) L(μ) dμ` with the split at `λ₀`: the amount by which the
/// shifted integral differs from the plain one at leading order.
pub fn psi_term_at_lambda0(fields: &FieldSet, thermo: &ThermoState, x: f64, t: f64) -> Result<C64> {
    check_time(t)?;
    require_negative_h(thermo)?;
    let rhp = real_line_rhp(fields, thermo, C64::from(x / (2.0 * t)))?;
    let (total, psi) = contour_integral(fields, &rhp, 0.0, 0.0, true)?;
    debug_assert!((total - psi).norm() <= 1e-12 * (1.0 + psi.norm()));
    Ok(psi)
}

/// Finite-difference `λ₀`-derivative of the plain integral at fixed `t`
/// against `2t·iΔ₀(λ₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub lambda0: f64,
    pub t: f64,
    pub finite_difference: C64,
    pub predicted: C64,
    pub rel_err: f64,
}

/// Five-point difference of the plain leading integral with step `h`.
pub fn derivative_consistency(
    fields: &FieldSet,
    thermo: &ThermoState,
    lambda0: f64,
    t: f64,
    h: f64,
) -> Result<DerivativeCheck> {
    if !(h > 0.0) {
        return Err(QnlsError::Config(format!("difference step {h} must be positive")));
    }
    let f = |l0: f64| -> Result<C64> {
        Ok(logdet_leading(fields, thermo, 2.0 * t * l0, t, LeadingMode::Plain)?.integral)
    };
    let (p1, m1) = (f(lambda0 + h)?, f(lambda0 - h)?);
    let (p2, m2) = (f(lambda0 + 2.0 * h)?, f(lambda0 - 2.0 * h)?);
    let finite_difference = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
    let delta0 = real_line_rhp(fields, thermo, C64::from(lambda0))?.coeffs().delta0;
    let predicted = 2.0 * t * I * delta0;
    Ok(DerivativeCheck {
        lambda0,
        t,
        finite_difference,
        predicted,
        rel_err: (finite_difference - predicted).norm() / predicted.norm(),
    })
}

/// Sign regime of the chemical potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NegativeH,
    PositiveH,
}

/// Order of the neglected corrections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Remainder {
    /// `O(ln²t/t)`.
    LogSquaredOverT,
    /// `O(t^{-1/2})`.
    InverseSqrtT,
}

/// The pieces of the exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseDetail {
    /// `ψ` at the oscillation point (`Λ` or `Λ₁`).
    pub psi: C64,
    /// `itp²` at the oscillation point `p`.
    pub tau_quadratic: C64,
    /// `-ixp`.
    pub tau_linear: C64,
    /// The contour integral.
    pub integral: C64,
}

/// Assembled asymptotic law `C·(2t)^{power}·e^{exp}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticResult {
    pub regime: Regime,
    pub x: f64,
    pub t: f64,
    pub saddle: SaddleData,
    /// Real roots `(Λ₁, Λ₂)` for `h > 0`.
    pub roots: Option<(f64, f64)>,
    pub exp_exponent: C64,
    pub power_exponent: C64,
    /// `ln 2t`.
    pub log_scale: f64,
    /// The constant prefactor is not evaluated.
    pub constant_undetermined: bool,
    pub remainder: Remainder,
    pub phase_detail: PhaseDetail,
    /// `Λ₂₁p⁽¹⁾(Λ₁)e^{τ(Λ₁)}` for `h > 0`.
    pub scalar_prefactor: Option<C64>,
}

impl AsymptoticResult {
    /// `exp_exponent + power_exponent·ln 2t`, the logarithm without the constant.
    pub fn log_value(&self) -> C64 {
        self.exp_exponent + self.power_exponent * self.log_scale
    }
}

fn tau(x: f64, t: f64, p: C64) -> (C64, C64) {
    (I * t * p * p, -I * x * p)
}

/// Asymptotic law for `h < 0`.
pub fn assemble_b_neg(fields: &FieldSet, thermo: &ThermoState, x: f64, t: f64) -> Result<AsymptoticResult> {
    let lead = logdet_leading(fields, thermo, x, t, LeadingMode::Shifted)?;
    let saddle = shifted_saddle(fields, thermo, x, t)?;
    let lam = saddle.lambda;
    let psi = fields.psi(lam)?;
    let (tq, tl) = tau(x, t, lam);
    let one = C64::new(1.0, 0.0);
    Ok(AsymptoticResult {
        regime: Regime::NegativeH,
        x,
        t,
        saddle,
        roots: None,
        exp_exponent: psi + tq + tl + lead.integral,
        power_exponent: -0.5 * (saddle.nu + one) * (saddle.nu + one),
        log_scale: lead.log_scale,
        constant_undetermined: true,
        remainder: Remainder::LogSquaredOverT,
        phase_detail: PhaseDetail {
            psi,
            tau_quadratic: tq,
            tau_linear: tl,
            integral: lead.integral,
        },
        scalar_prefactor: None,
    })
}

/// `p⁽¹⁾(Λ₁)`, the removable-singularity value of
/// `2πiZ(ϑ-1)e^{ψ}/(1 - Zϑe^{φ_D})·(λ-Λ₁)/(λ-Λ₂)` at `λ = Λ₁`.
pub fn p1_at_root(fields: &FieldSet, thermo: &ThermoState, roots: (f64, f64)) -> Result<C64> {
    let (l1, l2) = roots;
    let z = C64::from(l1);
    let (th, th1, _) = thermo.theta_jet(z);
    let phi = fields.phi(z)?;
    let p1 = fields.phi_a.derivative(z, 1) - fields.phi_d.derivative(z, 1);
    let e = (-phi).exp();
    let g1 = -th1 * (1.0 + e) + th * p1 * e;
    if g1.norm() < 1e-14 {
        return Err(QnlsError::Singular(format!("Λ₁ = {l1} is a multiple root of det G11")));
    }
    let zd = fields.z_diag(z)?;
    Ok(2.0 * PI * I * zd * (th - 1.0) * fields.psi(z)?.exp() / (g1 * (l1 - l2)))
}

/// Asymptotic law for `h > 0` on the default contour Γ.
pub fn assemble_b_pos(fields: &FieldSet, thermo: &ThermoState, x: f64, t: f64) -> Result<AsymptoticResult> {
    assemble_b_pos_with(fields, thermo, x, t, None)
}

/// Asymptotic law for `h > 0`; `radius` overrides the detour radius of Γ.
pub fn assemble_b_pos_with(
    fields: &FieldSet,
    thermo: &ThermoState,
    x: f64,
    t: f64,
    radius: Option<f64>,
) -> Result<AsymptoticResult> {
    check_time(t)?;
    if !(thermo.params.h > 0.0) {
        return Err(QnlsError::Assumption(format!(
            "the h > 0 law requires h > 0, got h = {}",
            thermo.params.h
        )));
    }
    let saddle = shifted_saddle(fields, thermo, x, t)?;
    let lam = saddle.lambda;
    let roots = find_capital_lambdas(fields, thermo, Some(lam.re))?
        .ok_or_else(|| QnlsError::Assumption("no real roots Λ₁ < Λ₂ for h > 0".into()))?;
    let mut contour = Contour::for_config(fields, thermo, lam)?;
    if let Some(r) = radius {
        contour = contour.with_radius(r)?;
    }
    let rhp = DeltaRhp::new(fields, thermo, contour)?;
    let (integral, _) = contour_integral(fields, &rhp, x, t, true)?;
    let l1 = C64::from(roots.0);
    let psi = fields.psi(l1)?;
    let (tq, tl) = tau(x, t, l1);
    let prefactor = (roots.1 - roots.0) * p1_at_root(fields, thermo, roots)? * (tq + tl).exp();
    Ok(AsymptoticResult {
        regime: Regime::PositiveH,
        x,
        t,
        saddle,
        roots: Some(roots),
        exp_exponent: psi + tq + tl + integral,
        power_exponent: -0.5 * saddle.nu * saddle.nu,
        log_scale: (2.0 * t).ln(),
        constant_undetermined: true,
        remainder: Remainder::InverseSqrtT,
        phase_detail: PhaseDetail {
            psi,
            tau_quadratic: tq,
            tau_linear: tl,
            integral,
        },
        scalar_prefactor: Some(prefactor),
    })
}

/// Dispatches on the sign of `h`.
pub fn assemble(fields: &FieldSet, thermo: &ThermoState, x: f64, t: f64) -> Result<AsymptoticResult> {
    if thermo.params.h < 0.0 {
        assemble_b_neg(fields, thermo, x, t)
    } else {
        assemble_b_pos(fields, thermo, x, t)
    }
}

/// Large-`t` expansion of `tr b̂′₁₁` without the unknown `tr Ĉ₀/t` term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct B11Trace {
    pub nu: C64,
    pub nu_prime: C64,
    /// `-ν`.
    pub leading: C64,
    /// `(i/2t)(ν′ν)′(ln 2t + 1)`.
    pub log_term: C64,
    /// `-(i/2t)(νψ′(λ₀))′`.
    pub psi_term: C64,
    pub value: C64,
    /// `tr Ĉ₀/t` is omitted.
    pub c0_undetermined: bool,
}

/// `tr b̂′₁₁ = -ν + (i/2t)(ν′ν)′(ln 2t + 1) - (i/2t)(νψ′(λ₀))′` at `λ₀ = x/2t`.
pub fn b11_trace_expansion(fields: &FieldSet, thermo: &ThermoState, x: f64, t: f64) -> Result<B11Trace> {
    check_time(t)?;
    require_negative_h(thermo)?;
    let l0 = C64::from(x / (2.0 * t));
    let (nu, nu1, nu2) = nu_jet(fields, thermo, l0)?;
    let psi1 = fields.psi_derivative(l0, 1)?;
    let psi2 = fields.psi_derivative(l0, 2)?;
    let k = I / (2.0 * t);
    let log_term = k * (nu2 * nu + nu1 * nu1) * ((2.0 * t).ln() + 1.0);
    let psi_term = -k * (nu1 * psi1 + nu * psi2);
    Ok(B11Trace {
        nu,
        nu_prime: nu1,
        leading: -nu,
        log_term,
        psi_term,
        value: -nu + log_term + psi_term,
        c0_undetermined: true,
    })
}

/// Variables in which the NLS residual is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NlsFrame {
    /// `λ₀` and `t`.
    Plain,
    /// `Λ` and `t_s`, with the factors `e^{±ψ(Λ)}` removed from the amplitudes.
    Shifted,
}

/// Difference steps of the NLS stencil.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlsSteps {
    pub d_lambda: f64,
    pub d_t: f64,
}

impl NlsSteps {
    pub fn for_time(t: f64) -> NlsSteps {
        NlsSteps {
            d_lambda: 1e-2,
            d_t: 1e-2 * t,
        }
    }
}

/// Residual of the scalar-reduced NLS system for the leading amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlsResidual {
    pub frame: NlsFrame,
    pub split: C64,
    pub time: C64,
    pub nu: C64,
    pub zeta: C64,
    pub eta: C64,
    /// `|ζηζ - iνζ|/|νζ|`.
    pub balance_residual: f64,
    /// `|∂_t ζ|/|ζ|` from the time stencil.
    pub time_derivative: f64,
    /// Residual of the `ζ` equation relative to `|4νζ/t|`.
    pub zeta_residual: f64,
    /// Residual of the `η` equation relative to `|4νη/t|`.
    pub eta_residual: f64,
    pub relative: f64,
}

/// `ζ = κ₁₂⁺(2t)^{ν+1/2}e^{itλ²}` and `η = κ₂₁⁺(2t)^{1/2-ν}e^{-itλ²}` from the
/// localized construction at the split point.
pub fn nls_amplitudes(fields: &FieldSet, thermo: &ThermoState, split: C64, t: f64) -> Result<(C64, C64, C64)> {
    let m = model_scalars(fields, thermo, split, 2.0 * t * split.re, t)?;
    let k = kappas(&m, t)?;
    let ln2t = (2.0 * t).ln();
    let ph = I * t * split * split;
    let zeta = k.k12_plus * ((m.nu + 0.5) * ln2t + ph).exp();
    let eta = k.k21_plus * ((0.5 - m.nu) * ln2t - ph).exp();
    Ok((zeta, eta, m.nu))
}

fn stencil<F: Fn(C64) -> Result<C64>>(f: F, z: C64, h: f64) -> Result<[C64; 5]> {
    Ok([
        f(z - 2.0 * h)?,
        f(z - h)?,
        f(z)?,
        f(z + h)?,
        f(z + 2.0 * h)?,
    ])
}

fn derivatives(v: &[C64; 5], h: f64) -> (C64, C64, C64) {
    let d1 = (8.0 * (v[3] - v[1]) - (v[4] - v[0])) / (12.0 * h);
    let d2 = (-v[4] + 16.0 * v[3] - 30.0 * v[2] + 16.0 * v[1] - v[0]) / (12.0 * h * h);
    let d2_coarse = (v[4] - 2.0 * v[2] + v[0]) / (4.0 * h * h);
    (d1, d2, d2_coarse)
}

/// Residual at an explicit split point and (possibly complex) time.
pub fn nls_residual_at(
    fields: &FieldSet,
    thermo: &ThermoState,
    split: C64,
    time: C64,
    steps: NlsSteps,
    frame: NlsFrame,
) -> Result<NlsResidual> {
    if !(steps.d_lambda > 0.0) || !(steps.d_t > 0.0) {
        return Err(QnlsError::Config(format!("stencil steps {steps:?} must be positive")));
    }
    let t = time.re;
    check_time(t)?;
    if steps.d_lambda > 0.1 || steps.d_t > 0.1 * t {
        return Err(QnlsError::Resolution(format!(
            "stencil {steps:?} too coarse: need d_lambda <= 0.1 and d_t <= 0.1·t"
        )));
    }
    let strip = frame == NlsFrame::Shifted;
    let amp = |s: C64, tt: f64| -> Result<(C64, C64)> {
        let (z, e, _) = nls_amplitudes(fields, thermo, s, tt)?;
        if strip {
            let p = fields.psi(s)?;
            Ok((z * (-p).exp(), e * p.exp()))
        } else {
            Ok((z, e))
        }
    };
    let h = steps.d_lambda;
    let zs = stencil(|s| amp(s, t).map(|v| v.0), split, h)?;
    let es = stencil(|s| amp(s, t).map(|v| v.1), split, h)?;
    let (zeta, eta) = (zs[2], es[2]);
    let (z1, z2, z2c) = derivatives(&zs, h);
    let (e1, e2, e2c) = derivatives(&es, h);
    let (zp, ep) = amp(split, t + steps.d_t)?;
    let (zm, em) = amp(split, t - steps.d_t)?;
    let zt = (zp - zm) / (2.0 * steps.d_t);
    let et = (ep - em) / (2.0 * steps.d_t);
    let (nu, nu1, nu2) = nu_jet(fields, thermo, split)?;
    if nu.norm() < 1e-14 {
        return Err(QnlsError::Singular("ν vanishes: the NLS balance has no reference scale".into()));
    }
    let l = (2.0 * time).ln();
    let scale_z = (nu1 * nu1 * l * l * zeta).norm() + (nu1 * z1 * l).norm() + z2.norm();
    let scale_e = (nu1 * nu1 * l * l * eta).norm() + (nu1 * e1 * l).norm() + e2.norm();
    if (z2 - z2c).norm() > 1e-2 * scale_z.max(1e-300) || (e2 - e2c).norm() > 1e-2 * scale_e.max(1e-300) {
        return Err(QnlsError::Resolution(format!(
            "second differences with step {h} disagree with the coarser stencil; reduce d_lambda"
        )));
    }
    let balance = zeta * eta * zeta - I * nu * zeta;
    let lhs_z = -4.0 * I * zt - 4.0 / time * balance;
    let rhs_z = -1.0 / (time * time) * ((nu1 * nu1 * l * l - nu2 * l) * zeta - 2.0 * nu1 * z1 * l + z2);
    let lhs_e = 4.0 * I * et - 4.0 / time * (eta * zeta * eta - I * nu * eta);
    let rhs_e = -1.0 / (time * time) * ((nu1 * nu1 * l * l + nu2 * l) * eta + 2.0 * nu1 * e1 * l + e2);
    let zeta_residual = (lhs_z - rhs_z).norm() / (4.0 * nu * zeta / time).norm();
    let eta_residual = (lhs_e - rhs_e).norm() / (4.0 * nu * eta / time).norm();
    Ok(NlsResidual {
        frame,
        split,
        time,
        nu,
        zeta,
        eta,
        balance_residual: balance.norm() / (nu * zeta).norm(),
        time_derivative: zt.norm() / zeta.norm(),
        zeta_residual,
        eta_residual,
        relative: zeta_residual.max(eta_residual),
    })
}

/// Residual of the scalar-reduced NLS system at `λ₀` and `t` in the chosen frame.
pub fn nls_residual_diag(
    fields: &FieldSet,
    thermo: &ThermoState,
    lambda0: f64,
    t: f64,
    steps: NlsSteps,
    frame: NlsFrame,
) -> Result<NlsResidual> {
    check_time(t)?;
    require_negative_h(thermo)?;
    match frame {
        NlsFrame::Plain => nls_residual_at(fields, thermo, C64::from(lambda0), C64::from(t), steps, frame),
        NlsFrame::Shifted => {
            let sd = shifted_saddle(fields, thermo, 2.0 * t * lambda0, t)?;
            nls_residual_at(fields, thermo, sd.lambda, sd.t_s, steps, frame)
        }
    }
}

/// Free-fermion values obtained without any field machinery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplifiedFreeFermion {
    pub lambda: f64,
    pub nu: C64,
    pub exp_exponent: C64,
    pub power_exponent: C64,
    /// `Λ₁ = -q` for `h > 0`.
    pub lambda1: Option<f64>,
}

/// General pipeline with zero fields next to the simplified formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeFermionReport {
    pub general: AsymptoticResult,
    pub simplified: SimplifiedFreeFermion,
    /// Largest relative deviation over `Λ`, `ν`, the exponent and the power.
    pub max_deviation: f64,
}

const FF_ORDER: usize = 24;
const FF_GRADING: usize = 40;

/// Gauss-Legendre nodes on `[a, b]`, geometrically graded towards the ends
/// listed in `singular`.
fn graded_rule(a: f64, b: f64, singular_a: bool, singular_b: bool, h: f64) -> Vec<(f64, f64)> {
    let mut edges = vec![a];
    let len = b - a;
    let n = (len / h).ceil().max(1.0) as usize;
    let mut inner: Vec<f64> = (1..n).map(|k| a + len * k as f64 / n as f64).collect();
    if singular_a {
        let first = inner.first().copied().unwrap_or(b);
        let mut g: Vec<f64> = (1..=FF_GRADING).rev().map(|k| a + (first - a) * 0.5f64.powi(k as i32)).collect();
        edges.append(&mut g);
    }
    edges.append(&mut inner);
    if singular_b {
        let last = *edges.last().unwrap();
        let mut g: Vec<f64> = (1..=FF_GRADING).map(|k| b - (b - last) * 0.5f64.powi(k as i32)).collect();
        edges.append(&mut g);
    }
    edges.push(b);
    let (x, w) = gauss_legendre(FF_ORDER);
    let mut out = Vec::new();
    for p in edges.windows(2) {
        let (c, r) = (0.5 * (p[0] + p[1]), 0.5 * (p[1] - p[0]));
        for (xi, wi) in x.iter().zip(&w) {
            out.push((c + r * xi, r * wi));
        }
    }
    out
}

/// Simplified free-fermion law: `Λ = λ₀`, `ν = (i/π)ln(1 - 2ϑ(λ₀))` and the
/// real-line integral of `|x - 2λt|ln|1 - 2ϑ(λ)|`.
pub fn free_fermion_simplified(thermo: &ThermoState, x: f64, t: f64) -> Result<SimplifiedFreeFermion> {
    check_time(t)?;
    let l0 = x / (2.0 * t);
    let t0 = 1.0 - 2.0 * thermo.theta_real(l0);
    if !(t0 > 0.0) {
        return Err(QnlsError::Assumption(format!("1 - 2ϑ(λ₀) = {t0} is not positive")));
    }
    let nu = I / PI * t0.ln();
    let l = thermo.half_width();
    let h = 0.25 * thermo.params.temperature.min(1.0);
    let mut breaks = vec![(-l, false), (l, false)];
    let mut lambda1 = None;
    let mut quad = C64::new(0.0, 0.0);
    if thermo.params.h > 0.0 {
        let q = epsilon_roots(thermo)?[1];
        if !(q < l0) {
            return Err(QnlsError::Assumption(format!("λ₀ = {l0} must exceed the Fermi point q = {q}")));
        }
        breaks.push((-q, true));
        breaks.push((q, true));
        lambda1 = Some(-q);
        quad += I * t * q * q;
    } else {
        quad += -I * t * l0 * l0;
    }
    if l0.abs() < l {
        breaks.push((l0, false));
    }
    breaks.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut integral = 0.0;
    for p in breaks.windows(2) {
        for (lam, w) in graded_rule(p[0].0, p[1].0, p[0].1, p[1].1, h) {
            let g = (1.0 - 2.0 * thermo.theta_real(lam)).abs();
            integral += w * (x - 2.0 * lam * t).abs() * g.ln();
        }
    }
    let one = C64::new(1.0, 0.0);
    let power_exponent = if thermo.params.h > 0.0 {
        -0.5 * nu * nu
    } else {
        -0.5 * (nu + one) * (nu + one)
    };
    Ok(SimplifiedFreeFermion {
        lambda: l0,
        nu,
        exp_exponent: quad + integral / (2.0 * PI),
        power_exponent,
        lambda1,
    })
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1.0)
}

/// Evaluates the general law with zero fields and compares it with the
/// simplified formulas.
pub fn free_fermion_reduce(thermo: &ThermoState, x: f64, t: f64) -> Result<FreeFermionReport> {
    let fields = FieldSet::zero(thermo.params.c);
    let general = assemble(&fields, thermo, x, t)?;
    let simplified = free_fermion_simplified(thermo, x, t)?;
    let mut dev = [
        rel(general.saddle.lambda, C64::from(simplified.lambda)),
        rel(general.saddle.nu, simplified.nu),
        rel(general.exp_exponent, simplified.exp_exponent),
        rel(general.power_exponent, simplified.power_exponent),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if let (Some(r), Some(l1)) = (general.roots, simplified.lambda1) {
        dev = dev.max(rel(C64::from(r.0), C64::from(l1)));
    }
    Ok(FreeFermionReport {
        general,
        simplified,
        max_deviation: dev,
    })
}

/// Least-squares fit `y ≈ a + b·t + p·ln t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearLogFit {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub rms: f64,
}

/// Fits `a + b·t + p·ln t` to the samples.
pub fn fit_linear_log(ts: &[f64], ys: &[f64]) -> Result<LinearLogFit> {
    if ts.len() != ys.len() || ts.len() < 3 {
        return Err(QnlsError::Config(format!(
            "need at least three (t, y) pairs of equal length, got {} and {}",
            ts.len(),
            ys.len()
        )));
    }
    if ts.iter().any(|t| !(*t > 0.0)) {
        return Err(QnlsError::Config("fit times must be positive".into()));
    }
    let a = DMatrix::from_fn(ts.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => ts[i],
        _ => ts[i].ln(),
    });
    let y = DVector::from_column_slice(ys);
    let coef = a
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| QnlsError::Numerical(format!("least-squares fit failed: {e}")))?;
    let r = &a * &coef - &y;
    Ok(LinearLogFit {
        a: coef[0],
        b: coef[1],
        p: coef[2],
        rms: (r.norm_squared() / ts.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{FieldModel, FieldSetSpec};
    use crate::thermo::ThermoParams;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn thermo(cc: f64, h: f64, temp: f64) -> ThermoState {
        ThermoState::solve(ThermoParams::new(cc, h, temp).unwrap()).unwrap()
    }

    fn fields_with(cc: f64, psi: FieldModel, phase: bool) -> FieldSet {
        let (pa, pd) = if phase {
            (
                FieldModel::AffineLog { a: c(0.0, 0.0), b: c(0.0, 0.3) },
                FieldModel::AffineLog { a: c(0.0, 0.0), b: c(0.0, -0.2) },
            )
        } else {
            (FieldModel::Zero, FieldModel::Zero)
        };
        FieldSet::new(&FieldSetSpec { psi, phi_a: pa, phi_d: pd }, cc).unwrap()
    }

    fn affine(a: f64) -> FieldModel {
        FieldModel::AffineLog { a: c(a, 0.0), b: c(0.0, 0.0) }
    }

    fn quadratic(a: f64) -> FieldModel {
        FieldModel::PolyLog { coeffs: vec![c(0.0, 0.0), c(0.0, 0.0), c(0.5 * a, 0.0)] }
    }

    #[test]
    fn zero_psi_keeps_the_saddle() {
        let th = thermo(2.0, -0.5, 1.0);
        let f = FieldSet::zero(2.0);
        let sd = shifted_saddle(&f, &th, 4.0, 5.0).unwrap();
        assert_eq!(sd.lambda, c(0.4, 0.0));
        assert_eq!(sd.t_s, c(5.0, 0.0));
    }

    #[test]
    fn affine_psi_shifts_the_saddle_vertically() {
        let f = fields_with(4.0, affine(1.0), false);
        let (lam, res, _) = solve_saddle(&f, 1.0, 10.0).unwrap();
        assert!((lam - c(1.0, 0.05)).norm() < 1e-15);
        assert!(res <= SADDLE_TOL);
    }

    #[test]
    fn quadratic_psi_matches_the_closed_form() {
        let a = 0.7;
        let f = fields_with(4.0, quadratic(a), false);
        for t in [2.0, 10.0, 40.0] {
            let (lam, res, _) = solve_saddle(&f, 0.8, t).unwrap();
            let exact = 0.8 / (1.0 - I * a / (2.0 * t));
            assert!((lam - exact).norm() < 1e-12, "t = {t}");
            assert!(res <= SADDLE_TOL);
        }
    }

    #[test]
    fn lagrange_series_error_is_fourth_order() {
        let psi = FieldModel::Rational {
            num: vec![c(0.0, -3.0), c(1.0, 0.0)],
            den: vec![c(0.0, 3.0), c(1.0, 0.0)],
        };
        let f = fields_with(8.0, psi, false);
        let err = |t: f64| {
            let (lam, _, _) = solve_saddle(&f, 0.5, t).unwrap();
            (lam - lagrange_series(&f, 0.5, t, 3).unwrap()).norm()
        };
        let ratio = err(10.0) / err(20.0);
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn saddle_fails_for_a_runaway_psi() {
        let f = fields_with(2.0, affine(50.0), false);
        let e = solve_saddle(&f, 0.0, 1.0).unwrap_err();
        assert!(matches!(e, QnlsError::Domain(_) | QnlsError::NonConvergence { .. }));
    }

    #[test]
    fn nu_of_zero_fields() {
        let th = thermo(2.0, -0.5, 1.0);
        let f = FieldSet::zero(2.0);
        let z = c(0.3, 0.02);
        let expect = -(1.0 - 2.0 * th.theta_at(z)).ln() / (PI * I);
        assert!((nu_at(&f, &th, z).unwrap() - expect).norm() < 1e-14);
        assert_eq!(nu_at(&f, &th.scaled(0.0), z).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn nu_jet_matches_differences() {
        let th = thermo(3.0, -0.3, 1.0);
        let f = fields_with(3.0, affine(0.4), true);
        let z = c(0.6, 0.0);
        let (nu, d1, d2) = nu_jet(&f, &th, z).unwrap();
        let h = 1e-3;
        let p = nu_at(&f, &th, z + h).unwrap();
        let m = nu_at(&f, &th, z - h).unwrap();
        assert!((nu - nu_at(&f, &th, z).unwrap()).norm() < 1e-14);
        assert!((d1 - (p - m) / (2.0 * h)).norm() < 1e-6);
        assert!((d2 - (p - 2.0 * nu + m) / (h * h)).norm() < 1e-5);
    }

    #[test]
    fn nu_is_continuous_along_a_sweep_through_the_fermi_points() {
        let th = thermo(50.0, 0.5, 0.3);
        let f = FieldSet::zero(50.0);
        let path: Vec<C64> = (0..=400).map(|k| c(-2.0 + 4.0 * k as f64 / 400.0, 0.05)).collect();
        let along = nu_along(&f, &th, &path).unwrap();
        let step = along.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max);
        assert!(step < 0.1, "largest step {step}");
        for (z, v) in path.iter().zip(&along) {
            let d = nu_at(&f, &th, *z).unwrap() - v;
            assert!(d.im.abs() < 1e-12 && (d.re - d.re.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_occupation_gives_zero_leading_terms() {
        let th = thermo(2.0, -0.5, 1.0).scaled(0.0);
        let f = fields_with(2.0, affine(0.3), true);
        for mode in [LeadingMode::Plain, LeadingMode::Shifted] {
            let r = logdet_leading(&f, &th, 2.0, 4.0, mode).unwrap();
            assert_eq!(r.value, c(0.0, 0.0));
        }
    }

    #[test]
    fn plain_leading_term_derivative_is_delta0() {
        let th = thermo(3.0, -0.4, 1.0);
        let f = fields_with(3.0, FieldModel::Zero, true);
        let d = derivative_consistency(&f, &th, 0.4, 10.0, 1e-2).unwrap();
        assert!(d.rel_err < 1e-6, "{d:?}");
    }

    #[test]
    fn shifted_and_plain_integrals_merge_like_one_over_t() {
        let th = thermo(3.0, -0.4, 1.0);
        let f = fields_with(3.0, quadratic(0.6), true);
        let gap = |t: f64| {
            let x = 2.0 * t * 0.3;
            let s = logdet_leading(&f, &th, x, t, LeadingMode::Shifted).unwrap();
            let p = logdet_leading(&f, &th, x, t, LeadingMode::Plain).unwrap();
            (s.integral - p.integral - psi_term_at_lambda0(&f, &th, x, t).unwrap()).norm()
        };
        let (g1, g2) = (gap(10.0), gap(20.0));
        assert!(g1 > 0.0 && (g1 / g2 - 2.0).abs() < 0.2, "{g1} {g2}");
    }

    #[test]
    fn free_fermion_law_has_the_expected_structure() {
        let th = thermo(50.0, -0.5, 1.0);
        let r = free_fermion_reduce(&th, 20.0, 10.0).unwrap();
        assert_eq!(r.general.saddle.lambda, c(1.0, 0.0));
        assert!(r.max_deviation < 1e-14, "{}", r.max_deviation);
        let nu = r.general.saddle.nu;
        assert!((r.general.power_exponent + 0.5 * (nu + 1.0) * (nu + 1.0)).norm() < 1e-15);
    }

    #[test]
    fn positive_h_free_fermion_reduction() {
        let th = thermo(50.0, 0.5, 0.3);
        let r = free_fermion_reduce(&th, 30.0, 10.0).unwrap();
        assert!(r.max_deviation < 1e-14, "{}", r.max_deviation);
        let q = epsilon_roots(&th).unwrap()[1];
        assert!((r.general.roots.unwrap().0 + q).abs() < 1e-12);
    }

    #[test]
    fn constant_psi_shift_multiplies_the_law() {
        let th = thermo(3.0, -0.4, 1.0);
        let f = fields_with(3.0, affine(0.5), true);
        let g = fields_with(3.0, FieldModel::AffineLog { a: c(0.5, 0.0), b: c(0.7, 0.0) }, true);
        let a = assemble_b_neg(&f, &th, 6.0, 10.0).unwrap();
        let b = assemble_b_neg(&g, &th, 6.0, 10.0).unwrap();
        assert!((b.exp_exponent - a.exp_exponent - 0.7).norm() < 1e-12);
        assert_eq!(a.power_exponent, b.power_exponent);
    }

    #[test]
    fn exponent_grows_linearly_in_t() {
        let th = thermo(3.0, -0.4, 1.0);
        let f = fields_with(3.0, affine(0.5), true);
        let e = |t: f64| assemble_b_neg(&f, &th, 2.0 * t * 0.5, t).unwrap().exp_exponent;
        let s1 = (e(30.0) - e(20.0)) / 10.0;
        let s2 = (e(40.0) - e(30.0)) / 10.0;
        assert!((s1 - s2).norm() < 0.01 * s2.norm());
    }

    #[test]
    fn positive_h_law_is_radius_independent_and_oscillates_with_lambda1() {
        let th = thermo(50.0, 0.5, 0.3);
        let f = fields_with(50.0, affine(0.2), false);
        let a = assemble_b_pos(&f, &th, 30.0, 10.0).unwrap();
        let r = a.roots.unwrap();
        let rad = Contour::for_config(&f, &th, a.saddle.lambda).unwrap().detour_radius;
        let b = assemble_b_pos_with(&f, &th, 30.0, 10.0, Some(2.0 * rad)).unwrap();
        assert!((a.exp_exponent - b.exp_exponent).norm() < 1e-8);
        let dx = 1e-3;
        let p = tau(30.0 + dx, 10.0, C64::from(r.0)).1;
        let m = tau(30.0 - dx, 10.0, C64::from(r.0)).1;
        assert!(((p - m) / (2.0 * dx) + I * r.0).norm() < 1e-10);
        assert!(a.scalar_prefactor.unwrap().norm().is_finite());
    }

    #[test]
    fn ordering_violation_is_an_assumption_error() {
        let th = thermo(50.0, 0.5, 0.3);
        let f = FieldSet::zero(50.0);
        let e = assemble_b_pos(&f, &th, 0.0, 10.0).unwrap_err();
        assert!(matches!(e, QnlsError::Assumption(_)));
        let e = assemble_b_neg(&f, &th, 30.0, 10.0).unwrap_err();
        assert!(matches!(e, QnlsError::Assumption(_)));
    }

    #[test]
    fn b11_trace_terms() {
        let th = thermo(3.0, -0.4, 1.0);
        let zero = FieldSet::zero(3.0);
        let r = b11_trace_expansion(&zero, &th, 4.0, 10.0).unwrap();
        assert_eq!(r.psi_term, c(0.0, 0.0));
        let f = fields_with(3.0, affine(0.5), true);
        let far = b11_trace_expansion(&f, &th, 2e8 * 0.3, 1e8).unwrap();
        assert!((far.value - far.leading).norm() < 1e-6);
        let h = 1e-3;
        let d0 = |l: f64| real_line_rhp(&f, &th, C64::from(l)).unwrap().coeffs().delta0;
        let slope = (8.0 * (d0(0.3 + h) - d0(0.3 - h)) - (d0(0.3 + 2.0 * h) - d0(0.3 - 2.0 * h))) / (12.0 * h);
        assert!((slope - far.leading).norm() < 1e-6, "{slope} {}", far.leading);
    }

    #[test]
    fn flat_occupation_kills_the_log_term() {
        let th = thermo(3.0, -0.4, 1.0);
        let f = fields_with(3.0, affine(0.5), true);
        let far = b11_trace_expansion(&f, &th, 2.0 * 10.0 * 40.0, 10.0).unwrap();
        assert!(far.log_term.norm() < 1e-12 && far.nu.norm() < 1e-12);
    }

    #[test]
    fn nls_balance_and_decay() {
        let th = thermo(3.0, -0.4, 1.0);
        let f = fields_with(3.0, affine(0.3), true);
        let r20 = nls_residual_diag(&f, &th, 0.3, 20.0, NlsSteps::for_time(20.0), NlsFrame::Plain).unwrap();
        let r40 = nls_residual_diag(&f, &th, 0.3, 40.0, NlsSteps::for_time(40.0), NlsFrame::Plain).unwrap();
        assert!(r20.balance_residual < 1e-12);
        assert!(r20.time_derivative < 1e-9);
        assert!(r20.relative > r40.relative);
    }

    #[test]
    fn nls_shifted_residual_ignores_psi_at_fixed_frame() {
        let th = thermo(3.0, -0.4, 1.0);
        let split = c(0.3, 0.01);
        let steps = NlsSteps::for_time(20.0);
        let t = C64::from(20.0);
        let a = nls_residual_at(&fields_with(3.0, FieldModel::Zero, true), &th, split, t, steps, NlsFrame::Shifted).unwrap();
        let b = nls_residual_at(&fields_with(3.0, affine(0.8), true), &th, split, t, steps, NlsFrame::Shifted).unwrap();
        assert!((a.relative - b.relative).abs() < 1e-6 * a.relative);
    }

    #[test]
    fn coarse_nls_stencil_is_rejected() {
        let th = thermo(3.0, -0.4, 1.0);
        let f = fields_with(3.0, affine(0.3), true);
        let steps = NlsSteps { d_lambda: 0.5, d_t: 0.1 };
        let e = nls_residual_diag(&f, &th, 0.3, 20.0, steps, NlsFrame::Plain).unwrap_err();
        assert!(matches!(e, QnlsError::Resolution(_)));
    }

    #[test]
    fn linear_log_fit_recovers_coefficients() {
        let ts = [10.0, 15.0, 20.0, 30.0, 40.0];
        let ys: Vec<f64> = ts.iter().map(|t: &f64| 0.3 - 0.78 * t + 0.01 * t.ln()).collect();
        let fit = fit_linear_log(&ts, &ys).unwrap();
        assert!((fit.a - 0.3).abs() < 1e-9 && (fit.b + 0.78).abs() < 1e-11 && (fit.p - 0.01).abs() < 1e-9);
    }
}
