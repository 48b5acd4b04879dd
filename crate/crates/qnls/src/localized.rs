//! The localized model problem near the saddle point: model scalars, the
//! sector matrices `ℓ̃`, the constants `κ₁₂`, `κ₂₁`, the parabolic cylinder
//! parametrix `β∥` and checks of every jump and asymptotic relation.
//!
//! Products `κ₂₁Γ(ν)` and `1/(κ₁₂Γ(-ν))` are evaluated in closed form, so
//! every sector matrix stays finite as `ν → 0`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{QnlsError, Result};
use crate::fields::FieldSet;
use crate::numerics::I;
use crate::pcf::{gamma, pcf_d, rgamma};
use crate::rankone::{inv2, mul2};
use crate::thermo::ThermoState;

pub type Mat2 = [[C64; 2]; 2];

/// Tolerance below which the connection brackets in sectors II and III are
/// treated as exact zeros.
pub const CANCELLATION_TOL: f64 = 1e-12;

fn e(z: C64) -> C64 {
    z.exp()
}

fn ipi(x: C64) -> C64 {
    I * PI * x
}

/// `ν = -(1/2πi)[ln(1 - ϑZe^{φ_D}) + ln(1 - ϑZe^{φ_A})]` with principal logarithms.
pub fn nu_from_factors(det11: C64, inv_det22: C64) -> C64 {
    -(det11.ln() + inv_det22.ln()) / (2.0 * PI * I)
}

/// Scalars of the localized problem at the split point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelScalars {
    pub lambda0: C64,
    pub t: f64,
    pub theta0: C64,
    pub z0: C64,
    pub psi0: C64,
    pub f1: C64,
    pub f2: C64,
    pub s: C64,
    pub nu: C64,
    pub q0: C64,
    pub p0: C64,
    pub qt0: C64,
    pub pt0: C64,
    pub q0p: C64,
    pub p0p: C64,
    pub qt0p: C64,
    pub pt0p: C64,
    /// `2πZ₀(ϑ₀-1)Γ(ν)e^{iπν/2+3iπ/4}` (infinite at `ν = 0`).
    pub gamma_tilde: C64,
    /// `γ̃·ν`, finite for every `ν`.
    pub gamma_tilde_nu: C64,
}

/// Values of the fields and the Fermi weight at the split point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointValues {
    pub theta: C64,
    pub phi_a: C64,
    pub phi_d: C64,
    pub psi: C64,
}

impl ModelScalars {
    /// Builds the scalars from point values. `ratio` multiplies `q⁽⁰⁾`, `q̃⁽⁰⁾`
    /// and divides `p⁽⁰⁾`, `p̃⁽⁰⁾` (equal to 1 for `h < 0`).
    pub fn from_values(v: PointValues, lambda0: C64, t: f64, ratio: C64) -> Result<ModelScalars> {
        if !(t > 0.0) {
            return Err(QnlsError::Config(format!("t = {t} must be positive")));
        }
        let z0 = (-v.phi_d).exp() + (-v.phi_a).exp();
        let a = v.theta * z0 * v.phi_d.exp();
        let b = v.theta * z0 * v.phi_a.exp();
        let (d11, d22) = (1.0 - a, 1.0 - b);
        if d11.norm() < 1e-14 || d22.norm() < 1e-14 {
            return Err(QnlsError::Singular(format!(
                "saddle point {lambda0} sits on a root of the jump determinant"
            )));
        }
        let f1 = -a;
        let f2 = b / d22;
        let nu = nu_from_factors(d11, d22);
        let s = nu / I;
        let num_q = z0 * v.theta * e(v.phi_d + v.phi_a - v.psi) / (2.0 * PI * I);
        let num_p = 2.0 * PI * I * (v.theta - 1.0) * z0 * e(v.psi);
        let q0 = num_q / d11 * ratio;
        let qt0 = num_q / d22 * ratio;
        let p0 = num_p / d11 / ratio;
        let pt0 = num_p / d22 / ratio;
        let ln2t = (2.0 * t).ln();
        let lam2 = lambda0 * lambda0;
        let qfac = e(nu * ln2t - ipi(nu) * 0.5 + I * t * lam2);
        let pfac = e(-nu * ln2t + ipi(nu) * 0.5 - I * t * lam2);
        let phase = e(ipi(nu) * 0.5 + 0.75 * PI * I);
        let base = 2.0 * PI * z0 * (v.theta - 1.0) * phase;
        Ok(ModelScalars {
            lambda0,
            t,
            theta0: v.theta,
            z0,
            psi0: v.psi,
            f1,
            f2,
            s,
            nu,
            q0,
            p0,
            qt0,
            pt0,
            q0p: q0 * qfac,
            p0p: p0 * pfac,
            qt0p: qt0 * qfac,
            pt0p: pt0 * pfac,
            gamma_tilde: base * gamma(nu),
            gamma_tilde_nu: base * gamma(nu + 1.0),
        })
    }

    /// `1 - e^{2πiν}`, the common value of `p̃′q′` and `q̃′p′`.
    pub fn identity_value(&self) -> C64 {
        1.0 - e(2.0 * ipi(self.nu))
    }

    /// Largest deviation of `p̃′q′` and `q̃′p′` from `1 - e^{2πiν}`.
    pub fn identity_residual(&self) -> f64 {
        let target = self.identity_value();
        (self.pt0p * self.q0p - target)
            .norm()
            .max((self.qt0p * self.p0p - target).norm())
    }

    /// Leading amplitudes `(ζ₀, η₀)` of `b₁₂` and `b₂₁`:
    /// `ζ₀ = γ̃νe^{ψ}/(i√(2π))`, `η₀ = -√(2π)e^{-ψ}/γ̃`.
    pub fn leading_amplitudes(&self) -> (C64, C64) {
        let r = (2.0 * PI).sqrt();
        let zeta = self.gamma_tilde_nu * e(self.psi0) / (I * r);
        let eta = -r * e(-self.psi0) * rgamma(self.nu)
            / (2.0 * PI * self.z0 * (self.theta0 - 1.0) * e(ipi(self.nu) * 0.5 + 0.75 * PI * I));
        (zeta, eta)
    }
}

/// Model scalars at the split point (`λ₀` or `Λ`) for `h < 0`.
pub fn model_scalars(fields: &FieldSet, thermo: &ThermoState, split: C64, x: f64, t: f64) -> Result<ModelScalars> {
    model_scalars_with_roots(fields, thermo, split, x, t, None)
}

/// Model scalars with the rational prefactor `(λ₀-Λ₂)/(λ₀-Λ₁)` of the `h > 0`
/// problem when `roots = Some((Λ₁, Λ₂))`.
pub fn model_scalars_with_roots(
    fields: &FieldSet,
    thermo: &ThermoState,
    split: C64,
    x: f64,
    t: f64,
    roots: Option<(f64, f64)>,
) -> Result<ModelScalars> {
    if !x.is_finite() {
        return Err(QnlsError::Config(format!("x = {x} must be finite")));
    }
    let v = PointValues {
        theta: thermo.theta_at(split),
        phi_a: fields.phi_a(split)?,
        phi_d: fields.phi_d(split)?,
        psi: fields.psi(split)?,
    };
    let ratio = match roots {
        None => C64::new(1.0, 0.0),
        Some((l1, l2)) => {
            let den = split - l1;
            if den.norm() < 1e-14 || (split - l2).norm() < 1e-14 {
                return Err(QnlsError::Singular(format!("split point {split} coincides with a root")));
            }
            (split - l2) / den
        }
    };
    ModelScalars::from_values(v, split, t, ratio)
}

/// Sign of the sector family: `+` for I, II, VI and `-` for III, IV, V.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaSign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sector {
    I,
    II,
    III,
    IV,
    V,
    VI,
}

impl Sector {
    pub const ALL: [Sector; 6] = [Sector::I, Sector::II, Sector::III, Sector::IV, Sector::V, Sector::VI];

    pub fn kappa_sign(self) -> KappaSign {
        match self {
            Sector::I | Sector::II | Sector::VI => KappaSign::Plus,
            Sector::III | Sector::IV | Sector::V => KappaSign::Minus,
        }
    }

    /// Angular range of the sector in the `ξ`-plane, `arg ξ ∈ (lo, hi)`.
    pub fn angles(self) -> (f64, f64) {
        match self {
            Sector::I => (0.0, 0.5 * PI),
            Sector::II => (0.5 * PI, 0.75 * PI),
            Sector::III => (0.75 * PI, PI),
            Sector::IV => (-PI, -0.5 * PI),
            Sector::V => (-0.5 * PI, -0.25 * PI),
            Sector::VI => (-0.25 * PI, 0.0),
        }
    }

    pub fn mid_angle(self) -> f64 {
        let (a, b) = self.angles();
        0.5 * (a + b)
    }
}

/// `κ₁₂`, `κ₂₁` in the `+` and `-` sector families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappas {
    pub k12_plus: C64,
    pub k21_plus: C64,
    pub k12_minus: C64,
    pub k21_minus: C64,
    /// `κ₂₁Γ(ν)` in the `+` family.
    a_plus: C64,
    /// `1/(κ₁₂Γ(-ν))` in the `+` family.
    b_plus: C64,
    /// `(1+f₂)²`.
    conj: C64,
}

impl Kappas {
    pub fn pair(&self, sign: KappaSign) -> (C64, C64) {
        match sign {
            KappaSign::Plus => (self.k12_plus, self.k21_plus),
            KappaSign::Minus => (self.k12_minus, self.k21_minus),
        }
    }

    fn a(&self, sign: KappaSign) -> C64 {
        match sign {
            KappaSign::Plus => self.a_plus,
            KappaSign::Minus => self.a_plus * self.conj,
        }
    }

    fn b(&self, sign: KappaSign) -> C64 {
        match sign {
            KappaSign::Plus => self.b_plus,
            KappaSign::Minus => self.b_plus * self.conj,
        }
    }

    /// `-2it·κ₁₂κ₂₁` in both families.
    pub fn nu_products(&self, t: f64) -> (C64, C64) {
        let f = -2.0 * I * t;
        (f * self.k12_plus * self.k21_plus, f * self.k12_minus * self.k21_minus)
    }
}

/// `κ₂₁⁺ = -√(π/t)e^{-iπ/4}/(p̃′Γ(ν))`, `κ₁₂⁺ = iν/(2tκ₂₁⁺)` and the `-` family
/// obtained with `(1+f₂)^{∓2}`.
pub fn kappas(m: &ModelScalars, t: f64) -> Result<Kappas> {
    if m.pt0p.norm() < 1e-300 || !m.pt0p.re.is_finite() {
        return Err(QnlsError::Singular("p̃′⁽⁰⁾ vanishes: degenerate model problem".into()));
    }
    let sq = (PI / t).sqrt();
    let a_plus = -sq * e(-0.25 * PI * I) / m.pt0p;
    let k21_plus = a_plus * rgamma(m.nu);
    // κ₁₂⁺ = iν/(2tκ₂₁⁺) = iΓ(ν+1)/(2t·a₊)
    let k12_plus = I * gamma(m.nu + 1.0) / (2.0 * t * a_plus);
    let b_plus = 2.0 * I * t * a_plus * (PI * m.nu).sin() / PI;
    let conj = (1.0 + m.f2) * (1.0 + m.f2);
    Ok(Kappas {
        k12_plus,
        k21_plus,
        k12_minus: k12_plus / conj,
        k21_minus: k21_plus * conj,
        a_plus,
        b_plus,
        conj,
    })
}

/// Sector matrix together with the constants used in that sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorSolution {
    pub sector: Sector,
    pub ell_tilde: Mat2,
    pub kappa12: C64,
    pub kappa21: C64,
}

/// The matrix `ℓ̃` of a sector.
pub fn sector_ell(m: &ModelScalars, k: &Kappas, sector: Sector) -> SectorSolution {
    let nu = m.nu;
    let sq = C64::from((PI / m.t).sqrt());
    let sign = sector.kappa_sign();
    let (a, b) = (k.a(sign), k.b(sign));
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let half = e(ipi(nu) * 0.5);
    let ell = match sector {
        Sector::I => [[one, sq * e(-0.25 * PI * I) / a], [zero, half]],
        Sector::II => [
            [e(2.0 * ipi(nu)), sq * e(-0.25 * PI * I) / a],
            [sq * e(1.5 * ipi(nu) + 0.25 * PI * I) * b, half],
        ],
        Sector::III => [
            [one, sq * e(2.0 * ipi(nu) - 0.25 * PI * I) / a],
            [sq * e(-0.5 * ipi(nu) + 0.25 * PI * I) * b, e(2.5 * ipi(nu))],
        ],
        Sector::IV => [[one, zero], [sq * e(-0.5 * ipi(nu) + 0.25 * PI * I) * b, half]],
        Sector::V | Sector::VI => [[one, zero], [zero, half]],
    };
    let (k12, k21) = k.pair(sign);
    SectorSolution {
        sector,
        ell_tilde: ell,
        kappa12: k12,
        kappa21: k21,
    }
}

/// Max-norm residuals of the jump and conjugation relations between sectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpResiduals {
    /// `ℓ̃_VI - ℓ̃_I n′₊`
    pub vi_i: f64,
    /// `ℓ̃_II - ℓ̃_I m′₊`
    pub ii_i: f64,
    /// `ℓ̃_IV - ℓ̃_III m′₋`
    pub iv_iii: f64,
    /// `ℓ̃_IV - ℓ̃_V n′₋`
    pub iv_v: f64,
    /// `ℓ̃_VI - k₋ℓ̃_V k₋⁻¹`
    pub vi_v: f64,
    /// `ℓ̃_II - k₋ℓ̃_III k₊⁻¹`
    pub ii_iii: f64,
    /// Largest deviation of `p̃′q′`, `q̃′p′` from `1 - e^{2πiν}`.
    pub identity: f64,
    /// `|-2itκ₁₂κ₂₁ - ν|` over both sector families.
    pub nu_invariance: f64,
}

impl JumpResiduals {
    pub fn max_jump(&self) -> f64 {
        [self.vi_i, self.ii_i, self.iv_iii, self.iv_v, self.vi_v, self.ii_iii]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn diff(a: &Mat2, b: &Mat2) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            d = d.max((a[i][j] - b[i][j]).norm());
        }
    }
    d
}

/// Checks every jump relation between neighbouring sectors.
pub fn verify_sector_jumps(m: &ModelScalars, t: f64) -> Result<JumpResiduals> {
    let k = kappas(m, t)?;
    let ell = |s| sector_ell(m, &k, s).ell_tilde;
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    let m_plus = [[one, zero], [m.q0p, one]];
    let n_minus = [[one, zero], [m.qt0p, one]];
    let m_minus = [[one, m.p0p], [zero, one]];
    let n_plus = [[one, m.pt0p], [zero, one]];
    let k_plus = [[1.0 + m.f1, zero], [zero, 1.0 / (1.0 + m.f1)]];
    let k_minus = [[1.0 + m.f2, zero], [zero, 1.0 / (1.0 + m.f2)]];
    let (e1, e2, e3, e4, e5, e6) = (
        ell(Sector::I),
        ell(Sector::II),
        ell(Sector::III),
        ell(Sector::IV),
        ell(Sector::V),
        ell(Sector::VI),
    );
    let (np, nm) = k.nu_products(t);
    Ok(JumpResiduals {
        vi_i: diff(&e6, &mul2(&e1, &n_plus)),
        ii_i: diff(&e2, &mul2(&e1, &m_plus)),
        iv_iii: diff(&e4, &mul2(&e3, &m_minus)),
        iv_v: diff(&e4, &mul2(&e5, &n_minus)),
        vi_v: diff(&e6, &mul2(&mul2(&k_minus, &e5), &inv2(&k_minus)?)),
        ii_iii: diff(&e2, &mul2(&mul2(&k_minus, &e3), &inv2(&k_plus)?)),
        identity: m.identity_residual(),
        nu_invariance: (np - m.nu).norm().max((nm - m.nu).norm()),
    })
}

fn d(nu: C64, xi: C64) -> Result<C64> {
    Ok(pcf_d(nu, xi)?.value)
}

/// `β∥(ξ)` built from `D_ν(ξ)`, `D_{-ν}(iξ)`, `D_{ν-1}(ξ)`, `D_{-ν-1}(iξ)`.
pub fn beta_parallel(m: &ModelScalars, kappa: (C64, C64), xi: C64, t: f64) -> Result<Mat2> {
    let nu = m.nu;
    let c = (2.0 * t).sqrt();
    let (k12, k21) = kappa;
    Ok([
        [d(nu, xi)?, k12 * c * e(0.25 * PI * I) * d(-nu - 1.0, I * xi)?],
        [k21 * c * e(-0.25 * PI * I) * d(nu - 1.0, xi)?, d(-nu, I * xi)?],
    ])
}

/// Residual of `dΨ/dξ = -(ξ/2)σ₃Ψ - √(2t)e^{-iπ/4}[[0,-κ₁₂],[κ₂₁,0]]Ψ` for both
/// columns of `β∥`, relative to the size of the terms.
pub fn beta_ode_residual(m: &ModelScalars, kappa: (C64, C64), xi: C64, t: f64) -> Result<f64> {
    let nu = m.nu;
    let c = (2.0 * t).sqrt();
    let (k12, k21) = kappa;
    let u = pcf_d(nu, xi)?;
    let v = pcf_d(nu - 1.0, xi)?;
    let w = pcf_d(-nu - 1.0, I * xi)?;
    let z = pcf_d(-nu, I * xi)?;
    let f12 = k12 * c * e(0.25 * PI * I);
    let f21 = k21 * c * e(-0.25 * PI * I);
    let psi = [[u.value, f12 * w.value], [f21 * v.value, z.value]];
    let dpsi = [[u.derivative, f12 * I * w.derivative], [f21 * v.derivative, I * z.derivative]];
    let g = c * e(-0.25 * PI * I);
    let mut worst: f64 = 0.0;
    for col in 0..2 {
        let r1 = -0.5 * xi * psi[0][col] + g * k12 * psi[1][col];
        let r2 = 0.5 * xi * psi[1][col] - g * k21 * psi[0][col];
        for (lhs, rhs) in [(dpsi[0][col], r1), (dpsi[1][col], r2)] {
            let scale = lhs.norm() + rhs.norm();
            if scale > 0.0 {
                worst = worst.max((lhs - rhs).norm() / scale);
            }
        }
    }
    Ok(worst)
}

/// `ξ^a` on the branch `arg ξ ∈ (-5π/4, 3π/4]`.
pub fn xi_power(xi: C64, a: C64) -> C64 {
    let mut arg = xi.arg();
    if arg > 0.75 * PI {
        arg -= 2.0 * PI;
    }
    e(a * C64::new(xi.norm().ln(), arg))
}

/// Large-`ξ` behaviour of `β∥ℓ̃` in every sector.
pub fn asymptotic_target(m: &ModelScalars, kappa: (C64, C64), xi: C64, t: f64) -> Mat2 {
    let nu = m.nu;
    let c = (2.0 * t).sqrt();
    let (k12, k21) = kappa;
    let g = e(-xi * xi * 0.25);
    let ph = e(-0.25 * PI * I);
    [
        [xi_power(xi, nu) * g, k12 * c * ph * xi_power(xi, -nu - 1.0) / g],
        [k21 * c * ph * xi_power(xi, nu - 1.0) * g, xi_power(xi, -nu) / g],
    ]
}

/// `β∥ℓ̃` with the columns that are recessive in sectors II and III rewritten
/// through the connection formulas, so their exponentially large parts cancel
/// analytically. Returns the product and the size of the cancelled brackets.
pub fn resolved_product(m: &ModelScalars, sol: &SectorSolution, xi: C64, t: f64) -> Result<(Mat2, f64)> {
    let nu = m.nu;
    let kappa = (sol.kappa12, sol.kappa21);
    let beta = beta_parallel(m, kappa, xi, t)?;
    let mut out = mul2(&beta, &sol.ell_tilde);
    let l = sol.ell_tilde;
    let c = (2.0 * t).sqrt();
    let k12 = sol.kappa12 * c * e(0.25 * PI * I);
    let k21 = sol.kappa21 * c * e(-0.25 * PI * I);
    let r2p = (2.0 * PI).sqrt();
    let mut bracket: f64 = 0.0;
    match sol.sector {
        Sector::II => {
            let b1 = l[0][1] + l[1][1] * k12 * r2p * rgamma(nu + 1.0) * e(-0.5 * ipi(nu));
            let b2 = l[0][1] * k21 + l[1][1] * r2p * rgamma(nu) * e(ipi(1.0 - nu) * 0.5);
            let (b1, b2) = (drop_small(b1, &mut bracket), drop_small(b2, &mut bracket));
            out[0][1] = l[1][1] * k12 * e(-ipi(nu + 1.0)) * d(-nu - 1.0, -I * xi)? + b1 * d(nu, xi)?;
            out[1][1] = l[1][1] * e(-ipi(nu)) * d(-nu, -I * xi)? + b2 * d(nu - 1.0, xi)?;
        }
        Sector::III => {
            let b1 = l[0][0] * r2p * rgamma(-nu) * e(-ipi(nu + 1.0) * 0.5) + l[1][0] * k12;
            let b2 = l[0][0] * k21 * r2p * rgamma(1.0 - nu) * e(-0.5 * ipi(nu)) + l[1][0];
            let (b1, b2) = (drop_small(b1, &mut bracket), drop_small(b2, &mut bracket));
            out[0][0] = l[0][0] * e(-ipi(nu)) * d(nu, -xi)? + b1 * d(-nu - 1.0, I * xi)?;
            out[1][0] = l[0][0] * k21 * e(-ipi(nu - 1.0)) * d(nu - 1.0, -xi)? + b2 * d(-nu, I * xi)?;
        }
        _ => {}
    }
    Ok((out, bracket))
}

fn drop_small(b: C64, worst: &mut f64) -> C64 {
    *worst = worst.max(b.norm());
    if b.norm() < CANCELLATION_TOL {
        C64::new(0.0, 0.0)
    } else {
        b
    }
}

/// Entrywise relative error of `β∥ℓ̃` against its large-`ξ` form, plus the
/// connection bracket size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticMatch {
    pub sector: Sector,
    pub xi: C64,
    pub max_rel_err: f64,
    pub cancellation_residual: f64,
}

pub fn asymptotic_match(m: &ModelScalars, k: &Kappas, sector: Sector, xi: C64, t: f64) -> Result<AsymptoticMatch> {
    let sol = sector_ell(m, k, sector);
    let (prod, canc) = resolved_product(m, &sol, xi, t)?;
    let target = asymptotic_target(m, (sol.kappa12, sol.kappa21), xi, t);
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            if target[i][j].norm() > 0.0 {
                worst = worst.max((prod[i][j] / target[i][j] - 1.0).norm());
            }
        }
    }
    Ok(AsymptoticMatch {
        sector,
        xi,
        max_rel_err: worst,
        cancellation_residual: canc,
    })
}

/// Asymptotic match at `|ξ| = radius` in the middle of every sector.
pub fn asymptotic_match_all(m: &ModelScalars, t: f64, radius: f64) -> Result<Vec<AsymptoticMatch>> {
    let k = kappas(m, t)?;
    Sector::ALL
        .iter()
        .map(|s| asymptotic_match(m, &k, *s, C64::from_polar(radius, s.mid_angle()), t))
        .collect()
}
