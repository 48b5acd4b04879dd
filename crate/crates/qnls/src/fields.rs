//! Classical models of the dual fields `ψ`, `φ_A`, `φ_D` and the functions
//! built from them: `h(λ,μ)`, `Z(λ,μ)`, the determinants of the diagonal jump
//! blocks and the real roots `Λ₁ < Λ₂`.
//!
//! A field is specified through its exponential. Rational exponentials
//! `e^{f} = P/Q` take polynomial coefficients in ascending powers of `λ`;
//! their logarithm is assembled from the roots of `P` and `Q`, which fixes the
//! branch at `λ → +∞` and keeps it continuous inside the analyticity strip.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{QnlsError, Result};
use crate::numerics::bracketed_roots;
use crate::thermo::ThermoState;

/// Number of real sample points used by [`FieldSet::validate`].
pub const VALIDATION_SAMPLES: usize = 1000;
/// Half width of the real sampling window used by [`FieldSet::validate`].
pub const VALIDATION_RANGE: f64 = 50.0;

/// Specification of a single field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldModel {
    /// `e^f = num(λ)/den(λ)`, coefficients in ascending powers.
    Rational { num: Vec<C64>, den: Vec<C64> },
    /// `f = aλ + b`.
    AffineLog { a: C64, b: C64 },
    /// `f = Σ coeffs[k] λ^k`.
    PolyLog { coeffs: Vec<C64> },
    /// `f ≡ 0`.
    Zero,
}

impl Default for FieldModel {
    fn default() -> Self {
        FieldModel::Zero
    }
}

/// A field ready for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub model: FieldModel,
    roots: Vec<C64>,
    poles: Vec<C64>,
    log_lead: C64,
}

fn trim(c: &[C64]) -> Vec<C64> {
    let mut v = c.to_vec();
    while v.len() > 1 && v.last().map(|z| z.norm() == 0.0).unwrap_or(false) {
        v.pop();
    }
    v
}

fn horner(c: &[C64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut d = C64::new(0.0, 0.0);
    for a in c.iter().rev() {
        d = d * z + p;
        p = p * z + a;
    }
    (p, d)
}

/// Roots of a polynomial given in ascending coefficients (Aberth-Ehrlich).
pub fn poly_roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    let c = trim(coeffs);
    let n = c.len() - 1;
    if c[n].norm() == 0.0 {
        return Err(QnlsError::Config("zero polynomial".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let lead = c[n];
    let radius = (0..n)
        .map(|k| (c[k] / lead).norm().powf(1.0 / (n - k) as f64))
        .fold(0.0, f64::max)
        .max(1e-3);
    let mut z: Vec<C64> = (0..n)
        .map(|k| C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4))
        .collect();
    let mut done = false;
    for _ in 0..500 {
        let mut max_step: f64 = 0.0;
        for k in 0..n {
            let (p, d) = horner(&c, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let w = p / d;
            let s: C64 = (0..n).filter(|&j| j != k).map(|j| 1.0 / (z[k] - z[j])).sum();
            let step = w / (1.0 - w * s);
            z[k] -= step;
            max_step = max_step.max(step.norm() / z[k].norm().max(1.0));
        }
        if max_step < 1e-15 {
            done = true;
            break;
        }
    }
    for zk in z.iter_mut() {
        for _ in 0..3 {
            let (p, d) = horner(&c, *zk);
            if d.norm() == 0.0 {
                break;
            }
            *zk -= p / d;
        }
    }
    if !done {
        let worst = z.iter().map(|r| horner(&c, *r).0.norm()).fold(0.0, f64::max);
        if worst > 1e-8 * c.iter().map(|a| a.norm()).fold(0.0, f64::max) {
            return Err(QnlsError::NonConvergence {
                what: "polynomial root finder".into(),
                iterations: 500,
                residual: worst,
            });
        }
    }
    Ok(z)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl Field {
    pub fn new(model: FieldModel) -> Result<Field> {
        match &model {
            FieldModel::Rational { num, den } => {
                if num.is_empty() || den.is_empty() {
                    return Err(QnlsError::Config("rational field needs non-empty coefficient lists".into()));
                }
                let n = trim(num);
                let d = trim(den);
                if n.len() != d.len() {
                    return Err(QnlsError::Config(format!(
                        "numerator degree {} differs from denominator degree {}; e^f must stay bounded at infinity",
                        n.len() - 1,
                        d.len() - 1
                    )));
                }
                let roots = poly_roots(&n)?;
                let poles = poly_roots(&d)?;
                let log_lead = (n[n.len() - 1] / d[d.len() - 1]).ln();
                Ok(Field {
                    model,
                    roots,
                    poles,
                    log_lead,
                })
            }
            _ => Ok(Field {
                model,
                roots: Vec::new(),
                poles: Vec::new(),
                log_lead: C64::new(0.0, 0.0),
            }),
        }
    }

    pub fn zero() -> Field {
        Field::new(FieldModel::Zero).expect("zero field")
    }

    /// Zeros and poles of a rational exponential.
    pub fn singularities(&self) -> impl Iterator<Item = &C64> {
        self.roots.iter().chain(self.poles.iter())
    }

    /// Value of the field (the logarithm of the exponential).
    pub fn eval(&self, z: C64) -> C64 {
        match &self.model {
            FieldModel::Rational { .. } => {
                let mut s = self.log_lead;
                for r in &self.roots {
                    s += (z - r).ln();
                }
                for p in &self.poles {
                    s -= (z - p).ln();
                }
                s
            }
            FieldModel::AffineLog { a, b } => a * z + b,
            FieldModel::PolyLog { coeffs } => horner(coeffs, z).0,
            FieldModel::Zero => C64::new(0.0, 0.0),
        }
    }

    /// `n`-th derivative of the field, computed analytically.
    pub fn derivative(&self, z: C64, n: usize) -> C64 {
        if n == 0 {
            return self.eval(z);
        }
        match &self.model {
            FieldModel::Rational { .. } => {
                let sign = if (n - 1) % 2 == 0 { 1.0 } else { -1.0 };
                let f = sign * factorial(n - 1);
                let mut s = C64::new(0.0, 0.0);
                for r in &self.roots {
                    s += f / (z - r).powi(n as i32);
                }
                for p in &self.poles {
                    s -= f / (z - p).powi(n as i32);
                }
                s
            }
            FieldModel::AffineLog { a, .. } => {
                if n == 1 {
                    *a
                } else {
                    C64::new(0.0, 0.0)
                }
            }
            FieldModel::PolyLog { coeffs } => {
                let mut c = coeffs.clone();
                for _ in 0..n {
                    if c.len() <= 1 {
                        return C64::new(0.0, 0.0);
                    }
                    c = c.iter().enumerate().skip(1).map(|(k, a)| a * k as f64).collect();
                }
                horner(&c, z).0
            }
            FieldModel::Zero => C64::new(0.0, 0.0),
        }
    }

    /// The exponential `e^{f(z)}`.
    pub fn exp_eval(&self, z: C64) -> C64 {
        match &self.model {
            FieldModel::Rational { num, den } => horner(num, z).0 / horner(den, z).0,
            _ => self.eval(z).exp(),
        }
    }

    /// Field shifted by a constant, `f + b`.
    pub fn shifted(&self, b: C64) -> Result<Field> {
        let model = match &self.model {
            FieldModel::Rational { num, den } => FieldModel::Rational {
                num: num.iter().map(|a| a * b.exp()).collect(),
                den: den.clone(),
            },
            FieldModel::AffineLog { a, b: b0 } => FieldModel::AffineLog { a: *a, b: b0 + b },
            FieldModel::PolyLog { coeffs } => {
                let mut c = coeffs.clone();
                if c.is_empty() {
                    c.push(C64::new(0.0, 0.0));
                }
                c[0] += b;
                FieldModel::PolyLog { coeffs: c }
            }
            FieldModel::Zero => FieldModel::AffineLog {
                a: C64::new(0.0, 0.0),
                b,
            },
        };
        Field::new(model)
    }
}

/// JSON form of a field set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FieldSetSpec {
    #[serde(default)]
    pub psi: FieldModel,
    #[serde(default, rename = "phiA", alias = "phi_a")]
    pub phi_a: FieldModel,
    #[serde(default, rename = "phiD", alias = "phi_d")]
    pub phi_d: FieldModel,
}

/// The three dual fields together with the coupling that fixes their strip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSet {
    pub psi: Field,
    pub phi_a: Field,
    pub phi_d: Field,
    pub c: f64,
}

/// Measured deviations from the field-set requirements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldValidation {
    pub max_im_psi: f64,
    pub max_unimodularity_defect: f64,
    /// Smallest `|Im|` over all zeros and poles (infinite when there are none).
    pub min_singularity_height: f64,
}

/// Which diagonal block determinant to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    G11,
    G22,
}

/// `h(λ, μ) = (λ - μ + ic)/(ic)`.
pub fn h_fn(lambda: C64, mu: C64, c: f64) -> C64 {
    let ic = C64::new(0.0, c);
    (lambda - mu + ic) / ic
}

impl FieldSet {
    pub fn new(spec: &FieldSetSpec, c: f64) -> Result<FieldSet> {
        if !(c > 0.0) {
            return Err(QnlsError::Config(format!("coupling c = {c} must be positive")));
        }
        Ok(FieldSet {
            psi: Field::new(spec.psi.clone())?,
            phi_a: Field::new(spec.phi_a.clone())?,
            phi_d: Field::new(spec.phi_d.clone())?,
            c,
        })
    }

    /// All fields identically zero.
    pub fn zero(c: f64) -> FieldSet {
        FieldSet {
            psi: Field::zero(),
            phi_a: Field::zero(),
            phi_d: Field::zero(),
            c,
        }
    }

    pub fn spec(&self) -> FieldSetSpec {
        FieldSetSpec {
            psi: self.psi.model.clone(),
            phi_a: self.phi_a.model.clone(),
            phi_d: self.phi_d.model.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        [&self.psi, &self.phi_a, &self.phi_d]
            .iter()
            .all(|f| f.model == FieldModel::Zero)
    }

    /// Fails unless `z` lies strictly inside the strip `|Im z| < c/2`.
    pub fn check_strip(&self, z: C64) -> Result<()> {
        if z.im.abs() >= 0.5 * self.c || !z.re.is_finite() {
            return Err(QnlsError::Domain(format!(
                "λ = {z} outside the analyticity strip |Im λ| < {}",
                0.5 * self.c
            )));
        }
        Ok(())
    }

    pub fn psi(&self, z: C64) -> Result<C64> {
        self.check_strip(z)?;
        Ok(self.psi.eval(z))
    }

    pub fn phi_a(&self, z: C64) -> Result<C64> {
        self.check_strip(z)?;
        Ok(self.phi_a.eval(z))
    }

    pub fn phi_d(&self, z: C64) -> Result<C64> {
        self.check_strip(z)?;
        Ok(self.phi_d.eval(z))
    }

    /// `φ = φ_A - φ_D`.
    pub fn phi(&self, z: C64) -> Result<C64> {
        self.check_strip(z)?;
        Ok(self.phi_a.eval(z) - self.phi_d.eval(z))
    }

    /// `ψ'` or `ψ''` (any order is accepted).
    pub fn psi_derivative(&self, z: C64, order: usize) -> Result<C64> {
        self.check_strip(z)?;
        Ok(self.psi.derivative(z, order))
    }

    /// `Z(λ,μ) = e^{-φ_D(λ)}/h(μ,λ) + e^{-φ_A(λ)}/h(λ,μ)`.
    pub fn z_fn(&self, lambda: C64, mu: C64) -> Result<C64> {
        self.check_strip(lambda)?;
        let h1 = h_fn(mu, lambda, self.c);
        let h2 = h_fn(lambda, mu, self.c);
        if h1.norm() < 1e-14 || h2.norm() < 1e-14 {
            return Err(QnlsError::Singular(format!(
                "h vanishes in Z({lambda}, {mu}): λ - μ = ±ic"
            )));
        }
        Ok((-self.phi_d.eval(lambda)).exp() / h1 + (-self.phi_a.eval(lambda)).exp() / h2)
    }

    /// `Z(λ,λ) = e^{-φ_D(λ)} + e^{-φ_A(λ)}`.
    pub fn z_diag(&self, lambda: C64) -> Result<C64> {
        self.check_strip(lambda)?;
        Ok((-self.phi_d.eval(lambda)).exp() + (-self.phi_a.eval(lambda)).exp())
    }

    /// `1 - ϑ(1 + e^{∓φ(λ)})`, upper sign for `G11`.
    pub fn det_g(&self, theta: C64, lambda: C64, which: Block) -> Result<C64> {
        let phi = self.phi(lambda)?;
        let e = match which {
            Block::G11 => (-phi).exp(),
            Block::G22 => phi.exp(),
        };
        Ok(1.0 - theta * (1.0 + e))
    }

    /// Checks the strip, reality and unimodularity requirements.
    pub fn validate(&self) -> Result<FieldValidation> {
        let half = 0.5 * self.c;
        let min_height = [&self.psi, &self.phi_a, &self.phi_d]
            .iter()
            .flat_map(|f| f.singularities())
            .map(|z| z.im.abs())
            .fold(f64::INFINITY, f64::min);
        if min_height < half {
            return Err(QnlsError::Config(format!(
                "a zero or pole of a field exponential lies at |Im λ| = {min_height:.6} inside the strip |Im λ| < {half}"
            )));
        }
        let mut max_im = 0.0f64;
        let mut max_mod = 0.0f64;
        for k in 0..VALIDATION_SAMPLES {
            let x = -VALIDATION_RANGE + 2.0 * VALIDATION_RANGE * k as f64 / (VALIDATION_SAMPLES - 1) as f64;
            let z = C64::from(x);
            max_im = max_im.max(self.psi.eval(z).im.abs());
            let phi = self.phi_a.eval(z) - self.phi_d.eval(z);
            max_mod = max_mod.max((phi.exp().norm() - 1.0).abs());
        }
        let report = FieldValidation {
            max_im_psi: max_im,
            max_unimodularity_defect: max_mod,
            min_singularity_height: min_height,
        };
        if max_im >= 1e-10 {
            return Err(QnlsError::Config(format!(
                "ψ is not real on the real axis (max |Im ψ| = {max_im:.3e})"
            )));
        }
        if max_mod >= 1e-10 {
            return Err(QnlsError::Config(format!(
                "|e^φ| differs from 1 on the real axis (max defect {max_mod:.3e})"
            )));
        }
        Ok(report)
    }

    /// Field set with `ψ` replaced.
    pub fn with_psi(&self, psi: FieldModel) -> Result<FieldSet> {
        let mut out = self.clone();
        out.psi = Field::new(psi)?;
        Ok(out)
    }
}

/// Real roots `Λ₁ < Λ₂` of `1 - ϑ(1 + e^{-φ})`.
///
/// For `h < 0` verifies that there are none and returns `None`. For `h > 0`
/// requires exactly two. When `lambda0` is supplied, both roots and the real
/// roots of `1 - ϑ(1 + e^{φ})` must lie to its left.
pub fn find_capital_lambdas(
    fields: &FieldSet,
    thermo: &ThermoState,
    lambda0: Option<f64>,
) -> Result<Option<(f64, f64)>> {
    let roots_of = |which: Block| -> Result<Vec<f64>> {
        let g = |x: f64| {
            let z = C64::from(x);
            fields
                .det_g(thermo.theta_at(z), z, which)
                .unwrap_or(C64::new(f64::NAN, f64::NAN))
        };
        let l = thermo.half_width();
        let cands = bracketed_roots(|x| g(x).re, -l, l, 1e-14);
        Ok(cands
            .into_iter()
            .filter(|x| g(*x).im.abs() < 1e-8)
            .collect())
    };
    let r11 = roots_of(Block::G11)?;
    let h = thermo.params.h;
    if h < 0.0 {
        if !r11.is_empty() {
            return Err(QnlsError::Assumption(format!(
                "det G11 has real roots {r11:?} although h < 0"
            )));
        }
        return Ok(None);
    }
    if r11.len() != 2 {
        return Err(QnlsError::Assumption(format!(
            "det G11 must have exactly two real roots for h > 0, found {}",
            r11.len()
        )));
    }
    let (l1, l2) = (r11[0], r11[1]);
    if let Some(l0) = lambda0 {
        if !(l1 < l2 && l2 < l0) {
            return Err(QnlsError::Assumption(format!(
                "root ordering Λ₁ < Λ₂ < λ₀ violated: Λ₁ = {l1}, Λ₂ = {l2}, λ₀ = {l0}"
            )));
        }
        let r22 = roots_of(Block::G22)?;
        if let Some(bad) = r22.iter().find(|r| **r >= l0) {
            return Err(QnlsError::Assumption(format!(
                "root {bad} of det G22 does not lie to the left of λ₀ = {l0}"
            )));
        }
    }
    Ok(Some((l1, l2)))
}
