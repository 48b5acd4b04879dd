//! Yang-Yang thermodynamics of the Bose gas: excitation energy, Fermi weight
//! and total vacancy density, together with their analytic continuation off
//! the real axis.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{QnlsError, Result};
use crate::numerics::{self, bracketed_roots, QuadGrid, SolverReport};

/// Coupling, chemical potential and temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoParams {
    pub c: f64,
    pub h: f64,
    #[serde(rename = "T", alias = "temperature")]
    pub temperature: f64,
}

impl ThermoParams {
    pub fn new(c: f64, h: f64, temperature: f64) -> Result<Self> {
        let p = ThermoParams { c, h, temperature };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(QnlsError::Config(format!("coupling c = {} must be positive and finite", self.c)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(QnlsError::Config(format!("temperature {} must be positive", self.temperature)));
        }
        if !self.h.is_finite() {
            return Err(QnlsError::Config("chemical potential must be finite".into()));
        }
        Ok(())
    }
}

/// Converged thermodynamic state sampled on a real grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThermoState {
    pub params: ThermoParams,
    pub grid: QuadGrid,
    pub epsilon: Vec<f64>,
    pub theta: Vec<f64>,
    pub rho_t: Vec<f64>,
    pub q_roots: Vec<f64>,
    pub report: SolverReport,
    /// Multiplier applied to every Fermi weight. Equal to one for physical
    /// states; other values only serve scaling diagnostics.
    pub theta_scale: f64,
    /// `ln(1 + e^{-ε/T})` at the nodes, cached for the continuation formula.
    lnp: Vec<f64>,
}

/// Lieb-Liniger kernel `2c/(c² + x²)`.
pub fn kernel(x: f64, c: f64) -> f64 {
    2.0 * c / (c * c + x * x)
}

/// Complex continuation of [`kernel`] with its first two derivatives.
pub fn kernel_jet(x: C64, c: f64) -> (C64, C64, C64) {
    let d = 1.0 / (x * x + c * c);
    let k = 2.0 * c * d;
    let k1 = -4.0 * c * x * d * d;
    let k2 = -4.0 * c * (c * c - 3.0 * x * x) * d * d * d;
    (k, k1, k2)
}

/// Fermi weight `(1 + e^{ε/T})^{-1}`, evaluated without overflow.
pub fn fermi_weight(epsilon: f64, temperature: f64) -> f64 {
    let x = epsilon / temperature;
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// Complex Fermi weight, evaluated without overflow.
pub fn fermi_weight_c(epsilon: C64, temperature: f64) -> C64 {
    let x = epsilon / temperature;
    if x.re > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// `ln(1 + e^{-ε/T})` with the stable branch `x + ln(1 + e^{-x})` for `ε < 0`.
pub fn log_fermi(epsilon: f64, temperature: f64) -> f64 {
    let x = -epsilon / temperature;
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Real grid covering the region where the Fermi weight exceeds `tail_tol`.
pub fn default_grid(params: &ThermoParams, tail_tol: f64, panels: usize, order: usize) -> Result<QuadGrid> {
    params.validate()?;
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(QnlsError::Config(format!("tail tolerance {tail_tol} outside (0,1)")));
    }
    // e^{-(L²-h)/T} = tail_tol
    let l = (params.temperature * (1.0 / tail_tol).ln() + params.h.max(0.0)).sqrt();
    numerics::gauss_panels(C64::from(-l), C64::from(l), panels, order)
}

fn weighted_kernel(params: &ThermoParams, grid: &QuadGrid) -> DMatrix<f64> {
    let x = grid.real_nodes();
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| kernel(x[i] - x[j], params.c) * grid.weights[j].re)
}

/// Solves `ε = λ² - h - (T/2π) ∫ K(λ-μ) ln(1 + e^{-ε(μ)/T}) dμ` on `grid`.
///
/// Damped Picard iteration (relaxation 0.5) brings the residual down, Newton
/// steps then polish it to `tol` in the sup norm.
pub fn solve_yang_yang(params: &ThermoParams, grid: &QuadGrid, tol: f64) -> Result<(Vec<f64>, SolverReport)> {
    params.validate()?;
    if !(tol > 0.0) {
        return Err(QnlsError::Config(format!("tolerance {tol} must be positive")));
    }
    let x = grid.real_nodes();
    let n = x.len();
    let kw = weighted_kernel(params, grid);
    let t = params.temperature;
    let pref = t / (2.0 * PI);
    let free: DVector<f64> = DVector::from_iterator(n, x.iter().map(|l| l * l - params.h));
    let image = |eps: &DVector<f64>| -> DVector<f64> {
        let lp = DVector::from_iterator(n, eps.iter().map(|e| log_fermi(*e, t)));
        &free - (&kw * lp) * pref
    };
    let mut eps = free.clone();
    let mut history = Vec::new();
    let max_picard = 400;
    let max_newton = 30;
    let mut it = 0;
    loop {
        let f = image(&eps);
        let res = (&f - &eps).amax();
        history.push(res);
        if res <= tol {
            return Ok((
                eps.iter().copied().collect(),
                SolverReport {
                    converged: true,
                    iterations: it,
                    residual: res,
                    history,
                },
            ));
        }
        if !res.is_finite() {
            break;
        }
        let stagnating = history.len() > 5 && res > 0.5 * history[history.len() - 5];
        if it < max_picard && res > 1e-6 && !stagnating {
            eps = &eps + (&f - &eps) * 0.5;
        } else {
            // Jacobian of the map is (1/2π) w_j K_ij ϑ_j.
            let theta: Vec<f64> = eps.iter().map(|e| fermi_weight(*e, t)).collect();
            let mut jac = DMatrix::<f64>::identity(n, n);
            for j in 0..n {
                let s = theta[j] / (2.0 * PI);
                for i in 0..n {
                    jac[(i, j)] -= kw[(i, j)] * s;
                }
            }
            let rhs = &f - &eps;
            let step = jac.lu().solve(&rhs).ok_or_else(|| {
                QnlsError::Singular("Yang-Yang Newton matrix is singular".into())
            })?;
            eps += step;
        }
        it += 1;
        if it > max_picard + max_newton {
            break;
        }
    }
    Err(QnlsError::NonConvergence {
        what: format!(
            "Yang-Yang iteration (residual history {:?})",
            history.iter().rev().take(5).collect::<Vec<_>>()
        ),
        iterations: it,
        residual: *history.last().unwrap_or(&f64::NAN),
    })
}

/// Solves `2πρ_t = 1 + ∫ K(λ-μ) ϑ(μ) ρ_t(μ) dμ` by a Nystrom linear solve.
pub fn solve_density(params: &ThermoParams, theta: &[f64], grid: &QuadGrid) -> Result<Vec<f64>> {
    params.validate()?;
    let n = grid.len();
    if theta.len() != n {
        return Err(QnlsError::Config(format!("{} weights supplied for {n} nodes", theta.len())));
    }
    let kw = weighted_kernel(params, grid);
    let mut a = DMatrix::<f64>::identity(n, n) * (2.0 * PI);
    for j in 0..n {
        for i in 0..n {
            a[(i, j)] -= kw[(i, j)] * theta[j];
        }
    }
    let b = DVector::from_element(n, 1.0);
    let rho = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| QnlsError::Singular("vacancy density system is singular".into()))?;
    let res = (&a * &rho - &b).amax();
    if res > 1e-10 {
        return Err(QnlsError::Accuracy(format!("vacancy density residual {res:.3e} exceeds 1e-10")));
    }
    Ok(rho.iter().copied().collect())
}

impl ThermoState {
    /// Full solve on the default grid (tail tolerance 1e-16, 64 panels of order 16).
    pub fn solve(params: ThermoParams) -> Result<ThermoState> {
        let grid = default_grid(&params, 1e-16, numerics::DEFAULT_PANELS, numerics::DEFAULT_ORDER)?;
        Self::solve_on(params, grid, 1e-13)
    }

    /// Full solve on a supplied grid.
    pub fn solve_on(params: ThermoParams, grid: QuadGrid, tol: f64) -> Result<ThermoState> {
        let (epsilon, report) = solve_yang_yang(&params, &grid, tol)?;
        let t = params.temperature;
        let theta: Vec<f64> = epsilon.iter().map(|e| fermi_weight(*e, t)).collect();
        let rho_t = solve_density(&params, &theta, &grid)?;
        let lnp = epsilon.iter().map(|e| log_fermi(*e, t)).collect();
        let mut state = ThermoState {
            params,
            grid,
            epsilon,
            theta,
            rho_t,
            q_roots: Vec::new(),
            report,
            theta_scale: 1.0,
            lnp,
        };
        state.q_roots = epsilon_roots(&state)?;
        Ok(state)
    }

    /// Support half width of the grid.
    pub fn half_width(&self) -> f64 {
        self.grid
            .panel_edges
            .iter()
            .map(|z| z.re.abs())
            .fold(0.0, f64::max)
    }

    /// Copy with every Fermi weight multiplied by `s`.
    pub fn scaled(&self, s: f64) -> ThermoState {
        let mut out = self.clone();
        out.theta_scale = self.theta_scale * s;
        out.theta = self.theta.iter().map(|t| t * s).collect();
        out
    }

    /// `ε(z)` from the right-hand side of the Yang-Yang equation, valid for complex `z`.
    pub fn epsilon_at(&self, z: C64) -> C64 {
        self.epsilon_jet(z).0
    }

    /// `ε(z)`, `ε'(z)` and `ε''(z)`.
    pub fn epsilon_jet(&self, z: C64) -> (C64, C64, C64) {
        let c = self.params.c;
        let pref = self.params.temperature / (2.0 * PI);
        let mut s0 = C64::new(0.0, 0.0);
        let mut s1 = C64::new(0.0, 0.0);
        let mut s2 = C64::new(0.0, 0.0);
        for ((mu, w), lp) in self.grid.nodes.iter().zip(&self.grid.weights).zip(&self.lnp) {
            let (k, k1, k2) = kernel_jet(z - mu, c);
            let f = w.re * lp;
            s0 += k * f;
            s1 += k1 * f;
            s2 += k2 * f;
        }
        (
            z * z - self.params.h - pref * s0,
            2.0 * z - pref * s1,
            C64::new(2.0, 0.0) - pref * s2,
        )
    }

    /// Analytically continued Fermi weight.
    pub fn theta_at(&self, z: C64) -> C64 {
        fermi_weight_c(self.epsilon_at(z), self.params.temperature) * self.theta_scale
    }

    /// `ϑ(z)`, `ϑ'(z)` and `ϑ''(z)` of the continued Fermi weight.
    pub fn theta_jet(&self, z: C64) -> (C64, C64, C64) {
        let t = self.params.temperature;
        let (e, e1, e2) = self.epsilon_jet(z);
        let th = fermi_weight_c(e, t);
        let q = th * (1.0 - th);
        let d1 = -q * e1 / t;
        // q' = ϑ'(1 - 2ϑ)
        let dq = d1 * (1.0 - 2.0 * th);
        let d2 = -(dq * e1 + q * e2) / t;
        let s = self.theta_scale;
        (th * s, d1 * s, d2 * s)
    }

    /// Fermi weight at a real point.
    pub fn theta_real(&self, x: f64) -> f64 {
        self.theta_at(C64::from(x)).re
    }
}

/// Real zeros of `ε`. Exactly two (symmetric) for `h > 0` and none for `h < 0`.
pub fn epsilon_roots(state: &ThermoState) -> Result<Vec<f64>> {
    let l = state.half_width();
    let roots = bracketed_roots(|x| state.epsilon_at(C64::from(x)).re, -l, l, 1e-14);
    let expected = if state.params.h > 0.0 { 2 } else { 0 };
    if roots.len() != expected {
        return Err(QnlsError::Assumption(format!(
            "found {} real zeros of ε for h = {}, expected {expected}",
            roots.len(),
            state.params.h
        )));
    }
    if expected == 2 && (roots[0] + roots[1]).abs() > 1e-8 * roots[1].abs().max(1.0) {
        return Err(QnlsError::Assumption(format!(
            "zeros of ε are not symmetric: {:?}",
            roots
        )));
    }
    Ok(roots)
}
