//! Brute-force Fredholm determinants of the regularized correlation kernel.
//!
//! The kernel is of integrable form,
//! `V(λ,μ) = ∫ (E₊(λ|u)E₋(μ|u) - E₋(λ|u)E₊(μ|u)) du / (λ - μ)`.
//! Carrying out the `u` integral and the Gaussian smearing leaves a single
//! contour integral over `ξ`:
//!
//! `V(λ,μ) = c(λ)c(μ)(H(λ;μ) - H(μ;λ)) / (4π²(λ - μ))`,
//!
//! `H(λ;μ) = ∫ ρ(ξ)W(ξ,λ)W(ξ,μ)[e^{-φ_D(ξ)}/(ξ-λ-i0) + e^{-φ_A(ξ)}/(ξ-λ+i0)] dξ`,
//!
//! with `W(ξ,λ) = ∫ δ_ε(w-ξ)Z(w,ξ)Z(w,λ) dw`, `N(ξ) = W(ξ,ξ)`,
//! `ρ = e^{ψ+τ}/(N Z(ξ,ξ))` and `c(λ) = Z(λ,λ)√(ϑ/N) e^{(φ_A+φ_D-ψ-τ)/2}`.
//! The `ξ` contour runs along the real axis across the support of `ϑ` and
//! leaves it along rays on which `e^{τ(ξ)}` decays. The `w` integral uses
//! Gauss-Hermite quadrature. The `E±` vectors themselves are available for
//! cross-checks on an explicit `u` grid.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QnlsError, Result};
use crate::fields::FieldSet;
use crate::numerics::{gauss_hermite, lu_determinant, Determinant, QuadGrid, I};
use crate::rankone::{default_eps_reg, tau};
use crate::thermo::ThermoState;

/// Number of scan samples used to locate the support of `ϑ`.
const SUPPORT_SAMPLES: usize = 4000;
/// Largest number of panels on one shifted line of the `E₊` integral.
const MAX_LINE_PANELS: usize = 4096;
/// Gauss-Legendre order on the shifted lines of the `E₊` integral.
const LINE_ORDER: usize = 16;
/// Gaussian tail exponent at which the `E₊` integration window is cut.
const LINE_TAIL: f64 = 40.0;

/// Discretization controls of the Fredholm oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelOptions {
    /// Largest phase of the oscillating factor across one `λ` panel, in radians.
    pub max_phase: f64,
    /// Fermi weights below this value are treated as zero.
    pub tail_tol: f64,
    /// Gauss-Legendre order of the `λ` panels.
    pub order: usize,
    /// Gauss-Legendre order of the `ξ` panels.
    pub xi_order: usize,
    /// Gauss-Hermite order of the smearing integral.
    pub hermite_order: usize,
    /// Gap between the support of `ϑ` and the start of the rays.
    pub margin: f64,
    /// Step of the difference quotient on the diagonal, taken along the imaginary direction.
    pub diag_step: f64,
    /// Decay exponent of `e^{τ}` at the far ends of the rays.
    pub ray_decay: f64,
    /// Length of the real tails used when `t = 0`.
    pub tail_length: f64,
    /// Every `ξ` panel is split into this many equal parts.
    pub xi_subdivide: usize,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions {
            max_phase: 12.0,
            tail_tol: 1e-12,
            order: 16,
            xi_order: 20,
            hermite_order: 20,
            margin: 0.5,
            diag_step: 1e-5,
            ray_decay: 45.0,
            tail_length: 1e4,
            xi_subdivide: 1,
        }
    }
}

/// Everything that determines the kernel `V`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelConfig {
    pub fields: FieldSet,
    pub thermo: ThermoState,
    pub x: f64,
    pub t: f64,
    pub eps_reg: f64,
    /// Distance of the shifted integration lines that realize `±i0` in `E₊`.
    pub principal_value_offset: f64,
    #[serde(default)]
    pub options: KernelOptions,
}

impl KernelConfig {
    /// Configuration with the default regularization for the temperature of
    /// `thermo` and a line offset of `√eps_reg`.
    pub fn new(fields: FieldSet, thermo: ThermoState, x: f64, t: f64) -> Result<KernelConfig> {
        let eps_reg = default_eps_reg(thermo.params.temperature);
        let cfg = KernelConfig {
            fields,
            thermo,
            x,
            t,
            eps_reg,
            principal_value_offset: eps_reg.sqrt(),
            options: KernelOptions::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t >= 0.0 && self.t.is_finite()) || !self.x.is_finite() {
            return Err(QnlsError::Config(format!("invalid (x, t) = ({}, {})", self.x, self.t)));
        }
        if self.t == 0.0 && self.x != 0.0 {
            return Err(QnlsError::Config("t = 0 is only supported together with x = 0".into()));
        }
        if !(self.eps_reg > 0.0 && self.eps_reg.is_finite()) {
            return Err(QnlsError::Config(format!("eps_reg = {} must be positive", self.eps_reg)));
        }
        let delta = self.principal_value_offset;
        if !(delta > 0.0 && delta < 0.4 * self.fields.c) {
            return Err(QnlsError::Config(format!(
                "principal_value_offset = {delta} must lie in (0, 0.4c)"
            )));
        }
        let o = &self.options;
        if o.order < 2 || o.xi_order < 2 || o.hermite_order < 2 || o.xi_subdivide == 0 {
            return Err(QnlsError::Config("quadrature orders must be at least 2".into()));
        }
        if !(o.max_phase > 0.0 && o.tail_tol > 0.0 && o.margin > 0.0 && o.diag_step > 0.0) {
            return Err(QnlsError::Config("kernel options must be positive".into()));
        }
        Ok(())
    }

    /// Stationary point `λ₀ = x/2t` (zero when `t = 0`).
    pub fn lambda0(&self) -> f64 {
        if self.t > 0.0 {
            self.x / (2.0 * self.t)
        } else {
            0.0
        }
    }

    pub fn with_x(&self, x: f64) -> KernelConfig {
        KernelConfig { x, ..self.clone() }
    }

    pub fn with_eps_reg(&self, eps_reg: f64) -> KernelConfig {
        KernelConfig { eps_reg, ..self.clone() }
    }

    fn ic(&self) -> C64 {
        I * self.fields.c
    }

    /// Largest panel length of both grids.
    fn h_max(&self) -> f64 {
        0.5f64.min(0.25 * self.fields.c).min(self.thermo.params.temperature)
    }
}

/// Size and resolution of the discretization used for one determinant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStats {
    pub n_lambda: usize,
    pub n_xi: usize,
    pub lambda_panels: usize,
    pub xi_panels: usize,
    /// Interval on which `ϑ` exceeds the tail tolerance.
    pub support: Option<[f64; 2]>,
    /// Largest phase across one `λ` panel.
    pub max_panel_phase: f64,
    /// Height reached by the `ξ` rays.
    pub ray_height: f64,
    /// Smallest distance between a `λ` node and a `ξ` node.
    pub min_node_separation: f64,
}

/// `det(I + V)` together with the time independent `det(I - K_T/2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetReport {
    pub det: C64,
    pub log_det: C64,
    pub det_kt: C64,
    pub log_det_kt: C64,
    pub stats: GridStats,
}

/// Central difference of `ln det(I + V)` in `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogDerivative {
    pub value: C64,
    pub log_det: C64,
    /// Set when `|ln det|` is below `1e-8` and the difference is dominated by rounding.
    pub cancellation_warning: bool,
}

/// Quadrature path of the `ξ` integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiContour {
    pub grid: QuadGrid,
    pub start: C64,
    pub end: C64,
    /// Real segment `[a, b]` that carries every `λ` node.
    pub segment: [f64; 2],
    pub ray_height: f64,
}

/// Scaled Gauss-Hermite rule for `∫ δ_ε(w - p) f(w) dw`.
#[derive(Debug, Clone)]
struct Smearing {
    offsets: Vec<f64>,
    weights: Vec<f64>,
}

impl Smearing {
    fn new(eps: f64, order: usize) -> Smearing {
        let (x, w) = gauss_hermite(order);
        let s = 2.0 * eps.sqrt();
        Smearing {
            offsets: x.iter().map(|x| s * x).collect(),
            weights: w.iter().map(|w| w / PI.sqrt()).collect(),
        }
    }
}

/// Smearing nodes around a point `p` with `Z(w,p)` and the field exponentials
/// folded into two coefficient vectors, so that
/// `W(p,λ) = Σ pd/(λ - w + ic) + pa/(w - λ + ic)`.
#[derive(Debug, Clone)]
struct Sample {
    w: Vec<C64>,
    pd: Vec<C64>,
    pa: Vec<C64>,
}

fn sample(fields: &FieldSet, sm: &Smearing, p: C64) -> Result<Sample> {
    let ic = I * fields.c;
    let n = sm.offsets.len();
    let mut out = Sample {
        w: Vec::with_capacity(n),
        pd: Vec::with_capacity(n),
        pa: Vec::with_capacity(n),
    };
    for (off, wt) in sm.offsets.iter().zip(&sm.weights) {
        let w = p + off;
        let ed = (-fields.phi_d(w)?).exp();
        let ea = (-fields.phi_a(w)?).exp();
        let z = ed * ic / (p - w + ic) + ea * ic / (w - p + ic);
        out.w.push(w);
        out.pd.push(*wt * z * ed * ic);
        out.pa.push(*wt * z * ea * ic);
    }
    Ok(out)
}

/// `W`, `∂_λW` and `∂²_λW` from sampled smearing coefficients.
#[inline]
fn w_jet(w: &[C64], pd: &[C64], pa: &[C64], lam: C64, ic: C64) -> (C64, C64, C64) {
    let mut s0 = C64::new(0.0, 0.0);
    let mut s1 = C64::new(0.0, 0.0);
    let mut s2 = C64::new(0.0, 0.0);
    for m in 0..w.len() {
        let a1 = (lam - w[m] + ic).inv();
        let a2 = (w[m] - lam + ic).inv();
        let t1 = pd[m] * a1;
        let t2 = pa[m] * a2;
        s0 += t1 + t2;
        s1 += t2 * a2 - t1 * a1;
        s2 += 2.0 * (t1 * a1 * a1 + t2 * a2 * a2);
    }
    (s0, s1, s2)
}

#[inline]
fn w_value(w: &[C64], pd: &[C64], pa: &[C64], lam: C64, ic: C64) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for m in 0..w.len() {
        s += pd[m] / (lam - w[m] + ic) + pa[m] / (w[m] - lam + ic);
    }
    s
}

impl Sample {
    fn value(&self, lam: C64, ic: C64) -> C64 {
        w_value(&self.w, &self.pd, &self.pa, lam, ic)
    }

    fn jet(&self, lam: C64, ic: C64) -> (C64, C64, C64) {
        w_jet(&self.w, &self.pd, &self.pa, lam, ic)
    }
}

/// `e^{-φ_D(p)}`, `e^{-φ_A(p)}` and `e^{ψ(p)+τ(p)}`.
fn exponentials(cfg: &KernelConfig, p: C64) -> Result<(C64, C64, C64)> {
    let f = &cfg.fields;
    Ok((
        (-f.phi_d(p)?).exp(),
        (-f.phi_a(p)?).exp(),
        (f.psi(p)? + tau(p, cfg.x, cfg.t)).exp(),
    ))
}

/// Smearing data of every `ξ` node, flattened.
struct XiTable {
    xi: Vec<C64>,
    weights: Vec<C64>,
    /// `w_k e^{ψ+τ}(ξ_k)/N(ξ_k)`.
    g: Vec<C64>,
    w: Vec<C64>,
    pd: Vec<C64>,
    pa: Vec<C64>,
    nh: usize,
    start: C64,
    end: C64,
}

impl XiTable {
    fn new(cfg: &KernelConfig, sm: &Smearing, contour: &XiContour) -> Result<XiTable> {
        let ic = cfg.ic();
        let nh = sm.offsets.len();
        let rows: Vec<(Sample, C64)> = contour
            .grid
            .nodes
            .par_iter()
            .zip(contour.grid.weights.par_iter())
            .map(|(xi, wt)| {
                let s = sample(&cfg.fields, sm, *xi)?;
                let n = s.value(*xi, ic);
                let (_, _, e) = exponentials(cfg, *xi)?;
                Ok((s, wt * e / n))
            })
            .collect::<Result<_>>()?;
        let mut t = XiTable {
            xi: contour.grid.nodes.clone(),
            weights: contour.grid.weights.clone(),
            g: Vec::with_capacity(rows.len()),
            w: Vec::with_capacity(rows.len() * nh),
            pd: Vec::with_capacity(rows.len() * nh),
            pa: Vec::with_capacity(rows.len() * nh),
            nh,
            start: contour.start,
            end: contour.end,
        };
        for (s, g) in rows {
            t.g.push(g);
            t.w.extend(s.w);
            t.pd.extend(s.pd);
            t.pa.extend(s.pa);
        }
        Ok(t)
    }

    fn len(&self) -> usize {
        self.xi.len()
    }

    fn jet(&self, k: usize, lam: C64, ic: C64) -> (C64, C64, C64) {
        let r = k * self.nh..(k + 1) * self.nh;
        w_jet(&self.w[r.clone()], &self.pd[r.clone()], &self.pa[r], lam, ic)
    }

    fn value(&self, k: usize, lam: C64, ic: C64) -> C64 {
        let r = k * self.nh..(k + 1) * self.nh;
        w_value(&self.w[r.clone()], &self.pd[r.clone()], &self.pa[r], lam, ic)
    }

    /// `PV∫ dξ/(ξ - λ)` along the whole contour.
    fn cauchy_total(&self, l: C64) -> C64 {
        let mut tail = (self.start - l).ln();
        if tail.im > 0.5 * PI {
            tail -= 2.0 * PI * I;
        }
        (self.end - l).ln() - I * PI - tail
    }
}

/// Everything attached to one `λ` point (real for grid nodes, complex for
/// the shifted points of the diagonal difference).
struct LambdaPoint {
    lam: C64,
    sample: Sample,
    /// Coefficient of `W(λ,μ)` that completes the subtracted principal value.
    d: C64,
    c: C64,
}

fn lambda_point(cfg: &KernelConfig, sm: &Smearing, xt: &XiTable, p: C64) -> Result<LambdaPoint> {
    let ic = cfg.ic();
    let s = sample(&cfg.fields, sm, p)?;
    let n = s.value(p, ic);
    let (ed, ea, e) = exponentials(cfg, p)?;
    let zd = ed + ea;
    let sigma: C64 = xt.xi.iter().zip(&xt.weights).map(|(xi, w)| w / (xi - p)).sum();
    let d = e * ((xt.cauchy_total(p) - sigma) + I * PI * (ed - ea) / zd);
    let c = if p.im == 0.0 {
        prefactor_from(cfg, p.re, n, zd)?
    } else {
        C64::new(0.0, 0.0)
    };
    Ok(LambdaPoint { lam: p, sample: s, d, c })
}

/// `Z(λ,λ)√(ϑ/N) e^{(φ_A+φ_D-ψ-τ)/2}`.
fn prefactor_from(cfg: &KernelConfig, lam: f64, n: C64, zd: C64) -> Result<C64> {
    let theta = cfg.thermo.theta_real(lam).max(0.0);
    if theta == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let p = C64::from(lam);
    let f = &cfg.fields;
    let expo = 0.5 * (f.phi_a(p)? + f.phi_d(p)? - f.psi(p)? - tau(p, cfg.x, cfg.t));
    let v = zd * (theta / n).sqrt() * expo.exp();
    if !(v.re.is_finite() && v.im.is_finite()) {
        return Err(QnlsError::Numerical(format!("non-finite kernel prefactor at λ = {lam}")));
    }
    Ok(v)
}

fn prefactor(cfg: &KernelConfig, sm: &Smearing, lam: f64) -> Result<C64> {
    let p = C64::from(lam);
    let n = sample(&cfg.fields, sm, p)?.value(p, cfg.ic());
    prefactor_from(cfg, lam, n, cfg.fields.z_diag(p)?)
}

/// Interval on which `ϑ` exceeds `tail_tol`, or `None` when it never does.
pub fn theta_support(thermo: &ThermoState, tail_tol: f64) -> Option<(f64, f64)> {
    let l = thermo.half_width();
    let xs: Vec<f64> = (0..=SUPPORT_SAMPLES)
        .map(|k| -l + 2.0 * l * k as f64 / SUPPORT_SAMPLES as f64)
        .collect();
    let f = |x: f64| thermo.theta_real(x) - tail_tol;
    let inside: Vec<bool> = xs.iter().map(|x| f(*x) > 0.0).collect();
    let first = inside.iter().position(|b| *b)?;
    let last = inside.iter().rposition(|b| *b)?;
    let refine = |mut out: f64, mut inn: f64| {
        for _ in 0..60 {
            let m = 0.5 * (out + inn);
            if f(m) > 0.0 {
                inn = m;
            } else {
                out = m;
            }
        }
        inn
    };
    let lo = if first == 0 { xs[0] } else { refine(xs[first - 1], xs[first]) };
    let hi = if last == SUPPORT_SAMPLES { xs[last] } else { refine(xs[last + 1], xs[last]) };
    Some((lo, hi))
}

/// Edges on the straight path `p → q` such that every piece is at most
/// `h_max` long and `rate·|z - center|·length ≤ max_phase`.
fn path_edges(p: C64, q: C64, center: f64, rate: f64, h_max: f64, max_phase: f64) -> Vec<C64> {
    let total = (q - p).norm();
    let mut out = vec![p];
    if total == 0.0 {
        return out;
    }
    let dir = (q - p) / total;
    let c = C64::from(center);
    let mut s = 0.0;
    while s < total {
        let mut len = h_max.min(total - s);
        let r = rate * (p + dir * s - c).norm().max((p + dir * (s + len) - c).norm());
        if r * len > max_phase {
            len = max_phase / r;
        }
        s += len;
        if total - s < 1e-12 * total.max(1.0) {
            s = total;
        }
        out.push(if s == total { q } else { p + dir * s });
    }
    out
}

/// Real edges from `lo` to `hi`, with `center` inserted when it lies inside.
fn real_edges(lo: f64, hi: f64, center: f64, rate: f64, h_max: f64, max_phase: f64) -> Vec<C64> {
    let (a, b) = (C64::from(lo), C64::from(hi));
    if center > lo && center < hi {
        let mut e = path_edges(a, C64::from(center), center, rate, h_max, max_phase);
        e.pop();
        e.extend(path_edges(C64::from(center), b, center, rate, h_max, max_phase));
        e
    } else {
        path_edges(a, b, center, rate, h_max, max_phase)
    }
}

/// Default `λ` grid: the support of `ϑ`, split into panels whose phase of
/// `e^{τ/2}` stays below `max_phase`. `None` when the support is empty.
pub fn lambda_grid(cfg: &KernelConfig) -> Result<Option<QuadGrid>> {
    let Some((lo, hi)) = theta_support(&cfg.thermo, cfg.options.tail_tol) else {
        return Ok(None);
    };
    let edges = real_edges(lo, hi, cfg.lambda0(), cfg.t, cfg.h_max(), cfg.options.max_phase);
    Ok(Some(QuadGrid::from_edges(&edges, cfg.options.order)?))
}

/// Largest phase of `e^{τ/2}` across one panel of a real `λ` grid.
pub fn max_panel_phase(grid: &QuadGrid, lambda0: f64, t: f64) -> f64 {
    grid.panel_edges
        .windows(2)
        .map(|e| t * (e[0].re - lambda0).abs().max((e[1].re - lambda0).abs()) * (e[1].re - e[0].re).abs())
        .fold(0.0, f64::max)
}

/// Fails with a resolution error (and a suggested panel count) when a user
/// grid does not resolve the oscillation of the kernel.
pub fn check_resolution(cfg: &KernelConfig, grid: &QuadGrid) -> Result<f64> {
    if grid.nodes.iter().any(|z| z.im != 0.0) {
        return Err(QnlsError::Config("the λ grid must be real".into()));
    }
    let phase = max_panel_phase(grid, cfg.lambda0(), cfg.t);
    let limit = cfg.options.max_phase * grid.order as f64 / cfg.options.order as f64;
    if phase > limit * (1.0 + 1e-9) {
        let lo = grid.panel_edges.first().map(|z| z.re).unwrap_or(0.0);
        let hi = grid.panel_edges.last().map(|z| z.re).unwrap_or(0.0);
        let suggested = real_edges(lo, hi, cfg.lambda0(), cfg.t, f64::INFINITY, limit).len() - 1;
        return Err(QnlsError::Resolution(format!(
            "phase per panel {phase:.3} exceeds {limit:.3}; use at least {suggested} panels of order {}",
            grid.order
        )));
    }
    Ok(phase)
}

/// The `ξ` contour for `λ` nodes inside `[lo, hi]`.
pub fn xi_contour(cfg: &KernelConfig, lo: f64, hi: f64) -> Result<XiContour> {
    let o = &cfg.options;
    let l0 = cfg.lambda0();
    let a = (lo - o.margin).min(l0 - o.margin);
    let b = (hi + o.margin).max(l0 + o.margin);
    let h = cfg.h_max();
    let rate = 2.0 * cfg.t;
    let phase = o.max_phase * o.xi_order as f64 / o.order as f64;
    let mut left: Vec<C64>;
    let mut right: Vec<C64>;
    let mut height = 0.0;
    if cfg.t > 0.0 {
        let cap = 0.4 * cfg.fields.c;
        let ray = |d: f64| {
            let y = 0.5 * (-d + (d * d + 4.0 * o.ray_decay / (2.0 * cfg.t)).sqrt());
            y.min(cap)
        };
        let diag = C64::new(1.0, 1.0);
        let yr = ray(b - l0);
        let yl = ray(l0 - a);
        height = yr.max(yl);
        right = path_edges(C64::from(b), b + yr * diag, l0, rate, h, phase);
        if yr >= cap {
            let x_far = l0 + o.ray_decay / (2.0 * cfg.t * cap);
            let corner = b + yr * diag;
            if x_far > corner.re {
                right.pop();
                right.extend(path_edges(corner, C64::new(x_far, cap), l0, rate, h, phase));
            }
        }
        left = path_edges(a - yl * diag, C64::from(a), l0, rate, h, phase);
        if yl >= cap {
            let x_far = l0 - o.ray_decay / (2.0 * cfg.t * cap);
            let corner = a - yl * diag;
            if x_far < corner.re {
                let mut ext = path_edges(C64::new(x_far, -cap), corner, l0, rate, h, phase);
                ext.pop();
                ext.extend(left);
                left = ext;
            }
        }
    } else {
        let geometric = |from: f64, sign: f64| {
            let mut e = vec![C64::from(from)];
            let mut d = o.margin;
            while d < o.tail_length {
                d = (2.0 * d).min(o.tail_length);
                e.push(C64::from(from + sign * d));
            }
            e
        };
        right = geometric(b, 1.0);
        left = geometric(a, -1.0);
        left.reverse();
    }
    let mut edges = left;
    edges.pop();
    edges.extend(real_edges(a, b, l0, rate, h, phase));
    edges.pop();
    edges.extend(right);
    let edges = subdivide(&edges, o.xi_subdivide);
    let grid = QuadGrid::from_edges(&edges, o.xi_order)?;
    for z in &grid.nodes {
        cfg.fields.check_strip(*z)?;
    }
    Ok(XiContour {
        start: edges[0],
        end: *edges.last().expect("nonempty contour"),
        grid,
        segment: [a, b],
        ray_height: height,
    })
}

fn subdivide(edges: &[C64], parts: usize) -> Vec<C64> {
    let mut out = vec![edges[0]];
    for e in edges.windows(2) {
        for k in 1..=parts {
            out.push(e[0] + (e[1] - e[0]) * (k as f64 / parts as f64));
        }
    }
    out
}

/// Splits every panel of a grid into two.
pub fn refine_grid(grid: &QuadGrid) -> Result<QuadGrid> {
    QuadGrid::from_edges(&subdivide(&grid.panel_edges, 2), grid.order)
}

/// Kernel matrix `V(λ_i, λ_j)` on distinct real points, with the diagonal
/// filled by its coincidence limit.
struct Assembled {
    v: DMatrix<C64>,
    min_separation: f64,
    n_xi: usize,
    xi_panels: usize,
    ray_height: f64,
}

fn assemble(cfg: &KernelConfig, lambdas: &[f64], contour: &XiContour) -> Result<Assembled> {
    let n = lambdas.len();
    let ic = cfg.ic();
    let sm = Smearing::new(cfg.eps_reg, cfg.options.hermite_order);
    let xt = XiTable::new(cfg, &sm, contour)?;
    let kx = xt.len();
    let h = cfg.options.diag_step;
    let shifts = [I * h, -I * h, 2.0 * I * h, -2.0 * I * h];
    let points: Vec<[LambdaPoint; 5]> = lambdas
        .par_iter()
        .map(|l| {
            let p = C64::from(*l);
            Ok([
                lambda_point(cfg, &sm, &xt, p)?,
                lambda_point(cfg, &sm, &xt, p + shifts[0])?,
                lambda_point(cfg, &sm, &xt, p + shifts[1])?,
                lambda_point(cfg, &sm, &xt, p + shifts[2])?,
                lambda_point(cfg, &sm, &xt, p + shifts[3])?,
            ])
        })
        .collect::<Result<_>>()?;
    let mut gr = DMatrix::<f64>::zeros(kx, n);
    let mut gi = DMatrix::<f64>::zeros(kx, n);
    let mut br = DMatrix::<f64>::zeros(kx, n);
    let mut bi = DMatrix::<f64>::zeros(kx, n);
    let diag: Vec<C64> = gr
        .as_mut_slice()
        .par_chunks_mut(kx)
        .zip(gi.as_mut_slice().par_chunks_mut(kx))
        .zip(br.as_mut_slice().par_chunks_mut(kx))
        .zip(bi.as_mut_slice().par_chunks_mut(kx))
        .enumerate()
        .map(|(j, (((cr, ci), dr), di))| {
            let pts = &points[j];
            let lam = pts[0].lam;
            let mut d2 = C64::new(0.0, 0.0);
            let mut hs = [C64::new(0.0, 0.0); 4];
            for k in 0..kx {
                let (w0, w1, w2) = xt.jet(k, lam, ic);
                let dxi = xt.xi[k] - lam;
                let b = xt.g[k] * w0 / dxi;
                cr[k] = w0.re;
                ci[k] = w0.im;
                dr[k] = b.re;
                di[k] = b.im;
                d2 += b * w1;
                for (acc, s) in hs.iter_mut().zip(&shifts) {
                    let ws = w0 + s * w1 + 0.5 * s * s * w2;
                    *acc += xt.g[k] * ws * w0 / (dxi - s);
                }
            }
            d2 += pts[0].d * pts[0].sample.jet(lam, ic).1;
            for (acc, p) in hs.iter_mut().zip(&pts[1..]) {
                *acc += p.d * p.sample.value(lam, ic);
            }
            let d1 = (8.0 * (hs[0] - hs[1]) - (hs[2] - hs[3])) / (12.0 * I * h);
            pts[0].c * pts[0].c * (d1 - d2) / (4.0 * PI * PI)
        })
        .collect();
    let brt = br.transpose();
    let bit = bi.transpose();
    drop(br);
    drop(bi);
    let hr = &brt * &gr - &bit * &gi;
    let hi = &brt * &gi + &bit * &gr;
    drop((brt, bit, gr, gi));
    let rows: Vec<Vec<C64>> = points
        .par_iter()
        .map(|p| {
            let p0 = &p[0];
            lambdas.iter().map(|l| p0.d * p0.sample.value(C64::from(*l), ic)).collect()
        })
        .collect();
    let hmat = DMatrix::from_fn(n, n, |i, j| C64::new(hr[(i, j)], hi[(i, j)]) + rows[i][j]);
    let v = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else {
            let (ci, cj) = (points[i][0].c, points[j][0].c);
            ci * cj * (hmat[(i, j)] - hmat[(j, i)]) / (4.0 * PI * PI * (lambdas[i] - lambdas[j]))
        }
    });
    if v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(QnlsError::Numerical("non-finite kernel entry".into()));
    }
    let min_separation = lambdas
        .iter()
        .flat_map(|l| xt.xi.iter().map(move |xi| (xi - l).norm()))
        .fold(f64::INFINITY, f64::min);
    Ok(Assembled {
        v,
        min_separation,
        n_xi: kx,
        xi_panels: contour.grid.panels(),
        ray_height: contour.ray_height,
    })
}

fn span(lambdas: &[f64]) -> (f64, f64) {
    lambdas
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), l| (a.min(*l), b.max(*l)))
}

/// Kernel matrix `V(λ_i, λ_j)` on a set of distinct real points.
pub fn kernel_matrix(cfg: &KernelConfig, lambdas: &[f64]) -> Result<DMatrix<C64>> {
    cfg.validate()?;
    if lambdas.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    if sorted.windows(2).any(|p| p[0] == p[1]) {
        return Err(QnlsError::Config("kernel points must be distinct".into()));
    }
    let (lo, hi) = span(lambdas);
    let contour = xi_contour(cfg, lo, hi)?;
    Ok(assemble(cfg, lambdas, &contour)?.v)
}

/// `V(λ, μ)`, including the coincidence limit `λ = μ`.
pub fn kernel_v(cfg: &KernelConfig, lambda: f64, mu: f64) -> Result<C64> {
    if lambda == mu {
        Ok(kernel_matrix(cfg, &[lambda])?[(0, 0)])
    } else {
        Ok(kernel_matrix(cfg, &[lambda, mu])?[(0, 1)])
    }
}

/// Numerator `∫(E₊(λ|u)E₋(μ|u) - E₋(λ|u)E₊(μ|u))du` of the kernel.
pub fn numerator(cfg: &KernelConfig, lambda: f64, mu: f64) -> Result<C64> {
    cfg.validate()?;
    let ic = cfg.ic();
    let (lo, hi) = span(&[lambda, mu]);
    let contour = xi_contour(cfg, lo, hi)?;
    let sm = Smearing::new(cfg.eps_reg, cfg.options.hermite_order);
    let xt = XiTable::new(cfg, &sm, &contour)?;
    let pl = lambda_point(cfg, &sm, &xt, C64::from(lambda))?;
    let pm = lambda_point(cfg, &sm, &xt, C64::from(mu))?;
    let half = |p: &LambdaPoint, q: &LambdaPoint| {
        let (lp, lq) = (p.lam, q.lam);
        let s: C64 = (0..xt.len())
            .map(|k| xt.g[k] * xt.value(k, lp, ic) * xt.value(k, lq, ic) / (xt.xi[k] - lp))
            .sum();
        s + p.d * p.sample.value(lq, ic)
    };
    Ok(pl.c * pm.c * (half(&pl, &pm) - half(&pm, &pl)) / (4.0 * PI * PI))
}

/// `E₋(λ|u) = Z(u,λ)c(λ)/2π` on the nodes of `ugrid`.
pub fn e_minus(cfg: &KernelConfig, lambda: f64, ugrid: &QuadGrid) -> Result<Vec<C64>> {
    cfg.validate()?;
    let sm = Smearing::new(cfg.eps_reg, cfg.options.hermite_order);
    let c = prefactor(cfg, &sm, lambda)?;
    let lam = C64::from(lambda);
    ugrid
        .nodes
        .iter()
        .map(|u| Ok(cfg.fields.z_fn(*u, lam)? * c / (2.0 * PI)))
        .collect()
}

/// `E₊(λ|u) = E^ε(λ|u)E₋(λ|u)` on the nodes of `ugrid`, with `±i0` realized
/// by shifting the two parts of the `ξ` integral to `Im ξ = ∓δ`.
pub fn e_plus(cfg: &KernelConfig, lambda: f64, ugrid: &QuadGrid) -> Result<Vec<C64>> {
    e_plus_prescribed(cfg, lambda, ugrid, false)
}

/// [`e_plus`] with the two line shifts exchanged when `swapped` is set.
pub fn e_plus_prescribed(cfg: &KernelConfig, lambda: f64, ugrid: &QuadGrid, swapped: bool) -> Result<Vec<C64>> {
    cfg.validate()?;
    let sm = Smearing::new(cfg.eps_reg, cfg.options.hermite_order);
    let c = prefactor(cfg, &sm, lambda)?;
    if c == C64::new(0.0, 0.0) {
        return Ok(vec![C64::new(0.0, 0.0); ugrid.len()]);
    }
    let delta = cfg.principal_value_offset;
    let root = cfg.eps_reg.sqrt();
    let reach = (4.0 * cfg.eps_reg * LINE_TAIL + delta * delta).sqrt();
    let len = delta.min(root);
    let panels = (2.0 * reach / len).ceil() as usize;
    if panels > MAX_LINE_PANELS {
        return Err(QnlsError::Accuracy(format!(
            "principal_value_offset {delta:.3e} needs {panels} panels of spacing below the offset (limit {MAX_LINE_PANELS})"
        )));
    }
    let shift = if swapped { -delta } else { delta };
    ugrid
        .nodes
        .par_iter()
        .map(|u| {
            let u = u.re;
            let mut total = C64::new(0.0, 0.0);
            for (im, use_d) in [(-shift, true), (shift, false)] {
                let a = C64::new(u - reach, im);
                let b = C64::new(u + reach, im);
                let line = crate::numerics::gauss_panels(a, b, panels, LINE_ORDER)?;
                for (xi, w) in line.nodes.iter().zip(&line.weights) {
                    total += w * smeared_pole_integrand(cfg, &sm, lambda, u, *xi, use_d)?;
                }
            }
            Ok(c * total / (2.0 * PI))
        })
        .collect()
}

fn smeared_pole_integrand(cfg: &KernelConfig, sm: &Smearing, lambda: f64, u: f64, xi: C64, use_d: bool) -> Result<C64> {
    let ic = cfg.ic();
    let s = sample(&cfg.fields, sm, xi)?;
    let n = s.value(xi, ic);
    let (ed, ea, e) = exponentials(cfg, xi)?;
    let rho = e / (n * (ed + ea));
    let v = C64::from(u) - xi;
    let gauss = (-v * v / (4.0 * cfg.eps_reg)).exp() / (2.0 * (PI * cfg.eps_reg).sqrt());
    let zu = cfg.fields.z_fn(C64::from(u), xi)?;
    let factor = if use_d { ed } else { ea };
    Ok(rho * gauss * zu * s.value(C64::from(lambda), ic) * factor / (xi - lambda))
}

/// `det(I - K_T/2π)` with `K_T = 2c√(ϑ(λ)ϑ(μ))/((λ-μ)² + c²)`.
pub fn det_kt(thermo: &ThermoState, c: f64, options: &KernelOptions) -> Result<Determinant> {
    let Some((lo, hi)) = theta_support(thermo, options.tail_tol) else {
        return Ok(Determinant {
            det: C64::new(1.0, 0.0),
            log_det: C64::new(0.0, 0.0),
        });
    };
    let h = 0.5f64.min(0.25 * c).min(thermo.params.temperature);
    let grid = QuadGrid::from_edges(&real_edges(lo, hi, 0.0, 0.0, h, 1.0), options.order)?;
    let lam = grid.real_nodes();
    let sw: Vec<f64> = lam
        .iter()
        .zip(&grid.weights)
        .map(|(l, w)| (w.re * thermo.theta_real(*l).max(0.0)).sqrt())
        .collect();
    let n = lam.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let d = lam[i] - lam[j];
        let k = 2.0 * c / (d * d + c * c) * sw[i] * sw[j] / (2.0 * PI);
        C64::from(if i == j { 1.0 - k } else { -k })
    });
    lu_determinant(m)
}

/// `det(I + V)` on `grid` (or the default grid) without the `K_T` factor.
pub fn det_v_only(cfg: &KernelConfig, grid: Option<&QuadGrid>) -> Result<(Determinant, GridStats)> {
    cfg.validate()?;
    let own;
    let grid = match grid {
        Some(g) => {
            check_resolution(cfg, g)?;
            Some(g)
        }
        None => {
            own = lambda_grid(cfg)?;
            own.as_ref()
        }
    };
    let support = theta_support(&cfg.thermo, cfg.options.tail_tol).map(|(a, b)| [a, b]);
    let Some(grid) = grid else {
        let stats = GridStats {
            n_lambda: 0,
            n_xi: 0,
            lambda_panels: 0,
            xi_panels: 0,
            support,
            max_panel_phase: 0.0,
            ray_height: 0.0,
            min_node_separation: f64::INFINITY,
        };
        return Ok((
            Determinant {
                det: C64::new(1.0, 0.0),
                log_det: C64::new(0.0, 0.0),
            },
            stats,
        ));
    };
    let lambdas = grid.real_nodes();
    let (lo, hi) = span(&lambdas);
    let contour = xi_contour(cfg, lo, hi)?;
    let a = assemble(cfg, &lambdas, &contour)?;
    let sw: Vec<f64> = grid.weights.iter().map(|w| w.re.sqrt()).collect();
    let n = lambdas.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let e = a.v[(i, j)] * sw[i] * sw[j];
        if i == j {
            e + 1.0
        } else {
            e
        }
    });
    let det = lu_determinant(m)?;
    let stats = GridStats {
        n_lambda: n,
        n_xi: a.n_xi,
        lambda_panels: grid.panels(),
        xi_panels: a.xi_panels,
        support,
        max_panel_phase: max_panel_phase(grid, cfg.lambda0(), cfg.t),
        ray_height: a.ray_height,
        min_node_separation: a.min_separation,
    };
    Ok((det, stats))
}

/// `det(I + V)` and `det(I - K_T/2π)` with grid statistics.
pub fn det_v(cfg: &KernelConfig, grid: Option<&QuadGrid>) -> Result<DetReport> {
    let (d, stats) = det_v_only(cfg, grid)?;
    let kt = det_kt(&cfg.thermo, cfg.fields.c, &cfg.options)?;
    Ok(DetReport {
        det: d.det,
        log_det: d.log_det,
        det_kt: kt.det,
        log_det_kt: kt.log_det,
        stats,
    })
}

/// `∂_x ln det(I + V)` by a central difference of step `dx` on a fixed `λ` grid.
pub fn logdet_derivative_x(cfg: &KernelConfig, grid: Option<&QuadGrid>, dx: f64) -> Result<LogDerivative> {
    cfg.validate()?;
    if !(dx > 0.0) {
        return Err(QnlsError::Config(format!("step dx = {dx} must be positive")));
    }
    let own;
    let grid = match grid {
        Some(g) => Some(g),
        None => {
            let mut tight = cfg.clone();
            tight.options.max_phase *= 0.9;
            own = lambda_grid(&tight)?;
            own.as_ref()
        }
    };
    let (centre, _) = det_v_only(cfg, grid)?;
    if grid.is_none() {
        return Ok(LogDerivative {
            value: C64::new(0.0, 0.0),
            log_det: centre.log_det,
            cancellation_warning: true,
        });
    }
    let (plus, _) = det_v_only(&cfg.with_x(cfg.x + dx), grid)?;
    let (minus, _) = det_v_only(&cfg.with_x(cfg.x - dx), grid)?;
    let ratio = (plus.log_det - minus.log_det).exp();
    let value = ratio.ln() / (2.0 * dx);
    Ok(LogDerivative {
        value,
        log_det: centre.log_det,
        cancellation_warning: centre.log_det.norm() < 1e-8,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermo::ThermoParams;

    fn config(c: f64, h: f64, temperature: f64, x: f64, t: f64) -> KernelConfig {
        let thermo = ThermoState::solve(ThermoParams::new(c, h, temperature).unwrap()).unwrap();
        KernelConfig::new(FieldSet::zero(c), thermo, x, t).unwrap()
    }

    fn constant_phase_fields(c: f64) -> FieldSet {
        use crate::fields::{FieldModel, FieldSetSpec};
        let spec = FieldSetSpec {
            psi: FieldModel::Zero,
            phi_a: FieldModel::AffineLog {
                a: C64::new(0.0, 0.0),
                b: C64::new(0.0, 0.3),
            },
            phi_d: FieldModel::AffineLog {
                a: C64::new(0.0, 0.0),
                b: C64::new(0.0, -0.2),
            },
        };
        FieldSet::new(&spec, c).unwrap()
    }

    #[test]
    fn hermite_smearing_normalization() {
        let cfg = config(2.0, -0.5, 1.0, 0.0, 0.0);
        let sm = Smearing::new(cfg.eps_reg, 20);
        let s = sample(&cfg.fields, &sm, C64::from(0.3)).unwrap();
        // Zero fields: Z(w,λ) = 2c²/((w-λ)²+c²); compare with Simpson.
        let c: f64 = 2.0;
        let eps = cfg.eps_reg;
        let z = |w: f64, l: f64| 2.0 * c * c / ((w - l) * (w - l) + c * c);
        let n = 20000;
        let (a, b) = (0.3 - 2.0, 0.3 + 2.0);
        let hstep = (b - a) / n as f64;
        let simpson: f64 = (0..=n)
            .map(|k| {
                let w = a + hstep * k as f64;
                let m = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                m * crate::rankone::delta_eps(w - 0.3, eps) * z(w, 0.3) * z(w, 1.1)
            })
            .sum::<f64>()
            * hstep
            / 3.0;
        let v = s.value(C64::from(1.1), cfg.ic());
        assert!((v.re - simpson).abs() < 1e-12, "{v} vs {simpson}");
        assert!(v.im.abs() < 1e-14);
    }

    #[test]
    fn jet_matches_finite_differences() {
        let cfg = config(2.0, -0.5, 1.0, 0.0, 0.0);
        let sm = Smearing::new(cfg.eps_reg, 20);
        let s = sample(&cfg.fields, &sm, C64::new(0.2, 0.3)).unwrap();
        let ic = cfg.ic();
        let l = C64::from(0.7);
        let h = 1e-4;
        let (_, d1, d2) = s.jet(l, ic);
        let (fp, f0, fm) = (s.value(l + h, ic), s.value(l, ic), s.value(l - h, ic));
        assert!((d1 - (fp - fm) / (2.0 * h)).norm() < 1e-7);
        assert!((d2 - (fp - 2.0 * f0 + fm) / (h * h)).norm() < 1e-5);
    }

    #[test]
    fn empty_occupation_gives_unit_determinant() {
        let cfg = config(2.0, -0.5, 1.0, 0.0, 1.0);
        let cold = KernelConfig {
            thermo: cfg.thermo.scaled(0.0),
            ..cfg
        };
        let r = det_v(&cold, None).unwrap();
        assert_eq!(r.det, C64::new(1.0, 0.0));
        assert_eq!(r.stats.n_lambda, 0);
        let ugrid = crate::numerics::gauss_panels(C64::from(-3.0), C64::from(3.0), 6, 8).unwrap();
        assert!(e_minus(&cold, 0.2, &ugrid).unwrap().iter().all(|z| z.norm() == 0.0));
        assert!(e_plus(&cold, 0.2, &ugrid).unwrap().iter().all(|z| z.norm() == 0.0));
        let d = logdet_derivative_x(&cold, None, 1e-3).unwrap();
        assert_eq!(d.value, C64::new(0.0, 0.0));
    }

    #[test]
    fn numerator_is_antisymmetric() {
        let cfg = config(2.0, -0.5, 1.0, 0.4, 2.0);
        let a = numerator(&cfg, 0.3, -0.8).unwrap();
        let b = numerator(&cfg, -0.8, 0.3).unwrap();
        assert!((a + b).norm() <= 1e-12 * a.norm());
        assert!(a.norm() > 1e-6);
    }

    #[test]
    fn kernel_matches_numerator_off_diagonal() {
        let cfg = config(2.0, -0.5, 1.0, 0.4, 2.0);
        let v = kernel_v(&cfg, 0.3, -0.8).unwrap();
        let n = numerator(&cfg, 0.3, -0.8).unwrap();
        assert!((v - n / 1.1).norm() < 1e-10 * v.norm());
    }

    #[test]
    fn diagonal_is_the_coincidence_limit() {
        let cfg = config(2.0, -0.5, 1.0, 0.4, 2.0);
        let d = kernel_v(&cfg, 0.3, 0.3).unwrap();
        let near = 0.5 * (kernel_v(&cfg, 0.3, 0.3 + 1e-3).unwrap() + kernel_v(&cfg, 0.3, 0.3 - 1e-3).unwrap());
        assert!((d - near).norm() < 1e-5 * d.norm(), "{d} vs {near}");
    }

    #[test]
    fn kt_determinant_ignores_time_and_distance() {
        let a = config(2.0, -0.5, 1.0, 0.0, 0.0);
        let b = config(2.0, -0.5, 1.0, 3.0, 5.0);
        let da = det_kt(&a.thermo, a.fields.c, &a.options).unwrap();
        let db = det_kt(&b.thermo, b.fields.c, &b.options).unwrap();
        assert_eq!(da.det, db.det);
        assert!(da.det.re > 0.0 && da.det.re < 1.0);
    }

    #[test]
    fn coarse_user_grid_is_rejected() {
        let cfg = config(2.0, -0.5, 1.0, 0.0, 30.0);
        let g = crate::numerics::gauss_panels(C64::from(-5.0), C64::from(5.0), 4, 16).unwrap();
        match det_v(&cfg, Some(&g)) {
            Err(QnlsError::Resolution(msg)) => assert!(msg.contains("panels")),
            other => panic!("expected resolution error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configurations() {
        let mut cfg = config(2.0, -0.5, 1.0, 0.0, 1.0);
        cfg.eps_reg = 0.0;
        assert!(matches!(cfg.validate(), Err(QnlsError::Config(_))));
        let cfg = config(2.0, -0.5, 1.0, 0.0, 1.0);
        let bad = KernelConfig { t: 0.0, x: 1.0, ..cfg };
        assert!(matches!(bad.validate(), Err(QnlsError::Config(_))));
    }

    #[test]
    fn tiny_offset_is_an_accuracy_error() {
        let mut cfg = config(2.0, -0.5, 1.0, 0.0, 1.0);
        cfg.principal_value_offset = 1e-6;
        let ugrid = crate::numerics::gauss_panels(C64::from(-1.0), C64::from(1.0), 1, 4).unwrap();
        assert!(matches!(e_plus(&cfg, 0.1, &ugrid), Err(QnlsError::Accuracy(_))));
    }

    #[test]
    fn origin_determinant_is_grid_converged() {
        let cfg = config(2.0, -0.5, 1.0, 0.0, 0.0);
        let base = det_v(&cfg, None).unwrap();
        let fine_grid = refine_grid(&lambda_grid(&cfg).unwrap().unwrap()).unwrap();
        let mut fine = cfg.clone();
        fine.options.xi_subdivide = 2;
        let refined = det_v(&fine, Some(&fine_grid)).unwrap();
        assert!((base.det - refined.det).norm() < 1e-6 * refined.det.norm());
        assert!(base.det.im.abs() < 1e-12);
    }

    #[test]
    fn log_det_is_linear_in_occupation_scale() {
        let cfg = config(2.0, -0.5, 1.0, 0.3, 1.0);
        let at = |s: f64| {
            let scaled = KernelConfig {
                thermo: cfg.thermo.scaled(s),
                ..cfg.clone()
            };
            det_v_only(&scaled, lambda_grid(&cfg).unwrap().as_ref()).unwrap().0.log_det
        };
        let (a, b) = (at(1e-3), at(1e-4));
        assert!(a.norm() > 1e-6);
        assert!(((a / b).norm() - 10.0).abs() < 0.05, "{a} {b}");
    }

    #[test]
    fn cold_limit_approaches_unit_determinant() {
        let logs: Vec<f64> = [0.4, 0.2, 0.1]
            .iter()
            .map(|temp| det_v(&config(2.0, -0.5, *temp, 0.0, 0.5), None).unwrap().log_det.norm())
            .collect();
        assert!(logs[0] > logs[1] && logs[1] > logs[2], "{logs:?}");
        assert!(logs[2] < 1e-2);
    }

    #[test]
    fn regularization_changes_determinant_little() {
        let cfg = config(2.0, -0.5, 1.0, 1.0, 5.0);
        let a = det_v(&cfg, None).unwrap().det;
        let b = det_v(&cfg.with_eps_reg(cfg.eps_reg / 10.0), None).unwrap().det;
        assert!((a - b).norm() < 0.02 * a.norm());
    }

    #[test]
    fn swapping_the_prescription_changes_e_plus() {
        let mut cfg = config(2.0, -0.5, 1.0, 0.2, 0.5);
        cfg.fields = constant_phase_fields(2.0);
        let ugrid = crate::numerics::gauss_panels(C64::from(0.0), C64::from(0.6), 6, 8).unwrap();
        let a = e_plus(&cfg, 0.3, &ugrid).unwrap();
        let b = e_plus_prescribed(&cfg, 0.3, &ugrid, true).unwrap();
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        let size = a.iter().map(|x| x.norm()).fold(0.0, f64::max);
        assert!(diff > 1e-3 * size, "{diff} {size}");
    }

    #[test]
    fn e_minus_with_zero_fields_at_origin() {
        let cfg = config(2.0, -0.5, 1.0, 0.0, 0.0);
        let ugrid = crate::numerics::gauss_panels(C64::from(-1.0), C64::from(1.0), 2, 4).unwrap();
        let lam = 0.25;
        let v = e_minus(&cfg, lam, &ugrid).unwrap();
        let sm = Smearing::new(cfg.eps_reg, 20);
        let n = sample(&cfg.fields, &sm, C64::from(lam)).unwrap().value(C64::from(lam), cfg.ic());
        let theta = cfg.thermo.theta_real(lam);
        for (u, e) in ugrid.nodes.iter().zip(&v) {
            let d = u.re - lam;
            let z = 8.0 / (d * d + 4.0);
            let expected = z * 2.0 * (theta / n.re).sqrt() / (2.0 * PI);
            assert!((e - expected).norm() < 1e-14, "{e} vs {expected}");
        }
    }

    #[test]
    fn e_plus_converges_linearly_in_eps() {
        let base = config(2.0, -0.5, 1.0, 0.2, 0.5);
        let ugrid = crate::numerics::gauss_panels(C64::from(0.9), C64::from(1.5), 3, 4).unwrap();
        let at = |eps: f64| {
            let mut c = base.with_eps_reg(eps);
            c.principal_value_offset = eps.sqrt();
            e_plus(&c, 0.3, &ugrid).unwrap()
        };
        let (a, b, c) = (at(4e-3), at(2e-3), at(1e-3));
        let d1 = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        let d2 = b.iter().zip(&c).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!((d1 / d2 - 2.0).abs() < 0.3, "{d1} {d2}");
    }
}
