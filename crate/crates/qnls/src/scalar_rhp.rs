//! The scalar Δ problem: jump determinant with a continuous logarithm, the
//! Cauchy-integral solution, its large-λ coefficients and the deformed
//! contour Γ used when the jump determinant has real zeros.
//!
//! The contour is oriented from `-∞` to `+∞`. Every segment belongs either to
//! the part left of the split point, where the jump is
//! `1 - ϑ(1 + e^{-φ})`, or to the part on its right, where it is
//! `(1 - ϑ(1 + e^{φ}))^{-1}`. The logarithm is unwrapped separately on each
//! part, starting from the infinite end where it vanishes.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{QnlsError, Result};
use crate::fields::{find_capital_lambdas, FieldSet};
use crate::numerics::{gauss_legendre, segment_log_integral, I};
use crate::thermo::ThermoState;

/// Gauss order used on every contour panel.
pub const CONTOUR_ORDER: usize = 16;
/// Panels per detour arc.
pub const ARC_PANELS: usize = 8;
/// Radii used by the large-λ extraction of the expansion coefficients.
pub const FIT_RADII: [f64; 3] = [200.0, 400.0, 800.0];

/// Part of the contour relative to the split point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// `sign(split - Re μ)`.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    Line,
    /// `center + radius·e^{iθ}` for `θ` from `theta0` to `theta1`.
    Arc {
        center: C64,
        radius: f64,
        theta0: f64,
        theta1: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: C64,
    pub end: C64,
    pub kind: SegmentKind,
    pub side: Side,
    /// Length scale of a nearby singularity at the start, if any.
    pub refine_start: Option<f64>,
    /// Length scale of a nearby singularity at the end, if any.
    pub refine_end: Option<f64>,
}

impl Segment {
    fn line(start: C64, end: C64, side: Side) -> Segment {
        Segment {
            start,
            end,
            kind: SegmentKind::Line,
            side,
            refine_start: None,
            refine_end: None,
        }
    }

    fn arc(center: f64, radius: f64, theta0: f64, theta1: f64, side: Side) -> Segment {
        let c = C64::from(center);
        Segment {
            start: c + C64::from_polar(radius, theta0),
            end: c + C64::from_polar(radius, theta1),
            kind: SegmentKind::Arc {
                center: c,
                radius,
                theta0,
                theta1,
            },
            side,
            refine_start: None,
            refine_end: None,
        }
    }

    /// Exact `∫_segment dμ/(μ - z)`.
    pub fn log_integral(&self, z: C64) -> C64 {
        match self.kind {
            SegmentKind::Line => segment_log_integral(self.start, self.end, z),
            SegmentKind::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => {
                let (a, b) = (self.start, self.end);
                let chord = b - a;
                let mid = center + C64::from_polar(radius, 0.5 * (theta0 + theta1));
                let side_of = |p: C64| ((p - a) * chord.conj()).im;
                let mut zz = z;
                if side_of(zz).abs() <= 1e-13 * chord.norm() * chord.norm() {
                    zz += (mid - (a + b) * 0.5) * 1e-13;
                }
                let base = segment_log_integral(a, b, zz);
                let inside = (zz - center).norm() < radius && side_of(zz) * side_of(mid) > 0.0;
                if inside {
                    base + 2.0 * PI * I * (theta1 - theta0).signum()
                } else {
                    base
                }
            }
        }
    }

    /// Closest point of the segment to `z`.
    pub fn project(&self, z: C64) -> C64 {
        match self.kind {
            SegmentKind::Line => {
                let d = self.end - self.start;
                let s = (((z - self.start) * d.conj()).re / d.norm_sqr()).clamp(0.0, 1.0);
                self.start + d * s
            }
            SegmentKind::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => {
                let (lo, hi) = (theta0.min(theta1), theta0.max(theta1));
                let mut th = (z - center).arg();
                while th < lo - PI {
                    th += 2.0 * PI;
                }
                while th > hi + PI {
                    th -= 2.0 * PI;
                }
                let th = if th < lo || th > hi {
                    let a = C64::from_polar(radius, lo) + center;
                    let b = C64::from_polar(radius, hi) + center;
                    if (z - a).norm() < (z - b).norm() {
                        lo
                    } else {
                        hi
                    }
                } else {
                    th
                };
                center + C64::from_polar(radius, th)
            }
        }
    }

    /// Unit tangent in the direction of travel at the point `p` of the segment.
    pub fn tangent(&self, p: C64) -> C64 {
        match self.kind {
            SegmentKind::Line => {
                let d = self.end - self.start;
                d / d.norm()
            }
            SegmentKind::Arc { center, theta0, theta1, .. } => {
                let r = p - center;
                I * r / r.norm() * (theta1 - theta0).signum()
            }
        }
    }

    fn panel_edges(&self, h0: f64) -> Vec<f64> {
        match self.kind {
            SegmentKind::Arc { .. } => (0..=ARC_PANELS).map(|k| k as f64 / ARC_PANELS as f64).collect(),
            SegmentKind::Line => {
                let len = (self.end - self.start).norm();
                let mut cuts: Vec<f64> = Vec::new();
                let grade = |r: f64| -> Vec<f64> {
                    let mut out = Vec::new();
                    let mut x = 0.0;
                    loop {
                        let next = (r + x) * 2.0 - r;
                        if next - x > h0 || next >= 0.5 * len {
                            break;
                        }
                        out.push(next);
                        x = next;
                    }
                    out
                };
                let mut start_edge = 0.0;
                let mut end_edge = len;
                if let Some(r) = self.refine_start {
                    let g = grade(r);
                    start_edge = g.last().copied().unwrap_or(0.0);
                    cuts.extend(g);
                }
                if let Some(r) = self.refine_end {
                    let g = grade(r);
                    end_edge = len - g.last().copied().unwrap_or(0.0);
                    cuts.extend(g.iter().map(|x| len - x));
                }
                let mid = (end_edge - start_edge).max(0.0);
                let n = (mid / h0).ceil().max(1.0) as usize;
                for k in 1..n {
                    cuts.push(start_edge + mid * k as f64 / n as f64);
                }
                cuts.push(0.0);
                cuts.push(len);
                cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * len.max(1.0));
                cuts.into_iter().map(|x| x / len).collect()
            }
        }
    }

    /// Point at parameter `s ∈ [0, 1]` and the derivative with respect to `s`.
    pub fn point(&self, s: f64) -> (C64, C64) {
        match self.kind {
            SegmentKind::Line => {
                let d = self.end - self.start;
                (self.start + d * s, d)
            }
            SegmentKind::Arc {
                center,
                radius,
                theta0,
                theta1,
            } => {
                let th = theta0 + (theta1 - theta0) * s;
                let e = C64::from_polar(radius, th);
                (center + e, I * e * (theta1 - theta0))
            }
        }
    }
}

/// Piecewise path from `-∞` to `+∞` (truncated to the support of `ϑ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub segments: Vec<Segment>,
    /// Always `+1`: from left to right.
    pub orientation: i8,
    pub detour_radius: f64,
    pub split: C64,
    /// Real roots around which the contour detours.
    pub roots: Option<(f64, f64)>,
}

fn push_split(segments: &mut Vec<Segment>, from: C64, split: C64, hi: f64) {
    let foot = C64::from(split.re);
    if (foot - from).norm() > 0.0 {
        segments.push(Segment::line(from, foot, Side::Left));
    }
    if split.im != 0.0 {
        segments.push(Segment::line(foot, split, Side::Left));
        segments.push(Segment::line(split, foot, Side::Right));
    }
    if hi > split.re {
        segments.push(Segment::line(foot, C64::from(hi), Side::Right));
    }
}

impl Contour {
    /// The real line `[lo, hi]` split at `split` (with a vertical connector
    /// when the split point is complex).
    pub fn real_line(lo: f64, hi: f64, split: C64) -> Result<Contour> {
        if !(lo < hi) {
            return Err(QnlsError::Config(format!("empty contour range [{lo}, {hi}]")));
        }
        let mut segments = Vec::new();
        if split.re <= lo {
            if split.im != 0.0 {
                return Err(QnlsError::Config("complex split point outside the contour range".into()));
            }
            segments.push(Segment::line(C64::from(lo), C64::from(hi), Side::Right));
        } else if split.re >= hi {
            if split.im != 0.0 {
                return Err(QnlsError::Config("complex split point outside the contour range".into()));
            }
            segments.push(Segment::line(C64::from(lo), C64::from(hi), Side::Left));
        } else {
            push_split(&mut segments, C64::from(lo), split, hi);
        }
        Ok(Contour {
            segments,
            orientation: 1,
            detour_radius: 0.0,
            split,
            roots: None,
        })
    }

    /// The deformed contour Γ: above `Λ₁`, below `Λ₂`, both left of the split.
    pub fn gamma(lo: f64, hi: f64, roots: (f64, f64), split: C64, radius: f64) -> Result<Contour> {
        let (l1, l2) = roots;
        if !(radius > 0.0) {
            return Err(QnlsError::Config(format!("detour radius {radius} must be positive")));
        }
        if !(lo < l1 - radius && l1 + radius < l2 - radius && l2 + radius < split.re && l2 + radius < hi) {
            return Err(QnlsError::Assumption(format!(
                "detours of radius {radius} around Λ₁ = {l1}, Λ₂ = {l2} do not fit left of the split point {split}"
            )));
        }
        let mut segments = Vec::new();
        let mut s = Segment::line(C64::from(lo), C64::from(l1 - radius), Side::Left);
        s.refine_end = Some(radius);
        segments.push(s);
        segments.push(Segment::arc(l1, radius, PI, 0.0, Side::Left));
        let mut s = Segment::line(C64::from(l1 + radius), C64::from(l2 - radius), Side::Left);
        s.refine_start = Some(radius);
        s.refine_end = Some(radius);
        segments.push(s);
        segments.push(Segment::arc(l2, radius, PI, 2.0 * PI, Side::Left));
        let start = C64::from(l2 + radius);
        let mut rest = Vec::new();
        if split.re >= hi {
            if split.im != 0.0 {
                return Err(QnlsError::Config("complex split point outside the contour range".into()));
            }
            rest.push(Segment::line(start, C64::from(hi), Side::Left));
        } else {
            push_split(&mut rest, start, split, hi);
        }
        if let Some(first) = rest.first_mut() {
            first.refine_start = Some(radius);
        }
        segments.extend(rest);
        Ok(Contour {
            segments,
            orientation: 1,
            detour_radius: radius,
            split,
            roots: Some(roots),
        })
    }

    /// Default contour for a configuration: the real line for `h < 0`, Γ with
    /// radius `0.2·min(|Λ₂-Λ₁|, |λ₀-Λ₂|)` for `h > 0`.
    pub fn for_config(fields: &FieldSet, thermo: &ThermoState, split: C64) -> Result<Contour> {
        let l = thermo.half_width();
        match find_capital_lambdas(fields, thermo, Some(split.re))? {
            None => Contour::real_line(-l, l, split),
            Some(roots) => {
                let r = default_detour_radius(roots, split.re).min(thermal_radius(thermo, roots));
                Contour::gamma(-l, l, roots, split, r)
            }
        }
    }

    /// Same contour with every detour radius multiplied by `factor`.
    pub fn with_radius(&self, radius: f64) -> Result<Contour> {
        let roots = self
            .roots
            .ok_or_else(|| QnlsError::Config("the contour has no detours".into()))?;
        let lo = self.segments.first().map(|s| s.start.re).unwrap_or(0.0);
        let hi = self.segments.last().map(|s| s.end.re).unwrap_or(0.0);
        Contour::gamma(lo, hi, roots, self.split, radius)
    }

    /// Quadrature nodes along the contour with panel size at most `h0`.
    pub fn discretize(&self, h0: f64) -> ContourNodes {
        let (x, w) = gauss_legendre(CONTOUR_ORDER);
        let mut out = ContourNodes::default();
        for (k, seg) in self.segments.iter().enumerate() {
            let edges = seg.panel_edges(h0);
            for pair in edges.windows(2) {
                let (s0, s1) = (pair[0], pair[1]);
                let half = 0.5 * (s1 - s0);
                let (p0, _) = seg.point(s0);
                let (p1, _) = seg.point(s1);
                let plen = (p1 - p0).norm();
                for (xi, wi) in x.iter().zip(&w) {
                    let s = 0.5 * (s0 + s1) + half * xi;
                    let (p, dp) = seg.point(s);
                    out.nodes.push(p);
                    out.weights.push(dp * half * *wi);
                    out.segment.push(k);
                    out.panel_len.push(plen);
                }
            }
        }
        out
    }
}

/// `0.2·min(|Λ₂-Λ₁|, |λ₀-Λ₂|)`.
pub fn default_detour_radius(roots: (f64, f64), lambda0: f64) -> f64 {
    0.2 * (roots.1 - roots.0).abs().min((lambda0 - roots.1).abs())
}

/// `0.4·πT/max|ε′(Λⱼ)|`: the nearest poles of `ϑ` sit at `πT/|ε′|` from the
/// real roots, and this keeps a doubled detour clear of them.
pub fn thermal_radius(thermo: &ThermoState, roots: (f64, f64)) -> f64 {
    let slope = |x: f64| thermo.epsilon_jet(C64::from(x)).1.norm();
    0.4 * PI * thermo.params.temperature / slope(roots.0).max(slope(roots.1))
}

/// Nodes and weights of a discretized contour.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContourNodes {
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
    pub segment: Vec<usize>,
    pub panel_len: Vec<f64>,
}

/// The `1 - ϑ(1 + e^{∓φ})` factor whose logarithm enters the jump.
pub fn jump_factor(fields: &FieldSet, thermo: &ThermoState, mu: C64, side: Side) -> Result<C64> {
    let theta = thermo.theta_at(mu);
    let phi = fields.phi(mu)?;
    Ok(1.0 - theta * (1.0 + (-side.sign() * phi).exp()))
}

/// Jump determinant `(1 - ϑ(1 + e^{-sφ}))^{s}` with `s = sign(split - Re μ)`.
pub fn jump_det(fields: &FieldSet, thermo: &ThermoState, mu: C64, split: C64) -> Result<C64> {
    let side = if mu.re < split.re { Side::Left } else { Side::Right };
    let g = jump_factor(fields, thermo, mu, side)?;
    if g.norm() < 1e-12 {
        return Err(QnlsError::Branch(format!(
            "jump determinant vanishes at μ = {mu}; deform the contour around the real roots (Γ)"
        )));
    }
    Ok(if side == Side::Left { g } else { 1.0 / g })
}

/// Large-λ coefficients of `ln Δ = Δ₀/λ + Δ₁/λ² + …`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaExpansion {
    pub delta0: C64,
    pub delta1: C64,
}

/// Diagnostics of the logarithm branch along the contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    /// `|Im ln jump|` at piece ends that reach the outside of the support.
    pub end_arg: f64,
    /// Largest change of the unwrapped argument between neighbouring nodes.
    pub max_step: f64,
}

/// Discretized scalar problem, ready for repeated evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaRhp {
    pub contour: Contour,
    pub nodes: ContourNodes,
    /// `s·ln(1 - ϑ(1 + e^{-sφ}))` at every node.
    pub log_jump: Vec<C64>,
    pub index: IndexReport,
}

/// Default panel size on the contour.
pub fn default_panel_size(thermo: &ThermoState) -> f64 {
    0.25 * thermo.params.temperature.min(1.0)
}

fn nearest_branch(value: C64, reference: C64) -> C64 {
    let k = ((reference.im - value.im) / (2.0 * PI)).round();
    value + I * (2.0 * PI * k)
}

impl DeltaRhp {
    pub fn new(fields: &FieldSet, thermo: &ThermoState, contour: Contour) -> Result<DeltaRhp> {
        Self::with_panel_size(fields, thermo, contour, default_panel_size(thermo))
    }

    pub fn with_panel_size(fields: &FieldSet, thermo: &ThermoState, contour: Contour, h0: f64) -> Result<DeltaRhp> {
        let nodes = contour.discretize(h0);
        let n = nodes.nodes.len();
        let sides: Vec<Side> = nodes.segment.iter().map(|k| contour.segments[*k].side).collect();
        let mut logs = Vec::with_capacity(n);
        for (mu, side) in nodes.nodes.iter().zip(&sides) {
            let g = jump_factor(fields, thermo, *mu, *side)?;
            if g.norm() < 1e-12 || !g.re.is_finite() {
                return Err(QnlsError::Branch(format!(
                    "jump determinant vanishes at μ = {mu}; deform the contour around the real roots (Γ)"
                )));
            }
            logs.push(g.ln());
        }
        let mut max_step: f64 = 0.0;
        let mut end_arg: f64 = 0.0;
        let left: Vec<usize> = (0..n).filter(|k| sides[*k] == Side::Left).collect();
        let right: Vec<usize> = (0..n).rev().filter(|k| sides[*k] == Side::Right).collect();
        for order in [left, right] {
            if order.is_empty() {
                continue;
            }
            let mut prev = logs[order[0]];
            for &k in order.iter().skip(1) {
                let v = nearest_branch(logs[k], prev);
                max_step = max_step.max((v.im - prev.im).abs());
                logs[k] = v;
                prev = v;
            }
            end_arg = end_arg.max(logs[order[0]].im.abs());
            let last = order[order.len() - 1];
            if thermo.theta_at(nodes.nodes[last]).norm() < 1e-14 {
                end_arg = end_arg.max(logs[last].im.abs());
            }
        }
        if max_step > 0.5 * PI {
            return Err(QnlsError::Branch(format!(
                "argument of the jump determinant changes by {max_step:.3} between neighbouring nodes; \
                 the real line passes through a zero, use the deformed contour Γ"
            )));
        }
        if end_arg > 1e-6 {
            return Err(QnlsError::Branch(format!(
                "nonzero index: the continuous argument of the jump ends at {end_arg:.3e} instead of 0"
            )));
        }
        let log_jump = logs
            .iter()
            .zip(&sides)
            .map(|(l, s)| l * s.sign())
            .collect();
        Ok(DeltaRhp {
            contour,
            nodes,
            log_jump,
            index: IndexReport { end_arg, max_step },
        })
    }

    /// `Δ₀ = (1/2πi)∫ L dμ`, `Δ₁ = (1/2πi)∫ μ L dμ`.
    pub fn coeffs(&self) -> DeltaExpansion {
        let mut s0 = C64::new(0.0, 0.0);
        let mut s1 = C64::new(0.0, 0.0);
        for ((mu, w), l) in self.nodes.nodes.iter().zip(&self.nodes.weights).zip(&self.log_jump) {
            s0 += w * l;
            s1 += w * l * mu;
        }
        let f = 1.0 / (2.0 * PI * I);
        DeltaExpansion {
            delta0: s0 * f,
            delta1: s1 * f,
        }
    }

    fn nearest_node(&self, z: C64) -> usize {
        let mut best = 0;
        let mut d = f64::INFINITY;
        for (k, mu) in self.nodes.nodes.iter().enumerate() {
            let e = (mu - z).norm();
            if e < d {
                d = e;
                best = k;
            }
        }
        best
    }

    /// Logarithm of the jump at a point of segment `seg`, on the branch of the nearby nodes.
    pub fn log_jump_at(&self, fields: &FieldSet, thermo: &ThermoState, mu: C64, seg: usize) -> Result<C64> {
        let side = self.contour.segments[seg].side;
        let g = jump_factor(fields, thermo, mu, side)?;
        let mut best = None;
        let mut d = f64::INFINITY;
        for (k, node) in self.nodes.nodes.iter().enumerate() {
            if self.nodes.segment[k] == seg && (node - mu).norm() < d {
                d = (node - mu).norm();
                best = Some(k);
            }
        }
        let k = best.ok_or_else(|| QnlsError::Config(format!("segment {seg} has no nodes")))?;
        let reference = self.log_jump[k] * side.sign();
        Ok(nearest_branch(g.ln(), reference) * side.sign())
    }

    /// `ln Δ(z) = -(1/2πi)∫ L(μ)/(μ - z) dμ`, with singularity subtraction near the contour.
    pub fn log_delta(&self, fields: &FieldSet, thermo: &ThermoState, z: C64) -> Result<C64> {
        let k = self.nearest_node(z);
        let seg = self.nodes.segment[k];
        let zstar = self.contour.segments[seg].project(z);
        let dist = (z - zstar).norm();
        if dist <= 1e-300 {
            return Err(QnlsError::Domain(format!("z = {z} lies on the contour; use boundary_log_delta")));
        }
        if dist > 4.0 * self.nodes.panel_len[k] {
            let mut s = C64::new(0.0, 0.0);
            for ((mu, w), l) in self.nodes.nodes.iter().zip(&self.nodes.weights).zip(&self.log_jump) {
                s += w * l / (mu - z);
            }
            return Ok(-s / (2.0 * PI * I));
        }
        let lstar = self.log_jump_at(fields, thermo, zstar, seg)?;
        Ok(self.subtracted(z, lstar))
    }

    fn subtracted(&self, z: C64, lstar: C64) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for ((mu, w), l) in self.nodes.nodes.iter().zip(&self.nodes.weights).zip(&self.log_jump) {
            s += w * (l - lstar) / (mu - z);
        }
        let exact: C64 = self.contour.segments.iter().map(|g| g.log_integral(z)).sum();
        -(s + lstar * exact) / (2.0 * PI * I)
    }

    /// `Δ(z)`.
    pub fn delta(&self, fields: &FieldSet, thermo: &ThermoState, z: C64) -> Result<C64> {
        Ok(self.log_delta(fields, thermo, z)?.exp())
    }

    /// Boundary values `(ln Δ₊, ln Δ₋)` at a point of segment `seg`; `+` is
    /// the left side of the direction of travel.
    pub fn boundary_log_delta(&self, fields: &FieldSet, thermo: &ThermoState, mu: C64, seg: usize) -> Result<(C64, C64)> {
        let s = &self.contour.segments[seg];
        let p = s.project(mu);
        let lstar = self.log_jump_at(fields, thermo, p, seg)?;
        let eta = 1e-12 * self.nodes.panel_len.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-6);
        let n = I * s.tangent(p) * eta;
        let plus = self.subtracted(p + n, lstar);
        let minus = self.subtracted(p - n, lstar);
        Ok((plus, minus))
    }

    /// Largest relative error of `Δ₋/Δ₊` against the jump at `count` points
    /// spread over the segments of the contour.
    pub fn jump_relation_residual(&self, fields: &FieldSet, thermo: &ThermoState, count: usize) -> Result<f64> {
        let nseg = self.contour.segments.len();
        let mut worst: f64 = 0.0;
        for j in 0..count {
            let g = (j as f64 + 0.37) / count as f64 * nseg as f64;
            let k = (g.floor() as usize).min(nseg - 1);
            let (p, _) = self.contour.segments[k].point(g - k as f64);
            let (plus, minus) = self.boundary_log_delta(fields, thermo, p, k)?;
            let jump = self.log_jump_at(fields, thermo, p, k)?.exp();
            worst = worst.max(((minus - plus).exp() - jump).norm() / jump.norm());
        }
        Ok(worst)
    }

    /// Large-λ extraction: solves `λ ln Δ(λ) = Δ₀ + Δ₁/λ + Δ₂/λ²` at `λ = iR`.
    pub fn fit_large_lambda(&self, fields: &FieldSet, thermo: &ThermoState) -> Result<DeltaExpansion> {
        let mut a = nalgebra::Matrix3::<C64>::zeros();
        let mut b = nalgebra::Vector3::<C64>::zeros();
        for (row, r) in FIT_RADII.iter().enumerate() {
            let lam = I * *r;
            let v = self.log_delta(fields, thermo, lam)? * lam;
            a[(row, 0)] = C64::new(1.0, 0.0);
            a[(row, 1)] = 1.0 / lam;
            a[(row, 2)] = 1.0 / (lam * lam);
            b[row] = v;
        }
        let x = a
            .lu()
            .solve(&b)
            .ok_or_else(|| QnlsError::Numerical("singular large-λ fit".into()))?;
        Ok(DeltaExpansion {
            delta0: x[0],
            delta1: x[1],
        })
    }
}

/// `Δ(λ)` for a configuration and contour.
pub fn delta_solution(fields: &FieldSet, thermo: &ThermoState, contour: &Contour, lambda: C64) -> Result<C64> {
    DeltaRhp::new(fields, thermo, contour.clone())?.delta(fields, thermo, lambda)
}

/// `Δ₀` and `Δ₁` for a configuration and contour.
pub fn delta_coeffs(fields: &FieldSet, thermo: &ThermoState, contour: &Contour) -> Result<DeltaExpansion> {
    Ok(DeltaRhp::new(fields, thermo, contour.clone())?.coeffs())
}
