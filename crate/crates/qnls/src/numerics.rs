//! Quadrature grids, scalar solvers, Cauchy integrals and Nystrom determinants.
//!
//! Everything in here is a pure function of its inputs. Grids are plain data
//! and can be shared freely between threads.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{QnlsError, Result};

/// Imaginary unit.
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Default Gauss-Legendre order per panel.
pub const DEFAULT_ORDER: usize = 16;
/// Default panel count of the thermodynamic grid.
pub const DEFAULT_PANELS: usize = 64;
/// Default number of scan samples used by [`bracketed_roots`].
pub const DEFAULT_ROOT_SAMPLES: usize = 512;

/// Composite quadrature rule on a piecewise straight path in the complex plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadGrid {
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
    pub panel_edges: Vec<C64>,
    pub order: usize,
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Residual after every iteration, oldest first.
    pub history: Vec<f64>,
}

/// Determinant together with a logarithm that stays accurate when the
/// determinant itself under- or overflows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Determinant {
    pub det: C64,
    pub log_det: C64,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss-Hermite nodes and weights for the weight `e^{-x²}`, nodes ascending.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let jacobi = DMatrix::<f64>::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));
    pairs.into_iter().unzip()
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

impl QuadGrid {
    /// Composite rule over consecutive straight pieces joining `edges`.
    pub fn from_edges(edges: &[C64], order: usize) -> Result<QuadGrid> {
        if edges.len() < 2 {
            return Err(QnlsError::Config("a grid needs at least two edges".into()));
        }
        if order < 2 {
            return Err(QnlsError::Config(format!("quadrature order {order} < 2")));
        }
        let (x, w) = gauss_legendre(order);
        let mut nodes = Vec::with_capacity((edges.len() - 1) * order);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for pair in edges.windows(2) {
            let mid = (pair[0] + pair[1]) * 0.5;
            let half = (pair[1] - pair[0]) * 0.5;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + half * *xi);
                weights.push(half * *wi);
            }
        }
        Ok(QuadGrid {
            nodes,
            weights,
            panel_edges: edges.to_vec(),
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn panels(&self) -> usize {
        self.panel_edges.len().saturating_sub(1)
    }

    /// Real parts of the nodes, for grids lying on the real axis.
    pub fn real_nodes(&self) -> Vec<f64> {
        self.nodes.iter().map(|z| z.re).collect()
    }

    /// Sum of weights times the supplied samples.
    pub fn integrate(&self, values: &[C64]) -> C64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Integral of a function evaluated at the nodes.
    pub fn integrate_fn<F: Fn(C64) -> C64>(&self, f: F) -> C64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * f(*z))
            .sum()
    }

    /// Concatenates grids that follow each other along a path.
    pub fn concat(parts: &[QuadGrid]) -> QuadGrid {
        let mut out = QuadGrid {
            nodes: Vec::new(),
            weights: Vec::new(),
            panel_edges: Vec::new(),
            order: parts.first().map(|p| p.order).unwrap_or(0),
        };
        for p in parts {
            out.nodes.extend_from_slice(&p.nodes);
            out.weights.extend_from_slice(&p.weights);
            for e in &p.panel_edges {
                if out.panel_edges.last() != Some(e) {
                    out.panel_edges.push(*e);
                }
            }
        }
        out
    }

    /// Index of the panel containing node `k`.
    pub fn panel_of(&self, k: usize) -> usize {
        k / self.order.max(1)
    }

    /// Local node spacing around node `k`, estimated from the panel length.
    pub fn local_spacing(&self, k: usize) -> f64 {
        let p = self.panel_of(k);
        if p + 1 < self.panel_edges.len() {
            (self.panel_edges[p + 1] - self.panel_edges[p]).norm() / self.order as f64
        } else {
            self.weights[k].norm()
        }
    }
}

/// Composite Gauss-Legendre rule with `panels` equal panels on the segment `a -> b`.
pub fn gauss_panels(a: C64, b: C64, panels: usize, order: usize) -> Result<QuadGrid> {
    if panels < 1 {
        return Err(QnlsError::Config("panel count must be at least 1".into()));
    }
    if order < 2 {
        return Err(QnlsError::Config(format!("quadrature order {order} < 2")));
    }
    let edges: Vec<C64> = (0..=panels)
        .map(|k| a + (b - a) * (k as f64 / panels as f64))
        .collect();
    QuadGrid::from_edges(&edges, order)
}

/// Half width `L` with `exp(-L^2/T) = tail_tol`.
pub fn fermi_half_width(temperature: f64, tail_tol: f64) -> f64 {
    (temperature * (1.0 / tail_tol).ln()).sqrt()
}

/// Real grid `[center - L, center + L]` on which the Fermi weight exceeds `tail_tol`,
/// using the default panel count and order.
pub fn truncated_fermi_grid(temperature: f64, center: f64, tail_tol: f64) -> Result<QuadGrid> {
    truncated_fermi_grid_with(temperature, center, tail_tol, DEFAULT_PANELS, DEFAULT_ORDER)
}

/// As [`truncated_fermi_grid`] with explicit node density.
pub fn truncated_fermi_grid_with(
    temperature: f64,
    center: f64,
    tail_tol: f64,
    panels: usize,
    order: usize,
) -> Result<QuadGrid> {
    if !(temperature > 0.0) {
        return Err(QnlsError::Config(format!("temperature {temperature} must be positive")));
    }
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(QnlsError::Config(format!("tail tolerance {tail_tol} outside (0,1)")));
    }
    let l = fermi_half_width(temperature, tail_tol);
    gauss_panels(C64::from(center - l), C64::from(center + l), panels, order)
}

/// `(-1/2πi) Σ w_k f_k / (μ_k - z)`, the discretized Cauchy transform.
///
/// Fails with an accuracy error when `z` is closer to a node than the local
/// node spacing, where the plain rule is no longer reliable.
pub fn cauchy_eval(values: &[C64], grid: &QuadGrid, z: C64) -> Result<C64> {
    if values.len() != grid.len() {
        return Err(QnlsError::Config(format!(
            "{} samples supplied for a grid of {} nodes",
            values.len(),
            grid.len()
        )));
    }
    let mut sum = C64::new(0.0, 0.0);
    for (k, ((mu, w), f)) in grid.nodes.iter().zip(&grid.weights).zip(values).enumerate() {
        let d = mu - z;
        let spacing = grid.local_spacing(k);
        if d.norm() <= spacing {
            return Err(QnlsError::Accuracy(format!(
                "evaluation point {z} lies at distance {:.3e} from the contour, below the node spacing {:.3e}",
                d.norm(),
                spacing
            )));
        }
        sum += w * f / d;
    }
    Ok(-sum / (2.0 * std::f64::consts::PI * I))
}

/// Exact `∫_a^b dμ/(μ - z)` along the straight segment, for `z` off the segment.
pub fn segment_log_integral(a: C64, b: C64, z: C64) -> C64 {
    ((b - z) / (a - z)).ln()
}

/// Nystrom matrix `δ_ij + sqrt(w_i) sqrt(w_j) K(μ_i, μ_j)`.
pub fn nystrom_matrix<K>(kernel: K, grid: &QuadGrid) -> Result<DMatrix<C64>>
where
    K: Fn(C64, C64) -> C64,
{
    let n = grid.len();
    let sw: Vec<C64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let mut m = DMatrix::<C64>::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            let k = kernel(grid.nodes[i], grid.nodes[j]);
            if !k.re.is_finite() || !k.im.is_finite() {
                return Err(QnlsError::Numerical(format!(
                    "kernel value {k} at node pair ({i}, {j}) = ({}, {}) is not finite",
                    grid.nodes[i], grid.nodes[j]
                )));
            }
            m[(i, j)] += sw[i] * sw[j] * k;
        }
    }
    Ok(m)
}

/// Determinant of a square complex matrix through LU factorisation.
pub fn lu_determinant(m: DMatrix<C64>) -> Result<Determinant> {
    if m.nrows() != m.ncols() {
        return Err(QnlsError::Config("determinant of a non-square matrix".into()));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(QnlsError::Numerical("matrix has non-finite entries".into()));
    }
    if m.nrows() == 0 {
        return Ok(Determinant {
            det: C64::new(1.0, 0.0),
            log_det: C64::new(0.0, 0.0),
        });
    }
    let lu = m.lu();
    let parity = lu.p().determinant::<f64>();
    let u = lu.u();
    let mut log_det = if parity < 0.0 {
        C64::new(0.0, std::f64::consts::PI)
    } else {
        C64::new(0.0, 0.0)
    };
    let mut det = C64::new(parity, 0.0);
    for k in 0..u.nrows() {
        let p = u[(k, k)];
        det *= p;
        log_det += p.ln();
    }
    Ok(Determinant { det, log_det })
}

/// `det(δ_ij + sqrt(w_i w_j) K(μ_i, μ_j))`.
pub fn nystrom_det<K>(kernel: K, grid: &QuadGrid) -> Result<C64>
where
    K: Fn(C64, C64) -> C64,
{
    Ok(nystrom_det_full(kernel, grid)?.det)
}

/// As [`nystrom_det`], also returning the logarithm of the determinant.
pub fn nystrom_det_full<K>(kernel: K, grid: &QuadGrid) -> Result<Determinant>
where
    K: Fn(C64, C64) -> C64,
{
    lu_determinant(nystrom_matrix(kernel, grid)?)
}

/// Newton derivative step used by [`fixed_point`].
fn newton_step(x: C64) -> f64 {
    1e-6 * x.norm().max(1.0)
}

/// Solves `x = map(x)`.
///
/// Plain iteration is tried first. When the residual stops shrinking the
/// solver switches to Newton's method on `x - map(x)` with a central
/// difference derivative.
pub fn fixed_point<F>(map: F, x0: C64, tol: f64, max_iter: usize) -> Result<(C64, SolverReport)>
where
    F: Fn(C64) -> C64,
{
    if !(tol > 0.0) {
        return Err(QnlsError::Config(format!("tolerance {tol} must be positive")));
    }
    let g = |x: C64| x - map(x);
    let mut x = x0;
    let mut history = Vec::new();
    let mut newton = false;
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    for it in 0..max_iter {
        let r = g(x);
        let res = r.norm();
        history.push(res);
        if !res.is_finite() {
            return Err(QnlsError::NonConvergence {
                what: "fixed point iteration".into(),
                iterations: it,
                residual: res,
            });
        }
        if res <= tol {
            return Ok((
                x,
                SolverReport {
                    converged: true,
                    iterations: it,
                    residual: res,
                    history,
                },
            ));
        }
        if res < 0.9 * best {
            best = res;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if !newton && (stalled >= 3 || res > 1e3 * history[0].max(tol)) {
            newton = true;
        }
        if newton {
            let h = newton_step(x);
            let d = (g(x + h) - g(x - h)) / (2.0 * h);
            if d.norm() == 0.0 {
                return Err(QnlsError::Singular(format!(
                    "vanishing Newton derivative at {x}"
                )));
            }
            x -= r / d;
        } else {
            x = map(x);
        }
    }
    let res = g(x).norm();
    Err(QnlsError::NonConvergence {
        what: "fixed point iteration".into(),
        iterations: max_iter,
        residual: res,
    })
}

/// All sign-change roots of `f` on `[a, b]`, bisection-refined to `tol`, ascending.
pub fn bracketed_roots<F>(f: F, a: f64, b: f64, tol: f64) -> Vec<f64>
where
    F: Fn(f64) -> f64,
{
    bracketed_roots_with(f, a, b, tol, DEFAULT_ROOT_SAMPLES)
}

/// As [`bracketed_roots`] with an explicit scan resolution.
pub fn bracketed_roots_with<F>(f: F, a: f64, b: f64, tol: f64, samples: usize) -> Vec<f64>
where
    F: Fn(f64) -> f64,
{
    let n = samples.max(2);
    let xs: Vec<f64> = (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for k in 0..n {
        let (x0, x1, f0, f1) = (xs[k], xs[k + 1], fs[k], fs[k + 1]);
        if f0 == 0.0 {
            roots.push(x0);
            continue;
        }
        if k + 1 == n && f1 == 0.0 {
            roots.push(x1);
            continue;
        }
        if f0 * f1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (x0, x1, f0);
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
                if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()) {
                    break;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
    }
    roots
}
