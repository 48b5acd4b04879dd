//! Identity-plus-finite-rank operators on an auxiliary `u` grid.
//!
//! The jump operators act on functions of an auxiliary variable `u`. Each is
//! the identity plus a combination of dyads `|a⟩⟨b|` built from four regularized
//! vectors. Operators are kept in factored form, and a dense Nystrom
//! realization with symmetric weights `sqrt(w_i w_j)` is available for
//! cross-checks.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{QnlsError, Result};
use crate::fields::FieldSet;
use crate::numerics::{lu_determinant, Determinant, QuadGrid, I};

/// Minimum number of nodes per `sqrt(eps_reg)` near the base point.
pub const MIN_NODES_PER_WIDTH: f64 = 8.0;
/// Half width of the refined window, in units of `sqrt(eps_reg)`.
pub const WINDOW_WIDTHS: f64 = 6.0;

/// Gaussian regularization of the delta function.
pub fn delta_eps(v: f64, eps: f64) -> f64 {
    (-v * v / (4.0 * eps)).exp() / (2.0 * (std::f64::consts::PI * eps).sqrt())
}

/// `τ(λ) = itλ² - ixλ`.
pub fn tau(lambda: C64, x: f64, t: f64) -> C64 {
    I * t * lambda * lambda - I * x * lambda
}

/// Default regularization width for temperature `T`.
pub fn default_eps_reg(temperature: f64) -> f64 {
    1e-2 * temperature
}

/// The four regularized vectors attached to a base point `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegVectors {
    pub lambda: f64,
    pub eps_reg: f64,
    /// `∫ Z²(u,λ) δ_ε(u-λ) du`.
    pub n_eps: C64,
    /// `Z(λ,λ)`.
    pub z_diag: C64,
    pub ket1: Vec<C64>,
    pub bra1: Vec<C64>,
    pub ket2: Vec<C64>,
    pub bra2: Vec<C64>,
    pub ugrid: QuadGrid,
}

impl RegVectors {
    /// `⟨a|b⟩` for two sampled functions on the `u` grid.
    pub fn pair(&self, bra: &[C64], ket: &[C64]) -> C64 {
        self.ugrid
            .weights
            .iter()
            .zip(bra.iter().zip(ket))
            .map(|(w, (b, k))| w * b * k)
            .sum()
    }

    /// `(⟨1|1⟩, ⟨2|2⟩)`.
    pub fn norms(&self) -> (C64, C64) {
        (self.pair(&self.bra1, &self.ket1), self.pair(&self.bra2, &self.ket2))
    }

    pub fn ket(&self, k: usize) -> &[C64] {
        if k == 1 {
            &self.ket1
        } else {
            &self.ket2
        }
    }

    pub fn bra(&self, k: usize) -> &[C64] {
        if k == 1 {
            &self.bra1
        } else {
            &self.bra2
        }
    }
}

/// Real `u` grid on `[-half_width, half_width]` refined around `λ`.
pub fn ugrid_for(lambda: f64, eps_reg: f64, half_width: f64, base_panels: usize, order: usize) -> Result<QuadGrid> {
    if !(eps_reg > 0.0) {
        return Err(QnlsError::Config(format!("eps_reg = {eps_reg} must be positive")));
    }
    let w = WINDOW_WIDTHS * eps_reg.sqrt();
    let (lo, hi) = ((-half_width).min(lambda - 2.0 * w), half_width.max(lambda + 2.0 * w));
    let (a, b) = (lambda - w, lambda + w);
    let window_panels = ((2.0 * w * MIN_NODES_PER_WIDTH * 1.5 / (eps_reg.sqrt() * order as f64)).ceil() as usize).max(2);
    let step = (hi - lo) / base_panels.max(1) as f64;
    let mut edges: Vec<f64> = (0..=base_panels)
        .map(|k| lo + step * k as f64)
        .filter(|x| *x < a - 0.25 * step || *x > b + 0.25 * step)
        .collect();
    for k in 0..=window_panels {
        edges.push(a + (b - a) * k as f64 / window_panels as f64);
    }
    edges.sort_by(|x, y| x.partial_cmp(y).expect("finite edges"));
    edges.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    let edges: Vec<C64> = edges.into_iter().map(C64::from).collect();
    QuadGrid::from_edges(&edges, order)
}

/// Builds `|1⟩, ⟨1|, |2⟩, ⟨2|` at the base point `λ`.
pub fn make_vectors(fields: &FieldSet, lambda: f64, eps_reg: f64, ugrid: &QuadGrid) -> Result<RegVectors> {
    if !(eps_reg > 0.0) {
        return Err(QnlsError::Config(format!("eps_reg = {eps_reg} must be positive")));
    }
    let root = eps_reg.sqrt();
    let nearest = ugrid
        .nodes
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1.re - lambda)
                .abs()
                .partial_cmp(&(b.1.re - lambda).abs())
                .expect("finite nodes")
        })
        .map(|(k, _)| k)
        .ok_or_else(|| QnlsError::Config("empty u grid".into()))?;
    let spacing = ugrid.local_spacing(nearest);
    if spacing > root / MIN_NODES_PER_WIDTH {
        return Err(QnlsError::Resolution(format!(
            "u grid spacing {spacing:.3e} near λ = {lambda} does not resolve the regularization width {root:.3e}; \
             need at least {MIN_NODES_PER_WIDTH} nodes per width"
        )));
    }
    let lam = C64::from(lambda);
    let z: Vec<C64> = ugrid
        .nodes
        .iter()
        .map(|u| fields.z_fn(*u, lam))
        .collect::<Result<_>>()?;
    let d: Vec<f64> = ugrid.nodes.iter().map(|u| delta_eps(u.re - lambda, eps_reg)).collect();
    let n_eps: C64 = ugrid
        .weights
        .iter()
        .zip(z.iter().zip(&d))
        .map(|(w, (zk, dk))| w * zk * zk * *dk)
        .sum();
    if n_eps.norm() < 1e-300 || !n_eps.re.is_finite() {
        return Err(QnlsError::Singular(format!(
            "degenerate regularization: N_eps({lambda}) = {n_eps}"
        )));
    }
    let z_diag = fields.z_diag(lam)?;
    let s = (z_diag / n_eps).sqrt();
    let inv = s / z_diag;
    let ket1: Vec<C64> = z.iter().zip(&d).map(|(zk, dk)| zk * *dk * inv).collect();
    let bra1: Vec<C64> = z.iter().map(|zk| zk * s).collect();
    Ok(RegVectors {
        lambda,
        eps_reg,
        n_eps,
        z_diag,
        ket2: bra1.clone(),
        bra2: ket1.clone(),
        ket1,
        bra1,
        ugrid: ugrid.clone(),
    })
}

/// One dyad `coeff · |ket⟩⟨bra|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTerm {
    pub coeff: C64,
    pub ket: Vec<C64>,
    pub bra: Vec<C64>,
}

/// `identity_coeff · î + Σ coeff |ket⟩⟨bra|` on a fixed `u` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOperator {
    pub identity_coeff: C64,
    pub terms: Vec<RankTerm>,
    pub weights: Vec<C64>,
}

impl GridOperator {
    pub fn identity(weights: &[C64]) -> GridOperator {
        GridOperator {
            identity_coeff: C64::new(1.0, 0.0),
            terms: Vec::new(),
            weights: weights.to_vec(),
        }
    }

    pub fn zero(weights: &[C64]) -> GridOperator {
        GridOperator {
            identity_coeff: C64::new(0.0, 0.0),
            terms: Vec::new(),
            weights: weights.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn with_term(mut self, coeff: C64, ket: &[C64], bra: &[C64]) -> GridOperator {
        self.terms.push(RankTerm {
            coeff,
            ket: ket.to_vec(),
            bra: bra.to_vec(),
        });
        self
    }

    fn pair(&self, bra: &[C64], ket: &[C64]) -> C64 {
        self.weights
            .iter()
            .zip(bra.iter().zip(ket))
            .map(|(w, (b, k))| w * b * k)
            .sum()
    }

    /// Dense matrix `a δ_ij + Σ c ket_i bra_j sqrt(w_i w_j)`.
    pub fn dense(&self) -> DMatrix<C64> {
        let n = self.dim();
        let sw: Vec<C64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let mut m = DMatrix::<C64>::identity(n, n) * self.identity_coeff;
        for term in &self.terms {
            let left: Vec<C64> = (0..n).map(|i| term.coeff * term.ket[i] * sw[i]).collect();
            let right: Vec<C64> = (0..n).map(|j| term.bra[j] * sw[j]).collect();
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += left[i] * right[j];
                }
            }
        }
        m
    }

    /// Kernel transpose: every dyad `|a⟩⟨b|` becomes `|b⟩⟨a|`.
    pub fn transpose(&self) -> GridOperator {
        GridOperator {
            identity_coeff: self.identity_coeff,
            terms: self
                .terms
                .iter()
                .map(|t| RankTerm {
                    coeff: t.coeff,
                    ket: t.bra.clone(),
                    bra: t.ket.clone(),
                })
                .collect(),
            weights: self.weights.clone(),
        }
    }

    /// `det(a I_R + C·Gram)` scaled by `a^{N-R}`, without forming the dense matrix.
    pub fn analytic_det(&self) -> Result<Determinant> {
        let r = self.terms.len();
        let a = self.identity_coeff;
        if a.norm() == 0.0 {
            return Err(QnlsError::Singular("analytic determinant needs a nonzero identity part".into()));
        }
        let mut m = DMatrix::<C64>::zeros(r, r);
        for (k, tk) in self.terms.iter().enumerate() {
            for (l, tl) in self.terms.iter().enumerate() {
                m[(k, l)] = tk.coeff * self.pair(&tk.bra, &tl.ket);
            }
            m[(k, k)] += a;
        }
        let small = lu_determinant(m)?;
        let extra = (self.dim() - r) as f64;
        let log_det = small.log_det + a.ln() * extra;
        Ok(Determinant {
            det: small.det * a.powf(extra),
            log_det,
        })
    }

    /// Sherman-Morrison inverse of `î + c|a⟩⟨b|`.
    pub fn inverse_rank_one(&self) -> Result<GridOperator> {
        if (self.identity_coeff - 1.0).norm() > 0.0 || self.terms.len() != 1 {
            return Err(QnlsError::Config(
                "Sherman-Morrison inverse needs identity plus exactly one dyad".into(),
            ));
        }
        let t = &self.terms[0];
        let denom = 1.0 + t.coeff * self.pair(&t.bra, &t.ket);
        if denom.norm() < 1e-14 {
            return Err(QnlsError::Singular(format!(
                "rank-one operator is not invertible: det = {denom}"
            )));
        }
        Ok(GridOperator::identity(&self.weights).with_term(-t.coeff / denom, &t.ket, &t.bra))
    }
}

/// A `2×2` block of grid operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockOperator {
    pub blocks: [[GridOperator; 2]; 2],
}

impl BlockOperator {
    pub fn dim(&self) -> usize {
        self.blocks[0][0].dim()
    }

    pub fn dense(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut m = DMatrix::<C64>::zeros(2 * n, 2 * n);
        for j in 0..2 {
            for k in 0..2 {
                m.view_mut((j * n, k * n), (n, n)).copy_from(&self.blocks[j][k].dense());
            }
        }
        m
    }

    /// Determinant through the finite-rank structure.
    pub fn analytic_det(&self) -> Result<Determinant> {
        for j in 0..2 {
            for k in 0..2 {
                let expect = if j == k { 1.0 } else { 0.0 };
                if (self.blocks[j][k].identity_coeff - expect).norm() > 0.0 {
                    return Err(QnlsError::Config(
                        "analytic block determinant needs identity diagonal and zero off-diagonal identity parts".into(),
                    ));
                }
            }
        }
        let w = &self.blocks[0][0].weights;
        let pair = |b: &[C64], k: &[C64]| -> C64 { w.iter().zip(b.iter().zip(k)).map(|(w, (b, k))| w * b * k).sum() };
        let mut terms: Vec<(usize, usize, &RankTerm)> = Vec::new();
        for j in 0..2 {
            for k in 0..2 {
                for t in &self.blocks[j][k].terms {
                    terms.push((j, k, t));
                }
            }
        }
        let r = terms.len();
        let mut m = DMatrix::<C64>::identity(r, r);
        for (a, (_, ka, ta)) in terms.iter().enumerate() {
            for (b, (jb, _, tb)) in terms.iter().enumerate() {
                if ka == jb {
                    m[(a, b)] += ta.coeff * pair(&ta.bra, &tb.ket);
                }
            }
        }
        lu_determinant(m)
    }
}

/// `Ĝ_jk = δ_jk î + (G_jk - δ_jk)|j⟩⟨k|`.
pub fn rep_hat(g: &[[C64; 2]; 2], v: &RegVectors) -> BlockOperator {
    let w = &v.ugrid.weights;
    let block = |j: usize, k: usize| -> GridOperator {
        let delta = if j == k { 1.0 } else { 0.0 };
        let base = if j == k { GridOperator::identity(w) } else { GridOperator::zero(w) };
        base.with_term(g[j][k] - delta, v.ket(j + 1), v.bra(k + 1))
    };
    BlockOperator {
        blocks: [[block(0, 0), block(0, 1)], [block(1, 0), block(1, 1)]],
    }
}

/// The scalar `2×2` matrix whose representation is the regularized jump.
pub fn jump_matrix(fields: &FieldSet, theta: C64, lambda: C64, tau: C64) -> Result<[[C64; 2]; 2]> {
    let z = fields.z_diag(lambda)?;
    let pa = fields.phi_a(lambda)?;
    let pd = fields.phi_d(lambda)?;
    let psi = fields.psi(lambda)?;
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok([
        [
            1.0 - theta * z * pd.exp(),
            two_pi * I * (theta - 1.0) * z * (psi + tau).exp(),
        ],
        [
            -I / two_pi * theta * z * (pa + pd - psi - tau).exp(),
            1.0 - theta * z * pa.exp(),
        ],
    ])
}

/// Regularized jump operator at a real base point.
pub fn jump_g(fields: &FieldSet, theta: f64, lambda: f64, tau: C64, v: &RegVectors) -> Result<BlockOperator> {
    Ok(rep_hat(&jump_matrix(fields, C64::from(theta), C64::from(lambda), tau)?, v))
}

/// `2×2` determinant.
pub fn det2(g: &[[C64; 2]; 2]) -> C64 {
    g[0][0] * g[1][1] - g[0][1] * g[1][0]
}

/// `2×2` product.
pub fn mul2(a: &[[C64; 2]; 2], b: &[[C64; 2]; 2]) -> [[C64; 2]; 2] {
    let mut c = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// `2×2` inverse.
pub fn inv2(a: &[[C64; 2]; 2]) -> Result<[[C64; 2]; 2]> {
    let d = det2(a);
    if d.norm() == 0.0 {
        return Err(QnlsError::Singular("singular 2x2 matrix".into()));
    }
    Ok([[a[1][1] / d, -a[0][1] / d], [-a[1][0] / d, a[0][0] / d]])
}

/// Closed form `(Ĝ₂₂ᵀ)⁻¹ = î + Zϑe^{φ_A}/(1 - Zϑe^{φ_A}) |1⟩⟨1|`.
pub fn g22_inverse_transpose_closed(fields: &FieldSet, theta: f64, v: &RegVectors) -> Result<GridOperator> {
    let lam = C64::from(v.lambda);
    let a = fields.z_diag(lam)? * theta * fields.phi_a(lam)?.exp();
    if (1.0 - a).norm() < 1e-14 {
        return Err(QnlsError::Singular(format!("1 - Zϑe^φA vanishes at λ = {}", v.lambda)));
    }
    Ok(GridOperator::identity(&v.ugrid.weights).with_term(a / (1.0 - a), &v.ket1, &v.bra1))
}

/// Determinant of `θ(λ₀-λ)Ĝ₁₁ + θ(λ-λ₀)(Ĝ₂₂ᵀ)⁻¹` from the operator closed forms.
pub fn jump_det_closed(fields: &FieldSet, theta: f64, v: &RegVectors, lambda0: f64) -> Result<C64> {
    let op = if v.lambda < lambda0 {
        let g = jump_g(fields, theta, v.lambda, C64::new(0.0, 0.0), v)?;
        g.blocks[0][0].clone()
    } else {
        g22_inverse_transpose_closed(fields, theta, v)?
    };
    Ok(op.analytic_det()?.det)
}

/// Residuals of the quasideterminant identities in the dense realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasidetReport {
    /// `‖Ĝ₂₂ - Ĝ₂₁Ĝ₁₁⁻¹Ĝ₁₂ - (Ĝ₁₁ᵀ)⁻¹‖` relative to `‖(Ĝ₁₁ᵀ)⁻¹‖`.
    pub first: f64,
    /// `‖Ĝ₁₁ - Ĝ₁₂Ĝ₂₂⁻¹Ĝ₂₁ - (Ĝ₂₂ᵀ)⁻¹‖` relative to `‖(Ĝ₂₂ᵀ)⁻¹‖`.
    pub second: f64,
    /// Closed form of `(Ĝ₂₂ᵀ)⁻¹` against the dense inverse.
    pub g22_inverse_transpose: f64,
    /// Sherman-Morrison inverse of `Ĝ₁₁` against the dense inverse.
    pub sherman_morrison: f64,
    pub det11: C64,
    pub det22: C64,
}

impl QuasidetReport {
    pub fn max_residual(&self) -> f64 {
        self.first
            .max(self.second)
            .max(self.g22_inverse_transpose)
            .max(self.sherman_morrison)
    }
}

/// Maximum absolute row sum, the operator norm induced by `ℓ∞`.
pub fn inf_norm(m: &DMatrix<C64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn dense_inverse(m: &DMatrix<C64>, what: &str) -> Result<DMatrix<C64>> {
    let d = lu_determinant(m.clone())?.det;
    if d.norm() < 1e-14 {
        return Err(QnlsError::Singular(format!("{what} is singular: det = {d}")));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| QnlsError::Singular(format!("{what} is singular: det = {d}")))
}

/// Checks both quasideterminant identities and the closed form of `(Ĝ₂₂ᵀ)⁻¹`.
pub fn quasidet_check(g: &BlockOperator, g22_inv_t: &GridOperator) -> Result<QuasidetReport> {
    let a11 = g.blocks[0][0].dense();
    let a12 = g.blocks[0][1].dense();
    let a21 = g.blocks[1][0].dense();
    let a22 = g.blocks[1][1].dense();
    let det11 = lu_determinant(a11.clone())?.det;
    let det22 = lu_determinant(a22.clone())?.det;
    let i11 = dense_inverse(&a11, "G11")?;
    let i22 = dense_inverse(&a22, "G22")?;
    let i11t = dense_inverse(&a11.transpose(), "G11^T")?;
    let i22t = dense_inverse(&a22.transpose(), "G22^T")?;
    let rel = |m: DMatrix<C64>, reference: &DMatrix<C64>| inf_norm(&m) / inf_norm(reference).max(1.0);
    let first = rel(&a22 - &a21 * &i11 * &a12 - &i11t, &i11t);
    let second = rel(&a11 - &a12 * &i22 * &a21 - &i22t, &i22t);
    let closed = rel(g22_inv_t.dense() - &i22t, &i22t);
    let sm = rel(g.blocks[0][0].inverse_rank_one()?.dense() - &i11, &i11);
    Ok(QuasidetReport {
        first,
        second,
        g22_inverse_transpose: closed,
        sherman_morrison: sm,
        det11,
        det22,
    })
}
