//! Numerical toolkit for the large time and distance asymptotics of the
//! temperature correlation function of the one-dimensional quantum nonlinear
//! Schrodinger model.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: quadrature, solvers, Cauchy transforms, Nystrom determinants.
//! * [`thermo`]: Yang-Yang thermodynamics, Fermi weight and vacancy density.
//! * [`fields`]: classical models of the dual fields and the functions built from them.
//! * [`rankone`]: identity-plus-rank-one jump operators on an auxiliary grid.
//! * [`scalar_rhp`]: the scalar Riemann-Hilbert problem and its expansion coefficients.
//! * [`fredholm`]: a direct Nystrom evaluation of the Fredholm determinant.
//! * [`pcf`]: parabolic cylinder functions of complex order.
//! * [`localized`]: the local parametrix built from parabolic cylinder functions.
//! * [`asym`]: shifted saddle point and the assembled asymptotic formulas.

pub mod asym;
pub mod error;
pub mod fields;
pub mod fredholm;
pub mod localized;
pub mod numerics;
pub mod pcf;
pub mod rankone;
pub mod scalar_rhp;
pub mod thermo;

pub use error::{QnlsError, Result};
pub use num_complex::Complex64 as C64;
