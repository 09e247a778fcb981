//! Rank-1 adjusted geometry `M(f) = (Sigma - u u^T)^-1`.
//!
//! The quadratic form under the adjusted matrix is evaluated two ways: by
//! the Sherman–Morrison expansion
//!
//! ```text
//! x^T (Sigma - u u^T)^-1 x = x^T Sigma^-1 x + (x^T Sigma^-1 u)^2 / (1 - u^T Sigma^-1 u)
//! ```
//!
//! which costs O(d^2) given a cached precision, and by explicit dense
//! inversion of the adjusted matrix (O(d^3)), kept as a reference path.
//! Nonnegativity of the adjusted quadratic around an anchor point is governed
//! by `p = u^T Sigma^-1 u`, `q = a^T Sigma^-1 a` and `s = u^T Sigma^-1 a`:
//! it holds whenever `p < 1`, and for `p > 1` whenever
//! `(s - 1)^2 <= (p - 1)(q - 1)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `|1 - p|` below this makes the adjusted matrix numerically singular.
pub const SINGULAR_GUARD: f64 = 1e-12;

/// Slack allowed when classifying an adjusted quadratic as nonnegative.
pub const NONNEG_TOLERANCE: f64 = 1e-10;

/// `x^T m x`.
pub fn quadratic_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

/// Cached Sherman–Morrison state for one adjustment vector.
#[derive(Debug, Clone)]
pub struct AdjustmentContext<'a> {
    precision: &'a DMatrix<f64>,
    u: DVector<f64>,
    w: DVector<f64>,
    p: f64,
    denom: f64,
}

impl<'a> AdjustmentContext<'a> {
    /// Builds the cache without rejecting singular adjustments.
    pub fn compute(precision: &'a DMatrix<f64>, u: DVector<f64>) -> Self {
        let w = precision * &u;
        let p = u.dot(&w);
        AdjustmentContext {
            precision,
            u,
            w,
            p,
            denom: 1.0 - p,
        }
    }

    pub fn is_singular(&self) -> bool {
        self.denom.is_nan() || self.denom.abs() < SINGULAR_GUARD
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        self.precision
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    /// `Sigma^-1 u`.
    pub fn w(&self) -> &DVector<f64> {
        &self.w
    }

    /// `u^T Sigma^-1 u`.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// `1 - p`.
    pub fn denom(&self) -> f64 {
        self.denom
    }

    /// Sherman–Morrison correction given `x^T Sigma^-1 u`.
    #[inline]
    pub fn correction(&self, x_dot_w: f64) -> f64 {
        x_dot_w * x_dot_w / self.denom
    }

    /// `x^T (Sigma - u u^T)^-1 x` via the Sherman–Morrison expansion.
    pub fn adjusted_quadratic(&self, x: &DVector<f64>) -> f64 {
        let base = quadratic_form(self.precision, x);
        base + self.correction(x.dot(&self.w))
    }
}

/// Caches `w = Sigma^-1 u`, `p` and `1 - p`; fails when `|1 - p| < 1e-12`.
pub fn make_context(precision: &DMatrix<f64>, u: DVector<f64>) -> Result<AdjustmentContext<'_>> {
    check_square(precision, u.len())?;
    let ctx = AdjustmentContext::compute(precision, u);
    if ctx.is_singular() {
        return Err(Error::SingularAdjustment { denom: ctx.denom });
    }
    Ok(ctx)
}

fn check_square(m: &DMatrix<f64>, d: usize) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::Shape(format!(
            "matrix is {}x{}, vector has length {d}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `Sigma - u u^T`.
pub fn adjusted_matrix(cov: &DMatrix<f64>, u: &DVector<f64>) -> DMatrix<f64> {
    cov - u * u.transpose()
}

/// Inverts `Sigma - u u^T` explicitly (one LU factorization).
///
/// Singularity is judged through `1 - u^T Sigma^-1 u`, recovered from the
/// same factorization: with `t = u^T (Sigma - u u^T)^-1 u`,
/// `1 - u^T Sigma^-1 u = 1 / (1 + t)`.
pub fn invert_adjusted(cov: &DMatrix<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_square(cov, u.len())?;
    let lu = adjusted_matrix(cov, u).lu();
    let solved = lu
        .solve(u)
        .ok_or(Error::SingularAdjustment { denom: 0.0 })?;
    let denom = 1.0 / (1.0 + u.dot(&solved));
    if denom.is_nan() || denom.abs() < SINGULAR_GUARD {
        return Err(Error::SingularAdjustment { denom });
    }
    lu.try_inverse().ok_or(Error::SingularAdjustment { denom })
}

/// `x^T (Sigma - u u^T)^-1 x` by dense inversion; reference for the fast path.
pub fn adjusted_quadratic_dense(
    cov: &DMatrix<f64>,
    u: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<f64> {
    let inv = invert_adjusted(cov, u)?;
    Ok(quadratic_form(&inv, x))
}

/// `v^T Sigma v - v^T (Sigma - f f^T) v`, evaluated by expanding both forms.
/// Equals `(v^T f)^2` up to rounding.
pub fn rank1_gap(cov: &DMatrix<f64>, f: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let adjusted = adjusted_matrix(cov, f);
    quadratic_form(cov, v) - quadratic_form(&adjusted, v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonnegCheck {
    pub p: f64,
    pub q: f64,
    pub s: f64,
    /// Sufficient condition for nonnegativity: `p < 1`, or `p > 1` and
    /// `(s-1)^2 <= (p-1)(q-1)`. False at `p == 1`.
    pub condition_holds: bool,
    /// Adjusted quadratic of `u - anchor`.
    pub value: f64,
    pub quadratic_nonneg: bool,
}

/// Nonnegativity condition from `p`, `q`, `s`.
pub fn nonneg_condition(p: f64, q: f64, s: f64) -> bool {
    if p < 1.0 {
        true
    } else if p > 1.0 {
        (s - 1.0).powi(2) <= (p - 1.0) * (q - 1.0)
    } else {
        false
    }
}

/// Evaluates the nonnegativity scalars for adjustment `u` around `anchor`
/// and the adjusted quadratic of `u - anchor`.
pub fn nonneg_check(
    precision: &DMatrix<f64>,
    u: &DVector<f64>,
    anchor: &DVector<f64>,
) -> Result<NonnegCheck> {
    if anchor.iter().all(|&a| a == 0.0) {
        return Err(Error::Parameter("anchor must be nonzero".into()));
    }
    let ctx = make_context(precision, u.clone())?;
    let anchor_w = precision * anchor;
    let p = ctx.p();
    let q = anchor.dot(&anchor_w);
    let s = u.dot(&anchor_w);
    let value = ctx.adjusted_quadratic(&(u - anchor));
    Ok(NonnegCheck {
        p,
        q,
        s,
        condition_holds: nonneg_condition(p, q, s),
        value,
        quadratic_nonneg: value >= -NONNEG_TOLERANCE,
    })
}
