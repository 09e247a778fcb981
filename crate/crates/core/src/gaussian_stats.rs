//! Gaussian statistics of the in-distribution features.
//!
//! Class means, the pooled within-class covariance of the deviation features
//! `f - mu_c`, the covariance about the global mean, their diagonally loaded
//! precisions, and the residual eigenbasis (eigenvectors of the smallest
//! eigenvalues) of either covariance.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::feature_io::FeatureSet;

/// Default diagonal-load scale relative to the mean variance.
pub const DEFAULT_EPS_SCALE: f64 = 1e-6;

/// Largest acceptable condition number of a regularized covariance.
pub const MAX_CONDITION: f64 = 1e14;

/// Which covariance a residual basis (or scoring geometry) derives from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovarianceSource {
    Within,
    Full,
}

impl fmt::Display for CovarianceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovarianceSource::Within => "within",
            CovarianceSource::Full => "full",
        })
    }
}

impl FromStr for CovarianceSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "within" => Ok(CovarianceSource::Within),
            "full" => Ok(CovarianceSource::Full),
            other => Err(Error::Parameter(format!(
                "unknown covariance source `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    /// N_c x d, one class mean per row.
    pub means: DMatrix<f64>,
    pub cov_within: DMatrix<f64>,
    pub cov_full: DMatrix<f64>,
    /// Inverse of `cov_within + reg_epsilon * I`.
    pub precision_within: DMatrix<f64>,
    /// Inverse of `cov_full + reg_epsilon_full * I`.
    pub precision_full: DMatrix<f64>,
    pub reg_epsilon: f64,
    pub reg_epsilon_full: f64,
    pub reg_epsilon_scale: f64,
}

impl GaussianStats {
    /// Reassembles statistics from stored parts, checking shapes and symmetry.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        means: DMatrix<f64>,
        cov_within: DMatrix<f64>,
        cov_full: DMatrix<f64>,
        precision_within: DMatrix<f64>,
        precision_full: DMatrix<f64>,
        reg_epsilon: f64,
        reg_epsilon_full: f64,
        reg_epsilon_scale: f64,
    ) -> Result<Self> {
        let d = means.ncols();
        if means.nrows() == 0 || d < 2 {
            return Err(Error::Shape(
                "means must be N_c x d with N_c >= 1, d >= 2".into(),
            ));
        }
        for (name, m) in [
            ("cov_within", &cov_within),
            ("cov_full", &cov_full),
            ("precision_within", &precision_within),
            ("precision_full", &precision_full),
        ] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, expected {d}x{d}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if !is_symmetric(m, 1e-12) {
                return Err(Error::Format(format!("{name} is not symmetric")));
            }
        }
        if !(reg_epsilon >= 0.0 && reg_epsilon_full >= 0.0) {
            return Err(Error::Format("negative regularization".into()));
        }
        Ok(GaussianStats {
            means,
            cov_within,
            cov_full,
            precision_within,
            precision_full,
            reg_epsilon,
            reg_epsilon_full,
            reg_epsilon_scale,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn covariance(&self, source: CovarianceSource) -> &DMatrix<f64> {
        match source {
            CovarianceSource::Within => &self.cov_within,
            CovarianceSource::Full => &self.cov_full,
        }
    }

    pub fn precision(&self, source: CovarianceSource) -> &DMatrix<f64> {
        match source {
            CovarianceSource::Within => &self.precision_within,
            CovarianceSource::Full => &self.precision_full,
        }
    }

    pub fn epsilon(&self, source: CovarianceSource) -> f64 {
        match source {
            CovarianceSource::Within => self.reg_epsilon,
            CovarianceSource::Full => self.reg_epsilon_full,
        }
    }

    /// `cov + eps * I`, the matrix whose inverse is `precision(source)`.
    pub fn regularized_covariance(&self, source: CovarianceSource) -> DMatrix<f64> {
        let mut m = self.covariance(source).clone();
        let eps = self.epsilon(source);
        for i in 0..m.nrows() {
            m[(i, i)] += eps;
        }
        m
    }
}

/// k orthonormal eigenvectors (rows) of the smallest eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBasis {
    /// k x d, orthonormal rows.
    pub basis: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: DVector<f64>,
    pub source: CovarianceSource,
}

impl ResidualBasis {
    pub fn k(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Coefficients of `f` in the basis: `B f`.
    pub fn coefficients(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.basis * f
    }

    /// Orthogonal projection of `f` onto the residual space: `B^T (B f)`.
    pub fn project(&self, f: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(&self.coefficients(f))
    }
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Fits class means, covariances and regularized precisions.
///
/// `train` should already be L2-normalized; every label class must be present.
pub fn fit_stats(train: &FeatureSet, reg_epsilon_scale: f64) -> Result<GaussianStats> {
    let labels = train
        .labels()
        .ok_or_else(|| Error::Fit("training features carry no labels".into()))?;
    if !(reg_epsilon_scale >= 0.0 && reg_epsilon_scale.is_finite()) {
        return Err(Error::Parameter(format!(
            "epsilon scale must be finite and non-negative, got {reg_epsilon_scale}"
        )));
    }
    let data = train.data();
    let (n, d) = (data.nrows(), data.ncols());
    let n_classes = train.n_classes();

    let mut counts = vec![0usize; n_classes];
    let mut sums = DMatrix::<f64>::zeros(n_classes, d);
    for (i, &c) in labels.iter().enumerate() {
        counts[c as usize] += 1;
        let mut row = sums.row_mut(c as usize);
        row += data.row(i);
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Fit(format!("class {empty} is empty")));
    }
    let mut means = sums;
    for (c, &count) in counts.iter().enumerate() {
        let mut row = means.row_mut(c);
        row /= count as f64;
    }

    let mut global = DVector::<f64>::zeros(d);
    for row in data.row_iter() {
        global += row.transpose();
    }
    global /= n as f64;

    let mut deviations = data.clone();
    let mut centered = data.clone();
    for (i, &label) in labels.iter().enumerate() {
        let c = label as usize;
        let mut dev = deviations.row_mut(i);
        dev -= means.row(c);
        let mut cen = centered.row_mut(i);
        cen -= global.transpose();
    }

    let mut cov_within = deviations.tr_mul(&deviations) / n as f64;
    let mut cov_full = centered.tr_mul(&centered) / n as f64;
    symmetrize(&mut cov_within);
    symmetrize(&mut cov_full);

    let (precision_within, reg_epsilon) = regularized_precision(&cov_within, reg_epsilon_scale)?;
    let (precision_full, reg_epsilon_full) = regularized_precision(&cov_full, reg_epsilon_scale)?;

    Ok(GaussianStats {
        means,
        cov_within,
        cov_full,
        precision_within,
        precision_full,
        reg_epsilon,
        reg_epsilon_full,
        reg_epsilon_scale,
    })
}

/// Diagonal load for a covariance: `scale * mean(diag)`, or `scale` itself
/// when the covariance is identically zero.
pub fn diagonal_load(cov: &DMatrix<f64>, scale: f64) -> f64 {
    let mean_diag = cov.diagonal().mean();
    if mean_diag > 0.0 {
        scale * mean_diag
    } else {
        scale
    }
}

/// Inverts `cov + eps * I` after checking its conditioning; returns the
/// precision and the `eps` applied.
pub fn regularized_precision(cov: &DMatrix<f64>, scale: f64) -> Result<(DMatrix<f64>, f64)> {
    let eps = diagonal_load(cov, scale);
    let mut reg = cov.clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += eps;
    }

    let eigenvalues = reg.symmetric_eigenvalues();
    let min = eigenvalues.min();
    let max = eigenvalues.max();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::Conditioning {
            condition,
            eps_scale: scale,
        });
    }

    let chol = reg.cholesky().ok_or(Error::Conditioning {
        condition,
        eps_scale: scale,
    })?;
    let mut precision = chol.inverse();
    symmetrize(&mut precision);
    Ok((precision, eps))
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues ascending.
/// Column `i` of the returned matrix is the eigenvector for eigenvalue `i`,
/// sign-normalized so its largest-magnitude entry is positive.
pub fn symmetric_eigen_ascending(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 1000 * n.max(1))
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });

    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::<f64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        canonical_sign(col.as_mut_slice());
        vectors.set_column(dst, &col);
    }
    Ok((values, vectors))
}

/// Flips `v` so its largest-magnitude entry (lowest index on ties) is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Residual basis of the unregularized covariance selected by `source`.
pub fn residual_basis(
    stats: &GaussianStats,
    k: usize,
    source: CovarianceSource,
) -> Result<ResidualBasis> {
    residual_basis_of(stats.covariance(source), k, source)
}

pub fn residual_basis_of(
    cov: &DMatrix<f64>,
    k: usize,
    source: CovarianceSource,
) -> Result<ResidualBasis> {
    let d = cov.nrows();
    if k < 1 || k >= d {
        return Err(Error::Parameter(format!(
            "residual dimension k = {k} must satisfy 1 <= k <= {}",
            d.saturating_sub(1)
        )));
    }
    let (values, vectors) = symmetric_eigen_ascending(cov)?;
    let basis = vectors.columns(0, k).transpose();
    let eigenvalues = values.rows(0, k).into_owned();
    Ok(ResidualBasis {
        basis,
        eigenvalues,
        source,
    })
}

/// Single-run default residual dimension: `max(1, round(d / 3))`, capped at `d - 1`.
pub fn default_residual_dim(d: usize) -> usize {
    ((d as f64 / 3.0).round() as usize)
        .max(1)
        .min(d.saturating_sub(1).max(1))
}
