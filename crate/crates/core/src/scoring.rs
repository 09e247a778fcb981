//! OOD score functions.
//!
//! Every method scores a test feature `f` as the negated minimum distance to
//! the class means, `-min_i sqrt(r_i^T M r_i)` with `r_i = f - mu_i`, so larger
//! scores mean "more in-distribution". The methods differ only in `M`:
//!
//! | method               | `M`                                        |
//! |----------------------|--------------------------------------------|
//! | `Dcc`                | `(Sigma - u u^T)^-1`, `u` = residual part of `f` (or `f`) |
//! | `MahalanobisStatic`  | `Sigma^-1`                                 |
//! | `EuclideanStatic`    | `I`                                        |
//! | `EuclideanDynamic`   | `(I - u u^T)^-1`                           |
//!
//! `Sigma` is the within-class covariance when `dcm` is set and the full
//! covariance otherwise. The fast path evaluates the adjusted quadratic by
//! Sherman–Morrison with per-class caches (O(d^2 + N_c d) per sample); the
//! dense path inverts `Sigma - u u^T` for every sample.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamic_geometry::{quadratic_form, AdjustmentContext};
use crate::error::{Error, Result};
use crate::feature_io::{fmt_g17, normalize_in_place, write_fmat, FeatureSet, FMAT_VERSION_F32};
use crate::gaussian_stats::{CovarianceSource, GaussianStats, ResidualBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dcc,
    MahalanobisStatic,
    EuclideanStatic,
    EuclideanDynamic,
}

impl Method {
    pub fn is_euclidean(self) -> bool {
        matches!(self, Method::EuclideanStatic | Method::EuclideanDynamic)
    }

    pub fn is_dynamic(self) -> bool {
        matches!(self, Method::Dcc | Method::EuclideanDynamic)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Dcc => "dcc",
            Method::MahalanobisStatic => "maha",
            Method::EuclideanStatic => "euclid",
            Method::EuclideanDynamic => "euclid-dyn",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dcc" => Ok(Method::Dcc),
            "maha" | "mahalanobis" => Ok(Method::MahalanobisStatic),
            "euclid" | "euclidean" => Ok(Method::EuclideanStatic),
            "euclid-dyn" | "euclidean-dynamic" => Ok(Method::EuclideanDynamic),
            other => Err(Error::Parameter(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConfig {
    pub method: Method,
    /// Dynamic matrix estimation: apply the per-sample rank-1 adjustment.
    pub dme: bool,
    /// Restrict the adjustment vector to the residual space.
    pub rsp: bool,
    /// Use the within-class covariance (otherwise the full covariance).
    pub dcm: bool,
    pub residual_dim: Option<usize>,
    pub reg_epsilon_scale: f64,
    pub normalize: bool,
}

impl ScoreConfig {
    /// Defaults for a method: dynamic methods get `dme` and `rsp`, static ones neither.
    pub fn for_method(method: Method, residual_dim: Option<usize>) -> Self {
        let dynamic = method.is_dynamic();
        ScoreConfig {
            method,
            dme: dynamic,
            rsp: dynamic,
            dcm: true,
            residual_dim,
            reg_epsilon_scale: crate::gaussian_stats::DEFAULT_EPS_SCALE,
            normalize: true,
        }
    }

    /// The full method with all three components enabled.
    pub fn dcc(k: usize) -> Self {
        ScoreConfig::for_method(Method::Dcc, Some(k))
    }

    /// Vanilla Mahalanobis on normalized features.
    pub fn mahalanobis() -> Self {
        ScoreConfig::for_method(Method::MahalanobisStatic, None)
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::Dcc | Method::EuclideanDynamic if !self.dme => {
                return Err(Error::Config(format!(
                    "method {} requires dme",
                    self.method
                )))
            }
            Method::MahalanobisStatic | Method::EuclideanStatic if self.dme => {
                return Err(Error::Config(format!(
                    "method {} is static and cannot use dme",
                    self.method
                )))
            }
            _ => {}
        }
        if self.rsp && !self.dme {
            return Err(Error::Config("rsp only applies with dme".into()));
        }
        if self.rsp && self.residual_dim.is_none() {
            return Err(Error::Config("rsp requires a residual dimension".into()));
        }
        Ok(())
    }

    /// Covariance the scoring geometry (and residual basis) derives from.
    pub fn source(&self) -> CovarianceSource {
        if self.dcm {
            CovarianceSource::Within
        } else {
            CovarianceSource::Full
        }
    }
}

/// Per-row result of scoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleScore {
    pub score: f64,
    pub argmin_class: usize,
    /// Minimum (adjusted) quadratic before clamping.
    pub min_quadratic: f64,
    pub clamped: bool,
    pub singular: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredBatch {
    pub scores: Vec<f64>,
    pub argmin_class: Vec<usize>,
    pub clamped: Vec<bool>,
    pub singular: Vec<bool>,
    pub clamp_count: usize,
    pub singular_count: usize,
}

impl ScoredBatch {
    fn from_samples(samples: Vec<SampleScore>) -> Self {
        let clamp_count = samples.iter().filter(|s| s.clamped).count();
        let singular_count = samples.iter().filter(|s| s.singular).count();
        ScoredBatch {
            scores: samples.iter().map(|s| s.score).collect(),
            argmin_class: samples.iter().map(|s| s.argmin_class).collect(),
            clamped: samples.iter().map(|s| s.clamped).collect(),
            singular: samples.iter().map(|s| s.singular).collect(),
            clamp_count,
            singular_count,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Metric matrices for one scoring run.
#[derive(Debug, Clone)]
enum Geometry<'a> {
    Identity(DMatrix<f64>),
    Fitted {
        precision: &'a DMatrix<f64>,
        source: CovarianceSource,
    },
}

/// Shared read-only state for scoring a batch: the chosen precision, class
/// means and the per-class constants `mu_i^T P mu_i`.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    config: ScoreConfig,
    means: &'a DMatrix<f64>,
    geometry: Geometry<'a>,
    stats: Option<&'a GaussianStats>,
    basis: Option<&'a ResidualBasis>,
    mean_quad: Vec<f64>,
}

impl<'a> Scorer<'a> {
    pub fn new(
        stats: &'a GaussianStats,
        basis: Option<&'a ResidualBasis>,
        config: &ScoreConfig,
    ) -> Result<Self> {
        config.validate()?;
        let geometry = if config.method.is_euclidean() {
            Geometry::Identity(DMatrix::identity(stats.dim(), stats.dim()))
        } else {
            let source = config.source();
            Geometry::Fitted {
                precision: stats.precision(source),
                source,
            }
        };
        Scorer::build(config.clone(), &stats.means, geometry, Some(stats), basis)
    }

    /// Scorer with `Sigma = I` over explicit class means.
    pub fn euclidean(
        means: &'a DMatrix<f64>,
        basis: Option<&'a ResidualBasis>,
        dynamic: bool,
    ) -> Result<Self> {
        let method = if dynamic {
            Method::EuclideanDynamic
        } else {
            Method::EuclideanStatic
        };
        let mut config = ScoreConfig::for_method(method, basis.map(ResidualBasis::k));
        config.rsp = dynamic && basis.is_some();
        config.validate()?;
        let d = means.ncols();
        Scorer::build(
            config,
            means,
            Geometry::Identity(DMatrix::identity(d, d)),
            None,
            basis,
        )
    }

    fn build(
        config: ScoreConfig,
        means: &'a DMatrix<f64>,
        geometry: Geometry<'a>,
        stats: Option<&'a GaussianStats>,
        basis: Option<&'a ResidualBasis>,
    ) -> Result<Self> {
        let d = means.ncols();
        match (config.rsp, basis) {
            (true, None) => {
                return Err(Error::Config(
                    "rsp requested but no residual basis given".into(),
                ))
            }
            (true, Some(b)) if b.dim() != d => {
                return Err(Error::Shape(format!(
                    "residual basis has dimension {}, statistics have {d}",
                    b.dim()
                )))
            }
            _ => {}
        }
        let mut scorer = Scorer {
            config,
            means,
            geometry,
            stats,
            basis,
            mean_quad: Vec::new(),
        };
        let precision = scorer.precision();
        scorer.mean_quad = means
            .row_iter()
            .map(|m| quadratic_form(precision, &m.transpose()))
            .collect();
        Ok(scorer)
    }

    pub fn config(&self) -> &ScoreConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.means.nrows()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        match &self.geometry {
            Geometry::Identity(eye) => eye,
            Geometry::Fitted { precision, .. } => precision,
        }
    }

    /// Regularized covariance whose inverse is `precision()`.
    pub fn covariance(&self) -> DMatrix<f64> {
        match &self.geometry {
            Geometry::Identity(eye) => eye.clone(),
            Geometry::Fitted { source, .. } => self
                .stats
                .expect("fitted geometry carries stats")
                .regularized_covariance(*source),
        }
    }

    /// Normalizes a raw test row when configured to.
    pub fn prepare(&self, mut f: DVector<f64>, row: usize) -> Result<DVector<f64>> {
        if f.len() != self.dim() {
            return Err(Error::Shape(format!(
                "test row has dimension {}, statistics have {}",
                f.len(),
                self.dim()
            )));
        }
        if self.config.normalize {
            normalize_in_place(&mut f).ok_or(Error::DegenerateFeature { row })?;
        }
        Ok(f)
    }

    /// The rank-1 adjustment vector for a prepared feature, if the method is dynamic.
    pub fn adjustment_vector(&self, f: &DVector<f64>) -> Option<DVector<f64>> {
        if !self.config.dme {
            return None;
        }
        Some(match (self.config.rsp, self.basis) {
            (true, Some(basis)) => basis.project(f),
            _ => f.clone(),
        })
    }

    /// Unadjusted quadratics `r_i^T P r_i` for all classes via the cached
    /// decomposition `f^T P f - 2 mu_i^T (P f) + mu_i^T P mu_i`.
    fn base_quadratics(&self, f: &DVector<f64>) -> (Vec<f64>, DVector<f64>) {
        let g = self.precision() * f;
        let ff = f.dot(&g);
        let cross = self.means * &g;
        let base = (0..self.n_classes())
            .map(|i| ff - 2.0 * cross[i] + self.mean_quad[i])
            .collect();
        (base, g)
    }

    /// Index and value of the smallest unadjusted quadratic.
    pub fn nearest_static(&self, f: &DVector<f64>) -> (usize, f64) {
        let (base, _) = self.base_quadratics(f);
        let i = argmin(&base);
        let r = f - self.means.row(i).transpose();
        (i, quadratic_form(self.precision(), &r))
    }

    /// Scores one prepared feature on the Sherman–Morrison fast path.
    pub fn score_prepared(&self, f: &DVector<f64>) -> SampleScore {
        let (mut dists, _) = self.base_quadratics(f);
        let ctx = self
            .adjustment_vector(f)
            .map(|u| AdjustmentContext::compute(self.precision(), u));
        let singular = ctx.as_ref().is_some_and(AdjustmentContext::is_singular);
        let ctx = ctx.filter(|c| !c.is_singular());

        if let Some(ctx) = &ctx {
            let fw = f.dot(ctx.w());
            let mw = self.means * ctx.w();
            for (i, d) in dists.iter_mut().enumerate() {
                *d += ctx.correction(fw - mw[i]);
            }
        }
        let best = argmin(&dists);

        // Recompute the winner directly: the cached decomposition loses
        // relative accuracy when f sits close to a mean.
        let r = f - self.means.row(best).transpose();
        let min_quadratic = match &ctx {
            Some(ctx) => ctx.adjusted_quadratic(&r),
            None => quadratic_form(self.precision(), &r),
        };
        finish(best, min_quadratic, singular)
    }

    /// Scores one prepared feature by explicit inversion of the adjusted matrix.
    pub fn score_prepared_dense(&self, f: &DVector<f64>, covariance: &DMatrix<f64>) -> SampleScore {
        let u = self.adjustment_vector(f);
        let ctx = u
            .as_ref()
            .map(|u| AdjustmentContext::compute(self.precision(), u.clone()));
        let singular = ctx.as_ref().is_some_and(AdjustmentContext::is_singular);

        let metric = match (&u, singular) {
            (Some(u), false) => crate::dynamic_geometry::invert_adjusted(covariance, u).ok(),
            _ => None,
        };
        let singular = singular || (u.is_some() && metric.is_none());
        let metric = metric.as_ref().unwrap_or_else(|| self.precision());

        let mut residuals = DMatrix::<f64>::zeros(self.dim(), self.n_classes());
        for (i, mut col) in residuals.column_iter_mut().enumerate() {
            col.copy_from(f);
            col -= self.means.row(i).transpose();
        }
        let transformed = metric * &residuals;
        let dists: Vec<f64> = (0..self.n_classes())
            .map(|i| residuals.column(i).dot(&transformed.column(i)))
            .collect();
        let best = argmin(&dists);
        finish(best, dists[best], singular)
    }
}

fn finish(argmin_class: usize, min_quadratic: f64, singular: bool) -> SampleScore {
    let clamped = min_quadratic < 0.0;
    let score = if min_quadratic > 0.0 {
        -min_quadratic.sqrt()
    } else {
        0.0
    };
    SampleScore {
        score,
        argmin_class,
        min_quadratic,
        clamped,
        singular,
    }
}

/// First index of the smallest value.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

fn check_test_dim(test: &FeatureSet, d: usize) -> Result<()> {
    if test.dim() != d {
        return Err(Error::Shape(format!(
            "test features have dimension {}, statistics have {d}",
            test.dim()
        )));
    }
    Ok(())
}

/// Scores every row of `test` on the fast path. Rows are processed in
/// parallel on the current rayon pool; output order matches input order.
pub fn score_batch(
    test: &FeatureSet,
    stats: &GaussianStats,
    basis: Option<&ResidualBasis>,
    config: &ScoreConfig,
) -> Result<ScoredBatch> {
    let scorer = Scorer::new(stats, basis, config)?;
    score_with(&scorer, test)
}

/// Scores every row of `test` by per-sample dense inversion.
pub fn score_batch_dense(
    test: &FeatureSet,
    stats: &GaussianStats,
    basis: Option<&ResidualBasis>,
    config: &ScoreConfig,
) -> Result<ScoredBatch> {
    let scorer = Scorer::new(stats, basis, config)?;
    score_with_dense(&scorer, test)
}

/// Euclidean scores (`Sigma = I`); `dynamic` applies the rank-1 adjustment
/// with `u` the residual projection of `f` (or `f` itself without a basis).
pub fn score_euclidean(
    test: &FeatureSet,
    means: &DMatrix<f64>,
    basis: Option<&ResidualBasis>,
    dynamic: bool,
) -> Result<ScoredBatch> {
    let scorer = Scorer::euclidean(means, basis, dynamic)?;
    score_with(&scorer, test)
}

pub fn score_with(scorer: &Scorer<'_>, test: &FeatureSet) -> Result<ScoredBatch> {
    check_test_dim(test, scorer.dim())?;
    let samples = (0..test.n_samples())
        .into_par_iter()
        .map(|i| {
            let f = scorer.prepare(test.row(i), i)?;
            Ok(scorer.score_prepared(&f))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoredBatch::from_samples(samples))
}

pub fn score_with_dense(scorer: &Scorer<'_>, test: &FeatureSet) -> Result<ScoredBatch> {
    check_test_dim(test, scorer.dim())?;
    let covariance = scorer.covariance();
    let samples = (0..test.n_samples())
        .into_par_iter()
        .map(|i| {
            let f = scorer.prepare(test.row(i), i)?;
            Ok(scorer.score_prepared_dense(&f, &covariance))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoredBatch::from_samples(samples))
}

/// Detector decision: `score > lambda` means in-distribution.
pub fn classify(scores: &[f64], lambda: f64) -> Vec<bool> {
    scores.iter().map(|&s| s > lambda).collect()
}

/// Writes `index,score,argmin_class,clamped,singular` rows.
pub fn write_scores_csv(batch: &ScoredBatch, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_scores_csv_to(batch, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_scores_csv_to<W: Write>(batch: &ScoredBatch, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "index,score,argmin_class,clamped,singular")?;
    for i in 0..batch.len() {
        writeln!(
            w,
            "{i},{},{},{},{}",
            fmt_g17(batch.scores[i]),
            batch.argmin_class[i],
            u8::from(batch.clamped[i]),
            u8::from(batch.singular[i])
        )?;
    }
    Ok(())
}

/// Writes the scores as a single-column FMAT file.
pub fn write_scores_fmat(batch: &ScoredBatch, path: &Path) -> Result<()> {
    let col = DMatrix::from_column_slice(batch.len(), 1, &batch.scores);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_fmat(&mut w, &col, FMAT_VERSION_F32)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a score vector from an FMAT file (first column), a CSV with a
/// `score` header column, or a headerless single-column CSV.
pub fn read_scores(path: &Path) -> Result<Vec<f64>> {
    use crate::feature_io::{read_fmat, Format};
    if Format::detect(path)? == Format::Binary {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let m = read_fmat(&mut std::io::BufReader::new(file))?;
        if m.ncols() == 0 {
            return Err(Error::Format(format!(
                "{}: no score column",
                path.display()
            )));
        }
        return Ok(m.column(0).iter().copied().collect());
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .peekable();
    let mut column = 0;
    if let Some(first) = lines.peek() {
        let fields: Vec<&str> = first.split(',').map(str::trim).collect();
        if fields.iter().any(|f| f.parse::<f64>().is_err()) {
            column = fields.iter().position(|f| *f == "score").ok_or_else(|| {
                Error::Format(format!("{}: header has no `score` column", path.display()))
            })?;
            lines.next();
        } else if fields.len() != 1 {
            return Err(Error::Format(format!(
                "{}: headerless score files must have one column",
                path.display()
            )));
        }
    }
    let mut scores = Vec::new();
    for (i, line) in lines.enumerate() {
        let field = line.split(',').nth(column).map(str::trim).unwrap_or("");
        let v: f64 = field.parse().map_err(|_| {
            Error::Format(format!(
                "{}: bad score `{field}` in row {i}",
                path.display()
            ))
        })?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                row: i,
                col: column,
            });
        }
        scores.push(v);
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamic_geometry::adjusted_quadratic_dense;

    /// d = 2, one class at (1, 0), identity regularized covariance.
    fn toy() -> (GaussianStats, ResidualBasis) {
        let eye = DMatrix::<f64>::identity(2, 2);
        let stats = GaussianStats::from_parts(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            eye.clone(),
            eye.clone(),
            eye.clone(),
            eye,
            0.0,
            0.0,
            0.0,
        )
        .unwrap();
        let basis = ResidualBasis {
            basis: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            eigenvalues: DVector::from_row_slice(&[1.0]),
            source: CovarianceSource::Within,
        };
        (stats, basis)
    }

    fn one(row: [f64; 2]) -> FeatureSet {
        FeatureSet::from_rows(&[row.to_vec()], None).unwrap()
    }

    #[test]
    fn dcc_worked_example() {
        let (stats, basis) = toy();
        let batch =
            score_batch(&one([0.8, 0.6]), &stats, Some(&basis), &ScoreConfig::dcc(1)).unwrap();
        // independent dense oracle: (I - u u^T)^-1 with u = (0, 0.6)
        let u = DVector::from_row_slice(&[0.0, 0.6]);
        let r = DVector::from_row_slice(&[-0.2, 0.6]);
        let dense = adjusted_quadratic_dense(&DMatrix::identity(2, 2), &u, &r).unwrap();
        assert!((dense - 0.6025).abs() < 1e-14);
        assert!((batch.scores[0] + dense.sqrt()).abs() < 1e-14);
        assert!((batch.scores[0] + 0.77621).abs() < 1e-5);
        assert_eq!(batch.argmin_class, vec![0]);
        assert_eq!(batch.clamp_count + batch.singular_count, 0);
    }

    #[test]
    fn static_worked_example() {
        let (stats, _) = toy();
        let batch =
            score_batch(&one([0.8, 0.6]), &stats, None, &ScoreConfig::mahalanobis()).unwrap();
        assert!((batch.scores[0] + 0.4f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn coincident_with_mean() {
        let (stats, basis) = toy();
        let batch =
            score_batch(&one([1.0, 0.0]), &stats, Some(&basis), &ScoreConfig::dcc(1)).unwrap();
        assert_eq!(batch.scores[0], 0.0);
        assert_eq!(batch.argmin_class[0], 0);
        assert!(!batch.clamped[0]);
    }

    #[test]
    fn euclidean_examples() {
        let means = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let s = score_euclidean(&one([0.0, 1.0]), &means, None, false).unwrap();
        assert!((s.scores[0] + 2f64.sqrt()).abs() < 1e-15);

        let (_, basis) = toy();
        let dynamic = score_euclidean(&one([0.8, 0.6]), &means, Some(&basis), true).unwrap();
        assert!((dynamic.scores[0] + 0.6025f64.sqrt()).abs() < 1e-14);

        // residual direction orthogonal to f: u = 0
        let flat = ResidualBasis {
            basis: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            eigenvalues: DVector::from_row_slice(&[1.0]),
            source: CovarianceSource::Within,
        };
        let test = one([-1.0, 0.0]);
        let a = score_euclidean(&test, &means, Some(&flat), true).unwrap();
        let b = score_euclidean(&test, &means, None, false).unwrap();
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn euclidean_without_basis_is_singular_on_unit_rows() {
        let means = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let s = score_euclidean(&one([0.0, 1.0]), &means, None, true).unwrap();
        assert_eq!(s.singular_count, 1);
        assert!((s.scores[0] + 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn classify_strict() {
        assert_eq!(classify(&[-1.0, -3.0], -2.0), vec![true, false]);
        assert_eq!(classify(&[-1.0, -3.0], f64::NEG_INFINITY), vec![true, true]);
        assert_eq!(classify(&[-1.0, -3.0], -1.0), vec![false, false]);
    }

    #[test]
    fn config_errors() {
        let (stats, _) = toy();
        let test = one([0.8, 0.6]);
        assert!(matches!(
            score_batch(&test, &stats, None, &ScoreConfig::dcc(1)),
            Err(Error::Config(_))
        ));
        let mut bad = ScoreConfig::dcc(1);
        bad.dme = false;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let wide = FeatureSet::from_rows(&[vec![1.0, 0.0, 0.0]], None).unwrap();
        assert!(matches!(
            score_batch(&wide, &stats, None, &ScoreConfig::mahalanobis()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_test_row_is_degenerate() {
        let (stats, _) = toy();
        let test = FeatureSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]], None).unwrap();
        assert!(matches!(
            score_batch(&test, &stats, None, &ScoreConfig::mahalanobis()),
            Err(Error::DegenerateFeature { row: 1 })
        ));
    }

    #[test]
    fn score_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let batch = ScoredBatch::from_samples(vec![finish(0, 0.25, false), finish(1, -1.0, true)]);
        assert_eq!(batch.clamp_count, 1);
        let csv = dir.path().join("s.csv");
        write_scores_csv(&batch, &csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(
            text,
            "index,score,argmin_class,clamped,singular\n0,-0.5,0,0,0\n1,0,1,1,1\n"
        );
        assert_eq!(read_scores(&csv).unwrap(), vec![-0.5, 0.0]);
        let bin = dir.path().join("s.fmat");
        write_scores_fmat(&batch, &bin).unwrap();
        assert_eq!(read_scores(&bin).unwrap(), vec![-0.5, 0.0]);
    }
}
