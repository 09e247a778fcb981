//! End-to-end evaluation runs shared by the CLI and the test suites:
//! score ID and OOD sets under one configuration, sweep the residual
//! dimension, and run the five-row component ablation.

use crate::error::{Error, Result};
use crate::feature_io::FeatureSet;
use crate::gaussian_stats::{residual_basis, GaussianStats, ResidualBasis};
use crate::metrics::{evaluate, EvalReport};
use crate::scoring::{score_batch, Method, ScoreConfig, ScoredBatch};

#[derive(Debug, Clone)]
pub struct RunResult {
    pub report: EvalReport,
    pub id: ScoredBatch,
    pub ood: ScoredBatch,
}

/// Residual basis a configuration needs, reusing `cached` when it matches.
pub fn basis_for(
    stats: &GaussianStats,
    config: &ScoreConfig,
    cached: Option<&ResidualBasis>,
) -> Result<Option<ResidualBasis>> {
    if !config.rsp {
        return Ok(None);
    }
    let k = config
        .residual_dim
        .ok_or_else(|| Error::Config("rsp requires a residual dimension".into()))?;
    let source = config.source();
    if let Some(b) = cached.filter(|b| b.k() == k && b.source == source) {
        return Ok(Some(b.clone()));
    }
    residual_basis(stats, k, source).map(Some)
}

/// Scores both sets and evaluates ID-vs-OOD separability.
pub fn run_config(
    stats: &GaussianStats,
    id_test: &FeatureSet,
    ood_test: &FeatureSet,
    config: &ScoreConfig,
    cached: Option<&ResidualBasis>,
) -> Result<RunResult> {
    let basis = basis_for(stats, config, cached)?;
    let id = score_batch(id_test, stats, basis.as_ref(), config)?;
    let ood = score_batch(ood_test, stats, basis.as_ref(), config)?;
    let report = evaluate(&id.scores, &ood.scores)?;
    Ok(RunResult { report, id, ood })
}

/// Checks every grid value against `1 <= k <= d - 1`.
pub fn validate_grid(grid: &[usize], dim: usize) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Parameter("empty residual-dimension grid".into()));
    }
    if let Some(&bad) = grid.iter().find(|&&k| k < 1 || k >= dim) {
        return Err(Error::Parameter(format!(
            "grid value k = {bad} outside 1..={}",
            dim - 1
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub report: EvalReport,
}

/// One evaluation per residual dimension in `grid`, in grid order.
pub fn run_sweep(
    stats: &GaussianStats,
    id_test: &FeatureSet,
    ood_test: &FeatureSet,
    base: &ScoreConfig,
    grid: &[usize],
) -> Result<Vec<SweepRow>> {
    validate_grid(grid, stats.dim())?;
    grid.iter()
        .map(|&k| {
            let config = ScoreConfig {
                residual_dim: Some(k),
                ..base.clone()
            };
            let run = run_config(stats, id_test, ood_test, &config, None)?;
            Ok(SweepRow {
                k,
                report: run.report,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: &'static str,
    pub config: ScoreConfig,
    pub report: EvalReport,
}

/// The five component configurations in table order: baseline Mahalanobis
/// (full covariance), +DME, +DME+RSP, +DME+DCM, and the full method.
pub fn ablation_configs(
    k: usize,
    normalize: bool,
    eps_scale: f64,
) -> Vec<(&'static str, ScoreConfig)> {
    let cfg = |method, dme, rsp, dcm| ScoreConfig {
        method,
        dme,
        rsp,
        dcm,
        residual_dim: Some(k),
        reg_epsilon_scale: eps_scale,
        normalize,
    };
    vec![
        (
            "baseline",
            cfg(Method::MahalanobisStatic, false, false, false),
        ),
        ("dme", cfg(Method::Dcc, true, false, false)),
        ("dme+rsp", cfg(Method::Dcc, true, true, false)),
        ("dme+dcm", cfg(Method::Dcc, true, false, true)),
        ("full", cfg(Method::Dcc, true, true, true)),
    ]
}

pub fn run_ablation(
    stats: &GaussianStats,
    id_test: &FeatureSet,
    ood_test: &FeatureSet,
    k: usize,
    normalize: bool,
) -> Result<Vec<AblationRow>> {
    validate_grid(&[k], stats.dim())?;
    ablation_configs(k, normalize, stats.reg_epsilon_scale)
        .into_iter()
        .map(|(name, config)| {
            let run = run_config(stats, id_test, ood_test, &config, None)?;
            Ok(AblationRow {
                name,
                config,
                report: run.report,
            })
        })
        .collect()
}
