//! Per-sample diagnostics of the rank-1 adjustment and histogram export.
//!
//! For a test feature `f = f_r + f_r'` (residual part plus principal part)
//! and the class `mu_c` nearest under the unadjusted Mahalanobis distance:
//!
//! * `p = f_r^T P f_r`
//! * `q = (mu_c - f_r')^T P (mu_c - f_r')`
//! * `s = f_r^T P (mu_c - f_r')`
//!
//! with `P` the regularized within-class precision. Residual projections are
//! always taken on L2-normalized features.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::dynamic_geometry::{nonneg_condition, AdjustmentContext};
use crate::error::{Error, Result};
use crate::feature_io::{fmt_g17, FeatureSet};
use crate::gaussian_stats::{CovarianceSource, GaussianStats, ResidualBasis};
use crate::scoring::{ScoreConfig, Scorer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDiagnostics {
    pub p: f64,
    pub q: f64,
    pub s: f64,
    /// `||f_r||_2`.
    pub residual_norm: f64,
    /// Nearest class under the unadjusted Mahalanobis distance.
    pub chosen_class: usize,
    /// Nearest class under the configured (adjusted) score.
    pub adjusted_class: usize,
    pub condition_holds: bool,
    pub clamped: bool,
}

/// Computes p/q/s, residual norms and clamp status for every test row.
pub fn diagnose_batch(
    test: &FeatureSet,
    stats: &GaussianStats,
    basis: &ResidualBasis,
    config: &ScoreConfig,
) -> Result<Vec<SampleDiagnostics>> {
    if !config.rsp {
        return Err(Error::Config("diagnostics need rsp enabled".into()));
    }
    if test.dim() != stats.dim() {
        return Err(Error::Shape(format!(
            "test features have dimension {}, statistics have {}",
            test.dim(),
            stats.dim()
        )));
    }
    let scorer = Scorer::new(stats, Some(basis), config)?;
    let mut within = ScoreConfig::mahalanobis();
    within.normalize = config.normalize;
    let nearest = Scorer::new(stats, None, &within)?;
    let precision = stats.precision(CovarianceSource::Within);

    (0..test.n_samples())
        .into_par_iter()
        .map(|i| {
            let f = nearest.prepare(test.row(i), i)?;
            let (chosen_class, _) = nearest.nearest_static(&f);
            let scored = scorer.score_prepared(&f);

            let f_r = basis.project(&f);
            let principal = &f - &f_r;
            let anchor = stats.means.row(chosen_class).transpose() - principal;
            let residual_norm = f_r.norm();
            let ctx = AdjustmentContext::compute(precision, f_r);
            let p = ctx.p();
            let anchor_w = precision * &anchor;
            let q = anchor.dot(&anchor_w);
            let s = ctx.u().dot(&anchor_w);

            Ok(SampleDiagnostics {
                p,
                q,
                s,
                residual_norm,
                chosen_class,
                adjusted_class: scored.argmin_class,
                condition_holds: nonneg_condition(p, q, s),
                clamped: scored.clamped,
            })
        })
        .collect()
}

/// Writes `index,p,q,s,residual_norm,chosen_class,condition_holds,clamped,adjusted_class`.
pub fn write_diagnostics_csv(diags: &[SampleDiagnostics], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_diagnostics_to(diags, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_diagnostics_to<W: Write>(
    diags: &[SampleDiagnostics],
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(
        w,
        "index,p,q,s,residual_norm,chosen_class,condition_holds,clamped,adjusted_class"
    )?;
    for (i, d) in diags.iter().enumerate() {
        writeln!(
            w,
            "{i},{},{},{},{},{},{},{},{}",
            fmt_g17(d.p),
            fmt_g17(d.q),
            fmt_g17(d.s),
            fmt_g17(d.residual_norm),
            d.chosen_class,
            u8::from(d.condition_holds),
            u8::from(d.clamped),
            d.adjusted_class
        )?;
    }
    Ok(())
}

/// Uniform histogram over the joint range of several labeled vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub labels: Vec<String>,
    /// `counts[label][bin]`.
    pub counts: Vec<Vec<u64>>,
}

impl Histogram {
    pub fn new(values: &[(&str, &[f64])], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Diagnostic("need at least one bin".into()));
        }
        if values.is_empty() {
            return Err(Error::Diagnostic("no labeled vectors".into()));
        }
        if let Some((label, _)) = values.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::Diagnostic(format!("vector `{label}` is empty")));
        }
        if values.iter().any(|(_, v)| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Diagnostic("histogram values must be finite".into()));
        }
        let all = values.iter().flat_map(|(_, v)| v.iter().copied());
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        });
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + width * i as f64 })
            .collect();

        let counts = values
            .iter()
            .map(|(_, v)| {
                let mut c = vec![0u64; bins];
                for &x in v.iter() {
                    let idx = if width > 0.0 {
                        (((x - lo) / width).floor() as usize).min(bins - 1)
                    } else {
                        0
                    };
                    c[idx] += 1;
                }
                c
            })
            .collect();
        Ok(Histogram {
            edges,
            labels: values.iter().map(|(l, _)| l.to_string()).collect(),
            counts,
        })
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Shared-bin intersection of two labels' normalized histograms:
    /// `sum_b min(c_a[b] / n_a, c_b[b] / n_b)`, in `[0, 1]`.
    pub fn overlap_mass(&self, a: usize, b: usize) -> f64 {
        let na: u64 = self.counts[a].iter().sum();
        let nb: u64 = self.counts[b].iter().sum();
        self.counts[a]
            .iter()
            .zip(&self.counts[b])
            .map(|(&x, &y)| (x as f64 / na as f64).min(y as f64 / nb as f64))
            .sum()
    }

    pub fn write_csv_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let header: Vec<String> = self.labels.iter().map(|l| format!("count_{l}")).collect();
        writeln!(w, "bin_left,bin_right,{}", header.join(","))?;
        for b in 0..self.bins() {
            let counts: Vec<String> = self.counts.iter().map(|c| c[b].to_string()).collect();
            writeln!(
                w,
                "{},{},{}",
                fmt_g17(self.edges[b]),
                fmt_g17(self.edges[b + 1]),
                counts.join(",")
            )?;
        }
        Ok(())
    }
}

/// Writes a joint histogram of the labeled vectors as CSV.
pub fn export_histograms(values: &[(&str, &[f64])], bins: usize, path: &Path) -> Result<Histogram> {
    let hist = Histogram::new(values, bins)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    hist.write_csv_to(&mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(hist)
}
