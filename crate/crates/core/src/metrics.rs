//! AUROC and FPR at a fixed TPR, with ID samples as the positive class.

use crate::error::{Error, Result};
use crate::feature_io::fmt_g17;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub auroc: f64,
    pub fpr95: f64,
    pub n_id: usize,
    pub n_ood: usize,
    pub threshold_at_tpr95: f64,
}

impl EvalReport {
    /// Flat JSON object, numbers at 17 significant digits.
    pub fn to_json(&self) -> String {
        format!(
            "{{\"auroc\": {}, \"fpr95\": {}, \"n_id\": {}, \"n_ood\": {}, \"threshold_at_tpr95\": {}}}",
            fmt_g17(self.auroc),
            fmt_g17(self.fpr95),
            self.n_id,
            self.n_ood,
            fmt_g17(self.threshold_at_tpr95)
        )
    }
}

fn check_inputs(id_scores: &[f64], ood_scores: &[f64]) -> Result<()> {
    if id_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::Metric(
            "ID and OOD score vectors must be non-empty".into(),
        ));
    }
    if id_scores.iter().chain(ood_scores).any(|s| !s.is_finite()) {
        return Err(Error::Metric("scores must be finite".into()));
    }
    Ok(())
}

/// Probability that a random ID score exceeds a random OOD score, ties
/// counting one half (Mann–Whitney U / (n m)). O((n + m) log(n + m)).
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_inputs(id_scores, ood_scores)?;
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Twice the U statistic, accumulated over groups of tied scores.
    let mut twice_u: u128 = 0;
    let mut ood_below: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut id_in, mut ood_in) = (0u128, 0u128);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                id_in += 1;
            } else {
                ood_in += 1;
            }
            j += 1;
        }
        twice_u += id_in * (2 * ood_below + ood_in);
        ood_below += ood_in;
        i = j;
    }
    let pairs = 2 * id_scores.len() as u128 * ood_scores.len() as u128;
    Ok(twice_u as f64 / pairs as f64)
}

/// FPR at the largest threshold `tau` whose TPR (fraction of ID scores
/// `>= tau`) reaches `tpr_target`. Returns `(fpr, tau)`.
pub fn fpr_at_tpr(id_scores: &[f64], ood_scores: &[f64], tpr_target: f64) -> Result<(f64, f64)> {
    check_inputs(id_scores, ood_scores)?;
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(Error::Metric(format!(
            "TPR target {tpr_target} outside (0, 1]"
        )));
    }
    let n = id_scores.len();
    let mut id_desc = id_scores.to_vec();
    id_desc.sort_by(|a, b| b.total_cmp(a));

    let mut threshold = id_desc[n - 1];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && id_desc[j] == id_desc[i] {
            j += 1;
        }
        // j ID scores are >= id_desc[i]
        if j as f64 / n as f64 >= tpr_target {
            threshold = id_desc[i];
            break;
        }
        i = j;
    }

    let mut ood_sorted = ood_scores.to_vec();
    ood_sorted.sort_by(f64::total_cmp);
    let below = ood_sorted.partition_point(|&s| s < threshold);
    let fpr = (ood_sorted.len() - below) as f64 / ood_sorted.len() as f64;
    Ok((fpr, threshold))
}

/// AUROC and FPR95 together.
pub fn evaluate(id_scores: &[f64], ood_scores: &[f64]) -> Result<EvalReport> {
    let auroc = auroc(id_scores, ood_scores)?;
    let (fpr95, threshold_at_tpr95) = fpr_at_tpr(id_scores, ood_scores, 0.95)?;
    Ok(EvalReport {
        auroc,
        fpr95,
        n_id: id_scores.len(),
        n_ood: ood_scores.len(),
        threshold_at_tpr95,
    })
}
