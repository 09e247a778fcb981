//! Deterministic synthetic ID/OOD feature generator.
//!
//! Class means are random unit vectors; training and ID-test samples are
//! `mean + within_sigma * N(0, I)`. A fixed fraction of every training class
//! is pushed by `outlier_magnitude` along one unit direction `v_out`, and OOD
//! samples are drawn around the class means shifted by `ood_shift * v_out`,
//! so OOD data lines up with the variance the outliers injected. All rows
//! are L2-normalized.
//!
//! Randomness comes from ChaCha8 streams keyed by `(seed, stream)`: stream 0
//! draws the class means, `TRAIN_STREAM + c` and `TEST_STREAM + c` draw class
//! `c`'s samples, `OOD_STREAM` the OOD samples, and `v_out` comes from
//! `(outlier_direction_seed, DIRECTION_STREAM)`. Normal variates use the
//! ziggurat sampler of `rand_distr`. Output is a pure function of the spec for
//! a given release of these dependencies.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_io::{normalize_in_place, FeatureSet};

const MEANS_STREAM: u64 = 0;
const DIRECTION_STREAM: u64 = 1;
const OOD_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 1 << 32;
const TEST_STREAM: u64 = 2 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    pub within_sigma: f64,
    pub n_ood: usize,
    pub ood_shift: f64,
    pub outlier_fraction: f64,
    pub outlier_magnitude: f64,
    pub outlier_direction_seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 7,
            n_classes: 8,
            dim: 32,
            n_per_class: 500,
            within_sigma: 0.1,
            n_ood: 2000,
            ood_shift: 3.0,
            outlier_fraction: 0.1,
            outlier_magnitude: 5.0,
            outlier_direction_seed: 7,
        }
    }
}

impl SynthSpec {
    /// Default scenario with both seeds set to `seed`.
    pub fn with_seed(seed: u64) -> Self {
        SynthSpec {
            seed,
            outlier_direction_seed: seed,
            ..SynthSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Parameter(msg));
        if self.n_classes == 0 || self.n_per_class == 0 || self.n_ood == 0 {
            return fail("class count, samples per class and OOD count must be positive".into());
        }
        if self.dim < 2 {
            return fail(format!("dimension must be at least 2, got {}", self.dim));
        }
        if !(self.within_sigma > 0.0 && self.within_sigma.is_finite()) {
            return fail(format!(
                "within_sigma must be positive, got {}",
                self.within_sigma
            ));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return fail(format!(
                "outlier_fraction must lie in [0, 1), got {}",
                self.outlier_fraction
            ));
        }
        if !(self.outlier_magnitude >= 0.0 && self.outlier_magnitude.is_finite()) {
            return fail(format!(
                "outlier_magnitude must be non-negative, got {}",
                self.outlier_magnitude
            ));
        }
        if !self.ood_shift.is_finite() {
            return fail("ood_shift must be finite".into());
        }
        Ok(())
    }

    /// Outliers per training class: `round(outlier_fraction * n_per_class)`.
    pub fn outliers_per_class(&self) -> usize {
        (self.outlier_fraction * self.n_per_class as f64).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    /// Labeled.
    pub train: FeatureSet,
    pub id_test: FeatureSet,
    pub ood_test: FeatureSet,
    /// Unit contamination direction `v_out`.
    pub outlier_direction: DVector<f64>,
    /// Generating class means (unit vectors, before noise).
    pub class_means: DMatrix<f64>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn unit_gaussian(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    loop {
        let mut v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        if normalize_in_place(&mut v).is_some() {
            return v;
        }
    }
}

/// `center + sigma * N(0, I)`, normalized.
fn noisy_unit(rng: &mut ChaCha8Rng, center: &DVector<f64>, sigma: f64) -> Result<DVector<f64>> {
    let mut v = DVector::from_fn(center.len(), |i, _| {
        center[i] + sigma * rng.sample::<f64, _>(StandardNormal)
    });
    normalize_in_place(&mut v)
        .ok_or_else(|| Error::Numerical("generated a zero-norm sample".into()))?;
    Ok(v)
}

fn stack(rows: Vec<DVector<f64>>, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j])
}

/// Generates `(train, id_test, ood_test)` for a spec.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let d = spec.dim;
    let n_c = spec.n_classes;

    let mut rng = stream_rng(spec.seed, MEANS_STREAM);
    let means: Vec<DVector<f64>> = (0..n_c).map(|_| unit_gaussian(&mut rng, d)).collect();
    let v_out = unit_gaussian(
        &mut stream_rng(spec.outlier_direction_seed, DIRECTION_STREAM),
        d,
    );
    let push = &v_out * spec.outlier_magnitude;
    let n_outliers = spec.outliers_per_class();

    let blocks = (0..n_c)
        .into_par_iter()
        .map(|c| {
            let mut train_rng = stream_rng(spec.seed, TRAIN_STREAM + c as u64);
            let outlier_center = &means[c] + &push;
            let train = (0..spec.n_per_class)
                .map(|i| {
                    let center = if i < n_outliers {
                        &outlier_center
                    } else {
                        &means[c]
                    };
                    noisy_unit(&mut train_rng, center, spec.within_sigma)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut test_rng = stream_rng(spec.seed, TEST_STREAM + c as u64);
            let test = (0..spec.n_per_class)
                .map(|_| noisy_unit(&mut test_rng, &means[c], spec.within_sigma))
                .collect::<Result<Vec<_>>>()?;
            Ok((train, test))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut train_rows = Vec::with_capacity(n_c * spec.n_per_class);
    let mut test_rows = Vec::with_capacity(n_c * spec.n_per_class);
    let mut labels = Vec::with_capacity(n_c * spec.n_per_class);
    for (c, (train, test)) in blocks.into_iter().enumerate() {
        labels.extend(std::iter::repeat_n(c as u32, train.len()));
        train_rows.extend(train);
        test_rows.extend(test);
    }

    let mut ood_rng = stream_rng(spec.seed, OOD_STREAM);
    let shift = &v_out * spec.ood_shift;
    let ood_rows = (0..spec.n_ood)
        .map(|_| {
            let c = ood_rng.random_range(0..n_c);
            let center = &means[c] + &shift;
            noisy_unit(&mut ood_rng, &center, spec.within_sigma)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SynthData {
        train: FeatureSet::new(stack(train_rows, d), Some(labels))?,
        id_test: FeatureSet::new(stack(test_rows, d), None)?,
        ood_test: FeatureSet::new(stack(ood_rows, d), None)?,
        outlier_direction: v_out,
        class_means: stack(means, d),
    })
}
