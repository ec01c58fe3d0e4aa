use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledDataset, SplitTag};

/// Fractions held out for validation and test, and the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPolicy {
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub rng_seed: u64,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self { validation_fraction: 0.10, test_fraction: 0.10, rng_seed: 0 }
    }
}

impl SplitPolicy {
    pub fn with_seed(rng_seed: u64) -> Self {
        Self { rng_seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let (v, t) = (self.validation_fraction, self.test_fraction);
        if !(v > 0.0 && t > 0.0 && v + t < 1.0) {
            return Err(DatasetError::Invalid(format!(
                "split fractions must be positive and sum below 1 (validation {v}, test {t})"
            )));
        }
        Ok(())
    }
}

/// Stratified random split into (train, validation, test).
///
/// Each class gives `round(f * n_class)` rows to validation and to test,
/// chosen uniformly at random with a seeded generator; the rest train.
/// Rows keep their original relative order inside each part.
pub fn split(
    ds: &LabeledDataset,
    policy: &SplitPolicy,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset), DatasetError> {
    policy.validate()?;
    if ds.split_tag() != SplitTag::Unsplit {
        return Err(DatasetError::Invalid(format!("dataset is already split ({:?})", ds.split_tag())));
    }
    if ds.len() < 10 {
        return Err(DatasetError::Invalid(format!("{} rows is too few to split", ds.len())));
    }

    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    for (i, &l) in ds.labels().iter().enumerate() {
        per_class[l].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(policy.rng_seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for mut rows in per_class {
        let n = rows.len();
        rows.shuffle(&mut rng);
        let n_val = ((policy.validation_fraction * n as f64).round() as usize).min(n);
        let n_test = ((policy.test_fraction * n as f64).round() as usize).min(n - n_val);
        val.extend_from_slice(&rows[..n_val]);
        test.extend_from_slice(&rows[n_val..n_val + n_test]);
        train.extend_from_slice(&rows[n_val + n_test..]);
    }
    for part in [&mut train, &mut val, &mut test] {
        part.sort_unstable();
    }
    Ok((
        ds.subset(&train, SplitTag::Train),
        ds.subset(&val, SplitTag::Validation),
        ds.subset(&test, SplitTag::Test),
    ))
}
