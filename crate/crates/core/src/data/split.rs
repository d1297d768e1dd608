use rand::seq::SliceRandom;

use super::{Dataset, NUM_CLASSES, PAPER_TRAIN_COUNTS};
use crate::error::{Error, Result};
use crate::rng;

/// How a dataset is divided into train and test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitPreset {
    /// The published per-class train counts; every other image is test.
    Paper,
    /// Per-class `floor(count · fraction)` train images.
    Fraction(f64),
}

impl SplitPreset {
    pub fn apply(&self, dataset: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
        match *self {
            SplitPreset::Paper => split_with_train_counts(dataset, &PAPER_TRAIN_COUNTS, seed),
            SplitPreset::Fraction(f) => stratified_split(dataset, f, seed),
        }
    }
}

/// Per-class seeded shuffle, then the first `floor(count · fraction)` images
/// of each class go to train and the rest to test.
pub fn stratified_split(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let counts = dataset
        .class_counts()
        .map(|n| (n as f64 * train_fraction).floor() as usize);
    split_with_train_counts(dataset, &counts, seed)
}

/// Splits with an explicit number of train images per class.
pub fn split_with_train_counts(
    dataset: &Dataset,
    train_counts: &[usize; NUM_CLASSES],
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut train = Dataset::new(dataset.height(), dataset.width());
    let mut test = Dataset::new(dataset.height(), dataset.width());
    for (class, indices) in dataset.per_class_index().iter().enumerate() {
        let want = train_counts[class];
        if want > indices.len() {
            return Err(Error::ClassCount {
                class,
                message: format!("{want} train images requested, {} available", indices.len()),
            });
        }
        let mut order = indices.clone();
        order.shuffle(&mut rng::substream(seed, &[class as u64]));
        for (k, &i) in order.iter().enumerate() {
            let item = dataset.images()[i].clone();
            if k < want {
                train.push(item)?;
            } else {
                test.push(item)?;
            }
        }
    }
    Ok((train, test))
}
