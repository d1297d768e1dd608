//! Local surrogate explanations over superpixels.

mod lime;
mod render;
mod segment;

use rayon::prelude::*;

pub use lime::{
    apply_mask, fit_surrogate, kernel_weight, perturb, sample_masks, top_regions, Perturbation,
    Surrogate,
};
pub use render::{render_overlay, Overlay, OVERLAY_ALPHA};
pub use segment::{segment_grid, segment_slic_lite, SuperpixelMap};

use crate::data::Image;
use crate::ensemble::EnsembleModel;
use crate::error::{Error, Result};
use crate::tensor::argmax;

/// Anything that maps an image to class probabilities.
pub trait Classifier: Sync {
    fn class_probabilities(&self, image: &Image) -> Result<Vec<f64>>;
}

impl Classifier for EnsembleModel {
    fn class_probabilities(&self, image: &Image) -> Result<Vec<f64>> {
        self.predict_image(image)
    }
}

impl<F> Classifier for F
where
    F: Fn(&Image) -> Result<Vec<f64>> + Sync,
{
    fn class_probabilities(&self, image: &Image) -> Result<Vec<f64>> {
        self(image)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Segmentation {
    Grid { size: usize },
    SlicLite { target: usize, compactness: f64, iterations: usize },
}

impl Segmentation {
    pub fn apply(&self, image: &Image) -> Result<SuperpixelMap> {
        match *self {
            Self::Grid { size } => segment_grid(image, size),
            Self::SlicLite {
                target,
                compactness,
                iterations,
            } => segment_slic_lite(image, target, compactness, iterations),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExplainConfig {
    pub samples: usize,
    pub kernel_width: f64,
    pub lambda: f64,
    pub segmentation: Segmentation,
    /// Class to explain; the predicted class when `None`.
    pub target_class: Option<usize>,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            kernel_width: 0.25,
            lambda: 1.0,
            segmentation: Segmentation::Grid { size: 4 },
            target_class: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    pub superpixels: SuperpixelMap,
    pub target_class: usize,
    /// Model probability of the target class on the unmodified image.
    pub probability: f64,
    pub surrogate: Surrogate,
    pub samples: usize,
    pub kernel_width: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Explanation {
    pub fn coefficients(&self) -> &[f64] {
        &self.surrogate.coefficients
    }

    pub fn top_regions(&self, k: usize) -> Vec<usize> {
        top_regions(&self.surrogate.coefficients, k)
    }
}

/// Segments the image, queries the model on masked copies and fits the
/// weighted ridge surrogate for the target class.
pub fn explain(model: &impl Classifier, image: &Image, config: &ExplainConfig) -> Result<Explanation> {
    if config.samples == 0 {
        return Err(Error::InvalidParameter("explanation needs at least one sample".into()));
    }
    if !(config.kernel_width > 0.0 && config.kernel_width.is_finite()) {
        return Err(Error::InvalidParameter(format!("kernel width {}", config.kernel_width)));
    }
    let superpixels = config.segmentation.apply(image)?;
    let masks = sample_masks(superpixels.region_count(), config.samples, config.seed);
    let probs: Vec<Vec<f64>> = masks
        .par_iter()
        .map(|m| model.class_probabilities(&apply_mask(image, &superpixels, m)?))
        .collect::<Result<_>>()?;
    let base = &probs[0];
    let target_class = config.target_class.unwrap_or_else(|| argmax(base));
    if target_class >= base.len() {
        return Err(Error::LabelOutOfRange {
            label: target_class,
            classes: base.len(),
        });
    }
    let outputs: Vec<f64> = probs.iter().map(|p| p[target_class]).collect();
    let weights: Vec<f64> = masks.iter().map(|m| kernel_weight(m, config.kernel_width)).collect();
    let surrogate = fit_surrogate(&masks, &outputs, &weights, config.lambda)?;
    Ok(Explanation {
        superpixels,
        target_class,
        probability: base[target_class],
        surrogate,
        samples: config.samples,
        kernel_width: config.kernel_width,
        lambda: config.lambda,
        seed: config.seed,
    })
}
