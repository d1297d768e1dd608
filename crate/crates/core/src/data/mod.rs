//! Dataset ingestion, splitting, standardization and augmentation.

mod augment;
mod csv_io;
mod split;
mod standardize;
pub mod synthetic;

pub use augment::{augment_image, balance_and_expand, AugmentationConfig, ExpansionTargets};
pub use csv_io::{load_csv_dataset, read_csv_dataset, write_csv_dataset};
pub use split::{split_with_train_counts, stratified_split, SplitPreset};
pub use standardize::{apply_standardization, compute_standardization, StandardizationStats, STD_FLOOR};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const NUM_CLASSES: usize = 5;
pub const CHANNELS: usize = 3;

/// Label order used throughout: 0 Basophil … 4 Neutrophil.
pub const CLASS_NAMES: [&str; NUM_CLASSES] =
    ["Basophil", "Eosinophil", "Lymphocyte", "Monocyte", "Neutrophil"];

/// Per-class image counts of the Raabin-WBC release.
pub const RAABIN_CLASS_COUNTS: [usize; NUM_CLASSES] = [301, 1066, 3461, 795, 8891];

/// Published per-class train counts; the remainder of each class is test.
pub const PAPER_TRAIN_COUNTS: [usize; NUM_CLASSES] = [212, 744, 2427, 561, 6231];
pub const PAPER_TEST_COUNTS: [usize; NUM_CLASSES] = [89, 322, 1034, 234, 2660];

/// Size of the training set after the published augmentation run.
pub const PAPER_AUGMENTED_TOTAL: usize = 50_024;

/// An `H×W×3` image stored channel-last, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Geometry(format!("image of size {height}×{width}")));
        }
        if data.len() != height * width * CHANNELS {
            return Err(Error::ShapeMismatch(format!(
                "{height}×{width}×3 image needs {} values, got {}",
                height * width * CHANNELS,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * CHANNELS;
        self.data[i..i + CHANNELS].copy_from_slice(&rgb);
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(y, x, self.pixel(y, self.width - 1 - x));
            }
        }
        out
    }

    pub fn flip_vertical(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(y, x, self.pixel(self.height - 1 - y, x));
            }
        }
        out
    }

    /// Channel-first `3×H×W` tensor for the network.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let plane = self.height * self.width;
        let mut values = vec![0.0; plane * CHANNELS];
        for (i, px) in self.data.chunks_exact(CHANNELS).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                values[c * plane + i] = v;
            }
        }
        Tensor::new(vec![CHANNELS, self.height, self.width], values)
            .expect("image dimensions are positive")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Original,
    Augmented,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: Image,
    pub label: usize,
    pub provenance: Provenance,
}

impl LabeledImage {
    pub fn original(image: Image, label: usize) -> Self {
        Self {
            image,
            label,
            provenance: Provenance::Original,
        }
    }
}

/// Images of one geometry with a per-class index.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    height: usize,
    width: usize,
    images: Vec<LabeledImage>,
    per_class: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            images: Vec::new(),
            per_class: vec![Vec::new(); NUM_CLASSES],
        }
    }

    pub fn from_images(height: usize, width: usize, images: Vec<LabeledImage>) -> Result<Self> {
        let mut ds = Self::new(height, width);
        for img in images {
            ds.push(img)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, item: LabeledImage) -> Result<()> {
        if item.label >= NUM_CLASSES {
            return Err(Error::LabelOutOfRange {
                label: item.label,
                classes: NUM_CLASSES,
            });
        }
        if item.image.height() != self.height || item.image.width() != self.width {
            return Err(Error::Geometry(format!(
                "{}×{} image in a {}×{} dataset",
                item.image.height(),
                item.image.width(),
                self.height,
                self.width
            )));
        }
        self.per_class[item.label].push(self.images.len());
        self.images.push(item);
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[LabeledImage] {
        &self.images
    }

    pub fn get(&self, index: usize) -> Option<&LabeledImage> {
        self.images.get(index)
    }

    /// Indices of the images of each class, in dataset order.
    pub fn per_class_index(&self) -> &[Vec<usize>] {
        &self.per_class
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        std::array::from_fn(|c| self.per_class[c].len())
    }

    pub fn labels(&self) -> Vec<usize> {
        self.images.iter().map(|i| i.label).collect()
    }

    /// Standardized network inputs, one per image.
    pub fn to_tensors(&self, stats: &StandardizationStats) -> Vec<Tensor<f32>> {
        self.images
            .iter()
            .map(|i| apply_standardization(&i.image, stats).to_tensor())
            .collect()
    }
}
