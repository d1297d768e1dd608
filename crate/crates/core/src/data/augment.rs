//! Random affine augmentation and per-class expansion.
//!
//! One affine map per image, composed as rotate → shear → zoom → translate
//! about the image centre, sampled by inverse mapping with nearest-neighbour
//! lookup and nearest-edge fill. Flips follow the affine step.

use rand::{Rng, RngCore};
use rayon::prelude::*;

use super::{Dataset, Image, LabeledImage, Provenance, NUM_CLASSES, PAPER_AUGMENTED_TOTAL};
use crate::error::{Error, Result};
use crate::rng;

/// Per-class sizes `balance_and_expand` grows the training split to.
#[derive(Clone, Debug, PartialEq)]
pub enum ExpansionTargets {
    /// Keep the current counts.
    None,
    /// 50,024 images spread evenly; the largest class takes the one short
    /// share.
    Paper,
    /// Every class grows to the size of the largest one.
    BalanceToMax,
    Explicit([usize; NUM_CLASSES]),
}

impl ExpansionTargets {
    pub fn resolve(&self, counts: &[usize; NUM_CLASSES]) -> [usize; NUM_CLASSES] {
        match self {
            ExpansionTargets::None => *counts,
            ExpansionTargets::Paper => paper_targets(counts),
            ExpansionTargets::BalanceToMax => {
                let max = counts.iter().copied().max().unwrap_or(0);
                counts.map(|n| if n == 0 { 0 } else { max })
            }
            ExpansionTargets::Explicit(t) => *t,
        }
    }
}

fn paper_targets(counts: &[usize; NUM_CLASSES]) -> [usize; NUM_CLASSES] {
    let base = PAPER_AUGMENTED_TOTAL / NUM_CLASSES;
    let extra = PAPER_AUGMENTED_TOTAL % NUM_CLASSES;
    // classes ordered largest first (ties by id) receive the smaller shares
    let mut order: Vec<usize> = (0..NUM_CLASSES).collect();
    order.sort_by_key(|&c| (std::cmp::Reverse(counts[c]), c));
    let mut targets = [base; NUM_CLASSES];
    for &c in order.iter().skip(NUM_CLASSES - extra) {
        targets[c] += 1;
    }
    targets
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FillMode {
    Nearest,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentationConfig {
    pub rescale: f64,
    pub featurewise_center: bool,
    pub featurewise_std_normalization: bool,
    pub zca_whitening: bool,
    /// Degrees; rotations are uniform in `±rotation_range`.
    pub rotation_range: f64,
    /// Fraction of the width.
    pub width_shift_range: f64,
    /// Fraction of the height.
    pub height_shift_range: f64,
    /// Shear angle in radians.
    pub shear_range: f64,
    /// Zoom factors are uniform in `[1 − zoom_range, 1 + zoom_range]`.
    pub zoom_range: f64,
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    pub fill_mode: FillMode,
    pub targets: ExpansionTargets,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            rescale: 1.0 / 255.0,
            featurewise_center: false,
            featurewise_std_normalization: false,
            zca_whitening: false,
            rotation_range: 10.0,
            width_shift_range: 0.2,
            height_shift_range: 0.2,
            shear_range: 0.2,
            zoom_range: 0.1,
            horizontal_flip: true,
            vertical_flip: true,
            fill_mode: FillMode::Nearest,
            targets: ExpansionTargets::Paper,
            seed: 0,
        }
    }
}

impl AugmentationConfig {
    /// All ranges zero and both flips off.
    pub fn identity() -> Self {
        Self {
            rotation_range: 0.0,
            width_shift_range: 0.0,
            height_shift_range: 0.0,
            shear_range: 0.0,
            zoom_range: 0.0,
            horizontal_flip: false,
            vertical_flip: false,
            targets: ExpansionTargets::None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.featurewise_center || self.featurewise_std_normalization || self.zca_whitening {
            return Err(Error::InvalidParameter(
                "featurewise normalization and ZCA whitening are not supported".into(),
            ));
        }
        let ranges = [
            ("rotation_range", self.rotation_range),
            ("width_shift_range", self.width_shift_range),
            ("height_shift_range", self.height_shift_range),
            ("shear_range", self.shear_range),
            ("zoom_range", self.zoom_range),
        ];
        for (name, v) in ranges {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be >= 0")));
            }
        }
        if self.zoom_range >= 1.0 {
            return Err(Error::InvalidParameter("zoom_range must be below 1".into()));
        }
        Ok(())
    }
}

fn symmetric(rng: &mut dyn RngCore, range: f64) -> f64 {
    let u: f64 = rng.random();
    range * (2.0 * u - 1.0)
}

/// Draws one random transform and applies it.
pub fn augment_image(image: &Image, config: &AugmentationConfig, rng: &mut dyn RngCore) -> Image {
    // every parameter is drawn even when its range is zero, so the stream
    // position does not depend on the configuration
    let rotation = symmetric(rng, config.rotation_range).to_radians();
    let shear = symmetric(rng, config.shear_range);
    let zoom = 1.0 + symmetric(rng, config.zoom_range);
    let shift_x = symmetric(rng, config.width_shift_range) * image.width() as f64;
    let shift_y = symmetric(rng, config.height_shift_range) * image.height() as f64;
    let hflip = rng.random::<f64>() < 0.5;
    let vflip = rng.random::<f64>() < 0.5;

    let mut out = affine(image, rotation, shear, zoom, shift_x, shift_y);
    if config.horizontal_flip && hflip {
        out = out.flip_horizontal();
    }
    if config.vertical_flip && vflip {
        out = out.flip_vertical();
    }
    out
}

type Mat2 = [[f64; 2]; 2];

fn mul(a: Mat2, b: Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

fn affine(image: &Image, rotation: f64, shear: f64, zoom: f64, tx: f64, ty: f64) -> Image {
    let (s, c) = rotation.sin_cos();
    let rot = [[c, -s], [s, c]];
    let shr = [[1.0, -shear.sin()], [0.0, shear.cos()]];
    let zm = [[zoom, 0.0], [0.0, zoom]];
    let fwd = mul(zm, mul(shr, rot));
    let det = fwd[0][0] * fwd[1][1] - fwd[0][1] * fwd[1][0];
    let inv = [
        [fwd[1][1] / det, -fwd[0][1] / det],
        [-fwd[1][0] / det, fwd[0][0] / det],
    ];

    let (h, w) = (image.height(), image.width());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            let qx = x as f64 - cx - tx;
            let qy = y as f64 - cy - ty;
            let sx = inv[0][0] * qx + inv[0][1] * qy + cx;
            let sy = inv[1][0] * qx + inv[1][1] * qy + cy;
            let sx = sx.round().clamp(0.0, w as f64 - 1.0) as usize;
            let sy = sy.round().clamp(0.0, h as f64 - 1.0) as usize;
            out.set_pixel(y, x, image.pixel(sy, sx));
        }
    }
    out
}

/// Appends augmented copies until each class reaches its target. Sources
/// cycle through the class's originals; the `j`-th copy of class `c` uses the
/// stream derived from `(seed, c, j)`.
pub fn balance_and_expand(train: &Dataset, config: &AugmentationConfig) -> Result<Dataset> {
    config.validate()?;
    let counts = train.class_counts();
    let targets = config.targets.resolve(&counts);
    let mut jobs = Vec::new();
    for class in 0..NUM_CLASSES {
        let (have, want) = (counts[class], targets[class]);
        if want < have {
            return Err(Error::ClassCount {
                class,
                message: format!("target {want} is below current count {have}"),
            });
        }
        if want > have && have == 0 {
            return Err(Error::ClassCount {
                class,
                message: format!("target {want} but no images to augment"),
            });
        }
        jobs.extend((0..want - have).map(|j| (class, j)));
    }

    let index = train.per_class_index();
    let created: Vec<LabeledImage> = jobs
        .par_iter()
        .map(|&(class, j)| {
            let source = &train.images()[index[class][j % counts[class]]];
            let mut r = rng::substream(config.seed, &[class as u64, j as u64]);
            LabeledImage {
                image: augment_image(&source.image, config, &mut r),
                label: class,
                provenance: Provenance::Augmented,
            }
        })
        .collect();

    let mut out = train.clone();
    for item in created {
        out.push(item)?;
    }
    Ok(out)
}
