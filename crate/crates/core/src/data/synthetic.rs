//! Stand-in data for tests and desk runs when no real export is available.
//!
//! Pixels are quantized to multiples of 1/255 so datasets survive a CSV
//! round trip unchanged.

use rand::Rng;
use rayon::prelude::*;

use super::{Dataset, Image, LabeledImage, NUM_CLASSES};
use crate::rng;

const CELL_COLORS: [[f32; 3]; NUM_CLASSES] = [
    [0.25, 0.10, 0.40],
    [0.80, 0.35, 0.30],
    [0.20, 0.25, 0.70],
    [0.50, 0.40, 0.60],
    [0.70, 0.30, 0.60],
];
const BACKGROUND: [f32; 3] = [0.85, 0.75, 0.80];

fn quantize(v: f32) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Smear-like images: a class-coloured disc of class-dependent radius on a
/// light background, with positional jitter and pixel noise.
pub fn smear_image(label: usize, height: usize, width: usize, rng: &mut impl Rng) -> Image {
    let side = height.min(width) as f32;
    let radius = side * (0.18 + 0.05 * label as f32);
    let cy = (height as f32 - 1.0) / 2.0 + rng.random_range(-0.1..=0.1) * side;
    let cx = (width as f32 - 1.0) / 2.0 + rng.random_range(-0.1..=0.1) * side;
    let mut img = Image::filled(height, width, BACKGROUND);
    for y in 0..height {
        for x in 0..width {
            let d = ((y as f32 - cy).powi(2) + (x as f32 - cx).powi(2)).sqrt();
            let base = if d <= radius { CELL_COLORS[label] } else { BACKGROUND };
            let rgb = base.map(|c| quantize(c + rng.random_range(-0.05..=0.05)));
            img.set_pixel(y, x, rgb);
        }
    }
    img
}

/// Dataset with the given per-class counts of [`smear_image`]s.
pub fn smear_dataset(
    counts: &[usize; NUM_CLASSES],
    height: usize,
    width: usize,
    seed: u64,
) -> Dataset {
    let jobs: Vec<(usize, usize)> = (0..NUM_CLASSES)
        .flat_map(|c| (0..counts[c]).map(move |i| (c, i)))
        .collect();
    let images: Vec<LabeledImage> = jobs
        .par_iter()
        .map(|&(c, i)| {
            let mut r = rng::substream(seed, &[c as u64, i as u64]);
            LabeledImage::original(smear_image(c, height, width, &mut r), c)
        })
        .collect();
    Dataset::from_images(height, width, images).expect("labels and geometry are valid")
}

/// Linear colour ramps whose direction and colour depend on the class, with
/// a random per-image offset and pixel noise.
pub fn gradient_dataset(per_class: usize, height: usize, width: usize, seed: u64) -> Dataset {
    let mut ds = Dataset::new(height, width);
    for c in 0..NUM_CLASSES {
        for i in 0..per_class {
            let mut r = rng::substream(seed, &[c as u64, i as u64]);
            let angle = c as f32 * std::f32::consts::PI / NUM_CLASSES as f32;
            let (dy, dx) = angle.sin_cos();
            let offset: f32 = r.random_range(-0.1..=0.1);
            let mut img = Image::filled(height, width, [0.0; 3]);
            for y in 0..height {
                for x in 0..width {
                    let t = (dx * x as f32 / width as f32 + dy * y as f32 / height as f32) * 0.5
                        + 0.25
                        + offset;
                    let rgb: [f32; 3] = std::array::from_fn(|k| {
                        quantize(CELL_COLORS[c][k] * t + 0.3 * (1.0 - t) + r.random_range(-0.03..=0.03))
                    });
                    img.set_pixel(y, x, rgb);
                }
            }
            ds.push(LabeledImage::original(img, c)).expect("valid");
        }
    }
    ds
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smear_counts_and_quantization() {
        let ds = smear_dataset(&[2, 0, 3, 1, 4], 6, 5, 1);
        assert_eq!(ds.class_counts(), [2, 0, 3, 1, 4]);
        for item in ds.images() {
            for &v in item.image.data() {
                assert!((0.0..=1.0).contains(&v));
                let q = v * 255.0;
                assert!((q - q.round()).abs() < 1e-3);
            }
        }
        assert_eq!(ds, smear_dataset(&[2, 0, 3, 1, 4], 6, 5, 1));
    }

    #[test]
    fn gradient_counts() {
        let ds = gradient_dataset(10, 8, 8, 3);
        assert_eq!(ds.class_counts(), [10; 5]);
    }
}
