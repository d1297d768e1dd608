//! Synthetic inputs with known answers.

#![allow(dead_code)]

use rand::Rng;
use wbc_core::data::{Dataset, Image, LabeledImage};
use wbc_core::explain::{explain, ExplainConfig, Segmentation};
use wbc_core::rng;

/// Uniform-noise images with balanced labels: nothing to learn but the
/// samples themselves.
pub fn noise_dataset(n: usize, side: usize, seed: u64) -> Dataset {
    let mut r = rng::stream(seed);
    let images = (0..n)
        .map(|i| {
            let data = (0..side * side * 3)
                .map(|_| f32::from(r.random::<u8>()) / 255.0)
                .collect();
            LabeledImage::original(Image::new(side, side, data).unwrap(), i % 5)
        })
        .collect();
    Dataset::from_images(side, side, images).unwrap()
}

pub const SIDE: usize = 16;
pub const GRID: usize = 4;

/// Each grid cell carries a two-tone stripe; masking flattens it to the
/// cell mean, so the classifier can read every mask bit off the image.
pub fn striped_image() -> Image {
    let mut img = Image::filled(SIDE, SIDE, [0.0; 3]);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let v = if x % 2 == 0 { 0.8 } else { 0.2 };
            img.set_pixel(y, x, [v, 0.5, 1.0 - v]);
        }
    }
    img
}

fn read_bits(image: &Image) -> Vec<f64> {
    let cell = SIDE / GRID;
    (0..GRID * GRID)
        .map(|r| {
            let (y, x) = ((r / GRID) * cell, (r % GRID) * cell);
            f64::from((image.pixel(y, x)[0] - image.pixel(y, x + 1)[0]).abs()) / 0.6
        })
        .collect()
}

/// Class-0 probability linear in the mask bits of the grid cells.
pub fn planted_classifier(beta: Vec<f64>) -> impl Fn(&Image) -> wbc_core::Result<Vec<f64>> + Sync {
    move |image: &Image| {
        let z = read_bits(image);
        let p = 0.3 + z.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
        Ok(vec![p, 1.0 - p, 0.0, 0.0, 0.0])
    }
}

/// Runs default-config explanations against planted classifiers whose top
/// region is drawn at random; returns how often it ranks first.
pub fn planted_top_region_hits(trials: u64) -> u64 {
    let image = striped_image();
    let mut hits = 0;
    for trial in 0..trials {
        let mut r = rng::substream(99, &[trial]);
        let top = r.random_range(0..GRID * GRID);
        let beta: Vec<f64> = (0..GRID * GRID)
            .map(|j| if j == top { 0.06 } else { r.random_range(-0.02..0.03) })
            .collect();
        let config = ExplainConfig {
            segmentation: Segmentation::Grid { size: GRID },
            target_class: Some(0),
            seed: trial,
            ..ExplainConfig::default()
        };
        let e = explain(&planted_classifier(beta), &image, &config).unwrap();
        assert_eq!(e.coefficients().len(), GRID * GRID);
        if e.top_regions(1) == [top] {
            hits += 1;
        }
    }
    hits
}
