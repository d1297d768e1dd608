use std::fmt::Write as _;

use super::{Dataset, Image, CHANNELS};
use crate::error::{Error, Result};

/// Lower bound applied to every per-channel standard deviation.
pub const STD_FLOOR: f64 = 1e-7;

/// Per-channel pixel mean and population standard deviation of a training
/// split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StandardizationStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl StandardizationStats {
    /// Identity transform (mean 0, std 1).
    pub fn identity() -> Self {
        Self {
            mean: [0.0; CHANNELS],
            std: [1.0; CHANNELS],
        }
    }

    /// `key=value` sidecar text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in 0..CHANNELS {
            let _ = writeln!(s, "mean.{c}={:?}", self.mean[c]);
        }
        for c in 0..CHANNELS {
            let _ = writeln!(s, "std.{c}={:?}", self.std[c]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut mean = [None; CHANNELS];
        let mut std = [None; CHANNELS];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("stats line {line:?}")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("stats value in {line:?}")))?;
            let slot = match key.trim().split_once('.') {
                Some(("mean", c)) => c.parse::<usize>().ok().and_then(|c| mean.get_mut(c)),
                Some(("std", c)) => c.parse::<usize>().ok().and_then(|c| std.get_mut(c)),
                _ => None,
            }
            .ok_or_else(|| Error::InvalidParameter(format!("unknown stats key in {line:?}")))?;
            *slot = Some(value);
        }
        let take = |a: [Option<f64>; CHANNELS], name: &str| {
            let mut out = [0.0; CHANNELS];
            for (o, v) in out.iter_mut().zip(a) {
                *o = v.ok_or_else(|| Error::InvalidParameter(format!("missing {name} entry")))?;
            }
            Ok::<_, Error>(out)
        };
        Ok(Self {
            mean: take(mean, "mean")?,
            std: take(std, "std")?,
        })
    }
}

pub fn compute_standardization(train: &Dataset) -> Result<StandardizationStats> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sum = [0.0f64; CHANNELS];
    let mut n = 0usize;
    for item in train.images() {
        for px in item.image.data().chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                sum[c] += f64::from(px[c]);
            }
            n += 1;
        }
    }
    let mean = sum.map(|s| s / n as f64);
    let mut sq = [0.0f64; CHANNELS];
    for item in train.images() {
        for px in item.image.data().chunks_exact(CHANNELS) {
            for c in 0..CHANNELS {
                let d = f64::from(px[c]) - mean[c];
                sq[c] += d * d;
            }
        }
    }
    let std = sq.map(|s| (s / n as f64).sqrt().max(STD_FLOOR));
    Ok(StandardizationStats { mean, std })
}

/// `(x − mean) / std` per channel.
pub fn apply_standardization(image: &Image, stats: &StandardizationStats) -> Image {
    let mut out = image.clone();
    for px in out.data_mut().chunks_exact_mut(CHANNELS) {
        for c in 0..CHANNELS {
            px[c] = ((f64::from(px[c]) - stats.mean[c]) / stats.std[c]) as f32;
        }
    }
    out
}
