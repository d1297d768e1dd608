use rand::Rng;

use super::SuperpixelMap;
use crate::data::{Image, CHANNELS};
use crate::error::{Error, Result};
use crate::rng;

/// `n` binary masks over `regions` superpixels. The first mask keeps every
/// region; mask `i > 0` draws each bit with p = 0.5 from substream `[i]`.
pub fn sample_masks(regions: usize, n: usize, seed: u64) -> Vec<Vec<bool>> {
    (0..n)
        .map(|i| {
            if i == 0 {
                vec![true; regions]
            } else {
                let mut r = rng::substream(seed, &[i as u64]);
                (0..regions).map(|_| r.random_bool(0.5)).collect()
            }
        })
        .collect()
}

/// Replaces every switched-off region by its mean colour.
pub fn apply_mask(image: &Image, map: &SuperpixelMap, mask: &[bool]) -> Result<Image> {
    if mask.len() != map.region_count() {
        return Err(Error::ShapeMismatch(format!(
            "mask of {} bits for {} regions",
            mask.len(),
            map.region_count()
        )));
    }
    if (image.height(), image.width()) != (map.height(), map.width()) {
        return Err(Error::ShapeMismatch("image and superpixel map differ in size".into()));
    }
    let mut out = image.clone();
    for (r, &keep) in mask.iter().enumerate() {
        if keep {
            continue;
        }
        let color = map.mean_colors()[r];
        for &i in &map.regions()[r] {
            out.data_mut()[i * CHANNELS..(i + 1) * CHANNELS].copy_from_slice(&color);
        }
    }
    Ok(out)
}

/// A perturbed copy of the image together with the mask that produced it.
#[derive(Clone, Debug)]
pub struct Perturbation {
    pub mask: Vec<bool>,
    pub image: Image,
}

pub fn perturb(image: &Image, map: &SuperpixelMap, n: usize, seed: u64) -> Result<Vec<Perturbation>> {
    sample_masks(map.region_count(), n, seed)
        .into_iter()
        .map(|mask| {
            let image = apply_mask(image, map, &mask)?;
            Ok(Perturbation { mask, image })
        })
        .collect()
}

/// Exponential kernel on the normalized distance from the all-ones mask:
/// `d = sqrt(zeros) / sqrt(S)`, weight `exp(-d² / width²)`.
pub fn kernel_weight(mask: &[bool], width: f64) -> f64 {
    if mask.is_empty() {
        return 1.0;
    }
    let zeros = mask.iter().filter(|&&b| !b).count() as f64;
    let d2 = zeros / mask.len() as f64;
    (-d2 / (width * width)).exp()
}

/// Weighted ridge fit of outputs against mask bits.
#[derive(Clone, Debug, PartialEq)]
pub struct Surrogate {
    pub coefficients: Vec<f64>,
    /// Surrogate prediction at the all-zeros mask.
    pub intercept: f64,
    /// Kernel-weighted mean of the outputs.
    pub mean_response: f64,
}

impl Surrogate {
    pub fn predict(&self, mask: &[bool]) -> f64 {
        self.intercept
            + mask
                .iter()
                .zip(&self.coefficients)
                .filter(|(b, _)| **b)
                .map(|(_, c)| c)
                .sum::<f64>()
    }
}

/// Minimizes `Σ wᵢ (yᵢ − b − zᵢᵀβ)² + λ‖β‖²` with an unpenalized intercept,
/// by centring on the weighted means and solving the normal equations.
pub fn fit_surrogate(
    masks: &[Vec<bool>],
    outputs: &[f64],
    weights: &[f64],
    lambda: f64,
) -> Result<Surrogate> {
    if masks.is_empty() {
        return Err(Error::InvalidParameter("no samples to fit".into()));
    }
    if outputs.len() != masks.len() || weights.len() != masks.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} masks, {} outputs, {} weights",
            masks.len(),
            outputs.len(),
            weights.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge penalty {lambda}")));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidParameter("kernel weights must be finite and >= 0".into()));
    }
    let s = masks[0].len();
    if masks.iter().any(|m| m.len() != s) {
        return Err(Error::ShapeMismatch("masks differ in length".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidParameter("kernel weights sum to zero".into()));
    }

    let bit = |b: bool| if b { 1.0 } else { 0.0 };
    let mut zbar = vec![0.0; s];
    let mut ybar = 0.0;
    for ((m, &y), &w) in masks.iter().zip(outputs).zip(weights) {
        for (acc, &b) in zbar.iter_mut().zip(m) {
            *acc += w * bit(b);
        }
        ybar += w * y;
    }
    zbar.iter_mut().for_each(|v| *v /= total);
    ybar /= total;

    let mut a = vec![0.0; s * s];
    let mut rhs = vec![0.0; s];
    let mut zc = vec![0.0; s];
    for ((m, &y), &w) in masks.iter().zip(outputs).zip(weights) {
        if w == 0.0 {
            continue;
        }
        for j in 0..s {
            zc[j] = bit(m[j]) - zbar[j];
        }
        let yc = y - ybar;
        for j in 0..s {
            let wz = w * zc[j];
            rhs[j] += wz * yc;
            for k in 0..=j {
                a[j * s + k] += wz * zc[k];
            }
        }
    }
    for j in 0..s {
        a[j * s + j] += lambda;
        for k in 0..j {
            a[k * s + j] = a[j * s + k];
        }
    }
    let coefficients = cholesky_solve(&mut a, s, &rhs)?;
    let intercept = ybar - zbar.iter().zip(&coefficients).map(|(z, b)| z * b).sum::<f64>();
    Ok(Surrogate {
        coefficients,
        intercept,
        mean_response: ybar,
    })
}

/// Solves `A x = b` for symmetric positive-definite `A` (row-major, `n×n`),
/// overwriting `A` with its Cholesky factor.
fn cholesky_solve(a: &mut [f64], n: usize, b: &[f64]) -> Result<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0f64, f64::max).max(1.0);
    let tol = scale * 1e-12;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > tol) {
            return Err(Error::Singular);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * n + k] * y[k];
        }
        y[i] = v / a[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in i + 1..n {
            v -= a[k * n + i] * x[k];
        }
        x[i] = v / a[i * n + i];
    }
    Ok(x)
}

/// Ids of the `k` largest positive coefficients, largest first; ties go to
/// the lower region id.
pub fn top_regions(coefficients: &[f64], k: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..coefficients.len()).filter(|&i| coefficients[i] > 0.0).collect();
    ids.sort_by(|&a, &b| coefficients[b].total_cmp(&coefficients[a]).then(a.cmp(&b)));
    ids.truncate(k);
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::segment_grid;

    #[test]
    fn first_mask_keeps_everything() {
        let masks = sample_masks(16, 50, 3);
        assert!(masks[0].iter().all(|&b| b));
        assert_eq!(masks, sample_masks(16, 50, 3));
        assert_ne!(masks, sample_masks(16, 50, 4));
    }

    #[test]
    fn masking_uses_region_means() {
        let mut img = Image::filled(4, 4, [0.2, 0.2, 0.2]);
        img.set_pixel(0, 0, [1.0, 1.0, 1.0]);
        let map = segment_grid(&img, 2).unwrap();
        let out = apply_mask(&img, &map, &[false, true, true, true]).unwrap();
        assert!((out.pixel(0, 0)[0] - 0.4).abs() < 1e-6);
        assert!((out.pixel(1, 1)[0] - 0.4).abs() < 1e-6);
        assert_eq!(out.pixel(3, 3), img.pixel(3, 3));
        assert!(apply_mask(&img, &map, &[true; 3]).is_err());
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_weight(&[true; 4], 0.25), 1.0);
        let w = kernel_weight(&[false, true, true, true], 0.25);
        assert!((w - (-0.25f64 / 0.0625).exp()).abs() < 1e-15);
        assert!(kernel_weight(&[false; 4], 0.25) < w);
    }

    #[test]
    fn ridge_zero_penalty_recovers_exact_linear_model() {
        let beta = [0.5, -0.2, 0.1];
        let masks = sample_masks(3, 40, 9);
        let y: Vec<f64> = masks
            .iter()
            .map(|m| 0.3 + m.iter().zip(&beta).filter(|(b, _)| **b).map(|(_, c)| c).sum::<f64>())
            .collect();
        let fit = fit_surrogate(&masks, &y, &vec![1.0; 40], 0.0).unwrap();
        for (c, b) in fit.coefficients.iter().zip(&beta) {
            assert!((c - b).abs() < 1e-9);
        }
        assert!((fit.intercept - 0.3).abs() < 1e-9);
        assert!((fit.predict(&[true; 3]) - 0.7).abs() < 1e-9);
    }

    #[test]
    fn rank_deficient_without_penalty_is_singular() {
        // region 1 never switches off
        let masks = vec![vec![true, true], vec![false, true], vec![true, true]];
        let y = [1.0, 0.0, 1.0];
        assert!(matches!(fit_surrogate(&masks, &y, &[1.0; 3], 0.0), Err(Error::Singular)));
        let fit = fit_surrogate(&masks, &y, &[1.0; 3], 0.1).unwrap();
        assert_eq!(fit.coefficients[1], 0.0);
    }

    #[test]
    fn ranking() {
        assert_eq!(top_regions(&[0.1, 0.5, -0.3, 0.5, 0.0], 3), vec![1, 3, 0]);
        assert_eq!(top_regions(&[0.1, 0.5, -0.3, 0.5, 0.0], 10), vec![1, 3, 0]);
        assert!(top_regions(&[-1.0, 0.0], 2).is_empty());
        assert!(top_regions(&[1.0], 0).is_empty());
    }
}
