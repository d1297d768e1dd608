use std::collections::VecDeque;

use crate::data::{Image, CHANNELS};
use crate::error::{Error, Result};

/// Partition of an image into labelled regions `0..S`.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperpixelMap {
    height: usize,
    width: usize,
    labels: Vec<usize>,
    regions: Vec<Vec<usize>>,
    mean_colors: Vec<[f32; 3]>,
}

impl SuperpixelMap {
    /// Builds the map from per-pixel labels, renumbering regions by first
    /// appearance in row-major order.
    pub fn from_labels(image: &Image, labels: &[usize]) -> Result<Self> {
        let (h, w) = (image.height(), image.width());
        if labels.len() != h * w {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a {h}×{w} image",
                labels.len()
            )));
        }
        let mut remap = std::collections::HashMap::new();
        let mut compact = Vec::with_capacity(labels.len());
        for &l in labels {
            let next = remap.len();
            compact.push(*remap.entry(l).or_insert(next));
        }
        let count = remap.len();
        let mut regions = vec![Vec::new(); count];
        for (i, &l) in compact.iter().enumerate() {
            regions[l].push(i);
        }
        let mean_colors = regions
            .iter()
            .map(|pixels| {
                let mut sum = [0.0f64; CHANNELS];
                for &i in pixels {
                    for (c, s) in sum.iter_mut().enumerate() {
                        *s += f64::from(image.data()[i * CHANNELS + c]);
                    }
                }
                sum.map(|s| (s / pixels.len() as f64) as f32)
            })
            .collect();
        Ok(Self {
            height: h,
            width: w,
            labels: compact,
            regions,
            mean_colors,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    /// Region id of every pixel, row-major.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_at(&self, y: usize, x: usize) -> usize {
        self.labels[y * self.width + x]
    }

    /// Row-major pixel indices of each region.
    pub fn regions(&self) -> &[Vec<usize>] {
        &self.regions
    }

    pub fn mean_colors(&self) -> &[[f32; 3]] {
        &self.mean_colors
    }
}

/// `g×g` axis-aligned blocks; the last row and column of blocks absorb the
/// remainder pixels.
pub fn segment_grid(image: &Image, grid: usize) -> Result<SuperpixelMap> {
    let (h, w) = (image.height(), image.width());
    if grid == 0 || grid > h.min(w) {
        return Err(Error::InvalidParameter(format!(
            "grid size {grid} must lie in 1..={}",
            h.min(w)
        )));
    }
    let (bh, bw) = (h / grid, w / grid);
    let labels: Vec<usize> = (0..h * w)
        .map(|i| {
            let (y, x) = (i / w, i % w);
            (y / bh).min(grid - 1) * grid + (x / bw).min(grid - 1)
        })
        .collect();
    SuperpixelMap::from_labels(image, &labels)
}

#[derive(Clone, Copy, Debug)]
struct Center {
    y: f64,
    x: f64,
    rgb: [f64; 3],
}

fn rgb_at(image: &Image, i: usize) -> [f64; 3] {
    let d = &image.data()[i * CHANNELS..(i + 1) * CHANNELS];
    [f64::from(d[0]), f64::from(d[1]), f64::from(d[2])]
}

/// Simple linear iterative clustering in `(y, x, r, g, b)`.
///
/// Seeds sit on a regular grid of about `target` cells, each nudged to the
/// lowest-gradient pixel of its 3×3 neighbourhood. Distance is
/// `‖Δrgb‖² + (compactness · ‖Δyx‖ / step)²`. After the fixed number of
/// iterations every label keeps only its largest 4-connected component;
/// the other pieces join the adjacent region with the closest centre.
pub fn segment_slic_lite(
    image: &Image,
    target: usize,
    compactness: f64,
    iterations: usize,
) -> Result<SuperpixelMap> {
    if target == 0 {
        return Err(Error::InvalidParameter("superpixel target must be >= 1".into()));
    }
    let (h, w) = (image.height(), image.width());
    let gx = ((target as f64 * w as f64 / h as f64).sqrt().round() as usize).clamp(1, w);
    let gy = ((target as f64 / gx as f64).round() as usize).clamp(1, h);
    let (step_y, step_x) = (h as f64 / gy as f64, w as f64 / gx as f64);
    let step = (step_y * step_x).sqrt();

    let gradient = |y: usize, x: usize| -> f64 {
        let at = |yy: usize, xx: usize| rgb_at(image, yy * w + xx);
        let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
        let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let d = |a: [f64; 3], b: [f64; 3]| a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
        d(at(y, x1), at(y, x0)) + d(at(y1, x), at(y0, x))
    };

    let mut centers = Vec::with_capacity(gx * gy);
    for i in 0..gy {
        for j in 0..gx {
            let cy = (((i as f64 + 0.5) * step_y) as usize).min(h - 1);
            let cx = (((j as f64 + 0.5) * step_x) as usize).min(w - 1);
            let mut best = (gradient(cy, cx), cy, cx);
            for yy in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                for xx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                    let g = gradient(yy, xx);
                    if g < best.0 {
                        best = (g, yy, xx);
                    }
                }
            }
            let (_, y, x) = best;
            centers.push(Center {
                y: y as f64,
                x: x as f64,
                rgb: rgb_at(image, y * w + x),
            });
        }
    }

    let spatial = (compactness / step).powi(2);
    let distance = |c: &Center, i: usize| -> f64 {
        let (y, x) = ((i / w) as f64, (i % w) as f64);
        let rgb = rgb_at(image, i);
        let dc: f64 = rgb.iter().zip(&c.rgb).map(|(a, b)| (a - b).powi(2)).sum();
        dc + spatial * ((y - c.y).powi(2) + (x - c.x).powi(2))
    };
    let assign = |centers: &[Center]| -> Vec<usize> {
        (0..h * w)
            .map(|i| {
                let mut best = (f64::INFINITY, 0);
                for (k, c) in centers.iter().enumerate() {
                    let d = distance(c, i);
                    if d < best.0 {
                        best = (d, k);
                    }
                }
                best.1
            })
            .collect()
    };

    let mut labels = assign(&centers);
    for _ in 0..iterations {
        let mut acc = vec![(0.0, 0.0, [0.0; 3], 0usize); centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let a = &mut acc[l];
            a.0 += (i / w) as f64;
            a.1 += (i % w) as f64;
            for (s, v) in a.2.iter_mut().zip(rgb_at(image, i)) {
                *s += v;
            }
            a.3 += 1;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a.3 > 0 {
                let n = a.3 as f64;
                *c = Center {
                    y: a.0 / n,
                    x: a.1 / n,
                    rgb: a.2.map(|s| s / n),
                };
            }
        }
        labels = assign(&centers);
    }

    enforce_connectivity(&mut labels, h, w, &centers, distance);
    SuperpixelMap::from_labels(image, &labels)
}

fn neighbours(i: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = (i / w, i % w);
    [
        (y > 0).then(|| i - w),
        (y + 1 < h).then(|| i + w),
        (x > 0).then(|| i - 1),
        (x + 1 < w).then(|| i + 1),
    ]
    .into_iter()
    .flatten()
}

fn enforce_connectivity(
    labels: &mut [usize],
    h: usize,
    w: usize,
    centers: &[Center],
    distance: impl Fn(&Center, usize) -> f64,
) {
    // components in row-major discovery order
    let mut component = vec![usize::MAX; labels.len()];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for start in 0..labels.len() {
        if component[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut pixels = vec![start];
        component[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for n in neighbours(i, h, w) {
                if component[n] == usize::MAX && labels[n] == labels[start] {
                    component[n] = id;
                    pixels.push(n);
                    queue.push_back(n);
                }
            }
        }
        components.push(pixels);
    }

    let mut largest: Vec<Option<usize>> = vec![None; centers.len()];
    for (id, px) in components.iter().enumerate() {
        let l = labels[px[0]];
        if largest[l].is_none_or(|best| components[best].len() < px.len()) {
            largest[l] = Some(id);
        }
    }
    let mut settled: Vec<bool> = (0..components.len())
        .map(|id| largest[labels[components[id][0]]] == Some(id))
        .collect();

    // merge orphans into a settled neighbour until none remain
    loop {
        let mut changed = false;
        let mut pending = false;
        for id in 0..components.len() {
            if settled[id] {
                continue;
            }
            let px = &components[id];
            let mut candidates: Vec<usize> = px
                .iter()
                .flat_map(|&i| neighbours(i, h, w))
                .filter(|&n| settled[component[n]])
                .map(|n| labels[n])
                .collect();
            candidates.sort_unstable();
            candidates.dedup();
            if candidates.is_empty() {
                pending = true;
                continue;
            }
            let mean_cost = |l: usize| -> f64 {
                px.iter().map(|&i| distance(&centers[l], i)).sum::<f64>()
            };
            let target = candidates
                .iter()
                .copied()
                .min_by(|&a, &b| mean_cost(a).total_cmp(&mean_cost(b)).then(a.cmp(&b)))
                .expect("non-empty");
            for &i in px {
                labels[i] = target;
            }
            settled[id] = true;
            changed = true;
        }
        if !pending || !changed {
            break;
        }
    }
}
