use super::SuperpixelMap;
use crate::data::Image;
use crate::error::{Error, Result};

pub const OVERLAY_ALPHA: f32 = 0.4;
const GREEN: [f32; 3] = [0.0, 1.0, 0.0];
const YELLOW: [f32; 3] = [1.0, 1.0, 0.0];

/// Tinted copy of an image plus the class it explains.
#[derive(Clone, Debug, PartialEq)]
pub struct Overlay {
    pub image: Image,
    pub class_name: String,
}

fn blend(px: [f32; 3], tint: [f32; 3]) -> [f32; 3] {
    std::array::from_fn(|c| (1.0 - OVERLAY_ALPHA) * px[c] + OVERLAY_ALPHA * tint[c])
}

/// Tints the selected regions: the first one green with a solid green
/// boundary, the rest yellow. Pixels outside the selection are untouched.
pub fn render_overlay(
    image: &Image,
    map: &SuperpixelMap,
    regions: &[usize],
    class_name: &str,
) -> Result<Overlay> {
    if (image.height(), image.width()) != (map.height(), map.width()) {
        return Err(Error::ShapeMismatch("image and superpixel map differ in size".into()));
    }
    if let Some(&bad) = regions.iter().find(|&&r| r >= map.region_count()) {
        return Err(Error::InvalidParameter(format!(
            "region {bad} out of range for {} regions",
            map.region_count()
        )));
    }
    let (h, w) = (image.height(), image.width());
    let mut out = image.clone();
    for (rank, &r) in regions.iter().enumerate() {
        let tint = if rank == 0 { GREEN } else { YELLOW };
        for &i in &map.regions()[r] {
            let (y, x) = (i / w, i % w);
            let boundary = rank == 0
                && [
                    (y > 0).then(|| (y - 1, x)),
                    (y + 1 < h).then(|| (y + 1, x)),
                    (x > 0).then(|| (y, x - 1)),
                    (x + 1 < w).then(|| (y, x + 1)),
                ]
                .into_iter()
                .flatten()
                .any(|(yy, xx)| map.label_at(yy, xx) != r);
            let rgb = if boundary { GREEN } else { blend(image.pixel(y, x), tint) };
            out.set_pixel(y, x, rgb);
        }
    }
    Ok(Overlay {
        image: out,
        class_name: class_name.to_owned(),
    })
}
