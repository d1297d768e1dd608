//! 8-bit RGB PNG encoding and decoding for [`Image`]s.

use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};
use wbc_core::data::Image;

use crate::error::{CliError, Result};

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// PNG bytes with optional `tEXt` chunks.
pub fn encode_png(image: &Image, text: &[(&str, &str)]) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width() as u32, image.height() as u32);
        enc.set_color(ColorType::Rgb);
        enc.set_depth(BitDepth::Eight);
        for (k, v) in text {
            enc.add_text_chunk((*k).to_owned(), (*v).to_owned())
                .expect("latin-1 keyword");
        }
        let mut writer = enc.write_header().expect("in-memory write");
        let data: Vec<u8> = image.data().iter().map(|&v| to_u8(v)).collect();
        writer.write_image_data(&data).expect("in-memory write");
    }
    out
}

/// Decoded image plus its `tEXt` chunks.
pub struct DecodedPng {
    pub image: Image,
    pub text: Vec<(String, String)>,
}

pub fn decode_png(bytes: &[u8], path: &Path) -> Result<DecodedPng> {
    let err = |message: String| CliError::Image {
        path: path.to_path_buf(),
        message,
    };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::EXPAND | Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| err(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| err("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| err(e.to_string()))?;
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::GrayscaleAlpha => 2,
        ColorType::Rgb => 3,
        ColorType::Rgba => 4,
        other => return Err(err(format!("unsupported colour type {other:?}"))),
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        let row = &buf[y * info.line_size..][..w * channels];
        for px in row.chunks_exact(channels) {
            let rgb = if channels < 3 { [px[0]; 3] } else { [px[0], px[1], px[2]] };
            data.extend(rgb.map(|v| f32::from(v) / 255.0));
        }
    }
    let text = reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .map(|t| (t.keyword.clone(), t.text.clone()))
        .collect();
    let image = Image::new(h, w, data).map_err(|e| err(e.to_string()))?;
    Ok(DecodedPng { image, text })
}

pub fn read_png(path: &Path) -> Result<DecodedPng> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_png(&bytes, path)
}
