//! One image per row: `H·W·3` pixel columns (row-major, channel-last,
//! integers 0–255) followed by the label. A header row is detected by a
//! non-numeric first cell.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::{Dataset, Image, LabeledImage, CHANNELS, NUM_CLASSES};
use crate::error::{Error, Result};

pub fn load_csv_dataset(path: impl AsRef<Path>, height: usize, width: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_csv_dataset(file, path, height, width)
}

/// Parses dataset CSV from any reader; `path` only labels errors.
pub fn read_csv_dataset(
    reader: impl Read,
    path: &Path,
    height: usize,
    width: usize,
) -> Result<Dataset> {
    let pixels = height * width * CHANNELS;
    let expected = pixels + 1;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut dataset = Dataset::new(height, width);
    let path: PathBuf = path.to_path_buf();

    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if i == 0 && record.get(0).is_some_and(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() != expected {
            return Err(Error::MalformedRow {
                path,
                row,
                expected,
                found: record.len(),
            });
        }
        let mut data = Vec::with_capacity(pixels);
        for (column, cell) in record.iter().take(pixels).enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                path: path.clone(),
                row,
                column: column + 1,
                cell: cell.to_string(),
            })?;
            if !(0.0..=255.0).contains(&value) {
                return Err(Error::PixelRange {
                    path,
                    row,
                    column: column + 1,
                    value,
                });
            }
            data.push((value / 255.0) as f32);
        }
        let cell = &record[pixels];
        let label = cell
            .parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0 && *v >= 0.0 && *v < NUM_CLASSES as f64)
            .ok_or_else(|| Error::LabelRange {
                path: path.clone(),
                row,
                label: cell.to_string(),
            })? as usize;
        dataset.push(LabeledImage::original(Image::new(height, width, data)?, label))?;
    }
    Ok(dataset)
}

/// Writes the dataset in the loader's format (no header). Pixels are written
/// as `round(255·v)`.
pub fn write_csv_dataset(dataset: &Dataset, mut out: impl Write) -> Result<()> {
    let mut line = String::new();
    for item in dataset.images() {
        line.clear();
        for v in item.image.data() {
            let q = (f64::from(*v) * 255.0).round().clamp(0.0, 255.0) as u8;
            let _ = write!(line, "{q},");
        }
        let _ = writeln!(line, "{}", item.label);
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}
