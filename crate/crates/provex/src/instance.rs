//! Instances: CSV rows of reals, or 8-bit binary PGM/PPM images scaled to
//! `[0, 1]`. Image pixels are stored row-major with interleaved channels.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use crate::IoError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageShape {
    pub width: usize,
    pub height: usize,
    /// 1 for grayscale, 3 for RGB.
    pub channels: usize,
}

impl ImageShape {
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub values: Vec<f64>,
    pub shape: Option<ImageShape>,
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("pgm" | "ppm" | "pnm")
    )
}

/// Loads one instance; `.pgm`/`.ppm`/`.pnm` files are images, anything else
/// is read as a single CSV row.
pub fn load_instance(path: &Path) -> Result<Instance, IoError> {
    let bytes = crate::read_file(path)?;
    if is_image(path) {
        return parse_image(&bytes);
    }
    let mut rows = parse_csv_rows(&bytes)?;
    match rows.len() {
        1 => Ok(Instance {
            values: rows.remove(0),
            shape: None,
        }),
        n => Err(IoError::field("input", format!("expected one CSV row, found {n}"))),
    }
}

/// Every non-empty row of a headerless CSV file.
pub fn load_instances_csv(path: &Path) -> Result<Vec<Vec<f64>>, IoError> {
    parse_csv_rows(&crate::read_file(path)?)
}

pub fn parse_csv_rows(bytes: &[u8]) -> Result<Vec<Vec<f64>>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| IoError::field(format!("input row {} column {}", r + 1, c + 1), format!("{v:?} is not a finite number")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn parse_image(bytes: &[u8]) -> Result<Instance, IoError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img {
        DynamicImage::ImageLuma8(i) => (1, i.into_raw()),
        DynamicImage::ImageRgb8(i) => (3, i.into_raw()),
        other => {
            return Err(IoError::field(
                "input",
                format!("unsupported pixel format {:?}; expected 8-bit gray or RGB", other.color()),
            ))
        }
    };
    Ok(Instance {
        values: raw.iter().map(|&b| f64::from(b) / 255.0).collect(),
        shape: Some(ImageShape { width, height, channels }),
    })
}

/// Binary PGM (`channels == 1`) or PPM (`channels == 3`).
pub fn encode_pnm(shape: ImageShape, pixels: &[u8]) -> Result<Vec<u8>, IoError> {
    let (subtype, color) = match shape.channels {
        1 => (PnmSubtype::Graymap(SampleEncoding::Binary), ExtendedColorType::L8),
        3 => (PnmSubtype::Pixmap(SampleEncoding::Binary), ExtendedColorType::Rgb8),
        c => return Err(IoError::field("channels", format!("{c} channels cannot be written as PGM/PPM"))),
    };
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(subtype)
        .write_image(pixels, shape.width as u32, shape.height as u32, color)?;
    Ok(out)
}

pub fn save_pnm(path: &Path, shape: ImageShape, pixels: &[u8]) -> Result<(), IoError> {
    crate::write_file(path, &encode_pnm(shape, pixels)?)
}

/// Inverse of the `[0, 1]` scaling used on load.
pub fn to_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

pub fn save_csv_row(path: &Path, values: &[f64]) -> Result<(), IoError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(values.iter().map(|v| v.to_string()))?;
    let bytes = w.into_inner().map_err(|e| IoError::field("csv", e.to_string()))?;
    crate::write_file(path, &bytes)
}
