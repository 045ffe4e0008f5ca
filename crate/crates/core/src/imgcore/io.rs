//! Raster I/O: grayscale PNG/PGM ingestion and the raw `f32` + JSON sidecar
//! format used for residuals and fingerprints.
//!
//! A raster stored at `name.f32` is a headerless run of `width * height`
//! little-endian `f32` samples, row-major, described by `name.f32.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterKind {
    Residual,
    Fingerprint,
    Raster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterMeta {
    pub width: usize,
    pub height: usize,
    pub kind: RasterKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_images: Option<usize>,
}

impl RasterMeta {
    pub fn new(width: usize, height: usize, kind: RasterKind) -> Self {
        Self { width, height, kind, device_id: None, n_images: None }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_owned(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format { path: path.to_owned(), message: message.into() }
}

/// Reads an 8- or 16-bit PNG or PGM as luminance on a 0-255 scale.
///
/// Color inputs are converted with ITU-R BT.601 weights; 16-bit samples are
/// divided by 257.
pub fn read_gray(path: &Path) -> Result<GrayImage> {
    let img = image::ImageReader::open(path)
        .map_err(io_err(path))?
        .with_guessed_format()
        .map_err(io_err(path))?
        .decode()
        .map_err(|e| format_err(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = if img.color().has_color() {
        let rgb = img.to_rgb32f();
        rgb.pixels()
            .map(|p| 255.0 * (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64))
            .collect()
    } else {
        match img {
            image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
            other => other.to_luma16().into_raw().into_iter().map(|v| v as f64 / 257.0).collect(),
        }
    };
    GrayImage::new(w, h, data).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_raster(path: &Path, img: &GrayImage, meta: &RasterMeta) -> Result<()> {
    if (meta.width, meta.height) != img.dims() {
        return Err(Error::DimensionMismatch { expected: (meta.width, meta.height), actual: img.dims() });
    }
    let mut bytes = Vec::with_capacity(img.data().len() * 4);
    for &v in img.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))?;
    let side = sidecar_path(path);
    let json = serde_json::to_vec_pretty(meta).expect("sidecar serializes");
    fs::write(&side, json).map_err(io_err(&side))
}

pub fn read_raster(path: &Path) -> Result<(GrayImage, RasterMeta)> {
    let side = sidecar_path(path);
    let meta: RasterMeta = serde_json::from_slice(&fs::read(&side).map_err(io_err(&side))?)
        .map_err(|e| format_err(&side, e.to_string()))?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    let expected = meta.width * meta.height * 4;
    if bytes.len() != expected {
        return Err(format_err(path, format!("expected {expected} bytes for {}x{} f32 raster, found {}", meta.width, meta.height, bytes.len())));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let img = GrayImage::new(meta.width, meta.height, data).map_err(|e| format_err(path, e.to_string()))?;
    Ok((img, meta))
}
