//! RGB image buffer with PNG (LDR) and PFM (HDR) I/O.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major H x W x 3 float image. Texture targets hold unit-interval sRGB
/// values; BRDF targets hold linear HDR radiance.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    pixels: Vec<[f32; 3]>,
}

impl ImageBuf {
    pub fn new(width: usize, height: usize, fill: [f32; 3]) -> Self {
        ImageBuf {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[f32; 3]] {
        &mut self.pixels
    }

    /// Mutable row slices, for parallel renderers that own disjoint rows.
    pub fn rows_mut(&mut self) -> std::slice::ChunksMut<'_, [f32; 3]> {
        self.pixels.chunks_mut(self.width)
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[f32; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(ImageBuf {
            width,
            height,
            pixels,
        })
    }

    /// 8-bit PNG; values are clamped to [0, 1] and rounded.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut data = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            for &c in p {
                data.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        let img: image::RgbImage =
            image::ImageBuffer::from_raw(self.width as u32, self.height as u32, data)
                .expect("buffer length matches dimensions");
        img.save(path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let pixels = img
            .pixels()
            .map(|p| [p[0] as f32 / 255.0, p[1] as f32 / 255.0, p[2] as f32 / 255.0])
            .collect();
        ImageBuf::from_pixels(w, h, pixels)
    }

    /// Little-endian color PFM. Rows are written bottom-up as the format
    /// prescribes.
    pub fn save_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::with_capacity(32 + self.pixels.len() * 12);
        write!(out, "PF\n{} {}\n-1.0\n", self.width, self.height)
            .map_err(|e| Error::io(path, e))?;
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                for c in self.get(x, y) {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load_pfm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut pos = 0usize;
        let mut token = || -> Result<String> {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format("truncated PFM header".into()));
            }
            let tok = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
            Ok(tok)
        };
        let magic = token()?;
        if magic != "PF" {
            return Err(Error::Format(format!(
                "expected color PFM magic 'PF', got {magic:?}"
            )));
        }
        let width: usize = token()?
            .parse()
            .map_err(|_| Error::Format("bad PFM width".into()))?;
        let height: usize = token()?
            .parse()
            .map_err(|_| Error::Format("bad PFM height".into()))?;
        let scale: f64 = token()?
            .parse()
            .map_err(|_| Error::Format("bad PFM scale".into()))?;
        pos += 1; // single whitespace after the scale line
        let little_endian = scale < 0.0;
        let need = width * height * 12;
        if bytes.len() - pos < need {
            return Err(Error::Format(format!(
                "PFM payload is {} bytes, expected {need}",
                bytes.len() - pos
            )));
        }
        let mut img = ImageBuf::new(width, height, [0.0; 3]);
        let mut offset = pos;
        for y in (0..height).rev() {
            for x in 0..width {
                let mut rgb = [0.0f32; 3];
                for c in rgb.iter_mut() {
                    let raw: [u8; 4] = bytes[offset..offset + 4].try_into().unwrap();
                    *c = if little_endian {
                        f32::from_le_bytes(raw)
                    } else {
                        f32::from_be_bytes(raw)
                    };
                    offset += 4;
                }
                img.set(x, y, rgb);
            }
        }
        Ok(img)
    }

    /// Load by extension: `.png` or `.pfm`.
    pub fn load_auto(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("png") => ImageBuf::load_png(path),
            Some("pfm") => ImageBuf::load_pfm(path),
            other => Err(Error::Format(format!(
                "unsupported image extension {other:?} for {}",
                path.display()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pfm");
        let mut img = ImageBuf::new(5, 3, [0.0; 3]);
        for y in 0..3 {
            for x in 0..5 {
                img.set(x, y, [x as f32 * 1.5, -(y as f32), 1e-7]);
            }
        }
        img.save_pfm(&path).unwrap();
        let back = ImageBuf::load_pfm(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn png_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let mut img = ImageBuf::new(4, 4, [0.0; 3]);
        for y in 0..4 {
            for x in 0..4 {
                img.set(x, y, [(x as f32) / 4.0, (y as f32) / 4.0, 0.5]);
            }
        }
        img.save_png(&path).unwrap();
        let back = ImageBuf::load_png(&path).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 0.5 / 255.0 + 1e-6);
            }
        }
    }
}
