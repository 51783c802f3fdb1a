//! Image-quality metrics: PSNR and DSSIM (structural dissimilarity,
//! `(1 - SSIM) / 2`), both with optional background masks.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::render::image::ImageBuf;

/// SSIM window: 11x11 Gaussian with sigma 1.5, K1 = 0.01, K2 = 0.03,
/// dynamic range 1.
const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Per-image quality report. `dssim_x100` mirrors the usual table scaling.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    #[serde(serialize_with = "serialize_db")]
    pub psnr_db: f64,
    pub dssim: f64,
    pub dssim_x100: f64,
    pub pixels: usize,
    pub masked: bool,
}

pub(crate) fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn check_shapes(a: &ImageBuf, b: &ImageBuf, mask: Option<&[bool]>) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch(format!(
            "images are {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if let Some(m) = mask {
        if m.len() != a.pixel_count() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries for {} pixels",
                m.len(),
                a.pixel_count()
            )));
        }
        if !m.iter().any(|&x| x) {
            return Err(Error::InvalidArgument("mask selects no pixels".into()));
        }
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over (masked) pixels and channels, with
/// unit dynamic range. Identical images give `f64::INFINITY`.
pub fn psnr(a: &ImageBuf, b: &ImageBuf, mask: Option<&[bool]>) -> Result<f64> {
    check_shapes(a, b, mask)?;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (i, (pa, pb)) in a.pixels().iter().zip(b.pixels()).enumerate() {
        if let Some(m) = mask {
            if !m[i] {
                continue;
            }
        }
        for c in 0..3 {
            let d = pa[c] as f64 - pb[c] as f64;
            sum += d * d;
        }
        count += 1;
    }
    let mse = sum / (count * 3) as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / mse).log10())
    }
}

fn gaussian_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let half = (WINDOW / 2) as isize;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let x = (i as isize - half) as f64;
        *v = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Separable valid-mode Gaussian filter; output is (h-10) x (w-10).
fn filter_valid(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let k = gaussian_kernel();
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    // Horizontal pass.
    let mut tmp = vec![0.0f64; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * plane[y * w + x + i];
            }
            tmp[y * ow + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0f64; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, &kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean SSIM over the valid window positions, channel-averaged. With a
/// mask, only windows whose center pixel is selected contribute.
pub fn ssim(a: &ImageBuf, b: &ImageBuf, mask: Option<&[bool]>) -> Result<f64> {
    check_shapes(a, b, mask)?;
    let (w, h) = (a.width(), a.height());
    if w < WINDOW || h < WINDOW {
        return Err(Error::InvalidArgument(format!(
            "image {w}x{h} is smaller than the {WINDOW}x{WINDOW} SSIM window"
        )));
    }
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let half = WINDOW / 2;

    let mut total = 0.0;
    for channel in 0..3 {
        let xa: Vec<f64> = a.pixels().iter().map(|p| p[channel] as f64).collect();
        let xb: Vec<f64> = b.pixels().iter().map(|p| p[channel] as f64).collect();
        let xa2: Vec<f64> = xa.iter().map(|v| v * v).collect();
        let xb2: Vec<f64> = xb.iter().map(|v| v * v).collect();
        let xab: Vec<f64> = xa.iter().zip(&xb).map(|(p, q)| p * q).collect();

        let mu_a = filter_valid(&xa, w, h);
        let mu_b = filter_valid(&xb, w, h);
        let e_a2 = filter_valid(&xa2, w, h);
        let e_b2 = filter_valid(&xb2, w, h);
        let e_ab = filter_valid(&xab, w, h);

        let mut sum = 0.0;
        let mut count = 0usize;
        for y in 0..oh {
            for x in 0..ow {
                if let Some(m) = mask {
                    let center = (y + half) * w + (x + half);
                    if !m[center] {
                        continue;
                    }
                }
                let i = y * ow + x;
                let (ma, mb) = (mu_a[i], mu_b[i]);
                let va = e_a2[i] - ma * ma;
                let vb = e_b2[i] - mb * mb;
                let cov = e_ab[i] - ma * mb;
                let s = ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
                    / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                sum += s;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::InvalidArgument(
                "mask selects no interior SSIM windows".into(),
            ));
        }
        total += sum / count as f64;
    }
    Ok(total / 3.0)
}

/// Structural dissimilarity `(1 - SSIM) / 2`, in [0, 1].
pub fn dssim(a: &ImageBuf, b: &ImageBuf, mask: Option<&[bool]>) -> Result<f64> {
    Ok((1.0 - ssim(a, b, mask)?) / 2.0)
}

/// PSNR and DSSIM in one report.
pub fn report(a: &ImageBuf, b: &ImageBuf, mask: Option<&[bool]>) -> Result<MetricReport> {
    let psnr_db = psnr(a, b, mask)?;
    let d = dssim(a, b, mask)?;
    let pixels = match mask {
        Some(m) => m.iter().filter(|&&x| x).count(),
        None => a.pixel_count(),
    };
    Ok(MetricReport {
        psnr_db,
        dssim: d,
        dssim_x100: d * 100.0,
        pixels,
        masked: mask.is_some(),
    })
}
