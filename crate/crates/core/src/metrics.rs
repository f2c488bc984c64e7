//! Image quality scores on magnitude images.

use std::fmt;

use crate::autodiff::RealTensor;
use crate::error::{KunnError, Result};

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_shape(x: &RealTensor, reference: &RealTensor) -> Result<()> {
    if x.shape() != reference.shape() {
        return Err(KunnError::invalid(format!(
            "image {:?} and reference {:?} differ in shape",
            x.shape(),
            reference.shape()
        )));
    }
    Ok(())
}

/// `||x - ref||^2 / ||ref||^2`.
pub fn nmse(x: &RealTensor, reference: &RealTensor) -> Result<f64> {
    same_shape(x, reference)?;
    let den: f64 = reference.data().iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(KunnError::invalid("nmse reference is all zero"));
    }
    let num: f64 = x.data().iter().zip(reference.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / den)
}

/// `10 log10(max(ref)^2 / MSE)` in dB; `+inf` when the images are equal.
pub fn psnr(x: &RealTensor, reference: &RealTensor) -> Result<f64> {
    same_shape(x, reference)?;
    let n = x.len() as f64;
    let mse: f64 = x.data().iter().zip(reference.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
    let peak = reference.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Mean SSIM over all 7x7 windows (uniform weights, stride 1, no padding)
/// with the dynamic range taken from the reference.
pub fn ssim(x: &RealTensor, reference: &RealTensor) -> Result<f64> {
    same_shape(x, reference)?;
    let (h, w) = match x.shape() {
        [h, w] => (*h, *w),
        s => return Err(KunnError::invalid(format!("ssim expects a 2-D image, got {s:?}"))),
    };
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(KunnError::invalid(format!("image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")));
    }
    let (lo, hi) = reference
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let (a, b) = (x.data(), reference.data());
    let np = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - SSIM_WINDOW {
        for c0 in 0..=w - SSIM_WINDOW {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + SSIM_WINDOW {
                for c in c0..c0 + SSIM_WINDOW {
                    let (p, q) = (a[r * w + c], b[r * w + c]);
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
            }
            let (ma, mb) = (sa / np, sb / np);
            // unbiased window (co)variances
            let va = (saa - np * ma * ma) / (np - 1.0);
            let vb = (sbb - np * mb * mb) / (np - 1.0);
            let cov = (sab - np * ma * mb) / (np - 1.0);
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total += if den == 0.0 { 1.0 } else { num / den };
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityScores {
    pub nmse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

impl QualityScores {
    pub fn compute(x: &RealTensor, reference: &RealTensor) -> Result<Self> {
        Ok(Self {
            nmse: nmse(x, reference)?,
            psnr_db: psnr(x, reference)?,
            ssim: ssim(x, reference)?,
        })
    }

    /// `slice_id,nmse,psnr_db,ssim`.
    pub fn csv_row(&self, slice_id: &str) -> String {
        format!("{slice_id},{}", self)
    }

    pub const CSV_HEADER: &'static str = "slice_id,nmse,psnr_db,ssim";
}

/// Formats a score, writing infinities as `inf` / `-inf`.
pub fn fmt_score(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

impl fmt::Display for QualityScores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", fmt_score(self.nmse), fmt_score(self.psnr_db), fmt_score(self.ssim))
    }
}
