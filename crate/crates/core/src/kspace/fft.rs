//! Orthonormal radix-2 FFT over the trailing two axes.
//!
//! Both directions scale by `1/sqrt(N1*N2)`, so `ifft2(fft2(x)) == x` and the
//! transform preserves Frobenius norms. The zero frequency sits at index 0;
//! [`fftshift2`] moves it to `(N1/2, N2/2)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::ComplexTensor;
use crate::error::{KunnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

/// In-place iterative Cooley-Tukey, unnormalised. `buf.len()` must be a power of two.
fn fft1_inplace(buf: &mut [Complex64], dir: Direction) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = match dir {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        // twiddles evaluated directly rather than by recurrence to keep error at O(eps)
        let tw: Vec<Complex64> = (0..half).map(|k| Complex64::from_polar(1.0, step * k as f64)).collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * tw[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len *= 2;
    }
}

fn check_pow2(h: usize, w: usize) -> Result<()> {
    if !h.is_power_of_two() || !w.is_power_of_two() {
        return Err(KunnError::invalid(format!(
            "FFT size {h}x{w} is not a power of two"
        )));
    }
    Ok(())
}

fn transform2(x: &ComplexTensor, dir: Direction) -> Result<ComplexTensor> {
    let (h, w) = x.dims2()?;
    check_pow2(h, w)?;
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut out = x.clone();
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for p in 0..x.planes() {
        let plane = out.plane_mut(p);
        for row in plane.chunks_exact_mut(w) {
            fft1_inplace(row, dir);
        }
        for c in 0..w {
            for r in 0..h {
                col[r] = plane[r * w + c];
            }
            fft1_inplace(&mut col, dir);
            for r in 0..h {
                plane[r * w + c] = col[r] * scale;
            }
        }
    }
    Ok(out)
}

/// Orthonormal 2-D DFT of every trailing `N1 x N2` plane.
pub fn fft2(x: &ComplexTensor) -> Result<ComplexTensor> {
    transform2(x, Direction::Forward)
}

/// Orthonormal inverse of [`fft2`].
pub fn ifft2(x: &ComplexTensor) -> Result<ComplexTensor> {
    transform2(x, Direction::Inverse)
}

/// Orthonormal 1-D DFT of a vector.
pub fn fft1(x: &[Complex64]) -> Result<Vec<Complex64>> {
    if !x.len().is_power_of_two() {
        return Err(KunnError::invalid(format!("FFT length {} is not a power of two", x.len())));
    }
    let mut out = x.to_vec();
    fft1_inplace(&mut out, Direction::Forward);
    let s = 1.0 / (x.len() as f64).sqrt();
    out.iter_mut().for_each(|v| *v *= s);
    Ok(out)
}

fn roll2(x: &ComplexTensor, sy: usize, sx: usize) -> Result<ComplexTensor> {
    let (h, w) = x.dims2()?;
    let mut out = x.clone();
    for p in 0..x.planes() {
        let src = x.plane(p);
        let dst = out.plane_mut(p);
        for r in 0..h {
            for c in 0..w {
                dst[((r + sy) % h) * w + (c + sx) % w] = src[r * w + c];
            }
        }
    }
    Ok(out)
}

/// Moves the zero frequency from index 0 to the centre `(N1/2, N2/2)`.
pub fn fftshift2(x: &ComplexTensor) -> Result<ComplexTensor> {
    let (h, w) = x.dims2()?;
    roll2(x, h / 2, w / 2)
}

/// Inverse of [`fftshift2`].
pub fn ifftshift2(x: &ComplexTensor) -> Result<ComplexTensor> {
    let (h, w) = x.dims2()?;
    roll2(x, h - h / 2, w - w / 2)
}

/// Centred transform, image -> k-space: `fftshift2(fft2(ifftshift2(x)))`.
/// Both the image and the spectrum have their origin at `(N1/2, N2/2)`, so
/// an object centred in the field of view has no checkerboard phase.
pub fn to_kspace(image: &ComplexTensor) -> Result<ComplexTensor> {
    fftshift2(&fft2(&ifftshift2(image)?)?)
}

/// Inverse of [`to_kspace`]: `fftshift2(ifft2(ifftshift2(k)))`.
pub fn to_image(kspace: &ComplexTensor) -> Result<ComplexTensor> {
    fftshift2(&ifft2(&ifftshift2(kspace)?)?)
}
