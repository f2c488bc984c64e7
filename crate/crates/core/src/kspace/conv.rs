use num_complex::Complex64;

use super::ComplexTensor;
use crate::error::{KunnError, Result};

/// Tap of a `kh x kw` kernel that sits on the output sample: `(kh/2, kw/2)`.
pub fn centred_origin(kh: usize, kw: usize) -> (usize, usize) {
    (kh / 2, kw / 2)
}

/// Circular convolution of every trailing plane of `x` with the 2-D kernel
/// `h`, anchored so that tap `origin` of the kernel lands on the output sample:
///
/// `out[n] = sum_m x[(n + origin - m) mod N] * h[m]`
pub fn circ_conv2_with_origin(
    x: &ComplexTensor,
    h: &ComplexTensor,
    origin: (usize, usize),
) -> Result<ComplexTensor> {
    let (n1, n2) = x.dims2()?;
    let (kh, kw) = match h.shape() {
        [a, b] => (*a, *b),
        s => return Err(KunnError::invalid(format!("kernel must be 2-D, got {s:?}"))),
    };
    if kh > n1 || kw > n2 {
        return Err(KunnError::invalid(format!(
            "kernel {kh}x{kw} larger than signal {n1}x{n2}"
        )));
    }
    let mut out = ComplexTensor::zeros(x.shape());
    for p in 0..x.planes() {
        let src = x.plane(p);
        let dst = out.plane_mut(p);
        for my in 0..kh {
            let sy = origin.0 as isize - my as isize;
            for mx in 0..kw {
                let tap = h.data()[my * kw + mx];
                if tap == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let sx = origin.1 as isize - mx as isize;
                for r in 0..n1 {
                    let rs = (r as isize + sy).rem_euclid(n1 as isize) as usize;
                    for c in 0..n2 {
                        let cs = (c as isize + sx).rem_euclid(n2 as isize) as usize;
                        dst[r * n2 + c] += src[rs * n2 + cs] * tap;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Circular convolution with a centred kernel (tap `(kh/2, kw/2)` is the
/// zero offset). This is the k-space convolution used by the generator: a
/// kernel holding a centred compact spectrum acts as a pointwise image product.
pub fn circ_conv2(x: &ComplexTensor, h: &ComplexTensor) -> Result<ComplexTensor> {
    let (kh, kw) = h.dims2()?;
    circ_conv2_with_origin(x, h, centred_origin(kh, kw))
}

/// 1-D circular convolution `out[n] = sum_m x[(n + origin - m) mod N] h[m]`.
pub fn circ_conv1_with_origin(x: &[Complex64], h: &[Complex64], origin: usize) -> Result<Vec<Complex64>> {
    let n = x.len();
    if h.len() > n || h.is_empty() {
        return Err(KunnError::invalid(format!(
            "kernel length {} incompatible with signal length {n}",
            h.len()
        )));
    }
    Ok((0..n)
        .map(|i| {
            h.iter()
                .enumerate()
                .map(|(m, &hm)| x[(i as isize + origin as isize - m as isize).rem_euclid(n as isize) as usize] * hm)
                .sum()
        })
        .collect())
}

/// Embeds `h` into an `n1 x n2` plane with tap `origin` at index (0, 0), so
/// that `x (*) h = sqrt(n1*n2) * ifft2(fft2(x) . fft2(pad))`.
pub fn pad_kernel(h: &ComplexTensor, n1: usize, n2: usize, origin: (usize, usize)) -> Result<ComplexTensor> {
    let (kh, kw) = h.dims2()?;
    if kh > n1 || kw > n2 {
        return Err(KunnError::invalid("kernel larger than target plane"));
    }
    let mut out = ComplexTensor::zeros(&[n1, n2]);
    for my in 0..kh {
        for mx in 0..kw {
            let r = (my as isize - origin.0 as isize).rem_euclid(n1 as isize) as usize;
            let c = (mx as isize - origin.1 as isize).rem_euclid(n2 as isize) as usize;
            out.data_mut()[r * n2 + c] = h.data()[my * kw + mx];
        }
    }
    Ok(out)
}

/// `out[k1, k2] = conj(k[-k1 mod N1, -k2 mod N2])` on every trailing plane.
///
/// For even sizes the same index map is the reflection about the centre of a
/// `fftshift`ed array, so it applies unchanged to centred k-space.
pub fn conj_reflect(k: &ComplexTensor) -> Result<ComplexTensor> {
    let (n1, n2) = k.dims2()?;
    let mut out = ComplexTensor::zeros(k.shape());
    for p in 0..k.planes() {
        let src = k.plane(p);
        let dst = out.plane_mut(p);
        for r in 0..n1 {
            let rr = (n1 - r) % n1;
            for c in 0..n2 {
                dst[r * n2 + c] = src[rr * n2 + (n2 - c) % n2].conj();
            }
        }
    }
    Ok(out)
}
