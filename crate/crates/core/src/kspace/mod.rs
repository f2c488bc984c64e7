//! Complex-array signal processing: orthonormal FFTs, circular convolution,
//! conjugate reflection, wrap-around Hankel lifting and a small dense SVD.

mod conv;
mod fft;
mod hankel;
mod svd;
mod tensor;

pub use conv::{
    centred_origin, circ_conv1_with_origin, circ_conv2, circ_conv2_with_origin, conj_reflect, pad_kernel,
};
pub use fft::{fft1, fft2, fftshift2, ifft2, ifftshift2, to_image, to_kspace};
pub use hankel::{hankel_build, HankelMatrix};
pub use svd::{numeric_rank, svd_small, CMatrix, Svd, DEFAULT_RANK_TOL};
pub use tensor::ComplexTensor;

use crate::autodiff::RealTensor;
use crate::error::{KunnError, Result};

/// Square root of the sum of squared coil magnitudes, `[Nc, H, W] -> [H, W]`.
/// A 2-D input is treated as a single coil.
pub fn ssos(x: &ComplexTensor) -> Result<RealTensor> {
    let (h, w) = x.dims2()?;
    if x.shape().len() > 3 {
        return Err(KunnError::invalid(format!("ssos expects [Nc, H, W], got {:?}", x.shape())));
    }
    let mut acc = vec![0.0; h * w];
    for p in 0..x.planes() {
        for (a, v) in acc.iter_mut().zip(x.plane(p)) {
            *a += v.norm_sqr();
        }
    }
    RealTensor::new(vec![h, w], acc.into_iter().map(f64::sqrt).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn three_four_five() {
        let x = ComplexTensor::new(vec![2, 1, 1], vec![Complex64::new(3.0, 0.0), Complex64::new(0.0, 4.0)]).unwrap();
        assert_eq!(ssos(&x).unwrap().data(), &[5.0]);
    }

    #[test]
    fn single_coil_is_magnitude() {
        let x = ComplexTensor::new(vec![1, 2, 2], vec![Complex64::new(-1.0, 0.0), Complex64::new(0.6, 0.8), Complex64::new(0.0, -2.0), Complex64::new(0.0, 0.0)]).unwrap();
        assert_eq!(ssos(&x).unwrap().data(), &[1.0, 1.0, 2.0, 0.0]);
    }
}
