use num_complex::Complex64;

use super::svd::CMatrix;
use super::ComplexTensor;
use crate::error::{KunnError, Result};

/// Wrap-around Hankel lifting of a 1-D or 2-D signal.
///
/// 1-D: `H[i, j] = x[(i + j) mod N]`, an `N x d` matrix.
/// 2-D: rows run over the `N1 x N2` samples (row-major), columns over the
/// `d x d` window flattened column-major (`j = j1 + d*j2`), with
/// `H[(i1,i2), (j1,j2)] = x[(i1 + j1) mod N1, (i2 + j2) mod N2]`.
///
/// With `flip(h)[j] = h[d-1-j]` (per axis), `H . flip(h)` is the circular
/// convolution of `x` and `h` anchored at the last tap, i.e.
/// `circ_conv*_with_origin(x, h, d-1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HankelMatrix {
    matrix: CMatrix,
    window: usize,
    signal_shape: Vec<usize>,
}

impl HankelMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn signal_shape(&self) -> &[usize] {
        &self.signal_shape
    }

    /// Tap (per axis) that the equivalent convolution is anchored at.
    pub fn conv_origin(&self) -> usize {
        self.window - 1
    }

    /// Flatten a `d` (1-D) or `d x d` (2-D, row-major) kernel into the
    /// time-reversed column vector that `H` multiplies.
    pub fn flipped_filter(&self, h: &[Complex64]) -> Result<Vec<Complex64>> {
        let d = self.window;
        match self.signal_shape.len() {
            1 => {
                if h.len() != d {
                    return Err(KunnError::invalid(format!("filter length {} != window {d}", h.len())));
                }
                Ok(h.iter().rev().copied().collect())
            }
            _ => {
                if h.len() != d * d {
                    return Err(KunnError::invalid(format!("filter size {} != window {d}x{d}", h.len())));
                }
                let mut out = vec![Complex64::new(0.0, 0.0); d * d];
                for j1 in 0..d {
                    for j2 in 0..d {
                        out[j1 + d * j2] = h[(d - 1 - j1) * d + (d - 1 - j2)];
                    }
                }
                Ok(out)
            }
        }
    }

    /// Reassemble a column-major `H . v` result into the signal layout.
    pub fn apply(&self, v: &[Complex64]) -> Result<ComplexTensor> {
        let out = self.matrix.matvec(v)?;
        ComplexTensor::new(self.signal_shape.clone(), out)
    }
}

/// Builds `H(x, d)` for a 1-D (`[N]`) or 2-D (`[N1, N2]`) signal.
pub fn hankel_build(x: &ComplexTensor, d: usize) -> Result<HankelMatrix> {
    if d == 0 {
        return Err(KunnError::invalid("Hankel window must be at least 1"));
    }
    match x.shape() {
        [n] => {
            let n = *n;
            if d > n {
                return Err(KunnError::invalid(format!("window {d} exceeds signal length {n}")));
            }
            let data = x.data();
            let matrix = CMatrix::from_fn(n, d, |i, j| data[(i + j) % n]);
            Ok(HankelMatrix {
                matrix,
                window: d,
                signal_shape: vec![n],
            })
        }
        [n1, n2] => {
            let (n1, n2) = (*n1, *n2);
            if d > n1 || d > n2 {
                return Err(KunnError::invalid(format!("window {d} exceeds signal {n1}x{n2}")));
            }
            let data = x.data();
            let matrix = CMatrix::from_fn(n1 * n2, d * d, |row, col| {
                let (i1, i2) = (row / n2, row % n2);
                let (j1, j2) = (col % d, col / d);
                data[((i1 + j1) % n1) * n2 + (i2 + j2) % n2]
            });
            Ok(HankelMatrix {
                matrix,
                window: d,
                signal_shape: vec![n1, n2],
            })
        }
        s => Err(KunnError::invalid(format!("Hankel lifting needs a 1-D or 2-D signal, got {s:?}"))),
    }
}
