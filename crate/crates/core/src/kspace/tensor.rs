use num_complex::Complex64;

use crate::autodiff::RealTensor;
use crate::error::{KunnError, Result};

/// Row-major complex array; `Complex64` is laid out as interleaved (re, im).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    data: Vec<Complex64>,
}

impl ComplexTensor {
    pub fn new(shape: Vec<usize>, data: Vec<Complex64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || n != data.len() {
            return Err(KunnError::invalid(format!(
                "shape {shape:?} inconsistent with {} values",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn from_real(t: &RealTensor) -> Self {
        Self {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// Reads `[2A, ...]` (re, im) channel pairs as `[A, ...]` complex.
    pub fn from_channel_pairs(t: &RealTensor) -> Result<Self> {
        let s = t.shape();
        if s.len() < 2 || s[0] % 2 != 0 {
            return Err(KunnError::invalid(format!(
                "expected [2A, ...] channel pairs, got {s:?}"
            )));
        }
        let m: usize = s[1..].iter().product();
        let pairs = s[0] / 2;
        let mut data = Vec::with_capacity(pairs * m);
        for p in 0..pairs {
            let re = &t.data()[2 * p * m..(2 * p + 1) * m];
            let im = &t.data()[(2 * p + 1) * m..(2 * p + 2) * m];
            data.extend(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)));
        }
        let mut shape = vec![pairs];
        shape.extend_from_slice(&s[1..]);
        Self::new(shape, data)
    }

    /// Inverse of [`ComplexTensor::from_channel_pairs`]. A tensor without a
    /// leading batch axis is treated as a single pair.
    pub fn to_channel_pairs(&self) -> RealTensor {
        let (pairs, inner): (usize, &[usize]) = if self.shape.len() >= 3 {
            (self.shape[0], &self.shape[1..])
        } else {
            (1, &self.shape[..])
        };
        let m: usize = inner.iter().product();
        let mut data = Vec::with_capacity(2 * self.data.len());
        for p in 0..pairs {
            let chunk = &self.data[p * m..(p + 1) * m];
            data.extend(chunk.iter().map(|c| c.re));
            data.extend(chunk.iter().map(|c| c.im));
        }
        let mut shape = vec![2 * pairs];
        shape.extend_from_slice(inner);
        RealTensor::new(shape, data).expect("pair layout preserves element count")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Trailing two dimensions.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [.., h, w] => Ok((*h, *w)),
            _ => Err(KunnError::invalid(format!(
                "need at least two dimensions, got {:?}",
                self.shape
            ))),
        }
    }

    /// Number of stacked 2-D planes.
    pub fn planes(&self) -> usize {
        self.shape[..self.shape.len().saturating_sub(2)].iter().product()
    }

    pub fn plane(&self, p: usize) -> &[Complex64] {
        let m = self.shape[self.shape.len() - 2..].iter().product::<usize>();
        &self.data[p * m..(p + 1) * m]
    }

    pub fn plane_mut(&mut self, p: usize) -> &mut [Complex64] {
        let m = self.shape[self.shape.len() - 2..].iter().product::<usize>();
        &mut self.data[p * m..(p + 1) * m]
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(KunnError::invalid(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&c| f(c)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(KunnError::invalid(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn conj(&self) -> Self {
        self.map(|c| c.conj())
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|c| c * a)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn abs(&self) -> RealTensor {
        RealTensor::new(self.shape.clone(), self.data.iter().map(|c| c.norm()).collect())
            .expect("same element count")
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on different shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Stack tensors of identical shape along a new leading axis.
    pub fn stack(items: &[ComplexTensor]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| KunnError::invalid("cannot stack zero tensors"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.shape != first.shape {
                return Err(KunnError::invalid("stack of tensors with different shapes"));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Self::new(shape, data)
    }

    /// Split the leading axis into separate tensors.
    pub fn unstack(&self) -> Vec<ComplexTensor> {
        let n = self.shape[0];
        let m = self.data.len() / n;
        (0..n)
            .map(|i| ComplexTensor {
                shape: self.shape[1..].to_vec(),
                data: self.data[i * m..(i + 1) * m].to_vec(),
            })
            .collect()
    }
}
