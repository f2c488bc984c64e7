use num_complex::Complex64;

use crate::error::{KunnError, Result};

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(KunnError::invalid(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn matmul(&self, other: &CMatrix) -> Result<CMatrix> {
        if self.cols != other.rows {
            return Err(KunnError::invalid(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.cols {
            return Err(KunnError::invalid(format!(
                "matvec {}x{} by vector of {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok(self
            .data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `||A^H A - I||_max`, i.e. how far the columns are from orthonormal.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.cols {
            for b in a..self.cols {
                let dot: Complex64 = (0..self.rows).map(|i| self.get(i, a).conj() * self.get(i, b)).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).norm());
            }
        }
        worst
    }
}

/// Thin SVD `A = U diag(sigma) V^H` with `U: m x k`, `V: n x k`, `k = min(m, n)`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMatrix,
    /// Non-negative, non-increasing.
    pub sigma: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> CMatrix {
        let (m, n, k) = (self.u.rows(), self.v.rows(), self.sigma.len());
        CMatrix::from_fn(m, n, |i, j| {
            (0..k)
                .map(|r| self.u.get(i, r) * self.sigma[r] * self.v.get(j, r).conj())
                .sum()
        })
    }
}

const MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD. Columns are orthogonalised pairwise by
/// complex plane rotations until every pair is orthogonal to working precision.
pub fn svd_small(a: &CMatrix) -> Result<Svd> {
    if a.rows() < a.cols() {
        let t = svd_tall(&a.adjoint())?;
        return Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    svd_tall(a)
}

fn svd_tall(a: &CMatrix) -> Result<Svd> {
    let (m, n) = (a.rows(), a.cols());
    // column-major working copies so rotations touch contiguous memory
    let mut cols: Vec<Vec<Complex64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            e
        })
        .collect();
    let tol = 1e-14;
    // pairs whose coupling is negligible against the whole matrix are left
    // alone; otherwise rounding noise in null columns never settles
    let floor = 1e-15 * cols.iter().flatten().map(|c| c.norm_sqr()).sum::<f64>();
    let mut converged = n <= 1;
    let mut residual = 0.0;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        residual = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|c| c.norm_sqr()).sum();
                let beta: f64 = cols[q].iter().map(|c| c.norm_sqr()).sum();
                let gamma: Complex64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if alpha == 0.0 || beta == 0.0 || g <= floor {
                    continue;
                }
                let rel = g / (alpha * beta).sqrt();
                residual = residual.max(rel);
                if rel <= tol {
                    continue;
                }
                rotated = true;
                let phase = gamma / g; // e^{i theta}
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let ph = phase.conj();
                rotate(&mut cols, p, q, c, s, ph);
                rotate(&mut vcols, p, q, c, s, ph);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(KunnError::NoConvergence {
            sweeps: MAX_SWEEPS,
            residual,
        });
    }

    let mut order: Vec<(f64, usize)> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| (c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt(), j))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let sigma: Vec<f64> = order.iter().map(|(s, _)| *s).collect();
    let smax = sigma.first().copied().unwrap_or(0.0);
    let mut u = CMatrix::zeros(m, n);
    let mut v = CMatrix::zeros(n, n);
    let mut filled = Vec::with_capacity(n);
    for (k, (s, j)) in order.iter().enumerate() {
        for i in 0..n {
            v.set(i, k, vcols[*j][i]);
        }
        if *s > smax * 1e-14 && *s > 0.0 {
            for i in 0..m {
                u.set(i, k, cols[*j][i] / *s);
            }
            filled.push(k);
        }
    }
    complete_basis(&mut u, &filled);
    Ok(Svd { u, sigma, v })
}

/// Apply `[p q] <- [p q] [[c, s], [-s e^{-i theta}, c e^{-i theta}]]`.
fn rotate(cols: &mut [Vec<Complex64>], p: usize, q: usize, c: f64, s: f64, ph: Complex64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let yq = *y * ph;
        let xp = *x;
        *x = xp * c - yq * s;
        *y = xp * s + yq * c;
    }
}

/// Fill the columns of `u` not listed in `filled` with an orthonormal
/// completion (Gram-Schmidt against standard basis vectors).
fn complete_basis(u: &mut CMatrix, filled: &[usize]) {
    let (m, k) = (u.rows(), u.cols());
    let mut basis: Vec<Vec<Complex64>> = filled.iter().map(|&j| u.column(j)).collect();
    let mut candidate = 0;
    for j in 0..k {
        if filled.contains(&j) {
            continue;
        }
        while candidate < m {
            let mut v = vec![Complex64::new(0.0, 0.0); m];
            v[candidate] = Complex64::new(1.0, 0.0);
            candidate += 1;
            for _ in 0..2 {
                for b in &basis {
                    let proj: Complex64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
                    for (vi, bi) in v.iter_mut().zip(b) {
                        *vi -= proj * bi;
                    }
                }
            }
            let nrm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if nrm > 1e-6 {
                v.iter_mut().for_each(|x| *x /= nrm);
                for i in 0..m {
                    u.set(i, j, v[i]);
                }
                basis.push(v);
                break;
            }
        }
    }
}

/// Count of singular values above `tol_rel * sigma_max`.
pub fn numeric_rank(sigma: &[f64], tol_rel: f64) -> usize {
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > tol_rel * smax).count()
}

/// Default relative cutoff for [`numeric_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-6;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_singular_values() {
        let s = svd_small(&CMatrix::identity(5)).unwrap();
        assert!(s.sigma.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn rank_one_outer_product() {
        let u = [1.0, -2.0, 0.5, 3.0];
        let v = [Complex64::new(0.3, 1.0), Complex64::new(-1.0, 0.2), Complex64::new(2.0, 0.0)];
        let a = CMatrix::from_fn(4, 3, |i, j| v[j].conj() * u[i]);
        let s = svd_small(&a).unwrap();
        assert_eq!(s.sigma.iter().filter(|&&x| x > 1e-10 * s.sigma[0]).count(), 1);
        assert!(s.u.orthonormality_error() < 1e-10);
    }

    #[test]
    fn numeric_rank_threshold() {
        assert_eq!(numeric_rank(&[5.0, 3.0, 5e-9], 1e-6), 2);
        assert_eq!(numeric_rank(&[0.0, 0.0], 1e-6), 0);
    }

    #[test]
    fn wide_matrix_goes_through_adjoint() {
        let a = CMatrix::from_fn(2, 5, |i, j| Complex64::new((i + 2 * j) as f64, (i * j) as f64 - 1.0));
        let s = svd_small(&a).unwrap();
        assert_eq!((s.u.rows(), s.u.cols(), s.v.rows(), s.v.cols()), (2, 2, 5, 2));
        let r = s.reconstruct();
        let err: f64 = r.data().iter().zip(a.data()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        assert!(err / a.frobenius() < 1e-12);
    }
}
