//! Quantities from the recovery analysis of the generator fit (coherence,
//! the sampling constant `c1`, the Hankel rank assumption) and Monte-Carlo
//! checks of the inequalities on small instances.

mod empirical;
mod report;

pub use empirical::{
    assumption1_check, difference_rank, lemma1_verify, masked_ratio, run_theory, theorem_bound_verify,
    LatentSearch, Lemma1Outcome, RankSurvey, TheoremTrial, TheoryConfig,
};
pub use report::TheoryReport;

use crate::error::{KunnError, Result};
use crate::kspace::{numeric_rank, svd_small, CMatrix};

/// Largest `||U^H U - I||_max` accepted as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Default `beta` of the success probability `1 - 2 d^(2 - 2 beta)`.
pub const DEFAULT_BETA: f64 = 1.1;

/// Column and row subspaces of a (Hankel) matrix.
#[derive(Clone, Debug)]
pub struct SubspaceBasis {
    pub u: CMatrix,
    pub v: CMatrix,
    pub source: String,
}

impl SubspaceBasis {
    /// Leading `rank` singular vectors of `h`, with `rank` picked by
    /// relative cutoff `tol`. `None` when `h` is numerically zero.
    pub fn from_matrix(h: &CMatrix, tol: f64, source: impl Into<String>) -> Result<Option<Self>> {
        let svd = svd_small(h)?;
        let r = numeric_rank(&svd.sigma, tol);
        if r == 0 {
            return Ok(None);
        }
        let take = |m: &CMatrix| CMatrix::from_fn(m.rows(), r, |i, j| m.get(i, j));
        Ok(Some(Self {
            u: take(&svd.u),
            v: take(&svd.v),
            source: source.into(),
        }))
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    pub fn mu_u(&self) -> Result<f64> {
        coherence(&self.u, self.u.rows())
    }

    pub fn mu_v(&self) -> Result<f64> {
        coherence(&self.v, self.v.rows())
    }

    /// `max(mu(U), mu(V))`.
    pub fn mu0(&self) -> Result<f64> {
        Ok(self.mu_u()?.max(self.mu_v()?))
    }
}

/// `mu(U) = (n / r) max_i ||P_U e_i||^2`. For orthonormal `U` the projection
/// norm of `e_i` is the norm of row `i`.
pub fn coherence(u: &CMatrix, n: usize) -> Result<f64> {
    let r = u.cols();
    if r == 0 || u.rows() != n {
        return Err(KunnError::invalid(format!(
            "basis is {}x{r}, expected {n} rows and at least one column",
            u.rows()
        )));
    }
    let err = u.orthonormality_error();
    if !(err <= ORTHONORMAL_TOL) {
        return Err(KunnError::invalid(format!("basis is not orthonormal (Gram residual {err:.3e})")));
    }
    let max_row = (0..n)
        .map(|i| (0..r).map(|j| u.get(i, j).norm_sqr()).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(n as f64 / r as f64 * max_row)
}

/// `c1` together with the sampling requirement it comes with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct C1Bound {
    pub c1: f64,
    /// `5.34 mu0 r (N + d) beta ln d`
    pub n_required: f64,
    /// `n > n_required`
    pub condition: bool,
}

impl C1Bound {
    /// The inequality is informative only with the sampling condition met
    /// and a positive constant.
    pub fn usable(&self) -> bool {
        self.condition && self.c1 > 0.0
    }
}

/// `c1 = sqrt(16 n mu0 r (N + d) beta ln d / (3 N^2)) - n / N`, verbatim.
///
/// For 2-D data pass `N^2` and `d^2`. Note that `c1 > 0` needs
/// `n < 16/3 K` while the condition needs `n > 5.34 K` (same `K`), so the
/// two never hold together.
pub fn c1_bound(n: f64, mu0: f64, r: f64, big_n: f64, d: f64, beta: f64) -> Result<C1Bound> {
    if !(d > 1.0) {
        return Err(KunnError::invalid(format!("d must exceed 1 (log d degenerate), got {d}")));
    }
    for (name, v) in [("mu0", mu0), ("N", big_n), ("beta", beta)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(KunnError::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    for (name, v) in [("n", n), ("r", r)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(KunnError::invalid(format!("{name} must be non-negative, got {v}")));
        }
    }
    let k = mu0 * r * (big_n + d) * beta * d.ln();
    let c1 = (16.0 * n * k / (3.0 * big_n * big_n)).sqrt() - n / big_n;
    let n_required = 5.34 * k;
    Ok(C1Bound {
        c1,
        n_required,
        condition: n > n_required,
    })
}

/// `gamma = max(c/a - 1, 0)` such that `b <= gamma a` whenever `a + b <= c`.
/// The check allows a few ulps of rounding in `gamma a`.
pub fn lemma2_check(a: f64, b: f64, c: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(KunnError::invalid(format!("a must be positive, got {a}")));
    }
    if !(b >= 0.0) || !c.is_finite() || !(a + b <= c) {
        return Err(KunnError::invalid(format!("need b >= 0 and a + b <= c < inf, got a={a} b={b} c={c}")));
    }
    let gamma = (c / a - 1.0).max(0.0);
    if b > gamma * a + 4.0 * f64::EPSILON * c {
        return Err(KunnError::invalid(format!("b = {b} exceeds gamma a = {}", gamma * a)));
    }
    Ok(gamma)
}
