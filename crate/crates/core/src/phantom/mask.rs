use rand::seq::index::sample;

use crate::error::{KunnError, Result};
use crate::kspace::ComplexTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskKind {
    Random,
    VdRegular,
    PartialFourier,
    /// Individual k-space entries rather than whole lines.
    Entrywise,
}

impl MaskKind {
    pub fn name(self) -> &'static str {
        match self {
            MaskKind::Random => "random",
            MaskKind::VdRegular => "vd_regular",
            MaskKind::PartialFourier => "partial_fourier",
            MaskKind::Entrywise => "entrywise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(MaskKind::Random),
            "vd_regular" => Ok(MaskKind::VdRegular),
            "partial_fourier" | "pf" => Ok(MaskKind::PartialFourier),
            "entrywise" => Ok(MaskKind::Entrywise),
            other => Err(KunnError::invalid(format!("unknown mask kind '{other}'"))),
        }
    }
}

/// Sampling pattern on an `N x N` centred k-space grid.
///
/// For line masks `omega` holds the sampled phase-encode rows; for
/// [`MaskKind::Entrywise`] it holds flat row-major entry indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    pub kind: MaskKind,
    pub omega: Vec<usize>,
    pub n: usize,
    pub acs: usize,
    /// Nominal acceleration the mask was requested with.
    pub r: f64,
    pattern: Vec<bool>,
}

impl SamplingMask {
    fn from_lines(kind: MaskKind, mut lines: Vec<usize>, n: usize, acs: usize, r: f64) -> Self {
        lines.sort_unstable();
        lines.dedup();
        let mut pattern = vec![false; n * n];
        for &l in &lines {
            pattern[l * n..(l + 1) * n].iter_mut().for_each(|p| *p = true);
        }
        Self {
            kind,
            omega: lines,
            n,
            acs,
            r,
            pattern,
        }
    }

    /// Entrywise mask from an explicit `N x N` row-major pattern.
    pub fn from_pattern(n: usize, pattern: Vec<bool>) -> Result<Self> {
        if pattern.len() != n * n {
            return Err(KunnError::invalid(format!("pattern of {} entries for N = {n}", pattern.len())));
        }
        let omega: Vec<usize> = (0..n * n).filter(|&i| pattern[i]).collect();
        let r = if omega.is_empty() { f64::INFINITY } else { (n * n) as f64 / omega.len() as f64 };
        Ok(Self {
            kind: MaskKind::Entrywise,
            omega,
            n,
            acs: 0,
            r,
            pattern,
        })
    }

    /// Rebuilds a mask of any kind from its pattern, e.g. after reading it
    /// back from disk. Line kinds must sample whole rows.
    pub fn from_stored(kind: MaskKind, n: usize, acs: usize, r: f64, pattern: Vec<bool>) -> Result<Self> {
        if kind == MaskKind::Entrywise {
            let mut m = Self::from_pattern(n, pattern)?;
            m.r = r;
            return Ok(m);
        }
        if pattern.len() != n * n {
            return Err(KunnError::invalid(format!("pattern of {} entries for N = {n}", pattern.len())));
        }
        let mut lines = Vec::new();
        for (l, row) in pattern.chunks_exact(n).enumerate() {
            match (row.iter().all(|&p| p), row.iter().any(|&p| p)) {
                (true, _) => lines.push(l),
                (false, false) => {}
                (false, true) => {
                    return Err(KunnError::invalid(format!("row {l} is partially sampled in a {} mask", kind.name())))
                }
            }
        }
        Ok(Self::from_lines(kind, lines, n, acs, r))
    }

    /// Row-major `N x N` sampled flags.
    pub fn pattern(&self) -> &[bool] {
        &self.pattern
    }

    pub fn is_sampled(&self, row: usize, col: usize) -> bool {
        self.pattern[row * self.n + col]
    }

    /// Number of sampled k-space entries per coil.
    pub fn sampled_entries(&self) -> usize {
        self.pattern.iter().filter(|&&p| p).count()
    }

    /// Sampled fraction of the grid.
    pub fn density(&self) -> f64 {
        self.sampled_entries() as f64 / (self.n * self.n) as f64
    }

    /// Pattern as a 0/1 real grid.
    pub fn as_f64(&self) -> Vec<f64> {
        self.pattern.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect()
    }

    /// Zeroes unsampled entries of every trailing `N x N` plane.
    pub fn apply(&self, k: &ComplexTensor) -> Result<ComplexTensor> {
        let (h, w) = k.dims2()?;
        if h != self.n || w != self.n {
            return Err(KunnError::invalid(format!("mask is {0}x{0}, data is {h}x{w}", self.n)));
        }
        let mut out = k.clone();
        for p in 0..out.planes() {
            for (v, &s) in out.plane_mut(p).iter_mut().zip(&self.pattern) {
                if !s {
                    *v = num_complex::Complex64::new(0.0, 0.0);
                }
            }
        }
        Ok(out)
    }
}

fn acs_block(n: usize, acs: usize) -> std::ops::Range<usize> {
    let start = n / 2 - acs / 2;
    start..start + acs
}

fn line_budget(n: usize, r: f64, acs: usize) -> Result<usize> {
    if !(r >= 1.0) || !r.is_finite() {
        return Err(KunnError::invalid(format!("acceleration R = {r} must be >= 1")));
    }
    if acs == 0 || acs > n {
        return Err(KunnError::invalid(format!("acs = {acs} must lie in [1, {n}]")));
    }
    let budget = (n as f64 / r).round() as usize;
    if acs > budget {
        return Err(KunnError::invalid(format!(
            "acs = {acs} exceeds the line budget round({n}/{r}) = {budget}"
        )));
    }
    Ok(budget)
}

/// ACS block plus lines drawn uniformly without replacement until
/// `round(N/R)` lines are sampled.
pub fn mask_random(n: usize, r: f64, acs: usize, seed: u64) -> Result<SamplingMask> {
    let budget = line_budget(n, r, acs)?;
    let centre = acs_block(n, acs);
    let outside: Vec<usize> = (0..n).filter(|l| !centre.contains(l)).collect();
    let mut rng = super::stream_rng(seed, 3);
    let mut lines: Vec<usize> = centre.collect();
    lines.extend(sample(&mut rng, outside.len(), budget - acs).into_iter().map(|i| outside[i]));
    Ok(SamplingMask::from_lines(MaskKind::Random, lines, n, acs, r))
}

/// ACS block plus every `ceil((N - acs) / (round(N/R) - acs))`-th line of
/// the remaining ones, starting from the first.
pub fn mask_vd_regular(n: usize, r: f64, acs: usize) -> Result<SamplingMask> {
    let budget = line_budget(n, r, acs)?;
    let centre = acs_block(n, acs);
    let outside: Vec<usize> = (0..n).filter(|l| !centre.contains(l)).collect();
    let mut lines: Vec<usize> = centre.collect();
    if budget > acs && !outside.is_empty() {
        let step = outside.len().div_ceil(budget - acs);
        lines.extend(outside.iter().step_by(step));
    }
    Ok(SamplingMask::from_lines(MaskKind::VdRegular, lines, n, acs, r))
}

/// Lines `[0, round(pf * N))` plus the ACS block. With `r` given, lines of
/// the block outside the ACS are thinned at even spacing until exactly
/// `round(N/R)` lines remain.
pub fn mask_partial_fourier(n: usize, pf_fraction: f64, acs: usize, r: Option<f64>) -> Result<SamplingMask> {
    if !(pf_fraction > 0.5 && pf_fraction <= 1.0) {
        return Err(KunnError::invalid(format!("pf_fraction = {pf_fraction} must lie in (0.5, 1]")));
    }
    if acs == 0 || acs > n {
        return Err(KunnError::invalid(format!("acs = {acs} must lie in [1, {n}]")));
    }
    let block = ((pf_fraction * n as f64).round() as usize).min(n);
    let centre = acs_block(n, acs);
    let mut lines: Vec<usize> = centre.clone().collect();
    let extra: Vec<usize> = (0..block).filter(|l| !centre.contains(l)).collect();
    let nominal;
    match r {
        None => {
            lines.extend(&extra);
            nominal = n as f64 / (lines.len() as f64);
        }
        Some(r) => {
            let budget = line_budget(n, r, acs)?;
            let want = (budget - acs).min(extra.len());
            lines.extend((0..want).map(|i| extra[i * extra.len() / want]));
            nominal = r;
        }
    }
    Ok(SamplingMask::from_lines(MaskKind::PartialFourier, lines, n, acs, nominal))
}

/// `round(density * N^2)` entries drawn uniformly without replacement.
pub fn mask_entrywise(n: usize, density: f64, seed: u64) -> Result<SamplingMask> {
    if !(0.0..=1.0).contains(&density) {
        return Err(KunnError::invalid(format!("density {density} outside [0, 1]")));
    }
    let total = n * n;
    let count = (density * total as f64).round() as usize;
    let mut rng = super::stream_rng(seed, 4);
    let mut pattern = vec![false; total];
    for i in sample(&mut rng, total, count) {
        pattern[i] = true;
    }
    SamplingMask::from_pattern(n, pattern)
}
