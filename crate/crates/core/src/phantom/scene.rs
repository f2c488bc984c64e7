use num_complex::Complex64;
use rand_distr::{Distribution, Normal};

use super::mask::{mask_entrywise, mask_partial_fourier, mask_random, mask_vd_regular, SamplingMask};
use super::maps::{make_coil_maps, make_phase};
use super::shapes::make_phantom;
use crate::autodiff::RealTensor;
use crate::error::{KunnError, Result};
use crate::kspace::{ssos, to_image, to_kspace, ComplexTensor};

/// Everything known about one simulated acquisition.
#[derive(Clone, Debug)]
pub struct AcquisitionScene {
    /// Phantom magnitude `|z|`, values in [0, 1].
    pub magnitude: RealTensor,
    /// `magnitude * e^{j phi}`, `[N, N]`.
    pub z_true: ComplexTensor,
    /// `[Nc, N, N]`.
    pub csm: ComplexTensor,
    pub phase_map: RealTensor,
    /// Centred k-space of `csm_i * z_true`, `[Nc, N, N]`.
    pub kspace_full: ComplexTensor,
    pub mask: SamplingMask,
    pub noise_sigma: f64,
    /// Noise actually added; zero off the mask.
    pub noise: ComplexTensor,
    /// Masked noisy measurements; exactly zero off the mask.
    pub y: ComplexTensor,
    pub seed: u64,
}

impl AcquisitionScene {
    pub fn n(&self) -> usize {
        self.z_true.shape()[0]
    }

    pub fn coils(&self) -> usize {
        self.csm.shape()[0]
    }

    /// SSoS of the fully sampled coil images.
    pub fn reference_image(&self) -> Result<RealTensor> {
        ssos(&to_image(&self.kspace_full)?)
    }

    /// SSoS of the inverse transform of `y` with zeros off the mask.
    pub fn zero_filled_image(&self) -> Result<RealTensor> {
        ssos(&to_image(&self.y)?)
    }

    /// Partial-Fourier baseline that assumes a real image: every unsampled
    /// entry whose mirror `-k` was measured gets `conj(y[-k])`.
    pub fn conjugate_completion(&self) -> Result<ComplexTensor> {
        let n = self.n();
        let pattern = self.mask.pattern();
        let mut out = self.y.clone();
        for p in 0..out.planes() {
            let src = self.y.plane(p);
            let dst = out.plane_mut(p);
            for r in 0..n {
                for c in 0..n {
                    let i = r * n + c;
                    let m = ((n - r) % n) * n + (n - c) % n;
                    if !pattern[i] && pattern[m] {
                        dst[i] = src[m].conj();
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn conjugate_completion_image(&self) -> Result<RealTensor> {
        ssos(&to_image(&self.conjugate_completion()?)?)
    }
}

/// Builds the scene for a given phantom, coil maps, phase and mask.
pub fn assemble(
    magnitude: &RealTensor,
    csm: &ComplexTensor,
    phi: &RealTensor,
    sigma: f64,
    mask: &SamplingMask,
    seed: u64,
) -> Result<AcquisitionScene> {
    let n = mask.n;
    if magnitude.shape() != [n, n] || phi.shape() != [n, n] {
        return Err(KunnError::invalid(format!(
            "phantom {:?} / phase {:?} do not match the {n}x{n} mask",
            magnitude.shape(),
            phi.shape()
        )));
    }
    if csm.shape().len() != 3 || csm.shape()[1..] != [n, n] {
        return Err(KunnError::invalid(format!("coil maps {:?} are not [Nc, {n}, {n}]", csm.shape())));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(KunnError::invalid(format!("noise sigma {sigma} must be finite and >= 0")));
    }
    let z_data = magnitude
        .data()
        .iter()
        .zip(phi.data())
        .map(|(&m, &p)| Complex64::from_polar(m, p))
        .collect();
    let z_true = ComplexTensor::new(vec![n, n], z_data)?;
    let nc = csm.shape()[0];
    let mut coil_images = csm.clone();
    for p in 0..nc {
        for (v, z) in coil_images.plane_mut(p).iter_mut().zip(z_true.data()) {
            *v *= z;
        }
    }
    let kspace_full = to_kspace(&coil_images)?;

    let mut noise = ComplexTensor::zeros(kspace_full.shape());
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| KunnError::invalid(e.to_string()))?;
        let mut rng = super::stream_rng(seed, 5);
        for p in 0..nc {
            for (v, &s) in noise.plane_mut(p).iter_mut().zip(mask.pattern()) {
                if s {
                    *v = Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
                }
            }
        }
    }
    // without noise, skip the addition so y carries kspace_full bit for bit
    // (x + 0.0 would turn -0.0 into 0.0)
    let y = if sigma > 0.0 {
        mask.apply(&kspace_full.add(&noise)?)?
    } else {
        mask.apply(&kspace_full)?
    };
    Ok(AcquisitionScene {
        magnitude: magnitude.clone(),
        z_true,
        csm: csm.clone(),
        phase_map: phi.clone(),
        kspace_full,
        mask: mask.clone(),
        noise_sigma: sigma,
        noise,
        y,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum MaskSpec {
    Random { r: f64, acs: usize },
    VdRegular { r: f64, acs: usize },
    PartialFourier { pf_fraction: f64, acs: usize, r: Option<f64> },
    Entrywise { density: f64 },
}

impl MaskSpec {
    pub fn build(&self, n: usize, seed: u64) -> Result<SamplingMask> {
        match *self {
            MaskSpec::Random { r, acs } => mask_random(n, r, acs, seed),
            MaskSpec::VdRegular { r, acs } => mask_vd_regular(n, r, acs),
            MaskSpec::PartialFourier { pf_fraction, acs, r } => mask_partial_fourier(n, pf_fraction, acs, r),
            MaskSpec::Entrywise { density } => mask_entrywise(n, density, seed),
        }
    }
}

/// Parameters of a fully synthetic scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub n: usize,
    pub coils: usize,
    pub n_ellipses: usize,
    pub coil_support: usize,
    pub phase_support: usize,
    pub mask: MaskSpec,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n: 64,
            coils: 4,
            n_ellipses: 5,
            coil_support: 11,
            phase_support: 11,
            mask: MaskSpec::Random { r: 3.0, acs: 8 },
            sigma: 0.0,
            seed: 0,
        }
    }
}

pub fn simulate(cfg: &SceneConfig) -> Result<AcquisitionScene> {
    let magnitude = make_phantom(cfg.n, cfg.n_ellipses, cfg.seed)?;
    let coils = make_coil_maps(cfg.n, cfg.coils, cfg.coil_support, cfg.seed)?;
    let phase = make_phase(cfg.n, cfg.phase_support, cfg.seed)?;
    let mask = cfg.mask.build(cfg.n, cfg.seed)?;
    assemble(&magnitude, &coils.maps, &phase.phi, cfg.sigma, &mask, cfg.seed)
}
