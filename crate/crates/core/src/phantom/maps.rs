use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::RealTensor;
use crate::error::{KunnError, Result};
use crate::kspace::{to_image, to_kspace, ComplexTensor};

/// Normalised coil sensitivities plus the compactly supported maps they were
/// derived from.
#[derive(Clone, Debug)]
pub struct CoilMaps {
    /// `[Nc, N, N]`, with `sum_i |csm_i|^2 = 1` at every pixel.
    pub maps: ComplexTensor,
    /// `[Nc, N, N]` maps before normalisation; their centred spectra vanish
    /// outside the `support x support` patch.
    pub raw: ComplexTensor,
    pub support: usize,
    /// Fraction of the normalised maps' spectral energy outside the patch.
    pub leakage: f64,
}

/// Smooth phase `phi` such that `e^{j 2 phi}` is the phase of a field with a
/// compact `support x support` spectrum.
#[derive(Clone, Debug)]
pub struct PhaseMap {
    pub phi: RealTensor,
    pub support: usize,
    /// Fraction of the spectral energy of `e^{j 2 phi}` outside the patch.
    pub residual: f64,
}

fn check_support(n: usize, l: usize) -> Result<()> {
    if l % 2 == 0 || l >= n {
        return Err(KunnError::invalid(format!(
            "support {l} must be odd and smaller than N = {n}"
        )));
    }
    Ok(())
}

/// Offsets `(ky, kx)` in `[-l/2, l/2]^2` covered by a centred odd patch.
fn patch_offsets(l: usize) -> impl Iterator<Item = (isize, isize)> {
    let h = (l / 2) as isize;
    (-h..=h).flat_map(move |ky| (-h..=h).map(move |kx| (ky, kx)))
}

fn cnormal(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im)
}

/// Energy of the centred spectrum of each plane of `img` inside the centred
/// `l x l` patch, as a fraction of the total.
pub fn patch_energy_fraction(img: &ComplexTensor, l: usize) -> Result<f64> {
    let (n1, n2) = img.dims2()?;
    let k = to_kspace(img)?;
    let total = k.norm_sqr();
    if total == 0.0 {
        return Ok(1.0);
    }
    let h = l / 2;
    let mut inside = 0.0;
    for p in 0..k.planes() {
        let plane = k.plane(p);
        for r in n1 / 2 - h..=n1 / 2 + h {
            for c in n2 / 2 - h..=n2 / 2 + h {
                inside += plane[r * n2 + c].norm_sqr();
            }
        }
    }
    Ok(inside / total)
}

/// Coil `i` is a broad blob centred on a ring around the image centre with
/// some random low-frequency texture. The spectrum is built directly on the
/// centred patch, so compact support is exact before normalisation.
pub fn make_coil_maps(n: usize, n_coils: usize, support: usize, seed: u64) -> Result<CoilMaps> {
    check_support(n, support)?;
    if n_coils == 0 {
        return Err(KunnError::invalid("need at least one coil"));
    }
    let mut rng = super::stream_rng(seed, 1);
    let nf = n as f64;
    // spectral width 2/pi, i.e. an image-domain blob of standard deviation ~N/4
    let sigma_k = 2.0 / PI;
    let ring = 0.35;
    let sigma_tex = (support as f64 / 4.0).max(0.5);
    let c = n / 2;
    let mut raw_planes = Vec::with_capacity(n_coils);
    for i in 0..n_coils {
        let angle = 2.0 * PI * i as f64 / n_coils as f64 + rng.gen_range(-0.2..0.2);
        let (py, px) = if n_coils == 1 {
            (0.0, 0.0)
        } else {
            (ring * nf * angle.sin(), ring * nf * angle.cos())
        };
        let global = Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI));
        let mut spec = ComplexTensor::zeros(&[n, n]);
        for (ky, kx) in patch_offsets(support) {
            let (fy, fx) = (ky as f64, kx as f64);
            let r2 = fy * fy + fx * fx;
            let shift = Complex64::from_polar(1.0, -2.0 * PI * (fy * py + fx * px) / nf);
            let blob = global * shift * (-r2 / (2.0 * sigma_k * sigma_k)).exp();
            let texture = 0.15 * cnormal(&mut rng) * (-r2 / (2.0 * sigma_tex * sigma_tex)).exp();
            let idx = (c as isize + ky) as usize * n + (c as isize + kx) as usize;
            spec.data_mut()[idx] = (blob + texture) * nf;
        }
        if i == 0 {
            // floor: a constant added to coil 0 keeps the sum of squares away
            // from zero without leaving the patch
            spec.data_mut()[c * n + c] += Complex64::new(0.2 * nf, 0.0);
        }
        raw_planes.push(to_image(&spec)?);
    }
    let raw = ComplexTensor::stack(&raw_planes)?;
    let mut sos = vec![0.0; n * n];
    for p in 0..n_coils {
        for (s, v) in sos.iter_mut().zip(raw.plane(p)) {
            *s += v.norm_sqr();
        }
    }
    if sos.iter().any(|&s| !(s > 0.0)) {
        return Err(KunnError::NonFinite("coil sum of squares vanished".into()));
    }
    let mut maps = raw.clone();
    for p in 0..n_coils {
        for (v, s) in maps.plane_mut(p).iter_mut().zip(&sos) {
            *v /= s.sqrt();
        }
    }
    let leakage = 1.0 - patch_energy_fraction(&maps, support)?;
    Ok(CoilMaps {
        maps,
        raw,
        support,
        leakage,
    })
}

/// `2 phi` is the angle of a smooth field `1 + p` whose spectrum lives on the
/// centred patch (`p` has decaying random coefficients). The field is not
/// made Hermitian: that would make it real and its angle piecewise 0 / pi.
pub fn make_phase(n: usize, support: usize, seed: u64) -> Result<PhaseMap> {
    check_support(n, support)?;
    let mut rng = super::stream_rng(seed, 2);
    let nf = n as f64;
    let sigma = (support as f64 / 4.0).max(0.5);
    let c = n / 2;
    let mut spec = ComplexTensor::zeros(&[n, n]);
    for (ky, kx) in patch_offsets(support) {
        let idx = (c as isize + ky) as usize * n + (c as isize + kx) as usize;
        if ky == 0 && kx == 0 {
            spec.data_mut()[idx] = Complex64::new(nf, 0.0);
            continue;
        }
        let r2 = (ky * ky + kx * kx) as f64;
        spec.data_mut()[idx] = 0.05 * nf * cnormal(&mut rng) * (-r2 / (2.0 * sigma * sigma)).exp();
    }
    let field = to_image(&spec)?;
    let phi = RealTensor::new(vec![n, n], field.data().iter().map(|v| 0.5 * v.arg()).collect())?;
    let unit = field.map(|v| if v.norm() > 0.0 { v / v.norm() } else { Complex64::new(1.0, 0.0) });
    let residual = 1.0 - patch_energy_fraction(&unit, support)?;
    Ok(PhaseMap { phi, support, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_validation() {
        assert!(make_coil_maps(16, 2, 16, 0).is_err());
        assert!(make_coil_maps(16, 2, 4, 0).is_err());
        assert!(make_phase(16, 17, 0).is_err());
    }

    #[test]
    fn maps_shapes() {
        let m = make_coil_maps(16, 3, 5, 9).unwrap();
        assert_eq!(m.maps.shape(), &[3, 16, 16]);
        assert!(m.leakage >= 0.0 && m.leakage < 1.0);
    }
}
