mod common;

use common::max_abs;
use kunn_core::autodiff::RealTensor;
use kunn_core::kspace::{to_image, to_kspace, ComplexTensor};
use kunn_core::phantom::{
    assemble, gradient_support_fraction, make_coil_maps, make_phantom, make_phase, mask_entrywise,
    mask_partial_fourier, mask_random, mask_vd_regular, patch_energy_fraction, simulate, MaskKind, MaskSpec,
    SamplingMask, SceneConfig,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn small_scene(mask: MaskSpec, sigma: f64, seed: u64) -> SceneConfig {
    SceneConfig {
        n: 32,
        coils: 3,
        n_ellipses: 4,
        coil_support: 7,
        phase_support: 7,
        mask,
        sigma,
        seed,
    }
}

#[test]
fn phantom_is_piecewise_constant_and_seeded() {
    let a = make_phantom(64, 5, 3).unwrap();
    assert_eq!(a.shape(), &[64, 64]);
    assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(gradient_support_fraction(&a) < 0.2);
    assert_eq!(a, make_phantom(64, 5, 3).unwrap());
    assert_ne!(a, make_phantom(64, 5, 4).unwrap());
    // the border of the field of view is background
    assert!(a.data()[..64].iter().all(|&v| v == 0.0));
}

#[test]
fn coil_maps_are_normalised_with_compact_raw_spectra() {
    let m = make_coil_maps(64, 4, 11, 2).unwrap();
    for i in 0..64 * 64 {
        let s: f64 = (0..4).map(|p| m.maps.plane(p)[i].norm_sqr()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
    let inside = patch_energy_fraction(&m.raw, 11).unwrap();
    assert!((1.0 - inside).abs() < 1e-12, "raw spectra leak {}", 1.0 - inside);
    assert!((0.0..0.05).contains(&m.leakage), "leakage {}", m.leakage);
    let single = make_coil_maps(32, 1, 7, 0).unwrap();
    for v in single.maps.data() {
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn phase_is_smooth_and_compact() {
    let p = make_phase(64, 11, 5).unwrap();
    assert!(p.phi.is_finite());
    let unit = ComplexTensor::new(
        vec![64, 64],
        p.phi.data().iter().map(|&f| Complex64::from_polar(1.0, 2.0 * f)).collect(),
    )
    .unwrap();
    assert!(patch_energy_fraction(&unit, 15).unwrap() >= 0.99);
    assert!(p.residual >= 0.0 && p.residual < 0.01);
    // not a binary phase
    let distinct = p.phi.data().iter().filter(|v| v.abs() > 1e-3).count();
    assert!(distinct > 64 * 64 / 2);
}

#[test]
fn random_masks_keep_acs_and_budget() {
    for (r, want) in [(2.0, 32), (3.0, 21), (4.0, 16), (5.0, 13)] {
        let m = mask_random(64, r, 8, 7).unwrap();
        assert_eq!(m.omega.len(), want, "R = {r}");
        assert!((28..36).all(|l| m.omega.contains(&l)));
        assert_eq!(m.sampled_entries(), want * 64);
        assert_eq!(m.kind, MaskKind::Random);
    }
    assert_ne!(mask_random(64, 3.0, 8, 1).unwrap(), mask_random(64, 3.0, 8, 2).unwrap());
}

#[test]
fn vd_regular_is_deterministic_and_even() {
    let m = mask_vd_regular(64, 4.0, 8).unwrap();
    assert_eq!(m, mask_vd_regular(64, 4.0, 8).unwrap());
    let outside: Vec<usize> = m.omega.iter().copied().filter(|l| !(28..36).contains(l)).collect();
    let gaps: Vec<usize> = outside.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(gaps.iter().max().unwrap() - gaps.iter().min().unwrap() <= 8 + 1);
}

#[test]
fn partial_fourier_covers_one_side() {
    let m = mask_partial_fourier(64, 9.0 / 16.0, 8, None).unwrap();
    assert_eq!(m.omega.len(), 36);
    assert!((m.density() - 36.0 / 64.0).abs() < 1e-15);
    assert!(mask_partial_fourier(64, 0.5, 8, None).is_err());
}

#[test]
fn entrywise_mask_density() {
    let m = mask_entrywise(32, 0.8, 1).unwrap();
    assert_eq!(m.sampled_entries(), 819);
    assert_eq!(mask_entrywise(32, 0.0, 1).unwrap().sampled_entries(), 0);
    assert_eq!(mask_entrywise(32, 1.0, 1).unwrap().sampled_entries(), 1024);
    assert!(mask_entrywise(32, 1.5, 1).is_err());
}

#[test]
fn stored_mask_round_trip() {
    let m = mask_random(32, 3.0, 4, 9).unwrap();
    let back = SamplingMask::from_stored(m.kind, 32, m.acs, m.r, m.pattern().to_vec()).unwrap();
    assert_eq!(back, m);
    let mut partial = m.pattern().to_vec();
    let first_unsampled = (0..32).find(|l| !m.omega.contains(l)).unwrap();
    partial[first_unsampled * 32] = true;
    assert!(SamplingMask::from_stored(m.kind, 32, m.acs, m.r, partial).is_err());
}

#[test]
fn scene_obeys_forward_model() {
    let s = simulate(&small_scene(MaskSpec::Random { r: 3.0, acs: 4 }, 0.0, 1)).unwrap();
    let coil_images = to_image(&s.kspace_full).unwrap();
    for p in 0..3 {
        let want: Vec<Complex64> = s.csm.plane(p).iter().zip(s.z_true.data()).map(|(c, z)| c * z).collect();
        assert!(max_abs(coil_images.plane(p), &want) < 1e-12);
    }
    for (z, m) in s.z_true.data().iter().zip(s.magnitude.data()) {
        assert!((z.norm() - m).abs() < 1e-12);
    }
    // noiseless measurements carry the full k-space bit for bit on the mask
    for p in 0..3 {
        for ((y, k), &m) in s.y.plane(p).iter().zip(s.kspace_full.plane(p)).zip(s.mask.pattern()) {
            if m {
                assert_eq!(y.re.to_bits(), k.re.to_bits());
                assert_eq!(y.im.to_bits(), k.im.to_bits());
            } else {
                assert_eq!(*y, Complex64::new(0.0, 0.0));
            }
        }
    }
}

#[test]
fn noise_is_masked_with_the_requested_spread() {
    let sigma = 0.05;
    let s = simulate(&small_scene(MaskSpec::Random { r: 2.0, acs: 4 }, sigma, 2)).unwrap();
    let mut samples = Vec::new();
    for p in 0..3 {
        for (v, &m) in s.noise.plane(p).iter().zip(s.mask.pattern()) {
            if m {
                samples.push(v.re);
                samples.push(v.im);
            } else {
                assert_eq!(*v, Complex64::new(0.0, 0.0));
            }
        }
    }
    let var = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
    assert!((var.sqrt() / sigma - 1.0).abs() < 0.05, "std {}", var.sqrt());
    let diff = s.y.sub(&s.mask.apply(&s.kspace_full).unwrap()).unwrap();
    assert!(max_abs(diff.data(), s.noise.data()) < 1e-15);
}

#[test]
fn scene_is_reproducible() {
    let cfg = small_scene(MaskSpec::VdRegular { r: 4.0, acs: 4 }, 0.01, 3);
    let (a, b) = (simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
    assert_eq!(a.y, b.y);
    assert_eq!(a.csm, b.csm);
    assert_eq!(a.noise, b.noise);
}

#[test]
fn full_mask_zero_filled_is_reference() {
    let s = simulate(&small_scene(MaskSpec::Entrywise { density: 1.0 }, 0.0, 4)).unwrap();
    assert_eq!(s.zero_filled_image().unwrap(), s.reference_image().unwrap());
    // with normalised coils the reference is the phantom magnitude
    let r = s.reference_image().unwrap();
    for (a, b) in r.data().iter().zip(s.magnitude.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn conjugate_completion_is_exact_for_real_images() {
    // single unit coil, zero phase: k-space is Hermitian, so the mirrored
    // half recovers everything the mirror of the mask covers
    let n = 32;
    let mag = make_phantom(n, 4, 5).unwrap();
    let csm = ComplexTensor::new(vec![1, n, n], vec![Complex64::new(1.0, 0.0); n * n]).unwrap();
    let phi = RealTensor::zeros(&[n, n]);
    let mask = mask_partial_fourier(n, 9.0 / 16.0, 4, None).unwrap();
    let s = assemble(&mag, &csm, &phi, 0.0, &mask, 0).unwrap();
    let filled = s.conjugate_completion().unwrap();
    assert!(max_abs(filled.data(), s.kspace_full.data()) < 1e-12);
    let img = s.conjugate_completion_image().unwrap();
    let r = s.reference_image().unwrap();
    assert!(img.data().iter().zip(r.data()).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn assemble_rejects_mismatched_inputs() {
    let mag = make_phantom(16, 2, 0).unwrap();
    let csm = ComplexTensor::zeros(&[2, 8, 8]);
    let mask = mask_random(16, 2.0, 2, 0).unwrap();
    assert!(assemble(&mag, &csm, &RealTensor::zeros(&[16, 16]), 0.0, &mask, 0).is_err());
    let csm = ComplexTensor::zeros(&[2, 16, 16]);
    assert!(assemble(&mag, &csm, &RealTensor::zeros(&[16, 16]), -1.0, &mask, 0).is_err());
}

#[test]
fn centred_kspace_of_centred_object_is_smooth() {
    // no checkerboard: neighbouring low frequencies of a centred blob agree in sign
    let n = 32;
    let mag = make_phantom(n, 1, 0).unwrap();
    let k = to_kspace(&ComplexTensor::from_real(&mag)).unwrap();
    let c = n / 2;
    assert!(k.data()[c * n + c].re > 0.0);
    assert!(k.data()[c * n + c + 1].re > 0.0);
    assert!(k.data()[(c + 1) * n + c].re > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn random_mask_properties(seed in 0u64..1000, r in 1.5f64..6.0, acs in 1usize..8) {
        let n = 64;
        if let Ok(m) = mask_random(n, r, acs, seed) {
            let budget = ((n as f64 / r).round() as usize).max(acs);
            prop_assert_eq!(m.omega.len(), budget);
            let start = n / 2 - acs / 2;
            prop_assert!((start..start + acs).all(|l| m.omega.contains(&l)));
            prop_assert!(m.omega.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn mask_apply_is_projection(seed in 0u64..1000, density in 0.0f64..1.0) {
        let m = mask_entrywise(8, density, seed).unwrap();
        let x = common::rand_complex(&[2, 8, 8], &mut common::rng(seed));
        let once = m.apply(&x).unwrap();
        prop_assert_eq!(m.apply(&once).unwrap(), once.clone());
        for p in 0..2 {
            for ((o, v), &s) in once.plane(p).iter().zip(x.plane(p)).zip(m.pattern()) {
                prop_assert_eq!(*o, if s { *v } else { Complex64::new(0.0, 0.0) });
            }
        }
    }
}
