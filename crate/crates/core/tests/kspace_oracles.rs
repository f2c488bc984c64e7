mod common;

use std::f64::consts::PI;

use common::{direct_conv2, direct_dft2, max_abs, rand_complex, rng};
use kunn_core::kspace::{
    circ_conv2, circ_conv2_with_origin, conj_reflect, fft1, fft2, fftshift2, hankel_build, ifft2, ifftshift2,
    numeric_rank, pad_kernel, ssos, svd_small, to_image, to_kspace, CMatrix, ComplexTensor, DEFAULT_RANK_TOL,
};
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn fft_matches_direct_dft() {
    let (dft, parseval, round) = common::fft_errors(16, 5, 1);
    assert!(dft < 1e-10, "dft {dft:e}");
    assert!(parseval < 1e-10, "parseval {parseval:e}");
    assert!(round < 1e-10, "round trip {round:e}");
}

#[test]
fn fft_rectangular_and_batched() {
    let mut r = rng(2);
    let x = rand_complex(&[3, 4, 8], &mut r);
    let k = fft2(&x).unwrap();
    for (p, plane) in x.unstack().iter().enumerate() {
        let direct = direct_dft2(plane, -1.0);
        assert!(max_abs(k.plane(p), direct.data()) < 1e-12);
    }
}

#[test]
fn fft1_matches_direct_sum() {
    let mut r = rng(3);
    let x = rand_complex(&[32], &mut r);
    let out = fft1(x.data()).unwrap();
    let n = 32.0;
    for (k, v) in out.iter().enumerate() {
        let d: Complex64 = x
            .data()
            .iter()
            .enumerate()
            .map(|(j, xj)| xj * Complex64::from_polar(1.0, -2.0 * PI * (k * j) as f64 / n))
            .sum();
        assert!((v - d / n.sqrt()).norm() < 1e-12);
    }
}

#[test]
fn non_power_of_two_rejected() {
    assert!(fft2(&ComplexTensor::zeros(&[6, 8])).is_err());
    assert!(fft2(&ComplexTensor::zeros(&[8, 12])).is_err());
}

#[test]
fn centred_transform_matches_shifted_dft() {
    // X[k] = (1/N) sum_n x[n] exp(-2 pi i (k - N/2)(n - N/2) / N)
    let n = 8usize;
    let mut r = rng(4);
    let x = rand_complex(&[n, n], &mut r);
    let k = to_kspace(&x).unwrap();
    let c = (n / 2) as f64;
    for k1 in 0..n {
        for k2 in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..n {
                for b in 0..n {
                    let ang = -2.0 * PI
                        * ((k1 as f64 - c) * (a as f64 - c) + (k2 as f64 - c) * (b as f64 - c))
                        / n as f64;
                    acc += x.data()[a * n + b] * Complex64::from_polar(1.0, ang);
                }
            }
            acc /= n as f64;
            assert!((acc - k.data()[k1 * n + k2]).norm() < 1e-12);
        }
    }
    assert!(max_abs(to_image(&k).unwrap().data(), x.data()) < 1e-12);
}

#[test]
fn centred_delta_has_flat_spectrum() {
    let n = 16;
    let mut x = ComplexTensor::zeros(&[n, n]);
    x.data_mut()[(n / 2) * n + n / 2] = Complex64::new(1.0, 0.0);
    let k = to_kspace(&x).unwrap();
    for v in k.data() {
        assert!((v - Complex64::new(1.0 / n as f64, 0.0)).norm() < 1e-14);
    }
}

#[test]
fn shifts_are_inverse() {
    let mut r = rng(5);
    let x = rand_complex(&[2, 8, 16], &mut r);
    assert_eq!(ifftshift2(&fftshift2(&x).unwrap()).unwrap(), x);
    assert_eq!(fftshift2(&ifftshift2(&x).unwrap()).unwrap(), x);
}

#[test]
fn conj_reflect_identity() {
    let err = common::conj_reflect_error(16, 50, 6);
    assert!(err < 1e-10, "{err:e}");
}

#[test]
fn conj_reflect_identity_in_centred_layout() {
    let mut r = rng(7);
    for _ in 0..10 {
        let x = rand_complex(&[16, 16], &mut r);
        let lhs = to_kspace(&x.conj()).unwrap();
        let rhs = conj_reflect(&to_kspace(&x).unwrap()).unwrap();
        assert!(max_abs(lhs.data(), rhs.data()) < 1e-10);
    }
}

#[test]
fn circular_conv_matches_definition_and_fft_route() {
    let mut r = rng(8);
    for (kh, kw) in [(3, 3), (5, 2), (1, 1), (8, 8)] {
        let x = rand_complex(&[8, 8], &mut r);
        let h = rand_complex(&[kh, kw], &mut r);
        let origin = (kh / 2, kw / 2);
        let lib = circ_conv2(&x, &h).unwrap();
        let direct = direct_conv2(&x, &h, origin);
        assert!(max_abs(lib.data(), direct.data()) < 1e-12);
        // convolution theorem: x (*) h = sqrt(N1 N2) ifft2(fft2 x . fft2 pad(h))
        let pad = pad_kernel(&h, 8, 8, origin).unwrap();
        let prod = fft2(&x).unwrap().mul(&fft2(&pad).unwrap()).unwrap();
        let via_fft = ifft2(&prod).unwrap().scale(8.0);
        assert!(max_abs(via_fft.data(), direct.data()) < 1e-12);
    }
}

#[test]
fn compact_spectrum_acts_as_image_product() {
    // centred k-space of c * z is the centred convolution of the two spectra
    let n = 16;
    let mut r = rng(9);
    let z = rand_complex(&[n, n], &mut r);
    let spec = rand_complex(&[5, 5], &mut r);
    let mut full = ComplexTensor::zeros(&[n, n]);
    for a in 0..5 {
        for b in 0..5 {
            full.data_mut()[(n / 2 - 2 + a) * n + n / 2 - 2 + b] = spec.data()[a * 5 + b];
        }
    }
    let c = to_image(&full).unwrap();
    let lhs = to_kspace(&c.mul(&z).unwrap()).unwrap();
    let rhs = circ_conv2(&to_kspace(&z).unwrap(), &spec).unwrap().scale(1.0 / n as f64);
    assert!(max_abs(lhs.data(), rhs.data()) < 1e-12);
}

#[test]
fn hankel_identity_1d() {
    let err = common::hankel_conv_error_1d(32, 5, 100, 10);
    assert!(err < 1e-10, "{err:e}");
}

#[test]
fn hankel_identity_2d() {
    let err = common::hankel_conv_error_2d(8, 3, 100, 11);
    assert!(err < 1e-10, "{err:e}");
}

#[test]
fn hankel_entries_follow_definition() {
    let mut r = rng(12);
    let x = rand_complex(&[4, 8], &mut r);
    let h = hankel_build(&x, 3).unwrap();
    assert_eq!((h.matrix().rows(), h.matrix().cols()), (32, 9));
    for i1 in 0..4 {
        for i2 in 0..8 {
            for j1 in 0..3 {
                for j2 in 0..3 {
                    let want = x.data()[((i1 + j1) % 4) * 8 + (i2 + j2) % 8];
                    assert_eq!(h.matrix().get(i1 * 8 + i2, j1 + 3 * j2), want);
                }
            }
        }
    }
    assert_eq!(h.conv_origin(), 2);
}

#[test]
fn hankel_of_exponential_sum_has_matching_rank() {
    let n = 32;
    for r_true in 1..=4 {
        let freqs = [3.0, 7.0, 11.0, 20.0];
        let data = (0..n)
            .map(|t| {
                freqs[..r_true]
                    .iter()
                    .enumerate()
                    .map(|(i, f)| Complex64::from_polar(1.0 + i as f64, 2.0 * PI * f * t as f64 / n as f64))
                    .sum()
            })
            .collect();
        let x = ComplexTensor::new(vec![n], data).unwrap();
        let svd = svd_small(hankel_build(&x, 8).unwrap().matrix()).unwrap();
        assert_eq!(numeric_rank(&svd.sigma, DEFAULT_RANK_TOL), r_true);
    }
}

fn gram_check(a: &CMatrix) {
    let svd = svd_small(a).unwrap();
    let k = a.rows().min(a.cols());
    assert_eq!(svd.sigma.len(), k);
    assert!(svd.sigma.windows(2).all(|w| w[0] >= w[1]));
    assert!(svd.sigma.iter().all(|&s| s >= 0.0));
    let scale = a.frobenius().max(1.0);
    let rec = svd.reconstruct();
    assert!(max_abs(rec.data(), a.data()) < 1e-10 * scale);
    let r = numeric_rank(&svd.sigma, 1e-10);
    // singular vectors belonging to nonzero singular values are orthonormal
    let u_r = CMatrix::from_fn(a.rows(), r, |i, j| svd.u.get(i, j));
    let v_r = CMatrix::from_fn(a.cols(), r, |i, j| svd.v.get(i, j));
    assert!(u_r.orthonormality_error() < 1e-10);
    assert!(v_r.orthonormality_error() < 1e-10);
    // A^H A v = sigma^2 v
    let gram = a.adjoint().matmul(a).unwrap();
    for j in 0..r {
        let v = svd.v.column(j);
        let gv = gram.matvec(&v).unwrap();
        let s2 = svd.sigma[j] * svd.sigma[j];
        let want: Vec<Complex64> = v.iter().map(|c| c * s2).collect();
        assert!(max_abs(&gv, &want) < 1e-9 * scale * scale);
    }
    let energy: f64 = svd.sigma.iter().map(|s| s * s).sum();
    assert!((energy - a.frobenius().powi(2)).abs() < 1e-10 * scale * scale);
}

#[test]
fn svd_oracles() {
    let mut r = rng(13);
    for (m, n) in [(6, 4), (4, 6), (9, 9), (1, 5), (20, 3)] {
        let t = rand_complex(&[m, n], &mut r);
        gram_check(&CMatrix::new(m, n, t.into_data()).unwrap());
    }
}

#[test]
fn svd_rank_deficient() {
    let mut r = rng(14);
    let a = rand_complex(&[12, 2], &mut r);
    let b = rand_complex(&[2, 7], &mut r);
    let am = CMatrix::new(12, 2, a.into_data()).unwrap();
    let bm = CMatrix::new(2, 7, b.into_data()).unwrap();
    let p = am.matmul(&bm).unwrap();
    gram_check(&p);
    let svd = svd_small(&p).unwrap();
    assert_eq!(numeric_rank(&svd.sigma, DEFAULT_RANK_TOL), 2);
    let z = svd_small(&CMatrix::zeros(4, 3)).unwrap();
    assert!(z.sigma.iter().all(|&s| s == 0.0));
}

#[test]
fn svd_two_by_two_closed_form() {
    // [[3, 0], [4, 5]] has singular values sqrt(45) and sqrt(5)
    let c = |v: f64| Complex64::new(v, 0.0);
    let a = CMatrix::new(2, 2, vec![c(3.0), c(0.0), c(4.0), c(5.0)]).unwrap();
    let s = svd_small(&a).unwrap().sigma;
    assert!((s[0] - 45f64.sqrt()).abs() < 1e-13);
    assert!((s[1] - 5f64.sqrt()).abs() < 1e-13);
}

#[test]
fn ssos_combines_coils() {
    let mut r = rng(15);
    let x = rand_complex(&[3, 4, 4], &mut r);
    let s = ssos(&x).unwrap();
    for i in 0..16 {
        let want = (0..3).map(|p| x.plane(p)[i].norm_sqr()).sum::<f64>().sqrt();
        assert!((s.data()[i] - want).abs() < 1e-15);
    }
}

fn complex_strategy(n: usize) -> impl Strategy<Value = ComplexTensor> {
    prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), n * n).prop_map(move |v| {
        ComplexTensor::new(vec![n, n], v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn parseval_and_round_trip(x in complex_strategy(8)) {
        let k = to_kspace(&x).unwrap();
        let e = x.norm_sqr().max(1e-300);
        prop_assert!((k.norm_sqr() - x.norm_sqr()).abs() <= 1e-10 * e);
        prop_assert!(max_abs(to_image(&k).unwrap().data(), x.data()) <= 1e-12 * e.sqrt().max(1.0));
    }

    #[test]
    fn fft_is_linear(x in complex_strategy(4), y in complex_strategy(4), a in -3.0f64..3.0) {
        let lhs = fft2(&x.scale(a).add(&y).unwrap()).unwrap();
        let rhs = fft2(&x).unwrap().scale(a).add(&fft2(&y).unwrap()).unwrap();
        prop_assert!(max_abs(lhs.data(), rhs.data()) < 1e-11);
    }

    #[test]
    fn conj_reflect_involution(x in complex_strategy(8)) {
        prop_assert_eq!(conj_reflect(&conj_reflect(&x).unwrap()).unwrap(), x);
    }

    #[test]
    fn convolution_commutes_with_shift(x in complex_strategy(8), h in complex_strategy(3), s in 0usize..8) {
        // shifting the anchor by one tap shifts the output by one sample
        let a = circ_conv2_with_origin(&x, &h, (1, 1)).unwrap();
        let b = circ_conv2_with_origin(&x, &h, (1 + s % 2, 1)).unwrap();
        let shift = s % 2;
        for r in 0..8 {
            for c in 0..8 {
                let want = a.data()[((r + shift) % 8) * 8 + c];
                prop_assert!((b.data()[r * 8 + c] - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn hankel_rank_within_structure(x in complex_strategy(8), d in 1usize..5) {
        let h = hankel_build(&x, d).unwrap();
        let svd = svd_small(h.matrix()).unwrap();
        prop_assert!(numeric_rank(&svd.sigma, DEFAULT_RANK_TOL) <= (d * d).min(64));
    }
}
