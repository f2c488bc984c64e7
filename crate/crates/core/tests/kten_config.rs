mod common;

use kunn_core::autodiff::RealTensor;
use kunn_core::config::ExperimentConfig;
use kunn_core::experiment::{read_scene, write_scene};
use kunn_core::kten::{read_kten, write_complex, write_real, Kten};
use kunn_core::phantom::{simulate, MaskSpec, SceneConfig};

#[test]
fn real_tensor_round_trips_with_the_documented_header() {
    let t = RealTensor::new(vec![2, 3], vec![1.0, -2.5, 0.0, f64::MIN_POSITIVE, 1e300, -0.0]).unwrap();
    let bytes = Kten::Real(t.clone()).to_bytes().unwrap();
    assert_eq!(&bytes[..7], b"KTEN\x01\x00\x02");
    assert_eq!(&bytes[7..15], &[2, 0, 0, 0, 3, 0, 0, 0]);
    assert_eq!(bytes.len(), 15 + 6 * 8);
    assert_eq!(&bytes[15..23], &1.0f64.to_le_bytes());
    let back = Kten::from_bytes(&bytes).unwrap().into_real().unwrap();
    assert_eq!(back.shape(), t.shape());
    for (a, b) in back.data().iter().zip(t.data()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn complex_tensor_round_trips_through_a_file() {
    let x = common::rand_complex(&[3, 4, 5], &mut common::rng(0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.kten");
    write_complex(&path, &x).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes[5], 1);
    assert_eq!(bytes.len(), 7 + 3 * 4 + 60 * 16);
    // re then im
    assert_eq!(&bytes[19..27], &x.data()[0].re.to_le_bytes());
    assert_eq!(&bytes[27..35], &x.data()[0].im.to_le_bytes());
    let back = read_kten(&path).unwrap();
    assert_eq!(back.shape(), &[3, 4, 5]);
    assert_eq!(back.clone().into_complex().unwrap(), x);
    assert!(back.into_real().is_err());
    // no temporary files left behind
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn malformed_files_are_rejected() {
    let good = Kten::Real(RealTensor::zeros(&[2, 2])).to_bytes().unwrap();
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(Kten::from_bytes(&bad_magic).is_err());
    let mut bad_version = good.clone();
    bad_version[4] = 2;
    assert!(Kten::from_bytes(&bad_version).is_err());
    let mut bad_dtype = good.clone();
    bad_dtype[5] = 7;
    assert!(Kten::from_bytes(&bad_dtype).is_err());
    assert!(Kten::from_bytes(&good[..good.len() - 1]).is_err());
    assert!(Kten::from_bytes(&good[..5]).is_err());
    let mut long = good.clone();
    long.extend_from_slice(&[0; 8]);
    assert!(Kten::from_bytes(&long).is_err());
    assert!(read_kten(std::path::Path::new("/nonexistent/x.kten")).is_err());
}

#[test]
fn scene_directory_round_trip() {
    let s = simulate(&SceneConfig {
        n: 16,
        coils: 2,
        coil_support: 5,
        phase_support: 5,
        mask: MaskSpec::VdRegular { r: 2.0, acs: 4 },
        sigma: 0.02,
        seed: 3,
        ..SceneConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_scene(&s, dir.path()).unwrap();
    let back = read_scene(dir.path()).unwrap();
    assert_eq!(back.y, s.y);
    assert_eq!(back.csm, s.csm);
    assert_eq!(back.kspace_full, s.kspace_full);
    assert_eq!(back.noise, s.noise);
    assert_eq!(back.mask, s.mask);
    assert_eq!(back.magnitude, s.magnitude);
    assert_eq!(back.noise_sigma, s.noise_sigma);
    assert_eq!(back.seed, s.seed);
    let reference = read_kten(&dir.path().join("reference.kten")).unwrap().into_real().unwrap();
    assert_eq!(reference, s.reference_image().unwrap());
}

#[test]
fn missing_scene_metadata_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    write_real(&dir.path().join("mask.kten"), &RealTensor::zeros(&[4, 4])).unwrap();
    assert!(read_scene(dir.path()).is_err());
}

#[test]
fn config_text_round_trips() {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("n", "32"),
        ("mask", "vd_regular"),
        ("r", "4"),
        ("sigma", "0.01"),
        ("dec_csm", "3,16,7"),
        ("lr", "0.0001"),
        ("model_seed", "9"),
        ("weighting", "radial"),
        ("dc", "false"),
        ("ablation", "sensitivity_only"),
        ("out", "runs/a"),
    ] {
        cfg.set(k, v).unwrap();
    }
    assert_eq!(cfg.dec_z.size, 32);
    let text = cfg.to_text();
    let back = ExperimentConfig::parse(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_text(), text);
    assert_eq!(ExperimentConfig::parse(&ExperimentConfig::default().to_text()).unwrap(), ExperimentConfig::default());
}

#[test]
fn every_key_is_written_once() {
    let text = ExperimentConfig::default().to_text();
    let keys: Vec<&str> = text.lines().map(|l| l.split_once('=').unwrap().0).collect();
    assert_eq!(keys, ExperimentConfig::KEYS);
}

#[test]
fn config_errors() {
    assert!(ExperimentConfig::parse("bogus=1").is_err());
    assert!(ExperimentConfig::parse("n").is_err());
    assert!(ExperimentConfig::parse("n=abc").is_err());
    assert!(ExperimentConfig::parse("dc=maybe").is_err());
    assert!(ExperimentConfig::parse("dec_z=1,2").is_err());
    assert!(ExperimentConfig::parse("mask=spiral").is_err());
    let ok = ExperimentConfig::parse("# comment\n\n  n = 32  \n").unwrap();
    assert_eq!(ok.n, 32);
    let mut cfg = ExperimentConfig::default();
    cfg.trials = 0;
    assert!(cfg.validate().is_ok());
    assert!(cfg.theory_config().is_err());
    cfg.trials = 1;
    cfg.coils = 1;
    cfg.ablation = kunn_core::kunn::Ablation::SensitivityOnly;
    assert!(cfg.validate().is_err());
}

#[test]
fn config_file_loading() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.txt");
    std::fs::write(&path, "coils=2\niters=5\n").unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!((cfg.coils, cfg.iters), (2, 5));
    assert!(ExperimentConfig::load(&dir.path().join("missing.txt")).is_err());
}
