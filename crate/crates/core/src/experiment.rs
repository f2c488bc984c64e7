//! File-based experiment commands: every command reads its inputs from and
//! writes its artifacts to disk, together with the resolved configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::autodiff::RealTensor;
use crate::config::ExperimentConfig;
use crate::error::{KunnError, Result};
use crate::kten::{read_kten, write_atomic, write_complex, write_real};
use crate::kunn::{reconstruct, train_with_progress, Ablation, Reconstruction, TrainedGenerator};
use crate::metrics::QualityScores;
use crate::phantom::{simulate, AcquisitionScene, MaskKind, SamplingMask};
use crate::theory::{run_theory, TheoremTrial, TheoryReport};

pub const CONFIG_FILE: &str = "config.txt";
pub const SCENE_META: &str = "scene.txt";
pub const LOSS_CSV: &str = "loss_history.csv";
pub const SCORES_CSV: &str = "scores.csv";
pub const RECON_KSPACE: &str = "kspace_recon.kten";
pub const RECON_IMAGE: &str = "image_recon.kten";
pub const REFERENCE_IMAGE: &str = "reference.kten";

fn write_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    write_atomic(&dir.join(CONFIG_FILE), cfg.to_text().as_bytes())
}

fn scores_table(rows: &[(String, QualityScores)]) -> String {
    let mut s = format!("{}\n", QualityScores::CSV_HEADER);
    for (name, q) in rows {
        writeln!(s, "{}", q.csv_row(name)).expect("writing to a String");
    }
    s
}

/// Writes the scene as KTEN files plus a `scene.txt` with the mask
/// metadata needed to read it back.
pub fn write_scene(scene: &AcquisitionScene, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_real(&dir.join("magnitude.kten"), &scene.magnitude)?;
    write_complex(&dir.join("z_true.kten"), &scene.z_true)?;
    write_complex(&dir.join("csm.kten"), &scene.csm)?;
    write_real(&dir.join("phase.kten"), &scene.phase_map)?;
    write_complex(&dir.join("kspace_full.kten"), &scene.kspace_full)?;
    let n = scene.n();
    write_real(&dir.join("mask.kten"), &RealTensor::new(vec![n, n], scene.mask.as_f64())?)?;
    write_complex(&dir.join("noise.kten"), &scene.noise)?;
    write_complex(&dir.join("y.kten"), &scene.y)?;
    write_real(&dir.join(REFERENCE_IMAGE), &scene.reference_image()?)?;
    write_real(&dir.join("zero_filled.kten"), &scene.zero_filled_image()?)?;
    let meta = format!(
        "n={n}\ncoils={}\nmask={}\nr={}\nacs={}\nsampled_entries={}\nsigma={}\nseed={}\n",
        scene.coils(),
        scene.mask.kind.name(),
        scene.mask.r,
        scene.mask.acs,
        scene.mask.sampled_entries(),
        scene.noise_sigma,
        scene.seed
    );
    write_atomic(&dir.join(SCENE_META), meta.as_bytes())
}

/// Inverse of [`write_scene`].
pub fn read_scene(dir: &Path) -> Result<AcquisitionScene> {
    let meta_path = dir.join(SCENE_META);
    let meta = std::fs::read_to_string(&meta_path)
        .map_err(|e| KunnError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", meta_path.display()))))?;
    let get = |key: &str| -> Result<&str> {
        meta.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| KunnError::Format(format!("{SCENE_META} lacks '{key}'")))
    };
    let num = |key: &str| -> Result<f64> {
        get(key)?
            .parse()
            .map_err(|_| KunnError::Format(format!("{SCENE_META}: bad value for '{key}'")))
    };
    let n = num("n")? as usize;
    let kind = MaskKind::parse(get("mask")?)?;
    let pattern: Vec<bool> = read_kten(&dir.join("mask.kten"))?
        .into_real()?
        .data()
        .iter()
        .map(|&v| v != 0.0)
        .collect();
    let mask = SamplingMask::from_stored(kind, n, num("acs")? as usize, num("r")?, pattern)?;
    let scene = AcquisitionScene {
        magnitude: read_kten(&dir.join("magnitude.kten"))?.into_real()?,
        z_true: read_kten(&dir.join("z_true.kten"))?.into_complex()?,
        csm: read_kten(&dir.join("csm.kten"))?.into_complex()?,
        phase_map: read_kten(&dir.join("phase.kten"))?.into_real()?,
        kspace_full: read_kten(&dir.join("kspace_full.kten"))?.into_complex()?,
        mask,
        noise_sigma: num("sigma")?,
        noise: read_kten(&dir.join("noise.kten"))?.into_complex()?,
        y: read_kten(&dir.join("y.kten"))?.into_complex()?,
        seed: num("seed")? as u64,
    };
    let full = [scene.coils(), n, n];
    if scene.y.shape() != full || scene.kspace_full.shape() != full || scene.noise.shape() != full {
        return Err(KunnError::Format(format!("scene arrays in {} disagree in shape", dir.display())));
    }
    Ok(scene)
}

/// Simulates the configured scene into `cfg.out`.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<AcquisitionScene> {
    cfg.validate()?;
    let scene = simulate(&cfg.scene_config())?;
    write_scene(&scene, &cfg.out)?;
    write_config(cfg, &cfg.out)?;
    Ok(scene)
}

#[derive(Clone, Debug)]
pub struct ReconOutcome {
    pub trained: TrainedGenerator,
    pub recon: Reconstruction,
    pub scores: QualityScores,
    pub zero_filled: QualityScores,
}

/// Trains the configured generator on `scene` and scores the result and
/// the zero-filled baseline against the fully sampled reference.
pub fn run_reconstruction(
    cfg: &ExperimentConfig,
    scene: &AcquisitionScene,
    progress: impl FnMut(usize, f64),
) -> Result<ReconOutcome> {
    let g = cfg.generator()?;
    let trained = train_with_progress(&g, scene, cfg.iters, cfg.lr, progress)?;
    let recon = reconstruct(&trained, scene, cfg.dc)?;
    let reference = scene.reference_image()?;
    Ok(ReconOutcome {
        scores: QualityScores::compute(&recon.image, &reference)?,
        zero_filled: QualityScores::compute(&scene.zero_filled_image()?, &reference)?,
        trained,
        recon,
    })
}

fn write_recon(outcome: &ReconOutcome, dir: &Path) -> Result<()> {
    write_complex(&dir.join(RECON_KSPACE), &outcome.recon.kspace)?;
    write_real(&dir.join(RECON_IMAGE), &outcome.recon.image)?;
    let mut csv = Vec::new();
    outcome.trained.write_loss_csv(&mut csv)?;
    write_atomic(&dir.join(LOSS_CSV), &csv)?;
    let rows = [
        ("reconstruction".to_string(), outcome.scores),
        ("zero_filled".to_string(), outcome.zero_filled),
    ];
    write_atomic(&dir.join(SCORES_CSV), scores_table(&rows).as_bytes())
}

/// Reconstructs the scene stored in `scene_dir` into `cfg.out`. Scene
/// geometry comes from the files; the config supplies the model.
pub fn cmd_reconstruct(
    cfg: &ExperimentConfig,
    scene_dir: &Path,
    progress: impl FnMut(usize, f64),
) -> Result<ReconOutcome> {
    let scene = read_scene(scene_dir)?;
    let mut cfg = cfg.clone();
    cfg.n = scene.n();
    cfg.dec_z.size = cfg.n;
    cfg.coils = scene.coils();
    let outcome = run_reconstruction(&cfg, &scene, progress)?;
    write_recon(&outcome, &cfg.out)?;
    write_config(&cfg, &cfg.out)?;
    Ok(outcome)
}

/// Scores a reconstructed image against a reference image, writing
/// `scores.csv` into `out` when given.
pub fn cmd_evaluate(recon: &Path, reference: &Path, out: Option<&Path>) -> Result<QualityScores> {
    let x = read_kten(recon)?.into_real()?;
    let r = read_kten(reference)?.into_real()?;
    let q = QualityScores::compute(&x, &r)?;
    if let Some(dir) = out {
        let name = recon.file_stem().map_or("reconstruction".into(), |s| s.to_string_lossy().into_owned());
        write_atomic(&dir.join(SCORES_CSV), scores_table(&[(name, q)]).as_bytes())?;
    }
    Ok(q)
}

/// Runs the bound experiments and writes the report and per-trial CSV.
pub fn cmd_verify(
    cfg: &ExperimentConfig,
    progress: impl Fn(&TheoremTrial) + Sync,
) -> Result<(TheoryReport, Vec<TheoremTrial>)> {
    let tc = cfg.theory_config()?;
    let (report, trials) = run_theory(&tc, progress)?;
    report.write(&trials, &cfg.out)?;
    write_config(cfg, &cfg.out)?;
    Ok((report, trials))
}

/// Reconstructs one scene with the configured ablation variant and with the
/// full generator, next to the zero-filled baseline. Writes each
/// reconstruction into a subdirectory and a three-row `scores.csv`.
pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<Vec<(String, QualityScores)>> {
    if cfg.ablation == Ablation::Full {
        return Err(KunnError::Config("ablate needs ablation=sensitivity_only or ablation=phase_only".into()));
    }
    cfg.validate()?;
    let scene = simulate(&cfg.scene_config())?;
    write_scene(&scene, &cfg.out.join("scene"))?;
    let full_cfg = ExperimentConfig {
        ablation: Ablation::Full,
        ..cfg.clone()
    };
    let (variant, full) = rayon::join(
        || run_reconstruction(cfg, &scene, |_, _| {}),
        || run_reconstruction(&full_cfg, &scene, |_, _| {}),
    );
    let (variant, full) = (variant?, full?);
    let dirs: [(PathBuf, &ReconOutcome); 2] = [
        (cfg.out.join(cfg.ablation.name()), &variant),
        (cfg.out.join("full"), &full),
    ];
    for (dir, outcome) in &dirs {
        write_recon(outcome, dir)?;
    }
    let rows = vec![
        ("zero_filled".to_string(), variant.zero_filled),
        (cfg.ablation.name().to_string(), variant.scores),
        ("full".to_string(), full.scores),
    ];
    write_atomic(&cfg.out.join(SCORES_CSV), scores_table(&rows).as_bytes())?;
    write_config(cfg, &cfg.out)?;
    Ok(rows)
}
