use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kunn_core::config::ExperimentConfig;
use kunn_core::experiment::{cmd_ablate, cmd_evaluate, cmd_reconstruct, cmd_simulate, cmd_verify};
use kunn_core::metrics::QualityScores;
use kunn_core::KunnError;

/// Untrained-generator k-space interpolation experiments.
#[derive(Parser)]
#[command(name = "kunn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a phantom acquisition and write it to --out.
    Simulate(ConfigArgs),
    /// Fit the generator to a simulated scene and write the reconstruction.
    Reconstruct {
        /// Directory written by `simulate`.
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a reconstructed image against a reference image.
    Evaluate {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Directory for scores.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the recovery bounds on fitted generators.
    Verify(ConfigArgs),
    /// Compare an ablated generator with the full one and zero filling.
    Ablate(ConfigArgs),
}

/// Defaults, then `--config`, then `--set`, then the named flags.
#[derive(Args, Default)]
struct ConfigArgs {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any configuration key, as KEY=VALUE (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    coils: Option<String>,
    /// random, vd_regular, partial_fourier or entrywise.
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    acs: Option<String>,
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// full, sensitivity_only or phase_only.
    #[arg(long)]
    ablation: Option<String>,
    /// Re-insert measured samples (true/false).
    #[arg(long)]
    dc: Option<String>,
    /// uniform or radial.
    #[arg(long)]
    weighting: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, KunnError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| KunnError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k, v)?;
        }
        let flags = [
            ("n", &self.n),
            ("coils", &self.coils),
            ("mask", &self.mask),
            ("r", &self.r),
            ("acs", &self.acs),
            ("sigma", &self.sigma),
            ("iters", &self.iters),
            ("lr", &self.lr),
            ("seed", &self.seed),
            ("ablation", &self.ablation),
            ("dc", &self.dc),
            ("weighting", &self.weighting),
            ("out", &self.out),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_scores(rows: &[(String, QualityScores)]) {
    println!("{}", QualityScores::CSV_HEADER);
    for (name, q) in rows {
        println!("{}", q.csv_row(name));
    }
}

fn progress(iters: usize) -> impl FnMut(usize, f64) {
    let every = (iters / 10).max(1);
    move |i, loss| {
        if i % every == 0 || i + 1 == iters {
            eprintln!("iter {i:>5}  loss {loss:.6e}");
        }
    }
}

fn run(cli: Cli) -> Result<(), KunnError> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.resolve()?;
            let scene = cmd_simulate(&cfg)?;
            eprintln!(
                "wrote scene to {} ({} of {} entries sampled per coil)",
                cfg.out.display(),
                scene.mask.sampled_entries(),
                scene.n() * scene.n()
            );
        }
        Command::Reconstruct { scene, cfg } => {
            let cfg = cfg.resolve()?;
            let out = cmd_reconstruct(&cfg, &scene, progress(cfg.iters))?;
            print_scores(&[
                ("reconstruction".into(), out.scores),
                ("zero_filled".into(), out.zero_filled),
            ]);
        }
        Command::Evaluate { recon, reference, out } => {
            let q = cmd_evaluate(&recon, &reference, out.as_deref())?;
            let name = recon.file_stem().map_or("reconstruction".into(), |s| s.to_string_lossy().into_owned());
            print_scores(&[(name, q)]);
        }
        Command::Verify(args) => {
            let cfg = args.resolve()?;
            let (report, _) = cmd_verify(&cfg, |t| eprintln!("trial seed {} done", t.seed))?;
            print!("{}", report.to_key_value());
        }
        Command::Ablate(args) => {
            let cfg = args.resolve()?;
            print_scores(&cmd_ablate(&cfg)?);
        }
    }
    Ok(())
}

fn configure_threads() -> Result<(), KunnError> {
    if let Ok(v) = std::env::var("KUNN_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| KunnError::Config(format!("KUNN_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| KunnError::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
