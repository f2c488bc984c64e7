//! `key=value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{KunnError, Result};
use crate::kunn::{Ablation, DecoderConfig, TripledGenerator, Weighting};
use crate::phantom::{MaskKind, MaskSpec, SceneConfig};
use crate::theory::{LatentSearch, TheoryConfig, DEFAULT_BETA};

/// `layers,channels` of a decoder, plus the output side for the compact
/// spectra (the `z` decoder always emits `N x N`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderSpec {
    pub layers: usize,
    pub channels: usize,
    pub size: usize,
}

impl DecoderSpec {
    fn parse(key: &str, v: &str) -> Result<Self> {
        let parts: Vec<&str> = v.split(',').map(str::trim).collect();
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| KunnError::Config(format!("{key}: '{s}' is not a non-negative integer")))
        };
        match parts.as_slice() {
            [l, c, s] => Ok(Self {
                layers: num(l)?,
                channels: num(c)?,
                size: num(s)?,
            }),
            _ => Err(KunnError::Config(format!("{key}: expected layers,channels,size, got '{v}'"))),
        }
    }

    fn fmt(&self) -> String {
        format!("{},{},{}", self.layers, self.channels, self.size)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub coils: usize,
    pub n_ellipses: usize,
    pub coil_support: usize,
    pub phase_support: usize,
    pub mask: MaskKind,
    /// Acceleration; entrywise masks sample a `1/r` fraction of entries.
    pub r: f64,
    pub acs: usize,
    pub pf_fraction: f64,
    /// Optional thinning of a partial-Fourier mask down to `N / pf_r` lines.
    pub pf_r: Option<f64>,
    pub sigma: f64,
    pub dec_z: DecoderSpec,
    pub dec_csm: DecoderSpec,
    pub dec_phase: DecoderSpec,
    pub latent_radius: f64,
    pub iters: usize,
    pub lr: f64,
    /// Scene seed.
    pub seed: u64,
    /// Generator seed; the scene seed when unset.
    pub model_seed: Option<u64>,
    pub weighting: Weighting,
    pub dc: bool,
    pub ablation: Ablation,
    pub out: PathBuf,
    pub trials: usize,
    pub pairs: usize,
    pub hankel_d: usize,
    pub beta: f64,
    pub restarts: usize,
    pub verify_iters: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 64,
            coils: 4,
            n_ellipses: 5,
            coil_support: 11,
            phase_support: 11,
            mask: MaskKind::Random,
            r: 3.0,
            acs: 8,
            pf_fraction: 9.0 / 16.0,
            pf_r: None,
            sigma: 0.0,
            dec_z: DecoderSpec {
                layers: 6,
                channels: 64,
                size: 64,
            },
            dec_csm: DecoderSpec {
                layers: 4,
                channels: 32,
                size: 9,
            },
            dec_phase: DecoderSpec {
                layers: 4,
                channels: 32,
                size: 9,
            },
            latent_radius: 1.0,
            iters: 1000,
            lr: 1e-3,
            seed: 0,
            model_seed: None,
            weighting: Weighting::Uniform,
            dc: true,
            ablation: Ablation::Full,
            out: PathBuf::from("out"),
            trials: 20,
            pairs: 20,
            hankel_d: 4,
            beta: DEFAULT_BETA,
            restarts: 64,
            verify_iters: 200,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| KunnError::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(KunnError::Config(format!("{key}: expected true/false, got '{v}'"))),
    }
}

fn config_err(e: KunnError) -> KunnError {
    match e {
        KunnError::InvalidArgument(m) => KunnError::Config(m),
        other => other,
    }
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "n",
        "coils",
        "n_ellipses",
        "coil_support",
        "phase_support",
        "mask",
        "r",
        "acs",
        "pf_fraction",
        "pf_r",
        "sigma",
        "dec_z",
        "dec_csm",
        "dec_phase",
        "latent_radius",
        "iters",
        "lr",
        "seed",
        "model_seed",
        "weighting",
        "dc",
        "ablation",
        "out",
        "trials",
        "pairs",
        "hankel_d",
        "beta",
        "restarts",
        "verify_iters",
    ];

    /// Sets one key from its text value. Unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "n" => {
                self.n = parse_num(key, v)?;
                self.dec_z.size = self.n;
            }
            "coils" => self.coils = parse_num(key, v)?,
            "n_ellipses" => self.n_ellipses = parse_num(key, v)?,
            "coil_support" => self.coil_support = parse_num(key, v)?,
            "phase_support" => self.phase_support = parse_num(key, v)?,
            "mask" => self.mask = MaskKind::parse(v).map_err(config_err)?,
            "r" => self.r = parse_num(key, v)?,
            "acs" => self.acs = parse_num(key, v)?,
            "pf_fraction" => self.pf_fraction = parse_num(key, v)?,
            "pf_r" => self.pf_r = if v == "none" { None } else { Some(parse_num(key, v)?) },
            "sigma" => self.sigma = parse_num(key, v)?,
            "dec_z" => self.dec_z = DecoderSpec::parse(key, v)?,
            "dec_csm" => self.dec_csm = DecoderSpec::parse(key, v)?,
            "dec_phase" => self.dec_phase = DecoderSpec::parse(key, v)?,
            "latent_radius" => self.latent_radius = parse_num(key, v)?,
            "iters" => self.iters = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "model_seed" => self.model_seed = if v == "none" { None } else { Some(parse_num(key, v)?) },
            "weighting" => {
                self.weighting = match v {
                    "uniform" | "off" | "false" => Weighting::Uniform,
                    "radial" | "on" | "true" => Weighting::Radial,
                    _ => return Err(KunnError::Config(format!("weighting: expected uniform or radial, got '{v}'"))),
                }
            }
            "dc" => self.dc = parse_bool(key, v)?,
            "ablation" => self.ablation = Ablation::parse(v).map_err(config_err)?,
            "out" => self.out = PathBuf::from(v),
            "trials" => self.trials = parse_num(key, v)?,
            "pairs" => self.pairs = parse_num(key, v)?,
            "hankel_d" => self.hankel_d = parse_num(key, v)?,
            "beta" => self.beta = parse_num(key, v)?,
            "restarts" => self.restarts = parse_num(key, v)?,
            "verify_iters" => self.verify_iters = parse_num(key, v)?,
            other => return Err(KunnError::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| KunnError::Config(format!("line {}: expected key=value, got '{line}'", i + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KunnError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Every key with its resolved value, one per line, in [`Self::KEYS`] order.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let weighting = match self.weighting {
            Weighting::Uniform => "uniform",
            Weighting::Radial => "radial",
        };
        let values = [
            self.n.to_string(),
            self.coils.to_string(),
            self.n_ellipses.to_string(),
            self.coil_support.to_string(),
            self.phase_support.to_string(),
            self.mask.name().to_string(),
            self.r.to_string(),
            self.acs.to_string(),
            self.pf_fraction.to_string(),
            opt(self.pf_r.map(|v| v.to_string())),
            self.sigma.to_string(),
            self.dec_z.fmt(),
            self.dec_csm.fmt(),
            self.dec_phase.fmt(),
            self.latent_radius.to_string(),
            self.iters.to_string(),
            self.lr.to_string(),
            self.seed.to_string(),
            opt(self.model_seed.map(|v| v.to_string())),
            weighting.to_string(),
            self.dc.to_string(),
            self.ablation.name().to_string(),
            self.out.display().to_string(),
            self.trials.to_string(),
            self.pairs.to_string(),
            self.hankel_d.to_string(),
            self.beta.to_string(),
            self.restarts.to_string(),
            self.verify_iters.to_string(),
        ];
        let mut s = String::new();
        for (k, v) in Self::KEYS.iter().zip(values) {
            writeln!(s, "{k}={v}").expect("writing to a String");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(KunnError::Config(m));
        if !self.n.is_power_of_two() || self.n < 8 {
            return bad(format!("n = {} must be a power of two >= 8", self.n));
        }
        if self.coils == 0 {
            return bad("coils must be at least 1".into());
        }
        if self.dec_z.size != self.n {
            return bad(format!("dec_z size {} must equal n = {}", self.dec_z.size, self.n));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma = {} must be finite and >= 0", self.sigma));
        }
        if self.iters == 0 {
            return bad("iters must be at least 1".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("lr = {} must be positive", self.lr));
        }
        if !(self.latent_radius > 0.0) {
            return bad(format!("latent_radius = {} must be positive", self.latent_radius));
        }
        if !(self.r >= 1.0) || !self.r.is_finite() {
            return bad(format!("r = {} must be >= 1", self.r));
        }
        match self.ablation {
            Ablation::SensitivityOnly if self.coils < 2 => {
                return bad("sensitivity_only needs at least two coils".into())
            }
            Ablation::PhaseOnly if self.coils != 1 => return bad("phase_only needs exactly one coil".into()),
            _ => {}
        }
        Ok(())
    }

    pub fn mask_spec(&self) -> MaskSpec {
        match self.mask {
            MaskKind::Random => MaskSpec::Random { r: self.r, acs: self.acs },
            MaskKind::VdRegular => MaskSpec::VdRegular { r: self.r, acs: self.acs },
            MaskKind::PartialFourier => MaskSpec::PartialFourier {
                pf_fraction: self.pf_fraction,
                acs: self.acs,
                r: self.pf_r,
            },
            MaskKind::Entrywise => MaskSpec::Entrywise { density: 1.0 / self.r },
        }
    }

    pub fn scene_config(&self) -> SceneConfig {
        SceneConfig {
            n: self.n,
            coils: self.coils,
            n_ellipses: self.n_ellipses,
            coil_support: self.coil_support,
            phase_support: self.phase_support,
            mask: self.mask_spec(),
            sigma: self.sigma,
            seed: self.seed,
        }
    }

    pub fn model_seed(&self) -> u64 {
        self.model_seed.unwrap_or(self.seed)
    }

    /// Generator for the configured architecture, ablation and weighting.
    pub fn generator(&self) -> Result<TripledGenerator> {
        self.validate()?;
        let seed = self.model_seed();
        let dec = |d: DecoderSpec, out: (usize, usize), ch: usize, off: u64| {
            DecoderConfig::new(d.layers, d.channels, out, ch, seed.wrapping_add(off))
        };
        let g = TripledGenerator::with_decoders(
            self.n,
            self.coils,
            dec(self.dec_z, (self.n, self.n), 2, 1),
            dec(self.dec_csm, (self.dec_csm.size, self.dec_csm.size), 2 * self.coils, 2),
            dec(self.dec_phase, (self.dec_phase.size, self.dec_phase.size), 2, 3),
            self.latent_radius,
            seed,
        )
        .map_err(config_err)?;
        Ok(g.ablation_variant(self.ablation).map_err(config_err)?.with_weighting(self.weighting))
    }

    pub fn theory_config(&self) -> Result<TheoryConfig> {
        self.validate()?;
        if self.trials == 0 || self.pairs == 0 {
            return Err(KunnError::Config("trials and pairs must be at least 1".into()));
        }
        Ok(TheoryConfig {
            n: self.n,
            coils: self.coils,
            mask: self.mask_spec(),
            sigma: self.sigma,
            d: self.hankel_d,
            beta: self.beta,
            s: self.latent_radius,
            trials: self.trials,
            pairs: self.pairs,
            search: LatentSearch {
                restarts: self.restarts,
                ..LatentSearch::default()
            },
            iters: self.verify_iters,
            lr: self.lr,
            seed: self.seed,
        })
    }
}
