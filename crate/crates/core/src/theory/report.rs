use std::fmt::Write as _;
use std::path::Path;

use super::{c1_bound, TheoremTrial, TheoryConfig};
use crate::error::{KunnError, Result};
use crate::kten::write_atomic;

/// Aggregate of a bound experiment. Geometry fields take the worst case
/// over trials (largest rank and coherence), and `c1` / `n_required` are
/// evaluated at that worst case.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoryReport {
    pub r_observed: usize,
    pub mu_u: f64,
    pub mu_v: f64,
    pub mu0: f64,
    pub c1: f64,
    pub n_required: f64,
    pub n_actual: usize,
    pub condition: bool,
    /// Share of all sampled ratios at or above `c1`.
    pub lemma1_pass_fraction: f64,
    /// Trials on which the bound is informative (see [`TheoremTrial::pass`]).
    pub qualifying_trials: usize,
    /// Pass share over qualifying trials; `None` when every trial was vacuous.
    pub theorem_bound_pass_fraction: Option<f64>,
    /// Pass share over all trials with the empirical constant in place of `c1`.
    pub empirical_bound_pass_fraction: Option<f64>,
    /// Smallest sampled ratio over all trials.
    pub c2_estimate: f64,
    pub trials: usize,
    pub seed: u64,
}

fn fraction(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

impl TheoryReport {
    pub fn aggregate(cfg: &TheoryConfig, trials: &[TheoremTrial]) -> Result<Self> {
        if trials.is_empty() {
            return Err(KunnError::invalid("no trials to aggregate"));
        }
        let r_observed = trials.iter().map(|t| t.rank).max().unwrap_or(0);
        let mu0 = trials.iter().map(|t| t.mu0).fold(1.0, f64::max);
        let n_actual = trials[0].n_actual;
        let n = cfg.n as f64;
        let d = cfg.d as f64;
        let bound = c1_bound(n_actual as f64, mu0, r_observed as f64, n * n, d * d, cfg.beta)?;

        let ratios: Vec<f64> = trials.iter().flat_map(|t| t.ratios.iter().copied()).collect();
        let lemma1_pass_fraction = fraction(ratios.iter().filter(|&&r| r >= bound.c1).count(), ratios.len()).unwrap_or(0.0);
        let verdicts: Vec<bool> = trials.iter().filter_map(|t| t.pass()).collect();
        let empirical: Vec<bool> = trials.iter().filter_map(|t| t.pass_empirical()).collect();
        Ok(Self {
            r_observed,
            mu_u: trials.iter().map(|t| t.mu_u).fold(1.0, f64::max),
            mu_v: trials.iter().map(|t| t.mu_v).fold(1.0, f64::max),
            mu0,
            c1: bound.c1,
            n_required: bound.n_required,
            n_actual,
            condition: bound.condition,
            lemma1_pass_fraction,
            qualifying_trials: verdicts.len(),
            theorem_bound_pass_fraction: fraction(verdicts.iter().filter(|&&p| p).count(), verdicts.len()),
            empirical_bound_pass_fraction: fraction(empirical.iter().filter(|&&p| p).count(), empirical.len()),
            c2_estimate: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            trials: trials.len(),
            seed: cfg.seed,
        })
    }

    /// Bound informative on no trial.
    pub fn vacuous(&self) -> bool {
        self.qualifying_trials == 0
    }

    pub fn to_key_value(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "vacuous".to_string(), |x| x.to_string());
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").expect("writing to a String");
        kv("r_observed", self.r_observed.to_string());
        kv("mu_U", self.mu_u.to_string());
        kv("mu_V", self.mu_v.to_string());
        kv("mu0", self.mu0.to_string());
        kv("c1", self.c1.to_string());
        kv("n_required", self.n_required.to_string());
        kv("n_actual", self.n_actual.to_string());
        kv("condition", self.condition.to_string());
        kv("lemma1_pass_fraction", self.lemma1_pass_fraction.to_string());
        kv("qualifying_trials", self.qualifying_trials.to_string());
        kv("theorem_bound_pass_fraction", opt(self.theorem_bound_pass_fraction));
        kv("empirical_bound_pass_fraction", opt(self.empirical_bound_pass_fraction));
        kv("c2_estimate", self.c2_estimate.to_string());
        kv("trials", self.trials.to_string());
        kv("seed", self.seed.to_string());
        s
    }

    pub const TRIAL_CSV_HEADER: &'static str =
        "seed,rank,mu0,n_actual,n_required,condition,c1,empirical_c,lhs,xtilde_distance,xtilde_masked,noise_norm,rhs_c1,rhs_empirical,pass,pass_empirical";

    pub fn trial_row(t: &TheoremTrial) -> String {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let verdict = |v: Option<bool>| v.map_or_else(|| "vacuous".to_string(), |x| x.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            t.seed,
            t.rank,
            t.mu0,
            t.n_actual,
            t.bound.n_required,
            t.bound.condition,
            t.bound.c1,
            t.empirical_c,
            t.lhs,
            t.xtilde_distance,
            t.xtilde_masked,
            t.noise_norm,
            opt(t.rhs_c1),
            opt(t.rhs_empirical),
            verdict(t.pass()),
            verdict(t.pass_empirical()),
        )
    }

    /// Writes `theory_report.txt` and `theory_trials.csv` into `dir`.
    pub fn write(&self, trials: &[TheoremTrial], dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("theory_report.txt"), self.to_key_value().as_bytes())?;
        let mut csv = String::from(Self::TRIAL_CSV_HEADER);
        csv.push('\n');
        for t in trials {
            csv.push_str(&Self::trial_row(t));
            csv.push('\n');
        }
        write_atomic(&dir.join("theory_trials.csv"), csv.as_bytes())
    }
}
