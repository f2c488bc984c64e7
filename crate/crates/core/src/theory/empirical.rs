use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use super::{c1_bound, C1Bound, SubspaceBasis, TheoryReport, DEFAULT_BETA};
use crate::autodiff::{ParamSet, RealTensor};
use crate::error::{KunnError, Result};
use crate::kspace::{hankel_build, ComplexTensor, DEFAULT_RANK_TOL};
use crate::kunn::{forward_at, sample_ball, train, TrainedGenerator, TripledGenerator, XI_PARAM};
use crate::phantom::{simulate, stream_rng, AcquisitionScene, MaskSpec, SamplingMask, SceneConfig};

/// Differences below this norm are treated as degenerate.
const DEGENERATE_NORM: f64 = 1e-12;

/// Numeric ranks of `H(z(xi) - z(xi'), d)` over random latent pairs.
#[derive(Clone, Debug)]
pub struct RankSurvey {
    pub ranks: Vec<usize>,
    pub max_rank: usize,
    /// `min(rows, cols)` of the Hankel lifting; no rank may exceed it.
    pub structural_bound: usize,
    /// Subspaces of the first pair that reached `max_rank`.
    pub basis: Option<SubspaceBasis>,
}

/// Rank and subspaces of the Hankel lifting of `z(xi_a) - z(xi_b)`.
pub fn difference_rank(
    t: &TrainedGenerator,
    xi_a: &RealTensor,
    xi_b: &RealTensor,
    d: usize,
) -> Result<(usize, usize, Option<SubspaceBasis>)> {
    let (za, _, _) = forward_at(&t.generator, &t.params, xi_a)?;
    let (zb, _, _) = forward_at(&t.generator, &t.params, xi_b)?;
    let h = hankel_build(&za.sub(&zb)?, d)?;
    let m = h.matrix();
    let bound = m.rows().min(m.cols());
    let basis = SubspaceBasis::from_matrix(m, DEFAULT_RANK_TOL, format!("H(z(xi) - z(xi'), {d})"))?;
    Ok((basis.as_ref().map_or(0, |b| b.rank()), bound, basis))
}

/// Draws `trials` latent pairs from the ball of radius `s` and records the
/// rank of each Hankel difference.
pub fn assumption1_check(t: &TrainedGenerator, d: usize, trials: usize, s: f64, seed: u64) -> Result<RankSurvey> {
    let mut rng = stream_rng(seed, 32);
    let dims = t.generator.dec_z.latent_dims();
    let mut survey = RankSurvey {
        ranks: Vec::with_capacity(trials),
        max_rank: 0,
        structural_bound: 0,
        basis: None,
    };
    for _ in 0..trials {
        let a = sample_ball(&dims, s, &mut rng);
        let b = sample_ball(&dims, s, &mut rng);
        let (r, bound, basis) = difference_rank(t, &a, &b, d)?;
        if r > bound {
            return Err(KunnError::invalid(format!("rank {r} exceeds structural bound {bound}")));
        }
        survey.structural_bound = bound;
        if r > survey.max_rank || survey.basis.is_none() && basis.is_some() {
            survey.max_rank = survey.max_rank.max(r);
            survey.basis = basis;
        }
        survey.ranks.push(r);
    }
    Ok(survey)
}

/// `||M D||_F / ||D||_F` over all stacked branch differences, or `None`
/// when `D` is degenerate. Both norms are accumulated in the same order, so
/// a full mask gives exactly 1.
pub fn masked_ratio(diff: &[ComplexTensor], mask: &SamplingMask) -> Option<f64> {
    let (mut full, mut kept) = (0.0, 0.0);
    for t in diff {
        for p in 0..t.planes() {
            for (v, &m) in t.plane(p).iter().zip(mask.pattern()) {
                let e = v.norm_sqr();
                full += e;
                if m {
                    kept += e;
                }
            }
        }
    }
    if full.sqrt() < DEGENERATE_NORM {
        return None;
    }
    Some((kept / full).sqrt())
}

fn stacked_outputs(t: &TrainedGenerator, xi: &RealTensor) -> Result<Vec<ComplexTensor>> {
    let (_, b1, b2) = forward_at(&t.generator, &t.params, xi)?;
    Ok(std::iter::once(b1).chain(b2).collect())
}

fn stacked_diff(a: &[ComplexTensor], b: &[ComplexTensor]) -> Result<Vec<ComplexTensor>> {
    a.iter().zip(b).map(|(x, y)| x.sub(y)).collect()
}

#[derive(Clone, Debug)]
pub struct Lemma1Outcome {
    pub ratios: Vec<f64>,
    /// Pairs whose output difference was degenerate.
    pub skipped: usize,
    /// Smallest observed ratio: the empirical sampling constant.
    pub empirical_c: Option<f64>,
    /// Fraction of ratios at or above `c1`, when a `c1` was supplied.
    pub pass_fraction: Option<f64>,
}

/// Ratios `||M(G(xi) - G(xi'))|| / ||G(xi) - G(xi')||` for latent pairs
/// that differ only in the `z` latent.
pub fn lemma1_verify(
    t: &TrainedGenerator,
    scene: &AcquisitionScene,
    trials: usize,
    s: f64,
    c1: Option<f64>,
    seed: u64,
) -> Result<Lemma1Outcome> {
    let mut rng = stream_rng(seed, 33);
    let dims = t.generator.dec_z.latent_dims();
    let mut ratios = Vec::with_capacity(trials);
    let mut skipped = 0;
    for _ in 0..trials {
        let a = stacked_outputs(t, &sample_ball(&dims, s, &mut rng))?;
        let b = stacked_outputs(t, &sample_ball(&dims, s, &mut rng))?;
        match masked_ratio(&stacked_diff(&a, &b)?, &scene.mask) {
            Some(r) => ratios.push(r),
            None => skipped += 1,
        }
    }
    let empirical_c = ratios.iter().copied().reduce(f64::min);
    let pass_fraction = match c1 {
        Some(c) if !ratios.is_empty() => Some(ratios.iter().filter(|&&r| r >= c).count() as f64 / ratios.len() as f64),
        _ => None,
    };
    Ok(Lemma1Outcome {
        ratios,
        skipped,
        empirical_c,
        pass_fraction,
    })
}

/// Budget of the search for the generator output closest to the truth.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSearch {
    pub restarts: usize,
    /// Best starts that get refined.
    pub refine: usize,
    pub steps: usize,
    pub lr: f64,
}

impl Default for LatentSearch {
    fn default() -> Self {
        Self {
            restarts: 64,
            refine: 2,
            steps: 60,
            lr: 0.02,
        }
    }
}

fn project_ball(xi: &mut RealTensor, s: f64) {
    let norm = xi.norm();
    if norm > s {
        let f = s / norm;
        xi.data_mut().iter_mut().for_each(|v| *v *= f);
    }
}

fn distance(outputs: &[ComplexTensor], xstar: &ComplexTensor) -> Result<f64> {
    let mut sq = 0.0;
    for o in outputs {
        sq += o.sub(xstar)?.norm_sqr();
    }
    Ok(sq.sqrt())
}

/// Approximates `argmin_{xi in B(s)} ||G(xi) - X*||` by random restarts
/// (plus the fitted latent) followed by projected ADAM on the best few.
fn closest_output(
    t: &TrainedGenerator,
    scene: &AcquisitionScene,
    s: f64,
    search: &LatentSearch,
    rng: &mut impl Rng,
) -> Result<(RealTensor, f64)> {
    let g = &t.generator;
    let dims = g.dec_z.latent_dims();
    let mut starts = vec![t.generator.xi.clone()];
    starts.extend((0..search.restarts).map(|_| sample_ball(&dims, s, rng)));
    let mut scored = Vec::with_capacity(starts.len());
    for xi in starts {
        let d = distance(&stacked_outputs(t, &xi)?, &scene.kspace_full)?;
        scored.push((d, xi));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut best_d, mut best_xi) = (scored[0].0, scored[0].1.clone());

    let ones = RealTensor::full(&[2 * g.coils, g.n, g.n], 1.0);
    let target = scene.kspace_full.to_channel_pairs();
    let seed = RealTensor::scalar(1.0);
    for (_, xi0) in scored.into_iter().take(search.refine) {
        let mut gg = g.build_graph(&t.params, Some((&ones, &target)), Some(&xi0), true)?;
        let mut latent = ParamSet::new();
        latent.insert(XI_PARAM, xi0);
        for step in 0..=search.steps {
            let xi = latent.get(XI_PARAM).expect("inserted above").clone();
            gg.graph.set_param(XI_PARAM, xi.clone())?;
            let d = gg.graph.forward()?.data()[0].sqrt();
            if d < best_d {
                best_d = d;
                best_xi = xi;
            }
            if step == search.steps {
                break;
            }
            let mut grads = gg.graph.backward(&seed)?;
            let gx = grads.remove(XI_PARAM).ok_or(KunnError::NotEvaluated)?;
            latent.adam_step(&BTreeMap::from([(XI_PARAM.to_string(), gx)]), search.lr)?;
            project_ball(latent.get_mut(XI_PARAM).expect("inserted above"), s);
        }
    }
    Ok((best_xi, best_d))
}

/// Settings of the bound experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoryConfig {
    pub n: usize,
    pub coils: usize,
    pub mask: MaskSpec,
    pub sigma: f64,
    /// Hankel window per axis; the 2-D lifting has `d^2` columns.
    pub d: usize,
    pub beta: f64,
    /// Latent ball radius.
    pub s: f64,
    pub trials: usize,
    /// Latent pairs per trial for the rank and sampling-ratio surveys.
    pub pairs: usize,
    pub search: LatentSearch,
    pub iters: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            n: 32,
            coils: 2,
            mask: MaskSpec::Entrywise { density: 1.0 / 3.0 },
            sigma: 0.01,
            d: 4,
            beta: DEFAULT_BETA,
            s: 1.0,
            trials: 20,
            pairs: 20,
            search: LatentSearch::default(),
            iters: 200,
            lr: 1e-3,
            seed: 0,
        }
    }
}

impl TheoryConfig {
    /// Line masks with no random component fall under the deterministic
    /// sampling result, whose constant is only known to exist.
    pub fn deterministic_mask(&self) -> bool {
        matches!(self.mask, MaskSpec::VdRegular { .. } | MaskSpec::PartialFourier { .. })
    }
}

/// One evaluation of `||G - X*|| <= ||X~ - X*|| + (2 ||M(X~ - X*)|| + 4 ||n||) / c`.
#[derive(Clone, Debug, PartialEq)]
pub struct TheoremTrial {
    pub seed: u64,
    pub rank: usize,
    pub mu_u: f64,
    pub mu_v: f64,
    pub mu0: f64,
    pub n_actual: usize,
    pub bound: C1Bound,
    pub empirical_c: f64,
    /// Sampling ratios of the latent pairs behind `empirical_c`.
    pub ratios: Vec<f64>,
    pub lhs: f64,
    pub xtilde_distance: f64,
    pub xtilde_masked: f64,
    pub noise_norm: f64,
    /// Right-hand side with `c1`, when `c1` is usable.
    pub rhs_c1: Option<f64>,
    /// Right-hand side with the empirical constant.
    pub rhs_empirical: Option<f64>,
    pub deterministic: bool,
}

impl TheoremTrial {
    /// Pass/fail under the constant the theory supplies for this mask:
    /// `c1` for random sampling, the empirical `c2` for deterministic
    /// sampling. `None` when the bound is vacuous.
    pub fn pass(&self) -> Option<bool> {
        let rhs = if self.deterministic { self.rhs_empirical } else { self.rhs_c1 };
        rhs.map(|r| self.lhs <= r)
    }

    pub fn pass_empirical(&self) -> Option<bool> {
        self.rhs_empirical.map(|r| self.lhs <= r)
    }
}

fn rhs(t: &TheoremTrial, c: f64) -> f64 {
    t.xtilde_distance + (2.0 * t.xtilde_masked + 4.0 * t.noise_norm) / c
}

/// Evaluates both sides of the bound for a fitted generator, with `X*` the
/// full k-space repeated once per branch.
pub fn theorem_bound_verify(
    t: &TrainedGenerator,
    scene: &AcquisitionScene,
    cfg: &TheoryConfig,
    seed: u64,
) -> Result<TheoremTrial> {
    let survey = assumption1_check(t, cfg.d, cfg.pairs, cfg.s, seed)?;
    let (rank, mu_u, mu_v) = match &survey.basis {
        Some(b) => (b.rank(), b.mu_u()?, b.mu_v()?),
        None => (0, 1.0, 1.0),
    };
    let mu0 = mu_u.max(mu_v);
    let n = t.generator.n as f64;
    let d = cfg.d as f64;
    let n_actual = scene.mask.sampled_entries();
    let bound = c1_bound(n_actual as f64, mu0, rank as f64, n * n, d * d, cfg.beta)?;
    let lemma = lemma1_verify(t, scene, cfg.pairs, cfg.s, Some(bound.c1), seed)?;

    let fitted = stacked_outputs(t, &t.generator.xi)?;
    let lhs = distance(&fitted, &scene.kspace_full)?;
    let mut rng = stream_rng(seed, 34);
    let (xi_tilde, xtilde_distance) = closest_output(t, scene, cfg.s, &cfg.search, &mut rng)?;
    let tilde = stacked_outputs(t, &xi_tilde)?;
    let residual: Vec<ComplexTensor> = tilde.iter().map(|o| o.sub(&scene.kspace_full)).collect::<Result<_>>()?;
    let xtilde_masked = residual
        .iter()
        .map(|r| scene.mask.apply(r).map(|m| m.norm_sqr()))
        .sum::<Result<f64>>()?
        .sqrt();
    let noise_norm = (fitted.len() as f64).sqrt() * scene.noise.norm();

    let mut trial = TheoremTrial {
        seed,
        rank,
        mu_u,
        mu_v,
        mu0,
        n_actual,
        bound,
        empirical_c: lemma.empirical_c.unwrap_or(0.0),
        ratios: lemma.ratios,
        lhs,
        xtilde_distance,
        xtilde_masked,
        noise_norm,
        rhs_c1: None,
        rhs_empirical: None,
        deterministic: cfg.deterministic_mask(),
    };
    if bound.usable() {
        trial.rhs_c1 = Some(rhs(&trial, bound.c1));
    }
    if trial.empirical_c > 0.0 {
        trial.rhs_empirical = Some(rhs(&trial, trial.empirical_c));
    }
    Ok(trial)
}

/// Simulates, fits and checks `cfg.trials` independent scenes (seeds
/// `cfg.seed, cfg.seed + 1, ...`). Trials run in parallel; results keep
/// trial order, and `progress` sees each trial as it finishes.
pub fn run_theory(
    cfg: &TheoryConfig,
    progress: impl Fn(&TheoremTrial) + Sync,
) -> Result<(TheoryReport, Vec<TheoremTrial>)> {
    if cfg.trials == 0 || cfg.pairs == 0 {
        return Err(KunnError::invalid("theory run needs at least one trial and one latent pair"));
    }
    let trials: Vec<TheoremTrial> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i as u64);
            let scene = simulate(&SceneConfig {
                n: cfg.n,
                coils: cfg.coils,
                mask: cfg.mask.clone(),
                sigma: cfg.sigma,
                seed,
                ..SceneConfig::default()
            })?;
            let g = TripledGenerator::new(cfg.n, cfg.coils, seed)?;
            let t = train(&g, &scene, cfg.iters, cfg.lr)?;
            let trial = theorem_bound_verify(&t, &scene, cfg, seed)?;
            progress(&trial);
            Ok(trial)
        })
        .collect::<Result<_>>()?;
    let report = TheoryReport::aggregate(cfg, &trials)?;
    Ok((report, trials))
}
