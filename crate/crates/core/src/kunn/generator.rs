use crate::autodiff::{Graph, NodeId, ParamSet, RealTensor};
use crate::error::{KunnError, Result};
use crate::kspace::ComplexTensor;
use crate::phantom::AcquisitionScene;

use super::decoder::{sample_ball, DecoderConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ablation {
    /// Coil and phase modules, both branches.
    Full,
    /// Phase module removed: one branch, `z (*) csm_i`.
    SensitivityOnly,
    /// Coil module removed (single coil): `z` and `conj_reflect(z) (*) e`.
    PhaseOnly,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::SensitivityOnly => "sensitivity_only",
            Ablation::PhaseOnly => "phase_only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "sensitivity_only" => Ok(Ablation::SensitivityOnly),
            "phase_only" => Ok(Ablation::PhaseOnly),
            other => Err(KunnError::invalid(format!("unknown ablation '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    Uniform,
    /// `w(k) = 1 + |k| / k_max`, `k` measured from the k-space centre.
    Radial,
}

impl Weighting {
    pub fn map(self, n: usize) -> Vec<f64> {
        match self {
            Weighting::Uniform => vec![1.0; n * n],
            Weighting::Radial => {
                let c = (n / 2) as f64;
                let kmax = (2.0 * c * c).sqrt();
                (0..n * n)
                    .map(|i| {
                        let (r, col) = ((i / n) as f64 - c, (i % n) as f64 - c);
                        1.0 + (r * r + col * col).sqrt() / kmax
                    })
                    .collect()
            }
        }
    }
}

/// The three decoders of the generator together with their fixed latents.
#[derive(Clone, Debug)]
pub struct TripledGenerator {
    pub n: usize,
    pub coils: usize,
    pub dec_z: DecoderConfig,
    pub dec_csm: DecoderConfig,
    pub dec_phase: DecoderConfig,
    pub xi: RealTensor,
    pub zeta: RealTensor,
    pub eta: RealTensor,
    pub csm_enabled: bool,
    pub phase_enabled: bool,
    pub weighting: Weighting,
    pub latent_radius: f64,
    /// Fixed (untrained) factors applied to the `z` and phase decoder outputs.
    pub z_scale: f64,
    pub phase_scale: f64,
    pub seed: u64,
}

/// Node handles of a built generator graph.
pub struct GeneratorGraph {
    pub graph: Graph,
    pub xi: NodeId,
    pub z: NodeId,
    pub csm: Option<NodeId>,
    pub phase: Option<NodeId>,
    pub branch1: NodeId,
    pub branch2: Option<NodeId>,
    pub loss: Option<NodeId>,
}

/// Name under which the `z` latent is registered when it is made trainable.
pub const XI_PARAM: &str = "xi";

impl TripledGenerator {
    /// Desk-scale default: `{6, 64, N x N}` for `z`, `{4, 32, 9 x 9}` for the
    /// coil and phase spectra.
    pub fn new(n: usize, coils: usize, seed: u64) -> Result<Self> {
        let dec_z = DecoderConfig::new(6, 64, (n, n), 2, seed.wrapping_add(1));
        let dec_csm = DecoderConfig::new(4, 32, (9, 9), 2 * coils, seed.wrapping_add(2));
        let dec_phase = DecoderConfig::new(4, 32, (9, 9), 2, seed.wrapping_add(3));
        Self::with_decoders(n, coils, dec_z, dec_csm, dec_phase, 1.0, seed)
    }

    pub fn with_decoders(
        n: usize,
        coils: usize,
        dec_z: DecoderConfig,
        dec_csm: DecoderConfig,
        dec_phase: DecoderConfig,
        latent_radius: f64,
        seed: u64,
    ) -> Result<Self> {
        if coils == 0 {
            return Err(KunnError::invalid("generator needs at least one coil"));
        }
        if dec_z.out_shape != (n, n) || dec_z.out_channels != 2 {
            return Err(KunnError::invalid(format!(
                "z decoder must output [2, {n}, {n}], configured {:?} x {}",
                dec_z.out_shape, dec_z.out_channels
            )));
        }
        if dec_csm.out_channels != 2 * coils {
            return Err(KunnError::invalid(format!(
                "coil decoder must output {} channels, configured {}",
                2 * coils,
                dec_csm.out_channels
            )));
        }
        if dec_phase.out_channels != 2 {
            return Err(KunnError::invalid("phase decoder must output 2 channels"));
        }
        for d in [&dec_csm, &dec_phase] {
            if d.out_shape.0 > n || d.out_shape.1 > n {
                return Err(KunnError::invalid(format!("compact output {:?} exceeds N = {n}", d.out_shape)));
            }
        }
        for d in [&dec_z, &dec_csm, &dec_phase] {
            d.validate()?;
        }
        if !(latent_radius > 0.0) {
            return Err(KunnError::invalid("latent radius must be positive"));
        }
        let mut rng = crate::phantom::stream_rng(seed, 17);
        let xi = sample_ball(&dec_z.latent_dims(), latent_radius, &mut rng);
        let zeta = sample_ball(&dec_csm.latent_dims(), latent_radius, &mut rng);
        let eta = sample_ball(&dec_phase.latent_dims(), latent_radius, &mut rng);
        Ok(Self {
            n,
            coils,
            dec_z,
            dec_csm,
            dec_phase,
            xi,
            zeta,
            eta,
            csm_enabled: true,
            phase_enabled: true,
            weighting: Weighting::Uniform,
            latent_radius,
            z_scale: 1.0,
            phase_scale: 1.0,
            seed,
        })
    }

    /// Switches modules on or off for one of the ablation studies.
    pub fn ablation_variant(mut self, kind: Ablation) -> Result<Self> {
        match kind {
            Ablation::Full => {
                self.csm_enabled = true;
                self.phase_enabled = true;
            }
            Ablation::SensitivityOnly => {
                if self.coils < 2 {
                    return Err(KunnError::invalid("sensitivity_only needs a multi-coil scene"));
                }
                self.csm_enabled = true;
                self.phase_enabled = false;
            }
            Ablation::PhaseOnly => {
                if self.coils != 1 {
                    return Err(KunnError::invalid(format!(
                        "phase_only needs a single coil, scene has {}",
                        self.coils
                    )));
                }
                self.csm_enabled = false;
                self.phase_enabled = true;
            }
        }
        Ok(self)
    }

    pub fn with_weighting(mut self, w: Weighting) -> Self {
        self.weighting = w;
        self
    }

    pub fn ablation(&self) -> Ablation {
        match (self.csm_enabled, self.phase_enabled) {
            (true, false) => Ablation::SensitivityOnly,
            (false, _) => Ablation::PhaseOnly,
            _ => Ablation::Full,
        }
    }

    /// Initial weights of every enabled decoder.
    pub fn init_params(&self) -> Result<ParamSet> {
        let mut p = ParamSet::new();
        self.dec_z.init_params("z", &mut p)?;
        if self.csm_enabled {
            self.dec_csm.init_params("csm", &mut p)?;
        }
        if self.phase_enabled {
            self.dec_phase.init_params("phase", &mut p)?;
        }
        Ok(p)
    }

    /// Per-entry loss weights (weighting map times mask) laid out like the
    /// `[2 Nc, N, N]` channel-pair outputs.
    pub fn loss_weights(&self, scene: &AcquisitionScene) -> Result<RealTensor> {
        self.check_scene(scene)?;
        let n = self.n;
        let w = self.weighting.map(n);
        let plane: Vec<f64> = w.iter().zip(scene.mask.pattern()).map(|(w, &m)| if m { *w } else { 0.0 }).collect();
        let mut data = Vec::with_capacity(2 * self.coils * n * n);
        for _ in 0..2 * self.coils {
            data.extend_from_slice(&plane);
        }
        RealTensor::new(vec![2 * self.coils, n, n], data)
    }

    fn check_scene(&self, scene: &AcquisitionScene) -> Result<()> {
        if scene.n() != self.n || scene.coils() != self.coils {
            return Err(KunnError::invalid(format!(
                "generator is {}x{} with {} coils, scene is {}x{} with {}",
                self.n,
                self.n,
                self.coils,
                scene.n(),
                scene.n(),
                scene.coils()
            )));
        }
        Ok(())
    }

    /// Builds the forward graph. With `target = Some((weights, y))` a loss
    /// node `sum_b ||weights * (branch_b - y)||^2` is appended as the root.
    /// With `xi_trainable` the `z` latent is a parameter named [`XI_PARAM`]
    /// (its value taken from `xi_value` or the stored latent).
    pub fn build_graph(
        &self,
        params: &ParamSet,
        target: Option<(&RealTensor, &RealTensor)>,
        xi_value: Option<&RealTensor>,
        xi_trainable: bool,
    ) -> Result<GeneratorGraph> {
        let mut graph = Graph::new();
        let xi_t = xi_value.unwrap_or(&self.xi).clone();
        let xi = if xi_trainable {
            graph.param(XI_PARAM, xi_t)?
        } else {
            graph.constant(xi_t)
        };
        let z_raw = self.dec_z.build("z", &mut graph, params, xi)?;
        let z = graph.scale(z_raw, self.z_scale);
        let csm = if self.csm_enabled {
            let zeta = graph.constant(self.zeta.clone());
            Some(self.dec_csm.build("csm", &mut graph, params, zeta)?)
        } else {
            None
        };
        let kernel = match csm {
            Some(c) => c,
            None => graph.constant(RealTensor::new(vec![2, 1, 1], vec![1.0, 0.0])?),
        };
        let branch1 = graph.conv2d_circular(z, kernel);
        let (phase, branch2) = if self.phase_enabled {
            let eta = graph.constant(self.eta.clone());
            let e_raw = self.dec_phase.build("phase", &mut graph, params, eta)?;
            let e = graph.scale(e_raw, self.phase_scale);
            let zr = graph.conj_reflect(z);
            let ze = graph.conv2d_circular(zr, e);
            (Some(e), Some(graph.conv2d_circular(ze, kernel)))
        } else {
            (None, None)
        };
        let loss = match target {
            Some((w, y)) => {
                let r1 = graph.masked_residual(branch1, w.clone(), y.clone());
                let mut l = graph.sum_sq(r1);
                if let Some(b2) = branch2 {
                    let r2 = graph.masked_residual(b2, w.clone(), y.clone());
                    let l2 = graph.sum_sq(r2);
                    l = graph.add(l, l2);
                }
                Some(l)
            }
            None => None,
        };
        Ok(GeneratorGraph {
            graph,
            xi,
            z,
            csm,
            phase,
            branch1,
            branch2,
            loss,
        })
    }

    /// Sets `z_scale` so that the masked first branch has the norm of `y`
    /// at `params`, then `phase_scale` so that the masked second branch
    /// does too. Untrained decoders emit O(1) values per entry whatever the
    /// data scale; this fixes the output units once, before fitting.
    pub fn calibrate(&mut self, params: &ParamSet, scene: &AcquisitionScene) -> Result<()> {
        self.z_scale = 1.0;
        self.phase_scale = 1.0;
        let y_norm = scene.y.norm();
        if y_norm == 0.0 {
            return Ok(());
        }
        let (b1, b2) = generator_forward(self, params)?;
        let m1 = scene.mask.apply(&b1)?.norm();
        if m1 > 0.0 && m1.is_finite() {
            self.z_scale = y_norm / m1;
        }
        if let Some(b2) = b2 {
            let m2 = scene.mask.apply(&b2)?.norm() * self.z_scale;
            if m2 > 0.0 && m2.is_finite() {
                self.phase_scale = y_norm / m2;
            }
        }
        Ok(())
    }

    /// `(weights, y)` tensors for the loss of this scene.
    pub fn loss_target(&self, scene: &AcquisitionScene) -> Result<(RealTensor, RealTensor)> {
        Ok((self.loss_weights(scene)?, scene.y.to_channel_pairs()))
    }
}

/// Decoder outputs as complex arrays: `z` is `[N, N]`, coil spectra
/// `[Nc, k, k]` (absent when the module is off), phase spectrum `[k, k]`.
#[derive(Clone, Debug)]
pub struct ModuleOutputs {
    pub z: ComplexTensor,
    pub csm: Option<ComplexTensor>,
    pub phase: Option<ComplexTensor>,
}

fn complex_value(gg: &GeneratorGraph, id: NodeId) -> Result<ComplexTensor> {
    let v = gg.graph.value(id).ok_or(KunnError::NotEvaluated)?;
    ComplexTensor::from_channel_pairs(v)
}

/// Both branches of the generator, `[Nc, N, N]` each (`branch2` is `None`
/// without the phase module).
pub fn generator_forward(g: &TripledGenerator, params: &ParamSet) -> Result<(ComplexTensor, Option<ComplexTensor>)> {
    let mut gg = g.build_graph(params, None, None, false)?;
    gg.graph.forward()?;
    let b1 = complex_value(&gg, gg.branch1)?;
    let b2 = gg.branch2.map(|id| complex_value(&gg, id)).transpose()?;
    Ok((b1, b2))
}

/// Decoded `z` spectrum `[N, N]` and both branches with the `z` latent
/// replaced by `xi`.
pub fn forward_at(
    g: &TripledGenerator,
    params: &ParamSet,
    xi: &RealTensor,
) -> Result<(ComplexTensor, ComplexTensor, Option<ComplexTensor>)> {
    let mut gg = g.build_graph(params, None, Some(xi), false)?;
    gg.graph.forward()?;
    let z = complex_value(&gg, gg.z)?.reshape(vec![g.n, g.n])?;
    let b1 = complex_value(&gg, gg.branch1)?;
    let b2 = gg.branch2.map(|id| complex_value(&gg, id)).transpose()?;
    Ok((z, b1, b2))
}

pub fn module_outputs(g: &TripledGenerator, params: &ParamSet) -> Result<ModuleOutputs> {
    let mut gg = g.build_graph(params, None, None, false)?;
    gg.graph.forward()?;
    let z = complex_value(&gg, gg.z)?.reshape(vec![g.n, g.n])?;
    let csm = gg.csm.map(|id| complex_value(&gg, id)).transpose()?;
    let phase = match gg.phase {
        Some(id) => {
            let p = complex_value(&gg, id)?;
            let (h, w) = p.dims2()?;
            Some(p.reshape(vec![h, w])?)
        }
        None => None,
    };
    Ok(ModuleOutputs { z, csm, phase })
}

/// Fitting loss of the current parameters on `scene`.
pub fn loss(g: &TripledGenerator, params: &ParamSet, scene: &AcquisitionScene) -> Result<f64> {
    let (w, y) = g.loss_target(scene)?;
    let mut gg = g.build_graph(params, Some((&w, &y)), None, false)?;
    Ok(gg.graph.forward()?.data()[0])
}
