use std::io::Write;

use crate::autodiff::{ParamSet, RealTensor};
use crate::error::{KunnError, Result};
use crate::kspace::{ssos, to_image, ComplexTensor};
use crate::phantom::AcquisitionScene;

use super::generator::{generator_forward, TripledGenerator};

/// Optimised generator parameters and the loss trajectory that led to them.
#[derive(Clone, Debug)]
pub struct TrainedGenerator {
    pub generator: TripledGenerator,
    pub params: ParamSet,
    /// Loss before each update; `loss_history[i]` is evaluated at the
    /// parameters after `i` steps.
    pub loss_history: Vec<f64>,
    pub iterations: usize,
}

impl TrainedGenerator {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().copied()
    }

    /// `iteration,loss` CSV with a header line.
    pub fn write_loss_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "iteration,loss")?;
        for (i, l) in self.loss_history.iter().enumerate() {
            writeln!(w, "{i},{l:e}")?;
        }
        Ok(())
    }
}

/// Fits the generator to `scene.y` with ADAM from freshly initialised and
/// calibrated weights.
pub fn train(g: &TripledGenerator, scene: &AcquisitionScene, iters: usize, lr: f64) -> Result<TrainedGenerator> {
    train_with_progress(g, scene, iters, lr, |_, _| {})
}

pub fn train_with_progress(
    g: &TripledGenerator,
    scene: &AcquisitionScene,
    iters: usize,
    lr: f64,
    progress: impl FnMut(usize, f64),
) -> Result<TrainedGenerator> {
    let params = g.init_params()?;
    let mut g = g.clone();
    g.calibrate(&params, scene)?;
    train_from(&g, params, scene, iters, lr, progress)
}

/// As [`train`], starting from `params` and reporting `(iteration, loss)`
/// after every evaluation.
pub fn train_from(
    g: &TripledGenerator,
    mut params: ParamSet,
    scene: &AcquisitionScene,
    iters: usize,
    lr: f64,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainedGenerator> {
    if iters == 0 {
        return Err(KunnError::invalid("iters must be at least 1"));
    }
    let (w, y) = g.loss_target(scene)?;
    let mut gg = g.build_graph(&params, Some((&w, &y)), None, false)?;
    let seed = RealTensor::scalar(1.0);
    let mut history = Vec::with_capacity(iters);
    for it in 0..iters {
        params.load_into(&mut gg.graph)?;
        let l = gg.graph.forward()?.data()[0];
        if !l.is_finite() {
            return Err(KunnError::Diverged { iteration: it });
        }
        history.push(l);
        progress(it, l);
        let grads = gg.graph.backward(&seed)?;
        params.adam_step(&grads, lr)?;
    }
    Ok(TrainedGenerator {
        generator: g.clone(),
        params,
        loss_history: history,
        iterations: iters,
    })
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// `[Nc, N, N]` centred k-space.
    pub kspace: ComplexTensor,
    /// SSoS magnitude image.
    pub image: RealTensor,
}

/// First-branch k-space of the trained generator, optionally with the
/// measured samples written back, and its SSoS image.
pub fn reconstruct(t: &TrainedGenerator, scene: &AcquisitionScene, dc: bool) -> Result<Reconstruction> {
    let (b1, _) = generator_forward(&t.generator, &t.params)?;
    let kspace = if dc { data_consistency(&b1, scene)? } else { b1 };
    let image = ssos(&to_image(&kspace)?)?;
    Ok(Reconstruction { kspace, image })
}

/// Replaces sampled entries of `k` with the measurements.
pub fn data_consistency(k: &ComplexTensor, scene: &AcquisitionScene) -> Result<ComplexTensor> {
    if k.shape() != scene.y.shape() {
        return Err(KunnError::invalid(format!(
            "k-space {:?} does not match measurements {:?}",
            k.shape(),
            scene.y.shape()
        )));
    }
    let mut out = k.clone();
    let pattern = scene.mask.pattern();
    for p in 0..out.planes() {
        let y = scene.y.plane(p);
        for (i, v) in out.plane_mut(p).iter_mut().enumerate() {
            if pattern[i] {
                *v = y[i];
            }
        }
    }
    Ok(out)
}
