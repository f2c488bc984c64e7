use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Graph, NodeId, ParamSet, RealTensor};
use crate::error::{KunnError, Result};

/// ConvDecoder architecture: `n_layers - 1` hidden blocks of
/// `[upsample2x] -> conv3x3 -> relu -> channel_norm`, then a 1x1 conv to
/// `out_channels`, cropped to `out_shape`. The 2x upsamplings sit on the
/// last hidden blocks, as many as needed to reach `out_shape`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderConfig {
    pub n_layers: usize,
    pub n_channels: usize,
    pub out_shape: (usize, usize),
    pub out_channels: usize,
    pub latent_channels: usize,
    pub latent_shape: (usize, usize),
    pub seed: u64,
}

impl DecoderConfig {
    pub fn new(n_layers: usize, n_channels: usize, out_shape: (usize, usize), out_channels: usize, seed: u64) -> Self {
        Self {
            n_layers,
            n_channels,
            out_shape,
            out_channels,
            latent_channels: 32,
            latent_shape: (4, 4),
            seed,
        }
    }

    /// Number of 2x upsampling stages.
    pub fn upsamplings(&self) -> usize {
        let (lh, lw) = self.latent_shape;
        let (oh, ow) = self.out_shape;
        let mut k = 0;
        while (lh << k) < oh || (lw << k) < ow {
            k += 1;
        }
        k
    }

    /// Spatial size before the final crop.
    pub fn grid_shape(&self) -> (usize, usize) {
        let k = self.upsamplings();
        (self.latent_shape.0 << k, self.latent_shape.1 << k)
    }

    pub fn latent_dims(&self) -> [usize; 3] {
        [self.latent_channels, self.latent_shape.0, self.latent_shape.1]
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.n_layers,
            self.n_channels,
            self.out_shape.0,
            self.out_shape.1,
            self.out_channels,
            self.latent_channels,
            self.latent_shape.0,
            self.latent_shape.1,
        ];
        if dims.contains(&0) {
            return Err(KunnError::invalid(format!("decoder dimensions must be positive: {self:?}")));
        }
        if self.upsamplings() > self.n_layers - 1 {
            return Err(KunnError::invalid(format!(
                "{} hidden layers cannot reach {:?} from {:?} (needs {} upsamplings)",
                self.n_layers - 1,
                self.out_shape,
                self.latent_shape,
                self.upsamplings()
            )));
        }
        Ok(())
    }

    fn hidden(&self) -> usize {
        self.n_layers - 1
    }

    /// Uniform `[-a, a]` weights with `a = sqrt(1 / fan_in)`, unit gains and
    /// zero biases, drawn from the decoder's own seed.
    pub fn init_params(&self, prefix: &str, params: &mut ParamSet) -> Result<()> {
        self.validate()?;
        let mut rng = crate::phantom::stream_rng(self.seed, 16);
        let c = self.n_channels;
        for l in 0..self.hidden() {
            let cin = if l == 0 { self.latent_channels } else { c };
            let bound = (1.0 / (cin * 9) as f64).sqrt();
            params.insert(format!("{prefix}.conv{l}"), RealTensor::uniform(&[c, cin, 3, 3], bound, &mut rng));
            params.insert(format!("{prefix}.gain{l}"), RealTensor::full(&[c], 1.0));
            params.insert(format!("{prefix}.bias{l}"), RealTensor::zeros(&[c]));
        }
        let cin = if self.hidden() == 0 { self.latent_channels } else { c };
        let bound = (1.0 / cin as f64).sqrt();
        params.insert(
            format!("{prefix}.out"),
            RealTensor::uniform(&[self.out_channels, cin, 1, 1], bound, &mut rng),
        );
        Ok(())
    }

    /// Adds the decoder to `graph`, reading weights from `params`.
    pub fn build(&self, prefix: &str, graph: &mut Graph, params: &ParamSet, latent: NodeId) -> Result<NodeId> {
        self.validate()?;
        let get = |name: String| {
            params
                .get(&name)
                .cloned()
                .ok_or_else(|| KunnError::invalid(format!("missing parameter '{name}'")))
        };
        let first_up = self.hidden() - self.upsamplings();
        let mut x = latent;
        for l in 0..self.hidden() {
            if l >= first_up {
                x = graph.upsample2x_bilinear(x);
            }
            let k = graph.param(&format!("{prefix}.conv{l}"), get(format!("{prefix}.conv{l}"))?)?;
            x = graph.conv2d_same_zero(x, k);
            x = graph.relu(x);
            let g = graph.param(&format!("{prefix}.gain{l}"), get(format!("{prefix}.gain{l}"))?)?;
            let b = graph.param(&format!("{prefix}.bias{l}"), get(format!("{prefix}.bias{l}"))?)?;
            x = graph.channel_norm(x, g, b);
        }
        let k = graph.param(&format!("{prefix}.out"), get(format!("{prefix}.out"))?)?;
        x = graph.conv2d_same_zero(x, k);
        if self.grid_shape() != self.out_shape {
            x = graph.crop_center(x, self.out_shape.0, self.out_shape.1);
        }
        Ok(x)
    }
}

/// Uniform draw from the Euclidean ball of radius `s` in the space of
/// tensors with the given shape.
pub fn sample_ball(shape: &[usize], s: f64, rng: &mut impl Rng) -> RealTensor {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let radius = s * rng.gen::<f64>().powf(1.0 / n as f64);
    let f = if norm > 0.0 { radius / norm } else { 0.0 };
    v.iter_mut().for_each(|x| *x *= f);
    RealTensor::new(shape.to_vec(), v).expect("shape is non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsampling_count() {
        assert_eq!(DecoderConfig::new(6, 8, (64, 64), 2, 0).upsamplings(), 4);
        let c = DecoderConfig::new(4, 8, (9, 9), 2, 0);
        assert_eq!(c.upsamplings(), 2);
        assert_eq!(c.grid_shape(), (16, 16));
        assert!(DecoderConfig::new(3, 8, (64, 64), 2, 0).validate().is_err());
    }

    #[test]
    fn ball_radius() {
        let mut rng = crate::phantom::stream_rng(3, 0);
        for _ in 0..50 {
            assert!(sample_ball(&[32, 4, 4], 0.5, &mut rng).norm() <= 0.5);
        }
    }
}
