use rand::Rng;

use crate::autodiff::RealTensor;
use crate::error::{KunnError, Result};

/// Ellipse in normalised coordinates: the image spans [-1, 1] on both axes,
/// `cy` runs down the rows and `cx` along the columns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub cy: f64,
    pub cx: f64,
    pub ry: f64,
    pub rx: f64,
    /// Rotation in radians.
    pub angle: f64,
    /// Added to every pixel whose centre lies inside.
    pub value: f64,
}

impl Ellipse {
    pub fn contains(&self, y: f64, x: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.rx).powi(2) + (v / self.ry).powi(2) <= 1.0
    }
}

/// Sum of ellipse indicators sampled at pixel centres, clamped to [0, 1].
pub fn render_ellipses(n: usize, ellipses: &[Ellipse]) -> RealTensor {
    let coord = |i: usize| (2 * i + 1) as f64 / n as f64 - 1.0;
    let mut data = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            let (y, x) = (coord(r), coord(c));
            let v: f64 = ellipses.iter().filter(|e| e.contains(y, x)).map(|e| e.value).sum();
            data[r * n + c] = v.clamp(0.0, 1.0);
        }
    }
    RealTensor::new(vec![n, n], data).expect("n > 0")
}

/// Random piecewise-constant phantom: a body ellipse spanning about half the
/// field of view and
/// `n_ellipses - 1` smaller inclusions that raise or lower the intensity.
pub fn make_phantom(n: usize, n_ellipses: usize, seed: u64) -> Result<RealTensor> {
    if !n.is_power_of_two() || n < 4 {
        return Err(KunnError::invalid(format!("phantom size {n} must be a power of two >= 4")));
    }
    if n_ellipses == 0 {
        return Err(KunnError::invalid("phantom needs at least one ellipse"));
    }
    let mut rng = super::stream_rng(seed, 0);
    let mut ellipses = Vec::with_capacity(n_ellipses);
    ellipses.push(Ellipse {
        cy: rng.gen_range(-0.03..0.03),
        cx: rng.gen_range(-0.03..0.03),
        ry: rng.gen_range(0.42..0.51),
        rx: rng.gen_range(0.33..0.45),
        angle: rng.gen_range(-0.3..0.3),
        value: rng.gen_range(0.6..0.8),
    });
    for _ in 1..n_ellipses {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        ellipses.push(Ellipse {
            cy: rng.gen_range(-0.24..0.24),
            cx: rng.gen_range(-0.18..0.18),
            ry: rng.gen_range(0.05..0.15),
            rx: rng.gen_range(0.05..0.15),
            angle: rng.gen_range(0.0..std::f64::consts::PI),
            value: sign * rng.gen_range(0.15..0.3),
        });
    }
    Ok(render_ellipses(n, &ellipses))
}

/// Fraction of pixels where the forward difference along either axis is
/// nonzero (non-circular; the last row/column only count their inner step).
pub fn gradient_support_fraction(img: &RealTensor) -> f64 {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let d = img.data();
    let mut count = 0usize;
    for r in 0..h {
        for c in 0..w {
            let v = d[r * w + c];
            let dy = r + 1 < h && d[(r + 1) * w + c] != v;
            let dx = c + 1 < w && d[r * w + c + 1] != v;
            if dy || dx {
                count += 1;
            }
        }
    }
    count as f64 / (h * w) as f64
}
