//! Synthetic multi-coil acquisitions: piecewise-constant phantoms, smooth
//! coil sensitivities and phase, Cartesian sampling masks and noisy
//! measurements.

mod mask;
mod maps;
mod scene;
mod shapes;

pub use mask::{mask_entrywise, mask_partial_fourier, mask_random, mask_vd_regular, MaskKind, SamplingMask};
pub use maps::{make_coil_maps, make_phase, patch_energy_fraction, CoilMaps, PhaseMap};
pub use scene::{assemble, simulate, AcquisitionScene, MaskSpec, SceneConfig};
pub use shapes::{gradient_support_fraction, make_phantom, render_ellipses, Ellipse};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for one component of a seeded simulation.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
