//! Joint maximum-a-posteriori estimation of a carrier frequency offset (CFO)
//! and a MIMO channel that fades over the pilot, plus the Bayesian and
//! classical Cramér-Rao bounds that the estimator is measured against.
//!
//! The crate is organised the way the signal model is built up:
//!
//! * [`pilots`]: training matrices `S` (scrambled periodic, time-division or
//!   custom) and the block expansion over receive antennas.
//! * [`channel`]: separable space-time correlation models, AR(1) fading
//!   trajectories and received-signal synthesis.
//! * [`estimator`]: the MMSE/MAP workspace (`A`, `b`), the lag statistics
//!   `z_k`, the metric `g(y, f)`, its derivative, the grid-plus-Newton CFO
//!   search and the per-receive-antenna extension.
//! * [`bounds`]: closed-form Fisher information, CRLB/BCRLB and a
//!   Monte-Carlo Fisher oracle.
//! * [`sim`]: experiment configuration, reproducible Monte-Carlo sweeps and
//!   CSV emission used by the `mimo-cfo` binary.
//!
//! All vectors over the space-time channel use one flat layout, see
//! [`Dims::index`].
//!
//! ```
//! use mimo_cfo::{channel::{CfoPrior, CorrelationModel}, estimator::*, pilots::PilotMatrix};
//! use mimo_cfo::channel::{synthesize_rx, Cfo};
//!
//! let pilot = PilotMatrix::time_division(2, 4, 10.0, None).unwrap();
//! let model = CorrelationModel::uncorrelated(2, 2, 1.0, 1.0).unwrap();
//! let stats = model.build_stats(pilot.n()).unwrap();
//! let ws = EstimatorWorkspace::build(&pilot, 2, &stats, CfoPrior::ml(0.0)).unwrap();
//!
//! // A time-invariant all-ones channel observed without noise.
//! let h = nalgebra::DVector::from_element(stats.dims().len(), num_complex::Complex64::new(1.0, 0.0));
//! let y = synthesize_rx::<rand_chacha::ChaCha8Rng>(&pilot, 2, &Cfo::Common(0.07), &h, None).unwrap();
//! let est = estimate_cfo_universal(&y, &ws, &UniversalOptions::default()).unwrap();
//! assert!((est.f_hat - 0.07).abs() < 1e-8);
//! ```

pub mod bounds;
pub mod channel;
mod dims;
mod error;
pub mod estimator;
pub mod linalg;
pub mod pilots;
pub mod rng;
pub mod sim;

pub use dims::Dims;
pub use error::{Error, Result};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;

/// Wraps a normalized frequency into the acquisition interval `[-0.5, 0.5)`.
pub fn wrap_frequency(f: f64) -> f64 {
    let w = f - f.round();
    if w >= 0.5 {
        w - 1.0
    } else if w < -0.5 {
        w + 1.0
    } else {
        w
    }
}
