//! Relational zero-watermarking.
//!
//! An image is cut into a grid of patches, and the watermark is the set of
//! `K` patch pairs whose feature-space distance is predicted to survive
//! editing. Nothing is embedded in the pixels: the pair set is scrambled with
//! a keyed Arnold map and stored externally, and a suspect image is verified
//! by re-extracting its pair set and counting the overlap against a
//! threshold calibrated for a target false-positive rate.
//!
//! Module map:
//!
//! - [`imaging`]: decoding, resizing, patch grids and patch features.
//! - [`relational`]: pairwise distances, stability scores, top-K selection.
//! - [`perturb`]: the seeded attack suite and the surrogate editor.
//! - [`predictor`]: the MLP pair predictor, its training loop and checkpoints.
//! - [`watermark`]: pair ranks, Arnold scrambling, records, calibration,
//!   verification and the file registry.
//! - [`analysis`]: regression, rank correlation, residuals, uniqueness and
//!   robustness sweeps.
//! - [`synth`]: seeded synthetic images for tests and benchmarks.

pub mod analysis;
mod error;
pub mod imaging;
pub mod perturb;
pub mod predictor;
pub mod relational;
pub mod synth;
pub mod watermark;

pub use error::{Error, Result};
