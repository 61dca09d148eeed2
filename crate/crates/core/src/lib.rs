//! Ptychographic simulation and reconstruction.
//!
//! * [`field`]: complex/real grids and the centred DFT pair
//! * [`forward`]: probes, scan plans, phantoms and diffraction simulation
//! * [`epie`]: the ePIE solver and reliability-sorted phase unwrapping
//! * [`stitch`]: crop-and-feather blending of patch predictions
//! * [`metrics`]: offset-corrected error metrics and Fourier ring correlation

pub mod epie;
pub mod error;
pub mod field;
pub mod forward;
pub mod metrics;
pub mod stitch;
mod unwrap;

pub use error::{Error, Result};
pub use field::{ComplexField, Grid, RealField};
pub use unwrap::unwrap_phase;
