//! RF-to-B-mode ultrasound reconstruction and zeroth-order adversarial
//! attacks on the reconstruction parameters.
//!
//! The crate reconstructs 8-bit B-mode images from raw RF frames through a
//! parameterized five-step pipeline (envelope detection, attenuation
//! compensation, scan conversion, log compression, pixel mapping), and
//! perturbs the attenuation coefficient and compression thresholds with a
//! black-box sign-gradient attack until a pluggable binary classifier flips
//! its decision. A speckle phantom generator and a trainable logistic
//! surrogate classifier make the whole loop self-contained.

pub mod attack;
pub mod classifier;
pub mod error;
pub mod eval;
pub mod io;
pub mod phantom;
pub mod recon;

pub use error::{Error, Result};
pub use recon::{
    reconstruct, BModeImage, ConvexGeometry, ReconParams, ReconPipeline, RfFrame,
    DEFAULT_OUT_SIZE,
};
