//! Inland waterbody detection (IWD) from GNSS-R delay-Doppler maps.
//!
//! The crate implements the full desk-scale pipeline:
//!
//! - [`ddm`] — DDM domain types, SNR and quality filtering, central-region
//!   extraction, Otsu-binarized water masks, JSONL/PGM I/O.
//! - [`numerics`] — a small reverse-mode autodiff tape over dense `f64`
//!   tensors, complex state containers, and the Adam optimizer.
//! - [`qsim`] — an exact 4-qubit state-vector simulator with adjoint and
//!   parameter-shift gradients for the 16 quantum feature-refinement heads.
//! - [`dat`] — the DDM-aware transformer encoder producing the 64-dim token.
//! - [`models`] — the quantum (`queen`) and classical (`transformer`) model
//!   assemblies, prediction, and checkpoint serialization.
//! - [`training`] — BCE + soft-kappa losses and the deterministic training
//!   loop.
//! - [`evaluation`] — confusion-matrix metrics, 0.01° grid aggregation, and
//!   the detection-rate statistic.
//! - [`datagen`] — seeded synthetic scenes: river masks, specular-point
//!   tracks, and coherent/incoherent DDM synthesis.
//! - [`pipeline`] — file-level orchestration shared by the CLI and tests.

pub mod dat;
pub mod datagen;
pub mod ddm;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod numerics;
pub mod pipeline;
pub mod qsim;
pub mod training;

pub use error::Error;
pub type Result<T> = std::result::Result<T, Error>;
