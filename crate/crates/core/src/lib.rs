//! Classical simulation of quantum random feature maps: QRF, QRF_Rff, the
//! Ising-dynamics variant QDRF, classical random Fourier features, a
//! softmax readout, finite-shot sampling and spectral analysis of the
//! effective kernel.

pub mod config;
pub mod data;
pub mod encoding;
pub mod error;
pub mod features;
pub mod harness;
pub mod ising;
pub mod permutation;
pub mod readout;
pub mod rff;
pub mod rng;
pub mod spectral;
pub mod statevector;

pub use error::{Error, Result};
pub use permutation::{PermutationKind, PermutationSpec};
