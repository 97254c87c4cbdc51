//! Voxel classification of diffusion MRI volumes into CSF, gray matter,
//! single-fiber and crossing-fiber white matter.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every algorithm of the
//! pipeline: the synthetic phantom, spherical-harmonic and tensor features,
//! per-feature 2D convolution, the SMO-trained one-vs-one SVM, the weighted
//! error metrics, the genetic kernel search and the fusion baseline. File
//! formats, the CLI and thread-parallel drivers live in the `hardiclass`
//! crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baseline;
pub mod error;
pub mod eval;
pub mod features;
pub mod filter;
pub mod ga;
mod linalg;
pub mod phantom;
pub mod sh;
pub mod sphere;
pub mod svm;
pub mod volume;

pub use error::{Error, Result};
pub use eval::{EvalReport, FitnessWeights};
pub use filter::{Dataset, KernelBank};
pub use svm::{SvmConfig, SvmModel};
pub use volume::{
    Dims, DwiVolume, FeatureKind, FeatureVolume, GradientTable, Label, LabelVolume, Voxel,
};
