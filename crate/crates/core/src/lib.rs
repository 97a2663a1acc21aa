//! # driftlab
//!
//! A numerical laboratory for drift-field particle transport.
//!
//! Generated samples are moved toward data by a vector field built from
//! kernel-weighted attraction to data points and repulsion from generated
//! points. How that field is normalized decides whether it is the gradient of
//! a scalar potential:
//!
//! | Field | Normalizer | Conservative |
//! |-------|------------|--------------|
//! | [`FieldKind::Unnormalized`] | none | always (it is an MMD gradient) |
//! | [`FieldKind::Drift`] | base-kernel KDE | only for the Gaussian kernel |
//! | [`FieldKind::SharpNormalized`] | sharp-kernel KDE | for every radial kernel |
//!
//! The crate provides the radial kernels with their exact sharp/flat
//! transforms ([`kernels`]), stable KDE and log-KDE ([`density`]), every field
//! construction including the concatenated-softmax variant ([`fields`]),
//! finite-difference Jacobians and the generalized curl ([`calculus`]), the
//! scalar objectives ([`losses`]), fixed-point particle transport
//! ([`transport`]) and a claim checklist that ties it all together
//! ([`verify`]).

pub mod calculus;
pub mod density;
pub mod error;
pub mod fields;
pub mod kernels;
pub mod losses;
pub mod quadrature;
pub mod transport;
pub mod verify;

pub use calculus::{CurlReport, StepRule, Verdict};
pub use density::ParticleSet;
pub use error::{Error, Result};
pub use fields::{FieldKind, FieldSpec};
pub use kernels::{KernelFamily, KernelLevel, RadialKernel};
pub use losses::{LossKind, LossSpec};
pub use transport::{ToyDistribution, TransportConfig, TransportTrace};
