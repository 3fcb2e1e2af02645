//! Numerical laboratory for Lyapunov-exponent rigidity of hyperbolic toral
//! automorphisms and their perturbations.
//!
//! The pipeline runs linear analysis of `L`, then the perturbation `f`, its
//! derivative cocycle, periodic data, Livsic equations, the conjugacy, and
//! unstable entropy. Every numerical stage is generic over [`scalar::Real`];
//! the aliases below fix `f64`, which is what the tolerances are tuned for.

pub mod cocycle;
pub mod conjugacy;
pub mod entropy;
pub mod linalg;
pub mod livsic;
pub mod perturbation;
pub mod periodic;
pub mod scalar;
pub mod toral_linear;

pub use scalar::Real;
pub use toral_linear::{analyze, IntMatrix, LinearAnalysis, LinearError, SpectralData};

pub type PerturbedMapF64 = perturbation::PerturbedMap<f64>;
pub type MatF64 = linalg::Mat<f64>;
pub type LyapunovFieldF64 = cocycle::LyapunovField<f64>;
pub type PeriodicOrbitRecordF64 = periodic::PeriodicOrbitRecord<f64>;
pub type TransferFunctionF64 = livsic::TransferFunction<f64>;
pub type ConjugacyFieldF64 = conjugacy::ConjugacyField<f64>;
pub type LeafSegmentF64 = entropy::LeafSegment<f64>;

/// Any stage error.
#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Perturbation(#[from] perturbation::PerturbationError),
    #[error(transparent)]
    Cocycle(#[from] cocycle::CocycleError),
    #[error(transparent)]
    Periodic(#[from] periodic::PeriodicError),
    #[error(transparent)]
    Livsic(#[from] livsic::LivsicError),
    #[error(transparent)]
    Conjugacy(#[from] conjugacy::ConjugacyError),
    #[error(transparent)]
    Entropy(#[from] entropy::EntropyError),
}
