//! Micro-macro simulation of dilute polymer solutions.
//!
//! Stochastic dumbbell ensembles coupled to a 1D shear flow, deterministic
//! constitutive models (Oldroyd-B, FENE-P, corotational) and a 2D
//! Fokker-Planck solver used as oracles, variance reduction for the Monte
//! Carlo stress, and a greedy rank-1 tensor solver for the Poisson problem.
//!
//! Every solver is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`.

pub mod dumbbell;
pub mod error;
pub mod fokker_planck;
pub mod io;
pub mod linalg;
pub mod macro_models;
pub mod pgd;
pub mod rng;
pub mod scalar;
pub mod shear;
pub mod tensor;
pub mod variance;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vector = tensor::Vector<f64>;
pub type Tensor = tensor::Tensor<f64>;
pub type FlowParams = dumbbell::FlowParams<f64>;
pub type ForceModel = dumbbell::ForceModel<f64>;
pub type DumbbellEnsemble = dumbbell::DumbbellEnsemble<f64>;
pub type StressTensor = dumbbell::StressTensor<f64>;
pub type ConformationTensor = macro_models::ConformationTensor<f64>;
pub type DensityGrid = fokker_planck::DensityGrid<f64>;
pub type PgdSolution = pgd::PgdSolution<f64>;
pub type ShearState = shear::ShearState<f64>;
