//! Gradient-alignment laboratory.
//!
//! Trains small ReLU classifiers plainly, adversarially with PGD, or with a
//! penalty that aligns the input gradient with the residual toward the
//! closest other-class support; attacks them; and measures how input
//! gradients line up with those residuals.

pub mod adam;
pub mod alignment;
pub mod cli;
pub mod attacks;
pub mod array;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gan;
pub mod gradcheck;
pub mod mlp;
pub mod model;
pub mod persist;
pub mod pool;
pub mod report;
pub mod rng;
pub mod table;
pub mod theory;
pub mod training;

pub use array::DenseArray;
pub use error::{Error, Result};
pub use mlp::{Mlp, MlpGrad, Tape};
pub use model::{forward, input_gradient, LinearModel, Model, RadialSpheresModel};
pub use rng::Rng;
