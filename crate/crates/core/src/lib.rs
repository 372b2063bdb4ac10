//! Generalized Lagrangian neural networks.
//!
//! Learns the dynamics of dissipative mechanical systems by fitting a scalar
//! Lagrangian network together with a generalized-force network and solving
//! the generalized Euler-Lagrange equation for accelerations. Includes the
//! ground-truth physics of a damped harmonic oscillator and a compound double
//! pendulum with axle friction, an RK4 integrator, dataset generation, and
//! Adam training for both the GLNN and a direct-regression baseline.
//!
//! Numeric code is generic over [`Real`]; the aliases below fix the scalar
//! to `f64`, which is what training and the command-line tools use.

pub mod autodiff;
pub mod datagen;
pub mod dual;
pub mod error;
pub mod integrate;
pub mod linalg;
pub mod mlp;
pub mod models;
pub mod oracles;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::{Float, Real};

pub type Vector = linalg::Vector<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type MlpParams = mlp::MlpParams<f64>;
pub type Model = models::Model<f64>;
pub type GlnnModel = models::GlnnModel<f64>;
pub type BaselineModel = models::BaselineModel<f64>;
pub type State = oracles::State<f64>;
pub type Rollout = integrate::Rollout<f64>;
