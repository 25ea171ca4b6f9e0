//! Per-Fourier-mode spectral analysis of the linearized Vlasov-Maxwell-Boltzmann
//! system: Hermite velocity discretization, mode generators, Lyapunov
//! functionals as Hermitian forms, exact-in-time propagation and decay-rate
//! analysis.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`). The `f64`
//! aliases below are what the command-line harness uses.

pub mod error;
pub mod generator;
pub mod linalg;
pub mod lyapunov;
pub mod propagator;
pub mod quadrature;
pub mod scalar;
pub mod collision;
pub mod decay;
pub mod velocity_basis;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Basis = velocity_basis::VelocityBasis<f64>;
pub type Collision = collision::CollisionOperator<f64>;
pub type Spec = generator::ModelSpec<f64>;
pub type State = generator::ModeState<f64>;
pub type ModeGenerator = generator::Generator<f64>;
pub type Form = lyapunov::QuadForm<f64>;
pub type Verdict = lyapunov::LyapunovVerdict<f64>;
pub type ModePropagator = propagator::Propagator<f64>;
pub type ModeTrajectory = propagator::Trajectory<f64>;
