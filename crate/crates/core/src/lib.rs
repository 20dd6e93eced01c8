//! Online microgrid battery scheduling: a learned model searched with MCTS
//! picks the battery move, a conic optimal power flow dispatches the rest.

pub mod agent;
pub mod baselines;
pub mod conic;
pub mod env;
pub mod evaluate;
pub mod grid;
pub mod nn;
pub mod opf;
pub mod scalar;
pub mod training;

pub use scalar::Scalar;

/// Double-precision instances of the generic numerical types.
pub type ConicProgram = conic::ConicProgram<f64>;
pub type ConicSolution = conic::ConicSolution<f64>;
pub type SolverSettings = conic::SolverSettings<f64>;
pub type ParameterSet = nn::ParameterSet<f64>;
pub type Tensor = nn::Tensor<f64>;
pub type Adam = nn::Adam<f64>;
pub type LearnedModel = agent::LearnedModel<f64>;
