//! Numerical laboratory for the quantum sawtooth map under Markovian noise.

pub mod circuitgen;
pub mod closedform;
pub mod error;
pub mod fitkit;
pub mod kernels;
pub mod knoise;
pub mod krausgate;
pub mod lindblad;
pub mod qstate;
pub mod rng;
pub mod sawtooth;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
pub use qstate::{basis_state, fidelity_pure, fidelity_uhlmann, validate_density, DensityMatrix, FidelitySeries, IcSet, SeriesMeta, StateVector};
pub use sawtooth::{Direction, QsmParams};
pub use closedform::DynamicalRegime;
pub use fitkit::FitResult;
pub use knoise::ParamNoiseConfig;
pub use krausgate::GateNoiseConfig;
pub use lindblad::NoiseRates;
