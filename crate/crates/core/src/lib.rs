//! Amplitude equations for SPDEs with quadratic nonlinearity, a Galerkin
//! simulator, and Monte Carlo checks of the approximation.

pub mod burgers;
pub mod derive;
pub mod error;
pub mod experiments;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
