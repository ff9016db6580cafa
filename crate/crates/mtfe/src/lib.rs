//! Hybrid mass-transport / finite-element solver for one-dimensional
//! taxis-diffusion-reaction systems.

pub mod analysis;
pub mod config;
pub mod driver;
pub mod error;
pub mod euler;
pub mod fvfd;
pub mod mass;
pub mod model;
pub mod reaction;
pub mod snapshot;
pub mod spline;
pub mod stability;
pub mod transport;
pub mod tridiag;

pub use error::{Error, Result};
