//! Cascaded RIS channel estimation for time-varying channels.
//!
//! Pilots are sent only in a subset of blocks and with only a subset of RIS
//! elements switched on. A least-squares step recovers those sub-sampled
//! channels; an ODE-RNN interpolates them across all blocks of the frame and
//! an RK-structured feedforward network extrapolates them to the full array.

pub mod autodiff;
pub mod channel;
pub mod checkpoint;
pub mod complex;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod nn;
pub mod ode;
pub mod optim;
pub mod pilot;
pub mod rng;
pub mod sweep;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
