//! Joint transmit beamforming and active-RIS reflection design for
//! radar-SINR maximization in an integrated sensing and communication
//! system.

pub mod channel;
pub mod conic;
pub mod driver;
pub mod error;
pub mod expcli;
pub mod feasinit;
pub mod matkernel;
pub mod risbf;
pub mod sigmodel;
pub mod txbf;

pub use error::{Error, Result};
