//! Design and simulation toolkit for one-hop multigroup multicast relay
//! beamforming with the two-slot Alamouti amplify-and-forward scheme.
//!
//! The pipeline is: draw channels ([`network`]), build the SINR and power
//! quadratic forms ([`forms`]), solve the max-min SINR semidefinite
//! relaxations ([`sdr`], on top of the interior-point solver in [`sdp`]), and
//! round them to beamformers by Gaussian randomization. [`signalchain`]
//! simulates the physical layer to cross-check the forms and measure BER,
//! [`bounds`] estimates the randomization tail probabilities, and [`harness`]
//! runs whole scenario sweeps.

pub mod bounds;
pub mod error;
pub mod forms;
pub mod harness;
pub mod matkernel;
pub mod network;
pub mod sdp;
pub mod sdr;
pub mod signalchain;

pub use error::{Error, Result};
