//! NOMA multi-UAV cellular offloading simulator with a shared-network
//! multi-agent deep Q-learning controller.

pub mod baselines;
pub mod channel;
pub mod checkpoint;
pub mod cli;
pub mod clustering;
pub mod config;
pub mod env;
pub mod error;
pub mod mdqn;
pub mod metrics;
pub mod nn;
pub mod noma;
#[doc(hidden)]
pub mod verify;
pub mod world;

pub use config::Config;
pub use error::{Error, Result};
