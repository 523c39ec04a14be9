//! Policy-based adversarial attacks on cooperative multi-agent RL.
//!
//! The crate bundles two built-in environments, a MAPPO trainer for
//! cooperative victims, the adversarial minority influence attack with its
//! baselines and ablations, countermeasures, and an experiment harness.

pub mod attack;
pub mod defense;
pub mod env;
pub mod error;
pub mod harness;
pub mod influence;
pub mod mappo;
pub mod nn;
pub mod opponent;
pub mod tao;

pub use error::{AmiError, Result};
