//! Finite-horizon robust MDP solvers, state-confounded robust MDPs, and a
//! small deep-RL stack for training with structural-causal-model data
//! augmentation.

pub mod augment;
pub mod envs;
pub mod error;
pub mod lp;
pub mod mdp;
pub mod nn;
pub mod oracle;
pub mod prob;
pub mod robust;
pub mod sac;
pub mod scm;
pub mod scmdp;
pub mod synthetic;
pub mod trainer;
pub mod hard_instance;

pub use error::{Result, RscError};
