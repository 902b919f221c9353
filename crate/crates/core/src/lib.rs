//! Symbolic regression of car-following dynamics.
//!
//! A recurrent policy samples pre-order expressions token by token under
//! structural constraints; candidates have their constants fitted, are scored
//! by a reward that combines normalized error, a complexity term and a
//! variable-interaction penalty, optionally evolved by genetic programming,
//! and fed back through a risk-seeking policy gradient. The interaction
//! penalty is driven by a neural interaction detector fitted to the data.
//! Built-in Krauss, GM and GHR simulators supply trajectory datasets.

pub mod cli;
pub mod constopt;
pub mod data;
pub mod error;
pub mod expr;
pub mod gp;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod search;
pub mod traffic;
pub mod vis;

pub use data::Dataset;
pub use error::{Error, Result};
