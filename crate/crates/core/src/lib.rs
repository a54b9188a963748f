//! Heterogeneous interaction graph models for pre-match soccer outcome
//! prediction.

pub mod autograd;
pub mod cli;
pub mod container;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod match_net;
pub mod model;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod player_net;
pub mod service;
pub mod team_net;
pub mod training;

pub use error::{Error, Result};
