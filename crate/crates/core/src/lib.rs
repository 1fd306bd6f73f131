//! RL-NTM: a neural Turing machine variant whose discrete tape actions are
//! trained with Reinforce and whose continuous outputs are trained with
//! backpropagation, together with an exact gradient checker that enumerates
//! the action space of small instances.

pub mod checkpoint;
pub mod controller;
pub mod curriculum;
pub mod engine;
pub mod error;
pub mod gradcheck;
pub mod numerics;
pub mod reinforce;
pub mod rng;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};
