//! Simulation and scaling-limit analysis of structured population models
//! driven by piecewise-deterministic Markov processes on finite measures.

pub mod engine;
pub mod error;
pub mod flow;
pub mod harness;
pub mod limit;
pub mod measure;
pub mod model;
pub mod rng;
pub mod zoo;

pub use error::{Error, Result};
pub use measure::{pair, AtomicMeasure, Atom, Deposit, Individual, TestFunction};
pub use model::{Channel, ChannelConstants, ModelSpec};
