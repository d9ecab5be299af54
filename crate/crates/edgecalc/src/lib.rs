//! Numerical laboratory for the edge-degenerate calculus on the local model
//! `[0, eps) x X x E` and the special Lagrangian deformation operator.

pub mod asymptotics;
pub mod cli;
pub mod deformation;
pub mod ensemble;
pub mod error;
pub mod fft;
pub mod forms;
pub mod grid;
pub mod io;
pub mod mellin;
pub mod operators;
pub mod sobolev;
pub mod symbols;
pub mod verify;

pub use error::{Error, Result};
