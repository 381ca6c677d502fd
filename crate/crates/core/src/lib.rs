//! Numerical toolkit for magnetic Schrödinger operators with Aharonov–Bohm type
//! singular potentials on the plane.
//!
//! The operator is `L = (-i∇ + A(θ)/r)^2 + a(θ)/r^2`. Its separation of
//! variables yields an angular family (a Hill equation with a flux), radial
//! Hankel transforms of non-integer order, and the transmutation operator `W`
//! that intertwines `L` with the free Aharonov–Bohm operator.

pub mod angular;
pub mod dmb;
pub mod error;
pub mod hankel;
pub mod intertwining;
pub mod kernel;
pub mod mellin;
pub mod par;
pub mod specfun;

pub use error::{Error, Result};
