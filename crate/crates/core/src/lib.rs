//! Optimal control toolkit for closed quantum systems.
//!
//! The crate covers two model families, a two-level system (ket and Bloch-vector
//! forms) and a Bose-Einstein condensate in a one-dimensional optical lattice,
//! and four ways of synthesizing controls for them:
//!
//! * [`pontryagin`]: extremal flows of the maximum principle and a shooting solver,
//! * [`grape`]: adjoint-gradient pulse optimization with piecewise or parameterized controls,
//! * [`analytic`]: closed-form time-optimal solutions and speed-limit diagnostics,
//! * [`search`]: gradient-free global optimizers.
//!
//! [`numerics`] holds the shared linear algebra and propagators, [`models`] the
//! concrete Hamiltonians.

pub mod analytic;
pub mod error;
pub mod grape;
pub mod models;
pub mod numerics;
pub mod pontryagin;
pub mod search;

pub use error::{Error, Result};
