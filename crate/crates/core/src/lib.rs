//! Numerical laboratory for perturbed substochastic semigroups on l1.
//!
//! A model is a pair `(A, B)` with `A` diagonal and `B` a positive transition
//! kernel. The minimal semigroup `V(t)` generated by an extension of `A + B`
//! is built two ways: from the resolvent series in [`resolvent_engine`] and
//! from Dyson-Phillips iterates in [`dyson_phillips`]. [`honesty_analyzer`]
//! evaluates the functionals that decide whether a trajectory loses exactly
//! the mass its generator accounts for, and [`jump_simulator`] provides a
//! Monte Carlo check through the associated jump process.

pub mod dyson_phillips;
pub mod error;
pub mod honesty_analyzer;
pub mod jump_simulator;
pub mod model_zoo;
pub mod resolvent_engine;
pub mod state_space;

pub use dyson_phillips::Quadrature;
pub use error::{Error, Result};
pub use honesty_analyzer::{HonestyReport, Verdict};
pub use model_zoo::{zoo, Kernel, ModelSpec, PowerLaw, RateFn};
pub use resolvent_engine::{SeriesOptions, TruncationParams};
pub use state_space::{Bracket, PosSeq, SignedSeq, Tri};
