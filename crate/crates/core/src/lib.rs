//! Learning from unsolved problems by reformulating them into easier,
//! answer-preserving formats, scheduling those formats per instance, and
//! optimizing with group-normalized policy gradients.
//!
//! The modules follow the data flow:
//! [`model`] → [`verify`] → [`reformulate`] → [`curriculum`] / [`grpo`] /
//! [`sim`] → [`eval`] → [`pipeline`].

pub mod curriculum;
pub mod eval;
pub mod grpo;
pub mod model;
pub mod pipeline;
pub mod reformulate;
pub mod seed;
pub mod sim;
pub mod verify;

pub use model::{Dataset, DifficultyLevel, Problem, Validation, Variant};
