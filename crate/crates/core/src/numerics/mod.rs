//! Dense linear algebra, seeded randomness and the subgradient driver.

pub mod linalg;
pub mod matrix;
pub mod rng;
pub mod subgradient;

pub use linalg::{solve_spd, SpdFactor};
pub use matrix::{axpy, dot, norm, norm_sq, Matrix};
pub use rng::{random_matrix, Rng};
pub use subgradient::{subgradient_minimize, Minimum, StepRule};
