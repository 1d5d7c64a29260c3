//! Dense matrix arithmetic, seeded random number generation, and the small
//! linear-algebra kernel (Frobenius norm, singular values) every other
//! module builds on.

mod matrix;
mod rng;
mod svd;

pub use matrix::Matrix;
pub use rng::{derive_seed, Rng};
pub use svd::{singular_values, singular_values_with_budget};
