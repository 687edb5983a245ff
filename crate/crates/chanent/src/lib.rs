//! chanent — finite inclusions of multi-matrix algebras, their Jones towers,
//! completely positive bimodule maps, and the relative-entropy quantities
//! attached to them (Pimsner-Popa, Fourier-multiplier, Araki, sandwiched
//! Rényi), all at desk scale with dense complex linear algebra.
//!
//! Layout:
//! - [`mmalg`]: multi-matrix algebras, traces, functional calculus, GNS and
//!   Gram-quotient machinery.
//! - [`inclusion`]: inclusions 𝒩 ⊂ ℳ from Bratteli data, conditional
//!   expectations, Pimsner-Popa bases, the Jones index.
//! - [`tower`]: the basic construction, the relative tensor product model of
//!   L²(ℳ₁), canonical traces, Δ and Δ₀, downward constructions and the
//!   inverse canonical shift.
//! - [`chan`]: CP maps, Fourier multipliers, correspondences, derivatives,
//!   convolution, majorization and the index λ.
//! - [`entropy`]: Umegaki and sandwiched Rényi divergences, the multiplier
//!   entropy S_τ, closed forms for H(ℳ|𝒩), the partition-of-unity search,
//!   Araki entropy, and the theorem-check harness.

pub mod linalg;
pub mod mmalg;
pub mod inclusion;
pub mod tower;
pub mod chan;
pub mod entropy;

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("not self-adjoint within tolerance (defect {0:.3e})")]
    NotSelfAdjoint(f64),
    #[error("negative eigenvalue beyond tolerance ({0:.3e})")]
    NotPositive(f64),
    #[error("sesquilinear form not positive semidefinite (witness {0:.3e})")]
    FormNotPsd(f64),
    #[error("linear solve residual {residual:.3e} exceeds {tol:.3e} in {context}")]
    SolveResidual { context: String, residual: f64, tol: f64 },
    #[error("invalid inclusion data: {0}")]
    InvalidInclusion(String),
    #[error("majorization failure: {0}")]
    Majorization(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
