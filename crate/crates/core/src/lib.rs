//! Partially solvable resonant Hamiltonian systems.
//!
//! This crate implements cubic and quintic resonant systems of the form
//!
//! ```text
//! i dα_n/dt = Σ_{n+m=k+l} C_{nmkl} ᾱ_m α_k α_l
//! i dα_n/dt = Σ_{n+n₂+n₃=k₁+k₂+k₃} C_{n n₂ n₃ k₁ k₂ k₃} ᾱ_{n₂} ᾱ_{n₃} α_{k₁} α_{k₂} α_{k₃}
//! ```
//!
//! together with the tooling needed to study the class of coupling
//! coefficients that satisfy the finite-difference solvability condition:
//!
//! * [`mode_space`]: mode vectors, mode weights `f_n`, power series helpers.
//! * [`special_functions`]: Hermite/Legendre/Chebyshev recurrences and
//!   Gaussian quadrature rules.
//! * [`families`]: every concrete coefficient family, in `S` and `C` form.
//! * [`identity`]: enumeration of index tuples and the solvability checks.
//! * [`engine`]: coupling tensors, equations of motion, conserved quantities
//!   and the RK4 integrator.
//! * [`stationary`]: closed-form stationary states and their verification.
//! * [`manifold`]: the three-parameter invariant manifold of cubic systems.
//! * [`cli`]: the `resonant` command-line front end.

pub mod cli;
pub mod engine;
pub mod error;
pub mod families;
pub mod identity;
pub mod manifold;
pub mod mode_space;
pub mod special_functions;
pub mod stationary;

pub use error::{Error, Result};
pub use num_complex::Complex64;
