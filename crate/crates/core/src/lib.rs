//! Analytical Hessian-vector products for sequential two-site gate circuits
//! evaluated over matrix product states, plus the Riemannian optimizers and
//! spectral diagnostics built on top of them.
//!
//! The crate is `no_std` and only needs `alloc`. IO, configuration and the
//! command line live in the companion `tnhvp-cli` crate.
//!
//! Conventions used throughout:
//!
//! * A two-site gate acting on sites `(i, i+1)` uses the local basis index
//!   `2*s_i + s_{i+1}`; in dense statevectors site 0 is the most significant bit.
//! * The overlap of a circuit is the bilinear form `T = phi^T (G_K ... G_1) psi`.
//!   Backward ("dual") states are stored already conjugated, so every
//!   contraction in this crate is conjugate-free. A caller who wants
//!   `<phi|U|psi>` passes `phi.conj()` as the dual state.
//! * The gate gradient `dT/dG` has the output (row) index on the dual side,
//!   `E[P][Q] = sum over spectators of phi~[..P..] psi[..Q..]`.
//! * Pauli tangent basis elements are ordered `(I, X, Y, Z)` row-major over `(a, b)`.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod circuit;
pub mod complex;
pub mod cost;
pub mod error;
pub mod exec;
pub mod fd;
pub mod kernel;
pub(crate) mod linalg;
pub mod manifold;
pub mod mps;
pub mod objective;
pub mod optim;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod spectral;
pub mod tangent;
pub mod trotter;

pub use circuit::{build_brickwall, BrickwallCircuit, Placement, TangentDirection};
pub use complex::{CMat4, GateVec, C64};
pub use cost::{empirical_risk, EmpiricalRisk, Sample, SampleDerivatives};
pub use error::{Error, Result};
pub use exec::{Executor, SequentialExecutor};
pub use kernel::{hvp_kernel, hvp_kernel_ti, KernelOptions, OverlapDerivatives, PassOrder, TangentMode};
pub use mps::{Mps, Sweep, TruncationPolicy};
pub use objective::CircuitObjective;
pub use optim::{riemannian_adam_minimize, riemannian_adam_minimize_observed, trust_region_minimize, trust_region_minimize_observed, AdamConfig, ConvergenceTrace, Problem, TrustRegionConfig, Vector};
