//! Stochastic Galerkin and reduced basis solvers for elliptic and
//! Helmholtz-type PDEs with affine random coefficients.
//!
//! The pipeline: a truncated KL expansion supplies the affine coefficient
//! functions ([`randfield`]), Q1 finite elements assemble the physical
//! operator families ([`fem`], [`problem`]), orthonormal Legendre chaos
//! supplies the stochastic couplings ([`gpc`]), and the coupled system is
//! solved either in full — matrix-free Kronecker matvecs plus a mean-based
//! preconditioner ([`sgoperator`], [`krylov`]) — or through an adaptively
//! grown reduced basis with a residual-free greedy indicator and secant
//! prediction of the target dimension ([`rb`], [`rbsgm`]).

pub mod config;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod gpc;
pub mod krylov;
pub mod linalg;
pub mod oracle;
pub mod postproc;
pub mod problem;
pub mod quadrature;
pub mod randfield;
pub mod rb;
pub mod rbsgm;
pub mod sgoperator;

pub use config::{RunConfig, RunMode};
pub use error::{Error, Result};
pub use problem::{AffineProblem, ProblemKind};
pub use rbsgm::{RbsgmConfig, RbsgmReport};

/// Configure the global thread pool; must run before any parallel section.
pub fn set_threads(n: usize) -> std::result::Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}
