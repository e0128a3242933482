//! Nested multiscale time integrators for the weakly nonlinear Schrödinger equation
//! `i∂ₜu + Δu = ε|u|^{p−1}u` on a periodic box.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod nqs;
pub mod oracles;
pub mod params;
pub mod nts;
pub mod picard;
pub mod scheme;
pub mod spectral;
pub mod trees;
pub mod turbulence;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/nqs.md")]
    mod nqs {}
    #[doc = include_str!("../../../book/src/trees.md")]
    mod trees {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/convergence.md")]
    mod convergence {}
    #[doc = include_str!("../../../book/src/turbulence.md")]
    mod turbulence {}
}
