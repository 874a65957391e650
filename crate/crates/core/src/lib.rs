//! Monteiro–Svaiter acceleration without bisection.
//!
//! The crate has three layers:
//!
//! * [`objectives`] and [`data`]: logistic regression on labelled datasets,
//!   the cubic-chain worst case, and quadratics, behind the [`Objective`] trait.
//! * [`oracles`] and [`linalg`]: MS oracles, from a plain gradient step to the
//!   adaptive regularized Newton oracle and its matrix-free variant.
//! * [`accel`] and [`baselines`]: the outer loops that turn an oracle into an
//!   optimizer, and the methods they are compared against.
//!
//! ```
//! use msaccel::{accel, objectives, oracles};
//! use ndarray::array;
//!
//! let f = objectives::make_quadratic(array![[1.0, 0.0], [0.0, 4.0]], array![1.0, 1.0]).unwrap();
//! let oracle = oracles::AmsnOracle { sigma: 0.5, lazy: oracles::LazyPolicy::Always };
//! let trace = accel::optimal_ms_run(
//!     &f,
//!     &array![0.0, 0.0],
//!     &oracle,
//!     &accel::OptMsConfig::default(),
//!     accel::Budget::calls(30),
//!     None,
//! )
//! .unwrap();
//! assert!((&trace.final_x - &array![1.0, 0.25]).iter().all(|d| d.abs() < 1e-6));
//! ```

pub mod accel;
pub mod baselines;
pub mod data;
pub mod error;
pub mod linalg;
pub mod objectives;
pub mod oracles;
pub mod rng;

pub use accel::{Budget, Reference, RunTrace, TraceRecord};
pub use data::Dataset;
pub use error::{Error, Result};
pub use objectives::Objective;
pub use oracles::{MsOracle, OracleResult};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/objectives.md")]
    mod objectives {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/acceleration.md")]
    mod acceleration {}
    #[doc = include_str!("../../../book/src/linalg.md")]
    mod linalg {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
}
