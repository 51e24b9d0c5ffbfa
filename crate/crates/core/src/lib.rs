//! Normal approximation toolkit for sequences encoded by a kernel `g(x, z)`.
//!
//! Given a kernel `g(x, z)` with `sum_n phi_{Y_n}(x) z^n = 1 / g(x, z)`, where
//! `phi_{Y_n}` is the characteristic function of `Y_n`, the drift and
//! covariance of the central limit of `Y_n` are read off the derivatives of
//! `g` at `(0, 1)` ([`limits`]). The remaining modules check the pieces of that
//! recipe numerically: coefficient recovery ([`coeffs`]), the dominant pole and
//! its principal part ([`singularity`]), and a permutation laboratory for the
//! descent statistic of stack-sorted permutations ([`permlab`]).

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coeffs;
pub mod error;
pub mod exec;
pub mod kernel;
pub mod limits;
pub mod permlab;
pub mod series;
pub mod singularity;

pub use error::{Error, Result};
pub use exec::Execution;
pub use kernel::{
    kernel_self_check, make_defant_kernel, make_iid_kernel, DefantKernel, DerivMode, DiscreteDist,
    FnKernel, IidKernel, Kernel, KernelSpec, SelfCheck, SeriesKernel,
};
pub use limits::{compute_limits, LimitParams};
pub use series::{TruncatedSeries2, UniSeries, C64};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `3 - e`, the drift of `des(s(pi_n)) + 1` per unit `n`.
pub fn defant_mu() -> f64 {
    3.0 - std::f64::consts::E
}

/// `2 + 2e - e^2`, the limiting variance of `des(s(pi_n)) + 1` per unit `n`.
pub fn defant_sigma2() -> f64 {
    let e = std::f64::consts::E;
    2.0 + 2.0 * e - e * e
}
