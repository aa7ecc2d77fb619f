//! Joint compression, offloading and resource allocation for a
//! user-fog-cloud system.
//!
//! Each user either runs its task locally, or compresses the input and
//! ships it to a fog node (Mode 1), to the cloud through the fog
//! (Mode 2), or to the cloud after the fog recompresses it (Mode 3). The
//! solvers pick modes, compression ratios, CPU frequencies, transmit power,
//! bandwidth, fog CPU shares and backhaul shares so that the largest
//! weighted energy-and-delay cost over all users is as small as possible.
//!
//! * [`model`]: domain types and cost formulas.
//! * [`fit`]: power-law fits of compression workload curves.
//! * [`convex`]: barrier solver and the per-user stage-1 problems.
//! * [`jcora`]: the exact bisection algorithm for Modes 1 and 2.
//! * [`recompress`]: the Mode-3 extension and its three selection engines.
//! * [`oracle`]: brute-force reference solvers used by the tests.
//! * [`bench`]: scenario generation, baselines, sweeps and file formats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod convex;
pub mod error;
pub mod fit;
pub mod jcora;
pub mod model;
pub mod oracle;
pub mod recompress;
pub mod select;

pub use error::{Error, Result};
pub use model::{Decision, Instance, Mode, SystemConfig, UserProfile};

// The guide's code blocks run as doc-tests, so the book cannot drift from
// the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/system-model.md")]
    mod system_model {}
    #[doc = include_str!("../../../book/src/workload-fitting.md")]
    mod workload_fitting {}
    #[doc = include_str!("../../../book/src/min-max-solver.md")]
    mod min_max_solver {}
    #[doc = include_str!("../../../book/src/recompression.md")]
    mod recompression {}
    #[doc = include_str!("../../../book/src/validation.md")]
    mod validation {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
