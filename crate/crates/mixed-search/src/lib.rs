//! Two-stage quickest search over paired sequences with mixed observations.
//!
//! The problem: among a large pool of sequences, most emit noise-only
//! observations and a few carry a signal. Sequences are examined two at a
//! time. While scanning, each observation is the *sum* of one sample from
//! each sequence in the current pair, so a single measurement reflects both.
//! Once the pair looks promising enough, the search commits to it and
//! refines by sampling one sequence of the pair individually until it can
//! declare which member carries the signal. The goal is to minimize a total
//! cost of the form `c * E[samples] + Pr(wrong declaration)`.
//!
//! The crate is organized along the pipeline:
//!
//! * [`model`]: observation densities (per-sequence and mixed), priors,
//!   and sampling.
//! * [`belief`]: posterior recursions for the scanning and refinement
//!   stages, and the log-likelihood-ratio ray that connects them.
//! * [`dp`]: dynamic-programming solvers for the refinement value `g`, the
//!   scanning value `V_s` with its continue/switch branches, and the
//!   single-sequence baseline, plus finite-horizon reference evaluators.
//! * [`policy`]: decision regions extracted from the solved surfaces and
//!   the executable decision rules built on them.
//! * [`sim`]: Monte-Carlo trials, deterministic batch aggregation, strategy
//!   comparison, and SNR sweeps.
//! * [`io`]: canonical JSON serialization, surface bundles with integrity
//!   hashes, and CSV exports.
//! * [`cli`]: command-line front end over the above.

// Validation throughout uses the `!(x > 0.0)` form precisely because it is
// not equivalent to `x <= 0.0`: the negated comparison also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod cli;
pub mod dp;
pub mod io;
pub mod model;
pub mod policy;
pub mod sim;

// Compile and run the code blocks in the book chapters as doc-tests so the
// guide cannot drift out of sync with the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/beliefs.md")]
    mod beliefs {}
    #[doc = include_str!("../../../book/src/dynamic-programming.md")]
    mod dynamic_programming {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/numerics.md")]
    mod numerics {}
}
