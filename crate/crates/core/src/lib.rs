//! Provably sufficient, subset-minimal explanations for feed-forward network
//! predictions.
//!
//! The crate is `no_std` (with `alloc`). It contains the pure algorithmic
//! pieces: closed-interval arithmetic, the concrete network model, sound box
//! propagation, the neuron-merging abstraction with refinement, sufficiency
//! queries, and the two greedy explanation searches. File formats and the CLI
//! live in the `provex` crate.

#![no_std]
// negated float comparisons are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod abstraction;
pub mod bounds;
mod error;
pub mod explain;
pub mod fixtures;
pub mod interval;
mod matrix;
pub mod network;
pub mod queries;
mod rng;

pub use abstraction::{build_abstract, refine, score_neurons, AbstractNetwork, MergeSpec, ReductionSchedule};
pub use bounds::{propagate_abstract, propagate_box, LayerBounds};
pub use error::{Error, Result};
pub use explain::{
    count_work, explain_abstraction_refinement, explain_baseline, order_features, AbstractionBounds,
    Backend, Clock, Explanation, ExplanationStatus, ExplanationTrace, ExplainOptions, FeatureGrouping, NullClock,
    FeatureOrdering, OrderingPolicy, RateWork, Snapshot, StepOutcome, StepVerdict, TraceStep, WorkReport,
};
pub use interval::{Interval, IntervalVector};
pub use matrix::Matrix;
pub use network::{ActivationKind, ConcreteNetwork, Layer};
pub use queries::{
    check_abstract, check_concrete, check_regression, gen_counterexample, oracle_check, CandidateConfig,
    OracleVerdict, RegressionQuery, SufficiencyQuery, Verdict,
};
pub use rng::SplitMix;
