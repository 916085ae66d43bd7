//! `report.json`: the result of one explanation run.
//!
//! Top-level keys are `final`, `status`, `trace`, `work` and `config`.
//! Feature and group labels are 1-based strings. Every wall-clock field
//! ends in `_seconds`; [`strip_wall_time`] removes them so two runs can be
//! compared byte for byte.

use serde::{Deserialize, Serialize};

use provex_core::explain::{ExplanationTrace, StepOutcome, StepVerdict};
use provex_core::{count_work, Explanation, ExplanationStatus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(rename = "final")]
    pub final_set: Vec<String>,
    pub status: String,
    pub trace: TraceDoc,
    pub work: WorkDoc,
    pub config: ConfigDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDoc {
    pub algorithm: String,
    /// Predicted class, 1-based.
    pub class: usize,
    pub input_dim: usize,
    pub groups: usize,
    /// Retained input features, 1-based.
    pub final_features: Vec<usize>,
    pub steps: Vec<StepDoc>,
    pub snapshots: Vec<SnapshotDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDoc {
    pub group: String,
    pub rho: f64,
    pub verdict: String,
    pub witness_used: bool,
    /// `null` when infinite (single-class networks).
    pub margin: Option<f64>,
    pub neurons: usize,
    pub candidate_evaluations: usize,
    pub outcome: String,
    pub size_after: usize,
    pub elapsed_seconds: f64,
    pub build_seconds: f64,
    pub search_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDoc {
    pub rho: f64,
    pub explanation: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateDoc {
    pub rho: f64,
    pub queries: usize,
    pub neuron_evaluations: u64,
    pub mean_query_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkDoc {
    pub features: usize,
    pub refinements: usize,
    pub queries: usize,
    pub neuron_evaluations: u64,
    pub bound_pass_neurons: u64,
    pub candidate_evaluations: usize,
    pub per_rate: Vec<RateDoc>,
    pub wall_time_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigDoc {
    pub network: String,
    pub input: String,
    pub epsilon: f64,
    pub order: String,
    pub groups: String,
    pub schedule: Vec<f64>,
    pub timeout: Option<f64>,
    pub backend: String,
    pub budget: u64,
    pub seed: u64,
    pub algorithm: String,
    pub abstraction_bounds: String,
    pub random_candidates: usize,
}

pub fn labels(groups: &[usize]) -> Vec<String> {
    groups.iter().map(|g| (g + 1).to_string()).collect()
}

/// Parses 1-based labels back to 0-based indices.
pub fn parse_labels(labels: &[String]) -> Result<Vec<usize>, String> {
    labels
        .iter()
        .map(|l| match l.trim().parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v - 1),
            _ => Err(format!("{l:?} is not a 1-based label")),
        })
        .collect()
}

pub fn status_name(status: ExplanationStatus) -> &'static str {
    match status {
        ExplanationStatus::MinimalSufficient => "MinimalSufficient",
        ExplanationStatus::SufficientEarlyStop => "SufficientEarlyStop",
    }
}

fn verdict_name(v: StepVerdict) -> &'static str {
    match v {
        StepVerdict::Sufficient => "sufficient",
        StepVerdict::Uncertain => "uncertain",
        StepVerdict::Witness => "insufficient",
    }
}

fn outcome_name(o: StepOutcome) -> &'static str {
    match o {
        StepOutcome::Dropped => "dropped",
        StepOutcome::Pinned => "pinned",
        StepOutcome::Refined => "refined",
    }
}

pub fn work_doc(trace: &ExplanationTrace, wall_time_seconds: f64) -> WorkDoc {
    let w = count_work(trace);
    WorkDoc {
        features: w.features,
        refinements: w.refinements,
        queries: w.queries,
        neuron_evaluations: w.neuron_evaluations,
        bound_pass_neurons: w.bound_pass_neurons,
        candidate_evaluations: w.candidate_evaluations,
        per_rate: w
            .per_rate
            .iter()
            .map(|r| RateDoc {
                rho: r.rho,
                queries: r.queries,
                neuron_evaluations: r.neuron_evaluations,
                mean_query_seconds: r.mean_query_time.as_secs_f64(),
            })
            .collect(),
        wall_time_seconds,
    }
}

pub fn build_report(
    explanation: &Explanation,
    algorithm: &str,
    class: usize,
    input_dim: usize,
    wall_time_seconds: f64,
    config: ConfigDoc,
) -> Report {
    let trace = &explanation.trace;
    Report {
        final_set: labels(&explanation.groups),
        status: status_name(trace.status).into(),
        trace: TraceDoc {
            algorithm: algorithm.into(),
            class: class + 1,
            input_dim,
            groups: trace.groups,
            final_features: explanation.features.iter().map(|f| f + 1).collect(),
            steps: trace
                .steps
                .iter()
                .map(|s| StepDoc {
                    group: (s.group + 1).to_string(),
                    rho: s.rho,
                    verdict: verdict_name(s.verdict).into(),
                    witness_used: s.witness_used,
                    margin: s.margin.is_finite().then_some(s.margin),
                    neurons: s.neurons,
                    candidate_evaluations: s.candidate_evaluations,
                    outcome: outcome_name(s.outcome).into(),
                    size_after: s.size_after,
                    elapsed_seconds: s.elapsed.as_secs_f64(),
                    build_seconds: s.build_time.as_secs_f64(),
                    search_seconds: s.search_time.as_secs_f64(),
                })
                .collect(),
            snapshots: trace
                .snapshots
                .iter()
                .map(|s| SnapshotDoc {
                    rho: s.rho,
                    explanation: labels(&s.groups),
                })
                .collect(),
        },
        work: work_doc(trace, wall_time_seconds),
        config,
    }
}

pub fn to_json(report: &Report) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(report).expect("reports always serialize");
    out.push(b'\n');
    out
}

/// Removes every `*_seconds` field, recursively.
pub fn strip_wall_time(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| !k.ends_with("_seconds"));
            map.values_mut().for_each(strip_wall_time);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_wall_time),
        _ => {}
    }
}
