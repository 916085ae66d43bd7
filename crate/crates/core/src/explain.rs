//! Greedy explanation searches.
//!
//! Both searches start from the full feature set and try to free one group at
//! a time in a fixed order; a group stays free only if the remaining set is
//! still certified sufficient. [`explain_baseline`] asks the concrete network
//! every time. [`explain_abstraction_refinement`] asks a merged abstraction
//! first and refines it only when the abstract query is inconclusive and no
//! concrete witness turns up.

use alloc::vec;
use alloc::vec::Vec;
use core::time::Duration;

use crate::abstraction::{build_abstract, refine, AbstractNetwork, ReductionSchedule};
use crate::bounds::{propagate_box, LayerBounds};
use crate::error::{Error, Result};
use crate::network::ConcreteNetwork;
use crate::queries::{
    abstract_margin, concrete_margin, find_counterexample, oracle_check, CandidateConfig, CandidateSearch,
    OracleVerdict, SufficiencyQuery,
};
use crate::rng::SplitMix;

/// A partition of the input features into ordered groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureGrouping {
    groups: Vec<Vec<usize>>,
    features: usize,
}

impl FeatureGrouping {
    pub fn new(groups: Vec<Vec<usize>>, features: usize) -> Result<Self> {
        let mut seen = vec![false; features];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::validation("groups", "empty group"));
            }
            for &i in g {
                match seen.get_mut(i) {
                    None => return Err(Error::validation("groups", "feature index out of range")),
                    Some(true) => return Err(Error::validation("groups", "feature appears in two groups")),
                    Some(s) => *s = true,
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::validation("groups", "groups do not cover every feature"));
        }
        Ok(FeatureGrouping { groups, features })
    }

    pub fn singletons(features: usize) -> Self {
        FeatureGrouping {
            groups: (0..features).map(|i| vec![i]).collect(),
            features,
        }
    }

    /// One group per pixel for interleaved channel data (`RGBRGB...`).
    pub fn pixels(channels: usize, pixels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::validation("groups", "channel count must be positive"));
        }
        Ok(FeatureGrouping {
            groups: (0..pixels).map(|p| (p * channels..(p + 1) * channels).collect()).collect(),
            features: channels * pixels,
        })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.features
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Feature mask of the union of the groups marked in `in_set`.
    fn mask(&self, in_set: &[bool]) -> Vec<bool> {
        let mut fixed = vec![false; self.features];
        for (g, _) in self.groups.iter().zip(in_set).filter(|(_, &k)| k) {
            for &i in g {
                fixed[i] = true;
            }
        }
        fixed
    }

    /// Sorted features covered by the given groups.
    pub fn features_of(&self, groups: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = groups.iter().flat_map(|&g| self.groups[g].iter().copied()).collect();
        out.sort_unstable();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderingPolicy {
    /// Least sensitive groups first, by `Σ |∂ logit_t / ∂ x_i|` over the group.
    SensitivityAscending,
    InOrder,
    Random(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureOrdering {
    pub policy: OrderingPolicy,
    /// Permutation of group indices, visited front to back.
    pub resolved: Vec<usize>,
}

pub fn order_features(
    net: &ConcreteNetwork,
    x: &[f64],
    grouping: &FeatureGrouping,
    policy: OrderingPolicy,
) -> Result<FeatureOrdering> {
    Error::check_len("instance", net.input_dim(), x.len())?;
    Error::check_len("grouping", net.input_dim(), grouping.features)?;
    let mut resolved: Vec<usize> = (0..grouping.len()).collect();
    match policy {
        OrderingPolicy::InOrder => {}
        OrderingPolicy::SensitivityAscending => {
            let grad = net.gradient(x, net.predict(x)?)?;
            let sens: Vec<f64> = grouping
                .groups
                .iter()
                .map(|g| g.iter().map(|&i| grad[i].abs()).sum())
                .collect();
            resolved.sort_by(|&a, &b| sens[a].total_cmp(&sens[b]).then(a.cmp(&b)));
        }
        OrderingPolicy::Random(seed) => {
            let mut rng = SplitMix::new(seed);
            for i in (1..resolved.len()).rev() {
                let j = rng.below(i + 1);
                resolved.swap(i, j);
            }
        }
    }
    Ok(FeatureOrdering { policy, resolved })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Box enclosure plus counterexample candidates; may leave a query
    /// undecided, in which case the group is kept.
    Enclosure,
    /// Branch and bound with a split budget. An exhausted budget keeps the
    /// group.
    Oracle { budget: u64 },
}

/// Which input box the merge bounds are computed over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AbstractionBounds {
    /// Bounds over the box of the query being decided. Merging is then exact
    /// for box propagation, so the abstract verdict equals the concrete one.
    #[default]
    QueryBox,
    /// Bounds over the whole ε-ball, computed once per run. Coarse rates
    /// lose precision and refinement does real work.
    Ball,
}

/// Time source for timeouts and step timings; the core crate has no clock.
pub trait Clock {
    fn elapsed(&self) -> Duration;
}

/// A clock that never advances.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullClock;

impl Clock for NullClock {
    fn elapsed(&self) -> Duration {
        Duration::ZERO
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ExplainOptions {
    pub candidates: CandidateConfig,
    /// Checked between groups and between refinement rounds.
    pub timeout: Option<Duration>,
    pub bounds: AbstractionBounds,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepVerdict {
    Sufficient,
    Uncertain,
    Witness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Dropped,
    Pinned,
    /// Inconclusive; retried at the next reduction rate.
    Refined,
}

/// One sufficiency query.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub group: usize,
    pub rho: f64,
    pub verdict: StepVerdict,
    /// A concrete witness decided this step.
    pub witness_used: bool,
    /// Time spent in the query itself.
    pub elapsed: Duration,
    /// Time spent on bounds and abstraction before the query.
    pub build_time: Duration,
    /// Time spent evaluating counterexample candidates after the query.
    pub search_time: Duration,
    /// `lo_t - max hi_j` of the enclosure that was queried.
    pub margin: f64,
    /// Neurons in the queried network.
    pub neurons: usize,
    pub candidate_evaluations: usize,
    pub outcome: StepOutcome,
    /// Groups in the explanation after this step.
    pub size_after: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub rho: f64,
    pub groups: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExplanationStatus {
    MinimalSufficient,
    /// Timed out; the set is sufficient but possibly not minimal.
    SufficientEarlyStop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplanationTrace {
    pub steps: Vec<TraceStep>,
    /// One entry per schedule rate, in schedule order: the explanation when
    /// that rate was last active.
    pub snapshots: Vec<Snapshot>,
    pub final_groups: Vec<usize>,
    pub status: ExplanationStatus,
    pub groups: usize,
    /// Neurons evaluated by bound passes that feed the abstraction.
    pub bound_pass_neurons: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    /// Retained group indices, ascending.
    pub groups: Vec<usize>,
    /// Retained features, ascending.
    pub features: Vec<usize>,
    pub trace: ExplanationTrace,
}

impl Explanation {
    pub fn status(&self) -> ExplanationStatus {
        self.trace.status
    }
}

fn since(clock: &dyn Clock, start: Duration) -> Duration {
    clock.elapsed().saturating_sub(start)
}

fn expired(clock: &dyn Clock, timeout: Option<Duration>) -> bool {
    timeout.is_some_and(|t| clock.elapsed() >= t)
}

fn members(in_set: &[bool]) -> Vec<usize> {
    in_set.iter().enumerate().filter(|(_, &k)| k).map(|(g, _)| g).collect()
}

#[derive(Clone, Copy, Default)]
struct Timing {
    build: Duration,
    query: Duration,
    search: Duration,
}

struct Run<'a> {
    grouping: &'a FeatureGrouping,
    base: SufficiencyQuery,
    in_set: Vec<bool>,
    steps: Vec<TraceStep>,
}

impl<'a> Run<'a> {
    fn new(
        net: &'a ConcreteNetwork,
        x: &[f64],
        epsilon: f64,
        grouping: &'a FeatureGrouping,
        ordering: &FeatureOrdering,
    ) -> Result<Self> {
        Error::check_len("grouping", net.input_dim(), grouping.features)?;
        let mut sorted = ordering.resolved.clone();
        sorted.sort_unstable();
        if sorted != (0..grouping.len()).collect::<Vec<_>>() {
            return Err(Error::validation("ordering", "not a permutation of the groups"));
        }
        let base = SufficiencyQuery::new(net, x.to_vec(), vec![true; net.input_dim()], epsilon)?;
        Ok(Run {
            grouping,
            base,
            in_set: vec![true; grouping.len()],
            steps: Vec::new(),
        })
    }

    fn query(&self) -> Result<SufficiencyQuery> {
        self.base.with_fixed(self.grouping.mask(&self.in_set))
    }

    fn size(&self) -> usize {
        self.in_set.iter().filter(|&&k| k).count()
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        group: usize,
        rho: f64,
        verdict: StepVerdict,
        timing: Timing,
        margin: f64,
        neurons: usize,
        candidate_evaluations: usize,
        outcome: StepOutcome,
    ) {
        if outcome == StepOutcome::Pinned {
            self.in_set[group] = true;
        }
        let size_after = self.size();
        self.steps.push(TraceStep {
            group,
            rho,
            verdict,
            witness_used: verdict == StepVerdict::Witness,
            elapsed: timing.query,
            build_time: timing.build,
            search_time: timing.search,
            margin,
            neurons,
            candidate_evaluations,
            outcome,
            size_after,
        });
    }

    fn finish(self, snapshots: Vec<Snapshot>, status: ExplanationStatus, bound_pass_neurons: u64) -> Explanation {
        let groups = members(&self.in_set);
        Explanation {
            features: self.grouping.features_of(&groups),
            trace: ExplanationTrace {
                steps: self.steps,
                snapshots,
                final_groups: groups.clone(),
                status,
                groups: self.grouping.len(),
                bound_pass_neurons,
            },
            groups,
        }
    }
}

/// Greedy search that queries the concrete network for every group.
pub fn explain_baseline(
    net: &ConcreteNetwork,
    x: &[f64],
    epsilon: f64,
    grouping: &FeatureGrouping,
    ordering: &FeatureOrdering,
    backend: Backend,
    options: &ExplainOptions,
    clock: &dyn Clock,
) -> Result<Explanation> {
    let mut run = Run::new(net, x, epsilon, grouping, ordering)?;
    let mut status = ExplanationStatus::MinimalSufficient;
    for &g in &ordering.resolved {
        if expired(clock, options.timeout) {
            status = ExplanationStatus::SufficientEarlyStop;
            break;
        }
        run.in_set[g] = false;
        let q = run.query()?;
        let start = clock.elapsed();
        let margin = concrete_margin(net, &q)?;
        let query = since(clock, start);
        let start = clock.elapsed();
        let (verdict, evaluations) = match backend {
            Backend::Enclosure if margin >= 0.0 => (StepVerdict::Sufficient, 0),
            Backend::Enclosure => {
                let search = find_counterexample(net, &q, &options.candidates);
                let v = if search.witness.is_some() {
                    StepVerdict::Witness
                } else {
                    StepVerdict::Uncertain
                };
                (v, search.evaluations)
            }
            Backend::Oracle { budget } => match oracle_check(net, &q, budget)? {
                OracleVerdict::ProvedSufficient => (StepVerdict::Sufficient, 0),
                OracleVerdict::Witness(_) => (StepVerdict::Witness, 0),
                OracleVerdict::Exhausted => (StepVerdict::Uncertain, 0),
            },
        };
        let mut timing = Timing {
            query,
            search: since(clock, start),
            ..Timing::default()
        };
        if let Backend::Oracle { .. } = backend {
            // the branch and bound is the query
            timing.query += timing.search;
            timing.search = Duration::ZERO;
        }
        let outcome = if verdict == StepVerdict::Sufficient {
            StepOutcome::Dropped
        } else {
            StepOutcome::Pinned
        };
        run.record(g, 1.0, verdict, timing, margin, net.neuron_count(), evaluations, outcome);
    }
    let snapshot = vec![Snapshot {
        rho: 1.0,
        groups: members(&run.in_set),
    }];
    Ok(run.finish(snapshot, status, 0))
}

/// Greedy search over a schedule of increasingly refined abstractions.
///
/// The rate that last succeeded is carried into the next group and never
/// decreases. At rate 1.0 the query runs on the concrete network, so an
/// inconclusive result there keeps the group exactly as the enclosure
/// baseline would.
pub fn explain_abstraction_refinement(
    net: &ConcreteNetwork,
    x: &[f64],
    epsilon: f64,
    grouping: &FeatureGrouping,
    ordering: &FeatureOrdering,
    schedule: &ReductionSchedule,
    options: &ExplainOptions,
    clock: &dyn Clock,
) -> Result<Explanation> {
    let mut run = Run::new(net, x, epsilon, grouping, ordering)?;
    let rates = schedule.rates();
    let mut level = 0;
    let mut snapshots: Vec<Option<Vec<usize>>> = vec![None; rates.len()];
    let mut bound_pass = 0u64;
    let mut status = ExplanationStatus::MinimalSufficient;

    let ball: Option<LayerBounds> = match options.bounds {
        AbstractionBounds::Ball if rates[0] < 1.0 => {
            bound_pass += net.neuron_count() as u64;
            Some(propagate_box(net, &run.base.with_fixed(vec![false; net.input_dim()])?.query_box())?)
        }
        _ => None,
    };
    let mut anet: Option<AbstractNetwork> = None;

    'groups: for &g in &ordering.resolved {
        if expired(clock, options.timeout) {
            status = ExplanationStatus::SufficientEarlyStop;
            break;
        }
        run.in_set[g] = false;
        let q = run.query()?;
        let mut local: Option<LayerBounds> = None;
        if ball.is_none() {
            anet = None;
        }
        let mut memo: Option<CandidateSearch> = None;
        loop {
            let rho = rates[level];
            let build_start = clock.elapsed();
            let (margin, neurons, build_time, elapsed) = if rho >= 1.0 {
                let start = clock.elapsed();
                let m = concrete_margin(net, &q)?;
                (m, net.neuron_count(), Duration::ZERO, since(clock, start))
            } else {
                let lb = match &ball {
                    Some(lb) => lb,
                    None => match &mut local {
                        Some(lb) => lb,
                        slot => {
                            bound_pass += net.neuron_count() as u64;
                            slot.insert(propagate_box(net, &q.query_box())?)
                        }
                    },
                };
                let a = match anet.take() {
                    Some(prev) if prev.rho() == rho => prev,
                    Some(prev) => refine(net, &prev, lb, rho)?,
                    None => build_abstract(net, lb, rho)?,
                };
                let build_time = since(clock, build_start);
                let start = clock.elapsed();
                let m = abstract_margin(&a, &q)?;
                let elapsed = since(clock, start);
                let n = a.neuron_count();
                anet = Some(a);
                (m, n, build_time, elapsed)
            };
            let mut timing = Timing {
                build: build_time,
                query: elapsed,
                search: Duration::ZERO,
            };
            if margin >= 0.0 {
                run.record(g, rho, StepVerdict::Sufficient, timing, margin, neurons, 0, StepOutcome::Dropped);
                continue 'groups;
            }
            let search_start = clock.elapsed();
            let (evaluations, found) = match &memo {
                Some(search) => (0, search.witness.is_some()),
                None => {
                    let search = find_counterexample(net, &q, &options.candidates);
                    let out = (search.evaluations, search.witness.is_some());
                    memo = Some(search);
                    out
                }
            };
            timing.search = since(clock, search_start);
            if found {
                run.record(g, rho, StepVerdict::Witness, timing, margin, neurons, evaluations, StepOutcome::Pinned);
                continue 'groups;
            }
            if level + 1 == rates.len() {
                run.record(g, rho, StepVerdict::Uncertain, timing, margin, neurons, evaluations, StepOutcome::Pinned);
                continue 'groups;
            }
            // g is undecided and still counts as part of the explanation
            run.in_set[g] = true;
            run.record(g, rho, StepVerdict::Uncertain, timing, margin, neurons, evaluations, StepOutcome::Refined);
            snapshots[level] = Some(members(&run.in_set));
            level += 1;
            if expired(clock, options.timeout) {
                status = ExplanationStatus::SufficientEarlyStop;
                break 'groups;
            }
            run.in_set[g] = false;
        }
    }

    let last = members(&run.in_set);
    let snapshots = rates
        .iter()
        .zip(snapshots)
        .map(|(&rho, s)| Snapshot {
            rho,
            groups: s.unwrap_or_else(|| last.clone()),
        })
        .collect();
    Ok(run.finish(snapshots, status, bound_pass))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateWork {
    pub rho: f64,
    pub queries: usize,
    pub neuron_evaluations: u64,
    /// Mean time of the query itself, excluding abstraction builds.
    pub mean_query_time: Duration,
}

/// Machine-independent cost summary of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkReport {
    /// Groups considered (`n`).
    pub features: usize,
    /// Refinement events (`ξ`).
    pub refinements: usize,
    pub queries: usize,
    /// Neurons in the queried networks, summed over queries.
    pub neuron_evaluations: u64,
    pub bound_pass_neurons: u64,
    pub candidate_evaluations: usize,
    /// Ascending by rate.
    pub per_rate: Vec<RateWork>,
}

pub fn count_work(trace: &ExplanationTrace) -> WorkReport {
    let mut per_rate: Vec<(RateWork, Duration)> = Vec::new();
    for s in &trace.steps {
        let i = match per_rate.iter().position(|(r, _)| r.rho == s.rho) {
            Some(i) => i,
            None => {
                per_rate.push((
                    RateWork {
                        rho: s.rho,
                        queries: 0,
                        neuron_evaluations: 0,
                        mean_query_time: Duration::ZERO,
                    },
                    Duration::ZERO,
                ));
                per_rate.len() - 1
            }
        };
        let (r, total) = &mut per_rate[i];
        r.queries += 1;
        r.neuron_evaluations += s.neurons as u64;
        *total += s.elapsed;
    }
    let mut per_rate: Vec<RateWork> = per_rate
        .into_iter()
        .map(|(mut r, total)| {
            r.mean_query_time = total / r.queries as u32;
            r
        })
        .collect();
    per_rate.sort_by(|a, b| a.rho.total_cmp(&b.rho));
    WorkReport {
        features: trace.groups,
        refinements: trace.steps.iter().filter(|s| s.outcome == StepOutcome::Refined).count(),
        queries: trace.steps.len(),
        neuron_evaluations: per_rate.iter().map(|r| r.neuron_evaluations).sum(),
        bound_pass_neurons: trace.bound_pass_neurons,
        candidate_evaluations: trace.steps.iter().map(|s| s.candidate_evaluations).sum(),
        per_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::matrix::Matrix;
    use crate::network::{ActivationKind, Layer};
    use crate::queries::check_concrete;
    use core::cell::Cell;

    fn run_both(
        net: &ConcreteNetwork,
        x: &[f64],
        eps: f64,
        schedule: &ReductionSchedule,
        bounds: AbstractionBounds,
    ) -> (Explanation, Explanation) {
        let grouping = FeatureGrouping::singletons(net.input_dim());
        let ordering = order_features(net, x, &grouping, OrderingPolicy::SensitivityAscending).unwrap();
        let opts = ExplainOptions {
            bounds,
            ..Default::default()
        };
        let a = explain_baseline(net, x, eps, &grouping, &ordering, Backend::Enclosure, &opts, &NullClock).unwrap();
        let b = explain_abstraction_refinement(net, x, eps, &grouping, &ordering, schedule, &opts, &NullClock).unwrap();
        (a, b)
    }

    #[test]
    fn grouping_validation() {
        assert!(FeatureGrouping::new(vec![vec![0, 1], vec![2]], 3).is_ok());
        assert!(FeatureGrouping::new(vec![vec![0, 1], vec![1, 2]], 3).is_err());
        assert!(FeatureGrouping::new(vec![vec![0]], 2).is_err());
        assert!(FeatureGrouping::new(vec![vec![0, 5]], 2).is_err());
        assert!(FeatureGrouping::new(vec![vec![], vec![0]], 1).is_err());
        let rgb = FeatureGrouping::pixels(3, 2).unwrap();
        assert_eq!(rgb.groups(), &[vec![0, 1, 2], vec![3, 4, 5]]);
        assert_eq!(rgb.features_of(&[1]), vec![3, 4, 5]);
    }

    #[test]
    fn ordering_policies() {
        let layer = Layer::new(Matrix::identity(3), vec![0.0; 3], ActivationKind::Identity).unwrap();
        let net = ConcreteNetwork::new(vec![layer], None).unwrap();
        let g = FeatureGrouping::singletons(3);
        let x = [0.9, 0.1, 0.2];
        let s = order_features(&net, &x, &g, OrderingPolicy::SensitivityAscending).unwrap();
        assert_eq!(s.resolved, vec![1, 2, 0]);
        assert_eq!(order_features(&net, &x, &g, OrderingPolicy::InOrder).unwrap().resolved, vec![0, 1, 2]);
        let big = FeatureGrouping::singletons(3);
        let r1 = order_features(&net, &x, &big, OrderingPolicy::Random(7)).unwrap();
        let r2 = order_features(&net, &x, &big, OrderingPolicy::Random(7)).unwrap();
        assert_eq!(r1, r2);
        let mut sorted = r1.resolved.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn running_example_baseline() {
        let (net, x) = fixtures::running_example();
        let g = FeatureGrouping::singletons(3);
        let ord = order_features(&net, &x, &g, OrderingPolicy::SensitivityAscending).unwrap();
        assert_eq!(ord.resolved, vec![0, 1, 2]);
        let opts = ExplainOptions::default();
        let e = explain_baseline(&net, &x, 1.0, &g, &ord, Backend::Enclosure, &opts, &NullClock).unwrap();
        assert_eq!(e.features, vec![2]);
        assert_eq!(e.status(), ExplanationStatus::MinimalSufficient);
        // the logit gap 2x1 + 2x2 + 19x3 + 10 is positive on the whole cube
        let o = explain_baseline(&net, &x, 1.0, &g, &ord, Backend::Oracle { budget: 1 << 14 }, &opts, &NullClock)
            .unwrap();
        assert_eq!(o.features, Vec::<usize>::new());
    }

    #[test]
    fn running_example_refinement_trace() {
        let (net, x) = fixtures::running_example();
        let schedule = ReductionSchedule::new(vec![0.1, 1.0 / 3.0, 1.0]).unwrap();
        let (base, e) = run_both(&net, &x, 1.0, &schedule, AbstractionBounds::Ball);
        assert_eq!(e.groups, vec![2]);
        assert_eq!(e.groups, base.groups);
        let outcomes: Vec<(usize, StepOutcome)> = e.trace.steps.iter().map(|s| (s.group, s.outcome)).collect();
        assert_eq!(
            outcomes,
            vec![
                (0, StepOutcome::Refined),
                (0, StepOutcome::Dropped),
                (1, StepOutcome::Dropped),
                (2, StepOutcome::Refined),
                (2, StepOutcome::Pinned),
            ]
        );
        let snaps: Vec<&[usize]> = e.trace.snapshots.iter().map(|s| &s.groups[..]).collect();
        assert_eq!(snaps, vec![&[0, 1, 2][..], &[2], &[2]]);
        let work = count_work(&e.trace);
        assert_eq!(work.refinements, 2);
        assert_eq!(work.queries, 5);
        assert_eq!(work.per_rate.iter().map(|r| r.queries).sum::<usize>(), work.queries);
    }

    #[test]
    fn query_box_policy_matches_concrete_verdicts() {
        let (net, x) = fixtures::running_example();
        let (base, e) = run_both(&net, &x, 1.0, &ReductionSchedule::default(), AbstractionBounds::QueryBox);
        assert_eq!(e.groups, base.groups);
        // only the pinned group walks up the schedule
        assert!(e.trace.steps.iter().filter(|s| s.group != 2).all(|s| s.outcome == StepOutcome::Dropped));
        assert!(e.trace.steps.iter().filter(|s| s.group != 2).all(|s| s.rho == 0.1));
    }

    #[test]
    fn zero_epsilon_frees_everything() {
        let (net, xs) = fixtures::random_network(5, &[7], 3, ActivationKind::Relu, 3, 1);
        let (a, b) = run_both(&net, &xs[0], 0.0, &ReductionSchedule::default(), AbstractionBounds::QueryBox);
        assert!(a.groups.is_empty() && b.groups.is_empty());
    }

    #[test]
    fn single_rate_schedule_is_the_baseline() {
        for seed in 0..10 {
            let (net, xs) = fixtures::random_network(6, &[10, 8], 3, ActivationKind::Relu, seed, 1);
            let one = ReductionSchedule::new(vec![1.0]).unwrap();
            let (a, b) = run_both(&net, &xs[0], 0.2, &one, AbstractionBounds::QueryBox);
            assert_eq!(a.trace.steps, b.trace.steps);
            assert_eq!(a.groups, b.groups);
            let w = count_work(&b.trace);
            assert_eq!((w.refinements, w.queries), (0, 6));
        }
    }

    #[test]
    fn refinement_agrees_with_baseline() {
        for seed in 0..30 {
            let act = if seed % 2 == 0 { ActivationKind::Relu } else { ActivationKind::Sigmoid };
            let (net, xs) = fixtures::random_network(8, &[12, 12], 4, act, seed, 1);
            for bounds in [AbstractionBounds::QueryBox, AbstractionBounds::Ball] {
                let (a, b) = run_both(&net, &xs[0], 0.15, &ReductionSchedule::default(), bounds);
                assert_eq!(a.groups, b.groups, "seed {seed} {bounds:?}");
                let sizes: Vec<usize> = b.trace.steps.iter().map(|s| s.size_after).collect();
                assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
                for s in &b.trace.snapshots {
                    assert!(b.groups.iter().all(|g| s.groups.contains(g)));
                }
                for w in b.trace.snapshots.windows(2) {
                    assert!(w[1].groups.iter().all(|g| w[0].groups.contains(g)));
                }
                let q = SufficiencyQuery::from_indices(&net, xs[0].clone(), &b.features, 0.15).unwrap();
                assert!(check_concrete(&net, &q, &CandidateConfig::default()).unwrap().is_sufficient());
            }
        }
    }

    #[test]
    fn rgb_groups_move_together() {
        let (net, xs) = fixtures::random_network(12, &[10], 3, ActivationKind::Relu, 5, 1);
        let g = FeatureGrouping::pixels(3, 4).unwrap();
        let ord = order_features(&net, &xs[0], &g, OrderingPolicy::SensitivityAscending).unwrap();
        let e = explain_abstraction_refinement(
            &net,
            &xs[0],
            0.2,
            &g,
            &ord,
            &ReductionSchedule::default(),
            &ExplainOptions::default(),
            &NullClock,
        )
        .unwrap();
        assert_eq!(e.features.len(), 3 * e.groups.len());
        assert_eq!(count_work(&e.trace).features, 4);
    }

    struct Ticking(Cell<u64>);

    impl Clock for Ticking {
        fn elapsed(&self) -> Duration {
            let t = self.0.get();
            self.0.set(t + 1);
            Duration::from_millis(t)
        }
    }

    #[test]
    fn timeouts_stop_early_with_a_sufficient_set() {
        let (net, xs) = fixtures::random_network(6, &[8], 3, ActivationKind::Relu, 2, 1);
        let g = FeatureGrouping::singletons(6);
        let ord = order_features(&net, &xs[0], &g, OrderingPolicy::InOrder).unwrap();
        let zero = ExplainOptions {
            timeout: Some(Duration::ZERO),
            ..Default::default()
        };
        let s = ReductionSchedule::default();
        let e = explain_abstraction_refinement(&net, &xs[0], 0.1, &g, &ord, &s, &zero, &NullClock).unwrap();
        assert_eq!(e.status(), ExplanationStatus::SufficientEarlyStop);
        assert_eq!(e.groups, vec![0, 1, 2, 3, 4, 5]);
        assert!(e.trace.steps.is_empty());
        let b = explain_baseline(&net, &xs[0], 0.1, &g, &ord, Backend::Enclosure, &zero, &NullClock).unwrap();
        assert_eq!(b.groups.len(), 6);

        let short = ExplainOptions {
            timeout: Some(Duration::from_millis(6)),
            ..Default::default()
        };
        let e = explain_abstraction_refinement(&net, &xs[0], 0.1, &g, &ord, &s, &short, &Ticking(Cell::new(0))).unwrap();
        assert_eq!(e.status(), ExplanationStatus::SufficientEarlyStop);
        assert!(e.trace.steps.len() < 6);
        let q = SufficiencyQuery::from_indices(&net, xs[0].clone(), &e.features, 0.1).unwrap();
        assert!(check_concrete(&net, &q, &CandidateConfig::default()).unwrap().is_sufficient());
    }

    #[test]
    fn bad_ordering_rejected() {
        let (net, x) = fixtures::running_example();
        let g = FeatureGrouping::singletons(3);
        let ord = FeatureOrdering {
            policy: OrderingPolicy::InOrder,
            resolved: vec![0, 0, 1],
        };
        let opts = ExplainOptions::default();
        assert!(explain_baseline(&net, &x, 1.0, &g, &ord, Backend::Enclosure, &opts, &NullClock).is_err());
    }
}
