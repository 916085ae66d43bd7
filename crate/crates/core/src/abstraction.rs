//! Neuron-merging abstraction and refinement.
//!
//! Merging a set `B_k` of hidden neurons of layer `k` deletes their rows from
//! layer `k` and their columns from layer `k+1`, and adds the bounded
//! contribution `W_{k+1}(·, B_k) · I_k(B_k)` to the bias of layer `k+1` as an
//! interval. Here `I_k` are the post-activation bounds of layer `k` over a box
//! that contains every query box the abstraction will be used on; then every
//! reachable output of the original network stays inside the abstract
//! network's enclosure.
//!
//! Which neurons get merged is decided by a score: the width of the neuron's
//! bound times its largest outgoing absolute weight, i.e. a bound on what
//! merging it adds to the next layer's bias width. Lowest scores merge first,
//! ties broken by `(layer, neuron)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::bounds::LayerBounds;
use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalVector};
use crate::matrix::Matrix;
use crate::network::{ActivationKind, ConcreteNetwork};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeuronScore {
    pub layer: usize,
    pub neuron: usize,
    pub score: f64,
}

/// Per hidden layer, its neurons sorted by ascending merge score.
pub fn score_neurons(net: &ConcreteNetwork, lb: &LayerBounds) -> Result<Vec<Vec<NeuronScore>>> {
    check_bounds(net, lb)?;
    let layers = net.layers();
    let mut out = Vec::with_capacity(layers.len() - 1);
    for k in 0..layers.len() - 1 {
        let next = layers[k + 1].weights();
        let mut scores: Vec<NeuronScore> = lb.per_layer()[k]
            .iter()
            .enumerate()
            .map(|(j, bound)| {
                let max_out = (0..next.rows()).map(|i| next.get(i, j).abs()).fold(0.0, f64::max);
                let score = if max_out == 0.0 { 0.0 } else { bound.width() * max_out };
                NeuronScore { layer: k, neuron: j, score }
            })
            .collect();
        scores.sort_by(rank_order);
        out.push(scores);
    }
    Ok(out)
}

fn rank_order(a: &NeuronScore, b: &NeuronScore) -> core::cmp::Ordering {
    a.score
        .total_cmp(&b.score)
        .then(a.layer.cmp(&b.layer))
        .then(a.neuron.cmp(&b.neuron))
}

fn global_ranking(per_layer: Vec<Vec<NeuronScore>>) -> Vec<NeuronScore> {
    let mut all: Vec<NeuronScore> = per_layer.into_iter().flatten().collect();
    all.sort_by(rank_order);
    all
}

fn check_bounds(net: &ConcreteNetwork, lb: &LayerBounds) -> Result<()> {
    if lb.network_fingerprint() != net.fingerprint() || lb.per_layer().len() != net.layers().len() {
        return Err(Error::StaleBounds);
    }
    Ok(())
}

fn kept_target(rho: f64, hidden_total: usize) -> usize {
    let kept = libm::round(rho * hidden_total as f64);
    (kept.max(0.0) as usize).min(hidden_total)
}

fn check_rate(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::validation("rho", alloc::format!("{rho} is outside (0, 1]")))
    }
}

/// The merged neurons `B_k` of every hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MergeSpec {
    merged: Vec<Vec<usize>>,
    hidden_total: usize,
    network: u64,
    bounds: u64,
}

impl MergeSpec {
    /// Builds a spec from explicit per-hidden-layer merge sets.
    pub fn new(net: &ConcreteNetwork, lb: &LayerBounds, mut merged: Vec<Vec<usize>>) -> Result<Self> {
        check_bounds(net, lb)?;
        let layers = net.layers();
        Error::check_len("merge sets", layers.len() - 1, merged.len())?;
        for (k, set) in merged.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.last().is_some_and(|&j| j >= layers[k].outputs()) {
                return Err(Error::validation(
                    alloc::format!("merge set of layer {k}"),
                    "neuron index out of range",
                ));
            }
        }
        Ok(MergeSpec {
            merged,
            hidden_total: net.hidden_neuron_count(),
            network: net.fingerprint(),
            bounds: lb.fingerprint(),
        })
    }

    pub fn merged(&self) -> &[Vec<usize>] {
        &self.merged
    }

    pub fn merged_count(&self) -> usize {
        self.merged.iter().map(Vec::len).sum()
    }

    pub fn kept_count(&self) -> usize {
        self.hidden_total - self.merged_count()
    }

    pub fn is_empty(&self) -> bool {
        self.merged_count() == 0
    }

    pub fn contains(&self, layer: usize, neuron: usize) -> bool {
        self.merged.get(layer).is_some_and(|s| s.binary_search(&neuron).is_ok())
    }

    /// Remaining hidden neurons over all hidden neurons.
    pub fn reduction_rate(&self) -> f64 {
        if self.hidden_total == 0 {
            1.0
        } else {
            self.kept_count() as f64 / self.hidden_total as f64
        }
    }

    pub fn network_fingerprint(&self) -> u64 {
        self.network
    }

    pub fn bounds_fingerprint(&self) -> u64 {
        self.bounds
    }

    /// `true` when every merged neuron here is also merged in `other`.
    pub fn is_subset_of(&self, other: &MergeSpec) -> bool {
        self.merged.len() == other.merged.len()
            && self
                .merged
                .iter()
                .enumerate()
                .all(|(k, set)| set.iter().all(|&j| other.contains(k, j)))
    }
}

/// One layer of an abstract network: point weights, interval bias.
#[derive(Clone, Debug, PartialEq)]
pub struct AbstractLayer {
    pub weights: Matrix,
    pub bias: IntervalVector,
    pub activation: ActivationKind,
    /// Original indices of the neurons this layer keeps.
    pub kept: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbstractNetwork {
    layers: Vec<AbstractLayer>,
    input_dim: usize,
    spec: MergeSpec,
    rho: f64,
    bounds_box: IntervalVector,
}

impl AbstractNetwork {
    pub fn layers(&self) -> &[AbstractLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.rows())
    }

    pub fn merge_spec(&self) -> &MergeSpec {
        &self.spec
    }

    /// The requested reduction rate this network was built for.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Box over which the merged-neuron bounds were computed.
    pub fn bounds_box(&self) -> &IntervalVector {
        &self.bounds_box
    }

    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.rows()).sum()
    }
}

/// Merges the lowest-scored `1 - rho` fraction of hidden neurons.
pub fn build_abstract(net: &ConcreteNetwork, lb: &LayerBounds, rho: f64) -> Result<AbstractNetwork> {
    check_rate(rho)?;
    let ranking = global_ranking(score_neurons(net, lb)?);
    let merge_count = ranking.len() - kept_target(rho, ranking.len());
    let mut merged = vec![Vec::new(); net.layers().len() - 1];
    for s in &ranking[..merge_count] {
        merged[s.layer].push(s.neuron);
    }
    from_merge_spec(net, lb, MergeSpec::new(net, lb, merged)?, rho)
}

/// Un-merges the highest-scored neurons of `prev` until `rho2` of the hidden
/// neurons are kept. The new merge set is a subset of the old one, so the
/// refined enclosure is nested inside the previous one.
pub fn refine(net: &ConcreteNetwork, prev: &AbstractNetwork, lb: &LayerBounds, rho2: f64) -> Result<AbstractNetwork> {
    check_rate(rho2)?;
    if !(rho2 > prev.rho) {
        return Err(Error::Ordering {
            current: prev.rho,
            next: rho2,
        });
    }
    check_bounds(net, lb)?;
    if prev.spec.network != net.fingerprint() || prev.spec.bounds != lb.fingerprint() {
        return Err(Error::StaleBounds);
    }
    let target_merged = prev.spec.hidden_total - kept_target(rho2, prev.spec.hidden_total);
    let candidates: Vec<NeuronScore> = global_ranking(score_neurons(net, lb)?)
        .into_iter()
        .filter(|s| prev.spec.contains(s.layer, s.neuron))
        .collect();
    let keep_merged = target_merged.min(candidates.len());
    let mut merged = vec![Vec::new(); net.layers().len() - 1];
    for s in &candidates[..keep_merged] {
        merged[s.layer].push(s.neuron);
    }
    from_merge_spec(net, lb, MergeSpec::new(net, lb, merged)?, rho2)
}

/// Applies the merge construction for an explicit [`MergeSpec`].
pub fn from_merge_spec(net: &ConcreteNetwork, lb: &LayerBounds, spec: MergeSpec, rho: f64) -> Result<AbstractNetwork> {
    check_bounds(net, lb)?;
    if spec.network != net.fingerprint() || spec.bounds != lb.fingerprint() {
        return Err(Error::StaleBounds);
    }
    let src = net.layers();
    let last = src.len() - 1;
    let kept: Vec<Vec<usize>> = src
        .iter()
        .enumerate()
        .map(|(k, layer)| {
            (0..layer.outputs())
                .filter(|&j| k == last || !spec.contains(k, j))
                .collect()
        })
        .collect();
    let all_inputs: Vec<usize> = (0..net.input_dim()).collect();

    let mut layers = Vec::with_capacity(src.len());
    for (k, layer) in src.iter().enumerate() {
        let cols = if k == 0 { &all_inputs } else { &kept[k - 1] };
        let weights = layer.weights().select(&kept[k], cols);
        let absorbed: &[usize] = if k == 0 { &[] } else { &spec.merged[k - 1] };
        let bias = kept[k]
            .iter()
            .map(|&i| {
                let b = Interval::point(layer.bias()[i]);
                if absorbed.is_empty() {
                    return b;
                }
                let row = layer.weights().row(i);
                let bounds = &lb.per_layer()[k - 1];
                let mut err = Interval::point(0.0);
                for &j in absorbed {
                    err = err.add(bounds[j].scale(row[j]));
                }
                b.add(err)
            })
            .collect();
        layers.push(AbstractLayer {
            weights,
            bias,
            activation: layer.activation(),
            kept: kept[k].clone(),
        });
    }
    Ok(AbstractNetwork {
        layers,
        input_dim: net.input_dim(),
        spec,
        rho,
        bounds_box: lb.input_box().clone(),
    })
}

/// Strictly increasing reduction rates ending at 1.0.
#[derive(Clone, Debug, PartialEq)]
pub struct ReductionSchedule(Vec<f64>);

impl ReductionSchedule {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        let first = *rates
            .first()
            .ok_or_else(|| Error::validation("schedule", "needs at least one rate"))?;
        if !(first > 0.0) {
            return Err(Error::validation("schedule", "rates must be positive"));
        }
        if rates.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::validation("schedule", "rates must be strictly increasing"));
        }
        if *rates.last().expect("non-empty") != 1.0 {
            return Err(Error::validation("schedule", "last rate must be 1.0"));
        }
        Ok(ReductionSchedule(rates))
    }

    /// `step, 2·step, ..., 1.0`; the default is 0.1 steps.
    pub fn uniform(steps: usize) -> Self {
        let steps = steps.max(1);
        ReductionSchedule((1..=steps).map(|i| if i == steps { 1.0 } else { i as f64 / steps as f64 }).collect())
    }

    pub fn rates(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for ReductionSchedule {
    fn default() -> Self {
        ReductionSchedule::uniform(10)
    }
}
