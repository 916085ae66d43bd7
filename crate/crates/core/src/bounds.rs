//! Sound box propagation through concrete and abstract networks.

use alloc::vec::Vec;

use crate::abstraction::AbstractNetwork;
use crate::error::{Error, Result};
use crate::interval::{affine_unchecked, IntervalVector};
use crate::network::ConcreteNetwork;
use crate::rng::Fnv;

/// Post-activation enclosures of every layer for one input box.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerBounds {
    input_box: IntervalVector,
    per_layer: Vec<IntervalVector>,
    network: u64,
    id: u64,
}

impl LayerBounds {
    pub fn input_box(&self) -> &IntervalVector {
        &self.input_box
    }

    pub fn per_layer(&self) -> &[IntervalVector] {
        &self.per_layer
    }

    /// Enclosure of the logits.
    pub fn output(&self) -> &IntervalVector {
        self.per_layer.last().expect("at least one layer")
    }

    pub fn network_fingerprint(&self) -> u64 {
        self.network
    }

    /// Identifies the (network, input box) pair these bounds were computed for.
    pub fn fingerprint(&self) -> u64 {
        self.id
    }
}

/// Propagates `input_box` layer by layer: affine image with point biases,
/// then the activation image.
pub fn propagate_box(net: &ConcreteNetwork, input_box: &IntervalVector) -> Result<LayerBounds> {
    Error::check_len("input box", net.input_dim(), input_box.len())?;
    if !input_box.is_subset_of(net.input_domain(), 0.0)? {
        return Err(Error::validation("input_box", "leaves the network's input domain"));
    }
    let mut per_layer: Vec<IntervalVector> = Vec::with_capacity(net.layers().len());
    for layer in net.layers() {
        let prev = per_layer.last().unwrap_or(input_box);
        let bias = IntervalVector::point(layer.bias());
        let pre = affine_unchecked(layer.weights(), &bias, prev);
        per_layer.push(pre.activate(layer.activation()));
    }
    let mut h = Fnv::new();
    h.u64(net.fingerprint());
    for d in input_box.iter() {
        h.f64(d.lo()).f64(d.hi());
    }
    Ok(LayerBounds {
        input_box: input_box.clone(),
        per_layer,
        network: net.fingerprint(),
        id: h.finish(),
    })
}

/// Output enclosure of an abstract network; interval biases enter through
/// the Minkowski sum.
pub fn propagate_abstract(anet: &AbstractNetwork, input_box: &IntervalVector) -> Result<IntervalVector> {
    let mut layers = propagate_abstract_layers(anet, input_box)?;
    Ok(layers.pop().expect("at least one layer"))
}

/// Like [`propagate_abstract`] but keeps every layer's enclosure (kept
/// neurons only).
pub fn propagate_abstract_layers(anet: &AbstractNetwork, input_box: &IntervalVector) -> Result<Vec<IntervalVector>> {
    Error::check_len("input box", anet.input_dim(), input_box.len())?;
    // merged-neuron bounds are only valid inside the box they were computed on
    if !anet.merge_spec().is_empty() && !input_box.is_subset_of(anet.bounds_box(), 0.0)? {
        return Err(Error::StaleBounds);
    }
    let mut out: Vec<IntervalVector> = Vec::with_capacity(anet.layers().len());
    for layer in anet.layers() {
        let prev = out.last().unwrap_or(input_box);
        let pre = affine_unchecked(&layer.weights, &layer.bias, prev);
        out.push(pre.activate(layer.activation));
    }
    Ok(out)
}
