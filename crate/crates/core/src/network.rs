//! The concrete feed-forward network: a chain of dense layers
//! `h_k = σ(W_k h_{k-1} + b_k)` evaluated on pre-softmax logits.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::interval::IntervalVector;
use crate::matrix::{dot, Matrix};
use crate::rng::Fnv;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl ActivationKind {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            ActivationKind::Sigmoid => 1.0 / (1.0 + libm::exp(-z)),
            ActivationKind::Tanh => libm::tanh(z),
            ActivationKind::Identity => z,
        }
    }

    /// Derivative at pre-activation `z`; ReLU takes 0 at the kink.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Sigmoid => {
                let s = self.apply(z);
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = libm::tanh(z);
                1.0 - t * t
            }
            ActivationKind::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Identity => "identity",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(ActivationKind::Relu),
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "tanh" => Ok(ActivationKind::Tanh),
            "identity" | "linear" => Ok(ActivationKind::Identity),
            other => Err(Error::Unsupported(alloc::format!("activation `{other}`"))),
        }
    }
}

/// One dense layer. Weights are `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    weights: Matrix,
    bias: Vec<f64>,
    activation: ActivationKind,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: ActivationKind) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::validation("weights", "layer needs at least one input and one output"));
        }
        Error::check_len("layer bias", weights.rows(), bias.len())?;
        if !weights.is_finite() {
            return Err(Error::validation("weights", "contains a non-finite entry"));
        }
        if !bias.iter().all(|b| b.is_finite()) {
            return Err(Error::validation("bias", "contains a non-finite entry"));
        }
        Ok(Layer {
            weights,
            bias,
            activation,
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> ActivationKind {
        self.activation
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    /// Pre-activation `W h + b`, summed left to right.
    pub(crate) fn pre_activation(&self, h: &[f64]) -> Vec<f64> {
        (0..self.outputs())
            .map(|i| dot(self.weights.row(i), h) + self.bias[i])
            .collect()
    }
}

/// Values recorded during one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// Pre-activation of every layer.
    pub pre: Vec<Vec<f64>>,
    /// Post-activation of every layer; the last entry is the logits.
    pub post: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConcreteNetwork {
    layers: Vec<Layer>,
    input_domain: IntervalVector,
    fingerprint: u64,
}

impl ConcreteNetwork {
    /// Validates the shape chain and the output head. The input domain
    /// defaults to `[0, 1]^n`.
    pub fn new(layers: Vec<Layer>, input_domain: Option<IntervalVector>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::validation("layers", "network needs at least one layer"))?;
        let input_dim = first.inputs();
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].inputs() != pair[0].outputs() {
                return Err(Error::validation(
                    alloc::format!("layers[{}].weights", k + 1),
                    alloc::format!(
                        "expects {} inputs but layer {} has {} outputs",
                        pair[1].inputs(),
                        k,
                        pair[0].outputs()
                    ),
                ));
            }
        }
        let last = layers.last().expect("non-empty");
        if last.activation != ActivationKind::Identity {
            return Err(Error::validation(
                "layers[-1].activation",
                "final layer must produce logits (identity activation)",
            ));
        }
        let input_domain = input_domain.unwrap_or_else(|| IntervalVector::unit(input_dim));
        Error::check_len("input domain", input_dim, input_domain.len())?;
        if !input_domain.iter().all(|i| i.lo().is_finite() && i.hi().is_finite()) {
            return Err(Error::validation("input_domain", "bounds must be finite"));
        }
        let fingerprint = fingerprint_of(&layers, &input_domain);
        Ok(ConcreteNetwork {
            layers,
            input_domain,
            fingerprint,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn input_domain(&self) -> &IntervalVector {
        &self.input_domain
    }

    /// Neurons over all layers, output layer included.
    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(Layer::outputs).sum()
    }

    pub fn hidden_neuron_count(&self) -> usize {
        self.neuron_count() - self.output_dim()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        Error::check_len("network input", self.input_dim(), x.len())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        for layer in &self.layers {
            let act = layer.activation;
            h = layer.pre_activation(&h).into_iter().map(|z| act.apply(z)).collect();
        }
        Ok(h)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = layer.pre_activation(post.last().map_or(x, |v| v.as_slice()));
            post.push(z.iter().map(|&v| layer.activation.apply(v)).collect());
            pre.push(z);
        }
        Ok(ForwardTrace { pre, post })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Gradient of logit `out_index` with respect to the input.
    pub fn gradient(&self, x: &[f64], out_index: usize) -> Result<Vec<f64>> {
        if out_index >= self.output_dim() {
            return Err(Error::Dimension {
                context: "gradient output index",
                expected: self.output_dim(),
                found: out_index,
            });
        }
        let trace = self.forward_trace(x)?;
        let mut delta = alloc::vec![0.0; self.output_dim()];
        delta[out_index] = 1.0;
        self.backpropagate(&trace, delta)
    }

    /// Gradient of `Σ_j seed[j] · logit_j`.
    pub(crate) fn backpropagate(&self, trace: &ForwardTrace, mut delta: Vec<f64>) -> Result<Vec<f64>> {
        for (layer, z) in self.layers.iter().zip(&trace.pre).rev() {
            for (d, &zi) in delta.iter_mut().zip(z) {
                *d *= layer.activation.derivative(zi);
            }
            delta = layer.weights.mul_vec_transposed(&delta);
        }
        Ok(delta)
    }

    /// Stable hash of architecture, parameters and input domain.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Short human-readable architecture string, e.g. `3-3r-2`.
    pub fn describe(&self) -> String {
        let mut s = alloc::format!("{}", self.input_dim());
        for layer in &self.layers {
            s.push_str(&alloc::format!("-{}{}", layer.outputs(), &layer.activation.name()[..1]));
        }
        s
    }
}

fn fingerprint_of(layers: &[Layer], input_domain: &IntervalVector) -> u64 {
    let mut h = Fnv::new();
    h.u64(layers.len() as u64);
    for layer in layers {
        h.u64(layer.outputs() as u64).u64(layer.inputs() as u64);
        h.u64(layer.activation as u64);
        for &w in layer.weights.as_slice() {
            h.f64(w);
        }
        for &b in &layer.bias {
            h.f64(b);
        }
    }
    for d in input_domain.iter() {
        h.f64(d.lo()).f64(d.hi());
    }
    h.finish()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use alloc::vec;

    fn identity_net(n: usize) -> ConcreteNetwork {
        let layer = Layer::new(Matrix::identity(n), vec![0.0; n], ActivationKind::Identity).unwrap();
        ConcreteNetwork::new(vec![layer], None).unwrap()
    }

    /// Straight-line evaluator written independently of `Layer::pre_activation`.
    #[allow(clippy::needless_range_loop)]
    fn naive_forward(net: &ConcreteNetwork, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in net.layers() {
            let w = layer.weights();
            let mut next = vec![0.0; w.rows()];
            for i in 0..w.rows() {
                let mut s = layer.bias()[i];
                for j in 0..w.cols() {
                    s += w.get(i, j) * h[j];
                }
                next[i] = match layer.activation() {
                    ActivationKind::Relu => s.max(0.0),
                    ActivationKind::Sigmoid => 1.0 / (1.0 + libm::exp(-s)),
                    ActivationKind::Tanh => libm::tanh(s),
                    ActivationKind::Identity => s,
                };
            }
            h = next;
        }
        h
    }

    #[test]
    fn running_example_forward() {
        let (net, x) = fixtures::running_example();
        assert_eq!(net.forward(&x).unwrap(), vec![15.0, 46.0]);
        assert_eq!(net.predict(&x).unwrap(), 1);
    }

    #[test]
    fn identity_network() {
        let net = identity_net(4);
        let x = [0.1, 0.7, 0.3, 0.9];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
        assert_eq!(net.gradient(&x, 0).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn random_nets_match_naive_evaluator() {
        for seed in 0..20 {
            let act = [ActivationKind::Relu, ActivationKind::Sigmoid, ActivationKind::Tanh][seed as usize % 3];
            let (net, xs) = fixtures::random_network(5, &[7, 6, 4], 3, act, seed, 3);
            for x in &xs {
                let a = net.forward(x).unwrap();
                let b = naive_forward(&net, x);
                for (u, v) in a.iter().zip(&b) {
                    assert!((u - v).abs() <= 1e-12, "{u} vs {v}");
                }
            }
        }
    }

    #[test]
    fn predict_ties_go_low() {
        assert_eq!(argmax(&[5.0, 5.0]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        let one = Layer::new(Matrix::from_rows(&[[1.0, -1.0]]).unwrap(), vec![0.0], ActivationKind::Identity).unwrap();
        let net = ConcreteNetwork::new(vec![one], None).unwrap();
        assert_eq!(net.predict(&[0.2, 0.9]).unwrap(), 0);
    }

    #[test]
    fn predict_invariant_under_constant_logit_shift() {
        for seed in 0..10 {
            let (net, xs) = fixtures::random_network(4, &[6], 3, ActivationKind::Relu, seed, 5);
            let mut layers = net.layers().to_vec();
            layers.push(Layer::new(Matrix::identity(3), vec![7.5; 3], ActivationKind::Identity).unwrap());
            let shifted = ConcreteNetwork::new(layers, None).unwrap();
            for x in &xs {
                assert_eq!(net.predict(x).unwrap(), shifted.predict(x).unwrap());
            }
        }
    }

    #[test]
    fn relu_layer_gradient_is_weight_row() {
        let w = Matrix::from_rows(&[[0.5, -2.0, 1.0], [1.0, 1.0, 1.0]]).unwrap();
        let hidden = Layer::new(w.clone(), vec![0.0, 0.0], ActivationKind::Relu).unwrap();
        let out = Layer::new(Matrix::identity(2), vec![0.0, 0.0], ActivationKind::Identity).unwrap();
        let net = ConcreteNetwork::new(vec![hidden, out], None).unwrap();
        let x = [0.9, 0.1, 0.5];
        assert_eq!(net.gradient(&x, 0).unwrap(), w.row(0).to_vec());
    }

    #[test]
    fn sigmoid_gradient_matches_central_differences() {
        let h = 1e-5;
        for seed in 0..10 {
            let (net, xs) = fixtures::random_network(6, &[8, 8], 3, ActivationKind::Sigmoid, seed, 1);
            let x = &xs[0];
            for out in 0..3 {
                let g = net.gradient(x, out).unwrap();
                for i in 0..x.len() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (net.forward(&xp).unwrap()[out] - net.forward(&xm).unwrap()[out]) / (2.0 * h);
                    let scale = g[i].abs().max(1e-3);
                    assert!((fd - g[i]).abs() / scale <= 1e-5, "seed {seed} out {out} dim {i}: {fd} vs {}", g[i]);
                }
            }
        }
    }

    #[test]
    fn shape_errors() {
        let a = Layer::new(Matrix::zeros(3, 2), vec![0.0; 3], ActivationKind::Relu).unwrap();
        let b = Layer::new(Matrix::zeros(1, 4), vec![0.0], ActivationKind::Identity).unwrap();
        assert!(matches!(ConcreteNetwork::new(vec![a.clone(), b], None), Err(Error::Validation { .. })));
        assert!(ConcreteNetwork::new(vec![a], None).is_err(), "relu head rejected");
        assert!(matches!(Layer::new(Matrix::zeros(2, 2), vec![0.0], ActivationKind::Relu), Err(Error::Dimension { .. })));
        assert!(Layer::new(Matrix::new(1, 1, vec![f64::INFINITY]).unwrap(), vec![0.0], ActivationKind::Relu).is_err());
        let net = identity_net(2);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { .. })));
        assert!(net.gradient(&[1.0, 1.0], 2).is_err());
    }

    #[test]
    fn one_class_predicts_zero() {
        let layer = Layer::new(Matrix::from_rows(&[[1.0, 2.0]]).unwrap(), vec![-4.0], ActivationKind::Identity).unwrap();
        let net = ConcreteNetwork::new(vec![layer], None).unwrap();
        assert_eq!(net.predict(&[0.0, 0.0]).unwrap(), 0);
    }
}
