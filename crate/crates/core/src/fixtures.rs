//! Deterministic test networks and instances.
//!
//! Random fixtures draw every value from [`SplitMix`] in a fixed order: for
//! each layer, weights row-major then biases; after all layers, the
//! instances row by row. Weights are uniform on `[-1, 1] / sqrt(fan_in)`,
//! biases uniform on `[-0.1, 0.1]`, instance features uniform on `[0, 1)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{ActivationKind, ConcreteNetwork, Layer};
use crate::rng::SplitMix;

#[derive(Clone, Debug, PartialEq)]
pub enum FixtureSpec {
    /// The three-input, three-hidden-ReLU, two-class toy network.
    RunningExample,
    Random {
        inputs: usize,
        hidden: Vec<usize>,
        outputs: usize,
        activation: ActivationKind,
        seed: u64,
    },
    /// 784 inputs, seven sigmoid layers of width 200, ten logits.
    MnistShape { seed: u64 },
}

/// Builds the network for `spec` plus `instances` input vectors (the running
/// example always yields its single instance `(0, 1, 1)`).
pub fn make_fixture(spec: &FixtureSpec, instances: usize) -> Result<(ConcreteNetwork, Vec<Vec<f64>>)> {
    match spec {
        FixtureSpec::RunningExample => {
            let (net, x) = running_example();
            Ok((net, vec![x]))
        }
        FixtureSpec::Random {
            inputs,
            hidden,
            outputs,
            activation,
            seed,
        } => {
            if *inputs == 0 || *outputs == 0 || hidden.contains(&0) {
                return Err(Error::validation("fixture", "layer widths must be positive"));
            }
            Ok(random_network(*inputs, hidden, *outputs, *activation, *seed, instances))
        }
        FixtureSpec::MnistShape { seed } => Ok(mnist_shape(*seed, instances)),
    }
}

/// The running example and its explained instance `(0, 1, 1)`.
///
/// Biases are zero except the second output (10). The first two hidden rows
/// are identical `(2, 2, 1)`, the third is `(1, 1, 5)`; the output rows are
/// `(2, 1, 1)` and `(1, 1, 5)`. These reproduce the logits `(15, 46)`, the
/// hidden bounds `([3,5], [3,5], [6,7])` and output bounds `([15,22],
/// [46,55])` when features 2 and 3 are fixed, and `[8,22]` / `[37,55]` when
/// only feature 3 is fixed and hidden neurons 1 and 2 are merged.
pub fn running_example() -> (ConcreteNetwork, Vec<f64>) {
    let hidden = Layer::new(
        Matrix::from_rows(&[[2.0, 2.0, 1.0], [2.0, 2.0, 1.0], [1.0, 1.0, 5.0]]).expect("static"),
        vec![0.0; 3],
        ActivationKind::Relu,
    )
    .expect("static");
    let output = Layer::new(
        Matrix::from_rows(&[[2.0, 1.0, 1.0], [1.0, 1.0, 5.0]]).expect("static"),
        vec![0.0, 10.0],
        ActivationKind::Identity,
    )
    .expect("static");
    let net = ConcreteNetwork::new(vec![hidden, output], None).expect("static");
    (net, vec![0.0, 1.0, 1.0])
}

pub fn random_network(
    inputs: usize,
    hidden: &[usize],
    outputs: usize,
    activation: ActivationKind,
    seed: u64,
    instances: usize,
) -> (ConcreteNetwork, Vec<Vec<f64>>) {
    let mut rng = SplitMix::new(seed);
    let mut widths = Vec::with_capacity(hidden.len() + 2);
    widths.push(inputs);
    widths.extend_from_slice(hidden);
    widths.push(outputs);
    let last = widths.len() - 2;
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = 1.0 / libm::sqrt(fan_in as f64);
            let weights: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.uniform(-1.0, 1.0) * scale).collect();
            let bias: Vec<f64> = (0..fan_out).map(|_| rng.uniform(-0.1, 0.1)).collect();
            let act = if k == last { ActivationKind::Identity } else { activation };
            Layer::new(Matrix::new(fan_out, fan_in, weights).expect("sized"), bias, act).expect("finite")
        })
        .collect();
    let net = ConcreteNetwork::new(layers, None).expect("chained");
    let xs = (0..instances)
        .map(|_| (0..inputs).map(|_| rng.next_f64()).collect())
        .collect();
    (net, xs)
}

pub fn mnist_shape(seed: u64, instances: usize) -> (ConcreteNetwork, Vec<Vec<f64>>) {
    random_network(784, &[200; 7], 10, ActivationKind::Sigmoid, seed, instances)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_example_predicts_second_class() {
        let (net, xs) = make_fixture(&FixtureSpec::RunningExample, 1).unwrap();
        assert_eq!(net.predict(&xs[0]).unwrap(), 1);
    }

    #[test]
    fn random_fixture_is_reproducible() {
        let spec = FixtureSpec::Random {
            inputs: 4,
            hidden: vec![8, 8],
            outputs: 3,
            activation: ActivationKind::Relu,
            seed: 1,
        };
        let a = make_fixture(&spec, 3).unwrap();
        let b = make_fixture(&spec, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.fingerprint(), b.0.fingerprint());
        let other = FixtureSpec::Random {
            inputs: 4,
            hidden: vec![8, 8],
            outputs: 3,
            activation: ActivationKind::Relu,
            seed: 2,
        };
        assert_ne!(make_fixture(&other, 3).unwrap().0, a.0);
    }

    #[test]
    fn mnist_shape_architecture() {
        let (net, xs) = mnist_shape(3, 2);
        assert_eq!(net.input_dim(), 784);
        assert_eq!(net.output_dim(), 10);
        let hidden = &net.layers()[..net.layers().len() - 1];
        assert_eq!(hidden.len(), 7);
        assert!(hidden.iter().all(|l| l.outputs() == 200 && l.activation() == ActivationKind::Sigmoid));
        assert_eq!(xs.len(), 2);
    }

    #[test]
    fn weights_within_scaled_range() {
        let (net, _) = random_network(16, &[9], 2, ActivationKind::Tanh, 5, 0);
        let first = &net.layers()[0];
        assert!(first.weights().as_slice().iter().all(|w| w.abs() <= 0.25));
        assert!(first.bias().iter().all(|b| b.abs() <= 0.1));
    }

    #[test]
    fn zero_width_rejected() {
        let spec = FixtureSpec::Random {
            inputs: 3,
            hidden: vec![0],
            outputs: 2,
            activation: ActivationKind::Relu,
            seed: 0,
        };
        assert!(make_fixture(&spec, 1).is_err());
    }
}
