//! Network JSON documents.
//!
//! ```json
//! {"input_dim": 3,
//!  "input_domain": {"lo": [0, 0, 0], "hi": [1, 1, 1]},
//!  "layers": [{"kind": "dense", "activation": "relu",
//!              "weights": [[...], ...], "bias": [...]}]}
//! ```
//!
//! `input_domain` is optional and defaults to the unit box. A trailing
//! `softmax` is accepted and dropped, since it never changes the predicted
//! class. Abstract networks add `bias_lo`/`bias_hi` in place of `bias`.

use serde::{Deserialize, Serialize};

use provex_core::{ActivationKind, AbstractNetwork, ConcreteNetwork, IntervalVector, Layer, Matrix};

use crate::IoError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainDoc {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDoc {
    pub kind: String,
    pub activation: String,
    pub weights: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_hi: Option<Vec<f64>>,
    /// Original indices of the rows kept in an abstract layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kept: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub input_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_domain: Option<DomainDoc>,
    /// Requested reduction rate; abstract networks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub layers: Vec<LayerDoc>,
}

pub fn parse_network(bytes: &[u8]) -> Result<ConcreteNetwork, IoError> {
    let doc: NetworkDoc = serde_json::from_slice(bytes)?;
    network_from_doc(&doc)
}

pub fn load_network(path: &std::path::Path) -> Result<ConcreteNetwork, IoError> {
    parse_network(&crate::read_file(path)?)
}

pub fn save_network(net: &ConcreteNetwork, path: &std::path::Path) -> Result<(), IoError> {
    crate::write_file(path, &network_to_json(net))
}

pub fn network_from_doc(doc: &NetworkDoc) -> Result<ConcreteNetwork, IoError> {
    if doc.layers.is_empty() {
        return Err(IoError::field("layers", "at least one layer is required"));
    }
    let last = doc.layers.len() - 1;
    let mut width = doc.input_dim;
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (k, l) in doc.layers.iter().enumerate() {
        let at = |f: &str| format!("layers[{k}].{f}");
        if l.kind != "dense" {
            return Err(IoError::field(at("kind"), format!("unsupported layer kind {:?}", l.kind)));
        }
        if l.bias_lo.is_some() || l.bias_hi.is_some() || l.kept.is_some() {
            return Err(IoError::field(at("bias_lo"), "interval biases belong to abstract networks"));
        }
        let activation = match l.activation.as_str() {
            "softmax" if k == last => ActivationKind::Identity,
            "softmax" => return Err(IoError::field(at("activation"), "softmax is only allowed on the last layer")),
            other => other
                .parse::<ActivationKind>()
                .map_err(|_| IoError::field(at("activation"), format!("unknown activation {other:?}")))?,
        };
        let bias = l.bias.clone().ok_or_else(|| IoError::field(at("bias"), "missing"))?;
        if l.weights.is_empty() {
            return Err(IoError::field(at("weights"), "no rows"));
        }
        for (r, row) in l.weights.iter().enumerate() {
            if row.len() != width {
                return Err(IoError::field(
                    format!("layers[{k}].weights[{r}]"),
                    format!("has {} entries, expected {width}", row.len()),
                ));
            }
        }
        if bias.len() != l.weights.len() {
            return Err(IoError::field(
                at("bias"),
                format!("has {} entries, expected {}", bias.len(), l.weights.len()),
            ));
        }
        let weights = Matrix::from_rows(&l.weights).map_err(|e| IoError::field(at("weights"), e.to_string()))?;
        let layer = Layer::new(weights, bias, activation).map_err(|e| IoError::field(at("weights"), e.to_string()))?;
        width = layer.outputs();
        layers.push(layer);
    }
    let domain = match &doc.input_domain {
        None => None,
        Some(d) => {
            if d.lo.len() != doc.input_dim || d.hi.len() != doc.input_dim {
                return Err(IoError::field("input_domain", "lo and hi need input_dim entries"));
            }
            Some(IntervalVector::from_bounds(&d.lo, &d.hi).map_err(|e| IoError::field("input_domain", e.to_string()))?)
        }
    };
    if layers[last].activation() != ActivationKind::Identity {
        return Err(IoError::field(
            format!("layers[{last}].activation"),
            "the last layer must produce logits (identity or softmax)",
        ));
    }
    Ok(ConcreteNetwork::new(layers, domain)?)
}

pub fn network_to_doc(net: &ConcreteNetwork) -> NetworkDoc {
    let unit = net.input_domain().iter().all(|d| d.lo() == 0.0 && d.hi() == 1.0);
    NetworkDoc {
        input_dim: net.input_dim(),
        input_domain: (!unit).then(|| DomainDoc {
            lo: net.input_domain().lower(),
            hi: net.input_domain().upper(),
        }),
        rho: None,
        layers: net
            .layers()
            .iter()
            .map(|l| LayerDoc {
                kind: "dense".into(),
                activation: l.activation().name().into(),
                weights: (0..l.outputs()).map(|i| l.weights().row(i).to_vec()).collect(),
                bias: Some(l.bias().to_vec()),
                bias_lo: None,
                bias_hi: None,
                kept: None,
            })
            .collect(),
    }
}

pub fn network_to_json(net: &ConcreteNetwork) -> Vec<u8> {
    serde_json::to_vec(&network_to_doc(net)).expect("network documents always serialize")
}

/// Degenerate biases are written as `bias`, interval biases as
/// `bias_lo`/`bias_hi`.
pub fn abstract_to_doc(anet: &AbstractNetwork) -> NetworkDoc {
    NetworkDoc {
        input_dim: anet.input_dim(),
        input_domain: None,
        rho: Some(anet.rho()),
        layers: anet
            .layers()
            .iter()
            .map(|l| {
                let degenerate = l.bias.is_degenerate();
                LayerDoc {
                    kind: "dense".into(),
                    activation: l.activation.name().into(),
                    weights: (0..l.weights.rows()).map(|i| l.weights.row(i).to_vec()).collect(),
                    bias: degenerate.then(|| l.bias.lower()),
                    bias_lo: (!degenerate).then(|| l.bias.lower()),
                    bias_hi: (!degenerate).then(|| l.bias.upper()),
                    kept: Some(l.kept.clone()),
                }
            })
            .collect(),
    }
}

pub fn abstract_to_json(anet: &AbstractNetwork) -> Vec<u8> {
    serde_json::to_vec(&abstract_to_doc(anet)).expect("network documents always serialize")
}
