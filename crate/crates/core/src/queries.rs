//! Sufficiency queries over ℓ∞ boxes.
//!
//! A query fixes the features in `S` to their values in `x` and lets every
//! other feature range over `[x_i - ε, x_i + ε]` clipped to the network's
//! input domain. Enclosure checks can only certify; a query is declared
//! insufficient only through a concrete witness re-evaluated on the original
//! network.

use alloc::vec;
use alloc::vec::Vec;

use crate::abstraction::AbstractNetwork;
use crate::bounds::{propagate_abstract, propagate_box};
use crate::error::{Error, Result};
use crate::interval::{affine_unchecked, Interval, IntervalVector};
use crate::network::{ActivationKind, ConcreteNetwork};
use crate::rng::{Fnv, SplitMix};

#[derive(Clone, Debug, PartialEq)]
pub struct SufficiencyQuery {
    x: Vec<f64>,
    fixed: Vec<bool>,
    epsilon: f64,
    target: usize,
    domain: IntervalVector,
}

fn validate_instance(net: &ConcreteNetwork, x: &[f64], fixed: &[bool], epsilon: f64) -> Result<()> {
    Error::check_len("instance", net.input_dim(), x.len())?;
    Error::check_len("fixed-feature mask", net.input_dim(), fixed.len())?;
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::validation("epsilon", "must be finite and non-negative"));
    }
    if !net.input_domain().contains_point(x, 0.0) {
        return Err(Error::validation("instance", "lies outside the network's input domain"));
    }
    Ok(())
}

fn clamped_box(x: &[f64], fixed: &[bool], epsilon: f64, domain: &IntervalVector) -> IntervalVector {
    x.iter()
        .zip(fixed)
        .zip(domain.iter())
        .map(|((&v, &f), d)| {
            if f {
                Interval::point(v)
            } else {
                Interval::new(d.lo().max(v - epsilon), d.hi().min(v + epsilon)).expect("x lies in the domain")
            }
        })
        .collect()
}

impl SufficiencyQuery {
    /// `fixed[i]` marks feature `i` as part of the candidate explanation.
    /// The target is the network's prediction on `x`.
    pub fn new(net: &ConcreteNetwork, x: Vec<f64>, fixed: Vec<bool>, epsilon: f64) -> Result<Self> {
        validate_instance(net, &x, &fixed, epsilon)?;
        let target = net.predict(&x)?;
        Ok(SufficiencyQuery {
            x,
            fixed,
            epsilon,
            target,
            domain: net.input_domain().clone(),
        })
    }

    pub fn from_indices(net: &ConcreteNetwork, x: Vec<f64>, explanation: &[usize], epsilon: f64) -> Result<Self> {
        let mut fixed = vec![false; net.input_dim()];
        for &i in explanation {
            *fixed.get_mut(i).ok_or_else(|| Error::validation("explanation", "feature index out of range"))? = true;
        }
        SufficiencyQuery::new(net, x, fixed, epsilon)
    }

    /// Same instance and target with a different explanation mask.
    pub fn with_fixed(&self, fixed: Vec<bool>) -> Result<Self> {
        Error::check_len("fixed-feature mask", self.x.len(), fixed.len())?;
        Ok(SufficiencyQuery { fixed, ..self.clone() })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn fixed(&self) -> &[bool] {
        &self.fixed
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn domain(&self) -> &IntervalVector {
        &self.domain
    }

    pub fn query_box(&self) -> IntervalVector {
        clamped_box(&self.x, &self.fixed, self.epsilon, &self.domain)
    }

    fn check_network(&self, input_dim: usize) -> Result<()> {
        Error::check_len("query dimension", input_dim, self.x.len())
    }

    fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        for (&v, &f) in self.x.iter().zip(&self.fixed) {
            h.f64(v).u64(f as u64);
        }
        h.f64(self.epsilon).u64(self.target as u64);
        h.finish()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Sufficient,
    Uncertain,
    /// A point of the query box the concrete network misclassifies.
    InsufficientWitness(Vec<f64>),
}

impl Verdict {
    pub fn is_sufficient(&self) -> bool {
        matches!(self, Verdict::Sufficient)
    }
}

/// Counterexample candidate budget: one gradient-sign corner per runner-up
/// class, the box center, then `random_points` seeded uniform samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CandidateConfig {
    pub runner_ups: usize,
    pub random_points: usize,
    pub seed: u64,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig {
            runner_ups: 2,
            random_points: 64,
            seed: 0,
        }
    }
}

/// `lo_t - max_{j≠t} hi_j`; non-negative means the target provably wins.
pub fn enclosure_margin(output: &IntervalVector, target: usize) -> f64 {
    let rival = output
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target)
        .map(|(_, i)| i.hi())
        .fold(f64::NEG_INFINITY, f64::max);
    output[target].lo() - rival
}

/// Result of a counterexample search.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSearch {
    pub witness: Option<Vec<f64>>,
    /// Candidate points evaluated on the concrete network.
    pub evaluations: usize,
}

/// Runner-up classes by logit, highest first, ties toward the lower index.
fn runner_ups(logits: &[f64], target: usize, k: usize) -> Vec<usize> {
    let mut rivals: Vec<usize> = (0..logits.len()).filter(|&j| j != target).collect();
    rivals.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    rivals.truncate(k);
    rivals
}

/// Corner of `b` that moves every non-degenerate dimension along `sign(g)`.
fn sign_corner(b: &IntervalVector, anchor: &[f64], g: &[f64]) -> Vec<f64> {
    b.iter()
        .zip(anchor)
        .zip(g)
        .map(|((d, &a), &gi)| {
            if gi > 0.0 {
                d.hi()
            } else if gi < 0.0 {
                d.lo()
            } else {
                a.clamp(d.lo(), d.hi())
            }
        })
        .collect()
}

/// Gradient-sign corners of `logit_j - logit_t` at `p` for the strongest
/// `k` rivals `j`.
fn rival_corners(net: &ConcreteNetwork, b: &IntervalVector, p: &[f64], target: usize, k: usize) -> Vec<Vec<f64>> {
    let trace = net.forward_trace(p).expect("validated dimension");
    let logits = trace.post.last().expect("at least one layer");
    runner_ups(logits, target, k)
        .into_iter()
        .map(|rival| {
            let mut seed = vec![0.0; net.output_dim()];
            seed[rival] = 1.0;
            seed[target] = -1.0;
            let g = net.backpropagate(&trace, seed).expect("validated dimension");
            sign_corner(b, p, &g)
        })
        .collect()
}

fn random_point(rng: &mut SplitMix, b: &IntervalVector) -> Vec<f64> {
    b.iter().map(|d| if d.is_point() { d.lo() } else { rng.uniform(d.lo(), d.hi()) }).collect()
}

/// Evaluates the candidate set for `q` on the concrete network and returns
/// the first point whose prediction differs from the target.
pub fn find_counterexample(net: &ConcreteNetwork, q: &SufficiencyQuery, cfg: &CandidateConfig) -> CandidateSearch {
    let b = q.query_box();
    let mut evaluations = 0;
    if b.is_degenerate() {
        return CandidateSearch { witness: None, evaluations };
    }
    let mut test = |p: Vec<f64>| {
        evaluations += 1;
        (net.predict(&p).expect("validated dimension") != q.target).then_some(p)
    };
    for corner in rival_corners(net, &b, &q.x, q.target, cfg.runner_ups) {
        if let Some(w) = test(corner) {
            return CandidateSearch { witness: Some(w), evaluations };
        }
    }
    if let Some(w) = test(b.center()) {
        return CandidateSearch { witness: Some(w), evaluations };
    }
    let mut rng = SplitMix::new(cfg.seed ^ q.fingerprint());
    for _ in 0..cfg.random_points {
        if let Some(w) = test(random_point(&mut rng, &b)) {
            return CandidateSearch { witness: Some(w), evaluations };
        }
    }
    CandidateSearch { witness: None, evaluations }
}

/// Output-enclosure margin of the concrete network on the query box.
pub fn concrete_margin(net: &ConcreteNetwork, q: &SufficiencyQuery) -> Result<f64> {
    q.check_network(net.input_dim())?;
    let lb = propagate_box(net, &q.query_box())?;
    Ok(enclosure_margin(lb.output(), q.target))
}

/// Enclosure check on the concrete network, falling back to candidate
/// evaluation when the enclosure cannot certify the target.
pub fn check_concrete(net: &ConcreteNetwork, q: &SufficiencyQuery, cfg: &CandidateConfig) -> Result<Verdict> {
    if concrete_margin(net, q)? >= 0.0 {
        return Ok(Verdict::Sufficient);
    }
    Ok(match find_counterexample(net, q, cfg).witness {
        Some(w) => Verdict::InsufficientWitness(w),
        None => Verdict::Uncertain,
    })
}

pub fn abstract_margin(anet: &AbstractNetwork, q: &SufficiencyQuery) -> Result<f64> {
    q.check_network(anet.input_dim())?;
    let out = propagate_abstract(anet, &q.query_box())?;
    Ok(enclosure_margin(&out, q.target))
}

/// Sufficient iff the abstract enclosure certifies the target; otherwise
/// Uncertain. Never produces a witness.
pub fn check_abstract(anet: &AbstractNetwork, q: &SufficiencyQuery) -> Result<Verdict> {
    Ok(if abstract_margin(anet, q)? >= 0.0 {
        Verdict::Sufficient
    } else {
        Verdict::Uncertain
    })
}

/// Candidate search after an Uncertain abstract verdict. Candidates are
/// evaluated on the concrete network; the abstract network only has to
/// agree on dimensions.
pub fn gen_counterexample(
    net: &ConcreteNetwork,
    anet: &AbstractNetwork,
    q: &SufficiencyQuery,
    cfg: &CandidateConfig,
) -> Result<Option<Vec<f64>>> {
    Error::check_len("abstract network input", net.input_dim(), anet.input_dim())?;
    Error::check_len("abstract network output", net.output_dim(), anet.output_dim())?;
    q.check_network(net.input_dim())?;
    Ok(find_counterexample(net, q, cfg).witness)
}

/// A regression sufficiency query: the output must stay within `delta` of
/// `f(x)` over the query box. Scalar-output networks only.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionQuery {
    x: Vec<f64>,
    fixed: Vec<bool>,
    epsilon: f64,
    delta: f64,
    domain: IntervalVector,
    reference: f64,
}

impl RegressionQuery {
    pub fn new(net: &ConcreteNetwork, x: Vec<f64>, fixed: Vec<bool>, epsilon: f64, delta: f64) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::Unsupported(alloc::format!(
                "regression queries need a scalar output, network has {}",
                net.output_dim()
            )));
        }
        validate_instance(net, &x, &fixed, epsilon)?;
        if !(delta > 0.0) {
            return Err(Error::validation("delta", "must be positive"));
        }
        let reference = net.forward(&x)?[0];
        Ok(RegressionQuery {
            x,
            fixed,
            epsilon,
            delta,
            domain: net.input_domain().clone(),
            reference,
        })
    }

    pub fn query_box(&self) -> IntervalVector {
        clamped_box(&self.x, &self.fixed, self.epsilon, &self.domain)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `f(x)`.
    pub fn reference(&self) -> f64 {
        self.reference
    }

    fn deviates(&self, y: f64) -> bool {
        (y - self.reference).abs() > self.delta
    }
}

pub fn check_regression(net: &ConcreteNetwork, q: &RegressionQuery, cfg: &CandidateConfig) -> Result<Verdict> {
    if net.output_dim() != 1 {
        return Err(Error::Unsupported("regression check on a multi-output network".into()));
    }
    Error::check_len("query dimension", net.input_dim(), q.x.len())?;
    let b = q.query_box();
    let out = propagate_box(net, &b)?.output()[0];
    if q.reference - q.delta <= out.lo() && out.hi() <= q.reference + q.delta {
        return Ok(Verdict::Sufficient);
    }
    if b.is_degenerate() {
        return Ok(Verdict::Uncertain);
    }
    let eval = |p: &[f64]| net.forward(p).expect("validated dimension")[0];
    let g = net.gradient(&q.x, 0)?;
    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut candidates = vec![sign_corner(&b, &q.x, &g), sign_corner(&b, &q.x, &neg), b.center()];
    let mut rng = SplitMix::new(cfg.seed ^ 0x005e_ed0f_4e96);
    candidates.extend((0..cfg.random_points).map(|_| random_point(&mut rng, &b)));
    Ok(candidates
        .into_iter()
        .find(|p| q.deviates(eval(p)))
        .map_or(Verdict::Uncertain, Verdict::InsufficientWitness))
}

/// Linear envelope `a_lo·z + c_lo ≤ act(z) ≤ a_hi·z + c_hi` on `d`.
#[derive(Clone, Copy)]
struct Envelope {
    a_lo: f64,
    c_lo: f64,
    a_hi: f64,
    c_hi: f64,
}

impl Envelope {
    fn new(kind: ActivationKind, d: Interval) -> Envelope {
        let (l, u) = (d.lo(), d.hi());
        let line = |a: f64, x: f64, y: f64| (a, y - a * x);
        let constant = |lo: f64, hi: f64| Envelope { a_lo: 0.0, c_lo: lo, a_hi: 0.0, c_hi: hi };
        match kind {
            ActivationKind::Identity => Envelope { a_lo: 1.0, c_lo: 0.0, a_hi: 1.0, c_hi: 0.0 },
            ActivationKind::Relu if u <= 0.0 => constant(0.0, 0.0),
            ActivationKind::Relu if l >= 0.0 => Envelope { a_lo: 1.0, c_lo: 0.0, a_hi: 1.0, c_hi: 0.0 },
            ActivationKind::Relu => {
                let a = u / (u - l);
                Envelope { a_lo: if u > -l { 1.0 } else { 0.0 }, c_lo: 0.0, a_hi: a, c_hi: -a * l }
            }
            ActivationKind::Sigmoid | ActivationKind::Tanh => {
                let (fl, fu) = (kind.apply(l), kind.apply(u));
                if u - l < 1e-9 {
                    return constant(fl, fu);
                }
                let chord = (fu - fl) / (u - l);
                let m = 0.5 * (l + u);
                let tangent = line(kind.derivative(m), m, kind.apply(m));
                // both functions are convex below zero and concave above
                let ((a_lo, c_lo), (a_hi, c_hi)) = if u <= 0.0 {
                    (tangent, line(chord, l, fl))
                } else if l >= 0.0 {
                    (line(chord, l, fl), tangent)
                } else {
                    let a = kind.derivative(l).min(kind.derivative(u));
                    (line(a, l, fl), line(a, u, fu))
                };
                // absorb rounding in the transcendental evaluations
                Envelope { a_lo, c_lo: c_lo - 1e-12, a_hi, c_hi: c_hi + 1e-12 }
            }
        }
    }
}

/// Lower bound on `y_t - y_j` over `b`, minimised over rivals `j`.
///
/// Each difference is pushed back to the input through linear envelopes of
/// the hidden activations (pre-activation ranges come from box propagation)
/// and compared with the interval bound on the last hidden layer; the larger
/// of the two is used. Never looser than [`enclosure_margin`].
fn difference_margin(net: &ConcreteNetwork, b: &IntervalVector, t: usize) -> Result<f64> {
    let lb = propagate_box(net, b)?;
    let layers = net.layers();
    let (last, hidden) = layers.split_last().expect("at least one layer");
    let mut envelopes: Vec<Vec<Envelope>> = Vec::with_capacity(hidden.len());
    let mut prev = b;
    for (layer, post) in hidden.iter().zip(lb.per_layer()) {
        let pre = affine_unchecked(layer.weights(), &IntervalVector::point(layer.bias()), prev);
        envelopes.push(pre.iter().map(|&d| Envelope::new(layer.activation(), d)).collect());
        prev = post;
    }
    let (w, bias) = (last.weights(), last.bias());
    let mut margin = f64::INFINITY;
    for j in (0..w.rows()).filter(|&j| j != t) {
        let mut lambda: Vec<f64> = w.row(t).iter().zip(w.row(j)).map(|(a, c)| a - c).collect();
        let mut constant = bias[t] - bias[j];
        let boxed = constant + concretize_lower(&lambda, prev);
        for (layer, env) in hidden.iter().zip(&envelopes).rev() {
            let mut mu = vec![0.0; lambda.len()];
            for ((m, &l), e) in mu.iter_mut().zip(&lambda).zip(env) {
                let (a, c) = if l >= 0.0 { (e.a_lo, e.c_lo) } else { (e.a_hi, e.c_hi) };
                *m = l * a;
                constant += l * c;
            }
            let wk = layer.weights();
            constant += mu.iter().zip(layer.bias()).map(|(m, c)| m * c).sum::<f64>();
            lambda = (0..wk.cols()).map(|k| mu.iter().enumerate().map(|(i, m)| m * wk.get(i, k)).sum()).collect();
        }
        let linear = constant + concretize_lower(&lambda, b);
        margin = margin.min(linear.max(boxed));
    }
    Ok(margin.max(enclosure_margin(lb.output(), t)))
}

/// Minimum of `lambda · v` over `v ∈ b`.
fn concretize_lower(lambda: &[f64], b: &IntervalVector) -> f64 {
    lambda.iter().zip(b.iter()).map(|(&l, d)| if l >= 0.0 { l * d.lo() } else { l * d.hi() }).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub enum OracleVerdict {
    ProvedSufficient,
    Witness(Vec<f64>),
    /// The split budget ran out before either outcome was established.
    Exhausted,
}

/// Projected gradient-sign descent on the margin against the strongest rival,
/// starting at `p`; returns the first misclassified iterate.
fn descend(net: &ConcreteNetwork, b: &IntervalVector, mut p: Vec<f64>, t: usize, steps: usize) -> Result<Option<Vec<f64>>> {
    let mut step = 0.5;
    for _ in 0..steps {
        let trace = net.forward_trace(&p)?;
        if net.predict(&p)? != t {
            return Ok(Some(p));
        }
        let logits = trace.post.last().expect("at least one layer");
        let mut seed = vec![0.0; logits.len()];
        seed[runner_ups(logits, t, 1)[0]] = 1.0;
        seed[t] = -1.0;
        let g = net.backpropagate(&trace, seed)?;
        for ((v, d), gi) in p.iter_mut().zip(b.iter()).zip(g) {
            if gi != 0.0 {
                *v = (*v + step * d.width() * gi.signum()).clamp(d.lo(), d.hi());
            }
        }
        step *= 0.6;
    }
    Ok((net.predict(&p)? != t).then_some(p))
}

/// Complete decision procedure for small queries by branch and bound.
///
/// A sub-box is discharged when a lower bound on every logit difference is
/// non-negative (linear envelopes back to the input, falling back on box
/// enclosures). Otherwise its center, the gradient-sign corners for the two
/// strongest rivals and a short gradient descent from the center are tried
/// as witnesses, and the widest free dimension is bisected; the child with
/// the lower bound is explored first. `budget` caps the number of
/// bisections.
pub fn oracle_check(net: &ConcreteNetwork, q: &SufficiencyQuery, budget: u64) -> Result<OracleVerdict> {
    q.check_network(net.input_dim())?;
    let t = q.target;
    let root = q.query_box();
    let root_margin = difference_margin(net, &root, t)?;
    let mut stack = vec![(root, root_margin)];
    let mut splits = 0u64;
    while let Some((b, margin)) = stack.pop() {
        if margin >= 0.0 {
            continue;
        }
        let center = b.center();
        if net.predict(&center)? != t {
            return Ok(OracleVerdict::Witness(center));
        }
        for corner in rival_corners(net, &b, &center, t, 2) {
            if net.predict(&corner)? != t {
                return Ok(OracleVerdict::Witness(corner));
            }
        }
        if let Some(w) = descend(net, &b, center, t, 8)? {
            return Ok(OracleVerdict::Witness(w));
        }
        let widest = b
            .iter()
            .enumerate()
            .filter(|(_, d)| d.width() > 0.0)
            .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                Some((_, w)) if w >= d.width() => best,
                _ => Some((i, d.width())),
            });
        let Some((dim, _)) = widest else {
            // a point box that neither certifies nor misclassifies
            return Ok(OracleVerdict::Exhausted);
        };
        if splits >= budget {
            return Ok(OracleVerdict::Exhausted);
        }
        splits += 1;
        let (lower, upper) = b.bisect(dim);
        let (ml, mu) = (difference_margin(net, &lower, t)?, difference_margin(net, &upper, t)?);
        if ml <= mu {
            stack.push((upper, mu));
            stack.push((lower, ml));
        } else {
            stack.push((lower, ml));
            stack.push((upper, mu));
        }
    }
    Ok(OracleVerdict::ProvedSufficient)
}
