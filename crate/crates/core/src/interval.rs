//! Closed real intervals and axis-aligned boxes.
//!
//! Plain `f64` arithmetic, no directed rounding: containment checks elsewhere
//! carry an explicit slack.

use alloc::vec::Vec;
use core::ops::Index;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::ActivationKind;

/// A closed interval `[lo, hi]` with `lo <= hi`. Degenerate intervals are points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo <= hi {
            Ok(Interval { lo, hi })
        } else {
            Err(Error::validation(
                "interval",
                alloc::format!("lower bound {lo} exceeds upper bound {hi}"),
            ))
        }
    }

    pub const fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: f64, slack: f64) -> bool {
        self.lo - slack <= v && v <= self.hi + slack
    }

    /// Minkowski sum of two intervals.
    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: Interval) -> Interval {
        Interval {
            lo: self.lo + other.lo,
            hi: self.hi + other.hi,
        }
    }

    /// `w * self`, sign-split so the result is the exact image.
    pub fn scale(self, w: f64) -> Interval {
        if w > 0.0 {
            Interval {
                lo: w * self.lo,
                hi: w * self.hi,
            }
        } else if w < 0.0 {
            Interval {
                lo: w * self.hi,
                hi: w * self.lo,
            }
        } else {
            Interval::point(0.0)
        }
    }

    pub fn hull(self, other: Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Image under a monotone nondecreasing activation.
    pub fn activate(self, kind: ActivationKind) -> Interval {
        match kind {
            ActivationKind::Identity => self,
            _ => Interval {
                lo: kind.apply(self.lo),
                hi: kind.apply(self.hi),
            },
        }
    }
}

/// An axis-aligned box: one [`Interval`] per dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalVector(Vec<Interval>);

impl IntervalVector {
    pub fn new(dims: Vec<Interval>) -> Self {
        IntervalVector(dims)
    }

    pub fn point(x: &[f64]) -> Self {
        IntervalVector(x.iter().map(|&v| Interval::point(v)).collect())
    }

    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Result<Self> {
        Error::check_len("interval bounds", lo.len(), hi.len())?;
        lo.iter()
            .zip(hi)
            .map(|(&l, &h)| Interval::new(l, h))
            .collect::<Result<Vec<_>>>()
            .map(IntervalVector)
    }

    /// The unit box `[0, 1]^n`.
    pub fn unit(n: usize) -> Self {
        IntervalVector(alloc::vec![Interval { lo: 0.0, hi: 1.0 }; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Interval> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Interval] {
        &self.0
    }

    pub fn lower(&self) -> Vec<f64> {
        self.0.iter().map(|i| i.lo).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.0.iter().map(|i| i.hi).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.0.iter().map(|i| i.midpoint()).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.0.iter().map(|i| i.width()).collect()
    }

    pub fn is_degenerate(&self) -> bool {
        self.0.iter().all(|i| i.is_point())
    }

    pub fn contains_point(&self, p: &[f64], slack: f64) -> bool {
        p.len() == self.len() && self.0.iter().zip(p).all(|(i, &v)| i.contains(v, slack))
    }

    /// Elementwise Minkowski sum.
    pub fn minkowski_add(&self, other: &IntervalVector) -> Result<IntervalVector> {
        Error::check_len("interval addition", self.len(), other.len())?;
        Ok(IntervalVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a.add(*b)).collect(),
        ))
    }

    /// `true` iff every dimension of `self` lies inside the matching one of
    /// `outer`, widened by `slack` on both sides.
    pub fn is_subset_of(&self, outer: &IntervalVector, slack: f64) -> Result<bool> {
        Error::check_len("subset test", outer.len(), self.len())?;
        if !(slack >= 0.0) {
            return Err(Error::validation("slack", "must be non-negative"));
        }
        Ok(self
            .0
            .iter()
            .zip(&outer.0)
            .all(|(a, b)| b.lo - slack <= a.lo && a.hi <= b.hi + slack))
    }

    pub fn activate(&self, kind: ActivationKind) -> IntervalVector {
        IntervalVector(self.0.iter().map(|i| i.activate(kind)).collect())
    }

    /// Splits dimension `dim` at its midpoint.
    pub fn bisect(&self, dim: usize) -> (IntervalVector, IntervalVector) {
        let mid = self.0[dim].midpoint();
        let mut lower = self.clone();
        let mut upper = self.clone();
        lower.0[dim].hi = mid;
        upper.0[dim].lo = mid;
        (lower, upper)
    }

}

impl Index<usize> for IntervalVector {
    type Output = Interval;

    fn index(&self, i: usize) -> &Interval {
        &self.0[i]
    }
}

impl FromIterator<Interval> for IntervalVector {
    fn from_iter<T: IntoIterator<Item = Interval>>(iter: T) -> Self {
        IntervalVector(iter.into_iter().collect())
    }
}

/// Minkowski sum `a ⊕ b` of two boxes.
pub fn add(a: &IntervalVector, b: &IntervalVector) -> Result<IntervalVector> {
    a.minkowski_add(b)
}

/// Tightest box enclosing `{W p + q : p ∈ v, q ∈ bias}`.
pub fn affine(weights: &Matrix, bias: &IntervalVector, v: &IntervalVector) -> Result<IntervalVector> {
    Error::check_len("affine input", weights.cols(), v.len())?;
    Error::check_len("affine bias", weights.rows(), bias.len())?;
    if !weights.is_finite() {
        return Err(Error::validation("weights", "contains a non-finite entry"));
    }
    Ok(affine_unchecked(weights, bias, v))
}

/// Box image of a monotone activation.
pub fn activation(kind: ActivationKind, v: &IntervalVector) -> IntervalVector {
    v.activate(kind)
}

/// Containment test `a ⊆ b` with slack.
pub fn subset(a: &IntervalVector, b: &IntervalVector, slack: f64) -> Result<bool> {
    a.is_subset_of(b, slack)
}

/// Row-wise sign-split affine image. Summation order matches
/// [`crate::network::ConcreteNetwork::forward`], so a point box maps to
/// exactly the concrete values.
/// Lower and upper end of `row · v`, lane-for-lane the same order as
/// `matrix::dot`.
fn interval_dot(row: &[f64], v: &[Interval]) -> (f64, f64) {
    #[inline(always)]
    fn term(w: f64, d: &Interval) -> (f64, f64) {
        if w >= 0.0 {
            (w * d.lo, w * d.hi)
        } else {
            (w * d.hi, w * d.lo)
        }
    }
    let mut lo = [0.0; 4];
    let mut hi = [0.0; 4];
    let wc = row.chunks_exact(4);
    let vc = v.chunks_exact(4);
    let (wt, vt) = (wc.remainder(), vc.remainder());
    for (a, b) in wc.zip(vc) {
        for k in 0..4 {
            let (l, h) = term(a[k], &b[k]);
            lo[k] += l;
            hi[k] += h;
        }
    }
    let (mut tl, mut th) = (0.0, 0.0);
    for (&a, b) in wt.iter().zip(vt) {
        let (l, h) = term(a, b);
        tl += l;
        th += h;
    }
    ((lo[0] + lo[1]) + (lo[2] + lo[3]) + tl, (hi[0] + hi[1]) + (hi[2] + hi[3]) + th)
}

pub(crate) fn affine_unchecked(weights: &Matrix, bias: &IntervalVector, v: &IntervalVector) -> IntervalVector {
    let cols = weights.cols();
    let data = weights.as_slice();
    let dims = v.as_slice();
    let mut out = Vec::with_capacity(weights.rows());
    for (i, b) in bias.iter().enumerate() {
        let row = &data[i * cols..(i + 1) * cols];
        let (lo, hi) = interval_dot(row, dims);
        out.push(Interval {
            lo: lo + b.lo,
            hi: hi + b.hi,
        });
    }
    IntervalVector(out)
}
