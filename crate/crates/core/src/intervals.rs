//! One-dimensional interval sets with explicit endpoint flags, and an exact
//! solver that turns a pointwise predicate into such a set.

use serde::{Deserialize, Serialize};

use crate::scalar::{half_sum, int, Ext, Scalar};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: Ext,
    pub hi: Ext,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn new(lo: Ext, lo_closed: bool, hi: Ext, hi_closed: bool) -> Self {
        let lo_closed = lo_closed && lo.is_finite();
        let hi_closed = hi_closed && hi.is_finite();
        Interval { lo, hi, lo_closed, hi_closed }
    }

    pub fn point(x: Scalar) -> Self {
        Interval::new(Ext::Fin(x.clone()), true, Ext::Fin(x), true)
    }

    pub fn closed(a: Scalar, b: Scalar) -> Self {
        Interval::new(Ext::Fin(a), true, Ext::Fin(b), true)
    }

    pub fn open(a: Scalar, b: Scalar) -> Self {
        Interval::new(Ext::Fin(a), false, Ext::Fin(b), false)
    }

    pub fn left_open(a: Scalar, b: Scalar) -> Self {
        Interval::new(Ext::Fin(a), false, Ext::Fin(b), true)
    }

    pub fn everything() -> Self {
        Interval::new(Ext::NegInf, false, Ext::PosInf, false)
    }

    pub fn is_empty(&self) -> bool {
        match self.lo.cmp(&self.hi) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Equal => !(self.lo_closed && self.hi_closed),
            std::cmp::Ordering::Less => false,
        }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi && self.lo_closed && self.hi_closed
    }

    pub fn contains(&self, x: &Scalar) -> bool {
        let above = if self.lo_closed { self.lo.le(x) } else { self.lo.lt(x) };
        let below = if self.hi_closed { self.hi.ge(x) } else { self.hi.gt(x) };
        above && below
    }

    /// A deterministic interior (or sole) point.
    pub fn sample(&self) -> Option<Scalar> {
        if self.is_empty() {
            return None;
        }
        Some(match (&self.lo, &self.hi) {
            (Ext::Fin(a), Ext::Fin(b)) => half_sum(a, b),
            (Ext::Fin(a), _) => a + int(1),
            (_, Ext::Fin(b)) => b - int(1),
            _ => int(0),
        })
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        let (lo, lo_closed) = match self.lo.cmp(&other.lo) {
            std::cmp::Ordering::Greater => (self.lo.clone(), self.lo_closed),
            std::cmp::Ordering::Less => (other.lo.clone(), other.lo_closed),
            std::cmp::Ordering::Equal => (self.lo.clone(), self.lo_closed && other.lo_closed),
        };
        let (hi, hi_closed) = match self.hi.cmp(&other.hi) {
            std::cmp::Ordering::Less => (self.hi.clone(), self.hi_closed),
            std::cmp::Ordering::Greater => (other.hi.clone(), other.hi_closed),
            std::cmp::Ordering::Equal => (self.hi.clone(), self.hi_closed && other.hi_closed),
        };
        Interval::new(lo, lo_closed, hi, hi_closed)
    }
}

/// Sorted, pairwise disjoint, non-adjacent union of non-empty intervals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalSet {
    pub parts: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet { parts: Vec::new() }
    }

    pub fn from_interval(i: Interval) -> Self {
        if i.is_empty() {
            Self::empty()
        } else {
            IntervalSet { parts: vec![i] }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn contains(&self, x: &Scalar) -> bool {
        self.parts.iter().any(|p| p.contains(x))
    }

    /// Supremum with an attainment flag; `None` for the empty set.
    pub fn sup(&self) -> Option<(Ext, bool)> {
        self.parts.last().map(|p| (p.hi.clone(), p.hi_closed))
    }

    pub fn inf(&self) -> Option<(Ext, bool)> {
        self.parts.first().map(|p| (p.lo.clone(), p.lo_closed))
    }

    pub fn is_connected(&self) -> bool {
        self.parts.len() <= 1
    }

    /// Closed endpoints of every part plus one interior point per part.
    pub fn representatives(&self) -> Vec<Scalar> {
        let mut out = Vec::new();
        for p in &self.parts {
            if p.lo_closed {
                out.push(p.lo.finite().cloned().unwrap());
            }
            if !p.is_point() {
                out.push(p.sample().unwrap());
            }
            if p.hi_closed && !p.is_point() {
                out.push(p.hi.finite().cloned().unwrap());
            }
        }
        out
    }

    /// Every finite endpoint of every part.
    pub fn endpoints(&self) -> Vec<Scalar> {
        let mut out = Vec::new();
        for p in &self.parts {
            out.extend(p.lo.finite().cloned());
            out.extend(p.hi.finite().cloned());
        }
        out
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut parts = Vec::new();
        for a in &self.parts {
            for b in &other.parts {
                let c = a.intersect(b);
                if !c.is_empty() {
                    parts.push(c);
                }
            }
        }
        parts.sort_by(|x, y| x.lo.cmp(&y.lo).then(y.lo_closed.cmp(&x.lo_closed)));
        IntervalSet { parts }
    }
}

/// Exact set `{x : pred(x)}` under the contract that `pred` is constant on
/// every open cell between consecutive critical points.
pub fn solve_set<F: FnMut(&Scalar) -> bool>(critical: &[Scalar], mut pred: F) -> IntervalSet {
    let mut cs: Vec<Scalar> = critical.to_vec();
    cs.sort();
    cs.dedup();
    if cs.is_empty() {
        return if pred(&int(0)) { IntervalSet::from_interval(Interval::everything()) } else { IntervalSet::empty() };
    }
    // Cells alternate: open gap, point, open gap, ..., point, open gap.
    let n = cs.len();
    let mut cells: Vec<(Ext, bool, Ext, bool, bool)> = Vec::with_capacity(2 * n + 1);
    for i in 0..=n {
        let lo = if i == 0 { Ext::NegInf } else { Ext::Fin(cs[i - 1].clone()) };
        let hi = if i == n { Ext::PosInf } else { Ext::Fin(cs[i].clone()) };
        let probe = match (&lo, &hi) {
            (Ext::Fin(a), Ext::Fin(b)) => half_sum(a, b),
            (Ext::NegInf, Ext::Fin(b)) => b - int(1),
            (Ext::Fin(a), Ext::PosInf) => a + int(1),
            _ => unreachable!(),
        };
        let truth = pred(&probe);
        cells.push((lo, false, hi, false, truth));
        if i < n {
            let x = cs[i].clone();
            let truth = pred(&x);
            cells.push((Ext::Fin(x.clone()), true, Ext::Fin(x), true, truth));
        }
    }
    let mut parts = Vec::new();
    let mut current: Option<Interval> = None;
    for (lo, lc, hi, hc, truth) in cells {
        if truth {
            match current.as_mut() {
                Some(cur) => {
                    cur.hi = hi;
                    cur.hi_closed = hc;
                }
                None => current = Some(Interval::new(lo, lc, hi, hc)),
            }
        } else if let Some(cur) = current.take() {
            parts.push(cur);
        }
    }
    if let Some(cur) = current {
        parts.push(cur);
    }
    IntervalSet { parts }
}
