//! Piecewise-affine functions of one rational variable with exact values at
//! breakpoints and affine formulas on the open cells between them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intervals::{solve_set, Interval, IntervalSet};
use crate::scalar::{format_scalar, int, serde_scalar, Ext, Scalar};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Affine {
    #[serde(with = "serde_scalar")]
    pub intercept: Scalar,
    #[serde(with = "serde_scalar")]
    pub slope: Scalar,
}

impl Affine {
    pub fn new(intercept: Scalar, slope: Scalar) -> Self {
        Affine { intercept, slope }
    }

    pub fn constant(c: Scalar) -> Self {
        Affine::new(c, int(0))
    }

    pub fn identity() -> Self {
        Affine::new(int(0), int(1))
    }

    pub fn at(&self, x: &Scalar) -> Scalar {
        &self.intercept + &self.slope * x
    }

    pub fn through(x1: &Scalar, y1: &Scalar, x2: &Scalar, y2: &Scalar) -> Self {
        let slope = (y2 - y1) / (x2 - x1);
        let intercept = y1 - &slope * x1;
        Affine { intercept, slope }
    }

    /// Abscissa where `self` equals `other`, if the lines cross once.
    pub fn crossing(&self, other: &Affine) -> Option<Scalar> {
        if self.slope == other.slope {
            None
        } else {
            Some((&other.intercept - &self.intercept) / (&self.slope - &other.slope))
        }
    }

    pub fn solve(&self, value: &Scalar) -> Option<Scalar> {
        if self.slope == int(0) {
            None
        } else {
            Some((value - &self.intercept) / &self.slope)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pwa {
    #[serde(with = "crate::scalar::serde_scalar_vec")]
    pub breaks: Vec<Scalar>,
    pub values: Vec<Option<Ext>>,
    /// `pieces[i]` lives on the open cell left of `breaks[i]`; the last one on the right ray.
    pub pieces: Vec<Option<Affine>>,
}

fn cell_samples(lo: Option<&Scalar>, hi: Option<&Scalar>) -> [Scalar; 3] {
    match (lo, hi) {
        (Some(a), Some(b)) => {
            let w = b - a;
            [a + &w / int(4), a + &w / int(2), a + &w * int(3) / int(4)]
        }
        (Some(a), None) => [a + int(1), a + int(2), a + int(3)],
        (None, Some(b)) => [b - int(3), b - int(2), b - int(1)],
        (None, None) => [int(-1), int(0), int(1)],
    }
}

impl Pwa {
    pub fn constant(c: Scalar) -> Self {
        Pwa { breaks: vec![], values: vec![], pieces: vec![Some(Affine::constant(c))] }
    }

    /// Samples an exactly evaluable function that is affine on every cell
    /// between the given breakpoints; a non-affine cell is reported as an error.
    pub fn from_fn<F: Fn(&Scalar) -> Option<Ext>>(breaks: &[Scalar], f: F) -> Result<Pwa> {
        let mut bs = breaks.to_vec();
        bs.sort();
        bs.dedup();
        let values: Vec<Option<Ext>> = bs.iter().map(&f).collect();
        let mut pieces = Vec::with_capacity(bs.len() + 1);
        for i in 0..=bs.len() {
            let lo = if i == 0 { None } else { bs.get(i - 1) };
            let hi = bs.get(i);
            let xs = cell_samples(lo, hi);
            let ys: Vec<Option<Ext>> = xs.iter().map(&f).collect();
            let finite: Vec<Option<&Scalar>> = ys.iter().map(|y| y.as_ref().and_then(|e| e.finite())).collect();
            if finite.iter().all(|y| y.is_some()) {
                let a = Affine::through(&xs[0], finite[0].unwrap(), &xs[1], finite[1].unwrap());
                if &a.at(&xs[2]) != finite[2].unwrap() {
                    return Err(Error::Internal(format!(
                        "function is not affine on the cell ({}, {})",
                        lo.map(format_scalar).unwrap_or("-inf".into()),
                        hi.map(format_scalar).unwrap_or("inf".into())
                    )));
                }
                pieces.push(Some(a));
            } else if finite.iter().all(|y| y.is_none()) {
                pieces.push(None);
            } else {
                return Err(Error::Internal("function changes definedness inside a cell".into()));
            }
        }
        Ok(Pwa { breaks: bs, values, pieces })
    }

    fn locate(&self, x: &Scalar) -> std::result::Result<usize, usize> {
        self.breaks.binary_search(x)
    }

    pub fn eval(&self, x: &Scalar) -> Option<Ext> {
        match self.locate(x) {
            Ok(i) => self.values[i].clone(),
            Err(i) => self.pieces[i].as_ref().map(|a| Ext::Fin(a.at(x))),
        }
    }

    pub fn eval_fin(&self, x: &Scalar) -> Option<Scalar> {
        self.eval(x).and_then(|e| e.finite().cloned())
    }

    /// Affine piece governing points immediately to the right of `x`.
    pub fn right_piece(&self, x: &Scalar) -> Option<&Affine> {
        match self.locate(x) {
            Ok(i) => self.pieces[i + 1].as_ref(),
            Err(i) => self.pieces[i].as_ref(),
        }
    }

    pub fn left_piece(&self, x: &Scalar) -> Option<&Affine> {
        match self.locate(x) {
            Ok(i) | Err(i) => self.pieces[i].as_ref(),
        }
    }

    pub fn right_limit(&self, x: &Scalar) -> Option<Scalar> {
        self.right_piece(x).map(|a| a.at(x))
    }

    pub fn left_limit(&self, x: &Scalar) -> Option<Scalar> {
        self.left_piece(x).map(|a| a.at(x))
    }

    /// Interior points where this function meets `other`.
    pub fn crossings(&self, other: &Pwa) -> Vec<Scalar> {
        let mut bs: Vec<Scalar> = self.breaks.iter().chain(other.breaks.iter()).cloned().collect();
        bs.sort();
        bs.dedup();
        let mut out = Vec::new();
        for i in 0..=bs.len() {
            let lo = if i == 0 { None } else { bs.get(i - 1) };
            let hi = bs.get(i);
            let probe = cell_samples(lo, hi)[1].clone();
            if let (Some(a), Some(b)) = (self.right_piece(&probe), other.right_piece(&probe)) {
                if let Some(x) = a.crossing(b) {
                    if lo.is_none_or(|l| &x > l) && hi.is_none_or(|h| &x < h) {
                        out.push(x);
                    }
                }
            }
        }
        out
    }

    /// Interior points where the function equals `c`.
    pub fn level_points(&self, c: &Scalar) -> Vec<Scalar> {
        let mut out = Vec::new();
        for (i, p) in self.pieces.iter().enumerate() {
            if let Some(a) = p {
                if let Some(x) = a.solve(c) {
                    let lo = if i == 0 { None } else { self.breaks.get(i - 1) };
                    let hi = self.breaks.get(i);
                    if lo.is_none_or(|l| &x > l) && hi.is_none_or(|h| &x < h) {
                        out.push(x);
                    }
                }
            }
        }
        out
    }

    pub fn critical_points(&self, levels: &[Scalar]) -> Vec<Scalar> {
        let mut out = self.breaks.clone();
        for c in levels {
            out.extend(self.level_points(c));
        }
        out
    }

    /// `{x in within : f(x) = c}` as an exact interval set.
    pub fn level_set(&self, c: &Scalar, within: &Interval) -> IntervalSet {
        let mut crit = self.critical_points(std::slice::from_ref(c));
        crit.extend(within.lo.finite().cloned());
        crit.extend(within.hi.finite().cloned());
        let target = Some(Ext::Fin(c.clone()));
        solve_set(&crit, |x| within.contains(x) && self.eval(x) == target)
    }

    /// Supremum over `(-inf, t]` with an attainment flag.
    pub fn sup_upto(&self, t: &Scalar) -> (Ext, bool) {
        let mut best: Option<(Ext, bool)> = None;
        let offer = |v: Ext, attained: bool, best: &mut Option<(Ext, bool)>| match best {
            None => *best = Some((v, attained)),
            Some((b, a)) => {
                if v > *b {
                    *best = Some((v, attained));
                } else if v == *b && attained {
                    *a = true;
                }
            }
        };
        let first_piece = &self.pieces[0];
        match first_piece {
            Some(a) if a.slope < int(0) => return (Ext::PosInf, false),
            _ => {}
        }
        for (i, b) in self.breaks.iter().enumerate() {
            if b > t {
                break;
            }
            if let Some(v) = &self.values[i] {
                offer(v.clone(), true, &mut best);
            }
            if let Some(a) = &self.pieces[i] {
                offer(Ext::Fin(a.at(b)), a.slope == int(0), &mut best);
            }
            let next = self.breaks.get(i + 1);
            if let Some(a) = &self.pieces[i + 1] {
                let right_end = match next {
                    Some(n) if n <= t => n.clone(),
                    _ => t.clone(),
                };
                if &right_end > b {
                    offer(Ext::Fin(a.at(b)), a.slope == int(0), &mut best);
                    let at_end = &right_end == t && !self.breaks.contains(t);
                    offer(Ext::Fin(a.at(&right_end)), at_end || a.slope == int(0), &mut best);
                }
            }
        }
        if self.breaks.first().is_none_or(|b0| t < b0) {
            if let Some(a) = &self.pieces[0] {
                offer(Ext::Fin(a.at(t)), true, &mut best);
            }
        }
        best.unwrap_or((Ext::NegInf, false))
    }

    /// Supremum over the whole line with an attainment flag.
    pub fn sup_all(&self) -> (Ext, bool) {
        let last = self.breaks.last().cloned().unwrap_or(int(0));
        let (mut v, mut attained) = self.sup_upto(&last);
        if self.breaks.is_empty() {
            if let Some(a) = &self.pieces[0] {
                if a.slope != int(0) {
                    return (Ext::PosInf, false);
                }
                return (Ext::Fin(a.intercept.clone()), true);
            }
        }
        if let Some(a) = self.pieces.last().unwrap() {
            if a.slope > int(0) {
                return (Ext::PosInf, false);
            }
            let lim = Ext::Fin(a.at(&last));
            if lim > v {
                v = lim;
                attained = a.slope == int(0);
            } else if lim == v && a.slope == int(0) {
                attained = true;
            }
        }
        (v, attained)
    }

    /// Running supremum `t -> sup_{r <= t} f(r)` as a piecewise-affine function.
    pub fn running_max(&self) -> Result<Pwa> {
        let mut bs = self.breaks.clone();
        for i in 1..=self.breaks.len() {
            let lo = &self.breaks[i - 1];
            let (level, _) = self.sup_upto(lo);
            if let (Some(a), Ext::Fin(level)) = (&self.pieces[i], level) {
                if a.slope > int(0) {
                    if let Some(x) = a.solve(&level) {
                        let inside = &x > lo && self.breaks.get(i).is_none_or(|h| &x < h);
                        if inside {
                            bs.push(x);
                        }
                    }
                }
            }
        }
        Pwa::from_fn(&bs, |t| Some(self.sup_upto(t).0).filter(|v| v.is_finite()))
    }
}
