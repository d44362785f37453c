//! Demand and supply graphs in the (per-unit money, volume) plane with their
//! augmented regions and borders. Inverse price finders and measure-finding
//! maps recover bids from plot points.
//!
//! Every set here is a union of finitely many primitives with explicit
//! endpoint flags. Sets indexed by volume are kept as exact interval sets on
//! the volume axis together with the border profile `y -> R(y)`, the highest
//! revenue reachable while keeping at least `y` of maximum demand.

use num::Signed;
use serde::{Deserialize, Serialize};

use crate::curves::Curves;
use crate::error::{Error, Result};
use crate::intervals::{solve_set, IntervalSet};
use crate::population::PopulationSpec;
use crate::pwa::{Affine, Pwa};
use crate::scalar::{format_scalar, half_sum, int, one, serde_scalar, serde_scalar_pairs, zero, Ext, Scalar};

/// Typed primitive of a planar point set; coordinates are `(p, d)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Point {
        #[serde(with = "serde_scalar")]
        p: Scalar,
        #[serde(with = "serde_scalar")]
        d: Scalar,
    },
    Vertical {
        #[serde(with = "serde_scalar")]
        p: Scalar,
        #[serde(with = "serde_scalar")]
        d_lo: Scalar,
        #[serde(with = "serde_scalar")]
        d_hi: Scalar,
        lo_closed: bool,
        hi_closed: bool,
    },
    Horizontal {
        #[serde(with = "serde_scalar")]
        d: Scalar,
        p_lo: Ext,
        p_hi: Ext,
        lo_closed: bool,
        hi_closed: bool,
    },
    /// Straight segment that is neither horizontal nor vertical.
    Segment { from: (Ext, Ext), to: (Ext, Ext), from_closed: bool, to_closed: bool },
}

fn within(x: &Scalar, lo: &Ext, lo_closed: bool, hi: &Ext, hi_closed: bool) -> bool {
    let above = if lo_closed { lo.le(x) } else { lo.lt(x) };
    let below = if hi_closed { hi.ge(x) } else { hi.gt(x) };
    above && below
}

impl Primitive {
    pub fn contains(&self, p: &Scalar, d: &Scalar) -> bool {
        match self {
            Primitive::Point { p: px, d: dx } => px == p && dx == d,
            Primitive::Vertical { p: px, d_lo, d_hi, lo_closed, hi_closed } => {
                px == p && within(d, &Ext::Fin(d_lo.clone()), *lo_closed, &Ext::Fin(d_hi.clone()), *hi_closed)
            }
            Primitive::Horizontal { d: dx, p_lo, p_hi, lo_closed, hi_closed } => {
                dx == d && within(p, p_lo, *lo_closed, p_hi, *hi_closed)
            }
            Primitive::Segment { from, to, from_closed, to_closed } => {
                let (Some(p0), Some(d0), Some(p1), Some(d1)) =
                    (from.0.finite(), from.1.finite(), to.0.finite(), to.1.finite())
                else {
                    return false;
                };
                let (lo, lo_c, hi, hi_c) =
                    if d0 <= d1 { (d0, *from_closed, d1, *to_closed) } else { (d1, *to_closed, d0, *from_closed) };
                if !within(d, &Ext::Fin(lo.clone()), lo_c, &Ext::Fin(hi.clone()), hi_c) {
                    return false;
                }
                let line = Affine::through(d0, p0, d1, p1);
                &line.at(d) == p
            }
        }
    }

    fn csv_row(&self) -> String {
        let f = |x: &Scalar| format_scalar(x);
        match self {
            Primitive::Point { p, d } => format!("point,{},{},{},{},true,true", f(p), f(d), f(p), f(d)),
            Primitive::Vertical { p, d_lo, d_hi, lo_closed, hi_closed } => {
                format!("vertical,{},{},{},{},{lo_closed},{hi_closed}", f(p), f(d_lo), f(p), f(d_hi))
            }
            Primitive::Horizontal { d, p_lo, p_hi, lo_closed, hi_closed } => {
                format!("horizontal,{p_lo},{},{p_hi},{},{lo_closed},{hi_closed}", f(d), f(d))
            }
            Primitive::Segment { from, to, from_closed, to_closed } => {
                format!("segment,{},{},{},{},{from_closed},{to_closed}", from.0, from.1, to.0, to.1)
            }
        }
    }
}

/// Finite union of planar primitives.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointSet2D {
    pub primitives: Vec<Primitive>,
}

impl PointSet2D {
    pub fn contains(&self, p: &Scalar, d: &Scalar) -> bool {
        self.primitives.iter().any(|x| x.contains(p, d))
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,p_from,d_from,p_to,d_to,from_closed,to_closed\n");
        for x in &self.primitives {
            out.push_str(&x.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Horizontal slab `{(p, d) : d in D-range, left(d) <= p <= right(d)}` with
/// per-edge flags; `right = None` means unbounded to the right.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slab {
    #[serde(with = "serde_scalar")]
    pub d_lo: Scalar,
    #[serde(with = "serde_scalar")]
    pub d_hi: Scalar,
    pub d_lo_closed: bool,
    pub d_hi_closed: bool,
    pub left: Affine,
    pub left_closed: bool,
    pub right: Option<Affine>,
    pub right_closed: bool,
}

impl Slab {
    pub fn contains(&self, p: &Scalar, d: &Scalar) -> bool {
        if !within(d, &Ext::Fin(self.d_lo.clone()), self.d_lo_closed, &Ext::Fin(self.d_hi.clone()), self.d_hi_closed) {
            return false;
        }
        let l = self.left.at(d);
        let left_ok = if self.left_closed { p >= &l } else { p > &l };
        let right_ok = match &self.right {
            None => true,
            Some(r) => {
                let r = r.at(d);
                if self.right_closed {
                    p <= &r
                } else {
                    p < &r
                }
            }
        };
        left_ok && right_ok
    }
}

/// Finite union of horizontal slabs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region2D {
    pub slabs: Vec<Slab>,
}

impl Region2D {
    pub fn contains(&self, p: &Scalar, d: &Scalar) -> bool {
        self.slabs.iter().any(|s| s.contains(p, d))
    }

    pub fn is_empty(&self) -> bool {
        self.slabs.is_empty()
    }
}

/// Closed-form description of the part of a countable support beyond a truncation index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailDescriptor {
    pub truncation: u32,
    #[serde(with = "serde_scalar")]
    pub residual_mass: Scalar,
    pub description: String,
}

/// Finite list of `(location, mass)` atoms, optionally with a declared tail.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    #[serde(with = "serde_scalar_pairs")]
    pub atoms: Vec<(Scalar, Scalar)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailDescriptor>,
}

impl DiscreteMeasure {
    pub fn zero() -> Self {
        DiscreteMeasure::default()
    }

    pub fn atom(at: Scalar, mass: Scalar) -> Self {
        if mass == zero() {
            return DiscreteMeasure::zero();
        }
        DiscreteMeasure { atoms: vec![(at, mass)], tail: None }
    }

    pub fn from_atoms(mut atoms: Vec<(Scalar, Scalar)>) -> Self {
        atoms.retain(|(_, m)| m > &zero());
        atoms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Scalar, Scalar)> = Vec::new();
        for (x, m) in atoms {
            match merged.last_mut() {
                Some((y, n)) if *y == x => *n += m,
                _ => merged.push((x, m)),
            }
        }
        DiscreteMeasure { atoms: merged, tail: None }
    }

    pub fn total(&self) -> Scalar {
        self.atoms.iter().fold(zero(), |acc, (_, m)| acc + m)
    }

    pub fn support(&self) -> Vec<Scalar> {
        self.atoms.iter().map(|(x, _)| x.clone()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Canonical members of the demand price measures at a point, with the
/// classification used by the admissibility predicate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DemandMeasures {
    pub representatives: Vec<DiscreteMeasure>,
    pub in_demand_graph: bool,
    pub in_farthest_border: bool,
}

/// All graph constructions of a well-behaved market.
#[derive(Clone, Debug)]
pub struct Graphs {
    pub curves: Curves,
    /// `t -> sup of revenue over (-inf, t]`.
    pub running: Pwa,
    /// `y -> R(y)`.
    pub border: Pwa,
    /// `s -> m(s)`, the lowest unit cost at which volume `s` is supplied.
    pub low_cost: Pwa,
    /// `s -> M(s)`, the highest such unit cost.
    pub high_cost: Pwa,
    pub highest_revenue: (Ext, bool),
    pub y_critical: Vec<Scalar>,
    pub frontier: Option<Scalar>,
}

/// Supremum of `f` over the open ray `(-inf, t)`.
pub fn sup_before(f: &Pwa, t: &Scalar) -> (Ext, bool) {
    let prev = f.breaks.iter().filter(|b| *b < t).max().cloned();
    let (mut v, mut a) = match &prev {
        Some(b) => f.sup_upto(b),
        None => (Ext::NegInf, false),
    };
    let mut offer = |x: Ext, attained: bool| {
        if x > v {
            v = x;
            a = attained;
        } else if x == v && attained {
            a = true;
        }
    };
    if let Some(piece) = f.left_piece(t) {
        if prev.is_none() && piece.slope < zero() {
            return (Ext::PosInf, false);
        }
        let flat = piece.slope == zero();
        if let Some(b) = &prev {
            offer(Ext::Fin(piece.at(b)), flat);
        }
        offer(Ext::Fin(piece.at(t)), flat);
    }
    (v, a)
}

impl Graphs {
    pub fn from_spec(spec: &PopulationSpec) -> Result<Graphs> {
        Graphs::build(Curves::build(spec)?)
    }

    pub fn build(curves: Curves) -> Result<Graphs> {
        let running = curves.revenue.running_max()?;
        let highest_revenue = curves.highest_revenue();
        let mut r_points: Vec<Scalar> = curves.revenue.breaks.clone();
        r_points.extend(running.breaks.iter().cloned());
        r_points.extend(curves.demand.prices());
        let mut ys = vec![zero(), curves.d_max.clone(), curves.s_max.clone()];
        for r in &r_points {
            ys.push(curves.demand.max_at(r));
            ys.push(curves.demand.min_at(r));
        }
        for b in &curves.supply.breaks {
            ys.push(b.lower.clone());
            ys.push(b.upper.clone());
        }
        ys.sort();
        ys.dedup();
        let mut g = Graphs {
            curves,
            running,
            border: Pwa::constant(zero()),
            low_cost: Pwa::constant(zero()),
            high_cost: Pwa::constant(zero()),
            highest_revenue,
            y_critical: ys.clone(),
            frontier: None,
        };
        g.border = Pwa::from_fn(&ys, |y| Some(g.border_at(y)))?;
        let mut s_points = vec![zero(), g.curves.s_max.clone()];
        for b in &g.curves.supply.breaks {
            s_points.push(b.lower.clone());
            s_points.push(b.upper.clone());
        }
        g.low_cost = Pwa::from_fn(&s_points, |s| g.cost_slice(s).map(|(m, _)| Ext::Fin(m)))?;
        g.high_cost = Pwa::from_fn(&s_points, |s| g.cost_slice(s).map(|(_, m)| m))?;
        let mut levels: Vec<Scalar> = vec![zero()];
        for f in [&g.curves.revenue, &g.running] {
            for b in &f.breaks {
                levels.extend(f.eval_fin(b));
                levels.extend(f.left_limit(b));
                levels.extend(f.right_limit(b));
            }
        }
        levels.extend(g.highest_revenue.0.finite().cloned());
        ys.extend(g.border.critical_points(&levels));
        ys.extend(g.border.crossings(&g.low_cost));
        ys.extend(g.border.crossings(&g.high_cost));
        ys.extend(s_points);
        ys.retain(|y| y >= &zero());
        ys.sort();
        ys.dedup();
        g.y_critical = ys;
        Ok(g)
    }

    pub fn with_frontier(mut self, frontier: Option<Scalar>) -> Self {
        self.frontier = frontier;
        self
    }

    fn check_frontier(&self, y: &Scalar) -> Result<()> {
        match &self.frontier {
            Some(f) if y > &zero() && y < f => Err(Error::BeyondTruncation(format!(
                "volume {} lies below the represented frontier {}",
                format_scalar(y),
                format_scalar(f)
            ))),
            _ => Ok(()),
        }
    }

    pub fn d_max(&self) -> &Scalar {
        &self.curves.d_max
    }

    pub fn s_max(&self) -> &Scalar {
        &self.curves.s_max
    }

    /// Highest demand price keeping at least `y` of maximum demand.
    pub fn t_of(&self, y: &Scalar) -> Option<Ext> {
        let set = solve_set(&self.curves.demand.critical_points(y), |r| &self.curves.demand.max_at(r) >= y);
        set.sup().map(|(s, _)| s)
    }

    /// `R(y)` with the attainment flag of the underlying supremum.
    pub fn border_with_attainment(&self, y: &Scalar) -> (Ext, bool) {
        match self.t_of(y) {
            None => (Ext::NegInf, false),
            Some(Ext::Fin(t)) => self.curves.revenue.sup_upto(&t),
            Some(_) => self.highest_revenue.clone(),
        }
    }

    fn border_at(&self, y: &Scalar) -> Ext {
        self.border_with_attainment(y).0
    }

    pub fn border_value(&self, y: &Scalar) -> Ext {
        if y > &zero() && y <= self.d_max() {
            self.border.eval(y).unwrap_or(Ext::NegInf)
        } else {
            self.border_at(y)
        }
    }

    /// Highest revenue over prices whose maximum demand strictly exceeds `y`, with attainment.
    pub fn strict_border(&self, y: &Scalar) -> (Ext, bool) {
        let demand = &self.curves.demand;
        let set = solve_set(&demand.critical_points(y), |r| &demand.max_at(r) > y);
        match set.sup() {
            None => (Ext::NegInf, false),
            Some((Ext::Fin(s), true)) => self.curves.revenue.sup_upto(&s),
            Some((Ext::Fin(s), false)) => sup_before(&self.curves.revenue, &s),
            Some(_) => self.highest_revenue.clone(),
        }
    }

    /// `[m(s), M(s)]`, the unit costs at which volume `s > 0` is supplied.
    pub fn cost_slice(&self, s: &Scalar) -> Option<(Scalar, Ext)> {
        if s <= &zero() || s > self.s_max() {
            return None;
        }
        let pre = self.curves.supply.preimage(s);
        let (lo, _) = pre.inf()?;
        let (hi, _) = pre.sup()?;
        let lo = lo.finite()?.clone();
        Some((self.curves.unit_cost(&lo), self.curves.unit_cost_ext(&hi)))
    }

    pub fn low_cost_at(&self, s: &Scalar) -> Option<Scalar> {
        self.cost_slice(s).map(|(m, _)| m)
    }

    pub fn high_cost_at(&self, s: &Scalar) -> Option<Ext> {
        self.cost_slice(s).map(|(_, m)| m)
    }

    /// Exact set of volumes satisfying a predicate that is constant between volume breakpoints.
    pub fn volume_set<F: Fn(&Scalar) -> bool>(&self, pred: F) -> IntervalSet {
        solve_set(&self.y_critical, pred)
    }

    fn in_y0(&self, y: &Scalar) -> bool {
        if y <= &zero() || y > self.d_max() {
            return false;
        }
        let (r, attained) = self.border_with_attainment(y);
        attained && r.ge(&zero())
    }

    fn in_y1(&self, y: &Scalar) -> bool {
        let (p_star, attained) = &self.highest_revenue;
        *attained && self.in_y0(y) && &self.border_value(y) == p_star
    }

    fn is_column_top(&self, y: &Scalar) -> bool {
        if y >= self.d_max() {
            return true;
        }
        let r = self.border_value(y);
        let flat = self.border.right_piece(y).is_some_and(|a| a.slope == zero());
        !(flat && self.border.right_limit(y).map(Ext::Fin) == Some(r))
    }

    fn in_y2(&self, y: &Scalar) -> bool {
        self.in_y0(y) && !self.in_y1(y) && !self.is_column_top(y)
    }

    fn reached_at_or_below(&self, y: &Scalar) -> bool {
        let Some(Ext::Fin(t)) = self.t_of(y) else {
            return false;
        };
        let Ext::Fin(level) = self.border_value(y) else {
            return false;
        };
        let demand = &self.curves.demand;
        if &demand.max_at(&t) == y && self.curves.revenue_at(&t) == level {
            return true;
        }
        let mut crit = self.curves.revenue.critical_points(std::slice::from_ref(&level));
        crit.extend(demand.prices());
        crit.push(t.clone());
        let set = solve_set(&crit, |r| r > &t && self.curves.revenue_at(r) == level && demand.max_at(r) > zero());
        !set.is_empty()
    }

    fn in_y3(&self, y: &Scalar) -> bool {
        self.in_y1(y) || (self.in_y0(y) && self.reached_at_or_below(y))
    }

    pub fn y0(&self) -> IntervalSet {
        self.volume_set(|y| self.in_y0(y))
    }

    pub fn y1(&self) -> IntervalSet {
        self.volume_set(|y| self.in_y1(y))
    }

    pub fn y2(&self) -> IntervalSet {
        self.volume_set(|y| self.in_y2(y))
    }

    /// Heights of the admissible border, excluding the origin.
    pub fn y3(&self) -> IntervalSet {
        self.volume_set(|y| self.in_y3(y))
    }

    fn on_border(&self, p: &Scalar, y: &Scalar) -> bool {
        self.border_value(y) == Ext::Fin(p.clone())
    }

    pub fn in_vertical_border(&self, p: &Scalar, y: &Scalar) -> bool {
        self.in_y0(y) && self.on_border(p, y)
    }

    pub fn in_farthest_border(&self, p: &Scalar, y: &Scalar) -> bool {
        self.in_y1(y) && self.on_border(p, y)
    }

    pub fn in_sharp_border(&self, p: &Scalar, y: &Scalar) -> bool {
        self.in_y2(y) && self.on_border(p, y)
    }

    pub fn in_admissible_border(&self, p: &Scalar, y: &Scalar) -> bool {
        (p == &zero() && y == &zero()) || (self.in_y3(y) && self.on_border(p, y))
    }

    /// Points `(R(y), y)` for `y` in the given volume set.
    pub fn border_graph(&self, set: &IntervalSet) -> PointSet2D {
        let mut primitives = Vec::new();
        for part in &set.parts {
            let (Some(lo), Some(hi)) = (part.lo.finite(), part.hi.finite()) else {
                continue;
            };
            if part.is_point() {
                if let Ext::Fin(p) = self.border_value(lo) {
                    primitives.push(Primitive::Point { p, d: lo.clone() });
                }
                continue;
            }
            let mut cuts: Vec<Scalar> = self.y_critical.iter().filter(|y| *y > lo && *y < hi).cloned().collect();
            cuts.insert(0, lo.clone());
            cuts.push(hi.clone());
            for (i, w) in cuts.windows(2).enumerate() {
                let (a, b) = (&w[0], &w[1]);
                let first = i == 0;
                let last = i + 2 == cuts.len();
                let a_closed = if first { part.lo_closed } else { true };
                let b_closed = last && part.hi_closed;
                if !first && a_closed {
                    if let Ext::Fin(p) = self.border_value(a) {
                        primitives.push(Primitive::Point { p, d: a.clone() });
                    }
                }
                let Some(piece) = self.border.right_piece(a) else { continue };
                let (pa, pb) = (piece.at(a), piece.at(b));
                if pa == pb {
                    primitives.push(Primitive::Vertical {
                        p: pa,
                        d_lo: a.clone(),
                        d_hi: b.clone(),
                        lo_closed: first && a_closed,
                        hi_closed: b_closed,
                    });
                } else {
                    primitives.push(Primitive::Segment {
                        from: (Ext::Fin(pa), Ext::Fin(a.clone())),
                        to: (Ext::Fin(pb), Ext::Fin(b.clone())),
                        from_closed: first && a_closed,
                        to_closed: b_closed,
                    });
                }
            }
        }
        PointSet2D { primitives }
    }

    pub fn vertical_border(&self) -> PointSet2D {
        self.border_graph(&self.y0())
    }

    pub fn farthest_border(&self) -> PointSet2D {
        self.border_graph(&self.y1())
    }

    pub fn sharp_border(&self) -> PointSet2D {
        self.border_graph(&self.y2())
    }

    pub fn admissible_border(&self) -> PointSet2D {
        let mut set = self.border_graph(&self.y3());
        set.primitives.push(Primitive::Point { p: zero(), d: zero() });
        set
    }

    fn demand_breaks(&self) -> Vec<Scalar> {
        let mut bs = self.curves.revenue.breaks.clone();
        bs.extend(self.curves.demand.prices());
        bs.sort();
        bs.dedup();
        bs
    }

    /// Range of `r -> (revenue(r), max demand(r))` minus the origin.
    pub fn demand_graph(&self) -> PointSet2D {
        let c = &self.curves;
        let bs = self.demand_breaks();
        let mut primitives = Vec::new();
        for i in 0..=bs.len() {
            let lo = if i == 0 { None } else { Some(&bs[i - 1]) };
            let hi = bs.get(i);
            let probe = match (lo, hi) {
                (Some(a), Some(b)) => half_sum(a, b),
                (Some(a), None) => a + one(),
                (None, Some(b)) => b - one(),
                (None, None) => zero(),
            };
            let Some(rev) = c.revenue.right_piece(&probe).cloned() else { continue };
            let dem = c.demand.right_limit(&probe);
            let dem_piece_slope = {
                let other = lo.map(|a| half_sum(a, &probe)).unwrap_or(&probe - one());
                (dem.clone() - c.demand.right_limit(&other), probe.clone() - other)
            };
            let constant_demand = dem_piece_slope.0 == zero();
            if constant_demand && dem == zero() {
                continue;
            }
            let end = |x: Option<&Scalar>, at_inf: Ext| -> Ext {
                match x {
                    Some(x) => Ext::Fin(rev.at(x)),
                    None => {
                        if rev.slope == zero() {
                            Ext::Fin(rev.intercept.clone())
                        } else {
                            at_inf
                        }
                    }
                }
            };
            if constant_demand {
                let (a, b) = (end(lo, Ext::NegInf), end(hi, Ext::PosInf));
                if a == b {
                    if let Ext::Fin(p) = a {
                        primitives.push(Primitive::Point { p, d: dem });
                    }
                    continue;
                }
                let (p_lo, p_hi) = if a < b { (a, b) } else { (b, a) };
                primitives.push(Primitive::Horizontal { d: dem, p_lo, p_hi, lo_closed: false, hi_closed: false });
            } else {
                let (Some(a), Some(b)) = (lo, hi) else { continue };
                let from = (Ext::Fin(rev.at(a)), Ext::Fin(c.demand.right_limit(a)));
                let to = (Ext::Fin(rev.at(b)), Ext::Fin(c.demand.left_limit(b)));
                primitives.push(Primitive::Segment { from, to, from_closed: false, to_closed: false });
            }
        }
        for b in &bs {
            let p = c.revenue_at(b);
            let d = c.demand.max_at(b);
            if !(p == zero() && d == zero()) {
                primitives.push(Primitive::Point { p, d });
            }
        }
        PointSet2D { primitives }
    }

    /// `{r : revenue(r) = p, max demand(r) > 0}`.
    pub fn revenue_level_set(&self, p: &Scalar) -> IntervalSet {
        let c = &self.curves;
        let mut crit = c.revenue.critical_points(std::slice::from_ref(p));
        crit.extend(c.demand.prices());
        solve_set(&crit, |r| &c.revenue_at(r) == p && c.demand.max_at(r) > zero())
    }

    pub fn in_demand_graph(&self, p: &Scalar, d: &Scalar) -> bool {
        d > &zero() && self.demand_price_finder_unchecked(p, d).is_some()
    }

    fn demand_price_finder_unchecked(&self, p: &Scalar, d: &Scalar) -> Option<Scalar> {
        let c = &self.curves;
        let mut crit = c.revenue.critical_points(std::slice::from_ref(p));
        crit.extend(c.demand.critical_points(d));
        let set = solve_set(&crit, |r| &c.revenue_at(r) == p && &c.demand.max_at(r) == d);
        set.parts.first().and_then(|part| if part.lo_closed { part.lo.finite().cloned() } else { part.sample() })
    }

    /// The demand price generating the graph point `(p, d)`.
    pub fn demand_price_finder(&self, p: &Scalar, d: &Scalar) -> Result<Scalar> {
        self.check_frontier(d)?;
        if d <= &zero() {
            return Err(Error::NotFound("demand graph excludes zero volume".into()));
        }
        self.demand_price_finder_unchecked(p, d).ok_or_else(|| {
            Error::NotFound(format!("({}, {}) is not on the demand graph", format_scalar(p), format_scalar(d)))
        })
    }

    /// `A_D`: slices `[0, R(y)]` for `y` in `(0, D_max]`.
    pub fn augmented_demand(&self) -> Region2D {
        let mut slabs = Vec::new();
        let d_max = self.d_max().clone();
        let mut cuts: Vec<Scalar> = self.y_critical.iter().filter(|y| *y > &zero() && *y < &d_max).cloned().collect();
        cuts.insert(0, zero());
        cuts.push(d_max.clone());
        for w in cuts.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a >= b {
                continue;
            }
            let mid = half_sum(a, b);
            let (r, attained) = self.border_with_attainment(&mid);
            if let (Some(piece), Ext::Fin(rv)) = (self.border.right_piece(a), r) {
                if rv > zero() || (rv == zero() && attained) {
                    slabs.push(Slab {
                        d_lo: a.clone(),
                        d_hi: b.clone(),
                        d_lo_closed: false,
                        d_hi_closed: false,
                        left: Affine::constant(zero()),
                        left_closed: true,
                        right: Some(piece.clone()),
                        right_closed: attained,
                    });
                }
            }
            let (r, attained) = self.border_with_attainment(b);
            if let Ext::Fin(rv) = r {
                if rv > zero() || (rv == zero() && attained) {
                    slabs.push(Slab {
                        d_lo: b.clone(),
                        d_hi: b.clone(),
                        d_lo_closed: true,
                        d_hi_closed: true,
                        left: Affine::constant(zero()),
                        left_closed: true,
                        right: Some(Affine::constant(rv)),
                        right_closed: attained,
                    });
                }
            }
        }
        Region2D { slabs }
    }

    /// `A_S`: slices `[m(s), inf)` for `s` in `(0, S_max]`.
    pub fn augmented_supply(&self) -> Region2D {
        let mut slabs = Vec::new();
        let s_max = self.s_max().clone();
        if s_max <= zero() {
            return Region2D { slabs };
        }
        let mut cuts: Vec<Scalar> =
            self.low_cost.breaks.iter().filter(|y| *y > &zero() && *y < &s_max).cloned().collect();
        cuts.insert(0, zero());
        cuts.push(s_max.clone());
        for w in cuts.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if let Some(piece) = self.low_cost.right_piece(a) {
                slabs.push(Slab {
                    d_lo: a.clone(),
                    d_hi: b.clone(),
                    d_lo_closed: false,
                    d_hi_closed: false,
                    left: piece.clone(),
                    left_closed: true,
                    right: None,
                    right_closed: false,
                });
            }
            if let Some(m) = self.low_cost_at(b) {
                slabs.push(Slab {
                    d_lo: b.clone(),
                    d_hi: b.clone(),
                    d_lo_closed: true,
                    d_hi_closed: true,
                    left: Affine::constant(m),
                    left_closed: true,
                    right: None,
                    right_closed: false,
                });
            }
        }
        Region2D { slabs }
    }

    /// `g(rho, q) = (c(q, rho), Q(q, rho))`.
    pub fn supply_plot(&self, rho: &Scalar, q: &Scalar) -> (Scalar, Scalar) {
        (self.curves.conditional_cost(q, rho), self.curves.blended_volume(q, rho))
    }

    pub fn supply_graph(&self) -> PointSet2D {
        let c = &self.curves;
        let mut primitives = Vec::new();
        let prices = c.supply.prices();
        for i in 0..=prices.len() {
            let lo = if i == 0 { None } else { Some(&prices[i - 1]) };
            let hi = prices.get(i);
            let cell = &c.supply.cells[i];
            match (lo, hi) {
                (Some(a), Some(b)) => {
                    let (sa, sb) = (cell.at(a), cell.at(b));
                    if sa == sb {
                        if sa > zero() {
                            primitives.push(Primitive::Horizontal {
                                d: sa,
                                p_lo: Ext::Fin(c.unit_cost(a)),
                                p_hi: Ext::Fin(c.unit_cost(b)),
                                lo_closed: false,
                                hi_closed: false,
                            });
                        }
                    } else {
                        primitives.push(Primitive::Segment {
                            from: (Ext::Fin(c.unit_cost(a)), Ext::Fin(sa)),
                            to: (Ext::Fin(c.unit_cost(b)), Ext::Fin(sb)),
                            from_closed: false,
                            to_closed: false,
                        });
                    }
                }
                (Some(a), None) => {
                    let s = cell.at(a);
                    if s > zero() {
                        primitives.push(Primitive::Horizontal {
                            d: s,
                            p_lo: Ext::Fin(c.unit_cost(a)),
                            p_hi: Ext::PosInf,
                            lo_closed: false,
                            hi_closed: false,
                        });
                    }
                }
                _ => {}
            }
        }
        for b in &c.supply.breaks {
            let p = c.unit_cost(&b.price);
            if b.upper <= zero() {
                continue;
            }
            if b.lower == b.upper {
                primitives.push(Primitive::Point { p, d: b.upper.clone() });
            } else {
                let lo_closed = b.lower > zero();
                primitives.push(Primitive::Vertical {
                    p,
                    d_lo: b.lower.clone(),
                    d_hi: b.upper.clone(),
                    lo_closed,
                    hi_closed: true,
                });
            }
        }
        PointSet2D { primitives }
    }

    pub fn in_supply_graph(&self, p: &Scalar, s: &Scalar) -> bool {
        s > &zero() && self.supply_price_finder(p, s).is_ok()
    }

    /// The unique supply price generating the graph point `(p, s)`.
    pub fn supply_price_finder(&self, p: &Scalar, s: &Scalar) -> Result<Scalar> {
        let off =
            || Error::NotFound(format!("({}, {}) is not on the supply graph", format_scalar(p), format_scalar(s)));
        if s <= &zero() {
            return Err(off());
        }
        let rho = self.curves.price_for_cost(p);
        let (lo, hi) = self.curves.supply.eval(&rho);
        if &lo <= s && s <= &hi {
            Ok(rho)
        } else {
            Err(off())
        }
    }

    /// Residual ratio reproducing volume `s` at the found supply price; `1` when the supply does not jump.
    pub fn residual_ratio_finder(&self, p: &Scalar, s: &Scalar) -> Result<Scalar> {
        let rho = self.supply_price_finder(p, s)?;
        let (lo, hi) = self.curves.supply.eval(&rho);
        if lo == hi {
            Ok(one())
        } else {
            Ok((s - &lo) / (hi - lo))
        }
    }

    pub fn supply_measure(&self, p: &Scalar, s: &Scalar) -> Result<DiscreteMeasure> {
        if p == &zero() && s == &zero() {
            return Ok(DiscreteMeasure::zero());
        }
        Ok(DiscreteMeasure::atom(self.supply_price_finder(p, s)?, s.clone()))
    }

    fn level_candidates(&self, p: &Scalar) -> Vec<(Scalar, Scalar)> {
        let set = self.revenue_level_set(p);
        let mut rs = set.representatives();
        rs.extend(set.endpoints().into_iter().filter(|r| set.contains(r)));
        rs.sort();
        rs.dedup();
        rs.into_iter()
            .map(|r| {
                let d = self.curves.demand.max_at(&r);
                (r, d)
            })
            .collect()
    }

    /// Canonical demand price measures at a point of the admissible border.
    pub fn demand_measures(&self, p: &Scalar, s: &Scalar) -> Result<DemandMeasures> {
        if p == &zero() && s == &zero() {
            return Ok(DemandMeasures {
                representatives: vec![DiscreteMeasure::zero()],
                in_demand_graph: false,
                in_farthest_border: false,
            });
        }
        self.check_frontier(s)?;
        if !self.in_admissible_border(p, s) {
            return Err(Error::Domain(format!(
                "({}, {}) is not on the admissible border",
                format_scalar(p),
                format_scalar(s)
            )));
        }
        let in_d = self.in_demand_graph(p, s);
        let in_v1 = self.in_farthest_border(p, s);
        let mut representatives = Vec::new();
        if in_d {
            representatives.push(DiscreteMeasure::atom(self.demand_price_finder(p, s)?, s.clone()));
        }
        let candidates = self.level_candidates(p);
        if in_v1 && !in_d {
            if let Some((r, _)) = candidates.iter().rfind(|(_, d)| d >= s) {
                representatives.push(DiscreteMeasure::atom(r.clone(), s.clone()));
            }
        }
        if in_v1 {
            if let Some(spread) = self.spread_measure(s, &candidates) {
                if self.admissible_demand_measure(p, s, &spread) {
                    representatives.push(spread);
                }
            }
        }
        if !in_d && !in_v1 {
            let above = candidates.iter().filter(|(_, d)| d > s).min_by(|a, b| a.1.cmp(&b.1));
            let below = candidates.iter().filter(|(_, d)| d < s && d > &zero()).max_by(|a, b| a.1.cmp(&b.1));
            if let (Some((r1, d1)), Some((r2, d2))) = (above, below) {
                let m1 = d1 * (s - d2) / (d1 - d2);
                let m2 = d2 * (d1 - s) / (d1 - d2);
                representatives.push(DiscreteMeasure::from_atoms(vec![(r1.clone(), m1), (r2.clone(), m2)]));
            }
        }
        if representatives.is_empty() {
            return Err(Error::Internal(format!(
                "no demand price measure found at ({}, {})",
                format_scalar(p),
                format_scalar(s)
            )));
        }
        Ok(DemandMeasures { representatives, in_demand_graph: in_d, in_farthest_border: in_v1 })
    }

    /// Places mass on every level price with positive demand, concentrating it on
    /// the price with the deepest demand so the service ratio stays at most one.
    fn spread_measure(&self, s: &Scalar, candidates: &[(Scalar, Scalar)]) -> Option<DiscreteMeasure> {
        let (r0, d0) = candidates.iter().max_by(|a, b| a.1.cmp(&b.1))?;
        let d0 = d0.clone();
        let others: Vec<&(Scalar, Scalar)> = candidates.iter().filter(|(r, d)| r != r0 && d > &zero()).collect();
        if others.is_empty() || d0 == zero() {
            return None;
        }
        let slack = one() - s / &d0;
        let drift: Scalar = others.iter().map(|(_, d)| (one() - d / &d0).abs()).sum();
        let weight: Scalar = others.iter().map(|(_, d)| d.clone()).sum();
        let mut t = s / (int(2) * &weight);
        if drift > zero() {
            if slack <= zero() {
                return None;
            }
            let cap = slack / (int(2) * drift);
            if cap < t {
                t = cap;
            }
        }
        let mut atoms: Vec<(Scalar, Scalar)> = others.iter().map(|(r, d)| (r.clone(), &t * d)).collect();
        atoms.push((r0.clone(), s - &t * &weight));
        Some(DiscreteMeasure::from_atoms(atoms))
    }

    /// Sum over the support of `mass / max demand`.
    pub fn service_ratio(&self, mu: &DiscreteMeasure) -> Option<Scalar> {
        let mut total = zero();
        for (r, m) in &mu.atoms {
            let d = self.curves.demand.max_at(r);
            if d == zero() {
                return None;
            }
            total += m / d;
        }
        Some(total)
    }

    /// Membership in the demand price measures at `(p, s)`; the support must lie
    /// in the demand prices whose revenue equals `p`.
    pub fn admissible_demand_measure(&self, p: &Scalar, s: &Scalar, mu: &DiscreteMeasure) -> bool {
        if p == &zero() && s == &zero() {
            return mu.total() == zero();
        }
        if !self.in_admissible_border(p, s) || &mu.total() != s {
            return false;
        }
        let level = self.revenue_level_set(p);
        if !mu.atoms.iter().all(|(r, _)| level.contains(r)) {
            return false;
        }
        let floor = if self.in_farthest_border(p, s) { zero() } else { one() };
        match self.service_ratio(mu) {
            Some(ratio) => ratio >= floor && ratio <= one(),
            None => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markets::trading_example;
    use crate::scalar::{frac, int};

    fn trading(v: Scalar) -> Graphs {
        Graphs::from_spec(&trading_example(&v).spec).unwrap()
    }

    #[test]
    fn trading_borders_match_hand_construction() {
        let g = trading(frac(43, 100));
        assert!(g.in_vertical_border(&int(1), &int(1)));
        assert!(g.in_vertical_border(&int(2), &frac(2, 5)));
        assert!(!g.in_vertical_border(&int(1), &frac(2, 5)));
        assert!(g.in_farthest_border(&int(2), &frac(1, 5)));
        assert!(g.in_sharp_border(&int(1), &frac(1, 2)));
        assert!(!g.in_sharp_border(&int(1), &int(1)));
        assert!(g.in_admissible_border(&int(1), &int(1)));
        assert!(!g.in_admissible_border(&int(1), &frac(1, 2)));
        assert!(g.in_admissible_border(&zero(), &zero()));
    }

    #[test]
    fn finders_round_trip() {
        let g = trading(frac(43, 100));
        assert_eq!(g.demand_price_finder(&int(2), &frac(2, 5)).unwrap(), int(2));
        assert_eq!(g.demand_price_finder(&frac(1, 2), &int(1)).unwrap(), frac(1, 2));
        assert!(g.demand_price_finder(&int(3), &int(1)).is_err());
        assert_eq!(g.supply_price_finder(&frac(50, 43), &frac(2, 5)).unwrap(), frac(50, 43));
        assert_eq!(g.residual_ratio_finder(&frac(50, 43), &frac(2, 5)).unwrap(), one());
    }

    #[test]
    fn augmented_regions() {
        let g = trading(frac(43, 100));
        let ad = g.augmented_demand();
        assert!(ad.contains(&int(1), &int(1)));
        assert!(ad.contains(&int(2), &frac(2, 5)));
        assert!(!ad.contains(&int(2), &frac(1, 2)));
        assert!(!ad.contains(&int(0), &int(0)));
        let a_s = g.augmented_supply();
        assert!(a_s.contains(&frac(50, 43), &frac(2, 5)));
        assert!(!a_s.contains(&int(1), &frac(2, 5)));
    }
}
