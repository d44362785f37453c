//! Aggregate correspondences and per-unit value curves: real supply and
//! demand, supply cost, demand revenue and the conditional supply cost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intervals::{solve_set, IntervalSet};
use crate::population::{
    derive_demander_strategy, supplier_unit_payoff, unit_revenue_unchecked, DemanderClass, MarketKind, PopulationSpec,
    WeightSpec,
};
use crate::pwa::{Affine, Pwa};
use crate::scalar::{format_scalar, int, one, serde_scalar, zero, Ext, Scalar};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepBreak {
    #[serde(with = "serde_scalar")]
    pub price: Scalar,
    #[serde(with = "serde_scalar")]
    pub lower: Scalar,
    #[serde(with = "serde_scalar")]
    pub upper: Scalar,
}

/// Interval-valued monotone map with explicit jump intervals at breakpoints
/// and affine single values on the open cells between them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotoneStepCorrespondence {
    pub increasing: bool,
    pub breaks: Vec<StepBreak>,
    /// `cells[i]` lies left of `breaks[i]`; the last cell is the right ray.
    pub cells: Vec<Affine>,
}

impl MonotoneStepCorrespondence {
    pub fn constant(c: Scalar, increasing: bool) -> Self {
        MonotoneStepCorrespondence { increasing, breaks: vec![], cells: vec![Affine::constant(c)] }
    }

    /// Builds from a pointwise evaluator returning `(lower, upper)`.
    pub fn from_fn<F: Fn(&Scalar) -> (Scalar, Scalar)>(prices: &[Scalar], increasing: bool, f: F) -> Result<Self> {
        let profile = Pwa::from_fn(prices, |x| Some(Ext::Fin(f(x).0)))?;
        let breaks = profile
            .breaks
            .iter()
            .map(|p| {
                let (lower, upper) = f(p);
                StepBreak { price: p.clone(), lower, upper }
            })
            .collect();
        let cells = profile.pieces.into_iter().map(|c| c.expect("finite values")).collect();
        Ok(MonotoneStepCorrespondence { increasing, breaks, cells })
    }

    fn locate(&self, x: &Scalar) -> std::result::Result<usize, usize> {
        self.breaks.binary_search_by(|b| b.price.cmp(x))
    }

    pub fn eval(&self, x: &Scalar) -> (Scalar, Scalar) {
        match self.locate(x) {
            Ok(i) => (self.breaks[i].lower.clone(), self.breaks[i].upper.clone()),
            Err(i) => {
                let v = self.cells[i].at(x);
                (v.clone(), v)
            }
        }
    }

    pub fn min_at(&self, x: &Scalar) -> Scalar {
        self.eval(x).0
    }

    pub fn max_at(&self, x: &Scalar) -> Scalar {
        self.eval(x).1
    }

    pub fn left_limit(&self, x: &Scalar) -> Scalar {
        match self.locate(x) {
            Ok(i) | Err(i) => self.cells[i].at(x),
        }
    }

    pub fn right_limit(&self, x: &Scalar) -> Scalar {
        match self.locate(x) {
            Ok(i) => self.cells[i + 1].at(x),
            Err(i) => self.cells[i].at(x),
        }
    }

    pub fn prices(&self) -> Vec<Scalar> {
        self.breaks.iter().map(|b| b.price.clone()).collect()
    }

    /// Limit at `-inf` (when the left ray is constant).
    pub fn limit_neg_inf(&self) -> Option<Scalar> {
        let c = &self.cells[0];
        (c.slope == zero()).then(|| c.intercept.clone())
    }

    pub fn limit_pos_inf(&self) -> Option<Scalar> {
        let c = self.cells.last().unwrap();
        (c.slope == zero()).then(|| c.intercept.clone())
    }

    pub fn negate(&self) -> Self {
        MonotoneStepCorrespondence {
            increasing: !self.increasing,
            breaks: self
                .breaks
                .iter()
                .map(|b| StepBreak { price: b.price.clone(), lower: -&b.upper, upper: -&b.lower })
                .collect(),
            cells: self.cells.iter().map(|a| Affine::new(-&a.intercept, -&a.slope)).collect(),
        }
    }

    /// Breakpoints plus interior points where some cell crosses `level`.
    pub fn critical_points(&self, level: &Scalar) -> Vec<Scalar> {
        let mut out = self.prices();
        for (i, c) in self.cells.iter().enumerate() {
            if let Some(x) = c.solve(level) {
                let lo_ok = i == 0 || x > self.breaks[i - 1].price;
                let hi_ok = i == self.breaks.len() || x < self.breaks[i].price;
                if lo_ok && hi_ok {
                    out.push(x);
                }
            }
        }
        out
    }

    /// `{x : level in [lower(x), upper(x)]}`.
    pub fn preimage(&self, level: &Scalar) -> IntervalSet {
        solve_set(&self.critical_points(level), |x| {
            let (lo, hi) = self.eval(x);
            &lo <= level && level <= &hi
        })
    }

    /// Rows `price, lower, upper, closed_lower, closed_upper` at every breakpoint.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("price,lower,upper,closed_lower,closed_upper\n");
        for b in &self.breaks {
            out.push_str(&format!(
                "{},{},{},true,true\n",
                format_scalar(&b.price),
                format_scalar(&b.lower),
                format_scalar(&b.upper)
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotoneVerdict {
    pub passed: bool,
    pub failures: Vec<String>,
}

/// Checks that a nondecreasing correspondence is maximal monotone: closed
/// interval values, no gaps between one-sided limits, finite limits.
pub fn check_maximal_monotone(corr: &MonotoneStepCorrespondence) -> MonotoneVerdict {
    let mut failures = Vec::new();
    if !corr.increasing {
        failures.push("orientation is nonincreasing".to_string());
    }
    for (i, c) in corr.cells.iter().enumerate() {
        if c.slope < zero() {
            failures.push(format!("cell {i} decreases"));
        }
    }
    if corr.limit_neg_inf().is_none() || corr.limit_pos_inf().is_none() {
        failures.push("limits at infinity are not finite".to_string());
    }
    for b in &corr.breaks {
        let p = format_scalar(&b.price);
        if b.lower > b.upper {
            failures.push(format!("empty value at {p}"));
        }
        if b.lower != corr.left_limit(&b.price) {
            failures.push(format!("lower value at {p} differs from the left limit"));
        }
        if b.upper != corr.right_limit(&b.price) {
            failures.push(format!("upper value at {p} differs from the right limit"));
        }
    }
    MonotoneVerdict { passed: failures.is_empty(), failures }
}

fn clamp(x: &Scalar, lo: &Scalar, hi: &Scalar) -> Scalar {
    if x < lo {
        lo.clone()
    } else if x > hi {
        hi.clone()
    } else {
        x.clone()
    }
}

/// All aggregate curves of a population.
#[derive(Clone, Debug)]
pub struct Curves {
    pub spec: PopulationSpec,
    pub cost_offset: Scalar,
    pub supply: MonotoneStepCorrespondence,
    pub demand: MonotoneStepCorrespondence,
    /// `r -> max D(r)` with exact values at breakpoints.
    pub demand_max: Pwa,
    /// Demand revenue per unit.
    pub revenue: Pwa,
    pub s_max: Scalar,
    pub d_max: Scalar,
    demand_cutoffs: Vec<(Scalar, Scalar, Option<usize>)>,
}

pub fn real_supply(spec: &PopulationSpec) -> Result<MonotoneStepCorrespondence> {
    let mut prices = Vec::new();
    for s in &spec.suppliers {
        match &s.weight {
            WeightSpec::Atom { .. } => prices.push(s.h0.clone().unwrap()),
            WeightSpec::Uniform { lo, hi, .. } => prices.extend([lo.clone(), hi.clone()]),
        }
    }
    MonotoneStepCorrespondence::from_fn(&prices, true, |rho| {
        let mut lower = zero();
        let mut upper = zero();
        for s in &spec.suppliers {
            match &s.weight {
                WeightSpec::Atom { mass } => {
                    let h0 = s.h0.as_ref().unwrap();
                    let vol = mass * &s.v;
                    if h0 < rho {
                        lower += &vol;
                    }
                    if h0 <= rho {
                        upper += &vol;
                    }
                }
                WeightSpec::Uniform { lo, hi, density, .. } => {
                    let vol = density * &s.v * (clamp(rho, lo, hi) - lo);
                    lower += &vol;
                    upper += &vol;
                }
            }
        }
        (lower, upper)
    })
}

struct DemandParts {
    atoms: Vec<(Scalar, Scalar, DemanderClass)>,
}

fn demand_parts(spec: &PopulationSpec) -> Result<DemandParts> {
    let mut atoms = Vec::new();
    for d in &spec.demanders {
        if let WeightSpec::Atom { mass } = &d.weight {
            let st = derive_demander_strategy(d, None, &spec.kind)?;
            atoms.push((st.cutoff, mass * &st.volume, d.clone()));
        }
    }
    Ok(DemandParts { atoms })
}

fn demand_bounds(spec: &PopulationSpec, parts: &DemandParts, r: &Scalar) -> (Scalar, Scalar) {
    let mut lower = zero();
    let mut upper = zero();
    for (cut, vol, _) in &parts.atoms {
        if cut > r {
            lower += vol;
        }
        if cut >= r {
            upper += vol;
        }
    }
    for d in &spec.demanders {
        if let WeightSpec::Uniform { lo, hi, density, .. } = &d.weight {
            let vol = density * &d.eta1 * (hi - clamp(r, lo, hi));
            lower += &vol;
            upper += &vol;
        }
    }
    (lower, upper)
}

fn demand_numerator(spec: &PopulationSpec, parts: &DemandParts, r: &Scalar) -> Scalar {
    let mut n = zero();
    for (cut, _, class) in &parts.atoms {
        if cut >= r {
            let mass = class.weight.total_mass();
            n += mass * &class.eta1 * unit_revenue_unchecked(class, &spec.kind, r);
        }
    }
    for d in &spec.demanders {
        if let WeightSpec::Uniform { lo, hi, density, .. } = &d.weight {
            n += density * &d.eta1 * (hi - clamp(r, lo, hi)) * r;
        }
    }
    n
}

fn demand_prices(spec: &PopulationSpec, parts: &DemandParts) -> Vec<Scalar> {
    let mut prices = Vec::new();
    for (cut, _, class) in &parts.atoms {
        prices.push(cut.clone());
        if let (MarketKind::Credit { projects }, Some(i)) = (&spec.kind, class.project) {
            let debt = one() - class.eta0.as_ref().unwrap();
            for x in projects[i].payoffs() {
                prices.push(x / &debt - one());
            }
        }
    }
    for d in &spec.demanders {
        if let WeightSpec::Uniform { lo, hi, .. } = &d.weight {
            prices.extend([lo.clone(), hi.clone()]);
        }
    }
    prices
}

pub fn real_demand(spec: &PopulationSpec) -> Result<MonotoneStepCorrespondence> {
    let parts = demand_parts(spec)?;
    MonotoneStepCorrespondence::from_fn(&demand_prices(spec, &parts), false, |r| demand_bounds(spec, &parts, r))
}

/// `(p_bar, p_low)` at `rho`, each `0` with the vacuous flag set when its volume is zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupplyCostPoint {
    #[serde(with = "serde_scalar")]
    pub upper_cost: Scalar,
    pub upper_vacuous: bool,
    #[serde(with = "serde_scalar")]
    pub lower_cost: Scalar,
    pub lower_vacuous: bool,
}

impl Curves {
    pub fn build(spec: &PopulationSpec) -> Result<Curves> {
        spec.check()?;
        let supply = real_supply(spec)?;
        let parts = demand_parts(spec)?;
        let prices = demand_prices(spec, &parts);
        let demand = MonotoneStepCorrespondence::from_fn(&prices, false, |r| demand_bounds(spec, &parts, r))?;
        let demand_max = Pwa::from_fn(&prices, |r| Some(Ext::Fin(demand_bounds(spec, &parts, r).1)))?;
        let revenue = Pwa::from_fn(&prices, |r| {
            let d = demand_bounds(spec, &parts, r).1;
            if d == zero() {
                Some(Ext::Fin(zero()))
            } else {
                Some(Ext::Fin(demand_numerator(spec, &parts, r) / d))
            }
        })
        .map_err(|e| Error::condition(13, format!("demand revenue is not piecewise affine: {e}")))?;
        let s_max = supply.limit_pos_inf().ok_or_else(|| Error::condition(3, "supply is unbounded"))?;
        let d_max = demand.limit_neg_inf().ok_or_else(|| Error::condition(6, "demand is unbounded"))?;
        let demand_cutoffs = parts.atoms.iter().map(|(c, v, d)| (c.clone(), v.clone(), d.project)).collect();
        Ok(Curves {
            spec: spec.clone(),
            cost_offset: spec.kind.cost_offset(),
            supply,
            demand,
            demand_max,
            revenue,
            s_max,
            d_max,
            demand_cutoffs,
        })
    }

    pub fn supply_cost_at(&self, rho: &Scalar) -> SupplyCostPoint {
        let (smin, smax) = self.supply.eval(rho);
        let mut upper_num = zero();
        let mut lower_num = zero();
        for s in &self.spec.suppliers {
            match &s.weight {
                WeightSpec::Atom { mass } => {
                    let h0 = s.h0.as_ref().unwrap();
                    if h0 <= rho {
                        let w = supplier_unit_payoff(s, &self.spec.kind, rho).expect("rho above cutoff");
                        let term = mass * &s.h1 * w;
                        if h0 < rho {
                            lower_num += &term;
                        }
                        upper_num += term;
                    }
                }
                WeightSpec::Uniform { lo, hi, density, .. } => {
                    let included = density * (clamp(rho, lo, hi) - lo);
                    let per = -(&self.cost_offset + rho) * &s.v;
                    upper_num += &included * &per;
                    lower_num += included * per;
                }
            }
        }
        let ratio = |num: Scalar, den: &Scalar| if den == &zero() { (zero(), true) } else { (-num / den, false) };
        let (upper_cost, upper_vacuous) = ratio(upper_num, &smax);
        let (lower_cost, lower_vacuous) = ratio(lower_num, &smin);
        SupplyCostPoint { upper_cost, upper_vacuous, lower_cost, lower_vacuous }
    }

    /// Conditional supply cost `c_hat(q, rho)`.
    pub fn conditional_cost(&self, q: &Scalar, rho: &Scalar) -> Scalar {
        let (smin, smax) = self.supply.eval(rho);
        let cost = self.supply_cost_at(rho);
        let w_lo = (one() - q) * &smin;
        let w_hi = q * &smax;
        let den = &w_lo + &w_hi;
        if den == zero() {
            zero()
        } else {
            (w_lo * cost.lower_cost + w_hi * cost.upper_cost) / den
        }
    }

    /// Blended supply volume `Q(q, rho)`.
    pub fn blended_volume(&self, q: &Scalar, rho: &Scalar) -> Scalar {
        let (smin, smax) = self.supply.eval(rho);
        (one() - q) * smin + q * smax
    }

    /// Per-unit cost at supply price `rho` wherever the volume is positive.
    pub fn unit_cost(&self, rho: &Scalar) -> Scalar {
        &self.cost_offset + rho
    }

    pub fn unit_cost_ext(&self, rho: &Ext) -> Ext {
        match rho {
            Ext::Fin(x) => Ext::Fin(self.unit_cost(x)),
            other => other.clone(),
        }
    }

    /// Supply price solving `unit_cost(rho) = p`.
    pub fn price_for_cost(&self, p: &Scalar) -> Scalar {
        p - &self.cost_offset
    }

    pub fn revenue_at(&self, r: &Scalar) -> Scalar {
        self.revenue.eval_fin(r).expect("revenue is finite")
    }

    pub fn demand_max_at(&self, r: &Scalar) -> Scalar {
        self.demand.max_at(r)
    }

    /// Highest demand revenue with an attainment flag.
    pub fn highest_revenue(&self) -> (Ext, bool) {
        self.revenue.sup_all()
    }

    /// Largest finite demand cutoff (the frontier of the represented population).
    pub fn max_demand_cutoff(&self) -> Option<Scalar> {
        self.demand_cutoffs.iter().map(|(c, _, _)| c.clone()).max()
    }

    pub fn check_no_free_supply(&self) -> std::result::Result<(), String> {
        let positive = solve_set(&self.supply.critical_points(&zero()), |x| self.supply.max_at(x) > zero());
        match positive.inf() {
            None => Ok(()),
            Some((Ext::Fin(rho0), attained)) => {
                let c = self.unit_cost(&rho0);
                if c < zero() || (c == zero() && attained) {
                    Err(format!(
                        "supply is available at cost {} from supply price {}",
                        format_scalar(&c),
                        format_scalar(&rho0)
                    ))
                } else {
                    Ok(())
                }
            }
            Some(_) => Err("supply is available at arbitrarily low prices".into()),
        }
    }

    pub fn check_supply_trend(&self) -> std::result::Result<(), String> {
        let mut pts = self.supply.prices();
        pts.push(zero());
        for w in pts.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a < b && self.supply.max_at(a) > zero() && self.unit_cost(a) >= self.unit_cost(b) {
                return Err(format!("cost does not increase between {} and {}", format_scalar(a), format_scalar(b)));
            }
        }
        Ok(())
    }

    pub fn check_finite_revenue(&self) -> std::result::Result<(), String> {
        if self.revenue.pieces.iter().all(|p| p.is_some())
            && self.revenue.values.iter().all(|v| v.as_ref().is_some_and(|v| v.is_finite()))
        {
            Ok(())
        } else {
            Err("demand revenue is not finite everywhere".into())
        }
    }

    /// Demand revenue strictly increases on every level set of positive maximum demand.
    pub fn check_demand_trend(&self) -> std::result::Result<(), String> {
        let mut pts: Vec<Scalar> = self.revenue.breaks.clone();
        pts.extend(self.demand.prices());
        pts.sort();
        pts.dedup();
        let mut probes: Vec<Scalar> = Vec::new();
        if let Some(first) = pts.first() {
            probes.push(first - int(1));
        }
        for (i, p) in pts.iter().enumerate() {
            probes.push(p.clone());
            if let Some(next) = pts.get(i + 1) {
                probes.push((p + next) / int(2));
            }
        }
        for w in probes.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let (da, db) = (self.demand.max_at(a), self.demand.max_at(b));
            if da == db && da > zero() && self.revenue_at(a) >= self.revenue_at(b) {
                return Err(format!(
                    "revenue does not increase between {} and {} at demand level {}",
                    format_scalar(a),
                    format_scalar(b),
                    format_scalar(&da)
                ));
            }
        }
        for b in &pts {
            if self.demand.max_at(b) == self.demand.right_limit(b) && self.demand.max_at(b) > zero() {
                if let Some(right) = self.revenue.right_limit(b) {
                    if self.revenue_at(b) > right {
                        return Err(format!("revenue drops right of {}", format_scalar(b)));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn check_left_continuity(&self) -> std::result::Result<(), String> {
        for b in &self.revenue.breaks {
            let left = self.revenue.left_limit(b);
            if left.as_ref() != Some(&self.revenue_at(b)) {
                return Err(format!("demand revenue is not left-continuous at {}", format_scalar(b)));
            }
        }
        Ok(())
    }

    /// `price,value,tag` rows of a curve at breakpoints with one-sided limits.
    pub fn curve_csv(curve: &Pwa) -> String {
        let mut out = String::from("price,value,tag\n");
        for (i, b) in curve.breaks.iter().enumerate() {
            let p = format_scalar(b);
            if let Some(l) = curve.left_limit(b) {
                out.push_str(&format!("{p},{},left\n", format_scalar(&l)));
            }
            if let Some(v) = &curve.values[i] {
                out.push_str(&format!("{p},{v},at\n"));
            }
            if let Some(r) = curve.right_limit(b) {
                out.push_str(&format!("{p},{},right\n", format_scalar(&r)));
            }
        }
        out
    }

    /// Upper supply cost profile over supply prices.
    pub fn supply_cost_curve(&self, upper: bool) -> Result<Pwa> {
        Pwa::from_fn(&self.supply.prices(), |rho| {
            let c = self.supply_cost_at(rho);
            Some(Ext::Fin(if upper { c.upper_cost } else { c.lower_cost }))
        })
        .or_else(|_| {
            let mut pts = self.supply.prices();
            pts.extend(self.supply.critical_points(&zero()));
            Pwa::from_fn(&pts, |rho| {
                let c = self.supply_cost_at(rho);
                Some(Ext::Fin(if upper { c.upper_cost } else { c.lower_cost }))
            })
        })
    }
}

pub fn supply_cost_curves(spec: &PopulationSpec) -> Result<(Pwa, Pwa)> {
    let c = Curves::build(spec)?;
    Ok((c.supply_cost_curve(true)?, c.supply_cost_curve(false)?))
}

pub fn demand_revenue_curve(spec: &PopulationSpec) -> Result<Pwa> {
    Ok(Curves::build(spec)?.revenue)
}

pub fn conditional_supply_cost(spec: &PopulationSpec, q: &Scalar, rho: &Scalar) -> Result<Scalar> {
    Ok(Curves::build(spec)?.conditional_cost(q, rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markets::trading_example;
    use crate::scalar::frac;

    #[test]
    fn trading_example_demand_steps() {
        let c = Curves::build(&trading_example(&frac(43, 100)).spec).unwrap();
        assert_eq!(c.demand.eval(&int(1)), (frac(2, 5), int(1)));
        assert_eq!(c.demand.eval(&int(2)), (zero(), frac(2, 5)));
        assert_eq!(c.demand.eval(&int(3)), (zero(), zero()));
        assert_eq!(c.supply.eval(&int(1)), (frac(344, 1000), frac(344, 1000)));
        assert_eq!(c.s_max, frac(43, 100));
        assert_eq!(c.revenue_at(&frac(3, 2)), frac(3, 2));
        assert_eq!(c.revenue_at(&int(3)), zero());
    }

    #[test]
    fn gap_fails_maximal_monotone() {
        let corr = MonotoneStepCorrespondence {
            increasing: true,
            breaks: vec![StepBreak { price: int(1), lower: zero(), upper: frac(1, 2) }],
            cells: vec![Affine::constant(zero()), Affine::constant(int(1))],
        };
        assert!(!check_maximal_monotone(&corr).passed);
        assert!(check_maximal_monotone(&MonotoneStepCorrespondence::constant(int(2), true)).passed);
    }
}
