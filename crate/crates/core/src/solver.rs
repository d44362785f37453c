//! Competitive equilibria: the graphical finding algorithm, the profitable
//! deviation set and the clause-by-clause equilibrium verifier.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graphs::{DiscreteMeasure, Graphs, PointSet2D};
use crate::intervals::{solve_set, IntervalSet};
use crate::population::PopulationSpec;
use crate::pwa::Pwa;
use crate::scalar::{format_scalar, one, serde_scalar, zero, Ext, Scalar};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupplyAtom {
    #[serde(with = "serde_scalar")]
    pub price: Scalar,
    #[serde(with = "serde_scalar")]
    pub mass: Scalar,
}

/// A single supply bid with its residual ratio and a discrete demand price measure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquilibriumCandidate {
    pub supply: Option<SupplyAtom>,
    #[serde(with = "serde_scalar")]
    pub q: Scalar,
    pub demand: DiscreteMeasure,
}

impl EquilibriumCandidate {
    pub fn supply_measure(&self) -> DiscreteMeasure {
        match &self.supply {
            Some(a) => DiscreteMeasure::atom(a.price.clone(), a.mass.clone()),
            None => DiscreteMeasure::zero(),
        }
    }

    pub fn traded_volume(&self) -> Scalar {
        self.supply.as_ref().map(|a| a.mass.clone()).unwrap_or_else(zero)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    Empty,
    UniquePositiveProfit,
    ZeroProfitFamily,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateReport {
    #[serde(flatten)]
    pub candidate: EquilibriumCandidate,
    /// Unit cost and volume of the supply side.
    #[serde(with = "serde_scalar")]
    pub unit_cost: Scalar,
    #[serde(with = "serde_scalar")]
    pub service_ratio: Scalar,
    pub rationing: bool,
    pub multiple_demand_prices: bool,
}

/// Intermediate quantities of the finding algorithm.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlgorithmTrace {
    #[serde(with = "serde_scalar")]
    pub q_low: Scalar,
    #[serde(with = "serde_scalar")]
    pub v_high: Scalar,
    pub v_low: Ext,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyDescriptor {
    /// Volumes of the zero-profit family.
    pub volumes: IntervalSet,
    pub points: PointSet2D,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquilibriumSet {
    pub kind: EquilibriumKind,
    pub candidates: Vec<CandidateReport>,
    pub family: Option<FamilyDescriptor>,
    pub trace: AlgorithmTrace,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquilibriumSummary {
    pub exists: bool,
    pub unique: bool,
    pub rationing: bool,
    pub max_support_size: usize,
}

fn lt_ext(a: &Ext, b: &Scalar) -> bool {
    a.lt(b)
}

/// Deviation test at a supply-graph point `(c, volume)`.
pub fn profitable_at(g: &Graphs, cost: &Scalar, volume: &Scalar) -> bool {
    if volume <= &zero() {
        return false;
    }
    if g.border_value(volume).gt(cost) {
        return true;
    }
    let (strict, attained) = g.strict_border(volume);
    let second = strict.gt(cost) || (strict == Ext::Fin(cost.clone()) && attained);
    second && g.highest_revenue.0.gt(cost)
}

/// Membership of `(rho, q)` in the profitable deviation set.
pub fn profitable_set_membership(g: &Graphs, rho: &Scalar, q: &Scalar) -> bool {
    let volume = g.curves.blended_volume(q, rho);
    let cost = g.curves.conditional_cost(q, rho);
    profitable_at(g, &cost, &volume)
}

/// Volumes `s` whose cheapest supply-graph point lies in the profitable set.
pub fn profitable_volumes(g: &Graphs) -> IntervalSet {
    let mut crit = g.y_critical.clone();
    if let Ext::Fin(p) = &g.highest_revenue.0 {
        crit.extend(g.low_cost.level_points(p));
    }
    solve_set(&crit, |s| match g.low_cost_at(s) {
        Some(m) => profitable_at(g, &m, s),
        None => false,
    })
}

fn in_supply_slice(g: &Graphs, p: &Ext, s: &Scalar) -> bool {
    match (g.cost_slice(s), p) {
        (Some((m, big_m)), Ext::Fin(p)) => &m <= p && big_m.ge(p),
        _ => false,
    }
}

fn report(g: &Graphs, candidate: EquilibriumCandidate) -> CandidateReport {
    let unit_cost = match &candidate.supply {
        Some(a) => g.curves.conditional_cost(&candidate.q, &a.price),
        None => zero(),
    };
    let service_ratio = g.service_ratio(&candidate.demand).unwrap_or_else(zero);
    let rationing = !candidate.demand.is_zero() && service_ratio < one();
    let multiple_demand_prices = candidate.demand.atoms.len() > 1;
    CandidateReport { candidate, unit_cost, service_ratio, rationing, multiple_demand_prices }
}

fn candidates_at(
    g: &Graphs,
    supply_cost: &Scalar,
    demand_revenue: &Scalar,
    volume: &Scalar,
) -> Result<Vec<CandidateReport>> {
    let supply = g.supply_measure(supply_cost, volume)?;
    let q = g.residual_ratio_finder(supply_cost, volume)?;
    let supply = supply.atoms.first().map(|(price, mass)| SupplyAtom { price: price.clone(), mass: mass.clone() });
    let demands = g.demand_measures(demand_revenue, volume)?;
    Ok(demands
        .representatives
        .into_iter()
        .map(|demand| report(g, EquilibriumCandidate { supply: supply.clone(), q: q.clone(), demand }))
        .collect())
}

/// Runs the graphical finding algorithm on exact sets.
pub fn find_equilibria_in(g: &Graphs) -> Result<EquilibriumSet> {
    let d_max = g.d_max().clone();
    let s_max = g.s_max().clone();
    let cap = if d_max < s_max { d_max.clone() } else { s_max.clone() };
    let y2 = g.y2();
    let sharp_on_supply = g.volume_set(|y| y <= &s_max && y2.contains(y) && in_supply_slice(g, &g.border_value(y), y));
    let thick_b = g.volume_set(|d| {
        if d <= &zero() || d > &cap {
            return false;
        }
        let floor = g.low_cost_at(d).map(|m| if m > zero() { m } else { zero() });
        match floor {
            Some(f) => g.border_value(d).gt(&f),
            None => false,
        }
    });
    let mut q_low = zero();
    for set in [&sharp_on_supply, &thick_b] {
        if let Some((Ext::Fin(s), _)) = set.sup() {
            if s > q_low {
                q_low = s;
            }
        }
    }
    let y3 = g.y3();
    let v_high = if q_low > zero() && q_low <= s_max && y3.contains(&q_low) {
        match (g.border_value(&q_low), g.low_cost_at(&q_low)) {
            (Ext::Fin(r), Some(m)) if r >= m && r >= zero() => r,
            _ => zero(),
        }
    } else {
        zero()
    };
    let s0 = if q_low == zero() {
        IntervalSet::from_interval(crate::intervals::Interval::point(zero()))
    } else {
        match g.cost_slice(&q_low) {
            Some((m, big_m)) => IntervalSet::from_interval(crate::intervals::Interval::new(
                Ext::Fin(m),
                true,
                big_m.clone(),
                big_m.is_finite(),
            ))
            .intersect(&IntervalSet::from_interval(crate::intervals::Interval::closed(zero(), v_high.clone()))),
            None => IntervalSet::empty(),
        }
    };
    let without_top = s0.intersect(&IntervalSet {
        parts: vec![
            crate::intervals::Interval::new(Ext::NegInf, false, Ext::Fin(v_high.clone()), false),
            crate::intervals::Interval::new(Ext::Fin(v_high.clone()), false, Ext::PosInf, false),
        ],
    });
    let sup_rest = match without_top.sup() {
        Some((Ext::Fin(x), _)) if x > zero() => x,
        _ => zero(),
    };
    let v_low =
        [sup_rest, v_high.clone()].into_iter().filter(|x| s0.contains(x)).min().map(Ext::Fin).unwrap_or(Ext::PosInf);
    let trace = AlgorithmTrace { q_low: q_low.clone(), v_high: v_high.clone(), v_low: v_low.clone() };
    if lt_ext(&v_low, &v_high) {
        let v_low = v_low.finite().unwrap().clone();
        let candidates = candidates_at(g, &v_low, &v_high, &q_low)?;
        return Ok(EquilibriumSet { kind: EquilibriumKind::UniquePositiveProfit, candidates, family: None, trace });
    }
    let volumes = g.volume_set(|y| {
        y >= &q_low
            && y > &zero()
            && y <= &s_max
            && y3.contains(y)
            && g.border_value(y).gt(&zero())
            && in_supply_slice(g, &g.border_value(y), y)
    });
    if volumes.is_empty() {
        return Ok(EquilibriumSet { kind: EquilibriumKind::Empty, candidates: vec![], family: None, trace });
    }
    let mut candidates = Vec::new();
    for y in volumes.representatives() {
        if let Ext::Fin(p) = g.border_value(&y) {
            candidates.extend(candidates_at(g, &p, &p, &y)?);
        }
    }
    let points = g.border_graph(&volumes);
    Ok(EquilibriumSet {
        kind: EquilibriumKind::ZeroProfitFamily,
        candidates,
        family: Some(FamilyDescriptor { volumes, points }),
        trace,
    })
}

pub fn find_equilibria(spec: &PopulationSpec) -> Result<EquilibriumSet> {
    find_equilibria_in(&Graphs::from_spec(spec)?)
}

pub fn classify(set: &EquilibriumSet) -> EquilibriumSummary {
    let exists = !set.candidates.is_empty();
    let mut supplies: Vec<DiscreteMeasure> = set.candidates.iter().map(|c| c.candidate.supply_measure()).collect();
    supplies.dedup();
    let mut demands: Vec<&DiscreteMeasure> = set.candidates.iter().map(|c| &c.candidate.demand).collect();
    demands.dedup();
    let single_family_point =
        set.family.as_ref().is_none_or(|f| f.volumes.parts.len() == 1 && f.volumes.parts[0].is_point());
    EquilibriumSummary {
        exists,
        unique: exists && supplies.len() == 1 && demands.len() == 1 && single_family_point,
        rationing: set.candidates.iter().any(|c| c.rationing),
        max_support_size: set.candidates.iter().map(|c| c.candidate.demand.atoms.len()).max().unwrap_or(0),
    }
}

pub const CLAUSE_EQUAL_SUPPLY_BID: &str = "Equal Supply Bid";
pub const CLAUSE_NO_UNMATCHED_SUPPLY: &str = "No Unmatched Supply";
pub const CLAUSE_CONDITIONAL_MAXIMIZERS: &str = "Demand Prices as Conditional Maximizers";
pub const CLAUSE_SANDWICHED: &str = "Sandwiched Demand Prices";
pub const CLAUSE_SERVICE_RATIO: &str = "Demand Service Ratio";
pub const CLAUSE_NOT_HIGHER: &str = "Not Higher Supply Price";
pub const CLAUSE_NOT_LOWER: &str = "Not Lower Supply Price";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    pub violated: Vec<String>,
    pub notes: Vec<String>,
}

impl Verdict {
    pub fn first_violation(&self) -> Option<&str> {
        self.violated.first().map(String::as_str)
    }
}

/// Any supply-graph point lexicographically above `(cost, volume)` in the profitable set.
fn profitable_above(g: &Graphs, cost: &Scalar, volume: &Scalar) -> bool {
    if let Some((_, big_m)) = g.cost_slice(volume) {
        if big_m.gt(cost) {
            let border_above = g.border_value(volume).gt(cost);
            let strict_above = g.strict_border(volume).0.gt(cost) && g.highest_revenue.0.gt(cost);
            if border_above || strict_above {
                return true;
            }
        }
    }
    let above = profitable_volumes(g);
    let s_max = g.s_max().clone();
    !above
        .intersect(&IntervalSet::from_interval(crate::intervals::Interval::new(
            Ext::Fin(volume.clone()),
            false,
            Ext::Fin(s_max),
            true,
        )))
        .is_empty()
}

pub fn verify_equilibrium_in(g: &Graphs, cand: &EquilibriumCandidate) -> Verdict {
    let mut violated: Vec<String> = Vec::new();
    let mut notes = Vec::new();
    let fail = |clause: &str, v: &mut Vec<String>| {
        if !v.iter().any(|x| x == clause) {
            v.push(clause.to_string());
        }
    };
    let (volume, cost) = match &cand.supply {
        Some(atom) if atom.mass > zero() => {
            if cand.q < zero() || cand.q > one() {
                fail(CLAUSE_EQUAL_SUPPLY_BID, &mut violated);
            }
            let q_vol = g.curves.blended_volume(&cand.q, &atom.price);
            if q_vol != atom.mass {
                fail(CLAUSE_EQUAL_SUPPLY_BID, &mut violated);
            }
            (atom.mass.clone(), g.curves.conditional_cost(&cand.q, &atom.price))
        }
        _ => (zero(), zero()),
    };
    if volume == zero() {
        if !cand.demand.is_zero() {
            fail(CLAUSE_NO_UNMATCHED_SUPPLY, &mut violated);
        }
        if !profitable_volumes(g).is_empty() {
            fail(CLAUSE_NOT_HIGHER, &mut violated);
        }
        return Verdict { passed: violated.is_empty(), violated, notes };
    }
    if cand.demand.total() != volume {
        fail(CLAUSE_NO_UNMATCHED_SUPPLY, &mut violated);
    }
    let border = g.border_value(&volume);
    let maximizers_ok = border.ge(&cost)
        && cand
            .demand
            .atoms
            .iter()
            .all(|(r, _)| Ext::Fin(g.curves.revenue_at(r)) == border && g.curves.demand.max_at(r) > zero());
    if !maximizers_ok {
        fail(CLAUSE_CONDITIONAL_MAXIMIZERS, &mut violated);
    }
    let p = border.finite().cloned();
    let on_admissible = p.as_ref().is_some_and(|p| g.in_admissible_border(p, &volume));
    if !on_admissible {
        fail(CLAUSE_SANDWICHED, &mut violated);
    }
    let floor = match &p {
        Some(p) if g.in_farthest_border(p, &volume) => zero(),
        _ => one(),
    };
    match g.service_ratio(&cand.demand) {
        Some(ratio) if ratio >= floor && ratio <= one() => {}
        _ => fail(CLAUSE_SERVICE_RATIO, &mut violated),
    }
    if profitable_above(g, &cost, &volume) {
        fail(CLAUSE_NOT_HIGHER, &mut violated);
    }
    let hits = profitable_volumes(g);
    let floor_h = match hits.sup() {
        Some((Ext::Fin(h), _)) => h,
        _ => zero(),
    };
    let high_at_volume = g.high_cost_at(&volume);
    let y3 = g.y3();
    let cheaper = g.volume_set(|s| {
        if s <= &zero() || s > &volume || s < &floor_h || !y3.contains(s) {
            return false;
        }
        let Some(Ext::Fin(big_m)) = g.high_cost_at(s) else { return false };
        g.border_value(s).gt(&big_m) && (s < &volume || high_at_volume.as_ref().is_some_and(|m| m.lt(&cost)))
    });
    if !cheaper.is_empty() {
        fail(CLAUSE_NOT_LOWER, &mut violated);
    }
    let stranded =
        g.volume_set(|s| s > &volume && s <= g.s_max() && g.low_cost_at(s).is_some_and(|m| g.border_value(s).lt(&m)));
    if let Some((lo, _)) = stranded.inf() {
        notes.push(format!(
            "supply deviations with volume above {lo} have no non-negative continuation; treated as vacuous"
        ));
    }
    Verdict { passed: violated.is_empty(), violated, notes }
}

pub fn verify_equilibrium(spec: &PopulationSpec, cand: &EquilibriumCandidate) -> Result<Verdict> {
    Ok(verify_equilibrium_in(&Graphs::from_spec(spec)?, cand))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResaleValue {
    #[serde(with = "serde_scalar")]
    pub value: Scalar,
    /// Demand levels reachable at resale.
    #[serde(with = "crate::scalar::serde_scalar_vec")]
    pub levels: Vec<Scalar>,
    /// `true` when the demand-at-resale set is empty and the value is the conventional 0.
    pub empty: bool,
    /// `true` when unsold volume remains and some resale price beats the unit cost.
    pub resale_possible: bool,
}

/// Best value a sole winning mediator reaches after optimistic resale when
/// bidding `(rho, q)` on the supply side and quoting `r` on the demand side.
pub fn monopoly_optimistic_resale_value_in(g: &Graphs, rho: &Scalar, q: &Scalar, r: &Scalar) -> Result<ResaleValue> {
    let c = &g.curves;
    let volume = c.blended_volume(q, rho);
    let cost = c.conditional_cost(q, rho);
    let mut breaks = c.revenue.breaks.clone();
    breaks.push(r.clone());
    let e2 = Pwa::from_fn(&breaks, |z| Some(Ext::Fin(if z < r { c.revenue_at(z) } else { zero() })))?;
    let mut crit = e2.critical_points(std::slice::from_ref(&cost));
    crit.extend(c.demand.prices());
    let run = e2.running_max()?;
    crit.extend(run.critical_points(std::slice::from_ref(&cost)));
    let quiet_upto = |z: &Scalar| e2.sup_upto(z).0.le(&cost);
    let quiet_before = |z: &Scalar| {
        let (v, _) = crate::graphs::sup_before(&e2, z);
        v.le(&cost)
    };
    let right_of = |z: &Scalar| e2.right_limit(z).is_some_and(|v| v >= cost);
    let at = |z: &Scalar| e2.eval_fin(z).is_some_and(|v| v >= cost);
    let z1 = solve_set(&crit, |z| quiet_upto(z) && right_of(z));
    let z2 = solve_set(&crit, |z| quiet_before(z) && at(z));
    let mut levels = Vec::new();
    for part in &z1.parts {
        if let Some(lo) = part.lo.finite() {
            levels.push(c.demand.right_limit(lo));
        }
        for z in z1.representatives() {
            levels.push(c.demand.right_limit(&z));
        }
    }
    if let Some(first) = e2.pieces.first().cloned().flatten() {
        if first.slope == zero() && first.intercept >= cost {
            levels.push(c.d_max.clone());
        }
    }
    for part in &z2.parts {
        if let Some(lo) = part.lo.finite() {
            if part.lo_closed {
                levels.push(c.demand.max_at(lo));
            } else {
                levels.push(c.demand.right_limit(lo));
            }
        }
    }
    for z in z2.representatives() {
        levels.push(c.demand.max_at(&z));
    }
    levels.sort();
    levels.dedup();
    let quoted = c.demand.max_at(r);
    let quoted_revenue = c.revenue_at(r);
    let u = |d: &Scalar| -> Scalar {
        if d <= &volume {
            -(&volume - d) * &cost
        } else if d == &quoted {
            zero()
        } else {
            &quoted * (d - &volume) / (d - &quoted) * (&quoted_revenue - &cost)
        }
    };
    let resale_possible = volume > quoted && e2.sup_all().0.gt(&cost);
    let value = levels.iter().map(u).max();
    Ok(ResaleValue { empty: value.is_none(), value: value.unwrap_or_else(zero), levels, resale_possible })
}

pub fn monopoly_optimistic_resale_value(
    spec: &PopulationSpec,
    rho: &Scalar,
    q: &Scalar,
    r: &Scalar,
) -> Result<ResaleValue> {
    monopoly_optimistic_resale_value_in(&Graphs::from_spec(spec)?, rho, q, r)
}

/// Structured comparison between a solver result and a published claim.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimComparison {
    pub fixture: String,
    #[serde(with = "crate::scalar::serde_scalar_pairs")]
    pub claimed_demand: Vec<(Scalar, Scalar)>,
    #[serde(with = "crate::scalar::serde_scalar_pairs")]
    pub found_demand: Vec<(Scalar, Scalar)>,
    pub found_supply: Option<SupplyAtom>,
    pub found_kind: EquilibriumKind,
    pub single_demand_atom: bool,
    pub agrees: bool,
}

pub fn compare_with_claim(fixture: &str, set: &EquilibriumSet, claimed: Vec<(Scalar, Scalar)>) -> ClaimComparison {
    let first = set.candidates.first();
    let found_demand = first.map(|c| c.candidate.demand.atoms.clone()).unwrap_or_default();
    let single_demand_atom =
        !set.candidates.is_empty() && set.candidates.iter().all(|c| c.candidate.demand.atoms.len() == 1);
    ClaimComparison {
        fixture: fixture.to_string(),
        agrees: found_demand == claimed,
        claimed_demand: claimed,
        found_demand,
        found_supply: first.and_then(|c| c.candidate.supply.clone()),
        found_kind: set.kind.clone(),
        single_demand_atom,
    }
}

impl std::fmt::Display for EquilibriumSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            EquilibriumKind::Empty => return write!(f, "no equilibrium"),
            EquilibriumKind::UniquePositiveProfit => write!(f, "unique equilibrium")?,
            EquilibriumKind::ZeroProfitFamily => {
                let n = self.candidates.len();
                write!(f, "zero-profit equilibria ({n} representative{})", if n == 1 { "" } else { "s" })?
            }
        }
        for c in &self.candidates {
            let cand = &c.candidate;
            if let Some(s) = &cand.supply {
                write!(f, "; supply price {}; traded volume {}", format_scalar(&s.price), format_scalar(&s.mass))?;
            }
            let prices: Vec<String> = cand.demand.atoms.iter().map(|(r, _)| format_scalar(r)).collect();
            write!(f, "; demand price {}; rationing: {}", prices.join(", "), if c.rationing { "yes" } else { "no" })?;
        }
        Ok(())
    }
}
