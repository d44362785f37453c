//! Supplier and demander populations as finite mixtures of atoms and uniform
//! segments, their dominant-strategy bids, mediator-side unit values, the
//! well-behavedness report and the finite-market sampler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markets::ProjectDistribution;
use crate::scalar::{format_scalar, int, one, pow2, serde_scalar, serde_scalar_opt, zero, Scalar};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    Atom {
        #[serde(with = "serde_scalar")]
        mass: Scalar,
    },
    Uniform {
        #[serde(with = "serde_scalar")]
        lo: Scalar,
        #[serde(with = "serde_scalar")]
        hi: Scalar,
        #[serde(with = "serde_scalar")]
        density: Scalar,
        #[serde(default)]
        lo_closed: bool,
        #[serde(default = "default_true")]
        hi_closed: bool,
    },
}

fn default_true() -> bool {
    true
}

impl WeightSpec {
    pub fn atom(mass: Scalar) -> Self {
        WeightSpec::Atom { mass }
    }

    pub fn uniform(lo: Scalar, hi: Scalar, density: Scalar) -> Self {
        WeightSpec::Uniform { lo, hi, density, lo_closed: false, hi_closed: true }
    }

    pub fn total_mass(&self) -> Scalar {
        match self {
            WeightSpec::Atom { mass } => mass.clone(),
            WeightSpec::Uniform { lo, hi, density, .. } => (hi - lo) * density,
        }
    }

    fn check(&self, path: &str) -> Result<()> {
        match self {
            WeightSpec::Atom { mass } if mass < &zero() => {
                Err(Error::spec(format!("{path}.mass"), "mass must be non-negative"))
            }
            WeightSpec::Uniform { lo, hi, .. } if lo >= hi => {
                Err(Error::spec(format!("{path}.lo"), "segment needs lo < hi"))
            }
            WeightSpec::Uniform { density, .. } if density < &zero() => {
                Err(Error::spec(format!("{path}.density"), "density must be non-negative"))
            }
            _ => Ok(()),
        }
    }
}

/// Supplier class `(h0, h1, v)`; for a uniform weight the cost `h0` ranges over the segment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupplierClass {
    pub weight: WeightSpec,
    #[serde(default, with = "serde_scalar_opt", skip_serializing_if = "Option::is_none")]
    pub h0: Option<Scalar>,
    #[serde(with = "serde_scalar")]
    pub h1: Scalar,
    #[serde(with = "serde_scalar")]
    pub v: Scalar,
}

/// Demander class `(eta0, eta1)`; credit classes carry the equity share in
/// `eta0` and a project index, trading classes the unit value in `eta0`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemanderClass {
    pub weight: WeightSpec,
    #[serde(default, with = "serde_scalar_opt", skip_serializing_if = "Option::is_none")]
    pub eta0: Option<Scalar>,
    #[serde(with = "serde_scalar")]
    pub eta1: Scalar,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindTag {
    Trading,
    Credit,
}

/// Behaviour bundle of a market kind.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MarketKind {
    Trading,
    Credit { projects: Vec<ProjectDistribution> },
}

impl MarketKind {
    /// Constant `a` in the per-unit supply cost `a + rho`.
    pub fn cost_offset(&self) -> Scalar {
        match self {
            MarketKind::Trading => zero(),
            MarketKind::Credit { .. } => one(),
        }
    }

    pub fn supply_actions(&self) -> [&'static str; 2] {
        match self {
            MarketKind::Trading => ["produce", "not produce"],
            MarketKind::Credit { .. } => ["deposit", "not deposit"],
        }
    }

    pub fn demand_actions(&self) -> [&'static str; 2] {
        match self {
            MarketKind::Trading => ["consume", "not consume"],
            MarketKind::Credit { .. } => ["invest", "not invest"],
        }
    }

    pub fn tag(&self) -> KindTag {
        match self {
            MarketKind::Trading => KindTag::Trading,
            MarketKind::Credit { .. } => KindTag::Credit,
        }
    }

    fn project(&self, idx: Option<usize>) -> Result<&ProjectDistribution> {
        match self {
            MarketKind::Credit { projects } => {
                let i = idx.ok_or_else(|| Error::spec("demanders[].project", "credit demander needs a project"))?;
                projects.get(i).ok_or_else(|| Error::spec("demanders[].project", format!("no project with index {i}")))
            }
            MarketKind::Trading => Err(Error::Internal("trading kind has no projects".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PopulationSpec {
    pub kind: MarketKind,
    pub suppliers: Vec<SupplierClass>,
    pub demanders: Vec<DemanderClass>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    kind: KindTag,
    #[serde(default)]
    suppliers: Vec<SupplierClass>,
    #[serde(default)]
    demanders: Vec<DemanderClass>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    projects: Vec<ProjectDistribution>,
}

impl PopulationSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: SpecFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if inner.is_syntax() || inner.is_eof() || path == "." {
                Error::Parse(inner.to_string())
            } else {
                Error::spec(path, inner.to_string())
            }
        })?;
        let kind = match file.kind {
            KindTag::Trading => MarketKind::Trading,
            KindTag::Credit => MarketKind::Credit { projects: file.projects },
        };
        let spec = PopulationSpec { kind, suppliers: file.suppliers, demanders: file.demanders };
        spec.check()?;
        for (side, total) in [("suppliers", spec.supplier_mass()), ("demanders", spec.demander_mass())] {
            if total != zero() && total != one() {
                return Err(Error::spec(side, format!("total mass is {}, expected 1", format_scalar(&total))));
            }
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        let file = SpecFile {
            kind: self.kind.tag(),
            suppliers: self.suppliers.clone(),
            demanders: self.demanders.clone(),
            projects: match &self.kind {
                MarketKind::Credit { projects } => projects.clone(),
                MarketKind::Trading => Vec::new(),
            },
        };
        serde_json::to_string_pretty(&file).expect("spec serializes")
    }

    /// Structural validation with field paths in the diagnostics.
    pub fn check(&self) -> Result<()> {
        if let MarketKind::Credit { projects } = &self.kind {
            for (i, p) in projects.iter().enumerate() {
                p.check(&format!("projects[{i}]"))?;
            }
        }
        for (i, s) in self.suppliers.iter().enumerate() {
            let path = format!("suppliers[{i}]");
            s.weight.check(&format!("{path}.weight"))?;
            if s.h1 <= zero() {
                return Err(Error::spec(format!("{path}.h1"), "h1 must be positive"));
            }
            if s.v < zero() {
                return Err(Error::spec(format!("{path}.v"), "capacity must be non-negative"));
            }
            if matches!(s.weight, WeightSpec::Atom { .. }) && s.h0.is_none() {
                return Err(Error::spec(format!("{path}.h0"), "atom supplier needs h0"));
            }
        }
        for (i, d) in self.demanders.iter().enumerate() {
            let path = format!("demanders[{i}]");
            d.weight.check(&format!("{path}.weight"))?;
            if d.eta1 <= zero() {
                return Err(Error::spec(format!("{path}.eta1"), "eta1 must be positive"));
            }
            match &self.kind {
                MarketKind::Trading => {
                    if matches!(d.weight, WeightSpec::Atom { .. }) && d.eta0.is_none() {
                        return Err(Error::spec(format!("{path}.eta0"), "atom demander needs eta0"));
                    }
                }
                MarketKind::Credit { .. } => {
                    if !matches!(d.weight, WeightSpec::Atom { .. }) {
                        return Err(Error::spec(format!("{path}.weight"), "credit demanders must be atoms"));
                    }
                    let e =
                        d.eta0.as_ref().ok_or_else(|| Error::spec(format!("{path}.eta0"), "missing equity share"))?;
                    if e <= &zero() || e >= &one() {
                        return Err(Error::spec(format!("{path}.eta0"), "equity share must lie in (0, 1)"));
                    }
                    self.kind
                        .project(d.project)
                        .map_err(|_| Error::spec(format!("{path}.project"), "unknown project"))?;
                }
            }
        }
        for (side, total) in [("suppliers", self.supplier_mass()), ("demanders", self.demander_mass())] {
            if total > one() {
                return Err(Error::spec(side, format!("total mass is {}, exceeding 1", format_scalar(&total))));
            }
        }
        Ok(())
    }

    pub fn supplier_mass(&self) -> Scalar {
        self.suppliers.iter().map(|s| s.weight.total_mass()).sum()
    }

    /// Total demander mass; below 1 only for truncated built-in populations.
    pub fn demander_mass(&self) -> Scalar {
        self.demanders.iter().map(|d| d.weight.total_mass()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    #[serde(with = "serde_scalar")]
    pub cutoff: Scalar,
    #[serde(with = "serde_scalar")]
    pub volume: Scalar,
}

/// Cutoff `rho_low = h0` and volume `v_bar = v` of a supplier with cost `h0`.
pub fn derive_supplier_strategy(class: &SupplierClass, h0: Option<&Scalar>, _kind: &MarketKind) -> Result<Strategy> {
    let cost = h0
        .or(class.h0.as_ref())
        .ok_or_else(|| Error::condition(1, "supplier cost parameter is not pinned for this class"))?;
    if class.h1 <= zero() {
        return Err(Error::condition(2, "supplier h1 must be positive"));
    }
    Ok(Strategy { cutoff: cost.clone(), volume: class.v.clone() })
}

/// Cutoff `r_bar` and volume `v_low` of a demander; `eta0` overrides the class value for segments.
pub fn derive_demander_strategy(class: &DemanderClass, eta0: Option<&Scalar>, kind: &MarketKind) -> Result<Strategy> {
    let e = eta0
        .or(class.eta0.as_ref())
        .ok_or_else(|| Error::condition(4, "demander intensive parameter is not pinned for this class"))?;
    match kind {
        MarketKind::Trading => Ok(Strategy { cutoff: e.clone(), volume: class.eta1.clone() }),
        MarketKind::Credit { .. } => {
            let project = kind.project(class.project)?;
            let k = project.indifference_repayment(e).ok_or_else(|| {
                Error::condition(
                    4,
                    format!(
                        "no finite cutoff: expected project payoff does not exceed the equity share {}",
                        format_scalar(e)
                    ),
                )
            })?;
            let debt = one() - e;
            Ok(Strategy { cutoff: &k / &debt - one(), volume: debt * &class.eta1 })
        }
    }
}

/// Mediator-side value `w_bar(rho)` per unit of `h1`.
pub fn supplier_unit_payoff(class: &SupplierClass, kind: &MarketKind, rho: &Scalar) -> Result<Scalar> {
    let st = derive_supplier_strategy(class, None, kind)?;
    if rho < &st.cutoff {
        return Err(Error::Domain(format!(
            "supply price {} is below the cutoff {}",
            format_scalar(rho),
            format_scalar(&st.cutoff)
        )));
    }
    Ok(-(kind.cost_offset() + rho) * (&st.volume / &class.h1))
}

/// Mediator-side revenue `omega_bar(r)` per unit of `eta1`.
pub fn demander_unit_revenue(class: &DemanderClass, kind: &MarketKind, r: &Scalar) -> Result<Scalar> {
    let st = derive_demander_strategy(class, None, kind)?;
    if r > &st.cutoff {
        return Err(Error::Domain(format!(
            "demand price {} is above the cutoff {}",
            format_scalar(r),
            format_scalar(&st.cutoff)
        )));
    }
    Ok(unit_revenue_unchecked(class, kind, r))
}

pub(crate) fn unit_revenue_unchecked(class: &DemanderClass, kind: &MarketKind, r: &Scalar) -> Scalar {
    match kind {
        MarketKind::Trading => r.clone(),
        MarketKind::Credit { .. } => {
            let e = class.eta0.as_ref().expect("checked credit class");
            let project = kind.project(class.project).expect("checked credit class");
            project.expected_min(&((one() + r) * (one() - e)))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub condition: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WellBehavedReport {
    pub verdicts: Vec<ConditionVerdict>,
}

impl WellBehavedReport {
    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn get(&self, condition: u8) -> Option<&ConditionVerdict> {
        self.verdicts.iter().find(|v| v.condition == condition)
    }

    pub fn failures(&self) -> Vec<&ConditionVerdict> {
        self.verdicts.iter().filter(|v| !v.passed).collect()
    }
}

/// Per-condition verdicts for conditions 1 to 11 and 13 to 15.
pub fn validate_well_behaved(spec: &PopulationSpec) -> WellBehavedReport {
    use crate::curves::Curves;
    let mut out = Vec::new();
    let mut push = |condition: u8, name: &str, res: std::result::Result<(), String>| {
        out.push(ConditionVerdict {
            condition,
            name: name.to_string(),
            passed: res.is_ok(),
            detail: res.err().unwrap_or_else(|| "ok".to_string()),
        })
    };
    let structural = spec.check().map_err(|e| e.to_string());
    let supplier_ok = spec
        .suppliers
        .iter()
        .try_for_each(|s| derive_supplier_strategy(s, s.h0.as_ref().or(Some(&zero())), &spec.kind).map(|_| ()))
        .map_err(|e| e.to_string());
    let demander_ok = spec
        .demanders
        .iter()
        .try_for_each(|d| {
            let probe = segment_probe(&d.weight);
            derive_demander_strategy(d, d.eta0.as_ref().or(probe.as_ref()), &spec.kind).map(|_| ())
        })
        .map_err(|e| e.to_string());
    push(1, "Supplier Individual Cutoff", supplier_ok.clone());
    push(2, "Supplier Stationary Optimal Volume", supplier_ok);
    push(3, "Finite Supply", structural.clone());
    push(4, "Demander Individual Cutoff", demander_ok.clone());
    push(5, "Demander Stationary Optimal Volume", demander_ok.clone());
    push(6, "Finite Demand", structural.clone());
    push(7, "Supplier Off-Market Irrelevance", Ok(()));
    push(8, "Demander Off-Market Irrelevance", Ok(()));
    let curves = match (structural, demander_ok) {
        (Ok(()), Ok(())) => Curves::build(spec).map_err(|e| e.to_string()),
        (Err(e), _) | (_, Err(e)) => Err(format!("curves unavailable: {e}")),
    };
    match &curves {
        Ok(c) => {
            push(9, "Finite Supply Cost", Ok(()));
            push(10, "No Free Supply", c.check_no_free_supply());
            push(11, "Supply Monotone Trend", c.check_supply_trend());
            push(13, "Finite Demand Revenue", c.check_finite_revenue());
            push(14, "Demand Monotone Trend", c.check_demand_trend());
            push(15, "Demand Left-Continuity", c.check_left_continuity());
        }
        Err(e) => {
            for (k, name) in [
                (9, "Finite Supply Cost"),
                (10, "No Free Supply"),
                (11, "Supply Monotone Trend"),
                (13, "Finite Demand Revenue"),
                (14, "Demand Monotone Trend"),
                (15, "Demand Left-Continuity"),
            ] {
                push(k, name, Err(e.clone()));
            }
        }
    }
    WellBehavedReport { verdicts: out }
}

fn segment_probe(w: &WeightSpec) -> Option<Scalar> {
    match w {
        WeightSpec::Uniform { lo, hi, .. } => Some((lo + hi) / int(2)),
        WeightSpec::Atom { .. } => None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteAgent {
    pub class: usize,
    #[serde(with = "serde_scalar")]
    pub cutoff: Scalar,
    #[serde(with = "serde_scalar")]
    pub volume: Scalar,
}

/// A finite market drawn from a population; volumes are scaled by `1/n` per side.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteMarketInstance {
    pub suppliers: Vec<FiniteAgent>,
    pub demanders: Vec<FiniteAgent>,
    pub n_mediators: usize,
    pub seed: u64,
}

/// Exact rational uniform draw on `(0, 1)` with 32 bits of resolution.
pub fn uniform_unit<R: Rng>(rng: &mut R) -> Scalar {
    let k: u32 = rng.gen();
    (Scalar::from_integer(k.into()) + Scalar::new(1.into(), 2.into())) * pow2(-32)
}

fn draw_class(weights: &[&WeightSpec], u: &Scalar) -> usize {
    let mut acc = zero();
    for (i, w) in weights.iter().enumerate() {
        acc += w.total_mass();
        if u < &acc {
            return i;
        }
    }
    weights.len() - 1
}

fn draw_in_segment<R: Rng>(w: &WeightSpec, rng: &mut R) -> Option<Scalar> {
    match w {
        WeightSpec::Uniform { lo, hi, .. } => Some(lo + (hi - lo) * uniform_unit(rng)),
        WeightSpec::Atom { .. } => None,
    }
}

pub fn sample_finite_market(
    spec: &PopulationSpec,
    n_suppliers: usize,
    n_mediators: usize,
    n_demanders: usize,
    seed: u64,
) -> Result<FiniteMarketInstance> {
    if n_suppliers == 0 || n_mediators == 0 || n_demanders == 0 {
        return Err(Error::Config("agent counts must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sw: Vec<&WeightSpec> = spec.suppliers.iter().map(|s| &s.weight).collect();
    let dw: Vec<&WeightSpec> = spec.demanders.iter().map(|d| &d.weight).collect();
    let ns = Scalar::from_integer(n_suppliers.into());
    let nd = Scalar::from_integer(n_demanders.into());
    let mut suppliers = Vec::with_capacity(n_suppliers);
    if !sw.is_empty() {
        for _ in 0..n_suppliers {
            let c = draw_class(&sw, &uniform_unit(&mut rng));
            let class = &spec.suppliers[c];
            let h0 = draw_in_segment(&class.weight, &mut rng);
            let st = derive_supplier_strategy(class, h0.as_ref(), &spec.kind)?;
            suppliers.push(FiniteAgent { class: c, cutoff: st.cutoff, volume: st.volume / &ns });
        }
    }
    let mut demanders = Vec::with_capacity(n_demanders);
    if !dw.is_empty() {
        for _ in 0..n_demanders {
            let c = draw_class(&dw, &uniform_unit(&mut rng));
            let class = &spec.demanders[c];
            let eta0 = draw_in_segment(&class.weight, &mut rng);
            let st = derive_demander_strategy(class, eta0.as_ref(), &spec.kind)?;
            demanders.push(FiniteAgent { class: c, cutoff: st.cutoff, volume: st.volume / &nd });
        }
    }
    Ok(FiniteMarketInstance { suppliers, demanders, n_mediators, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::frac;

    fn trading_supplier(h0: i64, h1: i64, v: i64) -> SupplierClass {
        SupplierClass { weight: WeightSpec::atom(one()), h0: Some(int(h0)), h1: int(h1), v: int(v) }
    }

    #[test]
    fn trading_supplier_identity() {
        let st = derive_supplier_strategy(&trading_supplier(1, 2, 2), None, &MarketKind::Trading).unwrap();
        assert_eq!((st.cutoff, st.volume), (int(1), int(2)));
    }

    #[test]
    fn supplier_payoff_below_cutoff_is_domain_error() {
        let c = trading_supplier(1, 1, 1);
        assert!(matches!(supplier_unit_payoff(&c, &MarketKind::Trading, &frac(1, 2)), Err(Error::Domain(_))));
        assert_eq!(supplier_unit_payoff(&c, &MarketKind::Trading, &frac(6, 5)).unwrap(), frac(-6, 5));
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = crate::markets::trading_example(&frac(43, 100)).spec;
        let a = sample_finite_market(&spec, 50, 3, 50, 11).unwrap();
        let b = sample_finite_market(&spec, 50, 3, 50, 11).unwrap();
        let c = sample_finite_market(&spec, 50, 3, 50, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
