//! The trading and credit market kinds and the built-in example fixtures.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::population::{DemanderClass, MarketKind, PopulationSpec, SupplierClass, WeightSpec};
use crate::scalar::{format_scalar, frac, int, one, parse_scalar, pow2, serde_scalar, zero, Scalar};

/// Discrete project payoff distribution per unit of budget.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProjectDistribution {
    pub atoms: Vec<(Scalar, Scalar)>,
}

#[derive(Serialize, Deserialize)]
struct ProjectFile {
    atoms: Vec<(serde_json::Value, serde_json::Value)>,
}

impl Serialize for ProjectDistribution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let atoms = self.atoms.iter().map(|(x, p)| (format_scalar(x).into(), format_scalar(p).into())).collect();
        ProjectFile { atoms }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProjectDistribution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = ProjectFile::deserialize(d)?;
        let conv = |v: &serde_json::Value| serde_scalar::value_to_scalar(v).map_err(serde::de::Error::custom);
        let atoms =
            f.atoms.iter().map(|(x, p)| Ok((conv(x)?, conv(p)?))).collect::<std::result::Result<Vec<_>, D::Error>>()?;
        Ok(ProjectDistribution { atoms })
    }
}

impl ProjectDistribution {
    pub fn new(atoms: Vec<(Scalar, Scalar)>) -> Self {
        ProjectDistribution { atoms }
    }

    /// Two-point project paying `big` with probability `p` and zero otherwise.
    pub fn binary(big: Scalar, p: Scalar) -> Self {
        ProjectDistribution::new(vec![(zero(), one() - &p), (big, p)])
    }

    pub fn check(&self, path: &str) -> Result<()> {
        if self.atoms.is_empty() {
            return Err(Error::spec(format!("{path}.atoms"), "project needs at least one atom"));
        }
        for (i, (x, p)) in self.atoms.iter().enumerate() {
            if x < &zero() {
                return Err(Error::spec(format!("{path}.atoms[{i}]"), "payoff must be non-negative"));
            }
            if p < &zero() {
                return Err(Error::spec(format!("{path}.atoms[{i}]"), "probability must be non-negative"));
            }
        }
        let total: Scalar = self.atoms.iter().map(|(_, p)| p.clone()).sum();
        if total != one() {
            return Err(Error::spec(
                format!("{path}.atoms"),
                format!("probabilities sum to {}", format_scalar(&total)),
            ));
        }
        if self.mean() <= one() {
            return Err(Error::spec(format!("{path}.atoms"), "project mean must exceed 1"));
        }
        Ok(())
    }

    pub fn mean(&self) -> Scalar {
        self.atoms.iter().map(|(x, p)| x * p).sum()
    }

    /// `E[max(0, X - k)]`.
    pub fn expected_excess(&self, k: &Scalar) -> Scalar {
        self.atoms.iter().filter(|(x, _)| x > k).map(|(x, p)| (x - k) * p).sum()
    }

    /// `E[min(X, k)]`.
    pub fn expected_min(&self, k: &Scalar) -> Scalar {
        self.atoms.iter().map(|(x, p)| if x < k { x * p } else { k * p }).sum()
    }

    pub fn payoffs(&self) -> Vec<Scalar> {
        let mut xs: Vec<Scalar> = self.atoms.iter().map(|(x, _)| x.clone()).collect();
        xs.sort();
        xs.dedup();
        xs
    }

    /// Repayment level `k >= 0` with `E[max(0, X - k)] = e`, solved exactly on
    /// the piecewise-linear excess curve. `None` when `E[X] <= e`.
    pub fn indifference_repayment(&self, e: &Scalar) -> Option<Scalar> {
        if &self.mean() <= e {
            return None;
        }
        let mut knots = vec![zero()];
        knots.extend(self.payoffs().into_iter().filter(|x| x > &zero()));
        for w in knots.windows(2) {
            let (lo, hi) = (&w[0], &w[1]);
            let (glo, ghi) = (self.expected_excess(lo), self.expected_excess(hi));
            if &glo >= e && e >= &ghi {
                if glo == ghi {
                    return Some(lo.clone());
                }
                return Some(lo + (&glo - e) * (hi - lo) / (glo - ghi));
            }
        }
        None
    }
}

pub fn trading_kind() -> MarketKind {
    MarketKind::Trading
}

pub fn credit_kind(projects: Vec<ProjectDistribution>) -> Result<MarketKind> {
    if projects.is_empty() {
        return Err(Error::spec("projects", "credit kind needs at least one project"));
    }
    for (i, p) in projects.iter().enumerate() {
        p.check(&format!("projects[{i}]"))?;
    }
    Ok(MarketKind::Credit { projects })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExpectedOutcome {
    pub summary: String,
    pub basis: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExampleFixture {
    pub name: String,
    pub spec: PopulationSpec,
    pub expected: ExpectedOutcome,
    /// Smallest volume represented exactly when the fixture truncates a countable family.
    pub truncation_frontier: Option<Scalar>,
}

fn outcome(summary: &str, basis: &str) -> ExpectedOutcome {
    ExpectedOutcome { summary: summary.into(), basis: basis.into() }
}

fn uniform_supply(hi: Scalar, density: Scalar, v: &Scalar) -> SupplierClass {
    SupplierClass { weight: WeightSpec::uniform(zero(), hi, density), h0: None, h1: v.clone(), v: v.clone() }
}

/// Trading example: consumers valuing 1 (mass 3/5) or 2 (mass 2/5) with unit
/// volume, producers with cost uniform on `(0, 5/4]` and capacity `v`.
pub fn trading_example(v: &Scalar) -> ExampleFixture {
    let demanders = vec![
        DemanderClass { weight: WeightSpec::atom(frac(3, 5)), eta0: Some(int(1)), eta1: int(1), project: None },
        DemanderClass { weight: WeightSpec::atom(frac(2, 5)), eta0: Some(int(2)), eta1: int(1), project: None },
    ];
    let spec =
        PopulationSpec { kind: trading_kind(), suppliers: vec![uniform_supply(frac(5, 4), frac(4, 5), v)], demanders };
    let expected = if v == &frac(4, 5) {
        outcome("no equilibrium", "stated")
    } else if v == &frac(43, 100) {
        outcome("unique equilibrium without rationing", "stated")
    } else if v == &frac(6, 25) {
        outcome("unique equilibrium with rationing", "stated")
    } else {
        outcome("at most one equilibrium (trading markets)", "stated")
    };
    ExampleFixture { name: format!("trading?v={}", format_scalar(v)), spec, expected, truncation_frontier: None }
}

/// Credit example with two entrepreneur types and depositors whose cost is
/// uniform on `(0, 6]` with capacity `v`.
pub fn credit_basic(v: &Scalar) -> ExampleFixture {
    let projects =
        vec![ProjectDistribution::binary(int(10), frac(2, 5)), ProjectDistribution::binary(int(20), frac(1, 5))];
    let demanders = vec![
        DemanderClass {
            weight: WeightSpec::atom(frac(19, 20)),
            eta0: Some(frac(1, 2)),
            eta1: int(2),
            project: Some(0),
        },
        DemanderClass { weight: WeightSpec::atom(frac(1, 20)), eta0: Some(frac(1, 2)), eta1: int(2), project: Some(1) },
    ];
    let spec = PopulationSpec {
        kind: MarketKind::Credit { projects },
        suppliers: vec![uniform_supply(int(6), frac(1, 6), v)],
        demanders,
    };
    ExampleFixture {
        name: format!("credit_basic?v={}", format_scalar(v)),
        spec,
        expected: outcome("an equilibrium exists", "stated"),
        truncation_frontier: None,
    }
}

/// Credit example with countably many entrepreneur types, truncated after
/// `k` types. With `tail` the remaining mass `2^-k` is collapsed into one
/// synthetic type whose revenue per unit matches the omitted types' average
/// and whose cutoff continues the geometric sequence.
pub fn credit_infinite(v: &Scalar, k: u32, tail: bool) -> ExampleFixture {
    let mut projects = Vec::new();
    let mut demanders = Vec::new();
    for i in 1..=k as i64 {
        projects.push(ProjectDistribution::binary(int(3) * pow2(i), pow2(-i)));
        demanders.push(DemanderClass {
            weight: WeightSpec::atom(pow2(-i)),
            eta0: Some(frac(1, 2)),
            eta1: int(2),
            project: Some(projects.len() - 1),
        });
    }
    if tail {
        let kk = k as i64;
        let p = pow2(-kk) / int(3);
        let e = frac(1, 2);
        let target = int(10) * pow2(kk);
        let big = &target * (one() - &e) + &e / &p;
        projects.push(ProjectDistribution::binary(big, p));
        demanders.push(DemanderClass {
            weight: WeightSpec::atom(pow2(-kk)),
            eta0: Some(e),
            eta1: int(2),
            project: Some(projects.len() - 1),
        });
    }
    let spec = PopulationSpec {
        kind: MarketKind::Credit { projects },
        suppliers: vec![uniform_supply(frac(2, 3), frac(3, 2), v)],
        demanders,
    };
    let expected = if v >= &one() {
        outcome("unique equilibrium; claimed single demand atom at price 4 with mass 1", "stated")
    } else {
        outcome("uncountably many equilibria sharing an infinite demand-price support", "stated")
    };
    ExampleFixture {
        name: format!("credit_infinite?v={}&K={k}&tail={tail}", format_scalar(v)),
        spec,
        expected,
        truncation_frontier: Some(pow2(-(k as i64))),
    }
}

/// Resolves `trading?v=0.43`, `credit_basic?v=2` or `credit_infinite?v=1&K=20&tail=true`.
pub fn fixture(name: &str) -> Result<ExampleFixture> {
    let (base, query) = name.split_once('?').unwrap_or((name, ""));
    let mut v: Option<Scalar> = None;
    let mut k: u32 = 20;
    let mut tail = true;
    for pair in query.split('&').filter(|p| !p.is_empty()) {
        let (key, value) =
            pair.split_once('=').ok_or_else(|| Error::Parse(format!("fixture parameter {pair:?} lacks '='")))?;
        match key {
            "v" => v = Some(parse_scalar(value)?),
            "K" | "k" => {
                k = value.parse().map_err(|_| Error::Parse(format!("bad truncation index {value:?}")))?;
                if k == 0 {
                    return Err(Error::Parse("truncation index must be positive".into()));
                }
            }
            "tail" => {
                tail = value.parse().map_err(|_| Error::Parse(format!("bad tail flag {value:?}")))?;
            }
            other => return Err(Error::Parse(format!("unknown fixture parameter {other:?}"))),
        }
    }
    let need_v = |d: Scalar| v.clone().unwrap_or(d);
    match base {
        "trading" => Ok(trading_example(&need_v(frac(43, 100)))),
        "credit_basic" => Ok(credit_basic(&need_v(int(1)))),
        "credit_infinite" => Ok(credit_infinite(&need_v(int(1)), k, tail)),
        other => Err(Error::NotFound(format!("unknown fixture {other:?}"))),
    }
}

/// Names and expectations of the built-in fixtures at their headline parameters.
pub fn fixture_catalog() -> Vec<ExampleFixture> {
    vec![
        trading_example(&frac(4, 5)),
        trading_example(&frac(43, 100)),
        trading_example(&frac(6, 25)),
        credit_basic(&int(1)),
        credit_infinite(&int(1), 20, true),
        credit_infinite(&frac(1, 2), 20, true),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indifference_matches_hand_values() {
        let x1 = ProjectDistribution::binary(int(10), frac(2, 5));
        assert_eq!(x1.indifference_repayment(&frac(1, 2)), Some(frac(35, 4)));
        let x0 = ProjectDistribution::new(vec![(zero(), one())]);
        assert_eq!(x0.indifference_repayment(&frac(1, 2)), None);
    }

    #[test]
    fn fixture_names_round_trip() {
        let f = fixture("trading?v=0.43").unwrap();
        assert_eq!(f.name, "trading?v=43/100");
        assert!(fixture("nope").is_err());
        assert!(fixture("trading?v=abc").is_err());
        let g = fixture("credit_infinite?v=1&K=3&tail=false").unwrap();
        assert_eq!(g.spec.demanders.len(), 3);
    }
}
