#![allow(dead_code)]

use super::{demand_bounds, price_lattice, q, supply_bounds};
use normal_market::curves::{check_maximal_monotone, Curves};
use normal_market::graphs::{DiscreteMeasure, Graphs};
use normal_market::mechanism::{
    check_feasible, run_market, MechanismConfig, MediatorStrategy, Party, ResaleRule, ResidualRule,
};
use normal_market::population::{validate_well_behaved, FiniteAgent, FiniteMarketInstance, PopulationSpec};
use normal_market::scalar::{frac, int, one, zero, Scalar};
use normal_market::solver::{
    find_equilibria_in, verify_equilibrium_in, EquilibriumCandidate, EquilibriumKind, EquilibriumSet, SupplyAtom,
};
use proptest::prelude::*;

pub type Outcome = Result<(), TestCaseError>;

pub fn well_behaved(spec: &PopulationSpec) -> bool {
    validate_well_behaved(spec).all_passed()
}

pub fn max_demand(spec: &PopulationSpec, r: &Scalar) -> Scalar {
    demand_bounds(spec, r).1
}

/// `sup { r : max D(r) >= y }` over the demand cutoffs of an atomic trading population.
pub fn border_oracle(spec: &PopulationSpec, y: &Scalar) -> Option<Scalar> {
    spec.demanders.iter().filter_map(|d| d.eta0.clone()).filter(|c| &max_demand(spec, c) >= y).max()
}

pub fn volume_grid(spec: &PopulationSpec, prices: &[Scalar]) -> Vec<Scalar> {
    let mut out: Vec<Scalar> = (0..=40).map(|k| frac(k, 16)).collect();
    for p in prices {
        let (lo, hi) = supply_bounds(spec, p);
        out.extend([lo, hi, max_demand(spec, p), demand_bounds(spec, p).0]);
    }
    out.sort();
    out.dedup();
    out
}

pub fn in_closure(set: &EquilibriumSet, cand: &EquilibriumCandidate) -> bool {
    match set.kind {
        EquilibriumKind::Empty => false,
        EquilibriumKind::UniquePositiveProfit => set.candidates.iter().any(|c| c.candidate.supply == cand.supply),
        EquilibriumKind::ZeroProfitFamily => {
            let family = set.family.as_ref().expect("family descriptor");
            let v = cand.traded_volume();
            let lo = family.volumes.inf().map(|x| x.0);
            let hi = family.volumes.sup().map(|x| x.0);
            matches!((lo, hi), (Some(lo), Some(hi)) if lo.le(&v) && hi.ge(&v))
        }
    }
}

/// Maximal monotonicity of both correspondences and agreement with direct class sums.
pub fn maximal_monotone(spec: &PopulationSpec) -> Outcome {
    let c = Curves::build(spec).unwrap();
    let vs = check_maximal_monotone(&c.supply);
    prop_assert!(vs.passed, "{:?}", vs.failures);
    let vd = check_maximal_monotone(&c.demand.negate());
    prop_assert!(vd.passed, "{:?}", vd.failures);
    for p in price_lattice(spec, 3) {
        prop_assert_eq!(c.supply.eval(&p), supply_bounds(spec, &p));
        prop_assert_eq!(c.demand.eval(&p), demand_bounds(spec, &p));
    }
    Ok(())
}

/// Every returned representative passes the verifier.
pub fn soundness(spec: &PopulationSpec) -> Outcome {
    prop_assume!(well_behaved(spec));
    let g = Graphs::from_spec(spec).unwrap();
    let set = find_equilibria_in(&g).unwrap();
    for c in &set.candidates {
        let v = verify_equilibrium_in(&g, &c.candidate);
        prop_assert!(v.passed, "{:?} rejected: {:?}", c.candidate, v.violated);
    }
    if set.kind == EquilibriumKind::UniquePositiveProfit {
        let mut supplies: Vec<DiscreteMeasure> = set.candidates.iter().map(|c| c.candidate.supply_measure()).collect();
        supplies.dedup();
        prop_assert_eq!(supplies.len(), 1);
    }
    prop_assert_eq!(set.kind == EquilibriumKind::Empty, set.candidates.is_empty());
    Ok(())
}

/// Lattice brute force over single-atom candidates finds nothing outside the returned family.
pub fn lattice_completeness(spec: &PopulationSpec) -> Outcome {
    prop_assume!(well_behaved(spec));
    let g = Graphs::from_spec(spec).unwrap();
    let set = find_equilibria_in(&g).unwrap();
    let lattice = price_lattice(spec, 4);
    for rho in &lattice {
        for qq in [zero(), q(1, 2), one()] {
            let volume = g.curves.blended_volume(&qq, rho);
            if volume <= zero() {
                continue;
            }
            for r in &lattice {
                let cand = EquilibriumCandidate {
                    supply: Some(SupplyAtom { price: rho.clone(), mass: volume.clone() }),
                    q: qq.clone(),
                    demand: DiscreteMeasure::atom(r.clone(), volume.clone()),
                };
                if verify_equilibrium_in(&g, &cand).passed {
                    prop_assert!(in_closure(&set, &cand), "{:?} passes but lies outside {:?}", cand, set.kind);
                }
            }
        }
    }
    Ok(())
}

/// Symbolic set membership against closed-form oracles on a dense grid.
pub fn grid_membership(spec: &PopulationSpec) -> Outcome {
    prop_assume!(well_behaved(spec));
    let g = Graphs::from_spec(spec).unwrap();
    let (ad, as_) = (g.augmented_demand(), g.augmented_supply());
    let (dg, sg) = (g.demand_graph(), g.supply_graph());
    let (v0, v1, v2, v3) = (g.vertical_border(), g.farthest_border(), g.sharp_border(), g.admissible_border());
    let mut prices: Vec<Scalar> = (0..=24).map(|k| frac(k, 8)).collect();
    prices.extend(price_lattice(spec, 2).into_iter().filter(|p| p >= &zero()));
    prices.sort();
    prices.dedup();
    let volumes = volume_grid(spec, &prices);
    let d_max = max_demand(spec, &int(-1));
    let mut checked = 0usize;
    for p in &prices {
        let (s_lo, s_hi) = supply_bounds(spec, p);
        let dm = max_demand(spec, p);
        for y in &volumes {
            let at = format!("({p}, {y})");
            let pos = y > &zero();
            prop_assert_eq!(ad.contains(p, y), pos && y <= &dm, "A_D {}", at);
            prop_assert_eq!(dg.contains(p, y), pos && y == &dm, "D {}", at);
            prop_assert_eq!(sg.contains(p, y), pos && &s_lo <= y && y <= &s_hi, "S {}", at);
            prop_assert_eq!(as_.contains(p, y), pos && y <= &s_hi, "A_S {}", at);
            let r = if pos && y <= &d_max { border_oracle(spec, y) } else { None };
            let on_v0 = r.as_ref() == Some(p);
            prop_assert_eq!(v0.contains(p, y), on_v0, "V0 {}", at);
            prop_assert!(!v1.contains(p, y) || v0.contains(p, y), "V1 not in V0 at {}", at);
            prop_assert!(!(v1.contains(p, y) && v2.contains(p, y)), "V1 meets V2 at {}", at);
            prop_assert_eq!(v3.contains(p, y), g.in_admissible_border(p, y));
            checked += 1;
        }
    }
    prop_assert!(checked >= 1000);
    prop_assert!(v3.contains(&zero(), &zero()));
    Ok(())
}

pub fn agents(max: usize) -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((1i64..=12, 1i64..=8), 1..=max)
}

pub fn mediator_strategy() -> impl Strategy<Value = MediatorStrategy> {
    (prop::option::weighted(0.9, 1i64..=12), 0usize..3, 1i64..=12, prop::option::of(0i64..=6)).prop_map(
        |(bid, rule, price, resale)| MediatorStrategy {
            supply_bid: bid.map(|b| frac(b, 4)),
            residual: match rule {
                0 => ResidualRule::All,
                1 => ResidualRule::Nothing,
                _ => ResidualRule::Fraction { q: frac(1, 2) },
            },
            demand_price: frac(price, 4),
            resale: match resale {
                None => ResaleRule::Abstain,
                Some(up) => ResaleRule::Offer { price: frac(price + up, 4) },
            },
        },
    )
}

pub fn market_case() -> impl Strategy<Value = (FiniteMarketInstance, Vec<MediatorStrategy>, MechanismConfig)> {
    (agents(6), agents(6), prop::collection::vec(mediator_strategy(), 1..=4), 0i64..=4, any::<u64>()).prop_map(
        |(s, d, strategies, mu, seed)| {
            let to_agents = |xs: Vec<(i64, i64)>| {
                xs.into_iter()
                    .map(|(c, v)| FiniteAgent { class: 0, cutoff: frac(c, 4), volume: frac(v, 8) })
                    .collect::<Vec<_>>()
            };
            let instance = FiniteMarketInstance {
                suppliers: to_agents(s),
                demanders: to_agents(d),
                n_mediators: strategies.len(),
                seed,
            };
            let config = MechanismConfig { mu_bar: frac(mu, 4), max_resale_rounds: 16, seed };
            (instance, strategies, config)
        },
    )
}

/// Feasibility, conservation, price ordering and reproducibility of one run.
pub fn market_run(
    instance: &FiniteMarketInstance,
    strategies: &[MediatorStrategy],
    config: &MechanismConfig,
) -> Outcome {
    let a = run_market(instance, strategies, config).unwrap();
    let b = run_market(instance, strategies, config).unwrap();
    prop_assert_eq!(a.trace_ndjson(), b.trace_ndjson());
    prop_assert_eq!(&a.transaction, &b.transaction);
    prop_assert!(check_feasible(instance, &a.transaction));
    for m in 0..instance.n_mediators {
        let inflow: Scalar = a.transaction.supply.iter().filter(|c| c.mediator == m).map(|c| c.volume.clone()).sum();
        let outflow: Scalar = a.transaction.demand.iter().filter(|c| c.mediator == m).map(|c| c.volume.clone()).sum();
        prop_assert!(outflow <= inflow);
    }
    if let Some(price) = &a.supply_price {
        prop_assert!(a.transaction.supply.iter().all(|c| &c.price == price));
    }
    for c in &a.transaction.demand {
        let st = &strategies[c.mediator];
        let floor = match &st.resale {
            ResaleRule::Offer { price } if price < &st.demand_price => price.clone(),
            _ => st.demand_price.clone(),
        };
        prop_assert!(c.price >= floor);
        if let Party::Demander(i) = c.party {
            prop_assert!(instance.demanders[i].cutoff >= c.price);
        }
    }
    Ok(())
}
