mod common;

use common::{demand_bounds, q, supply_bounds};
use normal_market::curves::{check_maximal_monotone, conditional_supply_cost, real_demand, real_supply, Curves};
use normal_market::graphs::{DiscreteMeasure, Graphs};
use normal_market::markets::{credit_basic, credit_infinite, trading_example};
use normal_market::mechanism::{equilibrium_replay, ReplayConfig};
use normal_market::population::{
    derive_demander_strategy, derive_supplier_strategy, sample_finite_market, DemanderClass, MarketKind,
    PopulationSpec, SupplierClass, WeightSpec,
};
use normal_market::scalar::{int, one, pow2, to_f64, zero, Scalar};
use normal_market::solver::{
    find_equilibria, monopoly_optimistic_resale_value_in, profitable_set_membership, verify_equilibrium_in,
    EquilibriumCandidate, SupplyAtom, CLAUSE_CONDITIONAL_MAXIMIZERS, CLAUSE_NOT_HIGHER,
};
use normal_market::Error;

fn trading(v: (i64, i64)) -> PopulationSpec {
    trading_example(&q(v.0, v.1)).spec
}

fn midpoint_quadrature<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

#[test]
fn single_atom_supply_steps() {
    let spec = PopulationSpec {
        kind: MarketKind::Trading,
        suppliers: vec![SupplierClass { weight: WeightSpec::atom(one()), h0: Some(one()), h1: int(2), v: int(2) }],
        demanders: vec![],
    };
    let s = real_supply(&spec).unwrap();
    assert_eq!(s.eval(&one()), (zero(), int(2)));
    assert_eq!(s.eval(&int(2)), (int(2), int(2)));
    assert_eq!(s.eval(&q(1, 2)), (zero(), zero()));
    assert!(check_maximal_monotone(&s).passed);
}

#[test]
fn trading_supply_matches_quadrature() {
    let spec = trading((43, 100));
    let s = real_supply(&spec).unwrap();
    let oracle = midpoint_quadrature(|_| 0.8 * 0.43, 0.0, 1.0, 10_000);
    let (lo, hi) = s.eval(&one());
    assert_eq!(lo, hi);
    assert!((to_f64(&hi) - oracle).abs() < 1e-12);
    assert_eq!(hi, q(344, 1000));
    assert_eq!(s.limit_pos_inf(), Some(q(43, 100)));
}

#[test]
fn empty_supplier_list_gives_zero_supply() {
    let mut spec = trading((43, 100));
    spec.suppliers.clear();
    let s = real_supply(&spec).unwrap();
    for x in [int(-1), zero(), int(3)] {
        assert_eq!(s.eval(&x), (zero(), zero()));
    }
}

#[test]
fn trading_demand_steps() {
    let spec = trading((43, 100));
    let d = real_demand(&spec).unwrap();
    for (r, expect) in [(one(), (q(2, 5), one())), (int(2), (zero(), q(2, 5))), (int(3), (zero(), zero()))] {
        assert_eq!(d.eval(&r), expect);
        assert_eq!(d.eval(&r), demand_bounds(&spec, &r));
    }
    assert_eq!(d.eval(&int(-5)), (one(), one()));
    assert!(check_maximal_monotone(&d.negate()).passed);
}

#[test]
fn trading_costs_and_revenue_are_prices() {
    let spec = trading((43, 100));
    let c = Curves::build(&spec).unwrap();
    for k in 1..10 {
        let rho = q(k, 8);
        if supply_bounds(&spec, &rho).1 > zero() {
            let pt = c.supply_cost_at(&rho);
            assert_eq!(pt.upper_cost, rho);
            assert_eq!(pt.lower_cost, rho);
            for qq in [zero(), q(1, 3), one()] {
                assert_eq!(conditional_supply_cost(&spec, &qq, &rho).unwrap(), rho);
            }
        }
    }
    let below = c.supply_cost_at(&q(-1, 2));
    assert_eq!((below.upper_cost, below.lower_cost), (zero(), zero()));
    for r in [q(1, 3), one(), q(3, 2), int(2)] {
        assert_eq!(c.revenue_at(&r), r);
    }
    assert_eq!(c.revenue_at(&int(3)), zero());
}

#[test]
fn trading_identities_on_atoms() {
    let kind = MarketKind::Trading;
    let s = SupplierClass { weight: WeightSpec::atom(one()), h0: Some(q(3, 4)), h1: q(1, 2), v: q(1, 2) };
    let st = derive_supplier_strategy(&s, None, &kind).unwrap();
    assert_eq!((st.cutoff.clone(), st.volume.clone()), (q(3, 4), q(1, 2)));
    assert_eq!(derive_supplier_strategy(&s, None, &kind).unwrap(), st);
    let d = DemanderClass { weight: WeightSpec::atom(one()), eta0: Some(q(5, 2)), eta1: q(3, 2), project: None };
    let dt = derive_demander_strategy(&d, None, &kind).unwrap();
    assert_eq!((dt.cutoff, dt.volume), (q(5, 2), q(3, 2)));
}

fn credit_residual(x: &[(f64, f64)], e: f64, r: f64) -> f64 {
    let owed = (1.0 + r) * (1.0 - e);
    x.iter().map(|(v, p)| p * (v - owed).max(0.0)).sum::<f64>() - e
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) > 0.0 && f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn credit_cutoffs_match_bisection() {
    let spec = credit_basic(&one()).spec;
    let projects = [vec![(0.0, 0.6), (10.0, 0.4)], vec![(0.0, 0.8), (20.0, 0.2)]];
    let mut cutoffs = Vec::new();
    for (class, x) in spec.demanders.iter().zip(projects.iter()) {
        let st = derive_demander_strategy(class, None, &spec.kind).unwrap();
        let oracle = bisect(|r| credit_residual(x, 0.5, r), -1.0, 100.0);
        assert!((to_f64(&st.cutoff) - oracle).abs() < 1e-9, "{} vs {oracle}", st.cutoff);
        assert_eq!(st.volume, one());
        cutoffs.push(st.cutoff);
    }
    assert_eq!(cutoffs, vec![q(33, 2), int(34)]);
    assert!(cutoffs[1] > cutoffs[0]);
}

#[test]
fn credit_revenue_at_safe_cutoff_matches_enumeration() {
    let spec = credit_basic(&one()).spec;
    let c = Curves::build(&spec).unwrap();
    let r = q(33, 2);
    let classes: [(f64, Vec<(f64, f64)>); 2] =
        [(0.95, vec![(0.0, 0.6), (10.0, 0.4)]), (0.05, vec![(0.0, 0.8), (20.0, 0.2)])];
    let debt = 0.5;
    let mut repaid = 0.0;
    let mut lent = 0.0;
    for (mass, x) in &classes {
        let volume = mass * 2.0 * debt;
        let per_unit: f64 = x.iter().map(|(v, p)| p * v.min((1.0 + 16.5) * debt)).sum::<f64>() / debt;
        repaid += volume * per_unit;
        lent += volume;
    }
    assert!((to_f64(&c.revenue_at(&r)) - repaid / lent).abs() < 1e-12);
}

#[test]
fn credit_infinite_demand_mass_is_geometric() {
    for k in [3u32, 8, 20] {
        let spec = credit_infinite(&one(), k, false).spec;
        let c = Curves::build(&spec).unwrap();
        let oracle: Scalar = (1..=k as i64).map(|i| pow2(-i)).sum();
        assert_eq!(c.d_max, oracle);
    }
}

#[test]
fn sampling_is_deterministic_and_matches_masses() {
    let spec = trading((43, 100));
    let a = sample_finite_market(&spec, 10_000, 10, 10_000, 7).unwrap();
    let b = sample_finite_market(&spec, 10_000, 10, 10_000, 7).unwrap();
    let c = sample_finite_market(&spec, 10_000, 10, 10_000, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let n = 10_000f64;
    let high = a.demanders.iter().filter(|d| d.cutoff == int(2)).count() as f64 / n;
    let sigma = (0.4f64 * 0.6 / n).sqrt();
    assert!((high - 0.4).abs() < 3.0 * sigma, "high-value share {high}");
    let cheap = a.suppliers.iter().filter(|s| s.cutoff <= q(1, 2)).count() as f64 / n;
    assert!((cheap - 0.4).abs() < 3.0 * sigma, "cheap supplier share {cheap}");
}

#[test]
fn one_agent_per_side_is_deterministic() {
    let spec = PopulationSpec {
        kind: MarketKind::Trading,
        suppliers: vec![SupplierClass { weight: WeightSpec::atom(one()), h0: Some(one()), h1: one(), v: one() }],
        demanders: vec![DemanderClass {
            weight: WeightSpec::atom(one()),
            eta0: Some(int(2)),
            eta1: one(),
            project: None,
        }],
    };
    let a = sample_finite_market(&spec, 1, 1, 1, 1).unwrap();
    let b = sample_finite_market(&spec, 1, 1, 1, 99).unwrap();
    assert_eq!(a.suppliers, b.suppliers);
    assert_eq!(a.demanders, b.demanders);
    assert_eq!((a.suppliers[0].cutoff.clone(), a.demanders[0].cutoff.clone()), (one(), int(2)));
}

fn in_box(p: &Scalar, d: &Scalar, p_hi: Scalar, d_hi: Scalar) -> bool {
    p >= &zero() && p <= &p_hi && d > &zero() && d <= &d_hi
}

/// Hand-derived sets of the trading example as predicates.
struct TradingSets;

impl TradingSets {
    fn a_d(p: &Scalar, d: &Scalar) -> bool {
        in_box(p, d, one(), one()) || in_box(p, d, int(2), q(2, 5))
    }
    fn v0(p: &Scalar, d: &Scalar) -> bool {
        (p == &one() && d > &q(2, 5) && d <= &one()) || (p == &int(2) && d > &zero() && d <= &q(2, 5))
    }
    fn v1(p: &Scalar, d: &Scalar) -> bool {
        p == &int(2) && d > &zero() && d <= &q(2, 5)
    }
    fn v2(p: &Scalar, d: &Scalar) -> bool {
        p == &one() && d > &q(2, 5) && d < &one()
    }
    fn v3(p: &Scalar, d: &Scalar) -> bool {
        (p == &one() && d == &one()) || Self::v1(p, d) || (p == &zero() && d == &zero())
    }
    fn demand(p: &Scalar, d: &Scalar) -> bool {
        (p > &zero() && p <= &one() && d == &one())
            || (p > &one() && p <= &int(2) && d == &q(2, 5))
            || (p <= &zero() && d == &one())
    }
}

fn dense_points() -> Vec<(Scalar, Scalar)> {
    let mut pts = Vec::new();
    for i in -2..=26 {
        for j in -1..=22 {
            pts.push((q(i, 10), q(j, 20)));
        }
    }
    for (p, d) in [(1, 1), (2, 1), (1, 2), (0, 0)] {
        pts.push((int(p), q(d * 2, 5)));
    }
    pts
}

#[test]
fn trading_demand_sets_agree_with_hand_derivation() {
    let g = Graphs::from_spec(&trading((43, 100))).unwrap();
    let ad = g.augmented_demand();
    let (v0, v1, v2, v3) = (g.vertical_border(), g.farthest_border(), g.sharp_border(), g.admissible_border());
    let dg = g.demand_graph();
    for (p, d) in dense_points() {
        let at = format!("({p}, {d})");
        assert_eq!(ad.contains(&p, &d), TradingSets::a_d(&p, &d), "A_D {at}");
        assert_eq!(v0.contains(&p, &d), TradingSets::v0(&p, &d), "V0 {at}");
        assert_eq!(v1.contains(&p, &d), TradingSets::v1(&p, &d), "V1 {at}");
        assert_eq!(v2.contains(&p, &d), TradingSets::v2(&p, &d), "V2 {at}");
        assert_eq!(v3.contains(&p, &d), TradingSets::v3(&p, &d), "V3 {at}");
        assert_eq!(g.in_admissible_border(&p, &d), TradingSets::v3(&p, &d), "V3 query {at}");
        if p >= zero() {
            assert_eq!(dg.contains(&p, &d), TradingSets::demand(&p, &d), "D {at}");
        }
    }
}

#[test]
fn trading_supply_graph_is_the_scaled_diagonal() {
    let g = Graphs::from_spec(&trading((43, 100))).unwrap();
    for i in 1..=30 {
        let rho = q(i, 24);
        let s = q(344, 1000) * &rho;
        let inside = rho <= q(5, 4);
        assert_eq!(g.in_supply_graph(&rho, &s), inside, "rho {rho}");
        if inside {
            assert_eq!(g.supply_price_finder(&rho, &s).unwrap(), rho);
            assert_eq!(g.supply_plot(&rho, &g.residual_ratio_finder(&rho, &s).unwrap()), (rho.clone(), s.clone()));
        }
    }
    let (p, s) = (q(50, 43), q(2, 5));
    assert_eq!(g.supply_price_finder(&p, &s).unwrap(), p);
    assert_eq!(g.residual_ratio_finder(&p, &s).unwrap(), one());
    assert_eq!(g.supply_measure(&p, &s).unwrap(), DiscreteMeasure::atom(p.clone(), s.clone()));
    assert!(g.supply_measure(&zero(), &zero()).unwrap().is_zero());
    let g24 = Graphs::from_spec(&trading((6, 25))).unwrap();
    assert_eq!(g24.supply_measure(&q(5, 4), &q(6, 25)).unwrap(), DiscreteMeasure::atom(q(5, 4), q(6, 25)));
}

#[test]
fn demand_price_finder_examples() {
    let g = Graphs::from_spec(&trading((43, 100))).unwrap();
    assert_eq!(g.demand_price_finder(&int(2), &q(2, 5)).unwrap(), int(2));
    assert_eq!(g.demand_price_finder(&q(1, 2), &one()).unwrap(), q(1, 2));
    assert!(matches!(g.demand_price_finder(&int(3), &one()), Err(Error::NotFound(_))));
}

#[test]
fn demand_measure_examples() {
    let g = Graphs::from_spec(&trading((43, 100))).unwrap();
    let origin = g.demand_measures(&zero(), &zero()).unwrap();
    assert_eq!(origin.representatives, vec![DiscreteMeasure::zero()]);
    let at = g.demand_measures(&int(2), &q(2, 5)).unwrap();
    assert_eq!(at.representatives[0], DiscreteMeasure::atom(int(2), q(2, 5)));
    assert_eq!(g.service_ratio(&at.representatives[0]), Some(one()));
    let g24 = Graphs::from_spec(&trading((6, 25))).unwrap();
    let m = g24.demand_measures(&int(2), &q(6, 25)).unwrap();
    assert!(m.in_farthest_border);
    let atom = DiscreteMeasure::atom(int(2), q(6, 25));
    assert!(m.representatives.contains(&atom));
    assert_eq!(g24.service_ratio(&atom), Some(q(3, 5)));
    assert!(g24.admissible_demand_measure(&int(2), &q(6, 25), &atom));
    assert!(matches!(g.demand_measures(&int(3), &q(1, 5)), Err(Error::Domain(_))));
}

#[test]
fn profitable_set_examples() {
    let spec = trading((43, 100));
    let g = Graphs::from_spec(&spec).unwrap();
    assert!(profitable_set_membership(&g, &one(), &one()));
    let (rho, qq) = (q(50, 43), one());
    let volume = q(2, 5);
    assert_eq!(supply_bounds(&spec, &rho), (volume.clone(), volume.clone()));
    let r = int(2);
    assert!(r > rho && demand_bounds(&spec, &r).1 >= volume);
    assert!(profitable_set_membership(&g, &rho, &qq));
    assert!(!profitable_set_membership(&g, &int(2), &qq));
    assert!(!profitable_set_membership(&g, &q(-1, 2), &one()));
}

fn solution_043() -> EquilibriumCandidate {
    EquilibriumCandidate {
        supply: Some(SupplyAtom { price: q(50, 43), mass: q(2, 5) }),
        q: one(),
        demand: DiscreteMeasure::atom(int(2), q(2, 5)),
    }
}

#[test]
fn verifier_examples() {
    let g = Graphs::from_spec(&trading((43, 100))).unwrap();
    assert!(verify_equilibrium_in(&g, &solution_043()).passed);
    let mut moved = solution_043();
    moved.demand = DiscreteMeasure::atom(one(), q(2, 5));
    let v = verify_equilibrium_in(&g, &moved);
    assert!(!v.passed);
    assert!(v.violated.iter().any(|c| c == CLAUSE_CONDITIONAL_MAXIMIZERS), "{v:?}");
    let lowered = EquilibriumCandidate {
        supply: Some(SupplyAtom { price: one(), mass: q(344, 1000) }),
        q: one(),
        demand: DiscreteMeasure::atom(int(2), q(344, 1000)),
    };
    let v = verify_equilibrium_in(&g, &lowered);
    assert!(!v.passed);
    assert!(v.violated.iter().any(|c| c == CLAUSE_NOT_HIGHER), "{v:?}");
}

#[test]
fn resale_value_is_positive_when_no_equilibrium_exists() {
    let g = Graphs::from_spec(&trading((4, 5))).unwrap();
    let v = monopoly_optimistic_resale_value_in(&g, &one(), &one(), &int(2)).unwrap();
    assert!(v.value > zero());
    assert_eq!(find_equilibria(&trading((4, 5))).unwrap().candidates.len(), 0);
}

#[test]
fn rationed_replay_serves_the_rationed_share() {
    let spec = trading((6, 25));
    let set = find_equilibria(&spec).unwrap();
    let eq = set.candidates[0].candidate.clone();
    let cfg = ReplayConfig { n: 2_000, mediators: 20, replications: 8, seed: 11, mu_bar: q(1, 2) };
    let report = equilibrium_replay(&spec, &eq, &cfg).unwrap();
    for rep in &report.replications {
        assert!(rep.demand_prices.iter().all(|(r, _)| r == &int(2)));
    }
    let served = report.mean_served_fraction.unwrap();
    assert!((served - 0.6).abs() < 0.05, "served {served}");
}

#[test]
fn replay_with_single_agents_is_feasible() {
    let spec = trading((43, 100));
    let set = find_equilibria(&spec).unwrap();
    let eq = set.candidates[0].candidate.clone();
    let cfg = ReplayConfig { n: 1, mediators: 1, replications: 3, seed: 5, mu_bar: q(1, 2) };
    let report = equilibrium_replay(&spec, &eq, &cfg).unwrap();
    assert_eq!(report.replications.len(), 3);
}
