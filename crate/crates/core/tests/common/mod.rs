#![allow(dead_code)]

use normal_market::population::{DemanderClass, MarketKind, PopulationSpec, SupplierClass, WeightSpec};
use normal_market::scalar::{frac, one, zero, Scalar};
use proptest::prelude::*;

pub fn q(n: i64, d: i64) -> Scalar {
    frac(n, d)
}

fn supplier() -> impl Strategy<Value = SupplierClass> {
    let atom = (1i64..=8, 1i64..=4, 1i64..=8).prop_map(|(c, m, v)| SupplierClass {
        weight: WeightSpec::atom(frac(m, 4)),
        h0: Some(frac(c, 4)),
        h1: frac(v, 8),
        v: frac(v, 8),
    });
    let segment = (0i64..=3, 1i64..=4, 1i64..=4, 1i64..=8).prop_map(|(lo, w, d, v)| SupplierClass {
        weight: WeightSpec::uniform(frac(lo, 4), frac(lo + w, 4), frac(d, 4)),
        h0: None,
        h1: frac(v, 8),
        v: frac(v, 8),
    });
    prop_oneof![atom, segment]
}

fn demander_atom() -> impl Strategy<Value = DemanderClass> {
    (1i64..=12, 1i64..=4, 1i64..=4).prop_map(|(e, m, vol)| DemanderClass {
        weight: WeightSpec::atom(frac(m, 4)),
        eta0: Some(frac(e, 4)),
        eta1: frac(vol, 4),
        project: None,
    })
}

fn demander_segment() -> impl Strategy<Value = DemanderClass> {
    (1i64..=8, 1i64..=4, 1i64..=4, 1i64..=4).prop_map(|(lo, w, d, vol)| DemanderClass {
        weight: WeightSpec::uniform(frac(lo, 4), frac(lo + w, 4), frac(d, 4)),
        eta0: None,
        eta1: frac(vol, 4),
        project: None,
    })
}

/// Trading populations with up to two supplier classes and up to three demander classes.
pub fn trading_spec() -> impl Strategy<Value = PopulationSpec> {
    (
        prop::collection::vec(supplier(), 1..=2),
        prop::collection::vec(prop_oneof![3 => demander_atom(), 1 => demander_segment()], 1..=3),
    )
        .prop_map(|(suppliers, demanders)| normalized(suppliers, demanders))
}

fn scale(w: &mut WeightSpec, by: &Scalar) {
    match w {
        WeightSpec::Atom { mass } => *mass = &*mass / by,
        WeightSpec::Uniform { density, .. } => *density = &*density / by,
    }
}

/// Rescales each side so its total mass is at most one.
fn normalized(mut suppliers: Vec<SupplierClass>, mut demanders: Vec<DemanderClass>) -> PopulationSpec {
    let total: Scalar = suppliers.iter().map(|s| s.weight.total_mass()).sum();
    if total > one() {
        suppliers.iter_mut().for_each(|s| scale(&mut s.weight, &total));
    }
    let total: Scalar = demanders.iter().map(|d| d.weight.total_mass()).sum();
    if total > one() {
        demanders.iter_mut().for_each(|d| scale(&mut d.weight, &total));
    }
    PopulationSpec { kind: MarketKind::Trading, suppliers, demanders }
}

/// Trading populations whose demanders are all atoms.
pub fn atomic_demand_spec() -> impl Strategy<Value = PopulationSpec> {
    (prop::collection::vec(supplier(), 1..=2), prop::collection::vec(demander_atom(), 1..=3))
        .prop_map(|(suppliers, demanders)| normalized(suppliers, demanders))
}

fn clamp(x: Scalar, lo: Scalar, hi: Scalar) -> Scalar {
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

/// Direct sums over classes: `(E[v 1{cutoff < rho}], E[v 1{cutoff <= rho}])`.
pub fn supply_bounds(spec: &PopulationSpec, rho: &Scalar) -> (Scalar, Scalar) {
    let (mut lo, mut hi) = (zero(), zero());
    for s in &spec.suppliers {
        match &s.weight {
            WeightSpec::Atom { mass } => {
                let c = s.h0.clone().unwrap();
                if &c < rho {
                    lo += mass * &s.v;
                }
                if &c <= rho {
                    hi += mass * &s.v;
                }
            }
            WeightSpec::Uniform { lo: a, hi: b, density, .. } => {
                let m = density * clamp(rho - a, zero(), b - a) * &s.v;
                lo += &m;
                hi += m;
            }
        }
    }
    (lo, hi)
}

/// Direct sums over classes: `(E[v 1{cutoff > r}], E[v 1{cutoff >= r}])`.
pub fn demand_bounds(spec: &PopulationSpec, r: &Scalar) -> (Scalar, Scalar) {
    let (mut lo, mut hi) = (zero(), zero());
    for d in &spec.demanders {
        match &d.weight {
            WeightSpec::Atom { mass } => {
                let c = d.eta0.clone().unwrap();
                if &c > r {
                    lo += mass * &d.eta1;
                }
                if &c >= r {
                    hi += mass * &d.eta1;
                }
            }
            WeightSpec::Uniform { lo: a, hi: b, density, .. } => {
                let m = density * clamp(b - r, zero(), b - a) * &d.eta1;
                lo += &m;
                hi += m;
            }
        }
    }
    (lo, hi)
}

/// Every cutoff and segment endpoint of the population.
pub fn breakpoints(spec: &PopulationSpec) -> Vec<Scalar> {
    let mut out = Vec::new();
    for s in &spec.suppliers {
        match &s.weight {
            WeightSpec::Atom { .. } => out.push(s.h0.clone().unwrap()),
            WeightSpec::Uniform { lo, hi, .. } => {
                out.push(lo.clone());
                out.push(hi.clone());
            }
        }
    }
    for d in &spec.demanders {
        match &d.weight {
            WeightSpec::Atom { .. } => out.push(d.eta0.clone().unwrap()),
            WeightSpec::Uniform { lo, hi, .. } => {
                out.push(lo.clone());
                out.push(hi.clone());
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Breakpoints, their midpoints and points just outside the range.
pub fn price_lattice(spec: &PopulationSpec, refine: i64) -> Vec<Scalar> {
    let b = breakpoints(spec);
    let mut out = b.clone();
    for w in b.windows(2) {
        for k in 1..refine {
            out.push(&w[0] + (&w[1] - &w[0]) * frac(k, refine));
        }
    }
    if let (Some(first), Some(last)) = (b.first(), b.last()) {
        out.push(first - frac(1, 2));
        out.push(last + frac(1, 2));
    }
    out.sort();
    out.dedup();
    out
}
pub mod suites;
