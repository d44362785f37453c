//! Finite proxies for equilibrium notions of games with a continuum of agents:
//! symmetric oligopoly pricing and the known common value auction.

use num::Signed;
use serde::{Deserialize, Serialize};

use crate::curves::{MonotoneStepCorrespondence, StepBreak};
use crate::error::{Error, Result};
use crate::intervals::solve_set;
use crate::pwa::Affine;
use crate::scalar::{format_scalar, frac, int, one, serde_scalar, serde_scalar_vec, zero, Ext, Scalar};

/// Retailers of total mass one, each endowed with `quantity` units, setting
/// selling prices against an aggregate demand correspondence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetricPricingGame {
    #[serde(with = "serde_scalar")]
    pub quantity: Scalar,
    pub demand: MonotoneStepCorrespondence,
    #[serde(with = "serde_scalar_vec")]
    pub grid: Vec<Scalar>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileClassification {
    #[serde(with = "serde_scalar_vec")]
    pub nash: Vec<Scalar>,
    #[serde(with = "serde_scalar_vec")]
    pub collusion_free: Vec<Scalar>,
    #[serde(with = "serde_scalar_vec")]
    pub bfcf: Vec<Scalar>,
    #[serde(with = "serde_scalar_vec")]
    pub monopoly_prices: Vec<Scalar>,
}

/// A group of retailers quoting one price; `mass` may be zero for an entrant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriceGroup {
    pub price: Scalar,
    pub mass: Scalar,
}

impl PriceGroup {
    pub fn new(price: Scalar, mass: Scalar) -> Self {
        PriceGroup { price, mass }
    }
}

/// Number of refinements used for deviations just below and just above a price.
const REFINEMENT_DEPTH: u32 = 12;

/// Betrayals answer a deviation on a finer scale than the deviation itself.
const BETRAYAL_DEPTH: u32 = 2 * REFINEMENT_DEPTH + 4;

/// Block sizes of colluding groups and of betraying subgroups, in sixteenths.
const MASS_STEPS: i64 = 16;

impl SymmetricPricingGame {
    pub fn new(quantity: Scalar, demand: MonotoneStepCorrespondence, mut grid: Vec<Scalar>) -> Result<Self> {
        if quantity <= zero() {
            return Err(Error::Config("endowed quantity must be positive".into()));
        }
        grid.sort();
        grid.dedup();
        if grid.is_empty() {
            return Err(Error::Config("price grid is empty".into()));
        }
        Ok(SymmetricPricingGame { quantity, demand, grid })
    }

    /// Revenue of a single seller holding the whole endowment at price `p`.
    pub fn monopoly_revenue(&self, p: &Scalar) -> Scalar {
        let d = self.demand.max_at(p);
        let sold = if d < self.quantity { d } else { self.quantity.clone() };
        if sold < zero() {
            return zero();
        }
        p * sold
    }

    /// Maximizers of the monopoly revenue over nonnegative prices.
    pub fn monopoly_prices(&self) -> Vec<Scalar> {
        let mut points = vec![zero()];
        points.extend(self.demand.prices());
        points.extend(self.demand.critical_points(&self.quantity));
        for c in &self.demand.cells {
            if c.slope < zero() {
                points.push(-&c.intercept / (int(2) * &c.slope));
            }
        }
        points.retain(|p| p >= &zero());
        points.sort();
        points.dedup();
        let best = points.iter().map(|p| self.monopoly_revenue(p)).max().unwrap_or_else(zero);
        let sup_beyond = self.demand.cells.last().map(|c| c.slope == zero() && c.intercept > zero()).unwrap_or(false);
        if sup_beyond {
            return vec![];
        }
        points.into_iter().filter(|p| self.monopoly_revenue(p) == best).collect()
    }

    /// Per-member payoff of every group when demand is served lowest price first
    /// and groups sharing a price are rationed pro rata.
    pub fn group_payoffs(&self, groups: &[PriceGroup]) -> Vec<Scalar> {
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.sort_by(|a, b| groups[*a].price.cmp(&groups[*b].price));
        let mut payoffs = vec![zero(); groups.len()];
        let mut sold = zero();
        let mut i = 0;
        while i < order.len() {
            let price = groups[order[i]].price.clone();
            let mut j = i;
            let mut supply = zero();
            while j < order.len() && groups[order[j]].price == price {
                supply += &groups[order[j]].mass * &self.quantity;
                j += 1;
            }
            let mut available = self.demand.max_at(&price) - &sold;
            if available < zero() {
                available = zero();
            }
            let ratio = if supply == zero() {
                if available > zero() {
                    one()
                } else {
                    zero()
                }
            } else if available >= supply {
                one()
            } else {
                &available / &supply
            };
            for &g in &order[i..j] {
                payoffs[g] = &price * &self.quantity * &ratio;
            }
            sold += &supply * &ratio;
            i = j;
        }
        payoffs
    }

    pub fn symmetric_payoff(&self, p: &Scalar) -> Scalar {
        self.group_payoffs(&[PriceGroup::new(p.clone(), one())])[0].clone()
    }

    /// Grid prices plus points approaching `p` from either side.
    fn deviation_prices(&self, p: &Scalar, depth: u32) -> Vec<Scalar> {
        let mut gap = self.grid.windows(2).map(|w| &w[1] - &w[0]).min().unwrap_or_else(one);
        let mut out = self.grid.clone();
        for _ in 0..depth {
            gap /= int(2);
            let q = p - &gap;
            if q >= zero() {
                out.push(q);
            }
            out.push(p + &gap);
        }
        out.sort();
        out.dedup();
        out
    }

    fn entrant_profits(&self, p: &Scalar, base: &Scalar) -> bool {
        self.deviation_prices(p, REFINEMENT_DEPTH).iter().filter(|x| *x != p).any(|x| {
            let pay = self.group_payoffs(&[PriceGroup::new(p.clone(), one()), PriceGroup::new(x.clone(), zero())]);
            &pay[1] > base
        })
    }

    /// Profitable symmetric block deviations `(mass, price, block payoff)`, lazily.
    fn profitable_collusions<'a>(
        &'a self,
        p: &'a Scalar,
        base: &'a Scalar,
    ) -> impl Iterator<Item = (Scalar, Scalar, Scalar)> + 'a {
        let prices = self.deviation_prices(p, REFINEMENT_DEPTH);
        (1..=MASS_STEPS).flat_map(move |k| {
            let lambda = frac(k, MASS_STEPS);
            prices.clone().into_iter().filter(move |x| x != p).filter_map(move |x| {
                let pay = self.group_payoffs(&[
                    PriceGroup::new(p.clone(), one() - &lambda),
                    PriceGroup::new(x.clone(), lambda.clone()),
                ]);
                (&pay[1] > base).then(|| (lambda.clone(), x, pay[1].clone()))
            })
        })
    }

    /// A subgroup of the block can strictly gain by a further single-price move
    /// while the loyal remainder ends weakly worse than at the original profile.
    fn betrayed(&self, p: &Scalar, base: &Scalar, lambda: &Scalar, x: &Scalar, block: &Scalar) -> bool {
        let mut prices = self.deviation_prices(x, BETRAYAL_DEPTH);
        prices.sort_by_key(|y| (y - x).abs());
        for j in (1..MASS_STEPS).rev() {
            let traitors = lambda * frac(j, MASS_STEPS);
            let loyal = lambda - &traitors;
            for y in prices.iter().filter(|y| *y != x) {
                let pay = self.group_payoffs(&[
                    PriceGroup::new(p.clone(), one() - lambda),
                    PriceGroup::new(x.clone(), loyal.clone()),
                    PriceGroup::new(y.clone(), traitors.clone()),
                ]);
                if &pay[2] > block && &pay[1] <= base {
                    return true;
                }
            }
        }
        false
    }

    pub fn classify_symmetric_profiles(&self) -> Result<ProfileClassification> {
        let monopoly_prices = self.monopoly_prices();
        if !monopoly_prices.iter().any(|m| self.grid.contains(m)) {
            return Err(Error::Config(format!(
                "price grid misses every monopoly price ({})",
                monopoly_prices.iter().map(format_scalar).collect::<Vec<_>>().join(", ")
            )));
        }
        if let Some(b) = self.demand.prices().into_iter().find(|b| b >= &zero() && !self.grid.contains(b)) {
            return Err(Error::Config(format!("price grid misses demand breakpoint {}", format_scalar(&b))));
        }
        let mut out = ProfileClassification { monopoly_prices, ..Default::default() };
        for p in &self.grid {
            if self.demand.max_at(p) <= zero() {
                continue;
            }
            let base = self.symmetric_payoff(p);
            if self.entrant_profits(p, &base) {
                continue;
            }
            out.nash.push(p.clone());
            let mut collusions = self.profitable_collusions(p, &base).peekable();
            if collusions.peek().is_none() {
                out.collusion_free.push(p.clone());
                out.bfcf.push(p.clone());
            } else if collusions.all(|(l, x, u)| self.betrayed(p, &base, &l, &x, &u)) {
                out.bfcf.push(p.clone());
            }
        }
        Ok(out)
    }
}

/// Vertical demand of `quantity` up to price 2, none above; endowment equals demand.
pub fn oligopoly_example_a() -> SymmetricPricingGame {
    let q = one();
    let demand = MonotoneStepCorrespondence {
        increasing: false,
        breaks: vec![StepBreak { price: int(2), lower: zero(), upper: q.clone() }],
        cells: vec![Affine::constant(q.clone()), Affine::constant(zero())],
    };
    let grid = (0..=24).map(|k| frac(k, 8)).collect();
    SymmetricPricingGame::new(q, demand, grid).expect("valid fixture")
}

/// Linear demand `2 - p` with aggregate endowment 3/2, clearing below the monopoly price.
pub fn oligopoly_example_b() -> SymmetricPricingGame {
    let demand = MonotoneStepCorrespondence {
        increasing: false,
        breaks: vec![StepBreak { price: int(2), lower: zero(), upper: zero() }],
        cells: vec![Affine::new(int(2), int(-1)), Affine::constant(zero())],
    };
    let grid = (0..=32).map(|k| frac(k, 16)).collect();
    SymmetricPricingGame::new(frac(3, 2), demand, grid).expect("valid fixture")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Piecewise affine value with a declared one-sided continuity at each breakpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueFunction {
    #[serde(with = "serde_scalar_vec")]
    pub breaks: Vec<Scalar>,
    /// `pieces[i]` lies left of `breaks[i]`; the last piece is the right ray.
    pub pieces: Vec<Affine>,
    pub continuity: Vec<Side>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoEquilibrium {
    #[serde(with = "serde_scalar")]
    pub limit_price: Scalar,
    pub attained_as_nash: bool,
}

impl ValueFunction {
    pub fn new(breaks: Vec<Scalar>, pieces: Vec<Affine>, continuity: Vec<Side>) -> Result<Self> {
        if pieces.len() != breaks.len() + 1 || continuity.len() != breaks.len() {
            return Err(Error::Domain("value function needs one more piece than breakpoints".into()));
        }
        if breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("value function breakpoints must increase".into()));
        }
        Ok(ValueFunction { breaks, pieces, continuity })
    }

    /// Value `low` up to `at`, `high` beyond, with the jump attached to `side`.
    pub fn step(at: Scalar, low: Scalar, high: Scalar, side: Side) -> Self {
        ValueFunction {
            breaks: vec![at],
            pieces: vec![Affine::constant(low), Affine::constant(high)],
            continuity: vec![side],
        }
    }

    pub fn eval(&self, x: &Scalar) -> Scalar {
        match self.breaks.binary_search(x) {
            Ok(i) => match self.continuity[i] {
                Side::Left => self.pieces[i].at(x),
                Side::Right => self.pieces[i + 1].at(x),
            },
            Err(i) => self.pieces[i].at(x),
        }
    }

    fn critical_points(&self) -> Vec<Scalar> {
        let mut out = self.breaks.clone();
        for (i, piece) in self.pieces.iter().enumerate() {
            if let Some(x) = piece.solve(&zero()) {
                let lo_ok = i == 0 || x > self.breaks[i - 1];
                let hi_ok = i == self.breaks.len() || x < self.breaks[i];
                if lo_ok && hi_ok {
                    out.push(x);
                }
            }
        }
        out
    }

    pub fn check_premises(&self) -> Result<()> {
        let left = &self.pieces[0];
        if !(left.slope > zero() || (left.slope == zero() && left.intercept < zero())) {
            return Err(Error::Domain("value is not negative far to the left".into()));
        }
        let positive = solve_set(&self.critical_points(), |x| self.eval(x) > zero());
        if positive.is_empty() {
            return Err(Error::Domain("value is never positive".into()));
        }
        Ok(())
    }
}

pub fn common_value_pseudo_equilibrium(v: &ValueFunction) -> Result<PseudoEquilibrium> {
    v.check_premises()?;
    let nonneg = solve_set(&v.critical_points(), |x| v.eval(x) >= zero());
    match nonneg.inf() {
        Some((Ext::Fin(y), _)) => {
            let attained = v.eval(&y) >= zero();
            Ok(PseudoEquilibrium { limit_price: y, attained_as_nash: attained })
        }
        _ => Err(Error::Domain("nonnegative region has no finite infimum".into())),
    }
}
