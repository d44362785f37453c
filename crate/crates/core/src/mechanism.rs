//! Finite execution of the normal market mechanism: supply price auction,
//! residual auction, order-book demand clearing and resale rounds.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::population::{sample_finite_market, FiniteMarketInstance, PopulationSpec};
use crate::scalar::{format_scalar, frac, one, serde_scalar, serde_scalar_opt, to_f64, zero, Scalar};
use crate::solver::EquilibriumCandidate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "side", content = "index", rename_all = "snake_case")]
pub enum Party {
    Supplier(usize),
    Demander(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contract {
    #[serde(with = "serde_scalar")]
    pub volume: Scalar,
    #[serde(with = "serde_scalar")]
    pub price: Scalar,
    pub party: Party,
    pub mediator: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketTransaction {
    pub supply: Vec<Contract>,
    pub demand: Vec<Contract>,
}

impl MarketTransaction {
    pub fn traded_volume(&self) -> Scalar {
        self.demand.iter().map(|c| c.volume.clone()).sum()
    }

    pub fn supplied_volume(&self) -> Scalar {
        self.supply.iter().map(|c| c.volume.clone()).sum()
    }

    fn inflow(&self, m: usize) -> Scalar {
        self.supply.iter().filter(|c| c.mediator == m).map(|c| c.volume.clone()).sum()
    }

    fn outflow(&self, m: usize) -> Scalar {
        self.demand.iter().filter(|c| c.mediator == m).map(|c| c.volume.clone()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MechanismConfig {
    /// Threshold on the fraction of mediators winning the residual auction.
    #[serde(with = "serde_scalar")]
    pub mu_bar: Scalar,
    pub max_resale_rounds: usize,
    pub seed: u64,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        MechanismConfig { mu_bar: frac(1, 2), max_resale_rounds: 64, seed: 0 }
    }
}

impl MechanismConfig {
    pub fn check(&self) -> Result<()> {
        if self.mu_bar < zero() || self.mu_bar > one() {
            return Err(Error::Config("mu_bar must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Residual-volume bid as a function of the disclosed weakly winning volumes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ResidualRule {
    All,
    Nothing,
    /// Smallest achievable combination reaching `q` times the weak volume.
    Fraction {
        #[serde(with = "serde_scalar")]
        q: Scalar,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ResaleRule {
    Abstain,
    /// Bid the whole disclosed resale volume at `price`.
    Offer {
        #[serde(with = "serde_scalar")]
        price: Scalar,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediatorStrategy {
    /// Counter-supply-price bid; `None` bids minus infinity.
    #[serde(with = "serde_scalar_opt")]
    pub supply_bid: Option<Scalar>,
    pub residual: ResidualRule,
    #[serde(with = "serde_scalar")]
    pub demand_price: Scalar,
    pub resale: ResaleRule,
}

impl MediatorStrategy {
    pub fn simple(supply_bid: Option<Scalar>, demand_price: Scalar) -> Self {
        MediatorStrategy { supply_bid, residual: ResidualRule::All, demand_price, resale: ResaleRule::Abstain }
    }

    fn residual_bid(&self, weak: &[Scalar]) -> Scalar {
        match &self.residual {
            ResidualRule::All => weak.iter().cloned().sum(),
            ResidualRule::Nothing => zero(),
            ResidualRule::Fraction { q } => {
                let total: Scalar = weak.iter().cloned().sum();
                achievable_at_least(weak, &(q * total))
            }
        }
    }

    fn resale_bid(&self, available: &Scalar) -> (Scalar, Scalar) {
        match &self.resale {
            ResaleRule::Abstain => (zero(), zero()),
            ResaleRule::Offer { price } => (available.clone(), price.clone()),
        }
    }
}

/// Smallest subset sum of `volumes` that is at least `target`, found greedily
/// (exact when all volumes are equal).
fn achievable_at_least(volumes: &[Scalar], target: &Scalar) -> Scalar {
    if target <= &zero() {
        return zero();
    }
    let mut sorted = volumes.to_vec();
    sorted.sort_by(|a, b| b.cmp(a));
    let mut acc = zero();
    for v in sorted {
        if &acc >= target {
            break;
        }
        acc += v;
    }
    acc
}

/// Largest subset sum of `volumes` not exceeding `cap`. Exact for equal
/// volumes or at most 16 items, greedy otherwise.
fn largest_at_most(volumes: &[Scalar], cap: &Scalar) -> Scalar {
    if volumes.is_empty() || cap <= &zero() {
        return zero();
    }
    if volumes.iter().all(|v| v == &volumes[0]) {
        let w = &volumes[0];
        if w <= &zero() {
            return zero();
        }
        let k = (cap / w).floor();
        let n = Scalar::from_integer(volumes.len().into());
        return if k < n { k * w } else { n * w };
    }
    if volumes.len() <= 16 {
        let mut best = zero();
        for mask in 0u32..(1 << volumes.len()) {
            let s: Scalar = (0..volumes.len()).filter(|i| mask & (1 << i) != 0).map(|i| volumes[i].clone()).sum();
            if &s <= cap && s > best {
                best = s;
            }
        }
        return best;
    }
    let mut sorted = volumes.to_vec();
    sorted.sort_by(|a, b| b.cmp(a));
    let mut acc = zero();
    for v in sorted {
        if &(&acc + &v) <= cap {
            acc += v;
        }
    }
    acc
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: f64,
    pub stage: String,
    pub payload: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketRun {
    pub transaction: MarketTransaction,
    pub trace: Vec<TraceEvent>,
    #[serde(with = "serde_scalar_opt")]
    pub supply_price: Option<Scalar>,
    pub resale_rounds: usize,
    pub truncated: bool,
}

impl MarketRun {
    pub fn trace_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.trace {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }
}

struct Recorder {
    events: Vec<TraceEvent>,
}

impl Recorder {
    fn push(&mut self, t: f64, stage: &str, payload: Value) {
        self.events.push(TraceEvent { t, stage: stage.into(), payload });
    }
}

fn s(x: &Scalar) -> Value {
    Value::String(format_scalar(x))
}

/// An open order `(volume, price, mediator)`.
#[derive(Clone, Debug)]
struct Order {
    volume: Scalar,
    price: Scalar,
    mediator: usize,
}

struct OrderBook<'a> {
    instance: &'a FiniteMarketInstance,
    /// Demanders without a contract, sorted by demand price.
    unmatched: Vec<usize>,
}

impl<'a> OrderBook<'a> {
    fn new(instance: &'a FiniteMarketInstance, matched: &[bool]) -> Self {
        let mut unmatched: Vec<usize> = (0..instance.demanders.len()).filter(|d| !matched[*d]).collect();
        unmatched.sort_by(|a, b| instance.demanders[*a].cutoff.cmp(&instance.demanders[*b].cutoff));
        OrderBook { instance, unmatched }
    }

    fn feasible(&self, d: usize, order: &Order) -> bool {
        let agent = &self.instance.demanders[d];
        agent.volume <= order.volume && agent.cutoff >= order.price
    }

    /// Uniform draw from unmatched demanders that fit the order, by rejection
    /// first and by enumeration when rejection keeps failing.
    fn draw<R: Rng>(&self, order: &Order, rng: &mut R) -> Option<usize> {
        let start = self.unmatched.partition_point(|d| self.instance.demanders[*d].cutoff < order.price);
        let pool = &self.unmatched[start..];
        if pool.is_empty() {
            return None;
        }
        for _ in 0..32 {
            let k = rng.gen_range(0..pool.len());
            if self.feasible(pool[k], order) {
                return Some(start + k);
            }
        }
        let fits: Vec<usize> = (0..pool.len()).filter(|k| self.feasible(pool[*k], order)).collect();
        fits.choose(rng).map(|k| start + k)
    }
}

/// Clears `orders` lowest price first. Existing contracts in `book` may be
/// taken over when `poach` is set and the order undercuts them.
#[allow(clippy::too_many_arguments)]
fn clear_orders<R: Rng>(
    instance: &FiniteMarketInstance,
    mut orders: Vec<Order>,
    book: &mut Vec<Contract>,
    poach: bool,
    rng: &mut R,
    rec: &mut Recorder,
    stage: &str,
    time: impl Fn(usize) -> f64,
) {
    let mut matched = vec![false; instance.demanders.len()];
    for c in book.iter() {
        if let Party::Demander(d) = c.party {
            matched[d] = true;
        }
    }
    let mut ob = OrderBook::new(instance, &matched);
    let mut i = 0usize;
    while !orders.is_empty() {
        i += 1;
        let low = orders.iter().map(|o| o.price.clone()).min().expect("nonempty book");
        let ties: Vec<usize> = (0..orders.len()).filter(|k| orders[*k].price == low).collect();
        let pick = *ties.choose(rng).expect("ties nonempty");
        let order = orders[pick].clone();
        let fresh = ob.draw(&order, rng);
        let poachable: Vec<usize> = if poach {
            (0..book.len()).filter(|k| book[*k].volume <= order.volume && book[*k].price > order.price).collect()
        } else {
            vec![]
        };
        let fresh_count = if fresh.is_some() { 1 } else { 0 };
        let total = fresh_count + poachable.len();
        if total == 0 {
            orders.swap_remove(pick);
            rec.push(time(i), stage, json!({"iteration": i, "mediator": order.mediator, "price": s(&order.price), "residue": s(&order.volume), "matched": Value::Null}));
            continue;
        }
        let choice = if poachable.is_empty() { 0 } else { rng.gen_range(0..total) };
        let (party, volume) = if choice < fresh_count {
            let slot = fresh.expect("fresh draw");
            let d = ob.unmatched.remove(slot);
            (d, instance.demanders[d].volume.clone())
        } else {
            let old = book.remove(poachable[choice - fresh_count]);
            match old.party {
                Party::Demander(d) => (d, old.volume),
                Party::Supplier(_) => unreachable!("demand book holds demanders only"),
            }
        };
        orders[pick].volume -= &volume;
        book.push(Contract {
            volume: volume.clone(),
            price: order.price.clone(),
            party: Party::Demander(party),
            mediator: order.mediator,
        });
        rec.push(
            time(i),
            stage,
            json!({"iteration": i, "mediator": order.mediator, "price": s(&order.price), "demander": party, "volume": s(&volume)}),
        );
    }
}

fn resale_capacity(tx: &MarketTransaction, n_mediators: usize) -> Scalar {
    (0..n_mediators)
        .map(|m| {
            let vols: Vec<Scalar> = tx.supply.iter().filter(|c| c.mediator == m).map(|c| c.volume.clone()).collect();
            let slack = tx.inflow(m) - tx.outflow(m);
            largest_at_most(&vols, &slack)
        })
        .sum()
}

/// Runs the mechanism with suppliers and demanders bidding their dominant
/// strategies `(volume, cutoff)`.
pub fn run_market(
    instance: &FiniteMarketInstance,
    strategies: &[MediatorStrategy],
    config: &MechanismConfig,
) -> Result<MarketRun> {
    config.check()?;
    let n_m = instance.n_mediators;
    if strategies.len() != n_m {
        return Err(Error::Config(format!("expected {n_m} mediator strategies, got {}", strategies.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rec = Recorder { events: Vec::new() };
    rec.push(0.0, "supply_introduction", json!({"suppliers": instance.suppliers.len()}));
    rec.push(1.0, "demand_introduction", json!({"demanders": instance.demanders.len()}));
    let bids: Vec<Value> =
        strategies.iter().map(|st| st.supply_bid.as_ref().map(s).unwrap_or(Value::String("-inf".into()))).collect();
    rec.push(2.0, "supply_price_bidding", json!({"bids": bids}));

    let rho_bar = strategies.iter().filter_map(|st| st.supply_bid.clone()).max();
    let Some(rho_bar) = rho_bar else {
        rec.push(3.0, "supply_price_auction", json!({"rho_bar": "-inf"}));
        rec.push(9.0, "finalized", json!({"supply": 0, "demand": 0}));
        return Ok(MarketRun {
            transaction: MarketTransaction::default(),
            trace: rec.events,
            supply_price: None,
            resale_rounds: 0,
            truncated: false,
        });
    };
    let price_winners: Vec<usize> = (0..n_m).filter(|m| strategies[*m].supply_bid.as_ref() == Some(&rho_bar)).collect();
    let strict: Vec<usize> =
        (0..instance.suppliers.len()).filter(|i| instance.suppliers[*i].cutoff < rho_bar).collect();
    let weak: Vec<usize> = (0..instance.suppliers.len()).filter(|i| instance.suppliers[*i].cutoff == rho_bar).collect();
    let strict_volume: Scalar = strict.iter().map(|i| instance.suppliers[*i].volume.clone()).sum();
    let weak_volumes: Vec<Scalar> = weak.iter().map(|i| instance.suppliers[*i].volume.clone()).collect();
    rec.push(
        3.0,
        "supply_price_auction",
        json!({"rho_bar": s(&rho_bar), "winners": price_winners, "strict_suppliers": strict.len(), "weak_suppliers": weak.len(), "strict_volume": s(&strict_volume)}),
    );

    let residual_bids: Vec<Scalar> = price_winners.iter().map(|m| strategies[*m].residual_bid(&weak_volumes)).collect();
    rec.push(4.0, "supply_residual_bidding", json!({"bids": residual_bids.iter().map(s).collect::<Vec<_>>()}));
    let v_bar = residual_bids.iter().max().cloned().unwrap_or_else(zero);
    let residual_winners: Vec<usize> =
        price_winners.iter().zip(&residual_bids).filter(|(_, b)| **b == v_bar).map(|(m, _)| *m).collect();
    let mut order = weak.clone();
    order.shuffle(&mut rng);
    let mut admitted = Vec::new();
    let mut acc = zero();
    for i in order {
        if acc >= v_bar {
            break;
        }
        acc += &instance.suppliers[i].volume;
        admitted.push(i);
    }
    let mut tx = MarketTransaction::default();
    for &i in &strict {
        let m = *price_winners.choose(&mut rng).expect("price winners nonempty");
        tx.supply.push(Contract {
            volume: instance.suppliers[i].volume.clone(),
            price: rho_bar.clone(),
            party: Party::Supplier(i),
            mediator: m,
        });
    }
    for &i in &admitted {
        let m = *residual_winners.choose(&mut rng).expect("residual winners nonempty");
        tx.supply.push(Contract {
            volume: instance.suppliers[i].volume.clone(),
            price: rho_bar.clone(),
            party: Party::Supplier(i),
            mediator: m,
        });
    }
    let quota: Vec<Scalar> = (0..n_m).map(|m| tx.inflow(m)).collect();
    rec.push(
        5.0,
        "supply_residual_auction",
        json!({"v_bar": s(&v_bar), "winners": residual_winners, "admitted_weak": admitted.len(), "quota": quota.iter().map(s).collect::<Vec<_>>()}),
    );

    let quotes: Vec<Scalar> = strategies.iter().map(|st| st.demand_price.clone()).collect();
    rec.push(6.0, "demand_bulk_bidding", json!({"bids": quotes.iter().map(s).collect::<Vec<_>>()}));
    let orders: Vec<Order> =
        (0..n_m).map(|m| Order { volume: quota[m].clone(), price: quotes[m].clone(), mediator: m }).collect();
    rec.push(7.0, "demand_bulk_auction", json!({"orders": n_m}));
    let mut book = Vec::new();
    clear_orders(instance, orders, &mut book, false, &mut rng, &mut rec, "order_book", |i| {
        7.6 - 0.5f64.powi(i.min(1000) as i32)
    });
    tx.demand = book;
    let mut resale_volume = resale_capacity(&tx, n_m);
    rec.push(7.6, "demand_transaction", json!({"traded": s(&tx.traded_volume()), "resale_volume": s(&resale_volume)}));

    let share = frac(residual_winners.len() as i64, n_m as i64);
    let mut rounds = 0usize;
    let mut truncated = false;
    if share > config.mu_bar || residual_winners.len() == n_m {
        rec.push(8.0, "capacity_check", json!({"share": s(&share), "resale": false}));
    } else {
        rec.push(8.0, "capacity_check", json!({"share": s(&share), "resale": true}));
        let outsiders: Vec<usize> = (0..n_m).filter(|m| !residual_winners.contains(m)).collect();
        loop {
            let j = rounds + 1;
            if rounds >= config.max_resale_rounds {
                truncated = true;
                break;
            }
            let jf = j as f64;
            let bids: Vec<(usize, Scalar, Scalar)> = outsiders
                .iter()
                .map(|m| {
                    let (v, r) = strategies[*m].resale_bid(&resale_volume);
                    (*m, v, r)
                })
                .collect();
            rec.push(
                9.0 - 2f64.powf(1.0 - jf),
                "resale_bidding",
                json!({"round": j, "bids": bids.iter().map(|(m, v, r)| json!({"mediator": m, "volume": s(v), "price": s(r)})).collect::<Vec<_>>()}),
            );
            let top = bids.iter().map(|b| b.1.clone()).max().unwrap_or_else(zero);
            if top <= zero() {
                rec.push(9.0 - 1.5 * 2f64.powf(-jf), "demand_resale_auction", json!({"round": j, "v_bar": "0"}));
                break;
            }
            rounds += 1;
            let best_price = bids.iter().filter(|b| b.1 == top).map(|b| b.2.clone()).min().expect("bids at top");
            let finalists: Vec<usize> = bids.iter().filter(|b| b.1 == top && b.2 == best_price).map(|b| b.0).collect();
            let winner = *finalists.choose(&mut rng).expect("finalists nonempty");
            rec.push(
                9.0 - 1.5 * 2f64.powf(-jf),
                "demand_resale_auction",
                json!({"round": j, "v_bar": s(&top), "winner": winner, "price": s(&best_price)}),
            );
            let mut moved = zero();
            let mut i = 0usize;
            while moved < top {
                i += 1;
                let inflow: Vec<Scalar> = (0..n_m).map(|m| tx.inflow(m)).collect();
                let outflow: Vec<Scalar> = (0..n_m).map(|m| tx.outflow(m)).collect();
                let candidates: Vec<usize> = (0..tx.supply.len())
                    .filter(|k| {
                        let c = &tx.supply[*k];
                        c.mediator != winner && outflow[c.mediator] <= &inflow[c.mediator] - &c.volume
                    })
                    .collect();
                let Some(&k) = candidates.choose(&mut rng) else { break };
                let from = tx.supply[k].mediator;
                tx.supply[k].mediator = winner;
                moved += &tx.supply[k].volume;
                rec.push(
                    9.0 - 0.3 * 2f64.powf(-jf) * (4.0 + 0.5f64.powi(i.min(1000) as i32)),
                    "recontract",
                    json!({"round": j, "iteration": i, "party": tx.supply[k].party, "from": from, "to": winner, "volume": s(&tx.supply[k].volume)}),
                );
            }
            let resale_order = vec![Order { volume: moved, price: best_price.clone(), mediator: winner }];
            let mut book = std::mem::take(&mut tx.demand);
            clear_orders(instance, resale_order, &mut book, true, &mut rng, &mut rec, "resale_order_book", |i| {
                9.0 - 0.3 * 2f64.powf(-jf) * (4.0 + 0.5f64.powi((i + 1).min(1000) as i32))
            });
            tx.demand = book;
            resale_volume = resale_capacity(&tx, n_m);
            rec.push(
                9.0 - 1.1 * 2f64.powf(-jf),
                "resale_demand_transaction",
                json!({"round": j, "traded": s(&tx.traded_volume()), "resale_volume": s(&resale_volume)}),
            );
        }
    }
    rec.push(
        9.0,
        "finalized",
        json!({"supply": tx.supply.len(), "demand": tx.demand.len(), "traded": s(&tx.traded_volume()), "truncated": truncated}),
    );
    if !check_feasible(instance, &tx) {
        return Err(Error::Internal("mechanism produced an infeasible transaction".into()));
    }
    Ok(MarketRun { transaction: tx, trace: rec.events, supply_price: Some(rho_bar), resale_rounds: rounds, truncated })
}

/// At most one contract per supplier or demander within capacity, with every
/// mediator's inflow covering its outflow.
pub fn check_feasible(instance: &FiniteMarketInstance, tx: &MarketTransaction) -> bool {
    let mut seen = std::collections::BTreeSet::new();
    for c in tx.supply.iter().chain(&tx.demand) {
        if c.volume < zero() || !seen.insert(c.party) {
            return false;
        }
    }
    for c in &tx.supply {
        match c.party {
            Party::Supplier(i) => match instance.suppliers.get(i) {
                Some(agent) if c.volume <= agent.volume => {}
                _ => return false,
            },
            Party::Demander(_) => return false,
        }
    }
    if tx.demand.iter().any(|c| !matches!(c.party, Party::Demander(d) if d < instance.demanders.len())) {
        return false;
    }
    let mediators: std::collections::BTreeSet<usize> = tx.supply.iter().chain(&tx.demand).map(|c| c.mediator).collect();
    mediators.into_iter().all(|m| tx.inflow(m) >= tx.outflow(m))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub n: usize,
    pub mediators: usize,
    pub replications: usize,
    pub seed: u64,
    #[serde(with = "serde_scalar")]
    pub mu_bar: Scalar,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub seed: u64,
    #[serde(with = "serde_scalar")]
    pub traded_volume: Scalar,
    #[serde(with = "serde_scalar_opt")]
    pub supply_price: Option<Scalar>,
    /// Traded volume per realized demand price, as `[price, volume]` pairs.
    #[serde(with = "crate::scalar::serde_scalar_pairs")]
    pub demand_prices: Vec<(Scalar, Scalar)>,
    /// Traded volume over the volume of demanders willing to pay the lowest quote.
    #[serde(with = "serde_scalar_opt")]
    pub served_fraction: Option<Scalar>,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    #[serde(with = "serde_scalar")]
    pub expected_volume: Scalar,
    #[serde(with = "serde_scalar")]
    pub mean_traded_volume: Scalar,
    pub volume_std_error: f64,
    pub binomial_sigma: f64,
    pub within_three_sigma: bool,
    pub supply_price_constant: bool,
    pub mean_served_fraction: Option<f64>,
    pub replications: Vec<ReplicationOutcome>,
}

/// Demand price quoted by mediator `k` of `n`, spreading mediators over the
/// atoms of `demand` in proportion to their mass.
fn quote_for(k: usize, n: usize, atoms: &[(Scalar, Scalar)]) -> Scalar {
    let total: Scalar = atoms.iter().map(|a| a.1.clone()).sum();
    if atoms.is_empty() || total == zero() {
        return zero();
    }
    let point = frac(2 * k as i64 + 1, 2 * n as i64) * &total;
    let mut acc = zero();
    for (r, m) in atoms {
        acc += m;
        if point < acc {
            return r.clone();
        }
    }
    atoms.last().expect("nonempty").0.clone()
}

pub fn equilibrium_strategies(eq: &EquilibriumCandidate, mediators: usize) -> Vec<MediatorStrategy> {
    (0..mediators)
        .map(|k| MediatorStrategy {
            supply_bid: eq.supply.as_ref().map(|a| a.price.clone()),
            residual: ResidualRule::Fraction { q: eq.q.clone() },
            demand_price: quote_for(k, mediators, &eq.demand.atoms),
            resale: ResaleRule::Abstain,
        })
        .collect()
}

/// Seed of replication `k` under root seed `root`.
pub fn replication_seed(root: u64, k: usize) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(root);
    r.set_stream(k as u64);
    r.next_u64()
}

/// Samples one finite market with `seed` and runs it under the equilibrium strategies.
pub fn replay_run(
    spec: &PopulationSpec,
    eq: &EquilibriumCandidate,
    cfg: &ReplayConfig,
    seed: u64,
) -> Result<(FiniteMarketInstance, Vec<MediatorStrategy>, MarketRun)> {
    let instance = sample_finite_market(spec, cfg.n, cfg.mediators, cfg.n, seed)?;
    let strategies = equilibrium_strategies(eq, cfg.mediators);
    let config = MechanismConfig { mu_bar: cfg.mu_bar.clone(), max_resale_rounds: 64, seed };
    let run = run_market(&instance, &strategies, &config)?;
    Ok((instance, strategies, run))
}

fn replicate(
    spec: &PopulationSpec,
    eq: &EquilibriumCandidate,
    cfg: &ReplayConfig,
    seed: u64,
) -> Result<ReplicationOutcome> {
    let (instance, strategies, run) = replay_run(spec, eq, cfg, seed)?;
    let mut hist: BTreeMap<Scalar, Scalar> = BTreeMap::new();
    for c in &run.transaction.demand {
        *hist.entry(c.price.clone()).or_insert_with(zero) += &c.volume;
    }
    let lowest = strategies.iter().map(|st| st.demand_price.clone()).min();
    let willing: Scalar = match &lowest {
        Some(p) => instance.demanders.iter().filter(|d| &d.cutoff >= p).map(|d| d.volume.clone()).sum(),
        None => zero(),
    };
    let traded = run.transaction.traded_volume();
    let served_fraction = (willing > zero()).then(|| &traded / &willing);
    Ok(ReplicationOutcome {
        seed,
        traded_volume: traded,
        supply_price: run.supply_price,
        demand_prices: hist.into_iter().collect(),
        served_fraction,
        truncated: run.truncated,
    })
}

/// Replays an equilibrium candidate on sampled finite markets, each
/// replication seeded from its own stream of the root seed.
pub fn equilibrium_replay(
    spec: &PopulationSpec,
    eq: &EquilibriumCandidate,
    cfg: &ReplayConfig,
) -> Result<ReplayReport> {
    if cfg.replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..cfg.replications).map(|k| replication_seed(cfg.seed, k)).collect();
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(seeds.len());
    let chunk = seeds.len().div_ceil(workers);
    let results: Vec<Result<ReplicationOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|sd| replicate(spec, eq, cfg, *sd)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("replication thread")).collect()
    });
    let replications = results.into_iter().collect::<Result<Vec<_>>>()?;
    let count = Scalar::from_integer((replications.len() as i64).into());
    let mean: Scalar = replications.iter().map(|r| r.traded_volume.clone()).sum::<Scalar>() / &count;
    let mean_f = to_f64(&mean);
    let var = replications.iter().map(|r| (to_f64(&r.traded_volume) - mean_f).powi(2)).sum::<f64>()
        / (replications.len().max(2) - 1) as f64;
    let expected = eq.traded_volume();
    let eta = spec.demanders.iter().map(|d| d.eta1.clone()).max().unwrap_or_else(one);
    let mass = spec.demander_mass();
    let p = if eta > zero() && mass > zero() { to_f64(&(&expected / (&eta * &mass))).clamp(0.0, 1.0) } else { 0.0 };
    let sigma = to_f64(&eta) * (p * (1.0 - p) / cfg.n as f64).sqrt();
    let first_price = replications[0].supply_price.clone();
    let fractions: Vec<f64> = replications.iter().filter_map(|r| r.served_fraction.as_ref().map(to_f64)).collect();
    Ok(ReplayReport {
        within_three_sigma: (mean_f - to_f64(&expected)).abs() <= 3.0 * sigma,
        expected_volume: expected,
        mean_traded_volume: mean,
        volume_std_error: (var / replications.len() as f64).sqrt(),
        binomial_sigma: sigma,
        supply_price_constant: replications.iter().all(|r| r.supply_price == first_price),
        mean_served_fraction: (!fractions.is_empty()).then(|| fractions.iter().sum::<f64>() / fractions.len() as f64),
        replications,
    })
}
