//! Agent-based transaction generation.
//!
//! Each timestep: raw-product supply is shocked or recovers, consumer orders
//! for final-tier products enter the order book, then every firm in
//! ascending id order
//!
//! 1. receives the orders it bought that were completed last step,
//! 2. completes its incoming orders oldest-first; the first order of a
//!    product it cannot cover blocks every later order of that product
//!    (strict FIFO per product; raw products only need `k <= supply`),
//! 3. orders each input it is short of (requirement of its open orders
//!    minus stock minus amounts on the way), from its default supplier with
//!    probability `p_default` and otherwise from a uniformly drawn supplier.
//!
//! Orders completed at `t` are the transactions of timestep `t`; the buyer
//! can use them from `t + 1`. An order is never completed in the step it was
//! placed.

mod scenario;

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

pub use scenario::{DemandType, Scenario, ScenarioKind};

use crate::dataset::{Buyer, Dataset, FirmId, ProductId, Transaction};
use crate::error::Result;
use crate::firmgen::{needed_inputs, FirmLayout};
use crate::prodgen::ProductionGraph;
use crate::rng::{derive_seed, rng_from_seed, SimRng};

/// `o(b, s, p, k)` placed at `placed_at`; `seq` orders same-step placements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Order {
    pub buyer: Buyer,
    pub supplier: FirmId,
    pub product: ProductId,
    pub amount: f64,
    pub placed_at: u32,
    pub seq: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    /// `inventories[f][p]`, never negative.
    pub inventories: Vec<Vec<f64>>,
    /// Incomplete orders addressed to each supplier, oldest first.
    pub incoming: Vec<VecDeque<Order>>,
    /// `pending[f][p]`: amount of `p` that `f` ordered and has not received yet.
    pub pending: Vec<Vec<f64>>,
    /// Orders completed during the previous step.
    pub completed_last: Vec<Order>,
    /// Current exogenous supply per product (meaningful for tier 0 only).
    pub supply: Vec<f64>,
    /// Drifting demand level per product (meaningful for the final tier only).
    pub demand_base: Vec<f64>,
    pub demand_types: Vec<Option<DemandType>>,
    pub t: u32,
    pub next_seq: u64,
    /// `(product, timestep)` of every supply shock so far.
    pub shock_log: Vec<(ProductId, u32)>,
}

impl SimState {
    /// Incomplete orders across all suppliers, sorted by `(placed_at, seq)`.
    pub fn order_book(&self) -> Vec<Order> {
        let mut all: Vec<Order> = self.incoming.iter().flatten().copied().collect();
        all.sort_by_key(|o| (o.placed_at, o.seq));
        all
    }

    fn push_order(&mut self, buyer: Buyer, supplier: FirmId, product: ProductId, amount: f64) {
        let order = Order {
            buyer,
            supplier,
            product,
            amount,
            placed_at: self.t,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        if let Buyer::Firm(b) = buyer {
            self.pending[b as usize][product as usize] += amount;
        }
        self.incoming[supplier as usize].push_back(order);
    }
}

/// Static structure the simulation runs on, with derived lookups.
pub struct World<'a> {
    pub graph: &'a ProductionGraph,
    pub layout: &'a FirmLayout,
    inputs: Vec<Vec<ProductId>>,
    raw_products: Vec<ProductId>,
    final_products: Vec<ProductId>,
    suppliers: Vec<Vec<FirmId>>,
}

impl<'a> World<'a> {
    pub fn new(graph: &'a ProductionGraph, layout: &'a FirmLayout) -> Self {
        let inputs = needed_inputs(&layout.supply, graph, layout.n_firms())
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect();
        let final_tier = graph.max_tier();
        let ids = |tier: u32| -> Vec<ProductId> {
            graph.products.iter().filter(|p| p.tier == tier).map(|p| p.id).collect()
        };
        World {
            graph,
            layout,
            inputs,
            raw_products: ids(0),
            final_products: ids(final_tier),
            suppliers: layout.supply.suppliers.clone(),
        }
    }

    pub fn n_firms(&self) -> usize {
        self.layout.n_firms()
    }

    pub fn n_products(&self) -> usize {
        self.graph.n_products()
    }

    pub fn final_products(&self) -> &[ProductId] {
        &self.final_products
    }

    pub fn raw_products(&self) -> &[ProductId] {
        &self.raw_products
    }
}

/// Empty inventories and order books, full supply, initial demand, `t = 0`.
pub fn init_state(world: &World<'_>, scenario: &Scenario) -> SimState {
    let n = world.n_firms();
    let m = world.n_products();
    let mut supply = vec![0.0; m];
    for &p in world.raw_products() {
        supply[p as usize] = scenario.stable_supply();
    }
    let mut demand_base = vec![0.0; m];
    let mut demand_types = vec![None; m];
    let mut type_rng = rng_from_seed(derive_seed(scenario.seed, "demand-types"));
    for (i, &p) in world.final_products().iter().enumerate() {
        demand_base[p as usize] = scenario.initial_demand;
        let kind = match &scenario.demand_types {
            Some(types) if !types.is_empty() => types[i % types.len()],
            _ => DemandType::ALL[type_rng.random_range(0..DemandType::ALL.len())],
        };
        demand_types[p as usize] = Some(kind);
    }
    SimState {
        inventories: vec![vec![0.0; m]; n],
        incoming: vec![VecDeque::new(); n],
        pending: vec![vec![0.0; m]; n],
        completed_last: Vec::new(),
        supply,
        demand_base,
        demand_types,
        t: 0,
        next_seq: 0,
        shock_log: Vec::new(),
    }
}

/// Shocks each raw product with probability `p_shock`, otherwise lets it
/// recover by the factor `recovery` up to the stable level. One uniform draw
/// per raw product per call, whatever `p_shock` is.
pub fn update_exogenous_supply(world: &World<'_>, state: &mut SimState, scenario: &Scenario, rng: &mut SimRng) {
    let stable = scenario.stable_supply();
    for &p in world.raw_products() {
        let s = &mut state.supply[p as usize];
        if rng.random::<f64>() < scenario.p_shock {
            *s = scenario.supply_shock;
            state.shock_log.push((p, state.t));
        } else {
            *s = (*s * scenario.recovery).min(stable);
        }
    }
}

fn poisson(mean: f64, rng: &mut SimRng) -> f64 {
    if mean > 0.0 && mean.is_finite() {
        Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// Advances each final product's demand level by a normal drift (clamped at
/// zero), scales it by the day-of-week multiplier, and draws one Poisson
/// order per supplying firm. Zero-amount orders are dropped.
pub fn consumer_demand(world: &World<'_>, state: &mut SimState, scenario: &Scenario, rng: &mut SimRng, t: u32) -> Vec<Order> {
    let mut orders = Vec::new();
    for &p in world.final_products() {
        let z: f64 = rng.sample(StandardNormal);
        let base = &mut state.demand_base[p as usize];
        *base = (*base + scenario.drift_sd * z).max(0.0);
        let kind = state.demand_types[p as usize].unwrap_or(DemandType::Uniform);
        let mean = kind.multiplier(t) * *base;
        for &f in &world.suppliers[p as usize] {
            let k = poisson(mean, rng);
            if k > 0.0 {
                orders.push(Order {
                    buyer: Buyer::Consumer,
                    supplier: f,
                    product: p,
                    amount: k,
                    placed_at: t,
                    seq: 0,
                });
            }
        }
    }
    orders
}

fn can_complete(world: &World<'_>, state: &SimState, firm: usize, order: &Order) -> bool {
    let parts = world.graph.parts(order.product);
    if parts.is_empty() {
        return order.amount <= state.supply[order.product as usize];
    }
    let inv = &state.inventories[firm];
    parts
        .iter()
        .all(|&(part, u)| f64::from(u) * order.amount <= inv[part as usize])
}

/// Runs one timestep and returns the transactions it completed.
pub fn step(world: &World<'_>, state: &mut SimState, scenario: &Scenario, rng: &mut SimRng) -> Vec<Transaction> {
    let t = state.t;
    let m = world.n_products();
    update_exogenous_supply(world, state, scenario, rng);
    for o in consumer_demand(world, state, scenario, rng, t) {
        state.push_order(o.buyer, o.supplier, o.product, o.amount);
    }

    // receipts only touch the buyer's own state, so doing them up front is
    // the same as doing them at each firm's turn
    for o in std::mem::take(&mut state.completed_last) {
        if let Buyer::Firm(b) = o.buyer {
            let (b, p) = (b as usize, o.product as usize);
            state.inventories[b][p] += o.amount;
            state.pending[b][p] -= o.amount;
            if state.pending[b][p].abs() < 1e-9 {
                state.pending[b][p] = 0.0;
            }
        }
    }

    let mut completed = Vec::new();
    let mut required = vec![0.0; m];
    for firm in 0..world.n_firms() {
        // production: oldest first, strict FIFO per product (an infeasible
        // order blocks later orders of the same product only)
        let queue = std::mem::take(&mut state.incoming[firm]);
        let mut blocked: Vec<ProductId> = Vec::new();
        let mut kept = VecDeque::with_capacity(queue.len());
        for order in queue {
            if order.placed_at >= t || blocked.contains(&order.product) || !can_complete(world, state, firm, &order) {
                if !blocked.contains(&order.product) {
                    blocked.push(order.product);
                }
                kept.push_back(order);
                continue;
            }
            for &(part, u) in world.graph.parts(order.product) {
                let slot = &mut state.inventories[firm][part as usize];
                *slot -= f64::from(u) * order.amount;
                assert!(*slot >= 0.0, "negative inventory for firm {firm}, product {part} at t={t}");
            }
            completed.push(order);
        }
        state.incoming[firm] = kept;

        // new demand: requirement of all own incomplete orders minus stock on
        // hand and what is already on the way
        required.iter_mut().for_each(|r| *r = 0.0);
        for order in &state.incoming[firm] {
            for &(part, u) in world.graph.parts(order.product) {
                required[part as usize] += f64::from(u) * order.amount;
            }
        }
        for &input in &world.inputs[firm] {
            let i = input as usize;
            let need = required[i] - state.inventories[firm][i] - state.pending[firm][i];
            if need <= 1e-9 {
                continue;
            }
            let firm_id = firm as FirmId;
            let supplier = if rng.random::<f64>() < scenario.p_default {
                world.layout.defaults.get(firm_id, input)
            } else {
                None
            }
            .unwrap_or_else(|| {
                let candidates: Vec<FirmId> = world.suppliers[input as usize]
                    .iter()
                    .copied()
                    .filter(|&s| s != firm_id)
                    .collect();
                candidates[rng.random_range(0..candidates.len())]
            });
            state.push_order(Buyer::Firm(firm_id), supplier, input, need);
        }
    }

    let transactions = completed
        .iter()
        .map(|o| Transaction {
            t,
            supplier: o.supplier,
            buyer: o.buyer,
            product: o.product,
            amount: o.amount,
        })
        .collect();
    state.completed_last = completed;
    state.t += 1;
    transactions
}

/// Output of a full simulation run.
#[derive(Clone, Debug)]
pub struct SimOutput {
    pub dataset: Dataset,
    pub shock_log: Vec<(ProductId, u32)>,
    /// Completed transactions per timestep.
    pub per_step: Vec<usize>,
}

pub fn run(graph: &ProductionGraph, layout: &FirmLayout, scenario: &Scenario) -> Result<SimOutput> {
    scenario.validate()?;
    let world = World::new(graph, layout);
    let mut state = init_state(&world, scenario);
    let mut rng = rng_from_seed(scenario.seed);
    let mut all = Vec::new();
    let mut per_step = Vec::with_capacity(scenario.steps as usize);
    for _ in 0..scenario.steps {
        let txns = step(&world, &mut state, scenario, &mut rng);
        per_step.push(txns.len());
        all.extend(txns);
    }
    let dataset = Dataset::new(all, world.n_firms(), world.n_products())?;
    Ok(SimOutput {
        dataset,
        shock_log: state.shock_log,
        per_step,
    })
}

/// Removes every transaction touching `floor(missing_frac * n_firms)`
/// uniformly sampled firms. The node universe is kept.
pub fn drop_firms(dataset: &Dataset, missing_frac: f64, rng: &mut SimRng) -> (Dataset, Vec<FirmId>) {
    let n = dataset.n_firms;
    let k = ((missing_frac * n as f64).floor() as usize).min(n);
    let mut dropped: Vec<FirmId> = index::sample(rng, n, k).into_iter().map(|i| i as FirmId).collect();
    dropped.sort_unstable();
    let mut is_dropped = vec![false; n];
    for &f in &dropped {
        is_dropped[f as usize] = true;
    }
    let kept = dataset
        .transactions
        .iter()
        .filter(|tx| !is_dropped[tx.supplier as usize] && !tx.buyer.firm().is_some_and(|b| is_dropped[b as usize]))
        .copied()
        .collect();
    let out = Dataset {
        transactions: kept,
        n_firms: dataset.n_firms,
        n_products: dataset.n_products,
        split: None,
    };
    (out, dropped)
}
