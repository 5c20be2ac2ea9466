//! Synthetic supply networks with planned and executed shipments.
//!
//! Every weekly snapshot is simulated as a self-contained episode over its
//! horizon. A planner replenishes each node toward a target from demand
//! forecasts, one event per edge per week, and (unless `tight`) trims
//! shipments causally so the plan respects capacity. The executed world
//! perturbs each planned event by the deviation spec, samples a lead time,
//! and trims causally against actual demand. Only week 0 of an episode
//! happens: its inventory at the start of week 1 and its shipments still in
//! transit seed the next episode, where the planner sees them as scheduled
//! receipts. Plants are refilled at every episode start. Week-0 executions
//! become shipment history and lead-time observations for later snapshots.
//!
//! Plans and demand are whole units, so a zero-deviation episode is exactly
//! reproduced by the weekly inventory process.

use chrono::{Days, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::autodiff::capacity_ratio;
use crate::error::{GspError, Result};
use crate::event_model::{DELTA_MAX, DELTA_MIN};
use crate::graph::{
    ActualEvent, EdgeState, Labels, LeadTimeObservation, NetworkGraph, NetworkSnapshot, NodeState, PlannedEvent,
    ShipmentRecord,
};
use crate::timeline::DAYS_PER_WEEK;

/// Systematic gaps between plan and execution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviationSpec {
    /// `(delta, probability)` of the executed-minus-planned day.
    pub shift: Vec<(i32, f64)>,
    /// Executed over planned quantity, uniform on `mean +- spread`.
    pub ratio_mean: f64,
    pub ratio_spread: f64,
    /// `(days, probability)` from shipment to receipt.
    pub lead_time: Vec<(usize, f64)>,
    /// Target wMAPE of demand forecasts against actual demand (0 for exact).
    pub demand_wmape: f64,
}

impl Default for DeviationSpec {
    fn default() -> Self {
        DeviationSpec {
            shift: vec![(-1, 0.1), (0, 0.4), (1, 0.2), (2, 0.2), (3, 0.1)],
            ratio_mean: 0.9,
            ratio_spread: 0.1,
            lead_time: vec![(1, 0.25), (2, 0.5), (3, 0.25)],
            demand_wmape: 0.975,
        }
    }
}

impl DeviationSpec {
    /// Execution equals the plan, lead time is a fixed two days and demand
    /// forecasts are exact.
    pub fn none() -> Self {
        DeviationSpec {
            shift: vec![(0, 1.0)],
            ratio_mean: 1.0,
            ratio_spread: 0.0,
            lead_time: vec![(2, 1.0)],
            demand_wmape: 0.0,
        }
    }

    /// Every event executes `days` late at `ratio` of its planned quantity.
    pub fn shifted(days: i32, ratio: f64) -> Self {
        DeviationSpec {
            shift: vec![(days, 1.0)],
            ratio_mean: ratio,
            ratio_spread: 0.0,
            ..DeviationSpec::none()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GspError::Config(format!("deviation spec: {m}")));
        if !(self.ratio_mean > 0.0 && self.ratio_mean <= 2.0) {
            return bad("ratio mean must lie in (0, 2]");
        }
        if !(self.ratio_spread >= 0.0) || self.ratio_mean - self.ratio_spread <= 0.0 {
            return bad("ratio spread must keep ratios positive");
        }
        if self.shift.is_empty()
            || self
                .shift
                .iter()
                .any(|&(d, p)| !(DELTA_MIN..=DELTA_MAX).contains(&d) || !(p >= 0.0))
        {
            return bad("shift support must lie in -7..=7 with non-negative weights");
        }
        if self.lead_time.is_empty() || self.lead_time.iter().any(|&(l, p)| l >= DAYS_PER_WEEK || !(p >= 0.0)) {
            return bad("lead times must lie in 0..7 with non-negative weights");
        }
        if !(self.demand_wmape >= 0.0 && self.demand_wmape < 2.0) {
            return bad("demand wMAPE target must lie in [0, 2)");
        }
        Ok(())
    }

    pub fn max_lead(&self) -> usize {
        self.lead_time
            .iter()
            .filter(|l| l.1 > 0.0)
            .map(|l| l.0)
            .max()
            .unwrap_or(0)
    }

    /// Lognormal sigma whose mean-one multiplier has `E|X - 1|` equal to the
    /// wMAPE target: `E|X - 1| = 2 (2 Phi(sigma / 2) - 1)`.
    pub fn demand_sigma(&self) -> f64 {
        if self.demand_wmape == 0.0 {
            return 0.0;
        }
        let normal = Normal::standard();
        2.0 * normal.inverse_cdf((2.0 + self.demand_wmape) / 4.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub skus: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Edges beyond one parent per non-plant node.
    pub max_extra_edges: usize,
    /// Emitted weekly snapshots per SKU.
    pub weeks: usize,
    /// Simulated weeks before the first snapshot, feeding history.
    pub warmup_weeks: usize,
    pub horizon_days: usize,
    pub start_date: NaiveDate,
    /// Weekly demand at a retailer is drawn around a base in this range.
    pub demand_min: f64,
    pub demand_max: f64,
    /// Target stock as a multiple of the week's expected outflow.
    pub safety_weeks: f64,
    /// Plant stock at each episode start, as a multiple of the demand it serves.
    pub plant_cover: f64,
    /// Plans ignore capacity and plants are short of stock.
    pub tight: bool,
    pub deviation: DeviationSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            skus: 10,
            min_nodes: 3,
            max_nodes: 8,
            max_extra_edges: 3,
            weeks: 20,
            warmup_weeks: 4,
            horizon_days: 28,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            demand_min: 20.0,
            demand_max: 100.0,
            safety_weeks: 0.5,
            plant_cover: 1.5,
            tight: false,
            deviation: DeviationSpec::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.deviation.validate()?;
        if self.min_nodes < 2 || self.max_nodes < self.min_nodes {
            return Err(GspError::Config("node range must satisfy 2 <= min <= max".into()));
        }
        if self.horizon_days == 0 || !self.horizon_days.is_multiple_of(DAYS_PER_WEEK) {
            return Err(GspError::Config("horizon must be a positive multiple of 7".into()));
        }
        if !(self.demand_min >= 0.0 && self.demand_max >= self.demand_min) {
            return Err(GspError::Config("demand range is invalid".into()));
        }
        if !(self.plant_cover > 0.0 && self.safety_weeks >= 0.0) {
            return Err(GspError::Config(
                "plant cover must be positive and safety non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tier {
    Plant,
    Dc,
    Retailer,
}

fn tiers(n_nodes: usize) -> (usize, usize, usize) {
    let plants = (n_nodes / 6).max(1);
    let retailers = (n_nodes / 2).max(1);
    let dcs = n_nodes - plants - retailers;
    (plants, dcs, retailers)
}

fn tier_of(name: &str) -> Tier {
    match name.as_bytes().first() {
        Some(b'P') => Tier::Plant,
        Some(b'D') => Tier::Dc,
        _ => Tier::Retailer,
    }
}

/// Largest edge count of the layered topology on `n_nodes` nodes.
pub fn max_edges(n_nodes: usize) -> usize {
    let (p, d, r) = tiers(n_nodes);
    p * d + p * r + d * r
}

/// Layered plants -> distribution centers -> retailers. Every non-plant node
/// gets one parent from an earlier tier; remaining edges are drawn uniformly
/// from the other forward pairs.
pub fn generate_network(sku: &str, n_nodes: usize, n_edges: usize, seed: u64) -> Result<NetworkGraph> {
    if n_nodes < 2 {
        return Err(GspError::InvalidArgument("a network needs at least two nodes".into()));
    }
    let (p, d, r) = tiers(n_nodes);
    let max = max_edges(n_nodes);
    if n_edges > max {
        return Err(GspError::InvalidArgument(format!(
            "{n_edges} edges requested but {n_nodes} layered nodes allow at most {max}"
        )));
    }
    if n_edges < n_nodes - p {
        return Err(GspError::InvalidArgument(format!(
            "{n_edges} edges cannot connect {} non-plant nodes",
            n_nodes - p
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..p)
        .map(|i| format!("P{i}"))
        .chain((0..d).map(|i| format!("D{i}")))
        .chain((0..r).map(|i| format!("R{i}")))
        .collect();
    let mut chosen: Vec<(usize, usize)> = Vec::with_capacity(n_edges);
    for dc in p..p + d {
        chosen.push((rng.random_range(0..p), dc));
    }
    for ret in p + d..n_nodes {
        let parent = if d > 0 {
            rng.random_range(p..p + d)
        } else {
            rng.random_range(0..p)
        };
        chosen.push((parent, ret));
    }
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for src in 0..p + d {
        let first_dst = if src < p { p } else { p + d };
        for dst in first_dst..n_nodes {
            if !chosen.contains(&(src, dst)) {
                candidates.push((src, dst));
            }
        }
    }
    while chosen.len() < n_edges {
        let k = rng.random_range(0..candidates.len());
        chosen.push(candidates.swap_remove(k));
    }
    chosen.sort_unstable();
    let edges: Vec<(String, String)> = chosen
        .iter()
        .map(|&(a, b)| (names[a].clone(), names[b].clone()))
        .collect();
    NetworkGraph::new(sku, &names, &edges)
}

fn weighted<T: Copy>(support: &[(T, f64)]) -> Result<(Vec<T>, WeightedIndex<f64>)> {
    let values = support.iter().map(|s| s.0).collect();
    let index = WeightedIndex::new(support.iter().map(|s| s.1))
        .map_err(|e| GspError::Config(format!("invalid discrete distribution: {e}")))?;
    Ok((values, index))
}

/// Draws `n` lead times from the spec's distribution.
pub fn sample_lead_times(spec: &DeviationSpec, n: usize, seed: u64) -> Result<Vec<usize>> {
    let (values, index) = weighted(&spec.lead_time)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| values[index.sample(&mut rng)]).collect())
}

/// Static structure shared by every episode of one SKU.
struct Network<'a> {
    graph: &'a NetworkGraph,
    order: Vec<usize>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
    /// Weekday of each edge's weekly planned event.
    slot: Vec<usize>,
    /// Fraction of the destination's need requested over each edge.
    share: Vec<f64>,
    plants: Vec<usize>,
    /// Base weekly demand per node.
    base_demand: Vec<f64>,
}

impl<'a> Network<'a> {
    fn new(graph: &'a NetworkGraph, config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let n = graph.node_count();
        let order = graph
            .topological_order()
            .ok_or_else(|| GspError::Graph("synthetic network has a cycle".into()))?;
        let mut incoming = vec![Vec::new(); n];
        let mut outgoing = vec![Vec::new(); n];
        for (e, &(s, d)) in graph.edges().iter().enumerate() {
            outgoing[s].push(e);
            incoming[d].push(e);
        }
        let latest_slot = (DAYS_PER_WEEK - 1).saturating_sub(config.deviation.max_lead());
        let slot = (0..graph.edge_count())
            .map(|_| rng.random_range(0..=latest_slot))
            .collect();
        let weights: Vec<f64> = (0..graph.edge_count()).map(|_| rng.random_range(0.5..1.5)).collect();
        let mut share = vec![0.0; graph.edge_count()];
        for edges in &incoming {
            let total: f64 = edges.iter().map(|&e| weights[e]).sum();
            for &e in edges {
                share[e] = weights[e] / total;
            }
        }
        let plants = (0..n).filter(|&v| tier_of(graph.node_name(v)) == Tier::Plant).collect();
        let base_demand = (0..n)
            .map(|v| match tier_of(graph.node_name(v)) {
                Tier::Retailer => rng.random_range(config.demand_min..=config.demand_max).round(),
                _ => 0.0,
            })
            .collect();
        Ok(Network {
            graph,
            order,
            incoming,
            outgoing,
            slot,
            share,
            plants,
            base_demand,
        })
    }

    /// Base demand each plant serves, splitting sink demand by edge shares.
    fn plant_load(&self) -> Vec<f64> {
        let n = self.graph.node_count();
        let mut load = self.base_demand.clone();
        for &v in self.order.iter().rev() {
            for &e in &self.incoming[v] {
                let (src, _) = self.graph.edges()[e];
                load[src] += load[v] * self.share[e];
            }
        }
        let mut out = vec![0.0; n];
        for &p in &self.plants {
            out[p] = load[p];
        }
        out
    }
}

struct Plan {
    /// `[edge][week]` planned quantity.
    quantity: Vec<Vec<f64>>,
    /// `[node][week + 1]`
    inventory: Vec<Vec<f64>>,
    incoming: Vec<Vec<f64>>,
    outgoing: Vec<Vec<f64>>,
}

fn plan_episode(
    net: &Network,
    start: &[f64],
    scheduled: &[Vec<f64>],
    forecast: &[Vec<f64>],
    weeks: usize,
    config: &SynthConfig,
) -> Plan {
    let (n, m) = (net.graph.node_count(), net.graph.edge_count());
    let mut plan = Plan {
        quantity: vec![vec![0.0; weeks]; m],
        inventory: vec![vec![0.0; weeks + 1]; n],
        incoming: scheduled.to_vec(),
        outgoing: vec![vec![0.0; weeks]; n],
    };
    for v in 0..n {
        plan.inventory[v][0] = start[v];
    }
    for w in 0..weeks {
        let mut request = vec![0.0; m];
        for &v in net.order.iter().rev() {
            if net.incoming[v].is_empty() {
                continue;
            }
            let outflow: f64 = forecast[v][w] + net.outgoing[v].iter().map(|&e| request[e]).sum::<f64>();
            let need = (outflow * (1.0 + config.safety_weeks) - plan.inventory[v][w]).max(0.0);
            for &e in &net.incoming[v] {
                request[e] = (need * net.share[e]).ceil();
            }
        }
        for &u in &net.order {
            let capacity = plan.inventory[u][w] + plan.incoming[u][w] - forecast[u][w];
            let asked: f64 = net.outgoing[u].iter().map(|&e| request[e]).sum();
            let ratio = if !config.tight && asked > capacity.max(0.0) {
                capacity_ratio(capacity, asked)
            } else {
                1.0
            };
            let mut sent = 0.0;
            for &e in &net.outgoing[u] {
                let q = if ratio < 1.0 {
                    (request[e] * ratio).floor()
                } else {
                    request[e]
                };
                plan.quantity[e][w] = q;
                sent += q;
                let (_, dst) = net.graph.edges()[e];
                plan.incoming[dst][w] += q;
            }
            plan.outgoing[u][w] = sent;
            plan.inventory[u][w + 1] = plan.inventory[u][w] + plan.incoming[u][w] - forecast[u][w] - sent;
        }
    }
    plan
}

struct Execution {
    day: usize,
    quantity: f64,
    lead: usize,
    planned_index: usize,
}

struct Outcome {
    /// `[edge]` executed shipments inside the horizon, after trimming.
    shipments: Vec<Vec<Execution>>,
    /// `[node][week + 1]`
    inventory: Vec<Vec<f64>>,
    /// `[node][week]` receipts and shipments after trimming.
    #[cfg_attr(not(test), allow(dead_code))]
    arrivals: Vec<Vec<f64>>,
    #[cfg_attr(not(test), allow(dead_code))]
    sent: Vec<Vec<f64>>,
    /// `[node][week]` of the next episode: week-0 shipments still in transit.
    carry: Vec<Vec<f64>>,
}

struct Draws {
    shift: (Vec<i32>, WeightedIndex<f64>),
    lead: (Vec<usize>, WeightedIndex<f64>),
}

#[allow(clippy::too_many_arguments)]
fn execute_episode(
    net: &Network,
    start: &[f64],
    scheduled: &[Vec<f64>],
    demand: &[Vec<f64>],
    planned: &[Vec<PlannedEvent>],
    config: &SynthConfig,
    draws: &Draws,
    rng: &mut ChaCha8Rng,
) -> Outcome {
    let (n, m) = (net.graph.node_count(), net.graph.edge_count());
    let h = config.horizon_days;
    let weeks = h / DAYS_PER_WEEK;
    let dev = &config.deviation;
    let mut pending: Vec<Vec<Execution>> = (0..m).map(|_| Vec::new()).collect();
    for (e, events) in planned.iter().enumerate() {
        for (i, p) in events.iter().enumerate() {
            let shift = draws.shift.0[draws.shift.1.sample(rng)];
            let ratio = if dev.ratio_spread > 0.0 {
                rng.random_range(dev.ratio_mean - dev.ratio_spread..=dev.ratio_mean + dev.ratio_spread)
            } else {
                dev.ratio_mean
            }
            .clamp(f64::MIN_POSITIVE, 2.0);
            let lead = draws.lead.0[draws.lead.1.sample(rng)];
            let day = (p.offset as i64 + shift as i64).max(0) as usize;
            if day < h {
                pending[e].push(Execution {
                    day,
                    quantity: p.quantity * ratio,
                    lead,
                    planned_index: i,
                });
            }
        }
    }
    let mut inventory = vec![vec![0.0; weeks + 1]; n];
    let mut arrivals = scheduled.to_vec();
    let mut carry = vec![vec![0.0; weeks]; n];
    let mut shipped = vec![vec![0.0; weeks]; n];
    for v in 0..n {
        inventory[v][0] = start[v];
    }
    for w in 0..weeks {
        let days = w * DAYS_PER_WEEK..(w + 1) * DAYS_PER_WEEK;
        for &u in &net.order {
            let capacity = inventory[u][w] + arrivals[u][w] - demand[u][w];
            let asked: f64 = net.outgoing[u]
                .iter()
                .flat_map(|&e| pending[e].iter().filter(|x| days.contains(&x.day)).map(|x| x.quantity))
                .sum();
            let ratio = if asked > capacity.max(0.0) {
                capacity_ratio(capacity, asked)
            } else {
                1.0
            };
            let mut sent = 0.0;
            for &e in &net.outgoing[u] {
                let (_, dst) = net.graph.edges()[e];
                for x in pending[e].iter_mut().filter(|x| days.contains(&x.day)) {
                    x.quantity *= ratio;
                    sent += x.quantity;
                    let arrival = x.day + x.lead;
                    if arrival < h {
                        arrivals[dst][arrival / DAYS_PER_WEEK] += x.quantity;
                    }
                    if w == 0 && arrival >= DAYS_PER_WEEK && arrival - DAYS_PER_WEEK < h {
                        carry[dst][(arrival - DAYS_PER_WEEK) / DAYS_PER_WEEK] += x.quantity;
                    }
                }
            }
            shipped[u][w] = sent;
            inventory[u][w + 1] = capacity - sent;
        }
    }
    Outcome {
        shipments: pending,
        inventory,
        arrivals,
        sent: shipped,
        carry,
    }
}

/// Deterministic per-seed weekly snapshots of one SKU network.
pub fn generate_history(graph: &NetworkGraph, config: &SynthConfig, seed: u64) -> Result<Vec<NetworkSnapshot>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Network::new(graph, config, &mut rng)?;
    let (n, m) = (graph.node_count(), graph.edge_count());
    let h = config.horizon_days;
    let weeks = h / DAYS_PER_WEEK;
    let episodes = config.warmup_weeks + config.weeks;
    let draws = Draws {
        shift: weighted(&config.deviation.shift)?,
        lead: weighted(&config.deviation.lead_time)?,
    };
    let sigma = config.deviation.demand_sigma();
    let noise = LogNormal::new(-sigma * sigma / 2.0, sigma).map_err(|e| GspError::Config(e.to_string()))?;

    // Actual demand per calendar week, shared by overlapping episodes.
    let calendar_weeks = episodes + weeks;
    let mut actual_demand = vec![vec![0.0; calendar_weeks]; n];
    for v in 0..n {
        if net.base_demand[v] > 0.0 {
            let poisson = Poisson::new(net.base_demand[v]).map_err(|e| GspError::Config(e.to_string()))?;
            for c in 0..calendar_weeks {
                actual_demand[v][c] = poisson.sample(&mut rng);
            }
        }
    }
    let plant_stock: Vec<f64> = net
        .plant_load()
        .iter()
        .map(|l| (l * weeks as f64 * config.plant_cover * if config.tight { 0.5 } else { 1.0 }).round())
        .collect();

    let mut start: Vec<f64> = (0..n)
        .map(|v| {
            if net.plants.contains(&v) {
                plant_stock[v]
            } else {
                (net.base_demand[v] * config.safety_weeks).round()
            }
        })
        .collect();
    let mut scheduled = vec![vec![0.0; weeks]; n];
    let mut history: Vec<Vec<ShipmentRecord>> = vec![Vec::new(); m];
    let mut observations: Vec<Vec<LeadTimeObservation>> = vec![Vec::new(); m];
    let mut snapshots = Vec::with_capacity(config.weeks);

    for k in 0..episodes {
        let date = config.start_date + Days::new((k * DAYS_PER_WEEK) as u64);
        for &p in &net.plants {
            start[p] = plant_stock[p];
        }
        let demand: Vec<Vec<f64>> = actual_demand.iter().map(|d| d[k..k + weeks].to_vec()).collect();
        let forecast: Vec<Vec<f64>> = demand
            .iter()
            .map(|d| {
                d.iter()
                    .map(|&x| if sigma > 0.0 { x * noise.sample(&mut rng) } else { x })
                    .collect()
            })
            .collect();
        let plan = plan_episode(&net, &start, &scheduled, &forecast, weeks, config);
        let planned: Vec<Vec<PlannedEvent>> = (0..m)
            .map(|e| {
                (0..weeks)
                    .filter(|&w| plan.quantity[e][w] > 0.0)
                    .map(|w| PlannedEvent {
                        offset: w * DAYS_PER_WEEK + net.slot[e],
                        quantity: plan.quantity[e][w],
                    })
                    .collect()
            })
            .collect();
        let outcome = execute_episode(&net, &start, &scheduled, &demand, &planned, config, &draws, &mut rng);

        if k >= config.warmup_weeks {
            let node_states = (0..n)
                .map(|v| NodeState {
                    actual_inventory_start: start[v],
                    planned_inventory: plan.inventory[v][1..weeks].to_vec(),
                    predicted_demand: forecast[v].clone(),
                    planned_incoming: plan.incoming[v].clone(),
                    planned_outgoing: plan.outgoing[v].clone(),
                })
                .collect();
            let edge_states = (0..m)
                .map(|e| EdgeState {
                    planned: planned[e].clone(),
                    history: history[e].clone(),
                })
                .collect();
            let mut daily = vec![vec![0.0; h]; m];
            let mut actual_events = vec![Vec::new(); m];
            for (e, xs) in outcome.shipments.iter().enumerate() {
                for x in xs {
                    daily[e][x.day] += x.quantity;
                    if x.quantity > 0.0 {
                        actual_events[e].push(ActualEvent {
                            day: x.day,
                            quantity: x.quantity,
                            planned_index: Some(x.planned_index),
                        });
                    }
                }
            }
            let labels = Labels {
                daily_outgoing: daily,
                weekly_inventory: outcome.inventory.iter().map(|i| i[..weeks].to_vec()).collect(),
                actual_events: Some(actual_events),
            };
            let seen: Vec<Vec<LeadTimeObservation>> = observations
                .iter()
                .map(|obs| obs.iter().filter(|o| o.receive < date).copied().collect())
                .collect();
            snapshots.push(NetworkSnapshot::new(
                graph.clone(),
                date,
                h,
                node_states,
                edge_states,
                Some(labels),
                seen,
            )?);
        }

        for (e, xs) in outcome.shipments.iter().enumerate() {
            let mut week0: Vec<&Execution> = xs
                .iter()
                .filter(|x| x.day < DAYS_PER_WEEK && x.quantity > 0.0)
                .collect();
            week0.sort_by_key(|x| x.day);
            for x in week0 {
                let ship = date + Days::new(x.day as u64);
                history[e].insert(
                    0,
                    ShipmentRecord {
                        date: ship,
                        quantity: x.quantity,
                    },
                );
                observations[e].push(LeadTimeObservation {
                    ship,
                    receive: ship + Days::new(x.lead as u64),
                });
            }
        }
        start = outcome.inventory.iter().map(|i| i[1]).collect();
        scheduled = outcome.carry;
    }
    Ok(snapshots)
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub snapshots: Vec<NetworkSnapshot>,
}

/// Independent networks and histories for `config.skus` SKUs named
/// `SKU000`, `SKU001`, ...; snapshots are ordered by SKU then date.
pub fn generate_dataset(config: &SynthConfig, seed: u64) -> Result<SynthDataset> {
    config.validate()?;
    let per_sku: Vec<Vec<NetworkSnapshot>> = (0..config.skus)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let n = rng.random_range(config.min_nodes..=config.max_nodes);
            let (p, _, _) = tiers(n);
            let min_edges = n - p;
            let n_edges = (min_edges + rng.random_range(0..=config.max_extra_edges)).min(max_edges(n));
            let sku = format!("SKU{i:03}");
            let graph = generate_network(&sku, n, n_edges, rng.random())?;
            generate_history(&graph, config, rng.random())
        })
        .collect::<Result<_>>()?;
    Ok(SynthDataset {
        config: config.clone(),
        snapshots: per_sku.into_iter().flatten().collect(),
    })
}
