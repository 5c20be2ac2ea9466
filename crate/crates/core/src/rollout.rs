//! Lead-time distributions, the weekly inventory process and the iterative
//! capacity-constrained inference loop.
//!
//! A single pass walks weeks in order. At week `w` the timeline seen by the
//! receiving side is this pass's adjusted days before `7w` followed by the
//! input days from `7w` on. Incoming supply `S`, capacity
//! `Y = I + S - D` and outgoing `A` are computed per node, and when clipping
//! is on a node whose `A` exceeds `max(Y, 0)` has the week-`w` portion of
//! each outgoing edge scaled by `max(Y, 0) / A`. Then `I' = Y - A`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{capacity_ratio, SparseMap, Tape, Tensor, Var};
use crate::error::{GspError, Result};
use crate::graph::{LeadTimeObservation, NetworkGraph, NetworkSnapshot};
use crate::timeline::DAYS_PER_WEEK;

pub const DEFAULT_LEAD_DAYS: usize = 2;
pub const DEFAULT_EPSILON: f64 = 0.005;
pub const DEFAULT_MAX_ITERS: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeKey {
    pub sku: String,
    pub src: String,
    pub dst: String,
}

impl EdgeKey {
    pub fn new(sku: &str, src: &str, dst: &str) -> Self {
        EdgeKey {
            sku: sku.to_string(),
            src: src.to_string(),
            dst: dst.to_string(),
        }
    }

    pub fn of(graph: &NetworkGraph, edge: usize) -> Self {
        let (s, d) = graph.edge_names(edge);
        EdgeKey::new(graph.sku(), s, d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeadTimeConfig {
    /// Pseudo-count added to every lead time in `0..horizon`.
    pub smoothing: f64,
    /// Lead time used when no observation exists anywhere.
    pub default_lead: usize,
}

impl Default for LeadTimeConfig {
    fn default() -> Self {
        LeadTimeConfig {
            smoothing: 0.0,
            default_lead: DEFAULT_LEAD_DAYS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct EdgeLeadTime {
    #[serde(flatten)]
    key: EdgeKey,
    probabilities: Vec<f64>,
    observations: usize,
}

/// Per-edge categorical lead-time distributions over `0..horizon` days,
/// with a pooled fallback and a one-hot default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeModel {
    horizon_days: usize,
    default_lead: usize,
    pooled: Option<Vec<f64>>,
    edges: Vec<EdgeLeadTime>,
    #[serde(skip)]
    lookup: BTreeMap<EdgeKey, usize>,
}

impl LeadTimeModel {
    /// Model with no history: every edge gets the one-hot default.
    pub fn fallback(horizon_days: usize, default_lead: usize) -> Self {
        LeadTimeModel {
            horizon_days,
            default_lead: default_lead.min(horizon_days.saturating_sub(1)),
            pooled: None,
            edges: Vec::new(),
            lookup: BTreeMap::new(),
        }
    }

    fn reindex(&mut self) {
        self.lookup = self.edges.iter().enumerate().map(|(i, e)| (e.key.clone(), i)).collect();
    }

    pub fn horizon_days(&self) -> usize {
        self.horizon_days
    }

    /// Distribution for one edge: its own history, else the pooled
    /// distribution, else a one-hot at the default lead time.
    pub fn distribution(&self, key: &EdgeKey) -> Vec<f64> {
        if let Some(&i) = self.lookup.get(key) {
            return self.edges[i].probabilities.clone();
        }
        if let Some(p) = &self.pooled {
            return p.clone();
        }
        let mut p = vec![0.0; self.horizon_days];
        p[self.default_lead] = 1.0;
        p
    }

    pub fn has_edge(&self, key: &EdgeKey) -> bool {
        self.lookup.contains_key(key)
    }

    /// Distributions for every edge of a snapshot, in edge order.
    pub fn for_snapshot(&self, snap: &NetworkSnapshot) -> Result<Vec<Vec<f64>>> {
        if snap.horizon_days != self.horizon_days {
            return Err(GspError::InvalidArgument(format!(
                "lead-time model covers {} days but snapshot {} has {}",
                self.horizon_days,
                snap.id(),
                snap.horizon_days
            )));
        }
        Ok((0..snap.graph.edge_count())
            .map(|e| self.distribution(&EdgeKey::of(&snap.graph, e)))
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut model: LeadTimeModel = serde_json::from_str(text)?;
        model.reindex();
        Ok(model)
    }
}

/// Empirical per-edge lead-time frequencies with additive smoothing over
/// `0..horizon`. Lead times at or beyond the horizon count as `horizon - 1`.
pub fn fit_leadtime(
    history: &[(EdgeKey, Vec<LeadTimeObservation>)],
    horizon_days: usize,
    config: &LeadTimeConfig,
) -> Result<LeadTimeModel> {
    if horizon_days == 0 {
        return Err(GspError::InvalidArgument("lead-time horizon must be positive".into()));
    }
    if !(config.smoothing >= 0.0) {
        return Err(GspError::Config("lead-time smoothing must be non-negative".into()));
    }
    let mut model = LeadTimeModel::fallback(horizon_days, config.default_lead);
    let mut pooled_counts = vec![0.0; horizon_days];
    let mut grouped: BTreeMap<&EdgeKey, Vec<&LeadTimeObservation>> = BTreeMap::new();
    for (key, obs) in history {
        grouped.entry(key).or_default().extend(obs.iter());
    }
    for (key, obs) in grouped {
        if obs.is_empty() {
            continue;
        }
        let mut counts = vec![config.smoothing; horizon_days];
        for o in &obs {
            let days = (o.receive - o.ship).num_days();
            if days < 0 {
                return Err(GspError::NegativeLeadTime {
                    src: key.src.clone(),
                    dst: key.dst.clone(),
                    ship: o.ship.to_string(),
                    receive: o.receive.to_string(),
                });
            }
            let k = (days as usize).min(horizon_days - 1);
            counts[k] += 1.0;
            pooled_counts[k] += 1.0;
        }
        model.edges.push(EdgeLeadTime {
            key: key.clone(),
            probabilities: normalize(&counts),
            observations: obs.len(),
        });
    }
    if pooled_counts.iter().any(|&c| c > 0.0) {
        let smoothed: Vec<f64> = pooled_counts.iter().map(|c| c + config.smoothing).collect();
        model.pooled = Some(normalize(&smoothed));
    }
    model.reindex();
    Ok(model)
}

/// Fits from the lead-time histories carried by snapshots. Each snapshot
/// holds every observation received before its prediction day, so the
/// latest snapshot per SKU supplies the history of its edges.
pub fn fit_leadtime_from_snapshots(snaps: &[NetworkSnapshot], config: &LeadTimeConfig) -> Result<LeadTimeModel> {
    let horizon = snaps.first().map_or(28, |s| s.horizon_days);
    let mut latest: BTreeMap<EdgeKey, (chrono::NaiveDate, &Vec<LeadTimeObservation>)> = BTreeMap::new();
    for s in snaps {
        for (e, obs) in s.leadtime_history.iter().enumerate() {
            let key = EdgeKey::of(&s.graph, e);
            let newer = latest.get(&key).is_none_or(|(d, _)| s.prediction_date > *d);
            if newer {
                latest.insert(key, (s.prediction_date, obs));
            }
        }
    }
    let history: Vec<(EdgeKey, Vec<LeadTimeObservation>)> =
        latest.into_iter().map(|(k, (_, obs))| (k, obs.clone())).collect();
    fit_leadtime(&history, horizon, config)
}

fn normalize(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

/// Arrival timeline at the destination: `out[h + k] += q[h] * p[k]`, with
/// arrivals past the horizon dropped.
pub fn receive_convolve(daily: &[f64], lead: &[f64]) -> Vec<f64> {
    let h_len = daily.len();
    let mut out = vec![0.0; h_len];
    for (h, &q) in daily.iter().enumerate() {
        if q == 0.0 {
            continue;
        }
        for (k, &p) in lead.iter().enumerate() {
            if p != 0.0 && h + k < h_len {
                out[h + k] += q * p;
            }
        }
    }
    out
}

/// Everything a rollout needs besides the edge timelines.
#[derive(Clone, Debug)]
pub struct RolloutSetup {
    pub nodes: usize,
    /// `(source, dest)` node indices.
    pub edges: Vec<(usize, usize)>,
    pub horizon_days: usize,
    pub start_inventory: Vec<f64>,
    /// Per node, per week.
    pub demand: Vec<Vec<f64>>,
    /// Per edge lead-time distribution over `0..horizon_days`.
    pub lead: Vec<Vec<f64>>,
}

impl RolloutSetup {
    pub fn from_snapshot(snap: &NetworkSnapshot, lead: Vec<Vec<f64>>) -> Result<Self> {
        let setup = RolloutSetup {
            nodes: snap.graph.node_count(),
            edges: snap.graph.edges().to_vec(),
            horizon_days: snap.horizon_days,
            start_inventory: snap.node_states.iter().map(|s| s.actual_inventory_start).collect(),
            demand: snap.node_states.iter().map(|s| s.predicted_demand.clone()).collect(),
            lead,
        };
        setup.validate()?;
        Ok(setup)
    }

    pub fn weeks(&self) -> usize {
        self.horizon_days / DAYS_PER_WEEK
    }

    pub fn validate(&self) -> Result<()> {
        let (n, h, w) = (self.nodes, self.horizon_days, self.weeks());
        if h == 0 || !h.is_multiple_of(DAYS_PER_WEEK) {
            return Err(GspError::InvalidArgument(format!(
                "horizon {h} is not a positive multiple of 7"
            )));
        }
        if self.start_inventory.len() != n || self.demand.len() != n || self.demand.iter().any(|d| d.len() != w) {
            return Err(GspError::InvalidArgument(
                "node vectors do not match the horizon".into(),
            ));
        }
        if self.lead.len() != self.edges.len() || self.lead.iter().any(|p| p.len() != h) {
            return Err(GspError::InvalidArgument(
                "lead-time distributions do not match the horizon".into(),
            ));
        }
        if self.edges.iter().any(|&(s, d)| s >= n || d >= n) {
            return Err(GspError::InvalidArgument("edge endpoint out of range".into()));
        }
        Ok(())
    }

    /// Copy with every quantity multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.start_inventory.iter_mut().for_each(|x| *x *= factor);
        s.demand.iter_mut().flatten().for_each(|x| *x *= factor);
        s
    }

    fn check_timelines(&self, timelines: &[Vec<f64>]) -> Result<()> {
        if timelines.len() != self.edges.len() || timelines.iter().any(|t| t.len() != self.horizon_days) {
            return Err(GspError::InvalidArgument(format!(
                "expected {} edge timelines of {} days",
                self.edges.len(),
                self.horizon_days
            )));
        }
        Ok(())
    }

    /// Share of a shipment on day `day` that arrives during week `week`.
    fn arrival_weight(&self, edge: usize, day: usize, week: usize) -> f64 {
        let (lo, hi) = (week * DAYS_PER_WEEK, (week + 1) * DAYS_PER_WEEK);
        if day >= hi {
            return 0.0;
        }
        let first = lo.saturating_sub(day);
        let last = hi - day;
        self.lead[edge][first.min(self.horizon_days)..last.min(self.horizon_days)]
            .iter()
            .sum()
    }
}

/// Node series from one pass, indexed `[node][week]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult {
    /// `weeks + 1` entries: start of each week, then the next start.
    pub inventory: Vec<Vec<f64>>,
    pub incoming: Vec<Vec<f64>>,
    /// Outgoing after adjustment.
    pub outgoing: Vec<Vec<f64>>,
    /// Outgoing before adjustment; constraint violations are measured on it.
    pub outgoing_requested: Vec<Vec<f64>>,
    pub capacity: Vec<Vec<f64>>,
    /// Scaling applied to each node's outgoing week (1 when unclipped).
    pub ratios: Vec<Vec<f64>>,
    /// Adjusted daily edge timelines.
    pub timelines: Vec<Vec<f64>>,
    pub clip_count: usize,
}

impl RolloutResult {
    /// Predicted inventory at the start of weeks `0..weeks`.
    pub fn weekly_inventory(&self, node: usize) -> &[f64] {
        let v = &self.inventory[node];
        &v[..v.len() - 1]
    }

    /// Largest `A - max(Y, 0)` over post-adjustment outgoing.
    pub fn max_capacity_excess(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (a_row, y_row) in self.outgoing.iter().zip(&self.capacity) {
            for (&a, &y) in a_row.iter().zip(y_row) {
                worst = worst.max(a - y.max(0.0));
            }
        }
        worst
    }

    /// Total requested outgoing above capacity, `sum (A_req - max(Y, 0))+`.
    pub fn violation_total(&self) -> f64 {
        self.outgoing_requested
            .iter()
            .zip(&self.capacity)
            .flat_map(|(a, y)| a.iter().zip(y).map(|(&a, &y)| (a - y.max(0.0)).max(0.0)))
            .sum()
    }
}

/// One weekly pass over `timelines`; `clip` enables the capacity adjustment.
pub fn rollout_pass(setup: &RolloutSetup, timelines: &[Vec<f64>], clip: bool) -> Result<RolloutResult> {
    setup.validate()?;
    setup.check_timelines(timelines)?;
    let (n, m, weeks) = (setup.nodes, setup.edges.len(), setup.weeks());
    let mut adjusted: Vec<Vec<f64>> = timelines.to_vec();
    let mut res = RolloutResult {
        inventory: vec![vec![0.0; weeks + 1]; n],
        incoming: vec![vec![0.0; weeks]; n],
        outgoing: vec![vec![0.0; weeks]; n],
        outgoing_requested: vec![vec![0.0; weeks]; n],
        capacity: vec![vec![0.0; weeks]; n],
        ratios: vec![vec![1.0; weeks]; n],
        timelines: Vec::new(),
        clip_count: 0,
    };
    for v in 0..n {
        res.inventory[v][0] = setup.start_inventory[v];
    }

    for w in 0..weeks {
        let days = w * DAYS_PER_WEEK..(w + 1) * DAYS_PER_WEEK;
        let mut incoming = vec![0.0; n];
        let mut requested = vec![0.0; n];
        for (e, &(src, dst)) in setup.edges.iter().enumerate() {
            // Days before week w are already adjusted in `adjusted`; days
            // from week w on still hold the input values.
            for day in 0..days.end {
                let q = adjusted[e][day];
                if q != 0.0 {
                    incoming[dst] += q * setup.arrival_weight(e, day, w);
                }
            }
            requested[src] += timelines[e][days.clone()].iter().sum::<f64>();
        }
        let mut ratio = vec![1.0; n];
        for v in 0..n {
            let cap = res.inventory[v][w] + incoming[v] - setup.demand[v][w];
            res.incoming[v][w] = incoming[v];
            res.capacity[v][w] = cap;
            res.outgoing_requested[v][w] = requested[v];
            if clip && requested[v] > cap.max(0.0) {
                ratio[v] = capacity_ratio(cap, requested[v]);
                res.clip_count += 1;
            }
            res.ratios[v][w] = ratio[v];
        }
        let mut outgoing = vec![0.0; n];
        for (e, &(src, _)) in setup.edges.iter().enumerate() {
            for day in days.clone() {
                adjusted[e][day] = timelines[e][day] * ratio[src];
                outgoing[src] += adjusted[e][day];
            }
        }
        for v in 0..n {
            res.outgoing[v][w] = outgoing[v];
            res.inventory[v][w + 1] = res.inventory[v][w] + res.incoming[v][w] - setup.demand[v][w] - outgoing[v];
        }
    }
    debug_assert_eq!(adjusted.len(), m);
    res.timelines = adjusted;
    Ok(res)
}

/// Convenience form of [`rollout_pass`] for a snapshot.
pub fn rollout_inventory(
    snap: &NetworkSnapshot,
    timelines: &[Vec<f64>],
    lead: &LeadTimeModel,
    clip: bool,
) -> Result<RolloutResult> {
    let setup = RolloutSetup::from_snapshot(snap, lead.for_snapshot(snap)?)?;
    rollout_pass(&setup, timelines, clip)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    /// Apply the capacity clip inside the iteration-0 rollout as well.
    pub iteration0_clip: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            epsilon: DEFAULT_EPSILON,
            max_iters: DEFAULT_MAX_ITERS,
            iteration0_clip: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConstrainedResult {
    /// Rollout of every iterate; entry 0 is the unconstrained prediction.
    pub iterations: Vec<RolloutResult>,
    /// Averaged relative change for iterations `1..`.
    pub rho: Vec<f64>,
    pub converged: bool,
}

impl ConstrainedResult {
    pub fn last(&self) -> &RolloutResult {
        self.iterations.last().expect("at least iteration 0")
    }

    pub fn first(&self) -> &RolloutResult {
        &self.iterations[0]
    }
}

/// Mean over edges of `|new - old| / |old|`; edges with `|old| = 0` count 0.
pub fn relative_change(old: &[Vec<f64>], new: &[Vec<f64>]) -> f64 {
    if old.is_empty() {
        return 0.0;
    }
    let total: f64 = old
        .iter()
        .zip(new)
        .map(|(o, n)| {
            let norm = o.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let diff = o.iter().zip(n).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            diff / norm
        })
        .sum();
    total / old.len() as f64
}

/// Iterates clipped passes from the raw timelines until the averaged relative
/// change drops below `epsilon` or `max_iters` passes have run.
/// `max_iters = 0` returns iteration 0 only.
pub fn constrained_inference(
    setup: &RolloutSetup,
    timelines: &[Vec<f64>],
    config: &InferenceConfig,
) -> Result<ConstrainedResult> {
    if !(config.epsilon > 0.0) {
        return Err(GspError::Config("epsilon must be positive".into()));
    }
    let first = rollout_pass(setup, timelines, config.iteration0_clip)?;
    let mut iterations = vec![first];
    let mut rho = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iters {
        let prev = &iterations.last().expect("non-empty").timelines;
        let next = rollout_pass(setup, prev, true)?;
        let change = relative_change(prev, &next.timelines);
        rho.push(change);
        iterations.push(next);
        if change < config.epsilon {
            converged = true;
            break;
        }
    }
    Ok(ConstrainedResult {
        iterations,
        rho,
        converged,
    })
}

/// Tape outputs of a differentiable pass.
pub struct TapeRollout {
    /// `[nodes, weeks]` inventory at the start of each week.
    pub inventory: Var,
    /// `[edges, horizon]` adjusted timelines.
    pub timelines: Var,
}

/// Constant operators of a differentiable pass, reusable across tapes.
#[derive(Clone, Debug)]
pub struct TapeRolloutPlan {
    nodes: usize,
    edges: usize,
    weeks: usize,
    start: Tensor,
    demand: Vec<Tensor>,
    src: Arc<Vec<usize>>,
    week_slices: Vec<Arc<SparseMap>>,
    /// `receive[j][w]` maps adjusted week `j` of every edge into week-`w`
    /// arrivals per node.
    receive: Vec<Vec<Arc<SparseMap>>>,
    outgoing: Arc<SparseMap>,
}

impl TapeRolloutPlan {
    pub fn new(setup: &RolloutSetup) -> Result<Self> {
        setup.validate()?;
        let (n, m, weeks, h) = (setup.nodes, setup.edges.len(), setup.weeks(), setup.horizon_days);
        let mut week_slices = Vec::with_capacity(weeks);
        for w in 0..weeks {
            let mut map = SparseMap::new(m * h, m, DAYS_PER_WEEK);
            for e in 0..m {
                for d in 0..DAYS_PER_WEEK {
                    map.push(e * DAYS_PER_WEEK + d, e * h + w * DAYS_PER_WEEK + d, 1.0);
                }
            }
            week_slices.push(Arc::new(map));
        }
        let mut receive = Vec::with_capacity(weeks);
        for j in 0..weeks {
            let mut row = Vec::with_capacity(weeks);
            for w in 0..weeks {
                let mut map = SparseMap::new(m * DAYS_PER_WEEK, n, 1);
                if j <= w {
                    for (e, &(_, dst)) in setup.edges.iter().enumerate() {
                        for d in 0..DAYS_PER_WEEK {
                            let weight = setup.arrival_weight(e, j * DAYS_PER_WEEK + d, w);
                            map.push(dst, e * DAYS_PER_WEEK + d, weight);
                        }
                    }
                }
                row.push(Arc::new(map));
            }
            receive.push(row);
        }
        let mut outgoing = SparseMap::new(m * DAYS_PER_WEEK, n, 1);
        for (e, &(src, _)) in setup.edges.iter().enumerate() {
            for d in 0..DAYS_PER_WEEK {
                outgoing.push(src, e * DAYS_PER_WEEK + d, 1.0);
            }
        }
        let demand = (0..weeks)
            .map(|w| Tensor::column(setup.demand.iter().map(|d| d[w]).collect()))
            .collect();
        Ok(TapeRolloutPlan {
            nodes: n,
            edges: m,
            weeks,
            start: Tensor::column(setup.start_inventory.clone()),
            demand,
            src: Arc::new(setup.edges.iter().map(|e| e.0).collect()),
            week_slices,
            receive,
            outgoing: Arc::new(outgoing),
        })
    }

    /// Differentiable pass over `timelines` (`[edges, horizon]`). Clipping
    /// uses `min(1, max(Y, 0) / A)`, whose gradient vanishes when `Y <= 0`.
    pub fn forward(&self, tape: &mut Tape, timelines: Var, clip: bool) -> Result<TapeRollout> {
        let mut inventory = tape.constant(self.start.clone());
        let mut inventories = Vec::with_capacity(self.weeks);
        let mut adjusted_weeks: Vec<Var> = Vec::with_capacity(self.weeks);
        for w in 0..self.weeks {
            inventories.push(inventory);
            let slice = tape.linear(timelines, self.week_slices[w].clone())?;
            let mut incoming = tape.linear(slice, self.receive[w][w].clone())?;
            for (j, &adj) in adjusted_weeks.iter().enumerate() {
                let part = tape.linear(adj, self.receive[j][w].clone())?;
                incoming = tape.add(incoming, part)?;
            }
            let demand = tape.constant(self.demand[w].clone());
            let gross = tape.add(inventory, incoming)?;
            let capacity = tape.sub(gross, demand)?;
            let requested = tape.linear(slice, self.outgoing.clone())?;
            let (adjusted, sent) = if clip {
                let ratio = tape.capacity_ratio(capacity, requested)?;
                let per_edge = tape.gather_rows(ratio, self.src.clone())?;
                let adjusted = tape.mul_col(slice, per_edge)?;
                (adjusted, tape.mul(requested, ratio)?)
            } else {
                (slice, requested)
            };
            adjusted_weeks.push(adjusted);
            inventory = tape.sub(capacity, sent)?;
        }
        let inventory = tape.concat_cols(&inventories)?;
        let timelines = tape.concat_cols(&adjusted_weeks)?;
        debug_assert_eq!(tape.value(timelines).rows(), self.edges);
        debug_assert_eq!(tape.value(inventory).rows(), self.nodes);
        Ok(TapeRollout { inventory, timelines })
    }
}
