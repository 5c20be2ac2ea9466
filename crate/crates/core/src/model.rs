//! The event prediction model: featurization of a snapshot, the two-direction
//! embedding, the event heads and differentiable aggregation into daily
//! edge timelines.
//!
//! Planned event `i` of every edge shares one set of edge features, so the
//! embedding runs once per event slot. All slots are batched as a disjoint
//! union of graph copies: slot `s` owns node rows `s * nodes..(s + 1) * nodes`
//! and edge rows `s * edges..(s + 1) * edges`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax, SparseMap, Tape, Tensor, Var};
use crate::error::{GspError, Result};
use crate::event_model::{
    feasible_index, DeltaDistribution, DeltaMode, EventHeadVars, EventHeads, EventPrediction, HeadConfig, DELTA_COUNT,
};
use crate::gnn::{embed_on_tape, stack_vars, GatConfig, GatLayerVars, GatStack, GraphIndex};
use crate::graph::{NetworkSnapshot, PlannedEvent};
use crate::nn::Parameters;
use crate::timeline::DAYS_PER_WEEK;

pub const DEFAULT_HISTORY_DEPTH: usize = 4;
pub const DEFAULT_HORIZON_DAYS: usize = 28;
/// Actual start plus planned inventory, demand, planned incoming, planned outgoing.
pub const NODE_SERIES: usize = 4;
/// Offset, quantity, presence.
pub const EVENT_FEATURES: usize = 3;
/// Age, quantity, presence.
pub const HISTORY_FEATURES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub gat: GatConfig,
    pub heads: HeadConfig,
    pub history_depth: usize,
    pub horizon_days: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            gat: GatConfig::default(),
            heads: HeadConfig::default(),
            history_depth: DEFAULT_HISTORY_DEPTH,
            horizon_days: DEFAULT_HORIZON_DAYS,
        }
    }
}

impl ModelConfig {
    pub fn horizon_weeks(&self) -> usize {
        self.horizon_days / DAYS_PER_WEEK
    }

    pub fn node_dim(&self) -> usize {
        NODE_SERIES * self.horizon_weeks()
    }

    pub fn edge_dim(&self) -> usize {
        EVENT_FEATURES + HISTORY_FEATURES * self.history_depth
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_days == 0 || !self.horizon_days.is_multiple_of(DAYS_PER_WEEK) {
            return Err(GspError::Config(format!(
                "horizon_days {} is not a positive multiple of 7",
                self.horizon_days
            )));
        }
        if !(self.heads.temperature > 0.0) {
            return Err(GspError::Config("gumbel temperature must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GspModel {
    pub config: ModelConfig,
    pub forward: GatStack,
    pub backward: GatStack,
    pub heads: EventHeads,
}

impl GspModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let forward = GatStack::new(config.node_dim(), config.edge_dim(), &config.gat, &mut rng)?;
        let backward = GatStack::new(config.node_dim(), config.edge_dim(), &config.gat, &mut rng)?;
        let heads = EventHeads::new(
            forward.embedding_dim() + backward.embedding_dim(),
            &config.heads,
            &mut rng,
        );
        Ok(GspModel {
            config,
            forward,
            backward,
            heads,
        })
    }

    pub fn register(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            forward: self.forward.register(tape),
            backward: self.backward.register(tape),
            heads: self.heads.register(tape),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Noise-free multipliers and timing logits for every planned event.
    pub fn score(&self, batch: &SnapshotBatch) -> Result<EventScores> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let out = vars.forward(&mut tape, batch, DeltaMode::Expected, None)?;
        let Some(out) = out.events else {
            return Ok(EventScores {
                multiplier: Vec::new(),
                logits: Vec::new(),
            });
        };
        let multiplier = tape.value(out.multiplier).data().to_vec();
        let logits = tape.value(out.logits);
        let logits = (0..logits.rows())
            .map(|r| {
                let mut row = [0.0; DELTA_COUNT];
                row.copy_from_slice(logits.row_slice(r));
                row
            })
            .collect();
        Ok(EventScores { multiplier, logits })
    }

    /// Expected-mode prediction per edge: softmax timing distribution with
    /// infeasible offsets folded onto `delta = 0`.
    pub fn predict_expected(&self, batch: &SnapshotBatch) -> Result<Vec<Vec<EventPrediction>>> {
        let scores = self.score(batch)?;
        let mut out = vec![Vec::new(); batch.edges];
        for (k, slot) in batch.events.iter().enumerate() {
            let probs = softmax(&scores.logits[k]);
            let delta = DeltaDistribution::from_slice(&probs)?.redistribute_infeasible(slot.planned.offset);
            out[slot.edge].push(EventPrediction {
                multiplier: scores.multiplier[k],
                delta,
                planned: slot.planned,
            });
        }
        Ok(out)
    }
}

impl Parameters for GspModel {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let fwd = self
            .forward
            .params()
            .into_iter()
            .map(|(n, t)| (format!("forward.{n}"), t));
        let bwd = self
            .backward
            .params()
            .into_iter()
            .map(|(n, t)| (format!("backward.{n}"), t));
        let heads = self.heads.params().into_iter().map(|(n, t)| (format!("heads.{n}"), t));
        fwd.chain(bwd).chain(heads).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.forward.params_mut();
        out.extend(self.backward.params_mut());
        out.extend(self.heads.params_mut());
        out
    }
}

/// Raw head outputs per planned event, in [`SnapshotBatch::events`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct EventScores {
    pub multiplier: Vec<f64>,
    pub logits: Vec<[f64; DELTA_COUNT]>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventSlot {
    pub edge: usize,
    /// Position of the event in its edge's planned list.
    pub slot: usize,
    pub planned: PlannedEvent,
}

/// A featurized snapshot in scaled units.
#[derive(Clone, Debug)]
pub struct SnapshotBatch {
    pub scale: f64,
    pub nodes: usize,
    pub edges: usize,
    pub slots: usize,
    pub horizon_days: usize,
    pub node_features: Tensor,
    pub edge_features: Tensor,
    pub index: GraphIndex,
    pub events: Vec<EventSlot>,
    src_rows: Arc<Vec<usize>>,
    dst_rows: Arc<Vec<usize>>,
    /// `[events, 1]` planned quantities divided by the scale.
    amounts: Tensor,
    /// `[events, 15]` quantities onto `[edges, horizon]` days.
    placement: Arc<SparseMap>,
}

impl SnapshotBatch {
    /// Daily timelines in original units from per-event multipliers and
    /// sampled or expected timing distributions (rows of 15, already
    /// feasible or folded by the placement).
    pub fn place(&self, multiplier: &[f64], delta: &[f64]) -> Result<Vec<Vec<f64>>> {
        if multiplier.len() != self.events.len() || delta.len() != self.events.len() * DELTA_COUNT {
            return Err(GspError::shape(
                "place",
                &[multiplier.len(), delta.len()],
                &[self.events.len(), self.events.len() * DELTA_COUNT],
            ));
        }
        let mut weighted = Vec::with_capacity(delta.len());
        for (k, slot) in self.events.iter().enumerate() {
            let q = multiplier[k] * slot.planned.quantity;
            weighted.extend(delta[k * DELTA_COUNT..(k + 1) * DELTA_COUNT].iter().map(|p| p * q));
        }
        let flat = self.placement.apply(&weighted);
        Ok(flat
            .chunks(self.horizon_days.max(1))
            .map(<[f64]>::to_vec)
            .take(self.edges)
            .collect())
    }
}

/// Builds model inputs for `snap` with quantities divided by `scale`.
pub fn featurize(snap: &NetworkSnapshot, scale: f64, config: &ModelConfig) -> Result<SnapshotBatch> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(GspError::InvalidArgument(format!(
            "scale {scale} for {} is not positive",
            snap.id()
        )));
    }
    if snap.horizon_days != config.horizon_days {
        return Err(GspError::Snapshot {
            id: snap.id(),
            reason: format!(
                "horizon {} differs from the model's {}",
                snap.horizon_days, config.horizon_days
            ),
        });
    }
    let (n, m, h) = (snap.graph.node_count(), snap.graph.edge_count(), snap.horizon_days);
    let hf = h as f64;
    let slots = snap
        .edge_states
        .iter()
        .map(|e| e.planned.len())
        .max()
        .unwrap_or(0)
        .max(1);

    let mut node_rows = Vec::with_capacity(n);
    for s in &snap.node_states {
        let mut row = Vec::with_capacity(config.node_dim());
        row.push(s.actual_inventory_start / scale);
        row.extend(s.planned_inventory.iter().map(|x| x / scale));
        row.extend(s.predicted_demand.iter().map(|x| x / scale));
        row.extend(s.planned_incoming.iter().map(|x| x / scale));
        row.extend(s.planned_outgoing.iter().map(|x| x / scale));
        node_rows.push(row);
    }
    let node_block = Tensor::from_rows(&node_rows)?;
    if node_block.cols() != config.node_dim() {
        return Err(GspError::shape(
            "node features",
            node_block.shape(),
            &[n, config.node_dim()],
        ));
    }

    let history: Vec<Vec<f64>> = snap
        .edge_states
        .iter()
        .map(|edge| {
            let mut f = Vec::with_capacity(HISTORY_FEATURES * config.history_depth);
            for k in 0..config.history_depth {
                match edge.history.get(k) {
                    Some(r) => {
                        let age = (snap.prediction_date - r.date).num_days() as f64;
                        f.extend([age / hf, r.quantity / scale, 1.0]);
                    }
                    None => f.extend([0.0, 0.0, 0.0]),
                }
            }
            f
        })
        .collect();

    let mut node_data = Vec::with_capacity(slots * n * config.node_dim());
    let mut edge_data = Vec::with_capacity(slots * m * config.edge_dim());
    let mut union_edges = Vec::with_capacity(slots * m);
    for s in 0..slots {
        node_data.extend_from_slice(node_block.data());
        for (e, edge) in snap.edge_states.iter().enumerate() {
            match edge.planned.get(s) {
                Some(p) => edge_data.extend([p.offset as f64 / hf, p.quantity / scale, 1.0]),
                None => edge_data.extend([0.0, 0.0, 0.0]),
            }
            edge_data.extend_from_slice(&history[e]);
            let (src, dst) = snap.graph.edges()[e];
            union_edges.push((s * n + src, s * n + dst));
        }
    }

    let mut events = Vec::new();
    let mut src_rows = Vec::new();
    let mut dst_rows = Vec::new();
    for (e, edge) in snap.edge_states.iter().enumerate() {
        let (src, dst) = snap.graph.edges()[e];
        for (s, p) in edge.planned.iter().enumerate() {
            events.push(EventSlot {
                edge: e,
                slot: s,
                planned: *p,
            });
            src_rows.push(s * n + src);
            dst_rows.push(s * n + dst);
        }
    }

    let mut placement = SparseMap::new(events.len() * DELTA_COUNT, m, h);
    for (k, ev) in events.iter().enumerate() {
        let tau = ev.planned.offset;
        for j in 0..DELTA_COUNT {
            let day = tau as i64 + DeltaDistribution::delta_at(feasible_index(j, tau)) as i64;
            if (day as usize) < h {
                placement.push(ev.edge * h + day as usize, k * DELTA_COUNT + j, 1.0);
            }
        }
    }
    let amounts = Tensor::column(events.iter().map(|e| e.planned.quantity / scale).collect());

    Ok(SnapshotBatch {
        scale,
        nodes: n,
        edges: m,
        slots,
        horizon_days: h,
        node_features: Tensor::matrix(slots * n, config.node_dim(), node_data)?,
        edge_features: Tensor::matrix(slots * m, config.edge_dim(), edge_data)?,
        index: GraphIndex::new(slots * n, &union_edges),
        events,
        src_rows: Arc::new(src_rows),
        dst_rows: Arc::new(dst_rows),
        amounts,
        placement: Arc::new(placement),
    })
}

pub struct ModelVars {
    pub forward: Vec<GatLayerVars>,
    pub backward: Vec<GatLayerVars>,
    pub heads: EventHeadVars,
}

/// Per-event tape outputs.
pub struct EventOutputs {
    /// `[events, 1]`
    pub multiplier: Var,
    /// `[events, 15]`
    pub logits: Var,
    /// `[events, 15]`
    pub delta: Var,
}

pub struct ForwardOutputs {
    /// `[nodes * slots, 2B]`
    pub embedding: Var,
    /// `None` when the snapshot has no planned events.
    pub events: Option<EventOutputs>,
    /// `[edges, horizon]` daily outgoing in scaled units.
    pub daily: Var,
}

impl ModelVars {
    /// Parameter vars in [`Parameters`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut v = stack_vars(&self.forward);
        v.extend(stack_vars(&self.backward));
        v.extend(self.heads.vars());
        v
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        batch: &SnapshotBatch,
        mode: DeltaMode,
        noise: Option<&Tensor>,
    ) -> Result<ForwardOutputs> {
        let x = tape.constant(batch.node_features.clone());
        let e = tape.constant(batch.edge_features.clone());
        let embedding = embed_on_tape(tape, &self.forward, &self.backward, x, e, &batch.index)?;
        if batch.events.is_empty() {
            let daily = tape.constant(Tensor::zeros(batch.edges, batch.horizon_days));
            return Ok(ForwardOutputs {
                embedding,
                events: None,
                daily,
            });
        }
        let src = tape.gather_rows(embedding, batch.src_rows.clone())?;
        let dst = tape.gather_rows(embedding, batch.dst_rows.clone())?;
        let pairs = tape.concat_cols(&[src, dst])?;
        let heads = self.heads.forward(tape, pairs, mode, noise)?;
        let amounts = tape.constant(batch.amounts.clone());
        let quantity = tape.mul(heads.multiplier, amounts)?;
        let weighted = tape.mul_col(heads.delta, quantity)?;
        let daily = tape.linear(weighted, batch.placement.clone())?;
        Ok(ForwardOutputs {
            embedding,
            events: Some(EventOutputs {
                multiplier: heads.multiplier,
                logits: heads.logits,
                delta: heads.delta,
            }),
            daily,
        })
    }
}

/// `[horizon, horizon]` upper-triangular ones: `daily x U` is cumulative.
pub fn cumulative_operator(horizon: usize) -> Tensor {
    let mut data = vec![0.0; horizon * horizon];
    for d in 0..horizon {
        for h in d..horizon {
            data[d * horizon + h] = 1.0;
        }
    }
    Tensor::matrix(horizon, horizon, data).expect("square operator")
}

#[cfg(test)]
mod tests {
    use chrono::NaiveDate;

    use super::*;
    use crate::autodiff::gumbel_noise;
    use crate::graph::{EdgeState, NetworkGraph, NodeState, ShipmentRecord};
    use crate::timeline::{daily_vector, event_quantity_vector};

    fn small_config() -> ModelConfig {
        ModelConfig {
            gat: GatConfig {
                layer_widths: vec![6, 4],
                heads: 2,
                ..GatConfig::default()
            },
            heads: HeadConfig {
                rate_hidden: vec![5],
                delta_hidden: vec![6],
                temperature: 1.0,
            },
            history_depth: 2,
            horizon_days: 14,
        }
    }

    fn snapshot() -> NetworkSnapshot {
        let graph = NetworkGraph::new("sku", &["P", "D", "R"], &[("P", "D"), ("D", "R"), ("P", "R")]).unwrap();
        let date = NaiveDate::from_ymd_opt(2024, 1, 8).unwrap();
        let node = |inv: f64| NodeState {
            actual_inventory_start: inv,
            planned_inventory: vec![inv],
            predicted_demand: vec![3.0, 4.0],
            planned_incoming: vec![1.0, 2.0],
            planned_outgoing: vec![2.0, 1.0],
        };
        let edge = |planned: Vec<(usize, f64)>| EdgeState {
            planned: planned
                .into_iter()
                .map(|(offset, quantity)| PlannedEvent { offset, quantity })
                .collect(),
            history: vec![ShipmentRecord {
                date: date - chrono::Days::new(3),
                quantity: 8.0,
            }],
        };
        NetworkSnapshot::new(
            graph,
            date,
            14,
            vec![node(50.0), node(20.0), node(5.0)],
            vec![edge(vec![(0, 10.0), (9, 4.0)]), edge(vec![(3, 6.0)]), edge(vec![])],
            None,
            vec![vec![]; 3],
        )
        .unwrap()
    }

    #[test]
    fn feature_layout() {
        let cfg = small_config();
        let b = featurize(&snapshot(), 10.0, &cfg).unwrap();
        assert_eq!(b.slots, 2);
        assert_eq!(b.node_features.shape(), &[6, 8]);
        assert_eq!(b.edge_features.shape(), &[6, 9]);
        assert_eq!(b.node_features.row_slice(0)[..2], [5.0, 5.0]);
        assert_eq!(b.node_features.row_slice(3), b.node_features.row_slice(0));
        let first = b.edge_features.row_slice(0);
        assert_eq!(first, &[0.0, 1.0, 1.0, 3.0 / 14.0, 0.8, 1.0, 0.0, 0.0, 0.0]);
        let second_slot = b.edge_features.row_slice(3);
        assert_eq!(second_slot[..3], [9.0 / 14.0, 0.4, 1.0]);
        let absent = b.edge_features.row_slice(4);
        assert_eq!(absent[..3], [0.0, 0.0, 0.0]);
        assert_eq!(b.events.len(), 3);
        assert_eq!(*b.src_rows, vec![0, 3, 1]);
        assert_eq!(*b.dst_rows, vec![1, 4, 2]);
    }

    #[test]
    fn horizon_mismatch_and_bad_scale_are_errors() {
        let mut cfg = small_config();
        assert!(featurize(&snapshot(), 0.0, &cfg).is_err());
        cfg.horizon_days = 28;
        assert!(featurize(&snapshot(), 1.0, &cfg).is_err());
    }

    #[test]
    fn tape_daily_matches_event_aggregation() {
        let cfg = small_config();
        let model = GspModel::new(cfg.clone(), 7).unwrap();
        let snap = snapshot();
        let batch = featurize(&snap, 10.0, &cfg).unwrap();
        let mut tape = Tape::new();
        let vars = model.register(&mut tape);
        let out = vars.forward(&mut tape, &batch, DeltaMode::Expected, None).unwrap();
        let daily = tape.value(out.daily).clone();

        let preds = model.predict_expected(&batch).unwrap();
        for (e, events) in preds.iter().enumerate() {
            let vectors: Vec<Vec<f64>> = events.iter().map(|p| event_quantity_vector(p, 14)).collect();
            let expected = daily_vector(&vectors, 14);
            for (d, x) in expected.iter().enumerate() {
                assert!((daily.at(e, d) * 10.0 - x).abs() < 1e-9);
            }
        }
        assert!(preds[2].is_empty());
    }

    #[test]
    fn place_matches_tape_for_sampled_delta() {
        let cfg = small_config();
        let model = GspModel::new(cfg.clone(), 3).unwrap();
        let batch = featurize(&snapshot(), 10.0, &cfg).unwrap();
        let noise = gumbel_noise(3, DELTA_COUNT, &mut ChaCha8Rng::seed_from_u64(1));
        let mut tape = Tape::new();
        let vars = model.register(&mut tape);
        let out = vars.forward(&mut tape, &batch, DeltaMode::Hard, Some(&noise)).unwrap();
        let ev = out.events.unwrap();
        let placed = batch
            .place(tape.value(ev.multiplier).data(), tape.value(ev.delta).data())
            .unwrap();
        let daily = tape.value(out.daily);
        for (e, row) in placed.iter().enumerate() {
            for (d, x) in row.iter().enumerate() {
                assert!((daily.at(e, d) * 10.0 - x).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn parameters_round_trip_in_order() {
        let model = GspModel::new(small_config(), 1).unwrap();
        let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "forward.0.w_self");
        assert!(names.iter().any(|n| n == "heads.delta.1.bias"));
        let mut tape = Tape::new();
        let vars = model.register(&mut tape);
        let v = vars.vars();
        assert_eq!(v.len(), names.len());
        for ((_, t), var) in model.params().into_iter().zip(v) {
            assert_eq!(tape.value(var), t);
        }
        assert_eq!(model, GspModel::new(small_config(), 1).unwrap());
    }

    #[test]
    fn default_model_dimensions() {
        let model = GspModel::new(ModelConfig::default(), 0).unwrap();
        assert_eq!(model.config.node_dim(), 16);
        assert_eq!(model.config.edge_dim(), 15);
        assert_eq!(model.heads.pair_dim(), 128);
    }

    #[test]
    fn snapshot_without_events_gives_zero_timelines() {
        let mut snap = snapshot();
        for e in &mut snap.edge_states {
            e.planned.clear();
        }
        let cfg = small_config();
        let model = GspModel::new(cfg.clone(), 2).unwrap();
        let batch = featurize(&snap, 1.0, &cfg).unwrap();
        let mut tape = Tape::new();
        let vars = model.register(&mut tape);
        let out = vars.forward(&mut tape, &batch, DeltaMode::Soft, None).unwrap();
        assert!(out.events.is_none());
        assert!(tape.value(out.daily).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cumulative_operator_accumulates() {
        let u = cumulative_operator(3);
        let d = Tensor::row(vec![1.0, 2.0, 3.0]);
        assert_eq!(d.matmul(&u).unwrap().data(), &[1.0, 3.0, 6.0]);
    }
}
