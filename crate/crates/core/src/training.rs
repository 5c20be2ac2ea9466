//! SKU scaling, the combined supply/inventory loss, Adam and the training
//! loop with validation-based checkpoint selection.
//!
//! Each step runs the full differentiable pipeline on one snapshot: embedding,
//! soft Gumbel timing, aggregation into daily timelines, and one clipped
//! inventory pass. Losses are computed in SKU-scaled units.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{gumbel_noise, Tape, Tensor};
use crate::error::{GspError, Result};
use crate::event_model::{DeltaMode, DELTA_COUNT};
use crate::graph::NetworkSnapshot;
use crate::metrics::pairwise_sum;
use crate::model::{cumulative_operator, featurize, GspModel, ModelConfig, SnapshotBatch};
use crate::nn::Parameters;
use crate::rollout::{LeadTimeModel, RolloutSetup, TapeRolloutPlan};
use crate::timeline::cumulative;

pub const CHECKPOINT_FORMAT: &str = "gsp-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Per-SKU divisor: the largest planned event quantity seen in training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SkuScaler {
    scales: BTreeMap<String, f64>,
}

impl SkuScaler {
    pub fn fit(snaps: &[NetworkSnapshot]) -> Self {
        let mut scales: BTreeMap<String, f64> = BTreeMap::new();
        for s in snaps {
            let m = s.max_planned_quantity();
            let entry = scales.entry(s.graph.sku().to_string()).or_insert(0.0);
            *entry = entry.max(m);
        }
        scales.retain(|_, v| *v > 0.0);
        SkuScaler { scales }
    }

    /// Scale for a snapshot's SKU; unseen SKUs fall back to the snapshot's
    /// own largest planned quantity, then to 1.
    pub fn scale_for(&self, snap: &NetworkSnapshot) -> f64 {
        if let Some(&s) = self.scales.get(snap.graph.sku()) {
            return s;
        }
        let own = snap.max_planned_quantity();
        if own > 0.0 {
            own
        } else {
            1.0
        }
    }

    pub fn get(&self, sku: &str) -> Option<f64> {
        self.scales.get(sku).copied()
    }

    pub fn scale(&self, snap: &NetworkSnapshot, quantity: f64) -> f64 {
        quantity / self.scale_for(snap)
    }

    pub fn unscale(&self, snap: &NetworkSnapshot, quantity: f64) -> f64 {
        quantity * self.scale_for(snap)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the inventory term; `1 - alpha` weighs the supply term.
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    /// Capacity clip inside the training rollout.
    pub clip: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.5,
            learning_rate: 1e-4,
            epochs: 10,
            batch_size: 1,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
            clip: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(GspError::Config(format!("alpha {} is outside [0, 1]", self.alpha)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GspError::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(GspError::Config("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_epsilon > 0.0) {
            return Err(GspError::Config(
                "adam moments must lie in [0, 1) with positive epsilon".into(),
            ));
        }
        Ok(())
    }
}

fn squared_norm_sum(pred: &[Vec<f64>], actual: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != actual.len() || pred.iter().zip(actual).any(|(p, a)| p.len() != a.len()) {
        return Err(GspError::InvalidArgument("loss inputs do not align".into()));
    }
    let terms: Vec<f64> = pred
        .iter()
        .zip(actual)
        .flat_map(|(p, a)| p.iter().zip(a).map(|(x, y)| (x - y) * (x - y)))
        .collect();
    Ok(pairwise_sum(&terms))
}

/// `(1 - alpha) * mean_edges |Qhat - Q|^2 + alpha * mean_nodes |Ihat - I|^2`.
pub fn loss(
    alpha: f64,
    pred_cumulative: &[Vec<f64>],
    actual_cumulative: &[Vec<f64>],
    pred_inventory: &[Vec<f64>],
    actual_inventory: &[Vec<f64>],
) -> Result<f64> {
    let supply = squared_norm_sum(pred_cumulative, actual_cumulative)?;
    let inventory = squared_norm_sum(pred_inventory, actual_inventory)?;
    let mut total = 0.0;
    if alpha < 1.0 && !pred_cumulative.is_empty() {
        total += (1.0 - alpha) * supply / pred_cumulative.len() as f64;
    }
    if alpha > 0.0 && !pred_inventory.is_empty() {
        total += alpha * inventory / pred_inventory.len() as f64;
    }
    Ok(total)
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: &TrainConfig) -> Self {
        Adam {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.adam_epsilon,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(GspError::InvalidArgument("parameter and gradient counts differ".into()));
        }
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(GspError::shape("adam", p.shape(), g.shape()));
            }
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for (i, (w, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                *w -= self.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// A labeled snapshot prepared for repeated loss evaluation.
#[derive(Clone, Debug)]
pub struct TrainingExample {
    pub id: String,
    pub batch: SnapshotBatch,
    plan: TapeRolloutPlan,
    /// `[edges, horizon]` scaled cumulative actual outgoing.
    target_cumulative: Tensor,
    /// `[nodes, weeks]` scaled actual inventory.
    target_inventory: Tensor,
}

impl TrainingExample {
    pub fn new(snap: &NetworkSnapshot, scale: f64, lead: &LeadTimeModel, config: &ModelConfig) -> Result<Self> {
        let labels = snap.labels()?;
        let batch = featurize(snap, scale, config)?;
        let setup = RolloutSetup::from_snapshot(snap, lead.for_snapshot(snap)?)?.scaled(1.0 / scale);
        let cum: Vec<Vec<f64>> = labels
            .daily_outgoing
            .iter()
            .map(|d| cumulative(d).into_iter().map(|x| x / scale).collect())
            .collect();
        let inv: Vec<Vec<f64>> = labels
            .weekly_inventory
            .iter()
            .map(|w| w.iter().map(|x| x / scale).collect())
            .collect();
        Ok(TrainingExample {
            id: snap.id(),
            batch,
            plan: TapeRolloutPlan::new(&setup)?,
            target_cumulative: shaped(&cum, snap.graph.edge_count(), snap.horizon_days)?,
            target_inventory: shaped(&inv, snap.graph.node_count(), snap.horizon_weeks())?,
        })
    }

    pub fn edges(&self) -> usize {
        self.batch.edges
    }

    pub fn nodes(&self) -> usize {
        self.batch.nodes
    }
}

fn shaped(rows: &[Vec<f64>], n: usize, m: usize) -> Result<Tensor> {
    Tensor::matrix(n, m, rows.iter().flatten().copied().collect())
}

/// Squared-error sums of one example: `(supply, inventory)`.
pub struct ExampleLoss {
    pub supply: f64,
    pub inventory: f64,
}

/// Weights turning per-example squared-error sums into the batch loss.
#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub supply: f64,
    pub inventory: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, edges: usize, nodes: usize) -> Self {
        LossWeights {
            supply: if edges == 0 { 0.0 } else { (1.0 - alpha) / edges as f64 },
            inventory: if nodes == 0 { 0.0 } else { alpha / nodes as f64 },
        }
    }
}

/// Builds the loss of `example` on `tape`; returns the scalar loss var and the
/// raw squared-error sums.
pub fn example_loss_on_tape(
    tape: &mut Tape,
    vars: &crate::model::ModelVars,
    example: &TrainingExample,
    weights: LossWeights,
    mode: DeltaMode,
    noise: Option<&Tensor>,
    clip: bool,
) -> Result<(crate::autodiff::Var, ExampleLoss)> {
    let out = vars.forward(tape, &example.batch, mode, noise)?;
    let upper = tape.constant(cumulative_operator(example.batch.horizon_days));
    let cum = tape.matmul(out.daily, upper)?;
    let target_cum = tape.constant(example.target_cumulative.clone());
    let supply = tape.squared_error(cum, target_cum)?;
    let rollout = example.plan.forward(tape, out.daily, clip)?;
    let target_inv = tape.constant(example.target_inventory.clone());
    let inventory = tape.squared_error(rollout.inventory, target_inv)?;
    let a = tape.scale(supply, weights.supply);
    let b = tape.scale(inventory, weights.inventory);
    let total = tape.add(a, b)?;
    let sums = ExampleLoss {
        supply: tape.value(supply).item(),
        inventory: tape.value(inventory).item(),
    };
    Ok((total, sums))
}

/// Dataset loss with noise-free expected timing, as used for validation.
pub fn evaluate_loss(model: &GspModel, examples: &[TrainingExample], alpha: f64, clip: bool) -> Result<f64> {
    if examples.is_empty() {
        return Err(GspError::InvalidArgument("loss over an empty dataset".into()));
    }
    let sums: Vec<(f64, f64)> = examples
        .par_iter()
        .map(|ex| {
            let mut tape = Tape::new();
            let vars = model.register(&mut tape);
            let (_, l) = example_loss_on_tape(
                &mut tape,
                &vars,
                ex,
                LossWeights::new(alpha, 1, 1),
                DeltaMode::Expected,
                None,
                clip,
            )?;
            Ok((l.supply, l.inventory))
        })
        .collect::<Result<_>>()?;
    let edges: usize = examples.iter().map(TrainingExample::edges).sum();
    let nodes: usize = examples.iter().map(TrainingExample::nodes).sum();
    let w = LossWeights::new(alpha, edges, nodes);
    let supply: Vec<f64> = sums.iter().map(|s| s.0).collect();
    let inventory: Vec<f64> = sums.iter().map(|s| s.1).collect();
    Ok(w.supply * pairwise_sum(&supply) + w.inventory * pairwise_sum(&inventory))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss (training loss
    /// when no validation set is given).
    pub model: GspModel,
    pub scaler: SkuScaler,
    pub curve: Vec<EpochLoss>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        Checkpoint::new(&self.model, &self.scaler, Some(config.clone()), Some(self.best_epoch))
    }
}

/// Trains `model` on labeled snapshots with soft Gumbel timing and a clipped
/// rollout, one Adam step per batch, and keeps the best validation epoch.
pub fn train(
    mut model: GspModel,
    train_set: &[NetworkSnapshot],
    validation_set: &[NetworkSnapshot],
    lead: &LeadTimeModel,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(GspError::InvalidArgument("training set is empty".into()));
    }
    let scaler = SkuScaler::fit(train_set);
    let prepare = |snaps: &[NetworkSnapshot]| -> Result<Vec<TrainingExample>> {
        snaps
            .par_iter()
            .map(|s| TrainingExample::new(s, scaler.scale_for(s), lead, &model.config))
            .collect()
    };
    let train_examples = prepare(train_set)?;
    let validation_examples = prepare(validation_set)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config);
    let mut order: Vec<usize> = (0..train_examples.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, GspModel)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut supply_sum = Vec::with_capacity(order.len());
        let mut inventory_sum = Vec::with_capacity(order.len());
        for chunk in order.chunks(config.batch_size) {
            let edges: usize = chunk.iter().map(|&i| train_examples[i].edges()).sum();
            let nodes: usize = chunk.iter().map(|&i| train_examples[i].nodes()).sum();
            let weights = LossWeights::new(config.alpha, edges, nodes);
            let mut grads: Option<Vec<Tensor>> = None;
            for &i in chunk {
                let ex = &train_examples[i];
                let noise = gumbel_noise(ex.batch.events.len(), DELTA_COUNT, &mut rng);
                let mut tape = Tape::new();
                let vars = model.register(&mut tape);
                let (total, sums) = example_loss_on_tape(
                    &mut tape,
                    &vars,
                    ex,
                    weights,
                    DeltaMode::Soft,
                    Some(&noise),
                    config.clip,
                )?;
                let value = tape.value(total).item();
                if !value.is_finite() {
                    return Err(GspError::Diverged {
                        snapshot: ex.id.clone(),
                        loss: value,
                    });
                }
                supply_sum.push(sums.supply);
                inventory_sum.push(sums.inventory);
                let g = tape.backward(total)?;
                let example_grads: Vec<Tensor> = vars.vars().into_iter().map(|v| g.wrt(v)).collect();
                if example_grads.iter().any(|t| !t.is_finite()) {
                    return Err(GspError::Diverged {
                        snapshot: ex.id.clone(),
                        loss: value,
                    });
                }
                match grads.as_mut() {
                    None => grads = Some(example_grads),
                    Some(acc) => acc.iter_mut().zip(&example_grads).for_each(|(a, b)| a.add_assign(b)),
                }
            }
            if let Some(g) = grads {
                adam.step(model.params_mut(), &g)?;
            }
        }
        let edges: usize = train_examples.iter().map(TrainingExample::edges).sum();
        let nodes: usize = train_examples.iter().map(TrainingExample::nodes).sum();
        let w = LossWeights::new(config.alpha, edges, nodes);
        let train_loss = w.supply * pairwise_sum(&supply_sum) + w.inventory * pairwise_sum(&inventory_sum);
        let validation_loss = if validation_examples.is_empty() {
            None
        } else {
            Some(evaluate_loss(&model, &validation_examples, config.alpha, config.clip)?)
        };
        let score = validation_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, model.clone()));
        }
        curve.push(EpochLoss {
            epoch,
            train_loss,
            validation_loss,
        });
    }
    let (best_epoch, best_model) = match best {
        Some((_, e, m)) => (e, m),
        None => (0, model),
    };
    Ok(TrainOutcome {
        model: best_model,
        scaler,
        curve,
        best_epoch,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Serialized model: configuration, named parameters and SKU scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    pub training: Option<TrainConfig>,
    pub best_epoch: Option<usize>,
    pub scaler: SkuScaler,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(model: &GspModel, scaler: &SkuScaler, training: Option<TrainConfig>, best_epoch: Option<usize>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            model: model.config.clone(),
            training,
            best_epoch,
            scaler: scaler.clone(),
            tensors: model
                .params()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model, checking every tensor name and shape.
    pub fn to_model(&self) -> Result<GspModel> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(GspError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let mut model = GspModel::new(self.model.clone(), 0)?;
        let expected: Vec<(String, Vec<usize>)> = model
            .params()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if expected.len() != self.tensors.len() {
            return Err(GspError::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), slot) in expected.iter().zip(model.params_mut()) {
            let stored = self
                .tensors
                .iter()
                .find(|t| &t.name == name)
                .ok_or_else(|| GspError::Checkpoint(format!("missing tensor {name}")))?;
            if &stored.shape != shape {
                return Err(GspError::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    stored.shape
                )));
            }
            *slot = Tensor::new(stored.shape.clone(), stored.data.clone())?;
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
