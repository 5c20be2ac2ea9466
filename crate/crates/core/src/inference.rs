//! Monte-Carlo prediction: hard Gumbel samples of every event's timing,
//! each rolled through constrained inference, averaged elementwise.
//!
//! Sample `k` of snapshot `s` draws from `ChaCha8Rng::seed_from_u64(seed)`
//! on stream `(s << 32) | k`, so results do not depend on thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::sample_category;
use crate::error::{GspError, Result};
use crate::event_model::{feasible_index, EventPrediction, DELTA_COUNT};
use crate::graph::NetworkSnapshot;
use crate::model::{featurize, EventScores, GspModel, SnapshotBatch};
use crate::rollout::{constrained_inference, ConstrainedResult, InferenceConfig, LeadTimeModel, RolloutSetup};

pub const DEFAULT_MC_SAMPLES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    pub inference: InferenceConfig,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            samples: DEFAULT_MC_SAMPLES,
            seed: 0,
            inference: InferenceConfig::default(),
        }
    }
}

fn sample_rng(seed: u64, snapshot_index: usize, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((snapshot_index as u64) << 32) | sample as u64);
    rng
}

/// One hard sample of every event's timing, as one-hot rows with
/// infeasible draws folded onto `delta = 0`.
pub fn sample_deltas(batch: &SnapshotBatch, scores: &EventScores, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut rows = vec![0.0; batch.events.len() * DELTA_COUNT];
    for (k, slot) in batch.events.iter().enumerate() {
        let j = feasible_index(sample_category(&scores.logits[k], rng), slot.planned.offset);
        rows[k * DELTA_COUNT + j] = 1.0;
    }
    rows
}

/// Raw (unconstrained) daily timelines of `samples` hard draws.
pub fn sample_timelines(
    batch: &SnapshotBatch,
    scores: &EventScores,
    samples: usize,
    seed: u64,
    snapshot_index: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = sample_rng(seed, snapshot_index, k);
            batch.place(&scores.multiplier, &sample_deltas(batch, scores, &mut rng))
        })
        .collect()
}

/// Elementwise mean of equally shaped timeline sets.
pub fn mean_timelines(sets: &[&[Vec<f64>]]) -> Vec<Vec<f64>> {
    let Some(first) = sets.first() else {
        return Vec::new();
    };
    let n = sets.len() as f64;
    let mut mean: Vec<Vec<f64>> = first.iter().map(|t| vec![0.0; t.len()]).collect();
    for set in sets {
        for (m, t) in mean.iter_mut().zip(set.iter()) {
            for (a, b) in m.iter_mut().zip(t) {
                *a += b;
            }
        }
    }
    mean.iter_mut().flatten().for_each(|x| *x /= n);
    mean
}

#[derive(Clone, Debug)]
pub struct McPrediction {
    pub id: String,
    /// Noise-free per-edge event predictions.
    pub expected: Vec<Vec<EventPrediction>>,
    /// Per sample: constrained inference from that sample's raw timelines.
    pub samples: Vec<ConstrainedResult>,
    /// Mean of the samples' unconstrained timelines.
    pub raw_mean: Vec<Vec<f64>>,
    /// Mean of the samples' final timelines.
    pub mean: Vec<Vec<f64>>,
}

impl McPrediction {
    pub fn converged_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 1.0;
        }
        self.samples.iter().filter(|s| s.converged).count() as f64 / self.samples.len() as f64
    }
}

/// Draws `config.samples` hard predictions for `snap` and runs constrained
/// inference on each.
pub fn mc_predict(
    model: &GspModel,
    snap: &NetworkSnapshot,
    scale: f64,
    lead: &LeadTimeModel,
    config: &McConfig,
    snapshot_index: usize,
) -> Result<McPrediction> {
    if config.samples == 0 {
        return Err(GspError::Config("at least one Monte-Carlo sample is required".into()));
    }
    let batch = featurize(snap, scale, &model.config)?;
    let scores = model.score(&batch)?;
    let expected = model.predict_expected(&batch)?;
    let setup = RolloutSetup::from_snapshot(snap, lead.for_snapshot(snap)?)?;
    let raw = sample_timelines(&batch, &scores, config.samples, config.seed, snapshot_index)?;
    let samples: Vec<ConstrainedResult> = raw
        .par_iter()
        .map(|t| constrained_inference(&setup, t, &config.inference))
        .collect::<Result<_>>()?;
    let raw_refs: Vec<&[Vec<f64>]> = raw.iter().map(Vec::as_slice).collect();
    let final_refs: Vec<&[Vec<f64>]> = samples.iter().map(|s| s.last().timelines.as_slice()).collect();
    Ok(McPrediction {
        id: snap.id(),
        expected,
        raw_mean: mean_timelines(&raw_refs),
        mean: mean_timelines(&final_refs),
        samples,
    })
}
