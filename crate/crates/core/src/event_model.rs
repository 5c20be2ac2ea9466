//! Per-event heads: a quantity multiplier in `(0, 2]` and a categorical
//! timing offset over `-7..=7` days, both read from the pair of endpoint
//! embeddings.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{gumbel_softmax, sigmoid, softmax, Axis, Tape, Tensor, Var};
use crate::error::{GspError, Result};
use crate::graph::PlannedEvent;
use crate::nn::{Mlp, MlpVars, Parameters};

pub const DELTA_MIN: i32 = -7;
pub const DELTA_MAX: i32 = 7;
pub const DELTA_COUNT: usize = (DELTA_MAX - DELTA_MIN + 1) as usize;
/// Column of `delta = 0` in a logit or probability row.
pub const ZERO_DELTA: usize = (-DELTA_MIN) as usize;
pub const MAX_MULTIPLIER: f64 = 2.0;

/// Probabilities over `delta in -7..=7`, stored in increasing `delta` order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaDistribution {
    probs: [f64; DELTA_COUNT],
}

impl DeltaDistribution {
    pub fn new(probs: [f64; DELTA_COUNT]) -> Result<Self> {
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(GspError::InvalidArgument(
                "delta probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(GspError::InvalidArgument(format!("delta probabilities sum to {total}")));
        }
        Ok(DeltaDistribution { probs })
    }

    pub fn from_slice(probs: &[f64]) -> Result<Self> {
        let arr: [f64; DELTA_COUNT] = probs.try_into().map_err(|_| {
            GspError::InvalidArgument(format!(
                "expected {DELTA_COUNT} delta probabilities, got {}",
                probs.len()
            ))
        })?;
        DeltaDistribution::new(arr)
    }

    pub fn one_hot(delta: i32) -> Self {
        let mut probs = [0.0; DELTA_COUNT];
        probs[Self::index_of(delta)] = 1.0;
        DeltaDistribution { probs }
    }

    pub fn uniform() -> Self {
        DeltaDistribution {
            probs: [1.0 / DELTA_COUNT as f64; DELTA_COUNT],
        }
    }

    pub fn index_of(delta: i32) -> usize {
        assert!((DELTA_MIN..=DELTA_MAX).contains(&delta), "delta {delta} outside -7..=7");
        (delta - DELTA_MIN) as usize
    }

    pub fn delta_at(index: usize) -> i32 {
        index as i32 + DELTA_MIN
    }

    pub fn prob(&self, delta: i32) -> f64 {
        self.probs[Self::index_of(delta)]
    }

    pub fn probs(&self) -> &[f64; DELTA_COUNT] {
        &self.probs
    }

    /// `(delta, probability)` pairs in increasing `delta` order.
    pub fn iter(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.probs.iter().enumerate().map(|(i, &p)| (Self::delta_at(i), p))
    }

    /// Moves all mass with `tau + delta < 0` onto `delta = 0`.
    pub fn redistribute_infeasible(&self, tau: usize) -> Self {
        let mut probs = self.probs;
        let mut moved = 0.0;
        for (i, p) in probs.iter_mut().enumerate() {
            if (Self::delta_at(i) as i64) < -(tau as i64) {
                moved += *p;
                *p = 0.0;
            }
        }
        probs[ZERO_DELTA] += moved;
        DeltaDistribution { probs }
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(d, p)| d as f64 * p).sum()
    }
}

/// Free-function form of [`DeltaDistribution::redistribute_infeasible`].
pub fn redistribute_infeasible(d: &DeltaDistribution, tau: usize) -> DeltaDistribution {
    d.redistribute_infeasible(tau)
}

/// Column of the feasible delta a categorical draw `index` maps to once
/// infeasible offsets are folded onto `delta = 0`.
pub fn feasible_index(index: usize, tau: usize) -> usize {
    if (DeltaDistribution::delta_at(index) as i64) < -(tau as i64) {
        ZERO_DELTA
    } else {
        index
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventPrediction {
    pub multiplier: f64,
    pub delta: DeltaDistribution,
    pub planned: PlannedEvent,
}

/// How the timing head turns logits into a distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMode {
    /// Relaxed Gumbel-Softmax sample (training).
    Soft,
    /// One-hot Gumbel sample with a straight-through gradient (inference).
    Hard,
    /// Noise-free softmax of the logits: the model's categorical itself.
    Expected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub rate_hidden: Vec<usize>,
    pub delta_hidden: Vec<usize>,
    pub temperature: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            rate_hidden: vec![64, 32, 16],
            delta_hidden: vec![15],
            temperature: 1.0,
        }
    }
}

/// The two event heads. Both read `[u_src || u_dst]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventHeads {
    pub rate: Mlp,
    pub delta: Mlp,
    pub temperature: f64,
}

pub struct EventHeadVars {
    rate: MlpVars,
    delta: MlpVars,
    temperature: f64,
}

/// Tape outputs of the heads for a batch of event rows.
pub struct HeadOutputs {
    /// `[events, 1]`, each in `(0, 2]`.
    pub multiplier: Var,
    /// `[events, 15]` raw timing logits.
    pub logits: Var,
    /// `[events, 15]` timing distribution after the configured mode.
    pub delta: Var,
}

impl EventHeads {
    pub fn new<R: Rng + ?Sized>(embedding_dim: usize, config: &HeadConfig, rng: &mut R) -> Self {
        EventHeads {
            rate: Mlp::new(2 * embedding_dim, &config.rate_hidden, 1, rng),
            delta: Mlp::new(2 * embedding_dim, &config.delta_hidden, DELTA_COUNT, rng),
            temperature: config.temperature,
        }
    }

    pub fn pair_dim(&self) -> usize {
        self.rate.input_dim()
    }

    pub fn register(&self, tape: &mut Tape) -> EventHeadVars {
        EventHeadVars {
            rate: self.rate.register(tape),
            delta: self.delta.register(tape),
            temperature: self.temperature,
        }
    }
}

impl Parameters for EventHeads {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let rate = self.rate.params().into_iter().map(|(n, t)| (format!("rate.{n}"), t));
        let delta = self.delta.params().into_iter().map(|(n, t)| (format!("delta.{n}"), t));
        rate.chain(delta).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.rate.params_mut();
        out.extend(self.delta.params_mut());
        out
    }
}

impl EventHeadVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.rate.vars();
        v.extend(self.delta.vars());
        v
    }

    /// Runs both heads on `pairs` (`[events, 2 * embedding]`). `noise`
    /// supplies Gumbel noise for the soft and hard modes.
    pub fn forward(&self, tape: &mut Tape, pairs: Var, mode: DeltaMode, noise: Option<&Tensor>) -> Result<HeadOutputs> {
        let rate_logit = self.rate.forward(tape, pairs)?;
        let s = tape.sigmoid(rate_logit);
        let multiplier = tape.scale(s, MAX_MULTIPLIER);
        let logits = self.delta.forward(tape, pairs)?;
        let delta = match mode {
            DeltaMode::Expected => tape.softmax(logits, Axis::Cols),
            DeltaMode::Soft | DeltaMode::Hard => {
                let noise =
                    noise.ok_or_else(|| GspError::InvalidArgument("sampling mode needs Gumbel noise".into()))?;
                crate::autodiff::gumbel_softmax_with_noise(
                    tape,
                    logits,
                    self.temperature,
                    mode == DeltaMode::Hard,
                    noise,
                )?
            }
        };
        Ok(HeadOutputs {
            multiplier,
            logits,
            delta,
        })
    }
}

/// Predicts one event from the endpoint embeddings of its edge. The timing
/// distribution is already redistributed for the planned offset.
pub fn predict_event<R: Rng + ?Sized>(
    source_embedding: &[f64],
    dest_embedding: &[f64],
    planned: PlannedEvent,
    heads: &EventHeads,
    mode: DeltaMode,
    rng: &mut R,
) -> Result<EventPrediction> {
    let mut pair = source_embedding.to_vec();
    pair.extend_from_slice(dest_embedding);
    if pair.len() != heads.pair_dim() {
        return Err(GspError::shape("predict_event", &[pair.len()], &[heads.pair_dim()]));
    }
    let mut tape = Tape::new();
    let vars = heads.register(&mut tape);
    let x = tape.constant(Tensor::row(pair));
    let rate_logit = vars.rate.forward(&mut tape, x)?;
    let multiplier = MAX_MULTIPLIER * sigmoid(tape.value(rate_logit).item());
    let logits_var = vars.delta.forward(&mut tape, x)?;
    let probs = match mode {
        DeltaMode::Expected => softmax(tape.value(logits_var).data()),
        DeltaMode::Soft | DeltaMode::Hard => {
            let y = gumbel_softmax(&mut tape, logits_var, heads.temperature, mode == DeltaMode::Hard, rng)?;
            tape.value(y).data().to_vec()
        }
    };
    let delta = DeltaDistribution::from_slice(&probs)?.redistribute_infeasible(planned.offset);
    Ok(EventPrediction {
        multiplier,
        delta,
        planned,
    })
}
