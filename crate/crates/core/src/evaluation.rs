//! Predictor-agnostic forecasts and the metric report that scores them
//! against snapshot labels.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{croston_snapshot, planned_passthrough};
use crate::error::{GspError, Result};
use crate::event_model::{DeltaDistribution, EventPrediction};
use crate::graph::NetworkSnapshot;
use crate::inference::{mc_predict, McConfig, McPrediction};
use crate::metrics::{bias, generalized_smace, kappa, smace_daily, wmape, PenaltyFunction, TimingError};
use crate::model::GspModel;
use crate::rollout::{
    constrained_inference, rollout_pass, InferenceConfig, LeadTimeModel, RolloutResult, RolloutSetup,
};
use crate::training::SkuScaler;

/// One snapshot's prediction: daily edge timelines plus the weekly node
/// quantities a rollout of them produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    pub id: String,
    /// `[edge][day]`
    pub timelines: Vec<Vec<f64>>,
    /// `[node][week]`, predicted inventory at the start of each week.
    pub inventory: Vec<Vec<f64>>,
    /// `[node][week]`
    pub incoming: Vec<Vec<f64>>,
    /// `[node][week]`, after any capacity adjustment.
    pub outgoing: Vec<Vec<f64>>,
    /// `[node][week]`, outgoing before any capacity adjustment.
    pub requested: Vec<Vec<f64>>,
    /// `[node][week]`
    pub capacity: Vec<Vec<f64>>,
    /// Per edge, one prediction per planned event, when the predictor has them.
    pub events: Option<Vec<Vec<EventPrediction>>>,
}

impl Forecast {
    pub fn from_rollout(id: String, rollout: &RolloutResult, events: Option<Vec<Vec<EventPrediction>>>) -> Self {
        Forecast {
            id,
            timelines: rollout.timelines.clone(),
            inventory: (0..rollout.inventory.len())
                .map(|v| rollout.weekly_inventory(v).to_vec())
                .collect(),
            incoming: rollout.incoming.clone(),
            outgoing: rollout.outgoing.clone(),
            requested: rollout.outgoing_requested.clone(),
            capacity: rollout.capacity.clone(),
            events,
        }
    }

    /// `(A_req - max(Y, 0))+` per node-week.
    pub fn violations(&self) -> Vec<f64> {
        self.requested
            .iter()
            .zip(&self.capacity)
            .flat_map(|(a, y)| a.iter().zip(y).map(|(&a, &y)| (a - y.max(0.0)).max(0.0)))
            .collect()
    }
}

/// Rolls raw timelines through constrained inference and reports the final
/// iterate.
pub fn forecast_timelines(
    snap: &NetworkSnapshot,
    timelines: &[Vec<f64>],
    lead: &LeadTimeModel,
    inference: &InferenceConfig,
    events: Option<Vec<Vec<EventPrediction>>>,
) -> Result<Forecast> {
    let setup = RolloutSetup::from_snapshot(snap, lead.for_snapshot(snap)?)?;
    let result = constrained_inference(&setup, timelines, inference)?;
    Ok(Forecast::from_rollout(snap.id(), result.last(), events))
}

/// Planned passthrough with `r = 1` and certain `delta = 0` events.
pub fn passthrough_forecast(
    snap: &NetworkSnapshot,
    lead: &LeadTimeModel,
    inference: &InferenceConfig,
) -> Result<Forecast> {
    let events = snap
        .edge_states
        .iter()
        .map(|e| {
            e.planned
                .iter()
                .map(|&planned| EventPrediction {
                    multiplier: 1.0,
                    delta: DeltaDistribution::one_hot(0),
                    planned,
                })
                .collect()
        })
        .collect();
    forecast_timelines(snap, &planned_passthrough(snap), lead, inference, Some(events))
}

pub fn croston_forecast(
    snap: &NetworkSnapshot,
    alpha: f64,
    lookback_days: usize,
    lead: &LeadTimeModel,
    inference: &InferenceConfig,
) -> Result<Forecast> {
    let (timelines, _) = croston_snapshot(snap, alpha, lookback_days)?;
    forecast_timelines(snap, &timelines, lead, inference, None)
}

/// Reported GSP forecast: the mean of the samples' final iterates, rolled
/// once more with the capacity clip.
pub fn gsp_forecast(snap: &NetworkSnapshot, prediction: &McPrediction, lead: &LeadTimeModel) -> Result<Forecast> {
    let setup = RolloutSetup::from_snapshot(snap, lead.for_snapshot(snap)?)?;
    let rollout = rollout_pass(&setup, &prediction.mean, true)?;
    Ok(Forecast::from_rollout(
        snap.id(),
        &rollout,
        Some(prediction.expected.clone()),
    ))
}

/// Monte-Carlo predictions for every snapshot, in input order.
pub fn predict_all(
    model: &GspModel,
    scaler: &SkuScaler,
    snaps: &[NetworkSnapshot],
    lead: &LeadTimeModel,
    config: &McConfig,
) -> Result<Vec<McPrediction>> {
    snaps
        .par_iter()
        .enumerate()
        .map(|(i, s)| mc_predict(model, s, scaler.scale_for(s), lead, config, i))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub snapshots: usize,
    pub smace: f64,
    /// Absent when labels or predictions lack event-level matching.
    pub generalized_smace: Option<f64>,
    pub wmape: f64,
    pub kappa: f64,
    pub bias: f64,
}

impl MetricReport {
    /// `(name, value)` rows; missing values print as `NA`.
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        let fmt = |x: f64| format!("{x:.6}");
        vec![
            ("snapshots", self.snapshots.to_string()),
            ("smace", fmt(self.smace)),
            (
                "generalized_smace",
                self.generalized_smace.map_or_else(|| "NA".to_string(), fmt),
            ),
            ("wmape", fmt(self.wmape)),
            ("kappa", fmt(self.kappa)),
            ("bias", fmt(self.bias)),
        ]
    }

    pub fn to_table(&self) -> String {
        self.rows().iter().map(|(k, v)| format!("{k:<18} {v}\n")).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (k, v) in self.rows() {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }
}

fn check_forecast(snap: &NetworkSnapshot, f: &Forecast) -> Result<()> {
    let weeks = snap.horizon_weeks();
    let bad = |reason: String| Err(GspError::Snapshot { id: snap.id(), reason });
    if f.timelines.len() != snap.graph.edge_count() || f.timelines.iter().any(|t| t.len() != snap.horizon_days) {
        return bad("forecast timelines do not match the snapshot's edges and horizon".into());
    }
    for (name, m) in [
        ("inventory", &f.inventory),
        ("incoming", &f.incoming),
        ("outgoing", &f.outgoing),
        ("requested", &f.requested),
        ("capacity", &f.capacity),
    ] {
        if m.len() != snap.graph.node_count() || m.iter().any(|r| r.len() != weeks) {
            return bad(format!("forecast {name} does not match the snapshot's nodes and weeks"));
        }
    }
    if let Some(events) = &f.events {
        if events.len() != snap.edge_states.len()
            || events
                .iter()
                .zip(&snap.edge_states)
                .any(|(p, e)| p.len() != e.planned.len())
        {
            return bad("forecast events do not match the planned events".into());
        }
    }
    Ok(())
}

/// Scores `forecasts` against the labels of `snaps`, matched by snapshot id.
/// Generalized sMACE is reported when every snapshot has actual-to-plan
/// matching and every forecast carries events; actual events without a
/// matched plan are skipped.
pub fn evaluate(snaps: &[NetworkSnapshot], forecasts: &[Forecast], penalty: &PenaltyFunction) -> Result<MetricReport> {
    let by_id: HashMap<&str, &Forecast> = forecasts.iter().map(|f| (f.id.as_str(), f)).collect();
    let mut pred_daily = Vec::new();
    let mut actual_daily = Vec::new();
    let mut pred_inv = Vec::new();
    let mut actual_inv = Vec::new();
    let mut violations = Vec::new();
    let mut timing: Option<Vec<TimingError>> = Some(Vec::new());
    for snap in snaps {
        let id = snap.id();
        let f = by_id.get(id.as_str()).ok_or_else(|| GspError::Snapshot {
            id: id.clone(),
            reason: "no forecast for snapshot".into(),
        })?;
        check_forecast(snap, f)?;
        let labels = snap.labels()?;
        pred_daily.extend(f.timelines.iter().cloned());
        actual_daily.extend(labels.daily_outgoing.iter().cloned());
        pred_inv.extend(f.inventory.iter().cloned());
        actual_inv.extend(labels.weekly_inventory.iter().cloned());
        violations.extend(f.violations());
        timing = match (timing, &labels.actual_events, &f.events) {
            (Some(mut acc), Some(actual), Some(predicted)) => {
                for (e, events) in actual.iter().enumerate() {
                    for a in events {
                        if let Some(p) = a.planned_index.and_then(|i| predicted[e].get(i)) {
                            acc.push(TimingError::from_prediction(a, p.planned.offset, &p.delta));
                        }
                    }
                }
                Some(acc)
            }
            _ => None,
        };
    }
    let actual_inv_flat: Vec<f64> = actual_inv.iter().flatten().copied().collect();
    Ok(MetricReport {
        snapshots: snaps.len(),
        smace: smace_daily(&pred_daily, &actual_daily)?,
        generalized_smace: match timing {
            Some(t) if !t.is_empty() => Some(generalized_smace(&t, penalty)?),
            _ => None,
        },
        wmape: wmape(&pred_inv, &actual_inv)?,
        kappa: kappa(&violations, &actual_inv_flat)?,
        bias: bias(&pred_daily, &actual_daily)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::DEFAULT_CROSTON_ALPHA;
    use crate::rollout::{fit_leadtime_from_snapshots, LeadTimeConfig};
    use crate::synth::{generate_dataset, DeviationSpec, SynthConfig};

    fn data(deviation: DeviationSpec) -> Vec<NetworkSnapshot> {
        let cfg = SynthConfig {
            skus: 3,
            weeks: 4,
            deviation,
            ..SynthConfig::default()
        };
        generate_dataset(&cfg, 11).unwrap().snapshots
    }

    #[test]
    fn passthrough_on_exact_plans_scores_zero() {
        let snaps = data(DeviationSpec::none());
        let lead = fit_leadtime_from_snapshots(&snaps, &LeadTimeConfig::default()).unwrap();
        let forecasts: Vec<Forecast> = snaps
            .iter()
            .map(|s| passthrough_forecast(s, &lead, &InferenceConfig::default()).unwrap())
            .collect();
        let report = evaluate(&snaps, &forecasts, &PenaltyFunction::Linear).unwrap();
        assert_eq!(report.smace, 0.0);
        assert_eq!(report.wmape, 0.0);
        assert_eq!(report.kappa, 0.0);
        assert_eq!(report.bias, 0.0);
        assert_eq!(report.generalized_smace, Some(0.0));
    }

    #[test]
    fn late_execution_shows_in_generalized_smace() {
        let snaps = data(DeviationSpec::shifted(2, 1.0));
        let lead = LeadTimeModel::fallback(28, 2);
        let forecasts: Vec<Forecast> = snaps
            .iter()
            .map(|s| passthrough_forecast(s, &lead, &InferenceConfig::default()).unwrap())
            .collect();
        let report = evaluate(&snaps, &forecasts, &PenaltyFunction::Linear).unwrap();
        let g = report.generalized_smace.unwrap();
        assert!((g - 200.0).abs() < 1e-9, "{g}");
        assert!(report.smace > 0.0);
    }

    #[test]
    fn croston_has_no_event_metric_and_missing_forecasts_error() {
        let snaps = data(DeviationSpec::default());
        let lead = LeadTimeModel::fallback(28, 2);
        let forecasts: Vec<Forecast> = snaps
            .iter()
            .map(|s| croston_forecast(s, DEFAULT_CROSTON_ALPHA, 56, &lead, &InferenceConfig::default()).unwrap())
            .collect();
        let report = evaluate(&snaps, &forecasts, &PenaltyFunction::Linear).unwrap();
        assert!(report.generalized_smace.is_none());
        assert!(report.smace.is_finite() && report.wmape >= 0.0);
        assert!(evaluate(&snaps, &forecasts[1..], &PenaltyFunction::Linear).is_err());
    }

    #[test]
    fn report_formats() {
        let r = MetricReport {
            snapshots: 2,
            smace: 100.0,
            generalized_smace: None,
            wmape: 12.5,
            kappa: 0.0,
            bias: -3.25,
        };
        assert!(r
            .to_csv()
            .starts_with("metric,value\nsnapshots,2\nsmace,100.000000\ngeneralized_smace,NA\n"));
        assert!(r.to_table().contains("bias               -3.250000"));
    }
}
