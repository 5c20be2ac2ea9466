//! Trains on a network whose shipments always leave two days late at 80% of
//! the planned quantity, then compares the model with the plan on later weeks.

use std::time::Instant;

use gsp::evaluation::{evaluate, gsp_forecast, passthrough_forecast, predict_all, Forecast};
use gsp::inference::McConfig;
use gsp::metrics::PenaltyFunction;
use gsp::model::{GspModel, ModelConfig};
use gsp::rollout::{fit_leadtime_from_snapshots, InferenceConfig, LeadTimeConfig};
use gsp::synth::{generate_dataset, DeviationSpec, SynthConfig};
use gsp::training::{train, TrainConfig};
use gsp::Result;

fn main() -> Result<()> {
    let config = SynthConfig {
        skus: 12,
        weeks: 30,
        deviation: DeviationSpec::shifted(2, 0.8),
        ..SynthConfig::default()
    };
    let snaps = generate_dataset(&config, 2024)?.snapshots;
    let dates: Vec<_> = {
        let mut d: Vec<_> = snaps.iter().map(|s| s.prediction_date).collect();
        d.sort_unstable();
        d.dedup();
        d
    };
    let (val_start, test_start) = (dates[20], dates[24]);
    let train_set: Vec<_> = snaps
        .iter()
        .filter(|s| s.prediction_date < val_start)
        .cloned()
        .collect();
    let val_set: Vec<_> = snaps
        .iter()
        .filter(|s| s.prediction_date >= val_start && s.prediction_date < test_start)
        .cloned()
        .collect();
    let test_set: Vec<_> = snaps
        .iter()
        .filter(|s| s.prediction_date >= test_start)
        .cloned()
        .collect();
    println!(
        "train {} / validation {} / test {}",
        train_set.len(),
        val_set.len(),
        test_set.len()
    );

    let lead = fit_leadtime_from_snapshots(&train_set, &LeadTimeConfig::default())?;
    let started = Instant::now();
    let model = GspModel::new(ModelConfig::default(), 7)?;
    let outcome = train(
        model,
        &train_set,
        &val_set,
        &lead,
        &TrainConfig {
            seed: 7,
            ..TrainConfig::default()
        },
    )?;
    for e in &outcome.curve {
        println!(
            "epoch {:>2}  train {:.5}  validation {:.5}",
            e.epoch,
            e.train_loss,
            e.validation_loss.unwrap_or(f64::NAN)
        );
    }
    println!(
        "trained in {:.1?}, best epoch {}",
        started.elapsed(),
        outcome.best_epoch
    );

    let predictions = predict_all(
        &outcome.model,
        &outcome.scaler,
        &test_set,
        &lead,
        &McConfig {
            seed: 7,
            ..McConfig::default()
        },
    )?;
    let gsp: Vec<Forecast> = test_set
        .iter()
        .zip(&predictions)
        .map(|(s, p)| gsp_forecast(s, p, &lead))
        .collect::<Result<_>>()?;
    let planned: Vec<Forecast> = test_set
        .iter()
        .map(|s| passthrough_forecast(s, &lead, &InferenceConfig::default()))
        .collect::<Result<_>>()?;
    let g = evaluate(&test_set, &gsp, &PenaltyFunction::Linear)?;
    let p = evaluate(&test_set, &planned, &PenaltyFunction::Linear)?;
    println!("\nmetric              planned        gsp");
    for ((name, pv), (_, gv)) in p.rows().into_iter().zip(g.rows()) {
        println!("{name:<18} {pv:>10} {gv:>10}");
    }
    let sample = &predictions[0].expected;
    if let Some(ev) = sample.iter().flatten().next() {
        println!(
            "\nfirst event: multiplier {:.3}, mean delta {:.2}",
            ev.multiplier,
            ev.delta.mean()
        );
    }
    Ok(())
}
