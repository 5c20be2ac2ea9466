//! Scores the planned-passthrough and Croston baselines on noisy synthetic
//! data.

use gsp::evaluation::{croston_forecast, evaluate, passthrough_forecast, Forecast};
use gsp::metrics::PenaltyFunction;
use gsp::rollout::{fit_leadtime_from_snapshots, InferenceConfig, LeadTimeConfig};
use gsp::synth::{generate_dataset, SynthConfig};
use gsp::Result;

fn main() -> Result<()> {
    let config = SynthConfig {
        skus: 8,
        weeks: 20,
        ..SynthConfig::default()
    };
    let snaps = generate_dataset(&config, 3)?.snapshots;
    let lead = fit_leadtime_from_snapshots(&snaps, &LeadTimeConfig::default())?;
    let inference = InferenceConfig {
        max_iters: 0,
        ..InferenceConfig::default()
    };
    let planned: Vec<Forecast> = snaps
        .iter()
        .map(|s| passthrough_forecast(s, &lead, &inference))
        .collect::<Result<_>>()?;
    let croston: Vec<Forecast> = snaps
        .iter()
        .map(|s| croston_forecast(s, 0.9, 56, &lead, &inference))
        .collect::<Result<_>>()?;
    let p = evaluate(&snaps, &planned, &PenaltyFunction::Linear)?;
    let c = evaluate(&snaps, &croston, &PenaltyFunction::Linear)?;
    println!("metric                planned    croston");
    for ((name, pv), (_, cv)) in p.rows().into_iter().zip(c.rows()) {
        println!("{name:<18} {pv:>10} {cv:>10}");
    }
    Ok(())
}
