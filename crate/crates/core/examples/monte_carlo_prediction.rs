//! Monte-Carlo prediction for one snapshot: expected events, the spread of
//! sampled totals and the convergence of constrained inference per sample.

use gsp::evaluation::gsp_forecast;
use gsp::inference::{mc_predict, McConfig};
use gsp::model::{GspModel, ModelConfig};
use gsp::rollout::{fit_leadtime_from_snapshots, LeadTimeConfig};
use gsp::synth::{generate_dataset, SynthConfig};
use gsp::training::SkuScaler;
use gsp::Result;

fn main() -> Result<()> {
    let config = SynthConfig {
        skus: 2,
        weeks: 6,
        ..SynthConfig::default()
    };
    let snaps = generate_dataset(&config, 12)?.snapshots;
    let snap = snaps
        .iter()
        .max_by_key(|s| s.edge_states.iter().map(|e| e.planned.len()).sum::<usize>())
        .expect("non-empty");
    let lead = fit_leadtime_from_snapshots(&snaps, &LeadTimeConfig::default())?;
    let scaler = SkuScaler::fit(&snaps);
    let model = GspModel::new(ModelConfig::default(), 1)?;
    let mc = McConfig {
        samples: 50,
        seed: 4,
        ..McConfig::default()
    };
    let prediction = mc_predict(&model, snap, scaler.scale_for(snap), &lead, &mc, 0)?;

    println!("{} ({} parameters, untrained)", snap.id(), model.parameter_count());
    for (e, events) in prediction.expected.iter().enumerate().take(3) {
        let (src, dst) = snap.graph.edge_names(e);
        for ev in events {
            println!(
                "  {src}->{dst} day {:>2} qty {:>7.1}: r {:.3}, E[delta] {:+.2}",
                ev.planned.offset,
                ev.planned.quantity,
                ev.multiplier,
                ev.delta.mean()
            );
        }
    }
    let totals: Vec<f64> = prediction
        .samples
        .iter()
        .map(|s| s.last().timelines.iter().flatten().sum())
        .collect();
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    let sd = (totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / totals.len() as f64).sqrt();
    println!("sampled shipped total {mean:.1} +- {sd:.1}");
    println!("converged samples {:.0}%", 100.0 * prediction.converged_fraction());
    let forecast = gsp_forecast(snap, &prediction, &lead)?;
    println!(
        "forecast capacity violations {:.2}",
        forecast.violations().iter().sum::<f64>()
    );
    Ok(())
}
