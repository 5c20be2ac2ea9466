//! Fits per-edge lead-time distributions from shipment and receipt dates and
//! compares them with the generator's distribution.

use gsp::rollout::{fit_leadtime_from_snapshots, EdgeKey, LeadTimeConfig};
use gsp::synth::{generate_dataset, SynthConfig};
use gsp::Result;

fn main() -> Result<()> {
    let config = SynthConfig {
        skus: 3,
        weeks: 26,
        ..SynthConfig::default()
    };
    let snaps = generate_dataset(&config, 8)?.snapshots;
    let model = fit_leadtime_from_snapshots(&snaps, &LeadTimeConfig::default())?;
    println!("generator: {:?}", config.deviation.lead_time);

    let latest = snaps.iter().max_by_key(|s| s.prediction_date).expect("non-empty");
    for e in 0..latest.graph.edge_count() {
        let key = EdgeKey::of(&latest.graph, e);
        let p = model.distribution(&key);
        let shown: Vec<String> = p
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(d, x)| format!("{d}d {x:.2}"))
            .collect();
        println!("{}/{} -> {:<4} {}", key.sku, key.src, key.dst, shown.join("  "));
    }
    Ok(())
}
