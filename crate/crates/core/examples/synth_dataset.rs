//! Generates a synthetic multi-SKU history, writes it as JSONL and reads it
//! back. Pass a directory to keep the files.

use std::path::PathBuf;

use gsp::dataset::{read_dataset, write_dataset};
use gsp::synth::{generate_dataset, SynthConfig};
use gsp::Result;

fn main() -> Result<()> {
    let config = SynthConfig {
        skus: 5,
        weeks: 12,
        ..SynthConfig::default()
    };
    let data = generate_dataset(&config, 42)?;
    let temp = tempfile::tempdir().map_err(|e| gsp::GspError::Config(e.to_string()))?;
    let dir = std::env::args()
        .nth(1)
        .map_or_else(|| temp.path().to_path_buf(), PathBuf::from);
    write_dataset(&dir, &data.snapshots)?;
    let back = read_dataset(&dir)?;
    assert_eq!(back, data.snapshots);

    println!("{} snapshots written to {}", back.len(), dir.display());
    println!(
        "{:<8} {:>6} {:>6} {:>8} {:>12} {:>12}",
        "sku", "nodes", "edges", "events", "planned", "shipped"
    );
    for snap in back.iter().filter(|s| s.prediction_date == back[0].prediction_date) {
        let planned = snap
            .edge_states
            .iter()
            .flat_map(|e| &e.planned)
            .fold(0.0, |acc, p| acc + p.quantity);
        let shipped = snap
            .labels()?
            .daily_outgoing
            .iter()
            .flatten()
            .fold(0.0, |acc, q| acc + q);
        let events: usize = snap.edge_states.iter().map(|e| e.planned.len()).sum();
        println!(
            "{:<8} {:>6} {:>6} {:>8} {:>12.1} {:>12.1}",
            snap.graph.sku(),
            snap.graph.node_count(),
            snap.graph.edge_count(),
            events,
            planned,
            shipped
        );
    }
    Ok(())
}
