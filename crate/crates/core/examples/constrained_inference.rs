//! Runs iterative constrained inference on plans that overdraw inventory and
//! reports the relative change per iteration and the capacity violations.

use gsp::baselines::planned_passthrough;
use gsp::metrics::{capacity_violations, kappa};
use gsp::rollout::{constrained_inference, fit_leadtime_from_snapshots, InferenceConfig, LeadTimeConfig, RolloutSetup};
use gsp::synth::{generate_dataset, SynthConfig};
use gsp::Result;

fn main() -> Result<()> {
    let config = SynthConfig {
        skus: 10,
        tight: true,
        ..SynthConfig::default()
    };
    let snaps = generate_dataset(&config, 404)?.snapshots;
    let lead = fit_leadtime_from_snapshots(&snaps, &LeadTimeConfig::default())?;
    let inference = InferenceConfig::default();

    let (mut before, mut after, mut actual) = (Vec::new(), Vec::new(), Vec::new());
    let mut shown = false;
    for snap in &snaps {
        let setup = RolloutSetup::from_snapshot(snap, lead.for_snapshot(snap)?)?;
        let result = constrained_inference(&setup, &planned_passthrough(snap), &inference)?;
        if !shown && result.first().violation_total() > 0.0 {
            println!("{}: rho per iteration {:?}", snap.id(), result.rho);
            println!(
                "  capacity excess after the last pass {:.2e}",
                result.last().max_capacity_excess()
            );
            shown = true;
        }
        before.extend(capacity_violations(result.first()));
        after.extend(capacity_violations(result.last()));
        actual.extend(snap.labels()?.weekly_inventory.iter().flatten().copied());
    }
    println!("suite of {} snapshots", snaps.len());
    println!("  kappa on raw plans        {:.3}%", kappa(&before, &actual)?);
    println!("  kappa on the final iterate {:.3}%", kappa(&after, &actual)?);
    Ok(())
}
