//! Cumulative-error metrics on a single 100-unit event predicted on time,
//! one day late, one day early and not at all, plus generalized sMACE under
//! three penalty shapes.

use gsp::event_model::DeltaDistribution;
use gsp::graph::ActualEvent;
use gsp::metrics::{generalized_smace, smace_daily, wmape, PenaltyFunction, TimingError};
use gsp::Result;

fn main() -> Result<()> {
    let actual = vec![vec![0.0, 100.0, 0.0, 0.0]];
    for (name, pred) in [
        ("on time", [0.0, 100.0, 0.0, 0.0]),
        ("late", [0.0, 0.0, 100.0, 0.0]),
        ("early", [100.0, 0.0, 0.0, 0.0]),
        ("missing", [0.0; 4]),
    ] {
        let pred = vec![pred.to_vec()];
        println!(
            "{name:<8} smace {:>6.1}%  wmape {:>6.1}%",
            smace_daily(&pred, &actual)?,
            wmape(&pred, &actual)?
        );
    }

    let event = ActualEvent {
        day: 5,
        quantity: 100.0,
        planned_index: Some(0),
    };
    let mut probs = [0.0; gsp::event_model::DELTA_COUNT];
    probs[DeltaDistribution::index_of(0)] = 0.2;
    probs[DeltaDistribution::index_of(3)] = 0.8;
    let delta = DeltaDistribution::new(probs)?;
    let errors = [TimingError::from_prediction(&event, 3, &delta)];
    println!("\nplanned day 3, shipped day 5, predicted +0 (20%) or +3 (80%)");
    for penalty in [
        PenaltyFunction::Linear,
        PenaltyFunction::LinearWeighted {
            c_late: 2.0,
            eta_late: 0.5,
            c_early: 1.0,
            eta_early: 0.5,
        },
        PenaltyFunction::Geometric {
            c_late: 1.0,
            eta_late: 0.5,
            c_early: 1.0,
            eta_early: 0.5,
        },
    ] {
        println!("  {penalty:?}: {:.1}%", generalized_smace(&errors, &penalty)?);
    }
    Ok(())
}
