//! Evaluation metrics. Every metric is a ratio of sums reported in percent;
//! sums use pairwise summation so results do not depend on thread count, and
//! a zero denominator is reported as a degenerate dataset.

use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::event_model::DeltaDistribution;
use crate::graph::ActualEvent;
use crate::rollout::RolloutResult;
use crate::timeline::cumulative;

const PAIRWISE_BLOCK: usize = 32;

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn percent(metric: &'static str, numerator: &[f64], denominator: &[f64]) -> Result<f64> {
    if denominator.is_empty() {
        return Err(GspError::Degenerate {
            metric,
            reason: "empty dataset",
        });
    }
    let den = pairwise_sum(denominator);
    if den == 0.0 || !den.is_finite() {
        return Err(GspError::Degenerate {
            metric,
            reason: "denominator is zero",
        });
    }
    Ok(pairwise_sum(numerator) / den * 100.0)
}

fn check_pairs(metric: &'static str, pred: &[Vec<f64>], actual: &[Vec<f64>]) -> Result<()> {
    if pred.len() != actual.len() || pred.iter().zip(actual).any(|(p, a)| p.len() != a.len()) {
        return Err(GspError::InvalidArgument(format!(
            "{metric}: predicted and actual series do not align"
        )));
    }
    Ok(())
}

/// `sum |Qhat(h) - Q(h)| / sum q(h) * 100` over cumulative predictions and
/// daily actuals, one entry per snapshot edge.
pub fn smace(pred_cumulative: &[Vec<f64>], actual_daily: &[Vec<f64>]) -> Result<f64> {
    check_pairs("smace", pred_cumulative, actual_daily)?;
    let mut errors = Vec::new();
    let mut actual = Vec::new();
    for (p, a) in pred_cumulative.iter().zip(actual_daily) {
        let cum = cumulative(a);
        errors.extend(p.iter().zip(&cum).map(|(x, y)| (x - y).abs()));
        actual.extend_from_slice(a);
    }
    percent("smace", &errors, &actual)
}

/// sMACE from daily predictions.
pub fn smace_daily(pred_daily: &[Vec<f64>], actual_daily: &[Vec<f64>]) -> Result<f64> {
    let cum: Vec<Vec<f64>> = pred_daily.iter().map(|p| cumulative(p)).collect();
    smace(&cum, actual_daily)
}

/// `sum |pred - actual| / sum actual * 100`.
pub fn wmape(pred: &[Vec<f64>], actual: &[Vec<f64>]) -> Result<f64> {
    check_pairs("wmape", pred, actual)?;
    let errors: Vec<f64> = pred
        .iter()
        .flatten()
        .zip(actual.iter().flatten())
        .map(|(p, a)| (p - a).abs())
        .collect();
    let actual: Vec<f64> = actual.iter().flatten().copied().collect();
    percent("wmape", &errors, &actual)
}

/// `sum (pred - actual) / sum actual * 100`.
pub fn bias(pred: &[Vec<f64>], actual: &[Vec<f64>]) -> Result<f64> {
    check_pairs("bias", pred, actual)?;
    let diffs: Vec<f64> = pred
        .iter()
        .flatten()
        .zip(actual.iter().flatten())
        .map(|(p, a)| p - a)
        .collect();
    let actual: Vec<f64> = actual.iter().flatten().copied().collect();
    percent("bias", &diffs, &actual)
}

/// Violations `(A - max(Y, 0))+` of one rollout, measured on the requested
/// (pre-adjustment) outgoing.
pub fn capacity_violations(rollout: &RolloutResult) -> Vec<f64> {
    rollout
        .outgoing_requested
        .iter()
        .zip(&rollout.capacity)
        .flat_map(|(a, y)| a.iter().zip(y).map(|(&a, &y)| (a - y.max(0.0)).max(0.0)))
        .collect()
}

/// `sum violations / sum actual inventory * 100`.
pub fn kappa(violations: &[f64], actual_inventory: &[f64]) -> Result<f64> {
    percent("kappa", violations, actual_inventory)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PenaltyFunction {
    /// `|delta|`.
    Linear,
    /// Steps weigh `c (1 + eta (|j| - 1))`.
    LinearWeighted {
        c_late: f64,
        eta_late: f64,
        c_early: f64,
        eta_early: f64,
    },
    /// Steps weigh `c eta^(|j| - 1)`.
    Geometric {
        c_late: f64,
        eta_late: f64,
        c_early: f64,
        eta_early: f64,
    },
}

impl PenaltyFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PenaltyFunction::Linear => Ok(()),
            PenaltyFunction::LinearWeighted {
                c_late,
                eta_late,
                c_early,
                eta_early,
            } => {
                let ok = c_late > 0.0
                    && c_early > 0.0
                    && (0.0..=1.0).contains(&eta_late)
                    && (0.0..=1.0).contains(&eta_early);
                ok.then_some(())
                    .ok_or_else(|| GspError::Config("linear-weighted penalty needs c > 0 and eta in [0, 1]".into()))
            }
            PenaltyFunction::Geometric {
                c_late,
                eta_late,
                c_early,
                eta_early,
            } => {
                let open = |x: f64| x > 0.0 && x < 1.0;
                let ok = c_late > 0.0 && c_early > 0.0 && open(eta_late) && open(eta_early);
                ok.then_some(())
                    .ok_or_else(|| GspError::Config("geometric penalty needs c > 0 and eta in (0, 1)".into()))
            }
        }
    }

    /// Weight of the `j`-th step of a timing error, `j != 0`.
    fn step(&self, j: i64) -> f64 {
        let k = (j.unsigned_abs() - 1) as f64;
        match *self {
            PenaltyFunction::Linear => 1.0,
            PenaltyFunction::LinearWeighted {
                c_late,
                eta_late,
                c_early,
                eta_early,
            } => {
                let (c, eta) = if j > 0 {
                    (c_late, eta_late)
                } else {
                    (c_early, eta_early)
                };
                c * (1.0 + eta * k)
            }
            PenaltyFunction::Geometric {
                c_late,
                eta_late,
                c_early,
                eta_early,
            } => {
                let (c, eta) = if j > 0 {
                    (c_late, eta_late)
                } else {
                    (c_early, eta_early)
                };
                c * eta.powi(k as i32)
            }
        }
    }

    /// Sum of step weights from 1 to `delta` (late) or `delta` to -1 (early).
    pub fn penalty(&self, delta: i64) -> f64 {
        match delta {
            0 => 0.0,
            d if d > 0 => (1..=d).map(|j| self.step(j)).sum(),
            d => (d..=-1).map(|j| self.step(j)).sum(),
        }
    }
}

/// One actual event with a distribution over its timing error
/// (predicted day minus actual day).
#[derive(Clone, Debug, PartialEq)]
pub struct TimingError {
    pub quantity: f64,
    pub error: Vec<(i64, f64)>,
}

impl TimingError {
    /// Pairs an actual event with the predicted delta distribution of the
    /// planned event it executed.
    pub fn from_prediction(actual: &ActualEvent, planned_offset: usize, delta: &DeltaDistribution) -> Self {
        let shift = planned_offset as i64 - actual.day as i64;
        TimingError {
            quantity: actual.quantity,
            error: delta
                .iter()
                .filter(|&(_, p)| p > 0.0)
                .map(|(d, p)| (shift + d as i64, p))
                .collect(),
        }
    }
}

/// `sum a * E[penalty(error)] / sum a * 100` over actual events.
pub fn generalized_smace(events: &[TimingError], penalty: &PenaltyFunction) -> Result<f64> {
    penalty.validate()?;
    let weighted: Vec<f64> = events
        .iter()
        .map(|e| e.quantity * e.error.iter().map(|&(d, p)| p * penalty.penalty(d)).sum::<f64>())
        .collect();
    let quantities: Vec<f64> = events.iter().map(|e| e.quantity).collect();
    percent("generalized_smace", &weighted, &quantities)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn smace_worked_examples() {
        let actual = vec![vec![0.0, 100.0, 0.0, 0.0]];
        let m1 = smace_daily(&[vec![0.0, 0.0, 100.0, 0.0]], &actual).unwrap();
        let m2 = smace_daily(&[vec![100.0, 0.0, 0.0, 0.0]], &actual).unwrap();
        let m3 = smace_daily(&[vec![0.0; 4]], &actual).unwrap();
        assert_eq!((m1, m2, m3), (100.0, 100.0, 300.0));
        assert_eq!(smace_daily(&actual, &actual).unwrap(), 0.0);
    }

    #[test]
    fn wmape_worked_examples() {
        let actual = vec![vec![0.0, 100.0, 0.0, 0.0]];
        assert_eq!(wmape(&[vec![0.0, 0.0, 100.0, 0.0]], &actual).unwrap(), 200.0);
        assert_eq!(wmape(&[vec![100.0, 0.0, 0.0, 0.0]], &actual).unwrap(), 200.0);
        assert_eq!(wmape(&[vec![0.0; 4]], &actual).unwrap(), 100.0);
        assert_eq!(wmape(&[vec![50.0]], &[vec![100.0]]).unwrap(), 50.0);
        assert_eq!(wmape(&actual, &actual).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_denominators() {
        let zero = vec![vec![0.0; 4]];
        for result in [
            smace_daily(&zero, &zero),
            wmape(&zero, &zero),
            bias(&zero, &zero),
            kappa(&[1.0], &[0.0]),
        ] {
            assert!(matches!(result, Err(GspError::Degenerate { .. })));
        }
        assert!(matches!(wmape(&[], &[]), Err(GspError::Degenerate { .. })));
        assert!(smace(&[vec![0.0; 3]], &[vec![1.0; 4]]).is_err());
    }

    #[test]
    fn bias_cases() {
        let actual = vec![vec![10.0, 20.0]];
        assert_eq!(bias(&actual, &actual).unwrap(), 0.0);
        assert!((bias(&[vec![11.0, 22.0]], &actual).unwrap() - 10.0).abs() < 1e-12);
        let mixed = vec![vec![15.0, 15.0]];
        assert_eq!(bias(&mixed, &actual).unwrap(), 0.0);
        assert!(wmape(&mixed, &actual).unwrap() > 0.0);
    }

    #[test]
    fn kappa_cases() {
        assert_eq!(kappa(&[0.0, 0.0], &[10.0, 20.0]).unwrap(), 0.0);
        assert!((kappa(&[6.0 - 3.0], &[10.0, 20.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!((kappa(&[6.0], &[20.0, 40.0]).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn penalty_shapes() {
        assert_eq!(PenaltyFunction::Linear.penalty(-3), 3.0);
        assert_eq!(PenaltyFunction::Linear.penalty(0), 0.0);
        let geo = PenaltyFunction::Geometric {
            c_late: 1.0,
            eta_late: 0.5,
            c_early: 2.0,
            eta_early: 0.5,
        };
        assert_eq!(geo.penalty(3), 1.75);
        assert_eq!(geo.penalty(-2), 3.0);
        let lw = PenaltyFunction::LinearWeighted {
            c_late: 1.0,
            eta_late: 1.0,
            c_early: 1.0,
            eta_early: 0.0,
        };
        assert_eq!(lw.penalty(3), 6.0);
        assert_eq!(lw.penalty(-3), 3.0);
        let bad = PenaltyFunction::Geometric {
            c_late: 1.0,
            eta_late: 1.0,
            c_early: 1.0,
            eta_early: 0.5,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn generalized_smace_cases() {
        let late = TimingError {
            quantity: 100.0,
            error: vec![(1, 1.0)],
        };
        assert_eq!(generalized_smace(&[late], &PenaltyFunction::Linear).unwrap(), 100.0);
        let on_time = TimingError {
            quantity: 40.0,
            error: vec![(0, 1.0)],
        };
        assert_eq!(generalized_smace(&[on_time], &PenaltyFunction::Linear).unwrap(), 0.0);
        let geo = PenaltyFunction::Geometric {
            c_late: 1.0,
            eta_late: 0.5,
            c_early: 1.0,
            eta_early: 0.5,
        };
        let three = TimingError {
            quantity: 10.0,
            error: vec![(3, 1.0)],
        };
        assert_eq!(generalized_smace(&[three], &geo).unwrap(), 175.0);
        assert!(generalized_smace(&[], &PenaltyFunction::Linear).is_err());
    }

    #[test]
    fn timing_error_from_prediction() {
        let actual = ActualEvent {
            day: 5,
            quantity: 30.0,
            planned_index: Some(0),
        };
        let t = TimingError::from_prediction(&actual, 4, &DeltaDistribution::one_hot(2));
        assert_eq!(t.error, vec![(1, 1.0)]);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    proptest! {
        #[test]
        fn ratio_metrics_are_scale_invariant(
            pairs in prop::collection::vec((0.0f64..100.0, 0.1f64..100.0), 1..40),
            c in 0.01f64..100.0,
        ) {
            let pred = vec![pairs.iter().map(|p| p.0).collect::<Vec<_>>()];
            let actual = vec![pairs.iter().map(|p| p.1).collect::<Vec<_>>()];
            let sp: Vec<Vec<f64>> = pred.iter().map(|r| r.iter().map(|x| x * c).collect()).collect();
            let sa: Vec<Vec<f64>> = actual.iter().map(|r| r.iter().map(|x| x * c).collect()).collect();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(1.0);
            prop_assert!(close(smace_daily(&pred, &actual).unwrap(), smace_daily(&sp, &sa).unwrap()));
            prop_assert!(close(wmape(&pred, &actual).unwrap(), wmape(&sp, &sa).unwrap()));
            prop_assert!(close(kappa(&pred[0], &actual[0]).unwrap(), kappa(&sp[0], &sa[0]).unwrap()));
            prop_assert!(smace_daily(&pred, &actual).unwrap() >= 0.0);
            prop_assert_eq!(smace_daily(&actual, &actual).unwrap(), 0.0);
        }

        #[test]
        fn linear_generalized_smace_equals_smace_for_timing_errors(
            events in prop::collection::vec((0usize..20, -5i64..=5, 1.0f64..100.0), 1..10),
        ) {
            let horizon = 28;
            let mut pred = Vec::new();
            let mut actual = Vec::new();
            let mut timing = Vec::new();
            for &(day, shift, q) in &events {
                let predicted = (day as i64 + shift).max(0) as usize;
                let mut p = vec![0.0; horizon];
                p[predicted] = q;
                let mut a = vec![0.0; horizon];
                a[day] = q;
                pred.push(p);
                actual.push(a);
                timing.push(TimingError { quantity: q, error: vec![(predicted as i64 - day as i64, 1.0)] });
            }
            let s = smace_daily(&pred, &actual).unwrap();
            let g = generalized_smace(&timing, &PenaltyFunction::Linear).unwrap();
            prop_assert!((s - g).abs() <= 1e-9 * s.max(1.0));
        }
    }
}
