//! Reference predictors: the plan itself and Croston's intermittent-demand
//! method rendered as a flat daily rate.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::graph::{NetworkSnapshot, ShipmentRecord};

pub const DEFAULT_CROSTON_ALPHA: f64 = 0.9;
pub const DEFAULT_CROSTON_LOOKBACK_DAYS: usize = 56;

/// Planned timelines with `r = 1` and `delta = 0` for every event.
pub fn planned_passthrough(snap: &NetworkSnapshot) -> Vec<Vec<f64>> {
    snap.edge_states
        .iter()
        .map(|edge| {
            let mut daily = vec![0.0; snap.horizon_days];
            for e in &edge.planned {
                daily[e.offset] += e.quantity;
            }
            daily
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrostonState {
    /// Smoothed non-zero size.
    pub size: f64,
    /// Smoothed interval between non-zero observations, in days.
    pub interval: f64,
    /// False when the series had no non-zero observation.
    pub has_events: bool,
}

impl CrostonState {
    pub fn daily_rate(&self) -> f64 {
        if self.has_events {
            self.size / self.interval
        } else {
            0.0
        }
    }
}

/// Croston recursions over a daily series, oldest first. Both estimates are
/// initialized from the first non-zero observation and updated only at
/// later non-zero observations.
pub fn croston_fit(series: &[f64], alpha: f64) -> Result<CrostonState> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(GspError::Config(format!("croston alpha {alpha} is outside (0, 1]")));
    }
    let mut state = CrostonState {
        size: 0.0,
        interval: 1.0,
        has_events: false,
    };
    let mut last = 0usize;
    for (i, &z) in series.iter().enumerate() {
        if z < 0.0 || !z.is_finite() {
            return Err(GspError::InvalidArgument(format!(
                "croston series value {z} at day {i}"
            )));
        }
        if z == 0.0 {
            continue;
        }
        let position = i + 1;
        if state.has_events {
            state.size = alpha * z + (1.0 - alpha) * state.size;
            state.interval = alpha * (position - last) as f64 + (1.0 - alpha) * state.interval;
        } else {
            state = CrostonState {
                size: z,
                interval: position as f64,
                has_events: true,
            };
        }
        last = position;
    }
    Ok(state)
}

pub fn croston_predict(state: &CrostonState, horizon_days: usize) -> Vec<f64> {
    vec![state.daily_rate(); horizon_days]
}

/// Daily shipment totals for the `lookback_days` days before `prediction_date`,
/// oldest first.
pub fn history_series(history: &[ShipmentRecord], prediction_date: NaiveDate, lookback_days: usize) -> Vec<f64> {
    let mut series = vec![0.0; lookback_days];
    for r in history {
        let back = (prediction_date - r.date).num_days();
        if back >= 1 && back as usize <= lookback_days {
            series[lookback_days - back as usize] += r.quantity;
        }
    }
    series
}

/// Croston forecast for every edge of a snapshot from its shipment history.
/// Edges without history get zeros and are reported in the second vector.
pub fn croston_snapshot(
    snap: &NetworkSnapshot,
    alpha: f64,
    lookback_days: usize,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut timelines = Vec::with_capacity(snap.edge_states.len());
    let mut flagged = Vec::new();
    for (e, edge) in snap.edge_states.iter().enumerate() {
        let state = croston_fit(
            &history_series(&edge.history, snap.prediction_date, lookback_days),
            alpha,
        )?;
        if !state.has_events {
            flagged.push(e);
        }
        timelines.push(croston_predict(&state, snap.horizon_days));
    }
    Ok((timelines, flagged))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn hand_computed_smoothing() {
        let s = croston_fit(&[0.0, 10.0, 0.0, 0.0, 20.0], 0.9).unwrap();
        assert!((s.size - 19.0).abs() < 1e-12);
        assert!((s.interval - 2.9).abs() < 1e-12);
        let f = croston_predict(&s, 28);
        assert!(f.iter().all(|&x| x == 19.0 / 2.9 || (x - 19.0 / 2.9).abs() < 1e-15));
        assert!((f.iter().sum::<f64>() - 28.0 * s.size / s.interval).abs() < 1e-9);
    }

    #[test]
    fn single_event_keeps_initialization() {
        let s = croston_fit(&[0.0, 0.0, 7.0, 0.0], 0.9).unwrap();
        assert_eq!((s.size, s.interval), (7.0, 3.0));
    }

    #[test]
    fn periodic_series_is_a_fixed_point() {
        let mut series = vec![0.0; 40];
        for i in (3..40).step_by(4) {
            series[i] = 12.0;
        }
        let s = croston_fit(&series, 0.3).unwrap();
        assert!((s.size - 12.0).abs() < 1e-12);
        assert!((s.interval - 4.0).abs() < 1e-12);
    }

    #[test]
    fn empty_series_is_flagged_and_forecasts_zero() {
        let s = croston_fit(&[0.0; 10], 0.9).unwrap();
        assert!(!s.has_events);
        assert_eq!(croston_predict(&s, 5), vec![0.0; 5]);
    }

    #[test]
    fn invalid_alpha() {
        assert!(croston_fit(&[1.0], 0.0).is_err());
        assert!(croston_fit(&[1.0], 1.5).is_err());
    }

    #[test]
    fn history_series_places_records() {
        let day = |d| NaiveDate::from_ymd_opt(2024, 5, d).unwrap();
        let history = vec![
            ShipmentRecord {
                date: day(9),
                quantity: 3.0,
            },
            ShipmentRecord {
                date: day(3),
                quantity: 5.0,
            },
            ShipmentRecord {
                date: day(10),
                quantity: 9.0,
            },
        ];
        assert_eq!(
            history_series(&history, day(10), 7),
            vec![5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0]
        );
    }

    proptest! {
        #[test]
        fn forecasts_are_flat_and_non_negative(
            series in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..50.0], 0..60),
            alpha in 0.01f64..=1.0,
        ) {
            let s = croston_fit(&series, alpha).unwrap();
            prop_assert!(s.size >= 0.0 && s.interval >= 1.0);
            let f = croston_predict(&s, 28);
            prop_assert!(f.iter().all(|&x| x >= 0.0 && x == f[0]));
        }
    }
}
