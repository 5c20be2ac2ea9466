//! Aggregation of event predictions into daily, cumulative and weekly
//! quantity vectors. Probability mass that lands outside the horizon is
//! dropped, never renormalized.

use crate::error::{GspError, Result};
use crate::event_model::{DeltaDistribution, EventPrediction};

pub const DAYS_PER_WEEK: usize = 7;

/// One-hot at `day`, or all zeros when `day` is outside `0..horizon`.
pub fn basis_vector(day: i64, horizon: usize) -> Vec<f64> {
    let mut v = vec![0.0; horizon];
    if (0..horizon as i64).contains(&day) {
        v[day as usize] = 1.0;
    }
    v
}

/// Distribution of the predicted event day `tau + delta` over the horizon.
pub fn event_time_distribution(delta: &DeltaDistribution, tau: usize, horizon: usize) -> Vec<f64> {
    let mut pi = vec![0.0; horizon];
    for (d, p) in delta.iter() {
        let day = tau as i64 + d as i64;
        if p != 0.0 && (0..horizon as i64).contains(&day) {
            pi[day as usize] += p;
        }
    }
    pi
}

/// `r * a * pi` for one predicted event.
pub fn event_quantity_vector(pred: &EventPrediction, horizon: usize) -> Vec<f64> {
    let scale = pred.multiplier * pred.planned.quantity;
    event_time_distribution(&pred.delta, pred.planned.offset, horizon)
        .into_iter()
        .map(|p| scale * p)
        .collect()
}

/// Predicted quantity that falls beyond the horizon for one event.
pub fn lost_mass(pred: &EventPrediction, horizon: usize) -> f64 {
    let kept: f64 = event_time_distribution(&pred.delta, pred.planned.offset, horizon)
        .iter()
        .sum();
    pred.multiplier * pred.planned.quantity * (1.0 - kept).max(0.0)
}

/// Elementwise sum of event vectors; zeros for an empty set.
pub fn daily_vector(events: &[Vec<f64>], horizon: usize) -> Vec<f64> {
    let mut out = vec![0.0; horizon];
    for e in events {
        for (o, &x) in out.iter_mut().zip(e) {
            *o += x;
        }
    }
    out
}

pub fn cumulative(daily: &[f64]) -> Vec<f64> {
    daily
        .iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Week `w` is the sum of days `7w..7w+6`.
pub fn weekly_bucket(daily: &[f64]) -> Result<Vec<f64>> {
    if !daily.len().is_multiple_of(DAYS_PER_WEEK) {
        return Err(GspError::InvalidArgument(format!(
            "daily timeline of {} days does not split into whole weeks",
            daily.len()
        )));
    }
    Ok(daily.chunks(DAYS_PER_WEEK).map(|w| w.iter().sum()).collect())
}
