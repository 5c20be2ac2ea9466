//! CSV exchange of forecasts. A forecast directory holds
//!
//! - `timelines.csv`: `snapshot, src, dst, day, quantity`, every day of every edge;
//! - `rollout.csv`: `snapshot, node, week, inventory, incoming, outgoing, requested, capacity`;
//! - `events.csv` (optional): one row per planned event with its quantity
//!   multiplier and timing distribution `p(-7) .. p(7)`.
//!
//! Snapshots are identified as `sku@date`. Every predictor writes the same
//! layout, so evaluation does not depend on where a forecast came from.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::evaluation::Forecast;
use crate::event_model::{DeltaDistribution, EventPrediction, DELTA_COUNT};
use crate::graph::{NetworkSnapshot, PlannedEvent};

pub const TIMELINES_FILE: &str = "timelines.csv";
pub const ROLLOUT_FILE: &str = "rollout.csv";
pub const EVENTS_FILE: &str = "events.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TimelineRow {
    snapshot: String,
    src: String,
    dst: String,
    day: usize,
    quantity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RolloutRow {
    snapshot: String,
    node: String,
    week: usize,
    inventory: f64,
    incoming: f64,
    outgoing: f64,
    requested: f64,
    capacity: f64,
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| GspError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| GspError::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn parse_error(path: &Path, line: Option<u64>, message: String) -> GspError {
    GspError::Parse {
        path: path.to_path_buf(),
        line: line.unwrap_or(0) as usize,
        message,
    }
}

/// Writes per-edge daily timelines of each snapshot.
pub fn write_timelines(path: &Path, snaps: &[NetworkSnapshot], timelines: &[&[Vec<f64>]]) -> Result<()> {
    let mut w = writer(path)?;
    for (s, t) in snaps.iter().zip(timelines) {
        let id = s.id();
        for (e, daily) in t.iter().enumerate() {
            let (src, dst) = s.graph.edge_names(e);
            for (day, &quantity) in daily.iter().enumerate() {
                w.serialize(TimelineRow {
                    snapshot: id.clone(),
                    src: src.to_string(),
                    dst: dst.to_string(),
                    day,
                    quantity,
                })?;
            }
        }
    }
    w.flush().map_err(|e| GspError::io(path, e))
}

fn write_rollout(path: &Path, snaps: &[NetworkSnapshot], forecasts: &[Forecast]) -> Result<()> {
    let mut w = writer(path)?;
    for (s, f) in snaps.iter().zip(forecasts) {
        for v in 0..s.graph.node_count() {
            for week in 0..s.horizon_weeks() {
                w.serialize(RolloutRow {
                    snapshot: f.id.clone(),
                    node: s.graph.node_name(v).to_string(),
                    week,
                    inventory: f.inventory[v][week],
                    incoming: f.incoming[v][week],
                    outgoing: f.outgoing[v][week],
                    requested: f.requested[v][week],
                    capacity: f.capacity[v][week],
                })?;
            }
        }
    }
    w.flush().map_err(|e| GspError::io(path, e))
}

fn events_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "snapshot",
        "src",
        "dst",
        "event",
        "planned_day",
        "planned_quantity",
        "multiplier",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((0..DELTA_COUNT).map(|i| format!("p({})", DeltaDistribution::delta_at(i))));
    h
}

fn write_events(path: &Path, snaps: &[NetworkSnapshot], forecasts: &[Forecast]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(events_header())?;
    for (s, f) in snaps.iter().zip(forecasts) {
        let Some(events) = &f.events else { continue };
        for (e, list) in events.iter().enumerate() {
            let (src, dst) = s.graph.edge_names(e);
            for (k, p) in list.iter().enumerate() {
                let mut row = vec![
                    f.id.clone(),
                    src.to_string(),
                    dst.to_string(),
                    k.to_string(),
                    p.planned.offset.to_string(),
                    p.planned.quantity.to_string(),
                    p.multiplier.to_string(),
                ];
                row.extend(p.delta.probs().iter().map(|x| x.to_string()));
                w.write_record(row)?;
            }
        }
    }
    w.flush().map_err(|e| GspError::io(path, e))
}

/// Writes a forecast directory. `events.csv` is written when every
/// forecast carries event predictions.
pub fn write_forecasts(dir: &Path, snaps: &[NetworkSnapshot], forecasts: &[Forecast]) -> Result<()> {
    if snaps.len() != forecasts.len() || snaps.iter().zip(forecasts).any(|(s, f)| s.id() != f.id) {
        return Err(GspError::InvalidArgument(
            "forecasts must follow the snapshot order".into(),
        ));
    }
    fs::create_dir_all(dir).map_err(|e| GspError::io(dir, e))?;
    let timelines: Vec<&[Vec<f64>]> = forecasts.iter().map(|f| f.timelines.as_slice()).collect();
    write_timelines(&dir.join(TIMELINES_FILE), snaps, &timelines)?;
    write_rollout(&dir.join(ROLLOUT_FILE), snaps, forecasts)?;
    let events = dir.join(EVENTS_FILE);
    if forecasts.iter().all(|f| f.events.is_some()) {
        write_events(&events, snaps, forecasts)?;
    } else if events.exists() {
        fs::remove_file(&events).map_err(|e| GspError::io(&events, e))?;
    }
    Ok(())
}

fn index_of(snaps: &[NetworkSnapshot]) -> HashMap<String, usize> {
    snaps.iter().enumerate().map(|(i, s)| (s.id(), i)).collect()
}

fn locate<'a>(
    path: &Path,
    line: Option<u64>,
    index: &HashMap<String, usize>,
    snaps: &'a [NetworkSnapshot],
    id: &str,
) -> Result<(usize, &'a NetworkSnapshot)> {
    let i = *index
        .get(id)
        .ok_or_else(|| parse_error(path, line, format!("unknown snapshot `{id}`")))?;
    Ok((i, &snaps[i]))
}

/// Reads a forecast directory against the snapshots it predicts, returning
/// one forecast per snapshot in snapshot order.
pub fn read_forecasts(dir: &Path, snaps: &[NetworkSnapshot]) -> Result<Vec<Forecast>> {
    let index = index_of(snaps);
    let mut forecasts: Vec<Forecast> = snaps
        .iter()
        .map(|s| {
            let weekly = vec![vec![f64::NAN; s.horizon_weeks()]; s.graph.node_count()];
            Forecast {
                id: s.id(),
                timelines: vec![vec![f64::NAN; s.horizon_days]; s.graph.edge_count()],
                inventory: weekly.clone(),
                incoming: weekly.clone(),
                outgoing: weekly.clone(),
                requested: weekly.clone(),
                capacity: weekly,
                events: None,
            }
        })
        .collect();

    let path = dir.join(TIMELINES_FILE);
    let mut r = reader(&path)?;
    for record in r.records() {
        let record = record?;
        let line = record.position().map(|p| p.line());
        let row: TimelineRow = record.deserialize(None)?;
        let (i, s) = locate(&path, line, &index, snaps, &row.snapshot)?;
        let e = s
            .graph
            .edge_index(&row.src, &row.dst)
            .ok_or_else(|| parse_error(&path, line, format!("unknown edge {}->{}", row.src, row.dst)))?;
        let slot = forecasts[i].timelines[e]
            .get_mut(row.day)
            .ok_or_else(|| parse_error(&path, line, format!("day {} outside the horizon", row.day)))?;
        *slot = row.quantity;
    }

    let path = dir.join(ROLLOUT_FILE);
    let mut r = reader(&path)?;
    for record in r.records() {
        let record = record?;
        let line = record.position().map(|p| p.line());
        let row: RolloutRow = record.deserialize(None)?;
        let (i, s) = locate(&path, line, &index, snaps, &row.snapshot)?;
        let v = s.graph.node_index(&row.node)?;
        if row.week >= s.horizon_weeks() {
            return Err(parse_error(
                &path,
                line,
                format!("week {} outside the horizon", row.week),
            ));
        }
        let f = &mut forecasts[i];
        f.inventory[v][row.week] = row.inventory;
        f.incoming[v][row.week] = row.incoming;
        f.outgoing[v][row.week] = row.outgoing;
        f.requested[v][row.week] = row.requested;
        f.capacity[v][row.week] = row.capacity;
    }

    let path = dir.join(EVENTS_FILE);
    if path.exists() {
        let mut events: Vec<Vec<Vec<Option<EventPrediction>>>> = snaps
            .iter()
            .map(|s| s.edge_states.iter().map(|e| vec![None; e.planned.len()]).collect())
            .collect();
        let mut r = reader(&path)?;
        if r.headers()?.iter().collect::<Vec<_>>() != events_header() {
            return Err(parse_error(&path, Some(1), "unexpected events header".into()));
        }
        for record in r.records() {
            let record = record?;
            let line = record.position().map(|p| p.line());
            let field = |k: usize| record.get(k).unwrap_or_default();
            let num = |k: usize| -> Result<f64> {
                field(k)
                    .parse()
                    .map_err(|_| parse_error(&path, line, format!("`{}` is not a number", field(k))))
            };
            let (i, s) = locate(&path, line, &index, snaps, field(0))?;
            let e = s
                .graph
                .edge_index(field(1), field(2))
                .ok_or_else(|| parse_error(&path, line, format!("unknown edge {}->{}", field(1), field(2))))?;
            let k: usize = field(3)
                .parse()
                .map_err(|_| parse_error(&path, line, "event index is not an integer".into()))?;
            let offset: usize = field(4)
                .parse()
                .map_err(|_| parse_error(&path, line, "planned day is not an integer".into()))?;
            let probs = (0..DELTA_COUNT).map(|j| num(7 + j)).collect::<Result<Vec<_>>>()?;
            let slot = events[i][e]
                .get_mut(k)
                .ok_or_else(|| parse_error(&path, line, format!("event {k} is not a planned event")))?;
            *slot = Some(EventPrediction {
                multiplier: num(6)?,
                delta: DeltaDistribution::from_slice(&probs)?,
                planned: PlannedEvent {
                    offset,
                    quantity: num(5)?,
                },
            });
        }
        for (f, per_edge) in forecasts.iter_mut().zip(events) {
            f.events = per_edge
                .into_iter()
                .map(|list| list.into_iter().collect::<Option<Vec<_>>>())
                .collect();
        }
    }

    for f in &forecasts {
        let missing = f
            .timelines
            .iter()
            .chain(&f.inventory)
            .chain(&f.incoming)
            .chain(&f.outgoing)
            .chain(&f.requested)
            .chain(&f.capacity)
            .flatten()
            .any(|x| x.is_nan());
        if missing {
            return Err(GspError::Snapshot {
                id: f.id.clone(),
                reason: format!("forecast in {} is incomplete", dir.display()),
            });
        }
    }
    Ok(forecasts)
}

/// Writes `text` to `path`.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| GspError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| GspError::io(path, e))
}
