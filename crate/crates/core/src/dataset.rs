//! Snapshot datasets on disk: a directory of JSON-lines files.
//!
//! | file               | one record per                  |
//! |--------------------|---------------------------------|
//! | `snapshots.jsonl`  | snapshot: `sku`, `date`, `horizon_days` |
//! | `topology.jsonl`   | SKU edge: `sku`, `src`, `dst`   |
//! | `nodes.jsonl`      | snapshot node state             |
//! | `edges.jsonl`      | snapshot edge plan and history  |
//! | `labels.jsonl`     | snapshot edge or node label (optional file) |
//! | `leadtimes.jsonl`  | observed shipment: `sku`, `src`, `dst`, `ship`, `receive` (optional file) |
//!
//! Quantities are plain decimal numbers in SKU units, dates are ISO-8601
//! days. Node order within a SKU follows its first snapshot's node records.
//! A snapshot sees the lead-time observations received before its date.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{GspError, Result};
use crate::graph::{
    ActualEvent, EdgeState, Labels, LeadTimeObservation, NetworkGraph, NetworkSnapshot, NodeState, PlannedEvent,
    ShipmentRecord,
};

pub const SNAPSHOTS_FILE: &str = "snapshots.jsonl";
pub const TOPOLOGY_FILE: &str = "topology.jsonl";
pub const NODES_FILE: &str = "nodes.jsonl";
pub const EDGES_FILE: &str = "edges.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const LEADTIMES_FILE: &str = "leadtimes.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub sku: String,
    pub date: NaiveDate,
    pub horizon_days: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyRecord {
    pub sku: String,
    pub src: String,
    pub dst: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub sku: String,
    pub date: NaiveDate,
    pub node: String,
    pub actual_inventory_start: f64,
    /// Weeks `1..W`.
    pub planned_inventory: Vec<f64>,
    /// Weeks `0..W`, as are the remaining vectors.
    pub predicted_demand: Vec<f64>,
    pub planned_incoming: Vec<f64>,
    pub planned_outgoing: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedRecord {
    /// Days after the prediction date.
    pub day: usize,
    pub quantity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub date: NaiveDate,
    pub quantity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub sku: String,
    pub date: NaiveDate,
    pub src: String,
    pub dst: String,
    pub planned: Vec<PlannedRecord>,
    /// Most recent first.
    pub history: Vec<HistoryRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActualRecord {
    pub day: usize,
    pub quantity: f64,
    /// Index into the edge's `planned` list of the event this executed.
    pub planned_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelRecord {
    Edge {
        sku: String,
        date: NaiveDate,
        src: String,
        dst: String,
        daily_outgoing: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        actual_events: Option<Vec<ActualRecord>>,
    },
    Node {
        sku: String,
        date: NaiveDate,
        node: String,
        /// Weeks `0..W`; entry 0 is the start inventory.
        weekly_inventory: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeRecord {
    pub sku: String,
    pub src: String,
    pub dst: String,
    pub ship: NaiveDate,
    pub receive: NaiveDate,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, required: bool) -> Result<Vec<T>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if !required && e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(GspError::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GspError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| GspError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| GspError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n").map_err(|e| GspError::io(path, e))?;
    }
    w.flush().map_err(|e| GspError::io(path, e))
}

type Key = (String, NaiveDate);
type EdgeLabel<'a> = (&'a Vec<f64>, &'a Option<Vec<ActualRecord>>);

fn missing(sku: &str, date: NaiveDate, what: String) -> GspError {
    GspError::Snapshot {
        id: format!("{sku}@{date}"),
        reason: what,
    }
}

/// Reads every snapshot listed in `snapshots.jsonl`, in file order.
pub fn read_dataset(dir: &Path) -> Result<Vec<NetworkSnapshot>> {
    let index: Vec<SnapshotRecord> = read_jsonl(&dir.join(SNAPSHOTS_FILE), true)?;
    let topology: Vec<TopologyRecord> = read_jsonl(&dir.join(TOPOLOGY_FILE), true)?;
    let nodes: Vec<NodeRecord> = read_jsonl(&dir.join(NODES_FILE), true)?;
    let edges: Vec<EdgeRecord> = read_jsonl(&dir.join(EDGES_FILE), true)?;
    let labels: Vec<LabelRecord> = read_jsonl(&dir.join(LABELS_FILE), false)?;
    let leadtimes: Vec<LeadTimeRecord> = read_jsonl(&dir.join(LEADTIMES_FILE), false)?;

    let mut node_order: HashMap<&str, Vec<String>> = HashMap::new();
    for n in &nodes {
        let order = node_order.entry(n.sku.as_str()).or_default();
        if !order.contains(&n.node) {
            order.push(n.node.clone());
        }
    }
    let mut sku_edges: HashMap<&str, Vec<(String, String)>> = HashMap::new();
    for t in &topology {
        sku_edges
            .entry(t.sku.as_str())
            .or_default()
            .push((t.src.clone(), t.dst.clone()));
        let order = node_order.entry(t.sku.as_str()).or_default();
        for name in [&t.src, &t.dst] {
            if !order.contains(name) {
                order.push(name.clone());
            }
        }
    }
    let mut graphs: HashMap<&str, NetworkGraph> = HashMap::new();
    for (sku, names) in &node_order {
        let edges = sku_edges.get(sku).map(Vec::as_slice).unwrap_or(&[]);
        graphs.insert(sku, NetworkGraph::new(*sku, names, edges)?);
    }

    let mut node_map: HashMap<(Key, &str), &NodeRecord> = HashMap::new();
    for n in &nodes {
        node_map.insert(((n.sku.clone(), n.date), n.node.as_str()), n);
    }
    let mut edge_map: HashMap<(Key, &str, &str), &EdgeRecord> = HashMap::new();
    for e in &edges {
        edge_map.insert(((e.sku.clone(), e.date), e.src.as_str(), e.dst.as_str()), e);
    }
    let mut edge_labels: HashMap<(Key, &str, &str), EdgeLabel<'_>> = HashMap::new();
    let mut node_labels: HashMap<(Key, &str), &Vec<f64>> = HashMap::new();
    for l in &labels {
        match l {
            LabelRecord::Edge {
                sku,
                date,
                src,
                dst,
                daily_outgoing,
                actual_events,
            } => {
                edge_labels.insert(
                    ((sku.clone(), *date), src.as_str(), dst.as_str()),
                    (daily_outgoing, actual_events),
                );
            }
            LabelRecord::Node {
                sku,
                date,
                node,
                weekly_inventory,
            } => {
                node_labels.insert(((sku.clone(), *date), node.as_str()), weekly_inventory);
            }
        }
    }
    let mut observations: HashMap<(&str, &str, &str), Vec<LeadTimeObservation>> = HashMap::new();
    for r in &leadtimes {
        observations
            .entry((r.sku.as_str(), r.src.as_str(), r.dst.as_str()))
            .or_default()
            .push(LeadTimeObservation {
                ship: r.ship,
                receive: r.receive,
            });
    }

    let mut snapshots = Vec::with_capacity(index.len());
    for rec in &index {
        let (sku, date) = (rec.sku.as_str(), rec.date);
        let graph = graphs
            .get(sku)
            .ok_or_else(|| missing(sku, date, "SKU has no topology or node records".into()))?
            .clone();
        let key: Key = (rec.sku.clone(), date);
        let node_states = graph
            .nodes()
            .map(|name| {
                let n = node_map
                    .get(&(key.clone(), name))
                    .ok_or_else(|| missing(sku, date, format!("no node record for `{name}`")))?;
                Ok(NodeState {
                    actual_inventory_start: n.actual_inventory_start,
                    planned_inventory: n.planned_inventory.clone(),
                    predicted_demand: n.predicted_demand.clone(),
                    planned_incoming: n.planned_incoming.clone(),
                    planned_outgoing: n.planned_outgoing.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut edge_states = Vec::with_capacity(graph.edge_count());
        let mut leadtime_history = Vec::with_capacity(graph.edge_count());
        for e in 0..graph.edge_count() {
            let (src, dst) = graph.edge_names(e);
            let state = match edge_map.get(&(key.clone(), src, dst)) {
                Some(r) => EdgeState {
                    planned: r
                        .planned
                        .iter()
                        .map(|p| PlannedEvent {
                            offset: p.day,
                            quantity: p.quantity,
                        })
                        .collect(),
                    history: r
                        .history
                        .iter()
                        .map(|h| ShipmentRecord {
                            date: h.date,
                            quantity: h.quantity,
                        })
                        .collect(),
                },
                None => EdgeState::default(),
            };
            edge_states.push(state);
            leadtime_history.push(
                observations
                    .get(&(sku, src, dst))
                    .map(|obs| obs.iter().filter(|o| o.receive < date).copied().collect())
                    .unwrap_or_default(),
            );
        }
        let has_labels = (0..graph.edge_count()).any(|e| {
            let (s, d) = graph.edge_names(e);
            edge_labels.contains_key(&(key.clone(), s, d))
        }) || graph.nodes().any(|n| node_labels.contains_key(&(key.clone(), n)));
        let labels = if has_labels {
            let mut daily_outgoing = Vec::with_capacity(graph.edge_count());
            let mut actual_events = Some(Vec::with_capacity(graph.edge_count()));
            for e in 0..graph.edge_count() {
                let (s, d) = graph.edge_names(e);
                let (daily, actual) = edge_labels
                    .get(&(key.clone(), s, d))
                    .ok_or_else(|| missing(sku, date, format!("no label for edge {s}->{d}")))?;
                daily_outgoing.push((*daily).clone());
                actual_events = match (actual_events, actual) {
                    (Some(mut acc), Some(events)) => {
                        acc.push(
                            events
                                .iter()
                                .map(|a| ActualEvent {
                                    day: a.day,
                                    quantity: a.quantity,
                                    planned_index: a.planned_index,
                                })
                                .collect(),
                        );
                        Some(acc)
                    }
                    _ => None,
                };
            }
            let weekly_inventory = graph
                .nodes()
                .map(|n| {
                    node_labels
                        .get(&(key.clone(), n))
                        .map(|v| (*v).clone())
                        .ok_or_else(|| missing(sku, date, format!("no label for node `{n}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(Labels {
                daily_outgoing,
                weekly_inventory,
                actual_events,
            })
        } else {
            None
        };
        snapshots.push(NetworkSnapshot::new(
            graph,
            date,
            rec.horizon_days,
            node_states,
            edge_states,
            labels,
            leadtime_history,
        )?);
    }
    Ok(snapshots)
}

/// Writes `snaps` as a dataset directory, creating it if needed. Every
/// snapshot of one SKU must share a graph; lead-time observations are taken
/// from each SKU's latest snapshot.
pub fn write_dataset(dir: &Path, snaps: &[NetworkSnapshot]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| GspError::io(dir, e))?;
    let mut first: Vec<&NetworkSnapshot> = Vec::new();
    let mut latest: HashMap<&str, &NetworkSnapshot> = HashMap::new();
    for s in snaps {
        match first.iter().find(|f| f.graph.sku() == s.graph.sku()) {
            Some(f) if f.graph != s.graph => {
                return Err(GspError::Snapshot {
                    id: s.id(),
                    reason: "graph differs from the SKU's first snapshot".into(),
                })
            }
            Some(_) => {}
            None => first.push(s),
        }
        let entry = latest.entry(s.graph.sku()).or_insert(s);
        if s.prediction_date > entry.prediction_date {
            *entry = s;
        }
    }

    write_jsonl(
        &dir.join(SNAPSHOTS_FILE),
        snaps.iter().map(|s| SnapshotRecord {
            sku: s.graph.sku().to_string(),
            date: s.prediction_date,
            horizon_days: s.horizon_days,
        }),
    )?;
    write_jsonl(
        &dir.join(TOPOLOGY_FILE),
        first.iter().flat_map(|s| {
            (0..s.graph.edge_count()).map(|e| {
                let (src, dst) = s.graph.edge_names(e);
                TopologyRecord {
                    sku: s.graph.sku().to_string(),
                    src: src.to_string(),
                    dst: dst.to_string(),
                }
            })
        }),
    )?;
    write_jsonl(
        &dir.join(NODES_FILE),
        snaps.iter().flat_map(|s| {
            s.graph.nodes().zip(&s.node_states).map(|(name, n)| NodeRecord {
                sku: s.graph.sku().to_string(),
                date: s.prediction_date,
                node: name.to_string(),
                actual_inventory_start: n.actual_inventory_start,
                planned_inventory: n.planned_inventory.clone(),
                predicted_demand: n.predicted_demand.clone(),
                planned_incoming: n.planned_incoming.clone(),
                planned_outgoing: n.planned_outgoing.clone(),
            })
        }),
    )?;
    write_jsonl(
        &dir.join(EDGES_FILE),
        snaps.iter().flat_map(|s| {
            s.edge_states.iter().enumerate().map(|(e, state)| {
                let (src, dst) = s.graph.edge_names(e);
                EdgeRecord {
                    sku: s.graph.sku().to_string(),
                    date: s.prediction_date,
                    src: src.to_string(),
                    dst: dst.to_string(),
                    planned: state
                        .planned
                        .iter()
                        .map(|p| PlannedRecord {
                            day: p.offset,
                            quantity: p.quantity,
                        })
                        .collect(),
                    history: state
                        .history
                        .iter()
                        .map(|h| HistoryRecord {
                            date: h.date,
                            quantity: h.quantity,
                        })
                        .collect(),
                }
            })
        }),
    )?;
    write_jsonl(
        &dir.join(LABELS_FILE),
        snaps
            .iter()
            .filter_map(|s| s.labels.as_ref().map(|l| (s, l)))
            .flat_map(|(s, l)| {
                let sku = s.graph.sku().to_string();
                let edges = l.daily_outgoing.iter().enumerate().map({
                    let sku = sku.clone();
                    move |(e, daily)| {
                        let (src, dst) = s.graph.edge_names(e);
                        LabelRecord::Edge {
                            sku: sku.clone(),
                            date: s.prediction_date,
                            src: src.to_string(),
                            dst: dst.to_string(),
                            daily_outgoing: daily.clone(),
                            actual_events: l.actual_events.as_ref().map(|a| {
                                a[e].iter()
                                    .map(|x| ActualRecord {
                                        day: x.day,
                                        quantity: x.quantity,
                                        planned_index: x.planned_index,
                                    })
                                    .collect()
                            }),
                        }
                    }
                });
                let nodes = s
                    .graph
                    .nodes()
                    .zip(&l.weekly_inventory)
                    .map(move |(name, inv)| LabelRecord::Node {
                        sku: sku.clone(),
                        date: s.prediction_date,
                        node: name.to_string(),
                        weekly_inventory: inv.clone(),
                    });
                edges.chain(nodes).collect::<Vec<_>>()
            }),
    )?;
    write_jsonl(
        &dir.join(LEADTIMES_FILE),
        first.iter().flat_map(|f| {
            let s = latest[f.graph.sku()];
            s.leadtime_history.iter().enumerate().flat_map(move |(e, obs)| {
                let (src, dst) = s.graph.edge_names(e);
                obs.iter().map(move |o| LeadTimeRecord {
                    sku: s.graph.sku().to_string(),
                    src: src.to_string(),
                    dst: dst.to_string(),
                    ship: o.ship,
                    receive: o.receive,
                })
            })
        }),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_dataset, SynthConfig};

    #[test]
    fn round_trip_is_exact() {
        let cfg = SynthConfig {
            skus: 3,
            weeks: 5,
            ..SynthConfig::default()
        };
        let snaps = generate_dataset(&cfg, 21).unwrap().snapshots;
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &snaps).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, snaps);
    }

    #[test]
    fn unlabeled_snapshots_load_without_labels() {
        let cfg = SynthConfig {
            skus: 1,
            weeks: 2,
            ..SynthConfig::default()
        };
        let mut snaps = generate_dataset(&cfg, 2).unwrap().snapshots;
        snaps.iter_mut().for_each(|s| s.labels = None);
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &snaps).unwrap();
        fs::remove_file(dir.path().join(LABELS_FILE)).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), snaps);
    }

    #[test]
    fn malformed_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(SNAPSHOTS_FILE),
            "{\"sku\":\"A\",\"date\":\"2024-01-01\",\"horizon_days\":28}\nnot json\n",
        )
        .unwrap();
        fs::write(dir.path().join(TOPOLOGY_FILE), "").unwrap();
        fs::write(dir.path().join(NODES_FILE), "").unwrap();
        fs::write(dir.path().join(EDGES_FILE), "").unwrap();
        match read_dataset(dir.path()) {
            Err(GspError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_required_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(GspError::Io { .. })));
    }

    #[test]
    fn missing_node_record_is_reported() {
        let cfg = SynthConfig {
            skus: 1,
            weeks: 2,
            ..SynthConfig::default()
        };
        let snaps = generate_dataset(&cfg, 2).unwrap().snapshots;
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &snaps).unwrap();
        let path = dir.path().join(NODES_FILE);
        let text = fs::read_to_string(&path).unwrap();
        let kept: Vec<&str> = text.lines().skip(1).collect();
        fs::write(&path, kept.join("\n")).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(GspError::Snapshot { .. })));
    }
}
