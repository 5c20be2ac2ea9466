//! SKU supply networks and the per-day snapshots built on them.

use chrono::NaiveDate;
use indexmap::IndexSet;

use crate::error::{GspError, Result};

/// Directed supply network for one SKU. Nodes keep insertion order, and an
/// edge is stored as a pair of node indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkGraph {
    sku: String,
    nodes: IndexSet<String>,
    edges: Vec<(usize, usize)>,
}

impl NetworkGraph {
    /// Rejects duplicate edges, self-edges and endpoints outside `nodes`.
    pub fn new<S: AsRef<str>>(sku: impl Into<String>, nodes: &[S], edges: &[(S, S)]) -> Result<Self> {
        let sku = sku.into();
        let mut set = IndexSet::with_capacity(nodes.len());
        for n in nodes {
            if !set.insert(n.as_ref().to_string()) {
                return Err(GspError::Graph(format!("duplicate node `{}`", n.as_ref())));
            }
        }
        let mut seen = IndexSet::with_capacity(edges.len());
        let mut out = Vec::with_capacity(edges.len());
        for (s, d) in edges {
            let (s, d) = (s.as_ref(), d.as_ref());
            let si = set
                .get_index_of(s)
                .ok_or_else(|| GspError::UnknownNode(s.to_string()))?;
            let di = set
                .get_index_of(d)
                .ok_or_else(|| GspError::UnknownNode(d.to_string()))?;
            if si == di {
                return Err(GspError::Graph(format!("self-edge on `{s}`")));
            }
            if !seen.insert((si, di)) {
                return Err(GspError::Graph(format!("duplicate edge {s}->{d}")));
            }
            out.push((si, di));
        }
        Ok(NetworkGraph {
            sku,
            nodes: set,
            edges: out,
        })
    }

    pub fn sku(&self) -> &str {
        &self.sku
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(String::as_str)
    }

    pub fn node_name(&self, index: usize) -> &str {
        &self.nodes[index]
    }

    pub fn node_index(&self, name: &str) -> Result<usize> {
        self.nodes
            .get_index_of(name)
            .ok_or_else(|| GspError::UnknownNode(name.to_string()))
    }

    /// Edges as `(source, dest)` node indices.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_names(&self, edge: usize) -> (&str, &str) {
        let (s, d) = self.edges[edge];
        (&self.nodes[s], &self.nodes[d])
    }

    pub fn edge_index(&self, src: &str, dst: &str) -> Option<usize> {
        let s = self.nodes.get_index_of(src)?;
        let d = self.nodes.get_index_of(dst)?;
        self.edges.iter().position(|&e| e == (s, d))
    }

    /// Same nodes and edge order, every direction flipped.
    pub fn reversed(&self) -> NetworkGraph {
        NetworkGraph {
            sku: self.sku.clone(),
            nodes: self.nodes.clone(),
            edges: self.edges.iter().map(|&(s, d)| (d, s)).collect(),
        }
    }

    /// Parents of `node`: every `u` with an edge `u -> node`.
    pub fn neighbors_src(&self, node: &str) -> Result<Vec<&str>> {
        let v = self.node_index(node)?;
        Ok(self
            .edges
            .iter()
            .filter(|e| e.1 == v)
            .map(|e| self.node_name(e.0))
            .collect())
    }

    /// Children of `node`: every `w` with an edge `node -> w`.
    pub fn neighbors_dest(&self, node: &str) -> Result<Vec<&str>> {
        let v = self.node_index(node)?;
        Ok(self
            .edges
            .iter()
            .filter(|e| e.0 == v)
            .map(|e| self.node_name(e.1))
            .collect())
    }

    /// Kahn order over node indices, or `None` when the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.node_count();
        let mut indegree = vec![0usize; n];
        for &(_, d) in &self.edges {
            indegree[d] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for &(s, d) in &self.edges {
                if s == v {
                    indegree[d] -= 1;
                    if indegree[d] == 0 {
                        ready.push(d);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}

/// Reversed copy of `g`; see [`NetworkGraph::reversed`].
pub fn reverse_graph(g: &NetworkGraph) -> NetworkGraph {
    g.reversed()
}

/// Planning state of one node at the prediction time. Weekly vectors are
/// indexed from the prediction week; `planned_inventory` starts at week 1.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeState {
    pub actual_inventory_start: f64,
    pub planned_inventory: Vec<f64>,
    pub predicted_demand: Vec<f64>,
    pub planned_incoming: Vec<f64>,
    pub planned_outgoing: Vec<f64>,
}

impl NodeState {
    /// A node with no plans: zero vectors of the right lengths.
    pub fn idle(weeks: usize, inventory: f64) -> Self {
        NodeState {
            actual_inventory_start: inventory,
            planned_inventory: vec![inventory; weeks.saturating_sub(1)],
            predicted_demand: vec![0.0; weeks],
            planned_incoming: vec![0.0; weeks],
            planned_outgoing: vec![0.0; weeks],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannedEvent {
    /// Days after the prediction day, within the horizon.
    pub offset: usize,
    pub quantity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShipmentRecord {
    pub date: NaiveDate,
    pub quantity: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeState {
    pub planned: Vec<PlannedEvent>,
    /// Past actual shipments, most recent first.
    pub history: Vec<ShipmentRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LeadTimeObservation {
    pub ship: NaiveDate,
    pub receive: NaiveDate,
}

/// One executed shipment inside the horizon, tied to the planned event it
/// realized when that link is known.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActualEvent {
    pub day: usize,
    pub quantity: f64,
    pub planned_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    /// Per edge, length `horizon_days`.
    pub daily_outgoing: Vec<Vec<f64>>,
    /// Per node, length `horizon_weeks`; entry 0 is the start inventory.
    pub weekly_inventory: Vec<Vec<f64>>,
    /// Per edge, when the generator knows the plan-to-actual matching.
    pub actual_events: Option<Vec<Vec<ActualEvent>>>,
}

/// One SKU network at one prediction day. Node and edge vectors follow the
/// graph's index order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSnapshot {
    pub graph: NetworkGraph,
    pub prediction_date: NaiveDate,
    pub horizon_days: usize,
    pub node_states: Vec<NodeState>,
    pub edge_states: Vec<EdgeState>,
    pub labels: Option<Labels>,
    pub leadtime_history: Vec<Vec<LeadTimeObservation>>,
}

impl NetworkSnapshot {
    pub fn new(
        graph: NetworkGraph,
        prediction_date: NaiveDate,
        horizon_days: usize,
        node_states: Vec<NodeState>,
        edge_states: Vec<EdgeState>,
        labels: Option<Labels>,
        leadtime_history: Vec<Vec<LeadTimeObservation>>,
    ) -> Result<Self> {
        let snap = NetworkSnapshot {
            graph,
            prediction_date,
            horizon_days,
            node_states,
            edge_states,
            labels,
            leadtime_history,
        };
        snap.validate()?;
        Ok(snap)
    }

    pub fn id(&self) -> String {
        format!("{}@{}", self.graph.sku(), self.prediction_date)
    }

    pub fn horizon_weeks(&self) -> usize {
        self.horizon_days / 7
    }

    fn invalid(&self, reason: impl Into<String>) -> GspError {
        GspError::Snapshot {
            id: self.id(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.horizon_days;
        if h == 0 || !h.is_multiple_of(7) {
            return Err(self.invalid(format!("horizon {h} is not a positive multiple of 7")));
        }
        let weeks = self.horizon_weeks();
        let (n, m) = (self.graph.node_count(), self.graph.edge_count());
        if self.node_states.len() != n {
            return Err(self.invalid(format!("{} node states for {n} nodes", self.node_states.len())));
        }
        if self.edge_states.len() != m {
            return Err(self.invalid(format!("{} edge states for {m} edges", self.edge_states.len())));
        }
        if self.leadtime_history.len() != m {
            return Err(self.invalid("lead-time history must have one entry per edge"));
        }
        for (v, s) in self.node_states.iter().enumerate() {
            let name = self.graph.node_name(v);
            let vectors: [(&str, &[f64], usize); 4] = [
                ("planned_inventory", &s.planned_inventory, weeks - 1),
                ("predicted_demand", &s.predicted_demand, weeks),
                ("planned_incoming", &s.planned_incoming, weeks),
                ("planned_outgoing", &s.planned_outgoing, weeks),
            ];
            for (field, values, len) in vectors {
                if values.len() != len {
                    return Err(self.invalid(format!(
                        "node {name}: {field} has {} weeks, expected {len}",
                        values.len()
                    )));
                }
                if values.iter().any(|x| !x.is_finite()) {
                    return Err(self.invalid(format!("node {name}: non-finite {field}")));
                }
                if field != "planned_inventory" && values.iter().any(|&x| x < 0.0) {
                    return Err(self.invalid(format!("node {name}: negative {field}")));
                }
            }
            if !s.actual_inventory_start.is_finite() {
                return Err(self.invalid(format!("node {name}: non-finite start inventory")));
            }
        }
        for (e, s) in self.edge_states.iter().enumerate() {
            let (src, dst) = self.graph.edge_names(e);
            for p in &s.planned {
                if p.offset >= h || !(p.quantity >= 0.0) || !p.quantity.is_finite() {
                    return Err(self.invalid(format!(
                        "edge {src}->{dst}: planned event ({}, {}) outside horizon or negative",
                        p.offset, p.quantity
                    )));
                }
            }
            if s.history.windows(2).any(|w| w[0].date < w[1].date) {
                return Err(self.invalid(format!("edge {src}->{dst}: history not ordered by recency")));
            }
            if s.history
                .iter()
                .any(|r| !(r.quantity >= 0.0) || !r.quantity.is_finite())
            {
                return Err(self.invalid(format!("edge {src}->{dst}: negative history quantity")));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.daily_outgoing.len() != m || labels.daily_outgoing.iter().any(|v| v.len() != h) {
                return Err(self.invalid(format!("daily outgoing labels must be {m} vectors of {h} days")));
            }
            if labels.weekly_inventory.len() != n || labels.weekly_inventory.iter().any(|v| v.len() != weeks) {
                return Err(self.invalid(format!("inventory labels must be {n} vectors of {weeks} weeks")));
            }
            let values = labels.daily_outgoing.iter().chain(&labels.weekly_inventory).flatten();
            if values.clone().any(|x| !x.is_finite()) {
                return Err(self.invalid("non-finite label"));
            }
            if let Some(events) = &labels.actual_events {
                if events.len() != m {
                    return Err(self.invalid("actual events must have one list per edge"));
                }
                for (e, list) in events.iter().enumerate() {
                    for a in list {
                        let bad_link = a.planned_index.is_some_and(|i| i >= self.edge_states[e].planned.len());
                        if a.day >= h || !(a.quantity >= 0.0) || bad_link {
                            return Err(self.invalid(format!("edge {e}: invalid actual event {a:?}")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Result<&Labels> {
        self.labels
            .as_ref()
            .ok_or_else(|| self.invalid("snapshot has no labels"))
    }

    /// Largest planned event quantity on any edge.
    pub fn max_planned_quantity(&self) -> f64 {
        self.edge_states
            .iter()
            .flat_map(|e| e.planned.iter().map(|p| p.quantity))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    use super::*;

    fn abc() -> NetworkGraph {
        NetworkGraph::new("s", &["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap()
    }

    fn edge_set(g: &NetworkGraph) -> BTreeSet<(String, String)> {
        (0..g.edge_count())
            .map(|e| {
                let (s, d) = g.edge_names(e);
                (s.to_string(), d.to_string())
            })
            .collect()
    }

    #[test]
    fn reversal_flips_each_edge() {
        let r = reverse_graph(&abc());
        let expected: BTreeSet<_> = [("B", "A"), ("C", "B")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        assert_eq!(edge_set(&r), expected);
        assert_eq!(r.nodes().collect::<Vec<_>>(), vec!["A", "B", "C"]);
    }

    #[test]
    fn reversal_of_edgeless_graph() {
        let g = NetworkGraph::new("s", &["A"], &[] as &[(&str, &str)]).unwrap();
        assert_eq!(g.reversed().edge_count(), 0);
    }

    #[test]
    fn neighbor_queries() {
        let g = NetworkGraph::new("s", &["A", "B", "Z"], &[("A", "B")]).unwrap();
        assert_eq!(g.neighbors_src("B").unwrap(), vec!["A"]);
        assert_eq!(g.neighbors_dest("A").unwrap(), vec!["B"]);
        assert!(g.neighbors_src("Z").unwrap().is_empty());
        assert!(matches!(g.neighbors_src("Q"), Err(GspError::UnknownNode(_))));
    }

    #[test]
    fn construction_rejects_bad_edges() {
        assert!(NetworkGraph::new("s", &["A", "B"], &[("A", "B"), ("A", "B")]).is_err());
        assert!(NetworkGraph::new("s", &["A", "B"], &[("A", "C")]).is_err());
        assert!(NetworkGraph::new("s", &["A", "B"], &[("A", "A")]).is_err());
        assert!(NetworkGraph::new("s", &["A", "A"], &[] as &[(&str, &str)]).is_err());
    }

    #[test]
    fn topological_order_respects_edges() {
        let g = abc();
        assert_eq!(g.topological_order().unwrap(), vec![0, 1, 2]);
        let cyclic = NetworkGraph::new("s", &["A", "B"], &[("A", "B"), ("B", "A")]).unwrap();
        assert!(cyclic.topological_order().is_none());
    }

    fn snapshot_with_labels(daily_len: usize) -> Result<NetworkSnapshot> {
        let g = NetworkGraph::new("s", &["A", "B"], &[("A", "B")]).unwrap();
        NetworkSnapshot::new(
            g,
            NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            14,
            vec![NodeState::idle(2, 5.0), NodeState::idle(2, 0.0)],
            vec![EdgeState::default()],
            Some(Labels {
                daily_outgoing: vec![vec![0.0; daily_len]],
                weekly_inventory: vec![vec![5.0, 5.0], vec![0.0, 0.0]],
                actual_events: None,
            }),
            vec![vec![]],
        )
    }

    #[test]
    fn snapshot_validation_checks_label_lengths() {
        assert!(snapshot_with_labels(14).is_ok());
        assert!(matches!(snapshot_with_labels(13), Err(GspError::Snapshot { .. })));
    }

    #[test]
    fn snapshot_validation_checks_horizon() {
        let mut s = snapshot_with_labels(14).unwrap();
        s.horizon_days = 10;
        assert!(s.validate().is_err());
    }

    fn random_graph() -> impl Strategy<Value = NetworkGraph> {
        (2usize..11).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
                .collect();
            prop::sample::subsequence(pairs.clone(), 0..=pairs.len()).prop_map(move |edges| {
                let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
                let named: Vec<(String, String)> = edges
                    .iter()
                    .map(|&(a, b)| (names[a].clone(), names[b].clone()))
                    .collect();
                NetworkGraph::new("p", &names, &named).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn reversal_is_an_involution(g in random_graph()) {
            prop_assert_eq!(g.reversed().reversed(), g);
        }

        #[test]
        fn src_neighbors_are_dual_under_reversal(g in random_graph()) {
            let r = g.reversed();
            for v in g.nodes() {
                for u in g.nodes() {
                    let forward = g.neighbors_src(v).unwrap().contains(&u);
                    let backward = r.neighbors_src(u).unwrap().contains(&v);
                    prop_assert_eq!(forward, backward);
                }
            }
        }

        #[test]
        fn degree_sums_equal_edge_count(g in random_graph()) {
            let src: usize = g.nodes().map(|v| g.neighbors_src(v).unwrap().len()).sum();
            let dst: usize = g.nodes().map(|v| g.neighbors_dest(v).unwrap().len()).sum();
            prop_assert_eq!(src, g.edge_count());
            prop_assert_eq!(dst, g.edge_count());
        }
    }
}
