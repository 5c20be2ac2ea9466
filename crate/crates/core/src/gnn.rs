//! Edge-featured dynamic graph attention and the two-direction node
//! embedding.
//!
//! For node `i` with parents `j`, each head scores
//! `o_ij = c . LeakyReLU(W0 h_i + W1 h_j + W2 e_ji)` and `o_ii` with a zero
//! edge feature, normalizes the scores over `{i} + parents(i)`, and
//! aggregates `a_ii W0 h_i + sum_j a_ij (W1 h_j + W2 e_ji)`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{GspError, Result};
use crate::graph::NetworkGraph;
use crate::nn::{glorot, Parameters, DEFAULT_LEAKY_SLOPE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatConfig {
    pub layer_widths: Vec<usize>,
    pub heads: usize,
    pub slope: f64,
}

impl Default for GatConfig {
    fn default() -> Self {
        GatConfig {
            layer_widths: vec![128, 32],
            heads: 3,
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }
}

/// Weights of one attention layer; all heads are packed side by side, so
/// `w_*` are `[in, heads * out]` and `attention` is `[1, heads * out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GatLayer {
    pub w_self: Tensor,
    pub w_neighbor: Tensor,
    pub w_edge: Tensor,
    pub attention: Tensor,
    pub heads: usize,
    pub out_dim: usize,
    /// Hidden layers concatenate heads and apply LeakyReLU; the final layer
    /// averages heads with no activation.
    pub concat: bool,
    pub slope: f64,
}

impl GatLayer {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        edge_dim: usize,
        out_dim: usize,
        heads: usize,
        concat: bool,
        slope: f64,
        rng: &mut R,
    ) -> Self {
        let width = heads * out_dim;
        GatLayer {
            w_self: glorot(in_dim, width, rng),
            w_neighbor: glorot(in_dim, width, rng),
            w_edge: glorot(edge_dim, width, rng),
            attention: glorot(1, width, rng),
            heads,
            out_dim,
            concat,
            slope,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w_self.rows()
    }

    pub fn edge_dim(&self) -> usize {
        self.w_edge.rows()
    }

    pub fn output_width(&self) -> usize {
        if self.concat {
            self.heads * self.out_dim
        } else {
            self.out_dim
        }
    }

    pub fn register(&self, tape: &mut Tape) -> GatLayerVars {
        GatLayerVars {
            w_self: tape.leaf(self.w_self.clone()),
            w_neighbor: tape.leaf(self.w_neighbor.clone()),
            w_edge: tape.leaf(self.w_edge.clone()),
            attention: tape.leaf(self.attention.clone()),
            heads: self.heads,
            out_dim: self.out_dim,
            concat: self.concat,
            slope: self.slope,
        }
    }
}

/// Edge lists in the form the attention layer consumes. Self-loops are
/// appended after the real edges: row `m + i` of the augmented list is
/// node `i` attending to itself.
#[derive(Clone, Debug)]
pub struct GraphIndex {
    nodes: usize,
    src: Arc<Vec<usize>>,
    dst: Arc<Vec<usize>>,
    dst_augmented: Arc<Vec<usize>>,
}

impl GraphIndex {
    pub fn new(nodes: usize, edges: &[(usize, usize)]) -> Self {
        let src: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let dst: Vec<usize> = edges.iter().map(|e| e.1).collect();
        let mut dst_augmented = dst.clone();
        dst_augmented.extend(0..nodes);
        GraphIndex {
            nodes,
            src: Arc::new(src),
            dst: Arc::new(dst),
            dst_augmented: Arc::new(dst_augmented),
        }
    }

    pub fn of(graph: &NetworkGraph) -> Self {
        GraphIndex::new(graph.node_count(), graph.edges())
    }

    /// Same edge order with directions flipped, so edge features line up.
    pub fn reversed(&self) -> Self {
        let edges: Vec<(usize, usize)> = self.src.iter().zip(self.dst.iter()).map(|(&s, &d)| (d, s)).collect();
        GraphIndex::new(self.nodes, &edges)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> usize {
        self.src.len()
    }
}

pub struct GatLayerVars {
    w_self: Var,
    w_neighbor: Var,
    w_edge: Var,
    attention: Var,
    heads: usize,
    out_dim: usize,
    concat: bool,
    slope: f64,
}

impl GatLayerVars {
    fn vars(&self) -> [Var; 4] {
        [self.w_self, self.w_neighbor, self.w_edge, self.attention]
    }

    /// Returns the layer output and the `[edges + nodes, heads]` attention
    /// weights in augmented-edge order.
    pub fn forward(&self, tape: &mut Tape, h: Var, e: Var, index: &GraphIndex) -> Result<(Var, Var)> {
        let (k, f) = (self.heads, self.out_dim);
        let width = k * f;
        let m = index.edges();
        if tape.value(e).rows() != m {
            return Err(GspError::shape("gat edge features", tape.value(e).shape(), &[m]));
        }
        if tape.value(h).rows() != index.nodes() {
            return Err(GspError::shape(
                "gat node features",
                tape.value(h).shape(),
                &[index.nodes()],
            ));
        }

        let p_self = tape.matmul(h, self.w_self)?;
        let p_neighbor = tape.matmul(h, self.w_neighbor)?;
        let p_edge = tape.matmul(e, self.w_edge)?;

        let from_parent = tape.gather_rows(p_neighbor, index.src.clone())?;
        let neighbor_msg = tape.add(from_parent, p_edge)?;
        let self_at_dst = tape.gather_rows(p_self, index.dst.clone())?;
        let z_edges = tape.add(self_at_dst, neighbor_msg)?;
        let z_self = tape.add(p_self, p_neighbor)?;
        let z = tape.concat_rows(&[z_edges, z_self])?;

        let act = tape.leaky_relu(z, self.slope);
        let weighted = tape.mul_row(act, self.attention)?;
        let block = tape.constant(head_blocks(k, f));
        let scores = tape.matmul(weighted, block)?;
        let alpha = tape.segment_softmax(scores, index.dst_augmented.clone(), index.nodes())?;

        let messages = tape.concat_rows(&[neighbor_msg, p_self])?;
        let block_t = tape.constant(head_blocks(k, f).transpose());
        let alpha_wide = tape.matmul(alpha, block_t)?;
        let weighted_msgs = tape.mul(messages, alpha_wide)?;
        let agg = tape.scatter_add_rows(weighted_msgs, index.dst_augmented.clone(), index.nodes())?;

        let out = if self.concat {
            tape.leaky_relu(agg, self.slope)
        } else {
            let avg = tape.constant(head_average(k, f));
            tape.matmul(agg, avg)?
        };
        debug_assert_eq!(tape.value(agg).cols(), width);
        Ok((out, alpha))
    }
}

/// `[heads * out, heads]` indicator of which packed column belongs to which head.
fn head_blocks(heads: usize, out: usize) -> Tensor {
    let mut t = Tensor::zeros(heads * out, heads);
    for head in 0..heads {
        for c in 0..out {
            t.data_mut()[(head * out + c) * heads + head] = 1.0;
        }
    }
    t
}

/// `[heads * out, out]` map averaging the heads.
fn head_average(heads: usize, out: usize) -> Tensor {
    let mut t = Tensor::zeros(heads * out, out);
    for head in 0..heads {
        for c in 0..out {
            t.data_mut()[(head * out + c) * out + c] = 1.0 / heads as f64;
        }
    }
    t
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatStack {
    pub layers: Vec<GatLayer>,
}

impl GatStack {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, edge_dim: usize, config: &GatConfig, rng: &mut R) -> Result<Self> {
        if config.layer_widths.is_empty() || config.heads == 0 {
            return Err(GspError::Config(
                "attention stack needs at least one layer and one head".into(),
            ));
        }
        let last = config.layer_widths.len() - 1;
        let mut layers = Vec::with_capacity(config.layer_widths.len());
        let mut dim = in_dim;
        for (i, &width) in config.layer_widths.iter().enumerate() {
            let layer = GatLayer::new(dim, edge_dim, width, config.heads, i < last, config.slope, rng);
            dim = layer.output_width();
            layers.push(layer);
        }
        Ok(GatStack { layers })
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().map_or(0, GatLayer::output_width)
    }

    pub fn register(&self, tape: &mut Tape) -> Vec<GatLayerVars> {
        self.layers.iter().map(|l| l.register(tape)).collect()
    }

    pub(crate) fn check_dims(&self, node_dim: usize, edge_dim: usize) -> Result<()> {
        let first = &self.layers[0];
        if first.in_dim() != node_dim {
            return Err(GspError::shape("gat node features", &[node_dim], &[first.in_dim()]));
        }
        if first.edge_dim() != edge_dim {
            return Err(GspError::shape("gat edge features", &[edge_dim], &[first.edge_dim()]));
        }
        Ok(())
    }
}

impl Parameters for GatStack {
    fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::with_capacity(4 * self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("{i}.w_self"), &l.w_self));
            out.push((format!("{i}.w_neighbor"), &l.w_neighbor));
            out.push((format!("{i}.w_edge"), &l.w_edge));
            out.push((format!("{i}.attention"), &l.attention));
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w_self, &mut l.w_neighbor, &mut l.w_edge, &mut l.attention])
            .collect()
    }
}

pub fn stack_vars(layers: &[GatLayerVars]) -> Vec<Var> {
    layers.iter().flat_map(GatLayerVars::vars).collect()
}

pub fn stack_forward(tape: &mut Tape, layers: &[GatLayerVars], x: Var, e: Var, index: &GraphIndex) -> Result<Var> {
    let mut h = x;
    for layer in layers {
        h = layer.forward(tape, h, e, index)?.0;
    }
    Ok(h)
}

/// `[u_f || u_b]` per node on a tape: the forward stack runs on `index`, the
/// backward stack on its reversal with the same edge features.
pub fn embed_on_tape(
    tape: &mut Tape,
    forward: &[GatLayerVars],
    backward: &[GatLayerVars],
    x: Var,
    e: Var,
    index: &GraphIndex,
) -> Result<Var> {
    let u_f = stack_forward(tape, forward, x, e, index)?;
    let u_b = stack_forward(tape, backward, x, e, &index.reversed())?;
    tape.concat_cols(&[u_f, u_b])
}

/// One attention layer on `graph`: node features `[nodes, in]` and edge
/// features `[edges, edge_dim]` in graph edge order.
pub fn gat_layer(h: &Tensor, e: &Tensor, graph: &NetworkGraph, params: &GatLayer) -> Result<Tensor> {
    Ok(gat_layer_with_attention(h, e, graph, params)?.0)
}

/// Like [`gat_layer`], also returning attention weights `[edges + nodes, heads]`
/// (real edges first, then each node's self-loop).
pub fn gat_layer_with_attention(
    h: &Tensor,
    e: &Tensor,
    graph: &NetworkGraph,
    params: &GatLayer,
) -> Result<(Tensor, Tensor)> {
    if h.cols() != params.in_dim() {
        return Err(GspError::shape("gat node features", h.shape(), &[params.in_dim()]));
    }
    if e.cols() != params.edge_dim() {
        return Err(GspError::shape("gat edge features", e.shape(), &[params.edge_dim()]));
    }
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let x = tape.constant(h.clone());
    let ev = tape.constant(e.clone());
    let (out, alpha) = vars.forward(&mut tape, x, ev, &GraphIndex::of(graph))?;
    Ok((tape.value(out).clone(), tape.value(alpha).clone()))
}

/// Node embedding `[nodes, 2B]` from a forward and a backward stack.
pub fn embed_bidirectional(
    x: &Tensor,
    a: &Tensor,
    graph: &NetworkGraph,
    forward: &GatStack,
    backward: &GatStack,
) -> Result<Tensor> {
    forward.check_dims(x.cols(), a.cols())?;
    backward.check_dims(x.cols(), a.cols())?;
    let mut tape = Tape::new();
    let f = forward.register(&mut tape);
    let b = backward.register(&mut tape);
    let xv = tape.constant(x.clone());
    let ev = tape.constant(a.clone());
    let u = embed_on_tape(&mut tape, &f, &b, xv, ev, &GraphIndex::of(graph))?;
    Ok(tape.value(u).clone())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn features(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut r = rng(seed);
        Tensor::matrix(
            rows,
            cols,
            (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn small_config() -> GatConfig {
        GatConfig {
            layer_widths: vec![6, 4],
            heads: 2,
            slope: 0.01,
        }
    }

    #[test]
    fn single_node_reduces_to_self_transform() {
        let g = NetworkGraph::new("s", &["A"], &[] as &[(&str, &str)]).unwrap();
        let h = features(1, 3, 1);
        for concat in [true, false] {
            let layer = GatLayer::new(3, 2, 4, 2, concat, 0.01, &mut rng(2));
            let (out, alpha) = gat_layer_with_attention(&h, &Tensor::zeros(0, 2), &g, &layer).unwrap();
            assert!(alpha.data().iter().all(|&a| a == 1.0));
            let p = h.matmul(&layer.w_self).unwrap();
            let expected: Vec<f64> = if concat {
                p.data().iter().map(|&x| if x > 0.0 { x } else { 0.01 * x }).collect()
            } else {
                (0..4).map(|c| (p.at(0, c) + p.at(0, 4 + c)) / 2.0).collect()
            };
            for (a, b) in out.data().iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_nodes_get_identical_outputs() {
        let g = NetworkGraph::new("s", &["A", "B"], &[("A", "B"), ("B", "A")]).unwrap();
        let h = Tensor::from_rows(&[vec![0.3, -0.4, 0.9], vec![0.3, -0.4, 0.9]]).unwrap();
        let e = Tensor::from_rows(&[vec![0.5, 0.1], vec![0.5, 0.1]]).unwrap();
        let layer = GatLayer::new(3, 2, 4, 3, true, 0.01, &mut rng(3));
        let out = gat_layer(&h, &e, &g, &layer).unwrap();
        assert_eq!(out.row_slice(0), out.row_slice(1));
    }

    #[test]
    fn attention_normalizes_per_node() {
        let g = NetworkGraph::new(
            "s",
            &["A", "B", "C", "D"],
            &[("A", "C"), ("B", "C"), ("C", "D"), ("A", "D")],
        )
        .unwrap();
        let h = features(4, 3, 4);
        let e = features(4, 2, 5);
        let layer = GatLayer::new(3, 2, 5, 3, true, 0.01, &mut rng(6));
        let (_, alpha) = gat_layer_with_attention(&h, &e, &g, &layer).unwrap();
        let mut dst: Vec<usize> = g.edges().iter().map(|e| e.1).collect();
        dst.extend(0..4);
        for node in 0..4 {
            for head in 0..3 {
                let total: f64 = dst
                    .iter()
                    .enumerate()
                    .filter(|(_, &d)| d == node)
                    .map(|(r, _)| alpha.at(r, head))
                    .sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let g = NetworkGraph::new("s", &["A", "B"], &[("A", "B")]).unwrap();
        let layer = GatLayer::new(3, 2, 4, 1, true, 0.01, &mut rng(1));
        assert!(gat_layer(&features(2, 4, 1), &features(1, 2, 1), &g, &layer).is_err());
        assert!(gat_layer(&features(2, 3, 1), &features(1, 3, 1), &g, &layer).is_err());
    }

    #[test]
    fn edgeless_graph_embeds_each_direction_alike() {
        let g = NetworkGraph::new("s", &["A", "B", "C"], &[] as &[(&str, &str)]).unwrap();
        let stack = GatStack::new(3, 2, &small_config(), &mut rng(7)).unwrap();
        let u = embed_bidirectional(&features(3, 3, 8), &Tensor::zeros(0, 2), &g, &stack, &stack).unwrap();
        let b = stack.embedding_dim();
        assert_eq!(u.cols(), 2 * b);
        for v in 0..3 {
            assert_eq!(&u.row_slice(v)[..b], &u.row_slice(v)[b..]);
        }
    }

    #[test]
    fn default_widths_give_64_wide_embeddings() {
        let g = NetworkGraph::new("s", &["A", "B"], &[("A", "B")]).unwrap();
        let cfg = GatConfig::default();
        let f = GatStack::new(16, 15, &cfg, &mut rng(1)).unwrap();
        let b = GatStack::new(16, 15, &cfg, &mut rng(2)).unwrap();
        let u = embed_bidirectional(&features(2, 16, 3), &features(1, 15, 4), &g, &f, &b).unwrap();
        assert_eq!(u.shape(), &[2, 64]);
        assert!(u.is_finite());
    }

    #[test]
    fn zero_feature_edge_keeps_outputs_finite() {
        let g = NetworkGraph::new("s", &["A", "B", "C"], &[("A", "B"), ("C", "B")]).unwrap();
        let stack = GatStack::new(3, 2, &small_config(), &mut rng(9)).unwrap();
        let mut e = features(2, 2, 10);
        e.data_mut()[2] = 0.0;
        e.data_mut()[3] = 0.0;
        let mut h = features(3, 3, 11);
        for x in h.data_mut()[6..].iter_mut() {
            *x = 0.0;
        }
        let u = embed_bidirectional(&h, &e, &g, &stack, &stack).unwrap();
        assert!(u.is_finite());
    }

    fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
        // Row `i` of the result is row `perm^-1(i)` of `t`, i.e. node `v` moves to `perm[v]`.
        let mut rows = vec![Vec::new(); t.rows()];
        for (v, &p) in perm.iter().enumerate() {
            rows[p] = t.row_slice(v).to_vec();
        }
        Tensor::from_rows(&rows).unwrap()
    }

    proptest! {
        #[test]
        fn embeddings_are_permutation_equivariant(seed in 0u64..200, n in 2usize..6) {
            let mut r = rng(seed);
            let mut edges = Vec::new();
            for a in 0..n {
                for b in 0..n {
                    if a != b && r.random_bool(0.35) {
                        edges.push((a, b));
                    }
                }
            }
            if edges.is_empty() {
                edges.push((0, 1));
            }
            let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
            let named: Vec<(String, String)> = edges.iter().map(|&(a, b)| (names[a].clone(), names[b].clone())).collect();
            let g = NetworkGraph::new("p", &names, &named).unwrap();

            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, r.random_range(0..=i));
            }
            let mut permuted_names = vec![String::new(); n];
            for (v, &p) in perm.iter().enumerate() {
                permuted_names[p] = names[v].clone();
            }
            let g2 = NetworkGraph::new("p", &permuted_names, &named).unwrap();

            let x = features(n, 3, seed + 1);
            let e = features(edges.len(), 2, seed + 2);
            let f = GatStack::new(3, 2, &small_config(), &mut rng(seed + 3)).unwrap();
            let b = GatStack::new(3, 2, &small_config(), &mut rng(seed + 4)).unwrap();
            let u = embed_bidirectional(&x, &e, &g, &f, &b).unwrap();
            let u2 = embed_bidirectional(&permute_rows(&x, &perm), &e, &g2, &f, &b).unwrap();
            let expected = permute_rows(&u, &perm);
            for (a, b) in u2.data().iter().zip(expected.data()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
