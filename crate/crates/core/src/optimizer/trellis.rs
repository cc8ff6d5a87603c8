//! Video-level search: a layered graph whose layer `t` holds the shortlisted
//! combinations of frame `t`.
//!
//! A source connects to every node of layer 0, every node of the last layer
//! connects to a sink, and consecutive layers are fully connected. The edge
//! entering node `(t, k)` costs the node's own (unary) cost plus, for `t > 0`,
//! the transition cost from its predecessor. Transition costs may be negative
//! (the regularization term is a negative IoU), so each layer adds a uniform
//! shift to all of its incoming edges. Every source-to-sink path crosses
//! every layer once, hence the shifts sum to the same constant on every path
//! and the argmin is unchanged.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::error::{Error, Result};
use crate::losses::{LossWeights, SceneEvaluator};

use super::{EvalCounters, FrameShortlist};

/// Cost model of a layered graph.
pub trait TrellisCosts {
    fn num_layers(&self) -> usize;
    fn layer_len(&self, t: usize) -> usize;
    /// Unshifted cost of entering node `k` of layer `t`.
    fn node_cost(&self, t: usize, k: usize) -> f64;
    /// A value no larger than any `transition_cost(t, _, _)`.
    fn transition_floor(&self, t: usize) -> f64;
    /// Unshifted cost of moving from node `from` of layer `t` to node `to` of
    /// layer `t + 1`.
    fn transition_cost(&mut self, t: usize, from: usize, to: usize) -> Result<f64>;
}

pub struct Trellis<C> {
    costs: C,
    shifts: Vec<f64>,
    edges_relaxed: u64,
}

/// A source-to-sink path: one node index per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct TrellisPath {
    pub nodes: Vec<usize>,
    pub shifted_cost: f64,
    /// Path cost with the shifts removed.
    pub cost: f64,
}

impl<C: TrellisCosts> Trellis<C> {
    pub fn new(costs: C) -> Result<Self> {
        let layers = costs.num_layers();
        if layers == 0 {
            return Err(Error::EmptyShortlist { frame: 0 });
        }
        let mut shifts = Vec::with_capacity(layers);
        for t in 0..layers {
            let len = costs.layer_len(t);
            if len == 0 {
                return Err(Error::EmptyShortlist { frame: t });
            }
            let min_node = (0..len)
                .map(|k| costs.node_cost(t, k))
                .fold(f64::INFINITY, f64::min);
            let mut shift = (-min_node).max(0.0);
            if t > 0 {
                shift += (-costs.transition_floor(t - 1)).max(0.0);
            }
            shifts.push(shift);
        }
        Ok(Trellis {
            costs,
            shifts,
            edges_relaxed: 0,
        })
    }

    pub fn costs(&self) -> &C {
        &self.costs
    }

    pub fn costs_mut(&mut self) -> &mut C {
        &mut self.costs
    }

    pub fn into_costs(self) -> C {
        self.costs
    }

    pub fn num_layers(&self) -> usize {
        self.shifts.len()
    }

    pub fn layer_len(&self, t: usize) -> usize {
        self.costs.layer_len(t)
    }

    /// Shift added to every edge entering layer `t`.
    pub fn shift(&self, t: usize) -> f64 {
        self.shifts[t]
    }

    pub fn total_shift(&self) -> f64 {
        self.shifts.iter().sum()
    }

    pub fn edges_relaxed(&self) -> u64 {
        self.edges_relaxed
    }

    fn source_edge(&mut self, k: usize) -> f64 {
        self.edges_relaxed += 1;
        self.costs.node_cost(0, k) + self.shifts[0]
    }

    /// Shifted cost of the edge `(t, from) -> (t + 1, to)`.
    pub fn edge_cost(&mut self, t: usize, from: usize, to: usize) -> Result<f64> {
        self.edges_relaxed += 1;
        let pair = self.costs.transition_cost(t, from, to)?;
        Ok(self.costs.node_cost(t + 1, to) + pair + self.shifts[t + 1])
    }

    fn sink_edge(&mut self) -> f64 {
        self.edges_relaxed += 1;
        0.0
    }

    fn path_from(&self, pred: &[Vec<usize>], last: usize, shifted_cost: f64) -> TrellisPath {
        let layers = self.num_layers();
        let mut nodes = vec![0; layers];
        nodes[layers - 1] = last;
        for t in (1..layers).rev() {
            nodes[t - 1] = pred[t][nodes[t]];
        }
        TrellisPath {
            nodes,
            shifted_cost,
            cost: shifted_cost - self.total_shift(),
        }
    }
}

#[derive(Clone, Copy)]
struct Entry {
    dist: f64,
    layer: usize,
    node: usize,
}

impl Entry {
    fn key_cmp(&self, other: &Entry) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.layer.cmp(&other.layer))
            .then(self.node.cmp(&other.node))
    }
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

/// Dijkstra over the shifted trellis.
///
/// The queue is drained completely rather than stopping at the sink, so every
/// edge is relaxed exactly once. Ties between equal-distance predecessors go
/// to the lower node index, which makes the result identical to [`viterbi`].
pub fn shortest_path<C: TrellisCosts>(trellis: &mut Trellis<C>) -> Result<TrellisPath> {
    let layers = trellis.num_layers();
    let mut dist: Vec<Vec<f64>> = (0..layers)
        .map(|t| vec![f64::INFINITY; trellis.layer_len(t)])
        .collect();
    let mut pred: Vec<Vec<usize>> = (0..layers)
        .map(|t| vec![usize::MAX; trellis.layer_len(t)])
        .collect();
    let mut done: Vec<Vec<bool>> = (0..layers)
        .map(|t| vec![false; trellis.layer_len(t)])
        .collect();
    let mut heap = BinaryHeap::new();
    for k in 0..trellis.layer_len(0) {
        dist[0][k] = trellis.source_edge(k);
        heap.push(Entry {
            dist: dist[0][k],
            layer: 0,
            node: k,
        });
    }

    let mut sink = (f64::INFINITY, usize::MAX);
    while let Some(Entry { dist: d, layer: t, node: k }) = heap.pop() {
        if done[t][k] {
            continue;
        }
        done[t][k] = true;
        if t + 1 == layers {
            let nd = d + trellis.sink_edge();
            if nd < sink.0 || (nd == sink.0 && k < sink.1) {
                sink = (nd, k);
            }
            continue;
        }
        for to in 0..trellis.layer_len(t + 1) {
            let nd = d + trellis.edge_cost(t, k, to)?;
            let cur = dist[t + 1][to];
            if nd < cur {
                dist[t + 1][to] = nd;
                pred[t + 1][to] = k;
                heap.push(Entry {
                    dist: nd,
                    layer: t + 1,
                    node: to,
                });
            } else if nd == cur && k < pred[t + 1][to] {
                pred[t + 1][to] = k;
            }
        }
    }
    Ok(trellis.path_from(&pred, sink.1, sink.0))
}

/// Exact layer-by-layer dynamic program over the shifted trellis.
pub fn viterbi<C: TrellisCosts>(trellis: &mut Trellis<C>) -> Result<TrellisPath> {
    let layers = trellis.num_layers();
    let mut dist: Vec<f64> = (0..trellis.layer_len(0))
        .map(|k| trellis.source_edge(k))
        .collect();
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); layers];
    for t in 0..layers - 1 {
        let len = trellis.layer_len(t + 1);
        let mut next = vec![f64::INFINITY; len];
        let mut back = vec![usize::MAX; len];
        for (from, &d) in dist.iter().enumerate() {
            for to in 0..len {
                let nd = d + trellis.edge_cost(t, from, to)?;
                if nd < next[to] {
                    next[to] = nd;
                    back[to] = from;
                }
            }
        }
        dist = next;
        pred[t + 1] = back;
    }
    let mut sink = (f64::INFINITY, usize::MAX);
    for (k, &d) in dist.iter().enumerate() {
        let nd = d + trellis.sink_edge();
        if nd < sink.0 {
            sink = (nd, k);
        }
    }
    Ok(trellis.path_from(&pred, sink.1, sink.0))
}

/// Trellis costs of a scene: node cost `lambda_i * L_I`, transition cost
/// `lambda_f * L_F + lambda_p * L_p`, evaluated on first use and cached.
pub struct SceneCosts<'e, 's> {
    evaluator: &'e SceneEvaluator<'s>,
    shortlists: Vec<FrameShortlist>,
    weights: LossWeights,
    cache: HashMap<(usize, usize, usize), (f64, f64)>,
    pair_evaluations: u64,
}

impl<'e, 's> SceneCosts<'e, 's> {
    pub fn shortlists(&self) -> &[FrameShortlist] {
        &self.shortlists
    }

    pub fn pair_evaluations(&self) -> u64 {
        self.pair_evaluations
    }

    /// `(l_f, l_p)` of a transition, computing it if it was never relaxed.
    pub fn transition_terms(&mut self, t: usize, from: usize, to: usize) -> Result<(f64, f64)> {
        if let Some(&terms) = self.cache.get(&(t, from, to)) {
            return Ok(terms);
        }
        let a = self.shortlists[t].combos[from].selection;
        let b = self.shortlists[t + 1].combos[to].selection;
        let terms = self.evaluator.transition(t, a, b)?;
        self.pair_evaluations += 1;
        self.cache.insert((t, from, to), terms);
        Ok(terms)
    }
}

impl TrellisCosts for SceneCosts<'_, '_> {
    fn num_layers(&self) -> usize {
        self.shortlists.len()
    }

    fn layer_len(&self, t: usize) -> usize {
        self.shortlists[t].combos.len()
    }

    fn node_cost(&self, t: usize, k: usize) -> f64 {
        self.weights.lambda_i * self.shortlists[t].combos[k].unary_li
    }

    fn transition_floor(&self, _t: usize) -> f64 {
        // L_F >= 0 and L_p >= -1
        -self.weights.lambda_p
    }

    fn transition_cost(&mut self, t: usize, from: usize, to: usize) -> Result<f64> {
        let (l_f, l_p) = self.transition_terms(t, from, to)?;
        Ok(self.weights.lambda_f * l_f + self.weights.lambda_p * l_p)
    }
}

pub fn build_trellis<'e, 's>(
    evaluator: &'e SceneEvaluator<'s>,
    shortlists: Vec<FrameShortlist>,
    weights: &LossWeights,
) -> Result<Trellis<SceneCosts<'e, 's>>> {
    if shortlists.len() != evaluator.num_frames() {
        return Err(Error::IndexOutOfRange {
            index: shortlists.len(),
            len: evaluator.num_frames(),
        });
    }
    Trellis::new(SceneCosts {
        evaluator,
        shortlists,
        weights: *weights,
        cache: HashMap::new(),
        pair_evaluations: 0,
    })
}

pub(crate) fn add_trellis_counters<C: TrellisCosts>(trellis: &Trellis<C>, counters: &mut EvalCounters) {
    counters.trellis_edges_relaxed += trellis.edges_relaxed();
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-assigned costs.
    struct Table {
        nodes: Vec<Vec<f64>>,
        edges: Vec<Vec<Vec<f64>>>,
    }

    impl TrellisCosts for Table {
        fn num_layers(&self) -> usize {
            self.nodes.len()
        }
        fn layer_len(&self, t: usize) -> usize {
            self.nodes[t].len()
        }
        fn node_cost(&self, t: usize, k: usize) -> f64 {
            self.nodes[t][k]
        }
        fn transition_floor(&self, t: usize) -> f64 {
            self.edges[t]
                .iter()
                .flatten()
                .copied()
                .fold(f64::INFINITY, f64::min)
        }
        fn transition_cost(&mut self, t: usize, from: usize, to: usize) -> Result<f64> {
            Ok(self.edges[t][from][to])
        }
    }

    fn brute_force(table: &Table) -> (f64, Vec<usize>) {
        let layers = table.nodes.len();
        let mut best = (f64::INFINITY, Vec::new());
        let mut path = vec![0usize; layers];
        loop {
            let mut cost = table.nodes[0][path[0]];
            for t in 1..layers {
                cost += table.nodes[t][path[t]] + table.edges[t - 1][path[t - 1]][path[t]];
            }
            if cost < best.0 {
                best = (cost, path.clone());
            }
            let mut t = 0;
            loop {
                if t == layers {
                    return best;
                }
                path[t] += 1;
                if path[t] < table.nodes[t].len() {
                    break;
                }
                path[t] = 0;
                t += 1;
            }
        }
    }

    #[test]
    fn hand_assigned_k2_t3() {
        let table = Table {
            nodes: vec![vec![1.0, 0.5], vec![0.2, 0.9], vec![0.4, 0.1]],
            edges: vec![
                vec![vec![0.3, -0.3], vec![0.6, 0.1]],
                vec![vec![-0.2, 0.5], vec![0.0, -0.5]],
            ],
        };
        let (cost, nodes) = brute_force(&table);
        // 0.5 + (0.9 + 0.1) + (0.1 - 0.5) = 1.1 via [1, 1, 1]
        assert_eq!(nodes, vec![1, 1, 1]);
        assert!((cost - 1.1).abs() < 1e-12);

        let mut trellis = Trellis::new(table).unwrap();
        let path = shortest_path(&mut trellis).unwrap();
        assert_eq!(path.nodes, nodes);
        assert!((path.cost - cost).abs() < 1e-12);
        assert_eq!(trellis.edges_relaxed(), 2 + 4 + 4 + 2);
    }

    #[test]
    fn single_layer() {
        let mut trellis = Trellis::new(Table {
            nodes: vec![vec![0.7, 0.3, 0.9]],
            edges: vec![],
        })
        .unwrap();
        let path = shortest_path(&mut trellis).unwrap();
        assert_eq!(path.nodes, vec![1]);
        assert_eq!(path.cost, 0.3);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let table = || Table {
            nodes: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            edges: vec![vec![vec![1.0, 1.0], vec![1.0, 1.0]]],
        };
        let a = shortest_path(&mut Trellis::new(table()).unwrap()).unwrap();
        let b = viterbi(&mut Trellis::new(table()).unwrap()).unwrap();
        assert_eq!(a.nodes, vec![0, 0]);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_layer_rejected() {
        let r = Trellis::new(Table {
            nodes: vec![vec![1.0], vec![]],
            edges: vec![vec![vec![]]],
        });
        assert!(matches!(r, Err(Error::EmptyShortlist { frame: 1 })));
    }
}
