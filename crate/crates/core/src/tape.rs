//! Record of forward events with their local partial derivatives.
//!
//! Every scalar produced during a trial (input spike time, post-jump phase,
//! emission time, terminal phase, pseudo input, pseudostate, pseudospike
//! time) is a node. A node lists its parents with `d node / d parent` and the
//! weights it depends on directly with `d node / d w`. Nodes are appended in
//! evaluation order, so parents always precede children.

use crate::error::{Error, Result};

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// Input spike time (leaf).
    Input,
    /// Phase right after a presynaptic spike arrival.
    Jump,
    /// Phase after an arrival that fell inside the guard band.
    GuardedJump,
    /// Ordinary spike time.
    Emission,
    /// Phase at the trial end.
    Terminal,
    /// Weighted sum of presynaptic pseudostates.
    PseudoInput,
    /// Normalized pseudostate `r`.
    Pseudostate,
    /// Pseudospike time past the trial end.
    Pseudo,
}

#[derive(Debug, Clone, Copy)]
struct NodeMeta {
    kind: NodeKind,
    value: f64,
    edges_end: u32,
    weights_end: u32,
}

#[derive(Debug, Clone, Default)]
pub struct EventTape {
    nodes: Vec<NodeMeta>,
    edges: Vec<(NodeId, f64)>,
    weight_edges: Vec<(u32, f64)>,
    /// `(channel, ordinal)` of the first `inputs.len()` nodes.
    inputs: Vec<(u32, u32)>,
}

impl EventTape {
    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(nodes),
            edges: Vec::with_capacity(3 * nodes),
            weight_edges: Vec::with_capacity(nodes),
            inputs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf for the `ordinal`-th spike of input `channel`.
    ///
    /// Input leaves must be pushed before any other node.
    pub fn push_input(&mut self, channel: usize, ordinal: usize, time: f64) -> NodeId {
        debug_assert_eq!(self.inputs.len(), self.nodes.len());
        self.inputs.push((channel as u32, ordinal as u32));
        self.push(NodeKind::Input, time, &[], &[])
    }

    pub fn push(
        &mut self,
        kind: NodeKind,
        value: f64,
        parents: &[(NodeId, f64)],
        weights: &[(u32, f64)],
    ) -> NodeId {
        let id = self.nodes.len() as NodeId;
        debug_assert!(parents.iter().all(|&(p, d)| p < id && d.is_finite()));
        self.edges.extend_from_slice(parents);
        self.weight_edges.extend_from_slice(weights);
        self.nodes.push(NodeMeta {
            kind,
            value,
            edges_end: self.edges.len() as u32,
            weights_end: self.weight_edges.len() as u32,
        });
        id
    }

    /// Appends a node whose parents are given as optional ids.
    pub(crate) fn push_opt(
        &mut self,
        kind: NodeKind,
        value: f64,
        parents: [(Option<NodeId>, f64); 3],
        weight: Option<(u32, f64)>,
    ) -> NodeId {
        let id = self.nodes.len() as NodeId;
        for (p, d) in parents {
            if let Some(p) = p {
                debug_assert!(p < id && d.is_finite());
                self.edges.push((p, d));
            }
        }
        if let Some(w) = weight {
            self.weight_edges.push(w);
        }
        self.nodes.push(NodeMeta {
            kind,
            value,
            edges_end: self.edges.len() as u32,
            weights_end: self.weight_edges.len() as u32,
        });
        id
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id as usize].kind
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.nodes[id as usize].value
    }

    fn edge_range(&self, i: usize) -> (usize, usize) {
        let start = if i == 0 { 0 } else { self.nodes[i - 1].edges_end };
        (start as usize, self.nodes[i].edges_end as usize)
    }

    fn weight_range(&self, i: usize) -> (usize, usize) {
        let start = if i == 0 { 0 } else { self.nodes[i - 1].weights_end };
        (start as usize, self.nodes[i].weights_end as usize)
    }

    /// Parents of a node with their partials.
    pub fn parents(&self, id: NodeId) -> &[(NodeId, f64)] {
        let (a, b) = self.edge_range(id as usize);
        &self.edges[a..b]
    }

    /// Direct weight partials of a node (flat weight indices).
    pub fn weight_partials(&self, id: NodeId) -> &[(u32, f64)] {
        let (a, b) = self.weight_range(id as usize);
        &self.weight_edges[a..b]
    }

    /// `(channel, ordinal)` for each input leaf, in node order.
    pub fn input_leaves(&self) -> &[(u32, u32)] {
        &self.inputs
    }

    /// Reverse accumulation from `seeds`.
    ///
    /// Adds `sum_seed adjoint * d seed / d w` into `d_weights` (flat layout)
    /// and returns the adjoint of every input leaf in node order.
    pub fn accumulate(
        &self,
        seeds: &[(NodeId, f64)],
        d_weights: &mut [f64],
    ) -> Result<Vec<f64>> {
        let n = self.nodes.len();
        let mut adj = vec![0.0; n];
        let mut top = 0usize;
        for &(id, a) in seeds {
            let i = id as usize;
            if i >= n {
                return Err(Error::UnknownNode(i));
            }
            adj[i] += a;
            top = top.max(i + 1);
        }
        for i in (0..top).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let (e0, e1) = self.edge_range(i);
            for &(p, d) in &self.edges[e0..e1] {
                adj[p as usize] += a * d;
            }
            let (w0, w1) = self.weight_range(i);
            for &(w, d) in &self.weight_edges[w0..w1] {
                d_weights[w as usize] += a * d;
            }
        }
        adj.truncate(self.inputs.len());
        Ok(adj)
    }

    /// Checks topological order and finiteness of every partial.
    pub fn is_well_formed(&self) -> bool {
        (0..self.nodes.len()).all(|i| {
            let (e0, e1) = self.edge_range(i);
            let (w0, w1) = self.weight_range(i);
            self.edges[e0..e1]
                .iter()
                .all(|&(p, d)| (p as usize) < i && d.is_finite())
                && self.weight_edges[w0..w1].iter().all(|&(_, d)| d.is_finite())
        })
    }
}
