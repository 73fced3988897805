//! Minimal read-only view over labeled DAGs, shared by the validated
//! [`Sfa`] and the mutable chunk graph used during approximation.

use crate::sfa::{EdgeId, NodeId, Sfa};

pub(crate) trait LabeledDag {
    /// Exclusive upper bound on node ids.
    fn node_bound(&self) -> usize;
    fn out_edges(&self, v: NodeId) -> &[EdgeId];
    fn in_edges(&self, v: NodeId) -> &[EdgeId];
    fn endpoints(&self, e: EdgeId) -> (NodeId, NodeId);
    fn label_count(&self, e: EdgeId) -> usize;
    /// Label `i` of edge `e` with its natural-log probability.
    fn label(&self, e: EdgeId, i: usize) -> (&str, f64);
    /// Total probability of the labels of `e`.
    fn edge_mass(&self, e: EdgeId) -> f64 {
        (0..self.label_count(e))
            .map(|i| self.label(e, i).1.exp())
            .sum()
    }
}

impl LabeledDag for Sfa {
    fn node_bound(&self) -> usize {
        self.node_count()
    }
    fn out_edges(&self, v: NodeId) -> &[EdgeId] {
        Sfa::out_edges(self, v)
    }
    fn in_edges(&self, v: NodeId) -> &[EdgeId] {
        Sfa::in_edges(self, v)
    }
    fn endpoints(&self, e: EdgeId) -> (NodeId, NodeId) {
        let edge = self.edge(e);
        (edge.src, edge.dst)
    }
    fn label_count(&self, e: EdgeId) -> usize {
        self.edge(e).arcs.len()
    }
    fn label(&self, e: EdgeId, i: usize) -> (&str, f64) {
        let a = &self.edge(e).arcs[i];
        (&a.label, a.prob.ln())
    }
    fn edge_mass(&self, e: EdgeId) -> f64 {
        self.edge(e).arcs.iter().map(|a| a.prob).sum()
    }
}

/// Forward retained mass: total probability of all prefixes reaching each
/// node from `start`, visiting nodes in `order` (a topological order).
pub(crate) fn forward_mass<G: LabeledDag>(g: &G, order: &[NodeId], start: NodeId) -> Vec<f64> {
    let mut f = vec![0.0; g.node_bound()];
    f[start as usize] = 1.0;
    for &v in order {
        let fv = f[v as usize];
        if fv == 0.0 {
            continue;
        }
        for &e in g.out_edges(v) {
            let (_, dst) = g.endpoints(e);
            let m = g.edge_mass(e);
            f[dst as usize] += fv * m;
        }
    }
    f
}

/// Backward retained mass: total probability of all suffixes from each node
/// to `fin`.
pub(crate) fn backward_mass<G: LabeledDag>(g: &G, order: &[NodeId], fin: NodeId) -> Vec<f64> {
    let mut b = vec![0.0; g.node_bound()];
    b[fin as usize] = 1.0;
    for &v in order.iter().rev() {
        if v == fin {
            continue;
        }
        let mut acc = 0.0;
        for &e in g.out_edges(v) {
            let (_, dst) = g.endpoints(e);
            let m = g.edge_mass(e);
            acc += m * b[dst as usize];
        }
        b[v as usize] = acc;
    }
    b
}
