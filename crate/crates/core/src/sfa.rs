//! The stochastic finite automaton model.
//!
//! An [`Sfa`] is a DAG with a unique start and final node. Every edge is a
//! distinct ordered node pair carrying one or more [`Arc`]s; an arc emits a
//! non-empty string with a conditional probability. Plain OCR lattices emit
//! single characters; approximated lattices ("generalized" SFAs) emit whole
//! strings and may have outgoing mass below one.
//!
//! Node ids are dense (`0..node_count`). Documents in the `sfa v1` format may
//! use arbitrary integer ids; they are renumbered in ascending order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};

pub type NodeId = u32;
pub type EdgeId = usize;

/// Absolute tolerance for probability comparisons.
pub const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Arc {
    pub label: String,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub arcs: Vec<Arc>,
}

/// Which outgoing-mass condition a graph must satisfy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassCheck {
    /// Every non-final node sums to one.
    Stochastic,
    /// Every non-final node sums to at most one (approximations).
    SubStochastic,
}

#[derive(Clone, Debug)]
pub struct Sfa {
    node_count: usize,
    start: NodeId,
    final_node: NodeId,
    edges: Vec<Edge>,
    out: Vec<Vec<EdgeId>>,
    inc: Vec<Vec<EdgeId>>,
    topo: Vec<NodeId>,
    topo_pos: Vec<usize>,
}

impl PartialEq for Sfa {
    fn eq(&self, other: &Self) -> bool {
        self.node_count == other.node_count
            && self.start == other.start
            && self.final_node == other.final_node
            && self.edges == other.edges
    }
}

/// A graph that has not been validated yet.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawSfa {
    pub node_count: usize,
    pub starts: Vec<NodeId>,
    pub finals: Vec<NodeId>,
    pub arcs: Vec<RawArc>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawArc {
    pub src: NodeId,
    pub dst: NodeId,
    pub label: String,
    pub prob: f64,
}

/// One violated invariant together with its witness.
#[derive(Clone, Debug, PartialEq)]
pub enum Diagnostic {
    MissingStart,
    MultipleStarts(Vec<NodeId>),
    MissingFinal,
    MultipleFinals(Vec<NodeId>),
    StartHasIncoming(NodeId),
    FinalHasOutgoing(NodeId),
    Cycle(NodeId),
    /// A node other than the start without incoming edges.
    NoUniqueStart(NodeId),
    /// A node other than the final node without outgoing edges.
    NoUniqueFinal(NodeId),
    /// Node not on any start→final path.
    Disconnected(NodeId),
    BadProbability {
        src: NodeId,
        dst: NodeId,
        label: String,
        prob: f64,
    },
    EmptyLabel {
        src: NodeId,
        dst: NodeId,
    },
    NodeOutOfRange(NodeId),
    Normalization {
        node: NodeId,
        mass: f64,
    },
    UniquePath {
        node: NodeId,
        first: String,
        second: String,
    },
}

impl Diagnostic {
    pub fn kind(&self) -> &'static str {
        match self {
            Diagnostic::MissingStart => "missing-start",
            Diagnostic::MultipleStarts(_) => "multiple-starts",
            Diagnostic::MissingFinal => "missing-final",
            Diagnostic::MultipleFinals(_) => "multiple-finals",
            Diagnostic::StartHasIncoming(_) => "start-has-incoming",
            Diagnostic::FinalHasOutgoing(_) => "final-has-outgoing",
            Diagnostic::Cycle(_) => "cycle",
            Diagnostic::NoUniqueStart(_) => "no-unique-start",
            Diagnostic::NoUniqueFinal(_) => "no-unique-final",
            Diagnostic::Disconnected(_) => "disconnected",
            Diagnostic::BadProbability { .. } => "bad-probability",
            Diagnostic::EmptyLabel { .. } => "empty-label",
            Diagnostic::NodeOutOfRange(_) => "node-out-of-range",
            Diagnostic::Normalization { .. } => "normalization",
            Diagnostic::UniquePath { .. } => "unique-path-surrogate",
        }
    }

    fn map_nodes(self, f: impl Fn(NodeId) -> u64) -> String {
        match self {
            Diagnostic::MultipleStarts(v) => format!(
                "multiple start nodes {:?}",
                v.into_iter().map(&f).collect::<Vec<_>>()
            ),
            Diagnostic::MultipleFinals(v) => format!(
                "multiple final nodes {:?}",
                v.into_iter().map(&f).collect::<Vec<_>>()
            ),
            Diagnostic::StartHasIncoming(n) => format!("start node {} has incoming edges", f(n)),
            Diagnostic::FinalHasOutgoing(n) => format!("final node {} has outgoing edges", f(n)),
            Diagnostic::Cycle(n) => format!("cycle detected through node {}", f(n)),
            Diagnostic::NoUniqueStart(n) => {
                format!("no unique start: node {} has no incoming edges", f(n))
            }
            Diagnostic::NoUniqueFinal(n) => {
                format!("no unique final: node {} has no outgoing edges", f(n))
            }
            Diagnostic::Disconnected(n) => {
                format!("node {} is not on any start-to-final path", f(n))
            }
            Diagnostic::BadProbability {
                src,
                dst,
                label,
                prob,
            } => format!(
                "arc {}->{} {:?} has probability {} outside (0,1]",
                f(src),
                f(dst),
                label,
                prob
            ),
            Diagnostic::EmptyLabel { src, dst } => {
                format!("arc {}->{} has an empty label", f(src), f(dst))
            }
            Diagnostic::NodeOutOfRange(n) => format!("node {} out of range", f(n)),
            Diagnostic::Normalization { node, mass } => format!(
                "normalization violated at node {}: outgoing mass {} (deficit {:e})",
                f(node),
                mass,
                1.0 - mass
            ),
            Diagnostic::UniquePath {
                node,
                first,
                second,
            } => format!(
                "unique-path surrogate violated at node {}: labels {:?} and {:?} overlap",
                f(node),
                first,
                second
            ),
            d => d.kind().replace('-', " "),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.clone().map_nodes(|n| n as u64))
    }
}

/// Checks every invariant and returns the violations (empty iff valid).
pub fn validate(raw: &RawSfa) -> Vec<Diagnostic> {
    validate_with(raw, MassCheck::Stochastic)
}

pub fn validate_with(raw: &RawSfa, mass: MassCheck) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let n = raw.node_count;

    match raw.starts.len() {
        0 => diags.push(Diagnostic::MissingStart),
        1 => {}
        _ => diags.push(Diagnostic::MultipleStarts(raw.starts.clone())),
    }
    match raw.finals.len() {
        0 => diags.push(Diagnostic::MissingFinal),
        1 => {}
        _ => diags.push(Diagnostic::MultipleFinals(raw.finals.clone())),
    }
    for &v in raw.starts.iter().chain(&raw.finals) {
        if v as usize >= n {
            diags.push(Diagnostic::NodeOutOfRange(v));
        }
    }

    let mut succ: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); n];
    let mut pred: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); n];
    let mut out_mass = vec![0.0f64; n];
    let mut labels: Vec<Vec<&str>> = vec![Vec::new(); n];
    for arc in &raw.arcs {
        if arc.src as usize >= n || arc.dst as usize >= n {
            diags.push(Diagnostic::NodeOutOfRange(arc.src.max(arc.dst)));
            continue;
        }
        if !(arc.prob > 0.0 && arc.prob <= 1.0) {
            diags.push(Diagnostic::BadProbability {
                src: arc.src,
                dst: arc.dst,
                label: arc.label.clone(),
                prob: arc.prob,
            });
        }
        if arc.label.is_empty() {
            diags.push(Diagnostic::EmptyLabel {
                src: arc.src,
                dst: arc.dst,
            });
        }
        succ[arc.src as usize].insert(arc.dst);
        pred[arc.dst as usize].insert(arc.src);
        out_mass[arc.src as usize] += arc.prob;
        labels[arc.src as usize].push(&arc.label);
    }
    if diags
        .iter()
        .any(|d| matches!(d, Diagnostic::NodeOutOfRange(_)))
    {
        return diags;
    }

    // Kahn's algorithm detects cycles.
    let mut indeg: Vec<usize> = pred.iter().map(|p| p.len()).collect();
    let mut stack: Vec<NodeId> = (0..n as NodeId)
        .filter(|&v| indeg[v as usize] == 0)
        .collect();
    let mut seen = 0;
    while let Some(v) = stack.pop() {
        seen += 1;
        for &w in &succ[v as usize] {
            indeg[w as usize] -= 1;
            if indeg[w as usize] == 0 {
                stack.push(w);
            }
        }
    }
    let acyclic = seen == n;
    if !acyclic {
        let witness = (0..n).find(|&v| indeg[v] > 0).unwrap_or(0);
        diags.push(Diagnostic::Cycle(witness as NodeId));
    }

    let start = (raw.starts.len() == 1).then(|| raw.starts[0]);
    let fin = (raw.finals.len() == 1).then(|| raw.finals[0]);
    if let Some(s) = start {
        if !pred[s as usize].is_empty() {
            diags.push(Diagnostic::StartHasIncoming(s));
        }
    }
    if let Some(f) = fin {
        if !succ[f as usize].is_empty() {
            diags.push(Diagnostic::FinalHasOutgoing(f));
        }
    }
    for v in 0..n as NodeId {
        if pred[v as usize].is_empty() && Some(v) != start && !raw.starts.contains(&v) {
            diags.push(Diagnostic::NoUniqueStart(v));
        }
        if succ[v as usize].is_empty() && Some(v) != fin && !raw.finals.contains(&v) {
            diags.push(Diagnostic::NoUniqueFinal(v));
        }
    }
    if let (Some(s), Some(f)) = (start, fin) {
        let fwd = reach_from(s, &succ);
        let bwd = reach_from(f, &pred);
        for v in 0..n {
            if !(fwd[v] && bwd[v]) && pred[v].len() + succ[v].len() > 0 {
                diags.push(Diagnostic::Disconnected(v as NodeId));
            }
        }
    }

    for v in 0..n {
        if Some(v as NodeId) == fin || succ[v].is_empty() {
            continue;
        }
        let m = out_mass[v];
        let bad = match mass {
            MassCheck::Stochastic => (m - 1.0).abs() > PROB_TOLERANCE,
            MassCheck::SubStochastic => m > 1.0 + PROB_TOLERANCE,
        };
        if bad {
            diags.push(Diagnostic::Normalization {
                node: v as NodeId,
                mass: m,
            });
        }
    }

    for (v, ls) in labels.iter_mut().enumerate() {
        ls.sort_unstable();
        for w in ls.windows(2) {
            if w[1].starts_with(w[0]) {
                diags.push(Diagnostic::UniquePath {
                    node: v as NodeId,
                    first: w[0].to_string(),
                    second: w[1].to_string(),
                });
                break;
            }
        }
    }
    diags
}

fn reach_from(root: NodeId, adj: &[BTreeSet<NodeId>]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![root];
    seen[root as usize] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v as usize] {
            if !seen[w as usize] {
                seen[w as usize] = true;
                stack.push(w);
            }
        }
    }
    seen
}

impl Sfa {
    /// Builds a validated SFA, rejecting on the first violated invariant.
    pub fn from_raw(raw: RawSfa, mass: MassCheck) -> Result<Sfa> {
        let diags = validate_with(&raw, mass);
        if !diags.is_empty() {
            return Err(Error::InvalidSfa(diags));
        }
        Ok(Self::build(raw))
    }

    /// Convenience constructor from `(src, dst, label, prob)` tuples.
    pub fn from_arcs<S: Into<String>>(
        node_count: usize,
        start: NodeId,
        final_node: NodeId,
        arcs: impl IntoIterator<Item = (NodeId, NodeId, S, f64)>,
        mass: MassCheck,
    ) -> Result<Sfa> {
        let raw = RawSfa {
            node_count,
            starts: vec![start],
            finals: vec![final_node],
            arcs: arcs
                .into_iter()
                .map(|(src, dst, label, prob)| RawArc {
                    src,
                    dst,
                    label: label.into(),
                    prob,
                })
                .collect(),
        };
        Self::from_raw(raw, mass)
    }

    fn build(raw: RawSfa) -> Sfa {
        let n = raw.node_count;
        let mut grouped: BTreeMap<(NodeId, NodeId), Vec<Arc>> = BTreeMap::new();
        for a in raw.arcs {
            grouped.entry((a.src, a.dst)).or_default().push(Arc {
                label: a.label,
                prob: a.prob,
            });
        }
        let edges: Vec<Edge> = grouped
            .into_iter()
            .map(|((src, dst), arcs)| Edge { src, dst, arcs })
            .collect();
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            out[e.src as usize].push(i);
            inc[e.dst as usize].push(i);
        }
        let topo = kahn_min(n, &out, &inc, &edges);
        let mut topo_pos = vec![0; n];
        for (i, &v) in topo.iter().enumerate() {
            topo_pos[v as usize] = i;
        }
        Sfa {
            node_count: n,
            start: raw.starts[0],
            final_node: raw.finals[0],
            edges,
            out,
            inc,
            topo,
            topo_pos,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }
    pub fn start(&self) -> NodeId {
        self.start
    }
    pub fn final_node(&self) -> NodeId {
        self.final_node
    }
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e]
    }
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
    pub fn arc_count(&self) -> usize {
        self.edges.iter().map(|e| e.arcs.len()).sum()
    }
    pub fn out_edges(&self, v: NodeId) -> &[EdgeId] {
        &self.out[v as usize]
    }
    pub fn in_edges(&self, v: NodeId) -> &[EdgeId] {
        &self.inc[v as usize]
    }
    pub fn find_edge(&self, src: NodeId, dst: NodeId) -> Option<EdgeId> {
        self.out[src as usize]
            .iter()
            .copied()
            .find(|&e| self.edges[e].dst == dst)
    }

    /// Deterministic linear extension (ties by ascending node id).
    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo
    }
    pub fn topo_position(&self, v: NodeId) -> usize {
        self.topo_pos[v as usize]
    }

    /// `u ≤ v` in the reachability order (reflexive).
    pub fn leq(&self, u: NodeId, v: NodeId) -> bool {
        if u == v {
            return true;
        }
        if self.topo_pos[u as usize] > self.topo_pos[v as usize] {
            return false;
        }
        let mut seen = FixedBitSet::with_capacity(self.node_count);
        let mut stack = vec![u];
        while let Some(x) = stack.pop() {
            for &e in &self.out[x as usize] {
                let y = self.edges[e].dst;
                if y == v {
                    return true;
                }
                if !seen.put(y as usize) && self.topo_pos[y as usize] < self.topo_pos[v as usize] {
                    stack.push(y);
                }
            }
        }
        false
    }

    pub fn reachability(&self) -> Reachability {
        Reachability::compute(self.node_count, &self.topo, |v| {
            self.out[v as usize].iter().map(|&e| self.edges[e].dst)
        })
    }

    pub fn to_raw(&self) -> RawSfa {
        RawSfa {
            node_count: self.node_count,
            starts: vec![self.start],
            finals: vec![self.final_node],
            arcs: self
                .edges
                .iter()
                .flat_map(|e| {
                    e.arcs.iter().map(move |a| RawArc {
                        src: e.src,
                        dst: e.dst,
                        label: a.label.clone(),
                        prob: a.prob,
                    })
                })
                .collect(),
        }
    }

    /// Number of labeled start→final paths (saturating).
    pub fn path_count(&self) -> u128 {
        let mut count = vec![0u128; self.node_count];
        count[self.final_node as usize] = 1;
        for &v in self.topo.iter().rev() {
            let mut c = if v == self.final_node { 1u128 } else { 0 };
            for &e in &self.out[v as usize] {
                let edge = &self.edges[e];
                c = c.saturating_add(
                    count[edge.dst as usize].saturating_mul(edge.arcs.len() as u128),
                );
            }
            count[v as usize] = c;
        }
        count[self.start as usize]
    }

    /// Every labeled start→final path, in depth-first order.
    pub fn enumerate_paths(&self, cap: u128) -> Result<Vec<LabeledPath>> {
        let count = self.path_count();
        if count > cap {
            return Err(Error::CapExceeded { count, cap });
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut arcs = Vec::new();
        self.dfs_paths(self.start, &mut arcs, &mut out);
        Ok(out)
    }

    fn dfs_paths(&self, v: NodeId, arcs: &mut Vec<(EdgeId, usize)>, out: &mut Vec<LabeledPath>) {
        if v == self.final_node {
            let mut string = String::new();
            let mut logp = 0.0;
            for &(e, i) in arcs.iter() {
                let a = &self.edges[e].arcs[i];
                string.push_str(&a.label);
                logp += a.prob.ln();
            }
            out.push(LabeledPath {
                arcs: arcs.clone(),
                string,
                logp,
            });
            return;
        }
        for &e in &self.out[v as usize] {
            for i in 0..self.edges[e].arcs.len() {
                arcs.push((e, i));
                self.dfs_paths(self.edges[e].dst, arcs, out);
                arcs.pop();
            }
        }
    }
}

fn kahn_min(n: usize, out: &[Vec<EdgeId>], inc: &[Vec<EdgeId>], edges: &[Edge]) -> Vec<NodeId> {
    let mut indeg: Vec<usize> = inc.iter().map(|i| i.len()).collect();
    let mut heap: BinaryHeap<Reverse<NodeId>> = (0..n as NodeId)
        .filter(|&v| indeg[v as usize] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = heap.pop() {
        order.push(v);
        for &e in &out[v as usize] {
            let w = edges[e].dst as usize;
            indeg[w] -= 1;
            if indeg[w] == 0 {
                heap.push(Reverse(w as NodeId));
            }
        }
    }
    order
}

/// Descendant and ancestor sets (both reflexive).
#[derive(Clone, Debug)]
pub struct Reachability {
    pub desc: Vec<FixedBitSet>,
    pub anc: Vec<FixedBitSet>,
}

impl Reachability {
    pub(crate) fn compute<I: Iterator<Item = NodeId>>(
        n: usize,
        topo: &[NodeId],
        succ: impl Fn(NodeId) -> I,
    ) -> Reachability {
        let mut desc = vec![FixedBitSet::with_capacity(n); n];
        for &v in topo.iter().rev() {
            let mut set = FixedBitSet::with_capacity(n);
            set.insert(v as usize);
            for w in succ(v) {
                set.union_with(&desc[w as usize]);
            }
            desc[v as usize] = set;
        }
        let mut anc = vec![FixedBitSet::with_capacity(n); n];
        for (v, d) in desc.iter().enumerate() {
            for w in d.ones() {
                anc[w].insert(v);
            }
        }
        Reachability { desc, anc }
    }

    pub fn leq(&self, u: NodeId, v: NodeId) -> bool {
        self.desc[u as usize].contains(v as usize)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPath {
    /// `(edge, arc index)` pairs in walk order.
    pub arcs: Vec<(EdgeId, usize)>,
    pub string: String,
    pub logp: f64,
}

impl LabeledPath {
    pub fn prob(&self) -> f64 {
        self.logp.exp()
    }
}

/// Brute-force distribution over emitted strings, by descending probability
/// (ties by string). Strings produced by several paths have their
/// probabilities summed.
pub fn enumerate_all(sfa: &Sfa, cap: u128) -> Result<Vec<(String, f64)>> {
    let mut acc: BTreeMap<String, f64> = BTreeMap::new();
    for p in sfa.enumerate_paths(cap)? {
        *acc.entry(p.string).or_insert(0.0) += p.logp.exp();
    }
    let mut v: Vec<(String, f64)> = acc.into_iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(v)
}

// ---------------------------------------------------------------------------
// sfa v1 text format

/// Parses an `sfa v1` document into a validated SFA.
pub fn parse_sfa(text: &str) -> Result<Sfa> {
    let (raw, ids) = parse_raw(text)?;
    let diags = validate(&raw);
    if diags.is_empty() {
        return Ok(Sfa::build(raw));
    }
    // Report in the document's own node ids.
    let first = diags[0].clone().map_nodes(|n| ids[n as usize]);
    log::debug!("rejecting sfa document: {first}");
    Err(Error::InvalidSfa(diags))
}

/// Parses without validating. Returns the graph and the document id of each
/// dense node.
pub fn parse_raw(text: &str) -> Result<(RawSfa, Vec<u64>)> {
    let mut header = false;
    let mut starts = Vec::new();
    let mut finals = Vec::new();
    let mut arcs: Vec<(u64, u64, String, f64)> = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let toks = tokenize(line, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let syntax = |col: usize, msg: &str| Error::Syntax {
            line: lineno,
            col,
            msg: msg.to_string(),
        };
        let word = |i: usize| -> Result<&Token> {
            toks.get(i)
                .ok_or_else(|| syntax(line.len() + 1, "unexpected end of record"))
        };
        let int = |i: usize| -> Result<u64> {
            let t = word(i)?;
            match &t.kind {
                TokKind::Bare(s) => s.parse().map_err(|_| syntax(t.col, "expected node id")),
                _ => Err(syntax(t.col, "expected node id")),
            }
        };
        let kw = match &toks[0].kind {
            TokKind::Bare(s) => s.as_str(),
            TokKind::Quoted(_) => return Err(syntax(toks[0].col, "expected record keyword")),
        };
        if !header {
            if kw == "sfa" && toks.len() == 2 && toks[1].is_bare("v1") {
                header = true;
                continue;
            }
            return Err(syntax(toks[0].col, "expected header `sfa v1`"));
        }
        let arity = |want: usize| -> Result<()> {
            if toks.len() > want {
                Err(syntax(toks[want].col, "trailing tokens"))
            } else {
                Ok(())
            }
        };
        match kw {
            "start" => {
                starts.push(int(1)?);
                arity(2)?;
            }
            "final" => {
                finals.push(int(1)?);
                arity(2)?;
            }
            "arc" => {
                let src = int(1)?;
                let dst = int(2)?;
                let lt = word(3)?;
                let label = match &lt.kind {
                    TokKind::Quoted(s) => s.clone(),
                    _ => return Err(syntax(lt.col, "expected quoted label")),
                };
                let pt = word(4)?;
                let prob: f64 = match &pt.kind {
                    TokKind::Bare(s) => s
                        .parse()
                        .ok()
                        .filter(|p: &f64| p.is_finite())
                        .ok_or_else(|| syntax(pt.col, "expected decimal probability"))?,
                    _ => return Err(syntax(pt.col, "expected decimal probability")),
                };
                arity(5)?;
                arcs.push((src, dst, label, prob));
            }
            "sfa" => return Err(syntax(toks[0].col, "duplicate header")),
            _ => return Err(syntax(toks[0].col, "unknown record")),
        }
    }
    if !header {
        return Err(Error::Syntax {
            line: 1,
            col: 1,
            msg: "missing header `sfa v1`".into(),
        });
    }

    let mut ids: BTreeSet<u64> = starts.iter().chain(&finals).copied().collect();
    for (s, d, _, _) in &arcs {
        ids.insert(*s);
        ids.insert(*d);
    }
    let ids: Vec<u64> = ids.into_iter().collect();
    let dense = |x: u64| ids.binary_search(&x).expect("collected") as NodeId;
    let raw = RawSfa {
        node_count: ids.len(),
        starts: starts.into_iter().map(dense).collect(),
        finals: finals.into_iter().map(dense).collect(),
        arcs: arcs
            .into_iter()
            .map(|(s, d, label, prob)| RawArc {
                src: dense(s),
                dst: dense(d),
                label,
                prob,
            })
            .collect(),
    };
    Ok((raw, ids))
}

#[derive(Debug)]
struct Token {
    col: usize,
    kind: TokKind,
}

#[derive(Debug)]
enum TokKind {
    Bare(String),
    Quoted(String),
}

impl Token {
    fn is_bare(&self, s: &str) -> bool {
        matches!(&self.kind, TokKind::Bare(b) if b == s)
    }
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Token>> {
    let mut toks = Vec::new();
    let mut chars = line.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        let col = line[..i].chars().count() + 1;
        if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            break;
        } else if c == '"' {
            chars.next();
            let mut s = String::new();
            let mut closed = false;
            while let Some((j, c)) = chars.next() {
                match c {
                    '"' => {
                        closed = true;
                        break;
                    }
                    '\\' => {
                        let esc = match chars.next() {
                            Some((_, '"')) => '"',
                            Some((_, '\\')) => '\\',
                            Some((_, 'n')) => '\n',
                            Some((_, 't')) => '\t',
                            Some((_, 's')) => ' ',
                            _ => {
                                return Err(Error::Syntax {
                                    line: lineno,
                                    col: line[..j].chars().count() + 1,
                                    msg: "invalid escape".into(),
                                })
                            }
                        };
                        s.push(esc);
                    }
                    c => s.push(c),
                }
            }
            if !closed {
                return Err(Error::Syntax {
                    line: lineno,
                    col,
                    msg: "unterminated label".into(),
                });
            }
            toks.push(Token {
                col,
                kind: TokKind::Quoted(s),
            });
        } else {
            let mut s = String::new();
            while let Some(&(_, c)) = chars.peek() {
                if c.is_whitespace() || c == '#' || c == '"' {
                    break;
                }
                s.push(c);
                chars.next();
            }
            toks.push(Token {
                col,
                kind: TokKind::Bare(s),
            });
        }
    }
    Ok(toks)
}

pub fn escape_label(label: &str) -> String {
    let mut s = String::with_capacity(label.len() + 2);
    for c in label.chars() {
        match c {
            '"' => s.push_str("\\\""),
            '\\' => s.push_str("\\\\"),
            '\n' => s.push_str("\\n"),
            '\t' => s.push_str("\\t"),
            ' ' => s.push_str("\\s"),
            c => s.push(c),
        }
    }
    s
}

/// Inverse of [`escape_label`].
pub fn unescape_label(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '"' => '"',
            '\\' => '\\',
            'n' => '\n',
            't' => '\t',
            's' => ' ',
            _ => return None,
        });
    }
    Some(out)
}

/// Serializes to `sfa v1`. Probabilities use the shortest decimal that
/// round-trips the `f64` exactly.
pub fn serialize_sfa(sfa: &Sfa) -> String {
    let mut out = String::new();
    out.push_str("sfa v1\n");
    out.push_str(&format!("start {}\n", sfa.start));
    out.push_str(&format!("final {}\n", sfa.final_node));
    for e in &sfa.edges {
        for a in &e.arcs {
            out.push_str(&format!(
                "arc {} {} \"{}\" {}\n",
                e.src,
                e.dst,
                escape_label(&a.label),
                a.prob
            ));
        }
    }
    out
}

impl fmt::Display for Sfa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_sfa(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = "\
sfa v1
# scanned word 'Ford'
start 0
final 5
arc 0 1 \"F\" 0.8
arc 0 1 \"T\" 0.2
arc 1 2 \"o\" 0.4
arc 1 2 \"0\" 0.6
arc 2 4 \"r\" 0.4
arc 2 3 \"\\s\" 0.6
arc 3 4 \"r\" 0.8
arc 3 4 \"n\" 0.2
arc 4 5 \"d\" 0.9
arc 4 5 \"a\" 0.1
";

    #[test]
    fn parses_fig1_fixture() {
        let sfa = parse_sfa(FIG1).unwrap();
        assert_eq!(sfa.node_count(), 6);
        assert_eq!(sfa.edge_count(), 6);
        let all = enumerate_all(&sfa, 1000).unwrap();
        let (s, p) = &all[0];
        assert_eq!(s, "F0 rd");
        assert!((p - 0.8 * 0.6 * 0.6 * 0.8 * 0.9).abs() < 1e-12);
        let total: f64 = all.iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_arc() {
        let sfa = parse_sfa("sfa v1\nstart 0\nfinal 1\narc 0 1 \"a\" 1.0\n").unwrap();
        assert_eq!(
            enumerate_all(&sfa, 10).unwrap(),
            vec![("a".to_string(), 1.0)]
        );
    }

    #[test]
    fn normalization_error_names_node() {
        let err = parse_sfa("sfa v1\nstart 0\nfinal 1\narc 0 1 \"a\" 0.9\n").unwrap_err();
        match err {
            Error::InvalidSfa(d) => {
                assert!(
                    matches!(d[0], Diagnostic::Normalization { node: 0, .. }),
                    "{d:?}"
                )
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_sfa("sfa v1\nstart 0\nfinal 1\narc 0 1 a 1.0\n").unwrap_err();
        assert!(
            matches!(
                err,
                Error::Syntax {
                    line: 4,
                    col: 9,
                    ..
                }
            ),
            "{err}"
        );
        let err = parse_sfa("start 0\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 1, .. }));
        let err = parse_sfa("sfa v1\narc 0 1 \"a 1.0\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 2, .. }));
    }

    #[test]
    fn rejects_cycles_and_multiple_starts() {
        let cyc = "sfa v1\nstart 0\nfinal 3\narc 0 1 \"a\" 1\narc 1 2 \"b\" 1\narc 2 1 \"c\" 0.5\narc 2 3 \"d\" 0.5\n";
        let Err(Error::InvalidSfa(d)) = parse_sfa(cyc) else {
            panic!()
        };
        assert!(d.iter().any(|d| d.kind() == "cycle"));
        let two = "sfa v1\nstart 0\nstart 1\nfinal 2\narc 0 2 \"a\" 1\narc 1 2 \"b\" 1\n";
        let Err(Error::InvalidSfa(d)) = parse_sfa(two) else {
            panic!()
        };
        assert_eq!(d[0].kind(), "multiple-starts");
    }

    #[test]
    fn validate_reports_extra_source() {
        let (raw, _) =
            parse_raw("sfa v1\nstart 0\nfinal 2\narc 0 2 \"a\" 1\narc 1 2 \"b\" 1\n").unwrap();
        let d = validate(&raw);
        assert_eq!(
            d,
            vec![Diagnostic::NoUniqueStart(1), Diagnostic::Disconnected(1)]
        );
    }

    #[test]
    fn validate_reports_duplicate_labels() {
        let (raw, _) = parse_raw(
            "sfa v1\nstart 0\nfinal 2\narc 0 1 \"a\" 0.5\narc 0 1 \"a\" 0.5\narc 1 2 \"b\" 1\n",
        )
        .unwrap();
        let d = validate(&raw);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind(), "unique-path-surrogate");
        // The enumerator sees two labeled paths for the same string.
        let sfa = Sfa::build(raw);
        let paths = sfa.enumerate_paths(10).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].string, paths[1].string);
    }

    #[test]
    fn validate_accepts_valid_fixture() {
        let sfa = parse_sfa(FIG1).unwrap();
        assert!(validate(&sfa.to_raw()).is_empty());
    }

    #[test]
    fn zero_probability_rejected() {
        let err =
            parse_sfa("sfa v1\nstart 0\nfinal 1\narc 0 1 \"a\" 1\narc 0 1 \"b\" 0\n").unwrap_err();
        let Error::InvalidSfa(d) = err else { panic!() };
        assert_eq!(d[0].kind(), "bad-probability");
    }

    #[test]
    fn sparse_ids_are_renumbered() {
        let sfa = parse_sfa("sfa v1\nstart 10\nfinal 30\narc 10 20 \"a\" 1\narc 20 30 \"b\" 1\n")
            .unwrap();
        assert_eq!(sfa.node_count(), 3);
        assert_eq!((sfa.start(), sfa.final_node()), (0, 2));
    }

    #[test]
    fn topo_and_leq() {
        let chain = Sfa::from_arcs(
            3,
            0,
            2,
            [(0, 1, "a", 1.0), (1, 2, "b", 1.0)],
            MassCheck::Stochastic,
        )
        .unwrap();
        assert_eq!(chain.topo_order(), &[0, 1, 2]);
        assert!(chain.leq(0, 2));
        assert!(!chain.leq(2, 0));
        let diamond = Sfa::from_arcs(
            4,
            0,
            3,
            [
                (0, 2, "a", 0.5),
                (0, 1, "b", 0.5),
                (1, 3, "c", 1.0),
                (2, 3, "d", 1.0),
            ],
            MassCheck::Stochastic,
        )
        .unwrap();
        assert_eq!(diamond.topo_order(), &[0, 1, 2, 3]);
        assert!(!diamond.leq(1, 2));
        assert!(!diamond.leq(2, 1));
        assert!(diamond.leq(1, 1));
        let r = diamond.reachability();
        for u in 0..4 {
            for v in 0..4 {
                assert_eq!(r.leq(u, v), diamond.leq(u, v));
            }
        }
    }

    #[test]
    fn serialize_round_trip() {
        let sfa = parse_sfa(FIG1).unwrap();
        let text = serialize_sfa(&sfa);
        let back = parse_sfa(&text).unwrap();
        assert_eq!(back, sfa);
        assert_eq!(serialize_sfa(&back), text);
    }

    #[test]
    fn cap_exceeded() {
        let sfa = parse_sfa(FIG1).unwrap();
        assert_eq!(sfa.path_count(), 24);
        assert!(matches!(
            enumerate_all(&sfa, 23),
            Err(Error::CapExceeded { count: 24, cap: 23 })
        ));
    }
}
