//! Chunked top-k approximation.
//!
//! A region of an SFA with a unique entry node `s'` and exit node `f'`, whose
//! interior nodes touch nothing outside the region, can be replaced by a
//! single edge `(s', f')` that carries the region's `k` most probable
//! strings. [`find_min_sfa`] grows an arbitrary node set into such a region,
//! [`collapse`] replaces one region, and [`greedy_approximate`] repeatedly
//! collapses the region that loses the least probability mass until at most
//! `m` edges remain.
//!
//! Every string emitted by the result is emitted by the input with the same
//! probability; only strings are dropped, never invented.

use std::collections::{BTreeMap, HashMap};

use fixedbitset::FixedBitSet;

use crate::dag::{self, LabeledDag};
use crate::error::{Error, Result};
use crate::inference::{cmp_entries, kbest, RankedEntry, RankedStrings};
use crate::sfa::{EdgeId, MassCheck, NodeId, Reachability, Sfa, PROB_TOLERANCE};

/// Retained strings of one chunk-graph edge.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk {
    /// Ranked `(string, log-prob)` entries; entry `i` is arc `i` of the
    /// corresponding graph edge.
    pub strings: RankedStrings,
    /// Original node ids spanned by the chunk, ascending.
    pub covered: Vec<NodeId>,
}

/// A generalized SFA whose every edge is a chunk of at most `k` strings.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkedSfa {
    graph: Sfa,
    node_origin: Vec<NodeId>,
    chunks: Vec<Chunk>,
    m: usize,
    k: usize,
}

impl ChunkedSfa {
    /// Assembles a chunked SFA from its parts. `edges` holds
    /// `(src, dst, chunk)` over dense node ids `0..node_origin.len()`.
    pub fn from_parts(
        node_origin: Vec<NodeId>,
        start: NodeId,
        final_node: NodeId,
        edges: Vec<(NodeId, NodeId, Chunk)>,
        m: usize,
        k: usize,
    ) -> Result<ChunkedSfa> {
        let mut edges = edges;
        edges.sort_by_key(|(s, d, _)| (*s, *d));
        let arcs: Vec<(NodeId, NodeId, String, f64)> = edges
            .iter()
            .flat_map(|(s, d, c)| {
                c.strings
                    .entries
                    .iter()
                    .map(move |e| (*s, *d, e.string.clone(), e.prob()))
            })
            .collect();
        let graph = Sfa::from_arcs(
            node_origin.len(),
            start,
            final_node,
            arcs,
            MassCheck::SubStochastic,
        )?;
        if graph.edge_count() != edges.len() {
            return Err(Error::InvalidRegion("duplicate chunk edge".into()));
        }
        let chunks = edges.into_iter().map(|(_, _, c)| c).collect();
        Ok(ChunkedSfa {
            graph,
            node_origin,
            chunks,
            m,
            k,
        })
    }

    /// The chunk graph as a generalized SFA.
    pub fn graph(&self) -> &Sfa {
        &self.graph
    }
    /// Original node id of each chunk-graph node.
    pub fn node_origin(&self) -> &[NodeId] {
        &self.node_origin
    }
    /// Chunk of each graph edge (indexed like `graph().edges()`).
    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }
    pub fn chunk(&self, e: EdgeId) -> &Chunk {
        &self.chunks[e]
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }
    /// Total retained probability.
    pub fn total_mass(&self) -> f64 {
        crate::inference::total_mass(&self.graph)
    }
    /// Chunk-graph node holding original node `orig`, if it survived.
    pub fn node_of(&self, orig: NodeId) -> Option<NodeId> {
        self.node_origin
            .binary_search(&orig)
            .ok()
            .map(|i| i as NodeId)
    }
}

/// A partition of an SFA's edges into blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ChunkPartition {
    pub blocks: Vec<Vec<EdgeId>>,
}

impl ChunkPartition {
    /// One block per edge.
    pub fn per_edge(sfa: &Sfa) -> ChunkPartition {
        ChunkPartition {
            blocks: (0..sfa.edge_count()).map(|e| vec![e]).collect(),
        }
    }

    /// Checks that every edge lies in exactly one block and that each
    /// block's edges form a connected subgraph. Returns the block of each
    /// edge.
    pub fn check(&self, sfa: &Sfa) -> Result<Vec<usize>> {
        let mut owner = vec![usize::MAX; sfa.edge_count()];
        for (b, block) in self.blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition(format!("block {b} is empty")));
            }
            for &e in block {
                if e >= owner.len() {
                    return Err(Error::InvalidPartition(format!("edge {e} out of range")));
                }
                if owner[e] != usize::MAX {
                    return Err(Error::InvalidPartition(format!(
                        "edge {e} is in blocks {} and {b}",
                        owner[e]
                    )));
                }
                owner[e] = b;
            }
            // Undirected connectivity over the block's nodes.
            let mut comp: BTreeMap<NodeId, NodeId> = BTreeMap::new();
            fn find(c: &mut BTreeMap<NodeId, NodeId>, x: NodeId) -> NodeId {
                let p = *c.entry(x).or_insert(x);
                if p == x {
                    return x;
                }
                let r = find(c, p);
                c.insert(x, r);
                r
            }
            for &e in block {
                let edge = sfa.edge(e);
                let (a, b) = (find(&mut comp, edge.src), find(&mut comp, edge.dst));
                comp.insert(a, b);
            }
            let nodes: Vec<NodeId> = comp.keys().copied().collect();
            let root = find(&mut comp, nodes[0]);
            if nodes.iter().any(|&v| find(&mut comp, v) != root) {
                return Err(Error::InvalidPartition(format!(
                    "block {b} is not connected"
                )));
            }
        }
        if let Some(e) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::InvalidPartition(format!("edge {e} is in no block")));
        }
        Ok(owner)
    }
}

/// One arc sequence through a block: `(edge, arc index)` pairs.
pub type Segment = Vec<(EdgeId, usize)>;

/// The segments retained in each block.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentChoice {
    pub chosen: Vec<Vec<Segment>>,
}

// ---------------------------------------------------------------------------
// Working chunk graph

#[derive(Clone, Debug)]
struct WEdge {
    src: NodeId,
    dst: NodeId,
    entries: Vec<RankedEntry>,
    mass: f64,
    covered: Vec<NodeId>,
}

/// Mutable chunk graph over the original node ids. Reachability and the
/// topological order of the original SFA stay valid for live nodes because
/// collapsing a region preserves reachability between its boundary nodes.
struct WorkGraph {
    start: NodeId,
    fin: NodeId,
    edges: Vec<WEdge>,
    out: Vec<Vec<EdgeId>>,
    inc: Vec<Vec<EdgeId>>,
    live: FixedBitSet,
    live_edges: usize,
    topo: Vec<NodeId>,
    topo_pos: Vec<usize>,
    reach: Reachability,
}

impl LabeledDag for WorkGraph {
    fn node_bound(&self) -> usize {
        self.out.len()
    }
    fn out_edges(&self, v: NodeId) -> &[EdgeId] {
        &self.out[v as usize]
    }
    fn in_edges(&self, v: NodeId) -> &[EdgeId] {
        &self.inc[v as usize]
    }
    fn endpoints(&self, e: EdgeId) -> (NodeId, NodeId) {
        (self.edges[e].src, self.edges[e].dst)
    }
    fn label_count(&self, e: EdgeId) -> usize {
        self.edges[e].entries.len()
    }
    fn label(&self, e: EdgeId, i: usize) -> (&str, f64) {
        let x = &self.edges[e].entries[i];
        (&x.string, x.logp)
    }
    fn edge_mass(&self, e: EdgeId) -> f64 {
        self.edges[e].mass
    }
}

impl WorkGraph {
    /// Per-transition chunking keeping the top `k` labels of every edge.
    fn from_sfa(sfa: &Sfa, k: usize) -> WorkGraph {
        let n = sfa.node_count();
        let edges: Vec<WEdge> = sfa
            .edges()
            .iter()
            .map(|e| {
                let mut entries: Vec<RankedEntry> = e
                    .arcs
                    .iter()
                    .map(|a| RankedEntry {
                        string: a.label.clone(),
                        logp: a.prob.ln(),
                        path: vec![e.src, e.dst],
                    })
                    .collect();
                entries.sort_by(cmp_entries);
                entries.truncate(k);
                WEdge {
                    src: e.src,
                    dst: e.dst,
                    mass: entries.iter().map(RankedEntry::prob).sum(),
                    entries,
                    covered: vec![e.src.min(e.dst), e.src.max(e.dst)],
                }
            })
            .collect();
        let mut live = FixedBitSet::with_capacity(n);
        live.insert_range(..);
        WorkGraph {
            start: sfa.start(),
            fin: sfa.final_node(),
            live_edges: edges.len(),
            out: (0..n as NodeId)
                .map(|v| sfa.out_edges(v).to_vec())
                .collect(),
            inc: (0..n as NodeId).map(|v| sfa.in_edges(v).to_vec()).collect(),
            edges,
            live,
            topo: sfa.topo_order().to_vec(),
            topo_pos: (0..n as NodeId).map(|v| sfa.topo_position(v)).collect(),
            reach: sfa.reachability(),
        }
    }

    fn live_order(&self) -> Vec<NodeId> {
        self.topo
            .iter()
            .copied()
            .filter(|&v| self.live.contains(v as usize))
            .collect()
    }

    fn region_order(&self, y: &FixedBitSet) -> Vec<NodeId> {
        self.topo
            .iter()
            .copied()
            .filter(|&v| y.contains(v as usize))
            .collect()
    }

    fn view(&self) -> View<'_, WorkGraph> {
        View {
            g: self,
            live: &self.live,
            reach: &self.reach,
            topo_pos: &self.topo_pos,
        }
    }

    /// Top-`k` strings of region `y` from `s` to `f` and the region's full
    /// retained mass before truncation.
    fn summarize(
        &self,
        y: &FixedBitSet,
        s: NodeId,
        f: NodeId,
        k: usize,
    ) -> (Vec<RankedEntry>, f64) {
        let order = self.region_order(y);
        let inside = |e: EdgeId| {
            let (a, b) = self.endpoints(e);
            y.contains(a as usize) && y.contains(b as usize)
        };
        let entries = kbest(self, &order, s, f, inside, k);
        let mut mass = vec![0.0; self.node_bound()];
        mass[s as usize] = 1.0;
        for &v in &order {
            let mv = mass[v as usize];
            if mv == 0.0 {
                continue;
            }
            for &e in &self.out[v as usize] {
                if inside(e) {
                    mass[self.edges[e].dst as usize] += mv * self.edges[e].mass;
                }
            }
        }
        (entries, mass[f as usize])
    }

    /// Replaces region `y` (boundary `s`, `f`) by one edge carrying `entries`.
    fn commit(&mut self, y: &FixedBitSet, s: NodeId, f: NodeId, entries: Vec<RankedEntry>) {
        let mut covered = Vec::new();
        let mut removed = 0;
        for v in y.ones() {
            let v = v as NodeId;
            let outs = std::mem::take(&mut self.out[v as usize]);
            let mut keep = Vec::with_capacity(outs.len());
            for e in outs {
                if y.contains(self.edges[e].dst as usize) {
                    covered.extend_from_slice(&self.edges[e].covered);
                    removed += 1;
                } else {
                    keep.push(e);
                }
            }
            self.out[v as usize] = keep;
            let y_ref = &*y;
            let edges = &self.edges;
            self.inc[v as usize].retain(|&e| !y_ref.contains(edges[e].src as usize));
        }
        for v in y.ones() {
            if v as NodeId != s && v as NodeId != f {
                self.live.set(v, false);
            }
        }
        covered.sort_unstable();
        covered.dedup();
        let id = self.edges.len();
        self.edges.push(WEdge {
            src: s,
            dst: f,
            mass: entries.iter().map(RankedEntry::prob).sum(),
            entries,
            covered,
        });
        self.out[s as usize].push(id);
        self.inc[f as usize].push(id);
        self.live_edges = self.live_edges + 1 - removed;
    }

    fn finish(self, m: usize, k: usize) -> ChunkedSfa {
        let origin: Vec<NodeId> = self.live.ones().map(|v| v as NodeId).collect();
        let dense = |v: NodeId| origin.binary_search(&v).expect("live node") as NodeId;
        let mut parts = Vec::with_capacity(self.live_edges);
        for v in &origin {
            for &e in &self.out[*v as usize] {
                let w = &self.edges[e];
                parts.push((
                    dense(w.src),
                    dense(w.dst),
                    Chunk {
                        strings: RankedStrings {
                            k,
                            entries: w.entries.clone(),
                        },
                        covered: w.covered.clone(),
                    },
                ));
            }
        }
        let (s, f) = (dense(self.start), dense(self.fin));
        ChunkedSfa::from_parts(origin, s, f, parts, m, k)
            .expect("collapsing valid regions preserves validity")
    }
}

// ---------------------------------------------------------------------------
// Region growth

struct View<'a, G> {
    g: &'a G,
    live: &'a FixedBitSet,
    reach: &'a Reachability,
    topo_pos: &'a [usize],
}

enum Status {
    Valid(NodeId, NodeId),
    Single(NodeId),
    MultiSource,
    MultiSink,
    Protruding(Vec<NodeId>),
}

impl<G: LabeledDag> View<'_, G> {
    fn status(&self, y: &FixedBitSet) -> Status {
        let members: Vec<NodeId> = y.ones().map(|v| v as NodeId).collect();
        if members.len() == 1 {
            return Status::Single(members[0]);
        }
        let has_in = |v: NodeId| {
            self.g
                .in_edges(v)
                .iter()
                .any(|&e| y.contains(self.g.endpoints(e).0 as usize))
        };
        let has_out = |v: NodeId| {
            self.g
                .out_edges(v)
                .iter()
                .any(|&e| y.contains(self.g.endpoints(e).1 as usize))
        };
        let sources: Vec<NodeId> = members.iter().copied().filter(|&v| !has_in(v)).collect();
        if sources.len() != 1 {
            return Status::MultiSource;
        }
        let sinks: Vec<NodeId> = members.iter().copied().filter(|&v| !has_out(v)).collect();
        if sinks.len() != 1 {
            return Status::MultiSink;
        }
        let (s, f) = (sources[0], sinks[0]);
        let mut outside = Vec::new();
        for &v in &members {
            if v == s || v == f {
                continue;
            }
            for &e in self.g.in_edges(v) {
                let w = self.g.endpoints(e).0;
                if !y.contains(w as usize) {
                    outside.push(w);
                }
            }
            for &e in self.g.out_edges(v) {
                let w = self.g.endpoints(e).1;
                if !y.contains(w as usize) {
                    outside.push(w);
                }
            }
        }
        if outside.is_empty() {
            Status::Valid(s, f)
        } else {
            outside.sort_unstable();
            outside.dedup();
            Status::Protruding(outside)
        }
    }

    fn extreme(&self, set: &FixedBitSet, latest: bool) -> NodeId {
        let it = set.ones().map(|v| (self.topo_pos[v], v));
        let pick = if latest { it.max() } else { it.min() };
        pick.expect("start and final bound every region").1 as NodeId
    }

    /// Grows `seed` into the smallest enclosing valid region.
    fn grow(&self, seed: &FixedBitSet) -> (FixedBitSet, NodeId, NodeId) {
        let mut y = seed.clone();
        loop {
            match self.status(&y) {
                Status::Valid(s, f) => return (y, s, f),
                Status::Single(v) => {
                    let next = self
                        .g
                        .out_edges(v)
                        .iter()
                        .map(|&e| self.g.endpoints(e).1)
                        .min_by_key(|&w| self.topo_pos[w as usize]);
                    let prev = || {
                        self.g
                            .in_edges(v)
                            .iter()
                            .map(|&e| self.g.endpoints(e).0)
                            .max_by_key(|&w| self.topo_pos[w as usize])
                    };
                    let w = next.or_else(prev).expect("graph has at least one edge");
                    y.insert(w as usize);
                }
                Status::MultiSource => {
                    let mut common = self.live.clone();
                    let mut upward = FixedBitSet::with_capacity(y.len());
                    for x in y.ones() {
                        common.intersect_with(&self.reach.anc[x]);
                        upward.union_with(&self.reach.anc[x]);
                    }
                    let l = self.extreme(&common, true);
                    let mut add = self.reach.desc[l as usize].clone();
                    add.intersect_with(&upward);
                    add.intersect_with(self.live);
                    y.union_with(&add);
                }
                Status::MultiSink => {
                    let mut common = self.live.clone();
                    let mut downward = FixedBitSet::with_capacity(y.len());
                    for x in y.ones() {
                        common.intersect_with(&self.reach.desc[x]);
                        downward.union_with(&self.reach.desc[x]);
                    }
                    let g = self.extreme(&common, false);
                    let mut add = self.reach.anc[g as usize].clone();
                    add.intersect_with(&downward);
                    add.intersect_with(self.live);
                    y.union_with(&add);
                }
                Status::Protruding(ws) => {
                    for w in ws {
                        y.insert(w as usize);
                    }
                }
            }
        }
    }
}

fn seed_set(n: usize, seed: &[NodeId]) -> Result<FixedBitSet> {
    if seed.is_empty() {
        return Err(Error::InvalidRegion("empty seed".into()));
    }
    let mut y = FixedBitSet::with_capacity(n);
    for &v in seed {
        if v as usize >= n {
            return Err(Error::InvalidRegion(format!("node {v} out of range")));
        }
        y.insert(v as usize);
    }
    Ok(y)
}

/// Grows `seed` into the smallest enclosing region with a unique entry and
/// exit node and no edge between its interior and the rest of the graph.
/// Returns the region's nodes in ascending order.
pub fn find_min_sfa(sfa: &Sfa, seed: &[NodeId]) -> Result<Vec<NodeId>> {
    let n = sfa.node_count();
    let y = seed_set(n, seed)?;
    let mut live = FixedBitSet::with_capacity(n);
    live.insert_range(..);
    let reach = sfa.reachability();
    let topo_pos: Vec<usize> = (0..n as NodeId).map(|v| sfa.topo_position(v)).collect();
    let view = View {
        g: sfa,
        live: &live,
        reach: &reach,
        topo_pos: &topo_pos,
    };
    let (y, _, _) = view.grow(&y);
    Ok(y.ones().map(|v| v as NodeId).collect())
}

/// Replaces `region` by a single edge carrying its top `k` strings. Every
/// other edge keeps all of its labels. The region must already be valid
/// (see [`find_min_sfa`]).
pub fn collapse(sfa: &Sfa, region: &[NodeId], k: usize) -> Result<ChunkedSfa> {
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let y = seed_set(sfa.node_count(), region)?;
    let mut g = WorkGraph::from_sfa(sfa, usize::MAX);
    let (s, f) = match g.view().status(&y) {
        Status::Valid(s, f) => (s, f),
        Status::Single(v) => {
            return Err(Error::InvalidRegion(format!("single node {v}")));
        }
        Status::MultiSource => {
            return Err(Error::InvalidRegion("no unique entry node".into()));
        }
        Status::MultiSink => return Err(Error::InvalidRegion("no unique exit node".into())),
        Status::Protruding(w) => {
            return Err(Error::InvalidRegion(format!(
                "interior nodes have edges to {w:?} outside the region"
            )))
        }
    };
    let (entries, _) = g.summarize(&y, s, f, k);
    g.commit(&y, s, f, entries);
    Ok(g.finish(sfa.edge_count(), k))
}

struct Candidate {
    region: FixedBitSet,
    s: NodeId,
    f: NodeId,
    entries: Vec<RankedEntry>,
    /// Retained mass of the region after minus before collapsing.
    delta: f64,
}

/// Greedy chunking: starting from one chunk per transition (top `k` labels
/// each), repeatedly collapses the region around an adjacent edge pair that
/// keeps the most total probability, until at most `m` edges remain.
///
/// Candidate regions are cached between iterations and discarded once a
/// committed region overlaps them. Ties go to the edge pair `(x, y, z)` that
/// is smallest in topological position.
pub fn greedy_approximate(sfa: &Sfa, m: usize, k: usize) -> Result<ChunkedSfa> {
    if m == 0 || k == 0 {
        return Err(Error::Domain(format!(
            "m and k must be at least 1 (m={m}, k={k})"
        )));
    }
    let mut g = WorkGraph::from_sfa(sfa, k);
    let mut cache: HashMap<(NodeId, NodeId, NodeId), Candidate> = HashMap::new();
    while g.live_edges > m {
        let order = g.live_order();
        let fwd = dag::forward_mass(&g, &order, g.start);
        let bwd = dag::backward_mass(&g, &order, g.fin);
        let mut best: Option<((usize, usize, usize), (NodeId, NodeId, NodeId), f64)> = None;
        for &y in &order {
            for &ein in &g.inc[y as usize] {
                for &eout in &g.out[y as usize] {
                    let (x, z) = (g.edges[ein].src, g.edges[eout].dst);
                    let triple = (x, y, z);
                    let cand = cache.entry(triple).or_insert_with(|| {
                        let mut seed = FixedBitSet::with_capacity(g.node_bound());
                        for v in [x, y, z] {
                            seed.insert(v as usize);
                        }
                        let (region, s, f) = g.view().grow(&seed);
                        let (entries, before) = g.summarize(&region, s, f, k);
                        let after: f64 = entries.iter().map(RankedEntry::prob).sum();
                        Candidate {
                            region,
                            s,
                            f,
                            entries,
                            delta: after - before,
                        }
                    });
                    let gain = fwd[cand.s as usize] * bwd[cand.f as usize] * cand.delta;
                    let key = (
                        g.topo_pos[x as usize],
                        g.topo_pos[y as usize],
                        g.topo_pos[z as usize],
                    );
                    let better = match &best {
                        None => true,
                        Some((bk, _, bg)) => gain > *bg || (gain == *bg && key < *bk),
                    };
                    if better {
                        best = Some((key, triple, gain));
                    }
                }
            }
        }
        let Some((_, triple, gain)) = best else {
            break;
        };
        let cand = cache.remove(&triple).expect("cached");
        log::trace!(
            "collapse region {:?} -> ({}, {}) gain {gain:e}",
            cand.region.ones().collect::<Vec<_>>(),
            cand.s,
            cand.f
        );
        g.commit(&cand.region, cand.s, cand.f, cand.entries);
        cache.retain(|_, c| c.region.is_disjoint(&cand.region));
    }
    Ok(g.finish(m, k))
}

// ---------------------------------------------------------------------------
// Exhaustive assignment search

struct BlockPaths {
    /// Distinct segments per block, in first-seen order.
    segments: Vec<Vec<Segment>>,
    /// Each full path as `(probability, segment index per visited block)`.
    paths: Vec<(f64, Vec<(usize, usize)>)>,
}

fn split_paths(sfa: &Sfa, owner: &[usize], blocks: usize, cap: u128) -> Result<BlockPaths> {
    let mut segments: Vec<Vec<Segment>> = vec![Vec::new(); blocks];
    let mut index: Vec<HashMap<Segment, usize>> = vec![HashMap::new(); blocks];
    let mut paths = Vec::new();
    for p in sfa.enumerate_paths(cap)? {
        let mut parts: Vec<(usize, usize)> = Vec::new();
        let mut i = 0;
        while i < p.arcs.len() {
            let b = owner[p.arcs[i].0];
            let mut j = i;
            while j < p.arcs.len() && owner[p.arcs[j].0] == b {
                j += 1;
            }
            let seg: Segment = p.arcs[i..j].to_vec();
            let id = *index[b].entry(seg.clone()).or_insert_with(|| {
                segments[b].push(seg);
                segments[b].len() - 1
            });
            parts.push((b, id));
            i = j;
        }
        paths.push((p.prob(), parts));
    }
    Ok(BlockPaths { segments, paths })
}

fn retained_mass(bp: &BlockPaths, chosen: &[Vec<bool>]) -> f64 {
    bp.paths
        .iter()
        .filter(|(_, parts)| parts.iter().all(|&(b, s)| chosen[b][s]))
        .map(|(p, _)| p)
        .sum()
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(r);
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < r - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    rec(0, n, r, &mut cur, &mut out);
    out
}

fn binomial(n: usize, r: usize) -> u128 {
    let r = r.min(n - r);
    (0..r).fold(1u128, |acc, i| {
        acc.saturating_mul((n - i) as u128) / (i as u128 + 1)
    })
}

/// Exhaustively searches every way of keeping at most `k` segments per
/// block and returns the choice that retains the most probability. A
/// segment is a maximal run of one path's arcs inside a block; a path is
/// retained iff every one of its segments is kept. Errors when the number
/// of paths or of assignments exceeds `cap`.
pub fn best_assignment_bruteforce(
    sfa: &Sfa,
    partition: &ChunkPartition,
    k: usize,
    cap: u128,
) -> Result<(AssignmentChoice, f64)> {
    let owner = partition.check(sfa)?;
    let bp = split_paths(sfa, &owner, partition.blocks.len(), cap)?;
    let sizes: Vec<usize> = bp.segments.iter().map(Vec::len).collect();
    // Keeping more segments never loses mass, so only full-size subsets
    // need to be searched.
    let count = sizes
        .iter()
        .fold(1u128, |acc, &n| acc.saturating_mul(binomial(n, k.min(n))));
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let options: Vec<Vec<Vec<usize>>> = sizes.iter().map(|&n| combinations(n, k.min(n))).collect();
    let mut pick = vec![0usize; options.len()];
    let mut chosen: Vec<Vec<bool>> = sizes.iter().map(|&n| vec![false; n]).collect();
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        for (b, opts) in options.iter().enumerate() {
            chosen[b].iter_mut().for_each(|c| *c = false);
            for &s in &opts[pick[b]] {
                chosen[b][s] = true;
            }
        }
        let mass = retained_mass(&bp, &chosen);
        if best.as_ref().map_or(true, |(_, m)| mass > *m) {
            best = Some((pick.clone(), mass));
        }
        // Odometer increment.
        let mut b = 0;
        loop {
            if b == pick.len() {
                let (pick, mass) = best.expect("at least one assignment");
                let chosen = options
                    .iter()
                    .zip(&pick)
                    .enumerate()
                    .map(|(blk, (opts, &i))| {
                        opts[i]
                            .iter()
                            .map(|&s| bp.segments[blk][s].clone())
                            .collect()
                    })
                    .collect();
                return Ok((AssignmentChoice { chosen }, mass));
            }
            pick[b] += 1;
            if pick[b] < options[b].len() {
                break;
            }
            pick[b] = 0;
            b += 1;
        }
    }
}

/// Retained mass when every block independently keeps its `k` most probable
/// segments (ties by emitted string).
pub fn per_block_top_k_mass(
    sfa: &Sfa,
    partition: &ChunkPartition,
    k: usize,
    cap: u128,
) -> Result<f64> {
    let owner = partition.check(sfa)?;
    let bp = split_paths(sfa, &owner, partition.blocks.len(), cap)?;
    let seg_key = |seg: &Segment| {
        let mut logp = 0.0;
        let mut s = String::new();
        for &(e, i) in seg {
            let a = &sfa.edge(e).arcs[i];
            logp += a.prob.ln();
            s.push_str(&a.label);
        }
        (logp, s)
    };
    let chosen: Vec<Vec<bool>> = bp
        .segments
        .iter()
        .map(|segs| {
            let mut ranked: Vec<(usize, (f64, String))> =
                segs.iter().map(seg_key).enumerate().collect();
            ranked.sort_by(|a, b| b.1 .0.total_cmp(&a.1 .0).then_with(|| a.1 .1.cmp(&b.1 .1)));
            let mut keep = vec![false; segs.len()];
            for (i, _) in ranked.into_iter().take(k) {
                keep[i] = true;
            }
            keep
        })
        .collect();
    Ok(retained_mass(&bp, &chosen))
}

/// Mass kept by per-transition chunking with the top `k` labels per edge.
pub fn per_edge_top_k_mass(sfa: &Sfa, k: usize) -> f64 {
    let g = WorkGraph::from_sfa(sfa, k);
    let order = g.live_order();
    dag::forward_mass(&g, &order, g.start)[g.fin as usize]
}

/// True when two retained masses agree within the probability tolerance.
pub fn mass_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= PROB_TOLERANCE
}
