//! k-best string extraction, sum-product mass and retention divergence.
//!
//! # k-best over a DAG
//!
//! [`top_k`] runs a dynamic program over the topological order: every node
//! keeps the `k` best partial paths from the start, and a node's list is
//! built by extending its predecessors' lists by every label of the
//! connecting edge. Truncating each list at `k` is exact: if a partial path
//! ending at `v` is not among the `k` best at `v`, then `k` better partial
//! paths share every suffix it could take, so no completion of it can be
//! among the `k` best overall. On unique-path inputs distinct paths emit
//! distinct strings, so the `k` best paths are the `k` most probable strings.
//!
//! Entries are ordered by descending probability, then by string (byte
//! order), then by the node sequence of the witness path.

use std::cmp::Ordering;

use crate::dag::{self, LabeledDag};
use crate::error::{Error, Result};
use crate::sfa::{EdgeId, NodeId, Sfa};

#[derive(Clone, Debug, PartialEq)]
pub struct RankedEntry {
    pub string: String,
    /// Natural-log probability.
    pub logp: f64,
    /// Node sequence of the witness path.
    pub path: Vec<NodeId>,
}

impl RankedEntry {
    pub fn prob(&self) -> f64 {
        self.logp.exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedStrings {
    pub k: usize,
    pub entries: Vec<RankedEntry>,
}

impl RankedStrings {
    pub fn len(&self) -> usize {
        self.entries.len()
    }
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
    pub fn mass(&self) -> f64 {
        self.entries.iter().map(RankedEntry::prob).sum()
    }
    pub fn strings(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.string.as_str())
    }
}

/// The `k` most probable strings emitted by `sfa`.
pub fn top_k(sfa: &Sfa, k: usize) -> RankedStrings {
    let entries = kbest(
        sfa,
        sfa.topo_order(),
        sfa.start(),
        sfa.final_node(),
        |_| true,
        k,
    );
    RankedStrings { k, entries }
}

pub(crate) fn cmp_entries(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    b.logp
        .total_cmp(&a.logp)
        .then_with(|| a.string.cmp(&b.string))
        .then_with(|| a.path.cmp(&b.path))
}

/// Kept partial path: its string, log-probability and the predecessor
/// entry it extends.
struct Partial {
    string: String,
    logp: f64,
    back: Option<Back>,
}

/// `(src, index in src's list, edge, label)`.
type Back = (NodeId, usize, EdgeId, usize);

struct Candidate {
    logp: f64,
    back: Back,
}

struct Lists<'g, G> {
    g: &'g G,
    lists: Vec<Vec<Partial>>,
}

impl<G: LabeledDag> Lists<'_, G> {
    fn path(&self, v: NodeId, i: usize) -> Vec<NodeId> {
        let mut out = vec![v];
        let mut cur = self.lists[v as usize][i].back;
        while let Some((src, idx, _, _)) = cur {
            out.push(src);
            cur = self.lists[src as usize][idx].back;
        }
        out.reverse();
        out
    }

    fn cmp(&self, a: &Candidate, b: &Candidate) -> Ordering {
        b.logp.total_cmp(&a.logp).then_with(|| {
            let (pa, pb) = (a.back, b.back);
            let sa = self.lists[pa.0 as usize][pa.1].string.bytes();
            let sb = self.lists[pb.0 as usize][pb.1].string.bytes();
            sa.chain(self.g.label(pa.2, pa.3).0.bytes())
                .cmp(sb.chain(self.g.label(pb.2, pb.3).0.bytes()))
                .then_with(|| self.path(pa.0, pa.1).cmp(&self.path(pb.0, pb.1)))
        })
    }
}

/// k-best paths from `from` to `to` over the nodes of `order` (which must be
/// topologically sorted and start with `from`), using only edges accepted by
/// `edge_ok`.
pub(crate) fn kbest<G: LabeledDag>(
    g: &G,
    order: &[NodeId],
    from: NodeId,
    to: NodeId,
    edge_ok: impl Fn(EdgeId) -> bool,
    k: usize,
) -> Vec<RankedEntry> {
    if k == 0 {
        return Vec::new();
    }
    let mut st = Lists {
        g,
        lists: (0..g.node_bound()).map(|_| Vec::new()).collect(),
    };
    let mut started = false;
    let mut labels: Vec<usize> = Vec::new();
    for &v in order {
        if v == from {
            st.lists[v as usize] = vec![Partial {
                string: String::new(),
                logp: 0.0,
                back: None,
            }];
            started = true;
        } else if started {
            let mut cands: Vec<Candidate> = Vec::new();
            for &e in g.in_edges(v) {
                if !edge_ok(e) {
                    continue;
                }
                let (src, _) = g.endpoints(e);
                labels.clear();
                labels.extend(0..g.label_count(e));
                labels.sort_by(|&a, &b| {
                    let (la, pa) = g.label(e, a);
                    let (lb, pb) = g.label(e, b);
                    pb.total_cmp(&pa).then_with(|| la.cmp(lb))
                });
                // Parent list and labels are both sorted, so pair (i, j) is
                // dominated by (i + 1)(j + 1) - 1 others.
                for (pi, p) in st.lists[src as usize].iter().enumerate() {
                    for &li in labels.iter().take(k / (pi + 1)) {
                        cands.push(Candidate {
                            logp: p.logp + g.label(e, li).1,
                            back: (src, pi, e, li),
                        });
                    }
                }
            }
            let cmp = |a: &Candidate, b: &Candidate| st.cmp(a, b);
            if cands.len() > k {
                cands.select_nth_unstable_by(k - 1, cmp);
                cands.truncate(k);
            }
            cands.sort_by(cmp);
            let next = cands
                .iter()
                .map(|c| {
                    let (src, pi, e, li) = c.back;
                    let parent = &st.lists[src as usize][pi].string;
                    let label = g.label(e, li).0;
                    let mut string = String::with_capacity(parent.len() + label.len());
                    string.push_str(parent);
                    string.push_str(label);
                    Partial {
                        string,
                        logp: c.logp,
                        back: Some(c.back),
                    }
                })
                .collect();
            st.lists[v as usize] = next;
        }
        if v == to {
            break;
        }
    }
    let paths: Vec<Vec<NodeId>> = (0..st.lists[to as usize].len())
        .map(|i| st.path(to, i))
        .collect();
    std::mem::take(&mut st.lists[to as usize])
        .into_iter()
        .zip(paths)
        .map(|(p, path)| RankedEntry {
            string: p.string,
            logp: p.logp,
            path,
        })
        .collect()
}

/// Total probability of every emitted string (one forward pass).
pub fn total_mass(sfa: &Sfa) -> f64 {
    forward_mass(sfa)[sfa.final_node() as usize]
}

/// Retained mass of all prefixes into each node.
pub fn forward_mass(sfa: &Sfa) -> Vec<f64> {
    dag::forward_mass(sfa, sfa.topo_order(), sfa.start())
}

/// Retained mass of all suffixes out of each node.
pub fn backward_mass(sfa: &Sfa) -> Vec<f64> {
    dag::backward_mass(sfa, sfa.topo_order(), sfa.final_node())
}

/// KL divergence (nats) from the distribution conditioned on a retained set
/// of total mass `retained_mass` to the original distribution: `-ln Z`.
pub fn kl_of_retention(retained_mass: f64) -> Result<f64> {
    if !(retained_mass > 0.0) || retained_mass > 1.0 + crate::sfa::PROB_TOLERANCE {
        return Err(Error::Domain(format!(
            "retained mass {retained_mass} outside (0,1]"
        )));
    }
    Ok((-retained_mass.ln()).max(0.0))
}
