//! Dictionary-driven inverted index over chunked lines.
//!
//! A [`TrieDfa`] recognizes the dictionary terms. Index construction scans
//! every retained string of every chunk-graph edge from every offset; when a
//! string ends while the trie is still inside a term prefix, the partial
//! match travels along the graph as an augmented state `(trie state,
//! start location)` and continues in the strings of the following edges.
//! Postings therefore record the start location of every term occurrence in
//! any emitted string, including occurrences that straddle several edges.
//!
//! Queries with a left-anchor term look up that term, project each hit to a
//! bounded region of the chunk graph and evaluate the DFA there, weighting
//! the region by the forward mass into its entry and the backward mass out
//! of its exit.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::approx::{find_min_sfa, ChunkedSfa};
use crate::error::{Error, Result};
use crate::inference::{backward_mass, forward_mass};
use crate::query::{eval_region, rank_data, rank_probabilities, LineData, LineMatch, QueryDfa};
use crate::sfa::{EdgeId, NodeId};

/// Trie automaton over lowercase ASCII terms. State 0 is the root.
#[derive(Clone, Debug)]
pub struct TrieDfa {
    next: Vec<HashMap<u8, u32>>,
    term: Vec<Option<u32>>,
    terms: Vec<String>,
}

/// Builds the trie of `terms` (lowercased, deduplicated).
pub fn build_trie<S: AsRef<str>>(terms: impl IntoIterator<Item = S>) -> Result<TrieDfa> {
    let mut t = TrieDfa {
        next: vec![HashMap::new()],
        term: vec![None],
        terms: Vec::new(),
    };
    for raw in terms {
        let raw = raw.as_ref();
        if raw.is_empty() || !raw.is_ascii() || raw.bytes().any(|b| b.is_ascii_control()) {
            return Err(Error::BadTerm(raw.to_string()));
        }
        let word = raw.to_ascii_lowercase();
        let mut q = 0u32;
        for b in word.bytes() {
            q = match t.next[q as usize].get(&b) {
                Some(&n) => n,
                None => {
                    let n = t.next.len() as u32;
                    t.next.push(HashMap::new());
                    t.term.push(None);
                    t.next[q as usize].insert(b, n);
                    n
                }
            };
        }
        if t.term[q as usize].is_none() {
            t.term[q as usize] = Some(t.terms.len() as u32);
            t.terms.push(word);
        }
    }
    if t.terms.is_empty() {
        return Err(Error::BadTerm(String::new()));
    }
    Ok(t)
}

impl TrieDfa {
    pub fn state_count(&self) -> usize {
        self.next.len()
    }
    pub fn terms(&self) -> &[String] {
        &self.terms
    }
    /// Transition on `c` (case-folded); `None` leaves the trie.
    pub fn step(&self, q: u32, c: char) -> Option<u32> {
        if !c.is_ascii() {
            return None;
        }
        self.next[q as usize]
            .get(&(c.to_ascii_lowercase() as u8))
            .copied()
    }
    /// Term recognized in state `q`.
    pub fn term_at(&self, q: u32) -> Option<&str> {
        self.term[q as usize].map(|i| self.terms[i as usize].as_str())
    }
    pub fn contains(&self, word: &str) -> bool {
        let mut q = 0;
        for c in word.chars() {
            match self.step(q, c) {
                Some(n) => q = n,
                None => return false,
            }
        }
        self.term_at(q).is_some()
    }
}

/// Start location of a term occurrence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Posting {
    pub line: usize,
    /// Chunk-graph edge.
    pub edge: EdgeId,
    /// Rank of the string within the edge's chunk.
    pub path: usize,
    /// Character offset of the term's first character in that string.
    pub offset: usize,
}

/// Term → postings, for one staccato representation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PostingIndex {
    postings: BTreeMap<String, Vec<Posting>>,
}

impl PostingIndex {
    /// Postings of `term` (case-folded); `None` if the term is not in the
    /// dictionary.
    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.postings
            .get(&term.to_ascii_lowercase())
            .map(Vec::as_slice)
    }
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }
    pub fn posting_count(&self) -> usize {
        self.postings.values().map(Vec::len).sum()
    }

    /// Set union of per-line shards.
    pub fn merge(shards: impl IntoIterator<Item = PostingIndex>) -> PostingIndex {
        let mut acc: BTreeMap<String, BTreeSet<Posting>> = BTreeMap::new();
        for s in shards {
            for (t, ps) in s.postings {
                acc.entry(t).or_default().extend(ps);
            }
        }
        PostingIndex {
            postings: acc
                .into_iter()
                .map(|(t, ps)| (t, ps.into_iter().collect()))
                .collect(),
        }
    }

    /// `idx v1` text: one `term<TAB>line:edge:path:offset,...` row per
    /// dictionary term, sorted by term.
    pub fn to_text(&self) -> String {
        let mut out = String::from("idx v1\n");
        for (t, ps) in &self.postings {
            out.push_str(t);
            out.push('\t');
            for (i, p) in ps.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}:{}:{}:{}", p.line, p.edge, p.path, p.offset);
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<PostingIndex> {
        let mut lines = text.lines();
        let bad = |line: usize, msg: &str| Error::Table {
            table: "idx".into(),
            line,
            msg: msg.into(),
        };
        if lines.next() != Some("idx v1") {
            return Err(bad(1, "expected header `idx v1`"));
        }
        let mut postings = BTreeMap::new();
        for (i, l) in lines.enumerate() {
            let lineno = i + 2;
            let (term, rest) = l
                .split_once('\t')
                .ok_or_else(|| bad(lineno, "missing tab"))?;
            let mut ps = Vec::new();
            for item in rest.split(',').filter(|s| !s.is_empty()) {
                let f: Vec<usize> = item
                    .split(':')
                    .map(|x| x.parse().map_err(|_| bad(lineno, "bad posting")))
                    .collect::<Result<_>>()?;
                if f.len() != 4 {
                    return Err(bad(lineno, "posting needs 4 fields"));
                }
                ps.push(Posting {
                    line: f[0],
                    edge: f[1],
                    path: f[2],
                    offset: f[3],
                });
            }
            ps.sort_unstable();
            ps.dedup();
            postings.insert(term.to_string(), ps);
        }
        Ok(PostingIndex { postings })
    }

    pub fn read(path: &Path) -> Result<PostingIndex> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::parse(&text).map_err(|e| e.in_file(path))
    }
}

/// Postings of one line.
pub fn index_line(line: usize, chunked: &ChunkedSfa, trie: &TrieDfa) -> PostingIndex {
    let g = chunked.graph();
    let mut hits: BTreeMap<u32, BTreeSet<Posting>> = BTreeMap::new();
    // Augmented states arriving at each node.
    let mut arriving: Vec<HashSet<(u32, Posting)>> = vec![HashSet::new(); g.node_count()];
    for &v in g.topo_order() {
        let incoming = std::mem::take(&mut arriving[v as usize]);
        let mut incoming: Vec<(u32, Posting)> = incoming.into_iter().collect();
        incoming.sort_unstable();
        for &e in g.out_edges(v) {
            let dst = g.edge(e).dst;
            for (i, entry) in chunked.chunk(e).strings.entries.iter().enumerate() {
                let chars: Vec<char> = entry.string.chars().collect();
                let mut carry =
                    |q0: u32, from: usize, p: Posting, arriving: &mut Vec<HashSet<_>>| {
                        let mut q = q0;
                        for &c in &chars[from..] {
                            match trie.step(q, c) {
                                Some(n) => q = n,
                                None => return,
                            }
                            if let Some(t) = trie.term[q as usize] {
                                hits.entry(t).or_default().insert(p);
                            }
                        }
                        arriving[dst as usize].insert((q, p));
                    };
                for &(q, p) in &incoming {
                    carry(q, 0, p, &mut arriving);
                }
                for o in 0..chars.len() {
                    let p = Posting {
                        line,
                        edge: e,
                        path: i,
                        offset: o,
                    };
                    carry(0, o, p, &mut arriving);
                }
            }
        }
    }
    PostingIndex {
        postings: trie
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let ps = hits.remove(&(i as u32)).unwrap_or_default();
                (t.clone(), ps.into_iter().collect())
            })
            .collect(),
    }
}

/// Indexes every line (line id = position in `lines`) and unifies the
/// per-line shards.
pub fn build_index(lines: &[ChunkedSfa], trie: &TrieDfa) -> PostingIndex {
    let shards: Vec<PostingIndex> = lines
        .par_iter()
        .enumerate()
        .map(|(i, c)| index_line(i, c, trie))
        .collect();
    if shards.is_empty() {
        return PostingIndex {
            postings: trie.terms.iter().map(|t| (t.clone(), Vec::new())).collect(),
        };
    }
    PostingIndex::merge(shards)
}

/// A bounded region of a chunk graph around one or more postings.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// Chunk-graph nodes of the region, ascending.
    pub nodes: Vec<NodeId>,
    pub start: NodeId,
    pub end: NodeId,
    /// Forward retained mass into `start`.
    pub prefix_mass: f64,
    /// Backward retained mass out of `end`.
    pub suffix_mass: f64,
}

fn bounded_reach(chunked: &ChunkedSfa, from: NodeId, depth: usize, into: &mut BTreeSet<NodeId>) {
    let g = chunked.graph();
    let mut frontier = vec![from];
    into.insert(from);
    for _ in 0..depth {
        let mut next = Vec::new();
        for v in frontier {
            for &e in g.out_edges(v) {
                let w = g.edge(e).dst;
                if into.insert(w) {
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
}

fn close(chunked: &ChunkedSfa, seed: BTreeSet<NodeId>) -> Projection {
    let g = chunked.graph();
    let seed: Vec<NodeId> = seed.into_iter().collect();
    let nodes = find_min_sfa(g, &seed).expect("seed nodes exist");
    let start = *nodes
        .iter()
        .min_by_key(|&&v| g.topo_position(v))
        .expect("non-empty");
    let end = *nodes
        .iter()
        .max_by_key(|&&v| g.topo_position(v))
        .expect("non-empty");
    Projection {
        prefix_mass: forward_mass(g)[start as usize],
        suffix_mass: backward_mass(g)[end as usize],
        nodes,
        start,
        end,
    }
}

/// The region made of the posting's edge and everything reachable within
/// `depth` further edges, closed into a valid sub-SFA.
pub fn project(chunked: &ChunkedSfa, posting: &Posting, depth: usize) -> Projection {
    let edge = chunked.graph().edge(posting.edge);
    let mut seed = BTreeSet::from([edge.src]);
    bounded_reach(chunked, edge.dst, depth, &mut seed);
    close(chunked, seed)
}

/// Match probability of `dfa` restricted to `proj`.
pub fn eval_projection(dfa: &QueryDfa, chunked: &ChunkedSfa, proj: &Projection) -> f64 {
    let g = chunked.graph();
    let inside: BTreeSet<NodeId> = proj.nodes.iter().copied().collect();
    let order: Vec<NodeId> = g
        .topo_order()
        .iter()
        .copied()
        .filter(|v| inside.contains(v))
        .collect();
    let ok = |e: EdgeId| {
        let edge = g.edge(e);
        inside.contains(&edge.src) && inside.contains(&edge.dst)
    };
    eval_region(dfa, g, &order, proj.start, proj.end, ok, proj.prefix_mass) * proj.suffix_mass
}

/// Extra projection depth for patterns without a length bound.
pub const STAR_SLACK: usize = 16;

/// How an indexed query was answered.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexedOutcome {
    pub matches: Vec<LineMatch>,
    /// The anchor term used, or `None` when the query fell back to a scan.
    pub anchor: Option<String>,
    /// Lines evaluated.
    pub candidates: usize,
}

/// Answers `dfa` over in-memory chunked lines through the index.
pub fn indexed_query_data(
    dfa: &QueryDfa,
    index: &PostingIndex,
    lines: &[ChunkedSfa],
    num_ans: usize,
) -> IndexedOutcome {
    let Some((anchor, postings)) = dfa
        .anchor()
        .and_then(|a| index.postings(a).map(|p| (a.to_string(), p)))
    else {
        log::warn!(
            "pattern {:?} has no dictionary anchor; scanning every line",
            dfa.pattern()
        );
        let data = LineData::Chunked(lines.to_vec());
        return IndexedOutcome {
            matches: rank_data(&data, dfa, num_ans),
            anchor: None,
            candidates: lines.len(),
        };
    };
    let depth = dfa
        .max_match_len()
        .unwrap_or_else(|| anchor.chars().count() + STAR_SLACK);
    let mut by_line: BTreeMap<usize, Vec<&Posting>> = BTreeMap::new();
    for p in postings {
        by_line.entry(p.line).or_default().push(p);
    }
    let candidates = by_line.len();
    let probs: Vec<(usize, f64)> = by_line
        .into_par_iter()
        .filter_map(|(line, ps)| {
            let chunked = lines.get(line)?;
            let g = chunked.graph();
            let mut seed = BTreeSet::new();
            for p in ps {
                let edge = g.edge(p.edge);
                seed.insert(edge.src);
                bounded_reach(chunked, edge.dst, depth, &mut seed);
            }
            let proj = close(chunked, seed);
            Some((line, eval_projection(dfa, chunked, &proj)))
        })
        .collect();
    IndexedOutcome {
        matches: rank_probabilities(probs, num_ans),
        anchor: Some(anchor),
        candidates,
    }
}

/// Answers `dfa` through the index over the corpus' staccato lines the
/// index was built from.
pub fn indexed_query(
    dfa: &QueryDfa,
    index: &PostingIndex,
    corpus: &crate::store::Corpus,
    m: usize,
    k: usize,
    num_ans: usize,
) -> Result<IndexedOutcome> {
    let lines = corpus.load_chunked(m, k)?;
    Ok(indexed_query_data(dfa, index, &lines, num_ans))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{greedy_approximate, Chunk};
    use crate::inference::{RankedEntry, RankedStrings};
    use crate::query::compile_pattern;

    /// Chain chunk graph whose edge `i` carries `strings[i]`.
    pub(crate) fn chain(strings: &[&[(&str, f64)]]) -> ChunkedSfa {
        let n = strings.len() + 1;
        let edges = strings
            .iter()
            .enumerate()
            .map(|(i, ss)| {
                let entries = ss
                    .iter()
                    .map(|(s, p)| RankedEntry {
                        string: s.to_string(),
                        logp: p.ln(),
                        path: vec![i as NodeId, i as NodeId + 1],
                    })
                    .collect();
                (
                    i as NodeId,
                    i as NodeId + 1,
                    Chunk {
                        strings: RankedStrings { k: 4, entries },
                        covered: vec![i as NodeId, i as NodeId + 1],
                    },
                )
            })
            .collect();
        ChunkedSfa::from_parts((0..n as NodeId).collect(), 0, n as NodeId - 1, edges, n, 4).unwrap()
    }

    #[test]
    fn trie_shapes() {
        let t = build_trie(["ab", "ac", "ab"]).unwrap();
        assert_eq!(t.state_count(), 4);
        assert_eq!(t.terms().len(), 2);
        let f = build_trie(["Ford"]).unwrap();
        assert_eq!(f.state_count(), 5);
        assert!(f.contains("ford") && f.contains("FORD") && !f.contains("for"));
        assert!(matches!(build_trie([""]), Err(Error::BadTerm(_))));
    }

    #[test]
    fn single_edge_posting() {
        let c = chain(&[&[("the ford co", 1.0)]]);
        let idx = build_index(&[c], &build_trie(["ford"]).unwrap());
        assert_eq!(
            idx.postings("ford").unwrap(),
            &[Posting {
                line: 0,
                edge: 0,
                path: 0,
                offset: 4
            }]
        );
    }

    #[test]
    fn straddling_posting() {
        let c = chain(&[&[("ab", 1.0)], &[("cd", 0.6), ("xd", 0.4)]]);
        let idx = build_index(&[c], &build_trie(["bc", "abx", "d"]).unwrap());
        let p = |edge, path, offset| Posting {
            line: 0,
            edge,
            path,
            offset,
        };
        assert_eq!(idx.postings("bc").unwrap(), &[p(0, 0, 1)]);
        assert_eq!(idx.postings("abx").unwrap(), &[p(0, 0, 0)]);
        assert_eq!(idx.postings("d").unwrap(), &[p(1, 0, 1), p(1, 1, 1)]);
    }

    #[test]
    fn text_round_trip() {
        let c = chain(&[&[("ab", 1.0)], &[("cd", 0.6), ("xd", 0.4)]]);
        let idx = build_index(&[c.clone(), c], &build_trie(["bc", "zz"]).unwrap());
        let text = idx.to_text();
        assert!(text.starts_with("idx v1\nbc\t0:0:0:1,1:0:0:1\nzz\t\n"));
        assert_eq!(PostingIndex::parse(&text).unwrap(), idx);
        assert_eq!(idx.postings("zz"), Some(&[][..]));
        assert_eq!(idx.postings("qq"), None);
    }

    #[test]
    fn projection_on_chain() {
        let c = chain(&[
            &[("a", 0.5), ("b", 0.5)],
            &[("c", 0.8), ("d", 0.2)],
            &[("e", 0.9)],
            &[("f", 0.7)],
            &[("g", 1.0)],
        ]);
        let post = |edge| Posting {
            line: 0,
            edge,
            path: 0,
            offset: 0,
        };
        let p = project(&c, &post(1), 1);
        assert_eq!(p.nodes, vec![1, 2, 3]);
        assert!((p.prefix_mass - 1.0).abs() < 1e-12);
        assert!((p.suffix_mass - 0.7).abs() < 1e-12);
        let last = project(&c, &post(4), 3);
        assert_eq!(last.nodes, vec![4, 5]);
        assert!((last.prefix_mass - 0.9 * 0.7).abs() < 1e-12);
        let all = project(&c, &post(0), 10);
        assert_eq!(all.nodes, (0..6).collect::<Vec<_>>());
        assert_eq!(all.prefix_mass, 1.0);
    }

    #[test]
    fn indexed_matches_scan_on_ford() {
        let sfa = crate::synth::examples::ford_lattice();
        let c = greedy_approximate(&sfa, 6, 2).unwrap();
        let idx = build_index(
            std::slice::from_ref(&c),
            &build_trie(["ford", "rd"]).unwrap(),
        );
        let dfa = compile_pattern("Ford", false).unwrap();
        let out = indexed_query_data(&dfa, &idx, std::slice::from_ref(&c), 10);
        assert_eq!(out.anchor.as_deref(), Some("ford"));
        let scan = rank_data(&LineData::Chunked(vec![c]), &dfa, 10);
        assert_eq!(out.matches.len(), scan.len());
        assert!((out.matches[0].prob - scan[0].prob).abs() < 1e-12);
    }

    #[test]
    fn zero_postings_and_fallback() {
        let c = chain(&[&[("abc", 1.0)]]);
        let idx = build_index(std::slice::from_ref(&c), &build_trie(["zzz"]).unwrap());
        let dfa = compile_pattern("zzz", false).unwrap();
        let out = indexed_query_data(&dfa, &idx, std::slice::from_ref(&c), 10);
        assert!(out.matches.is_empty());
        assert_eq!(out.candidates, 0);
        let dfa = compile_pattern("abc", false).unwrap();
        let out = indexed_query_data(&dfa, &idx, std::slice::from_ref(&c), 10);
        assert_eq!(out.anchor, None);
        assert_eq!(out.matches.len(), 1);
    }
}
