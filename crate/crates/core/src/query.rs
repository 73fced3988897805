//! Probabilistic regex queries.
//!
//! Patterns use a small dialect: literal characters, escapes (`\\`, `\(`,
//! `\)`, `\|`, `\*`, `\.`, `\s` for space), `\d` for a digit, `\x` for any
//! printable ASCII character, `(a|b)` alternation, grouping and `*`. A `.`
//! is a literal dot. Patterns compile to a total DFA over ASCII (plus one
//! symbol for everything else). By default the DFA is wrapped for substring
//! semantics: it accepts `Σ* L Σ*` and its accepting state is absorbing.
//!
//! The match probability of a line is the total probability of the strings
//! its model emits that the DFA accepts. Over an SFA this is one pass in
//! topological order carrying a mass per DFA state at every node.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::approx::ChunkedSfa;
use crate::error::{Error, Result};
use crate::inference::RankedStrings;
use crate::sfa::{EdgeId, NodeId, Sfa};

/// Symbols: the 128 ASCII code points plus one class for everything else.
const SYMBOLS: usize = 129;
const OTHER: usize = 128;

fn symbol(c: char) -> usize {
    if c.is_ascii() {
        c as usize
    } else {
        OTHER
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Clone, Debug, PartialEq)]
enum Class {
    Lit(u8),
    Digit,
    Any,
}

#[derive(Clone, Debug, PartialEq)]
enum Ast {
    Atom(Class),
    Concat(Vec<Ast>),
    Alt(Vec<Ast>),
    Star(Box<Ast>),
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, pos: usize, msg: &str) -> Error {
        Error::Pattern {
            pos,
            msg: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn alt(&mut self) -> Result<Ast> {
        let mut branches = vec![self.concat()?];
        while self.peek() == Some(b'|') {
            self.pos += 1;
            branches.push(self.concat()?);
        }
        Ok(if branches.len() == 1 {
            branches.pop().unwrap()
        } else {
            Ast::Alt(branches)
        })
    }

    fn concat(&mut self) -> Result<Ast> {
        let begin = self.pos;
        let mut items = Vec::new();
        while let Some(c) = self.peek() {
            if c == b'|' || c == b')' {
                break;
            }
            let mut atom = self.atom()?;
            while self.peek() == Some(b'*') {
                self.pos += 1;
                atom = Ast::Star(Box::new(atom));
            }
            items.push(atom);
        }
        if items.is_empty() {
            return Err(self.err(begin, "empty expression"));
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Ast::Concat(items)
        })
    }

    fn atom(&mut self) -> Result<Ast> {
        let at = self.pos;
        let c = self.peek().expect("caller checked");
        if !c.is_ascii() {
            return Err(self.err(at, "non-ASCII character"));
        }
        self.pos += 1;
        match c {
            b'(' => {
                let inner = self.alt()?;
                if self.peek() != Some(b')') {
                    return Err(self.err(self.pos, "expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            b'*' => Err(self.err(at, "`*` has nothing to repeat")),
            b'\\' => {
                let e = self.peek().ok_or_else(|| self.err(at, "dangling escape"))?;
                self.pos += 1;
                let class = match e {
                    b'd' => Class::Digit,
                    b'x' => Class::Any,
                    b's' => Class::Lit(b' '),
                    b't' => Class::Lit(b'\t'),
                    b'n' => Class::Lit(b'\n'),
                    b'\\' | b'(' | b')' | b'|' | b'*' | b'.' => Class::Lit(e),
                    _ => return Err(self.err(at, "unknown escape")),
                };
                Ok(Ast::Atom(class))
            }
            c => Ok(Ast::Atom(Class::Lit(c))),
        }
    }
}

fn parse(pattern: &str) -> Result<Ast> {
    if pattern.is_empty() {
        return Err(Error::Pattern {
            pos: 0,
            msg: "empty pattern".into(),
        });
    }
    let mut p = Parser {
        src: pattern.as_bytes(),
        pos: 0,
    };
    let ast = p.alt()?;
    if p.pos != p.src.len() {
        return Err(p.err(p.pos, "unbalanced `)`"));
    }
    Ok(ast)
}

fn max_len(ast: &Ast) -> Option<usize> {
    match ast {
        Ast::Atom(_) => Some(1),
        Ast::Concat(v) => v.iter().map(max_len).sum(),
        Ast::Alt(v) => v
            .iter()
            .map(max_len)
            .try_fold(0, |acc, x| x.map(|x| acc.max(x))),
        Ast::Star(_) => None,
    }
}

/// Maximal leading run of literal non-space characters, lowercased.
fn leading_literal(ast: &Ast) -> String {
    let items: &[Ast] = match ast {
        Ast::Concat(v) => v,
        a @ Ast::Atom(_) => std::slice::from_ref(a),
        _ => &[],
    };
    let mut s = String::new();
    for it in items {
        match it {
            Ast::Atom(Class::Lit(c)) if *c != b' ' && c.is_ascii_graphic() => {
                s.push(c.to_ascii_lowercase() as char)
            }
            _ => break,
        }
    }
    s
}

// ---------------------------------------------------------------------------
// NFA and subset construction

struct Nfa {
    eps: Vec<Vec<usize>>,
    edges: Vec<Vec<(Class, usize)>>,
    fold: bool,
}

impl Nfa {
    fn add(&mut self) -> usize {
        self.eps.push(Vec::new());
        self.edges.push(Vec::new());
        self.eps.len() - 1
    }

    /// Thompson construction; returns `(entry, exit)`.
    fn build(&mut self, ast: &Ast) -> (usize, usize) {
        match ast {
            Ast::Atom(c) => {
                let (a, b) = (self.add(), self.add());
                self.edges[a].push((c.clone(), b));
                (a, b)
            }
            Ast::Concat(items) => {
                let (first, mut last) = self.build(&items[0]);
                for it in &items[1..] {
                    let (a, b) = self.build(it);
                    self.eps[last].push(a);
                    last = b;
                }
                (first, last)
            }
            Ast::Alt(branches) => {
                let (a, b) = (self.add(), self.add());
                for br in branches {
                    let (x, y) = self.build(br);
                    self.eps[a].push(x);
                    self.eps[y].push(b);
                }
                (a, b)
            }
            Ast::Star(inner) => {
                let (a, b) = (self.add(), self.add());
                let (x, y) = self.build(inner);
                self.eps[a].push(x);
                self.eps[a].push(b);
                self.eps[y].push(x);
                self.eps[y].push(b);
                (a, b)
            }
        }
    }

    fn matches(&self, class: &Class, sym: usize) -> bool {
        match class {
            Class::Lit(c) => {
                sym == *c as usize
                    || (self.fold && sym < 128 && (sym as u8).eq_ignore_ascii_case(c))
            }
            Class::Digit => (b'0' as usize..=b'9' as usize).contains(&sym),
            Class::Any => (32..=126).contains(&sym),
        }
    }

    fn closure(&self, set: &mut BTreeSet<usize>) {
        let mut stack: Vec<usize> = set.iter().copied().collect();
        while let Some(s) = stack.pop() {
            for &t in &self.eps[s] {
                if set.insert(t) {
                    stack.push(t);
                }
            }
        }
    }
}

/// Compilation options.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PatternOptions {
    /// Letters match either case.
    pub case_fold: bool,
    /// Match whole strings instead of substrings.
    pub whole: bool,
}

/// A total DFA over ASCII plus an "other" symbol.
#[derive(Clone, Debug)]
pub struct QueryDfa {
    pattern: String,
    trans: Vec<[u32; SYMBOLS]>,
    accepting: Vec<bool>,
    start: u32,
    whole: bool,
    anchor: Option<String>,
    max_len: Option<usize>,
}

/// Compiles `pattern` for substring matching.
pub fn compile_pattern(pattern: &str, case_fold: bool) -> Result<QueryDfa> {
    compile_pattern_with(
        pattern,
        PatternOptions {
            case_fold,
            whole: false,
        },
    )
}

pub fn compile_pattern_with(pattern: &str, opts: PatternOptions) -> Result<QueryDfa> {
    let ast = parse(pattern)?;
    let mut nfa = Nfa {
        eps: Vec::new(),
        edges: Vec::new(),
        fold: opts.case_fold,
    };
    let (entry, exit) = nfa.build(&ast);

    let mut init = BTreeSet::from([entry]);
    nfa.closure(&mut init);
    let entry_closure = init.clone();

    // Subset construction. In substring mode every subset also contains the
    // entry closure (an implicit Σ* prefix) and all subsets holding the exit
    // state collapse into one absorbing state.
    const ACCEPT: usize = 0;
    let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut sets: Vec<Vec<usize>> = Vec::new();
    let mut trans: Vec<[u32; SYMBOLS]> = Vec::new();
    let mut accepting: Vec<bool> = Vec::new();
    let absorbing = !opts.whole;
    if absorbing {
        sets.push(Vec::new());
        trans.push([ACCEPT as u32; SYMBOLS]);
        accepting.push(true);
    }
    let mut intern = |set: BTreeSet<usize>,
                      sets: &mut Vec<Vec<usize>>,
                      trans: &mut Vec<[u32; SYMBOLS]>,
                      accepting: &mut Vec<bool>,
                      queue: &mut VecDeque<usize>|
     -> usize {
        let acc = set.contains(&exit);
        if absorbing && acc {
            return ACCEPT;
        }
        let key: Vec<usize> = set.into_iter().collect();
        if let Some(&id) = ids.get(&key) {
            return id;
        }
        let id = sets.len();
        ids.insert(key.clone(), id);
        sets.push(key);
        trans.push([0; SYMBOLS]);
        accepting.push(acc);
        queue.push_back(id);
        id
    };
    let mut queue = VecDeque::new();
    let start = intern(init, &mut sets, &mut trans, &mut accepting, &mut queue);
    while let Some(id) = queue.pop_front() {
        for sym in 0..SYMBOLS {
            let mut next = BTreeSet::new();
            for &s in &sets[id] {
                for (class, t) in &nfa.edges[s] {
                    if nfa.matches(class, sym) {
                        next.insert(*t);
                    }
                }
            }
            nfa.closure(&mut next);
            if !opts.whole {
                next.extend(entry_closure.iter().copied());
            }
            let t = intern(next, &mut sets, &mut trans, &mut accepting, &mut queue);
            trans[id][sym] = t as u32;
        }
    }

    let (trans, accepting, start) = minimize(&trans, &accepting, start);
    let lead = leading_literal(&ast);
    Ok(QueryDfa {
        pattern: pattern.to_string(),
        trans,
        accepting,
        start,
        whole: opts.whole,
        anchor: (lead.len() >= 3).then_some(lead),
        max_len: max_len(&ast),
    })
}

/// Moore partition refinement. States are renumbered in breadth-first
/// order from the start state.
fn minimize(
    trans: &[[u32; SYMBOLS]],
    accepting: &[bool],
    start: usize,
) -> (Vec<[u32; SYMBOLS]>, Vec<bool>, u32) {
    let n = trans.len();
    let mut class: Vec<usize> = accepting.iter().map(|&a| a as usize).collect();
    let mut count = 0;
    loop {
        let mut sig: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
        let mut next = vec![0; n];
        for s in 0..n {
            let key = (
                class[s],
                trans[s]
                    .iter()
                    .map(|&t| class[t as usize])
                    .collect::<Vec<_>>(),
            );
            let len = sig.len();
            next[s] = *sig.entry(key).or_insert(len);
        }
        let new_count = sig.len();
        class = next;
        if new_count == count {
            break;
        }
        count = new_count;
    }
    let mut order: Vec<Option<u32>> = vec![None; count];
    let mut rep: Vec<usize> = Vec::new();
    let mut queue = VecDeque::from([start]);
    order[class[start]] = Some(0);
    rep.push(start);
    while let Some(s) = queue.pop_front() {
        for &t in trans[s].iter() {
            let c = class[t as usize];
            if order[c].is_none() {
                order[c] = Some(rep.len() as u32);
                rep.push(t as usize);
                queue.push_back(t as usize);
            }
        }
    }
    let new_trans = rep
        .iter()
        .map(|&s| {
            let mut row = [0u32; SYMBOLS];
            for (sym, &t) in trans[s].iter().enumerate() {
                row[sym] = order[class[t as usize]].expect("reachable");
            }
            row
        })
        .collect();
    let new_acc = rep.iter().map(|&s| accepting[s]).collect();
    (new_trans, new_acc, 0)
}

impl QueryDfa {
    pub fn pattern(&self) -> &str {
        &self.pattern
    }
    pub fn state_count(&self) -> usize {
        self.trans.len()
    }
    pub fn start(&self) -> u32 {
        self.start
    }
    pub fn is_accepting(&self, q: u32) -> bool {
        self.accepting[q as usize]
    }
    /// Substring (wrapped) or whole-string semantics.
    pub fn is_substring(&self) -> bool {
        !self.whole
    }
    pub fn step(&self, q: u32, c: char) -> u32 {
        self.trans[q as usize][symbol(c)]
    }
    pub fn run(&self, q: u32, s: &str) -> u32 {
        s.chars().fold(q, |q, c| self.step(q, c))
    }
    pub fn accepts(&self, s: &str) -> bool {
        self.is_accepting(self.run(self.start, s))
    }
    /// Lowercased leading literal word usable as an index key, if the
    /// pattern starts with one of at least three characters.
    pub fn anchor(&self) -> Option<&str> {
        self.anchor.as_deref()
    }
    /// Longest string the pattern can match, `None` if unbounded.
    pub fn max_match_len(&self) -> Option<usize> {
        self.max_len
    }
}

// ---------------------------------------------------------------------------
// Evaluation

/// Accepted mass of strings read along paths from `from` to `to` over the
/// nodes in `order` (topologically sorted), starting with `seed` mass in the
/// DFA start state.
pub(crate) fn eval_region(
    dfa: &QueryDfa,
    sfa: &Sfa,
    order: &[NodeId],
    from: NodeId,
    to: NodeId,
    edge_ok: impl Fn(EdgeId) -> bool,
    seed: f64,
) -> f64 {
    let q = dfa.state_count();
    let mut mass: Vec<Option<Vec<f64>>> = vec![None; sfa.node_count()];
    let mut init = vec![0.0; q];
    init[dfa.start as usize] = seed;
    mass[from as usize] = Some(init);
    for &v in order {
        let Some(mv) = mass[v as usize].take() else {
            continue;
        };
        if v == to {
            return (0..q).filter(|&s| dfa.accepting[s]).map(|s| mv[s]).sum();
        }
        for &e in sfa.out_edges(v) {
            if !edge_ok(e) {
                continue;
            }
            let edge = sfa.edge(e);
            let target = mass[edge.dst as usize].get_or_insert_with(|| vec![0.0; q]);
            for (s, &ms) in mv.iter().enumerate() {
                if ms == 0.0 {
                    continue;
                }
                for a in &edge.arcs {
                    let t = dfa.run(s as u32, &a.label);
                    target[t as usize] += ms * a.prob;
                }
            }
        }
    }
    0.0
}

/// Match probability of `dfa` over a (possibly generalized) SFA.
pub fn eval_sfa<S: AsRef<Sfa> + ?Sized>(dfa: &QueryDfa, sfa: &S) -> f64 {
    let sfa = sfa.as_ref();
    eval_region(
        dfa,
        sfa,
        sfa.topo_order(),
        sfa.start(),
        sfa.final_node(),
        |_| true,
        1.0,
    )
}

impl AsRef<Sfa> for Sfa {
    fn as_ref(&self) -> &Sfa {
        self
    }
}

impl AsRef<Sfa> for ChunkedSfa {
    fn as_ref(&self) -> &Sfa {
        self.graph()
    }
}

/// Total probability of the accepted entries.
pub fn eval_strings(dfa: &QueryDfa, ranked: &RankedStrings) -> f64 {
    ranked
        .entries
        .iter()
        .filter(|e| dfa.accepts(&e.string))
        .map(|e| e.prob())
        .sum()
}

// ---------------------------------------------------------------------------
// Ranking

/// Representation a query runs against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Map,
    Kmap(usize),
    FullSfa,
    Staccato { m: usize, k: usize },
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Map => write!(f, "map"),
            Mode::Kmap(k) => write!(f, "kmap(k={k})"),
            Mode::FullSfa => write!(f, "fullsfa"),
            Mode::Staccato { m, k } => write!(f, "staccato(m={m},k={k})"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    /// Parses `map`, `fullsfa`, `kmap:K` or `staccato:M:K`.
    fn from_str(s: &str) -> Result<Mode> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |x: &str| {
            x.parse::<usize>()
                .ok()
                .filter(|&v| v >= 1)
                .ok_or_else(|| Error::Domain(format!("bad mode parameter {x:?} in {s:?}")))
        };
        match parts.as_slice() {
            ["map"] => Ok(Mode::Map),
            ["fullsfa"] => Ok(Mode::FullSfa),
            ["kmap", k] => Ok(Mode::Kmap(num(k)?)),
            ["staccato", m, k] => Ok(Mode::Staccato {
                m: num(m)?,
                k: num(k)?,
            }),
            _ => Err(Error::Domain(format!("unknown mode {s:?}"))),
        }
    }
}

/// One ranked answer.
#[derive(Clone, Debug, PartialEq)]
pub struct LineMatch {
    pub line: usize,
    pub prob: f64,
    /// 1-based rank.
    pub rank: usize,
}

/// All lines of one representation, held in memory.
#[derive(Clone, Debug)]
pub enum LineData {
    Full(Vec<Sfa>),
    Ranked(Vec<RankedStrings>),
    Chunked(Vec<ChunkedSfa>),
}

impl LineData {
    pub fn len(&self) -> usize {
        match self {
            LineData::Full(v) => v.len(),
            LineData::Ranked(v) => v.len(),
            LineData::Chunked(v) => v.len(),
        }
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Match probability of every line.
    pub fn probabilities(&self, dfa: &QueryDfa) -> Vec<f64> {
        match self {
            LineData::Full(v) => v.par_iter().map(|s| eval_sfa(dfa, s)).collect(),
            LineData::Ranked(v) => v.par_iter().map(|r| eval_strings(dfa, r)).collect(),
            LineData::Chunked(v) => v.par_iter().map(|c| eval_sfa(dfa, c)).collect(),
        }
    }
}

/// Orders `(line, prob)` pairs by descending probability then line id,
/// keeps positive ones and cuts at `num_ans`.
pub fn rank_probabilities(
    probs: impl IntoIterator<Item = (usize, f64)>,
    num_ans: usize,
) -> Vec<LineMatch> {
    let mut v: Vec<(usize, f64)> = probs.into_iter().filter(|x| x.1 > 0.0).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(num_ans);
    v.into_iter()
        .enumerate()
        .map(|(i, (line, prob))| LineMatch {
            line,
            prob,
            rank: i + 1,
        })
        .collect()
}

/// Ranks in-memory lines by match probability.
pub fn rank_data(data: &LineData, dfa: &QueryDfa, num_ans: usize) -> Vec<LineMatch> {
    rank_probabilities(data.probabilities(dfa).into_iter().enumerate(), num_ans)
}

/// Loads `mode` from the corpus and returns the `num_ans` most probable
/// matching lines.
pub fn rank_lines(
    corpus: &crate::store::Corpus,
    dfa: &QueryDfa,
    mode: Mode,
    num_ans: usize,
) -> Result<Vec<LineMatch>> {
    let data = corpus.load_mode(mode)?;
    Ok(rank_data(&data, dfa, num_ans))
}

/// `x` with `digits` significant digits, in the shortest of fixed or
/// scientific notation (like C's `%g`).
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let mant = trim_zeros(mant);
        return format!("{mant}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `line<TAB>probability` rows with 9 significant digits.
pub fn format_tsv(matches: &[LineMatch]) -> String {
    matches
        .iter()
        .map(|m| format!("{}\t{}\n", m.line, format_sig(m.prob, 9)))
        .collect()
}

/// Aligned table with probabilities rounded to 4 decimals.
pub fn format_pretty(matches: &[LineMatch]) -> String {
    let mut out = format!("{:>5}  {:>8}  {:>8}\n", "rank", "line", "prob");
    for m in matches {
        out.push_str(&format!("{:>5}  {:>8}  {:>8.4}\n", m.rank, m.line, m.prob));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::top_k;
    use crate::sfa::enumerate_all;
    use crate::synth::{self, examples};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ford_matcher() {
        let dfa = compile_pattern("Ford", false).unwrap();
        assert_eq!(dfa.state_count(), 5);
        assert!(dfa.accepts("the Ford co"));
        assert!(!dfa.accepts("the ford co"));
        assert!(!dfa.accepts("F0 rd"));
        assert_eq!(dfa.anchor(), Some("ford"));
        let folded = compile_pattern("Ford", true).unwrap();
        assert!(folded.accepts("FORD"));
    }

    #[test]
    fn ford_probability() {
        let sfa = examples::ford_lattice();
        let dfa = compile_pattern("Ford", false).unwrap();
        let p = eval_sfa(&dfa, &sfa);
        assert!((p - 0.8 * 0.4 * 0.4 * 0.9).abs() < 1e-12);
        let map = top_k(&sfa, 1);
        assert_eq!(eval_strings(&dfa, &map), 0.0);
    }

    #[test]
    fn anchors() {
        let a = |p: &str| {
            compile_pattern(p, false)
                .unwrap()
                .anchor()
                .map(String::from)
        };
        assert_eq!(a("U.S.C. 2\\d\\d\\d").as_deref(), Some("u.s.c."));
        assert_eq!(a("Public Law (8|9)\\d").as_deref(), Some("public"));
        assert_eq!(a("(no|num).(2|8)"), None);
        assert_eq!(a("Fo*rd"), None);
        assert_eq!(a("ab"), None);
        assert_eq!(a("abc|def"), None);
    }

    #[test]
    fn dialect() {
        let dfa = compile_pattern("(no|num).(2|8)", false).unwrap();
        assert!(dfa.accepts("xx num.8"));
        assert!(dfa.accepts("no.2"));
        assert!(!dfa.accepts("nom2"));
        let d = compile_pattern("a\\d*b", false).unwrap();
        assert!(d.accepts("ab") && d.accepts("a123b") && !d.accepts("a1x2b"));
        let x = compile_pattern("a\\xb", false).unwrap();
        assert!(x.accepts("a b") && x.accepts("a~b") && !x.accepts("a\tb"));
        let esc = compile_pattern("\\(\\*\\)", false).unwrap();
        assert!(esc.accepts("(*)"));
        let all = compile_pattern("\\x*", false).unwrap();
        assert_eq!(all.state_count(), 1);
        assert!(all.accepts(""));
        assert_eq!(
            compile_pattern("ab(c|de)", false).unwrap().max_match_len(),
            Some(4)
        );
        assert_eq!(compile_pattern("ab*", false).unwrap().max_match_len(), None);
    }

    #[test]
    fn whole_string_mode() {
        let opts = PatternOptions {
            case_fold: false,
            whole: true,
        };
        let dfa = compile_pattern_with("a(b|c)*", opts).unwrap();
        assert!(dfa.accepts("abcb"));
        assert!(!dfa.accepts("xabc"));
        assert!(!dfa.is_substring());
    }

    #[test]
    fn syntax_errors() {
        for (p, pos) in [
            ("", 0),
            ("(ab", 3),
            ("ab)", 2),
            ("*a", 0),
            ("a\\q", 1),
            ("a||b", 2),
        ] {
            match compile_pattern(p, false) {
                Err(Error::Pattern { pos: got, .. }) => assert_eq!(got, pos, "{p}"),
                other => panic!("{p}: {other:?}"),
            }
        }
    }

    #[test]
    fn accept_is_absorbing() {
        let dfa = compile_pattern("ab", false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let suffix: String = (0..rng.gen_range(0..20))
                .map(|_| rng.gen_range(0u8..128) as char)
                .collect();
            assert!(dfa.accepts(&format!("xab{suffix}")));
        }
    }

    #[test]
    fn matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..60 {
            let cfg = synth::RandomSfaConfig {
                nodes: rng.gen_range(2..=9),
                multi_char: i % 3 == 0,
                ..Default::default()
            };
            let sfa = synth::random_small_sfa(&mut rng, &cfg, 4000);
            let all = enumerate_all(&sfa, 4000).unwrap();
            for _ in 0..5 {
                let pat = synth::random_pattern(&mut rng, 4);
                let dfa = compile_pattern(&pat, false).unwrap();
                let brute: f64 = all.iter().filter(|x| dfa.accepts(&x.0)).map(|x| x.1).sum();
                assert!((eval_sfa(&dfa, &sfa) - brute).abs() < 1e-9, "{pat}");
            }
        }
    }

    #[test]
    fn ranking_order_and_cutoff() {
        let r = rank_probabilities([(0, 0.0), (1, 0.5), (2, 0.7), (3, 0.5)], 10);
        let ids: Vec<usize> = r.iter().map(|m| m.line).collect();
        assert_eq!(ids, vec![2, 1, 3]);
        assert_eq!(r[2].rank, 3);
        assert_eq!(rank_probabilities([(1, 0.5), (2, 0.7)], 1).len(), 1);
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(format_sig(0.20736, 9), "0.20736");
        assert_eq!(format_sig(1.0, 9), "1");
        assert_eq!(format_sig(1.0 / 3.0, 9), "0.333333333");
        assert_eq!(format_sig(1.5e-7, 9), "1.5e-7");
        assert_eq!(format_sig(-1.2345678901234, 12), "-1.23456789012");
        assert_eq!(format_sig(0.0, 9), "0");
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("map".parse::<Mode>().unwrap(), Mode::Map);
        assert_eq!("kmap:5".parse::<Mode>().unwrap(), Mode::Kmap(5));
        assert_eq!(
            "staccato:3:4".parse::<Mode>().unwrap(),
            Mode::Staccato { m: 3, k: 4 }
        );
        assert!("staccato:0:4".parse::<Mode>().is_err());
        assert!("bogus".parse::<Mode>().is_err());
    }
}
