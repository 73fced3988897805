//! Seeded synthetic data: small example lattices, random SFAs for oracle
//! testing, and OCR-noise corpora with planted ground truth.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::query::compile_pattern;
use crate::sfa::{MassCheck, NodeId, RawArc, RawSfa, Sfa};

/// Hand-built lattices used throughout the tests and docs.
pub mod examples {
    use super::*;

    /// OCR lattice of a scanned word "Ford" whose most likely reading is
    /// `"F0 rd"` (0.8·0.6·0.6·0.8·0.9) while `"Ford"` has 0.8·0.4·0.4·0.9.
    pub fn ford_lattice() -> Sfa {
        Sfa::from_arcs(
            6,
            0,
            5,
            [
                (0, 1, "F", 0.8),
                (0, 1, "T", 0.2),
                (1, 2, "o", 0.4),
                (1, 2, "0", 0.6),
                (2, 4, "r", 0.4),
                (2, 3, " ", 0.6),
                (3, 4, "r", 0.8),
                (3, 4, "n", 0.2),
                (4, 5, "d", 0.9),
                (4, 5, "a", 0.1),
            ],
            MassCheck::Stochastic,
        )
        .expect("valid lattice")
    }

    /// Branching lattice emitting exactly `"aef"` (0.6) and `"abcd"` (0.4):
    /// 0-a→1, 1-b→2, 2-c→3, 3-d→5, 1-e→4, 4-f→5.
    pub fn two_string_lattice() -> Sfa {
        Sfa::from_arcs(
            6,
            0,
            5,
            [
                (0, 1, "a", 1.0),
                (1, 2, "b", 0.4),
                (2, 3, "c", 1.0),
                (3, 5, "d", 1.0),
                (1, 4, "e", 0.6),
                (4, 5, "f", 1.0),
            ],
            MassCheck::Stochastic,
        )
        .expect("valid lattice")
    }

    /// Chain lattice with one arc set per character of `text`.
    pub fn chain(text: &str) -> Sfa {
        let n = text.chars().count();
        Sfa::from_arcs(
            n + 1,
            0,
            n as NodeId,
            text.chars()
                .enumerate()
                .map(|(i, c)| (i as NodeId, i as NodeId + 1, c.to_string(), 1.0)),
            MassCheck::Stochastic,
        )
        .expect("valid chain")
    }
}

#[derive(Clone, Debug)]
pub struct RandomSfaConfig {
    pub nodes: usize,
    pub alphabet: usize,
    /// Probability of each extra forward edge `i → j`, `j > i + 1`.
    pub extra_edge_prob: f64,
    /// Maximum labels per edge.
    pub max_labels: usize,
    /// Emit multi-character labels (generalized SFA).
    pub multi_char: bool,
}

impl Default for RandomSfaConfig {
    fn default() -> Self {
        RandomSfaConfig {
            nodes: 8,
            alphabet: 4,
            extra_edge_prob: 0.2,
            max_labels: 2,
            multi_char: false,
        }
    }
}

/// A random unique-path SFA over the first `alphabet` lowercase letters.
/// Node ids follow a topological order; every node lies on the chain
/// `0 → 1 → … → n-1`.
pub fn random_sfa<R: Rng>(rng: &mut R, cfg: &RandomSfaConfig) -> Sfa {
    let n = cfg.nodes.max(2);
    let alpha: Vec<char> = (b'a'..b'a' + cfg.alphabet.clamp(1, 26) as u8)
        .map(char::from)
        .collect();
    let mut arcs = Vec::new();
    for i in 0..n - 1 {
        let mut targets = vec![i + 1];
        for j in i + 2..n {
            if targets.len() < alpha.len() && rng.gen_bool(cfg.extra_edge_prob) {
                targets.push(j);
            }
        }
        let mut firsts = alpha.clone();
        firsts.shuffle(rng);
        let mut free = firsts.len() - targets.len();
        let mut next = 0;
        let mut labels: Vec<(usize, String)> = Vec::new();
        for &t in &targets {
            let extra = rng.gen_range(0..cfg.max_labels.max(1)).min(free);
            free -= extra;
            for _ in 0..=extra {
                let mut s = firsts[next].to_string();
                next += 1;
                if cfg.multi_char {
                    for _ in 0..rng.gen_range(0..3) {
                        s.push(*alpha.choose(rng).unwrap());
                    }
                }
                labels.push((t, s));
            }
        }
        let weights: Vec<f64> = labels.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for ((t, s), w) in labels.into_iter().zip(weights) {
            arcs.push(RawArc {
                src: i as NodeId,
                dst: t as NodeId,
                label: s,
                prob: w / total,
            });
        }
    }
    let raw = RawSfa {
        node_count: n,
        starts: vec![0],
        finals: vec![n as NodeId - 1],
        arcs,
    };
    // Rounding may leave a node a few ulps away from 1.
    Sfa::from_raw(raw, MassCheck::Stochastic).expect("generator produces valid SFAs")
}

/// Draws random SFAs until one has at most `max_paths` labeled paths.
pub fn random_small_sfa<R: Rng>(rng: &mut R, cfg: &RandomSfaConfig, max_paths: u128) -> Sfa {
    loop {
        let s = random_sfa(rng, cfg);
        if s.path_count() <= max_paths {
            return s;
        }
    }
}

/// A random pattern in the query dialect over the first `alphabet` letters.
pub fn random_pattern<R: Rng>(rng: &mut R, alphabet: usize) -> String {
    fn atom<R: Rng>(rng: &mut R, alpha: &[char], depth: usize) -> String {
        match rng.gen_range(0..10) {
            0 if depth < 2 => {
                let a = piece(rng, alpha, depth + 1);
                let b = piece(rng, alpha, depth + 1);
                format!("({a}|{b})")
            }
            1 => "\\x".to_string(),
            2 if depth < 2 => format!("({})*", alpha.choose(rng).unwrap()),
            _ => alpha.choose(rng).unwrap().to_string(),
        }
    }
    fn piece<R: Rng>(rng: &mut R, alpha: &[char], depth: usize) -> String {
        let len = rng.gen_range(1..=3);
        (0..len).map(|_| atom(rng, alpha, depth)).collect()
    }
    let alpha: Vec<char> = (b'a'..b'a' + alphabet.clamp(1, 26) as u8)
        .map(char::from)
        .collect();
    piece(rng, &alpha, 0)
}

// ---------------------------------------------------------------------------
// OCR-noise corpora

#[derive(Clone, Debug)]
pub struct OcrNoiseConfig {
    pub lines: usize,
    /// Probability that a character position is misread (a confusable
    /// character outranks the true one).
    pub noise: f64,
    pub seed: u64,
    pub min_words: usize,
    pub max_words: usize,
    /// Mass spread uniformly over every other character of the alphabet.
    pub tail_mass: f64,
    /// Emit tail arcs for every alphabet character.
    pub dense_tail: bool,
    /// Probability that a space may be dropped (adds a bypass edge).
    pub space_merge: f64,
    /// Probability that a line receives a planted phrase.
    pub plant_rate: f64,
    /// Probability that a whole word is smudged (every character misread).
    pub smudge: f64,
}

impl Default for OcrNoiseConfig {
    fn default() -> Self {
        OcrNoiseConfig {
            lines: 200,
            noise: 0.15,
            seed: 7,
            min_words: 5,
            max_words: 8,
            tail_mass: 0.01,
            dense_tail: true,
            space_merge: 0.1,
            plant_rate: 0.5,
            smudge: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticLine {
    pub text: String,
    pub sfa: Sfa,
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub lines: Vec<SyntheticLine>,
    /// `(query id, pattern)`.
    pub queries: Vec<(String, String)>,
    /// `(query id, line id)` for every line whose clean text matches.
    pub truth: Vec<(String, usize)>,
}

const VOCAB: &[&str] = &[
    "the",
    "of",
    "and",
    "to",
    "in",
    "for",
    "is",
    "on",
    "that",
    "by",
    "this",
    "with",
    "act",
    "section",
    "amended",
    "shall",
    "state",
    "united",
    "states",
    "court",
    "report",
    "loss",
    "claim",
    "year",
    "filed",
    "amount",
    "vehicle",
    "damage",
    "title",
    "under",
    "such",
    "any",
    "may",
    "person",
    "other",
    "provided",
    "secretary",
    "general",
    "federal",
    "be",
    "as",
    "was",
    "which",
    "data",
    "query",
    "table",
    "system",
    "page",
    "book",
    "line",
    "english",
    "literature",
    "sheet",
    "model",
    "record",
];

const PLANTED: &[&str] = &[
    "Ford",
    "President",
    "Congress",
    "insurance",
    "Public Law 89",
    "Public Law 94",
    "U.S.C. 2401",
];

const QUERIES: &[(&str, &str)] = &[
    ("q1", "Ford"),
    ("q2", "President"),
    ("q3", "Congress"),
    ("q4", "insurance"),
    ("q5", "Public Law (8|9)\\d"),
    ("q6", "U.S.C. 2\\d\\d\\d"),
];

/// Characters every dense position may emit.
pub fn ocr_alphabet() -> Vec<char> {
    let mut v: Vec<char> = ('a'..='z').chain('A'..='Z').chain('0'..='9').collect();
    v.extend([' ', '.', ',', '-']);
    v
}

fn confusions(c: char) -> &'static [char] {
    match c {
        'o' => &['0', 'e', 'c', 'a'],
        'O' => &['0', 'Q', 'D'],
        '0' => &['o', 'O', '8'],
        'l' => &['1', 'I', 'i', 't'],
        'I' => &['l', '1', 'T'],
        '1' => &['l', 'I', '7'],
        'i' => &['l', 'j', '1'],
        'e' => &['c', 'o', 'a'],
        'c' => &['e', 'o'],
        'a' => &['o', 'e', 's'],
        'r' => &['n', 'v', 'f'],
        'n' => &['r', 'm', 'h', 'u'],
        'm' => &['n', 'w'],
        'h' => &['b', 'n', 'k'],
        'b' => &['h', '6'],
        'u' => &['v', 'n', 'a'],
        'v' => &['u', 'y'],
        's' => &['5', 'S', 'a'],
        'S' => &['5', 's', '8'],
        '5' => &['S', 's', '6'],
        't' => &['f', 'l', 'r'],
        'f' => &['t', 'r'],
        'd' => &['a', 'o'],
        'g' => &['q', '9', 'y'],
        'q' => &['g', '9'],
        'y' => &['v', 'g'],
        'w' => &['v', 'm'],
        'k' => &['h', 'x'],
        'p' => &['o', 'n'],
        'F' => &['P', 'E', 'T'],
        'P' => &['F', 'R'],
        'C' => &['G', 'O', 'c'],
        'L' => &['I', 'l'],
        'U' => &['V', 'O'],
        '2' => &['Z', 'z'],
        '4' => &['A', '9'],
        '8' => &['B', '3', '0'],
        '9' => &['g', 'q'],
        '.' => &[',', '-'],
        _ => &['e', 'o', 'a'],
    }
}

/// Generates a corpus of noisy OCR lattices with planted phrases and the
/// matching ground truth for the built-in query set.
pub fn ocr_corpus(cfg: &OcrNoiseConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lines = Vec::with_capacity(cfg.lines);
    for _ in 0..cfg.lines {
        let text = clean_line(&mut rng, cfg);
        let sfa = noisy_lattice(&mut rng, &text, cfg);
        lines.push(SyntheticLine { text, sfa });
    }
    let queries: Vec<(String, String)> = QUERIES
        .iter()
        .map(|(id, p)| (id.to_string(), p.to_string()))
        .collect();
    let mut truth = Vec::new();
    for (id, pat) in &queries {
        let dfa = compile_pattern(pat, false).expect("built-in queries compile");
        for (i, l) in lines.iter().enumerate() {
            if dfa.accepts(&l.text) {
                truth.push((id.clone(), i));
            }
        }
    }
    SyntheticCorpus {
        lines,
        queries,
        truth,
    }
}

fn clean_line<R: Rng>(rng: &mut R, cfg: &OcrNoiseConfig) -> String {
    let words = rng.gen_range(cfg.min_words..=cfg.max_words.max(cfg.min_words));
    let mut parts: Vec<String> = (0..words)
        .map(|_| VOCAB.choose(rng).unwrap().to_string())
        .collect();
    if rng.gen_bool(cfg.plant_rate.clamp(0.0, 1.0)) {
        let at = rng.gen_range(0..=parts.len());
        parts.insert(at, PLANTED.choose(rng).unwrap().to_string());
    }
    if let Some(first) = parts.first_mut() {
        let mut cs = first.chars();
        if let Some(c) = cs.next() {
            *first = c.to_uppercase().chain(cs).collect();
        }
    }
    parts.join(" ")
}

fn noisy_lattice<R: Rng>(rng: &mut R, text: &str, cfg: &OcrNoiseConfig) -> Sfa {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let alphabet = ocr_alphabet();
    let mut arcs = Vec::new();
    let mut smudged = false;
    for (i, &c) in chars.iter().enumerate() {
        if c == ' ' {
            smudged = false;
        } else if i == 0 || chars[i - 1] == ' ' {
            smudged = rng.gen_bool(cfg.smudge.clamp(0.0, 1.0));
        }
        let src = i as NodeId;
        let mut used: BTreeSet<char> = BTreeSet::new();
        let mut local: Vec<(NodeId, char, f64)> = Vec::new();
        let mut budget = 1.0;
        let tail = if cfg.dense_tail { cfg.tail_mass } else { 0.0 };
        budget -= tail;

        if c == ' ' && i + 1 < n && chars[i + 1] != ' ' && rng.gen_bool(cfg.space_merge) {
            // The space may be dropped: bypass edge emitting the next char.
            let q = rng.gen_range(0.1..0.4) * budget;
            local.push((src + 2, chars[i + 1], q));
            used.insert(chars[i + 1]);
            budget -= q;
        }
        let pool: Vec<char> = confusions(c)
            .iter()
            .copied()
            .filter(|x| *x != c && !used.contains(x))
            .collect();
        if (smudged || rng.gen_bool(cfg.noise.clamp(0.0, 1.0))) && !pool.is_empty() {
            let top = *pool.choose(rng).unwrap();
            let p_top = rng.gen_range(0.45..0.6) * budget;
            let p_true = rng.gen_range(0.2..0.35) * budget;
            local.push((src + 1, top, p_top));
            local.push((src + 1, c, p_true));
            used.insert(top);
            used.insert(c);
            let rest = budget - p_top - p_true;
            let others: Vec<char> = pool.iter().copied().filter(|x| !used.contains(x)).collect();
            if others.is_empty() {
                local[0].2 += rest;
            } else {
                let k = others.len().min(2);
                for &o in &others[..k] {
                    local.push((src + 1, o, rest / k as f64));
                    used.insert(o);
                }
            }
        } else {
            let p_true = rng.gen_range(0.85..0.97) * budget;
            local.push((src + 1, c, p_true));
            used.insert(c);
            let rest = budget - p_true;
            if let Some(&alt) = pool.choose(rng) {
                local.push((src + 1, alt, rest));
                used.insert(alt);
            } else {
                local.last_mut().unwrap().2 += rest;
            }
        }
        if tail > 0.0 {
            let free: Vec<char> = alphabet
                .iter()
                .copied()
                .filter(|x| !used.contains(x))
                .collect();
            let each = tail / free.len() as f64;
            for &x in &free {
                local.push((src + 1, x, each));
            }
        }
        // Renormalize away accumulated rounding.
        let total: f64 = local.iter().map(|x| x.2).sum();
        for (dst, ch, p) in local {
            arcs.push(RawArc {
                src,
                dst,
                label: ch.to_string(),
                prob: p / total,
            });
        }
    }
    let raw = RawSfa {
        node_count: n + 1,
        starts: vec![0],
        finals: vec![n as NodeId],
        arcs,
    };
    Sfa::from_raw(raw, MassCheck::Stochastic).expect("generator produces valid SFAs")
}
