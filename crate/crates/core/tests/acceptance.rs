//! Acceptance suite. Each test checks one criterion and prints a single
//! `[PASS]`/`[FAIL]` line (visible with `--nocapture`).

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use staccato::approx::{per_block_top_k_mass, per_edge_top_k_mass};
use staccato::index::indexed_query_data;
use staccato::query::{rank_data, LineData};
use staccato::store::Corpus;
use staccato::synth::{self, examples, OcrNoiseConfig, RandomSfaConfig};
use staccato::tune::{evaluate, run_queries, TuneConfig, TuneVerdict};
use staccato::*;

type Check = std::result::Result<(), String>;

fn report(n: u32, name: &str, started: Instant, r: Check) {
    match &r {
        Ok(()) => println!("[PASS] {n:>2} {name} ({:.2?})", started.elapsed()),
        Err(e) => println!("[FAIL] {n:>2} {name}: {e}"),
    }
    if let Err(e) = r {
        panic!("criterion {n} failed: {e}");
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn emitted(sfa: &Sfa) -> BTreeMap<String, f64> {
    enumerate_all(sfa, 1 << 20).unwrap().into_iter().collect()
}

/// Independent matcher: the dialect translated to `regex` syntax.
fn oracle_regex(pattern: &str) -> regex::Regex {
    let translated = pattern.replace("\\x", "[ -~]").replace("\\d", "[0-9]");
    regex::Regex::new(&translated).unwrap()
}

fn small_cfg(rng: &mut ChaCha8Rng) -> RandomSfaConfig {
    RandomSfaConfig {
        nodes: rng.gen_range(2..=12),
        alphabet: rng.gen_range(2..=4),
        extra_edge_prob: rng.gen_range(0.0..0.35),
        max_labels: rng.gen_range(1..=3),
        multi_char: rng.gen_bool(0.4),
    }
}

#[test]
fn c01_ford_lattice() {
    let t = Instant::now();
    let r = (|| -> Check {
        let sfa = examples::ford_lattice();
        let top = top_k(&sfa, 1);
        ensure!(
            top.entries[0].string == "F0 rd",
            "top-1 is {:?}",
            top.entries[0].string
        );
        let p = top.entries[0].prob();
        ensure!(close(p, 0.21, 0.005), "top-1 probability {p}");
        let dfa = compile_pattern("Ford", false).map_err(|e| e.to_string())?;
        let q = eval_sfa(&dfa, &sfa);
        ensure!(close(q, 0.12, 0.005), "Pr[Ford] = {q}");
        ensure!(
            t.elapsed() < Duration::from_secs(1),
            "took {:?}",
            t.elapsed()
        );
        Ok(())
    })();
    report(1, "ford lattice MAP string and match probability", t, r);
}

#[test]
fn c02_two_string_lattice_regions() {
    let t = Instant::now();
    let r = (|| -> Check {
        let sfa = examples::two_string_lattice();
        let want: BTreeSet<String> = ["aef", "abcd"].iter().map(|s| s.to_string()).collect();
        let c = collapse(&sfa, &[1, 2, 3], 4).map_err(|e| e.to_string())?;
        let g = c.graph();
        let e = g
            .find_edge(c.node_of(1).unwrap(), c.node_of(3).unwrap())
            .ok_or("no edge (1,3)")?;
        let labels: Vec<&str> = c.chunk(e).strings.strings().collect();
        ensure!(labels == ["bc"], "edge (1,3) emits {labels:?}");
        let got: BTreeSet<String> = emitted(g).into_keys().collect();
        ensure!(got == want, "collapsed emits {got:?}");

        let region = find_min_sfa(&sfa, &[1, 2, 4]).map_err(|e| e.to_string())?;
        ensure!(
            region.contains(&5),
            "region {region:?} does not reach node 5"
        );
        let c = collapse(&sfa, &region, 4).map_err(|e| e.to_string())?;
        let got: BTreeSet<String> = emitted(c.graph()).into_keys().collect();
        ensure!(got == want, "collapsed region {region:?} emits {got:?}");
        Ok(())
    })();
    report(2, "two-string lattice collapse and region closure", t, r);
}

#[test]
fn c03_oracle_equivalence() {
    let t = Instant::now();
    let r = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut patterns_checked = 0;
        for case in 0..500 {
            let cfg = small_cfg(&mut rng);
            let sfa = synth::random_small_sfa(&mut rng, &cfg, 4000);
            let all = enumerate_all(&sfa, 4000).map_err(|e| e.to_string())?;
            let mass: f64 = all.iter().map(|x| x.1).sum();
            ensure!(
                close(mass, 1.0, 1e-9),
                "case {case}: enumerated mass {mass}"
            );
            ensure!(
                close(total_mass(&sfa), 1.0, 1e-9),
                "case {case}: total_mass {}",
                total_mass(&sfa)
            );
            let mut ranked = all.clone();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let k = rng.gen_range(1..=5);
            let top = top_k(&sfa, k);
            ensure!(
                top.len() == k.min(ranked.len()),
                "case {case}: {} entries for k={k}",
                top.len()
            );
            for (e, (s, p)) in top.entries.iter().zip(&ranked) {
                ensure!(
                    close(e.prob(), *p, 1e-9),
                    "case {case}: top-k prob {} vs {p}",
                    e.prob()
                );
                ensure!(
                    e.string == *s || close(all_prob(&all, &e.string), *p, 1e-9),
                    "case {case}: top-k string {:?} vs {s:?}",
                    e.string
                );
            }
            for _ in 0..10 {
                let pat = synth::random_pattern(&mut rng, cfg.alphabet);
                let dfa = compile_pattern(&pat, false).map_err(|e| format!("{pat}: {e}"))?;
                let re = oracle_regex(&pat);
                let want: f64 = all
                    .iter()
                    .filter(|(s, _)| re.is_match(s))
                    .map(|x| x.1)
                    .sum();
                let got = eval_sfa(&dfa, &sfa);
                ensure!(
                    close(got, want, 1e-9),
                    "case {case}: pattern {pat:?} gives {got}, brute force {want}"
                );
                patterns_checked += 1;
            }
        }
        ensure!(patterns_checked >= 5000, "only {patterns_checked} patterns");
        ensure!(
            t.elapsed() < Duration::from_secs(60),
            "took {:?}",
            t.elapsed()
        );
        Ok(())
    })();
    report(3, "oracle equivalence on 500 random SFAs", t, r);
}

fn all_prob(all: &[(String, f64)], s: &str) -> f64 {
    all.iter().find(|x| x.0 == s).map(|x| x.1).unwrap_or(-1.0)
}

#[test]
fn c04_greedy_extremes() {
    let t = Instant::now();
    let r = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for case in 0..100 {
            let cfg = small_cfg(&mut rng);
            let sfa = synth::random_small_sfa(&mut rng, &cfg, 4000);
            let k = rng.gen_range(1..=6);
            let c = greedy_approximate(&sfa, 1, k).map_err(|e| e.to_string())?;
            let got: BTreeSet<String> = emitted(c.graph()).into_keys().collect();
            let want: BTreeSet<String> = top_k(&sfa, k).strings().map(String::from).collect();
            ensure!(
                got == want,
                "case {case}: m=1 k={k} emits {got:?}, top-k {want:?}"
            );

            let c = greedy_approximate(&sfa, sfa.edge_count(), cfg.alphabet)
                .map_err(|e| e.to_string())?;
            let got: BTreeSet<String> = emitted(c.graph()).into_keys().collect();
            let want: BTreeSet<String> = emitted(&sfa).into_keys().collect();
            ensure!(got == want, "case {case}: m=|E| k=|Σ| loses strings");
        }
        Ok(())
    })();
    report(4, "greedy extremes reproduce top-k and the full SFA", t, r);
}

#[test]
fn c05_sufficient_lineage() {
    let t = Instant::now();
    let r = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for case in 0..200 {
            let cfg = small_cfg(&mut rng);
            let sfa = synth::random_small_sfa(&mut rng, &cfg, 4000);
            let m = rng.gen_range(1..=sfa.edge_count());
            let k = rng.gen_range(1..=5);
            let c = greedy_approximate(&sfa, m, k).map_err(|e| e.to_string())?;
            let orig = emitted(&sfa);
            let kept = emitted(c.graph());
            let mut sum = 0.0;
            for (s, p) in &kept {
                let o = orig
                    .get(s)
                    .ok_or(format!("case {case}: {s:?} not in original"))?;
                ensure!(
                    close(*o, *p, 1e-9),
                    "case {case}: {s:?} has {p}, original {o}"
                );
                sum += p;
            }
            ensure!(
                close(c.total_mass(), sum, 1e-9),
                "case {case}: total_mass {} vs kept sum {sum}",
                c.total_mass()
            );
        }
        Ok(())
    })();
    report(5, "approximations keep exact string probabilities", t, r);
}

#[test]
fn c06_assignment_optimality() {
    let t = Instant::now();
    let r = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        for case in 0..100 {
            let cfg = RandomSfaConfig {
                nodes: rng.gen_range(3..=6),
                alphabet: 3,
                extra_edge_prob: 0.25,
                max_labels: 3,
                multi_char: true,
            };
            let sfa = synth::random_small_sfa(&mut rng, &cfg, 300);
            let part = ChunkPartition::per_edge(&sfa);
            let (_, best) =
                best_assignment_bruteforce(&sfa, &part, 2, 1 << 24).map_err(|e| e.to_string())?;
            let per_edge = per_edge_top_k_mass(&sfa, 2);
            ensure!(
                close(best, per_edge, 1e-12),
                "case {case}: exhaustive {best} vs per-edge top-k {per_edge}"
            );
        }

        // Block B = {1→3, 0→2, 2→3} has two entries, so its segments "c"
        // (prob 1) and "de" (prob 0.4) lie on different paths. Keeping the
        // locally best "c" retains a·c = 0.3; keeping "de" retains 0.4.
        let sfa = Sfa::from_arcs(
            4,
            0,
            3,
            [
                (0, 1, "a", 0.3),
                (0, 1, "b", 0.3),
                (1, 3, "c", 1.0),
                (0, 2, "d", 0.4),
                (2, 3, "e", 1.0),
            ],
            sfa::MassCheck::Stochastic,
        )
        .map_err(|e| e.to_string())?;
        let e = |s, d| sfa.find_edge(s, d).unwrap();
        let part = ChunkPartition {
            blocks: vec![vec![e(0, 1)], vec![e(1, 3), e(0, 2), e(2, 3)]],
        };
        let (_, best) =
            best_assignment_bruteforce(&sfa, &part, 1, 1 << 20).map_err(|e| e.to_string())?;
        let local = per_block_top_k_mass(&sfa, &part, 1, 1 << 20).map_err(|e| e.to_string())?;
        ensure!(close(best, 0.4, 1e-12), "exhaustive mass {best}");
        ensure!(close(local, 0.3, 1e-12), "per-block mass {local}");
        ensure!(best - local > 1e-3, "gap {}", best - local);
        Ok(())
    })();
    report(6, "per-edge top-k is optimal; non-SFA blocks are not", t, r);
}

#[test]
fn c07_kl_identity() {
    let t = Instant::now();
    let r = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut done = 0;
        while done < 50 {
            let cfg = small_cfg(&mut rng);
            let sfa = synth::random_small_sfa(&mut rng, &cfg, 4000);
            let m = rng.gen_range(1..=sfa.edge_count());
            let k = rng.gen_range(1..=4);
            let c = greedy_approximate(&sfa, m, k).map_err(|e| e.to_string())?;
            let orig = emitted(&sfa);
            let kept = emitted(c.graph());
            let z: f64 = kept.values().sum();
            let direct: f64 = kept
                .keys()
                .map(|s| {
                    let q = orig[s] / z;
                    q * (q / orig[s]).ln()
                })
                .sum();
            let formula = kl_of_retention(c.total_mass()).map_err(|e| e.to_string())?;
            ensure!(
                close(formula, direct, 1e-12),
                "-ln Z = {formula}, direct KL = {direct}"
            );
            done += 1;
        }
        Ok(())
    })();
    report(7, "KL of the conditional equals -ln(retained mass)", t, r);
}

/// Every `(edge, rank, offset)` start location of every term in every
/// string the chunk graph emits, plus whether any occurrence spans ≥ 2 edges.
fn brute_postings(line: usize, c: &ChunkedSfa, terms: &[String]) -> (BTreeSet<Posting>, bool) {
    let g = c.graph();
    let mut out = BTreeSet::new();
    let mut straddles = false;
    let mut stack: Vec<(NodeId, Vec<(char, usize, usize, usize)>)> = vec![(g.start(), Vec::new())];
    while let Some((v, text)) = stack.pop() {
        if v == g.final_node() {
            for s in 0..text.len() {
                for t in terms {
                    let tc: Vec<char> = t.chars().collect();
                    if s + tc.len() <= text.len()
                        && text[s..s + tc.len()]
                            .iter()
                            .zip(&tc)
                            .all(|(a, b)| a.0.to_ascii_lowercase() == *b)
                    {
                        let (_, edge, path, offset) = text[s];
                        out.insert(Posting {
                            line,
                            edge,
                            path,
                            offset,
                        });
                        if text[s + tc.len() - 1].1 != edge {
                            straddles = true;
                        }
                    }
                }
            }
            continue;
        }
        for &e in g.out_edges(v) {
            for (i, entry) in c.chunk(e).strings.entries.iter().enumerate() {
                let mut next = text.clone();
                next.extend(
                    entry
                        .string
                        .chars()
                        .enumerate()
                        .map(|(o, ch)| (ch, e, i, o)),
                );
                stack.push((g.edge(e).dst, next));
            }
        }
    }
    (out, straddles)
}

#[test]
fn c08_index_postings_exact() {
    let t = Instant::now();
    let r = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let mut corpora = 0;
        let mut straddling_cases = 0;
        while corpora < 60 {
            let lines: Vec<ChunkedSfa> = (0..rng.gen_range(1..=10))
                .map(|_| loop {
                    let cfg = RandomSfaConfig {
                        nodes: rng.gen_range(3..=8),
                        alphabet: 3,
                        extra_edge_prob: 0.2,
                        max_labels: 2,
                        multi_char: rng.gen_bool(0.5),
                    };
                    let sfa = synth::random_small_sfa(&mut rng, &cfg, 400);
                    let m = rng.gen_range(1..=sfa.edge_count());
                    let k = rng.gen_range(1..=3);
                    let c = greedy_approximate(&sfa, m, k).unwrap();
                    if c.graph().path_count() <= 30 {
                        break c;
                    }
                })
                .collect();
            let terms: Vec<String> = (0..6)
                .map(|_| {
                    (0..rng.gen_range(2..=4))
                        .map(|_| (b'a' + rng.gen_range(0..3u8)) as char)
                        .collect()
                })
                .collect();
            let trie = build_trie(&terms).map_err(|e| e.to_string())?;
            let index = build_index(&lines, &trie);
            let mut straddles = false;
            for term in trie.terms() {
                let mut want = BTreeSet::new();
                for (i, c) in lines.iter().enumerate() {
                    let (p, s) = brute_postings(i, c, std::slice::from_ref(term));
                    want.extend(p);
                    straddles |= s;
                }
                let got: BTreeSet<Posting> = index
                    .postings(term)
                    .unwrap_or(&[])
                    .iter()
                    .copied()
                    .collect();
                ensure!(
                    got == want,
                    "term {term:?}: index {got:?} vs brute force {want:?}"
                );
            }
            straddling_cases += straddles as usize;
            corpora += 1;
        }
        ensure!(
            straddling_cases >= 10,
            "only {straddling_cases} straddling cases"
        );
        Ok(())
    })();
    report(8, "index postings equal a brute-force term scan", t, r);
}

fn by_line(matches: &[LineMatch]) -> BTreeMap<usize, f64> {
    matches.iter().map(|m| (m.line, m.prob)).collect()
}

#[test]
fn c09_indexed_matches_scan() {
    let t = Instant::now();
    let r = (|| -> Check {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let alpha = ['a', 'b', 'c', 'd'];
        let mut dict = Vec::new();
        for len in 3..=5u32 {
            for mut x in 0..4usize.pow(len) {
                let mut w = String::new();
                for _ in 0..len {
                    w.push(alpha[x % 4]);
                    x /= 4;
                }
                dict.push(w);
            }
        }
        let trie = build_trie(&dict).map_err(|e| e.to_string())?;
        let (mut bounded, mut starred, mut via_index) = (0, 0, 0);
        for corpus in 0..20 {
            let lines: Vec<ChunkedSfa> = (0..8)
                .map(|_| {
                    let cfg = RandomSfaConfig {
                        nodes: rng.gen_range(4..=12),
                        alphabet: 4,
                        extra_edge_prob: 0.2,
                        max_labels: 3,
                        multi_char: rng.gen_bool(0.5),
                    };
                    let sfa = synth::random_sfa(&mut rng, &cfg);
                    let m = rng.gen_range(1..=sfa.edge_count());
                    greedy_approximate(&sfa, m, rng.gen_range(1..=6)).unwrap()
                })
                .collect();
            let index = build_index(&lines, &trie);
            let data = LineData::Chunked(lines.clone());
            for _ in 0..10 {
                let anchor: String = (0..3).map(|_| alpha[rng.gen_range(0..4)]).collect();
                let pat = format!("{anchor}{}", synth::random_pattern(&mut rng, 4));
                let dfa = compile_pattern(&pat, false).map_err(|e| e.to_string())?;
                let scan = rank_data(&data, &dfa, 1000);
                let out = indexed_query_data(&dfa, &index, &lines, 1000);
                via_index += out.anchor.is_some() as usize;
                let (got, want) = (by_line(&out.matches), by_line(&scan));
                if dfa.max_match_len().is_some() {
                    bounded += 1;
                    ensure!(
                        got.len() == want.len()
                            && got
                                .iter()
                                .zip(&want)
                                .all(|(a, b)| a.0 == b.0 && close(*a.1, *b.1, 1e-9)),
                        "corpus {corpus} pattern {pat:?}: indexed {got:?} vs scan {want:?}"
                    );
                    let order_ok = out
                        .matches
                        .iter()
                        .zip(&scan)
                        .all(|(a, b)| a.line == b.line || close(a.prob, b.prob, 1e-9));
                    ensure!(order_ok, "corpus {corpus} pattern {pat:?}: ranking differs");
                } else {
                    starred += 1;
                    for (line, p) in &got {
                        let w = want.get(line).ok_or(format!(
                            "corpus {corpus} pattern {pat:?}: line {line} not in scan"
                        ))?;
                        ensure!(*p <= w + 1e-9, "pattern {pat:?}: line {line} {p} > {w}");
                    }
                }
            }
        }
        ensure!(
            bounded >= 50 && starred >= 10,
            "{bounded} bounded, {starred} starred"
        );
        ensure!(via_index >= 150, "only {via_index} queries used the index");

        // Planted words on an OCR-noise corpus.
        let c = synth::ocr_corpus(&OcrNoiseConfig {
            lines: 40,
            ..OcrNoiseConfig::default()
        });
        let lines: Vec<ChunkedSfa> = c
            .lines
            .iter()
            .map(|l| greedy_approximate(&l.sfa, 8, 6).unwrap())
            .collect();
        let trie = build_trie([
            "ford",
            "president",
            "congress",
            "insurance",
            "public",
            "u.s.c.",
        ])
        .map_err(|e| e.to_string())?;
        let index = build_index(&lines, &trie);
        let data = LineData::Chunked(lines.clone());
        for (_, pat) in &c.queries {
            let dfa = compile_pattern(pat, false).map_err(|e| e.to_string())?;
            let out = indexed_query_data(&dfa, &index, &lines, 1000);
            ensure!(out.anchor.is_some(), "{pat:?} did not use the index");
            let (got, want) = (
                by_line(&out.matches),
                by_line(&rank_data(&data, &dfa, 1000)),
            );
            ensure!(
                got.len() == want.len()
                    && got
                        .iter()
                        .zip(&want)
                        .all(|(a, b)| a.0 == b.0 && close(*a.1, *b.1, 1e-9)),
                "{pat:?}: indexed {got:?} vs scan {want:?}"
            );
        }
        Ok(())
    })();
    report(9, "indexed queries agree with a full scan", t, r);
}

fn planted_queries(c: &synth::SyntheticCorpus) -> Vec<(String, QueryDfa)> {
    c.queries
        .iter()
        .map(|(id, p)| (id.clone(), compile_pattern(p, false).unwrap()))
        .collect()
}

/// Fastest of three runs of every query.
fn query_time(data: &LineData, queries: &[(String, QueryDfa)]) -> Duration {
    (0..3)
        .map(|_| {
            let t = Instant::now();
            run_queries(data, queries, 100);
            t.elapsed()
        })
        .min()
        .unwrap()
}

#[test]
fn c10_recall_and_runtime_tradeoff() {
    let t = Instant::now();
    let r = (|| -> Check {
        let c = synth::ocr_corpus(&OcrNoiseConfig::default());
        ensure!(
            c.lines.len() >= 200 && c.queries.len() >= 5,
            "corpus too small"
        );
        let queries = planted_queries(&c);
        let full: Vec<Sfa> = c.lines.iter().map(|l| l.sfa.clone()).collect();
        let chunked = |m, k| -> LineData {
            LineData::Chunked(
                full.iter()
                    .map(|s| greedy_approximate(s, m, k).unwrap())
                    .collect(),
            )
        };
        let recall =
            |data: &LineData| evaluate(&run_queries(data, &queries, 100), &c.truth).mean_recall;

        let r11 = recall(&chunked(1, 1));
        let staccato = chunked(10, 25);
        let r1025 = recall(&staccato);
        let full_data = LineData::Full(full.clone());
        let rfull = recall(&full_data);
        ensure!(
            r11 < r1025 && r1025 < rfull && rfull == 1.0,
            "recall (1,1) {r11:.4}, (10,25) {r1025:.4}, fullsfa {rfull:.4}"
        );

        let map = LineData::Ranked(full.iter().map(|s| top_k(s, 1)).collect());
        let (tm, ts, tf) = (
            query_time(&map, &queries),
            query_time(&staccato, &queries),
            query_time(&full_data, &queries),
        );
        ensure!(
            tm < ts && ts < tf,
            "query time map {tm:?}, staccato {ts:?}, fullsfa {tf:?}"
        );
        println!(
            "       recall (1,1) {r11:.4} < (10,25) {r1025:.4} < fullsfa {rfull:.4}; \
             time map {tm:.2?} < staccato {ts:.2?} < fullsfa {tf:.2?}"
        );
        Ok(())
    })();
    report(
        10,
        "recall and runtime ordering on an OCR-noise corpus",
        t,
        r,
    );
}

#[test]
fn c11_tuner_closed_loop() {
    let t = Instant::now();
    let r = (|| -> Check {
        let samples: Vec<(usize, usize, u64)> = [(1, 1), (1, 4), (4, 1), (4, 4), (9, 30)]
            .iter()
            .map(|&(m, k)| (m, k, (20 * m * k + 58 * k + 777) as u64))
            .collect();
        let model = fit_size_model(&samples).map_err(|e| e.to_string())?;
        ensure!(
            close(model.a, 20.0, 1e-6) && close(model.b, 58.0, 1e-6),
            "fitted {model:?}"
        );

        let c = synth::ocr_corpus(&OcrNoiseConfig::default());
        let queries = planted_queries(&c);
        let sfas: Vec<Sfa> = c.lines.iter().map(|l| l.sfa.clone()).collect();
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut corpus = Corpus::ingest_sfas(dir.path(), &sfas).map_err(|e| e.to_string())?;
        let cfg = TuneConfig {
            recall_min: 0.9,
            size_budget: 0.1,
            num_ans: 100,
        };
        let out = tune(&mut corpus, &queries, &c.truth, cfg).map_err(|e| e.to_string())?;
        let TuneVerdict::Feasible { m, k } = out.verdict else {
            return Err(format!("infeasible:\n{}", out.to_tsv()));
        };
        let limit = (out.max_edges as f64).log2().ceil() as usize + 2;
        ensure!(
            out.probes.len() <= limit,
            "{} probes > {limit}:\n{}",
            out.probes.len(),
            out.to_tsv()
        );

        let fresh_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut fresh = Corpus::ingest_sfas(fresh_dir.path(), &sfas).map_err(|e| e.to_string())?;
        fresh
            .materialize_staccato(m, k)
            .map_err(|e| e.to_string())?;
        let size = fresh.mode_bytes(Mode::Staccato { m, k }).unwrap();
        let budget = (0.1 * fresh.mode_bytes(Mode::FullSfa).unwrap() as f64).floor() as u64;
        let data = fresh
            .load_mode(Mode::Staccato { m, k })
            .map_err(|e| e.to_string())?;
        let recall = evaluate(&run_queries(&data, &queries, 100), &c.truth).mean_recall;
        ensure!(recall >= 0.9, "re-materialized recall {recall}");
        ensure!(size <= budget, "size {size} > budget {budget}");
        println!(
            "       tuned m={m} k={k}: recall {recall:.4}, {size} of {budget} bytes, {} probes",
            out.probes.len()
        );
        Ok(())
    })();
    report(11, "tuner meets recall and size constraints", t, r);
}
