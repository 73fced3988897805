//! Size-model fitting, the `(m, k)` tuner and precision/recall evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::query::{rank_data, LineData, LineMatch, Mode, QueryDfa};
use crate::store::Corpus;

/// `size(m, k) ≈ a·m·k + b·k + c` bytes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizeModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Coefficient of determination on the fitting samples.
    pub r2: f64,
    /// All sizes were equal, so the fit is constant.
    pub degenerate: bool,
}

impl SizeModel {
    pub fn predict(&self, m: usize, k: usize) -> f64 {
        self.a * (m * k) as f64 + self.b * k as f64 + self.c
    }

    /// Largest `k` whose predicted size at `m` stays within `budget`
    /// (0 when even `k = 1` does not fit).
    pub fn k_for(&self, m: usize, budget: f64) -> usize {
        let per_k = self.a * m as f64 + self.b;
        let room = budget - self.c;
        if per_k <= 0.0 {
            return if room >= 0.0 { usize::MAX } else { 0 };
        }
        let k = (room / per_k).floor();
        if k < 1.0 {
            0
        } else {
            k.min(usize::MAX as f64) as usize
        }
    }
}

/// Least-squares fit of `bytes ≈ a·m·k + b·k + c` to `(m, k, bytes)`.
pub fn fit_size_model(samples: &[(usize, usize, u64)]) -> Result<SizeModel> {
    if samples.len() < 3 {
        return Err(Error::Degenerate(format!(
            "{} samples; need at least 3",
            samples.len()
        )));
    }
    let n = samples.len();
    let x = DMatrix::from_fn(n, 3, |i, j| {
        let (m, k, _) = samples[i];
        match j {
            0 => (m * k) as f64,
            1 => k as f64,
            _ => 1.0,
        }
    });
    let y = DVector::from_iterator(n, samples.iter().map(|s| s.2 as f64));
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-12 * n as f64;
    if svd.rank(tol) < 3 {
        return Err(Error::Degenerate(
            "samples do not determine a, b and c (collinear design)".into(),
        ));
    }
    let beta = svd
        .solve(&y, tol)
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    let fitted = &x * &beta;
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y
        .iter()
        .zip(fitted.iter())
        .map(|(v, f)| (v - f).powi(2))
        .sum();
    let degenerate = ss_tot == 0.0;
    let (a, b, c) = if degenerate {
        (0.0, 0.0, mean)
    } else {
        (beta[0], beta[1], beta[2])
    };
    Ok(SizeModel {
        a,
        b,
        c,
        r2: if degenerate {
            1.0
        } else {
            1.0 - ss_res / ss_tot
        },
        degenerate,
    })
}

/// Scores of one query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryEval {
    pub id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Returned line ids, ascending.
    pub returned: Vec<usize>,
    pub elapsed: Duration,
}

/// Per-query and aggregate quality of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub queries: Vec<QueryEval>,
    pub mean_recall: f64,
    pub mean_precision: f64,
    pub total_elapsed: Duration,
    /// Stored bytes of the evaluated representation, if known.
    pub size_bytes: Option<u64>,
}

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("query\tprecision\trecall\tf1\treturned\tseconds\n");
        for q in &self.queries {
            out.push_str(&format!(
                "{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{:.6}\n",
                q.id,
                q.precision,
                q.recall,
                q.f1,
                q.returned.len(),
                q.elapsed.as_secs_f64()
            ));
        }
        out.push_str(&format!(
            "mean\t{:.4}\t{:.4}\t\t\t{:.6}\n",
            self.mean_precision,
            self.mean_recall,
            self.total_elapsed.as_secs_f64()
        ));
        out
    }
}

/// Answers of one query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryRun {
    pub id: String,
    pub matches: Vec<LineMatch>,
    pub elapsed: Duration,
}

/// Runs every query against in-memory lines.
pub fn run_queries(
    data: &LineData,
    queries: &[(String, QueryDfa)],
    num_ans: usize,
) -> Vec<QueryRun> {
    queries
        .iter()
        .map(|(id, dfa)| {
            let t = Instant::now();
            let matches = rank_data(data, dfa, num_ans);
            QueryRun {
                id: id.clone(),
                matches,
                elapsed: t.elapsed(),
            }
        })
        .collect()
}

/// Precision, recall and F1 of each run against `truth` rows of
/// `(query id, line id)`. An empty truth set has recall 1; an empty answer
/// has precision 1 exactly when the truth set is empty too.
pub fn evaluate(runs: &[QueryRun], truth: &[(String, usize)]) -> EvalReport {
    let mut by_query: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for (q, l) in truth {
        by_query.entry(q.as_str()).or_default().insert(*l);
    }
    let empty = BTreeSet::new();
    let queries: Vec<QueryEval> = runs
        .iter()
        .map(|r| {
            let t = by_query.get(r.id.as_str()).unwrap_or(&empty);
            let returned: BTreeSet<usize> = r.matches.iter().map(|m| m.line).collect();
            let hit = returned.intersection(t).count() as f64;
            let recall = if t.is_empty() {
                1.0
            } else {
                hit / t.len() as f64
            };
            let precision = match (returned.is_empty(), t.is_empty()) {
                (true, true) => 1.0,
                (true, false) => 0.0,
                _ => hit / returned.len() as f64,
            };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            QueryEval {
                id: r.id.clone(),
                precision,
                recall,
                f1,
                returned: returned.into_iter().collect(),
                elapsed: r.elapsed,
            }
        })
        .collect();
    let n = queries.len().max(1) as f64;
    EvalReport {
        mean_recall: if queries.is_empty() {
            1.0
        } else {
            queries.iter().map(|q| q.recall).sum::<f64>() / n
        },
        mean_precision: if queries.is_empty() {
            1.0
        } else {
            queries.iter().map(|q| q.precision).sum::<f64>() / n
        },
        total_elapsed: runs.iter().map(|r| r.elapsed).sum(),
        queries,
        size_bytes: None,
    }
}

/// Tuner constraints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuneConfig {
    /// Minimum mean recall.
    pub recall_min: f64,
    /// Size budget as a fraction of the full-SFA bytes.
    pub size_budget: f64,
    pub num_ans: usize,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            recall_min: 0.9,
            size_budget: 0.1,
            num_ans: 100,
        }
    }
}

/// One evaluated `(m, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub m: usize,
    /// 0 when no `k` fits the budget at this `m`.
    pub k: usize,
    pub size: u64,
    pub recall: f64,
    pub qualifies: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TuneVerdict {
    Feasible { m: usize, k: usize },
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneOutcome {
    pub verdict: TuneVerdict,
    pub model: SizeModel,
    pub budget_bytes: u64,
    /// Largest transition count of any line; the upper end of the `m` range.
    pub max_edges: usize,
    pub probes: Vec<Probe>,
}

impl TuneOutcome {
    pub fn params(&self) -> Option<(usize, usize)> {
        match self.verdict {
            TuneVerdict::Feasible { m, k } => Some((m, k)),
            TuneVerdict::Infeasible => None,
        }
    }

    /// Probe trace as TSV.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("m\tk\tsize\trecall\tqualifies\n");
        for p in &self.probes {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.4}\t{}\n",
                p.m, p.k, p.size, p.recall, p.qualifies
            ));
        }
        out
    }
}

/// Fitting points of the size model.
pub const FIT_POINTS: [(usize, usize); 4] = [(1, 1), (1, 4), (4, 1), (4, 4)];

/// Finds a small `m`, with the largest `k` the budget allows, whose
/// staccato representation reaches `recall_min`.
///
/// The size model is fitted on [`FIT_POINTS`]; `k(m)` is read off the model
/// at the budget boundary. `m = 1` is tried first, then the largest `m` with
/// `k(m) ≥ 1`, then a binary search in between. When a probe's measured
/// size exceeds the budget its `k` is lowered until it fits. Every probe is
/// materialized in `corpus`.
pub fn tune(
    corpus: &mut Corpus,
    queries: &[(String, QueryDfa)],
    truth: &[(String, usize)],
    cfg: TuneConfig,
) -> Result<TuneOutcome> {
    for (id, _) in queries {
        if !truth.iter().any(|(q, _)| q == id) {
            return Err(Error::MissingTruth(id.clone()));
        }
    }
    let full = corpus.load_full()?;
    let max_edges = full
        .iter()
        .map(|s| s.edge_count())
        .max()
        .unwrap_or(1)
        .max(1);
    let full_bytes = corpus.mode_bytes(Mode::FullSfa).unwrap_or(0);
    let budget = (cfg.size_budget * full_bytes as f64).floor();

    let mut samples = Vec::new();
    for &(m, k) in &FIT_POINTS {
        corpus.materialize_staccato(m, k)?;
        let bytes = corpus.mode_bytes(Mode::Staccato { m, k }).unwrap_or(0);
        samples.push((m, k, bytes));
    }
    let model = fit_size_model(&samples)?;
    log::info!(
        "size model {:.3}·mk + {:.3}·k + {:.1} (R² {:.4}); budget {} bytes",
        model.a,
        model.b,
        model.c,
        model.r2,
        budget
    );

    let mut probes = Vec::new();
    let mut probe = |m: usize| -> Result<Probe> {
        let p = run_probe(corpus, queries, truth, &model, m, budget as u64, cfg)?;
        log::info!(
            "probe m={} k={} size={} recall={:.4}",
            p.m,
            p.k,
            p.size,
            p.recall
        );
        probes.push(p.clone());
        Ok(p)
    };

    let first = probe(1)?;
    let verdict = if first.qualifies {
        TuneVerdict::Feasible { m: 1, k: first.k }
    } else {
        let mut hi = max_edges;
        while hi > 1 && model.k_for(hi, budget) == 0 {
            hi -= 1;
        }
        if hi == 1 {
            TuneVerdict::Infeasible
        } else {
            let top = probe(hi)?;
            if !top.qualifies {
                TuneVerdict::Infeasible
            } else {
                let mut lo = 1;
                let mut best = (hi, top.k);
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    let p = probe(mid)?;
                    if p.qualifies {
                        hi = mid;
                        best = (mid, p.k);
                    } else {
                        lo = mid;
                    }
                }
                TuneVerdict::Feasible {
                    m: best.0,
                    k: best.1,
                }
            }
        }
    };
    Ok(TuneOutcome {
        verdict,
        model,
        budget_bytes: budget as u64,
        max_edges,
        probes,
    })
}

fn run_probe(
    corpus: &mut Corpus,
    queries: &[(String, QueryDfa)],
    truth: &[(String, usize)],
    model: &SizeModel,
    m: usize,
    budget: u64,
    cfg: TuneConfig,
) -> Result<Probe> {
    let no_fit = Probe {
        m,
        k: 0,
        size: 0,
        recall: 0.0,
        qualifies: false,
    };
    let mut k = model.k_for(m, budget as f64).min(1 << 20);
    if k == 0 {
        return Ok(no_fit);
    }
    let size = loop {
        corpus.materialize_staccato(m, k)?;
        let size = corpus.mode_bytes(Mode::Staccato { m, k }).unwrap_or(0);
        if size <= budget {
            break size;
        }
        let scaled = (k as f64 * budget as f64 / size as f64).floor() as usize;
        k = scaled.min(k - 1);
        if k == 0 {
            return Ok(no_fit);
        }
    };
    let data = corpus.load_mode(Mode::Staccato { m, k })?;
    let report = evaluate(&run_queries(&data, queries, cfg.num_ans), truth);
    Ok(Probe {
        m,
        k,
        size,
        recall: report.mean_recall,
        qualifies: report.mean_recall >= cfg.recall_min,
    })
}
