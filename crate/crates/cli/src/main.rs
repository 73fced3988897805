use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use staccato::index::indexed_query;
use staccato::query::{compile_pattern_with, format_pretty, format_tsv, PatternOptions};
use staccato::store::{parse_queries, parse_truth, queries_to_text, Corpus};
use staccato::synth::{ocr_corpus, OcrNoiseConfig};
use staccato::tune::{evaluate, run_queries, TuneConfig, TuneVerdict};
use staccato::{build_index, build_trie, rank_lines, tune, LineMatch, Mode, QueryDfa};

#[derive(Parser, Debug)]
#[command(
    name = "staccato",
    version,
    about = "Store and query probabilistic OCR output"
)]
struct Cli {
    /// Corpus directory.
    #[arg(short = 'C', long, global = true, default_value = ".")]
    corpus: PathBuf,

    /// Worker threads for per-line work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Tsv)]
    format: Format,

    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Tsv,
    Pretty,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create a corpus from `sfa v1` files, one OCR line per file.
    Ingest {
        dir: PathBuf,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Materialize the chunked approximation with at most M chunks and K
    /// strings per chunk.
    Approximate {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        m: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
    },
    /// Materialize the K most probable strings of every line (K = 1 is MAP).
    Kmap {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
    },
    /// Build the inverted index of dictionary terms over a staccato mode.
    Index {
        /// Terms, one per line; blank lines and `#` comments are skipped.
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        m: Option<u64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: Option<u64>,
    },
    /// Rank lines by the probability that they contain a match.
    Query {
        #[arg(long)]
        pattern: String,
        /// map, fullsfa, kmap[:K] or staccato[:M:K].
        #[arg(long, default_value = "fullsfa")]
        mode: String,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        num_ans: u64,
        /// Answer through the inverted index (staccato modes only).
        #[arg(long)]
        indexed: bool,
        /// Case-insensitive matching.
        #[arg(long)]
        ci: bool,
        /// Match whole lines instead of substrings.
        #[arg(long)]
        whole: bool,
    },
    /// Precision and recall of a query set against ground truth.
    Eval {
        /// `# queries v1` file (default: <corpus>/queries.tsv).
        #[arg(long)]
        queries: Option<PathBuf>,
        /// `# truth v1` file (default: the corpus' stored truth).
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value = "fullsfa")]
        mode: String,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        num_ans: u64,
    },
    /// Search for (m, k) meeting a recall floor within a size budget.
    Tune {
        /// Minimum mean recall in [0, 1].
        #[arg(long)]
        recall: f64,
        /// Size budget in percent of the full-SFA bytes.
        #[arg(long)]
        size_pct: f64,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        num_ans: u64,
    },
    /// Wall-clock, recall and size of every materialized mode.
    Bench {
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        num_ans: u64,
    },
    /// Write a seeded synthetic OCR-noise corpus with planted queries and
    /// ground truth into the corpus directory.
    Gen {
        #[arg(long, default_value_t = 200)]
        lines: usize,
        #[arg(long, default_value_t = 0.15)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Failure kinds mapped to exit codes.
enum Failure {
    Data(anyhow::Error),
    Infeasible,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Infeasible) => ExitCode::from(3),
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let dir = cli.corpus.as_path();
    match cli.cmd {
        Command::Ingest { dir, files } => {
            let c = Corpus::ingest(&dir, &files)?;
            println!("ingested {} lines into {}", c.line_count(), dir.display());
        }
        Command::Approximate { m, k } => {
            let mut c = Corpus::open(dir)?;
            c.materialize(Mode::Staccato {
                m: m as usize,
                k: k as usize,
            })?;
            report_mode(
                &c,
                Mode::Staccato {
                    m: m as usize,
                    k: k as usize,
                },
            );
        }
        Command::Kmap { k } => {
            let mut c = Corpus::open(dir)?;
            c.materialize(Mode::Kmap(k as usize))?;
            report_mode(&c, Mode::Kmap(k as usize));
        }
        Command::Index { dict, m, k } => {
            let mut c = Corpus::open(dir)?;
            let (m, k) = match (m, k) {
                (Some(m), Some(k)) => (m as usize, k as usize),
                (None, None) => match resolve_mode(&c, "staccato")? {
                    Mode::Staccato { m, k } => (m, k),
                    _ => unreachable!(),
                },
                _ => return Err(anyhow!("give both --m and --k or neither").into()),
            };
            let text =
                fs::read_to_string(&dict).with_context(|| format!("reading {}", dict.display()))?;
            let terms: Vec<&str> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .collect();
            let trie = build_trie(&terms).with_context(|| format!("in {}", dict.display()))?;
            let lines = c.load_chunked(m, k)?;
            let index = build_index(&lines, &trie);
            c.write_index(m, k, &index)?;
            println!(
                "indexed {} terms, {} postings over staccato(m={m},k={k})",
                trie.terms().len(),
                index.posting_count()
            );
        }
        Command::Query {
            pattern,
            mode,
            num_ans,
            indexed,
            ci,
            whole,
        } => {
            let c = Corpus::open(dir)?;
            let mode = resolve_mode(&c, &mode)?;
            let dfa = compile_pattern_with(
                &pattern,
                PatternOptions {
                    case_fold: ci,
                    whole,
                },
            )?;
            let matches = if indexed {
                let Mode::Staccato { m, k } = mode else {
                    return Err(anyhow!("--indexed needs a staccato mode, got {mode}").into());
                };
                let index = c.load_index(m, k)?;
                let out = indexed_query(&dfa, &index, &c, m, k, num_ans as usize)?;
                log::info!(
                    "anchor {:?}, {} candidate lines",
                    out.anchor,
                    out.candidates
                );
                out.matches
            } else {
                rank_lines(&c, &dfa, mode, num_ans as usize)?
            };
            print_matches(&matches, cli.format);
        }
        Command::Eval {
            queries,
            truth,
            mode,
            num_ans,
        } => {
            let c = Corpus::open(dir)?;
            let mode = resolve_mode(&c, &mode)?;
            let qs = load_queries(&c, queries.as_deref())?;
            let truth = load_truth(&c, truth.as_deref())?;
            let data = c.load_mode(mode)?;
            let mut report = evaluate(&run_queries(&data, &qs, num_ans as usize), &truth);
            report.size_bytes = c.mode_bytes(mode);
            match cli.format {
                Format::Tsv => print!("{}", report.to_tsv()),
                Format::Pretty => {
                    println!("{mode}");
                    for q in &report.queries {
                        println!(
                            "  {:<10} P {:.4}  R {:.4}  F1 {:.4}  {:>4} lines  {:.2?}",
                            q.id,
                            q.precision,
                            q.recall,
                            q.f1,
                            q.returned.len(),
                            q.elapsed
                        );
                    }
                    println!(
                        "  mean       P {:.4}  R {:.4}  {:.2?}  {} bytes",
                        report.mean_precision,
                        report.mean_recall,
                        report.total_elapsed,
                        report.size_bytes.unwrap_or(0)
                    );
                }
            }
        }
        Command::Tune {
            recall,
            size_pct,
            queries,
            truth,
            num_ans,
        } => {
            if !(0.0..=1.0).contains(&recall) {
                return Err(anyhow!("--recall must be in [0, 1]").into());
            }
            if !(size_pct > 0.0) {
                return Err(anyhow!("--size-pct must be positive").into());
            }
            let mut c = Corpus::open(dir)?;
            let qs = load_queries(&c, queries.as_deref())?;
            let truth = load_truth(&c, truth.as_deref())?;
            let out = tune(
                &mut c,
                &qs,
                &truth,
                TuneConfig {
                    recall_min: recall,
                    size_budget: size_pct / 100.0,
                    num_ans: num_ans as usize,
                },
            )?;
            print!("{}", out.to_tsv());
            eprintln!(
                "size model: {:.3}*m*k + {:.3}*k + {:.1} bytes (R^2 {:.4}); budget {} bytes",
                out.model.a, out.model.b, out.model.c, out.model.r2, out.budget_bytes
            );
            match out.verdict {
                TuneVerdict::Feasible { m, k } => println!("# m={m} k={k}"),
                TuneVerdict::Infeasible => {
                    println!("# infeasible");
                    eprintln!("no m qualifies; relax the recall floor or the size budget");
                    return Err(Failure::Infeasible);
                }
            }
        }
        Command::Bench {
            queries,
            truth,
            num_ans,
        } => {
            let c = Corpus::open(dir)?;
            let default_queries = dir.join("queries.tsv");
            let qs = match queries.as_deref() {
                Some(p) => load_queries(&c, Some(p))?,
                None if default_queries.exists() => load_queries(&c, None)?,
                None => Vec::new(),
            };
            let truth = load_truth(&c, truth.as_deref()).unwrap_or_default();
            let sizes = c.measure_size()?;
            println!("mode\tbytes\tpredicted\tquery_seconds\tmean_recall");
            for e in &sizes.entries {
                let data = c.load_mode(e.mode)?;
                let t = Instant::now();
                let runs = run_queries(&data, &qs, num_ans as usize);
                let secs = t.elapsed().as_secs_f64();
                let recall = if qs.is_empty() || truth.is_empty() {
                    "-".to_string()
                } else {
                    format!("{:.4}", evaluate(&runs, &truth).mean_recall)
                };
                println!(
                    "{}\t{}\t{}\t{secs:.6}\t{recall}",
                    e.mode, e.measured, e.predicted
                );
            }
        }
        Command::Gen { lines, noise, seed } => {
            if !(0.0..=1.0).contains(&noise) {
                return Err(anyhow!("--noise must be in [0, 1]").into());
            }
            let synth = ocr_corpus(&OcrNoiseConfig {
                lines,
                noise,
                seed,
                ..OcrNoiseConfig::default()
            });
            let sfas: Vec<_> = synth.lines.iter().map(|l| l.sfa.clone()).collect();
            let mut c = Corpus::ingest_sfas(dir, &sfas)?;
            c.write_truth(&synth.truth)?;
            write_file(&dir.join("queries.tsv"), &queries_to_text(&synth.queries))?;
            let clean: String = synth
                .lines
                .iter()
                .map(|l| format!("{}\n", l.text))
                .collect();
            write_file(&dir.join("clean.txt"), &clean)?;
            println!(
                "generated {} lines, {} queries, {} truth rows in {}",
                lines,
                synth.queries.len(),
                synth.truth.len(),
                dir.display()
            );
        }
    }
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn report_mode(c: &Corpus, mode: Mode) {
    println!(
        "materialized {mode}: {} bytes",
        c.mode_bytes(mode).unwrap_or(0)
    );
}

/// Parses a mode, filling in `kmap` / `staccato` parameters from the single
/// materialized mode of that kind.
fn resolve_mode(c: &Corpus, s: &str) -> Result<Mode> {
    let kind = match s {
        "kmap" | "staccato" => s,
        _ => return Ok(s.parse::<Mode>()?),
    };
    let found: Vec<Mode> = c
        .manifest()
        .available_modes()
        .into_iter()
        .filter(|m| match m {
            Mode::Kmap(_) | Mode::Map => kind == "kmap",
            Mode::Staccato { .. } => kind == "staccato",
            Mode::FullSfa => false,
        })
        .collect();
    match found.as_slice() {
        [one] => Ok(*one),
        [] => bail!("no {kind} mode is materialized"),
        many => bail!(
            "several {kind} modes are materialized ({}); name one explicitly",
            many.iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

/// Reads a query file: `# queries v1` TSV, or plain `id<TAB>pattern` /
/// `pattern` lines.
fn load_queries(c: &Corpus, path: Option<&Path>) -> Result<Vec<(String, QueryDfa)>> {
    let default = c.dir().join("queries.tsv");
    let path = path.unwrap_or(&default);
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = if text.starts_with("# queries v1") {
        parse_queries(&text).with_context(|| format!("in {}", path.display()))?
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .enumerate()
            .map(|(i, l)| match l.split_once('\t') {
                Some((id, p)) => (id.to_string(), p.to_string()),
                None => (format!("q{}", i + 1), l.to_string()),
            })
            .collect()
    };
    rows.into_iter()
        .map(|(id, p)| {
            let dfa = staccato::compile_pattern(&p, false)
                .with_context(|| format!("query {id} ({p:?})"))?;
            Ok((id, dfa))
        })
        .collect()
}

fn load_truth(c: &Corpus, path: Option<&Path>) -> Result<Vec<(String, usize)>> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(parse_truth(&text).with_context(|| format!("in {}", p.display()))?)
        }
        None => Ok(c.truth()?),
    }
}

fn print_matches(matches: &[LineMatch], format: Format) {
    match format {
        Format::Tsv => print!("{}", format_tsv(matches)),
        Format::Pretty => print!("{}", format_pretty(matches)),
    }
}
