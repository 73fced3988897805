//! File-backed corpus store.
//!
//! A corpus is a directory:
//!
//! ```text
//! manifest.tsv                    catalog: lines, modes, artifacts, hashes
//! fullsfa/<line>.sfa              each line's SFA, verbatim
//! kmap_k<k>.tsv                   top-k strings per line
//! staccato_m<m>_k<k>/graph.tsv    chunk-graph topology per line
//! staccato_m<m>_k<k>/data.tsv     ranked strings per chunk
//! truth.tsv                       query id → matching line id
//! index_m<m>_k<k>.idx             posting index over a staccato mode
//! ```
//!
//! Every TSV file starts with a `# <table> v1` header. Files are written to
//! a temporary name and renamed into place, and the manifest is replaced
//! last, so a crash never leaves the manifest pointing at partial data.
//! Each artifact's 64-bit content hash is checked on load. One writer at a
//! time holds the `lock` file.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::approx::{greedy_approximate, Chunk, ChunkedSfa};
use crate::cost;
use crate::error::{Error, Result};
use crate::index::PostingIndex;
use crate::inference::{top_k, RankedEntry, RankedStrings};
use crate::query::{format_sig, LineData, Mode};
use crate::sfa::{escape_label, parse_sfa, unescape_label, NodeId, Sfa};

const MANIFEST: &str = "manifest.tsv";
const LOCK: &str = "lock";
const TRUTH: &str = "truth.tsv";

/// Significant digits of stored log-probabilities.
pub const LOGP_DIGITS: usize = 12;

/// 64-bit content hash (leading bytes of SHA-256).
pub fn content_hash(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    u64::from_be_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Rounds a log-probability to its stored precision.
pub fn quantize_logp(x: f64) -> f64 {
    format_sig(x, LOGP_DIGITS).parse().expect("formatted float")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineRecord {
    pub line: usize,
    /// Source document name.
    pub source: String,
    /// Line number within the source document.
    pub line_no: usize,
    pub hash: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArtifactRecord {
    /// Mode key (`fullsfa`, `kmap:K`, `staccato:M:K`) or relative path.
    pub name: String,
    pub hash: u64,
    pub bytes: u64,
}

/// The corpus catalog.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct CorpusManifest {
    pub corpus_id: String,
    pub lines: Vec<LineRecord>,
    pub modes: Vec<ArtifactRecord>,
    pub artifacts: Vec<ArtifactRecord>,
}

impl CorpusManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::from("# manifest v1\n");
        out.push_str(&format!("corpus\t{}\n", self.corpus_id));
        for l in &self.lines {
            out.push_str(&format!(
                "line\t{}\t{}\t{}\t{:016x}\t{}\n",
                l.line,
                escape_label(&l.source),
                l.line_no,
                l.hash,
                l.bytes
            ));
        }
        for (kind, recs) in [("mode", &self.modes), ("artifact", &self.artifacts)] {
            for r in recs {
                out.push_str(&format!(
                    "{kind}\t{}\t{:016x}\t{}\n",
                    r.name, r.hash, r.bytes
                ));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<CorpusManifest> {
        let mut m = CorpusManifest::default();
        let rows = table_rows(text, "manifest")?;
        for (lineno, f) in rows {
            let bad = |msg: &str| table_err("manifest", lineno, msg);
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
            let hash = |s: &str| u64::from_str_radix(s, 16).map_err(|_| bad("bad hash"));
            let bytes = |s: &str| s.parse::<u64>().map_err(|_| bad("bad size"));
            match f.as_slice() {
                ["corpus", id] => m.corpus_id = id.to_string(),
                ["line", id, src, no, h, b] => {
                    let line = num(id)?;
                    if line != m.lines.len() {
                        return Err(bad("line ids must be dense and ascending"));
                    }
                    m.lines.push(LineRecord {
                        line,
                        source: unescape_label(src).ok_or_else(|| bad("bad escape"))?,
                        line_no: num(no)?,
                        hash: hash(h)?,
                        bytes: bytes(b)?,
                    });
                }
                [kind @ ("mode" | "artifact"), name, h, b] => {
                    let rec = ArtifactRecord {
                        name: name.to_string(),
                        hash: hash(h)?,
                        bytes: bytes(b)?,
                    };
                    if *kind == "mode" {
                        m.modes.push(rec);
                    } else {
                        m.artifacts.push(rec);
                    }
                }
                _ => return Err(bad("unknown record")),
            }
        }
        Ok(m)
    }

    pub fn mode(&self, mode: Mode) -> Option<&ArtifactRecord> {
        let key = mode_key(mode);
        self.modes.iter().find(|r| r.name == key)
    }

    /// Modes available, in manifest order.
    pub fn available_modes(&self) -> Vec<Mode> {
        self.modes
            .iter()
            .filter_map(|r| r.name.parse().ok())
            .collect()
    }

    fn upsert(list: &mut Vec<ArtifactRecord>, rec: ArtifactRecord) {
        match list.iter_mut().find(|r| r.name == rec.name) {
            Some(r) => *r = rec,
            None => list.push(rec),
        }
    }
}

/// Storage key of a mode. `map` is stored as `kmap:1`.
pub fn mode_key(mode: Mode) -> String {
    match mode {
        Mode::Map | Mode::Kmap(1) => "kmap:1".into(),
        Mode::Kmap(k) => format!("kmap:{k}"),
        Mode::FullSfa => "fullsfa".into(),
        Mode::Staccato { m, k } => format!("staccato:{m}:{k}"),
    }
}

fn table_err(table: &str, line: usize, msg: &str) -> Error {
    Error::Table {
        table: table.into(),
        line,
        msg: msg.into(),
    }
}

/// Rows of a `# <table> v1` TSV file as `(line number, fields)`.
fn table_rows<'a>(text: &'a str, table: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines();
    let header = format!("# {table} v1");
    if lines.next() != Some(header.as_str()) {
        return Err(table_err(table, 1, &format!("expected header `{header}`")));
    }
    Ok(lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i + 2, l.split('\t').collect()))
        .collect())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct WriteLock(PathBuf);

impl WriteLock {
    fn acquire(dir: &Path) -> Result<WriteLock> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK);
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(WriteLock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Any single stored line.
#[derive(Clone, Debug, PartialEq)]
pub enum LineValue {
    Full(Sfa),
    Ranked(RankedStrings),
    Chunked(ChunkedSfa),
}

/// Per-mode storage report.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeEntry {
    pub mode: Mode,
    pub measured: u64,
    pub predicted: u64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SizeReport {
    pub entries: Vec<SizeEntry>,
}

impl SizeReport {
    pub fn get(&self, mode: Mode) -> Option<&SizeEntry> {
        let key = mode_key(mode);
        self.entries.iter().find(|e| mode_key(e.mode) == key)
    }
}

/// Handle on a corpus directory.
#[derive(Clone, Debug)]
pub struct Corpus {
    dir: PathBuf,
    manifest: CorpusManifest,
    full: OnceLock<Arc<Vec<Sfa>>>,
}

fn full_path(dir: &Path, line: usize) -> PathBuf {
    dir.join("fullsfa").join(format!("{line}.sfa"))
}

fn kmap_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("kmap_k{k}.tsv"))
}

fn staccato_dir(dir: &Path, m: usize, k: usize) -> PathBuf {
    dir.join(format!("staccato_m{m}_k{k}"))
}

fn index_name(m: usize, k: usize) -> String {
    format!("index_m{m}_k{k}.idx")
}

fn join_ids(v: &[NodeId]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn split_ids(s: &str) -> Option<Vec<NodeId>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|x| x.parse().ok()).collect()
}

fn entry_row(prefix: &str, rank: usize, e: &RankedEntry) -> String {
    format!(
        "{prefix}\t{rank}\t{}\t{}\t{}\n",
        escape_label(&e.string),
        format_sig(e.logp, LOGP_DIGITS),
        join_ids(&e.path)
    )
}

fn quantize_entries(entries: &[RankedEntry]) -> Vec<RankedEntry> {
    entries
        .iter()
        .map(|e| RankedEntry {
            logp: quantize_logp(e.logp),
            ..e.clone()
        })
        .collect()
}

/// The chunked SFA as it will read back from storage.
pub fn quantize_chunked(c: &ChunkedSfa) -> ChunkedSfa {
    let g = c.graph();
    let edges = g
        .edges()
        .iter()
        .zip(c.chunks())
        .map(|(e, ch)| {
            (
                e.src,
                e.dst,
                Chunk {
                    strings: RankedStrings {
                        k: ch.strings.k,
                        entries: quantize_entries(&ch.strings.entries),
                    },
                    covered: ch.covered.clone(),
                },
            )
        })
        .collect();
    ChunkedSfa::from_parts(
        c.node_origin().to_vec(),
        g.start(),
        g.final_node(),
        edges,
        c.m(),
        c.k(),
    )
    .expect("quantization keeps validity")
}

impl Corpus {
    /// Creates (or refreshes) a corpus from `sfa v1` files. Every file is
    /// parsed before anything is written; the first failure aborts with the
    /// file's path. Re-ingesting identical content leaves the manifest
    /// untouched.
    pub fn ingest(dir: &Path, files: &[PathBuf]) -> Result<Corpus> {
        let mut docs = Vec::with_capacity(files.len());
        for f in files {
            let text = fs::read_to_string(f).map_err(|e| Error::from(e).in_file(f))?;
            let name = f
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| f.display().to_string());
            docs.push((name, text));
        }
        Self::ingest_texts(dir, docs).map_err(|e| match e {
            Error::File { path, source } => {
                let idx = files
                    .iter()
                    .position(|f| f.file_name().map(PathBuf::from) == Some(path.clone()));
                let p = idx.map(|i| files[i].clone()).unwrap_or(path);
                Error::File { path: p, source }
            }
            e => e,
        })
    }

    /// Like [`Corpus::ingest`] from `(source name, document)` pairs.
    pub fn ingest_texts(dir: &Path, docs: Vec<(String, String)>) -> Result<Corpus> {
        for (name, text) in &docs {
            parse_sfa(text).map_err(|e| e.in_file(name))?;
        }
        let _lock = WriteLock::acquire(dir)?;
        let lines: Vec<LineRecord> = docs
            .iter()
            .enumerate()
            .map(|(i, (name, text))| LineRecord {
                line: i,
                source: name.clone(),
                line_no: i,
                hash: content_hash(text.as_bytes()),
                bytes: text.len() as u64,
            })
            .collect();
        let mut id_src = Vec::new();
        for l in &lines {
            id_src.extend_from_slice(&l.hash.to_be_bytes());
        }
        let corpus_id = format!("{:016x}", content_hash(&id_src));

        if let Ok(existing) = Self::open(dir) {
            if existing.manifest.corpus_id == corpus_id && existing.manifest.lines == lines {
                return Ok(existing);
            }
        }
        for (i, (_, text)) in docs.iter().enumerate() {
            write_atomic(&full_path(dir, i), text.as_bytes())?;
        }
        let manifest = CorpusManifest {
            corpus_id,
            modes: vec![ArtifactRecord {
                name: mode_key(Mode::FullSfa),
                hash: Self::combined_hash(&lines),
                bytes: lines.iter().map(|l| l.bytes).sum(),
            }],
            lines,
            artifacts: Vec::new(),
        };
        write_atomic(&dir.join(MANIFEST), manifest.to_text().as_bytes())?;
        Ok(Corpus {
            dir: dir.to_path_buf(),
            manifest,
            full: OnceLock::new(),
        })
    }

    /// Ingests in-memory SFAs, serialized to `sfa v1`.
    pub fn ingest_sfas(dir: &Path, sfas: &[Sfa]) -> Result<Corpus> {
        let docs = sfas
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("line{i:05}.sfa"), s.to_string()))
            .collect();
        Self::ingest_texts(dir, docs)
    }

    pub fn open(dir: &Path) -> Result<Corpus> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
        let manifest = CorpusManifest::parse(&text).map_err(|e| e.in_file(&path))?;
        Ok(Corpus {
            dir: dir.to_path_buf(),
            manifest,
            full: OnceLock::new(),
        })
    }

    fn combined_hash(lines: &[LineRecord]) -> u64 {
        let mut b = Vec::with_capacity(lines.len() * 8);
        for l in lines {
            b.extend_from_slice(&l.hash.to_be_bytes());
        }
        content_hash(&b)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }
    pub fn line_count(&self) -> usize {
        self.manifest.lines.len()
    }
    pub fn has_mode(&self, mode: Mode) -> bool {
        self.manifest.mode(mode).is_some()
    }

    fn commit_manifest(&mut self, manifest: CorpusManifest) -> Result<()> {
        write_atomic(&self.dir.join(MANIFEST), manifest.to_text().as_bytes())?;
        self.manifest = manifest;
        Ok(())
    }

    fn read_checked(&self, path: &Path, hash: u64) -> Result<String> {
        let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
        if content_hash(&bytes) != hash {
            return Err(Error::Corrupt {
                path: path.to_path_buf(),
                msg: "checksum mismatch".into(),
            });
        }
        String::from_utf8(bytes).map_err(|_| Error::Corrupt {
            path: path.to_path_buf(),
            msg: "not UTF-8".into(),
        })
    }

    fn require(&self, mode: Mode) -> Result<&ArtifactRecord> {
        self.manifest
            .mode(mode)
            .ok_or_else(|| Error::MissingMode(mode.to_string()))
    }

    /// Every line's full SFA. Parsed once per handle.
    pub fn load_full(&self) -> Result<Vec<Sfa>> {
        Ok(self.full_shared()?.as_ref().clone())
    }

    fn full_shared(&self) -> Result<Arc<Vec<Sfa>>> {
        if let Some(v) = self.full.get() {
            return Ok(v.clone());
        }
        self.require(Mode::FullSfa)?;
        let v: Vec<Sfa> = self
            .manifest
            .lines
            .par_iter()
            .map(|l| self.load_full_line(l))
            .collect::<Result<_>>()?;
        Ok(self.full.get_or_init(|| Arc::new(v)).clone())
    }

    fn load_full_line(&self, l: &LineRecord) -> Result<Sfa> {
        let path = full_path(&self.dir, l.line);
        let text = self.read_checked(&path, l.hash)?;
        parse_sfa(&text).map_err(|e| e.in_file(&path))
    }

    /// Builds and stores a derived representation from the full SFAs.
    pub fn materialize(&mut self, mode: Mode) -> Result<()> {
        match mode {
            Mode::FullSfa => Ok(()),
            Mode::Map => self.materialize_kmap(1),
            Mode::Kmap(k) => self.materialize_kmap(k),
            Mode::Staccato { m, k } => self.materialize_staccato(m, k),
        }
    }

    pub fn materialize_kmap(&mut self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::Domain("k must be at least 1".into()));
        }
        let _lock = WriteLock::acquire(&self.dir)?;
        let full = self.full_shared()?;
        let ranked: Vec<RankedStrings> = full.par_iter().map(|s| top_k(s, k)).collect();
        let mut out = String::from("# kmap v1\n");
        for (line, r) in ranked.iter().enumerate() {
            for (rank, e) in quantize_entries(&r.entries).iter().enumerate() {
                out.push_str(&entry_row(&line.to_string(), rank, e));
            }
        }
        let path = kmap_path(&self.dir, k);
        write_atomic(&path, out.as_bytes())?;
        let mut manifest = self.manifest.clone();
        CorpusManifest::upsert(
            &mut manifest.modes,
            ArtifactRecord {
                name: mode_key(Mode::Kmap(k)),
                hash: content_hash(out.as_bytes()),
                bytes: out.len() as u64,
            },
        );
        self.commit_manifest(manifest)
    }

    pub fn materialize_staccato(&mut self, m: usize, k: usize) -> Result<()> {
        let _lock = WriteLock::acquire(&self.dir)?;
        let full = self.full_shared()?;
        let chunked: Vec<ChunkedSfa> = full
            .par_iter()
            .map(|s| greedy_approximate(s, m, k).map(|c| quantize_chunked(&c)))
            .collect::<Result<_>>()?;
        let mut graph = String::from("# staccato_graph v1\n");
        let mut data = String::from("# staccato_data v1\n");
        for (line, c) in chunked.iter().enumerate() {
            let g = c.graph();
            graph.push_str(&format!(
                "line\t{line}\t{}\t{}\t{}\t{}\n",
                g.node_count(),
                g.start(),
                g.final_node(),
                join_ids(c.node_origin())
            ));
            for (e, (edge, ch)) in g.edges().iter().zip(c.chunks()).enumerate() {
                graph.push_str(&format!(
                    "edge\t{line}\t{e}\t{}\t{}\t{}\n",
                    edge.src,
                    edge.dst,
                    join_ids(&ch.covered)
                ));
                for (rank, entry) in ch.strings.entries.iter().enumerate() {
                    data.push_str(&entry_row(&format!("{line}\t{e}"), rank, entry));
                }
            }
        }
        let sdir = staccato_dir(&self.dir, m, k);
        write_atomic(&sdir.join("graph.tsv"), graph.as_bytes())?;
        write_atomic(&sdir.join("data.tsv"), data.as_bytes())?;
        let mut manifest = self.manifest.clone();
        CorpusManifest::upsert(
            &mut manifest.modes,
            ArtifactRecord {
                name: mode_key(Mode::Staccato { m, k }),
                hash: content_hash(format!("{graph}{data}").as_bytes()),
                bytes: (graph.len() + data.len()) as u64,
            },
        );
        self.commit_manifest(manifest)
    }

    fn parse_entries(
        text: &str,
        table: &str,
        key_fields: usize,
    ) -> Result<BTreeMap<Vec<usize>, Vec<RankedEntry>>> {
        let mut out: BTreeMap<Vec<usize>, Vec<RankedEntry>> = BTreeMap::new();
        for (lineno, f) in table_rows(text, table)? {
            let bad = |msg: &str| table_err(table, lineno, msg);
            if f.len() != key_fields + 4 {
                return Err(bad("wrong field count"));
            }
            let key: Vec<usize> = f[..key_fields]
                .iter()
                .map(|x| x.parse().map_err(|_| bad("bad integer")))
                .collect::<Result<_>>()?;
            let rank: usize = f[key_fields].parse().map_err(|_| bad("bad rank"))?;
            let entries = out.entry(key).or_default();
            if rank != entries.len() {
                return Err(bad("ranks must be dense and ascending"));
            }
            entries.push(RankedEntry {
                string: unescape_label(f[key_fields + 1]).ok_or_else(|| bad("bad escape"))?,
                logp: f[key_fields + 2]
                    .parse()
                    .map_err(|_| bad("bad log-probability"))?,
                path: split_ids(f[key_fields + 3]).ok_or_else(|| bad("bad path"))?,
            });
        }
        Ok(out)
    }

    /// Every line's top-`k` strings.
    pub fn load_ranked(&self, k: usize) -> Result<Vec<RankedStrings>> {
        let rec = self.require(Mode::Kmap(k))?;
        let path = kmap_path(&self.dir, k);
        let text = self.read_checked(&path, rec.hash)?;
        let mut rows = Self::parse_entries(&text, "kmap", 1).map_err(|e| e.in_file(&path))?;
        Ok((0..self.line_count())
            .map(|l| RankedStrings {
                k,
                entries: rows.remove(&vec![l]).unwrap_or_default(),
            })
            .collect())
    }

    /// Every line's chunked SFA.
    pub fn load_chunked(&self, m: usize, k: usize) -> Result<Vec<ChunkedSfa>> {
        let rec = self.require(Mode::Staccato { m, k })?;
        let sdir = staccato_dir(&self.dir, m, k);
        let gpath = sdir.join("graph.tsv");
        let dpath = sdir.join("data.tsv");
        let graph = fs::read_to_string(&gpath).map_err(|e| Error::from(e).in_file(&gpath))?;
        let data = fs::read_to_string(&dpath).map_err(|e| Error::from(e).in_file(&dpath))?;
        if content_hash(format!("{graph}{data}").as_bytes()) != rec.hash {
            return Err(Error::Corrupt {
                path: sdir,
                msg: "checksum mismatch".into(),
            });
        }
        let mut entries =
            Self::parse_entries(&data, "staccato_data", 2).map_err(|e| e.in_file(&dpath))?;
        let corrupt = |msg: String| Error::Corrupt {
            path: gpath.clone(),
            msg,
        };
        type Head = (usize, NodeId, NodeId, Vec<NodeId>);
        let mut heads: Vec<Option<Head>> = vec![None; self.line_count()];
        let mut edges: Vec<Vec<(NodeId, NodeId, Chunk)>> = vec![Vec::new(); self.line_count()];
        for (lineno, f) in table_rows(&graph, "staccato_graph").map_err(|e| e.in_file(&gpath))? {
            let bad = |msg: &str| table_err("staccato_graph", lineno, msg).in_file(&gpath);
            let n = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
            match f.as_slice() {
                ["line", line, count, s, fin, origin] => {
                    let line = n(line)?;
                    let slot = heads.get_mut(line).ok_or_else(|| bad("unknown line"))?;
                    *slot = Some((
                        n(count)?,
                        n(s)? as NodeId,
                        n(fin)? as NodeId,
                        split_ids(origin).ok_or_else(|| bad("bad origin list"))?,
                    ));
                }
                ["edge", line, e, s, d, covered] => {
                    let line = n(line)?;
                    let e = n(e)?;
                    let list = edges.get_mut(line).ok_or_else(|| bad("unknown line"))?;
                    if e != list.len() {
                        return Err(bad("edge ids must be dense and ascending"));
                    }
                    list.push((
                        n(s)? as NodeId,
                        n(d)? as NodeId,
                        Chunk {
                            strings: RankedStrings {
                                k,
                                entries: entries.remove(&vec![line, e]).unwrap_or_default(),
                            },
                            covered: split_ids(covered).ok_or_else(|| bad("bad covered list"))?,
                        },
                    ));
                }
                _ => return Err(bad("unknown record")),
            }
        }
        if !entries.is_empty() {
            return Err(corrupt("data rows reference unknown edges".into()));
        }
        heads
            .into_iter()
            .zip(edges)
            .enumerate()
            .map(|(line, (head, es))| {
                let (count, s, f, origin) =
                    head.ok_or_else(|| corrupt(format!("line {line} has no graph record")))?;
                if origin.len() != count {
                    return Err(corrupt(format!("line {line}: node count mismatch")));
                }
                ChunkedSfa::from_parts(origin, s, f, es, m, k)
                    .map_err(|e| corrupt(format!("line {line}: {e}")))
            })
            .collect()
    }

    /// All lines of `mode`, in memory.
    pub fn load_mode(&self, mode: Mode) -> Result<LineData> {
        Ok(match mode {
            Mode::FullSfa => LineData::Full(self.load_full()?),
            Mode::Map => LineData::Ranked(self.load_ranked(1)?),
            Mode::Kmap(k) => LineData::Ranked(self.load_ranked(k)?),
            Mode::Staccato { m, k } => LineData::Chunked(self.load_chunked(m, k)?),
        })
    }

    /// One line of `mode`.
    pub fn load_line(&self, line: usize, mode: Mode) -> Result<LineValue> {
        let rec = self
            .manifest
            .lines
            .get(line)
            .ok_or(Error::MissingLine(line))?;
        Ok(match mode {
            Mode::FullSfa => {
                self.require(mode)?;
                LineValue::Full(self.load_full_line(rec)?)
            }
            Mode::Map | Mode::Kmap(_) => {
                let k = if let Mode::Kmap(k) = mode { k } else { 1 };
                LineValue::Ranked(self.load_ranked(k)?.swap_remove(line))
            }
            Mode::Staccato { m, k } => {
                LineValue::Chunked(self.load_chunked(m, k)?.swap_remove(line))
            }
        })
    }

    /// Stored bytes of a mode, if materialized.
    pub fn mode_bytes(&self, mode: Mode) -> Option<u64> {
        self.manifest.mode(mode).map(|r| r.bytes)
    }

    /// Measured bytes and record-model predictions for every stored mode.
    pub fn measure_size(&self) -> Result<SizeReport> {
        let mut entries = Vec::new();
        for mode in self.manifest.available_modes() {
            let measured = self.mode_bytes(mode).unwrap_or(0);
            let predicted = match self.load_mode(mode)? {
                LineData::Full(v) => cost::records_space(
                    v.iter()
                        .flat_map(|s| s.edges().iter().flat_map(|e| e.arcs.iter()))
                        .map(|a| a.label.len()),
                ),
                LineData::Ranked(v) => cost::records_space(
                    v.iter()
                        .flat_map(|r| r.entries.iter())
                        .map(|e| e.string.len()),
                ),
                LineData::Chunked(v) => cost::records_space(
                    v.iter()
                        .flat_map(|c| c.chunks().iter())
                        .flat_map(|ch| ch.strings.entries.iter())
                        .map(|e| e.string.len()),
                ),
            };
            entries.push(SizeEntry {
                mode,
                measured,
                predicted,
            });
        }
        Ok(SizeReport { entries })
    }

    fn put_artifact(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let _lock = WriteLock::acquire(&self.dir)?;
        write_atomic(&self.dir.join(name), bytes)?;
        let mut manifest = self.manifest.clone();
        CorpusManifest::upsert(
            &mut manifest.artifacts,
            ArtifactRecord {
                name: name.to_string(),
                hash: content_hash(bytes),
                bytes: bytes.len() as u64,
            },
        );
        self.commit_manifest(manifest)
    }

    fn get_artifact(&self, name: &str) -> Result<Option<String>> {
        match self.manifest.artifacts.iter().find(|a| a.name == name) {
            None => Ok(None),
            Some(a) => self.read_checked(&self.dir.join(name), a.hash).map(Some),
        }
    }

    /// Stores the ground-truth table.
    pub fn write_truth(&mut self, rows: &[(String, usize)]) -> Result<()> {
        self.put_artifact(TRUTH, truth_to_text(rows).as_bytes())
    }

    /// The stored ground-truth table (empty if none).
    pub fn truth(&self) -> Result<Vec<(String, usize)>> {
        match self.get_artifact(TRUTH)? {
            None => Ok(Vec::new()),
            Some(t) => parse_truth(&t).map_err(|e| e.in_file(self.dir.join(TRUTH))),
        }
    }

    pub fn write_index(&mut self, m: usize, k: usize, index: &PostingIndex) -> Result<()> {
        self.put_artifact(&index_name(m, k), index.to_text().as_bytes())
    }

    pub fn load_index(&self, m: usize, k: usize) -> Result<PostingIndex> {
        let name = index_name(m, k);
        let text = self
            .get_artifact(&name)?
            .ok_or_else(|| Error::MissingMode(format!("index for staccato(m={m},k={k})")))?;
        PostingIndex::parse(&text).map_err(|e| e.in_file(self.dir.join(name)))
    }
}

/// `# truth v1` table of `query_id<TAB>line_id` rows.
pub fn truth_to_text(rows: &[(String, usize)]) -> String {
    let mut out = String::from("# truth v1\n");
    for (q, l) in rows {
        out.push_str(&format!("{q}\t{l}\n"));
    }
    out
}

pub fn parse_truth(text: &str) -> Result<Vec<(String, usize)>> {
    table_rows(text, "truth")?
        .into_iter()
        .map(|(lineno, f)| match f.as_slice() {
            [q, l] => l
                .parse()
                .map(|l| (q.to_string(), l))
                .map_err(|_| table_err("truth", lineno, "bad line id")),
            _ => Err(table_err("truth", lineno, "expected query_id<TAB>line_id")),
        })
        .collect()
}

/// `# queries v1` table of `query_id<TAB>pattern` rows.
pub fn queries_to_text(rows: &[(String, String)]) -> String {
    let mut out = String::from("# queries v1\n");
    for (q, p) in rows {
        out.push_str(&format!("{q}\t{p}\n"));
    }
    out
}

pub fn parse_queries(text: &str) -> Result<Vec<(String, String)>> {
    table_rows(text, "queries")?
        .into_iter()
        .map(|(lineno, f)| match f.as_slice() {
            [q, p] => Ok((q.to_string(), p.to_string())),
            _ => Err(table_err(
                "queries",
                lineno,
                "expected query_id<TAB>pattern",
            )),
        })
        .collect()
}
