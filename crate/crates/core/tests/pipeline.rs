use staccato::index::indexed_query_data;
use staccato::query::{rank_data, LineData};
use staccato::synth::{ocr_corpus, OcrNoiseConfig};
use staccato::{build_index, build_trie, compile_pattern, rank_lines, Corpus, Mode};

fn generated(lines: usize) -> Vec<staccato::Sfa> {
    ocr_corpus(&OcrNoiseConfig {
        lines,
        seed: 19,
        ..OcrNoiseConfig::default()
    })
    .lines
    .into_iter()
    .map(|l| l.sfa)
    .collect()
}

#[test]
fn store_index_query_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let sfas = generated(40);
    let mut corpus = Corpus::ingest_sfas(tmp.path(), &sfas).unwrap();
    corpus.materialize(Mode::Staccato { m: 8, k: 12 }).unwrap();
    corpus.materialize(Mode::Kmap(5)).unwrap();

    let reopened = Corpus::open(tmp.path()).unwrap();
    assert_eq!(reopened.line_count(), 40);
    assert!(reopened.has_mode(Mode::Staccato { m: 8, k: 12 }));
    assert!(reopened.has_mode(Mode::Kmap(5)));
    assert!(!reopened.has_mode(Mode::Kmap(6)));

    let dfa = compile_pattern("Congress", false).unwrap();
    let from_store = rank_lines(&reopened, &dfa, Mode::FullSfa, 100).unwrap();
    let in_memory = rank_data(&LineData::Full(sfas), &dfa, 100);
    assert_eq!(from_store.len(), in_memory.len());
    for (a, b) in from_store.iter().zip(&in_memory) {
        assert_eq!(a.line, b.line);
        assert!((a.prob - b.prob).abs() < 1e-9);
    }

    let chunked = reopened.load_chunked(8, 12).unwrap();
    let trie = build_trie(["Congress", "Ford", "insurance"]).unwrap();
    let index = build_index(&chunked, &trie);
    corpus.write_index(8, 12, &index).unwrap();
    let loaded = Corpus::open(tmp.path()).unwrap().load_index(8, 12).unwrap();
    assert_eq!(loaded, index);

    let scan = rank_data(&LineData::Chunked(chunked.clone()), &dfa, 100);
    let via_index = indexed_query_data(&dfa, &loaded, &chunked, 100);
    assert_eq!(via_index.anchor.as_deref(), Some("congress"));
    assert!(via_index.candidates <= chunked.len());
    assert_eq!(scan.len(), via_index.matches.len());
    for (a, b) in scan.iter().zip(&via_index.matches) {
        assert_eq!(a.line, b.line);
        assert!((a.prob - b.prob).abs() < 1e-9);
    }
}

#[test]
fn approximations_never_exceed_full_probability() {
    let tmp = tempfile::tempdir().unwrap();
    let mut corpus = Corpus::ingest_sfas(tmp.path(), &generated(25)).unwrap();
    corpus.materialize(Mode::Map).unwrap();
    corpus.materialize(Mode::Staccato { m: 4, k: 6 }).unwrap();
    let dfa = compile_pattern("Public Law (8|9)\\d", false).unwrap();
    let full = corpus.load_mode(Mode::FullSfa).unwrap().probabilities(&dfa);
    for mode in [Mode::Map, Mode::Staccato { m: 4, k: 6 }] {
        let approx = corpus.load_mode(mode).unwrap().probabilities(&dfa);
        for (a, f) in approx.iter().zip(&full) {
            assert!(*a <= f + 1e-9, "{mode}: {a} > {f}");
        }
    }
}
