//! Shared fixtures for the criterion benches.

use staccato::synth::{ocr_corpus, OcrNoiseConfig, SyntheticCorpus};

/// Seeded OCR-noise corpus of `lines` lines.
pub fn corpus(lines: usize) -> SyntheticCorpus {
    ocr_corpus(&OcrNoiseConfig {
        lines,
        ..OcrNoiseConfig::default()
    })
}
