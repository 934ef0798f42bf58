//! Shared fixtures for the pipeline benchmarks.

use sedkit_core::metrics::ClipScores;
use sedkit_core::synth::{generate_corpus, Corpus, SynthConfig};
use sedkit_core::{ClassVocabulary, ScoreTensor};

pub fn corpus(num_clips: usize, seed: u64) -> Corpus {
    let config = SynthConfig {
        num_clips,
        rng_seed: seed,
        ..SynthConfig::default()
    };
    let vocab = ClassVocabulary::numbered(config.num_classes).expect("valid class count");
    generate_corpus(&config, vocab).expect("default synth config is feasible")
}

/// Reference labels softened toward 0.5 so thresholds fall at varied frames.
pub fn soft_scores(corpus: &Corpus) -> Vec<ClipScores> {
    corpus
        .labels
        .iter()
        .zip(&corpus.events)
        .map(|(labels, events)| {
            let values = labels
                .values()
                .iter()
                .enumerate()
                .map(|(i, &y)| 0.15 + 0.7 * y + 0.1 * ((i * 7919 % 97) as f64 / 97.0 - 0.5))
                .collect();
            ClipScores {
                clip_id: events.clip_id().to_string(),
                scores: ScoreTensor::new(labels.grid(), labels.shared_vocab(), values)
                    .expect("values stay inside [0, 1]"),
            }
        })
        .collect()
}
