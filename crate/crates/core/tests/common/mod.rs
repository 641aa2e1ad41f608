#![allow(dead_code)]

use qexp_core::dataset::ExpansionExample;
use qexp_core::seq2seq::{ModelConfig, Seq2Seq};
use qexp_core::tensor::SeededRng;
use qexp_core::text::{EmbeddingTable, Vocabulary};

/// V = 24: the four specials plus twenty words.
pub fn tiny_vocab() -> Vocabulary {
    Vocabulary::from_tokens((0..20).map(|i| format!("w{i}")))
}

/// H = 8, A = 8, V = 24, 2 + 2 layers.
pub fn tiny_model(seed: u64) -> Seq2Seq<f64> {
    let vocab = tiny_vocab();
    let cfg = ModelConfig::uniform(8, 8, 2);
    let emb = EmbeddingTable::random(&vocab, cfg.embed_dim, seed ^ 0xE);
    Seq2Seq::new(cfg, vocab, emb, seed).unwrap()
}

pub fn random_ids(rng: &mut SeededRng, len: usize, vocab: usize) -> Vec<usize> {
    (0..len).map(|_| 4 + rng.below(vocab - 4)).collect()
}

pub fn words(ids: &[usize]) -> Vec<String> {
    ids.iter().map(|i| format!("w{}", i - 4)).collect()
}

/// 32 examples with distinct sources; each expansion is a fixed function of
/// its source and never overlaps it.
pub fn memorization_set(seed: u64) -> Vec<ExpansionExample> {
    let mut rng = SeededRng::new(seed);
    let mut out: Vec<ExpansionExample> = Vec::new();
    while out.len() < 32 {
        let len = 3 + rng.below(3);
        let src: Vec<usize> = (0..len).map(|_| rng.below(10)).collect();
        let source: Vec<String> = src.iter().map(|i| format!("w{i}")).collect();
        if out.iter().any(|e| e.source == source) {
            continue;
        }
        let n = 3 + rng.below(4);
        let mut expansion = Vec::new();
        while expansion.len() < n {
            let w = format!("w{}", 10 + rng.below(10));
            if !expansion.contains(&w) {
                expansion.push(w);
            }
        }
        out.push(ExpansionExample { source, expansion });
    }
    out
}
