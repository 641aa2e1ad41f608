use crate::error::Result;
use crate::tensor::{grad_check_with, GradCheckReport, Stencil, Gradients, Matrix, SeededRng, Tape};
use crate::text::{EmbeddingTable, Vocabulary, SPECIALS};

use super::model::{ModelConfig, Seq2Seq};

/// Finite-difference step used for whole-model checks, with a five-point
/// stencil. Some entries have gradients near 1e-8 while the loss is O(1), so
/// small steps drown them in round-off and a three-point stencil at larger
/// steps leaves too much truncation error.
pub const MODEL_CHECK_EPS: f64 = 1e-3;

/// Builds the small verification model: `2 + 2` layers, attention size equal
/// to `hidden`, embedding width `hidden`, vocabulary of `vocab_size` tokens.
/// Embeddings are drawn from `[-1, 1]` and every other weight is doubled from
/// its default initialisation so that no layer is close to linear.
pub fn check_model(hidden: usize, vocab_size: usize, seed: u64) -> Result<Seq2Seq<f64>> {
    let n_words = vocab_size.saturating_sub(SPECIALS.len()).max(1);
    let vocab = Vocabulary::from_tokens((0..n_words).map(|i| format!("w{i}")));
    let mut rng = SeededRng::new(seed ^ 0x5EED);
    let mut matrix = Matrix::zeros(vocab.len(), hidden);
    for r in 1..vocab.len() {
        for v in matrix.row_mut(r) {
            *v = rng.uniform(-1.0, 1.0);
        }
    }
    let mut model = Seq2Seq::new(
        ModelConfig::uniform(hidden, hidden, 2),
        vocab,
        EmbeddingTable { matrix },
        seed,
    )?;
    for p in model.store.iter_mut() {
        if p.name != "emb" {
            p.value = p.value.scale(2.0);
        }
    }
    Ok(model)
}

/// Runs the central-difference check on a batch of two random examples
/// (sources of 2–5 tokens, targets of 1–4 tokens plus EOS), dropout off.
pub fn full_model_gradient_check(hidden: usize, vocab_size: usize, seed: u64) -> Result<GradCheckReport> {
    let mut model = check_model(hidden, vocab_size, seed)?;
    let v = model.vocab.len();
    let mut rng = SeededRng::new(seed.wrapping_add(1));
    let mut draw = |len: usize| -> Vec<usize> { (0..len).map(|_| SPECIALS.len() + rng.below(v - SPECIALS.len())).collect() };
    let batch: Vec<(Vec<usize>, Vec<usize>)> = (0..2)
        .map(|k| (draw(2 + (k * 3 + seed as usize) % 4), draw(1 + (k + seed as usize) % 4)))
        .collect();
    let tokens: usize = batch.iter().map(|(_, t)| t.len() + 1).sum();
    let frozen = model.clone();
    grad_check_with(
        &mut model.store,
        |store| {
            let mut total = 0.0;
            let mut grads: Option<Gradients<f64>> = None;
            for (src, tgt) in &batch {
                let mut tape = Tape::new(store);
                let scale = (tgt.len() + 1) as f64 / tokens as f64;
                let loss = frozen.example_loss(&mut tape, src, tgt, scale, None)?;
                total += tape.value(loss)[(0, 0)];
                let g = tape.backward(loss)?;
                match grads.as_mut() {
                    Some(acc) => acc.merge(&g),
                    None => grads = Some(g),
                }
            }
            Ok((total, grads.expect("two examples")))
        },
        MODEL_CHECK_EPS,
        Stencil::FivePoint,
    )
}
