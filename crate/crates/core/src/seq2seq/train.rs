use serde::{Deserialize, Serialize};

use crate::dataset::ExpansionExample;
use crate::encoder::Dropout;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Gradients, SeededRng, Tape};

use super::model::{targets_with_eos, Seq2Seq};

/// SGD schedule and regularisation. Defaults: batches of 32, learning rate
/// 0.001 halved after every epoch, dropout 0.35, 25 epochs, gradient norm
/// clipped at 5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr0: f64,
    pub decay: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lr0: 0.001,
            decay: 0.5,
            dropout: 0.35,
            epochs: 25,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rate used during epoch `epoch` (0-based): `lr0 · decay^epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * self.decay.powi(epoch as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Parameter(format!("decay must lie in (0, 1], got {}", self.decay)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be positive".into()));
        }
        if !(self.lr0 >= 0.0 && self.clip_norm > 0.0) {
            return Err(Error::Parameter("learning rate must be >= 0 and clip norm > 0".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-token loss over the training set after the epoch.
    pub loss: f64,
    pub token_accuracy: f64,
    /// Learning rate the epoch was trained with.
    pub lr: f64,
}

/// Renders the log as CSV with header `epoch,loss,token_accuracy,lr`.
pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,loss,token_accuracy,lr\n");
    for e in log {
        out.push_str(&format!("{},{},{},{}\n", e.epoch, e.loss, e.token_accuracy, e.lr));
    }
    out
}

/// Source and target ids of one example.
#[derive(Debug, Clone)]
pub struct EncodedExample {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

impl<S: Scalar> Seq2Seq<S> {
    pub fn encode_examples(&self, data: &[ExpansionExample]) -> Result<Vec<EncodedExample>> {
        data.iter()
            .enumerate()
            .map(|(i, ex)| {
                if ex.source.is_empty() {
                    return Err(Error::EmptyInput(format!("example {i} has an empty source")));
                }
                Ok(EncodedExample {
                    src: self.vocab.encode(&ex.source),
                    tgt: self.vocab.encode(&ex.expansion),
                })
            })
            .collect()
    }

    /// Teacher-forced mean per-token loss and token accuracy, no dropout.
    pub fn evaluate(&self, data: &[ExpansionExample]) -> Result<(f64, f64)> {
        if data.is_empty() {
            return Err(Error::UndefinedMetric("evaluation set is empty".into()));
        }
        let encoded = self.encode_examples(data)?;
        let mut loss = 0.0;
        let mut correct = 0usize;
        let mut total = 0usize;
        for ex in &encoded {
            let mut tape = Tape::new(&self.store);
            let logits = self.teacher_forced_logits(&mut tape, &ex.src, &ex.tgt, None)?;
            let targets = targets_with_eos(&ex.tgt);
            let l = tape.value(logits);
            for (t, &y) in targets.iter().enumerate() {
                loss -= crate::tensor::log_softmax(l.row(t))[y].as_f64();
                if l.row_argmax(t) == y {
                    correct += 1;
                }
            }
            total += targets.len();
        }
        Ok((loss / total as f64, correct as f64 / total as f64))
    }

    /// Fraction of target positions (EOS included) where the teacher-forced
    /// argmax equals the gold token.
    pub fn token_accuracy(&self, data: &[ExpansionExample]) -> Result<f64> {
        Ok(self.evaluate(data)?.1)
    }

    /// Loss and summed gradients of one mini-batch; the loss is the mean over
    /// all target tokens of the batch.
    pub fn batch_gradients(
        &self,
        batch: &[&EncodedExample],
        dropout: Option<&mut Dropout<'_>>,
    ) -> Result<(S, Gradients<S>)> {
        let tokens: usize = batch.iter().map(|ex| ex.tgt.len() + 1).sum();
        let mut total = S::zero();
        let mut grads: Option<Gradients<S>> = None;
        let mut dropout = dropout;
        for ex in batch {
            let mut tape = Tape::new(&self.store);
            let scale = S::lit((ex.tgt.len() + 1) as f64 / tokens as f64);
            let loss = self.example_loss(&mut tape, &ex.src, &ex.tgt, scale, dropout.as_deref_mut())?;
            total += tape.value(loss)[(0, 0)];
            let g = tape.backward(loss)?;
            match grads.as_mut() {
                Some(acc) => acc.merge(&g),
                None => grads = Some(g),
            }
        }
        let grads = grads.ok_or_else(|| Error::EmptyInput("empty batch".into()))?;
        Ok((total, grads))
    }

    /// Mini-batch SGD with teacher forcing. Calls `on_epoch` after every
    /// epoch with that epoch's log line.
    pub fn train(
        &mut self,
        data: &[ExpansionExample],
        cfg: &TrainConfig,
        mut on_epoch: impl FnMut(&EpochLog),
    ) -> Result<Vec<EpochLog>> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyInput("training set is empty".into()));
        }
        let encoded = self.encode_examples(data)?;
        let mut rng = SeededRng::new(cfg.seed);
        let mut shuffle_rng = rng.fork(1);
        let mut dropout_rng = rng.fork(2);
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        let mut log = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let lr = cfg.lr_at(epoch);
            shuffle_rng.shuffle(&mut order);
            for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
                let batch: Vec<&EncodedExample> = chunk.iter().map(|&i| &encoded[i]).collect();
                let mut dropout = Dropout {
                    p: cfg.dropout,
                    rng: &mut dropout_rng,
                };
                let use_dropout = cfg.dropout > 0.0;
                let (loss, grads) =
                    self.batch_gradients(&batch, use_dropout.then_some(&mut dropout))?;
                if !loss.is_finite() {
                    return Err(self.numeric_fault(epoch, b, &grads));
                }
                self.store.accumulate(&grads);
                self.store
                    .sgd_step(S::lit(lr), S::lit(cfg.clip_norm))
                    .map_err(|e| Error::NumericFault(format!("epoch {epoch}, batch {b}: {e}")))?;
            }
            let (loss, token_accuracy) = self.evaluate(data)?;
            if !loss.is_finite() {
                return Err(Error::NumericFault(format!(
                    "epoch {epoch}: evaluation loss is {loss}"
                )));
            }
            let entry = EpochLog {
                epoch,
                loss,
                token_accuracy,
                lr,
            };
            on_epoch(&entry);
            log.push(entry);
        }
        Ok(log)
    }

    fn numeric_fault(&self, epoch: usize, batch: usize, grads: &Gradients<S>) -> Error {
        let culprit = self
            .store
            .iter()
            .find(|(_, p)| !p.value.is_finite())
            .or_else(|| {
                self.store
                    .iter()
                    .find(|(id, _)| grads.get(*id).is_some_and(|g| !g.is_finite()))
            })
            .map_or_else(|| "unknown".to_owned(), |(_, p)| p.name.clone());
        Error::NumericFault(format!(
            "non-finite loss at epoch {epoch}, batch {batch}; first offending parameter: {culprit}"
        ))
    }
}
