//! Bidirectional LSTM sentence encoder with max-pooling over time, and the
//! keyword extractor built on the pool's argmax selections.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{dropout_mask, Matrix, NodeId, ParamId, ParamStore, SeededRng, Tape};
use crate::text::{tokenize, EmbeddingTable, StopwordSet, Vocabulary};

const GATES: [&str; 4] = ["i", "f", "o", "g"];
const FORGET: usize = 1;

/// Weights of one LSTM layer, one set per gate in the order input, forget,
/// output, candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LstmLayerParams {
    pub input: usize,
    pub hidden: usize,
    /// `H × input` input weights.
    pub w: [ParamId; 4],
    /// `H × H` recurrent weights.
    pub u: [ParamId; 4],
    /// `H × 1` biases.
    pub b: [ParamId; 4],
}

impl LstmLayerParams {
    /// Uniform `±1/√H` weights; forget-gate bias 1, other biases 0.
    pub fn init<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let scale = 1.0 / (hidden as f64).sqrt();
        let w = GATES.map(|g| store.add_uniform(format!("{prefix}.W_{g}"), hidden, input, scale, rng));
        let u = GATES.map(|g| store.add_uniform(format!("{prefix}.U_{g}"), hidden, hidden, scale, rng));
        let b = std::array::from_fn(|k| {
            let fill = if k == FORGET { S::one() } else { S::zero() };
            store.add(format!("{prefix}.b_{}", GATES[k]), Matrix::filled(hidden, 1, fill))
        });
        Self { input, hidden, w, u, b }
    }

    /// Re-attaches to tensors already present in `store` by name.
    pub fn locate<S: Scalar>(store: &ParamStore<S>, prefix: &str) -> Result<Self> {
        let find = |name: String| {
            store
                .find(&name)
                .ok_or_else(|| Error::CheckpointShape(format!("missing tensor {name}")))
        };
        let mut w = [ParamId(0); 4];
        let mut u = [ParamId(0); 4];
        let mut b = [ParamId(0); 4];
        for (k, g) in GATES.iter().enumerate() {
            w[k] = find(format!("{prefix}.W_{g}"))?;
            u[k] = find(format!("{prefix}.U_{g}"))?;
            b[k] = find(format!("{prefix}.b_{g}"))?;
        }
        let (hidden, input) = store.value(w[0]).shape();
        Ok(Self { input, hidden, w, u, b })
    }
}

/// One LSTM step recorded on `tape`:
/// `i,f,o = σ(W x + U h + b)`, `g̃ = tanh(W x + U h + b)`,
/// `c = f⊙c_prev + i⊙g̃`, `h = o⊙tanh(c)`.
pub fn lstm_step<S: Scalar>(
    tape: &mut Tape<'_, S>,
    p: &LstmLayerParams,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> Result<(NodeId, NodeId)> {
    let mut pre = [x; 4];
    for k in 0..4 {
        let w = tape.param(p.w[k]);
        let u = tape.param(p.u[k]);
        let b = tape.param(p.b[k]);
        let wx = tape.matmul(w, x)?;
        let uh = tape.matmul(u, h_prev)?;
        let s = tape.add(wx, uh)?;
        pre[k] = tape.add(s, b)?;
    }
    let i = tape.sigmoid(pre[0]);
    let f = tape.sigmoid(pre[1]);
    let o = tape.sigmoid(pre[2]);
    let g = tape.tanh(pre[3]);
    let fc = tape.hadamard(f, c_prev)?;
    let ig = tape.hadamard(i, g)?;
    let c = tape.add(fc, ig)?;
    let tc = tape.tanh(c);
    let h = tape.hadamard(o, tc)?;
    Ok((h, c))
}

/// Stacked bidirectional LSTM: one (forward, backward) pair per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiEncoderParams {
    pub layers: Vec<(LstmLayerParams, LstmLayerParams)>,
    pub hidden: usize,
}

impl BiEncoderParams {
    pub fn init<S: Scalar>(
        store: &mut ParamStore<S>,
        prefix: &str,
        input: usize,
        hidden: usize,
        num_layers: usize,
        rng: &mut SeededRng,
    ) -> Self {
        let layers = (0..num_layers)
            .map(|l| {
                let inp = if l == 0 { input } else { 2 * hidden };
                (
                    LstmLayerParams::init(store, &format!("{prefix}.l{l}.fwd"), inp, hidden, rng),
                    LstmLayerParams::init(store, &format!("{prefix}.l{l}.bwd"), inp, hidden, rng),
                )
            })
            .collect();
        Self { layers, hidden }
    }

    pub fn locate<S: Scalar>(store: &ParamStore<S>, prefix: &str, num_layers: usize) -> Result<Self> {
        let layers = (0..num_layers)
            .map(|l| {
                Ok((
                    LstmLayerParams::locate(store, &format!("{prefix}.l{l}.fwd"))?,
                    LstmLayerParams::locate(store, &format!("{prefix}.l{l}.bwd"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let hidden = layers
            .first()
            .map(|(f, _)| f.hidden)
            .ok_or_else(|| Error::CheckpointShape("encoder has no layers".into()))?;
        Ok(Self { layers, hidden })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Width of an annotation, `2H`.
    pub fn annotation_dim(&self) -> usize {
        2 * self.hidden
    }
}

/// Dropout applied between stacked layers during training.
pub struct Dropout<'r> {
    pub p: f64,
    pub rng: &'r mut SeededRng,
}

/// Tape nodes produced by running the encoder over one sequence.
#[derive(Debug, Clone)]
pub struct EncodedNodes {
    /// Per-token `2H × 1` top-layer annotations.
    pub annotations: Vec<NodeId>,
    /// Last forward state of each layer.
    pub fwd_final: Vec<NodeId>,
    /// Last backward state (the one at position 0) of each layer.
    pub bwd_final: Vec<NodeId>,
}

pub fn encode_on_tape<S: Scalar>(
    tape: &mut Tape<'_, S>,
    params: &BiEncoderParams,
    embedding: ParamId,
    ids: &[usize],
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<EncodedNodes> {
    if ids.is_empty() {
        return Err(Error::EmptyInput("cannot encode an empty sequence".into()));
    }
    let steps = ids.len();
    let mut inputs = ids
        .iter()
        .map(|&id| tape.lookup(embedding, id))
        .collect::<Result<Vec<_>>>()?;
    let mut fwd_final = Vec::new();
    let mut bwd_final = Vec::new();
    let h = params.hidden;
    for (l, (fwd, bwd)) in params.layers.iter().enumerate() {
        if l > 0 {
            if let Some(d) = dropout.as_deref_mut() {
                for x in inputs.iter_mut() {
                    let rows = tape.value(*x).rows();
                    let mask = tape.input(dropout_mask(rows, 1, d.p, d.rng)?);
                    *x = tape.hadamard(*x, mask)?;
                }
            }
        }
        let zero = tape.input(Matrix::zeros(h, 1));
        let mut fwd_out = Vec::with_capacity(steps);
        let (mut hs, mut cs) = (zero, zero);
        for x in &inputs {
            (hs, cs) = lstm_step(tape, fwd, *x, hs, cs)?;
            fwd_out.push(hs);
        }
        fwd_final.push(hs);
        let mut bwd_out = vec![zero; steps];
        let (mut hs, mut cs) = (zero, zero);
        for t in (0..steps).rev() {
            (hs, cs) = lstm_step(tape, bwd, inputs[t], hs, cs)?;
            bwd_out[t] = hs;
        }
        bwd_final.push(hs);
        inputs = fwd_out
            .iter()
            .zip(&bwd_out)
            .map(|(&f, &b)| tape.concat_rows(&[f, b]))
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(EncodedNodes {
        annotations: inputs,
        fwd_final,
        bwd_final,
    })
}

/// Top-layer annotations of one sentence, one row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotations<S> {
    pub h: Matrix<S>,
}

impl<S: Scalar> Annotations<S> {
    pub fn len(&self) -> usize {
        self.h.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.rows() == 0
    }

    /// Element-wise max over time.
    pub fn max_pool(&self) -> Vec<S> {
        (0..self.h.cols())
            .map(|d| {
                (0..self.h.rows())
                    .map(|t| self.h[(t, d)])
                    .fold(S::neg_infinity(), S::max)
            })
            .collect()
    }

    /// For every pooled dimension, the time step it selects; ties go to the
    /// earliest step.
    pub fn pool_argmax(&self) -> Vec<usize> {
        (0..self.h.cols())
            .map(|d| {
                let mut best = 0;
                for t in 1..self.h.rows() {
                    if self.h[(t, d)] > self.h[(best, d)] {
                        best = t;
                    }
                }
                best
            })
            .collect()
    }

    pub fn keyword_counts(&self) -> KeywordCounts {
        let mut counts = vec![0; self.h.rows()];
        for t in self.pool_argmax() {
            counts[t] += 1;
        }
        KeywordCounts {
            counts,
            pool_dim: self.h.cols(),
        }
    }
}

/// How many pooled dimensions selected each position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordCounts {
    pub counts: Vec<usize>,
    pub pool_dim: usize,
}

/// A keyword with its selection count and first position in the sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Keyword {
    pub token: String,
    pub count: usize,
    pub position: usize,
}

/// Borrowed view of everything needed to encode a sentence.
#[derive(Clone, Copy)]
pub struct EncoderView<'a, S> {
    pub vocab: &'a Vocabulary,
    pub store: &'a ParamStore<S>,
    pub embedding: ParamId,
    pub params: &'a BiEncoderParams,
}

impl<S: Scalar> EncoderView<'_, S> {
    pub fn encode_ids(&self, ids: &[usize]) -> Result<(Annotations<S>, Vec<S>)> {
        let mut tape = Tape::new(self.store);
        let nodes = encode_on_tape(&mut tape, self.params, self.embedding, ids, None)?;
        let dim = self.params.annotation_dim();
        let mut h = Matrix::zeros(ids.len(), dim);
        for (t, &n) in nodes.annotations.iter().enumerate() {
            h.row_mut(t).copy_from_slice(tape.value(n).data());
        }
        let ann = Annotations { h };
        let pooled = ann.max_pool();
        Ok((ann, pooled))
    }

    pub fn encode_tokens<T: AsRef<str>>(&self, tokens: &[T]) -> Result<(Annotations<S>, Vec<S>)> {
        self.encode_ids(&self.vocab.encode(tokens))
    }

    /// Ranks the tokens of `tokens` by how many pooled dimensions chose them.
    ///
    /// Zero-count tokens and stopwords are dropped, repeated surface forms are
    /// merged (counts summed, first position kept), and the result is ordered
    /// by count descending then position ascending, truncated to `max_k`.
    pub fn extract_keywords<T: AsRef<str>>(
        &self,
        tokens: &[T],
        stopwords: &StopwordSet,
        max_k: usize,
    ) -> Result<Vec<Keyword>> {
        let (ann, _) = self.encode_tokens(tokens)?;
        Ok(rank_keywords(tokens, &ann.keyword_counts(), stopwords, max_k))
    }

    pub fn keywords_of_text(
        &self,
        text: &str,
        stopwords: &StopwordSet,
        max_k: usize,
    ) -> Result<Vec<Keyword>> {
        self.extract_keywords(&tokenize(text), stopwords, max_k)
    }
}

/// Turns per-position counts into the ranked keyword list.
pub fn rank_keywords<T: AsRef<str>>(
    tokens: &[T],
    counts: &KeywordCounts,
    stopwords: &StopwordSet,
    max_k: usize,
) -> Vec<Keyword> {
    let mut merged: Vec<Keyword> = Vec::new();
    for (pos, (tok, &count)) in tokens.iter().zip(&counts.counts).enumerate() {
        let tok = tok.as_ref();
        match merged.iter_mut().find(|k| k.token == tok) {
            Some(k) => k.count += count,
            None => merged.push(Keyword {
                token: tok.to_owned(),
                count,
                position: pos,
            }),
        }
    }
    merged.retain(|k| k.count > 0 && !stopwords.contains(&k.token));
    merged.sort_by(|a, b| b.count.cmp(&a.count).then(a.position.cmp(&b.position)));
    merged.truncate(max_k);
    merged
}

/// A standalone encoder: vocabulary, embedding table and BiLSTM weights.
#[derive(Debug, Clone)]
pub struct SentenceEncoder<S> {
    pub vocab: Vocabulary,
    pub store: ParamStore<S>,
    pub embedding: ParamId,
    pub params: BiEncoderParams,
}

impl<S: Scalar> SentenceEncoder<S> {
    /// Wraps `embeddings` with randomly initialised BiLSTM layers.
    pub fn random(
        vocab: Vocabulary,
        embeddings: EmbeddingTable<S>,
        hidden: usize,
        num_layers: usize,
        seed: u64,
    ) -> Result<Self> {
        if embeddings.len() != vocab.len() {
            return Err(Error::Dimension(format!(
                "embedding table has {} rows, vocabulary has {} tokens",
                embeddings.len(),
                vocab.len()
            )));
        }
        if hidden == 0 || num_layers == 0 {
            return Err(Error::Parameter("encoder needs hidden >= 1 and layers >= 1".into()));
        }
        let mut rng = SeededRng::new(seed);
        let mut store = ParamStore::new();
        let dim = embeddings.dim();
        let embedding = store.add("emb", embeddings.matrix);
        let params = BiEncoderParams::init(&mut store, "enc", dim, hidden, num_layers, &mut rng);
        Ok(Self {
            vocab,
            store,
            embedding,
            params,
        })
    }

    pub fn view(&self) -> EncoderView<'_, S> {
        EncoderView {
            vocab: &self.vocab,
            store: &self.store,
            embedding: self.embedding,
            params: &self.params,
        }
    }
}
