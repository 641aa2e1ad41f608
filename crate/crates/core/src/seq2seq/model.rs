use serde::{Deserialize, Serialize};

use crate::encoder::{encode_on_tape, lstm_step, BiEncoderParams, Dropout, EncoderView, LstmLayerParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{dropout_mask, log_softmax, Matrix, NodeId, ParamId, ParamStore, SeededRng, Tape};
use crate::text::{tokenize, EmbeddingTable, Vocabulary, BOS, EOS};

/// Architecture sizes. Defaults follow the reference setup: 300-d
/// embeddings, 2×500 BiLSTM encoder, 2×500 LSTM decoder, attention size equal
/// to the decoder state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub enc_hidden: usize,
    pub enc_layers: usize,
    pub dec_hidden: usize,
    pub dec_layers: usize,
    pub attention: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::uniform(300, 500, 2)
    }
}

impl ModelConfig {
    /// Same hidden size and depth on both sides, attention size = hidden.
    pub fn uniform(embed_dim: usize, hidden: usize, layers: usize) -> Self {
        Self {
            embed_dim,
            enc_hidden: hidden,
            enc_layers: layers,
            dec_hidden: hidden,
            dec_layers: layers,
            attention: hidden,
        }
    }

    fn validate(&self) -> Result<()> {
        let sizes = [
            self.embed_dim,
            self.enc_hidden,
            self.enc_layers,
            self.dec_hidden,
            self.dec_layers,
            self.attention,
        ];
        if sizes.contains(&0) {
            return Err(Error::Parameter(format!("model sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Additive attention: `e_t = vᵀ tanh(W_s s + W_h h_t)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionParams {
    /// `A × S`
    pub w_s: ParamId,
    /// `A × 2H`
    pub w_h: ParamId,
    /// `1 × A`
    pub v: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderParams {
    pub layers: Vec<LstmLayerParams>,
    /// `(S + 2H) × V`
    pub w_o: ParamId,
    /// `1 × V`
    pub b_o: ParamId,
    /// Per decoder layer: `S × 2H` weight and `S × 1` bias mapping the final
    /// encoder states to the initial decoder state.
    pub bridge: Vec<(ParamId, ParamId)>,
}

/// Encoder–attention–decoder expansion model.
#[derive(Debug, Clone)]
pub struct Seq2Seq<S> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore<S>,
    pub embedding: ParamId,
    pub encoder: BiEncoderParams,
    pub decoder: DecoderParams,
    pub attention: AttentionParams,
}

/// Per-sequence values shared by every decoder step.
pub struct AttentionContext {
    /// `2H × T` annotations as columns.
    pub annotations: NodeId,
    /// `A × T` precomputed `W_h h_t`.
    pub projected: NodeId,
}

/// Recurrent state carried between decoder steps.
#[derive(Clone)]
pub struct DecoderState {
    pub layers: Vec<(NodeId, NodeId)>,
    pub context: NodeId,
}

pub struct StepOutput {
    /// `1 × V`
    pub logits: NodeId,
    /// `1 × T`
    pub alpha: NodeId,
}

/// Output of greedy decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult<S> {
    /// Generated tokens, EOS excluded.
    pub generated: Vec<String>,
    /// One row of attention weights per decoder step, EOS step included.
    pub attention: Matrix<S>,
    /// `generated` minus query words, specials and repeats.
    pub expansion: Vec<String>,
    /// `log p(y_i | y_<i, x)` of each chosen token, EOS step included.
    pub log_probs: Vec<S>,
    /// `p(y_i | y_<i, x)` of each chosen token.
    pub probs: Vec<S>,
}

impl<S: Scalar> Seq2Seq<S> {
    pub fn new(
        config: ModelConfig,
        vocab: Vocabulary,
        embeddings: EmbeddingTable<S>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if embeddings.len() != vocab.len() || embeddings.dim() != config.embed_dim {
            return Err(Error::Dimension(format!(
                "embedding table is {}x{}, expected {}x{}",
                embeddings.len(),
                embeddings.dim(),
                vocab.len(),
                config.embed_dim
            )));
        }
        let mut rng = SeededRng::new(seed);
        let mut store = ParamStore::new();
        let v = vocab.len();
        let (h, s, a) = (config.enc_hidden, config.dec_hidden, config.attention);
        let embedding = store.add("emb", embeddings.matrix);
        let encoder = BiEncoderParams::init(
            &mut store,
            "enc",
            config.embed_dim,
            h,
            config.enc_layers,
            &mut rng,
        );
        let layers = (0..config.dec_layers)
            .map(|l| {
                let input = if l == 0 { config.embed_dim + 2 * h } else { s };
                LstmLayerParams::init(&mut store, &format!("dec.l{l}"), input, s, &mut rng)
            })
            .collect();
        let bridge_scale = 1.0 / ((2 * h) as f64).sqrt();
        let bridge = (0..config.dec_layers)
            .map(|l| {
                let w = store.add_uniform(format!("bridge.l{l}.W"), s, 2 * h, bridge_scale, &mut rng);
                let b = store.add(format!("bridge.l{l}.b"), Matrix::zeros(s, 1));
                (w, b)
            })
            .collect();
        let attention = AttentionParams {
            w_s: store.add_uniform("attn.W_s", a, s, 1.0 / (s as f64).sqrt(), &mut rng),
            w_h: store.add_uniform("attn.W_h", a, 2 * h, bridge_scale, &mut rng),
            v: store.add_uniform("attn.v", 1, a, 1.0 / (a as f64).sqrt(), &mut rng),
        };
        let out_scale = 1.0 / ((s + 2 * h) as f64).sqrt();
        let decoder = DecoderParams {
            layers,
            w_o: store.add_uniform("out.W", s + 2 * h, v, out_scale, &mut rng),
            b_o: store.add("out.b", Matrix::zeros(1, v)),
            bridge,
        };
        Ok(Self {
            config,
            vocab,
            store,
            embedding,
            encoder,
            decoder,
            attention,
        })
    }

    pub fn encoder_view(&self) -> EncoderView<'_, S> {
        EncoderView {
            vocab: &self.vocab,
            store: &self.store,
            embedding: self.embedding,
            params: &self.encoder,
        }
    }

    /// Encodes `src` and prepares the attention context and initial decoder
    /// state.
    pub fn start(
        &self,
        tape: &mut Tape<'_, S>,
        src: &[usize],
        mut dropout: Option<&mut Dropout<'_>>,
    ) -> Result<(AttentionContext, DecoderState)> {
        let enc = encode_on_tape(tape, &self.encoder, self.embedding, src, dropout.as_deref_mut())?;
        let annotations = tape.concat_cols(&enc.annotations)?;
        let w_h = tape.param(self.attention.w_h);
        let projected = tape.matmul(w_h, annotations)?;
        let top = self.config.enc_layers - 1;
        let zero_c = tape.input(Matrix::zeros(self.config.dec_hidden, 1));
        let mut layers = Vec::with_capacity(self.config.dec_layers);
        for (l, &(w, b)) in self.decoder.bridge.iter().enumerate() {
            let src_layer = l.min(top);
            let finals = tape.concat_rows(&[enc.fwd_final[src_layer], enc.bwd_final[src_layer]])?;
            let w = tape.param(w);
            let b = tape.param(b);
            let pre = tape.matmul(w, finals)?;
            let pre = tape.add(pre, b)?;
            layers.push((tape.tanh(pre), zero_c));
        }
        let context = tape.input(Matrix::zeros(2 * self.config.enc_hidden, 1));
        Ok((AttentionContext { annotations, projected }, DecoderState { layers, context }))
    }

    /// Attention weights and context vector for decoder state `s`.
    pub fn attend(
        &self,
        tape: &mut Tape<'_, S>,
        ctx: &AttentionContext,
        s: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let w_s = tape.param(self.attention.w_s);
        let v = tape.param(self.attention.v);
        let ws = tape.matmul(w_s, s)?;
        let pre = tape.add_col_broadcast(ctx.projected, ws)?;
        let act = tape.tanh(pre);
        let scores = tape.matmul(v, act)?;
        let alpha = tape.softmax_rows(scores);
        let alpha_col = tape.transpose(alpha);
        let context = tape.matmul(ctx.annotations, alpha_col)?;
        Ok((alpha, context))
    }

    /// One decoder step: `[embed(y_prev); c_prev]` through the LSTM stack,
    /// attention with the new top state, then `logits = [s; c]ᵀ W_o + b_o`.
    pub fn decode_step(
        &self,
        tape: &mut Tape<'_, S>,
        ctx: &AttentionContext,
        y_prev: usize,
        state: &mut DecoderState,
        mut dropout: Option<&mut Dropout<'_>>,
    ) -> Result<StepOutput> {
        let emb = tape.lookup(self.embedding, y_prev)?;
        let mut x = tape.concat_rows(&[emb, state.context])?;
        for (l, layer) in self.decoder.layers.iter().enumerate() {
            if l > 0 {
                if let Some(d) = dropout.as_deref_mut() {
                    let mask = tape.input(dropout_mask(self.config.dec_hidden, 1, d.p, d.rng)?);
                    x = tape.hadamard(x, mask)?;
                }
            }
            let (h, c) = state.layers[l];
            let (h, c) = lstm_step(tape, layer, x, h, c)?;
            state.layers[l] = (h, c);
            x = h;
        }
        let (alpha, context) = self.attend(tape, ctx, x)?;
        state.context = context;
        let sc = tape.concat_rows(&[x, context])?;
        let sc_row = tape.transpose(sc);
        let w_o = tape.param(self.decoder.w_o);
        let b_o = tape.param(self.decoder.b_o);
        let logits = tape.matmul(sc_row, w_o)?;
        let logits = tape.add(logits, b_o)?;
        Ok(StepOutput { logits, alpha })
    }

    /// Teacher-forced logits for `tgt` (EOS appended): a `(|tgt|+1) × V` node.
    pub fn teacher_forced_logits(
        &self,
        tape: &mut Tape<'_, S>,
        src: &[usize],
        tgt: &[usize],
        mut dropout: Option<&mut Dropout<'_>>,
    ) -> Result<NodeId> {
        let (ctx, mut state) = self.start(tape, src, dropout.as_deref_mut())?;
        let mut rows = Vec::with_capacity(tgt.len() + 1);
        let mut prev = BOS;
        for &y in tgt.iter().chain(std::iter::once(&EOS)) {
            let out = self.decode_step(tape, &ctx, prev, &mut state, dropout.as_deref_mut())?;
            rows.push(out.logits);
            prev = y;
        }
        tape.concat_rows(&rows)
    }

    /// Scaled masked cross-entropy node for one example.
    pub fn example_loss(
        &self,
        tape: &mut Tape<'_, S>,
        src: &[usize],
        tgt: &[usize],
        scale: S,
        dropout: Option<&mut Dropout<'_>>,
    ) -> Result<NodeId> {
        let logits = self.teacher_forced_logits(tape, src, tgt, dropout)?;
        let targets = targets_with_eos(tgt);
        let mask = vec![S::one(); targets.len()];
        tape.cross_entropy(logits, &targets, &mask, scale)
    }

    /// `Σ_i log p(y_i | y_<i, x)` over `tgt` followed by EOS.
    pub fn sequence_log_prob(&self, src: &[usize], tgt: &[usize]) -> Result<S> {
        let mut tape = Tape::new(&self.store);
        let logits = self.teacher_forced_logits(&mut tape, src, tgt, None)?;
        let l = tape.value(logits);
        Ok(targets_with_eos(tgt)
            .iter()
            .enumerate()
            .map(|(t, &y)| log_softmax(l.row(t))[y])
            .sum())
    }

    /// Greedy decoding from token ids, at most `max_steps` non-EOS tokens.
    pub fn greedy_decode(&self, src: &[usize], max_steps: usize) -> Result<(Vec<usize>, DecodeTrace<S>)> {
        let mut tape = Tape::new(&self.store);
        let (ctx, mut state) = self.start(&mut tape, src, None)?;
        let mut out = Vec::new();
        let mut trace = DecodeTrace {
            attention: Vec::new(),
            log_probs: Vec::new(),
            probs: Vec::new(),
        };
        let mut prev = BOS;
        while out.len() < max_steps {
            let step = self.decode_step(&mut tape, &ctx, prev, &mut state, None)?;
            let logits = tape.value(step.logits);
            let y = logits.row_argmax(0);
            let lp = log_softmax(logits.row(0));
            let max = logits.row(0).iter().copied().fold(S::neg_infinity(), S::max);
            let z: S = logits.row(0).iter().map(|&v| (v - max).exp()).sum();
            trace.probs.push((logits[(0, y)] - max).exp() / z);
            trace.log_probs.push(lp[y]);
            trace.attention.push(tape.value(step.alpha).row(0).to_vec());
            if y == EOS {
                break;
            }
            out.push(y);
            prev = y;
        }
        Ok((out, trace))
    }

    /// Expands `query`: greedy decode, then drop specials, query words and
    /// repeats, keeping order.
    pub fn expand(&self, query: &str, max_steps: usize) -> Result<DecodeResult<S>> {
        let tokens = tokenize(query);
        if tokens.is_empty() {
            return Err(Error::EmptyInput(format!("query {query:?} has no tokens")));
        }
        let src = self.vocab.encode(&tokens);
        let (ids, trace) = self.greedy_decode(&src, max_steps)?;
        let generated = self.vocab.decode(&ids)?;
        let mut expansion: Vec<String> = Vec::new();
        for (&id, tok) in ids.iter().zip(&generated) {
            if Vocabulary::is_special(id) || tokens.contains(tok) || expansion.contains(tok) {
                continue;
            }
            expansion.push(tok.clone());
        }
        let cols = src.len();
        let mut attention = Matrix::zeros(trace.attention.len(), cols);
        for (r, row) in trace.attention.iter().enumerate() {
            attention.row_mut(r).copy_from_slice(row);
        }
        Ok(DecodeResult {
            generated,
            attention,
            expansion,
            log_probs: trace.log_probs,
            probs: trace.probs,
        })
    }
}

/// Per-step diagnostics of a greedy decode.
#[derive(Debug, Clone)]
pub struct DecodeTrace<S> {
    pub attention: Vec<Vec<S>>,
    pub log_probs: Vec<S>,
    pub probs: Vec<S>,
}

pub(crate) fn targets_with_eos(tgt: &[usize]) -> Vec<usize> {
    let mut t = tgt.to_vec();
    t.push(EOS);
    t
}
