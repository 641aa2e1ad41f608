//! Binary checkpoint container.
//!
//! Layout: 8-byte magic `QEXPCKPT`, `u32` little-endian format version,
//! `u64` little-endian manifest length, the JSON manifest, then the raw
//! little-endian tensor payloads in manifest order. The manifest records
//! tensor names and shapes, the payload precision, a SHA-256 of the payload,
//! the vocabulary and the model configuration.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::{BiEncoderParams, SentenceEncoder};
use crate::error::{Error, Result};
use crate::scalar::{Precision, Scalar};
use crate::tensor::{Matrix, ParamStore};
use crate::text::{EmbeddingTable, Vocabulary, SPECIALS};

use super::model::{ModelConfig, Seq2Seq};

pub const MAGIC: &[u8; 8] = b"QEXPCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Seq2seq,
    Encoder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: CheckpointKind,
    pub precision: Precision,
    pub config: ModelConfig,
    /// Vocabulary tokens after the four specials.
    pub vocab: Vec<String>,
    pub tensors: Vec<TensorEntry>,
    pub content_hash: String,
}

fn payload_of<S: Scalar>(store: &ParamStore<S>) -> (Vec<TensorEntry>, Vec<u8>) {
    let mut entries = Vec::with_capacity(store.len());
    let mut payload = Vec::with_capacity(store.num_scalars() * S::BYTES);
    for (_, p) in store.iter() {
        let (r, c) = p.value.shape();
        entries.push(TensorEntry {
            name: p.name.clone(),
            shape: [r, c],
        });
        for &v in p.value.data() {
            v.write_le(&mut payload);
        }
    }
    (entries, payload)
}

fn write_container<S: Scalar>(
    path: &Path,
    kind: CheckpointKind,
    config: &ModelConfig,
    vocab: &Vocabulary,
    store: &ParamStore<S>,
) -> Result<()> {
    let (tensors, payload) = payload_of(store);
    let manifest = Manifest {
        kind,
        precision: S::PRECISION,
        config: config.clone(),
        vocab: vocab.tokens()[SPECIALS.len()..].to_vec(),
        tensors,
        content_hash: hex::encode(Sha256::digest(&payload)),
    };
    let json = serde_json::to_vec(&manifest)
        .map_err(|e| Error::CheckpointFormat(format!("manifest serialisation: {e}")))?;
    let mut out = Vec::with_capacity(20 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parsed container: manifest plus tensors converted to the requested
/// precision.
pub struct Container<S> {
    pub manifest: Manifest,
    pub tensors: Vec<(String, Matrix<S>)>,
}

pub fn read_container<S: Scalar>(path: &Path) -> Result<Container<S>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_container(&bytes)
}

pub fn parse_container<S: Scalar>(bytes: &[u8]) -> Result<Container<S>> {
    if bytes.len() < 20 {
        return Err(Error::CheckpointTruncated(format!("{} byte header", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::CheckpointFormat("bad magic; not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let mlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let rest = &bytes[20..];
    if rest.len() < mlen {
        return Err(Error::CheckpointTruncated("manifest cut short".into()));
    }
    let manifest: Manifest = serde_json::from_slice(&rest[..mlen])
        .map_err(|e| Error::CheckpointFormat(format!("manifest: {e}")))?;
    let payload = &rest[mlen..];
    let width = match manifest.precision {
        Precision::F32 => 4,
        Precision::F64 => 8,
    };
    let expected: usize = manifest
        .tensors
        .iter()
        .map(|t| t.shape[0] * t.shape[1] * width)
        .sum();
    if payload.len() < expected {
        return Err(Error::CheckpointTruncated(format!(
            "payload has {} bytes, manifest needs {expected}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::CheckpointFormat(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let actual = hex::encode(Sha256::digest(payload));
    if actual != manifest.content_hash {
        return Err(Error::CheckpointHash {
            expected: manifest.content_hash.clone(),
            actual,
        });
    }
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    let mut offset = 0;
    for t in &manifest.tensors {
        let n = t.shape[0] * t.shape[1];
        let data: Vec<S> = payload[offset..offset + n * width]
            .chunks_exact(width)
            .map(|c| match manifest.precision {
                Precision::F64 if S::PRECISION == Precision::F64 => S::read_le(c),
                Precision::F32 if S::PRECISION == Precision::F32 => S::read_le(c),
                Precision::F64 => S::lit(f64::read_le(c)),
                Precision::F32 => S::lit(f32::read_le(c) as f64),
            })
            .collect();
        offset += n * width;
        tensors.push((t.name.clone(), Matrix::from_vec(t.shape[0], t.shape[1], data)?));
    }
    Ok(Container { manifest, tensors })
}

/// Copies `tensors` into `store`, which must hold exactly the same names and
/// shapes (order free).
fn fill_store<S: Scalar>(store: &mut ParamStore<S>, tensors: Vec<(String, Matrix<S>)>) -> Result<()> {
    if tensors.len() != store.len() {
        return Err(Error::CheckpointShape(format!(
            "checkpoint has {} tensors, model layout has {}",
            tensors.len(),
            store.len()
        )));
    }
    for (name, m) in tensors {
        let id = store
            .find(&name)
            .ok_or_else(|| Error::CheckpointShape(format!("unexpected tensor {name}")))?;
        let want = store.value(id).shape();
        if m.shape() != want {
            return Err(Error::CheckpointShape(format!(
                "tensor {name} is {}x{}, layout expects {}x{}",
                m.rows(),
                m.cols(),
                want.0,
                want.1
            )));
        }
        store.get_mut(id).value = m;
    }
    Ok(())
}

impl<S: Scalar> Seq2Seq<S> {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_container(path, CheckpointKind::Seq2seq, &self.config, &self.vocab, &self.store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = read_container::<S>(path)?;
        Self::from_container(c)
    }

    pub fn from_container(c: Container<S>) -> Result<Self> {
        if c.manifest.kind != CheckpointKind::Seq2seq {
            return Err(Error::CheckpointFormat("not a seq2seq checkpoint".into()));
        }
        let vocab = Vocabulary::from_tokens(c.manifest.vocab.iter().cloned());
        let emb = EmbeddingTable {
            matrix: Matrix::zeros(vocab.len(), c.manifest.config.embed_dim),
        };
        let mut model = Seq2Seq::new(c.manifest.config.clone(), vocab, emb, 0)
            .map_err(|e| Error::CheckpointShape(e.to_string()))?;
        fill_store(&mut model.store, c.tensors)?;
        Ok(model)
    }
}

impl<S: Scalar> SentenceEncoder<S> {
    pub fn save(&self, path: &Path) -> Result<()> {
        let config = ModelConfig {
            embed_dim: self.store.value(self.embedding).cols(),
            enc_hidden: self.params.hidden,
            enc_layers: self.params.num_layers(),
            ..ModelConfig::uniform(0, self.params.hidden, self.params.num_layers())
        };
        write_container(path, CheckpointKind::Encoder, &config, &self.vocab, &self.store)
    }

    /// Loads an encoder checkpoint, or the encoder half of a seq2seq
    /// checkpoint.
    pub fn load(path: &Path) -> Result<Self> {
        let c = read_container::<S>(path)?;
        let vocab = Vocabulary::from_tokens(c.manifest.vocab.iter().cloned());
        let cfg = &c.manifest.config;
        let tensors: Vec<(String, Matrix<S>)> = c
            .tensors
            .into_iter()
            .filter(|(name, _)| name == "emb" || name.starts_with("enc."))
            .collect();
        let mut store = ParamStore::new();
        for (name, m) in tensors {
            store.add(name, m);
        }
        let embedding = store
            .find("emb")
            .ok_or_else(|| Error::CheckpointShape("missing tensor emb".into()))?;
        let (rows, cols) = store.value(embedding).shape();
        if rows != vocab.len() || cols != cfg.embed_dim {
            return Err(Error::CheckpointShape(format!(
                "embedding is {rows}x{cols}, expected {}x{}",
                vocab.len(),
                cfg.embed_dim
            )));
        }
        let params = BiEncoderParams::locate(&store, "enc", cfg.enc_layers)?;
        for (l, (f, b)) in params.layers.iter().enumerate() {
            let input = if l == 0 { cfg.embed_dim } else { 2 * cfg.enc_hidden };
            for p in [f, b] {
                if p.hidden != cfg.enc_hidden || p.input != input {
                    return Err(Error::CheckpointShape(format!("encoder layer {l} has wrong shape")));
                }
            }
        }
        Ok(Self {
            vocab,
            store,
            embedding,
            params,
        })
    }
}
