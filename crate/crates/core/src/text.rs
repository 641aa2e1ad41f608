//! Tokenization, vocabularies, stopwords and embedding tables.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, SeededRng};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .flat_map(|s| {
            // Some characters lowercase to sequences containing non-alphanumerics
            // (e.g. combining marks); re-split so the output is a fixed point.
            let lower = s.to_lowercase();
            lower
                .split(|c: char| !c.is_alphanumeric())
                .filter(|p| !p.is_empty())
                .map(str::to_owned)
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Dense token ↔ id mapping. Ids 0–3 are the special tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocabulary {
    /// Specials followed by `tokens` in order; duplicates and specials in
    /// `tokens` are skipped.
    pub fn from_tokens<I, T>(tokens: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        let mut vocab = Self {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for s in SPECIALS {
            vocab.push(s.to_owned());
        }
        for t in tokens {
            vocab.push(t.into());
        }
        vocab
    }

    fn push(&mut self, token: String) {
        if !self.ids.contains_key(&token) {
            self.ids.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    /// Specials, then tokens with frequency ≥ `min_freq` by descending
    /// frequency (ties lexicographic), truncated to `max_size` entries.
    pub fn build<'a, I, S>(corpus: I, min_freq: usize, max_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        if min_freq < 1 || max_size < SPECIALS.len() {
            return Err(Error::Parameter(format!(
                "build_vocab needs min_freq >= 1 and max_size >= 4 (got {min_freq}, {max_size})"
            )));
        }
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for seq in corpus {
            for tok in seq {
                *freq.entry(tok.as_ref()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = freq
            .into_iter()
            .filter(|&(t, c)| c >= min_freq && !SPECIALS.contains(&t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - SPECIALS.len());
        Ok(Self::from_tokens(ranked.into_iter().map(|(t, _)| t)))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or(Error::Range {
                id,
                size: self.tokens.len(),
            })
    }

    pub fn is_special(id: usize) -> bool {
        id < SPECIALS.len()
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        ids.iter()
            .map(|&id| self.token(id).map(str::to_owned))
            .collect()
    }

    /// Reads a vocabulary file: one token per line, specials implied.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_tokens(
            text.lines().map(str::trim).filter(|l| !l.is_empty()),
        ))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.tokens[SPECIALS.len()..] {
            out.push_str(t);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Free-function form of [`Vocabulary::build`].
pub fn build_vocab<S: AsRef<str>>(
    corpus: &[Vec<S>],
    min_freq: usize,
    max_size: usize,
) -> Result<Vocabulary> {
    Vocabulary::build(corpus.iter().map(Vec::as_slice), min_freq, max_size)
}

pub fn encode_ids<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Vec<usize> {
    vocab.encode(tokens)
}

pub fn decode_ids(ids: &[usize], vocab: &Vocabulary) -> Result<Vec<String>> {
    vocab.decode(ids)
}

const ENGLISH_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "aren", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can", "could", "couldn", "d", "did", "didn", "do", "does", "doesn", "doing",
    "don", "down", "during", "each", "few", "for", "from", "further", "had", "hadn", "has",
    "hasn", "have", "haven", "having", "he", "her", "here", "hers", "herself", "him", "himself",
    "his", "how", "i", "if", "in", "into", "is", "isn", "it", "its", "itself", "just", "ll", "m",
    "me", "might", "more", "most", "must", "my", "myself", "no", "nor", "not", "now", "o", "of",
    "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own",
    "re", "s", "same", "shall", "she", "should", "shouldn", "so", "some", "such", "t", "than",
    "that", "the", "their", "theirs", "them", "themselves", "then", "there", "these", "they",
    "this", "those", "through", "to", "too", "under", "until", "up", "ve", "very", "was", "wasn",
    "we", "were", "weren", "what", "when", "where", "which", "while", "who", "whom", "why",
    "will", "with", "won", "would", "wouldn", "you", "your", "yours", "yourself", "yourselves",
];

/// Fixed set of lowercase function words.
#[derive(Debug, Clone, Default)]
pub struct StopwordSet {
    members: HashSet<String>,
}

impl StopwordSet {
    /// The bundled English list.
    pub fn english() -> Self {
        Self::from_words(ENGLISH_STOPWORDS.iter().copied())
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_words<I, T>(words: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        Self {
            members: words.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.members.contains(token)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// V×D table of token vectors, row `i` belonging to vocabulary id `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<S> {
    pub matrix: Matrix<S>,
}

impl<S: Scalar> EmbeddingTable<S> {
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn len(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.rows() == 0
    }

    /// Every row uniform in `[-0.1, 0.1]` except the zero PAD row.
    pub fn random(vocab: &Vocabulary, dim: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let mut matrix = Matrix::zeros(vocab.len(), dim);
        for id in 0..vocab.len() {
            if id == PAD {
                continue;
            }
            for v in matrix.row_mut(id) {
                *v = S::lit(rng.uniform(-0.1, 0.1));
            }
        }
        Self { matrix }
    }
}

/// Loads a whitespace-separated `token v1 … vD` file against `vocab`.
///
/// Vocabulary tokens found in the file get their vectors verbatim; the rest
/// are drawn from a generator seeded with `seed`, in id order. PAD is zero.
pub fn load_embeddings<S: Scalar>(
    path: &Path,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<EmbeddingTable<S>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let mut dim: Option<usize> = None;
    let mut found: HashMap<usize, Vec<S>> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().unwrap_or_default();
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(S::lit)
                    .ok_or_else(|| Error::parse(&origin, lineno, format!("non-numeric value {f:?}")))
            })
            .collect::<Result<Vec<S>>>()?;
        if values.is_empty() {
            return Err(Error::parse(&origin, lineno, "line has a token but no vector"));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Dimension(format!(
                    "{origin}:{lineno}: vector has {} values, earlier lines have {d}",
                    values.len()
                )))
            }
            Some(_) => {}
        }
        if let Some(id) = vocab.id(token) {
            found.entry(id).or_insert(values);
        }
    }
    let dim = dim.ok_or_else(|| Error::parse(&origin, 0, "embedding file has no vectors"))?;

    let mut rng = SeededRng::new(seed);
    let mut matrix = Matrix::zeros(vocab.len(), dim);
    for id in 0..vocab.len() {
        if id == PAD {
            continue;
        }
        match found.get(&id) {
            Some(v) => matrix.row_mut(id).copy_from_slice(v),
            None => {
                for x in matrix.row_mut(id) {
                    *x = S::lit(rng.uniform(-0.1, 0.1));
                }
            }
        }
    }
    Ok(EmbeddingTable { matrix })
}
