use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

/// Term-weighting scheme used by [`search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Tfidf,
    Bm25,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tfidf" => Ok(Scheme::Tfidf),
            "bm25" => Ok(Scheme::Bm25),
            other => Err(Error::Parameter(format!("unknown scheme {other:?}, expected tfidf or bm25"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Tfidf => "tfidf",
            Scheme::Bm25 => "bm25",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Serialized form; derived lookups are rebuilt on load.
#[derive(Serialize, Deserialize)]
struct IndexData {
    doc_ids: Vec<String>,
    doc_len: Vec<usize>,
    /// term → (document position, term frequency), ascending by position.
    postings: BTreeMap<String, Vec<(usize, usize)>>,
}

/// Immutable inverted index over a document collection.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    doc_len: Vec<usize>,
    postings: BTreeMap<String, Vec<(usize, usize)>>,
    avgdl: f64,
    position: HashMap<String, usize>,
    /// L2 norm of each document's ltc vector.
    doc_norm: Vec<f64>,
}

impl InvertedIndex {
    pub fn build<I, A, B>(docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: AsRef<str>,
    {
        let mut doc_ids = Vec::new();
        let mut doc_len = Vec::new();
        let mut postings: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
        let mut seen = HashMap::new();
        for (pos, (id, text)) in docs.into_iter().enumerate() {
            let id = id.into();
            if seen.insert(id.clone(), pos).is_some() {
                return Err(Error::DuplicateId(id));
            }
            let tokens = tokenize(text.as_ref());
            let mut tf: BTreeMap<String, usize> = BTreeMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for (term, n) in tf {
                postings.entry(term).or_default().push((pos, n));
            }
            doc_ids.push(id);
            doc_len.push(tokens.len());
        }
        Ok(Self::assemble(IndexData {
            doc_ids,
            doc_len,
            postings,
        }))
    }

    fn assemble(data: IndexData) -> Self {
        let n = data.doc_ids.len();
        let avgdl = if n == 0 {
            0.0
        } else {
            data.doc_len.iter().sum::<usize>() as f64 / n as f64
        };
        let position = data.doc_ids.iter().enumerate().map(|(i, d)| (d.clone(), i)).collect();
        let mut norm_sq = vec![0.0; n];
        for list in data.postings.values() {
            let idf = (n as f64 / list.len() as f64).ln();
            for &(pos, tf) in list {
                let w = ltc(tf) * idf;
                norm_sq[pos] += w * w;
            }
        }
        InvertedIndex {
            doc_ids: data.doc_ids,
            doc_len: data.doc_len,
            postings: data.postings,
            avgdl,
            position,
            doc_norm: norm_sq.into_iter().map(f64::sqrt).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let data = IndexData {
            doc_ids: self.doc_ids.clone(),
            doc_len: self.doc_len.clone(),
            postings: self.postings.clone(),
        };
        serde_json::to_string(&data).map_err(|e| Error::Parameter(e.to_string()))
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let data: IndexData =
            serde_json::from_str(text).map_err(|e| Error::parse(origin, e.line(), e.to_string()))?;
        if data.doc_ids.len() != data.doc_len.len() {
            return Err(Error::parse(origin, 0, "doc_ids and doc_len differ in length"));
        }
        if data
            .postings
            .values()
            .flatten()
            .any(|&(pos, tf)| pos >= data.doc_ids.len() || tf == 0)
        {
            return Err(Error::parse(origin, 0, "posting refers to a missing document"));
        }
        Ok(Self::assemble(data))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Number of documents.
    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_len(&self, doc: &str) -> Result<usize> {
        Ok(self.doc_len[self.pos(doc)?])
    }

    /// Term frequency of `term` in `doc`.
    pub fn tf(&self, term: &str, doc: &str) -> Result<usize> {
        let pos = self.pos(doc)?;
        Ok(self.tf_at(term, pos))
    }

    /// `(doc id, tf)` postings of `term`, in index order.
    pub fn postings(&self, term: &str) -> Vec<(&str, usize)> {
        self.postings
            .get(term)
            .map(|l| l.iter().map(|&(p, tf)| (self.doc_ids[p].as_str(), tf)).collect())
            .unwrap_or_default()
    }

    fn pos(&self, doc: &str) -> Result<usize> {
        self.position
            .get(doc)
            .copied()
            .ok_or_else(|| Error::UnknownDoc(doc.to_string()))
    }

    fn tf_at(&self, term: &str, pos: usize) -> usize {
        self.postings
            .get(term)
            .and_then(|l| l.binary_search_by_key(&pos, |&(p, _)| p).ok().map(|i| l[i].1))
            .unwrap_or(0)
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.n_docs() as f64;
        let df = self.df(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// BM25 score of `doc`; repeated query terms count once per occurrence.
    pub fn score_bm25<T: AsRef<str>>(&self, query: &[T], doc: &str, params: Bm25Params) -> Result<f64> {
        let pos = self.pos(doc)?;
        Ok(self.bm25_at(query, pos, params))
    }

    fn bm25_at<T: AsRef<str>>(&self, query: &[T], pos: usize, p: Bm25Params) -> f64 {
        let len = self.doc_len[pos] as f64;
        let norm = if self.avgdl > 0.0 { len / self.avgdl } else { 0.0 };
        query
            .iter()
            .map(|t| {
                let tf = self.tf_at(t.as_ref(), pos) as f64;
                if tf == 0.0 {
                    return 0.0;
                }
                self.idf(t.as_ref()) * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * norm))
            })
            .sum()
    }

    /// Cosine of ltc-weighted query and document vectors. Query terms absent
    /// from the index have no idf and are left out of the query vector.
    pub fn score_tfidf<T: AsRef<str>>(&self, query: &[T], doc: &str) -> Result<f64> {
        let pos = self.pos(doc)?;
        Ok(self.tfidf_at(&self.query_weights(query), pos))
    }

    fn query_weights<T: AsRef<str>>(&self, query: &[T]) -> (Vec<(String, f64)>, f64) {
        let n = self.n_docs() as f64;
        let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
        for t in query {
            *tf.entry(t.as_ref()).or_default() += 1;
        }
        let weights: Vec<(String, f64)> = tf
            .into_iter()
            .filter_map(|(t, c)| {
                let df = self.df(t);
                (df > 0).then(|| (t.to_string(), ltc(c) * (n / df as f64).ln()))
            })
            .collect();
        let norm = weights.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        (weights, norm)
    }

    fn tfidf_at(&self, q: &(Vec<(String, f64)>, f64), pos: usize) -> f64 {
        let (weights, qnorm) = q;
        let dnorm = self.doc_norm[pos];
        if *qnorm == 0.0 || dnorm == 0.0 {
            return 0.0;
        }
        let n = self.n_docs() as f64;
        let dot: f64 = weights
            .iter()
            .map(|(t, wq)| {
                let tf = self.tf_at(t, pos);
                if tf == 0 {
                    return 0.0;
                }
                wq * ltc(tf) * (n / self.df(t) as f64).ln()
            })
            .sum();
        dot / (qnorm * dnorm)
    }

    /// Scores `doc` under `scheme` with default BM25 parameters.
    pub fn score(&self, scheme: Scheme, query: &[String], doc: &str) -> Result<f64> {
        match scheme {
            Scheme::Tfidf => self.score_tfidf(query, doc),
            Scheme::Bm25 => self.score_bm25(query, doc, Bm25Params::default()),
        }
    }
}

fn ltc(tf: usize) -> f64 {
    1.0 + (tf as f64).ln()
}

/// Ranked `(doc id, score)` pairs for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<(String, f64)>,
}

impl RankedList {
    pub fn doc_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|(d, _)| d.as_str()).collect()
    }
}

/// Top-`k` documents sharing at least one term with `query`, by descending
/// score with ties broken by ascending doc id.
pub fn search(index: &InvertedIndex, query_id: &str, query: &str, scheme: Scheme, k: usize) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let tokens = tokenize(query);
    let mut candidates: Vec<usize> = tokens
        .iter()
        .flat_map(|t| index.postings.get(t).into_iter().flatten().map(|&(p, _)| p))
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    let qw = index.query_weights(&tokens);
    let mut scored: Vec<(String, f64)> = candidates
        .into_iter()
        .map(|pos| {
            let s = match scheme {
                Scheme::Tfidf => index.tfidf_at(&qw, pos),
                Scheme::Bm25 => index.bm25_at(&tokens, pos, Bm25Params::default()),
            };
            (index.doc_ids[pos].clone(), s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(RankedList {
        query_id: query_id.to_string(),
        entries: scored,
    })
}

#[derive(Deserialize)]
struct DocRecord {
    id: serde_json::Value,
    text: String,
}

/// Reads `{"id": …, "text": …}` lines; numeric ids are kept as their
/// decimal text.
pub fn read_docs(path: &Path) -> Result<Vec<(String, String)>> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocRecord = serde_json::from_str(line).map_err(|e| Error::parse(&origin, i + 1, e.to_string()))?;
        let id = match rec.id {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            other => return Err(Error::parse(&origin, i + 1, format!("id must be a string or number, got {other}"))),
        };
        docs.push((id, rec.text));
    }
    Ok(docs)
}
