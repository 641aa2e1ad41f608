use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

use super::index::RankedList;

/// Binary relevance judgments: query id → relevant doc ids. Queries whose
/// judgments are all non-relevant are kept with an empty set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Qrels {
    pub judged: BTreeMap<String, BTreeSet<String>>,
}

impl Qrels {
    pub fn relevant(&self, query: &str) -> Option<&BTreeSet<String>> {
        self.judged.get(query)
    }

    /// Parses `qid 0 docid rel` lines; rel > 0 means relevant.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut judged: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 4 {
                return Err(Error::parse(origin, i + 1, format!("expected 4 fields, found {}", fields.len())));
            }
            let rel: i64 = fields[3]
                .parse()
                .map_err(|_| Error::parse(origin, i + 1, format!("bad relevance {:?}", fields[3])))?;
            let set = judged.entry(fields[0].to_string()).or_default();
            if rel > 0 {
                set.insert(fields[2].to_string());
            }
        }
        Ok(Qrels { judged })
    }
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Qrels::parse(&text, &path.display().to_string())
}

/// Reads `qid TAB text` lines.
pub fn read_queries(path: &Path) -> Result<Vec<(String, String)>> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (qid, q) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(&origin, i + 1, "expected qid<TAB>text"))?;
        out.push((qid.trim().to_string(), q.to_string()));
    }
    Ok(out)
}

/// Writes runs in the 6-column TREC format `qid Q0 docid rank score tag`.
pub fn write_run(runs: &[RankedList], tag: &str, path: &Path) -> Result<()> {
    let mut s = String::new();
    for run in runs {
        for (rank, (doc, score)) in run.entries.iter().enumerate() {
            writeln!(s, "{} Q0 {} {} {:.12} {}", run.query_id, doc, rank + 1, score, tag).unwrap();
        }
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads a TREC run; entries are ordered by their rank column.
pub fn read_run(path: &Path) -> Result<Vec<RankedList>> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut by_query: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 6 {
            return Err(Error::parse(&origin, i + 1, format!("expected 6 fields, found {}", f.len())));
        }
        let rank: usize = f[3].parse().map_err(|_| Error::parse(&origin, i + 1, "bad rank"))?;
        let score: f64 = f[4].parse().map_err(|_| Error::parse(&origin, i + 1, "bad score"))?;
        by_query.entry(f[0].to_string()).or_default().push((rank, f[2].to_string(), score));
    }
    Ok(by_query
        .into_iter()
        .map(|(q, mut rows)| {
            rows.sort_by_key(|r| r.0);
            RankedList {
                query_id: q,
                entries: rows.into_iter().map(|(_, d, s)| (d, s)).collect(),
            }
        })
        .collect())
}

/// `Σ_k P(k)·rel(k) / |relevant|`, with unretrieved relevant documents still
/// in the denominator.
pub fn average_precision<D: AsRef<str>>(ranking: &[D], relevant: &BTreeSet<String>) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::UndefinedMetric("average precision needs at least one relevant document".into()));
    }
    let mut seen = HashSet::new();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, doc) in ranking.iter().enumerate() {
        let doc = doc.as_ref();
        if !seen.insert(doc) {
            continue;
        }
        if relevant.contains(doc) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub map: f64,
    /// AP per evaluated query, ordered by query id.
    pub per_query: BTreeMap<String, f64>,
    /// Queries without relevant judgments.
    pub skipped: usize,
}

/// Mean of per-query AP. Queries without relevant judgments are skipped with
/// a warning; the sum runs in query-id order so the result does not depend
/// on the order of `runs`.
pub fn mean_average_precision(runs: &[RankedList], qrels: &Qrels) -> Result<MapResult> {
    let mut per_query = BTreeMap::new();
    let mut skipped = 0;
    for run in runs {
        if per_query.contains_key(&run.query_id) {
            return Err(Error::DuplicateId(format!("query {}", run.query_id)));
        }
        match qrels.relevant(&run.query_id) {
            Some(rel) if !rel.is_empty() => {
                per_query.insert(run.query_id.clone(), average_precision(&run.doc_ids(), rel)?);
            }
            _ => {
                warn!("query {} has no relevant judgments; skipped", run.query_id);
                skipped += 1;
            }
        }
    }
    if per_query.is_empty() {
        return Err(Error::UndefinedMetric("no query has relevance judgments".into()));
    }
    let map = per_query.values().sum::<f64>() / per_query.len() as f64;
    Ok(MapResult {
        map,
        per_query,
        skipped,
    })
}
