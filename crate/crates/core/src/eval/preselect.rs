use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::tokenize;

use super::index::InvertedIndex;
use super::{maybe_expand, QueryExpander};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub label: u8,
}

/// A question with its candidate answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreselectionSet {
    pub question: String,
    pub candidates: Vec<Candidate>,
}

/// Denominator of the per-question score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `min(k, #candidates)`.
    #[default]
    MinKCandidates,
    /// Number of relevant candidates; questions without any score 0.
    Relevant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PreselectResult {
    pub accuracy: f64,
    pub coverage: f64,
    pub n: usize,
}

pub fn read_sets(path: &Path) -> Result<Vec<PreselectionSet>> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(&origin, i + 1, e.to_string())))
        .collect()
}

/// Ranks each set's candidates by ltc cosine against the (optionally
/// expanded) question and scores the top `k`.
pub fn preselect(
    sets: &[PreselectionSet],
    expander: Option<&dyn QueryExpander>,
    k: usize,
    norm: Normalization,
) -> Result<PreselectResult> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    if sets.is_empty() {
        return Err(Error::UndefinedMetric("no preselection sets".into()));
    }
    let mut acc = 0.0;
    let mut covered = 0usize;
    for (si, set) in sets.iter().enumerate() {
        if set.candidates.is_empty() {
            return Err(Error::EmptyInput(format!("preselection set {si} has no candidates")));
        }
        // zero-padded so that the id tie rule follows candidate order
        let ids: Vec<String> = (0..set.candidates.len()).map(|i| format!("{i:08}")).collect();
        let index = InvertedIndex::build(ids.iter().cloned().zip(set.candidates.iter().map(|c| c.text.as_str())))?;
        let question = tokenize(&maybe_expand(expander, &set.question)?);
        let mut ranked: Vec<(usize, f64)> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| Ok((i, index.score_tfidf(&question, id)?)))
            .collect::<Result<_>>()?;
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let hits = ranked
            .iter()
            .take(k)
            .filter(|(i, _)| set.candidates[*i].label > 0)
            .count();
        let relevant = set.candidates.iter().filter(|c| c.label > 0).count();
        let denom = match norm {
            Normalization::MinKCandidates => k.min(set.candidates.len()),
            Normalization::Relevant => relevant,
        };
        if denom > 0 {
            acc += hits as f64 / denom as f64;
        }
        if hits > 0 {
            covered += 1;
        }
    }
    let n = sets.len();
    Ok(PreselectResult {
        accuracy: acc / n as f64,
        coverage: covered as f64 / n as f64,
        n,
    })
}
