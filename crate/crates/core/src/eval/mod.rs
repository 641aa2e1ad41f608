//! Downstream evaluations: ranked retrieval, answer preselection and text
//! classification, each optionally run through a query expander, plus the
//! paired significance test used to compare conditions.

mod classify;
mod index;
mod metrics;
mod preselect;
mod ttest;

pub use classify::{class_accuracy, read_labeled, ClassifierConfig, LinearClassifier};
pub use index::{read_docs, search, Bm25Params, InvertedIndex, RankedList, Scheme};
pub use metrics::{
    average_precision, mean_average_precision, read_qrels, read_queries, read_run, write_run, MapResult,
    Qrels,
};
pub use preselect::{preselect, read_sets, Candidate, Normalization, PreselectResult, PreselectionSet};
pub use ttest::{paired_ttest, student_t_two_sided_p, TTestResult};

use crate::error::Result;
use crate::scalar::Scalar;
use crate::seq2seq::{Seq2Seq, MAX_DECODE_STEPS};
use crate::text::tokenize;

/// Anything that proposes extra terms for a query.
pub trait QueryExpander {
    /// Terms to append to `query`; may be empty.
    fn expansion(&self, query: &str) -> Result<Vec<String>>;

    /// `query` followed by its expansion terms.
    fn expand_text(&self, query: &str) -> Result<String> {
        let terms = self.expansion(query)?;
        if terms.is_empty() {
            return Ok(query.to_string());
        }
        Ok(format!("{query} {}", terms.join(" ")))
    }
}

/// Adds nothing.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityExpander;

impl QueryExpander for IdentityExpander {
    fn expansion(&self, _query: &str) -> Result<Vec<String>> {
        Ok(Vec::new())
    }
}

impl<S: Scalar> QueryExpander for Seq2Seq<S> {
    fn expansion(&self, query: &str) -> Result<Vec<String>> {
        if tokenize(query).is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.expand(query, MAX_DECODE_STEPS)?.expansion)
    }
}

/// Applies `expander` when present.
pub fn maybe_expand(expander: Option<&dyn QueryExpander>, text: &str) -> Result<String> {
    match expander {
        Some(e) => e.expand_text(text),
        None => Ok(text.to_string()),
    }
}
