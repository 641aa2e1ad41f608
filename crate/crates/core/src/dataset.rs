//! Sentence pairs → (source, expansion keywords) training examples.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderView, Keyword};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::text::{tokenize, StopwordSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Entailment,
    Neutral,
    Contradiction,
    Duplicate,
    Caption,
}

impl FromStr for Relation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entailment" => Ok(Relation::Entailment),
            "neutral" => Ok(Relation::Neutral),
            "contradiction" => Ok(Relation::Contradiction),
            "duplicate" => Ok(Relation::Duplicate),
            "caption" => Ok(Relation::Caption),
            other => Err(format!("unknown relation {other:?}")),
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Relation::Entailment => "entailment",
            Relation::Neutral => "neutral",
            Relation::Contradiction => "contradiction",
            Relation::Duplicate => "duplicate",
            Relation::Caption => "caption",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPair {
    pub text_a: String,
    pub text_b: String,
    pub relation: Relation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairFormat {
    Jsonl,
    Tsv,
}

impl FromStr for PairFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "jsonl" => Ok(PairFormat::Jsonl),
            "tsv" => Ok(PairFormat::Tsv),
            other => Err(format!("unknown pair format {other:?} (expected jsonl or tsv)")),
        }
    }
}

/// Pairs read from a file plus the number of records that were skipped.
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub pairs: Vec<RawPair>,
    pub rejected: usize,
}

#[derive(Deserialize)]
struct JsonPair {
    text_a: String,
    text_b: String,
    relation: String,
}

/// Reads JSONL records `{text_a, text_b, relation}` or TSV rows in the same
/// column order. Bad records are logged and counted, never fatal.
pub fn ingest(path: &Path, format: PairFormat) -> Result<Ingested> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Ingested::default();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields = match format {
            PairFormat::Jsonl => serde_json::from_str::<JsonPair>(line)
                .map(|p| (p.text_a, p.text_b, p.relation))
                .map_err(|e| e.to_string()),
            PairFormat::Tsv => {
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() == 3 {
                    Ok((cols[0].to_owned(), cols[1].to_owned(), cols[2].to_owned()))
                } else {
                    Err(format!("expected 3 tab-separated columns, found {}", cols.len()))
                }
            }
        };
        match fields.and_then(|(a, b, r)| r.parse::<Relation>().map(|rel| (a, b, rel))) {
            Ok((text_a, text_b, relation)) => out.pairs.push(RawPair {
                text_a,
                text_b,
                relation,
            }),
            Err(msg) => {
                warn!("{}:{}: skipping record: {msg}", path.display(), lineno + 1);
                out.rejected += 1;
            }
        }
    }
    Ok(out)
}

/// A source sentence and its expansion keywords.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionExample {
    pub source: Vec<String>,
    pub expansion: Vec<String>,
}

pub const MIN_EXPANSION: usize = 3;
pub const MAX_EXPANSION: usize = 6;

impl ExpansionExample {
    /// Checks length bounds, source-disjointness and uniqueness.
    pub fn validate(&self, min_len: usize, max_len: usize) -> std::result::Result<(), String> {
        let n = self.expansion.len();
        if n < min_len || n > max_len {
            return Err(format!("expansion has {n} tokens, allowed {min_len}..={max_len}"));
        }
        for (i, t) in self.expansion.iter().enumerate() {
            if self.source.iter().any(|s| s.to_lowercase() == t.to_lowercase()) {
                return Err(format!("expansion token {t:?} also appears in the source"));
            }
            if self.expansion[..i].contains(t) {
                return Err(format!("expansion token {t:?} is repeated"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub pairs_in: usize,
    /// Directions dropped because the pair was a contradiction (two per pair).
    pub dropped_contradiction: usize,
    /// Directions left with between 1 and `min_len − 1` keywords.
    pub dropped_short: usize,
    /// Directions with an empty side or no keywords left at all.
    pub dropped_empty: usize,
    pub examples_out: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            min_len: MIN_EXPANSION,
            max_len: MAX_EXPANSION,
        }
    }
}

/// Anything that can rank the keywords of a tokenized sentence.
pub trait KeywordSource: Sync {
    fn keywords(&self, tokens: &[String], stopwords: &StopwordSet, max_k: usize) -> Result<Vec<Keyword>>;
}

impl<S: Scalar> KeywordSource for EncoderView<'_, S> {
    fn keywords(&self, tokens: &[String], stopwords: &StopwordSet, max_k: usize) -> Result<Vec<Keyword>> {
        self.extract_keywords(tokens, stopwords, max_k)
    }
}

enum Direction {
    Kept(ExpansionExample),
    Short,
    Empty,
}

/// Builds one direction: keywords of `target`, minus anything in `source`,
/// truncated to `max_len`, dropped below `min_len`.
fn build_direction<K: KeywordSource>(
    source: &str,
    target: &str,
    encoder: &K,
    stopwords: &StopwordSet,
    opts: BuildOptions,
) -> Result<Direction> {
    let src = tokenize(source);
    let tgt = tokenize(target);
    if src.is_empty() || tgt.is_empty() {
        return Ok(Direction::Empty);
    }
    let keywords = encoder.keywords(&tgt, stopwords, usize::MAX)?;
    let expansion: Vec<String> = keywords
        .into_iter()
        .map(|k| k.token)
        .filter(|k| !src.iter().any(|s| s == k))
        .take(opts.max_len)
        .collect();
    Ok(match expansion.len() {
        0 => Direction::Empty,
        n if n < opts.min_len => Direction::Short,
        _ => Direction::Kept(ExpansionExample {
            source: src,
            expansion,
        }),
    })
}

/// Turns pairs into training examples, A→B before B→A, in input order.
/// Contradiction pairs are skipped. Work is spread over threads; the output
/// order does not depend on scheduling.
pub fn build<K: KeywordSource>(
    pairs: &[RawPair],
    encoder: &K,
    stopwords: &StopwordSet,
    opts: BuildOptions,
) -> Result<(Vec<ExpansionExample>, BuildStats)> {
    let results: Vec<Option<[Direction; 2]>> = pairs
        .par_iter()
        .map(|p| {
            if p.relation == Relation::Contradiction {
                return Ok(None);
            }
            Ok(Some([
                build_direction(&p.text_a, &p.text_b, encoder, stopwords, opts)?,
                build_direction(&p.text_b, &p.text_a, encoder, stopwords, opts)?,
            ]))
        })
        .collect::<Result<_>>()?;

    let mut stats = BuildStats {
        pairs_in: pairs.len(),
        ..Default::default()
    };
    let mut examples = Vec::new();
    for r in results {
        let Some(dirs) = r else {
            stats.dropped_contradiction += 2;
            continue;
        };
        for d in dirs {
            match d {
                Direction::Kept(ex) => examples.push(ex),
                Direction::Short => stats.dropped_short += 1,
                Direction::Empty => stats.dropped_empty += 1,
            }
        }
    }
    stats.examples_out = examples.len();
    Ok((examples, stats))
}

/// Two-column TSV: space-joined source, TAB, space-joined expansion.
pub fn write_examples(examples: &[ExpansionExample], path: &Path) -> Result<()> {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&ex.source.join(" "));
        out.push('\t');
        out.push_str(&ex.expansion.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_examples(path: &Path) -> Result<Vec<ExpansionExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_examples(&text, &path.display().to_string())
}

pub fn parse_examples(text: &str, origin: &str) -> Result<Vec<ExpansionExample>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let (src, exp) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, lineno, "expected two tab-separated columns"))?;
        if exp.contains('\t') {
            return Err(Error::parse(origin, lineno, "more than two columns"));
        }
        let split = |s: &str| s.split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect::<Vec<_>>();
        let ex = ExpansionExample {
            source: split(src),
            expansion: split(exp),
        };
        ex.validate(MIN_EXPANSION, MAX_EXPANSION)
            .map_err(|m| Error::parse(origin, lineno, m))?;
        out.push(ex);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::SentenceEncoder;
    use crate::text::{EmbeddingTable, Vocabulary};

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn ingest_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "p.jsonl",
            concat!(
                r#"{"text_a":"x","text_b":"y","relation":"neutral"}"#, "\n",
                r#"{"text_a":"x","text_b":"z","relation":"contradiction"}"#, "\n",
                r#"{"text_a":"x","text_b":"w","relation":"banana"}"#, "\n",
                "not json\n",
            ),
        );
        let got = ingest(&p, PairFormat::Jsonl).unwrap();
        assert_eq!(got.pairs.len(), 2);
        assert_eq!(got.pairs[0].relation, Relation::Neutral);
        assert_eq!(got.pairs[1].relation, Relation::Contradiction);
        assert_eq!(got.rejected, 2);
    }

    #[test]
    fn ingest_tsv_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.tsv", "a b\tc d\tduplicate\nonly\ttwo\n");
        let got = ingest(&p, PairFormat::Tsv).unwrap();
        assert_eq!(got.pairs.len(), 1);
        assert_eq!(got.pairs[0].relation, Relation::Duplicate);
        assert_eq!(got.rejected, 1);
        assert!(matches!(
            ingest(&dir.path().join("nope"), PairFormat::Tsv),
            Err(Error::Io { .. })
        ));
    }

    fn encoder(words: &str) -> SentenceEncoder<f64> {
        let vocab = Vocabulary::from_tokens(tokenize(words));
        let emb = EmbeddingTable::random(&vocab, 8, 5);
        SentenceEncoder::random(vocab, emb, 6, 2, 6).unwrap()
    }

    #[test]
    fn identical_texts_yield_nothing() {
        let text = "an old parade marches through the quiet town square";
        let enc = encoder(text);
        let pairs = vec![RawPair {
            text_a: text.into(),
            text_b: text.into(),
            relation: Relation::Neutral,
        }];
        let (ex, stats) = build(&pairs, &enc.view(), &StopwordSet::english(), BuildOptions::default()).unwrap();
        assert!(ex.is_empty());
        assert_eq!(stats.dropped_empty, 2);
        assert_eq!(stats.pairs_in * 2, stats.examples_out + stats.dropped_short + stats.dropped_empty);
    }

    #[test]
    fn contradictions_are_dropped_and_counted() {
        let enc = encoder("a b");
        let pairs = vec![RawPair {
            text_a: "a".into(),
            text_b: "b".into(),
            relation: Relation::Contradiction,
        }];
        let (ex, stats) = build(&pairs, &enc.view(), &StopwordSet::english(), BuildOptions::default()).unwrap();
        assert!(ex.is_empty());
        assert_eq!(stats.dropped_contradiction, 2);
    }

    /// Counts fixed by token: the count is the token's length.
    struct LengthCounts;

    impl KeywordSource for LengthCounts {
        fn keywords(&self, tokens: &[String], stopwords: &StopwordSet, max_k: usize) -> Result<Vec<Keyword>> {
            let counts = crate::encoder::KeywordCounts {
                counts: tokens.iter().map(|t| t.len()).collect(),
                pool_dim: tokens.iter().map(|t| t.len()).sum(),
            };
            Ok(crate::encoder::rank_keywords(tokens, &counts, stopwords, max_k))
        }
    }

    /// Naive replay of the filter chain for one direction.
    fn replay(source: &str, target: &str, stop: &StopwordSet) -> Option<Vec<String>> {
        let src = tokenize(source);
        let tgt = tokenize(target);
        let mut scored: Vec<(String, usize, usize)> = Vec::new();
        for (pos, t) in tgt.iter().enumerate() {
            if let Some(e) = scored.iter_mut().find(|e| &e.0 == t) {
                e.1 += t.len();
            } else {
                scored.push((t.clone(), t.len(), pos));
            }
        }
        let mut kept: Vec<(String, usize, usize)> = scored
            .into_iter()
            .filter(|(t, c, _)| *c > 0 && !stop.contains(t) && !src.contains(t))
            .collect();
        // Insertion sort on (count desc, position asc).
        for i in 1..kept.len() {
            let mut j = i;
            while j > 0 && (kept[j].1 > kept[j - 1].1 || (kept[j].1 == kept[j - 1].1 && kept[j].2 < kept[j - 1].2)) {
                kept.swap(j, j - 1);
                j -= 1;
            }
        }
        let out: Vec<String> = kept.into_iter().take(6).map(|e| e.0).collect();
        (out.len() >= 3).then_some(out)
    }

    #[test]
    fn build_matches_naive_replay_with_stub_counts() {
        let stop = StopwordSet::english();
        let pairs = vec![
            RawPair {
                text_a: "A man is playing a guitar on stage".into(),
                text_b: "The musician performs loudly for an enthusiastic audience tonight".into(),
                relation: Relation::Entailment,
            },
            RawPair {
                text_a: "Kids eat pizza".into(),
                text_b: "children eating pizza at a birthday".into(),
                relation: Relation::Caption,
            },
            RawPair {
                text_a: "cats sleep".into(),
                text_b: "dogs bark".into(),
                relation: Relation::Contradiction,
            },
        ];
        let (got, stats) = build(&pairs, &LengthCounts, &stop, BuildOptions::default()).unwrap();
        let mut expected = Vec::new();
        for p in &pairs {
            if p.relation == Relation::Contradiction {
                continue;
            }
            for (s, t) in [(&p.text_a, &p.text_b), (&p.text_b, &p.text_a)] {
                if let Some(exp) = replay(s, t, &stop) {
                    expected.push(ExpansionExample { source: tokenize(s), expansion: exp });
                }
            }
        }
        assert_eq!(got, expected);
        assert_eq!(stats.pairs_in * 2, stats.examples_out + stats.dropped_contradiction + stats.dropped_short + stats.dropped_empty);
        assert_eq!(
            got[0].expansion,
            vec!["enthusiastic", "musician", "performs", "audience", "tonight", "loudly"]
        );
    }

    #[test]
    fn examples_roundtrip_and_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let examples = vec![
            ExpansionExample {
                source: tokenize("who is the president of the u s"),
                expansion: tokenize("american elected actual"),
            },
            ExpansionExample {
                source: tokenize("bullying prevention programs"),
                expansion: tokenize("school program security teachers"),
            },
        ];
        let p = dir.path().join("ex.tsv");
        write_examples(&examples, &p).unwrap();
        assert_eq!(read_examples(&p).unwrap(), examples);
        let empty = write(dir.path(), "empty.tsv", "");
        assert!(read_examples(&empty).unwrap().is_empty());
    }

    #[test]
    fn invalid_example_lines_are_rejected() {
        let err = parse_examples("a b\tc d e f g h i\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_examples("a b\tc d e\na\tb\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_examples("a b\ta c d\n", "t").unwrap_err();
        assert!(err.to_string().contains("source"));
        let err = parse_examples("no tab here\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
