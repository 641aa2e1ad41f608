use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::SeededRng;
use crate::text::tokenize;

use super::{maybe_expand, QueryExpander};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub lr: f64,
    /// L2 penalty.
    pub lambda: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 30,
            lr: 0.1,
            lambda: 1e-4,
            seed: 0,
        }
    }
}

/// One-vs-rest linear classifier over ltc TF-IDF features of the training
/// corpus.
#[derive(Debug, Clone)]
pub struct LinearClassifier {
    classes: Vec<String>,
    terms: BTreeMap<String, usize>,
    idf: Vec<f64>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

type Sparse = Vec<(usize, f64)>;

impl LinearClassifier {
    /// Hinge-loss subgradient descent, classes sorted by label.
    pub fn train<T: AsRef<str>, L: AsRef<str>>(texts: &[T], labels: &[L], cfg: ClassifierConfig) -> Result<Self> {
        if texts.len() != labels.len() {
            return Err(Error::Dimension(format!("{} texts but {} labels", texts.len(), labels.len())));
        }
        let classes: Vec<String> = labels
            .iter()
            .map(|l| l.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if classes.len() < 2 {
            return Err(Error::Degenerate(format!(
                "classification needs at least 2 classes, training set has {}",
                classes.len()
            )));
        }
        let docs: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).collect();
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for d in &docs {
            for t in d.iter().collect::<BTreeSet<_>>() {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let terms: BTreeMap<String, usize> = df.keys().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let idf: Vec<f64> = df.values().map(|&d| (n / d as f64).ln()).collect();
        let mut model = LinearClassifier {
            weights: vec![vec![0.0; terms.len()]; classes.len()],
            bias: vec![0.0; classes.len()],
            classes,
            terms,
            idf,
        };
        let xs: Vec<Sparse> = docs.iter().map(|d| model.features(d)).collect();
        let ys: Vec<usize> = labels
            .iter()
            .map(|l| model.classes.binary_search_by(|c| c.as_str().cmp(l.as_ref())).unwrap())
            .collect();
        let mut rng = SeededRng::new(cfg.seed);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        for _ in 0..cfg.epochs {
            rng.shuffle(&mut order);
            for &i in &order {
                for c in 0..model.classes.len() {
                    let y = if ys[i] == c { 1.0 } else { -1.0 };
                    let margin = y * model.score_sparse(c, &xs[i]);
                    let w = &mut model.weights[c];
                    let shrink = 1.0 - cfg.lr * cfg.lambda;
                    w.iter_mut().for_each(|v| *v *= shrink);
                    if margin < 1.0 {
                        for &(j, x) in &xs[i] {
                            w[j] += cfg.lr * y * x;
                        }
                        model.bias[c] += cfg.lr * y;
                    }
                }
            }
        }
        Ok(model)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    fn features(&self, tokens: &[String]) -> Sparse {
        let mut tf: BTreeMap<usize, usize> = BTreeMap::new();
        for t in tokens {
            if let Some(&j) = self.terms.get(t) {
                *tf.entry(j).or_default() += 1;
            }
        }
        let mut v: Sparse = tf
            .into_iter()
            .map(|(j, c)| (j, (1.0 + (c as f64).ln()) * self.idf[j]))
            .filter(|&(_, w)| w != 0.0)
            .collect();
        let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|(_, w)| *w /= norm);
        }
        v
    }

    fn score_sparse(&self, class: usize, x: &Sparse) -> f64 {
        self.bias[class] + x.iter().map(|&(j, v)| self.weights[class][j] * v).sum::<f64>()
    }

    /// Per-class scores in class-list order.
    pub fn scores(&self, text: &str) -> Vec<f64> {
        let x = self.features(&tokenize(text));
        (0..self.classes.len()).map(|c| self.score_sparse(c, &x)).collect()
    }

    /// Highest-scoring class; ties go to the earlier class.
    pub fn classify(&self, text: &str) -> &str {
        let scores = self.scores(text);
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        &self.classes[best]
    }
}

/// Fraction of `(label, text)` items classified correctly, each text first
/// passed through `expander` when given.
pub fn class_accuracy(
    model: &LinearClassifier,
    test: &[(String, String)],
    expander: Option<&dyn QueryExpander>,
) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::UndefinedMetric("empty test set".into()));
    }
    let mut correct = 0usize;
    for (label, text) in test {
        if model.classify(&maybe_expand(expander, text)?) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Reads `label TAB text` lines.
pub fn read_labeled(path: &Path) -> Result<Vec<(String, String)>> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(&origin, i + 1, "expected label<TAB>text"))?;
        out.push((label.trim().to_string(), body.to_string()));
    }
    Ok(out)
}
