//! Value-level activation and loss functions. The tape in [`super::tape`]
//! records the same computations for differentiation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Matrix, SeededRng};

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

#[inline]
pub fn tanh_map<S: Scalar>(x: S) -> S {
    x.tanh()
}

pub fn sigmoid_matrix<S: Scalar>(m: &Matrix<S>) -> Matrix<S> {
    m.map(sigmoid)
}

pub fn tanh_matrix<S: Scalar>(m: &Matrix<S>) -> Matrix<S> {
    m.map(tanh_map)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<S: Scalar>(x: &Matrix<S>) -> Matrix<S> {
    let mut out = x.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub(crate) fn softmax_in_place<S: Scalar>(row: &mut [S]) {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `log softmax(row)` computed through log-sum-exp.
pub fn log_softmax<S: Scalar>(row: &[S]) -> Vec<S> {
    let max = row.iter().copied().fold(S::neg_infinity(), S::max);
    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<S>().ln();
    row.iter().map(|&v| v - lse).collect()
}

/// Masked softmax cross-entropy.
///
/// Returns the mean negative log-likelihood over masked rows and the gradient
/// with respect to `logits`, `(softmax − onehot) / Σmask` on masked rows and
/// zero elsewhere.
pub fn cross_entropy<S: Scalar>(
    logits: &Matrix<S>,
    targets: &[usize],
    mask: &[S],
) -> Result<(S, Matrix<S>)> {
    let (t_len, vocab) = logits.shape();
    if targets.len() != t_len || mask.len() != t_len {
        return Err(Error::Dimension(format!(
            "cross_entropy: logits have {t_len} rows, {} targets, {} mask entries",
            targets.len(),
            mask.len()
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= vocab) {
        return Err(Error::Range {
            id: bad,
            size: vocab,
        });
    }
    let denom: S = mask.iter().copied().sum();
    if denom <= S::zero() {
        return Err(Error::Degenerate(
            "cross_entropy: mask selects no positions".into(),
        ));
    }
    let mut grad = Matrix::zeros(t_len, vocab);
    let mut total = S::zero();
    for t in 0..t_len {
        if mask[t] == S::zero() {
            continue;
        }
        let logp = log_softmax(logits.row(t));
        total -= mask[t] * logp[targets[t]];
        let g = grad.row_mut(t);
        for (v, (gv, lp)) in g.iter_mut().zip(&logp).enumerate() {
            let p = lp.exp();
            let onehot = if v == targets[t] { S::one() } else { S::zero() };
            *gv = mask[t] * (p - onehot) / denom;
        }
    }
    Ok((total / denom, grad))
}

/// Inverted-dropout mask: 0 with probability `p`, else `1/(1−p)`.
pub fn dropout_mask<S: Scalar>(
    rows: usize,
    cols: usize,
    p: f64,
    rng: &mut SeededRng,
) -> Result<Matrix<S>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!(
            "dropout probability must lie in [0, 1), got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(Matrix::filled(rows, cols, S::one()));
    }
    let keep = S::lit(1.0 / (1.0 - p));
    let data = (0..rows * cols)
        .map(|_| if rng.next_f64() < p { S::zero() } else { keep })
        .collect();
    Matrix::from_vec(rows, cols, data)
}
