use super::clamp_prob;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Binary match label with the predicted match probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchLabel<S> {
    pub positive: bool,
    pub p_match: S,
}

impl<S: Scalar> MatchLabel<S> {
    /// `p_match` may sit on the closed interval; it is clamped before logs.
    pub fn new(positive: bool, p_match: S) -> Result<Self> {
        if !p_match.is_finite() || p_match < S::zero() || p_match > S::one() {
            return Err(Error::invalid(format!("p_match {p_match} outside [0, 1]")));
        }
        Ok(Self { positive, p_match })
    }
}

/// Mean binary cross-entropy and its gradient with respect to each `p_match`.
pub fn itm_loss<S: Scalar>(labels: &[MatchLabel<S>]) -> Result<(S, Vec<S>)> {
    if labels.is_empty() {
        return Err(Error::invalid("itm loss needs at least one label"));
    }
    let n = S::from(labels.len()).expect("count fits scalar");
    let mut loss = S::zero();
    let grads = labels
        .iter()
        .map(|l| {
            let p = clamp_prob(l.p_match);
            if l.positive {
                loss -= p.ln();
                -S::one() / (n * p)
            } else {
                loss -= (S::one() - p).ln();
                S::one() / (n * (S::one() - p))
            }
        })
        .collect();
    Ok((loss / n, grads))
}

/// Index of the most similar non-positive entry; ties go to the lowest index.
pub fn select_hard_negative<S: Scalar>(sim_row: &[S], positive_index: usize) -> Result<usize> {
    if sim_row.len() < 2 {
        return Err(Error::invalid("hard negative mining needs at least two candidates"));
    }
    if positive_index >= sim_row.len() {
        return Err(Error::invalid(format!("positive index {positive_index} out of range")));
    }
    let mut best: Option<(usize, S)> = None;
    for (j, &s) in sim_row.iter().enumerate() {
        if j == positive_index {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    Ok(best.expect("length >= 2").0)
}
