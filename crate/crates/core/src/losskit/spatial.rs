use super::{clamp_prob, prob_eps, BoundingBox};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizontal {
    Left = 0,
    Same = 1,
    Right = 2,
}

/// Image coordinates: smaller `cy` is higher up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vertical {
    Above = 0,
    Same = 1,
    Below = 2,
}

/// One of the nine relative positions of region i with respect to region j.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialClass {
    pub horizontal: Horizontal,
    pub vertical: Vertical,
}

impl SpatialClass {
    /// `3 * vertical + horizontal`.
    pub fn index(&self) -> usize {
        3 * self.vertical as usize + self.horizontal as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        const H: [Horizontal; 3] = [Horizontal::Left, Horizontal::Same, Horizontal::Right];
        const V: [Vertical; 3] = [Vertical::Above, Vertical::Same, Vertical::Below];
        (index < 9).then(|| Self {
            horizontal: H[index % 3],
            vertical: V[index / 3],
        })
    }

    /// The relation seen from the other region.
    pub fn mirrored(&self) -> Self {
        let horizontal = match self.horizontal {
            Horizontal::Left => Horizontal::Right,
            Horizontal::Same => Horizontal::Same,
            Horizontal::Right => Horizontal::Left,
        };
        let vertical = match self.vertical {
            Vertical::Above => Vertical::Below,
            Vertical::Same => Vertical::Same,
            Vertical::Below => Vertical::Above,
        };
        Self { horizontal, vertical }
    }
}

fn bucket<S: Scalar>(delta: S, theta: S) -> usize {
    if delta.abs() <= theta {
        1
    } else if delta < S::zero() {
        0
    } else {
        2
    }
}

/// Position class of `box_i` relative to `box_j` from their centres.
pub fn spatial_class<S: Scalar>(box_i: &BoundingBox<S>, box_j: &BoundingBox<S>, theta: S) -> Result<SpatialClass> {
    if theta.is_nan() || theta <= S::zero() {
        return Err(Error::invalid(format!("theta must be positive, got {theta}")));
    }
    let h = bucket(box_i.cx() - box_j.cx(), theta);
    let v = bucket(box_i.cy() - box_j.cy(), theta);
    Ok(SpatialClass::from_index(3 * v + h).expect("index < 9"))
}

/// True relation class with a predicted distribution over the nine classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialPair<S> {
    pub label: usize,
    pub p_hat: [S; 9],
}

impl<S: Scalar> SpatialPair<S> {
    pub fn new(label: usize, p_hat: [S; 9]) -> Result<Self> {
        if label >= 9 {
            return Err(Error::invalid(format!("spatial label {label} outside 0..9")));
        }
        if p_hat.iter().any(|p| !p.is_finite() || *p < S::zero()) {
            return Err(Error::invalid("spatial probabilities must be finite and non-negative"));
        }
        let tol = S::of(1e-9).max(S::epsilon() * S::of(64.0));
        let total: S = p_hat.iter().copied().sum();
        if (total - S::one()).abs() > tol {
            return Err(Error::invalid(format!("spatial probabilities sum to {total}")));
        }
        Ok(Self { label, p_hat })
    }
}

/// `-mean log p[label]` on raw rows, without simplex checks.
pub fn spatial_nll<S: Scalar>(probs: &[[S; 9]], labels: &[usize]) -> S {
    let n = S::from(probs.len()).expect("count fits scalar");
    probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| -clamp_prob(p[y]).ln())
        .sum::<S>()
        / n
}

/// Mean cross-entropy and gradient with respect to every `p_hat` entry.
pub fn spatial_loss<S: Scalar>(pairs: &[SpatialPair<S>]) -> Result<(S, Vec<[S; 9]>)> {
    if pairs.is_empty() {
        return Err(Error::invalid("spatial loss needs at least one pair"));
    }
    let floor = prob_eps::<S>();
    if let Some(i) = pairs.iter().position(|p| p.p_hat[p.label] < floor) {
        return Err(Error::invalid(format!(
            "pair {i}: probability of the true class is below the clamp floor"
        )));
    }
    let n = S::from(pairs.len()).expect("count fits scalar");
    let probs: Vec<[S; 9]> = pairs.iter().map(|p| p.p_hat).collect();
    let labels: Vec<usize> = pairs.iter().map(|p| p.label).collect();
    let grads = pairs
        .iter()
        .map(|p| {
            let mut g = [S::zero(); 9];
            g[p.label] = -S::one() / (n * clamp_prob(p.p_hat[p.label]));
            g
        })
        .collect();
    Ok((spatial_nll(&probs, &labels), grads))
}
