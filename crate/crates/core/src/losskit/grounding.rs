use super::{BoundingBox, Extent};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn overlap<S: Scalar>(a1: S, a2: S, b1: S, b2: S) -> S {
    (a2.min(b2) - a1.max(b1)).max(S::zero())
}

/// Intersection over union of the clipped extents; zero when the boxes
/// only touch.
pub fn iou<S: Scalar>(a: &BoundingBox<S>, b: &BoundingBox<S>) -> S {
    let (ea, eb) = (a.clipped_extent(), b.clipped_extent());
    let inter = overlap(ea.x1, ea.x2, eb.x1, eb.x2) * overlap(ea.y1, ea.y2, eb.y1, eb.y2);
    let union = ea.area() + eb.area() - inter;
    if union > S::zero() {
        inter / union
    } else {
        S::zero()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundingOutput<S> {
    pub loss: S,
    /// Gradient with respect to the predicted `(cx, cy, w, h)`.
    pub grad_pred: [S; 4],
}

fn sign<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        S::one()
    } else if x < S::zero() {
        -S::one()
    } else {
        S::zero()
    }
}

fn indicator<S: Scalar>(cond: bool) -> S {
    if cond {
        S::one()
    } else {
        S::zero()
    }
}

/// `(1 - IoU) + |t - p|_1` for one true/predicted pair. Subgradients are
/// zero at the l1 kinks and at clipping or overlap boundaries.
pub fn grounding_loss<S: Scalar>(truth: &BoundingBox<S>, pred: &BoundingBox<S>) -> GroundingOutput<S> {
    let t = truth.clipped_extent();
    let raw = pred.raw_extent();
    let p = pred.clipped_extent();
    let (zero, one, half) = (S::zero(), S::one(), S::of(0.5));

    let ix = overlap(t.x1, t.x2, p.x1, p.x2);
    let iy = overlap(t.y1, t.y2, p.y1, p.y2);
    let inter = ix * iy;
    let area_t = t.area();
    let area_p = p.area();
    let union = area_t + area_p - inter;
    let iou = if union > zero { inter / union } else { zero };

    // dIoU / d(pred extent), ordered (x1, x2, y1, y2)
    let mut d_extent = [zero; 4];
    if inter > zero {
        let (wp, hp) = (p.x2 - p.x1, p.y2 - p.y1);
        let d_ix = [-indicator::<S>(p.x1 > t.x1), indicator(p.x2 < t.x2)];
        let d_iy = [-indicator::<S>(p.y1 > t.y1), indicator(p.y2 < t.y2)];
        let d_inter = [d_ix[0] * iy, d_ix[1] * iy, d_iy[0] * ix, d_iy[1] * ix];
        let d_area = [-hp, hp, -wp, wp];
        for k in 0..4 {
            d_extent[k] = (d_inter[k] * union - inter * (d_area[k] - d_inter[k])) / (union * union);
        }
    }
    let interior = |v: S| indicator::<S>(v > zero && v < one);
    let mask = Extent {
        x1: interior(raw.x1),
        x2: interior(raw.x2),
        y1: interior(raw.y1),
        y2: interior(raw.y2),
    };
    let d_iou = [
        d_extent[0] * mask.x1 + d_extent[1] * mask.x2,
        d_extent[2] * mask.y1 + d_extent[3] * mask.y2,
        half * (d_extent[1] * mask.x2 - d_extent[0] * mask.x1),
        half * (d_extent[3] * mask.y2 - d_extent[2] * mask.y1),
    ];

    let tv = truth.to_array();
    let pv = pred.to_array();
    let l1: S = tv.iter().zip(&pv).map(|(&a, &b)| (a - b).abs()).sum();
    let mut grad_pred = [zero; 4];
    for k in 0..4 {
        grad_pred[k] = -d_iou[k] + sign(pv[k] - tv[k]);
    }
    GroundingOutput {
        loss: (one - iou) + l1,
        grad_pred,
    }
}

/// Mean grounding loss over `(truth, pred)` pairs; gradients are per pair.
pub fn grounding_loss_mean<S: Scalar>(pairs: &[(BoundingBox<S>, BoundingBox<S>)]) -> Result<(S, Vec<[S; 4]>)> {
    if pairs.is_empty() {
        return Err(Error::invalid("grounding loss needs at least one pair"));
    }
    let n = S::from(pairs.len()).expect("count fits scalar");
    let mut total = S::zero();
    let grads = pairs
        .iter()
        .map(|(t, p)| {
            let out = grounding_loss(t, p);
            total += out.loss;
            out.grad_pred.map(|g| g / n)
        })
        .collect();
    Ok((total / n, grads))
}
