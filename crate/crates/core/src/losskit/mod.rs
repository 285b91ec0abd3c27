//! Training objective of the coarse retrieval model as plain numerical
//! functions with analytic gradients.
//!
//! The encoders and prediction heads are outside this module: each loss
//! takes the quantities those heads would produce (embeddings, match
//! probabilities, boxes, relation distributions) and returns the loss value
//! together with its gradient with respect to those inputs. [`check`] verifies
//! every gradient against central finite differences.

pub mod check;
mod grounding;
mod itc;
mod itm;
mod spatial;

pub use crate::datamodel::{BoundingBox, Extent};
pub use grounding::{grounding_loss, grounding_loss_mean, iou, GroundingOutput};
pub use itc::{itc_loss, softmax_rows, BatchEmbeddings, ItcOutput};
pub use itm::{itm_loss, select_hard_negative, MatchLabel};
pub use spatial::{spatial_class, spatial_loss, spatial_nll, Horizontal, SpatialClass, SpatialPair, Vertical};

use crate::scalar::Scalar;

/// Probability floor applied before every log.
pub const PROB_EPS: f64 = 1e-12;
/// Weight of the grounding and spatial terms in the total loss.
pub const DEFAULT_LAMBDA: f64 = 0.1;
/// Centre offset below which two regions share a horizontal or vertical bucket.
pub const DEFAULT_SPATIAL_THETA: f64 = 0.05;

/// Clamp floor for `S`: `PROB_EPS`, raised to machine epsilon where
/// `1 - PROB_EPS` would round to one.
pub(crate) fn prob_eps<S: Scalar>() -> S {
    S::of(PROB_EPS).max(S::epsilon())
}

pub(crate) fn clamp_prob<S: Scalar>(p: S) -> S {
    let eps = prob_eps::<S>();
    p.max(eps).min(S::one() - eps)
}

/// `itc + itm + lambda * (grounding + spatial)`.
pub fn total_loss<S: Scalar>(itc: S, itm: S, grounding: S, spatial: S, lambda: S) -> S {
    itc + itm + lambda * (grounding + spatial)
}
