use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Normalized `(cx, cy, w, h)` box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<S> {
    cx: S,
    cy: S,
    w: S,
    h: S,
}

/// Box extent clipped to the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent<S> {
    pub x1: S,
    pub x2: S,
    pub y1: S,
    pub y2: S,
}

impl<S: Scalar> Extent<S> {
    pub fn area(&self) -> S {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

impl<S: Scalar> BoundingBox<S> {
    pub fn new(cx: S, cy: S, w: S, h: S) -> Result<Self> {
        let (zero, one) = (S::zero(), S::one());
        let unit = |v: S| v.is_finite() && v >= zero && v <= one;
        let size = |v: S| v.is_finite() && v > zero && v <= one;
        if !(unit(cx) && unit(cy) && size(w) && size(h)) {
            return Err(Error::invalid(format!("invalid box ({cx}, {cy}, {w}, {h})")));
        }
        Ok(Self { cx, cy, w, h })
    }

    pub fn from_array(v: [S; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(&self) -> [S; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn cx(&self) -> S {
        self.cx
    }

    pub fn cy(&self) -> S {
        self.cy
    }

    pub fn w(&self) -> S {
        self.w
    }

    pub fn h(&self) -> S {
        self.h
    }

    /// Unclipped `(x1, x2, y1, y2)`.
    pub fn raw_extent(&self) -> Extent<S> {
        let half = S::of(0.5);
        Extent {
            x1: self.cx - half * self.w,
            x2: self.cx + half * self.w,
            y1: self.cy - half * self.h,
            y2: self.cy + half * self.h,
        }
    }

    pub fn clipped_extent(&self) -> Extent<S> {
        let clip = |v: S| v.max(S::zero()).min(S::one());
        let e = self.raw_extent();
        Extent {
            x1: clip(e.x1),
            x2: clip(e.x2),
            y1: clip(e.y1),
            y2: clip(e.y2),
        }
    }
}
