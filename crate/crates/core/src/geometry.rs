//! Axis-aligned rectangle arithmetic.
//!
//! Boxes use the top-left corner convention with y growing downward. All
//! coordinates are continuous reals; nothing is snapped to pixels or clipped
//! to an image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned rectangle `(x, y, w, h)` with `w > 0` and `h > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl RectBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite coordinates ({x}, {y}, {w}, {h})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "non-positive size {w}x{h} at ({x}, {y})"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    /// Box of size `w x h` centered on `(cx, cy)`.
    pub fn centered(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - 0.5 * w, cy - 0.5 * h, w, h)
    }

    /// Construction for values already known to be valid (lattice anchors).
    pub(crate) fn from_parts(x: f64, y: f64, w: f64, h: f64) -> Self {
        debug_assert!(w > 0.0 && h > 0.0);
        Self { x, y, w, h }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Geometric-mean side length `sqrt(w * h)`.
    pub fn scale(&self) -> f64 {
        self.area().sqrt()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }
}

/// Overlap length of the intervals `[a0, a0 + aw]` and `[b0, b0 + bw]`.
///
/// Written as a minimum over both widths and both cross distances so that the
/// result is exactly `min(aw, bw)` whenever one interval contains the other,
/// independent of where the inner interval sits.
#[inline]
pub fn axis_overlap(a0: f64, aw: f64, b0: f64, bw: f64) -> f64 {
    let cross = ((a0 + aw) - b0).min((b0 + bw) - a0);
    aw.min(bw).min(cross).max(0.0)
}

/// Area of `a ∩ b`; zero when disjoint.
pub fn intersect_area(a: &RectBox, b: &RectBox) -> f64 {
    axis_overlap(a.x, a.w, b.x, b.w) * axis_overlap(a.y, a.h, b.y, b.h)
}

/// IoU from a precomputed intersection and the two areas.
#[inline]
pub(crate) fn iou_from_parts(inter: f64, area_a: f64, area_b: f64) -> f64 {
    if inter <= 0.0 {
        return 0.0;
    }
    inter / ((area_a + area_b) - inter)
}

/// Intersection over union of two boxes.
pub fn iou(a: &RectBox, b: &RectBox) -> f64 {
    iou_from_parts(intersect_area(a, b), a.area(), b.area())
}

/// IoU of two `l x l` squares whose centers differ by `(dx, dy)`, with
/// `0 <= dx, dy < l`.
pub fn iou_offset_square(l: f64, dx: f64, dy: f64) -> Result<f64> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidParameter(format!("side length {l} must be > 0")));
    }
    for (name, d) in [("dx", dx), ("dy", dy)] {
        if !(0.0..l).contains(&d) {
            return Err(Error::InvalidParameter(format!(
                "{name} = {d} outside [0, {l})"
            )));
        }
    }
    Ok(offset_square_iou_unchecked(l, dx, dy))
}

#[inline]
pub(crate) fn offset_square_iou_unchecked(l: f64, dx: f64, dy: f64) -> f64 {
    let inter = (l - dx) * (l - dy);
    inter / (2.0 * l * l - inter)
}
