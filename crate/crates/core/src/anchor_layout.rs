//! Anchor lattices.
//!
//! An [`AnchorSpec`] declares scales, ratios, a feature stride, a stride
//! divisor (enlarged feature maps) and, per scale, how many extra shifted
//! sub-lattices to add. [`AnchorLayout`] materializes that spec over a
//! `W x H` plane as a list of regular lattice groups; individual anchors are
//! computed on demand from their dense ID.
//!
//! Sliding-window locations sit at `s/2 + k*s` on each axis where
//! `s = base_stride / stride_divisor`. Shifted sub-lattices are offset by
//! half a stride: one extra anchor goes to the bottom-right, three extra
//! anchors add right and down as well.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::{axis_overlap, iou_from_parts, RectBox};

/// Number of shifted anchors added per sliding-window location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum ShiftCount {
    #[default]
    None,
    One,
    Three,
}

impl ShiftCount {
    pub const ALL: [ShiftCount; 3] = [ShiftCount::None, ShiftCount::One, ShiftCount::Three];

    pub fn from_count(n: u64) -> Result<Self> {
        match n {
            0 => Ok(ShiftCount::None),
            1 => Ok(ShiftCount::One),
            3 => Ok(ShiftCount::Three),
            other => Err(Error::InvalidSpec(format!(
                "shift count must be 0, 1 or 3, got {other}"
            ))),
        }
    }

    pub fn count(self) -> usize {
        match self {
            ShiftCount::None => 0,
            ShiftCount::One => 1,
            ShiftCount::Three => 3,
        }
    }

    /// Sub-lattice offsets in units of half a stride, the unshifted lattice first.
    pub fn offsets(self) -> &'static [(u8, u8)] {
        const OFFSETS: [(u8, u8); 4] = [(0, 0), (1, 1), (1, 0), (0, 1)];
        &OFFSETS[..1 + self.count()]
    }

    /// Factor by which the nearest-neighbor spacing shrinks.
    pub fn stride_factor(self) -> f64 {
        match self {
            ShiftCount::None => 1.0,
            ShiftCount::One => std::f64::consts::FRAC_1_SQRT_2,
            ShiftCount::Three => 0.5,
        }
    }
}

impl fmt::Display for ShiftCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.count())
    }
}

/// Declarative anchor design.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSpec {
    scales: Vec<f64>,
    ratios: Vec<f64>,
    base_stride: f64,
    stride_divisor: u32,
    // parallel to `scales`
    shifts: Vec<ShiftCount>,
}

impl AnchorSpec {
    pub fn new(scales: Vec<f64>, ratios: Vec<f64>, base_stride: f64, stride_divisor: u32) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::InvalidSpec("scales must not be empty".into()));
        }
        if scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidSpec(format!("scales must be positive: {scales:?}")));
        }
        if scales.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpec(format!(
                "scales must be strictly ascending: {scales:?}"
            )));
        }
        if ratios.is_empty() {
            return Err(Error::InvalidSpec("ratios must not be empty".into()));
        }
        if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidSpec(format!("ratios must be positive: {ratios:?}")));
        }
        for (i, r) in ratios.iter().enumerate() {
            if ratios[..i].contains(r) {
                return Err(Error::InvalidSpec(format!("duplicate ratio {r}")));
            }
        }
        if !(base_stride.is_finite() && base_stride > 0.0) {
            return Err(Error::InvalidSpec(format!("base_stride must be > 0, got {base_stride}")));
        }
        if ![1, 2, 4].contains(&stride_divisor) {
            return Err(Error::InvalidSpec(format!(
                "stride_divisor must be 1, 2 or 4, got {stride_divisor}"
            )));
        }
        let shifts = vec![ShiftCount::None; scales.len()];
        Ok(Self {
            scales,
            ratios,
            base_stride,
            stride_divisor,
            shifts,
        })
    }

    /// Six square anchors {16, ..., 512} on a stride-16 feature map.
    pub fn wider_face_baseline() -> Self {
        Self::new(
            vec![16.0, 32.0, 64.0, 128.0, 256.0, 512.0],
            vec![1.0],
            16.0,
            1,
        )
        .expect("baseline spec is valid")
    }

    /// Single square scale at the given stride.
    pub fn single_scale(scale: f64, stride: f64) -> Result<Self> {
        Self::new(vec![scale], vec![1.0], stride, 1)
    }

    pub fn with_shift(mut self, scale: f64, shift: ShiftCount) -> Result<Self> {
        let idx = self.scale_index(scale)?;
        self.shifts[idx] = shift;
        Ok(self)
    }

    pub fn with_divisor(mut self, stride_divisor: u32) -> Result<Self> {
        if ![1, 2, 4].contains(&stride_divisor) {
            return Err(Error::InvalidSpec(format!(
                "stride_divisor must be 1, 2 or 4, got {stride_divisor}"
            )));
        }
        self.stride_divisor = stride_divisor;
        Ok(self)
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn base_stride(&self) -> f64 {
        self.base_stride
    }

    pub fn stride_divisor(&self) -> u32 {
        self.stride_divisor
    }

    /// Distance between adjacent sliding-window locations.
    pub fn sliding_stride(&self) -> f64 {
        self.base_stride / self.stride_divisor as f64
    }

    fn scale_index(&self, scale: f64) -> Result<usize> {
        self.scales
            .iter()
            .position(|&s| s == scale)
            .ok_or(Error::UnknownScale(scale))
    }

    pub fn shift_for(&self, scale: f64) -> Result<ShiftCount> {
        Ok(self.shifts[self.scale_index(scale)?])
    }

    /// `(scale, shift)` pairs for every scale with at least one shifted anchor.
    pub fn shifts_per_scale(&self) -> impl Iterator<Item = (f64, ShiftCount)> + '_ {
        self.scales
            .iter()
            .zip(&self.shifts)
            .filter(|(_, n)| **n != ShiftCount::None)
            .map(|(s, n)| (*s, *n))
    }

    /// Nearest-neighbor spacing of the anchor centers of one scale.
    pub fn effective_anchor_stride(&self, scale: f64) -> Result<f64> {
        Ok(self.sliding_stride() * self.shift_for(scale)?.stride_factor())
    }

    pub fn min_effective_stride(&self) -> f64 {
        self.shifts
            .iter()
            .map(|n| self.sliding_stride() * n.stride_factor())
            .fold(f64::INFINITY, f64::min)
    }

    /// Anchors attached to one sliding-window location, shifted ones included.
    pub fn anchors_per_location(&self) -> usize {
        self.shifts.iter().map(|n| self.ratios.len() * (1 + n.count())).sum()
    }

    /// Box size for a scale and an `h/w` ratio; area is `scale^2`.
    pub fn anchor_size(scale: f64, ratio: f64) -> (f64, f64) {
        if ratio == 1.0 {
            (scale, scale)
        } else {
            let r = ratio.sqrt();
            (scale / r, scale * r)
        }
    }

    /// Compact JSON form, also used as the lexicographic tie-break key.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    scales: Vec<f64>,
    #[serde(default = "default_ratios")]
    ratios: Vec<f64>,
    base_stride: f64,
    #[serde(default = "default_divisor")]
    stride_divisor: u32,
    #[serde(default)]
    shifts_per_scale: BTreeMap<String, u64>,
}

fn default_ratios() -> Vec<f64> {
    vec![1.0]
}

fn default_divisor() -> u32 {
    1
}

struct ShiftMap<'a>(&'a AnchorSpec);

impl Serialize for ShiftMap<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<_> = self.0.shifts_per_scale().collect();
        let mut map = serializer.serialize_map(Some(entries.len()))?;
        for (scale, n) in entries {
            map.serialize_entry(&format!("{scale}"), &n.count())?;
        }
        map.end()
    }
}

impl Serialize for AnchorSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = serializer.serialize_struct("AnchorSpec", 5)?;
        st.serialize_field("scales", &self.scales)?;
        st.serialize_field("ratios", &self.ratios)?;
        st.serialize_field("base_stride", &self.base_stride)?;
        st.serialize_field("stride_divisor", &self.stride_divisor)?;
        st.serialize_field("shifts_per_scale", &ShiftMap(self))?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for AnchorSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSpec::deserialize(deserializer)?;
        AnchorSpec::try_from(raw).map_err(D::Error::custom)
    }
}

impl TryFrom<RawSpec> for AnchorSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let mut spec = AnchorSpec::new(raw.scales, raw.ratios, raw.base_stride, raw.stride_divisor)?;
        for (key, n) in raw.shifts_per_scale {
            let scale: f64 = key
                .trim()
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("shift key {key:?} is not a scale")))?;
            spec = spec.with_shift(scale, ShiftCount::from_count(n)?)?;
        }
        Ok(spec)
    }
}

/// Dense anchor identifier within one layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorId(pub usize);

impl fmt::Display for AnchorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One regular lattice of identical anchors: a `(scale, ratio, sub-lattice)` triple.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGroup {
    pub scale: f64,
    pub ratio: f64,
    pub sublattice: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    pub cols: usize,
    pub rows: usize,
    pub first_id: usize,
    pub anchor_w: f64,
    pub anchor_h: f64,
    stride: f64,
}

impl LatticeGroup {
    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stride(&self) -> f64 {
        self.stride
    }

    pub fn center_x(&self, col: usize) -> f64 {
        self.origin_x + col as f64 * self.stride
    }

    pub fn center_y(&self, row: usize) -> f64 {
        self.origin_y + row as f64 * self.stride
    }

    fn left(&self, col: usize) -> f64 {
        self.center_x(col) - 0.5 * self.anchor_w
    }

    fn top(&self, row: usize) -> f64 {
        self.center_y(row) - 0.5 * self.anchor_h
    }

    pub fn anchor_box(&self, row: usize, col: usize) -> RectBox {
        RectBox::from_parts(self.left(col), self.top(row), self.anchor_w, self.anchor_h)
    }

    fn id(&self, row: usize, col: usize) -> AnchorId {
        AnchorId(self.first_id + row * self.cols + col)
    }

    fn x_axis(&self) -> Axis {
        Axis {
            origin: self.origin_x,
            stride: self.stride,
            count: self.cols,
            width: self.anchor_w,
        }
    }

    fn y_axis(&self) -> Axis {
        Axis {
            origin: self.origin_y,
            stride: self.stride,
            count: self.rows,
            width: self.anchor_h,
        }
    }
}

/// One axis of a lattice group, for 1-D overlap scans.
struct Axis {
    origin: f64,
    stride: f64,
    count: usize,
    width: f64,
}

impl Axis {
    fn start(&self, i: usize) -> f64 {
        (self.origin + i as f64 * self.stride) - 0.5 * self.width
    }

    fn overlap(&self, i: usize, f0: f64, fw: f64) -> f64 {
        axis_overlap(self.start(i), self.width, f0, fw)
    }

    fn clamp_index(&self, v: f64) -> usize {
        let last = (self.count - 1) as f64;
        v.max(0.0).min(last) as usize
    }

    /// Index range whose centers fall in `[c_lo, c_hi]`, widened by one and clamped.
    fn window(&self, c_lo: f64, c_hi: f64) -> (usize, usize) {
        let lo = ((c_lo - self.origin) / self.stride).floor() - 1.0;
        let hi = ((c_hi - self.origin) / self.stride).ceil() + 1.0;
        (self.clamp_index(lo), self.clamp_index(hi))
    }

    /// Indices that can realize the maximal overlap with `[f0, f0 + fw]`.
    ///
    /// Overlap is unimodal in the index with a flat top when one interval
    /// nests in the other; the scan covers that top plus one index each side.
    /// Near-maximal values are kept, one (lowest) index per distinct value.
    fn near_max(&self, f0: f64, fw: f64, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let half = 0.5 * self.width;
        let (a, b) = (f0 + fw - half, f0 + half);
        let (lo, hi) = self.window(a.min(b), a.max(b));
        let mut best = 0.0f64;
        for i in lo..=hi {
            best = best.max(self.overlap(i, f0, fw));
        }
        if best <= 0.0 {
            return;
        }
        let floor = best * (1.0 - 1e-9);
        for i in lo..=hi {
            let v = self.overlap(i, f0, fw);
            if v >= floor && !out.iter().any(|&(_, u)| u == v) {
                out.push((i, v));
            }
        }
    }

    /// Indices with positive overlap with `[f0, f0 + fw]`.
    fn overlapping(&self, f0: f64, fw: f64, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let half = 0.5 * self.width;
        let (lo, hi) = self.window(f0 - half, f0 + fw + half);
        for i in lo..=hi {
            let v = self.overlap(i, f0, fw);
            if v > 0.0 {
                out.push((i, v));
            }
        }
    }
}

/// A single materialized anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub id: AnchorId,
    pub scale: f64,
    pub ratio: f64,
    pub sublattice: usize,
    pub cx: f64,
    pub cy: f64,
    pub bbox: RectBox,
}

/// Best IoU of a face over a layout. `anchor` is `None` when nothing overlaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxIou {
    pub iou: f64,
    pub anchor: Option<AnchorId>,
}

/// The anchor set `S x R x L` of a spec over a `W x H` plane.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorLayout {
    spec: AnchorSpec,
    plane_w: f64,
    plane_h: f64,
    groups: Vec<LatticeGroup>,
    anchor_count: usize,
}

impl AnchorLayout {
    /// Tiles the spec over the plane. IDs enumerate
    /// `(scale, ratio, sub-lattice, row, col)` in that order.
    pub fn build(spec: &AnchorSpec, plane_w: f64, plane_h: f64) -> Result<Self> {
        if !(plane_w.is_finite() && plane_h.is_finite() && plane_w > 0.0 && plane_h > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "plane must be positive, got {plane_w}x{plane_h}"
            )));
        }
        let stride = spec.sliding_stride();
        let cols = ((plane_w / stride).ceil() as usize).max(1);
        let rows = ((plane_h / stride).ceil() as usize).max(1);
        let half = 0.5 * stride;

        let mut groups = Vec::new();
        let mut next_id = 0;
        for (&scale, &shift) in spec.scales.iter().zip(&spec.shifts) {
            for &ratio in &spec.ratios {
                let (anchor_w, anchor_h) = AnchorSpec::anchor_size(scale, ratio);
                for (sublattice, &(ox, oy)) in shift.offsets().iter().enumerate() {
                    let group = LatticeGroup {
                        scale,
                        ratio,
                        sublattice,
                        origin_x: half + ox as f64 * half,
                        origin_y: half + oy as f64 * half,
                        cols,
                        rows,
                        first_id: next_id,
                        anchor_w,
                        anchor_h,
                        stride,
                    };
                    next_id += group.len();
                    groups.push(group);
                }
            }
        }
        Ok(Self {
            spec: spec.clone(),
            plane_w,
            plane_h,
            groups,
            anchor_count: next_id,
        })
    }

    pub fn spec(&self) -> &AnchorSpec {
        &self.spec
    }

    pub fn plane(&self) -> (f64, f64) {
        (self.plane_w, self.plane_h)
    }

    pub fn groups(&self) -> &[LatticeGroup] {
        &self.groups
    }

    pub fn anchor_count(&self) -> usize {
        self.anchor_count
    }

    /// Sliding stride; also the translation period of the whole layout.
    pub fn stride(&self) -> f64 {
        self.spec.sliding_stride()
    }

    pub fn effective_anchor_stride(&self, scale: f64) -> Result<f64> {
        self.spec.effective_anchor_stride(scale)
    }

    pub fn anchor(&self, id: AnchorId) -> Option<Anchor> {
        if id.0 >= self.anchor_count {
            return None;
        }
        let gi = self.groups.partition_point(|g| g.first_id <= id.0) - 1;
        let g = &self.groups[gi];
        let local = id.0 - g.first_id;
        let (row, col) = (local / g.cols, local % g.cols);
        Some(Anchor {
            id,
            scale: g.scale,
            ratio: g.ratio,
            sublattice: g.sublattice,
            cx: g.center_x(col),
            cy: g.center_y(row),
            bbox: g.anchor_box(row, col),
        })
    }

    /// Every anchor in ID order.
    pub fn anchors(&self) -> impl Iterator<Item = Anchor> + '_ {
        self.groups.iter().flat_map(|g| {
            (0..g.rows).flat_map(move |row| {
                (0..g.cols).map(move |col| Anchor {
                    id: g.id(row, col),
                    scale: g.scale,
                    ratio: g.ratio,
                    sublattice: g.sublattice,
                    cx: g.center_x(col),
                    cy: g.center_y(row),
                    bbox: g.anchor_box(row, col),
                })
            })
        })
    }

    fn groups_of_scale(&self, scale: f64) -> Result<impl Iterator<Item = &LatticeGroup>> {
        self.spec.shift_for(scale)?;
        Ok(self.groups.iter().filter(move |g| g.scale == scale))
    }

    /// Anchors of `scale` at the corners of the lattice cell enclosing
    /// `(px, py)`, for every ratio and sub-lattice; at most four per sub-lattice.
    pub fn nearest_centers(&self, px: f64, py: f64, scale: f64) -> Result<Vec<AnchorId>> {
        let mut ids = Vec::new();
        for g in self.groups_of_scale(scale)? {
            let cols = enclosing(px, g.origin_x, g.stride, g.cols);
            let rows = enclosing(py, g.origin_y, g.stride, g.rows);
            for &r in rows.iter().flatten() {
                for &c in cols.iter().flatten() {
                    ids.push(g.id(r, c));
                }
            }
        }
        ids.sort_unstable();
        ids.dedup();
        Ok(ids)
    }

    /// Largest distance from an interior point to the nearest center of `scale`.
    pub fn covering_radius(&self, scale: f64) -> Result<f64> {
        Ok(self.effective_anchor_stride(scale)? * std::f64::consts::FRAC_1_SQRT_2)
    }

    /// Max IoU of `face` over all anchors, ties resolved to the lowest ID.
    ///
    /// Equal to an exhaustive scan; only anchors that can attain each
    /// group's per-axis maximal overlap are evaluated.
    pub fn max_iou(&self, face: &RectBox) -> MaxIou {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let face_area = face.area();
        let mut best = MaxIou {
            iou: 0.0,
            anchor: None,
        };
        for g in &self.groups {
            g.x_axis().near_max(face.x(), face.w(), &mut xs);
            if xs.is_empty() {
                continue;
            }
            g.y_axis().near_max(face.y(), face.h(), &mut ys);
            let anchor_area = g.anchor_w * g.anchor_h;
            for &(row, oy) in &ys {
                for &(col, ox) in &xs {
                    let v = iou_from_parts(ox * oy, face_area, anchor_area);
                    let id = g.id(row, col);
                    let better = v > best.iou
                        || (v == best.iou && v > 0.0 && best.anchor.is_some_and(|b| id < b));
                    if better {
                        best = MaxIou {
                            iou: v,
                            anchor: Some(id),
                        };
                    }
                }
            }
        }
        best
    }

    /// All anchors with `IoU >= min_iou` and `IoU > 0` against `face`, in ID order.
    pub fn overlapping(&self, face: &RectBox, min_iou: f64) -> Vec<(AnchorId, f64)> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut out = Vec::new();
        let face_area = face.area();
        for g in &self.groups {
            let anchor_area = g.anchor_w * g.anchor_h;
            // IoU never exceeds the smaller/larger area ratio
            let bound = face_area.min(anchor_area) / face_area.max(anchor_area);
            if min_iou > 0.0 && bound < min_iou * (1.0 - 1e-9) {
                continue;
            }
            g.x_axis().overlapping(face.x(), face.w(), &mut xs);
            if xs.is_empty() {
                continue;
            }
            g.y_axis().overlapping(face.y(), face.h(), &mut ys);
            for &(row, oy) in &ys {
                for &(col, ox) in &xs {
                    let v = iou_from_parts(ox * oy, face_area, anchor_area);
                    if v > 0.0 && v >= min_iou {
                        out.push((g.id(row, col), v));
                    }
                }
            }
        }
        out
    }
}

fn enclosing(p: f64, origin: f64, stride: f64, count: usize) -> [Option<usize>; 2] {
    let last = (count - 1) as f64;
    let i0 = ((p - origin) / stride).floor();
    let a = i0.max(0.0).min(last) as usize;
    let b = (i0 + 1.0).max(0.0).min(last) as usize;
    [Some(a), (b != a).then_some(b)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::iou;
    use proptest::prelude::*;

    fn brute_max(layout: &AnchorLayout, face: &RectBox) -> MaxIou {
        let mut best = MaxIou {
            iou: 0.0,
            anchor: None,
        };
        for a in layout.anchors() {
            let v = iou(face, &a.bbox);
            if v > best.iou {
                best = MaxIou {
                    iou: v,
                    anchor: Some(a.id),
                };
            }
        }
        best
    }

    fn spec16() -> AnchorSpec {
        AnchorSpec::single_scale(16.0, 16.0).unwrap()
    }

    #[test]
    fn plain_lattice_on_64_plane() {
        let layout = AnchorLayout::build(&spec16(), 64.0, 64.0).unwrap();
        assert_eq!(layout.anchor_count(), 16);
        let mut xs: Vec<f64> = layout.anchors().map(|a| a.cx).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        assert_eq!(xs, vec![8.0, 24.0, 40.0, 56.0]);
        let first = layout.anchor(AnchorId(0)).unwrap();
        assert_eq!((first.cx, first.cy), (8.0, 8.0));
        assert_eq!(first.bbox, RectBox::new(0.0, 0.0, 16.0, 16.0).unwrap());
    }

    #[test]
    fn three_shifts_quadruple_the_scale() {
        let spec = spec16().with_shift(16.0, ShiftCount::Three).unwrap();
        let layout = AnchorLayout::build(&spec, 64.0, 64.0).unwrap();
        assert_eq!(layout.anchor_count(), 64);
        assert_eq!(layout.groups().len(), 4);
        let origins: Vec<_> = layout.groups().iter().map(|g| (g.origin_x, g.origin_y)).collect();
        assert_eq!(origins, vec![(8.0, 8.0), (16.0, 16.0), (16.0, 8.0), (8.0, 16.0)]);
    }

    #[test]
    fn divisor_two_halves_stride() {
        let spec = AnchorSpec::new(vec![16.0, 32.0], vec![1.0], 16.0, 2).unwrap();
        let layout = AnchorLayout::build(&spec, 64.0, 64.0).unwrap();
        assert_eq!(layout.stride(), 8.0);
        assert_eq!(layout.groups()[0].len(), 64);
        assert_eq!(layout.anchor_count(), 128);
    }

    #[test]
    fn effective_strides() {
        let s = spec16();
        assert_eq!(s.effective_anchor_stride(16.0).unwrap(), 16.0);
        let one = s.clone().with_shift(16.0, ShiftCount::One).unwrap();
        assert!((one.effective_anchor_stride(16.0).unwrap() - 16.0 / 2f64.sqrt()).abs() < 1e-12);
        let three = s.with_divisor(2).unwrap().with_shift(16.0, ShiftCount::Three).unwrap();
        assert_eq!(three.effective_anchor_stride(16.0).unwrap(), 4.0);
        assert!(matches!(three.effective_anchor_stride(32.0), Err(Error::UnknownScale(_))));
    }

    #[test]
    fn covering_radii() {
        let base = spec16();
        let r = |spec: &AnchorSpec| {
            AnchorLayout::build(spec, 128.0, 128.0)
                .unwrap()
                .covering_radius(16.0)
                .unwrap()
        };
        assert!((r(&base) - 8.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((r(&base.clone().with_shift(16.0, ShiftCount::One).unwrap()) - 8.0).abs() < 1e-12);
        assert!(
            (r(&base.with_shift(16.0, ShiftCount::Three).unwrap()) - 4.0 * 2f64.sqrt()).abs() < 1e-12
        );
    }

    #[test]
    fn rejects_bad_specs_and_planes() {
        assert!(AnchorSpec::new(vec![32.0, 16.0], vec![1.0], 16.0, 1).is_err());
        assert!(AnchorSpec::new(vec![16.0, 16.0], vec![1.0], 16.0, 1).is_err());
        assert!(AnchorSpec::new(vec![16.0], vec![1.0], 16.0, 3).is_err());
        assert!(AnchorSpec::new(vec![16.0], vec![], 16.0, 1).is_err());
        assert!(spec16().with_shift(32.0, ShiftCount::One).is_err());
        assert!(ShiftCount::from_count(2).is_err());
        assert!(AnchorLayout::build(&spec16(), 0.0, 64.0).is_err());
        assert!(AnchorLayout::build(&spec16(), 64.0, -1.0).is_err());
    }

    #[test]
    fn ratio_preserves_area() {
        let (w, h) = AnchorSpec::anchor_size(32.0, 2.0);
        assert!((w * h - 1024.0).abs() < 1e-9);
        assert!((h / w - 2.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_at_center_includes_anchor() {
        let layout = AnchorLayout::build(&spec16(), 64.0, 64.0).unwrap();
        let ids = layout.nearest_centers(24.0, 40.0, 16.0).unwrap();
        let hit = ids.iter().map(|&id| layout.anchor(id).unwrap()).find(|a| a.cx == 24.0 && a.cy == 40.0);
        assert!(hit.is_some());
    }

    #[test]
    fn nearest_at_cell_middle_gives_four_equidistant() {
        let layout = AnchorLayout::build(&spec16(), 64.0, 64.0).unwrap();
        let ids = layout.nearest_centers(16.0, 16.0, 16.0).unwrap();
        assert_eq!(ids.len(), 4);
        for id in ids {
            let a = layout.anchor(id).unwrap();
            let d = ((a.cx - 16.0).powi(2) + (a.cy - 16.0).powi(2)).sqrt();
            assert!((d - 8.0 * 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn nested_plateau_ties_resolve_to_lowest_id() {
        // a 16px face inside many 128px anchors at stride 8
        let spec = AnchorSpec::new(vec![128.0], vec![1.0], 16.0, 2).unwrap();
        let layout = AnchorLayout::build(&spec, 256.0, 256.0).unwrap();
        let face = RectBox::new(100.0, 100.0, 16.0, 16.0).unwrap();
        assert_eq!(layout.max_iou(&face), brute_max(&layout, &face));
        assert_eq!(layout.max_iou(&face).iou, 256.0 / 16384.0);
    }

    #[test]
    fn face_outside_plane_uses_edge_anchor() {
        let layout = AnchorLayout::build(&spec16(), 64.0, 64.0).unwrap();
        let face = RectBox::new(60.0, -6.0, 16.0, 16.0).unwrap();
        assert_eq!(layout.max_iou(&face), brute_max(&layout, &face));
        let far = RectBox::new(500.0, 500.0, 4.0, 4.0).unwrap();
        assert_eq!(layout.max_iou(&far), MaxIou { iou: 0.0, anchor: None });
    }

    #[test]
    fn spec_json_roundtrip_and_ordering() {
        let spec = AnchorSpec::wider_face_baseline()
            .with_divisor(2)
            .unwrap()
            .with_shift(16.0, ShiftCount::Three)
            .unwrap()
            .with_shift(32.0, ShiftCount::One)
            .unwrap();
        let json = spec.to_json();
        assert_eq!(
            json,
            r#"{"scales":[16.0,32.0,64.0,128.0,256.0,512.0],"ratios":[1.0],"base_stride":16.0,"stride_divisor":2,"shifts_per_scale":{"16":3,"32":1}}"#
        );
        let back: AnchorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert_eq!(spec.anchors_per_location(), 10);
    }

    fn arb_spec() -> impl Strategy<Value = AnchorSpec> {
        let scales = prop::sample::subsequence(vec![4.0, 8.0, 12.0, 16.0, 24.0, 32.0, 48.0, 64.0], 1..4);
        let ratios = prop::sample::subsequence(vec![0.5, 1.0, 1.5, 2.0], 1..3);
        (scales, ratios, prop::sample::select(vec![4.0, 6.0, 8.0, 12.0, 16.0]),
         prop::sample::select(vec![1u32, 2, 4]), prop::collection::vec(0usize..3, 8))
            .prop_map(|(scales, ratios, stride, div, shifts)| {
                let mut spec = AnchorSpec::new(scales.clone(), ratios, stride, div).unwrap();
                for (s, n) in scales.iter().zip(shifts) {
                    spec = spec.with_shift(*s, ShiftCount::ALL[n]).unwrap();
                }
                spec
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn max_iou_matches_exhaustive(spec in arb_spec(), w in 16.0..256.0f64, h in 16.0..256.0f64,
                                      fx in -20.0..260.0f64, fy in -20.0..260.0f64,
                                      fw in 1.0..90.0f64, fh in 1.0..90.0f64) {
            let layout = AnchorLayout::build(&spec, w, h).unwrap();
            let face = RectBox::new(fx, fy, fw, fh).unwrap();
            prop_assert_eq!(layout.max_iou(&face), brute_max(&layout, &face));
        }

        #[test]
        fn integer_faces_match_exhaustive(spec in arb_spec(), fx in -8i32..130, fy in -8i32..130,
                                          fw in 1i32..80, fh in 1i32..80) {
            // integer coordinates hit the exact plateau and tie cases
            let layout = AnchorLayout::build(&spec, 128.0, 128.0).unwrap();
            let face = RectBox::new(fx as f64, fy as f64, fw as f64, fh as f64).unwrap();
            prop_assert_eq!(layout.max_iou(&face), brute_max(&layout, &face));
        }

        #[test]
        fn overlapping_matches_exhaustive(spec in arb_spec(), fx in -20.0..140.0f64, fy in -20.0..140.0f64,
                                          fw in 1.0..90.0f64, fh in 1.0..90.0f64, t in 0.0..0.8f64) {
            let layout = AnchorLayout::build(&spec, 128.0, 128.0).unwrap();
            let face = RectBox::new(fx, fy, fw, fh).unwrap();
            let expected: Vec<_> = layout.anchors()
                .map(|a| (a.id, iou(&face, &a.bbox)))
                .filter(|&(_, v)| v > 0.0 && v >= t)
                .collect();
            prop_assert_eq!(layout.overlapping(&face, t), expected);
        }

        #[test]
        fn nearest_centers_contains_same_scale_argmax(spec in arb_spec(), px in 0.0..128.0f64, py in 0.0..128.0f64) {
            let layout = AnchorLayout::build(&spec, 128.0, 128.0).unwrap();
            let scale = spec.scales()[0];
            let face = RectBox::centered(px, py, scale, scale).unwrap();
            let cands = layout.nearest_centers(px, py, scale).unwrap();
            let per_sub = 4 * spec.ratios().len();
            prop_assert!(cands.len() <= per_sub * (1 + spec.shift_for(scale).unwrap().count()));
            let best_cand = cands.iter()
                .map(|&id| iou(&face, &layout.anchor(id).unwrap().bbox))
                .fold(0.0, f64::max);
            let best_all = layout.anchors().filter(|a| a.scale == scale)
                .map(|a| iou(&face, &a.bbox))
                .fold(0.0, f64::max);
            prop_assert_eq!(best_cand, best_all);
        }

        #[test]
        fn ids_deterministic_and_lattice_regular(spec in arb_spec(), w in 8.0..200.0f64, h in 8.0..200.0f64) {
            let a = AnchorLayout::build(&spec, w, h).unwrap();
            let b = AnchorLayout::build(&spec, w, h).unwrap();
            prop_assert!(a.anchors().eq(b.anchors()));
            let mut n = 0;
            for (i, anchor) in a.anchors().enumerate() {
                prop_assert_eq!(anchor.id, AnchorId(i));
                prop_assert_eq!(a.anchor(anchor.id), Some(anchor));
                n += 1;
            }
            prop_assert_eq!(n, a.anchor_count());
            for g in a.groups() {
                for c in 1..g.cols {
                    prop_assert!((g.center_x(c) - g.center_x(c - 1) - g.stride()).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn shifts_never_increase_effective_stride(spec in arb_spec()) {
            for &s in spec.scales() {
                let base = spec.clone().with_shift(s, ShiftCount::None).unwrap();
                let e0 = base.effective_anchor_stride(s).unwrap();
                let e1 = base.clone().with_shift(s, ShiftCount::One).unwrap().effective_anchor_stride(s).unwrap();
                let e3 = base.with_shift(s, ShiftCount::Three).unwrap().effective_anchor_stride(s).unwrap();
                prop_assert!(e1 <= e0 && e3 <= e1);
                prop_assert_eq!(e3, e0 / 2.0);
            }
        }
    }
}
