//! Anchor-to-face assignment.
//!
//! An anchor is positive when it is some face's max-IoU anchor or when its
//! IoU with any face reaches `t_high`; negative when its IoU with every face
//! is below `t_low`; ignored otherwise. Two additions target tiny faces:
//! face shift jittering translates all faces of an image by one random
//! integer offset, and hard face compensation assigns each face whose best
//! IoU stays below `t_high` to its top-N overlapping anchors.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::anchor_layout::{AnchorId, AnchorLayout};
use crate::error::{Error, Result};
use crate::geometry::RectBox;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchConfig {
    pub t_high: f64,
    /// Background threshold. Not fixed by the method; 0.3 is the usual
    /// region-proposal default.
    pub t_low: f64,
    /// Hard face compensation count, 0 disables it.
    pub hc_n: usize,
    pub jitter: bool,
    pub jitter_seed: u64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            t_high: 0.5,
            t_low: 0.3,
            hc_n: 5,
            jitter: false,
            jitter_seed: 0,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t_low > 0.0 && self.t_low <= self.t_high && self.t_high < 1.0;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "thresholds must satisfy 0 < t_low <= t_high < 1, got t_low={} t_high={}",
                self.t_low, self.t_high
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "label", rename_all = "snake_case")]
pub enum AnchorLabel {
    Negative,
    Ignore,
    /// Assigned to `face` with overlap `iou`.
    Positive { face: usize, iou: f64 },
}

impl AnchorLabel {
    pub fn is_positive(&self) -> bool {
        matches!(self, AnchorLabel::Positive { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            AnchorLabel::Negative => "negative",
            AnchorLabel::Ignore => "ignore",
            AnchorLabel::Positive { .. } => "positive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceMatch {
    pub max_iou: f64,
    /// `None` only when the face overlaps no anchor at all.
    pub argmax: Option<AnchorId>,
    /// Sorted anchor IDs this face is trained against.
    pub assigned: Vec<AnchorId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub faces: Vec<FaceMatch>,
    pub labels: Vec<AnchorLabel>,
    /// Offset applied to the faces before matching.
    pub jitter: (i64, i64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts {
    pub positive: usize,
    pub ignore: usize,
    pub negative: usize,
}

impl MatchResult {
    pub fn counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for l in &self.labels {
            match l {
                AnchorLabel::Negative => c.negative += 1,
                AnchorLabel::Ignore => c.ignore += 1,
                AnchorLabel::Positive { .. } => c.positive += 1,
            }
        }
        c
    }

    pub fn is_hard(&self, face: usize, cfg: &MatchConfig) -> bool {
        self.faces[face].max_iou < cfg.t_high
    }
}

/// Keeps the (highest IoU, lowest face index) claim per anchor.
fn claim(slot: &mut Option<(f64, usize)>, iou: f64, face: usize) {
    let better = match *slot {
        None => true,
        Some((v, f)) => iou > v || (iou == v && face < f),
    };
    if better {
        *slot = Some((iou, face));
    }
}

/// Labels every anchor of `layout` against `faces`.
pub fn match_faces(faces: &[RectBox], layout: &AnchorLayout, cfg: &MatchConfig) -> Result<MatchResult> {
    cfg.validate()?;
    if layout.anchor_count() == 0 {
        return Err(Error::EmptyLayout);
    }
    let scans: Vec<_> = faces
        .par_iter()
        .map(|f| (layout.max_iou(f), layout.overlapping(f, cfg.t_low)))
        .collect();

    let n = layout.anchor_count();
    let mut ignore = vec![false; n];
    let mut positive: Vec<Option<(f64, usize)>> = vec![None; n];
    let mut face_matches = Vec::with_capacity(faces.len());
    for (fi, (best, over_low)) in scans.iter().enumerate() {
        let mut assigned = Vec::new();
        for &(id, v) in over_low {
            if v >= cfg.t_high {
                claim(&mut positive[id.0], v, fi);
                assigned.push(id);
            } else {
                ignore[id.0] = true;
            }
        }
        if let Some(id) = best.anchor {
            claim(&mut positive[id.0], best.iou, fi);
            if !assigned.contains(&id) {
                assigned.push(id);
            }
        }
        assigned.sort_unstable();
        face_matches.push(FaceMatch {
            max_iou: best.iou,
            argmax: best.anchor,
            assigned,
        });
    }
    let labels = positive
        .into_iter()
        .zip(ignore)
        .map(|(p, ign)| match p {
            Some((iou, face)) => AnchorLabel::Positive { face, iou },
            None if ign => AnchorLabel::Ignore,
            None => AnchorLabel::Negative,
        })
        .collect();
    Ok(MatchResult {
        faces: face_matches,
        labels,
        jitter: (0, 0),
    })
}

/// Top `n` anchors by IoU with `face` (ties to the lower ID), IoU > 0 only.
pub fn top_anchors(layout: &AnchorLayout, face: &RectBox, n: usize) -> Vec<(AnchorId, f64)> {
    let mut all = layout.overlapping(face, 0.0);
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(n);
    all
}

/// Assigns every hard face (max IoU below `t_high`) to its top `hc_n` anchors.
///
/// Existing positives keep their source face; only negative or ignored
/// anchors are relabeled. Non-hard faces are untouched.
pub fn compensate_hard_faces(
    result: &MatchResult,
    faces: &[RectBox],
    layout: &AnchorLayout,
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    cfg.validate()?;
    if cfg.hc_n == 0 {
        return Err(Error::InvalidParameter("hard face compensation needs hc_n >= 1".into()));
    }
    if faces.len() != result.faces.len() || layout.anchor_count() != result.labels.len() {
        return Err(Error::InvalidParameter(
            "match result does not belong to these faces and layout".into(),
        ));
    }
    let tops: Vec<Option<Vec<(AnchorId, f64)>>> = faces
        .par_iter()
        .enumerate()
        .map(|(fi, f)| result.is_hard(fi, cfg).then(|| top_anchors(layout, f, cfg.hc_n)))
        .collect();

    let mut out = result.clone();
    let mut claims: Vec<Option<(f64, usize)>> = vec![None; out.labels.len()];
    for (fi, top) in tops.iter().enumerate() {
        let Some(top) = top else { continue };
        let assigned = &mut out.faces[fi].assigned;
        for &(id, v) in top {
            if !assigned.contains(&id) {
                assigned.push(id);
            }
            if !out.labels[id.0].is_positive() {
                claim(&mut claims[id.0], v, fi);
            }
        }
        assigned.sort_unstable();
    }
    for (label, c) in out.labels.iter_mut().zip(claims) {
        if let Some((iou, face)) = c {
            *label = AnchorLabel::Positive { face, iou };
        }
    }
    Ok(out)
}

/// Offsets `{0, 1, ..., floor(s_A/2) - 1}` a jitter can draw per axis.
pub fn jitter_support(anchor_stride: f64) -> Result<Vec<i64>> {
    if !(anchor_stride.is_finite() && anchor_stride >= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "jitter needs an anchor stride >= 2, got {anchor_stride}"
        )));
    }
    let k = ((anchor_stride / 2.0).floor() as i64).max(1);
    Ok((0..k).collect())
}

/// Translates all faces by one offset drawn uniformly from [`jitter_support`] per axis.
pub fn apply_jitter(faces: &[RectBox], anchor_stride: f64, seed: u64) -> Result<(Vec<RectBox>, (i64, i64))> {
    let k = jitter_support(anchor_stride)?.len() as i64;
    let mut rng = rng::stream(seed, 0);
    let dx = rng.random_range(0..k);
    let dy = rng.random_range(0..k);
    Ok((translate_all(faces, dx, dy), (dx, dy)))
}

pub fn translate_all(faces: &[RectBox], dx: i64, dy: i64) -> Vec<RectBox> {
    faces.iter().map(|f| f.translate(dx as f64, dy as f64)).collect()
}

/// Full training-time assignment: optional jitter, matching, then
/// compensation when `hc_n > 0`.
pub fn assign(faces: &[RectBox], layout: &AnchorLayout, cfg: &MatchConfig) -> Result<MatchResult> {
    let (faces, offset) = if cfg.jitter {
        apply_jitter(faces, layout.spec().min_effective_stride(), cfg.jitter_seed)?
    } else {
        (faces.to_vec(), (0, 0))
    };
    let mut result = match_faces(&faces, layout, cfg)?;
    if cfg.hc_n > 0 {
        result = compensate_hard_faces(&result, &faces, layout, cfg)?;
    }
    result.jitter = offset;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor_layout::AnchorSpec;
    use crate::geometry::iou;

    fn layout16(plane: f64) -> AnchorLayout {
        AnchorLayout::build(&AnchorSpec::single_scale(16.0, 16.0).unwrap(), plane, plane).unwrap()
    }

    fn rb(x: f64, y: f64, w: f64, h: f64) -> RectBox {
        RectBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn face_equal_to_anchor_is_positive() {
        let layout = layout16(64.0);
        let r = match_faces(&[rb(16.0, 32.0, 16.0, 16.0)], &layout, &MatchConfig::default()).unwrap();
        let id = r.faces[0].argmax.unwrap();
        assert_eq!(r.faces[0].max_iou, 1.0);
        assert_eq!(r.labels[id.0], AnchorLabel::Positive { face: 0, iou: 1.0 });
        assert_eq!(r.counts().positive, 1);
    }

    #[test]
    fn corner_face_is_hard_but_keeps_argmax() {
        let layout = layout16(64.0);
        // centered on (16,16), the corner shared by four stride-16 cells
        let face = rb(8.0, 8.0, 16.0, 16.0);
        let r = match_faces(&[face], &layout, &MatchConfig::default()).unwrap();
        assert!((r.faces[0].max_iou - 1.0 / 7.0).abs() < 1e-15);
        assert!(r.is_hard(0, &MatchConfig::default()));
        let id = r.faces[0].argmax.unwrap();
        assert_eq!(id, AnchorId(0));
        assert!(r.labels[id.0].is_positive());
        assert_eq!(r.faces[0].assigned, vec![id]);
    }

    #[test]
    fn distant_anchor_is_negative() {
        let layout = layout16(320.0);
        let r = match_faces(&[rb(0.0, 0.0, 16.0, 16.0)], &layout, &MatchConfig::default()).unwrap();
        let far = layout.anchors().find(|a| a.cx >= 168.0 && a.cy >= 168.0).unwrap();
        assert_eq!(r.labels[far.id.0], AnchorLabel::Negative);
    }

    #[test]
    fn no_faces_all_negative() {
        let layout = layout16(64.0);
        let r = match_faces(&[], &layout, &MatchConfig::default()).unwrap();
        assert_eq!(r.counts().negative, 16);
    }

    #[test]
    fn rejects_inverted_thresholds() {
        let cfg = MatchConfig {
            t_low: 0.6,
            t_high: 0.5,
            ..MatchConfig::default()
        };
        assert!(match_faces(&[], &layout16(64.0), &cfg).is_err());
    }

    #[test]
    fn compensation_leaves_easy_faces() {
        let layout = layout16(64.0);
        let faces = [rb(2.0, 2.0, 16.0, 16.0)];
        let cfg = MatchConfig::default();
        let r = match_faces(&faces, &layout, &cfg).unwrap();
        assert!(r.faces[0].max_iou >= 0.5);
        let c = compensate_hard_faces(&r, &faces, &layout, &cfg).unwrap();
        assert_eq!(c, r);
    }

    #[test]
    fn compensation_takes_top_five() {
        let layout = layout16(128.0);
        let faces = [rb(40.0, 40.0, 16.0, 16.0)];
        let cfg = MatchConfig::default();
        let r = match_faces(&faces, &layout, &cfg).unwrap();
        let c = compensate_hard_faces(&r, &faces, &layout, &cfg).unwrap();
        let mut oracle: Vec<(AnchorId, f64)> = layout
            .anchors()
            .map(|a| (a.id, iou(&faces[0], &a.bbox)))
            .filter(|p| p.1 > 0.0)
            .collect();
        assert_eq!(oracle.len(), 4);
        oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let expected: Vec<AnchorId> = oracle.iter().map(|p| p.0).collect();
        let mut expected_sorted = expected.clone();
        expected_sorted.sort();
        assert_eq!(c.faces[0].assigned, expected_sorted);
    }

    #[test]
    fn compensation_limited_by_overlapping_anchors() {
        // a 4px face inside one cell touches only the anchors whose boxes reach it
        let layout = layout16(128.0);
        let faces = [rb(14.0, 36.0, 4.0, 4.0)];
        let cfg = MatchConfig::default();
        let r = match_faces(&faces, &layout, &cfg).unwrap();
        let c = compensate_hard_faces(&r, &faces, &layout, &cfg).unwrap();
        let overlapping = layout.anchors().filter(|a| iou(&faces[0], &a.bbox) > 0.0).count();
        assert_eq!(overlapping, 2);
        assert_eq!(c.faces[0].assigned.len(), 2);
        assert_eq!(c.counts().positive, 2);
    }

    #[test]
    fn jitter_support_and_translation() {
        assert_eq!(jitter_support(8.0).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(jitter_support(2.0).unwrap(), vec![0]);
        assert!(jitter_support(1.0).is_err());
        let (shifted, off) = apply_jitter(&[rb(0.0, 0.0, 16.0, 16.0)], 2.0, 99).unwrap();
        assert_eq!(off, (0, 0));
        assert_eq!(shifted[0], rb(0.0, 0.0, 16.0, 16.0));
        assert_eq!(translate_all(&[rb(0.0, 0.0, 16.0, 16.0)], 3, 1), vec![rb(3.0, 1.0, 16.0, 16.0)]);
    }

    #[test]
    fn assign_records_offset() {
        let layout = AnchorLayout::build(&AnchorSpec::single_scale(16.0, 8.0).unwrap(), 64.0, 64.0).unwrap();
        let cfg = MatchConfig {
            jitter: true,
            jitter_seed: 5,
            ..MatchConfig::default()
        };
        let faces = [rb(10.0, 10.0, 16.0, 16.0)];
        let r = assign(&faces, &layout, &cfg).unwrap();
        let (_, off) = apply_jitter(&faces, 8.0, 5).unwrap();
        assert_eq!(r.jitter, off);
    }
}
