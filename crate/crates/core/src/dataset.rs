//! Face annotation ingestion and overlap statistics.
//!
//! Annotation listings follow the Wider Face layout: an image path line, a
//! face count line, then that many lines starting with `x y w h` (further
//! columns are ignored). Faces are bucketed by scale `sqrt(w*h)`; per bucket
//! the report gives the mean max IoU against a layout and the fraction of
//! faces whose max IoU reaches `tau`.

use rayon::prelude::*;
use serde::Serialize;

use crate::anchor_layout::{AnchorLayout, AnchorSpec};
use crate::error::{Error, Result};
use crate::geometry::{iou, RectBox};
use crate::matching::{apply_jitter, translate_all, MatchConfig};
use crate::rng;
use crate::stats::pairwise_mean;

pub const DEFAULT_BUCKET_EDGES: [f64; 7] = [8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0];
pub const DEFAULT_TAU: f64 = 0.5;

/// Every `AUDIT_EVERY`-th face is re-checked against an exhaustive scan.
pub const AUDIT_EVERY: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceRecord {
    pub image_id: String,
    pub bbox: RectBox,
    /// Image extent when known, 0 otherwise.
    pub image_w: f64,
    pub image_h: f64,
}

impl FaceRecord {
    pub fn new(image_id: impl Into<String>, bbox: RectBox) -> Result<Self> {
        let image_id = image_id.into();
        if image_id.is_empty() {
            return Err(Error::InvalidParameter("image id must not be empty".into()));
        }
        Ok(Self {
            image_id,
            bbox,
            image_w: 0.0,
            image_h: 0.0,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Annotations {
    pub records: Vec<FaceRecord>,
    /// 1-based line numbers of dropped degenerate boxes.
    pub skipped_lines: Vec<usize>,
    /// Face lines read, kept and skipped together.
    pub face_lines: usize,
}

impl Annotations {
    pub fn skipped(&self) -> usize {
        self.skipped_lines.len()
    }
}

fn parse_box_line(line: &str, lineno: usize) -> Result<[f64; 4]> {
    let mut vals = [0.0; 4];
    let mut tokens = line.split_whitespace();
    for v in vals.iter_mut() {
        let tok = tokens.next().ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!("expected `x y w h`, got {line:?}"),
        })?;
        *v = tok.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!("not a number: {tok:?}"),
        })?;
    }
    Ok(vals)
}

fn all_numeric(line: &str) -> bool {
    let mut any = false;
    for tok in line.split_whitespace() {
        if tok.parse::<f64>().is_err() {
            return false;
        }
        any = true;
    }
    any
}

/// Parses an annotation listing (LF or CRLF).
pub fn parse_annotations(text: &str) -> Result<Annotations> {
    let mut lines = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .peekable();
    let last_line = text.split('\n').count();
    let mut out = Annotations::default();

    while let Some((path_no, path)) = lines.next() {
        let image_id = path.trim();
        if image_id.is_empty() {
            continue;
        }
        let (count_no, count_line) = lines.next().ok_or(Error::Parse {
            line: path_no + 1,
            message: format!("missing face count for {image_id}"),
        })?;
        let count: usize = count_line.trim().parse().map_err(|_| Error::Parse {
            line: count_no,
            message: format!("malformed face count {:?}", count_line.trim()),
        })?;
        if count == 0 {
            // Wider Face lists a placeholder row after a zero count
            if lines.peek().is_some_and(|(_, l)| all_numeric(l)) {
                lines.next();
            }
            continue;
        }
        for k in 0..count {
            let (no, line) = lines.next().ok_or(Error::Parse {
                line: last_line + 1,
                message: format!("truncated group for {image_id}: expected {count} faces, found {k}"),
            })?;
            let starts_numeric = line
                .split_whitespace()
                .next()
                .is_some_and(|t| t.parse::<f64>().is_ok());
            if !starts_numeric {
                return Err(Error::Parse {
                    line: no,
                    message: format!("truncated group for {image_id}: expected {count} faces, found {k}"),
                });
            }
            let [x, y, w, h] = parse_box_line(line, no)?;
            out.face_lines += 1;
            if w <= 0.0 || h <= 0.0 {
                out.skipped_lines.push(no);
                continue;
            }
            out.records.push(FaceRecord::new(image_id, RectBox::new(x, y, w, h)?)?);
        }
    }
    Ok(out)
}

/// Extent of a plane covering every face and every known image size.
pub fn plane_for(faces: &[FaceRecord]) -> (f64, f64) {
    faces.iter().fold((1.0f64, 1.0f64), |(w, h), f| {
        (
            w.max(f.image_w).max(f.bbox.right().ceil()),
            h.max(f.image_h).max(f.bbox.bottom().ceil()),
        )
    })
}

fn validate_edges(edges: &[f64]) -> Result<()> {
    if edges.iter().any(|e| !(e.is_finite() && *e > 0.0)) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!(
            "bucket edges must be positive and strictly increasing: {edges:?}"
        )));
    }
    Ok(())
}

fn validate_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must be in [0, 1], got {tau}")));
    }
    Ok(())
}

fn exhaustive_max_iou(layout: &AnchorLayout, face: &RectBox) -> f64 {
    layout.anchors().map(|a| iou(face, &a.bbox)).fold(0.0, f64::max)
}

/// Max IoU of each face over `layout`, in input order.
///
/// Every [`AUDIT_EVERY`]-th face is also scanned exhaustively and a mismatch
/// is reported as an error.
pub fn max_ious(faces: &[RectBox], layout: &AnchorLayout) -> Result<Vec<f64>> {
    faces
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let fast = layout.max_iou(f).iou;
            if i % AUDIT_EVERY == 0 {
                let exhaustive = exhaustive_max_iou(layout, f);
                if fast != exhaustive {
                    return Err(Error::AuditMismatch {
                        face: i,
                        fast,
                        exhaustive,
                    });
                }
            }
            Ok(fast)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketRow {
    pub bucket_lo: f64,
    /// `None` for the open top bucket.
    pub bucket_hi: Option<f64>,
    pub count: usize,
    pub mean_max_iou: Option<f64>,
    pub recall_at_tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleBucketReport {
    pub edges: Vec<f64>,
    pub tau: f64,
    pub buckets: Vec<BucketRow>,
}

impl ScaleBucketReport {
    pub fn total(&self) -> usize {
        self.buckets.iter().map(|b| b.count).sum()
    }

    /// Bucket containing `scale`.
    pub fn bucket_of(&self, scale: f64) -> &BucketRow {
        &self.buckets[bucket_index(&self.edges, scale)]
    }
}

fn bucket_index(edges: &[f64], scale: f64) -> usize {
    edges.partition_point(|&e| e <= scale)
}

/// Aggregates per-face max IoUs into scale buckets.
pub fn summarize(scales: &[f64], ious: &[f64], edges: &[f64], tau: f64) -> ScaleBucketReport {
    let mut per_bucket: Vec<Vec<f64>> = vec![Vec::new(); edges.len() + 1];
    for (&s, &v) in scales.iter().zip(ious) {
        per_bucket[bucket_index(edges, s)].push(v);
    }
    let buckets = per_bucket
        .iter()
        .enumerate()
        .map(|(b, vals)| {
            let hits: Vec<f64> = vals.iter().map(|&v| if v >= tau { 1.0 } else { 0.0 }).collect();
            BucketRow {
                bucket_lo: if b == 0 { 0.0 } else { edges[b - 1] },
                bucket_hi: edges.get(b).copied(),
                count: vals.len(),
                mean_max_iou: pairwise_mean(vals),
                recall_at_tau: pairwise_mean(&hits),
            }
        })
        .collect();
    ScaleBucketReport {
        edges: edges.to_vec(),
        tau,
        buckets,
    }
}

fn boxes(faces: &[FaceRecord]) -> Vec<RectBox> {
    faces.iter().map(|f| f.bbox).collect()
}

fn check_faces(faces: &[FaceRecord]) -> Result<()> {
    if faces.is_empty() {
        return Err(Error::InvalidParameter("no faces to analyze".into()));
    }
    Ok(())
}

/// Per-scale-bucket mean max IoU and recall@tau of `faces` against `layout`.
pub fn bucket_stats(faces: &[FaceRecord], layout: &AnchorLayout, edges: &[f64], tau: f64) -> Result<ScaleBucketReport> {
    validate_edges(edges)?;
    validate_tau(tau)?;
    check_faces(faces)?;
    bucket_stats_boxes(&boxes(faces), layout, edges, tau)
}

fn bucket_stats_boxes(faces: &[RectBox], layout: &AnchorLayout, edges: &[f64], tau: f64) -> Result<ScaleBucketReport> {
    let ious = max_ious(faces, layout)?;
    let scales: Vec<f64> = faces.iter().map(RectBox::scale).collect();
    Ok(summarize(&scales, &ious, edges, tau))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JitterBucketRow {
    pub bucket_lo: f64,
    pub bucket_hi: Option<f64>,
    pub count: usize,
    pub trials: usize,
    pub mean_max_iou: Option<f64>,
    pub min_mean_max_iou: Option<f64>,
    pub max_mean_max_iou: Option<f64>,
    pub mean_recall_at_tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JitterReport {
    pub tau: f64,
    pub offsets: Vec<(i64, i64)>,
    pub buckets: Vec<JitterBucketRow>,
}

/// Bucket statistics under each given jitter offset, aggregated over offsets.
pub fn jitter_experiment_offsets(
    faces: &[FaceRecord],
    layout: &AnchorLayout,
    edges: &[f64],
    tau: f64,
    offsets: &[(i64, i64)],
) -> Result<JitterReport> {
    validate_edges(edges)?;
    validate_tau(tau)?;
    check_faces(faces)?;
    if offsets.is_empty() {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    let base = boxes(faces);
    let mut reports = Vec::with_capacity(offsets.len());
    for &(dx, dy) in offsets {
        reports.push(bucket_stats_boxes(&translate_all(&base, dx, dy), layout, edges, tau)?);
    }
    let buckets = (0..edges.len() + 1)
        .map(|b| {
            let means: Vec<f64> = reports.iter().filter_map(|r| r.buckets[b].mean_max_iou).collect();
            let recalls: Vec<f64> = reports.iter().filter_map(|r| r.buckets[b].recall_at_tau).collect();
            let first = &reports[0].buckets[b];
            JitterBucketRow {
                bucket_lo: first.bucket_lo,
                bucket_hi: first.bucket_hi,
                count: first.count,
                trials: offsets.len(),
                mean_max_iou: pairwise_mean(&means),
                min_mean_max_iou: means.iter().copied().reduce(f64::min),
                max_mean_max_iou: means.iter().copied().reduce(f64::max),
                mean_recall_at_tau: pairwise_mean(&recalls),
            }
        })
        .collect();
    Ok(JitterReport {
        tau,
        offsets: offsets.to_vec(),
        buckets,
    })
}

/// Draws one jitter offset per trial (trial seeds derived from `seed`) and
/// aggregates bucket statistics with `tau = cfg.t_high`.
pub fn jitter_experiment(
    faces: &[FaceRecord],
    layout: &AnchorLayout,
    edges: &[f64],
    cfg: &MatchConfig,
    trials: usize,
    seed: u64,
) -> Result<JitterReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let stride = layout.spec().min_effective_stride();
    let offsets = (0..trials as u64)
        .map(|t| apply_jitter(&[], stride, rng::derive_seed(seed, t)).map(|(_, off)| off))
        .collect::<Result<Vec<_>>>()?;
    jitter_experiment_offsets(faces, layout, edges, cfg.t_high, &offsets)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayoutComparison {
    pub specs: Vec<AnchorSpec>,
    pub reports: Vec<ScaleBucketReport>,
}

/// Bucket statistics of the same faces under several anchor designs.
pub fn compare_layouts(faces: &[FaceRecord], specs: &[AnchorSpec], edges: &[f64], tau: f64) -> Result<LayoutComparison> {
    if specs.len() < 2 {
        return Err(Error::InvalidParameter("compare_layouts needs at least two specs".into()));
    }
    check_faces(faces)?;
    let (w, h) = plane_for(faces);
    let reports = specs
        .iter()
        .map(|spec| bucket_stats(faces, &AnchorLayout::build(spec, w, h)?, edges, tau))
        .collect::<Result<Vec<_>>>()?;
    Ok(LayoutComparison {
        specs: specs.to_vec(),
        reports,
    })
}
