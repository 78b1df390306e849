//! Detection evaluation: greedy confidence-ordered matching at an IoU
//! threshold, cumulative precision/recall curves, average precision as the
//! area under the right-envelope of the PR curve, mAP over classes, and the
//! max-F1 operating point.
//!
//! Boxes are center-format in normalized image coordinates. Ingestion is
//! line-oriented text (`image_id class_id cx cy w h [confidence]`) or a
//! JSON array with the same fields.

use serde::{Deserialize, Serialize};

use crate::boxloss::{self, BBox};
use crate::error::{CoreError, Result};

pub type ClassId = usize;

/// One scored detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: String,
    pub class_id: ClassId,
    pub bbox: BBox<f64>,
    pub confidence: f64,
}

/// One ground-truth box.
#[derive(Debug, Clone, PartialEq)]
pub struct GtBox {
    pub image_id: String,
    pub class_id: ClassId,
    pub bbox: BBox<f64>,
}

/// Greedy matching: detections in descending confidence (stable on ties)
/// claim the highest-IoU unmatched ground-truth box of the same class and
/// image with IoU ≥ threshold; every gt is matched at most once.
///
/// Returns TP flags aligned with the *input* detection order.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GtBox],
    iou_threshold: f64,
) -> Result<Vec<bool>> {
    if !(0.0 < iou_threshold && iou_threshold < 1.0) {
        return Err(CoreError::invalid("iou threshold must lie in (0, 1)"));
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.partial_cmp(&dets[a].confidence).unwrap());

    let mut gt_used = vec![false; gts.len()];
    let mut flags = vec![false; dets.len()];
    for &di in &order {
        let det = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_used[gi] || gt.class_id != det.class_id || gt.image_id != det.image_id {
                continue;
            }
            let overlap = boxloss::iou(&det.bbox, &gt.bbox);
            if overlap >= iou_threshold && best.map_or(true, |(_, b)| overlap > b) {
                best = Some((gi, overlap));
            }
        }
        if let Some((gi, _)) = best {
            gt_used[gi] = true;
            flags[di] = true;
        }
    }
    Ok(flags)
}

/// Cumulative precision/recall swept over descending confidence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// Set when recall was undefined (no ground truth) and reported as 0.
    pub undefined_recall: bool,
}

/// Build the PR curve from TP flags already ordered by descending
/// confidence.
pub fn pr_curve(flags: &[bool], num_gt: usize) -> PrCurve {
    let mut precision = Vec::with_capacity(flags.len());
    let mut recall = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (k, &f) in flags.iter().enumerate() {
        if f {
            tp += 1;
        }
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(if num_gt == 0 {
            0.0
        } else {
            tp as f64 / num_gt as f64
        });
    }
    PrCurve {
        precision,
        recall,
        undefined_recall: num_gt == 0 && !flags.is_empty(),
    }
}

/// Area under the precision right-envelope over recall, the continuous
/// all-points convention. An empty curve scores 0.
pub fn average_precision(curve: &PrCurve) -> f64 {
    let n = curve.precision.len();
    if n == 0 {
        return 0.0;
    }
    // monotone non-increasing envelope from the right
    let mut envelope = curve.precision.clone();
    for i in (0..n - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for i in 0..n {
        ap += (curve.recall[i] - prev_r) * envelope[i];
        prev_r = curve.recall[i];
    }
    ap
}

/// One F1 operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct F1Sample {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// F1 over every distinct confidence cut.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Sweep {
    pub best_threshold: f64,
    pub best_f1: f64,
    pub samples: Vec<F1Sample>,
}

/// Sweep F1 across the distinct confidence cuts (keep detections with
/// confidence ≥ threshold). Ties on F1 resolve to the highest threshold;
/// with no detections the sweep is empty with best F1 = 0 at threshold 1.
pub fn f1_sweep(flags: &[bool], confidences: &[f64], num_gt: usize) -> F1Sweep {
    debug_assert_eq!(flags.len(), confidences.len());
    let mut samples = Vec::new();
    let mut tp = 0usize;
    for k in 0..flags.len() {
        if flags[k] {
            tp += 1;
        }
        // cut only at the last occurrence of each distinct confidence
        if k + 1 < flags.len() && confidences[k + 1] == confidences[k] {
            continue;
        }
        let kept = k + 1;
        let p = tp as f64 / kept as f64;
        let r = if num_gt == 0 {
            0.0
        } else {
            tp as f64 / num_gt as f64
        };
        let f1 = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        samples.push(F1Sample {
            threshold: confidences[k],
            precision: p,
            recall: r,
            f1,
        });
    }
    // descending thresholds: keep the first (highest) on ties
    let mut best_threshold = 1.0;
    let mut best_f1 = 0.0;
    for s in &samples {
        if s.f1 > best_f1 {
            best_f1 = s.f1;
            best_threshold = s.threshold;
        }
    }
    F1Sweep {
        best_threshold,
        best_f1,
        samples,
    }
}

/// Per-class evaluation results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassEval {
    pub class_id: ClassId,
    pub ap: f64,
    pub num_gt: usize,
    pub num_det: usize,
    /// Classes with neither ground truth nor detections are excluded from
    /// the mAP mean.
    pub included_in_map: bool,
    pub note: Option<String>,
    pub pr: PrCurve,
}

/// Full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub map: f64,
    /// Operating point at the confidence threshold maximizing global F1.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub max_f1_confidence: f64,
    pub per_class: Vec<ClassEval>,
    pub f1_samples: Vec<F1Sample>,
    pub warnings: Vec<String>,
}

/// Evaluate detections against ground truth over the listed classes.
///
/// Per-class AP via greedy matching + PR envelope; mAP is the mean over
/// classes that have any ground truth or detections. The operating-point
/// precision/recall/F1 are measured at the global max-F1 confidence
/// threshold over all listed classes pooled.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GtBox],
    classes: &[ClassId],
    iou_threshold: f64,
) -> Result<EvalReport> {
    let mut warnings = Vec::new();
    for d in dets {
        if !classes.contains(&d.class_id) {
            warnings.push(format!(
                "detection class {} (image {}) not in evaluated class set",
                d.class_id, d.image_id
            ));
        }
    }
    for g in gts {
        if !classes.contains(&g.class_id) {
            warnings.push(format!(
                "ground-truth class {} (image {}) not in evaluated class set",
                g.class_id, g.image_id
            ));
        }
    }
    if dets.is_empty() && !gts.is_empty() {
        warnings.push(format!(
            "no detections: all {} ground-truth boxes are misses",
            gts.len()
        ));
    }

    let mut per_class = Vec::with_capacity(classes.len());
    let mut pooled: Vec<(f64, bool)> = Vec::new();
    let mut ap_sum = 0.0;
    let mut included = 0usize;
    for &class in classes {
        let mut class_dets: Vec<Detection> = dets
            .iter()
            .filter(|d| d.class_id == class)
            .cloned()
            .collect();
        class_dets.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
        let class_gts: Vec<GtBox> = gts
            .iter()
            .filter(|g| g.class_id == class)
            .cloned()
            .collect();
        let flags = match_detections(&class_dets, &class_gts, iou_threshold)?;
        for (d, &f) in class_dets.iter().zip(flags.iter()) {
            pooled.push((d.confidence, f));
        }
        let curve = pr_curve(&flags, class_gts.len());
        let ap = average_precision(&curve);
        let include = !(class_gts.is_empty() && class_dets.is_empty());
        let note = if !include {
            Some("no ground truth and no detections; excluded from mAP".to_string())
        } else if curve.undefined_recall {
            Some("no ground truth: all detections are false positives".to_string())
        } else {
            None
        };
        if include {
            ap_sum += ap;
            included += 1;
        }
        per_class.push(ClassEval {
            class_id: class,
            ap,
            num_gt: class_gts.len(),
            num_det: class_dets.len(),
            included_in_map: include,
            note,
            pr: curve,
        });
    }

    pooled.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let pooled_flags: Vec<bool> = pooled.iter().map(|&(_, f)| f).collect();
    let pooled_confs: Vec<f64> = pooled.iter().map(|&(c, _)| c).collect();
    let total_gt = gts.iter().filter(|g| classes.contains(&g.class_id)).count();
    let sweep = f1_sweep(&pooled_flags, &pooled_confs, total_gt);
    let at_best = sweep
        .samples
        .iter()
        .find(|s| s.threshold == sweep.best_threshold)
        .copied()
        .unwrap_or(F1Sample {
            threshold: sweep.best_threshold,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        });

    Ok(EvalReport {
        iou_threshold,
        map: if included == 0 {
            0.0
        } else {
            ap_sum / included as f64
        },
        precision: at_best.precision,
        recall: at_best.recall,
        f1: at_best.f1,
        max_f1_confidence: sweep.best_threshold,
        per_class,
        f1_samples: sweep.samples,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// ingestion and emission

#[derive(Serialize, Deserialize)]
struct BoxRecord {
    image_id: String,
    class_id: ClassId,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
}

fn parse_line(line_no: usize, line: &str, want_conf: bool) -> Result<Option<BoxRecord>> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    let fields: Vec<&str> = trimmed.split_whitespace().collect();
    let expect = if want_conf { 7 } else { 6 };
    if fields.len() != expect {
        return Err(CoreError::Parse {
            line: line_no,
            msg: format!("expected {expect} fields, found {}", fields.len()),
        });
    }
    let num = |s: &str, what: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| CoreError::Parse {
            line: line_no,
            msg: format!("invalid {what} `{s}`"),
        })
    };
    let class_id = fields[1].parse::<usize>().map_err(|_| CoreError::Parse {
        line: line_no,
        msg: format!("invalid class id `{}`", fields[1]),
    })?;
    let (w, h) = (num(fields[4], "width")?, num(fields[5], "height")?);
    if w <= 0.0 || h <= 0.0 {
        return Err(CoreError::Parse {
            line: line_no,
            msg: format!("box extent must be positive, got {w}x{h}"),
        });
    }
    let confidence = if want_conf {
        let c = num(fields[6], "confidence")?;
        if !(0.0..=1.0).contains(&c) {
            return Err(CoreError::Parse {
                line: line_no,
                msg: format!("confidence {c} outside [0, 1]"),
            });
        }
        Some(c)
    } else {
        None
    };
    Ok(Some(BoxRecord {
        image_id: fields[0].to_string(),
        class_id,
        cx: num(fields[2], "cx")?,
        cy: num(fields[3], "cy")?,
        w,
        h,
        confidence,
    }))
}

fn record_to_gt(r: BoxRecord) -> GtBox {
    GtBox {
        image_id: r.image_id,
        class_id: r.class_id,
        bbox: BBox::new(r.cx, r.cy, r.w, r.h),
    }
}

fn record_to_det(r: BoxRecord, line: usize) -> Result<Detection> {
    let confidence = r.confidence.ok_or(CoreError::Parse {
        line,
        msg: "detection record missing confidence".to_string(),
    })?;
    Ok(Detection {
        image_id: r.image_id,
        class_id: r.class_id,
        bbox: BBox::new(r.cx, r.cy, r.w, r.h),
        confidence,
    })
}

/// Parse ground-truth boxes: `image_id class_id cx cy w h` per line.
pub fn parse_gt_text(text: &str) -> Result<Vec<GtBox>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(r) = parse_line(i + 1, line, false)? {
            out.push(record_to_gt(r));
        }
    }
    Ok(out)
}

/// Parse detections: `image_id class_id cx cy w h confidence` per line.
pub fn parse_det_text(text: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(r) = parse_line(i + 1, line, true)? {
            out.push(record_to_det(r, i + 1)?);
        }
    }
    Ok(out)
}

/// Parse the JSON array variant of the ground-truth format.
pub fn parse_gt_json(text: &str) -> Result<Vec<GtBox>> {
    let records: Vec<BoxRecord> = serde_json::from_str(text).map_err(|e| CoreError::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    Ok(records.into_iter().map(record_to_gt).collect())
}

/// Parse the JSON array variant of the detection format.
pub fn parse_det_json(text: &str) -> Result<Vec<Detection>> {
    let records: Vec<BoxRecord> = serde_json::from_str(text).map_err(|e| CoreError::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    records.into_iter().map(|r| record_to_det(r, 0)).collect()
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// CSV of per-class APs.
    pub fn per_class_csv(&self) -> String {
        let mut out = String::from("class_id,ap,num_gt,num_det,included_in_map\n");
        for c in &self.per_class {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.class_id,
                crate::fmt::sig6(c.ap),
                c.num_gt,
                c.num_det,
                c.included_in_map
            ));
        }
        out
    }
}
