//! Evaluation and analysis metrics: pixel recalls, detection average
//! precision, confusion-matrix distances, oracle combination, and the
//! rank-of-correct-label diagnostic.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::data::{BBox, GtBox, SceneInstance, VOID};

pub type EvalResult<T> = Result<T, EvalError>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("confusion matrices have different class counts: {0} vs {1}")]
    ClassMismatch(usize, usize),
    #[error("prediction vectors are not aligned: {0}")]
    Misaligned(String),
}

/// Pixel counts, rows indexed by ground-truth class; void pixels never enter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn add(&mut self, gt: usize, pred: usize, weight: u64) {
        self.counts[gt * self.num_classes + pred] += weight;
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn row(&self, gt: usize) -> &[u64] {
        &self.counts[gt * self.num_classes..(gt + 1) * self.num_classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.num_classes, other.num_classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let c = rows.len();
        let mut m = ConfusionMatrix::new(c);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                m.counts[i * c + j] = v;
            }
        }
        m
    }

    /// Paint per-segment predictions onto pixels and accumulate against the
    /// ground-truth label grid. Void pixels are skipped.
    pub fn add_instance(
        &mut self,
        inst: &SceneInstance,
        pred_seg_labels: &[usize],
    ) -> EvalResult<()> {
        if pred_seg_labels.len() != inst.segments.len() {
            return Err(EvalError::Misaligned(format!(
                "{} predictions for {} segments",
                pred_seg_labels.len(),
                inst.segments.len()
            )));
        }
        let labels = inst
            .decoded_gt_labels()
            .map_err(EvalError::Misaligned)?;
        for (seg, &pred) in inst.segments.iter().zip(pred_seg_labels) {
            let cells = seg
                .pixel_set
                .decode_cells(inst.num_cells())
                .map_err(EvalError::Misaligned)?;
            for cell in cells {
                let gt = labels[cell];
                if gt != VOID {
                    self.add(gt as usize, pred, 1);
                }
            }
        }
        Ok(())
    }
}

/// Per-class recall and its average. Classes with no ground-truth pixels are
/// `None` and excluded from the average.
pub fn per_class_recall(cm: &ConfusionMatrix) -> EvalResult<(Vec<Option<f64>>, f64)> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let per_class: Vec<Option<f64>> = (0..cm.num_classes)
        .map(|c| {
            let row_total: u64 = cm.row(c).iter().sum();
            (row_total > 0).then(|| cm.get(c, c) as f64 / row_total as f64)
        })
        .collect();
    let included: Vec<f64> = per_class.iter().flatten().copied().collect();
    let avg = included.iter().sum::<f64>() / included.len() as f64;
    Ok((per_class, avg))
}

/// Per-pixel recall: trace over total.
pub fn global_recall(cm: &ConfusionMatrix) -> EvalResult<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let trace: u64 = (0..cm.num_classes).map(|c| cm.get(c, c)).sum();
    Ok(trace as f64 / total as f64)
}

/// One scored detection to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetResult {
    pub instance: String,
    pub class_id: usize,
    pub bbox: BBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApReport {
    /// AP per class; `None` for classes with no ground-truth boxes.
    pub per_class: Vec<Option<f64>>,
    /// Mean over classes that have ground truth; 0 when none do.
    pub mean: f64,
}

/// Greedy matching by descending confidence (one ground-truth match each,
/// IoU >= `iou_thresh`), then area under the all-points precision-recall
/// curve, per class.
pub fn detection_ap(
    dets: &[DetResult],
    gts: &BTreeMap<String, Vec<GtBox>>,
    num_classes: usize,
    iou_thresh: f64,
) -> ApReport {
    let mut per_class: Vec<Option<f64>> = vec![None; num_classes];
    for class_id in 0..num_classes {
        let n_gt: usize = gts
            .values()
            .map(|boxes| boxes.iter().filter(|b| b.class_id == class_id).count())
            .sum();
        if n_gt == 0 {
            continue;
        }
        let mut class_dets: Vec<(usize, &DetResult)> = dets
            .iter()
            .enumerate()
            .filter(|(_, d)| d.class_id == class_id)
            .collect();
        class_dets.sort_by(|(ia, a), (ib, b)| {
            b.confidence
                .partial_cmp(&a.confidence)
                .unwrap()
                .then_with(|| a.instance.cmp(&b.instance))
                .then(ia.cmp(ib))
        });
        // matched[(instance, box index)]
        let mut matched: BTreeMap<(&str, usize), bool> = BTreeMap::new();
        let mut tps: Vec<bool> = Vec::with_capacity(class_dets.len());
        for (_, det) in &class_dets {
            let boxes = gts.get(&det.instance).map(Vec::as_slice).unwrap_or(&[]);
            let mut best: Option<(usize, f64)> = None;
            for (bi, gt_box) in boxes.iter().enumerate() {
                if gt_box.class_id != class_id {
                    continue;
                }
                if *matched.get(&(det.instance.as_str(), bi)).unwrap_or(&false) {
                    continue;
                }
                let iou = det.bbox.iou(&gt_box.bbox);
                if iou >= iou_thresh && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((bi, iou));
                }
            }
            match best {
                Some((bi, _)) => {
                    matched.insert((det.instance.as_str(), bi), true);
                    tps.push(true);
                }
                None => tps.push(false),
            }
        }
        // All-points interpolated area under precision-recall.
        let mut tp_cum = 0usize;
        let mut points: Vec<(f64, f64)> = Vec::with_capacity(tps.len());
        for (i, &tp) in tps.iter().enumerate() {
            if tp {
                tp_cum += 1;
            }
            let recall = tp_cum as f64 / n_gt as f64;
            let precision = tp_cum as f64 / (i + 1) as f64;
            points.push((recall, precision));
        }
        // Precision envelope from the right.
        let mut envelope = points.clone();
        for i in (0..envelope.len().saturating_sub(1)).rev() {
            envelope[i].1 = envelope[i].1.max(envelope[i + 1].1);
        }
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for &(r, p) in &envelope {
            if r > prev_recall {
                ap += (r - prev_recall) * p;
                prev_recall = r;
            }
        }
        per_class[class_id] = Some(ap);
    }
    let included: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = if included.is_empty() {
        0.0
    } else {
        included.iter().sum::<f64>() / included.len() as f64
    };
    ApReport { per_class, mean }
}

/// Symmetric Kullback-Leibler distance between matching rows, summed over
/// rows. Rows are count vectors, smoothed by `eps` before normalizing.
pub fn symmetric_kl_rows(
    a: &ConfusionMatrix,
    b: &ConfusionMatrix,
    eps: f64,
) -> EvalResult<f64> {
    if a.num_classes != b.num_classes {
        return Err(EvalError::ClassMismatch(a.num_classes, b.num_classes));
    }
    let normalize = |row: &[u64]| -> Vec<f64> {
        let total: f64 = row.iter().map(|&x| x as f64 + eps).sum();
        row.iter().map(|&x| (x as f64 + eps) / total).collect()
    };
    let mut sum = 0.0;
    for c in 0..a.num_classes {
        let p = normalize(a.row(c));
        let q = normalize(b.row(c));
        for (pi, qi) in p.iter().zip(&q) {
            sum += (pi - qi) * (pi / qi).ln();
        }
    }
    Ok(sum)
}

/// Pixel accuracy of per-segment predictions weighted by segment area;
/// void-truth segments are skipped.
pub fn segment_prediction_accuracy(pred: &[usize], gt: &[i32], areas: &[u64]) -> f64 {
    let mut correct = 0u64;
    let mut total = 0u64;
    for ((&p, &g), &area) in pred.iter().zip(gt).zip(areas) {
        if g == VOID {
            continue;
        }
        total += area;
        if p == g as usize {
            correct += area;
        }
    }
    if total == 0 {
        1.0
    } else {
        correct as f64 / total as f64
    }
}

/// Accuracy of an oracle that keeps prediction A where it is right and
/// falls back to prediction B elsewhere.
pub fn oracle_combination(
    pred_a: &[usize],
    pred_b: &[usize],
    gt: &[i32],
    areas: &[u64],
) -> EvalResult<f64> {
    if pred_a.len() != pred_b.len() || pred_a.len() != gt.len() || gt.len() != areas.len() {
        return Err(EvalError::Misaligned("oracle inputs differ in length".into()));
    }
    let combined: Vec<usize> = pred_a
        .iter()
        .zip(pred_b)
        .zip(gt)
        .map(|((&a, &b), &g)| if g != VOID && a == g as usize { a } else { b })
        .collect();
    Ok(segment_prediction_accuracy(&combined, gt, areas))
}

/// Mean 1-based rank of the true label when classes are ordered by
/// descending table value (stable in class index, so ties take the first
/// occurrence). With `restrict_to_misclassified`, only rows whose argmax is
/// wrong count. Rows with void truth never count. `None` when no row counts.
pub fn mean_rank_of_truth(
    potentials: &[Vec<f64>],
    gt_labels: &[i32],
    restrict_to_misclassified: bool,
) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for (row, &gt) in potentials.iter().zip(gt_labels) {
        if gt == VOID || gt < 0 || gt as usize >= row.len() {
            continue;
        }
        let gt = gt as usize;
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .unwrap();
        if restrict_to_misclassified && argmax == gt {
            continue;
        }
        let rank = 1
            + row
                .iter()
                .enumerate()
                .filter(|&(j, &v)| v > row[gt] || (v == row[gt] && j < gt))
                .count();
        total += rank as f64;
        n += 1;
    }
    (n > 0).then(|| total / n as f64)
}
