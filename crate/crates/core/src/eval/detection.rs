//! Per-class detection metrics: greedy IoU matching, 101-point interpolated
//! AP, AP averaged over IoU thresholds, and precision/recall at a score
//! threshold.

use std::collections::BTreeMap;

use super::GroundTruthObject;
use crate::geometry::{iou, ClassLabel, Detection};
use crate::par;

/// Number of recall samples in the interpolated AP.
pub const RECALL_POINTS: usize = 101;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Outcome of matching one set of predictions against one set of ground
/// truth boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    /// `(score, is_true_positive)` for every prediction, by descending score
    /// (ties keep input order).
    pub flags: Vec<(f64, bool)>,
    pub false_negatives: usize,
}

impl MatchOutcome {
    pub fn true_positives(&self) -> usize {
        self.flags.iter().filter(|f| f.1).count()
    }

    pub fn false_positives(&self) -> usize {
        self.flags.len() - self.true_positives()
    }
}

/// Greedy matching within one frame and class: predictions in descending
/// score order each take the still-unmatched ground truth with the highest
/// IoU at or above `iou_threshold`.
pub fn match_predictions(preds: &[Detection], gts: &[GroundTruthObject], iou_threshold: f64) -> MatchOutcome {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    let mut used = vec![false; gts.len()];
    let mut flags = Vec::with_capacity(preds.len());
    for i in order {
        let p = &preds[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if used[g] {
                continue;
            }
            let o = iou(&p.bbox, &gt.bbox);
            if o >= iou_threshold && best.is_none_or(|(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
        }
        flags.push((p.score, best.is_some()));
    }
    MatchOutcome {
        flags,
        false_negatives: used.iter().filter(|u| !**u).count(),
    }
}

/// 101-point interpolated AP from TP/FP flags sorted by descending score.
/// `None` when there is neither ground truth nor any prediction.
pub fn average_precision(flags: &[bool], total_gt: usize) -> Option<f64> {
    if total_gt == 0 {
        return if flags.is_empty() { None } else { Some(0.0) };
    }
    let mut tp = 0usize;
    let mut precision = Vec::with_capacity(flags.len());
    let mut recall = Vec::with_capacity(flags.len());
    for (i, &f) in flags.iter().enumerate() {
        tp += f as usize;
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / total_gt as f64);
    }
    // monotone envelope: running max from the right
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let sum: f64 = (0..RECALL_POINTS)
        .map(|r| {
            let threshold = r as f64 / (RECALL_POINTS - 1) as f64;
            let idx = recall.partition_point(|&x| x < threshold);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    Some(sum / RECALL_POINTS as f64)
}

fn group<T>(items: &[T], key: impl Fn(&T) -> (u64, ClassLabel)) -> BTreeMap<(u64, ClassLabel), Vec<&T>> {
    let mut map: BTreeMap<_, Vec<&T>> = BTreeMap::new();
    for it in items {
        map.entry(key(it)).or_default().push(it);
    }
    map
}

/// Matches every frame separately for one class and pools the flags,
/// re-sorted by descending score (stable in frame order).
pub fn class_outcome(preds: &[Detection], gts: &[GroundTruthObject], class: ClassLabel, iou_threshold: f64) -> MatchOutcome {
    let preds: Vec<Detection> = preds.iter().filter(|d| d.class == class).copied().collect();
    let gts: Vec<GroundTruthObject> = gts.iter().filter(|g| g.class == class).copied().collect();
    let pred_groups = group(&preds, |d| (d.frame, d.class));
    let gt_groups = group(&gts, |g| (g.frame, g.class));
    let mut keys: Vec<_> = pred_groups.keys().chain(gt_groups.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let mut flags = Vec::with_capacity(preds.len());
    let mut false_negatives = 0;
    for key in keys {
        let p: Vec<Detection> = pred_groups.get(&key).map(|v| v.iter().map(|d| **d).collect()).unwrap_or_default();
        let g: Vec<GroundTruthObject> = gt_groups.get(&key).map(|v| v.iter().map(|d| **d).collect()).unwrap_or_default();
        let out = match_predictions(&p, &g, iou_threshold);
        flags.extend(out.flags);
        false_negatives += out.false_negatives;
    }
    flags.sort_by(|a, b| b.0.total_cmp(&a.0));
    MatchOutcome { flags, false_negatives }
}

/// AP of one class at one IoU threshold over a whole sequence.
pub fn class_ap(preds: &[Detection], gts: &[GroundTruthObject], class: ClassLabel, iou_threshold: f64) -> Option<f64> {
    let outcome = class_outcome(preds, gts, class, iou_threshold);
    let total_gt = gts.iter().filter(|g| g.class == class).count();
    let flags: Vec<bool> = outcome.flags.iter().map(|f| f.1).collect();
    average_precision(&flags, total_gt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassThresholdAp {
    pub class: ClassLabel,
    /// AP at each threshold, in threshold order.
    pub aps: Vec<Option<f64>>,
    /// Arithmetic mean of `aps`; `None` when the class has no data.
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweep {
    pub thresholds: Vec<f64>,
    pub per_class: Vec<ClassThresholdAp>,
    /// Mean of the defined per-class means.
    pub mean: Option<f64>,
}

pub fn mean_of_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.into_iter().flatten().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// AP per class at each threshold; parallel over (class, threshold) pairs.
pub fn map_over_thresholds(preds: &[Detection], gts: &[GroundTruthObject], thresholds: &[f64]) -> ThresholdSweep {
    let jobs: Vec<(ClassLabel, f64)> = ClassLabel::ALL
        .iter()
        .flat_map(|&c| thresholds.iter().map(move |&t| (c, t)))
        .collect();
    let aps = par::map_slice(&jobs, |&(c, t)| class_ap(preds, gts, c, t));
    let per_class: Vec<ClassThresholdAp> = ClassLabel::ALL
        .iter()
        .enumerate()
        .map(|(ci, &class)| {
            let aps: Vec<Option<f64>> = aps[ci * thresholds.len()..(ci + 1) * thresholds.len()].to_vec();
            // every threshold sees the same gt/prediction counts, so either all
            // APs are defined or none is
            let mean = if aps.iter().all(Option::is_some) && !aps.is_empty() {
                Some(aps.iter().flatten().sum::<f64>() / aps.len() as f64)
            } else {
                None
            };
            ClassThresholdAp { class, aps, mean }
        })
        .collect();
    let mean = mean_of_defined(per_class.iter().map(|c| c.mean));
    ThresholdSweep {
        thresholds: thresholds.to_vec(),
        per_class,
        mean,
    }
}

/// Precision and recall of predictions scoring at least `score_threshold`.
/// 0/0 precision is 1; 0/0 recall is 0.
pub fn precision_recall_point(
    preds: &[Detection],
    gts: &[GroundTruthObject],
    iou_threshold: f64,
    score_threshold: f64,
) -> (f64, f64) {
    let kept: Vec<Detection> = preds.iter().filter(|d| d.score >= score_threshold).copied().collect();
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for class in ClassLabel::ALL {
        let o = class_outcome(&kept, gts, class, iou_threshold);
        tp += o.true_positives();
        fp += o.false_positives();
        fn_ += o.false_negatives;
    }
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    (precision, recall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn pred(score: f64, b: BoundingBox) -> Detection {
        Detection {
            frame: 0,
            class: ClassLabel::Player,
            score,
            bbox: b,
        }
    }

    fn gt(id: u64, b: BoundingBox) -> GroundTruthObject {
        GroundTruthObject {
            frame: 0,
            object_id: id,
            class: ClassLabel::Player,
            bbox: b,
        }
    }

    /// Envelope oracle: at each recall level, the best precision among PR
    /// points reaching that recall.
    fn envelope_ap(flags: &[bool], n_gt: usize) -> f64 {
        let mut points = Vec::new();
        let mut tp = 0;
        for (i, &f) in flags.iter().enumerate() {
            tp += f as usize;
            points.push((tp as f64 / n_gt as f64, tp as f64 / (i + 1) as f64));
        }
        (0..=100)
            .map(|r| {
                let t = r as f64 / 100.0;
                points.iter().filter(|p| p.0 >= t).map(|p| p.1).fold(0.0, f64::max)
            })
            .sum::<f64>()
            / 101.0
    }

    #[test]
    fn perfect_and_empty_matches() {
        let b = bx(0.0, 0.0, 10.0, 20.0);
        let o = match_predictions(&[pred(0.9, b)], &[gt(1, b)], 0.5);
        assert_eq!((o.true_positives(), o.false_negatives), (1, 0));
        let o = match_predictions(&[pred(0.9, b)], &[], 0.5);
        assert_eq!((o.false_positives(), o.false_negatives), (1, 0));
    }

    #[test]
    fn higher_score_wins_shared_ground_truth() {
        let g = bx(0.0, 0.0, 10.0, 10.0);
        // lower-scored prediction overlaps more, but is considered second
        let preds = [pred(0.6, g), pred(0.8, bx(1.0, 0.0, 11.0, 10.0))];
        let o = match_predictions(&preds, &[gt(1, g)], 0.5);
        assert_eq!(o.flags, vec![(0.8, true), (0.6, false)]);
    }

    #[test]
    fn best_iou_ground_truth_taken() {
        let g1 = bx(0.0, 0.0, 10.0, 10.0);
        let g2 = bx(2.0, 0.0, 12.0, 10.0);
        let o = match_predictions(&[pred(0.9, bx(2.0, 0.0, 12.0, 10.0)), pred(0.5, g1)], &[gt(1, g1), gt(2, g2)], 0.5);
        assert_eq!(o.true_positives(), 2);
    }

    #[test]
    fn ap_simple_cases() {
        assert_eq!(average_precision(&[true], 1), Some(1.0));
        assert_eq!(average_precision(&[false], 1), Some(0.0));
        assert_eq!(average_precision(&[], 0), None);
        assert_eq!(average_precision(&[false, false], 0), Some(0.0));
        assert_eq!(average_precision(&[], 3), Some(0.0));
    }

    #[test]
    fn ap_tp_fp_tp_hand_enumerated() {
        // PR points: (0.5, 1), (0.5, 0.5), (1.0, 2/3); envelope is 1 up to
        // recall 0.5 (51 samples) and 2/3 above it (50 samples)
        let expected = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
        let ap = average_precision(&[true, false, true], 2).unwrap();
        assert!((ap - expected).abs() < 1e-12);
        assert!((envelope_ap(&[true, false, true], 2) - expected).abs() < 1e-12);
    }

    #[test]
    fn thresholds_are_exact() {
        let t = coco_thresholds();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 0.5);
        assert_eq!(t[9], 0.95);
        for w in t.windows(2) {
            assert!((w[1] - w[0] - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_predictions_saturate() {
        let b = bx(0.0, 0.0, 10.0, 20.0);
        let s = map_over_thresholds(&[pred(0.9, b)], &[gt(1, b)], &coco_thresholds());
        let player = &s.per_class[ClassLabel::Player.ordinal()];
        assert!(player.aps.iter().all(|a| *a == Some(1.0)));
        assert_eq!(player.mean, Some(1.0));
        assert_eq!(s.mean, Some(1.0));
        assert_eq!(s.per_class[0].mean, None);
    }

    #[test]
    fn iou_between_half_and_055_gives_point_one() {
        // gt 10x10, prediction shifted right by 3.4: IoU = 66/134 ≈ 0.4925
        // shifted by 3.2: IoU = 68/132 ≈ 0.5152
        let g = bx(0.0, 0.0, 10.0, 10.0);
        let p = bx(3.2, 0.0, 13.2, 10.0);
        let o = iou(&g, &p);
        assert!((o - 68.0 / 132.0).abs() < 1e-12 && (0.5..0.55).contains(&o));
        let s = map_over_thresholds(&[pred(0.9, p)], &[gt(1, g)], &coco_thresholds());
        let player = &s.per_class[ClassLabel::Player.ordinal()];
        let mut expected = vec![Some(0.0); 10];
        expected[0] = Some(1.0);
        assert_eq!(player.aps, expected);
        assert!((player.mean.unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn pr_point_counting() {
        let b = |x: f64| bx(x, 0.0, x + 10.0, 10.0);
        let gts = [gt(1, b(0.0)), gt(2, b(100.0)), gt(3, b(200.0))];
        let preds = [pred(0.9, b(0.0)), pred(0.8, b(100.0)), pred(0.7, b(400.0))];
        let (p, r) = precision_recall_point(&preds, &gts, 0.5, 0.25);
        assert!((p - 2.0 / 3.0).abs() < 1e-12 && (r - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(precision_recall_point(&preds[..2], &gts[..2], 0.5, 0.0), (1.0, 1.0));
        assert_eq!(precision_recall_point(&[], &gts, 0.5, 0.25), (1.0, 0.0));
        // score threshold drops everything below it
        assert_eq!(precision_recall_point(&preds, &gts, 0.5, 0.95), (1.0, 0.0));
    }
}
