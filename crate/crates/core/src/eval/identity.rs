//! Identity metrics of a predicted track set against ground-truth objects.

use std::collections::{BTreeMap, BTreeSet};

use super::GroundTruthObject;
use crate::geometry::{iou, BoundingBox, ClassLabel};
use crate::par;
use crate::tracker::assignment::{solve_assignment, FORBIDDEN_COST};
use crate::tracker::output::TrackRow;

/// A predicted track box in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedBox {
    pub frame: u64,
    pub track_id: u64,
    pub class: ClassLabel,
    pub bbox: BoundingBox,
}

impl From<&TrackRow> for TrackedBox {
    fn from(r: &TrackRow) -> Self {
        TrackedBox {
            frame: r.frame,
            track_id: r.track_id,
            class: r.class,
            bbox: r.bbox,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IdentitySummary {
    pub id_switches: usize,
    /// Distinct ground-truth object ids.
    pub objects: usize,
    /// Objects matched in at least one frame, always to the same track id.
    pub single_id_objects: usize,
    /// Objects never matched.
    pub unmatched_objects: usize,
    pub gt_boxes: usize,
    pub matched_boxes: usize,
}

impl IdentitySummary {
    /// Fraction of objects that kept one predicted id over their visible span.
    pub fn retention(&self) -> f64 {
        if self.objects == 0 {
            1.0
        } else {
            self.single_id_objects as f64 / self.objects as f64
        }
    }
}

/// Per-frame minimum-cost matching (cost 1 − IoU) between same-class boxes
/// with IoU at or above `iou_threshold`. Returns `(object_id, track_id)`.
fn match_frame(gts: &[&GroundTruthObject], preds: &[&TrackedBox], iou_threshold: f64) -> Vec<(u64, u64)> {
    let cost: Vec<Vec<f64>> = gts
        .iter()
        .map(|g| {
            preds
                .iter()
                .map(|p| {
                    let o = iou(&g.bbox, &p.bbox);
                    if p.class == g.class && o >= iou_threshold {
                        1.0 - o
                    } else {
                        FORBIDDEN_COST
                    }
                })
                .collect()
        })
        .collect();
    solve_assignment(&cost)
        .into_iter()
        .filter(|&(r, c)| cost[r][c] < FORBIDDEN_COST)
        .map(|(r, c)| (gts[r].object_id, preds[c].track_id))
        .collect()
}

/// Matches every frame, then walks each object's matches in frame order. A
/// switch is a match whose track id differs from the object's previous
/// matched id; unmatched frames in between do not reset it.
pub fn identity_summary(gts: &[GroundTruthObject], preds: &[TrackedBox], iou_threshold: f64) -> IdentitySummary {
    let mut frames: BTreeMap<u64, (Vec<&GroundTruthObject>, Vec<&TrackedBox>)> = BTreeMap::new();
    for g in gts {
        frames.entry(g.frame).or_default().0.push(g);
    }
    for p in preds {
        frames.entry(p.frame).or_default().1.push(p);
    }
    let frame_list: Vec<_> = frames.values().collect();
    let matches = par::map_slice(&frame_list, |(g, p)| match_frame(g, p, iou_threshold));

    let objects: BTreeSet<u64> = gts.iter().map(|g| g.object_id).collect();
    let mut last: BTreeMap<u64, u64> = BTreeMap::new();
    let mut ids: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    let mut summary = IdentitySummary {
        objects: objects.len(),
        gt_boxes: gts.len(),
        ..Default::default()
    };
    for frame_matches in matches {
        for (object, track) in frame_matches {
            summary.matched_boxes += 1;
            if let Some(prev) = last.insert(object, track) {
                if prev != track {
                    summary.id_switches += 1;
                }
            }
            ids.entry(object).or_default().insert(track);
        }
    }
    summary.single_id_objects = ids.values().filter(|s| s.len() == 1).count();
    summary.unmatched_objects = objects.len() - ids.len();
    summary
}

pub fn count_id_switches(gts: &[GroundTruthObject], preds: &[TrackedBox], iou_threshold: f64) -> usize {
    identity_summary(gts, preds, iou_threshold).id_switches
}
