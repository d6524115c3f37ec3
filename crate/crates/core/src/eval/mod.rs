//! Detection and identity metrics.

pub mod detection;
pub mod identity;
pub mod report;

use std::io::BufRead;

use crate::error::Result;
use crate::geometry::{BoundingBox, ClassLabel, ClassMap};
use crate::ingest::{parse_bbox, parse_class, read_jsonl, GroundTruthRecord};

pub use detection::{
    average_precision, class_ap, coco_thresholds, map_over_thresholds, match_predictions, precision_recall_point,
    MatchOutcome, ThresholdSweep,
};
pub use identity::{count_id_switches, identity_summary, IdentitySummary, TrackedBox};
pub use report::{evaluate, EvalConfig, EvalReport, MetricsRow};

/// One ground-truth box of a physical object in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthObject {
    pub frame: u64,
    pub object_id: u64,
    pub class: ClassLabel,
    pub bbox: BoundingBox,
}

impl GroundTruthObject {
    pub fn to_record(&self, classes: &ClassMap) -> GroundTruthRecord {
        GroundTruthRecord {
            frame: self.frame,
            object_id: self.object_id,
            class_id: classes.id(self.class) as i64,
            bbox: self.bbox.to_array(),
        }
    }
}

pub fn parse_ground_truth(reader: impl BufRead, origin: &str, classes: &ClassMap) -> Result<Vec<GroundTruthObject>> {
    read_jsonl::<GroundTruthRecord>(reader, origin)?
        .into_iter()
        .map(|(line, r)| {
            Ok(GroundTruthObject {
                frame: r.frame,
                object_id: r.object_id,
                class: parse_class(origin, line, r.class_id, classes)?,
                bbox: parse_bbox(origin, line, r.bbox)?,
            })
        })
        .collect()
}
