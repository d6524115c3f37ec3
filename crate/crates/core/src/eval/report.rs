//! Per-class results table.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::detection::{coco_thresholds, map_over_thresholds, mean_of_defined, precision_recall_point};
use super::GroundTruthObject;
use crate::error::{Error, Result};
use crate::geometry::{ClassLabel, Detection};
use crate::ingest::write_jsonl;

/// Operating point for the single precision/recall numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub score_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_threshold: 0.5,
            score_threshold: 0.25,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("iou_threshold", self.iou_threshold), ("score_threshold", self.score_threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// One row of the results table. Metrics are `None` for a class with neither
/// ground truth nor predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRow {
    pub class: String,
    pub images: usize,
    pub instances: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub map50: Option<f64>,
    pub map5095: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall: MetricsRow,
    /// In [`ClassLabel::ALL`] order.
    pub classes: Vec<MetricsRow>,
}

pub const OVERALL_LABEL: &str = "All";

/// Scores `preds` against `gts`. Each class row has its own
/// precision/recall at the configured operating point and its AP at IoU 0.5
/// and averaged over 0.50:0.05:0.95; the overall row averages the classes
/// whose metrics are defined.
pub fn evaluate(preds: &[Detection], gts: &[GroundTruthObject], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let sweep = map_over_thresholds(preds, gts, &coco_thresholds());
    let classes: Vec<MetricsRow> = ClassLabel::ALL
        .iter()
        .zip(&sweep.per_class)
        .map(|(&class, ap)| {
            let cls_gts: Vec<GroundTruthObject> = gts.iter().filter(|g| g.class == class).copied().collect();
            let cls_preds: Vec<Detection> = preds.iter().filter(|d| d.class == class).copied().collect();
            let images = cls_gts.iter().map(|g| g.frame).collect::<BTreeSet<_>>().len();
            let (precision, recall) = match ap.mean {
                Some(_) => {
                    let (p, r) = precision_recall_point(&cls_preds, &cls_gts, cfg.iou_threshold, cfg.score_threshold);
                    (Some(p), Some(r))
                }
                None => (None, None),
            };
            MetricsRow {
                class: class.to_string(),
                images,
                instances: cls_gts.len(),
                precision,
                recall,
                map50: ap.aps[0],
                map5095: ap.mean,
            }
        })
        .collect();
    let frames: BTreeSet<u64> = gts.iter().map(|g| g.frame).chain(preds.iter().map(|d| d.frame)).collect();
    let overall = MetricsRow {
        class: OVERALL_LABEL.into(),
        images: frames.len(),
        instances: gts.len(),
        precision: mean_of_defined(classes.iter().map(|c| c.precision)),
        recall: mean_of_defined(classes.iter().map(|c| c.recall)),
        map50: mean_of_defined(classes.iter().map(|c| c.map50)),
        map5095: mean_of_defined(classes.iter().map(|c| c.map5095)),
    };
    Ok(EvalReport { overall, classes })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

impl EvalReport {
    pub fn rows(&self) -> impl Iterator<Item = &MetricsRow> {
        std::iter::once(&self.overall).chain(&self.classes)
    }

    /// Fixed-width table: header then the overall row and one row per class.
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<12}{:>8}{:>11}{:>11}{:>8}{:>8}{:>10}\n",
            "Class", "Images", "Instances", "Precision", "Recall", "mAP50", "mAP50-95"
        );
        for r in self.rows() {
            let _ = writeln!(
                out,
                "{:<12}{:>8}{:>11}{:>11}{:>8}{:>8}{:>10}",
                r.class,
                r.images,
                r.instances,
                cell(r.precision),
                cell(r.recall),
                cell(r.map50),
                cell(r.map5095)
            );
        }
        out
    }

    /// One JSON record per row, overall first.
    pub fn write_records(&self, writer: impl Write) -> std::io::Result<()> {
        write_jsonl(writer, self.rows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    fn row(class: &str, images: usize, instances: usize, m: [f64; 4]) -> MetricsRow {
        MetricsRow {
            class: class.into(),
            images,
            instances,
            precision: Some(m[0]),
            recall: Some(m[1]),
            map50: Some(m[2]),
            map5095: Some(m[3]),
        }
    }

    #[test]
    fn table_layout_reproduces_reference_rows() {
        let report = EvalReport {
            overall: row("All", 49, 1174, [0.884, 0.828, 0.871, 0.583]),
            classes: vec![
                row("Ball", 45, 45, [0.914, 0.511, 0.616, 0.296]),
                row("Goalkeeper", 38, 39, [0.801, 0.897, 0.931, 0.659]),
                row("Player", 49, 973, [0.957, 0.978, 0.993, 0.767]),
                row("Referee", 49, 117, [0.864, 0.925, 0.946, 0.610]),
            ],
        };
        let table = report.to_table();
        let lines: Vec<Vec<&str>> = table.lines().map(|l| l.split_whitespace().collect()).collect();
        assert_eq!(lines[0], ["Class", "Images", "Instances", "Precision", "Recall", "mAP50", "mAP50-95"]);
        assert_eq!(lines[4], ["Player", "49", "973", "0.957", "0.978", "0.993", "0.767"]);
        assert_eq!(lines.len(), 6);
        // the reference overall row is the mean of the class rows
        let mean = |f: fn(&MetricsRow) -> Option<f64>| mean_of_defined(report.classes.iter().map(f)).unwrap();
        assert_eq!(format!("{:.3}", mean(|r| r.precision)), "0.884");
        assert_eq!(format!("{:.3}", mean(|r| r.recall)), "0.828");
        assert_eq!(format!("{:.3}", mean(|r| r.map50)), "0.871");
        assert_eq!(format!("{:.3}", mean(|r| r.map5095)), "0.583");
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let gts: Vec<GroundTruthObject> = (0..4)
            .flat_map(|f| {
                ClassLabel::ALL.iter().enumerate().map(move |(i, &class)| GroundTruthObject {
                    frame: f,
                    object_id: i as u64,
                    class,
                    bbox: BoundingBox::new(i as f64 * 40.0, 0.0, i as f64 * 40.0 + 20.0, 30.0).unwrap(),
                })
            })
            .collect();
        let preds: Vec<Detection> = gts
            .iter()
            .map(|g| Detection {
                frame: g.frame,
                class: g.class,
                score: 0.9,
                bbox: g.bbox,
            })
            .collect();
        let r = evaluate(&preds, &gts, &EvalConfig::default()).unwrap();
        for row in r.rows() {
            assert_eq!(
                [row.precision, row.recall, row.map50, row.map5095],
                [Some(1.0); 4],
                "{}",
                row.class
            );
        }
        assert_eq!((r.overall.images, r.overall.instances), (4, 16));
        assert_eq!((r.classes[0].images, r.classes[0].instances), (4, 4));
    }

    #[test]
    fn absent_class_excluded_from_mean() {
        let g = GroundTruthObject {
            frame: 0,
            object_id: 1,
            class: ClassLabel::Player,
            bbox: BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
        };
        let r = evaluate(&[], &[g], &EvalConfig::default()).unwrap();
        assert_eq!(r.classes[0].map50, None);
        assert_eq!(r.overall.map50, Some(0.0));
        assert_eq!(r.overall.precision, Some(1.0));
        let table = r.to_table();
        let ball: Vec<&str> = table.lines().nth(2).unwrap().split_whitespace().collect();
        assert_eq!(ball, ["Ball", "0", "0", "-", "-", "-", "-"]);
        let mut buf = Vec::new();
        r.write_records(&mut buf).unwrap();
        let first = String::from_utf8(buf).unwrap().lines().nth(1).unwrap().to_string();
        assert_eq!(
            first,
            r#"{"class":"Ball","images":0,"instances":0,"precision":null,"recall":null,"map50":null,"map5095":null}"#
        );
    }
}
