//! ByteTrack multi-object tracking.
//!
//! Every frame runs a two-stage association: high-confidence detections are
//! matched against all confirmed tracks (active and lost), then the leftover
//! low-confidence detections get a second chance against tracks that were
//! active on the previous step. Matching is class-aware and uses `1 - IoU`
//! costs with the Hungarian solver.

pub mod assignment;
pub mod kalman;
pub mod output;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox, ClassLabel, Detection};
use crate::ingest::DetectionStream;
use assignment::{solve_assignment, FORBIDDEN_COST};
use kalman::{kf_initiate, kf_predict, kf_update, KalmanState};

pub use output::{read_tracks, track_records, track_rows, write_tracks_csv, write_tracks_jsonl, TrackOutputRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassGate {
    /// Detections smaller than this (px²) never start a track.
    pub min_box_area: f64,
    /// Upper bound on width/height for starting a track; `None` disables it.
    pub max_aspect: Option<f64>,
}

impl ClassGate {
    pub fn admits(&self, b: &BoundingBox) -> bool {
        b.area() >= self.min_box_area && self.max_aspect.is_none_or(|m| b.width() / b.height() <= m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    pub high_score_threshold: f64,
    pub low_score_floor: f64,
    pub new_track_threshold: f64,
    pub stage1_min_iou: f64,
    pub stage2_min_iou: f64,
    /// Frames a lost track survives without a match.
    pub max_lost_age: u64,
    /// Gate for people classes (goalkeeper, player, referee).
    pub person_gate: ClassGate,
    pub ball_gate: ClassGate,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            high_score_threshold: 0.6,
            low_score_floor: 0.1,
            new_track_threshold: 0.7,
            stage1_min_iou: 0.2,
            stage2_min_iou: 0.5,
            max_lost_age: 30,
            person_gate: ClassGate {
                min_box_area: 100.0,
                max_aspect: Some(1.6),
            },
            ball_gate: ClassGate {
                min_box_area: 4.0,
                max_aspect: None,
            },
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("high_score_threshold", self.high_score_threshold)?;
        unit("low_score_floor", self.low_score_floor)?;
        unit("new_track_threshold", self.new_track_threshold)?;
        unit("stage1_min_iou", self.stage1_min_iou)?;
        unit("stage2_min_iou", self.stage2_min_iou)?;
        if self.low_score_floor >= self.high_score_threshold {
            return Err(Error::InvalidConfig(format!(
                "low_score_floor {} must be below high_score_threshold {}",
                self.low_score_floor, self.high_score_threshold
            )));
        }
        if self.max_lost_age == 0 {
            return Err(Error::InvalidConfig("max_lost_age must be at least 1".into()));
        }
        Ok(())
    }

    pub fn gate(&self, class: ClassLabel) -> &ClassGate {
        match class {
            ClassLabel::Ball => &self.ball_gate,
            _ => &self.person_gate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Active,
    Lost,
    Removed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub frame: u64,
    pub bbox: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct TrackRecord {
    pub id: u64,
    pub class: ClassLabel,
    pub state: KalmanState,
    pub status: TrackStatus,
    pub last_update: u64,
    /// Matched detection boxes, one per frame the track was updated.
    pub history: Vec<HistoryEntry>,
    pub team: Option<u8>,
    /// Whether the track was ever confirmed; tentative tracks that die
    /// unconfirmed are never reported.
    pub confirmed: bool,
}

impl TrackRecord {
    fn predicted_box(&self) -> Option<BoundingBox> {
        self.state.to_clamped_box()
    }

    fn apply(&mut self, det: &Detection) -> Result<()> {
        self.state = kf_update(&self.state, &det.bbox.to_center_form())?;
        self.history.push(HistoryEntry {
            frame: det.frame,
            bbox: det.bbox,
            score: det.score,
        });
        self.last_update = det.frame;
        self.status = TrackStatus::Active;
        self.confirmed = true;
        Ok(())
    }
}

/// Per-frame result: which track consumed which detection (index into the
/// frame's detection slice). Only confirmed tracks appear.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameOutput {
    pub frame: u64,
    pub assignments: Vec<(u64, usize)>,
}

/// Stateful tracker for one video sequence.
#[derive(Debug, Clone)]
pub struct ByteTracker {
    cfg: TrackerConfig,
    tracks: Vec<TrackRecord>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl ByteTracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// All tracks ever created, in id order.
    pub fn tracks(&self) -> &[TrackRecord] {
        &self.tracks
    }

    pub fn into_tracks(self) -> Vec<TrackRecord> {
        self.tracks
    }

    /// Advances the tracker by one processed frame.
    pub fn step(&mut self, frame: u64, detections: &[Detection]) -> Result<FrameOutput> {
        if let Some(d) = detections.iter().find(|d| d.frame != frame) {
            return Err(Error::Sequencing {
                expected: frame,
                found: d.frame,
            });
        }
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::Sequencing {
                    expected: last + 1,
                    found: frame,
                });
            }
        }
        self.last_frame = Some(frame);
        let cfg = self.cfg.clone();

        let live: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| self.tracks[i].status != TrackStatus::Removed)
            .collect();
        for &i in &live {
            self.tracks[i].state = kf_predict(&self.tracks[i].state);
        }

        let high: Vec<usize> = (0..detections.len())
            .filter(|&j| detections[j].score >= cfg.high_score_threshold)
            .collect();
        let low: Vec<usize> = (0..detections.len())
            .filter(|&j| detections[j].score >= cfg.low_score_floor && detections[j].score < cfg.high_score_threshold)
            .collect();

        let pool: Vec<usize> = live
            .iter()
            .copied()
            .filter(|&i| matches!(self.tracks[i].status, TrackStatus::Active | TrackStatus::Lost))
            .collect();
        let tentative: Vec<usize> = live
            .iter()
            .copied()
            .filter(|&i| self.tracks[i].status == TrackStatus::Tentative)
            .collect();

        let mut matched: Vec<(usize, usize)> = Vec::new();

        // stage 1: high-score detections against active and lost tracks
        let (m1, pool_left, high_left) = self.associate(&pool, &high, detections, cfg.stage1_min_iou);
        matched.extend(m1);

        // stage 2: low-score detections against tracks active on the last step
        let was_active: Vec<usize> = pool_left
            .iter()
            .copied()
            .filter(|&i| self.tracks[i].status == TrackStatus::Active)
            .collect();
        let (m2, active_left, _) = self.associate(&was_active, &low, detections, cfg.stage2_min_iou);
        matched.extend(m2);

        // unconfirmed tracks take their second detection from the high pool
        let (m3, tentative_left, high_left) = self.associate(&tentative, &high_left, detections, cfg.stage1_min_iou);
        matched.extend(m3);

        for &(ti, dj) in &matched {
            self.tracks[ti].apply(&detections[dj]).map_err(|e| Error::AtFrame {
                frame,
                source: Box::new(e),
            })?;
        }

        for &ti in &active_left {
            self.tracks[ti].status = TrackStatus::Lost;
        }
        for &ti in &tentative_left {
            self.tracks[ti].status = TrackStatus::Removed;
        }
        for t in &mut self.tracks {
            if t.status == TrackStatus::Lost && frame - t.last_update > cfg.max_lost_age {
                t.status = TrackStatus::Removed;
            }
        }

        for &dj in &high_left {
            let d = &detections[dj];
            if d.score >= cfg.new_track_threshold && cfg.gate(d.class).admits(&d.bbox) {
                self.tracks.push(TrackRecord {
                    id: self.next_id,
                    class: d.class,
                    state: kf_initiate(&d.bbox.to_center_form()),
                    status: TrackStatus::Tentative,
                    last_update: frame,
                    history: vec![HistoryEntry {
                        frame,
                        bbox: d.bbox,
                        score: d.score,
                    }],
                    team: None,
                    confirmed: false,
                });
                self.next_id += 1;
            }
        }

        let mut assignments: Vec<(u64, usize)> = matched.iter().map(|&(ti, dj)| (self.tracks[ti].id, dj)).collect();
        assignments.sort_unstable();
        Ok(FrameOutput { frame, assignments })
    }

    /// Class-aware `1 - IoU` matching between tracks and detections (both as
    /// indices). Returns (matches, unmatched tracks, unmatched detections).
    fn associate(
        &self,
        track_idx: &[usize],
        det_idx: &[usize],
        detections: &[Detection],
        min_iou: f64,
    ) -> (Vec<(usize, usize)>, Vec<usize>, Vec<usize>) {
        if track_idx.is_empty() || det_idx.is_empty() {
            return (Vec::new(), track_idx.to_vec(), det_idx.to_vec());
        }
        let predicted: Vec<Option<BoundingBox>> = track_idx.iter().map(|&i| self.tracks[i].predicted_box()).collect();
        let cost: Vec<Vec<f64>> = track_idx
            .iter()
            .zip(&predicted)
            .map(|(&ti, pb)| {
                det_idx
                    .iter()
                    .map(|&dj| {
                        let d = &detections[dj];
                        match pb {
                            Some(pb) if d.class == self.tracks[ti].class => {
                                let overlap = iou(pb, &d.bbox);
                                if overlap >= min_iou && overlap > 0.0 {
                                    1.0 - overlap
                                } else {
                                    FORBIDDEN_COST
                                }
                            }
                            _ => FORBIDDEN_COST,
                        }
                    })
                    .collect()
            })
            .collect();
        let mut track_used = vec![false; track_idx.len()];
        let mut det_used = vec![false; det_idx.len()];
        let mut matches = Vec::new();
        for (r, c) in solve_assignment(&cost) {
            if cost[r][c] < FORBIDDEN_COST {
                track_used[r] = true;
                det_used[c] = true;
                matches.push((track_idx[r], det_idx[c]));
            }
        }
        let unmatched_tracks = track_idx.iter().zip(&track_used).filter(|(_, &u)| !u).map(|(&i, _)| i).collect();
        let unmatched_dets = det_idx.iter().zip(&det_used).filter(|(_, &u)| !u).map(|(&j, _)| j).collect();
        (matches, unmatched_tracks, unmatched_dets)
    }
}

/// Runs the tracker over every frame from 0 to the last detection frame.
pub fn run_sequence(stream: &DetectionStream, cfg: &TrackerConfig) -> Result<Vec<TrackRecord>> {
    run_sequence_strided(stream, cfg, 1)
}

/// Like [`run_sequence`] but only processes frames `0, stride, 2*stride, ...`;
/// detections on other frames are ignored.
pub fn run_sequence_strided(stream: &DetectionStream, cfg: &TrackerConfig, stride: u64) -> Result<Vec<TrackRecord>> {
    if stride == 0 {
        return Err(Error::InvalidConfig("tracking stride must be at least 1".into()));
    }
    let mut tracker = ByteTracker::new(cfg.clone())?;
    let Some(last) = stream.last_frame() else {
        return Ok(Vec::new());
    };
    for frame in (0..=last).step_by(stride as usize) {
        tracker.step(frame, stream.frame(frame)).map_err(|e| match e {
            e @ Error::AtFrame { .. } => e,
            e => Error::AtFrame {
                frame,
                source: Box::new(e),
            },
        })?;
    }
    Ok(tracker.into_tracks())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(frame: u64, class: ClassLabel, score: f64, b: [f64; 4]) -> Detection {
        Detection {
            frame,
            class,
            score,
            bbox: BoundingBox::from_array(b).unwrap(),
        }
    }

    fn player(frame: u64, x: f64, y: f64) -> Detection {
        det(frame, ClassLabel::Player, 0.9, [x, y, x + 40.0, y + 90.0])
    }

    #[test]
    fn genesis_creates_tentative_track() {
        let mut t = ByteTracker::new(TrackerConfig::default()).unwrap();
        let out = t.step(0, &[player(0, 100.0, 100.0)]).unwrap();
        assert!(out.assignments.is_empty());
        assert_eq!(t.tracks().len(), 1);
        assert_eq!(t.tracks()[0].status, TrackStatus::Tentative);
        assert_eq!(t.tracks()[0].id, 1);
    }

    #[test]
    fn overlapping_detection_keeps_id() {
        let mut t = ByteTracker::new(TrackerConfig::default()).unwrap();
        t.step(0, &[player(0, 100.0, 100.0)]).unwrap();
        let out = t.step(1, &[player(1, 101.0, 100.0)]).unwrap();
        assert_eq!(out.assignments, vec![(1, 0)]);
        let out = t.step(2, &[player(2, 102.0, 100.0)]).unwrap();
        assert_eq!(out.assignments, vec![(1, 0)]);
        assert_eq!(t.tracks().len(), 1);
        assert_eq!(t.tracks()[0].status, TrackStatus::Active);
        assert_eq!(t.tracks()[0].history.len(), 3);
    }

    #[test]
    fn low_score_detection_only_rescues_active_tracks() {
        let mut t = ByteTracker::new(TrackerConfig::default()).unwrap();
        t.step(0, &[player(0, 100.0, 100.0)]).unwrap();
        t.step(1, &[player(1, 100.0, 100.0)]).unwrap();
        let mut weak = player(2, 100.0, 100.0);
        weak.score = 0.3;
        let out = t.step(2, &[weak]).unwrap();
        assert_eq!(out.assignments, vec![(1, 0)]);

        // lost track: stage 2 does not apply
        t.step(3, &[]).unwrap();
        assert_eq!(t.tracks()[0].status, TrackStatus::Lost);
        let mut weak = player(4, 100.0, 100.0);
        weak.score = 0.3;
        let out = t.step(4, &[weak]).unwrap();
        assert!(out.assignments.is_empty());
        // a high-score detection brings it back
        let out = t.step(5, &[player(5, 100.0, 100.0)]).unwrap();
        assert_eq!(out.assignments, vec![(1, 0)]);
        assert_eq!(t.tracks()[0].status, TrackStatus::Active);
    }

    #[test]
    fn class_aware_matching() {
        let mut t = ByteTracker::new(TrackerConfig::default()).unwrap();
        t.step(0, &[player(0, 100.0, 100.0)]).unwrap();
        t.step(1, &[player(1, 100.0, 100.0)]).unwrap();
        let referee = det(2, ClassLabel::Referee, 0.9, [100.0, 100.0, 140.0, 190.0]);
        let out = t.step(2, &[referee]).unwrap();
        assert!(out.assignments.is_empty());
        assert_eq!(t.tracks().len(), 2);
        assert_eq!(t.tracks()[1].class, ClassLabel::Referee);
    }

    #[test]
    fn lost_track_removed_after_max_age() {
        let cfg = TrackerConfig {
            max_lost_age: 5,
            ..Default::default()
        };
        let mut t = ByteTracker::new(cfg).unwrap();
        t.step(0, &[player(0, 100.0, 100.0)]).unwrap();
        t.step(1, &[player(1, 100.0, 100.0)]).unwrap();
        for f in 2..=6 {
            t.step(f, &[]).unwrap();
            assert_eq!(t.tracks()[0].status, TrackStatus::Lost);
        }
        t.step(7, &[]).unwrap();
        assert_eq!(t.tracks()[0].status, TrackStatus::Removed);
        t.step(8, &[player(8, 100.0, 100.0)]).unwrap();
        assert_eq!(t.tracks()[1].id, 2);
    }

    #[test]
    fn unconfirmed_track_dies_without_second_match() {
        let mut t = ByteTracker::new(TrackerConfig::default()).unwrap();
        t.step(0, &[player(0, 100.0, 100.0)]).unwrap();
        t.step(1, &[]).unwrap();
        assert_eq!(t.tracks()[0].status, TrackStatus::Removed);
        assert!(!t.tracks()[0].confirmed);
    }

    #[test]
    fn weak_detections_do_not_start_tracks() {
        let mut t = ByteTracker::new(TrackerConfig::default()).unwrap();
        let mut d = player(0, 100.0, 100.0);
        d.score = 0.65;
        t.step(0, &[d]).unwrap();
        assert!(t.tracks().is_empty());
        // wide person box fails the aspect gate, wide ball box does not
        t.step(1, &[det(1, ClassLabel::Player, 0.9, [0.0, 0.0, 200.0, 50.0])]).unwrap();
        assert!(t.tracks().is_empty());
        t.step(2, &[det(2, ClassLabel::Ball, 0.9, [0.0, 0.0, 20.0, 5.0])]).unwrap();
        assert_eq!(t.tracks().len(), 1);
    }

    #[test]
    fn mixed_frames_rejected() {
        let mut t = ByteTracker::new(TrackerConfig::default()).unwrap();
        let err = t.step(3, &[player(3, 0.0, 0.0), player(4, 0.0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::Sequencing { expected: 3, found: 4 }));
        t.step(5, &[]).unwrap();
        assert!(matches!(t.step(5, &[]), Err(Error::Sequencing { .. })));
    }

    #[test]
    fn crossing_objects_keep_ids() {
        // two players walking through each other horizontally, different heights
        let mut dets = Vec::new();
        for f in 0..10u64 {
            let a = 100.0 + 12.0 * f as f64;
            let b = 208.0 - 12.0 * f as f64;
            dets.push(det(f, ClassLabel::Player, 0.9, [a, 100.0, a + 40.0, 190.0]));
            dets.push(det(f, ClassLabel::Player, 0.9, [b, 130.0, b + 44.0, 230.0]));
        }
        let stream = DetectionStream::new(dets).unwrap();
        let tracks = run_sequence(&stream, &TrackerConfig::default()).unwrap();
        assert_eq!(tracks.len(), 2);
        for t in &tracks {
            assert_eq!(t.history.len(), 10);
            let y1 = t.history[0].bbox.y1();
            assert!(t.history.iter().all(|h| h.bbox.y1() == y1), "track {} swapped", t.id);
        }
    }

    #[test]
    fn run_sequence_edge_cases() {
        let empty = DetectionStream::default();
        assert!(run_sequence(&empty, &TrackerConfig::default()).unwrap().is_empty());

        let dets: Vec<_> = (0..100).map(|f| player(f, 100.0 + f as f64, 200.0)).collect();
        let tracks = run_sequence(&DetectionStream::new(dets).unwrap(), &TrackerConfig::default()).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].history.len(), 100);
        let frames: Vec<u64> = tracks[0].history.iter().map(|h| h.frame).collect();
        assert!(frames.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = TrackerConfig {
            low_score_floor: 0.7,
            ..Default::default()
        };
        assert!(matches!(ByteTracker::new(cfg), Err(Error::InvalidConfig(_))));
        let cfg = TrackerConfig {
            max_lost_age: 0,
            ..Default::default()
        };
        assert!(ByteTracker::new(cfg).is_err());
    }
}
