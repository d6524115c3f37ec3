//! Synthetic match generator: ground-truth trajectories, a corrupted
//! detection stream and appearance embeddings, all from one seed.
//!
//! Motion lives in image space. Every non-ball object wanders between random
//! waypoints inside its own cell of a grid laid over the frame; balls roam the
//! whole frame. Movement between waypoints is at constant speed.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GroundTruthObject;
use crate::geometry::{iou, BoundingBox, ClassLabel, ClassMap, Detection, Embedding, EMBEDDING_DIM};
use crate::ingest::{write_jsonl, DetectionStream, DEFAULT_EMBEDDING_STRIDE};

const STREAM_MOTION: u64 = 0;
const STREAM_CORRUPTION: u64 = 1;
const STREAM_FALSE_POSITIVES: u64 = 2;
const STREAM_EMBEDDINGS: u64 = 3;

/// Mean detection score of an unoccluded object.
const SCORE_MEAN: f64 = 0.9;
/// Drop of the mean score per unit of overlap IoU with another object.
const SCORE_OVERLAP_PENALTY: f64 = 0.4;
const SCORE_SIGMA: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Roster {
    pub players_per_team: u32,
    pub goalkeepers: u32,
    pub referees: u32,
    pub balls: u32,
}

impl Default for Roster {
    fn default() -> Self {
        Roster {
            players_per_team: 10,
            goalkeepers: 2,
            referees: 1,
            balls: 1,
        }
    }
}

impl Roster {
    pub fn len(&self) -> usize {
        (2 * self.players_per_team + self.goalkeepers + self.referees + self.balls) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The object leaves the frame at `exit_frame` and is visible again from
/// `reentry_frame`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitEvent {
    pub object: u64,
    pub exit_frame: u64,
    pub reentry_frame: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub width: u32,
    pub height: u32,
    pub frames: u64,
    pub roster: Roster,
    /// Player speed in pixels per frame; each object scales it by a random
    /// factor in [0.6, 1.2).
    pub speed: f64,
    pub ball_speed_multiplier: f64,
    /// Per-frame positional jitter of the ground truth, pixels.
    pub jitter_sigma: f64,
    pub dropout: f64,
    pub box_noise_sigma: f64,
    /// Expected false positives per frame.
    pub false_positive_rate: f64,
    pub occlusion: bool,
    pub occlusion_threshold: f64,
    pub script: Vec<ExitEvent>,
    pub embedding_stride: u64,
    /// Norm scale of the embedding noise vector; each of the 512 components
    /// has standard deviation `embedding_noise / sqrt(512)`.
    pub embedding_noise: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            width: 1920,
            height: 1080,
            frames: 300,
            roster: Roster::default(),
            speed: 2.5,
            ball_speed_multiplier: 1.5,
            jitter_sigma: 0.0,
            dropout: 0.0,
            box_noise_sigma: 0.0,
            false_positive_rate: 0.0,
            occlusion: false,
            occlusion_threshold: 0.6,
            script: Vec::new(),
            embedding_stride: DEFAULT_EMBEDDING_STRIDE,
            embedding_noise: 0.1,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The default scene with 10% detection dropout and overlap occlusion.
    pub fn robustness() -> Self {
        SimConfig {
            dropout: 0.1,
            occlusion: true,
            ..SimConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.width < 64 || self.height < 64 {
            return bad(format!("frame size {}x{} below 64x64", self.width, self.height));
        }
        if self.frames == 0 {
            return bad("frames must be at least 1".into());
        }
        if self.roster.is_empty() {
            return bad("roster is empty".into());
        }
        for (name, p) in [
            ("dropout", self.dropout),
            ("occlusion_threshold", self.occlusion_threshold),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        for (name, v) in [
            ("jitter_sigma", self.jitter_sigma),
            ("box_noise_sigma", self.box_noise_sigma),
            ("false_positive_rate", self.false_positive_rate),
            ("embedding_noise", self.embedding_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        for (name, v) in [("speed", self.speed), ("ball_speed_multiplier", self.ball_speed_multiplier)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        if self.embedding_stride == 0 {
            return bad("embedding_stride must be at least 1".into());
        }
        for e in &self.script {
            if e.object >= self.roster.len() as u64 {
                return bad(format!("script names object {} outside the roster", e.object));
            }
            if e.reentry_frame <= e.exit_frame {
                return bad(format!(
                    "object {} re-enters at frame {} before leaving at frame {}",
                    e.object, e.reentry_frame, e.exit_frame
                ));
            }
        }
        Ok(())
    }
}

/// One roster entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimObject {
    pub object_id: u64,
    pub class: ClassLabel,
    pub team: Option<u8>,
    pub width: f64,
    pub height: f64,
}

/// Roster file line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterRecord {
    pub object_id: u64,
    pub class_id: i64,
    pub team: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub roster: Vec<SimObject>,
    /// Ordered by frame, then object id.
    pub ground_truth: Vec<GroundTruthObject>,
    pub detections: DetectionStream,
    /// Source object of each detection; `None` for false positives.
    pub sources: Vec<Option<u64>>,
    pub embeddings: Vec<Embedding>,
}

impl SimOutput {
    pub fn team_of(&self, object_id: u64) -> Option<u8> {
        self.roster.get(object_id as usize).and_then(|o| o.team)
    }

    pub fn write_ground_truth(&self, writer: impl Write, classes: &ClassMap) -> std::io::Result<()> {
        write_jsonl(writer, self.ground_truth.iter().map(|g| g.to_record(classes)))
    }

    pub fn write_roster(&self, writer: impl Write, classes: &ClassMap) -> std::io::Result<()> {
        write_jsonl(
            writer,
            self.roster.iter().map(|o| RosterRecord {
                object_id: o.object_id,
                class_id: classes.id(o.class) as i64,
                team: o.team,
            }),
        )
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ids 0.. are team 0 players, then team 1 players, goalkeepers, referees
/// and balls.
fn build_roster(r: &Roster, rng: &mut ChaCha8Rng) -> Vec<SimObject> {
    let mut classes: Vec<(ClassLabel, Option<u8>)> = Vec::with_capacity(r.len());
    for team in 0..2u8 {
        classes.extend((0..r.players_per_team).map(|_| (ClassLabel::Player, Some(team))));
    }
    classes.extend((0..r.goalkeepers).map(|_| (ClassLabel::Goalkeeper, None)));
    classes.extend((0..r.referees).map(|_| (ClassLabel::Referee, None)));
    classes.extend((0..r.balls).map(|_| (ClassLabel::Ball, None)));
    classes
        .into_iter()
        .enumerate()
        .map(|(i, (class, team))| {
            let (width, height) = if class == ClassLabel::Ball {
                (16.0, 16.0)
            } else {
                (rng.random_range(26.0..34.0_f64).round(), rng.random_range(60.0..76.0_f64).round())
            };
            SimObject {
                object_id: i as u64,
                class,
                team,
                width,
                height,
            }
        })
        .collect()
}

/// Axis-aligned region for box centers: `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy)]
struct Region {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Region {
    fn shrink(&self, w: f64, h: f64) -> Region {
        let cx = (self.x0 + self.x1) / 2.0;
        let cy = (self.y0 + self.y1) / 2.0;
        let hw = ((self.x1 - self.x0 - w) / 2.0).max(0.0);
        let hh = ((self.y1 - self.y0 - h) / 2.0).max(0.0);
        Region {
            x0: cx - hw,
            x1: cx + hw,
            y0: cy - hh,
            y1: cy + hh,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let pick = |rng: &mut ChaCha8Rng, a: f64, b: f64| if b > a { rng.random_range(a..b) } else { a };
        (pick(rng, self.x0, self.x1), pick(rng, self.y0, self.y1))
    }

    fn clamp(&self, p: (f64, f64)) -> (f64, f64) {
        (p.0.clamp(self.x0, self.x1), p.1.clamp(self.y0, self.y1))
    }
}

/// Disjoint grid cells, one per non-ball object, assigned in shuffled order.
fn cells(n: usize, width: f64, height: f64, rng: &mut ChaCha8Rng) -> Vec<Region> {
    if n == 0 {
        return Vec::new();
    }
    let cols = ((n as f64 * width / height).sqrt().ceil() as usize).max(1);
    let rows = n.div_ceil(cols);
    let (cw, ch) = (width / cols as f64, height / rows as f64);
    let mut all: Vec<Region> = (0..rows * cols)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            Region {
                x0: c as f64 * cw,
                x1: (c + 1) as f64 * cw,
                y0: r as f64 * ch,
                y1: (r + 1) as f64 * ch,
            }
        })
        .collect();
    // Fisher-Yates keeps the draw count independent of the rand version
    for i in (1..all.len()).rev() {
        let j = rng.random_range(0..=i);
        all.swap(i, j);
    }
    all.truncate(n);
    all
}

/// Box centers for frames `0..frames`.
fn trajectory(region: Region, speed: f64, frames: u64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut pos = region.sample(rng);
    let mut target = region.sample(rng);
    let mut out = Vec::with_capacity(frames as usize);
    for _ in 0..frames {
        out.push(pos);
        let (dx, dy) = (target.0 - pos.0, target.1 - pos.1);
        let dist = dx.hypot(dy);
        if dist <= speed {
            pos = target;
            target = region.sample(rng);
        } else {
            pos = (pos.0 + dx / dist * speed, pos.1 + dy / dist * speed);
        }
    }
    out
}

fn visible(script: &[ExitEvent], object: u64, frame: u64) -> bool {
    !script
        .iter()
        .any(|e| e.object == object && (e.exit_frame..e.reentry_frame).contains(&frame))
}

fn ground_truth(cfg: &SimConfig, roster: &[SimObject], rng: &mut ChaCha8Rng) -> Result<Vec<GroundTruthObject>> {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let frame_region = Region {
        x0: 0.0,
        x1: w,
        y0: 0.0,
        y1: h,
    };
    let fixed: Vec<&SimObject> = roster.iter().filter(|o| o.class != ClassLabel::Ball).collect();
    let grid = cells(fixed.len(), w, h, rng);
    let mut regions: BTreeMap<u64, Region> = fixed.iter().zip(grid).map(|(o, r)| (o.object_id, r)).collect();
    let jitter = Normal::new(0.0, cfg.jitter_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut per_object: Vec<Vec<(f64, f64)>> = Vec::with_capacity(roster.len());
    for o in roster {
        let base = regions.remove(&o.object_id).unwrap_or(frame_region);
        let region = base.shrink(o.width, o.height);
        let speed = cfg.speed
            * rng.random_range(0.6..1.2)
            * if o.class == ClassLabel::Ball {
                cfg.ball_speed_multiplier
            } else {
                1.0
            };
        let mut path = trajectory(region, speed, cfg.frames, rng);
        for p in &mut path {
            let j = (jitter.sample(rng), jitter.sample(rng));
            *p = frame_region.shrink(o.width, o.height).clamp((p.0 + j.0, p.1 + j.1));
        }
        per_object.push(path);
    }

    let mut out = Vec::with_capacity(roster.len() * cfg.frames as usize);
    for frame in 0..cfg.frames {
        for (o, path) in roster.iter().zip(&per_object) {
            if !visible(&cfg.script, o.object_id, frame) {
                continue;
            }
            let (cx, cy) = path[frame as usize];
            out.push(GroundTruthObject {
                frame,
                object_id: o.object_id,
                class: o.class,
                bbox: BoundingBox::new(
                    cx - o.width / 2.0,
                    cy - o.height / 2.0,
                    cx + o.width / 2.0,
                    cy + o.height / 2.0,
                )?,
            });
        }
    }
    Ok(out)
}

/// True when another object's box is larger and overlaps `g` with IoU above
/// `threshold`.
pub fn is_occluded(g: &GroundTruthObject, frame: &[GroundTruthObject], threshold: f64) -> bool {
    frame
        .iter()
        .any(|o| o.object_id != g.object_id && o.bbox.area() > g.bbox.area() && iou(&g.bbox, &o.bbox) > threshold)
}

/// Adds independent Gaussian noise to each coordinate, keeping the box valid
/// and inside the frame. Exact when `sigma` is 0.
fn noisy_box(b: &BoundingBox, n: [f64; 4], sigma: f64, w: f64, h: f64) -> Result<BoundingBox> {
    if sigma == 0.0 {
        return Ok(*b);
    }
    let c = b.to_array();
    let x1 = (c[0] + sigma * n[0]).clamp(0.0, w - 1.0);
    let y1 = (c[1] + sigma * n[1]).clamp(0.0, h - 1.0);
    let x2 = (c[2] + sigma * n[2]).clamp(x1 + 1.0, w);
    let y2 = (c[3] + sigma * n[3]).clamp(y1 + 1.0, h);
    BoundingBox::new(x1, y1, x2, y2)
}

/// Generates the full scenario. Deterministic for a fixed config.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let mut motion = rng_for(cfg.seed, STREAM_MOTION);
    let mut corrupt = rng_for(cfg.seed, STREAM_CORRUPTION);
    let mut fp_rng = rng_for(cfg.seed, STREAM_FALSE_POSITIVES);
    let roster = build_roster(&cfg.roster, &mut motion);
    let gt = ground_truth(cfg, &roster, &mut motion)?;
    let fp_count = if cfg.false_positive_rate > 0.0 {
        Some(Poisson::new(cfg.false_positive_rate).map_err(|e| Error::InvalidConfig(e.to_string()))?)
    } else {
        None
    };

    let mut detections = Vec::with_capacity(gt.len());
    let mut sources = Vec::with_capacity(gt.len());
    for frame_gt in gt.chunk_by(|a, b| a.frame == b.frame) {
        for g in frame_gt {
            let overlap = frame_gt
                .iter()
                .filter(|o| o.object_id != g.object_id)
                .map(|o| iou(&g.bbox, &o.bbox))
                .fold(0.0_f64, f64::max);
            let occluded = cfg.occlusion && is_occluded(g, frame_gt, cfg.occlusion_threshold);
            // every draw happens regardless of the corruption settings so
            // that streams for different settings stay coupled
            let u_drop: f64 = corrupt.random();
            let n: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut corrupt));
            let z: f64 = StandardNormal.sample(&mut corrupt);
            if occluded || u_drop < cfg.dropout {
                continue;
            }
            let mean = SCORE_MEAN - SCORE_OVERLAP_PENALTY * overlap;
            let score = (mean + SCORE_SIGMA * z).clamp(mean - 0.1, (mean + 0.08).min(0.99)).clamp(0.01, 0.99);
            detections.push(Detection {
                frame: g.frame,
                class: g.class,
                score,
                bbox: noisy_box(&g.bbox, n, cfg.box_noise_sigma, w, h)?,
            });
            sources.push(Some(g.object_id));
        }
        if let Some(dist) = &fp_count {
            let frame = frame_gt[0].frame;
            let k = dist.sample(&mut fp_rng) as u64;
            for _ in 0..k {
                let size = fp_rng.random_range(10.0..20.0_f64);
                let x = fp_rng.random_range(0.0..w - size);
                let y = fp_rng.random_range(0.0..h - size);
                detections.push(Detection {
                    frame,
                    class: ClassLabel::Ball,
                    score: fp_rng.random_range(0.1..0.8),
                    bbox: BoundingBox::new(x, y, x + size, y + size)?,
                });
                sources.push(None);
            }
        }
    }
    let detections = DetectionStream::new(detections)?;
    let embeddings = synth_embeddings(cfg, &roster, &detections, &sources)?;
    Ok(SimOutput {
        roster,
        ground_truth: gt,
        detections,
        sources,
        embeddings,
    })
}

/// Unit prototype for a roster entry: team 0, team 1, goalkeeper, referee
/// and ball each own a distinct coordinate axis, so prototypes are mutually
/// orthogonal.
pub fn prototype(class: ClassLabel, team: Option<u8>) -> Vec<f64> {
    let axis = match (class, team) {
        (ClassLabel::Player, Some(1)) => 1,
        (ClassLabel::Player, _) => 0,
        (ClassLabel::Goalkeeper, _) => 2,
        (ClassLabel::Referee, _) => 3,
        (ClassLabel::Ball, _) => 4,
    };
    let mut v = vec![0.0; EMBEDDING_DIM];
    v[axis] = 1.0;
    v
}

/// One embedding per detection on every `embedding_stride`-th frame:
/// the source's prototype plus isotropic Gaussian noise. False positives use
/// the ball prototype.
pub fn synth_embeddings(
    cfg: &SimConfig,
    roster: &[SimObject],
    detections: &DetectionStream,
    sources: &[Option<u64>],
) -> Result<Vec<Embedding>> {
    let mut rng = rng_for(cfg.seed, STREAM_EMBEDDINGS);
    let component_sigma = cfg.embedding_noise / (EMBEDDING_DIM as f64).sqrt();
    let mut out = Vec::new();
    let mut offset = 0;
    for (frame, dets) in detections.frames() {
        let frame_sources = &sources[offset..offset + dets.len()];
        offset += dets.len();
        if frame % cfg.embedding_stride != 0 {
            continue;
        }
        for (det_index, src) in frame_sources.iter().enumerate() {
            let mut v = match src.and_then(|id| roster.get(id as usize)) {
                Some(o) => prototype(o.class, o.team),
                None => prototype(ClassLabel::Ball, None),
            };
            for x in &mut v {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x += component_sigma * z;
            }
            out.push(Embedding::new(frame, det_index, v)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(frames: u64) -> SimConfig {
        SimConfig {
            frames,
            ..SimConfig::default()
        }
    }

    #[test]
    fn default_roster_counts() {
        let out = simulate(&small(3)).unwrap();
        let count = |c| out.roster.iter().filter(|o| o.class == c).count();
        assert_eq!(out.roster.len(), 24);
        assert_eq!(count(ClassLabel::Player), 20);
        assert_eq!(count(ClassLabel::Goalkeeper), 2);
        assert_eq!(count(ClassLabel::Referee), 1);
        assert_eq!(count(ClassLabel::Ball), 1);
        assert_eq!(out.roster.iter().filter(|o| o.team == Some(0)).count(), 10);
        assert_eq!(out.roster.iter().filter(|o| o.team == Some(1)).count(), 10);
        assert_eq!(out.ground_truth.len(), 72);
    }

    #[test]
    fn zero_corruption_is_identity() {
        let out = simulate(&small(60)).unwrap();
        assert_eq!(out.detections.len(), out.ground_truth.len());
        for ((d, g), s) in out.detections.detections().iter().zip(&out.ground_truth).zip(&out.sources) {
            assert_eq!(d.bbox, g.bbox);
            assert_eq!((d.frame, d.class, *s), (g.frame, g.class, Some(g.object_id)));
            assert_eq!(iou(&d.bbox, &g.bbox), 1.0);
            assert!((0.0..=1.0).contains(&d.score));
        }
    }

    #[test]
    fn full_dropout_empties_detections() {
        let out = simulate(&SimConfig {
            dropout: 1.0,
            ..small(20)
        })
        .unwrap();
        assert!(out.detections.is_empty());
        assert_eq!(out.ground_truth.len(), 24 * 20);
        assert!(out.embeddings.is_empty());
    }

    #[test]
    fn dropout_count_within_three_sigma() {
        let cfg = SimConfig {
            dropout: 0.1,
            ..SimConfig::default()
        };
        let out = simulate(&cfg).unwrap();
        let n = (24 * 300) as f64;
        let mean = 0.9 * n;
        let sd = (n * 0.1 * 0.9).sqrt();
        let got = out.detections.len() as f64;
        assert!((got - mean).abs() <= 3.0 * sd, "{got} vs {mean} ± {}", 3.0 * sd);
    }

    #[test]
    fn dropout_monotone_in_probability() {
        for seed in 0..5 {
            let mut last = usize::MAX;
            for p in [0.0, 0.1, 0.3, 0.6, 0.9] {
                let out = simulate(&SimConfig {
                    dropout: p,
                    seed,
                    ..small(40)
                })
                .unwrap();
                assert!(out.detections.len() <= last);
                last = out.detections.len();
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = SimConfig {
            dropout: 0.2,
            box_noise_sigma: 1.5,
            false_positive_rate: 0.5,
            jitter_sigma: 0.5,
            ..small(30)
        };
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = simulate(&SimConfig { seed: 1, ..cfg.clone() }).unwrap();
        assert_ne!(simulate(&cfg).unwrap().ground_truth, other.ground_truth);
    }

    #[test]
    fn boxes_stay_in_frame() {
        let out = simulate(&SimConfig {
            jitter_sigma: 5.0,
            box_noise_sigma: 4.0,
            false_positive_rate: 1.0,
            ..small(100)
        })
        .unwrap();
        let inside = |b: &BoundingBox| b.x1() >= 0.0 && b.y1() >= 0.0 && b.x2() <= 1920.0 && b.y2() <= 1080.0;
        assert!(out.ground_truth.iter().all(|g| inside(&g.bbox)));
        assert!(out.detections.detections().iter().all(|d| inside(&d.bbox)));
        assert!(out.sources.iter().any(Option::is_none));
    }

    #[test]
    fn clean_scene_has_no_same_class_overlap() {
        let out = simulate(&SimConfig::default()).unwrap();
        for frame in out.ground_truth.chunk_by(|a, b| a.frame == b.frame) {
            for (i, a) in frame.iter().enumerate() {
                for b in &frame[i + 1..] {
                    if a.class == b.class {
                        assert_eq!(iou(&a.bbox, &b.bbox), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn script_removes_frames_and_is_validated() {
        let cfg = SimConfig {
            script: vec![ExitEvent {
                object: 3,
                exit_frame: 10,
                reentry_frame: 25,
            }],
            ..small(40)
        };
        let out = simulate(&cfg).unwrap();
        assert_eq!(out.ground_truth.len(), 24 * 40 - 15);
        assert!(!out.ground_truth.iter().any(|g| g.object_id == 3 && (10..25).contains(&g.frame)));

        let bad = SimConfig {
            script: vec![ExitEvent {
                object: 3,
                exit_frame: 25,
                reentry_frame: 10,
            }],
            ..small(40)
        };
        assert!(matches!(simulate(&bad), Err(Error::InvalidConfig(_))));
        assert!(matches!(simulate(&small(0)), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn occlusion_rule() {
        let obj = |id, x: f64, w: f64| GroundTruthObject {
            frame: 0,
            object_id: id,
            class: ClassLabel::Player,
            bbox: BoundingBox::new(x, 0.0, x + w, 60.0).unwrap(),
        };
        // IoU(small, big) = 30/32 > 0.6 and big has larger area
        let frame = [obj(0, 0.0, 30.0), obj(1, 0.0, 32.0), obj(2, 200.0, 30.0)];
        assert!(is_occluded(&frame[0], &frame, 0.6));
        assert!(!is_occluded(&frame[1], &frame, 0.6));
        assert!(!is_occluded(&frame[2], &frame, 0.6));
        assert!(!is_occluded(&frame[0], &frame, 0.95));
    }

    #[test]
    fn embeddings_follow_prototypes() {
        let cfg = SimConfig {
            embedding_noise: 0.0,
            ..small(61)
        };
        let out = simulate(&cfg).unwrap();
        // frames 0, 30, 60
        assert_eq!(out.embeddings.len(), 3 * 24);
        assert!(out.embeddings.iter().all(|e| e.frame % 30 == 0));
        let by_team = |t: u8| -> Vec<&Embedding> {
            out.embeddings
                .iter()
                .filter(|e| {
                    let src = out.sources[out.detections.detections().partition_point(|d| d.frame < e.frame) + e.det_index];
                    src.and_then(|id| out.team_of(id)) == Some(t)
                })
                .collect()
        };
        let (a, b) = (by_team(0), by_team(1));
        assert_eq!(a.len(), 30);
        assert!(a.iter().all(|e| e.vector() == a[0].vector()));
        let d: f64 = a[0].vector().iter().zip(b[0].vector()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn embedding_noise_norm_matches_sigma() {
        let cfg = SimConfig {
            embedding_noise: 0.2,
            ..small(1)
        };
        let out = simulate(&cfg).unwrap();
        let mean_norm: f64 = out
            .embeddings
            .iter()
            .zip(&out.roster)
            .map(|(e, o)| {
                let p = prototype(o.class, o.team);
                e.vector().iter().zip(&p).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
            })
            .sum::<f64>()
            / out.embeddings.len() as f64;
        assert!((mean_norm - 0.2).abs() < 0.02, "{mean_norm}");
    }

    #[test]
    fn toml_round_trip() {
        let cfg = SimConfig::from_toml("frames = 12\nseed = 9\n[roster]\nballs = 0\n[[script]]\nobject = 1\nexit_frame = 2\nreentry_frame = 4\n").unwrap();
        assert_eq!((cfg.frames, cfg.seed, cfg.roster.balls, cfg.roster.players_per_team), (12, 9, 0, 10));
        assert_eq!(cfg.script.len(), 1);
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(SimConfig::from_toml(&text).unwrap(), cfg);
        assert!(matches!(SimConfig::from_toml("frames = 0"), Err(Error::InvalidConfig(_))));
        assert!(matches!(SimConfig::from_toml("bogus = 1"), Err(Error::InvalidConfig(_))));
    }
}
