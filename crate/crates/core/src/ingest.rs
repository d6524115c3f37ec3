//! Frame sampling, line-delimited JSON streams (detections, embeddings,
//! ground truth) and the letterbox coordinate mapping.
//!
//! Detections are always stored in original frame pixel space.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, ClassLabel, ClassMap, Detection, Embedding, EMBEDDING_DIM};

/// Default stride for appearance sampling (one frame per second at 30 fps).
pub const DEFAULT_EMBEDDING_STRIDE: u64 = 30;
/// Default model input size of the detector.
pub const DEFAULT_MODEL_SIZE: u32 = 1280;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePlan {
    pub total_frames: u64,
    pub stride: u64,
    pub indices: Vec<u64>,
}

impl FramePlan {
    pub fn new(total_frames: u64, stride: u64) -> Result<Self> {
        Ok(Self {
            total_frames,
            stride,
            indices: sample_frame_indices(total_frames, stride)?,
        })
    }

    pub fn contains(&self, frame: u64) -> bool {
        frame < self.total_frames && frame.is_multiple_of(self.stride)
    }
}

/// `0, stride, 2*stride, ...` below `total`.
pub fn sample_frame_indices(total: u64, stride: u64) -> Result<Vec<u64>> {
    if stride == 0 {
        return Err(Error::InvalidConfig("frame stride must be at least 1".into()));
    }
    Ok((0..total).step_by(stride as usize).collect())
}

/// Detections ordered by non-decreasing frame index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionStream {
    detections: Vec<Detection>,
}

impl DetectionStream {
    pub fn new(detections: Vec<Detection>) -> Result<Self> {
        if let Some(w) = detections.windows(2).find(|w| w[1].frame < w[0].frame) {
            return Err(Error::data(format!(
                "detection frames must be non-decreasing ({} after {})",
                w[1].frame, w[0].frame
            )));
        }
        Ok(Self { detections })
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    /// Contiguous per-frame groups in frame order.
    pub fn frames(&self) -> impl Iterator<Item = (u64, &[Detection])> + '_ {
        self.detections
            .chunk_by(|a, b| a.frame == b.frame)
            .map(|chunk| (chunk[0].frame, chunk))
    }

    /// Detections of one frame, in stream order.
    pub fn frame(&self, frame: u64) -> &[Detection] {
        let start = self.detections.partition_point(|d| d.frame < frame);
        let end = self.detections.partition_point(|d| d.frame <= frame);
        &self.detections[start..end]
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.detections.last().map(|d| d.frame)
    }

    pub fn into_inner(self) -> Vec<Detection> {
        self.detections
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    frame: u64,
    class_id: i64,
    score: f64,
    bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingRecord {
    frame: u64,
    det_index: usize,
    vec: Vec<f64>,
}

/// Ground-truth record as written by the simulator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub frame: u64,
    pub object_id: u64,
    pub class_id: i64,
    pub bbox: [f64; 4],
}

/// Reads non-blank lines of `reader` as JSON records of type `T`, returning
/// each with its 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead, origin: &str) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            origin: origin.to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            origin: origin.to_string(),
            line: lineno,
            message: e.to_string(),
        })?;
        out.push((lineno, record));
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(mut writer: impl Write, records: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, &r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

fn invalid(origin: &str, line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        origin: origin.to_string(),
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

pub(crate) fn parse_class(origin: &str, line: usize, id: i64, classes: &ClassMap) -> Result<ClassLabel> {
    classes
        .label(id)
        .ok_or_else(|| invalid(origin, line, "class_id", format!("unknown class id {id}")))
}

pub(crate) fn parse_bbox(origin: &str, line: usize, c: [f64; 4]) -> Result<BoundingBox> {
    BoundingBox::from_array(c).map_err(|e| invalid(origin, line, "bbox", e.to_string()))
}

pub(crate) fn parse_score(origin: &str, line: usize, score: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&score) {
        return Err(invalid(origin, line, "score", format!("{score} outside [0, 1]")));
    }
    Ok(score)
}

/// Parses a line-delimited detection stream. `origin` names the source in
/// error messages (a path, or "adapter").
pub fn parse_detections(reader: impl BufRead, origin: &str, classes: &ClassMap) -> Result<DetectionStream> {
    let mut detections = Vec::new();
    let mut last_frame = 0;
    for (line, r) in read_jsonl::<DetectionRecord>(reader, origin)? {
        let class = parse_class(origin, line, r.class_id, classes)?;
        let score = parse_score(origin, line, r.score)?;
        let bbox = parse_bbox(origin, line, r.bbox)?;
        if r.frame < last_frame {
            return Err(invalid(
                origin,
                line,
                "frame",
                format!("frame {} after frame {last_frame}", r.frame),
            ));
        }
        last_frame = r.frame;
        detections.push(Detection {
            frame: r.frame,
            class,
            score,
            bbox,
        });
    }
    DetectionStream::new(detections)
}

pub fn write_detections(writer: impl Write, stream: &DetectionStream, classes: &ClassMap) -> std::io::Result<()> {
    write_jsonl(
        writer,
        stream.detections().iter().map(|d| DetectionRecord {
            frame: d.frame,
            class_id: classes.id(d.class) as i64,
            score: d.score,
            bbox: d.bbox.to_array(),
        }),
    )
}

/// Parses an embedding stream. When `detections` is given every record must
/// reference an existing detection (frame, index within that frame).
pub fn parse_embeddings(
    reader: impl BufRead,
    origin: &str,
    detections: Option<&DetectionStream>,
) -> Result<Vec<Embedding>> {
    let mut out = Vec::new();
    for (line, r) in read_jsonl::<EmbeddingRecord>(reader, origin)? {
        if r.vec.len() != EMBEDDING_DIM {
            return Err(Error::Dimension {
                origin: origin.to_string(),
                line,
                found: r.vec.len(),
                expected: EMBEDDING_DIM,
            });
        }
        if let Some(stream) = detections {
            if r.det_index >= stream.frame(r.frame).len() {
                return Err(Error::Link {
                    origin: origin.to_string(),
                    line,
                    frame: r.frame,
                    det_index: r.det_index,
                });
            }
        }
        let emb = Embedding::new(r.frame, r.det_index, r.vec)
            .map_err(|e| invalid(origin, line, "vec", e.to_string()))?;
        out.push(emb);
    }
    Ok(out)
}

pub fn write_embeddings<'a>(writer: impl Write, embeddings: impl IntoIterator<Item = &'a Embedding>) -> std::io::Result<()> {
    write_jsonl(
        writer,
        embeddings.into_iter().map(|e| EmbeddingRecord {
            frame: e.frame,
            det_index: e.det_index,
            vec: e.vector().to_vec(),
        }),
    )
}

/// Square letterbox used by the detector: the frame is scaled so its longer
/// side equals `model_size` and centered with padding on the shorter axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LetterboxTransform {
    pub orig_width: f64,
    pub orig_height: f64,
    pub model_size: f64,
    pub scale: f64,
    pub pad_x: f64,
    pub pad_y: f64,
}

impl LetterboxTransform {
    pub fn new(orig_width: u32, orig_height: u32, model_size: u32) -> Result<Self> {
        if orig_width == 0 || orig_height == 0 || model_size == 0 {
            return Err(Error::InvalidConfig(format!(
                "letterbox dimensions must be positive ({orig_width}x{orig_height} -> {model_size})"
            )));
        }
        let (w, h, m) = (orig_width as f64, orig_height as f64, model_size as f64);
        let scale = m / w.max(h);
        Ok(Self {
            orig_width: w,
            orig_height: h,
            model_size: m,
            scale,
            pad_x: (m - w * scale) / 2.0,
            pad_y: (m - h * scale) / 2.0,
        })
    }

    /// Frame space to model space.
    pub fn letterbox(&self, b: &BoundingBox) -> Result<BoundingBox> {
        BoundingBox::new(
            b.x1() * self.scale + self.pad_x,
            b.y1() * self.scale + self.pad_y,
            b.x2() * self.scale + self.pad_x,
            b.y2() * self.scale + self.pad_y,
        )
    }

    /// Model space back to frame space, clamped to the frame. Returns `None`
    /// when the clamped box is empty (e.g. it lies entirely in the padding).
    pub fn unletterbox(&self, b: &BoundingBox) -> Option<BoundingBox> {
        let fx = |x: f64| ((x - self.pad_x) / self.scale).clamp(0.0, self.orig_width);
        let fy = |y: f64| ((y - self.pad_y) / self.scale).clamp(0.0, self.orig_height);
        BoundingBox::new(fx(b.x1()), fy(b.y1()), fx(b.x2()), fy(b.y2())).ok()
    }
}
