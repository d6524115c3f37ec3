//! Domain types shared by every stage: boxes, class labels, detections and
//! appearance embeddings.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension of every appearance embedding.
pub const EMBEDDING_DIM: usize = 512;

/// Axis-aligned box in source-frame pixels, corner (xyxy) format.
///
/// Boxes are half-open real rectangles: area is `(x2 - x1) * (y2 - y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundingBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let coords = [x1, y1, x2, y2];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGeometry(format!(
                "non-finite coordinate in {coords:?}"
            )));
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "negative coordinate in {coords:?}"
            )));
        }
        if x2 <= x1 || y2 <= y1 {
            return Err(Error::InvalidGeometry(format!(
                "inverted or empty box {coords:?}"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_array(c: [f64; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }
    pub fn x2(&self) -> f64 {
        self.x2
    }
    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn to_center_form(&self) -> CenterForm {
        let (cx, cy) = self.center();
        CenterForm {
            cx,
            cy,
            aspect: self.width() / self.height(),
            height: self.height(),
        }
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Kalman measurement form of a box: center, aspect ratio (w/h) and height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterForm {
    pub cx: f64,
    pub cy: f64,
    pub aspect: f64,
    pub height: f64,
}

impl CenterForm {
    pub fn to_box(&self) -> Result<BoundingBox> {
        if !(self.height > 0.0) || !(self.aspect > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "degenerate center form: aspect {} height {}",
                self.aspect, self.height
            )));
        }
        let w = self.aspect * self.height;
        BoundingBox::new(
            self.cx - w / 2.0,
            self.cy - self.height / 2.0,
            self.cx + w / 2.0,
            self.cy + self.height / 2.0,
        )
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.aspect, self.height]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Ball,
    Goalkeeper,
    Player,
    Referee,
}

impl ClassLabel {
    /// All classes in report (alphabetical) order.
    pub const ALL: [ClassLabel; 4] = [
        ClassLabel::Ball,
        ClassLabel::Goalkeeper,
        ClassLabel::Player,
        ClassLabel::Referee,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ClassLabel::Ball => "ball",
            ClassLabel::Goalkeeper => "goalkeeper",
            ClassLabel::Player => "player",
            ClassLabel::Referee => "referee",
        }
    }

    /// Position in [`ClassLabel::ALL`].
    pub fn ordinal(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.name();
        let mut chars = name.chars();
        let first = chars.next().map(|c| c.to_ascii_uppercase()).unwrap_or(' ');
        f.pad(&format!("{first}{}", chars.as_str()))
    }
}

/// Bijection between integer class ids in files and [`ClassLabel`]s.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ClassLabel>", into = "Vec<ClassLabel>")]
pub struct ClassMap {
    by_id: [ClassLabel; 4],
}

impl Default for ClassMap {
    fn default() -> Self {
        Self {
            by_id: ClassLabel::ALL,
        }
    }
}

impl ClassMap {
    /// `order[i]` is the class carrying id `i`.
    pub fn new(order: [ClassLabel; 4]) -> Result<Self> {
        for class in ClassLabel::ALL {
            if !order.contains(&class) {
                return Err(Error::InvalidConfig(format!(
                    "class map {order:?} does not contain {class}"
                )));
            }
        }
        Ok(Self { by_id: order })
    }

    pub fn label(&self, id: i64) -> Option<ClassLabel> {
        usize::try_from(id).ok().and_then(|i| self.by_id.get(i).copied())
    }

    pub fn id(&self, label: ClassLabel) -> u32 {
        self.by_id.iter().position(|&c| c == label).expect("bijective map") as u32
    }
}

impl TryFrom<Vec<ClassLabel>> for ClassMap {
    type Error = Error;

    fn try_from(v: Vec<ClassLabel>) -> Result<Self> {
        let order: [ClassLabel; 4] = v
            .try_into()
            .map_err(|v: Vec<_>| Error::InvalidConfig(format!("class map needs 4 entries, got {}", v.len())))?;
        ClassMap::new(order)
    }
}

impl From<ClassMap> for Vec<ClassLabel> {
    fn from(m: ClassMap) -> Self {
        m.by_id.to_vec()
    }
}

/// One classified, scored box on one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame: u64,
    pub class: ClassLabel,
    pub score: f64,
    pub bbox: BoundingBox,
}

impl Detection {
    pub fn new(frame: u64, class: ClassLabel, score: f64, bbox: BoundingBox) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidGeometry(format!("score {score} outside [0, 1]")));
        }
        Ok(Self {
            frame,
            class,
            score,
            bbox,
        })
    }
}

/// Appearance vector for the `det_index`-th detection of `frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub frame: u64,
    pub det_index: usize,
    vector: Vec<f64>,
}

impl Embedding {
    pub fn new(frame: u64, det_index: usize, vector: Vec<f64>) -> Result<Self> {
        if vector.len() != EMBEDDING_DIM {
            return Err(Error::InvalidGeometry(format!(
                "embedding dimension {}, expected {EMBEDDING_DIM}",
                vector.len()
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGeometry("non-finite embedding component".into()));
        }
        Ok(Self {
            frame,
            det_index,
            vector,
        })
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }
}
