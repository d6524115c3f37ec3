//! Single-camera soccer analytics downstream of an object detector.
//!
//! The pipeline ingests per-frame detections and 512-d appearance embeddings,
//! tracks every object with ByteTrack, splits players into two teams with a
//! UMAP + K-Means clustering of their embeddings, and scores detections with
//! per-class precision, recall and mAP. A synthetic match simulator provides
//! ground truth for all of it.

pub mod adapter;
pub mod cli;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod ingest;
pub mod par;
pub mod render;
pub mod sim;
pub mod team;
pub mod tracker;

pub use error::{Error, Result};
pub use geometry::{iou, BoundingBox, CenterForm, ClassLabel, ClassMap, Detection, Embedding};
