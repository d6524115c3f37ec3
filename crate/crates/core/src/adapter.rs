//! External detector adapter.
//!
//! Neural inference runs out of process. An adapter is either a command that
//! prints the detection stream schema on stdout, or an exported model file
//! handed to a runtime executable that does the same. Boxes the adapter emits
//! in letterboxed model space are mapped back to frame space here.

use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::ClassMap;
use crate::ingest::{parse_detections, DetectionStream, LetterboxTransform, DEFAULT_MODEL_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdapterKind {
    Command,
    ModelFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateSpace {
    /// Letterboxed `model_size` x `model_size` input space.
    #[default]
    Model,
    Frame,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub kind: AdapterKind,
    /// Executable for `command`, exported model for `model-file`.
    pub path: PathBuf,
    /// Runtime executable that loads `path` (model-file adapters only).
    #[serde(default)]
    pub runtime: Option<PathBuf>,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_model_size")]
    pub model_size: u32,
    #[serde(default)]
    pub confidence_floor: f64,
    #[serde(default)]
    pub output_space: CoordinateSpace,
    #[serde(default)]
    pub frame_width: Option<u32>,
    #[serde(default)]
    pub frame_height: Option<u32>,
}

fn default_model_size() -> u32 {
    DEFAULT_MODEL_SIZE
}

impl AdapterConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("adapter config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(Error::InvalidConfig(format!(
                "confidence_floor {} outside [0, 1]",
                self.confidence_floor
            )));
        }
        if self.kind == AdapterKind::ModelFile && self.runtime.is_none() {
            return Err(Error::InvalidConfig("model-file adapter needs a `runtime`".into()));
        }
        if self.output_space == CoordinateSpace::Model && self.letterbox()?.is_none() {
            return Err(Error::InvalidConfig(
                "model-space adapter output needs frame_width and frame_height".into(),
            ));
        }
        Ok(())
    }

    fn letterbox(&self) -> Result<Option<LetterboxTransform>> {
        match (self.frame_width, self.frame_height) {
            (Some(w), Some(h)) => LetterboxTransform::new(w, h, self.model_size).map(Some),
            _ => Ok(None),
        }
    }

    fn command(&self, frame_source: &Path) -> Command {
        let mut cmd = match self.kind {
            AdapterKind::Command => Command::new(&self.path),
            AdapterKind::ModelFile => {
                let mut c = Command::new(self.runtime.as_ref().expect("validated"));
                c.args(&self.args).arg(&self.path);
                c.arg(frame_source);
                return c;
            }
        };
        cmd.args(&self.args).arg(frame_source);
        cmd
    }
}

/// Runs the configured adapter over `frame_source` and returns its detections
/// in original frame space.
pub fn run_external_detector(frame_source: &Path, cfg: &AdapterConfig, classes: &ClassMap) -> Result<DetectionStream> {
    cfg.validate()?;
    let mut cmd = cfg.command(frame_source);
    let output = cmd
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .output()
        .map_err(|e| Error::Adapter(format!("failed to launch {:?}: {e}", cmd.get_program())))?;
    if !output.status.success() {
        return Err(Error::Adapter(format!(
            "{:?} exited with {}: {}",
            cmd.get_program(),
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let raw = parse_detections(BufReader::new(output.stdout.as_slice()), "adapter", classes)?;
    let letterbox = match cfg.output_space {
        CoordinateSpace::Model => cfg.letterbox()?,
        CoordinateSpace::Frame => None,
    };
    let kept = raw
        .into_inner()
        .into_iter()
        .filter(|d| d.score >= cfg.confidence_floor)
        .filter_map(|mut d| {
            if let Some(t) = &letterbox {
                d.bbox = t.unletterbox(&d.bbox)?;
            }
            Some(d)
        })
        .collect();
    DetectionStream::new(kept)
}
