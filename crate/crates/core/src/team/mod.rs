//! Two-team segmentation of player tracks.
//!
//! All sampled player crops of a sequence are clustered once: embeddings are
//! reduced to 3-D with UMAP and split by 2-means. Each player track then takes
//! the majority cluster of its own crops, so a track cannot change team from
//! frame to frame.

pub mod assign;
pub mod fuzzy;
pub mod kmeans;
pub mod knn;
pub mod layout;

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::geometry::{iou, ClassLabel, Embedding};
use crate::ingest::DetectionStream;
use crate::tracker::output::TrackRow;

pub use assign::{assign_teams, LabeledSample, TeamAssignment};
pub use fuzzy::{fuzzy_simplicial_set, smooth_knn, FuzzyGraph};
pub use kmeans::{kmeans, KMeansResult};
pub use knn::{knn_graph, NeighborGraph};
pub use layout::{optimize_layout, Point3, UmapConfig};

/// Minimum IoU between an embedded detection and a track box for the crop to
/// count towards that track.
const LINK_MIN_IOU: f64 = 0.5;

/// Cluster labels (0 or 1) for each vector.
///
/// Fewer than three vectors cannot form a neighbor graph; two are split by
/// 2-means directly, one gets label 0. Otherwise the neighbor count is capped
/// at `n - 1`.
pub fn cluster_embeddings<P: AsRef<[f64]> + Sync>(vectors: &[P], cfg: &UmapConfig) -> Result<Vec<u8>> {
    cfg.validate()?;
    let labels = match vectors.len() {
        0 => Vec::new(),
        1 => vec![0],
        2 => kmeans(vectors, 2, cfg.seed)?.labels,
        n => {
            let k = cfg.n_neighbors.min(n - 1);
            let graph = fuzzy_simplicial_set(&knn_graph(vectors, k)?);
            let coords = optimize_layout(&graph, cfg)?;
            kmeans(&coords, 2, cfg.seed)?.labels
        }
    };
    Ok(labels.into_iter().map(|l| l as u8).collect())
}

/// Embedded player crops attributed to tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkedCrop<'a> {
    pub track_id: u64,
    pub frame: u64,
    pub embedding: &'a Embedding,
}

/// Attributes each player embedding on a sampled frame to the player track
/// whose box on that frame overlaps the embedded detection best.
pub fn link_embeddings<'a>(
    tracks: &[TrackRow],
    detections: &DetectionStream,
    embeddings: &'a [Embedding],
    embedding_stride: u64,
) -> Result<Vec<LinkedCrop<'a>>> {
    if embedding_stride == 0 {
        return Err(Error::InvalidConfig("embedding stride must be at least 1".into()));
    }
    let mut by_frame: BTreeMap<u64, Vec<&TrackRow>> = BTreeMap::new();
    for row in tracks.iter().filter(|r| r.class == ClassLabel::Player) {
        by_frame.entry(row.frame).or_default().push(row);
    }
    let mut linked = Vec::new();
    for emb in embeddings.iter().filter(|e| e.frame % embedding_stride == 0) {
        let Some(det) = detections.frame(emb.frame).get(emb.det_index) else {
            return Err(Error::data(format!(
                "embedding references missing detection (frame {}, index {})",
                emb.frame, emb.det_index
            )));
        };
        if det.class != ClassLabel::Player {
            continue;
        }
        let best = by_frame
            .get(&emb.frame)
            .into_iter()
            .flatten()
            .map(|r| (iou(&r.bbox, &det.bbox), r.track_id))
            .filter(|&(o, _)| o >= LINK_MIN_IOU)
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        if let Some((_, track_id)) = best {
            linked.push(LinkedCrop {
                track_id,
                frame: emb.frame,
                embedding: emb,
            });
        }
    }
    Ok(linked)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeamReport {
    /// One entry per track id in the input, in id order.
    pub assignments: Vec<TeamAssignment>,
    pub player_tracks: usize,
    pub unassigned_players: usize,
    pub samples: usize,
}

impl TeamReport {
    pub fn team_of(&self, track_id: u64) -> Option<u8> {
        self.assignments
            .binary_search_by_key(&track_id, |a| a.track_id)
            .ok()
            .and_then(|i| self.assignments[i].team)
    }
}

/// Global clustering of all linked player crops followed by the per-track
/// vote. Non-player tracks are reported with `team: None`.
pub fn assign_track_teams(
    tracks: &[TrackRow],
    detections: &DetectionStream,
    embeddings: &[Embedding],
    embedding_stride: u64,
    cfg: &UmapConfig,
) -> Result<TeamReport> {
    let all_ids: BTreeSet<u64> = tracks.iter().map(|r| r.track_id).collect();
    let player_ids: BTreeSet<u64> = tracks
        .iter()
        .filter(|r| r.class == ClassLabel::Player)
        .map(|r| r.track_id)
        .collect();
    let crops = link_embeddings(tracks, detections, embeddings, embedding_stride)?;
    if !player_ids.is_empty() && crops.is_empty() {
        return Err(Error::data(format!(
            "no embeddings could be linked to any of the {} player tracks",
            player_ids.len()
        )));
    }
    let vectors: Vec<&[f64]> = crops.iter().map(|c| c.embedding.vector()).collect();
    let labels = cluster_embeddings(&vectors, cfg)?;
    let samples: Vec<LabeledSample> = crops
        .iter()
        .zip(&labels)
        .map(|(c, &label)| LabeledSample {
            track_id: c.track_id,
            frame: c.frame,
            label,
        })
        .collect();
    let player_list: Vec<u64> = player_ids.iter().copied().collect();
    let voted = assign_teams(&player_list, &samples);
    let unassigned_players = voted.iter().filter(|a| a.team.is_none()).count();
    let mut assignments: Vec<TeamAssignment> = all_ids
        .iter()
        .map(|&id| TeamAssignment {
            track_id: id,
            team: None,
            votes_for: 0,
            votes_total: 0,
        })
        .collect();
    for v in voted {
        let i = assignments.binary_search_by_key(&v.track_id, |a| a.track_id).expect("player ids subset");
        assignments[i] = v;
    }
    Ok(TeamReport {
        assignments,
        player_tracks: player_ids.len(),
        unassigned_players,
        samples: samples.len(),
    })
}
