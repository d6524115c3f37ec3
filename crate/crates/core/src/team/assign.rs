use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One clustered crop: the track it belongs to, its frame and its cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledSample {
    pub track_id: u64,
    pub frame: u64,
    pub label: u8,
}

/// Team summary line for one track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeamAssignment {
    pub track_id: u64,
    pub team: Option<u8>,
    pub votes_for: u32,
    pub votes_total: u32,
}

/// Majority vote of cluster labels per track. Ties go to the label of the
/// track's earliest labeled sample. Tracks in `track_ids` without samples
/// get `team: None`. Output follows the order of `track_ids`.
pub fn assign_teams(track_ids: &[u64], samples: &[LabeledSample]) -> Vec<TeamAssignment> {
    let mut per_track: BTreeMap<u64, Vec<(u64, u8)>> = BTreeMap::new();
    for s in samples {
        per_track.entry(s.track_id).or_default().push((s.frame, s.label));
    }
    track_ids
        .iter()
        .map(|&id| {
            let Some(votes) = per_track.get_mut(&id) else {
                return TeamAssignment {
                    track_id: id,
                    team: None,
                    votes_for: 0,
                    votes_total: 0,
                };
            };
            votes.sort_unstable();
            let ones = votes.iter().filter(|v| v.1 == 1).count() as u32;
            let total = votes.len() as u32;
            let zeros = total - ones;
            let team = match zeros.cmp(&ones) {
                std::cmp::Ordering::Greater => 0,
                std::cmp::Ordering::Less => 1,
                std::cmp::Ordering::Equal => votes[0].1,
            };
            TeamAssignment {
                track_id: id,
                team: Some(team),
                votes_for: if team == 0 { zeros } else { ones },
                votes_total: total,
            }
        })
        .collect()
}
