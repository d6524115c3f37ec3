//! Track stream files: one record per (track, frame) in JSON lines or CSV.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::TrackRecord;
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, ClassLabel, ClassMap};
use crate::ingest::{parse_bbox, parse_class, parse_score, read_jsonl, write_jsonl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackOutputRecord {
    pub frame: u64,
    pub track_id: u64,
    pub class_id: i64,
    pub team: Option<u8>,
    pub score: f64,
    pub bbox: [f64; 4],
}

/// Output rows for every confirmed track, ordered by frame then track id.
pub fn track_records(tracks: &[TrackRecord], classes: &ClassMap) -> Vec<TrackOutputRecord> {
    let mut rows: Vec<TrackOutputRecord> = tracks
        .iter()
        .filter(|t| t.confirmed)
        .flat_map(|t| {
            t.history.iter().map(move |h| TrackOutputRecord {
                frame: h.frame,
                track_id: t.id,
                class_id: classes.id(t.class) as i64,
                team: t.team,
                score: h.score,
                bbox: h.bbox.to_array(),
            })
        })
        .collect();
    rows.sort_by_key(|r| (r.frame, r.track_id));
    rows
}

/// In-memory equivalent of reading back the rows [`track_records`] writes.
pub fn track_rows(tracks: &[TrackRecord]) -> Vec<TrackRow> {
    let mut rows: Vec<TrackRow> = tracks
        .iter()
        .filter(|t| t.confirmed)
        .flat_map(|t| {
            t.history.iter().map(move |h| TrackRow {
                frame: h.frame,
                track_id: t.id,
                class: t.class,
                team: t.team,
                score: h.score,
                bbox: h.bbox,
            })
        })
        .collect();
    rows.sort_by_key(|r| (r.frame, r.track_id));
    rows
}

pub fn write_tracks_jsonl(writer: impl Write, rows: &[TrackOutputRecord]) -> std::io::Result<()> {
    write_jsonl(writer, rows)
}

/// CSV with the same columns as the JSON records; `bbox` is a JSON array and
/// an unassigned `team` is an empty field.
pub fn write_tracks_csv(writer: impl Write, rows: &[TrackOutputRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::data(format!("csv: {e}"));
    w.write_record(["frame", "track_id", "class_id", "team", "score", "bbox"])
        .map_err(csv_err)?;
    for r in rows {
        let bbox = serde_json::to_string(&r.bbox).expect("array serializes");
        w.write_record([
            r.frame.to_string(),
            r.track_id.to_string(),
            r.class_id.to_string(),
            r.team.map(|t| t.to_string()).unwrap_or_default(),
            serde_json::to_string(&r.score).expect("float serializes"),
            bbox,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::data(format!("csv: {e}")))?;
    Ok(())
}

/// A validated track row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow {
    pub frame: u64,
    pub track_id: u64,
    pub class: ClassLabel,
    pub team: Option<u8>,
    pub score: f64,
    pub bbox: BoundingBox,
}

pub fn read_tracks(reader: impl BufRead, origin: &str, classes: &ClassMap) -> Result<Vec<TrackRow>> {
    read_jsonl::<TrackOutputRecord>(reader, origin)?
        .into_iter()
        .map(|(line, r)| {
            if matches!(r.team, Some(t) if t > 1) {
                return Err(Error::Validation {
                    origin: origin.to_string(),
                    line,
                    field: "team".into(),
                    message: format!("team {} not in {{0, 1}}", r.team.unwrap_or_default()),
                });
            }
            Ok(TrackRow {
                frame: r.frame,
                track_id: r.track_id,
                class: parse_class(origin, line, r.class_id, classes)?,
                team: r.team,
                score: parse_score(origin, line, r.score)?,
                bbox: parse_bbox(origin, line, r.bbox)?,
            })
        })
        .collect()
}

impl From<&TrackRow> for crate::geometry::Detection {
    fn from(r: &TrackRow) -> Self {
        crate::geometry::Detection {
            frame: r.frame,
            class: r.class,
            score: r.score,
            bbox: r.bbox,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(frame: u64, id: u64, team: Option<u8>) -> TrackOutputRecord {
        TrackOutputRecord {
            frame,
            track_id: id,
            class_id: 2,
            team,
            score: 0.875,
            bbox: [1.0, 2.5, 30.0, 40.0],
        }
    }

    #[test]
    fn jsonl_round_trip_and_schema() {
        let rows = vec![row(0, 1, None), row(1, 1, Some(1))];
        let mut buf = Vec::new();
        write_tracks_jsonl(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            r#"{"frame":0,"track_id":1,"class_id":2,"team":null,"score":0.875,"bbox":[1.0,2.5,30.0,40.0]}"#
        );
        let back = read_tracks(buf.as_slice(), "t", &ClassMap::default()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].team, Some(1));
        assert_eq!(back[1].class, ClassLabel::Player);
    }

    #[test]
    fn csv_has_same_columns() {
        let mut buf = Vec::new();
        write_tracks_csv(&mut buf, &[row(3, 7, Some(0)), row(4, 7, None)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "frame,track_id,class_id,team,score,bbox");
        assert_eq!(lines[1], "3,7,2,0,0.875,\"[1.0,2.5,30.0,40.0]\"");
        assert_eq!(lines[2], "4,7,2,,0.875,\"[1.0,2.5,30.0,40.0]\"");
    }

    #[test]
    fn bad_team_rejected() {
        let text = r#"{"frame":0,"track_id":1,"class_id":2,"team":2,"score":0.5,"bbox":[1,2,3,4]}"#;
        assert!(matches!(
            read_tracks(text.as_bytes(), "t", &ClassMap::default()),
            Err(Error::Validation { ref field, .. }) if field == "team"
        ));
    }
}
