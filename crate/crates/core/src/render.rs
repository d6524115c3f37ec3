//! Per-frame overlays as standalone SVG documents.
//!
//! Boxes are written with their exact coordinates, so an overlay can be
//! checked against ground truth without rasterizing it.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::geometry::ClassLabel;
use crate::tracker::output::TrackRow;

/// Stroke color per class.
pub fn class_color(class: ClassLabel) -> &'static str {
    match class {
        ClassLabel::Ball => "#ffd400",
        ClassLabel::Goalkeeper => "#9b30ff",
        ClassLabel::Player => "#00b3ff",
        ClassLabel::Referee => "#ff3030",
    }
}

/// Label fill per team; players without a team and other classes use white.
pub fn team_color(team: Option<u8>) -> &'static str {
    match team {
        Some(0) => "#00e676",
        Some(1) => "#ff6d00",
        _ => "#ffffff",
    }
}

/// One frame: a `<rect>` per track box plus an id/team text label above it.
/// `teams` overrides the team stored in the rows.
pub fn render_frame_svg(rows: &[&TrackRow], teams: &BTreeMap<u64, u8>, width: u32, height: u32) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r##"<rect x="0" y="0" width="{width}" height="{height}" fill="#1b5e20"/>"##);
    let mut sorted: Vec<&&TrackRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.track_id);
    for r in sorted {
        let b = &r.bbox;
        let team = teams.get(&r.track_id).copied().or(r.team);
        let label = match team {
            Some(t) => format!("{} T{t}", r.track_id),
            None => r.track_id.to_string(),
        };
        let _ = writeln!(
            svg,
            r#"<rect data-track="{}" class="{}" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            r.track_id,
            r.class.name(),
            b.x1(),
            b.y1(),
            b.width(),
            b.height(),
            class_color(r.class)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="12" fill="{}">{label}</text>"#,
            b.x1(),
            (b.y1() - 3.0).max(10.0),
            team_color(team)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Groups rows by frame and renders each frame that has at least one box.
pub fn render_frames(rows: &[TrackRow], teams: &BTreeMap<u64, u8>, width: u32, height: u32) -> Vec<(u64, String)> {
    let mut by_frame: BTreeMap<u64, Vec<&TrackRow>> = BTreeMap::new();
    for r in rows {
        by_frame.entry(r.frame).or_default().push(r);
    }
    by_frame
        .into_iter()
        .map(|(f, rs)| (f, render_frame_svg(&rs, teams, width, height)))
        .collect()
}

pub fn frame_file_name(frame: u64) -> String {
    format!("frame_{frame:06}.svg")
}
