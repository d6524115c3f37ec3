use std::fs;
use std::path::{Path, PathBuf};

use pitchtrack::adapter::{run_external_detector, AdapterConfig};
use pitchtrack::ingest::parse_detections;
use pitchtrack::{iou, BoundingBox, ClassLabel, ClassMap, Error};

const FIXTURE: &str = r#"{"frame": 0, "class_id": 2, "score": 0.91, "bbox": [100.0, 200.0, 140.0, 290.0]}
{"frame": 1, "class_id": 0, "score": 0.42, "bbox": [500.5, 600.25, 512.5, 612.25]}
{"frame": 1, "class_id": 3, "score": 0.77, "bbox": [10, 20, 50, 110]}
"#;

fn detector_script() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/box_detector.py")
}

fn echo_config() -> AdapterConfig {
    AdapterConfig::from_toml("kind = \"command\"\npath = \"cat\"\noutput_space = \"frame\"\n").unwrap()
}

#[test]
fn echo_adapter_matches_file_parsing() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("dets.jsonl");
    fs::write(&file, FIXTURE).unwrap();
    let classes = ClassMap::default();
    let via_adapter = run_external_detector(&file, &echo_config(), &classes).unwrap();
    let direct = parse_detections(FIXTURE.as_bytes(), "fixture", &classes).unwrap();
    assert_eq!(via_adapter, direct);
}

#[test]
fn malformed_adapter_output_names_adapter() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("dets.jsonl");
    fs::write(&file, format!("{FIXTURE}{{\"frame\": 2, \"class_id\": 2\n")).unwrap();
    let err = run_external_detector(&file, &echo_config(), &ClassMap::default()).unwrap_err();
    match err {
        Error::Parse { origin, line, .. } => assert_eq!((origin.as_str(), line), ("adapter", 4)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn failing_adapter_carries_diagnostic() {
    let err = run_external_detector(Path::new("/nonexistent/file"), &echo_config(), &ClassMap::default()).unwrap_err();
    assert!(matches!(&err, Error::Adapter(m) if m.contains("No such file")), "{err}");
}

/// Writes a binary PPM with a dark background and filled rectangles.
fn paint(path: &Path, w: usize, h: usize, boxes: &[([u8; 3], [usize; 4])]) {
    let mut px = vec![20u8; w * h * 3];
    for (rgb, [x0, y0, x1, y1]) in boxes {
        for y in *y0..*y1 {
            for x in *x0..*x1 {
                px[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(rgb);
            }
        }
    }
    let mut data = format!("P6\n{w} {h}\n255\n").into_bytes();
    data.extend(px);
    fs::write(path, data).unwrap();
}

fn painted_clip(dir: &Path) -> Vec<Vec<(ClassLabel, BoundingBox)>> {
    let (w, h) = (320, 180);
    let mut truth = Vec::new();
    for f in 0..3usize {
        let player = [40 + 10 * f, 50, 60 + 10 * f, 100];
        let referee = [200, 30 + 5 * f, 215, 70 + 5 * f];
        let ball = [150 - 7 * f, 120, 156 - 7 * f, 126];
        paint(
            &dir.join(format!("frame_{f:03}.ppm")),
            w,
            h,
            &[([255, 0, 0], player), ([255, 255, 0], referee), ([255, 255, 255], ball)],
        );
        let b = |c: [usize; 4]| BoundingBox::new(c[0] as f64, c[1] as f64, c[2] as f64, c[3] as f64).unwrap();
        truth.push(vec![
            (ClassLabel::Player, b(player)),
            (ClassLabel::Referee, b(referee)),
            (ClassLabel::Ball, b(ball)),
        ]);
    }
    truth
}

fn assert_within_two_px(stream: &pitchtrack::ingest::DetectionStream, truth: &[Vec<(ClassLabel, BoundingBox)>]) {
    assert_eq!(stream.len(), 9);
    for (f, boxes) in truth.iter().enumerate() {
        let dets = stream.frame(f as u64);
        assert_eq!(dets.len(), boxes.len());
        for (class, b) in boxes {
            let d = dets.iter().find(|d| d.class == *class).expect("class detected");
            let err = d
                .bbox
                .to_array()
                .iter()
                .zip(b.to_array())
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            assert!(err <= 2.0, "frame {f} {class}: {:?} vs {:?}", d.bbox, b);
            assert!(iou(&d.bbox, b) > 0.8);
        }
    }
}

#[test]
fn command_adapter_recovers_painted_boxes() {
    let dir = tempfile::tempdir().unwrap();
    let truth = painted_clip(dir.path());
    let cfg = AdapterConfig::from_toml(&format!(
        "kind = \"command\"\npath = \"python3\"\nargs = [{:?}, \"--model-size\", \"640\"]\nmodel_size = 640\nframe_width = 320\nframe_height = 180\n",
        detector_script().display().to_string()
    ))
    .unwrap();
    let stream = run_external_detector(dir.path(), &cfg, &ClassMap::default()).unwrap();
    assert_within_two_px(&stream, &truth);
}

#[test]
fn model_file_adapter_runs_through_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let truth = painted_clip(dir.path());
    // the script plays the exported model, python3 the runtime
    let cfg = AdapterConfig::from_toml(&format!(
        "kind = \"model-file\"\npath = {:?}\nruntime = \"python3\"\nframe_width = 320\nframe_height = 180\nconfidence_floor = 0.5\n",
        detector_script().display().to_string()
    ))
    .unwrap();
    let stream = run_external_detector(dir.path(), &cfg, &ClassMap::default()).unwrap();
    assert_within_two_px(&stream, &truth);
}
