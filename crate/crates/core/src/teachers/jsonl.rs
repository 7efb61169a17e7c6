use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::DetectionFrame;
use crate::error::{Error, Result};
use crate::format::write_atomic;

/// One JSON object per frame, one frame per line.
pub fn write_detections_jsonl(path: &Path, frames: &[DetectionFrame]) -> Result<()> {
    let mut out = Vec::new();
    for f in frames {
        serde_json::to_writer(&mut out, f)?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

/// Reads and validates a detection stream. Blank lines are skipped.
pub fn read_detections_jsonl(path: &Path) -> Result<Vec<DetectionFrame>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut frames = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: DetectionFrame = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", i + 1),
        })?;
        for b in &frame.boxes {
            b.validate()?;
        }
        frames.push(frame);
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teachers::DetBox;
    use crate::video_data::BlobCategory;

    #[test]
    fn jsonl_round_trip_and_field_names() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("det.jsonl");
        let frames = vec![
            DetectionFrame {
                video_id: "pre_00000".into(),
                frame_index: 0,
                boxes: vec![DetBox {
                    x1: 0.1,
                    y1: 0.2,
                    x2: 0.3,
                    y2: 0.4,
                    score: 0.75,
                    category: BlobCategory::Hand,
                }],
            },
            DetectionFrame {
                video_id: "pre_00000".into(),
                frame_index: 1,
                boxes: vec![],
            },
        ];
        write_detections_jsonl(&path, &frames).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            r#"{"video_id":"pre_00000","frame_index":0,"boxes":[{"x1":0.1,"y1":0.2,"x2":0.3,"y2":0.4,"score":0.75,"category":"hand"}]}"#
        );
        assert_eq!(read_detections_jsonl(&path).unwrap(), frames);
    }

    #[test]
    fn rejects_inverted_boxes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        fs::write(
            &path,
            r#"{"video_id":"v","frame_index":0,"boxes":[{"x1":0.5,"y1":0.2,"x2":0.3,"y2":0.4,"score":0.9,"category":"object"}]}"#,
        )
        .unwrap();
        assert!(matches!(
            read_detections_jsonl(&path),
            Err(Error::InvalidBox(_))
        ));
    }
}
