//! Corpus listing and loading, from disk or generated in memory.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rrforge_core::io::{read_chest_csv, read_json, read_wrist_csv, segment_paths, ChestRecording, Manifest, WristRecording};
use rrforge_core::synth::{gen_segment, ManifestRow, CHEST_RATE, WRIST_RATE};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SegmentRef {
    pub subject: String,
    pub segment: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject: String,
    pub segment: String,
    pub wrist: WristRecording,
    pub chest: Option<ChestRecording>,
}

/// Segments listed by the manifest, or found by scanning subject folders.
pub fn list_segments(root: &Path) -> Result<Vec<SegmentRef>> {
    if !root.is_dir() {
        bail!("corpus directory {} does not exist", root.display());
    }
    let manifest = root.join(MANIFEST);
    if manifest.exists() {
        let m: Manifest = read_json(&manifest).with_context(|| format!("reading {}", manifest.display()))?;
        return Ok(m.segments.into_iter().map(|r| SegmentRef { subject: r.subject, segment: r.segment }).collect());
    }
    let mut out = Vec::new();
    let mut subjects: Vec<_> = std::fs::read_dir(root)?.filter_map(|e| e.ok()).filter(|e| e.path().is_dir()).collect();
    subjects.sort_by_key(|e| e.file_name());
    for dir in subjects {
        let subject = dir.file_name().to_string_lossy().into_owned();
        let mut files: Vec<String> = std::fs::read_dir(dir.path())?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_string_lossy().strip_suffix(".wrist.csv").map(str::to_string))
            .collect();
        files.sort();
        out.extend(files.into_iter().map(|segment| SegmentRef { subject: subject.clone(), segment }));
    }
    Ok(out)
}

/// Reads one segment; the chest recording is optional.
pub fn load_recording(root: &Path, r: &SegmentRef) -> Result<Recording> {
    let (wrist_path, chest_path) = segment_paths(root, &r.subject, &r.segment);
    let wrist = read_wrist_csv(&wrist_path).with_context(|| format!("reading {}", wrist_path.display()))?;
    let chest = if chest_path.exists() {
        Some(read_chest_csv(&chest_path).with_context(|| format!("reading {}", chest_path.display()))?)
    } else {
        None
    };
    Ok(Recording { subject: r.subject.clone(), segment: r.segment.clone(), wrist, chest })
}

/// Generates the recordings of a manifest row without touching disk.
pub fn synth_recording(row: &ManifestRow) -> Result<Recording> {
    let seg = gen_segment(&row.spec)?;
    Ok(Recording {
        subject: row.subject.clone(),
        segment: row.segment.clone(),
        wrist: WristRecording { rate: WRIST_RATE, ppg: seg.wrist.ppg, acc: seg.wrist.acc, gyr: seg.wrist.gyr },
        chest: Some(ChestRecording { rate: CHEST_RATE, acc: seg.chest }),
    })
}

/// Identifier of the `k`-th of `n` windows of a segment; the subject is the
/// part before the slash.
pub fn window_id(subject: &str, segment: &str, k: usize, n: usize) -> String {
    if n == 1 {
        format!("{subject}/{segment}")
    } else {
        format!("{subject}/{segment}#{k}")
    }
}

pub fn subject_of(id: &str) -> &str {
    id.split_once('/').map_or(id, |(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_carry_the_subject() {
        assert_eq!(window_id("s001", "s001_0002", 0, 1), "s001/s001_0002");
        assert_eq!(window_id("a", "b", 2, 3), "a/b#2");
        assert_eq!(subject_of("a/b#2"), "a");
        assert_eq!(subject_of("plain"), "plain");
    }
}
