//! Detection data model, per-level detection files, level merging and the
//! built-in blob detector.

mod blob;
mod io;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub use blob::{blob_detect, detect_frame, BlobParams};
pub use io::{read_detections, read_detections_from, write_detections, write_detections_to, LevelColumn};

/// Which detector produced a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Medium,
    High,
    Builtin,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Low, Level::Medium, Level::High, Level::Builtin];

    /// The three motility-specific detector levels.
    pub const MOTILITY: [Level; 3] = [Level::Low, Level::Medium, Level::High];

    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Low => "low",
            Level::Medium => "medium",
            Level::High => "high",
            Level::Builtin => "builtin",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Level::Low),
            "medium" => Ok(Level::Medium),
            "high" => Ok(Level::High),
            "builtin" => Ok(Level::Builtin),
            other => Err(Error::InvalidInput(format!("unknown detection level {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame: usize,
    pub bbox: BBox,
    pub confidence: f64,
    pub level: Level,
}

impl Detection {
    pub fn new(frame: usize, bbox: BBox, confidence: f64, level: Level) -> Self {
        Self {
            frame,
            bbox,
            confidence,
            level,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.bbox.is_valid() {
            return Err(Error::InvalidInput(format!(
                "detection on frame {} has a degenerate box {:?}",
                self.frame, self.bbox
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidInput(format!(
                "detection on frame {} has confidence {} outside [0, 1]",
                self.frame, self.confidence
            )));
        }
        Ok(())
    }
}

/// Detections of one video, grouped by frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    frames: Vec<Vec<Detection>>,
}

impl DetectionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_frames(num_frames: usize) -> Self {
        Self {
            frames: vec![Vec::new(); num_frames],
        }
    }

    pub fn from_frames(frames: Vec<Vec<Detection>>) -> Self {
        Self { frames }
    }

    pub fn push(&mut self, det: Detection) {
        if det.frame >= self.frames.len() {
            self.frames.resize_with(det.frame + 1, Vec::new);
        }
        self.frames[det.frame].push(det);
    }

    /// Detections on frame `t`; empty past the last populated frame.
    pub fn frame(&self, t: usize) -> &[Detection] {
        self.frames.get(t).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of frame slots (one past the highest frame index seen).
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn ensure_frames(&mut self, num_frames: usize) {
        if self.frames.len() < num_frames {
            self.frames.resize_with(num_frames, Vec::new);
        }
    }

    pub fn len(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.iter().all(Vec::is_empty)
    }

    pub fn frames(&self) -> &[Vec<Detection>] {
        &self.frames
    }

    pub fn iter(&self) -> impl Iterator<Item = &Detection> {
        self.frames.iter().flatten()
    }

    /// Keeps the detections for which `keep` returns true, frame by frame.
    pub fn retain(&self, mut keep: impl FnMut(&Detection) -> bool) -> DetectionSet {
        DetectionSet {
            frames: self
                .frames
                .iter()
                .map(|f| f.iter().filter(|d| keep(d)).copied().collect())
                .collect(),
        }
    }

    /// Applies `f` to each frame's list independently.
    pub fn map_frames(&self, mut f: impl FnMut(&[Detection]) -> Vec<Detection>) -> DetectionSet {
        DetectionSet {
            frames: self.frames.iter().map(|d| f(d)).collect(),
        }
    }

    /// Checks every detection and that frame indices fall in `[0, num_frames)`.
    pub fn validate(&self, num_frames: usize) -> Result<()> {
        for (t, dets) in self.frames.iter().enumerate() {
            for d in dets {
                if d.frame != t {
                    return Err(Error::InvalidInput(format!(
                        "detection stored under frame {t} claims frame {}",
                        d.frame
                    )));
                }
                if t >= num_frames {
                    return Err(Error::InvalidInput(format!(
                        "detection on frame {t} but the video has {num_frames} frames"
                    )));
                }
                d.validate()?;
            }
        }
        Ok(())
    }

    pub fn levels(&self) -> Vec<Level> {
        let mut levels: Vec<Level> = self.iter().map(|d| d.level).collect();
        levels.sort();
        levels.dedup();
        levels
    }
}

/// Per-frame concatenation of several detection sets, in argument order.
/// Level tags are kept and nothing is deduplicated.
pub fn merge_levels(sets: &[DetectionSet]) -> DetectionSet {
    let num_frames = sets.iter().map(DetectionSet::num_frames).max().unwrap_or(0);
    let mut merged = DetectionSet::with_frames(num_frames);
    for set in sets {
        for (t, dets) in set.frames.iter().enumerate() {
            merged.frames[t].extend_from_slice(dets);
        }
    }
    merged
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(frame: usize, x: f64, level: Level) -> Detection {
        Detection::new(frame, BBox::new(x, 10.0, 30.0, 30.0), 0.5, level)
    }

    #[test]
    fn merge_single_is_identity() {
        let mut s = DetectionSet::new();
        s.push(det(0, 1.0, Level::Low));
        s.push(det(3, 2.0, Level::Low));
        assert_eq!(merge_levels(std::slice::from_ref(&s)), s);
    }

    #[test]
    fn merge_counts_per_frame() {
        let mk = |n: usize, level| {
            let mut s = DetectionSet::new();
            for i in 0..n {
                s.push(det(0, i as f64, level));
            }
            s
        };
        let merged = merge_levels(&[mk(3, Level::Low), mk(2, Level::Medium), mk(5, Level::High)]);
        assert_eq!(merged.frame(0).len(), 10);
        assert_eq!(merged.levels(), vec![Level::Low, Level::Medium, Level::High]);
    }

    #[test]
    fn validate_rejects_out_of_range_frames() {
        let mut s = DetectionSet::new();
        s.push(det(4, 1.0, Level::Low));
        assert!(s.validate(5).is_ok());
        assert!(s.validate(4).is_err());
    }

    #[test]
    fn level_parsing() {
        assert_eq!("High".parse::<Level>().unwrap(), Level::High);
        assert!("ultra".parse::<Level>().is_err());
    }

    proptest! {
        #[test]
        fn merge_is_multiset_concatenation(
            sizes in prop::collection::vec(prop::collection::vec(0usize..4, 0..6), 0..4)
        ) {
            let sets: Vec<DetectionSet> = sizes
                .iter()
                .enumerate()
                .map(|(k, per_frame)| {
                    let mut s = DetectionSet::new();
                    for (t, &n) in per_frame.iter().enumerate() {
                        for i in 0..n {
                            s.push(det(t, (k * 100 + i) as f64, Level::MOTILITY[k % 3]));
                        }
                    }
                    s
                })
                .collect();
            let merged = merge_levels(&sets);
            // brute-force concatenation, then compare per frame as sorted multisets
            let total: usize = sets.iter().map(DetectionSet::len).sum();
            prop_assert_eq!(merged.len(), total);
            for t in 0..merged.num_frames() {
                let mut expected: Vec<(u64, Level)> = Vec::new();
                for s in &sets {
                    for d in s.iter().filter(|d| d.frame == t) {
                        expected.push((d.bbox.cx.to_bits(), d.level));
                    }
                }
                let mut got: Vec<(u64, Level)> =
                    merged.frame(t).iter().map(|d| (d.bbox.cx.to_bits(), d.level)).collect();
                expected.sort();
                got.sort();
                prop_assert_eq!(got, expected);
            }
        }
    }
}
