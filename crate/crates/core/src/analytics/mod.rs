//! Motility analytics and evaluation against ground truth.

mod calibration;
mod diffusivity;
mod matching;
mod metrics;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracking::Tracklet;

pub use calibration::{calibrate_thresholds, threshold_grid, write_calibration_curves, CalibrationResult, Criterion, CurvePoint, LevelCalibration};
pub use diffusivity::{classify_motility, diffusivity_curve, mean_speed, DiffusivityCurve, DiffusivityParams, MotilityClass, MotilityThresholds};
pub use matching::{match_detections, match_tracks, DetectionMatching, FrameMatch, TrackMatching, TrackVerdict};
pub use metrics::{f1_score, precision, recall, stage_report, EvalParams, EvalReport, MotilityFraction, StageKind, StageMetrics, StageOutputs, DETECTION_STAGES, TRACK_STAGES};

/// One position sample in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
}

impl PathPoint {
    pub fn new(frame: usize, x: f64, y: f64) -> Self {
        Self { frame, x, y }
    }
}

/// Box centers of every state of a tracklet, detected and interpolated.
pub fn track_points(track: &Tracklet) -> Vec<PathPoint> {
    track
        .states
        .iter()
        .map(|s| PathPoint::new(s.frame, s.bbox.cx, s.bbox.cy))
        .collect()
}

/// Annotated centroids per object id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    paths: BTreeMap<u64, Vec<PathPoint>>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a path; frames must be strictly increasing.
    pub fn insert(&mut self, id: u64, path: Vec<PathPoint>) -> Result<()> {
        if path.windows(2).any(|w| w[1].frame <= w[0].frame) {
            return Err(Error::InvalidInput(format!(
                "ground-truth path {id} has non-increasing frames"
            )));
        }
        self.paths.insert(id, path);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.paths.keys().copied()
    }

    pub fn path(&self, id: u64) -> Option<&[PathPoint]> {
        self.paths.get(&id).map(Vec::as_slice)
    }

    pub fn paths(&self) -> impl Iterator<Item = (u64, &[PathPoint])> {
        self.paths.iter().map(|(id, p)| (*id, p.as_slice()))
    }

    /// One past the last annotated frame.
    pub fn num_frames(&self) -> usize {
        self.paths
            .values()
            .filter_map(|p| p.last())
            .map(|p| p.frame + 1)
            .max()
            .unwrap_or(0)
    }

    /// `(id, x, y)` of every object present on each frame, ids ascending.
    pub fn by_frame(&self) -> Vec<Vec<(u64, f64, f64)>> {
        let mut out = vec![Vec::new(); self.num_frames()];
        for (id, path) in &self.paths {
            for p in path {
                out[p.frame].push((*id, p.x, p.y));
            }
        }
        out
    }
}

const GT_COLUMNS: [&str; 4] = ["id", "frame", "x", "y"];

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ground_truth_from(file, &path.display().to_string())
}

/// Parses a ground-truth file with header `id,frame,x,y`.
pub fn read_ground_truth_from<R: Read>(reader: R, name: &str) -> Result<GroundTruth> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut paths: BTreeMap<u64, Vec<PathPoint>> = BTreeMap::new();
    let mut saw_header = false;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::format(name, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if !saw_header {
            let fields: Vec<&str> = record.iter().collect();
            if fields[..] != GT_COLUMNS[..] {
                return Err(Error::format(name, line, "expected header `id,frame,x,y`"));
            }
            saw_header = true;
            continue;
        }
        if record.len() != 4 {
            return Err(Error::format(name, line, format!("expected 4 fields, found {}", record.len())));
        }
        let err = |i: usize| Error::format(name, line, format!("{}: cannot parse {:?}", GT_COLUMNS[i], &record[i]));
        let id: u64 = record[0].parse().map_err(|_| err(0))?;
        let frame: usize = record[1].parse().map_err(|_| err(1))?;
        let x: f64 = record[2].parse().map_err(|_| err(2))?;
        let y: f64 = record[3].parse().map_err(|_| err(3))?;
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::format(name, line, "coordinates must be finite"));
        }
        let path = paths.entry(id).or_default();
        if path.last().is_some_and(|p| p.frame >= frame) {
            return Err(Error::format(
                name,
                line,
                format!("frames of id {id} must be strictly increasing"),
            ));
        }
        path.push(PathPoint::new(frame, x, y));
    }
    Ok(GroundTruth { paths })
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruth) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_ground_truth_to(file, gt).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_ground_truth_to<W: Write>(out: W, gt: &GroundTruth) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<ground truth>", io),
        other => Error::InvalidInput(format!("{other:?}")),
    };
    w.write_record(GT_COLUMNS).map_err(io_err)?;
    for (id, path) in gt.paths() {
        for p in path {
            w.write_record([id.to_string(), p.frame.to_string(), p.x.to_string(), p.y.to_string()])
                .map_err(io_err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<ground truth>", e))
}
