use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detection::{DetectionSet, Level};
use crate::error::{Error, Result};
use crate::pruning::{area_filter, nms, PrunerConfig};

use super::{f1_score, match_detections, precision, recall, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    MaxPrecision,
    MaxF1,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::MaxPrecision => "max_precision",
            Criterion::MaxF1 => "max_f1",
        })
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max_precision" => Ok(Criterion::MaxPrecision),
            "max_f1" => Ok(Criterion::MaxF1),
            other => Err(Error::Config(format!(
                "unknown criterion {other:?}, expected max_precision or max_f1"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCalibration {
    pub level: Level,
    pub curve: Vec<CurvePoint>,
    pub max_precision_threshold: f64,
    pub max_f1_threshold: f64,
}

impl LevelCalibration {
    pub fn threshold(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::MaxPrecision => self.max_precision_threshold,
            Criterion::MaxF1 => self.max_f1_threshold,
        }
    }

    pub fn point_at(&self, threshold: f64) -> Option<&CurvePoint> {
        self.curve.iter().find(|p| p.threshold == threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub criterion: Criterion,
    pub levels: Vec<LevelCalibration>,
}

impl CalibrationResult {
    /// Threshold per level under the requested criterion.
    pub fn chosen(&self) -> BTreeMap<Level, f64> {
        self.levels.iter().map(|l| (l.level, l.threshold(self.criterion))).collect()
    }
}

/// `{0.00, 0.01, ..., 1.00}`.
pub fn threshold_grid() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

/// Sweeps the confidence threshold of each level, running the full pruning
/// chain at every grid value and scoring the survivors against `gt`. When
/// several thresholds score equally the highest one wins.
pub fn calibrate_thresholds(
    per_level: &BTreeMap<Level, DetectionSet>,
    gt: &GroundTruth,
    criterion: Criterion,
    pruner: &PrunerConfig,
    radius_px: f64,
) -> Result<CalibrationResult> {
    pruner.validate()?;
    if per_level.is_empty() {
        return Err(Error::InvalidInput("no detection levels to calibrate".into()));
    }
    let mut levels = Vec::with_capacity(per_level.len());
    for (&level, set) in per_level {
        if let Some(d) = set.iter().find(|d| d.level != level) {
            return Err(Error::InvalidInput(format!(
                "detection tagged {} supplied for level {level}",
                d.level
            )));
        }
        let sized = area_filter(set, pruner.max_box_area);
        if sized.is_empty() {
            return Err(Error::InvalidInput(format!("level {level} has no detections to calibrate")));
        }
        let mut curve = Vec::with_capacity(101);
        for threshold in threshold_grid() {
            let kept = nms(&sized.retain(|d| d.confidence >= threshold), pruner.nms_iou);
            let m = match_detections(&kept, gt, radius_px);
            let (p, r) = (precision(m.tp, m.fp), recall(m.tp, m.fn_));
            curve.push(CurvePoint {
                threshold,
                tp: m.tp,
                fp: m.fp,
                fn_: m.fn_,
                precision: p,
                recall: r,
                f1: f1_score(p, r),
            });
        }
        levels.push(LevelCalibration {
            level,
            max_precision_threshold: argmax_last(&curve, |c| c.precision),
            max_f1_threshold: argmax_last(&curve, |c| c.f1),
            curve,
        });
    }
    Ok(CalibrationResult { criterion, levels })
}

fn argmax_last(curve: &[CurvePoint], key: impl Fn(&CurvePoint) -> f64) -> f64 {
    let mut best = &curve[0];
    for c in curve {
        if key(c) >= key(best) {
            best = c;
        }
    }
    best.threshold
}

/// Curve table with header `level,threshold,tp,fp,fn,precision,recall,f1`.
pub fn write_calibration_curves<W: Write>(out: W, result: &CalibrationResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<calibration>", io),
        other => Error::InvalidInput(format!("{other:?}")),
    };
    w.write_record(["level", "threshold", "tp", "fp", "fn", "precision", "recall", "f1"])
        .map_err(io_err)?;
    for l in &result.levels {
        for c in &l.curve {
            w.write_record([
                l.level.to_string(),
                format!("{:.2}", c.threshold),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                c.precision.to_string(),
                c.recall.to_string(),
                c.f1.to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<calibration>", e))
}

impl CalibrationResult {
    pub fn write_curves(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        write_calibration_curves(file, self).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }
}
