use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::detection::DetectionSet;
use crate::error::{Error, Result};
use crate::tracking::Tracklet;

use super::{diffusivity_curve, match_detections, match_tracks, DiffusivityParams, GroundTruth, MotilityClass, MotilityThresholds};

/// `TP / (TP + FP)`, or 0 with no predictions.
pub fn precision(tp: usize, fp: usize) -> f64 {
    if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

/// `TP / (TP + FN)`, or 0 with nothing to find.
pub fn recall(tp: usize, fn_: usize) -> f64 {
    if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    }
}

/// Harmonic mean; 0 when either input is 0.
pub fn f1_score(p: f64, r: f64) -> f64 {
    if p <= 0.0 || r <= 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageKind {
    Detection,
    Track,
}

/// Confusion counts at one stage.
///
/// For detection stages `tp` pairs with both `fp` and `fn_`. For track stages
/// `tp`/`fp` count tracks while `recovered`/`fn_` count GT ids, so precision
/// is `tp / (tp + fp)` and recall is `recovered / (recovered + fn_)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub stage: String,
    pub kind: StageKind,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub recovered: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl StageMetrics {
    pub fn from_counts(stage: &str, kind: StageKind, tp: usize, fp: usize, recovered: usize, fn_: usize) -> Self {
        let p = precision(tp, fp);
        let r = recall(recovered, fn_);
        Self {
            stage: stage.to_string(),
            kind,
            tp,
            fp,
            fn_,
            recovered,
            precision: p,
            recall: r,
            f1: f1_score(p, r),
        }
    }

    /// Detection-stage counts, where every TP is also a recovered object.
    pub fn detection(stage: &str, tp: usize, fp: usize, fn_: usize) -> Self {
        Self::from_counts(stage, StageKind::Detection, tp, fp, tp, fn_)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotilityFraction {
    pub class: MotilityClass,
    pub total: usize,
    pub detected: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub radius_px: f64,
    pub majority: f64,
    pub window_seconds: f64,
    pub max_lag_seconds: f64,
    pub motility: MotilityThresholds,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            radius_px: 15.0,
            majority: 0.5,
            window_seconds: DiffusivityParams::default().window_seconds,
            max_lag_seconds: DiffusivityParams::default().max_lag_seconds,
            motility: MotilityThresholds::default(),
        }
    }
}

impl EvalParams {
    pub fn diffusivity(&self) -> DiffusivityParams {
        DiffusivityParams {
            window_seconds: self.window_seconds,
            max_lag_seconds: self.max_lag_seconds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_px > 0.0 && self.radius_px.is_finite()) {
            return Err(Error::Config("radius_px must be positive".into()));
        }
        if !(0.5..=1.0).contains(&self.majority) {
            return Err(Error::Config("majority must lie in [0.5, 1]".into()));
        }
        if !(self.window_seconds >= 0.0 && self.max_lag_seconds > 0.0) {
            return Err(Error::Config("diffusivity window and lag must be positive".into()));
        }
        self.motility.validate()
    }
}

/// Everything one pipeline run produced, borrowed for evaluation.
#[derive(Debug, Clone, Copy)]
pub struct StageOutputs<'a> {
    pub detector: &'a DetectionSet,
    pub after_area: &'a DetectionSet,
    pub after_confidence: &'a DetectionSet,
    pub after_nms: &'a DetectionSet,
    pub tracks: &'a [Tracklet],
    pub filtered: &'a [Tracklet],
    pub fps: f64,
    pub pixel_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub stages: Vec<StageMetrics>,
    pub motility: Vec<MotilityFraction>,
}

pub const DETECTION_STAGES: [&str; 4] = ["detector", "area_filter", "confidence_filter", "nms"];
pub const TRACK_STAGES: [&str; 2] = ["tracking", "track_length_filter"];

/// Precision and recall after every pipeline stage, plus the share of each
/// GT motility class recovered by the final tracks.
pub fn stage_report(outputs: &StageOutputs<'_>, gt: &GroundTruth, params: &EvalParams) -> Result<EvalReport> {
    params.validate()?;
    let mut stages = Vec::with_capacity(6);
    let sets = [outputs.detector, outputs.after_area, outputs.after_confidence, outputs.after_nms];
    for (name, set) in DETECTION_STAGES.iter().zip(sets) {
        let m = match_detections(set, gt, params.radius_px);
        stages.push(StageMetrics::detection(name, m.tp, m.fp, m.fn_));
    }
    let mut final_recovered = Default::default();
    for (name, tracks) in TRACK_STAGES.iter().zip([outputs.tracks, outputs.filtered]) {
        let m = match_tracks(tracks, gt, params.radius_px, params.majority);
        let rec = m.recovered.len();
        stages.push(StageMetrics::from_counts(name, StageKind::Track, m.tp, m.fp, rec, m.total_gt - rec));
        final_recovered = m.recovered;
    }

    let mut per_class: BTreeMap<MotilityClass, (usize, usize)> = MotilityClass::ALL.iter().map(|c| (*c, (0, 0))).collect();
    for (id, path) in gt.paths() {
        let Ok(curve) = diffusivity_curve(path, outputs.fps, outputs.pixel_scale, &params.diffusivity()) else {
            continue;
        };
        let entry = per_class.get_mut(&params.motility.classify(curve.peak)).expect("all classes present");
        entry.0 += 1;
        if final_recovered.contains(&id) {
            entry.1 += 1;
        }
    }
    let motility = per_class
        .into_iter()
        .map(|(class, (total, detected))| MotilityFraction {
            class,
            total,
            detected,
            fraction: if total == 0 { 0.0 } else { detected as f64 / total as f64 },
        })
        .collect();
    Ok(EvalReport { stages, motility })
}

impl EvalReport {
    pub fn stage(&self, name: &str) -> Option<&StageMetrics> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// Human-readable per-stage table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<20} {:>9} {:>8} {:>8} {:>8} {:>9} {:>9} {:>9}",
            "stage", "kind", "tp", "fp", "fn", "precision", "recall", "f1"
        );
        for m in &self.stages {
            let kind = match m.kind {
                StageKind::Detection => "detection",
                StageKind::Track => "track",
            };
            let _ = writeln!(
                s,
                "{:<20} {:>9} {:>8} {:>8} {:>8} {:>9.4} {:>9.4} {:>9.4}",
                m.stage, kind, m.tp, m.fp, m.fn_, m.precision, m.recall, m.f1
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<10} {:>8} {:>8} {:>9}", "motility", "total", "detected", "fraction");
        for f in &self.motility {
            let _ = writeln!(s, "{:<10} {:>8} {:>8} {:>9.4}", f.class.as_str(), f.total, f.detected, f.fraction);
        }
        s
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(format!("cannot serialize report: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid report: {e}")))
    }
}
