//! False-positive pruning: box-area filter, per-level confidence filter and
//! greedy non-maximum suppression, applied in that order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, DetectionSet, Level};
use crate::error::{Error, Result};
use crate::geometry::BBox;

pub const DEFAULT_MAX_BOX_AREA: f64 = 35.0 * 35.0;
pub const DEFAULT_NMS_IOU: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrunerConfig {
    /// Boxes with `w * h` above this are dropped (px²).
    pub max_box_area: f64,
    pub confidence_thresholds: BTreeMap<Level, f64>,
    /// Suppress when IoU with a kept box is strictly greater than this.
    pub nms_iou: f64,
}

impl Default for PrunerConfig {
    fn default() -> Self {
        Self {
            max_box_area: DEFAULT_MAX_BOX_AREA,
            confidence_thresholds: Level::ALL.iter().map(|&l| (l, 0.0)).collect(),
            nms_iou: DEFAULT_NMS_IOU,
        }
    }
}

impl PrunerConfig {
    /// Reads and validates a TOML file holding only pruner keys.
    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_box_area > 0.0) {
            return Err(Error::Config(format!(
                "max_box_area must be positive, got {}",
                self.max_box_area
            )));
        }
        for (level, t) in &self.confidence_thresholds {
            if !(0.0..=1.0).contains(t) {
                return Err(Error::Config(format!(
                    "confidence threshold for {level} is {t}, outside [0, 1]"
                )));
            }
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(Error::Config(format!(
                "nms_iou must lie in (0, 1), got {}",
                self.nms_iou
            )));
        }
        Ok(())
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

/// Drops detections whose box area exceeds `max_area`.
pub fn area_filter(set: &DetectionSet, max_area: f64) -> DetectionSet {
    set.retain(|d| d.bbox.area() <= max_area)
}

/// Keeps a detection iff its confidence reaches its level's threshold.
pub fn confidence_filter(set: &DetectionSet, thresholds: &BTreeMap<Level, f64>) -> Result<DetectionSet> {
    for level in set.levels() {
        if !thresholds.contains_key(&level) {
            return Err(Error::Config(format!("no confidence threshold for level {level}")));
        }
    }
    Ok(set.retain(|d| d.confidence >= thresholds[&d.level]))
}

/// Greedy suppression within each frame, across all levels. Equal
/// confidences keep input order.
pub fn nms(set: &DetectionSet, iou_threshold: f64) -> DetectionSet {
    set.map_frames(|dets| nms_frame(dets, iou_threshold))
}

pub fn nms_frame(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // stable sort: ties stay in input order
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    let mut suppressed = vec![false; dets.len()];
    let mut kept = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(dets[i]);
        for &j in &order[rank + 1..] {
            if !suppressed[j] && dets[i].bbox.iou(&dets[j].bbox) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    kept
}

/// Output of every pruning stage, for stage-wise evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneStages {
    pub after_area: DetectionSet,
    pub after_confidence: DetectionSet,
    pub after_nms: DetectionSet,
}

pub fn prune(set: &DetectionSet, cfg: &PrunerConfig) -> Result<PruneStages> {
    cfg.validate()?;
    let after_area = area_filter(set, cfg.max_box_area);
    let after_confidence = confidence_filter(&after_area, &cfg.confidence_thresholds)?;
    let after_nms = nms(&after_confidence, cfg.nms_iou);
    Ok(PruneStages {
        after_area,
        after_confidence,
        after_nms,
    })
}
