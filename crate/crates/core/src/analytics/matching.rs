use std::collections::{BTreeMap, BTreeSet};

use crate::assignment::min_cost_assignment;
use crate::detection::DetectionSet;
use crate::tracking::Tracklet;

use super::GroundTruth;

/// Gated correspondence on one frame. Indices refer to the frame's
/// detection list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMatch {
    pub pairs: Vec<(usize, u64)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_gt: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionMatching {
    pub frames: Vec<FrameMatch>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Matches detections to annotated centroids frame by frame, maximizing the
/// number of pairs within `radius_px` (inclusive) and, among those, minimizing
/// the summed center distance.
pub fn match_detections(dets: &DetectionSet, gt: &GroundTruth, radius_px: f64) -> DetectionMatching {
    let by_frame = gt.by_frame();
    let n_frames = dets.num_frames().max(by_frame.len());
    let empty = Vec::new();
    let mut out = DetectionMatching::default();
    for t in 0..n_frames {
        let centers: Vec<(f64, f64)> = dets.frame(t).iter().map(|d| (d.bbox.cx, d.bbox.cy)).collect();
        let objects = by_frame.get(t).unwrap_or(&empty);
        let m = match_frame(&centers, objects, radius_px);
        out.tp += m.pairs.len();
        out.fp += m.unmatched_detections.len();
        out.fn_ += m.unmatched_gt.len();
        out.frames.push(m);
    }
    out
}

fn match_frame(centers: &[(f64, f64)], objects: &[(u64, f64, f64)], radius: f64) -> FrameMatch {
    let (rows, cols) = (centers.len(), objects.len());
    if rows == 0 || cols == 0 {
        return FrameMatch {
            pairs: Vec::new(),
            unmatched_detections: (0..rows).collect(),
            unmatched_gt: objects.iter().map(|o| o.0).collect(),
        };
    }
    // Any feasible pair costs at most `radius`, so a penalty above
    // min(rows, cols) * radius makes cardinality dominate total distance.
    let penalty = (rows.min(cols) as f64 + 1.0) * radius + 1.0;
    let mut feasible = vec![false; rows * cols];
    let mut costs = vec![penalty; rows * cols];
    for (i, &(x, y)) in centers.iter().enumerate() {
        for (j, &(_, gx, gy)) in objects.iter().enumerate() {
            let d = (x - gx).hypot(y - gy);
            if d <= radius {
                feasible[i * cols + j] = true;
                costs[i * cols + j] = d;
            }
        }
    }
    let assignment = min_cost_assignment(&costs, rows, cols);
    let mut out = FrameMatch::default();
    let mut gt_taken = vec![false; cols];
    for (i, a) in assignment.iter().enumerate() {
        match a {
            Some(j) if feasible[i * cols + j] => {
                out.pairs.push((i, objects[*j].0));
                gt_taken[*j] = true;
            }
            _ => out.unmatched_detections.push(i),
        }
    }
    out.unmatched_gt = objects
        .iter()
        .zip(&gt_taken)
        .filter(|(_, taken)| !**taken)
        .map(|(o, _)| o.0)
        .collect();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackVerdict {
    pub track_id: u64,
    /// GT id with the most votes, if any frame gated.
    pub best_gt: Option<u64>,
    pub votes: usize,
    pub detected_frames: usize,
    pub is_tp: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackMatching {
    pub verdicts: Vec<TrackVerdict>,
    pub tp: usize,
    pub fp: usize,
    /// GT ids claimed by at least one true-positive track.
    pub recovered: BTreeSet<u64>,
    pub total_gt: usize,
}

impl TrackMatching {
    pub fn precision(&self) -> f64 {
        super::precision(self.tp, self.fp)
    }

    pub fn recall(&self) -> f64 {
        super::recall(self.recovered.len(), self.total_gt - self.recovered.len())
    }
}

/// Track-level evaluation. Every detected state votes for the nearest GT
/// centroid within `radius_px` on its frame (lower id on exact ties); a track
/// is a true positive when its most-voted id holds at least `majority` of
/// its detected states.
pub fn match_tracks(tracks: &[Tracklet], gt: &GroundTruth, radius_px: f64, majority: f64) -> TrackMatching {
    let by_frame = gt.by_frame();
    let mut out = TrackMatching {
        total_gt: gt.len(),
        ..Default::default()
    };
    for tr in tracks {
        let mut votes: BTreeMap<u64, usize> = BTreeMap::new();
        let mut detected = 0usize;
        for s in tr.detected_states() {
            detected += 1;
            let Some(objects) = by_frame.get(s.frame) else {
                continue;
            };
            let mut best: Option<(f64, u64)> = None;
            for &(id, x, y) in objects {
                let d = (s.bbox.cx - x).hypot(s.bbox.cy - y);
                if d <= radius_px && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, id));
                }
            }
            if let Some((_, id)) = best {
                *votes.entry(id).or_default() += 1;
            }
        }
        // max_by_key keeps the last maximum; iterate ids descending so ties go to the lower id
        let winner = votes.iter().rev().max_by_key(|(_, n)| **n).map(|(id, n)| (*id, *n));
        let (best_gt, n) = match winner {
            Some((id, n)) => (Some(id), n),
            None => (None, 0),
        };
        let is_tp = detected > 0 && n as f64 >= majority * detected as f64;
        if is_tp {
            out.tp += 1;
            out.recovered.insert(best_gt.expect("winner exists"));
        } else {
            out.fp += 1;
        }
        out.verdicts.push(TrackVerdict {
            track_id: tr.id,
            best_gt,
            votes: n,
            detected_frames: detected,
            is_tp,
        });
    }
    out
}
