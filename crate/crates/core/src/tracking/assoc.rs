use crate::assignment::{assignment_cost, min_cost_assignment};
use crate::geometry::BBox;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    /// `(track index, detection index)` pairs that passed the IoU gate.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
    /// Total `1 - IoU` of the optimal assignment before gating.
    pub assignment_cost: f64,
}

/// Hungarian assignment of predicted boxes to detections minimizing the
/// summed `1 - IoU`; assigned pairs with IoU below `iou_threshold` are
/// reported as unmatched on both sides.
pub fn associate(predicted: &[BBox], detections: &[BBox], iou_threshold: f64) -> Association {
    let (rows, cols) = (predicted.len(), detections.len());
    let mut out = Association::default();
    if rows == 0 || cols == 0 {
        out.unmatched_tracks = (0..rows).collect();
        out.unmatched_detections = (0..cols).collect();
        return out;
    }
    let ious: Vec<f64> = predicted
        .iter()
        .flat_map(|p| detections.iter().map(move |d| p.iou(d)))
        .collect();
    let costs: Vec<f64> = ious.iter().map(|v| 1.0 - v).collect();
    let assignment = min_cost_assignment(&costs, rows, cols);
    out.assignment_cost = assignment_cost(&costs, cols, &assignment);

    let mut det_taken = vec![false; cols];
    for (ti, col) in assignment.iter().enumerate() {
        match col {
            Some(di) if ious[ti * cols + di] >= iou_threshold => {
                out.matches.push((ti, *di));
                det_taken[*di] = true;
            }
            _ => out.unmatched_tracks.push(ti),
        }
    }
    out.unmatched_detections = (0..cols).filter(|&d| !det_taken[d]).collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64, y: f64) -> BBox {
        BBox::new(x, y, 30.0, 30.0)
    }

    #[test]
    fn empty_detections_leave_tracks_unmatched() {
        let a = associate(&[b(0.0, 0.0), b(50.0, 0.0)], &[], 0.3);
        assert!(a.matches.is_empty());
        assert_eq!(a.unmatched_tracks, vec![0, 1]);
        let a = associate(&[], &[b(0.0, 0.0)], 0.3);
        assert_eq!(a.unmatched_detections, vec![0]);
    }

    #[test]
    fn dominant_diagonal_matches_identity() {
        let tracks = [b(0.0, 0.0), b(20.0, 0.0)];
        let dets = [b(1.0, 0.0), b(19.0, 0.0)];
        let a = associate(&tracks, &dets, 0.3);
        assert_eq!(a.matches, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn low_iou_assignment_is_gated() {
        let a = associate(&[b(0.0, 0.0)], &[b(25.0, 0.0)], 0.3);
        assert!(a.matches.is_empty());
        assert_eq!(a.unmatched_tracks, vec![0]);
        assert_eq!(a.unmatched_detections, vec![0]);
    }

    #[test]
    fn relabeling_detections_permutes_matches() {
        let tracks = [b(0.0, 0.0), b(40.0, 3.0), b(90.0, 10.0)];
        let dets = [b(2.0, 1.0), b(88.0, 9.0), b(41.0, 5.0), b(200.0, 0.0)];
        let perm = [3usize, 0, 2, 1]; // new position -> old index
        let permuted: Vec<BBox> = perm.iter().map(|&i| dets[i]).collect();
        let a = associate(&tracks, &dets, 0.3);
        let p = associate(&tracks, &permuted, 0.3);
        let mut mapped: Vec<(usize, usize)> = p.matches.iter().map(|&(t, d)| (t, perm[d])).collect();
        mapped.sort();
        let mut orig = a.matches.clone();
        orig.sort();
        assert_eq!(mapped, orig);
        assert_eq!(a.unmatched_detections, vec![3]);
    }
}
