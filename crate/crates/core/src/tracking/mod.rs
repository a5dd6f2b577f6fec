//! Interpolated SORT tracking and the track-length filter.
//!
//! Each frame: predict every live tracklet, associate predictions with the
//! frame's detections by IoU (Hungarian), update matched tracklets, bridge
//! unmatched ones with their Kalman prediction, and start a tracklet for
//! every unmatched detection. A tracklet missed for more than `max_age`
//! consecutive frames ends; its trailing predicted states are dropped so it
//! ends on a detection.

mod assoc;
mod io;
mod kalman;

use serde::{Deserialize, Serialize};

use crate::detection::DetectionSet;
use crate::error::{Error, Result};
use crate::geometry::BBox;

pub use assoc::{associate, Association};
pub use io::{read_tracks, read_tracks_from, write_tracks, write_tracks_to};
pub use kalman::{KalmanFilter, KalmanParams, KalmanState, StateCovariance, StateVector};

pub const DEFAULT_MAX_AGE: usize = 25;
pub const DEFAULT_IOU_MATCH: f64 = 0.3;
pub const COLLAGEN_MIN_TRACK_LENGTH: usize = 60;
pub const AQUEOUS_MIN_TRACK_LENGTH: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Consecutive missed frames a tracklet survives on predictions.
    pub max_age: usize,
    /// Assigned pairs below this IoU are treated as unmatched.
    pub iou_match_threshold: f64,
    pub min_track_length: usize,
    pub kalman: KalmanParams,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            max_age: DEFAULT_MAX_AGE,
            iou_match_threshold: DEFAULT_IOU_MATCH,
            min_track_length: COLLAGEN_MIN_TRACK_LENGTH,
            kalman: KalmanParams::default(),
        }
    }
}

impl TrackerConfig {
    /// Defaults with the minimum track length chosen for the medium:
    /// 30 frames for aqueous/liquid media, 60 otherwise.
    pub fn for_medium(medium: &str) -> Self {
        Self {
            min_track_length: default_min_track_length(medium),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_track_length < 1 {
            return Err(Error::Config("min_track_length must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.iou_match_threshold) {
            return Err(Error::Config(format!(
                "iou_match_threshold must lie in [0, 1], got {}",
                self.iou_match_threshold
            )));
        }
        self.kalman.validate()
    }
}

pub fn default_min_track_length(medium: &str) -> usize {
    match medium.trim().to_ascii_lowercase().as_str() {
        "aqueous" | "liquid" | "water" => AQUEOUS_MIN_TRACK_LENGTH,
        _ => COLLAGEN_MIN_TRACK_LENGTH,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateSource {
    Detected,
    Interpolated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState {
    pub frame: usize,
    pub bbox: BBox,
    pub source: StateSource,
    /// Index into the frame's detection list for detected states, when known.
    pub detection: Option<usize>,
}

impl TrackState {
    pub fn is_detected(&self) -> bool {
        self.source == StateSource::Detected
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub id: u64,
    pub states: Vec<TrackState>,
    pub age_since_update: usize,
    pub hits: usize,
    pub hit_streak: usize,
}

impl Tracklet {
    pub fn first_frame(&self) -> usize {
        self.states.first().map(|s| s.frame).unwrap_or(0)
    }

    pub fn last_frame(&self) -> usize {
        self.states.last().map(|s| s.frame).unwrap_or(0)
    }

    /// Frames spanned, counting interpolated ones.
    pub fn len(&self) -> usize {
        if self.states.is_empty() {
            0
        } else {
            self.last_frame() - self.first_frame() + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn detected_states(&self) -> impl Iterator<Item = &TrackState> {
        self.states.iter().filter(|s| s.is_detected())
    }

    /// Contiguous frames; first and last states detected.
    pub fn is_well_formed(&self) -> bool {
        let contiguous = self.states.windows(2).all(|w| w[1].frame == w[0].frame + 1);
        let ends = match (self.states.first(), self.states.last()) {
            (Some(a), Some(b)) => a.is_detected() && b.is_detected(),
            _ => false,
        };
        contiguous && ends
    }

    fn finish(mut self) -> Tracklet {
        while self.states.last().is_some_and(|s| !s.is_detected()) {
            self.states.pop();
        }
        self
    }
}

struct Live {
    tracklet: Tracklet,
    state: KalmanState,
}

/// Runs the tracker over frames `0..num_frames`. Tracklets are returned in
/// creation order with ids starting at 1.
pub fn track(set: &DetectionSet, cfg: &TrackerConfig, num_frames: usize) -> Result<Vec<Tracklet>> {
    cfg.validate()?;
    if num_frames < set.num_frames() && set.frames()[num_frames..].iter().any(|f| !f.is_empty()) {
        return Err(Error::InvalidInput(format!(
            "detections reference frames beyond the video length {num_frames}"
        )));
    }
    let kf = KalmanFilter::new(&cfg.kalman);
    let mut live: Vec<Live> = Vec::new();
    let mut done: Vec<Tracklet> = Vec::new();
    let mut next_id = 1u64;

    for t in 0..num_frames {
        let dets = set.frame(t);
        for l in &mut live {
            l.state = kf.predict(&l.state);
        }
        let predicted: Vec<BBox> = live.iter().map(|l| l.state.bbox()).collect();
        let boxes: Vec<BBox> = dets.iter().map(|d| d.bbox).collect();
        let assoc = associate(&predicted, &boxes, cfg.iou_match_threshold);

        for &(ti, di) in &assoc.matches {
            let l = &mut live[ti];
            l.state = kf.update(&l.state, &dets[di])?;
            let tr = &mut l.tracklet;
            tr.states.push(TrackState {
                frame: t,
                bbox: dets[di].bbox,
                source: StateSource::Detected,
                detection: Some(di),
            });
            tr.age_since_update = 0;
            tr.hits += 1;
            tr.hit_streak += 1;
        }

        let mut expired = vec![false; live.len()];
        for &ti in &assoc.unmatched_tracks {
            let bbox = predicted[ti];
            let tr = &mut live[ti].tracklet;
            tr.age_since_update += 1;
            tr.hit_streak = 0;
            if tr.age_since_update > cfg.max_age {
                expired[ti] = true;
            } else {
                tr.states.push(TrackState {
                    frame: t,
                    bbox,
                    source: StateSource::Interpolated,
                    detection: None,
                });
            }
        }
        if expired.iter().any(|&e| e) {
            let mut k = 0;
            live.retain_mut(|l| {
                let keep = !expired[k];
                k += 1;
                if !keep {
                    done.push(std::mem::replace(&mut l.tracklet, empty_tracklet()).finish());
                }
                keep
            });
        }

        for &di in &assoc.unmatched_detections {
            live.push(Live {
                tracklet: Tracklet {
                    id: next_id,
                    states: vec![TrackState {
                        frame: t,
                        bbox: dets[di].bbox,
                        source: StateSource::Detected,
                        detection: Some(di),
                    }],
                    age_since_update: 0,
                    hits: 1,
                    hit_streak: 1,
                },
                state: kf.init(&dets[di]),
            });
            next_id += 1;
        }
    }

    done.extend(live.into_iter().map(|l| l.tracklet.finish()));
    done.sort_by_key(|t| t.id);
    Ok(done)
}

fn empty_tracklet() -> Tracklet {
    Tracklet {
        id: 0,
        states: Vec::new(),
        age_since_update: 0,
        hits: 0,
        hit_streak: 0,
    }
}

/// Keeps tracklets spanning at least `min_len` frames.
pub fn track_length_filter(tracks: &[Tracklet], min_len: usize) -> Vec<Tracklet> {
    tracks.iter().filter(|t| t.len() >= min_len).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{Detection, Level};
    use proptest::prelude::*;

    fn moving(frames: impl IntoIterator<Item = usize>) -> DetectionSet {
        let mut s = DetectionSet::new();
        for t in frames {
            let bbox = BBox::new(50.0 + 0.8 * t as f64, 40.0 + 0.3 * t as f64, 30.0, 30.0);
            s.push(Detection::new(t, bbox, 0.9, Level::High));
        }
        s
    }

    #[test]
    fn single_object_single_track() {
        let set = moving(0..80);
        let tracks = track(&set, &TrackerConfig::default(), 80).unwrap();
        assert_eq!(tracks.len(), 1);
        let tr = &tracks[0];
        assert_eq!(tr.len(), 80);
        assert!(tr.is_well_formed());
        for s in &tr.states {
            assert_eq!(s.bbox, set.frame(s.frame)[0].bbox);
        }
    }

    #[test]
    fn gap_of_max_age_is_bridged() {
        let set = moving((0..10).chain(35..70));
        let tracks = track(&set, &TrackerConfig::default(), 70).unwrap();
        assert_eq!(tracks.len(), 1);
        let tr = &tracks[0];
        assert_eq!(tr.len(), 70);
        assert!(tr.is_well_formed());
        for s in &tr.states {
            let bridged = (10..35).contains(&s.frame);
            assert_eq!(s.source == StateSource::Interpolated, bridged, "frame {}", s.frame);
        }
    }

    #[test]
    fn gap_beyond_max_age_splits() {
        let set = moving((0..10).chain(36..70));
        let tracks = track(&set, &TrackerConfig::default(), 70).unwrap();
        assert_eq!(tracks.len(), 2);
        assert_eq!((tracks[0].first_frame(), tracks[0].last_frame()), (0, 9));
        assert_eq!((tracks[1].first_frame(), tracks[1].last_frame()), (36, 69));
    }

    #[test]
    fn trailing_predictions_are_dropped() {
        let set = moving(0..20);
        let tracks = track(&set, &TrackerConfig::default(), 30).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].last_frame(), 19);
    }

    #[test]
    fn rejects_detections_past_end() {
        let set = moving(0..20);
        assert!(track(&set, &TrackerConfig::default(), 10).is_err());
    }

    #[test]
    fn medium_defaults() {
        assert_eq!(TrackerConfig::for_medium("aqueous").min_track_length, 30);
        assert_eq!(TrackerConfig::for_medium("collagen").min_track_length, 60);
        assert_eq!(TrackerConfig::default().max_age, 25);
    }

    fn track_of_len(id: u64, len: usize) -> Tracklet {
        Tracklet {
            id,
            states: (0..len)
                .map(|f| TrackState {
                    frame: f,
                    bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
                    source: StateSource::Detected,
                    detection: None,
                })
                .collect(),
            age_since_update: 0,
            hits: len,
            hit_streak: len,
        }
    }

    #[test]
    fn length_filter_boundary() {
        let tracks = vec![track_of_len(1, 59), track_of_len(2, 60)];
        let kept = track_length_filter(&tracks, 60);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].id, 2);
        assert_eq!(track_length_filter(&tracks, 1), tracks);
    }

    proptest! {
        #[test]
        fn length_filter_monotone(lens in prop::collection::vec(1usize..100, 0..30), a in 1usize..100, b in 1usize..100) {
            let tracks: Vec<Tracklet> = lens.iter().enumerate().map(|(i, &l)| track_of_len(i as u64, l)).collect();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(track_length_filter(&tracks, hi).len() <= track_length_filter(&tracks, lo).len());
        }

        #[test]
        fn tracklets_are_well_formed(
            rows in prop::collection::vec((0usize..40, 0.0..200.0f64, 0.0..200.0f64), 0..120)
        ) {
            let mut set = DetectionSet::new();
            for (t, x, y) in rows {
                set.push(Detection::new(t, BBox::new(x, y, 30.0, 30.0), 0.5, Level::Low));
            }
            let tracks = track(&set, &TrackerConfig::default(), 40).unwrap();
            let mut used = std::collections::HashSet::new();
            for tr in &tracks {
                prop_assert!(tr.is_well_formed());
                for s in tr.detected_states() {
                    // a detection belongs to at most one tracklet
                    prop_assert!(used.insert((s.frame, s.detection.unwrap())));
                }
            }
            prop_assert_eq!(used.len(), set.len());
        }
    }
}
