use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::motion::FeatureStack;

use super::{Detection, DetectionSet, Level};

/// Built-in detector settings; thresholds apply to the rescaled
/// median-deviation channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobParams {
    pub threshold: u8,
    pub min_area: usize,
    pub max_area: usize,
    /// Side of the square box emitted around each centroid.
    pub box_size: f64,
}

impl Default for BlobParams {
    fn default() -> Self {
        Self {
            threshold: 96,
            min_area: 4,
            max_area: 400,
            box_size: 30.0,
        }
    }
}

impl BlobParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_area > self.max_area {
            return Err(Error::InvalidInput(format!(
                "blob min_area {} exceeds max_area {}",
                self.min_area, self.max_area
            )));
        }
        if !(self.box_size > 0.0) {
            return Err(Error::InvalidInput("blob box_size must be positive".into()));
        }
        Ok(())
    }
}

/// Thresholds the median-deviation channel of every frame and emits one
/// detection per 8-connected component whose area lies in
/// `[min_area, max_area]`. The detection sits at the deviation-weighted
/// centroid; its confidence is the component's mean deviation / 255.
pub fn blob_detect(stacks: &[FeatureStack], params: &BlobParams) -> Result<DetectionSet> {
    params.validate()?;
    if stacks.is_empty() {
        return Err(Error::InvalidInput("blob detection needs at least one frame".into()));
    }
    let mut set = DetectionSet::with_frames(stacks.len());
    for (t, stack) in stacks.iter().enumerate() {
        for d in detect_frame(t, stack, params) {
            set.push(d);
        }
    }
    Ok(set)
}

/// Blob detections on one frame's stack, tagged with frame index `t`.
pub fn detect_frame(t: usize, stack: &FeatureStack, params: &BlobParams) -> Vec<Detection> {
    let dev = &stack.deviation;
    let (w, h) = dev.dims();
    let px = dev.as_slice();
    let mut visited = vec![false; w * h];
    let mut queue = Vec::new();
    let mut out = Vec::new();
    for start in 0..w * h {
        if visited[start] || px[start] < params.threshold {
            continue;
        }
        visited[start] = true;
        queue.clear();
        queue.push(start);
        let (mut area, mut sum, mut sx, mut sy) = (0usize, 0.0f64, 0.0f64, 0.0f64);
        while let Some(i) = queue.pop() {
            let (x, y) = (i % w, i / w);
            let value = px[i] as f64;
            area += 1;
            sum += value;
            sx += value * x as f64;
            sy += value * y as f64;
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if !visited[j] && px[j] >= params.threshold {
                        visited[j] = true;
                        queue.push(j);
                    }
                }
            }
        }
        if area < params.min_area || area > params.max_area || sum <= 0.0 {
            continue;
        }
        let confidence = (sum / area as f64 / 255.0).clamp(0.0, 1.0);
        out.push(Detection::new(
            t,
            BBox::new(sx / sum, sy / sum, params.box_size, params.box_size),
            confidence,
            Level::Builtin,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Frame;

    fn stack_with(dev: Frame) -> FeatureStack {
        let (w, h) = dev.dims();
        FeatureStack {
            intensity: Frame::filled(w, h, 0),
            flow: Frame::filled(w, h, 0),
            deviation: dev,
        }
    }

    fn square(f: &mut Frame, x0: usize, y0: usize, side: usize, v: u8) {
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                f.set(x, y, v);
            }
        }
    }

    #[test]
    fn zero_channel_gives_nothing() {
        let s = stack_with(Frame::filled(32, 32, 0));
        let set = blob_detect(&[s.clone(), s], &BlobParams::default()).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.num_frames(), 2);
    }

    #[test]
    fn components_and_area_gate() {
        let mut f = Frame::filled(64, 64, 0);
        square(&mut f, 5, 5, 4, 200); // 16 px
        square(&mut f, 40, 40, 3, 120); // 9 px
        square(&mut f, 20, 50, 1, 250); // 1 px, too small
        let params = BlobParams {
            threshold: 100,
            min_area: 4,
            max_area: 100,
            box_size: 30.0,
        };
        let set = blob_detect(&[stack_with(f)], &params).unwrap();
        let dets = set.frame(0);
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[0].bbox, BBox::new(6.5, 6.5, 30.0, 30.0));
        assert!((dets[0].confidence - 200.0 / 255.0).abs() < 1e-12);
        assert_eq!(dets[1].bbox.cx, 41.0);
        assert!(dets[0].confidence > dets[1].confidence);
        assert!(dets.iter().all(|d| d.level == Level::Builtin));
    }

    #[test]
    fn diagonal_pixels_join() {
        let mut f = Frame::filled(16, 16, 0);
        for k in 0..6 {
            f.set(3 + k, 3 + k, 255);
        }
        let params = BlobParams {
            threshold: 1,
            min_area: 1,
            max_area: 100,
            box_size: 30.0,
        };
        assert_eq!(blob_detect(&[stack_with(f)], &params).unwrap().len(), 1);
    }

    #[test]
    fn invalid_params() {
        let s = stack_with(Frame::filled(4, 4, 0));
        let bad = BlobParams {
            min_area: 10,
            max_area: 5,
            ..BlobParams::default()
        };
        assert!(blob_detect(&[s], &bad).is_err());
        assert!(blob_detect(&[], &BlobParams::default()).is_err());
    }
}
