//! Motion features: dense Lucas-Kanade flow magnitude and deviation from the
//! per-pixel temporal median, stacked with the raw intensity.
//!
//! Flow is solved per pixel over a square window using central-difference
//! spatial gradients of the mean of the two frames and the forward temporal
//! difference. Intensities are normalized to `[0, 1]` before solving; a
//! pixel whose window-averaged structure tensor has smallest eigenvalue
//! below [`MIN_EIGENVALUE`] is reported as zero flow and flagged as
//! ill-conditioned.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Frame, FrameSequence};

pub const DEFAULT_WINDOW: usize = 15;

/// Smallest-eigenvalue cut-off on the normalized, window-averaged structure tensor.
pub const MIN_EIGENVALUE: f64 = 1e-4;

/// Pixels per tile when computing the temporal median.
const MEDIAN_TILE: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    /// Odd side length of the Lucas-Kanade window.
    pub window: usize,
    /// Smooth both frames with a 5-tap binomial kernel before solving.
    pub presmooth: bool,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            presmooth: false,
        }
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::InvalidInput(format!(
                "flow window must be odd and >= 3, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

/// Dense per-pixel flow in pixels/frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    magnitude: Vec<f64>,
    conditioned: Vec<bool>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
            magnitude: vec![0.0; n],
            conditioned: vec![false; n],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn magnitude(&self) -> &[f64] {
        &self.magnitude
    }

    /// `true` where the structure tensor passed the eigenvalue test.
    pub fn conditioned(&self) -> &[bool] {
        &self.conditioned
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitude.iter().copied().fold(0.0, f64::max)
    }
}

fn check_same_dims(a: &Frame, b: &Frame) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            index: 1,
            path: "<frame pair>".into(),
            expected_w: a.width(),
            expected_h: a.height(),
            actual_w: b.width(),
            actual_h: b.height(),
        });
    }
    Ok(())
}

fn normalized(frame: &Frame) -> Vec<f64> {
    frame.as_slice().iter().map(|&p| p as f64 / 255.0).collect()
}

/// Separable [1 4 6 4 1]/16 smoothing with clamped borders.
fn binomial_smooth(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in K.iter().enumerate() {
                let xi = (x as isize + k as isize - 2).clamp(0, w as isize - 1) as usize;
                acc += wk * row[xi];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wk) in K.iter().enumerate() {
                let yi = (y as isize + k as isize - 2).clamp(0, h as isize - 1) as usize;
                acc += wk * tmp[yi * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Summed-area table with a zero guard row and column.
struct Integral {
    stride: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(values: &[f64], w: usize, h: usize) -> Self {
        let stride = w + 1;
        let mut sums = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += values[y * w + x];
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Self { stride, sums }
    }

    /// Sum over `[x0, x1) x [y0, y1)`.
    #[inline]
    fn rect(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.stride;
        self.sums[y1 * s + x1] - self.sums[y0 * s + x1] - self.sums[y1 * s + x0] + self.sums[y0 * s + x0]
    }
}

/// Dense Lucas-Kanade flow from `prev` to `next` with a `window`-sized
/// square neighbourhood.
pub fn lucas_kanade_flow(prev: &Frame, next: &Frame, window: usize) -> Result<FlowField> {
    lucas_kanade_flow_with(
        prev,
        next,
        &MotionConfig {
            window,
            presmooth: false,
        },
    )
}

pub fn lucas_kanade_flow_with(prev: &Frame, next: &Frame, cfg: &MotionConfig) -> Result<FlowField> {
    cfg.validate()?;
    check_same_dims(prev, next)?;
    let (w, h) = prev.dims();
    let n = w * h;

    let (mut p, mut q) = (normalized(prev), normalized(next));
    if cfg.presmooth {
        p = binomial_smooth(&p, w, h);
        q = binomial_smooth(&q, w, h);
    }

    let mut ixx = vec![0.0; n];
    let mut ixy = vec![0.0; n];
    let mut iyy = vec![0.0; n];
    let mut ixt = vec![0.0; n];
    let mut iyt = vec![0.0; n];
    let mean = |i: usize| 0.5 * (p[i] + q[i]);
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let i = y * w + x;
            let gx = 0.5 * (mean(y * w + xp) - mean(y * w + xm));
            let gy = 0.5 * (mean(yp * w + x) - mean(ym * w + x));
            let gt = q[i] - p[i];
            ixx[i] = gx * gx;
            ixy[i] = gx * gy;
            iyy[i] = gy * gy;
            ixt[i] = gx * gt;
            iyt[i] = gy * gt;
        }
    }
    let sxx = Integral::new(&ixx, w, h);
    let sxy = Integral::new(&ixy, w, h);
    let syy = Integral::new(&iyy, w, h);
    let sxt = Integral::new(&ixt, w, h);
    let syt = Integral::new(&iyt, w, h);
    drop((ixx, ixy, iyy, ixt, iyt));

    let r = cfg.window / 2;
    let mut flow = FlowField::zeros(w, h);
    for y in 0..h {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r + 1).min(h);
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r + 1).min(w);
            let count = ((x1 - x0) * (y1 - y0)) as f64;
            let a = sxx.rect(x0, y0, x1, y1) / count;
            let b = sxy.rect(x0, y0, x1, y1) / count;
            let c = syy.rect(x0, y0, x1, y1) / count;
            let half_trace = 0.5 * (a + c);
            let spread = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            if half_trace - spread < MIN_EIGENVALUE {
                continue;
            }
            let bx = -sxt.rect(x0, y0, x1, y1) / count;
            let by = -syt.rect(x0, y0, x1, y1) / count;
            let det = a * c - b * b;
            let u = (c * bx - b * by) / det;
            let v = (a * by - b * bx) / det;
            let i = y * w + x;
            flow.u[i] = u;
            flow.v[i] = v;
            flow.magnitude[i] = (u * u + v * v).sqrt();
            flow.conditioned[i] = true;
        }
    }
    Ok(flow)
}

/// Per-pixel temporal median over all frames; the lower median for an even count.
pub fn median_background(seq: &FrameSequence) -> Result<Frame> {
    median_of_frames(seq.frames())
}

pub fn median_of_frames(frames: &[Frame]) -> Result<Frame> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidInput("median of an empty sequence".into()))?;
    let (w, h) = first.dims();
    for f in frames {
        check_same_dims(first, f)?;
    }
    let n = w * h;
    let rank = (frames.len() - 1) / 2;
    let mut out = vec![0u8; n];
    // Exact median via 256-bin histograms, one tile of pixels at a time.
    let mut hist = vec![0u32; MEDIAN_TILE.min(n) * 256];
    let mut start = 0;
    while start < n {
        let end = (start + MEDIAN_TILE).min(n);
        let len = end - start;
        hist[..len * 256].fill(0);
        for f in frames {
            for (k, &px) in f.as_slice()[start..end].iter().enumerate() {
                hist[k * 256 + px as usize] += 1;
            }
        }
        for k in 0..len {
            let bins = &hist[k * 256..(k + 1) * 256];
            let mut seen = 0usize;
            for (value, &count) in bins.iter().enumerate() {
                seen += count as usize;
                if seen > rank {
                    out[start + k] = value as u8;
                    break;
                }
            }
        }
        start = end;
    }
    Frame::new(w, h, out)
}

/// `|frame - background|` per pixel.
pub fn median_deviation(frame: &Frame, background: &Frame) -> Result<Frame> {
    check_same_dims(background, frame)?;
    let data = frame
        .as_slice()
        .iter()
        .zip(background.as_slice())
        .map(|(&a, &b)| a.abs_diff(b))
        .collect();
    Frame::new(frame.width(), frame.height(), data)
}

/// Affine map of one feature channel onto `[0, 255]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelScale {
    pub min: f64,
    pub max: f64,
}

impl ChannelScale {
    fn empty() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    fn observe(&mut self, values: impl IntoIterator<Item = f64>) {
        for v in values {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
    }

    /// A channel with zero range maps to 0.
    pub fn apply(&self, value: f64) -> u8 {
        let range = self.max - self.min;
        if !(range > 0.0) {
            return 0;
        }
        ((value - self.min) / range * 255.0).round().clamp(0.0, 255.0) as u8
    }
}

/// Three 8-bit channels for one frame: intensity, flow magnitude from the
/// previous frame, and median deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub intensity: Frame,
    pub flow: Frame,
    pub deviation: Frame,
}

impl FeatureStack {
    /// Packs the channels as R = intensity, G = flow, B = deviation.
    pub fn to_rgb(&self) -> RgbImage {
        let (w, h) = self.intensity.dims();
        let mut img = RgbImage::new(w as u32, h as u32);
        let (i, f, d) = (
            self.intensity.as_slice(),
            self.flow.as_slice(),
            self.deviation.as_slice(),
        );
        for (k, px) in img.pixels_mut().enumerate() {
            px.0 = [i[k], f[k], d[k]];
        }
        img
    }
}

/// Computes per-video channel scales up front, then produces feature stacks
/// one frame at a time so long videos never hold every stack in memory.
pub struct FeatureExtractor<'a> {
    seq: &'a FrameSequence,
    cfg: MotionConfig,
    background: Frame,
    flow_scale: ChannelScale,
    deviation_scale: ChannelScale,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(seq: &'a FrameSequence, cfg: MotionConfig) -> Result<Self> {
        cfg.validate()?;
        if seq.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "feature extraction needs at least 2 frames, got {}",
                seq.len()
            )));
        }
        let background = median_background(seq)?;

        // frame 0 carries an all-zero flow channel
        let mut flow_scale = ChannelScale::empty();
        flow_scale.observe([0.0]);
        for t in 1..seq.len() {
            let flow = lucas_kanade_flow_with(seq.frame(t - 1), seq.frame(t), &cfg)?;
            flow_scale.observe(flow.magnitude().iter().copied());
        }

        let mut deviation_scale = ChannelScale::empty();
        for frame in seq.frames() {
            let (mut lo, mut hi) = (u8::MAX, u8::MIN);
            for (&a, &b) in frame.as_slice().iter().zip(background.as_slice()) {
                let d = a.abs_diff(b);
                lo = lo.min(d);
                hi = hi.max(d);
            }
            deviation_scale.observe([lo as f64, hi as f64]);
        }

        Ok(Self {
            seq,
            cfg,
            background,
            flow_scale,
            deviation_scale,
        })
    }

    pub fn background(&self) -> &Frame {
        &self.background
    }

    pub fn flow_scale(&self) -> ChannelScale {
        self.flow_scale
    }

    pub fn deviation_scale(&self) -> ChannelScale {
        self.deviation_scale
    }

    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }

    pub fn stack(&self, t: usize) -> Result<FeatureStack> {
        let frame = self.seq.frame(t);
        let (w, h) = frame.dims();
        let flow = if t == 0 {
            Frame::filled(w, h, 0)
        } else {
            let field = lucas_kanade_flow_with(self.seq.frame(t - 1), frame, &self.cfg)?;
            let data = field
                .magnitude()
                .iter()
                .map(|&m| self.flow_scale.apply(m))
                .collect();
            Frame::new(w, h, data)?
        };
        let deviation = median_deviation(frame, &self.background)?;
        let data = deviation
            .as_slice()
            .iter()
            .map(|&d| self.deviation_scale.apply(d as f64))
            .collect();
        Ok(FeatureStack {
            intensity: frame.clone(),
            flow,
            deviation: Frame::new(w, h, data)?,
        })
    }

    pub fn for_each<F>(&self, mut sink: F) -> Result<()>
    where
        F: FnMut(usize, FeatureStack) -> Result<()>,
    {
        for t in 0..self.seq.len() {
            sink(t, self.stack(t)?)?;
        }
        Ok(())
    }
}

/// One 3-channel stack per frame.
pub fn build_feature_stack(seq: &FrameSequence, window: usize) -> Result<Vec<FeatureStack>> {
    build_feature_stack_with(
        seq,
        MotionConfig {
            window,
            presmooth: false,
        },
    )
}

pub fn build_feature_stack_with(seq: &FrameSequence, cfg: MotionConfig) -> Result<Vec<FeatureStack>> {
    let extractor = FeatureExtractor::new(seq, cfg)?;
    let mut out = Vec::with_capacity(seq.len());
    extractor.for_each(|_, stack| {
        out.push(stack);
        Ok(())
    })?;
    Ok(out)
}
