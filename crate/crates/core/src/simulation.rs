//! Synthetic scenes with known trajectories: run-and-tumble or Brownian
//! agents drawn as Gaussian blobs over static clutter, plus a detector-noise
//! model that corrupts the ideal per-frame detections.
//!
//! All randomness comes from ChaCha8 with the stream id selecting the
//! purpose (agent paths, clutter, per-frame pixel noise, per-frame detector
//! noise), so results are reproducible across platforms and independent of
//! evaluation order.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::analytics::{GroundTruth, MotilityClass, MotilityThresholds, PathPoint};
use crate::detection::{Detection, DetectionSet, Level};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::imaging::{Frame, FrameSequence};

const STREAM_AGENT: u64 = 1 << 32;
const STREAM_POPULATION: u64 = 2 << 32;
const STREAM_CLUTTER: u64 = 3 << 32;
const STREAM_NOISE: u64 = 4 << 32;
const STREAM_DETECTOR: u64 = 5 << 32;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentMotion {
    /// Straight runs at `speed` µm/s, reoriented uniformly at Poisson
    /// events of rate `tumble_rate` per second.
    RunAndTumble { speed: f64, tumble_rate: f64 },
    /// Isotropic Brownian motion with diffusivity in µm²/s.
    Brownian { diffusivity: f64 },
}

impl AgentMotion {
    /// Long-time diffusivity, `None` for ballistic runs.
    pub fn effective_diffusivity(&self) -> Option<f64> {
        match *self {
            AgentMotion::RunAndTumble { speed, tumble_rate } => expected_diffusivity(speed, tumble_rate).ok(),
            AgentMotion::Brownian { diffusivity } => Some(diffusivity),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    #[serde(flatten)]
    pub motion: AgentMotion,
    /// Per-frame probability that the agent yields no ideal detection.
    #[serde(default)]
    pub dropout: f64,
    /// Initial position in pixels; uniform over the frame when absent.
    #[serde(default)]
    pub start: Option<[f64; 2]>,
    /// Detector level reporting this agent; derived from its motility when absent.
    #[serde(default)]
    pub level: Option<Level>,
}

impl AgentConfig {
    pub fn run_and_tumble(speed: f64, tumble_rate: f64) -> Self {
        Self {
            motion: AgentMotion::RunAndTumble { speed, tumble_rate },
            dropout: 0.0,
            start: None,
            level: None,
        }
    }

    pub fn brownian(diffusivity: f64) -> Self {
        Self {
            motion: AgentMotion::Brownian { diffusivity },
            dropout: 0.0,
            start: None,
            level: None,
        }
    }

    pub fn level(&self) -> Level {
        self.level.unwrap_or_else(|| match self.motion.effective_diffusivity() {
            None => Level::High,
            Some(d) => match MotilityThresholds::default().classify(d) {
                MotilityClass::Immotile | MotilityClass::Low => Level::Low,
                MotilityClass::Medium => Level::Medium,
                MotilityClass::High => Level::High,
            },
        })
    }
}

/// Randomly drawn run-and-tumble agents, appended after the explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Population {
    pub count: usize,
    pub speed: [f64; 2],
    pub tumble_rate: [f64; 2],
    pub dropout: f64,
}

impl Default for Population {
    fn default() -> Self {
        Self {
            count: 0,
            speed: [5.0, 20.0],
            tumble_rate: [0.5, 2.0],
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub base: f64,
    /// Clutter blobs per 10,000 px².
    pub clutter_density: f64,
    pub clutter_sigma: [f64; 2],
    pub clutter_amplitude: [f64; 2],
    /// Per-pixel, per-frame Gaussian noise.
    pub noise_sigma: f64,
    pub agent_sigma: f64,
    pub agent_amplitude: f64,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            base: 140.0,
            clutter_density: 6.0,
            clutter_sigma: [1.5, 3.0],
            clutter_amplitude: [-50.0, -20.0],
            noise_sigma: 2.0,
            agent_sigma: 2.0,
            agent_amplitude: -40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorNoise {
    /// Miss probability for levels without an entry in `miss_by_level`.
    pub miss_probability: f64,
    pub miss_by_level: std::collections::BTreeMap<Level, f64>,
    pub false_positives_per_frame: f64,
    pub jitter_sigma: f64,
    pub tp_confidence: [f64; 2],
    pub fp_confidence: [f64; 2],
    pub box_size: f64,
}

impl Default for DetectorNoise {
    fn default() -> Self {
        Self {
            miss_probability: 0.0,
            miss_by_level: Default::default(),
            false_positives_per_frame: 0.0,
            jitter_sigma: 0.0,
            tp_confidence: [8.0, 2.0],
            fp_confidence: [2.0, 5.0],
            box_size: 30.0,
        }
    }
}

impl DetectorNoise {
    pub fn miss_for(&self, level: Level) -> f64 {
        self.miss_by_level.get(&level).copied().unwrap_or(self.miss_probability)
    }

    pub fn validate(&self) -> Result<()> {
        let probs = std::iter::once(&self.miss_probability).chain(self.miss_by_level.values());
        for p in probs {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Config(format!("miss probability {p} outside [0, 1]")));
            }
        }
        if !(self.false_positives_per_frame >= 0.0 && self.false_positives_per_frame.is_finite()) {
            return Err(Error::Config("false_positives_per_frame must be nonnegative".into()));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(Error::Config("jitter_sigma must be nonnegative".into()));
        }
        if self.tp_confidence.iter().chain(&self.fp_confidence).any(|v| !(*v > 0.0)) {
            return Err(Error::Config("Beta parameters must be positive".into()));
        }
        if !(self.box_size > 0.0) {
            return Err(Error::Config("box_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: f64,
    /// µm per pixel.
    pub pixel_scale: f64,
    pub medium: String,
    pub seed: u64,
    pub agents: Vec<AgentConfig>,
    pub population: Population,
    pub background: BackgroundConfig,
    pub detector: DetectorNoise,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            frames: 120,
            fps: 60.0,
            pixel_scale: 0.5,
            medium: "collagen".into(),
            seed: 0,
            agents: Vec::new(),
            population: Population::default(),
            background: BackgroundConfig::default(),
            detector: DetectorNoise::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(format!("simulation config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("simulation config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("frame size must be nonzero".into()));
        }
        if self.frames == 0 {
            return Err(Error::Config("frame count must be nonzero".into()));
        }
        if !(self.fps > 0.0 && self.fps.is_finite() && self.pixel_scale > 0.0 && self.pixel_scale.is_finite()) {
            return Err(Error::Config("fps and pixel_scale must be positive".into()));
        }
        for (i, a) in self.agents.iter().enumerate() {
            let ok = match a.motion {
                AgentMotion::RunAndTumble { speed, tumble_rate } => speed >= 0.0 && tumble_rate >= 0.0,
                AgentMotion::Brownian { diffusivity } => diffusivity >= 0.0,
            };
            if !ok || !(0.0..=1.0).contains(&a.dropout) {
                return Err(Error::Config(format!("agent {i}: rates must be nonnegative and dropout in [0, 1]")));
            }
        }
        let p = &self.population;
        let ordered = |r: [f64; 2]| 0.0 <= r[0] && r[0] <= r[1];
        if !(ordered(p.speed) && ordered(p.tumble_rate) && (0.0..=1.0).contains(&p.dropout)) {
            return Err(Error::Config("population ranges must be ordered and nonnegative".into()));
        }
        let b = &self.background;
        if !(b.clutter_density >= 0.0
            && b.noise_sigma >= 0.0
            && b.agent_sigma > 0.0
            && 0.0 < b.clutter_sigma[0]
            && b.clutter_sigma[0] <= b.clutter_sigma[1]
            && b.clutter_amplitude[0] <= b.clutter_amplitude[1])
        {
            return Err(Error::Config("invalid background parameters".into()));
        }
        self.detector.validate()
    }

    /// Explicit agents followed by the drawn population.
    pub fn resolved_agents(&self) -> Vec<AgentConfig> {
        let mut agents = self.agents.clone();
        let p = &self.population;
        let mut rng = rng_for(self.seed, STREAM_POPULATION);
        for _ in 0..p.count {
            let speed = uniform(&mut rng, p.speed);
            let tumble_rate = uniform(&mut rng, p.tumble_rate);
            let mut a = AgentConfig::run_and_tumble(speed, tumble_rate);
            a.dropout = p.dropout;
            agents.push(a);
        }
        agents
    }
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

/// Long-time diffusivity `v² / (2λ)` of planar run-and-tumble motion.
pub fn expected_diffusivity(speed: f64, tumble_rate: f64) -> Result<f64> {
    if !(tumble_rate > 0.0) {
        return Err(Error::InvalidInput(
            "tumble rate must be positive; straight runs have no finite diffusivity".into(),
        ));
    }
    Ok(speed * speed / (2.0 * tumble_rate))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub ground_truth: GroundTruth,
    /// Noise-free detections, one per visible agent per frame.
    pub ideal: DetectionSet,
    /// Agent id of every ideal detection, parallel to `ideal`.
    pub ideal_agents: Vec<Vec<u64>>,
    /// Rendered frames; empty when produced by [`simulate_motion`].
    pub frames: Vec<Frame>,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub pixel_scale: f64,
    pub medium: String,
}

impl SceneTruth {
    pub fn num_frames(&self) -> usize {
        self.ideal.num_frames()
    }

    pub fn to_sequence(&self) -> Result<FrameSequence> {
        FrameSequence::new(self.frames.clone(), self.fps, self.pixel_scale, self.medium.clone())
    }
}

/// Trajectories and ideal detections followed by rendering of every frame.
pub fn simulate(cfg: &SimConfig) -> Result<SceneTruth> {
    let mut scene = simulate_motion(cfg)?;
    let background = render_background(cfg);
    scene.frames = (0..cfg.frames)
        .map(|t| render_frame(cfg, &background, &scene.ground_truth, t))
        .collect();
    Ok(scene)
}

/// Trajectories and ideal detections only, without rendering.
pub fn simulate_motion(cfg: &SimConfig) -> Result<SceneTruth> {
    cfg.validate()?;
    let agents = cfg.resolved_agents();
    let mut gt = GroundTruth::new();
    let mut ideal = DetectionSet::with_frames(cfg.frames);
    let mut ideal_agents = vec![Vec::new(); cfg.frames];
    for (k, agent) in agents.iter().enumerate() {
        let id = k as u64 + 1;
        let mut rng = rng_for(cfg.seed, STREAM_AGENT | k as u64);
        let path = agent_path(cfg, agent, &mut rng)?;
        let level = agent.level();
        for p in &path {
            if agent.dropout > 0.0 && rng.random::<f64>() < agent.dropout {
                continue;
            }
            let bbox = BBox::new(p.x, p.y, cfg.detector.box_size, cfg.detector.box_size);
            ideal.push(Detection::new(p.frame, bbox, 1.0, level));
            ideal_agents[p.frame].push(id);
        }
        gt.insert(id, path)?;
    }
    Ok(SceneTruth {
        ground_truth: gt,
        ideal,
        ideal_agents,
        frames: Vec::new(),
        width: cfg.width,
        height: cfg.height,
        fps: cfg.fps,
        pixel_scale: cfg.pixel_scale,
        medium: cfg.medium.clone(),
    })
}

/// Maps an unbounded coordinate into `[0, hi]` by mirror reflection.
fn reflect(u: f64, hi: f64) -> f64 {
    if hi <= 0.0 {
        return 0.0;
    }
    let period = 2.0 * hi;
    let m = u.rem_euclid(period);
    if m <= hi {
        m
    } else {
        period - m
    }
}

// Agents move in an unfolded plane; reflecting the unfolded coordinate into
// the frame is equivalent to specular reflection off the walls.
fn agent_path(cfg: &SimConfig, agent: &AgentConfig, rng: &mut ChaCha8Rng) -> Result<Vec<PathPoint>> {
    let (xmax, ymax) = ((cfg.width - 1) as f64, (cfg.height - 1) as f64);
    let [mut x, mut y] = match agent.start {
        Some(s) => s,
        None => [rng.random::<f64>() * xmax, rng.random::<f64>() * ymax],
    };
    let dt = 1.0 / cfg.fps;
    let mut path = Vec::with_capacity(cfg.frames);
    path.push(PathPoint::new(0, reflect(x, xmax), reflect(y, ymax)));
    match agent.motion {
        AgentMotion::RunAndTumble { speed, tumble_rate } => {
            let v = speed / cfg.pixel_scale;
            let mut heading = rng.random::<f64>() * TAU;
            let waits = (tumble_rate > 0.0)
                .then(|| Exp::new(tumble_rate).map_err(|e| Error::Config(format!("tumble rate: {e}"))))
                .transpose()?;
            let mut next_tumble = waits.as_ref().map_or(f64::INFINITY, |w| w.sample(rng));
            for t in 1..cfg.frames {
                let mut remaining = dt;
                while next_tumble < remaining {
                    x += v * next_tumble * heading.cos();
                    y += v * next_tumble * heading.sin();
                    remaining -= next_tumble;
                    heading = rng.random::<f64>() * TAU;
                    next_tumble = waits.as_ref().map_or(f64::INFINITY, |w| w.sample(rng));
                }
                x += v * remaining * heading.cos();
                y += v * remaining * heading.sin();
                next_tumble -= remaining;
                path.push(PathPoint::new(t, reflect(x, xmax), reflect(y, ymax)));
            }
        }
        AgentMotion::Brownian { diffusivity } => {
            let sigma = (2.0 * diffusivity * dt).sqrt() / cfg.pixel_scale;
            let step = Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("diffusivity: {e}")))?;
            for t in 1..cfg.frames {
                x += step.sample(rng);
                y += step.sample(rng);
                path.push(PathPoint::new(t, reflect(x, xmax), reflect(y, ymax)));
            }
        }
    }
    Ok(path)
}

fn add_blob(canvas: &mut [f64], width: usize, height: usize, cx: f64, cy: f64, sigma: f64, amplitude: f64) {
    let reach = (4.0 * sigma).ceil();
    let x0 = (cx - reach).floor().max(0.0) as usize;
    let y0 = (cy - reach).floor().max(0.0) as usize;
    let x1 = ((cx + reach).ceil() as isize).min(width as isize - 1);
    let y1 = ((cy + reach).ceil() as isize).min(height as isize - 1);
    if x1 < x0 as isize || y1 < y0 as isize {
        return;
    }
    let inv = -0.5 / (sigma * sigma);
    for yy in y0..=y1 as usize {
        let dy = yy as f64 - cy;
        let row = &mut canvas[yy * width..(yy + 1) * width];
        for (xx, px) in row.iter_mut().enumerate().take(x1 as usize + 1).skip(x0) {
            let dx = xx as f64 - cx;
            *px += amplitude * ((dx * dx + dy * dy) * inv).exp();
        }
    }
}

/// Static clutter over the base level, before agents and noise.
pub fn render_background(cfg: &SimConfig) -> Vec<f64> {
    let (w, h) = (cfg.width, cfg.height);
    let b = &cfg.background;
    let mut canvas = vec![b.base; w * h];
    let mut rng = rng_for(cfg.seed, STREAM_CLUTTER);
    let count = (b.clutter_density * (w * h) as f64 / 10_000.0).round() as usize;
    for _ in 0..count {
        let cx = rng.random::<f64>() * w as f64;
        let cy = rng.random::<f64>() * h as f64;
        let sigma = uniform(&mut rng, b.clutter_sigma);
        let amp = uniform(&mut rng, b.clutter_amplitude);
        add_blob(&mut canvas, w, h, cx, cy, sigma, amp);
    }
    canvas
}

/// Background plus every agent present on frame `t` plus pixel noise.
pub fn render_frame(cfg: &SimConfig, background: &[f64], gt: &GroundTruth, t: usize) -> Frame {
    let (w, h) = (cfg.width, cfg.height);
    let b = &cfg.background;
    let mut canvas = background.to_vec();
    for (_, path) in gt.paths() {
        if let Ok(i) = path.binary_search_by_key(&t, |p| p.frame) {
            add_blob(&mut canvas, w, h, path[i].x, path[i].y, b.agent_sigma, b.agent_amplitude);
        }
    }
    if b.noise_sigma > 0.0 {
        let mut rng = rng_for(cfg.seed, STREAM_NOISE | t as u64);
        let noise = Normal::new(0.0, b.noise_sigma).expect("validated sigma");
        for px in canvas.iter_mut() {
            *px += noise.sample(&mut rng);
        }
    }
    let data = canvas.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    Frame::new(w, h, data).expect("canvas matches frame size")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedDetections {
    pub detections: DetectionSet,
    /// Source agent of each detection, `None` for false positives.
    pub provenance: Vec<Vec<Option<u64>>>,
}

impl CorruptedDetections {
    /// Agent behind a detection, looked up by exact value on its frame.
    pub fn source_of(&self, det: &Detection) -> Option<Option<u64>> {
        let frame = self.detections.frame(det.frame);
        frame.iter().position(|d| d == det).map(|i| self.provenance[det.frame][i])
    }
}

/// Applies misses, positional jitter, false positives and confidence draws
/// to the ideal detections.
pub fn corrupt_detections(truth: &SceneTruth, noise: &DetectorNoise, seed: u64) -> Result<CorruptedDetections> {
    noise.validate()?;
    let n_frames = truth.num_frames();
    let tp_conf = Beta::new(noise.tp_confidence[0], noise.tp_confidence[1])
        .map_err(|e| Error::Config(format!("tp_confidence: {e}")))?;
    let fp_conf = Beta::new(noise.fp_confidence[0], noise.fp_confidence[1])
        .map_err(|e| Error::Config(format!("fp_confidence: {e}")))?;
    let jitter = Normal::new(0.0, noise.jitter_sigma).map_err(|e| Error::Config(format!("jitter: {e}")))?;
    let fp_count = (noise.false_positives_per_frame > 0.0)
        .then(|| Poisson::new(noise.false_positives_per_frame))
        .transpose()
        .map_err(|e| Error::Config(format!("false positives: {e}")))?;
    let motile = [Level::Low, Level::Medium, Level::High];

    let mut out = DetectionSet::with_frames(n_frames);
    let mut provenance = vec![Vec::new(); n_frames];
    for t in 0..n_frames {
        let mut rng = rng_for(seed, STREAM_DETECTOR | t as u64);
        for (det, &agent) in truth.ideal.frame(t).iter().zip(&truth.ideal_agents[t]) {
            let miss = noise.miss_for(det.level);
            if miss > 0.0 && rng.random::<f64>() < miss {
                continue;
            }
            let mut bbox = det.bbox;
            if noise.jitter_sigma > 0.0 {
                bbox.cx += jitter.sample(&mut rng);
                bbox.cy += jitter.sample(&mut rng);
            }
            out.push(Detection::new(t, bbox, tp_conf.sample(&mut rng), det.level));
            provenance[t].push(Some(agent));
        }
        let n_fp = fp_count.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..n_fp {
            let cx = rng.random::<f64>() * truth.width as f64;
            let cy = rng.random::<f64>() * truth.height as f64;
            let level = motile[rng.random_range(0..motile.len())];
            let bbox = BBox::new(cx, cy, noise.box_size, noise.box_size);
            out.push(Detection::new(t, bbox, fp_conf.sample(&mut rng), level));
            provenance[t].push(None);
        }
    }
    Ok(CorruptedDetections {
        detections: out,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::mean_speed;

    fn base(frames: usize) -> SimConfig {
        SimConfig {
            width: 128,
            height: 96,
            frames,
            seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn expected_diffusivity_examples() {
        assert_eq!(expected_diffusivity(10.0, 2.0).unwrap(), 25.0);
        assert_eq!(expected_diffusivity(0.0, 2.0).unwrap(), 0.0);
        assert_eq!(expected_diffusivity(20.0, 2.0).unwrap(), 4.0 * 25.0);
        assert!(expected_diffusivity(10.0, 0.0).is_err());
    }

    #[test]
    fn no_agents_renders_background_plus_noise() {
        let mut cfg = base(3);
        cfg.background.noise_sigma = 0.0;
        let scene = simulate(&cfg).unwrap();
        assert!(scene.ground_truth.is_empty());
        assert!(scene.ideal.is_empty());
        let bg = render_background(&cfg);
        let expected: Vec<u8> = bg.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        for f in &scene.frames {
            assert_eq!(f.as_slice(), &expected[..]);
        }
    }

    #[test]
    fn straight_run_displacement() {
        let mut cfg = base(61);
        let mut a = AgentConfig::run_and_tumble(15.0, 0.0);
        a.start = Some([60.0, 48.0]);
        cfg.agents.push(a);
        let scene = simulate_motion(&cfg).unwrap();
        let path = scene.ground_truth.path(1).unwrap();
        let (p0, p1) = (path[0], path[60]);
        let d = (p1.x - p0.x).hypot(p1.y - p0.y);
        // 15 µm/s for 1 s at 0.5 µm/px
        assert!((d - 30.0).abs() < 1e-6, "{d}");
    }

    #[test]
    fn measured_speed_matches_configuration() {
        let mut cfg = base(600);
        cfg.width = 2000;
        cfg.height = 2000;
        let mut a = AgentConfig::run_and_tumble(12.0, 0.05);
        a.start = Some([1000.0, 1000.0]);
        cfg.agents.push(a);
        let scene = simulate_motion(&cfg).unwrap();
        let s = mean_speed(scene.ground_truth.path(1).unwrap(), cfg.fps, cfg.pixel_scale).unwrap();
        assert!((s - 12.0).abs() / 12.0 < 1e-3, "{s}");
    }

    #[test]
    fn paths_stay_inside() {
        let mut cfg = base(300);
        cfg.population.count = 8;
        cfg.population.speed = [40.0, 80.0];
        let scene = simulate_motion(&cfg).unwrap();
        for (_, path) in scene.ground_truth.paths() {
            assert_eq!(path.len(), 300);
            for p in path {
                assert!((0.0..=127.0).contains(&p.x) && (0.0..=95.0).contains(&p.y));
            }
        }
    }

    #[test]
    fn reflection_folds() {
        assert_eq!(reflect(5.0, 10.0), 5.0);
        assert_eq!(reflect(12.0, 10.0), 8.0);
        assert_eq!(reflect(-3.0, 10.0), 3.0);
        assert_eq!(reflect(23.0, 10.0), 3.0);
    }

    #[test]
    fn blob_centroid_matches_truth() {
        let mut cfg = base(1);
        cfg.background.clutter_density = 0.0;
        cfg.background.noise_sigma = 0.0;
        let mut a = AgentConfig::brownian(0.0);
        a.start = Some([40.3, 51.7]);
        cfg.agents.push(a);
        let scene = simulate(&cfg).unwrap();
        let f = &scene.frames[0];
        let base = cfg.background.base.round();
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for y in 0..f.height() {
            for x in 0..f.width() {
                let w = base - f.get(x, y) as f64;
                sx += w * x as f64;
                sy += w * y as f64;
                sw += w;
            }
        }
        assert!((sx / sw - 40.3).abs() < 0.5 && (sy / sw - 51.7).abs() < 0.5);
    }

    #[test]
    fn deterministic_for_seed() {
        let mut cfg = base(20);
        cfg.population.count = 3;
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed += 1;
        assert_ne!(simulate(&cfg).unwrap().ground_truth, a.ground_truth);
    }

    #[test]
    fn noiseless_corruption_keeps_ideal_boxes() {
        let mut cfg = base(30);
        cfg.population.count = 4;
        let scene = simulate_motion(&cfg).unwrap();
        let c = corrupt_detections(&scene, &DetectorNoise::default(), 9).unwrap();
        assert_eq!(c.detections.len(), scene.ideal.len());
        for (a, b) in c.detections.iter().zip(scene.ideal.iter()) {
            assert_eq!((a.frame, a.bbox, a.level), (b.frame, b.bbox, b.level));
            assert!((0.0..=1.0).contains(&a.confidence));
        }
        assert_eq!(corrupt_detections(&scene, &DetectorNoise::default(), 9).unwrap(), c);
    }

    #[test]
    fn full_miss_leaves_only_false_positives() {
        let mut cfg = base(50);
        cfg.population.count = 4;
        let scene = simulate_motion(&cfg).unwrap();
        let noise = DetectorNoise {
            miss_probability: 1.0,
            false_positives_per_frame: 2.0,
            ..Default::default()
        };
        let c = corrupt_detections(&scene, &noise, 1).unwrap();
        assert!(!c.detections.is_empty());
        assert!(c.provenance.iter().flatten().all(Option::is_none));
        let d = c.detections.frame(0).first().cloned();
        if let Some(d) = d {
            assert_eq!(c.source_of(&d), Some(None));
        }
    }

    #[test]
    fn miss_rate_is_binomial() {
        let mut cfg = base(600);
        cfg.population.count = 10;
        let scene = simulate_motion(&cfg).unwrap();
        let noise = DetectorNoise {
            miss_probability: 0.3,
            ..Default::default()
        };
        let c = corrupt_detections(&scene, &noise, 3).unwrap();
        let n = scene.ideal.len() as f64;
        let missed = n - c.detections.len() as f64;
        let sd = (n * 0.3 * 0.7).sqrt();
        assert!((missed - 0.3 * n).abs() < 3.0 * sd, "{missed} of {n}");
    }

    #[test]
    fn config_toml_round_trip_and_validation() {
        let text = r#"
            width = 64
            height = 64
            frames = 10
            seed = 5
            [[agents]]
            model = "run_and_tumble"
            speed = 10.0
            tumble_rate = 1.0
            start = [3.0, 4.0]
            [[agents]]
            model = "brownian"
            diffusivity = 0.5
            level = "medium"
            [detector]
            miss_probability = 0.3
        "#;
        let cfg = SimConfig::from_toml(text).unwrap();
        assert_eq!(cfg.agents.len(), 2);
        assert_eq!(cfg.agents[1].level(), Level::Medium);
        assert_eq!(cfg.agents[0].level(), Level::High);
        assert_eq!(SimConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
        assert!(SimConfig::from_toml("frames = 0").is_err());
        assert!(SimConfig::from_toml("width = 0").is_err());
        assert!(SimConfig::from_toml("[detector]\nmiss_probability = 1.5").is_err());
    }
}
