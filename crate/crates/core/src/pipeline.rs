//! End-to-end run driven by one TOML file: features, detection or ingest,
//! merge, prune, track, length filter, analytics.
//!
//! Relative paths in the config are resolved against the config file's
//! directory. Every stage writes its artifacts before the next one starts,
//! and `STAGE` in the output directory names the stage in progress (or
//! `complete`), so a failed run leaves its partial outputs identifiable.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::{
    diffusivity_curve, mean_speed, read_ground_truth, stage_report, track_points, EvalParams, EvalReport, StageOutputs,
};
use crate::detection::{detect_frame, merge_levels, read_detections, write_detections, BlobParams, DetectionSet, Level, LevelColumn};
use crate::error::{Error, Result};
use crate::imaging::{load_sequence, FrameSequence, SequenceManifest};
use crate::motion::{FeatureExtractor, MotionConfig};
use crate::overlay::render_overlay;
use crate::pruning::{prune, PruneStages, PrunerConfig};
use crate::tracking::{track, track_length_filter, write_tracks, KalmanParams, TrackerConfig, Tracklet};

/// Where detections come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectionSource {
    /// Connected components of the median-deviation channel.
    Builtin,
    /// One file per detector level; at least one must be given.
    Files {
        low: Option<PathBuf>,
        medium: Option<PathBuf>,
        high: Option<PathBuf>,
    },
    /// A single file, optionally with a `level` column.
    Merged { path: PathBuf },
}

/// Tracker settings whose unset fields fall back to defaults; the minimum
/// track length defaults from the sequence medium.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerSection {
    pub max_age: Option<usize>,
    pub iou_match_threshold: Option<f64>,
    pub min_track_length: Option<usize>,
    pub kalman: Option<KalmanParams>,
}

impl TrackerSection {
    pub fn resolve(&self, medium: &str) -> TrackerConfig {
        let mut cfg = TrackerConfig::for_medium(medium);
        if let Some(v) = self.max_age {
            cfg.max_age = v;
        }
        if let Some(v) = self.iou_match_threshold {
            cfg.iou_match_threshold = v;
        }
        if let Some(v) = self.min_track_length {
            cfg.min_track_length = v;
        }
        if let Some(v) = self.kalman {
            cfg.kalman = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    #[serde(default)]
    pub write_features: bool,
    #[serde(default)]
    pub write_overlays: bool,
    #[serde(default)]
    pub detections: Option<DetectionSource>,
    #[serde(default)]
    pub motion: MotionConfig,
    #[serde(default)]
    pub blob: BlobParams,
    #[serde(default)]
    pub pruner: PrunerConfig,
    #[serde(default)]
    pub tracker: TrackerSection,
    #[serde(default)]
    pub analytics: EvalParams,
    #[serde(skip)]
    pub base: PathBuf,
}

impl PipelineConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(format!("pipeline config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("pipeline config: {e}")))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    /// Checks everything that can be checked without touching input data.
    pub fn validate(&self) -> Result<()> {
        match &self.detections {
            None => return Err(Error::Config("no detection source configured (`[detections]`)".into())),
            Some(DetectionSource::Files { low, medium, high }) if low.is_none() && medium.is_none() && high.is_none() => {
                return Err(Error::Config("`files` detection source lists no level files".into()))
            }
            _ => {}
        }
        self.motion.validate()?;
        self.blob.validate()?;
        self.pruner.validate()?;
        self.tracker.resolve("").validate()?;
        self.analytics.validate()
    }
}

/// In-memory results of a run, mirroring the files written.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutputs {
    pub num_frames: usize,
    pub detections: DetectionSet,
    pub pruned: PruneStages,
    pub tracks: Vec<Tracklet>,
    pub filtered: Vec<Tracklet>,
    pub report: Option<EvalReport>,
}

fn mark(out: &Path, stage: &str) -> Result<()> {
    let p = out.join("STAGE");
    fs::write(&p, format!("{stage}\n")).map_err(|e| Error::io(p, e))
}

fn staged<T>(out: &Path, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    mark(out, stage)?;
    f().map_err(|e| e.in_stage(stage))
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutputs> {
    cfg.validate()?;
    let source = cfg.detections.clone().expect("validated");
    let out = cfg.resolve(&cfg.output_dir);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let seq = staged(&out, "load", || {
        let manifest = SequenceManifest::read(&cfg.resolve(&cfg.manifest))?;
        load_sequence(&manifest)
    })?;
    let n = seq.len();
    let gt = cfg
        .ground_truth
        .as_ref()
        .map(|p| staged(&out, "load", || read_ground_truth(&cfg.resolve(p))))
        .transpose()?;

    let builtin = matches!(source, DetectionSource::Builtin);
    let mut detections = if cfg.write_features || builtin {
        staged(&out, "features", || extract(cfg, &seq, &out, builtin))?
    } else {
        DetectionSet::with_frames(n)
    };

    if !builtin {
        detections = staged(&out, "detect", || ingest(cfg, &source, n))?;
    }
    staged(&out, "merge", || write_detections(&out.join("detections_merged.csv"), &detections, LevelColumn::Include))?;

    let pruned = staged(&out, "prune", || {
        let p = prune(&detections, &cfg.pruner)?;
        write_detections(&out.join("detections_area.csv"), &p.after_area, LevelColumn::Include)?;
        write_detections(&out.join("detections_confidence.csv"), &p.after_confidence, LevelColumn::Include)?;
        write_detections(&out.join("detections_nms.csv"), &p.after_nms, LevelColumn::Include)?;
        Ok(p)
    })?;

    let tracker = cfg.tracker.resolve(seq.medium());
    let (tracks, filtered) = staged(&out, "track", || {
        let tracks = track(&pruned.after_nms, &tracker, n)?;
        write_tracks(&out.join("tracks_raw.csv"), &tracks)?;
        let filtered = track_length_filter(&tracks, tracker.min_track_length);
        write_tracks(&out.join("tracks.csv"), &filtered)?;
        Ok((tracks, filtered))
    })?;

    let report = staged(&out, "analyze", || {
        write_motility(&out.join("motility.csv"), &filtered, &seq, &cfg.analytics)?;
        let Some(gt) = &gt else { return Ok(None) };
        let outputs = StageOutputs {
            detector: &detections,
            after_area: &pruned.after_area,
            after_confidence: &pruned.after_confidence,
            after_nms: &pruned.after_nms,
            tracks: &tracks,
            filtered: &filtered,
            fps: seq.fps(),
            pixel_scale: seq.pixel_scale(),
        };
        let report = stage_report(&outputs, gt, &cfg.analytics)?;
        let txt = out.join("report.txt");
        fs::write(&txt, report.to_text()).map_err(|e| Error::io(txt, e))?;
        let toml_path = out.join("report.toml");
        fs::write(&toml_path, report.to_toml()?).map_err(|e| Error::io(toml_path, e))?;
        Ok(Some(report))
    })?;

    if cfg.write_overlays {
        staged(&out, "overlay", || {
            let dir = out.join("overlays");
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (t, frame) in seq.frames().iter().enumerate() {
                let p = dir.join(format!("overlay_{t:05}.png"));
                render_overlay(frame, t, &filtered)
                    .save(&p)
                    .map_err(|e| Error::Image { path: p.clone(), source: e })?;
            }
            Ok(())
        })?;
    }
    mark(&out, "complete")?;
    Ok(PipelineOutputs {
        num_frames: n,
        detections,
        pruned,
        tracks,
        filtered,
        report,
    })
}

fn extract(cfg: &PipelineConfig, seq: &FrameSequence, out: &Path, detect: bool) -> Result<DetectionSet> {
    let extractor = FeatureExtractor::new(seq, cfg.motion)?;
    let dir = out.join("features");
    if cfg.write_features {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut set = DetectionSet::with_frames(seq.len());
    extractor.for_each(|t, stack| {
        if cfg.write_features {
            let p = dir.join(format!("features_{t:05}.png"));
            stack.to_rgb().save(&p).map_err(|e| Error::Image { path: p.clone(), source: e })?;
        }
        if detect {
            for d in detect_frame(t, &stack, &cfg.blob) {
                set.push(d);
            }
        }
        Ok(())
    })?;
    Ok(set)
}

fn ingest(cfg: &PipelineConfig, source: &DetectionSource, n: usize) -> Result<DetectionSet> {
    let set = match source {
        DetectionSource::Builtin => unreachable!("built-in detections come from feature extraction"),
        DetectionSource::Files { low, medium, high } => {
            let mut sets = Vec::new();
            for (level, path) in [(Level::Low, low), (Level::Medium, medium), (Level::High, high)] {
                if let Some(p) = path {
                    sets.push(read_detections(&cfg.resolve(p), level)?);
                }
            }
            merge_levels(&sets)
        }
        DetectionSource::Merged { path } => read_detections(&cfg.resolve(path), Level::Builtin)?,
    };
    set.validate(n)?;
    let mut set = set;
    set.ensure_frames(n);
    Ok(set)
}

/// Per-track peak diffusivity, motility class and mean speed.
fn write_motility(path: &Path, tracks: &[Tracklet], seq: &FrameSequence, params: &EvalParams) -> Result<()> {
    let mut text = String::from("track_id,first_frame,last_frame,peak_diffusivity,motility,mean_speed\n");
    for tr in tracks {
        let pts = track_points(tr);
        let (peak, class, speed) = match (
            diffusivity_curve(&pts, seq.fps(), seq.pixel_scale(), &params.diffusivity()),
            mean_speed(&pts, seq.fps(), seq.pixel_scale()),
        ) {
            (Ok(c), Ok(s)) => {
                let class = params.motility.classify(c.peak).as_str();
                (c.peak.to_string(), class, s.to_string())
            }
            _ => (String::new(), "", String::new()),
        };
        text.push_str(&format!("{},{},{},{peak},{class},{speed}\n", tr.id, tr.first_frame(), tr.last_frame()));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        manifest = "scene/manifest.toml"
        output_dir = "out"
        [detections]
        source = "builtin"
    "#;

    #[test]
    fn parses_minimal_config() {
        let cfg = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.detections, Some(DetectionSource::Builtin));
        assert_eq!(cfg.pruner, PrunerConfig::default());
        assert_eq!(cfg.tracker.resolve("collagen").min_track_length, 60);
        assert_eq!(cfg.tracker.resolve("liquid").min_track_length, 30);
        let again = PipelineConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn missing_detection_source_is_config_error() {
        let err = PipelineConfig::from_toml("manifest = \"m.toml\"\noutput_dir = \"o\"\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = PipelineConfig::from_toml(
            "manifest = \"m.toml\"\noutput_dir = \"o\"\n[detections]\nsource = \"files\"\n",
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn file_sources_and_overrides() {
        let text = r#"
            manifest = "m.toml"
            output_dir = "o"
            [detections]
            source = "files"
            low = "low.csv"
            high = "high.csv"
            [pruner]
            nms_iou = 0.5
            confidence_thresholds = { low = 0.2, medium = 0.3, high = 0.4, builtin = 0.0 }
            [tracker]
            min_track_length = 45
            [analytics]
            radius_px = 10.0
        "#;
        let cfg = PipelineConfig::from_toml(text).unwrap();
        assert_eq!(cfg.tracker.resolve("liquid").min_track_length, 45);
        assert_eq!(cfg.pruner.confidence_thresholds[&Level::High], 0.4);
        assert_eq!(cfg.analytics.radius_px, 10.0);
        assert!(PipelineConfig::from_toml(&text.replace("nms_iou = 0.5", "nms_iou = 1.5")).is_err());
        assert!(PipelineConfig::from_toml(&text.replace("radius_px", "radius")).is_err());
    }
}
