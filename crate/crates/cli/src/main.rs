use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use memtrack::analytics::{
    calibrate_thresholds, match_detections, match_tracks, precision, read_ground_truth, recall, f1_score,
    write_ground_truth, Criterion,
};
use memtrack::detection::{
    detect_frame, merge_levels, read_detections, write_detections, BlobParams, DetectionSet, Level, LevelColumn,
};
use memtrack::imaging::{load_sequence, write_sequence, FrameSequence, SequenceManifest};
use memtrack::motion::{FeatureExtractor, MotionConfig};
use memtrack::overlay::render_overlay;
use memtrack::pipeline::{run_pipeline, PipelineConfig};
use memtrack::pruning::{prune, PrunerConfig};
use memtrack::simulation::{corrupt_detections, simulate, SimConfig};
use memtrack::tracking::{read_tracks, track, track_length_filter, write_tracks, TrackerConfig};
use memtrack::{Error, Result};

#[derive(Parser)]
#[command(name = "memtrack", version, about = "Detect, prune, track and evaluate small moving objects in image sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write per-frame motion-enhanced feature stacks as RGB PNGs.
    Features(FeaturesArgs),
    /// Run the built-in blob detector.
    Detect(DetectArgs),
    /// Merge per-level detection files into one file with a level column.
    Merge(MergeArgs),
    /// Apply the area, confidence and NMS filters.
    Prune(PruneArgs),
    /// Link detections into tracks and apply the length filter.
    Track(TrackArgs),
    /// Score detections and/or tracks against ground truth.
    Eval(EvalArgs),
    /// Sweep per-level confidence thresholds against ground truth.
    Calibrate(CalibrateArgs),
    /// Generate a synthetic scene with ground truth.
    Simulate(SimulateArgs),
    /// Run the whole pipeline from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 15)]
    window: usize,
    #[arg(long)]
    presmooth: bool,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Use the built-in detector (currently the only one).
    #[arg(long, required = true)]
    builtin: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 15)]
    window: usize,
    #[arg(long, default_value_t = BlobParams::default().threshold)]
    threshold: u8,
    #[arg(long, default_value_t = BlobParams::default().min_area)]
    min_area: usize,
    #[arg(long, default_value_t = BlobParams::default().max_area)]
    max_area: usize,
}

#[derive(Args)]
struct MergeArgs {
    #[arg(long)]
    low: Option<PathBuf>,
    #[arg(long)]
    medium: Option<PathBuf>,
    #[arg(long)]
    high: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML file with pruner settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_area: Option<f64>,
    #[arg(long)]
    nms_iou: Option<f64>,
    /// Per-level confidence threshold, e.g. `--threshold low=0.4`.
    #[arg(long, value_parser = parse_threshold)]
    threshold: Vec<(Level, f64)>,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    input: PathBuf,
    /// Filtered tracks.
    #[arg(long)]
    out: PathBuf,
    /// Tracks before the length filter.
    #[arg(long)]
    raw_out: Option<PathBuf>,
    /// Sequence the detections belong to; sets frame count and medium.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    medium: Option<String>,
    #[arg(long)]
    max_age: Option<usize>,
    #[arg(long)]
    iou: Option<f64>,
    #[arg(long)]
    min_length: Option<usize>,
    /// Directory for overlay PNGs; needs `--manifest`.
    #[arg(long, requires = "manifest")]
    overlay: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    tracks: Option<PathBuf>,
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long, default_value_t = 15.0)]
    radius: f64,
    #[arg(long, default_value_t = 0.5)]
    majority: f64,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    low: Option<PathBuf>,
    #[arg(long)]
    medium: Option<PathBuf>,
    #[arg(long)]
    high: Option<PathBuf>,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "max_f1")]
    criterion: String,
    /// Curve table output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 15.0)]
    radius: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write corrupted detections using the config's detector noise.
    #[arg(long)]
    detections: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

fn parse_threshold(s: &str) -> std::result::Result<(Level, f64), String> {
    let (l, v) = s.split_once('=').ok_or("expected LEVEL=VALUE")?;
    let level: Level = l.parse().map_err(|e: Error| e.to_string())?;
    let value: f64 = v.parse().map_err(|_| format!("invalid threshold {v:?}"))?;
    Ok((level, value))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn load(manifest: &Path) -> Result<FrameSequence> {
    load_sequence(&SequenceManifest::read(manifest)?)
}

fn features(a: FeaturesArgs) -> Result<()> {
    let cfg = MotionConfig {
        window: a.window,
        presmooth: a.presmooth,
    };
    cfg.validate()?;
    let seq = load(&a.manifest)?;
    let extractor = FeatureExtractor::new(&seq, cfg)?;
    create_dir(&a.out)?;
    extractor.for_each(|t, stack| {
        let p = a.out.join(format!("features_{t:05}.png"));
        stack.to_rgb().save(&p).map_err(|e| Error::Image { path: p.clone(), source: e })
    })?;
    println!("wrote {} feature stacks to {}", seq.len(), a.out.display());
    Ok(())
}

fn detect(a: DetectArgs) -> Result<()> {
    let motion = MotionConfig {
        window: a.window,
        presmooth: false,
    };
    let params = BlobParams {
        threshold: a.threshold,
        min_area: a.min_area,
        max_area: a.max_area,
        ..Default::default()
    };
    motion.validate()?;
    params.validate()?;
    let seq = load(&a.manifest)?;
    let extractor = FeatureExtractor::new(&seq, motion)?;
    let mut set = DetectionSet::with_frames(seq.len());
    extractor.for_each(|t, stack| {
        detect_frame(t, &stack, &params).into_iter().for_each(|d| set.push(d));
        Ok(())
    })?;
    write_detections(&a.out, &set, LevelColumn::Include)?;
    println!("{} detections over {} frames", set.len(), seq.len());
    Ok(())
}

fn level_files(low: &Option<PathBuf>, medium: &Option<PathBuf>, high: &Option<PathBuf>) -> Result<Vec<(Level, DetectionSet)>> {
    let mut out = Vec::new();
    for (level, path) in [(Level::Low, low), (Level::Medium, medium), (Level::High, high)] {
        if let Some(p) = path {
            out.push((level, read_detections(p, level)?));
        }
    }
    if out.is_empty() {
        return Err(Error::Config("give at least one of --low, --medium, --high".into()));
    }
    Ok(out)
}

fn merge(a: MergeArgs) -> Result<()> {
    let sets: Vec<DetectionSet> = level_files(&a.low, &a.medium, &a.high)?.into_iter().map(|(_, s)| s).collect();
    let merged = merge_levels(&sets);
    write_detections(&a.out, &merged, LevelColumn::Include)?;
    println!("{} detections", merged.len());
    Ok(())
}

fn prune_cmd(a: PruneArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => PrunerConfig::read(p)?,
        None => PrunerConfig::default(),
    };
    if let Some(v) = a.max_area {
        cfg.max_box_area = v;
    }
    if let Some(v) = a.nms_iou {
        cfg.nms_iou = v;
    }
    for (level, v) in a.threshold {
        cfg.confidence_thresholds.insert(level, v);
    }
    cfg.validate()?;
    let set = read_detections(&a.input, Level::Builtin)?;
    let stages = prune(&set, &cfg)?;
    write_detections(&a.out, &stages.after_nms, LevelColumn::Include)?;
    println!(
        "input {}  area {}  confidence {}  nms {}",
        set.len(),
        stages.after_area.len(),
        stages.after_confidence.len(),
        stages.after_nms.len()
    );
    Ok(())
}

fn track_cmd(a: TrackArgs) -> Result<()> {
    let seq = a.manifest.as_deref().map(load).transpose()?;
    let medium = a
        .medium
        .clone()
        .or_else(|| seq.as_ref().map(|s| s.medium().to_string()))
        .unwrap_or_default();
    let mut cfg = TrackerConfig::for_medium(&medium);
    if let Some(v) = a.max_age {
        cfg.max_age = v;
    }
    if let Some(v) = a.iou {
        cfg.iou_match_threshold = v;
    }
    if let Some(v) = a.min_length {
        cfg.min_track_length = v;
    }
    cfg.validate()?;
    let set = read_detections(&a.input, Level::Builtin)?;
    let n = match (&seq, a.frames) {
        (Some(s), _) => s.len(),
        (None, Some(n)) => n,
        (None, None) => set.num_frames(),
    };
    let tracks = track(&set, &cfg, n)?;
    let filtered = track_length_filter(&tracks, cfg.min_track_length);
    if let Some(p) = &a.raw_out {
        write_tracks(p, &tracks)?;
    }
    write_tracks(&a.out, &filtered)?;
    if let (Some(dir), Some(seq)) = (&a.overlay, &seq) {
        create_dir(dir)?;
        for (t, frame) in seq.frames().iter().enumerate() {
            let p = dir.join(format!("overlay_{t:05}.png"));
            render_overlay(frame, t, &filtered)
                .save(&p)
                .map_err(|e| Error::Image { path: p.clone(), source: e })?;
        }
    }
    println!("{} tracks, {} after length filter (min {})", tracks.len(), filtered.len(), cfg.min_track_length);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    if a.tracks.is_none() && a.detections.is_none() {
        return Err(Error::Config("give --tracks and/or --detections".into()));
    }
    if !(a.radius > 0.0) || !(0.5..=1.0).contains(&a.majority) {
        return Err(Error::Config("radius must be positive and majority in [0.5, 1]".into()));
    }
    let gt = read_ground_truth(&a.gt)?;
    let dets = a.detections.as_deref().map(|p| read_detections(p, Level::Builtin)).transpose()?;
    let tracks = a.tracks.as_deref().map(read_tracks).transpose()?;
    if let Some(d) = dets {
        let m = match_detections(&d, &gt, a.radius);
        let (p, r) = (precision(m.tp, m.fp), recall(m.tp, m.fn_));
        println!("detections: tp {} fp {} fn {}", m.tp, m.fp, m.fn_);
        println!("detection precision: {p:.4}");
        println!("detection recall: {r:.4}");
        println!("detection f1: {:.4}", f1_score(p, r));
    }
    if let Some(t) = tracks {
        let m = match_tracks(&t, &gt, a.radius, a.majority);
        let (p, r) = (m.precision(), m.recall());
        println!("tracks: tp {} fp {} recovered {} of {}", m.tp, m.fp, m.recovered.len(), m.total_gt);
        println!("precision: {p:.4}");
        println!("recall: {r:.4}");
        println!("f1: {:.4}", f1_score(p, r));
    }
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let criterion: Criterion = a.criterion.parse()?;
    if !(a.radius > 0.0) {
        return Err(Error::Config("radius must be positive".into()));
    }
    let per_level: BTreeMap<Level, DetectionSet> = level_files(&a.low, &a.medium, &a.high)?
        .into_iter()
        .map(|(level, set)| (level, set.retain(|d| d.level == level)))
        .collect();
    let gt = read_ground_truth(&a.gt)?;
    let result = calibrate_thresholds(&per_level, &gt, criterion, &PrunerConfig::default(), a.radius)?;
    result.write_curves(&a.out)?;
    for (level, thr) in result.chosen() {
        println!("{level} = {thr:.2}");
    }
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).map_err(|e| Error::Io {
        path: a.config.clone(),
        source: e,
    })?;
    let mut cfg = SimConfig::from_toml(&text)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let scene = simulate(&cfg)?;
    let corrupted = a
        .detections
        .then(|| corrupt_detections(&scene, &cfg.detector, cfg.seed))
        .transpose()?;
    create_dir(&a.out)?;
    let frames = a.out.join("frames");
    let mut manifest = write_sequence(&scene.to_sequence()?, &frames, "frame_%05d.png")?;
    manifest.dir = PathBuf::from("frames");
    manifest.write(&a.out.join("manifest.toml"))?;
    write_ground_truth(&a.out.join("gt.csv"), &scene.ground_truth)?;
    if let Some(c) = corrupted {
        write_detections(&a.out.join("detections.csv"), &c.detections, LevelColumn::Include)?;
    }
    println!(
        "{} frames, {} agents written to {}",
        cfg.frames,
        scene.ground_truth.len(),
        a.out.display()
    );
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = PipelineConfig::read(&a.config)?;
    let out = run_pipeline(&cfg)?;
    println!(
        "{} frames: {} detections, {} after pruning, {} tracks, {} after length filter",
        out.num_frames,
        out.detections.len(),
        out.pruned.after_nms.len(),
        out.tracks.len(),
        out.filtered.len()
    );
    if let Some(r) = out.report {
        print!("{}", r.to_text());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Features(a) => features(a),
        Command::Detect(a) => detect(a),
        Command::Merge(a) => merge(a),
        Command::Prune(a) => prune_cmd(a),
        Command::Track(a) => track_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Run(a) => run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
