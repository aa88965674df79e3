//! The `nap` command line: pipeline stages connected through files.
//!
//! Exit status is 0 on success, 1 on usage errors and 2 on data errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::align::{
    compute_size_delta, downsample_beams, estimate_beams, statnorm_cloud, statnorm_labels, ResizeMode,
};
use crate::bank::PatternBank;
use crate::diversity::{select_frames, FrameRecord, ScoredBox, SelectionConfig};
use crate::error::{Error, Result};
use crate::io::{
    read_activation_dump, read_beam_sidecar, read_label_file, read_point_cloud_file, resolve_size_stats,
    write_label_file, write_point_cloud_file, ActivationRecord, Role,
};
use crate::layer_select::{rank_layers, LayerDistances};
use crate::metrics::{evaluate, Box3D, EvalFrame, EvalSettings, Interpolation, IouKind};
use crate::patterns::{extract_pattern, read_pattern_file, write_pattern_file, BinaryPattern};
use crate::schedules::{
    const_schedule, l2sp_report, linear_fade, read_weight_file, schedule_csv, schedule_json, L2SPConfig,
};

/// Environment variable capping worker threads; 0 or unset means automatic.
pub const THREADS_ENV: &str = "NAP_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "nap",
    version,
    about = "Activation-pattern frame selection for LiDAR 3D detection",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Turn one layer of an activation dump into a binary pattern cache.
    Extract(ExtractArgs),
    /// Collect ground-truth patterns into a bank file.
    Bank(BankArgs),
    /// Rank layers by AUROC of TP/FP distances to the ground-truth bank.
    Layers(LayersArgs),
    /// Score target frames by the entropy of their bank distances.
    Score(ScoreArgs),
    /// Select diverse, informative frames for annotation.
    Select(SelectArgs),
    /// Shift source label sizes toward target mean dimensions.
    Statnorm(StatnormArgs),
    /// Drop LiDAR beams to emulate a lower-resolution sensor.
    Downsample(DownsampleArgs),
    /// KITTI-style average precision of detections against ground truth.
    Eval(EvalArgs),
    /// Emit learning-rate tables or check an L2-SP penalty.
    Schedule(ScheduleArgs),
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Activation dump (JSONL or NAPD binary).
    #[arg(long)]
    dump: PathBuf,
    /// Layer to extract; optional when the dump holds a single layer.
    #[arg(long)]
    layer: Option<String>,
    /// Pattern file; box metadata goes to `<out>.meta.jsonl`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["patterns", "dump"])))]
struct BankArgs {
    /// Pattern cache written by `extract`.
    #[arg(long)]
    patterns: Option<PathBuf>,
    #[arg(long, requires = "layer")]
    dump: Option<PathBuf>,
    #[arg(long)]
    layer: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LayersArgs {
    #[arg(long)]
    dump: PathBuf,
    /// Output JSON; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["patterns", "dump"])))]
struct ScoreArgs {
    /// Pattern cache of target detections.
    #[arg(long)]
    patterns: Option<PathBuf>,
    #[arg(long, requires = "layer")]
    dump: Option<PathBuf>,
    #[arg(long)]
    layer: Option<String>,
    /// Bank file; with `--dump` it defaults to the dump's GT patterns.
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["scores", "dump"])))]
struct SelectArgs {
    /// Frame scores written by `score`.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, requires = "layer")]
    dump: Option<PathBuf>,
    #[arg(long)]
    layer: Option<String>,
    #[arg(long, conflicts_with = "scores")]
    bank: Option<PathBuf>,
    /// Number of frames to select.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Proposal size; defaults to 10 N.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 1)]
    min_boxes: usize,
    #[arg(long)]
    score_threshold: Option<f64>,
    /// Selection JSON; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plain-text frame list; defaults to `<out>.frames.txt` when `--out` is set.
    #[arg(long)]
    frame_list: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Additive,
    Multiplicative,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("stats").required(true).args(["source", "delta"])))]
struct StatnormArgs {
    /// Directory of source KITTI label files.
    #[arg(long)]
    labels: PathBuf,
    /// Source size statistics: bundled name (kitti, nuscenes, waymo) or JSON path.
    #[arg(long, requires = "target")]
    source: Option<String>,
    #[arg(long)]
    target: Option<String>,
    /// Precomputed per-class delta JSON instead of two statistics files.
    #[arg(long, conflicts_with_all = ["source", "target"])]
    delta: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "additive")]
    mode: ModeArg,
    #[arg(long)]
    out: PathBuf,
    /// Point clouds to resize along with their boxes, in the label frame.
    #[arg(long, requires = "out_clouds")]
    clouds: Option<PathBuf>,
    #[arg(long)]
    out_clouds: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DownsampleArgs {
    /// Directory of `.bin` clouds.
    #[arg(long)]
    clouds: PathBuf,
    #[arg(long)]
    source_beams: u32,
    #[arg(long)]
    target_beams: u32,
    /// Directory of `.beam` sidecars; defaults to the cloud directory.
    #[arg(long)]
    beams: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InterpArg {
    R40,
    R11,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    det: PathBuf,
    /// Clouds for the ground-truth point-count filter.
    #[arg(long, requires = "min_points")]
    cloud: Option<PathBuf>,
    #[arg(long, requires = "cloud")]
    min_points: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.7")]
    iou: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "Car")]
    class: Vec<String>,
    #[arg(long, value_enum, default_value = "r40")]
    interp: InterpArg,
    /// Use bird's-eye-view IoU instead of 3D IoU.
    #[arg(long)]
    bev: bool,
    #[arg(long)]
    pr_csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    L2spCheck,
    Fade,
    Const,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Starting (fade) or constant learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 40)]
    epochs: u32,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Current weights for `l2sp-check`.
    #[arg(long)]
    w: Option<PathBuf>,
    /// Reference weights for `l2sp-check`.
    #[arg(long)]
    w0: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn thread_pool() -> std::result::Result<rayon::ThreadPool, String> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got {v:?}"))?,
        _ => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Extract(a) => extract(a),
        Command::Bank(a) => bank(a),
        Command::Layers(a) => layers(a),
        Command::Score(a) => score(a),
        Command::Select(a) => select(a),
        Command::Statnorm(a) => statnorm(a),
        Command::Downsample(a) => downsample(a),
        Command::Eval(a) => eval(a),
        Command::Schedule(a) => schedule(a),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::from(e).in_file(p)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::from(e).in_file(path))
}

/// Files in `dir` with extension `ext`, sorted by name.
fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::from(e).in_file(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Per-pattern metadata stored next to a pattern cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternMeta {
    pub frame: String,
    #[serde(rename = "box")]
    pub box_id: String,
    pub layer: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Path of the metadata sidecar for a pattern cache.
pub fn meta_path(patterns: &Path) -> PathBuf {
    let mut name = patterns.as_os_str().to_owned();
    name.push(".meta.jsonl");
    PathBuf::from(name)
}

fn resolve_layer(records: &[ActivationRecord], layer: Option<&str>) -> Result<String> {
    if let Some(l) = layer {
        if !records.iter().any(|r| r.layer_id == l) {
            return Err(Error::InvalidArgument(format!("layer {l:?} does not occur in the dump")));
        }
        return Ok(l.to_string());
    }
    let layers: std::collections::BTreeSet<&str> = records.iter().map(|r| r.layer_id.as_str()).collect();
    match layers.len() {
        1 => Ok(layers.into_iter().next().unwrap_or_default().to_string()),
        0 => Err(Error::Empty("activation dump")),
        n => Err(Error::InvalidArgument(format!("dump holds {n} layers; pass --layer"))),
    }
}

/// Patterns of one layer in dump order.
fn layer_patterns(records: &[ActivationRecord], layer: &str) -> Result<Vec<(PatternMeta, BinaryPattern)>> {
    records
        .iter()
        .filter(|r| r.layer_id == layer)
        .map(|r| {
            let meta = PatternMeta {
                frame: r.frame_id.clone(),
                box_id: r.box_id.clone(),
                layer: r.layer_id.clone(),
                role: r.role,
                score: r.score,
            };
            Ok((meta, extract_pattern(&r.values)?))
        })
        .collect()
}

fn read_pattern_cache(path: &Path) -> Result<Vec<(PatternMeta, BinaryPattern)>> {
    let (_, patterns) = read_pattern_file(path)?;
    let mpath = meta_path(path);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::from(e).in_file(&mpath))?;
    let metas = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<PatternMeta>(l).map_err(|e| Error::Schema(e.to_string()).at_line(&mpath, i + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    if metas.len() != patterns.len() {
        return Err(Error::DimensionMismatch {
            expected: patterns.len(),
            found: metas.len(),
        }
        .in_file(&mpath));
    }
    Ok(metas.into_iter().zip(patterns).collect())
}

fn pattern_source(
    patterns: Option<&Path>,
    dump: Option<&Path>,
    layer: Option<&str>,
) -> Result<Vec<(PatternMeta, BinaryPattern)>> {
    match (patterns, dump) {
        (Some(p), _) => read_pattern_cache(p),
        (None, Some(d)) => {
            let records = read_activation_dump(d)?;
            let layer = resolve_layer(&records, layer)?;
            layer_patterns(&records, &layer)
        }
        (None, None) => Err(Error::InvalidArgument("no pattern source".into())),
    }
}

fn gt_bank(entries: &[(PatternMeta, BinaryPattern)]) -> Result<PatternBank> {
    let gts: Vec<&BinaryPattern> = entries.iter().filter(|(m, _)| m.role == Role::Gt).map(|(_, p)| p).collect();
    if gts.is_empty() {
        return Err(Error::Empty("ground-truth patterns"));
    }
    PatternBank::build(gts)
}

fn extract(a: ExtractArgs) -> CliResult {
    let records = read_activation_dump(&a.dump)?;
    let layer = resolve_layer(&records, a.layer.as_deref())?;
    let entries = layer_patterns(&records, &layer)?;
    let dim = entries.first().map(|(_, p)| p.dim()).ok_or(Error::Empty("layer patterns"))?;
    let patterns: Vec<BinaryPattern> = entries.iter().map(|(_, p)| p.clone()).collect();
    write_pattern_file(&a.out, dim, &patterns)?;
    let meta: String = entries
        .iter()
        .map(|(m, _)| serde_json::to_string(m).map(|s| s + "\n"))
        .collect::<std::result::Result<_, _>>()
        .map_err(Error::from)?;
    write_output(Some(&meta_path(&a.out)), &meta)?;
    log::info!("extracted {} patterns of layer {layer} (d = {dim})", patterns.len());
    Ok(())
}

fn bank(a: BankArgs) -> CliResult {
    let entries = pattern_source(a.patterns.as_deref(), a.dump.as_deref(), a.layer.as_deref())?;
    let bank = gt_bank(&entries)?;
    let patterns: Vec<BinaryPattern> = bank.patterns().collect();
    write_pattern_file(&a.out, bank.dim(), &patterns)?;
    Ok(())
}

fn layers(a: LayersArgs) -> CliResult {
    let records = read_activation_dump(&a.dump)?;
    let mut by_layer: BTreeMap<&str, Vec<&ActivationRecord>> = BTreeMap::new();
    for r in &records {
        by_layer.entry(r.layer_id.as_str()).or_default().push(r);
    }
    let mut dists = BTreeMap::new();
    for (layer, recs) in by_layer {
        let mut gt = Vec::new();
        let (mut tp, mut fp) = (Vec::new(), Vec::new());
        for r in recs {
            let p = extract_pattern(&r.values)?;
            match r.role {
                Role::Gt => gt.push(p),
                Role::Tp => tp.push(p),
                Role::Fp => fp.push(p),
                Role::Det => {}
            }
        }
        let entry = if gt.is_empty() {
            log::warn!("layer {layer}: no ground-truth patterns, AUROC undefined");
            LayerDistances::default()
        } else {
            let bank = PatternBank::build(&gt)?;
            LayerDistances {
                tp: bank.batch_nearest(&tp)?,
                fp: bank.batch_nearest(&fp)?,
            }
        };
        dists.insert(layer.to_string(), entry);
    }
    let ranked = rank_layers(&dists);
    let json = serde_json::to_string_pretty(&ranked).map_err(Error::from)? + "\n";
    write_output(a.out.as_deref(), &json)?;
    Ok(())
}

/// Serialized per-frame scores exchanged between `score` and `select`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreFile {
    pub dim: usize,
    pub frames: Vec<ScoreFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreFrame {
    pub frame: String,
    #[serde(rename = "H")]
    pub entropy: f64,
    pub boxes: Vec<ScoreBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreBox {
    #[serde(rename = "box")]
    pub box_id: String,
    /// Pattern words as hex, word 0 first.
    pub pattern: String,
    pub distance: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// Scores `det` patterns against `bank`, grouped by frame id. Without any
/// `det` entries, `tp` and `fp` entries stand in as detections.
fn score_entries(bank: &PatternBank, entries: &[(PatternMeta, BinaryPattern)]) -> Result<(ScoreFile, Vec<FrameRecord>)> {
    let has_det = entries.iter().any(|(m, _)| m.role == Role::Det);
    let dets: Vec<&(PatternMeta, BinaryPattern)> = entries
        .iter()
        .filter(|(m, _)| if has_det { m.role == Role::Det } else { m.role != Role::Gt })
        .collect();
    if dets.is_empty() {
        return Err(Error::Empty("detection patterns"));
    }
    let queries: Vec<BinaryPattern> = dets.iter().map(|(_, p)| p.clone()).collect();
    let distances = bank.batch_nearest(&queries)?;
    let mut by_frame: BTreeMap<&str, Vec<(&PatternMeta, &BinaryPattern, u32)>> = BTreeMap::new();
    for ((m, p), d) in dets.iter().map(|e| (&e.0, &e.1)).zip(distances) {
        by_frame.entry(m.frame.as_str()).or_default().push((m, p, d));
    }
    let mut frames = Vec::with_capacity(by_frame.len());
    let mut records = Vec::with_capacity(by_frame.len());
    for (frame, boxes) in by_frame {
        let scored = boxes
            .iter()
            .map(|(m, p, d)| ScoredBox {
                pattern: (*p).clone(),
                distance: *d,
                score: m.score,
            })
            .collect();
        let record = FrameRecord::new(frame, scored)?;
        frames.push(ScoreFrame {
            frame: frame.to_string(),
            entropy: record.entropy(),
            boxes: boxes
                .iter()
                .map(|(m, p, d)| ScoreBox {
                    box_id: m.box_id.clone(),
                    pattern: p.to_hex(),
                    distance: *d,
                    score: m.score,
                })
                .collect(),
        });
        records.push(record);
    }
    Ok((ScoreFile { dim: bank.dim(), frames }, records))
}

fn read_bank(path: &Path) -> Result<PatternBank> {
    let (_, patterns) = read_pattern_file(path)?;
    PatternBank::build(&patterns).map_err(|e| e.in_file(path))
}

fn scored_from_patterns(
    patterns: Option<&Path>,
    dump: Option<&Path>,
    layer: Option<&str>,
    bank: Option<&Path>,
) -> Result<(ScoreFile, Vec<FrameRecord>)> {
    let entries = pattern_source(patterns, dump, layer)?;
    let bank = match bank {
        Some(b) => read_bank(b)?,
        None => gt_bank(&entries)?,
    };
    score_entries(&bank, &entries)
}

fn score(a: ScoreArgs) -> CliResult {
    if a.patterns.is_some() && a.bank.is_none() {
        return Err(Failure::Usage("--patterns needs --bank".into()));
    }
    let (file, _) = scored_from_patterns(a.patterns.as_deref(), a.dump.as_deref(), a.layer.as_deref(), a.bank.as_deref())?;
    let json = serde_json::to_string_pretty(&file).map_err(Error::from)? + "\n";
    write_output(a.out.as_deref(), &json)?;
    Ok(())
}

/// Rebuilds frame records from a score file; entropies are recomputed
/// from the stored distances.
pub fn records_from_scores(file: &ScoreFile) -> Result<Vec<FrameRecord>> {
    file.frames
        .iter()
        .map(|f| {
            let boxes = f
                .boxes
                .iter()
                .map(|b| {
                    Ok(ScoredBox {
                        pattern: BinaryPattern::from_hex(file.dim, &b.pattern)?,
                        distance: b.distance,
                        score: b.score,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            FrameRecord::new(f.frame.clone(), boxes)
        })
        .collect()
}

fn select(a: SelectArgs) -> CliResult {
    if a.n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    if a.k == Some(0) {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let frames = match &a.scores {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
            let file: ScoreFile =
                serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()).in_file(path))?;
            records_from_scores(&file).map_err(|e| e.in_file(path))?
        }
        None => scored_from_patterns(None, a.dump.as_deref(), a.layer.as_deref(), a.bank.as_deref())?.1,
    };
    let mut cfg = SelectionConfig::new(a.n);
    if let Some(k) = a.k {
        cfg = cfg.with_proposal_size(k);
    }
    cfg.min_boxes = a.min_boxes;
    cfg.score_threshold = a.score_threshold;
    let result = select_frames(&frames, &cfg)?;
    write_output(a.out.as_deref(), &(result.to_json() + "\n"))?;
    let list_path = a.frame_list.clone().or_else(|| {
        a.out.as_ref().map(|o| {
            let mut s = o.as_os_str().to_owned();
            s.push(".frames.txt");
            PathBuf::from(s)
        })
    });
    if let Some(p) = list_path {
        write_output(Some(&p), &result.frame_list())?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeltaEntry {
    l: f64,
    w: f64,
    h: f64,
}

fn statnorm(a: StatnormArgs) -> CliResult {
    let delta = match (&a.source, &a.target, &a.delta) {
        (Some(s), Some(t), _) => compute_size_delta(&resolve_size_stats(s)?, &resolve_size_stats(t)?)?,
        (_, _, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
            let raw: BTreeMap<String, DeltaEntry> =
                serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()).in_file(path))?;
            crate::align::SizeDelta {
                classes: raw
                    .into_iter()
                    .map(|(c, d)| {
                        let shift = crate::align::DimShift {
                            dl: d.l,
                            dw: d.w,
                            dh: d.h,
                            rl: 1.0,
                            rw: 1.0,
                            rh: 1.0,
                        };
                        (c, shift)
                    })
                    .collect(),
            }
        }
        _ => return Err(Failure::Usage("pass --source and --target, or --delta".into())),
    };
    let mode = match a.mode {
        ModeArg::Additive => ResizeMode::Additive,
        ModeArg::Multiplicative if a.delta.is_some() => {
            return Err(Failure::Usage("--mode multiplicative needs --source and --target".into()))
        }
        ModeArg::Multiplicative => ResizeMode::Multiplicative,
    };
    create_dir(&a.out)?;
    if let Some(dir) = &a.out_clouds {
        create_dir(dir)?;
    }
    for path in files_with_ext(&a.labels, "txt")? {
        let labels = read_label_file(&path)?;
        let adjusted = statnorm_labels(&labels, &delta, mode).map_err(|e| e.in_file(&path))?;
        let name = path.file_name().unwrap_or_default();
        write_label_file(&a.out.join(name), &adjusted)?;
        if let (Some(cdir), Some(odir)) = (&a.clouds, &a.out_clouds) {
            let cpath = cdir.join(format!("{}.bin", stem(&path)));
            if !cpath.exists() {
                log::warn!("no cloud {} for labels {}", cpath.display(), path.display());
                continue;
            }
            let cloud = read_point_cloud_file(&cpath)?;
            let moved = statnorm_cloud(&cloud, &labels, &adjusted).map_err(|e| e.in_file(&cpath))?;
            write_point_cloud_file(&odir.join(format!("{}.bin", stem(&path))), &moved)?;
        }
    }
    Ok(())
}

fn downsample(a: DownsampleArgs) -> CliResult {
    if a.source_beams < 2 || a.target_beams == 0 {
        return Err(Failure::Usage("beam counts must be positive, source at least 2".into()));
    }
    create_dir(&a.out)?;
    let beam_dir = a.beams.as_deref().unwrap_or(&a.clouds);
    for path in files_with_ext(&a.clouds, "bin")? {
        let cloud = read_point_cloud_file(&path)?;
        let sidecar = beam_dir.join(format!("{}.beam", stem(&path)));
        let ids = if sidecar.exists() {
            let bytes = std::fs::read(&sidecar).map_err(|e| Error::from(e).in_file(&sidecar))?;
            read_beam_sidecar(&bytes).map_err(|e| e.in_file(&sidecar))?
        } else {
            estimate_beams(&cloud, a.source_beams).map_err(|e| e.in_file(&path))?
        };
        let kept = downsample_beams(&cloud, &ids, a.source_beams, a.target_beams).map_err(|e| e.in_file(&path))?;
        write_point_cloud_file(&a.out.join(path.file_name().unwrap_or_default()), &kept)?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult {
    if a.iou.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(Failure::Usage("--iou thresholds must lie in (0, 1]".into()));
    }
    let mut frames = Vec::new();
    for gt_path in files_with_ext(&a.gt, "txt")? {
        let id = stem(&gt_path);
        let gts: Vec<Box3D> = read_label_file(&gt_path)?.iter().map(Box3D::from).collect();
        let det_path = a.det.join(format!("{id}.txt"));
        let dets: Vec<Box3D> = if det_path.exists() {
            read_label_file(&det_path)?.iter().map(Box3D::from).collect()
        } else {
            Vec::new()
        };
        let cloud = match &a.cloud {
            Some(dir) => Some(read_point_cloud_file(&dir.join(format!("{id}.bin")))?),
            None => None,
        };
        frames.push(EvalFrame {
            frame_id: id,
            gts,
            dets,
            cloud,
        });
    }
    let settings = EvalSettings {
        classes: a.class.clone(),
        iou_thresholds: a.iou.clone(),
        iou_kind: if a.bev { IouKind::Bev } else { IouKind::ThreeD },
        interpolation: match a.interp {
            InterpArg::R40 => Interpolation::R40,
            InterpArg::R11 => Interpolation::R11,
        },
        min_points: a.min_points,
    };
    let result = evaluate(&frames, &settings)?;
    write_output(a.out.as_deref(), &(result.to_json() + "\n"))?;
    if let Some(p) = &a.pr_csv {
        write_output(Some(p), &result.pr_csv())?;
    }
    Ok(())
}

fn schedule(a: ScheduleArgs) -> CliResult {
    let text = match a.kind {
        KindArg::L2spCheck => {
            let (Some(w), Some(w0)) = (&a.w, &a.w0) else {
                return Err(Failure::Usage("l2sp-check needs --w and --w0".into()));
            };
            let cfg = L2SPConfig::new(a.alpha).map_err(|e| Failure::Usage(e.to_string()))?;
            let report = l2sp_report(&read_weight_file(w)?, &read_weight_file(w0)?, cfg)?;
            match a.format {
                FormatArg::Json => serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n",
                FormatArg::Csv => format!(
                    "alpha,n,penalty,grad_norm\n{},{},{},{}\n",
                    report.alpha, report.n, report.penalty, report.grad_norm
                ),
            }
        }
        KindArg::Fade | KindArg::Const => {
            let Some(lr) = a.lr else {
                return Err(Failure::Usage("--lr is required for fade and const".into()));
            };
            let table = match a.kind {
                KindArg::Fade => linear_fade(lr, a.epochs),
                _ => const_schedule(lr, a.epochs),
            }
            .map_err(|e| Failure::Usage(e.to_string()))?;
            match a.format {
                FormatArg::Json => schedule_json(&table) + "\n",
                FormatArg::Csv => schedule_csv(&table),
            }
        }
    };
    write_output(a.out.as_deref(), &text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["nap"]), 1);
        assert_eq!(run(["nap", "bogus"]), 1);
        assert_eq!(run(["nap", "select", "--n", "3"]), 1);
        assert_eq!(run(["nap", "--help"]), 0);
        assert_eq!(run(["nap", "select", "--help"]), 0);
        assert_eq!(run(["nap", "layers", "--dump", "/nonexistent/dump.jsonl"]), 2);
    }

    #[test]
    fn meta_path_appends_suffix() {
        assert_eq!(meta_path(Path::new("a/p.napb")), PathBuf::from("a/p.napb.meta.jsonl"));
    }
}
