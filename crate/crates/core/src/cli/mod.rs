//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the process exit code: 0 on success, 1 when some walks or
//! methods failed, 2 on a fatal error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::dataset::{load_manifest, synthesize_cohort, write_cohort, AxisRole, CohortSpec, DatasetManifest};
use crate::error::{Error, Result};
use crate::eval::{
    classification_table, extract_feature_rows, leaderboard_table, method_figures, run_benchmark, wilcoxon_table,
    Aggregation, BenchmarkConfig, ExcludedWalk, Method, Pipeline, Protocol, WalkRecord,
};
use crate::features::{read_features_csv, write_features_csv, FeatureConfig};
use crate::gaitevents::{detect_events, write_events_csv, CandidateConfig, EventConfig, SmootherConfig, SmootherKind};
use crate::models::{
    baseline_encoder, clip_plan, load_embeddings, write_embeddings, EmbeddingSet, ForestConfig, LinearHeadConfig,
    BASELINE_PROVIDER,
};
use crate::preprocess::{prepare_clips, ClipConfig, PrepareConfig, DEFAULT_CLIP_LEN, DEFAULT_EVAL_STRIDE, DEFAULT_TARGET_FPS};
use crate::skeleton::{JointLayout, JointMapping, H36M17, PD44};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_FATAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gaitbench", version, about = "Gait-score estimation from skeleton motion: features, embeddings, LOSOCV benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert, resample and clip every manifest walk into a clip store.
    Preprocess(PreprocessArgs),
    /// Extract one row of gait features per walk.
    Features(FeaturesArgs),
    /// Evaluate classifiers and write the report, tables and figures.
    Benchmark(BenchmarkArgs),
    /// Dump detected heel strikes and toe-offs (debugging aid).
    Events(EventsArgs),
    /// Generate a synthetic cohort with manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SmootherChoice {
    PhaseEkf,
    IndependentChannels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolChoice {
    Losocv,
    #[value(name = "standard_cv", alias = "standard-cv")]
    StandardCv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationChoice {
    Mean,
    Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    ApUp,
    ApMl,
    MlUp,
}

impl Plane {
    fn axes(self) -> (AxisRole, AxisRole) {
        match self {
            Plane::ApUp => (AxisRole::Ap, AxisRole::Up),
            Plane::ApMl => (AxisRole::Ap, AxisRole::Ml),
            Plane::MlUp => (AxisRole::Ml, AxisRole::Up),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClipArgs {
    /// Clip frame rate; walks are resampled to it.
    #[arg(long, default_value_t = DEFAULT_TARGET_FPS)]
    pub fps: f64,
    #[arg(long, default_value_t = DEFAULT_CLIP_LEN)]
    pub clip_len: usize,
    /// Clip stride in frames.
    #[arg(long, default_value_t = DEFAULT_EVAL_STRIDE)]
    pub stride: usize,
    /// Keep only two axes of every pose.
    #[arg(long, value_enum)]
    pub project_2d: Option<Plane>,
    /// Skip root centring and scale normalization.
    #[arg(long)]
    pub no_normalize: bool,
}

impl ClipArgs {
    fn prepare(&self) -> PrepareConfig {
        PrepareConfig {
            clips: ClipConfig { clip_len: self.clip_len, stride: self.stride, fps: self.fps },
            normalize: !self.no_normalize,
            project_2d: self.project_2d.map(Plane::axes),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EventArgs {
    /// Phase-acceleration spectral density, rad²/s³.
    #[arg(long, default_value_t = 1e-4)]
    pub process_noise_q: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub measurement_noise_r: f64,
    #[arg(long, default_value_t = 1.0)]
    pub initial_variance: f64,
    #[arg(long, value_enum, default_value_t = SmootherChoice::PhaseEkf)]
    pub smoother: SmootherChoice,
    #[arg(long, default_value_t = 1)]
    pub update_iterations: usize,
    #[arg(long, default_value_t = crate::gaitevents::DEFAULT_TOE_OFF_FRACTION)]
    pub toe_off_fraction: f64,
    #[arg(long, default_value_t = 0.4)]
    pub min_separation_s: f64,
    #[arg(long, default_value_t = 0.05)]
    pub min_prominence_m: f64,
    #[arg(long, default_value_t = 0.1)]
    pub smoothing_s: f64,
    #[arg(long, default_value_t = 0.5)]
    pub refine_window_s: f64,
    /// Leg length for the margin of stability; estimated per walk when omitted.
    #[arg(long)]
    pub leg_length_m: Option<f64>,
}

impl EventArgs {
    fn config(&self) -> FeatureConfig {
        FeatureConfig {
            events: EventConfig {
                candidates: CandidateConfig {
                    min_separation_s: self.min_separation_s,
                    min_prominence_m: self.min_prominence_m,
                    smoothing_s: self.smoothing_s,
                    refine_window_s: self.refine_window_s,
                },
                smoother: SmootherConfig {
                    process_noise_q: self.process_noise_q,
                    measurement_noise_r: self.measurement_noise_r,
                    initial_variance: self.initial_variance,
                    kind: match self.smoother {
                        SmootherChoice::PhaseEkf => SmootherKind::PhaseEkf,
                        SmootherChoice::IndependentChannels => SmootherKind::IndependentChannels,
                    },
                    update_iterations: self.update_iterations,
                },
                toe_off_fraction: self.toe_off_fraction,
            },
            leg_length_m: self.leg_length_m,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Clip store directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON joint mapping to the 17-joint layout (built-in mapping otherwise).
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[command(flatten)]
    pub clips: ClipArgs,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Features CSV; failures go to `<stem>.failures.csv` beside it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[command(flatten)]
    pub events: EventArgs,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EventsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Restrict to these walks (repeatable).
    #[arg(long = "walk")]
    pub walks: Vec<String>,
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[command(flatten)]
    pub events: EventArgs,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// Output directory for `manifest.json` and `walks/`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 24)]
    pub participants: usize,
    #[arg(long, default_value_t = 10)]
    pub walks_per_participant: usize,
    #[arg(long, default_value_t = 10.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 100.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 0.005)]
    pub noise_std_m: f64,
    /// Motionless recordings to add (they fail feature extraction).
    #[arg(long, default_value_t = 0)]
    pub standing_walks: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Report directory (not part of the config snapshot).
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ProtocolChoice::Losocv)]
    pub protocol: ProtocolChoice,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-participant reduction for the ON/OFF test.
    #[arg(long, value_enum, default_value_t = AggregationChoice::Mean)]
    pub aggregation: AggregationChoice,
    /// Evaluate the random forest on gait features (default when no method is given).
    #[arg(long)]
    pub forest: bool,
    /// Features CSV for the forest; extracted from the manifest when omitted.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Failure log written next to `--features`, merged into the exclusions.
    #[arg(long)]
    pub feature_failures: Option<PathBuf>,
    /// Evaluate a linear head on the built-in statistical clip embeddings.
    #[arg(long)]
    pub baseline: bool,
    /// Evaluate a linear head on an embeddings file, as NAME=PATH (repeatable).
    #[arg(long = "embeddings", value_parser = parse_named_path)]
    pub embeddings: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    #[command(flatten)]
    pub clips: ClipArgs,
    #[command(flatten)]
    pub events: EventArgs,
    #[arg(long, default_value_t = 500)]
    pub n_trees: usize,
    #[arg(long, default_value_t = 4)]
    pub mtry: usize,
    #[arg(long, default_value_t = 1)]
    pub min_samples_leaf: usize,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 30)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.01)]
    pub init_std: f64,
    /// Run folds one after another (results are identical).
    #[arg(long)]
    pub serial: bool,
    #[arg(long)]
    pub force: bool,
}

fn parse_named_path(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FATAL } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Features(a) => cmd_features(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Events(a) => cmd_events(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FATAL
        }
    }
}

fn refuse_overwrite(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::validation(format!(
            "{} exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

fn load_mapping(path: Option<&Path>) -> Result<Option<JointMapping>> {
    path.map(|p| JointMapping::from_file(p, JointLayout::builtin(PD44)?, JointLayout::builtin(H36M17)?))
        .transpose()
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One digest over every trajectory file in manifest order.
fn trajectories_digest(manifest: &DatasetManifest) -> Result<String> {
    let mut h = Sha256::new();
    for w in &manifest.walks {
        h.update(w.walk_id.as_bytes());
        h.update([0]);
        h.update(fs::read(&w.file).map_err(|e| Error::io(&w.file, e))?);
    }
    Ok(hex(&h.finalize()))
}

fn snapshot<A: Serialize>(command: &str, args: &A, extra: serde_json::Value) -> Result<serde_json::Value> {
    Ok(serde_json::json!({
        "tool": "gaitbench",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "args": serde_json::to_value(args).map_err(|e| Error::parse("config snapshot", e))?,
        "resolved": extra,
    }))
}

fn to_pretty(v: &impl Serialize) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Error::parse("json writer", e))
}

fn failures_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "features".into());
    out.with_file_name(format!("{stem}.failures.csv"))
}

fn write_failures(path: &Path, failures: &[ExcludedWalk]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    let ser = |e: csv::Error| Error::parse("failure log writer", e);
    w.write_record(["walk_id", "participant", "kind", "reason"]).map_err(ser)?;
    for f in failures {
        w.write_record([f.walk_id.as_str(), f.participant.as_str(), &f.kind, &f.reason]).map_err(ser)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_failures(path: &Path) -> Result<Vec<ExcludedWalk>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::parse(path.display().to_string(), e))?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        out.push(ExcludedWalk {
            walk_id: field(0),
            participant: crate::dataset::ParticipantId::new(field(1))?,
            kind: field(2),
            reason: field(3),
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct ClipIndexRow<'a> {
    walk_id: &'a str,
    clip_index: usize,
    start_frame: usize,
    frames: usize,
    fps: f64,
    padded: bool,
}

pub fn cmd_preprocess(a: &PreprocessArgs) -> Result<i32> {
    let index_path = a.out.join("clip_index.csv");
    refuse_overwrite(&index_path, a.force)?;
    let manifest = load_manifest(&a.manifest)?;
    let mapping = load_mapping(a.mapping.as_deref())?;
    let cfg = a.clips.prepare();
    let results: Vec<Result<Vec<crate::preprocess::Clip>>> = manifest
        .walks
        .par_iter()
        .map(|d| prepare_clips(&manifest.load_walk(d)?, mapping.as_ref(), &cfg))
        .collect();
    let mut failed = 0;
    for (d, r) in manifest.walks.iter().zip(&results) {
        if let Err(e) = r {
            eprintln!("walk {}: {e}", d.walk_id);
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} of {} walks failed; nothing written", manifest.walk_count());
        return Ok(EXIT_FATAL);
    }
    let clips: Vec<crate::preprocess::Clip> = results.into_iter().flat_map(|r| r.expect("checked")).collect();

    create_dir(&a.out)?;
    let mut store = create_file(&a.out.join("clips.jsonl"))?;
    for c in &clips {
        serde_json::to_writer(&mut store, c).map_err(|e| Error::parse("clip store writer", e))?;
        std::io::Write::write_all(&mut store, b"\n").map_err(|e| Error::io(a.out.join("clips.jsonl"), e))?;
    }
    std::io::Write::flush(&mut store).map_err(|e| Error::io(a.out.join("clips.jsonl"), e))?;
    let mut index = csv::Writer::from_writer(create_file(&index_path)?);
    for c in &clips {
        index
            .serialize(ClipIndexRow {
                walk_id: &c.source_walk_id,
                clip_index: c.clip_index,
                start_frame: c.start_frame,
                frames: c.len(),
                fps: c.fps,
                padded: c.padded,
            })
            .map_err(|e| Error::parse("clip index writer", e))?;
    }
    index.flush().map_err(|e| Error::io(&index_path, e))?;
    let embeddings: Vec<_> = clips.par_iter().map(baseline_encoder).collect();
    write_embeddings(create_file(&a.out.join(format!("embeddings_{BASELINE_PROVIDER}.csv")))?, &embeddings)?;
    let snap = snapshot("preprocess", a, serde_json::json!({ "prepare": cfg }))?;
    write_file(&a.out.join("config.json"), &to_pretty(&snap)?)?;
    info!("{} clips from {} walks", clips.len(), manifest.walk_count());
    Ok(EXIT_OK)
}

pub fn cmd_features(a: &FeaturesArgs) -> Result<i32> {
    refuse_overwrite(&a.out, a.force)?;
    let manifest = load_manifest(&a.manifest)?;
    let mapping = load_mapping(a.mapping.as_deref())?;
    let (rows, failures) = extract_feature_rows(&manifest, &a.events.config(), mapping.as_ref());
    for f in &failures {
        eprintln!("walk {}: {}: {}", f.walk_id, f.kind, f.reason);
    }
    write_failures(&failures_path(&a.out), &failures)?;
    if rows.is_empty() {
        eprintln!("feature extraction failed for every walk");
        return Ok(EXIT_FATAL);
    }
    write_features_csv(create_file(&a.out)?, &rows)?;
    info!("{} feature rows, {} failures", rows.len(), failures.len());
    Ok(if failures.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

pub fn cmd_events(a: &EventsArgs) -> Result<i32> {
    refuse_overwrite(&a.out, a.force)?;
    let manifest = load_manifest(&a.manifest)?;
    let mapping = load_mapping(a.mapping.as_deref())?;
    for id in &a.walks {
        if manifest.walk(id).is_none() {
            return Err(Error::validation(format!("walk {id:?} is not in the manifest")));
        }
    }
    let cfg = a.events.config().events;
    let selected: Vec<_> = manifest
        .walks
        .iter()
        .filter(|d| a.walks.is_empty() || a.walks.contains(&d.walk_id))
        .collect();
    let results: Vec<Result<crate::gaitevents::GaitEvents>> = selected
        .par_iter()
        .map(|d| {
            let walk = crate::skeleton::to_h36m17(&manifest.load_walk(d)?, mapping.as_ref())?;
            detect_events(&walk, &cfg)
        })
        .collect();
    let mut rows = Vec::new();
    let mut failed = 0;
    for (d, r) in selected.iter().zip(results) {
        match r {
            Ok(ev) => rows.push((d.walk_id.clone(), ev)),
            Err(e) => {
                eprintln!("walk {}: {e}", d.walk_id);
                failed += 1;
            }
        }
    }
    if rows.is_empty() {
        return Ok(EXIT_FATAL);
    }
    write_events_csv(create_file(&a.out)?, &rows)?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_PARTIAL })
}

pub fn cmd_synth(a: &SynthArgs) -> Result<i32> {
    refuse_overwrite(&a.out.join("manifest.json"), a.force)?;
    let spec = CohortSpec {
        participants: a.participants,
        walks_per_participant: a.walks_per_participant,
        duration_s: a.duration_s,
        fps: a.fps,
        noise_std_m: a.noise_std_m,
        standing_walks: a.standing_walks,
        seed: a.seed,
    };
    let walks = synthesize_cohort(&spec)?;
    let path = write_cohort(&a.out, &walks)?;
    info!("{} walks written, manifest {}", walks.len(), path.display());
    Ok(EXIT_OK)
}

/// Built-in embeddings of every manifest walk; walks that cannot be clipped
/// are returned as exclusions.
fn baseline_embeddings(
    manifest: &DatasetManifest,
    mapping: Option<&JointMapping>,
    cfg: &PrepareConfig,
) -> Result<(EmbeddingSet, Vec<ExcludedWalk>)> {
    let records = WalkRecord::from_manifest(manifest);
    let results: Vec<Result<Vec<crate::preprocess::Clip>>> = manifest
        .walks
        .par_iter()
        .map(|d| prepare_clips(&manifest.load_walk(d)?, mapping, cfg))
        .collect();
    let mut set = EmbeddingSet { provider_id: BASELINE_PROVIDER.to_string(), ..EmbeddingSet::default() };
    let mut excluded = Vec::new();
    for (rec, r) in records.iter().zip(results) {
        match r {
            Ok(clips) => {
                for c in &clips {
                    set.insert(baseline_encoder(c))?;
                }
            }
            Err(e) => excluded.push(ExcludedWalk::new(rec, &e)),
        }
    }
    Ok((set, excluded))
}

pub fn cmd_benchmark(a: &BenchmarkArgs) -> Result<i32> {
    let report_path = a.out.join("report.json");
    refuse_overwrite(&report_path, a.force)?;
    let manifest = load_manifest(&a.manifest)?;
    let mapping = load_mapping(a.mapping.as_deref())?;
    let walks = WalkRecord::from_manifest(&manifest);
    let prepare = a.clips.prepare();
    let forest = ForestConfig { n_trees: a.n_trees, mtry: a.mtry, min_samples_leaf: a.min_samples_leaf, seed: a.seed };
    let head = LinearHeadConfig {
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        patience: a.patience,
        init_std: a.init_std,
        seed: a.seed,
    };
    let mut inputs: BTreeMap<String, String> = BTreeMap::new();
    inputs.insert("manifest".into(), sha256_file(&a.manifest)?);
    inputs.insert("trajectories".into(), trajectories_digest(&manifest)?);
    if let Some(p) = &a.mapping {
        inputs.insert("mapping".into(), sha256_file(p)?);
    }

    let use_forest = a.forest || a.features.is_some() || (!a.baseline && a.embeddings.is_empty());
    let mut methods = Vec::new();
    // methods whose inputs cannot be loaded are reported as failed
    let mut input_failures: Vec<(String, &'static str, Error)> = Vec::new();
    if use_forest {
        let loaded = match &a.features {
            Some(path) => (|| {
                inputs.insert("features".into(), sha256_file(path)?);
                let rows = read_features_csv(fs::File::open(path).map_err(|e| Error::io(path, e))?)?;
                let excluded = match &a.feature_failures {
                    Some(f) => {
                        inputs.insert("feature_failures".into(), sha256_file(f)?);
                        read_failures(f)?
                    }
                    None => Vec::new(),
                };
                Ok((rows, excluded))
            })(),
            None => Ok(extract_feature_rows(&manifest, &a.events.config(), mapping.as_ref())),
        };
        match loaded {
            Ok((rows, excluded)) => methods.push(Method {
                name: "feature-rf".into(),
                pipeline: Pipeline::RandomForest { config: forest, rows },
                excluded,
            }),
            Err(e) => input_failures.push(("feature-rf".into(), "random_forest", e)),
        }
    }
    if a.baseline {
        match baseline_embeddings(&manifest, mapping.as_ref(), &prepare) {
            Ok((embeddings, excluded)) => methods.push(Method {
                name: BASELINE_PROVIDER.into(),
                pipeline: Pipeline::LinearHead { config: head, embeddings },
                excluded,
            }),
            Err(e) => input_failures.push((BASELINE_PROVIDER.into(), "linear_head", e)),
        }
    }
    if !a.embeddings.is_empty() {
        let plan = clip_plan(&manifest, &prepare.clips)?;
        for (name, path) in &a.embeddings {
            let loaded = sha256_file(path).and_then(|digest| {
                inputs.insert(format!("embeddings:{name}"), digest);
                load_embeddings(path, &plan, name)
            });
            match loaded {
                Ok(embeddings) => {
                    if !embeddings.missing.is_empty() {
                        warn!("{name}: {} planned clips have no embedding", embeddings.missing.len());
                    }
                    methods.push(Method {
                        name: name.clone(),
                        pipeline: Pipeline::LinearHead { config: head, embeddings },
                        excluded: Vec::new(),
                    });
                }
                Err(e) => input_failures.push((name.clone(), "linear_head", e)),
            }
        }
    }

    let cfg = BenchmarkConfig {
        protocol: match a.protocol {
            ProtocolChoice::Losocv => Protocol::Losocv,
            ProtocolChoice::StandardCv => Protocol::StandardCv,
        },
        seed: a.seed,
        aggregation: match a.aggregation {
            AggregationChoice::Mean => Aggregation::Mean,
            AggregationChoice::Mode => Aggregation::Mode,
        },
        parallel: !a.serial,
    };
    let snap = snapshot(
        "benchmark",
        a,
        serde_json::json!({
            "benchmark": { "protocol": cfg.protocol, "seed": cfg.seed, "aggregation": cfg.aggregation },
            "features": a.events.config(),
            "prepare": prepare,
            "random_forest": forest,
            "linear_head": head,
            "inputs": inputs,
        }),
    )?;
    let mut report = run_benchmark(&walks, &methods, &cfg, snap.clone())?;
    for (name, pipeline, e) in input_failures {
        eprintln!("method {name}: {e}");
        report.methods.push(crate::eval::MethodReport {
            name,
            pipeline: pipeline.into(),
            error: Some(format!("{}: {e}", e.kind())),
            folds: Vec::new(),
            metrics: None,
            confusion: None,
            on_off: None,
        });
    }

    create_dir(&a.out)?;
    write_report_files(&a.out, &report)?;
    write_file(&a.out.join("config.json"), &to_pretty(&snap)?)?;
    let failed: Vec<_> = report.failed_methods().collect();
    for m in &failed {
        eprintln!("method {} failed: {}", m.name, m.error.as_deref().unwrap_or(""));
    }
    print!("{}", leaderboard_table(&report.leaderboard));
    Ok(if failed.is_empty() {
        EXIT_OK
    } else if failed.len() == report.methods.len() {
        EXIT_FATAL
    } else {
        EXIT_PARTIAL
    })
}

/// File-name-safe form of a method name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `report.json`, the leaderboard and Wilcoxon tables, per-method
/// classification tables and confusion-matrix figures.
pub fn write_report_files(dir: &Path, report: &crate::eval::BenchmarkReport) -> Result<()> {
    write_file(&dir.join("report.json"), &report.to_json()?)?;
    let heading = format!("Split: {}\n\n", report.split);
    write_file(&dir.join("leaderboard.md"), &(heading.clone() + &leaderboard_table(&report.leaderboard)))?;
    write_file(&dir.join("wilcoxon.md"), &(heading + &wilcoxon_table(&report.wilcoxon)))?;
    for m in &report.methods {
        let Some(metrics) = &m.metrics else { continue };
        let s = slug(&m.name);
        write_file(&dir.join(format!("classification_{s}.md")), &classification_table(&metrics.overall))?;
        for (stem, svg) in method_figures(m) {
            write_file(&dir.join(format!("confusion_{s}_{stem}.svg")), &svg)?;
        }
    }
    Ok(())
}
