//! Command-line front end.
//!
//! Every subcommand resolves its configuration first (defaults, then an
//! optional flat `key=value` file, then flags), then runs, and finally writes a
//! `run.json` record next to its outputs whether or not the run succeeded.
//! `ZSMSTM_DATA_ROOT` only changes where manifest paths resolve.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::checkpoint::{file_digest, Checkpoint, TrainSnapshot};
use crate::data::{fit_normalization, load_manifest, load_samples, normalize, DatasetManifest, Sample, Split};
use crate::error::{Error, ErrorClass, Result};
use crate::export::{self, DEFAULT_JOINT_MAP};
use crate::inference::{build_style_bank, Engine, StyleBank};
use crate::kv;
use crate::metrics::{distance_report, DistanceReport, MetricSet, DEFAULT_WRISTS};
use crate::model::{Model, ModelConfig, StyleEmbedding};
use crate::params::ParamStore;
use crate::synth::{gen_dataset, speakers_tsv, SynthConfig};
use crate::train::{fit, FitObserver, StepLog, TrainConfig, ValidRecord, STEP_LOG_HEADER, VALID_LOG_HEADER};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Config => EXIT_CONFIG,
        ErrorClass::Data => EXIT_DATA,
        ErrorClass::Numeric => EXIT_NUMERIC,
    }
}

#[derive(Debug, Parser)]
#[command(name = "zsmstm", version, about = "Zero-shot multimodal gesture style transfer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-speaker dataset with known style factors.
    SynthData(SynthArgs),
    /// Train a model on a dataset manifest.
    Train(TrainArgs),
    /// Average style embeddings per speaker into a style bank.
    ExtractStyle(ExtractArgs),
    /// Generate source content in a target speaker's style.
    Transfer(TransferArgs),
    /// Expressivity metrics and source/model distances to a target.
    Metrics(MetricsArgs),
    /// Write poses as BODY25 JSON frames plus a keypoint CSV.
    ExportBody25(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (manifest.tsv, intervals/, speakers.tsv).
    #[arg(long)]
    pub out: PathBuf,
    /// Flat key=value file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Speakers whose intervals are split 80/10/10 [default: 4].
    #[arg(long)]
    pub seen: Option<usize>,
    /// Held-out speakers, all intervals in the test split [default: 2].
    #[arg(long)]
    pub unseen: Option<usize>,
    /// Intervals per speaker [default: 50].
    #[arg(long)]
    pub per_speaker: Option<usize>,
    #[arg(long)]
    /// [default: 0]
    pub seed: Option<u64>,
    /// Text embedding width [default: 768].
    #[arg(long)]
    pub d_text: Option<usize>,
    /// Mel bins [default: 128].
    #[arg(long)]
    pub n_mels: Option<usize>,
    /// Upper-body joints [default: 10].
    #[arg(long)]
    pub joints: Option<usize>,
    /// Pose frames per interval [default: 64].
    #[arg(long)]
    pub frames: Option<usize>,
    /// Pose frame rate [default: 15].
    #[arg(long)]
    pub fps: Option<f64>,
    /// Content classes [default: 8].
    #[arg(long)]
    pub n_classes: Option<usize>,
    /// Maximum words per interval [default: 6].
    #[arg(long)]
    pub max_words: Option<usize>,
    /// Mel frames per pose frame [default: 4].
    #[arg(long)]
    pub mel_rate: Option<usize>,
    /// [default: 0.5]
    #[arg(long)]
    pub amplitude_min: Option<f64>,
    /// [default: 2.0]
    #[arg(long)]
    pub amplitude_max: Option<f64>,
    /// Cycles per second [default: 0.5].
    #[arg(long)]
    pub frequency_min: Option<f64>,
    /// Cycles per second [default: 2.5].
    #[arg(long)]
    pub frequency_max: Option<f64>,
    /// [default: 0.3]
    #[arg(long)]
    pub smoothness_min: Option<f64>,
    /// [default: 1.0]
    #[arg(long)]
    pub smoothness_max: Option<f64>,
    /// Std of per-speaker rest-pose offsets [default: 0.01].
    #[arg(long)]
    pub posture_jitter: Option<f64>,
    /// [default: 0.05]
    #[arg(long)]
    pub text_noise: Option<f64>,
    /// [default: 0.05]
    #[arg(long)]
    pub mel_noise: Option<f64>,
    /// Add a per-speaker signature to text vectors [default: false].
    #[arg(long)]
    pub style_leak: Option<bool>,
    /// Interval encoding, binary or csv [default: binary].
    #[arg(long)]
    pub format: Option<String>,
}

/// Model shape flags shared by training.
#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Starting point for the model shape: full or tiny [default: full].
    #[arg(long)]
    pub preset: Option<String>,
    /// Per-modality feature width [default: 768].
    #[arg(long)]
    pub d_model: Option<usize>,
    /// Text embedding width; taken from the manifest when unset [default: 768].
    #[arg(long)]
    pub d_text: Option<usize>,
    /// Mel bins; taken from the manifest when unset [default: 128].
    #[arg(long)]
    pub n_mels: Option<usize>,
    /// Square spectrogram patch side [default: 16].
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Patch stride [default: 10].
    #[arg(long)]
    pub patch_stride: Option<usize>,
    /// Mel frames kept per word [default: 16].
    #[arg(long)]
    pub max_mel_frames: Option<usize>,
    /// Speech encoder layers [default: 1 with tiny, 12 with full].
    #[arg(long)]
    pub speech_layers: Option<usize>,
    #[arg(long)]
    pub speech_heads: Option<usize>,
    #[arg(long)]
    pub content_att_heads: Option<usize>,
    #[arg(long)]
    pub style_att_heads: Option<usize>,
    /// Pose encoder LSTM depth [default: 3].
    #[arg(long)]
    pub pose_lstm_layers: Option<usize>,
    /// Decoder layers [default: 1].
    #[arg(long)]
    pub decoder_layers: Option<usize>,
    /// Decoder heads [default: 2].
    #[arg(long)]
    pub decoder_heads: Option<usize>,
    /// Feed-forward width multiplier.
    #[arg(long)]
    pub ffn_mult: Option<usize>,
    /// Joints; taken from the manifest when unset [default: 10].
    #[arg(long)]
    pub joints: Option<usize>,
    /// Frames per interval; taken from the manifest when unset [default: 64].
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory (model.ckpt, best.ckpt, steps.csv, valid.csv).
    #[arg(long)]
    pub out: PathBuf,
    /// Flat key=value file with model and training keys; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from a checkpoint with optimizer state (its model shape wins).
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Seed for initialization and batch order [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Adam beta1 [default: 0.95].
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Adam beta2 [default: 0.999].
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Peak learning rate [default: 1e-5].
    #[arg(long)]
    pub initial_lr: Option<f64>,
    /// Warmup steps of the inverse-sqrt schedule [default: 20000].
    #[arg(long)]
    pub warmup_steps: Option<u64>,
    /// [default: 200]
    #[arg(long)]
    pub epochs: Option<u64>,
    /// [default: 24]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adversarial weight increment per step [default: 0.01].
    #[arg(long)]
    pub lambda_step: Option<f64>,
    /// Adversarial weight cap [default: 1].
    #[arg(long)]
    pub lambda_max: Option<f64>,
    /// Guard in the style-error normalization [default: 1e-8].
    #[arg(long)]
    pub epsilon_norm: Option<f64>,
    /// Adam epsilon [default: 1e-8].
    #[arg(long)]
    pub adam_eps: Option<f64>,
    /// Update the discriminator [default: true].
    #[arg(long)]
    pub train_discriminator: Option<bool>,
    /// Stop after this many steps, 0 for no cap [default: 0].
    #[arg(long)]
    pub max_steps: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset manifest to draw intervals from.
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated speaker ids [default: every speaker in the manifest].
    #[arg(long, value_delimiter = ',')]
    pub speakers: Vec<String>,
    /// train, valid, test or all [default: all].
    #[arg(long, default_value = "all")]
    pub split: String,
    /// Style bank path; `.csv` selects the text form.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Source interval file(s).
    #[arg(long)]
    pub source: Vec<PathBuf>,
    /// Manifest for `--source-speaker` and for extracting the target style.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Use every interval of this speaker (in `--split`) as a source.
    #[arg(long)]
    pub source_speaker: Option<String>,
    /// Split for `--source-speaker` and style extraction: train, valid, test or all [default: test].
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Target speaker, looked up in `--style-file` or extracted from `--data`.
    #[arg(long)]
    pub target_speaker: Option<String>,
    /// Style bank produced by extract-style.
    #[arg(long)]
    pub style_file: Option<PathBuf>,
    /// Output directory for `<source>.pose.csv` files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Directory of generated pose files.
    #[arg(long)]
    pub pred: PathBuf,
    /// Directory of source pose or interval files.
    #[arg(long)]
    pub source: PathBuf,
    /// Directory of target pose or interval files.
    #[arg(long)]
    pub target: PathBuf,
    /// Frame rate used for the derivatives [default: 15].
    #[arg(long, default_value_t = 15.0)]
    pub fps: f64,
    /// Comma-separated wrist joint indices [default: 4,7].
    #[arg(long, value_delimiter = ',')]
    pub wrists: Vec<usize>,
    /// Distance report CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional SVG bar chart of the distance shares.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Pose file or interval file.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Virtual camera size [default: 1920x1080].
    #[arg(long, default_value = "1920x1080")]
    pub resolution: String,
    /// Comma-separated BODY25 index per modeled joint [default: 0,1,2,3,4,5,6,7,15,16].
    #[arg(long, value_delimiter = ',')]
    pub joint_map: Vec<usize>,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub status: &'static str,
    pub error: Option<String>,
    pub exit_code: i32,
}

impl RunRecord {
    fn new(command: &'static str) -> Self {
        Self {
            tool: "zsmstm",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: BTreeMap::new(),
            seed: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            status: "ok",
            error: None,
            exit_code: 0,
        }
    }

    fn set_config(&mut self, pairs: Vec<(String, String)>) {
        self.config.extend(pairs);
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthData(a) => synth_data(a),
        Command::Train(a) => train(a),
        Command::ExtractStyle(a) => extract_style(a),
        Command::Transfer(a) => transfer(a),
        Command::Metrics(a) => metrics(a),
        Command::ExportBody25(a) => export_body25(a),
    }
}

/// Runs `body` and records its outcome in `record_path`. Errors from writing
/// the record never mask the command's own error.
fn finish(record_path: &Path, mut record: RunRecord, body: impl FnOnce(&mut RunRecord) -> Result<()>) -> Result<()> {
    let outcome = body(&mut record);
    if let Err(e) = &outcome {
        record.status = "error";
        record.error = Some(e.to_string());
        record.exit_code = exit_code(e);
    }
    let written = write_record(record_path, &record);
    outcome.and(written)
}

fn write_record(path: &Path, record: &RunRecord) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(record).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `run.json` inside an output directory, `<file>.run.json` beside an output file.
fn record_path_for_dir(dir: &Path) -> PathBuf {
    dir.join("run.json")
}

fn record_path_for_file(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".run.json");
    file.with_file_name(name)
}

fn read_config_file(path: Option<&Path>) -> Result<BTreeMap<String, String>> {
    match path {
        None => Ok(BTreeMap::new()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| match Error::io(p, e) {
                Error::MissingFile(p) => Error::Config(format!("config file {} not found", p.display())),
                other => other,
            })?;
            kv::parse(&text)
        }
    }
}

fn reject_unknown(map: &BTreeMap<String, String>, known: &[String]) -> Result<()> {
    match map.keys().find(|k| !known.contains(k)) {
        Some(k) => Err(Error::Config(format!("unknown config key {k:?}"))),
        None => Ok(()),
    }
}

/// Inserts `key=value` for every flag that was given.
macro_rules! flags {
    ($map:expr, $args:expr; $($field:ident),* $(,)?) => {
        $( if let Some(v) = &$args.$field { $map.insert(stringify!($field).to_string(), v.to_string()); } )*
    };
}

fn parse_split(s: &str) -> Result<Option<Split>> {
    if s == "all" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Config(format!("split must be train, valid, test or all, got {s:?}")))
}

// synth-data

const SYNTH_COUNT_KEYS: [&str; 4] = ["seen", "unseen", "per_speaker", "seed"];

fn synth_data(a: SynthArgs) -> Result<()> {
    let mut map = read_config_file(a.config.as_deref())?;
    flags!(map, a; seen, unseen, per_speaker, seed, d_text, n_mels, joints, frames, fps, n_classes,
        max_words, mel_rate, amplitude_min, amplitude_max, frequency_min, frequency_max, smoothness_min,
        smoothness_max, posture_jitter, text_noise, mel_noise, style_leak, format);
    let mut cfg = SynthConfig::default();
    let mut known: Vec<String> = cfg.to_kv().into_iter().map(|(k, _)| k).collect();
    known.extend(SYNTH_COUNT_KEYS.iter().map(|k| k.to_string()));
    reject_unknown(&map, &known)?;
    cfg.apply_kv(&map)?;
    cfg.validate()?;
    let (mut seen, mut unseen, mut per, mut seed) = (4usize, 2usize, 50usize, 0u64);
    kv::take(&map, "seen", &mut seen)?;
    kv::take(&map, "unseen", &mut unseen)?;
    kv::take(&map, "per_speaker", &mut per)?;
    kv::take(&map, "seed", &mut seed)?;
    if seen == 0 || per == 0 {
        return Err(Error::Config("need at least one seen speaker and one interval per speaker".into()));
    }

    let mut record = RunRecord::new("synth-data");
    record.set_config(cfg.to_kv());
    record.set_config(vec![
        ("seen".into(), seen.to_string()),
        ("unseen".into(), unseen.to_string()),
        ("per_speaker".into(), per.to_string()),
    ]);
    record.seed = Some(seed);
    finish(&record_path_for_dir(&a.out), record, |rec| {
        let (manifest, speakers) = gen_dataset(&a.out, seen, unseen, per, seed, &cfg)?;
        let truth = a.out.join("speakers.tsv");
        fs::write(&truth, speakers_tsv(&speakers)).map_err(|e| Error::io(&truth, e))?;
        rec.output(&a.out.join("manifest.tsv"));
        rec.output(&truth);
        rec.outputs.extend(manifest.entries.iter().map(|e| manifest.resolve(e).display().to_string()));
        Ok(())
    })
}

// train

fn model_flags(a: &ModelArgs) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    flags!(map, a; d_model, d_text, n_mels, patch_size, patch_stride, max_mel_frames, speech_layers,
        speech_heads, content_att_heads, style_att_heads, pose_lstm_layers, decoder_layers, decoder_heads,
        ffn_mult, joints, frames);
    map
}

fn preset(name: &str) -> Result<ModelConfig> {
    match name {
        "full" => Ok(ModelConfig::default()),
        "tiny" => Ok(ModelConfig::tiny()),
        other => Err(Error::Config(format!("preset must be full or tiny, got {other:?}"))),
    }
}

/// Model shape: preset, then file, then flags; data-shaped keys fall back to the manifest.
pub fn resolve_model_config(map: &BTreeMap<String, String>, manifest: &DatasetManifest) -> Result<ModelConfig> {
    let mut cfg = preset(map.get("preset").map_or("full", String::as_str))?;
    cfg.d_text = manifest.dims.d_text;
    cfg.n_mels = manifest.dims.n_mels;
    cfg.joints = manifest.dims.joints;
    cfg.frames = manifest.dims.frames;
    cfg.apply_kv(map)?;
    cfg.validate()?;
    let d = &manifest.dims;
    if (cfg.d_text, cfg.n_mels, cfg.joints, cfg.frames) != (d.d_text, d.n_mels, d.joints, d.frames) {
        return Err(Error::DimensionMismatch(format!(
            "model expects d_text={} n_mels={} J={} T={}, data has d_text={} n_mels={} J={} T={}",
            cfg.d_text, cfg.n_mels, cfg.joints, cfg.frames, d.d_text, d.n_mels, d.joints, d.frames
        )));
    }
    Ok(cfg)
}

struct TrainFiles {
    steps: fs::File,
    valid: fs::File,
    best_path: PathBuf,
    config: ModelConfig,
    stats: crate::data::NormalizationStats,
}

impl FitObserver for TrainFiles {
    fn on_step(&mut self, log: &StepLog) -> Result<()> {
        use std::io::Write;
        writeln!(self.steps, "{}", log.csv_row()).map_err(|e| Error::io("steps.csv", e))
    }

    fn on_validation(&mut self, rec: &ValidRecord, is_best: bool, params: &ParamStore, _: &TrainSnapshot) -> Result<()> {
        use std::io::Write;
        writeln!(self.valid, "{}", rec.csv_row()).map_err(|e| Error::io("valid.csv", e))?;
        if is_best {
            let ckpt = Checkpoint { config: self.config.clone(), stats: self.stats.clone(), params: params.clone(), train: None };
            ckpt.save(&self.best_path)?;
        }
        Ok(())
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let mut map = read_config_file(a.config.as_deref())?;
    map.extend(model_flags(&a.model));
    if let Some(p) = &a.model.preset {
        map.insert("preset".into(), p.clone());
    }
    flags!(map, a; seed, beta1, beta2, initial_lr, warmup_steps, epochs, batch_size, lambda_step, lambda_max,
        epsilon_norm, adam_eps, train_discriminator, max_steps);
    let mut known: Vec<String> = ModelConfig::default().to_kv().into_iter().map(|(k, _)| k).collect();
    known.extend(TrainConfig::default().to_kv().into_iter().map(|(k, _)| k));
    known.push("preset".into());
    reject_unknown(&map, &known)?;

    let mut tcfg = TrainConfig::default();
    tcfg.apply_kv(&map)?;
    tcfg.validate()?;
    let manifest = load_manifest(&a.data)?;
    let resumed = a.resume.as_deref().map(Checkpoint::load).transpose()?;
    let mcfg = match &resumed {
        Some(c) => c.config.clone(),
        None => resolve_model_config(&map, &manifest)?,
    };

    let mut record = RunRecord::new("train");
    record.set_config(mcfg.to_kv());
    record.set_config(tcfg.to_kv());
    record.seed = Some(tcfg.seed);
    finish(&record_path_for_dir(&a.out), record, |rec| {
        rec.input(&a.data)?;
        if let Some(r) = &a.resume {
            rec.input(r)?;
        }
        let model = Model::new(mcfg.clone())?;
        let train_entries: Vec<_> = manifest.entries.iter().filter(|e| e.split == Split::Train).collect();
        let valid_entries: Vec<_> = manifest.entries.iter().filter(|e| e.split == Split::Valid).collect();
        let train_raw = load_samples(&manifest, train_entries)?;
        let valid_raw = load_samples(&manifest, valid_entries)?;
        let (stats, params, state) = match resumed {
            Some(c) => (c.stats, c.params, c.train),
            None => (fit_normalization(&train_raw)?, model.init_params(tcfg.seed), None),
        };
        let train_set: Vec<Sample> = train_raw.iter().map(|s| normalize(s, &stats)).collect::<Result<_>>()?;
        let valid_set: Vec<Sample> = valid_raw.iter().map(|s| normalize(s, &stats)).collect::<Result<_>>()?;

        fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
        let open = |name: &str, header: &str| -> Result<fs::File> {
            let path = a.out.join(name);
            let append = state.is_some() && path.is_file();
            let mut f = fs::OpenOptions::new()
                .create(true)
                .write(true)
                .append(append)
                .truncate(!append)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            if !append {
                use std::io::Write;
                writeln!(f, "{header}").map_err(|e| Error::io(&path, e))?;
            }
            Ok(f)
        };
        let mut files = TrainFiles {
            steps: open("steps.csv", STEP_LOG_HEADER)?,
            valid: open("valid.csv", VALID_LOG_HEADER)?,
            best_path: a.out.join("best.ckpt"),
            config: mcfg.clone(),
            stats: stats.clone(),
        };
        let outcome = fit(&model, params, &train_set, &valid_set, &tcfg, state, &mut files)?;
        let ckpt = Checkpoint { config: mcfg.clone(), stats, params: outcome.params, train: Some(outcome.state) };
        let path = a.out.join("model.ckpt");
        ckpt.save(&path)?;
        rec.output(&path);
        if files.best_path.is_file() {
            rec.output(&files.best_path);
        }
        rec.output(&a.out.join("steps.csv"));
        rec.output(&a.out.join("valid.csv"));
        Ok(())
    })
}

// extract-style

fn extract_style(a: ExtractArgs) -> Result<()> {
    let split = parse_split(&a.split)?;
    let mut record = RunRecord::new("extract-style");
    record.set_config(vec![("split".into(), a.split.clone()), ("speakers".into(), a.speakers.join(","))]);
    finish(&record_path_for_file(&a.out), record, |rec| {
        rec.input(&a.checkpoint)?;
        rec.input(&a.data)?;
        let ckpt = Checkpoint::load(&a.checkpoint)?;
        let manifest = load_manifest(&a.data)?;
        let speakers: Vec<String> = if a.speakers.is_empty() {
            manifest.speakers().into_iter().map(String::from).collect()
        } else {
            a.speakers.clone()
        };
        let bank = build_style_bank(&ckpt, &manifest, &speakers, split)?;
        if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        bank.save(&a.out)?;
        rec.output(&a.out);
        Ok(())
    })
}

// transfer

fn transfer(a: TransferArgs) -> Result<()> {
    let split = parse_split(&a.split)?;
    if a.source.is_empty() == a.source_speaker.is_none() {
        return Err(Error::Config("give either --source files or --source-speaker".into()));
    }
    if a.target_speaker.is_none() && a.style_file.is_none() {
        return Err(Error::Config("give --target-speaker and/or --style-file".into()));
    }
    if (a.source_speaker.is_some() || a.style_file.is_none()) && a.data.is_none() {
        return Err(Error::Config("--data is required to look up speakers".into()));
    }
    let mut record = RunRecord::new("transfer");
    record.set_config(vec![
        ("split".into(), a.split.clone()),
        ("source_speaker".into(), a.source_speaker.clone().unwrap_or_default()),
        ("target_speaker".into(), a.target_speaker.clone().unwrap_or_default()),
    ]);
    finish(&record_path_for_dir(&a.out), record, |rec| {
        rec.input(&a.checkpoint)?;
        let ckpt = Checkpoint::load(&a.checkpoint)?;
        let engine = Engine::new(&ckpt)?;
        let manifest = a.data.as_deref().map(load_manifest).transpose()?;
        if let Some(d) = &a.data {
            rec.input(d)?;
        }

        let style: StyleEmbedding = match (&a.style_file, &a.target_speaker) {
            (Some(bank_path), target) => {
                rec.input(bank_path)?;
                let bank = StyleBank::load(bank_path)?;
                let id = match target {
                    Some(t) => t.clone(),
                    None if bank.len() == 1 => bank.entries.keys().next().cloned().unwrap_or_default(),
                    None => return Err(Error::Config("style bank has several speakers; pick one with --target-speaker".into())),
                };
                bank.get(&id).cloned().ok_or(Error::UnknownSpeaker(id))?
            }
            (None, Some(target)) => {
                let m = manifest.as_ref().expect("checked above");
                let entries: Vec<_> = m.entries_for(target, split).collect();
                if entries.is_empty() {
                    return Err(Error::UnknownSpeaker(target.clone()));
                }
                engine.extract_style(&load_samples(m, entries)?)?
            }
            (None, None) => unreachable!("checked above"),
        };

        let sources: Vec<(String, Sample)> = match &a.source_speaker {
            Some(spk) => {
                let m = manifest.as_ref().expect("checked above");
                let entries: Vec<_> = m.entries_for(spk, split).collect();
                if entries.is_empty() {
                    return Err(Error::UnknownSpeaker(spk.clone()));
                }
                entries
                    .into_iter()
                    .map(|e| {
                        let path = m.resolve(e);
                        let sample = crate::data::parse_interval(&path, m)?;
                        Ok((format!("{}_{}", spk, stem(&e.path)), sample))
                    })
                    .collect::<Result<_>>()?
            }
            None => a
                .source
                .iter()
                .map(|p| {
                    rec.input(p)?;
                    let s = crate::data::read_interval(p)?;
                    s.validate(crate::data::sample::MIN_MEL_FRAMES)?;
                    Ok((stem(p), s))
                })
                .collect::<Result<_>>()?,
        };

        fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
        for (name, sample) in &sources {
            let pose = engine.transfer(sample, &style)?;
            let path = a.out.join(format!("{name}.pose.csv"));
            export::write_pose(&pose, sample.fps, &path)?;
            rec.output(&path);
        }
        Ok(())
    })
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

// metrics

/// Mean metrics over every pose or interval file directly inside `dir`.
pub fn dir_metrics(dir: &Path, fps: f64, wrists: &[usize], rec: Option<&mut RunRecord>) -> Result<MetricSet> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && !p.to_string_lossy().ends_with(".run.json") && p.file_name() != Some("run.json".as_ref()))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyInput(format!("no pose files in {}", dir.display())));
    }
    let mut sets = Vec::with_capacity(files.len());
    let mut rec = rec;
    for f in &files {
        if let Some(r) = rec.as_deref_mut() {
            r.input(f)?;
        }
        let (pose, _) = export::read_pose(f)?;
        sets.push(MetricSet::compute(&pose, fps, wrists)?);
    }
    MetricSet::mean(&sets)
}

fn metrics(a: MetricsArgs) -> Result<()> {
    if !(a.fps > 0.0) {
        return Err(Error::Config("fps must be positive".into()));
    }
    let wrists = if a.wrists.is_empty() { DEFAULT_WRISTS.to_vec() } else { a.wrists.clone() };
    let mut record = RunRecord::new("metrics");
    record.set_config(vec![
        ("fps".into(), a.fps.to_string()),
        ("wrists".into(), wrists.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")),
    ]);
    finish(&record_path_for_file(&a.out), record, |rec| {
        let pred = dir_metrics(&a.pred, a.fps, &wrists, Some(rec))?;
        let source = dir_metrics(&a.source, a.fps, &wrists, Some(rec))?;
        let target = dir_metrics(&a.target, a.fps, &wrists, Some(rec))?;
        let report = distance_report(&source, &target, &pred);
        if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&a.out, report.to_csv()).map_err(|e| Error::io(&a.out, e))?;
        rec.output(&a.out);
        if let Some(plot) = &a.plot {
            fs::write(plot, distance_svg(&report)).map_err(|e| Error::io(plot, e))?;
            rec.output(plot);
        }
        Ok(())
    })
}

/// Horizontal stacked bars: source share vs model share per metric.
pub fn distance_svg(report: &DistanceReport) -> String {
    let (w, bar, gap, label) = (640.0, 22.0, 10.0, 170.0);
    let h = 40.0 + report.rows.len() as f64 * (bar + gap);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(s, "<text x=\"{label}\" y=\"16\">distance to target: source (grey) vs model (blue), %</text>");
    let span = w - label - 20.0;
    for (i, r) in report.rows.iter().enumerate() {
        let y = 28.0 + i as f64 * (bar + gap);
        let ws = span * r.source_pct / 100.0;
        let _ = writeln!(s, "<text x=\"4\" y=\"{:.1}\">{}</text>", y + bar * 0.7, r.metric);
        let _ = writeln!(s, "<rect x=\"{label}\" y=\"{y:.1}\" width=\"{ws:.2}\" height=\"{bar}\" fill=\"#999\"/>");
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"{y:.1}\" width=\"{:.2}\" height=\"{bar}\" fill=\"#3b6fb6\"/>",
            label + ws,
            span - ws
        );
        let _ = writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"#fff\">{:.1}</text>", label + 4.0, y + bar * 0.7, r.source_pct);
    }
    s.push_str("</svg>\n");
    s
}

// export-body25

fn export_body25(a: ExportArgs) -> Result<()> {
    let resolution = export::parse_resolution(&a.resolution)?;
    let map = if a.joint_map.is_empty() { DEFAULT_JOINT_MAP.to_vec() } else { a.joint_map.clone() };
    export::check_joint_map(&map)?;
    let mut record = RunRecord::new("export-body25");
    record.set_config(vec![
        ("resolution".into(), format!("{}x{}", resolution.0, resolution.1)),
        ("joint_map".into(), map.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(",")),
    ]);
    finish(&record_path_for_dir(&a.out), record, |rec| {
        rec.input(&a.pred)?;
        let (pose, _) = export::read_pose(&a.pred)?;
        let frames = export::map_sequence(&pose, &map)?;
        let (w, h) = (resolution.0 as f64, resolution.1 as f64);
        let pixels: Vec<_> = frames.iter().map(|f| f.scaled(w, h)).collect();
        let json_dir = a.out.join("json");
        for p in export::write_json(&pixels, &json_dir)? {
            rec.output(&p);
        }
        let csv = a.out.join("keypoints.csv");
        export::write_csv(&frames, &csv, resolution)?;
        rec.output(&csv);
        Ok(())
    })
}
