//! Parametric synthetic speakers with known style factors.
//!
//! Pose: `offset + amplitude · LP(oscillation)`, where the oscillation pattern
//! depends on each word's content class and runs at the speaker's base
//! frequency. Mel: a spectral bump at the speaker's pitch band, modulated in
//! time by the content class. Text: a fixed per-class embedding plus
//! speaker-independent noise.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::interval::{write_interval, IntervalFormat};
use crate::data::manifest::{DatasetManifest, FeatureDims, ManifestEntry, Split};
use crate::data::sample::{Sample, Span, WordFeature, MIN_MEL_FRAMES};
use crate::error::{Error, Result};
use crate::kv;
use crate::tensor::Matrix;

/// Rest pose of the default 10-joint upper body, `(x, y)` in screen fractions:
/// nose, neck, r-shoulder, r-elbow, r-wrist, l-shoulder, l-elbow, l-wrist, r-eye, l-eye.
const SKELETON_10: [(f64, f64); 10] = [
    (0.50, 0.20),
    (0.50, 0.30),
    (0.42, 0.31),
    (0.38, 0.45),
    (0.40, 0.58),
    (0.58, 0.31),
    (0.62, 0.45),
    (0.60, 0.58),
    (0.48, 0.18),
    (0.52, 0.18),
];

/// How strongly each default joint follows the gesture oscillation.
const MOBILITY_10: [f64; 10] = [0.05, 0.05, 0.2, 0.6, 1.0, 0.2, 0.6, 1.0, 0.05, 0.05];

/// Gesture extent, in screen fractions, at `amplitude_scale = 1`.
const BASE_EXTENT: f64 = 0.12;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub d_text: usize,
    pub n_mels: usize,
    pub joints: usize,
    pub frames: usize,
    pub fps: f64,
    pub n_classes: usize,
    pub max_words: usize,
    /// Mel frames per pose frame; segments never go below one patch.
    pub mel_rate: usize,
    pub amplitude_range: (f64, f64),
    pub frequency_range: (f64, f64),
    pub smoothness_range: (f64, f64),
    /// Std of the per-speaker deviation from the rest pose.
    pub posture_jitter: f64,
    pub text_noise: f64,
    pub mel_noise: f64,
    /// Adds a speaker signature to every text vector.
    pub style_leak: bool,
    pub format: IntervalFormat,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            d_text: 768,
            n_mels: 128,
            joints: 10,
            frames: 64,
            fps: 15.0,
            n_classes: 8,
            max_words: 6,
            mel_rate: 4,
            amplitude_range: (0.5, 2.0),
            frequency_range: (0.5, 2.5),
            smoothness_range: (0.3, 1.0),
            posture_jitter: 0.01,
            text_noise: 0.05,
            mel_noise: 0.05,
            style_leak: false,
            format: IntervalFormat::Binary,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_text", self.d_text),
            ("n_mels", self.n_mels),
            ("joints", self.joints),
            ("frames", self.frames),
            ("n_classes", self.n_classes),
            ("max_words", self.max_words),
            ("mel_rate", self.mel_rate),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        let (a0, a1) = self.amplitude_range;
        let (s0, s1) = self.smoothness_range;
        let (f0, f1) = self.frequency_range;
        if !(a0 > 0.0 && a0 <= a1) || !(s0 > 0.0 && s0 <= s1 && s1 <= 1.0) || !(f0 >= 0.0 && f0 <= f1) {
            return Err(Error::Config("synthetic style ranges are invalid".into()));
        }
        if !(self.fps > 0.0) {
            return Err(Error::Config("fps must be positive".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let fmt = match self.format {
            IntervalFormat::Binary => "binary",
            IntervalFormat::Csv => "csv",
        };
        [
            ("d_text", self.d_text.to_string()),
            ("n_mels", self.n_mels.to_string()),
            ("joints", self.joints.to_string()),
            ("frames", self.frames.to_string()),
            ("fps", self.fps.to_string()),
            ("n_classes", self.n_classes.to_string()),
            ("max_words", self.max_words.to_string()),
            ("mel_rate", self.mel_rate.to_string()),
            ("amplitude_min", self.amplitude_range.0.to_string()),
            ("amplitude_max", self.amplitude_range.1.to_string()),
            ("frequency_min", self.frequency_range.0.to_string()),
            ("frequency_max", self.frequency_range.1.to_string()),
            ("smoothness_min", self.smoothness_range.0.to_string()),
            ("smoothness_max", self.smoothness_range.1.to_string()),
            ("posture_jitter", self.posture_jitter.to_string()),
            ("text_noise", self.text_noise.to_string()),
            ("mel_noise", self.mel_noise.to_string()),
            ("style_leak", self.style_leak.to_string()),
            ("format", fmt.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn apply_kv(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        kv::take(map, "d_text", &mut self.d_text)?;
        kv::take(map, "n_mels", &mut self.n_mels)?;
        kv::take(map, "joints", &mut self.joints)?;
        kv::take(map, "frames", &mut self.frames)?;
        kv::take(map, "fps", &mut self.fps)?;
        kv::take(map, "n_classes", &mut self.n_classes)?;
        kv::take(map, "max_words", &mut self.max_words)?;
        kv::take(map, "mel_rate", &mut self.mel_rate)?;
        kv::take(map, "amplitude_min", &mut self.amplitude_range.0)?;
        kv::take(map, "amplitude_max", &mut self.amplitude_range.1)?;
        kv::take(map, "frequency_min", &mut self.frequency_range.0)?;
        kv::take(map, "frequency_max", &mut self.frequency_range.1)?;
        kv::take(map, "smoothness_min", &mut self.smoothness_range.0)?;
        kv::take(map, "smoothness_max", &mut self.smoothness_range.1)?;
        kv::take(map, "posture_jitter", &mut self.posture_jitter)?;
        kv::take(map, "text_noise", &mut self.text_noise)?;
        kv::take(map, "mel_noise", &mut self.mel_noise)?;
        kv::take(map, "style_leak", &mut self.style_leak)?;
        if let Some(f) = map.get("format") {
            self.format = match f.as_str() {
                "binary" => IntervalFormat::Binary,
                "csv" => IntervalFormat::Csv,
                other => return Err(Error::Config(format!("format must be binary or csv, got {other}"))),
            };
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerStyleParams {
    pub amplitude_scale: f64,
    /// Cycles per second.
    pub base_frequency: f64,
    /// `[2J]` rest pose.
    pub posture_offset: Vec<f64>,
    /// One-pole low-pass coefficient; 1 disables filtering.
    pub smoothness: f64,
    pub voice_pitch_band: usize,
    /// Used only when text carries style.
    pub text_signature: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentScript {
    pub classes: Vec<usize>,
    /// Frames per word; sums to T.
    pub durations: Vec<usize>,
}

impl ContentScript {
    pub fn word_count(&self) -> usize {
        self.classes.len()
    }

    pub fn frames(&self) -> usize {
        self.durations.iter().sum()
    }

    pub fn spans(&self) -> Vec<Span> {
        let mut start = 0;
        self.durations
            .iter()
            .map(|d| {
                let s = Span::new(start, start + d);
                start += d;
                s
            })
            .collect()
    }
}

fn rest_pose(joints: usize) -> Vec<(f64, f64)> {
    if joints == 10 {
        return SKELETON_10.to_vec();
    }
    (0..joints)
        .map(|j| {
            let a = 2.0 * PI * j as f64 / joints as f64;
            (0.5 + 0.15 * a.cos(), 0.4 + 0.15 * a.sin())
        })
        .collect()
}

fn mobility(joints: usize) -> Vec<f64> {
    if joints == 10 {
        return MOBILITY_10.to_vec();
    }
    (0..joints).map(|j| (j + 1) as f64 / joints as f64).collect()
}

pub fn gen_speaker(seed: u64, cfg: &SynthConfig) -> SpeakerStyleParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5BEA);
    let (a0, a1) = cfg.amplitude_range;
    let (f0, f1) = cfg.frequency_range;
    let (s0, s1) = cfg.smoothness_range;
    let amplitude_scale = rng.gen_range(a0..=a1);
    let base_frequency = rng.gen_range(f0..=f1);
    let smoothness = rng.gen_range(s0..=s1);
    let lo = cfg.n_mels / 4;
    let hi = (3 * cfg.n_mels / 4).max(lo + 1);
    let voice_pitch_band = rng.gen_range(lo..hi).min(cfg.n_mels - 1);
    let posture_offset = rest_pose(cfg.joints)
        .into_iter()
        .flat_map(|(x, y)| [x, y])
        .map(|v| {
            let z: f64 = rng.sample(StandardNormal);
            v + cfg.posture_jitter * z
        })
        .collect();
    SpeakerStyleParams {
        amplitude_scale,
        base_frequency,
        posture_offset,
        smoothness,
        voice_pitch_band,
        text_signature: rng.gen(),
    }
}

/// Random script: 1..=max_words words with positive durations summing to `frames`.
pub fn gen_script(seed: u64, cfg: &SynthConfig) -> ContentScript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5C81_7700);
    let words = rng.gen_range(1..=cfg.max_words.min(cfg.frames));
    let classes = (0..words).map(|_| rng.gen_range(0..cfg.n_classes)).collect();
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() < words - 1 {
        let c = rng.gen_range(1..cfg.frames);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    cuts.push(cfg.frames);
    let mut prev = 0;
    let durations = cuts
        .into_iter()
        .map(|c| {
            let d = c - prev;
            prev = c;
            d
        })
        .collect();
    ContentScript { classes, durations }
}

/// Deterministic unit-scale vector for a content class (or signature), independent of any speaker.
fn class_vector(tag: u64, class: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(tag.wrapping_mul(0x1000_0001).wrapping_add(class));
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Per-class gesture pattern: direction per joint axis and a phase. Horizontal
/// directions point away from the body midline, so strokes widen the silhouette.
fn class_pattern(class: usize, joints: usize) -> (Vec<f64>, f64) {
    let v = class_vector(0xC1A55, class as u64, 2 * joints + 1);
    let norm = (v[..2 * joints].iter().map(|x| x * x).sum::<f64>() / joints as f64).sqrt().max(1e-9);
    let rest = rest_pose(joints);
    let dirs = v[..2 * joints]
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let d = x / norm;
            let side = rest[i / 2].0 - 0.5;
            if i % 2 == 1 || side.abs() < 1e-9 {
                d
            } else {
                d.abs() * side.signum()
            }
        })
        .collect();
    (dirs, v[2 * joints] * PI)
}

/// Unfiltered stroke pattern for a script at the speaker's frequency: each
/// stroke leaves the rest pose and returns, `(1 - cos θ) / 2` in `[0, 1]`.
/// The phase depends only on the content class and frame index, so motion is
/// determined by the script and the style.
fn oscillation(style: &SpeakerStyleParams, script: &ContentScript, cfg: &SynthConfig) -> Matrix {
    let joints = cfg.joints;
    let mob = mobility(joints);
    let frames = script.frames();
    let mut out = Matrix::zeros(frames, 2 * joints);
    let spans = script.spans();
    for (w, span) in spans.iter().enumerate() {
        let (dirs, phase) = class_pattern(script.classes[w], joints);
        for t in span.start..span.end {
            let s = 0.5 * (1.0 - (2.0 * PI * style.base_frequency * t as f64 / cfg.fps + phase).cos());
            let row = out.row_mut(t);
            for j in 0..joints {
                row[2 * j] = BASE_EXTENT * mob[j] * dirs[2 * j] * s;
                row[2 * j + 1] = BASE_EXTENT * mob[j] * dirs[2 * j + 1] * s;
            }
        }
    }
    out
}

/// One-pole low-pass `y_t = s·x_t + (1−s)·y_{t−1}`, `y_0 = x_0`.
pub fn low_pass(x: &Matrix, smoothness: f64) -> Matrix {
    let mut y = x.clone();
    if smoothness >= 1.0 {
        return y;
    }
    for t in 1..y.rows() {
        for c in 0..y.cols() {
            let v = smoothness * x.get(t, c) + (1.0 - smoothness) * y.get(t - 1, c);
            y.set(t, c, v);
        }
    }
    y
}

pub fn gen_sample(
    speaker_id: &str,
    style: &SpeakerStyleParams,
    script: &ContentScript,
    seed: u64,
    cfg: &SynthConfig,
) -> Result<Sample> {
    if script.frames() != cfg.frames
        || script.classes.len() != script.durations.len()
        || script.durations.iter().any(|&d| d == 0)
    {
        return Err(Error::ScriptMismatch(format!(
            "{} words with durations summing to {}, expected {} frames",
            script.classes.len(),
            script.frames(),
            cfg.frames
        )));
    }
    if style.posture_offset.len() != 2 * cfg.joints {
        return Err(Error::DimensionMismatch(format!(
            "posture offset has {} values for {} joints",
            style.posture_offset.len(),
            cfg.joints
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let motion = low_pass(&oscillation(style, script, cfg), style.smoothness);
    let mut pose = motion.map(|v| style.amplitude_scale * v);
    for r in 0..pose.rows() {
        for (v, o) in pose.row_mut(r).iter_mut().zip(&style.posture_offset) {
            *v += o;
        }
    }
    let signature = cfg.style_leak.then(|| class_vector(0x5161, style.text_signature, cfg.d_text));
    let sigma = (cfg.n_mels as f64 / 16.0).max(1.0);
    let words = script
        .classes
        .iter()
        .zip(&script.durations)
        .map(|(&class, &dur)| {
            let mut text = class_vector(0x7E47, class as u64, cfg.d_text);
            for (i, v) in text.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *v += cfg.text_noise * z;
                if let Some(sig) = &signature {
                    *v += 0.5 * sig[i];
                }
            }
            let t_w = (dur * cfg.mel_rate).max(MIN_MEL_FRAMES);
            let rate = 0.05 + 0.4 * class as f64 / cfg.n_classes as f64;
            let mel = Matrix::from_fn(t_w, cfg.n_mels, |t, b| {
                let d = b as f64 - style.voice_pitch_band as f64;
                let bump = (-d * d / (2.0 * sigma * sigma)).exp();
                let z: f64 = rng.sample(StandardNormal);
                bump * (1.0 + 0.5 * (2.0 * PI * rate * t as f64).sin()) + cfg.mel_noise * z
            });
            WordFeature { text_vec: text, mel }
        })
        .collect();
    Ok(Sample { speaker_id: speaker_id.to_string(), words, pose, alignment: script.spans(), fps: cfg.fps })
}

/// Ground truth for one generated speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpeaker {
    pub id: String,
    pub seen: bool,
    pub params: SpeakerStyleParams,
}

/// Split assignment by sample index: 80% train, 10% valid, 10% test
/// (at least one test interval per speaker).
fn split_of(i: usize, n: usize) -> Split {
    let n_test = (n / 10).max(1).min(n);
    let n_valid = (n / 10).min(n - n_test);
    if i >= n - n_test {
        Split::Test
    } else if i >= n - n_test - n_valid {
        Split::Valid
    } else {
        Split::Train
    }
}

fn speaker_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(index.wrapping_mul(0x9E37_79B9))
}

/// Speakers for a dataset, seen first.
pub fn dataset_speakers(n_seen: usize, n_unseen: usize, seed: u64, cfg: &SynthConfig) -> Vec<SyntheticSpeaker> {
    (0..n_seen + n_unseen)
        .map(|i| {
            let seen = i < n_seen;
            let id = if seen { format!("seen{i:02}") } else { format!("unseen{:02}", i - n_seen) };
            SyntheticSpeaker { id, seen, params: gen_speaker(speaker_seed(seed, i as u64), cfg) }
        })
        .collect()
}

/// Generated samples grouped by speaker, in manifest order, with split labels.
pub fn gen_samples(
    n_seen: usize,
    n_unseen: usize,
    samples_per_speaker: usize,
    seed: u64,
    cfg: &SynthConfig,
) -> Result<Vec<(SyntheticSpeaker, Vec<(Split, Sample)>)>> {
    cfg.validate()?;
    if n_seen == 0 || samples_per_speaker == 0 {
        return Err(Error::Config("speaker and sample counts must be at least 1".into()));
    }
    dataset_speakers(n_seen, n_unseen, seed, cfg)
        .into_iter()
        .enumerate()
        .map(|(si, spk)| {
            let samples = (0..samples_per_speaker)
                .map(|k| {
                    let s = speaker_seed(seed, (si * 100_003 + k) as u64 + 1_000_000);
                    let script = gen_script(s, cfg);
                    let sample = gen_sample(&spk.id, &spk.params, &script, s.rotate_left(17), cfg)?;
                    let split = if spk.seen { split_of(k, samples_per_speaker) } else { Split::Test };
                    Ok((split, sample))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((spk, samples))
        })
        .collect()
}

/// Writes `manifest.tsv` and one interval file per sample under `root`.
///
/// Unseen speakers have every interval in the test split.
pub fn gen_dataset(
    root: &Path,
    n_seen: usize,
    n_unseen: usize,
    samples_per_speaker: usize,
    seed: u64,
    cfg: &SynthConfig,
) -> Result<(DatasetManifest, Vec<SyntheticSpeaker>)> {
    let groups = gen_samples(n_seen, n_unseen, samples_per_speaker, seed, cfg)?;
    let mut entries = Vec::new();
    let mut speakers = Vec::new();
    for (spk, samples) in groups {
        let dir = root.join("intervals").join(&spk.id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (k, (split, sample)) in samples.iter().enumerate() {
            let rel = PathBuf::from("intervals").join(&spk.id).join(format!("{k:05}.{}", cfg.format.extension()));
            write_interval(sample, &root.join(&rel), cfg.format)?;
            entries.push(ManifestEntry { speaker_id: spk.id.clone(), split: *split, path: rel });
        }
        speakers.push(spk);
    }
    let manifest = DatasetManifest {
        root: root.to_path_buf(),
        dims: FeatureDims { d_text: cfg.d_text, n_mels: cfg.n_mels, joints: cfg.joints, frames: cfg.frames },
        fps: cfg.fps,
        entries,
    };
    manifest.write(&root.join("manifest.tsv"))?;
    Ok((manifest, speakers))
}

/// Ground-truth style factors, one speaker per line.
pub fn speakers_tsv(speakers: &[SyntheticSpeaker]) -> String {
    let mut out = String::from("speaker\tseen\tamplitude_scale\tbase_frequency\tsmoothness\tvoice_pitch_band\n");
    for s in speakers {
        let p = &s.params;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            s.id, s.seen, p.amplitude_scale, p.base_frequency, p.smoothness, p.voice_pitch_band
        ));
    }
    out
}
