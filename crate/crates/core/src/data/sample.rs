use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Shortest mel segment accepted on load: one 16-frame patch.
pub const MIN_MEL_FRAMES: usize = 16;

/// Per-word text embedding and mel-spectrogram segment.
#[derive(Debug, Clone, PartialEq)]
pub struct WordFeature {
    pub text_vec: Vec<f64>,
    /// `[T_w × n_mels]`
    pub mel: Matrix,
}

/// Half-open frame span `[start, end)` covered by one word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// One word-aligned multimodal interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub speaker_id: String,
    pub words: Vec<WordFeature>,
    /// `[T × 2J]`, x and y interleaved per joint.
    pub pose: Matrix,
    pub alignment: Vec<Span>,
    /// Pose stream frame rate.
    pub fps: f64,
}

impl Sample {
    pub fn frames(&self) -> usize {
        self.pose.rows()
    }

    pub fn joints(&self) -> usize {
        self.pose.cols() / 2
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames() as f64 / self.fps
    }

    pub fn d_text(&self) -> usize {
        self.words.first().map_or(0, |w| w.text_vec.len())
    }

    pub fn n_mels(&self) -> usize {
        self.words.first().map_or(0, |w| w.mel.cols())
    }

    /// Text vectors stacked as `[W × d_text]`.
    pub fn text_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.words.iter().map(|w| w.text_vec.clone()).collect::<Vec<_>>())
    }

    /// Word index of every frame.
    pub fn frame_to_word(&self) -> Result<Vec<usize>> {
        frame_to_word(&self.alignment, self.frames())
    }

    /// Checks every structural invariant of an interval.
    pub fn validate(&self, min_mel_frames: usize) -> Result<()> {
        if self.words.is_empty() {
            return Err(Error::MalformedInterval("no words".into()));
        }
        if self.pose.rows() == 0 || self.pose.cols() == 0 || self.pose.cols() % 2 != 0 {
            return Err(Error::MalformedInterval(format!(
                "pose must be [T x 2J] with T, J >= 1, got {:?}",
                self.pose.shape()
            )));
        }
        if self.alignment.len() != self.words.len() {
            return Err(Error::AlignmentGap(format!(
                "{} spans for {} words",
                self.alignment.len(),
                self.words.len()
            )));
        }
        validate_alignment(&self.alignment, self.frames())?;
        let d_text = self.d_text();
        let n_mels = self.n_mels();
        for (i, w) in self.words.iter().enumerate() {
            if w.text_vec.len() != d_text {
                return Err(Error::DimensionMismatch(format!(
                    "word {i}: text vector length {} != {d_text}",
                    w.text_vec.len()
                )));
            }
            if w.mel.cols() != n_mels {
                return Err(Error::DimensionMismatch(format!(
                    "word {i}: mel width {} != {n_mels}",
                    w.mel.cols()
                )));
            }
            if w.mel.rows() < min_mel_frames {
                return Err(Error::TooShort(format!(
                    "word {i}: mel has {} frames, need at least {min_mel_frames}",
                    w.mel.rows()
                )));
            }
            if !w.mel.is_finite() || w.text_vec.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue(format!("word {i} features")));
            }
        }
        if !self.pose.is_finite() {
            return Err(Error::NonFiniteValue("pose".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::MalformedInterval(format!("fps {} is not positive", self.fps)));
        }
        Ok(())
    }
}

/// Spans must be non-empty, ordered, and tile `[0, frames)` exactly.
pub fn validate_alignment(spans: &[Span], frames: usize) -> Result<()> {
    if spans.is_empty() {
        return Err(Error::AlignmentGap("no spans".into()));
    }
    let mut cursor = 0;
    for (i, s) in spans.iter().enumerate() {
        if s.start != cursor {
            return Err(Error::AlignmentGap(format!(
                "span {i} starts at {} but previous coverage ends at {cursor}",
                s.start
            )));
        }
        if s.is_empty() {
            return Err(Error::AlignmentGap(format!("span {i} [{}, {}) is empty", s.start, s.end)));
        }
        cursor = s.end;
    }
    if cursor != frames {
        return Err(Error::AlignmentGap(format!("spans end at {cursor}, expected {frames}")));
    }
    Ok(())
}

pub fn frame_to_word(spans: &[Span], frames: usize) -> Result<Vec<usize>> {
    validate_alignment(spans, frames)?;
    let mut out = Vec::with_capacity(frames);
    for (w, s) in spans.iter().enumerate() {
        out.extend(std::iter::repeat(w).take(s.len()));
    }
    Ok(out)
}
