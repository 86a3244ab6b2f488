//! Per-feature standardization to mean 0 and standard deviation 0.5.

use crate::data::sample::Sample;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Target standard deviation after normalization.
pub const TARGET_STD: f64 = 0.5;

/// Features whose standard deviation falls below this are treated as constant.
const DEGENERATE_STD: f64 = 1e-12;

/// Mean and standard deviation of one feature stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    /// Always positive; 1.0 for degenerate features.
    pub std: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl FeatureStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Population statistics of `rows`, each of width `dim`.
    pub fn fit<'a>(dim: usize, rows: impl Iterator<Item = &'a [f64]>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let rows: Vec<&[f64]> = rows.collect();
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch(format!("row width {} != {dim}", r.len())));
            }
            n += 1;
            for (s, v) in sum.iter_mut().zip(r.iter()) {
                *s += v;
            }
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        // Second pass for a numerically stable variance.
        for r in &rows {
            for ((q, v), m) in sq.iter_mut().zip(r.iter()).zip(&mean) {
                *q += (v - m) * (v - m);
            }
        }
        let raw: Vec<f64> = sq.iter().map(|q| (q / n as f64).sqrt()).collect();
        let degenerate: Vec<bool> = raw.iter().map(|s| !(*s > DEGENERATE_STD)).collect();
        let std = raw.iter().zip(&degenerate).map(|(s, d)| if *d { 1.0 } else { *s }).collect();
        Ok(Self { mean, std, degenerate })
    }

    /// Identity statistics: mean 0, std 0.5.
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![TARGET_STD; dim], degenerate: vec![false; dim] }
    }

    fn check(&self, m: &Matrix, what: &str) -> Result<()> {
        if m.cols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{what} width {} != normalization width {}",
                m.cols(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn normalize_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if self.degenerate[j] { 0.0 } else { (*v - self.mean[j]) * TARGET_STD / self.std[j] };
        }
    }

    pub fn denormalize_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if self.degenerate[j] { self.mean[j] } else { *v * self.std[j] / TARGET_STD + self.mean[j] };
        }
    }

    pub fn normalize_matrix(&self, m: &Matrix, what: &str) -> Result<Matrix> {
        self.check(m, what)?;
        let mut out = m.clone();
        for r in 0..out.rows() {
            self.normalize_row(out.row_mut(r));
        }
        Ok(out)
    }

    pub fn denormalize_matrix(&self, m: &Matrix, what: &str) -> Result<Matrix> {
        self.check(m, what)?;
        let mut out = m.clone();
        for r in 0..out.rows() {
            self.denormalize_row(out.row_mut(r));
        }
        Ok(out)
    }
}

/// Statistics for the pose, mel and text streams, fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub pose: FeatureStats,
    pub mel: FeatureStats,
    pub text: FeatureStats,
}

impl NormalizationStats {
    pub fn identity(pose_dim: usize, n_mels: usize, d_text: usize) -> Self {
        Self {
            pose: FeatureStats::identity(pose_dim),
            mel: FeatureStats::identity(n_mels),
            text: FeatureStats::identity(d_text),
        }
    }
}

/// Fits stats over every pose frame, mel frame and word vector of `samples`.
pub fn fit_normalization(samples: &[Sample]) -> Result<NormalizationStats> {
    let first = samples.first().ok_or(Error::EmptyDataset)?;
    let pose = FeatureStats::fit(first.pose.cols(), samples.iter().flat_map(|s| s.pose.iter_rows()))?;
    let mel = FeatureStats::fit(
        first.n_mels(),
        samples.iter().flat_map(|s| s.words.iter().flat_map(|w| w.mel.iter_rows())),
    )?;
    let text = FeatureStats::fit(
        first.d_text(),
        samples.iter().flat_map(|s| s.words.iter().map(|w| w.text_vec.as_slice())),
    )?;
    Ok(NormalizationStats { pose, mel, text })
}

pub fn normalize(sample: &Sample, stats: &NormalizationStats) -> Result<Sample> {
    let mut out = sample.clone();
    out.pose = stats.pose.normalize_matrix(&sample.pose, "pose")?;
    for w in &mut out.words {
        w.mel = stats.mel.normalize_matrix(&w.mel, "mel")?;
        if w.text_vec.len() != stats.text.dim() {
            return Err(Error::DimensionMismatch(format!(
                "text width {} != normalization width {}",
                w.text_vec.len(),
                stats.text.dim()
            )));
        }
        stats.text.normalize_row(&mut w.text_vec);
    }
    Ok(out)
}

pub fn denormalize(sample: &Sample, stats: &NormalizationStats) -> Result<Sample> {
    let mut out = sample.clone();
    out.pose = stats.pose.denormalize_matrix(&sample.pose, "pose")?;
    for w in &mut out.words {
        w.mel = stats.mel.denormalize_matrix(&w.mel, "mel")?;
        if w.text_vec.len() != stats.text.dim() {
            return Err(Error::DimensionMismatch(format!(
                "text width {} != normalization width {}",
                w.text_vec.len(),
                stats.text.dim()
            )));
        }
        stats.text.denormalize_row(&mut w.text_vec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats_of(values: &[f64]) -> FeatureStats {
        let rows: Vec<Vec<f64>> = values.iter().map(|v| vec![*v]).collect();
        FeatureStats::fit(1, rows.iter().map(Vec::as_slice)).unwrap()
    }

    #[test]
    fn two_point_feature() {
        let s = stats_of(&[0.0, 2.0]);
        assert_eq!((s.mean[0], s.std[0]), (1.0, 1.0));
        let mut a = [0.0];
        let mut b = [2.0];
        s.normalize_row(&mut a);
        s.normalize_row(&mut b);
        assert_eq!((a[0], b[0]), (-0.5, 0.5));
    }

    #[test]
    fn hand_value() {
        let s = FeatureStats { mean: vec![1.0], std: vec![1.0], degenerate: vec![false] };
        let mut x = [3.0];
        s.normalize_row(&mut x);
        assert_eq!(x[0], 1.0);
        let mut m = [1.0];
        s.normalize_row(&mut m);
        assert_eq!(m[0], 0.0);
    }

    #[test]
    fn constant_feature_is_degenerate() {
        let s = stats_of(&[3.0, 3.0, 3.0]);
        assert!(s.degenerate[0]);
        assert!(s.std[0] > 0.0);
        let mut x = [3.0];
        s.normalize_row(&mut x);
        assert_eq!(x[0], 0.0);
    }

    #[test]
    fn refit_is_idempotent() {
        let s = stats_of(&[-0.5, 0.5]);
        assert!((s.mean[0]).abs() < 1e-15 && (s.std[0] - 0.5).abs() < 1e-15);
        let mut x = [0.3];
        s.normalize_row(&mut x);
        assert!((x[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(fit_normalization(&[]), Err(Error::EmptyDataset)));
    }
}
