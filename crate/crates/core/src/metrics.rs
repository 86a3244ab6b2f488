//! Motion expressivity metrics and the source/target distance protocol.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Right and left wrist in the default 10-joint layout.
pub const DEFAULT_WRISTS: [usize; 2] = [4, 7];

/// Mean per-joint norm of the `order`-th finite difference, scaled by `fps^order`.
fn difference_norm(pose: &Matrix, fps: f64, order: usize, joints: &[usize]) -> Result<f64> {
    let frames = pose.rows();
    if frames < order + 1 {
        return Err(Error::TooShort(format!("{frames} frames, order-{order} difference needs {}", order + 1)));
    }
    if joints.is_empty() {
        return Err(Error::BadIndex("no joints selected".into()));
    }
    let binom: Vec<f64> = (0..=order)
        .map(|k| {
            let c = (0..k).fold(1.0, |acc, i| acc * (order - i) as f64 / (i + 1) as f64);
            if (order - k) % 2 == 0 { c } else { -c }
        })
        .collect();
    let scale = fps.powi(order as i32);
    let mut total = 0.0;
    for t in 0..frames - order {
        for &j in joints {
            let (mut dx, mut dy) = (0.0, 0.0);
            for (k, b) in binom.iter().enumerate() {
                let row = pose.row(t + k);
                dx += b * row[2 * j];
                dy += b * row[2 * j + 1];
            }
            total += (dx * dx + dy * dy).sqrt();
        }
    }
    Ok(total * scale / ((frames - order) * joints.len()) as f64)
}

fn all_joints(pose: &Matrix) -> Vec<usize> {
    (0..pose.cols() / 2).collect()
}

pub fn velocity(pose: &Matrix, fps: f64) -> Result<f64> {
    difference_norm(pose, fps, 1, &all_joints(pose))
}

pub fn acceleration(pose: &Matrix, fps: f64) -> Result<f64> {
    difference_norm(pose, fps, 2, &all_joints(pose))
}

pub fn jerk(pose: &Matrix, fps: f64) -> Result<f64> {
    difference_norm(pose, fps, 3, &all_joints(pose))
}

fn check_indices(pose: &Matrix, joints: &[usize]) -> Result<()> {
    let n = pose.cols() / 2;
    match joints.iter().find(|&&j| j >= n) {
        Some(j) => Err(Error::BadIndex(format!("joint {j} out of range for {n} joints"))),
        None => Ok(()),
    }
}

/// `(velocity, acceleration, jerk)` restricted to the given wrist joints.
pub fn wrist_metrics(pose: &Matrix, fps: f64, wrists: &[usize]) -> Result<(f64, f64, f64)> {
    check_indices(pose, wrists)?;
    Ok((
        difference_norm(pose, fps, 1, wrists)?,
        difference_norm(pose, fps, 2, wrists)?,
        difference_norm(pose, fps, 3, wrists)?,
    ))
}

/// Mean over frames of `2·(width + height)` of the box around all joints.
pub fn bbox_perimeter(pose: &Matrix) -> f64 {
    if pose.rows() == 0 {
        return 0.0;
    }
    let total: f64 = pose
        .iter_rows()
        .map(|row| {
            let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for p in row.chunks_exact(2) {
                x0 = x0.min(p[0]);
                x1 = x1.max(p[0]);
                y0 = y0.min(p[1]);
                y1 = y1.max(p[1]);
            }
            2.0 * ((x1 - x0) + (y1 - y0))
        })
        .sum();
    total / pose.rows() as f64
}

pub const METRIC_NAMES: [&str; 7] = [
    "velocity",
    "acceleration",
    "jerk",
    "wrist_velocity",
    "wrist_acceleration",
    "wrist_jerk",
    "bbox_perimeter",
];

/// All expressivity metrics of one sequence (or an average of several).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricSet {
    pub velocity: f64,
    pub acceleration: f64,
    pub jerk: f64,
    pub wrist_velocity: f64,
    pub wrist_acceleration: f64,
    pub wrist_jerk: f64,
    pub bbox_perimeter: f64,
}

impl MetricSet {
    pub fn compute(pose: &Matrix, fps: f64, wrists: &[usize]) -> Result<Self> {
        let (wv, wa, wj) = wrist_metrics(pose, fps, wrists)?;
        Ok(Self {
            velocity: velocity(pose, fps)?,
            acceleration: acceleration(pose, fps)?,
            jerk: jerk(pose, fps)?,
            wrist_velocity: wv,
            wrist_acceleration: wa,
            wrist_jerk: wj,
            bbox_perimeter: bbox_perimeter(pose),
        })
    }

    pub fn values(&self) -> [f64; 7] {
        [
            self.velocity,
            self.acceleration,
            self.jerk,
            self.wrist_velocity,
            self.wrist_acceleration,
            self.wrist_jerk,
            self.bbox_perimeter,
        ]
    }

    pub fn from_values(v: [f64; 7]) -> Self {
        Self {
            velocity: v[0],
            acceleration: v[1],
            jerk: v[2],
            wrist_velocity: v[3],
            wrist_acceleration: v[4],
            wrist_jerk: v[5],
            bbox_perimeter: v[6],
        }
    }

    pub fn mean(sets: &[MetricSet]) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::EmptyInput("no metric sets to average".into()));
        }
        let mut acc = [0.0; 7];
        for s in sets {
            for (a, v) in acc.iter_mut().zip(s.values()) {
                *a += v;
            }
        }
        Ok(Self::from_values(acc.map(|a| a / sets.len() as f64)))
    }
}

/// Per-sequence metrics and their per-speaker averages.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub sequences: Vec<(String, MetricSet)>,
    pub speakers: BTreeMap<String, MetricSet>,
}

impl MetricsReport {
    /// Averages per interval first, then per speaker.
    pub fn from_sequences(sequences: Vec<(String, MetricSet)>) -> Result<Self> {
        let mut groups: BTreeMap<String, Vec<MetricSet>> = BTreeMap::new();
        for (spk, m) in &sequences {
            groups.entry(spk.clone()).or_default().push(*m);
        }
        let speakers = groups.into_iter().map(|(k, v)| Ok((k, MetricSet::mean(&v)?))).collect::<Result<_>>()?;
        Ok(Self { sequences, speakers })
    }

    /// Mean over speakers.
    pub fn overall(&self) -> Result<MetricSet> {
        MetricSet::mean(&self.speakers.values().copied().collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub metric: String,
    pub source_dist: f64,
    pub model_dist: f64,
    pub source_pct: f64,
    pub model_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DistanceReport {
    pub rows: Vec<DistanceRow>,
}

pub const DISTANCE_CSV_HEADER: &str = "metric,source_dist,model_dist,source_pct,model_pct";

impl DistanceReport {
    pub fn row(&self, metric: &str) -> Option<&DistanceRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{DISTANCE_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.9},{:.9},{:.6},{:.6}",
                r.metric, r.source_dist, r.model_dist, r.source_pct, r.model_pct
            );
        }
        out
    }
}

/// Shares of `|source − target|` and `|model − target|` in their sum;
/// 50/50 when both distances are zero.
pub fn distance_split(source: f64, target: f64, model: f64) -> DistanceRow {
    let ds = (source - target).abs();
    let dm = (model - target).abs();
    let sum = ds + dm;
    let (ps, pm) = if sum == 0.0 { (50.0, 50.0) } else { (100.0 * ds / sum, 100.0 * dm / sum) };
    DistanceRow { metric: String::new(), source_dist: ds, model_dist: dm, source_pct: ps, model_pct: pm }
}

pub fn distance_report(source: &MetricSet, target: &MetricSet, model: &MetricSet) -> DistanceReport {
    let rows = METRIC_NAMES
        .iter()
        .zip(source.values().iter().zip(target.values()).zip(model.values()))
        .map(|(name, ((s, t), m))| DistanceRow { metric: name.to_string(), ..distance_split(*s, t, m) })
        .collect();
    DistanceReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_joint(f: impl Fn(f64) -> f64, frames: usize, fps: f64) -> Matrix {
        Matrix::from_fn(frames, 2, |t, c| if c == 0 { f(t as f64 / fps) } else { 0.0 })
    }

    #[test]
    fn finite_difference_identities() {
        let fps = 15.0;
        assert!((velocity(&single_joint(|t| t, 10, fps), fps).unwrap() - 1.0).abs() < 1e-9);
        assert!((acceleration(&single_joint(|t| t * t, 10, fps), fps).unwrap() - 2.0).abs() < 1e-9);
        assert!((jerk(&single_joint(|t| t * t * t, 10, fps), fps).unwrap() - 6.0).abs() < 1e-9);
        let lin = single_joint(|t| 3.0 * t + 1.0, 10, fps);
        assert!(acceleration(&lin, fps).unwrap().abs() < 1e-9);
        assert!(jerk(&lin, fps).unwrap().abs() < 1e-9);
    }

    #[test]
    fn too_short() {
        assert!(matches!(velocity(&Matrix::zeros(1, 2), 15.0), Err(Error::TooShort(_))));
        assert!(matches!(jerk(&Matrix::zeros(3, 2), 15.0), Err(Error::TooShort(_))));
    }

    #[test]
    fn bbox_hand_case() {
        let pose = Matrix::from_fn(4, 4, |_, c| [0.0, 0.0, 1.0, 2.0][c]);
        assert_eq!(bbox_perimeter(&pose), 6.0);
        assert_eq!(bbox_perimeter(&Matrix::filled(3, 4, 0.7)), 0.0);
    }

    #[test]
    fn wrists_only() {
        // joint 0 moves, joint 1 is static
        let pose = Matrix::from_fn(6, 4, |t, c| if c == 0 { t as f64 } else { 0.5 });
        assert_eq!(wrist_metrics(&pose, 10.0, &[1]).unwrap(), (0.0, 0.0, 0.0));
        assert!(velocity(&pose, 10.0).unwrap() > 0.0);
        assert!(matches!(wrist_metrics(&pose, 10.0, &[2]), Err(Error::BadIndex(_))));
    }

    #[test]
    fn distance_cases() {
        let r = distance_split(10.0, 2.0, 4.0);
        assert_eq!((r.source_pct, r.model_pct), (80.0, 20.0));
        let r = distance_split(3.0, 1.0, 1.0);
        assert_eq!((r.source_pct, r.model_pct), (100.0, 0.0));
        let r = distance_split(1.0, 1.0, 1.0);
        assert_eq!((r.source_pct, r.model_pct), (50.0, 50.0));
    }
}
