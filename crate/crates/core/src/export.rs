//! BODY25-compatible pose export (OpenPose JSON per frame, one CSV per sequence).
//!
//! Only the upper-body joints the model generates are filled in; every other
//! keypoint is written as `(0, 0, 0)`. Generated joints get confidence 1.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const BODY25_JOINTS: usize = 25;

pub const BODY25_NAMES: [&str; BODY25_JOINTS] = [
    "nose", "neck", "rshoulder", "relbow", "rwrist", "lshoulder", "lelbow", "lwrist", "midhip", "rhip",
    "rknee", "rankle", "lhip", "lknee", "lankle", "reye", "leye", "rear", "lear", "lbigtoe",
    "lsmalltoe", "lheel", "rbigtoe", "rsmalltoe", "rheel",
];

/// nose, neck, r-shoulder, r-elbow, r-wrist, l-shoulder, l-elbow, l-wrist, r-eye, l-eye.
pub const DEFAULT_JOINT_MAP: [usize; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 15, 16];

pub const DEFAULT_RESOLUTION: (u32, u32) = (1920, 1080);

/// 25 `(x, y, confidence)` keypoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Body25Frame {
    pub keypoints: [[f64; 3]; BODY25_JOINTS],
}

impl Default for Body25Frame {
    fn default() -> Self {
        Self { keypoints: [[0.0; 3]; BODY25_JOINTS] }
    }
}

impl Body25Frame {
    /// Flat `x0, y0, c0, x1, ...` layout (75 values).
    pub fn flat(&self) -> Vec<f64> {
        self.keypoints.iter().flatten().copied().collect()
    }

    /// Coordinates multiplied by `(width, height)`; confidences and unmapped zeros unchanged.
    pub fn scaled(&self, width: f64, height: f64) -> Self {
        let mut out = *self;
        for k in out.keypoints.iter_mut() {
            k[0] *= width;
            k[1] *= height;
        }
        out
    }

    /// The `2J` pose values at the mapped indices.
    pub fn extract(&self, joint_map: &[usize]) -> Vec<f64> {
        joint_map.iter().flat_map(|&i| [self.keypoints[i][0], self.keypoints[i][1]]).collect()
    }
}

pub fn check_joint_map(joint_map: &[usize]) -> Result<()> {
    let mut used = [false; BODY25_JOINTS];
    for &i in joint_map {
        if i >= BODY25_JOINTS {
            return Err(Error::BadMapping(format!("index {i} is outside 0..{BODY25_JOINTS}")));
        }
        if std::mem::replace(&mut used[i], true) {
            return Err(Error::BadMapping(format!("index {i} is used twice")));
        }
    }
    Ok(())
}

pub fn map_to_body25(pose_frame: &[f64], joint_map: &[usize]) -> Result<Body25Frame> {
    check_joint_map(joint_map)?;
    if pose_frame.len() != 2 * joint_map.len() {
        return Err(Error::BadMapping(format!(
            "{} pose values for a {}-joint map",
            pose_frame.len(),
            joint_map.len()
        )));
    }
    let mut frame = Body25Frame::default();
    for (p, &i) in pose_frame.chunks_exact(2).zip(joint_map) {
        frame.keypoints[i] = [p[0], p[1], 1.0];
    }
    Ok(frame)
}

/// One frame per pose row.
pub fn map_sequence(pose: &Matrix, joint_map: &[usize]) -> Result<Vec<Body25Frame>> {
    pose.iter_rows().map(|r| map_to_body25(r, joint_map)).collect()
}

pub fn json_file_name(index: usize) -> String {
    format!("frame_{index:06}_keypoints.json")
}

/// OpenPose detection document for one frame.
pub fn frame_json(frame: &Body25Frame) -> String {
    let values: Vec<String> = frame.flat().iter().map(|v| format!("{v:.6}")).collect();
    format!(
        "{{\"version\":1.3,\"people\":[{{\"person_id\":[-1],\"pose_keypoints_2d\":[{}]}}]}}\n",
        values.join(",")
    )
}

/// Writes `frame_000000_keypoints.json`, ... into `dir`; returns the paths.
pub fn write_json(frames: &[Body25Frame], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let path = dir.join(json_file_name(i));
            std::fs::write(&path, frame_json(f)).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

pub fn csv_header() -> String {
    BODY25_NAMES
        .iter()
        .map(|n| format!("2DX_{n},2DY_{n},visible_{n}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// CSV text with coordinates scaled from frame fractions to pixels.
pub fn frames_csv(frames: &[Body25Frame], resolution: (u32, u32)) -> Result<String> {
    let (w, h) = resolution;
    if w == 0 || h == 0 {
        return Err(Error::Config(format!("resolution must be positive, got {w}x{h}")));
    }
    let mut out = csv_header();
    out.push('\n');
    for f in frames {
        let row: Vec<String> = f.scaled(w as f64, h as f64).flat().iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
    Ok(out)
}

pub fn write_csv(frames: &[Body25Frame], path: &Path, resolution: (u32, u32)) -> Result<()> {
    let text = frames_csv(frames, resolution)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses `WIDTHxHEIGHT`.
pub fn parse_resolution(s: &str) -> Result<(u32, u32)> {
    let bad = || Error::Config(format!("resolution must look like 1920x1080, got {s:?}"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let (w, h): (u32, u32) = (w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?);
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

const POSE_TAG: &str = "#zsmstm-pose";

/// Pose CSV: a tag line with the frame rate, a header, then one row per frame.
pub fn pose_csv(pose: &Matrix, fps: f64) -> String {
    let mut out = format!("{POSE_TAG},fps={fps}\n");
    let header: Vec<String> = (0..pose.cols() / 2).flat_map(|j| [format!("j{j}_x"), format!("j{j}_y")]).collect();
    let _ = writeln!(out, "{}", header.join(","));
    for row in pose.iter_rows() {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", vals.join(","));
    }
    out
}

pub fn write_pose(pose: &Matrix, fps: f64, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, pose_csv(pose, fps)).map_err(|e| Error::io(path, e))
}

fn parse_pose_csv(text: &str, path: &Path) -> Result<(Matrix, f64)> {
    let bad = |msg: String| Error::MalformedInterval(format!("{}: {msg}", path.display()));
    let mut lines = text.lines();
    let tag = lines.next().unwrap_or_default();
    let fps = tag
        .strip_prefix(POSE_TAG)
        .and_then(|r| r.strip_prefix(",fps="))
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| bad("missing pose tag line".into()))?;
    let cols = lines.next().ok_or_else(|| bad("missing header".into()))?.split(',').count();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let vals = line
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad(format!("row {i}: bad number {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != cols {
            return Err(bad(format!("row {i} has {} values, header has {cols}", vals.len())));
        }
        data.extend(vals);
        rows += 1;
    }
    if cols % 2 != 0 {
        return Err(bad(format!("{cols} columns is not an (x, y) layout")));
    }
    Ok((Matrix::from_vec(rows, cols, data), fps))
}

/// Reads a pose file or the pose stream of an interval file; returns `(pose, fps)`.
pub fn read_pose(path: &Path) -> Result<(Matrix, f64)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(POSE_TAG.as_bytes()) {
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::MalformedInterval(format!("{} is not UTF-8", path.display())))?;
        return parse_pose_csv(text, path);
    }
    let s = crate::data::interval::decode(&bytes)?;
    Ok((s.pose, s.fps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_map_places_joints() {
        let pose: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let f = map_to_body25(&pose, &DEFAULT_JOINT_MAP).unwrap();
        assert_eq!(f.keypoints[15], [0.8, 0.85, 1.0]);
        for i in (8..=14).chain(19..25) {
            assert_eq!(f.keypoints[i], [0.0; 3]);
        }
        assert_eq!(f.extract(&DEFAULT_JOINT_MAP), pose);
    }

    #[test]
    fn bad_maps() {
        assert!(matches!(check_joint_map(&[0, 25]), Err(Error::BadMapping(_))));
        assert!(matches!(check_joint_map(&[3, 3]), Err(Error::BadMapping(_))));
        assert!(map_to_body25(&[0.0; 4], &[0, 1, 2]).is_err());
    }

    #[test]
    fn pose_file_round_trip() {
        let pose = Matrix::from_fn(3, 4, |r, c| (r as f64 + 0.1) / (c as f64 + 3.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_pose(&pose, 15.0, &path).unwrap();
        assert_eq!(read_pose(&path).unwrap(), (pose, 15.0));
    }

    #[test]
    fn csv_scaling() {
        let f = map_to_body25(&[0.5, 0.5], &[0]).unwrap();
        let text = frames_csv(&[f], DEFAULT_RESOLUTION).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with("960.000000,540.000000,1.000000,0.000000"));
        assert_eq!(row.split(',').count(), 75);
        assert_eq!(parse_resolution("640x480").unwrap(), (640, 480));
        assert!(parse_resolution("0x480").is_err());
    }
}
