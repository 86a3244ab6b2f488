//! Dataset manifest: a `key=value` header block followed by
//! `speaker_id<TAB>split<TAB>relative_path` records.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::interval::read_interval;
use crate::data::sample::{Sample, MIN_MEL_FRAMES};
use crate::error::{Error, Result};

/// Overrides the directory that manifest paths are resolved against.
pub const DATA_ROOT_ENV: &str = "ZSMSTM_DATA_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureDims {
    pub d_text: usize,
    pub n_mels: usize,
    pub joints: usize,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub speaker_id: String,
    pub split: Split,
    /// Relative to the manifest root.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub dims: FeatureDims,
    pub fps: f64,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn speakers(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.speaker_id.as_str()).collect()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn entries_for<'a>(
        &'a self,
        speaker: &'a str,
        split: Option<Split>,
    ) -> impl Iterator<Item = &'a ManifestEntry> + 'a {
        self.entries
            .iter()
            .filter(move |e| e.speaker_id == speaker && split.map_or(true, |s| e.split == s))
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "d_text={}\nn_mels={}\nJ={}\nT={}\nfps={}\n",
            self.dims.d_text, self.dims.n_mels, self.dims.joints, self.dims.frames, self.fps
        );
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\n", e.speaker_id, e.split, e.path.display()));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    /// Parses manifest text; `root` is where relative paths resolve.
    pub fn parse(text: &str, root: PathBuf) -> Result<Self> {
        let mut header = std::collections::BTreeMap::new();
        let mut entries = Vec::new();
        let mut seen_paths = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::MalformedManifest { line: line_no, msg };
            if line.contains('\t') {
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 3 {
                    return Err(bad(format!("expected 3 tab-separated fields, got {}", fields.len())));
                }
                let split = fields[1].parse::<Split>().map_err(bad)?;
                let path = PathBuf::from(fields[2]);
                if fields[0].is_empty() {
                    return Err(bad("empty speaker id".into()));
                }
                if !seen_paths.insert(path.clone()) {
                    return Err(bad(format!("interval {} listed twice", path.display())));
                }
                entries.push(ManifestEntry { speaker_id: fields[0].to_string(), split, path });
            } else if let Some((k, v)) = line.split_once('=') {
                if !entries.is_empty() {
                    return Err(bad("header line after records".into()));
                }
                header.insert(k.trim().to_string(), (v.trim().to_string(), line_no));
            } else {
                return Err(bad(format!("unrecognized line {line:?}")));
            }
        }
        let get = |key: &str| -> Result<(String, usize)> {
            header.get(key).cloned().ok_or_else(|| Error::MalformedManifest {
                line: 0,
                msg: format!("missing header {key}="),
            })
        };
        let positive = |key: &str| -> Result<usize> {
            let (v, line) = get(key)?;
            match v.parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(Error::DimensionMismatch(format!("line {line}: {key}={v} must be a positive integer"))),
            }
        };
        let dims = FeatureDims {
            d_text: positive("d_text")?,
            n_mels: positive("n_mels")?,
            joints: positive("J")?,
            frames: positive("T")?,
        };
        let (fps_text, fps_line) = get("fps")?;
        let fps = fps_text
            .parse::<f64>()
            .ok()
            .filter(|f| f.is_finite() && *f > 0.0)
            .ok_or(Error::MalformedManifest { line: fps_line, msg: format!("bad fps {fps_text:?}") })?;
        Ok(Self { root, dims, fps, entries })
    }
}

/// Reads and validates a manifest.
///
/// Every referenced interval must exist; the first one is parsed to confirm
/// that its dimensions agree with the header.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let root = match std::env::var_os(DATA_ROOT_ENV) {
        Some(r) if !r.is_empty() => PathBuf::from(r),
        _ => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let manifest = DatasetManifest::parse(&text, root)?;
    for e in &manifest.entries {
        let p = manifest.resolve(e);
        if !p.is_file() {
            return Err(Error::MissingFile(p));
        }
    }
    if let Some(first) = manifest.entries.first() {
        parse_interval(&manifest.resolve(first), &manifest)?;
    }
    Ok(manifest)
}

/// Reads one interval and checks it against the manifest and all sample invariants.
pub fn parse_interval(path: &Path, manifest: &DatasetManifest) -> Result<Sample> {
    let s = read_interval(path)?;
    let d = &manifest.dims;
    let ctx = path.display();
    if s.d_text() != d.d_text || s.n_mels() != d.n_mels {
        return Err(Error::DimensionMismatch(format!(
            "{ctx}: features ({}, {}) but manifest declares ({}, {})",
            s.d_text(),
            s.n_mels(),
            d.d_text,
            d.n_mels
        )));
    }
    if s.joints() != d.joints || s.frames() != d.frames {
        return Err(Error::DimensionMismatch(format!(
            "{ctx}: pose {}x{} but manifest declares T={} J={}",
            s.frames(),
            s.pose.cols(),
            d.frames,
            d.joints
        )));
    }
    if s.fps != manifest.fps {
        return Err(Error::DimensionMismatch(format!("{ctx}: fps {} != manifest {}", s.fps, manifest.fps)));
    }
    s.validate(MIN_MEL_FRAMES)?;
    Ok(s)
}

/// Loads every interval of the given entries, in order.
pub fn load_samples<'a>(
    manifest: &DatasetManifest,
    entries: impl IntoIterator<Item = &'a ManifestEntry>,
) -> Result<Vec<Sample>> {
    entries.into_iter().map(|e| parse_interval(&manifest.resolve(e), manifest)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "d_text=768\nn_mels=128\nJ=10\nT=64\nfps=15\n\
        a\ttrain\ta/0.zsi\na\ttest\ta/1.zsi\nb\tvalid\tb/0.zsi\n";

    #[test]
    fn parses_header_and_records() {
        let m = DatasetManifest::parse(TEXT, PathBuf::from("/d")).unwrap();
        assert_eq!((m.dims.d_text, m.dims.n_mels), (768, 128));
        assert_eq!(m.speakers().len(), 2);
        assert_eq!(m.entries[1].split, Split::Test);
        assert_eq!(m.resolve(&m.entries[2]), PathBuf::from("/d/b/0.zsi"));
        let again = DatasetManifest::parse(&m.render(), PathBuf::from("/d")).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn reports_line_numbers() {
        let text = TEXT.replace("b\tvalid", "b\tholdout");
        match DatasetManifest::parse(&text, PathBuf::new()) {
            Err(Error::MalformedManifest { line, .. }) => assert_eq!(line, 8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_dimension_is_mismatch() {
        let text = TEXT.replace("n_mels=128", "n_mels=0");
        assert!(matches!(DatasetManifest::parse(&text, PathBuf::new()), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn duplicate_interval_is_rejected() {
        let text = format!("{TEXT}b\ttest\ta/0.zsi\n");
        assert!(matches!(DatasetManifest::parse(&text, PathBuf::new()), Err(Error::MalformedManifest { .. })));
    }
}
