//! Seen/unseen speaker partitioning.

use std::collections::BTreeSet;

use crate::data::manifest::{DatasetManifest, ManifestEntry, Split};
use crate::error::{Error, Result};

/// PATS speakers whose train sets form the training data.
pub const PATS_SEEN: [&str; 16] = [
    "Shelly",
    "Jon",
    "Fallon",
    "Bee",
    "Ellen",
    "Oliver",
    "Lec_cosmic",
    "Lec_hist",
    "Seth",
    "Conan",
    "Angelica",
    "Rock",
    "Noah",
    "Ytch_prof",
    "Lec_law",
    "Ytch_dating",
];

/// PATS speakers held out for the zero-shot condition.
pub const PATS_UNSEEN: [&str; 6] = ["Lec_evol", "Almaram", "Huckabee", "Ytch_charisma", "Minhaj", "Chemistry"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpeakerSplits {
    pub train: Vec<ManifestEntry>,
    pub valid: Vec<ManifestEntry>,
    pub seen_test: Vec<ManifestEntry>,
    pub unseen_test: Vec<ManifestEntry>,
}

impl SpeakerSplits {
    pub fn train_speakers(&self) -> BTreeSet<&str> {
        self.train.iter().map(|e| e.speaker_id.as_str()).collect()
    }

    pub fn valid_speakers(&self) -> BTreeSet<&str> {
        self.valid.iter().map(|e| e.speaker_id.as_str()).collect()
    }

    pub fn unseen_speakers(&self) -> BTreeSet<&str> {
        self.unseen_test.iter().map(|e| e.speaker_id.as_str()).collect()
    }
}

/// Seen speakers contribute their manifest train/valid/test entries; unseen
/// speakers contribute only their test entries.
pub fn split_speakers<S: AsRef<str>>(
    manifest: &DatasetManifest,
    seen: &[S],
    unseen: &[S],
) -> Result<SpeakerSplits> {
    let seen: BTreeSet<&str> = seen.iter().map(AsRef::as_ref).collect();
    let unseen: BTreeSet<&str> = unseen.iter().map(AsRef::as_ref).collect();
    let overlap: Vec<String> = seen.intersection(&unseen).map(|s| s.to_string()).collect();
    if !overlap.is_empty() {
        return Err(Error::OverlappingSplits(overlap));
    }
    let known = manifest.speakers();
    if let Some(missing) = seen.iter().chain(unseen.iter()).find(|s| !known.contains(*s)) {
        return Err(Error::UnknownSpeaker(missing.to_string()));
    }
    let mut out = SpeakerSplits::default();
    for e in &manifest.entries {
        let id = e.speaker_id.as_str();
        if seen.contains(id) {
            match e.split {
                Split::Train => out.train.push(e.clone()),
                Split::Valid => out.valid.push(e.clone()),
                Split::Test => out.seen_test.push(e.clone()),
            }
        } else if unseen.contains(id) && e.split == Split::Test {
            out.unseen_test.push(e.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest::FeatureDims;
    use std::path::PathBuf;

    fn manifest(records: &[(&str, Split)]) -> DatasetManifest {
        DatasetManifest {
            root: PathBuf::new(),
            dims: FeatureDims { d_text: 4, n_mels: 16, joints: 2, frames: 8 },
            fps: 15.0,
            entries: records
                .iter()
                .enumerate()
                .map(|(i, (s, split))| ManifestEntry {
                    speaker_id: s.to_string(),
                    split: *split,
                    path: PathBuf::from(format!("{i}.zsi")),
                })
                .collect(),
        }
    }

    #[test]
    fn default_lists_are_disjoint() {
        let seen: BTreeSet<_> = PATS_SEEN.iter().collect();
        assert_eq!(seen.len(), 16);
        assert!(PATS_UNSEEN.iter().all(|u| !seen.contains(u)));
        assert_eq!(PATS_SEEN[0], "Shelly");
        assert_eq!(PATS_SEEN[15], "Ytch_dating");
        assert_eq!(PATS_UNSEEN[0], "Lec_evol");
        assert_eq!(PATS_UNSEEN[5], "Chemistry");
    }

    #[test]
    fn unseen_contribute_test_only() {
        use Split::*;
        let m = manifest(&[("a", Train), ("a", Test), ("b", Train), ("b", Valid), ("c", Train), ("c", Test)]);
        let s = split_speakers(&m, &["a", "b"], &["c"]).unwrap();
        assert_eq!(s.train_speakers().len(), 2);
        assert!(!s.train_speakers().contains("c"));
        assert_eq!(s.unseen_test.len(), 1);
        assert_eq!(s.seen_test.len(), 1);
        assert_eq!(s.valid.len(), 1);
    }

    #[test]
    fn errors() {
        let m = manifest(&[("a", Split::Train)]);
        assert!(matches!(split_speakers(&m, &["a"], &["a"]), Err(Error::OverlappingSplits(_))));
        assert!(matches!(split_speakers(&m, &["a"], &["z"]), Err(Error::UnknownSpeaker(_))));
    }
}
