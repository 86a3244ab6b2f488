//! Word-aligned multimodal intervals: storage formats, manifests,
//! normalization, speaker splits and batching.

pub mod batch;
pub mod interval;
pub mod manifest;
pub mod normalize;
pub mod sample;
pub mod split;

pub use batch::{make_batches, DEFAULT_BATCH_SIZE};
pub use interval::{read_interval, write_interval, IntervalFormat};
pub use manifest::{load_manifest, load_samples, parse_interval, DatasetManifest, FeatureDims, ManifestEntry, Split};
pub use normalize::{denormalize, fit_normalization, normalize, FeatureStats, NormalizationStats};
pub use sample::{Sample, Span, WordFeature};
pub use split::{split_speakers, SpeakerSplits, PATS_SEEN, PATS_UNSEEN};
