//! Data loading and preprocessing: audio in, fixed-shape feature pairs out.

pub mod audio;
pub mod cache;
pub mod corrupt;
pub mod filter;
pub mod manifest;
pub mod mel;
pub mod pipeline;
pub mod synthetic;
pub mod text;

pub use audio::{load_wav, resample, AudioClip, TARGET_SAMPLE_RATE};
pub use cache::{CacheParams, CachedFeatures, FeatureCache, CACHE_VERSION};
pub use corrupt::{corrupt_transcription, word_error_rate, CorruptionSpec};
pub use filter::{butter_bandpass, butter_lowpass, zero_phase_filter, FilterSpec};
pub use manifest::{build_manifest, stratified_split, Manifest, ManifestEntry, Split};
pub use mel::{mel_spectrogram, MelSpec, StftSpec};
pub use pipeline::{
    load_dataset_dir, prepare_dataset, write_corruption_report, PrepOptions, PreparedPaths,
    TextSource,
};
pub use synthetic::{
    generate as generate_synthetic, make_synthetic_dataset, SyntheticDataset, SyntheticSpec,
};
pub use text::{normalize_tokens, tokenize, TextFeature, Vocab, PAD_ID, UNK_ID};

use crate::autograd::Tensor;

/// Text-side input for one example: either token ids from a vocabulary
/// (embedded by the model) or an already-continuous grid.
#[derive(Clone, Debug, PartialEq)]
pub enum TextData {
    Tokens { ids: Vec<usize>, length: usize },
    Grid(Tensor),
}

/// One example ready for batching.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub text: TextData,
    pub mel: Tensor,
    pub label: usize,
}

/// An in-memory dataset with a fixed train/test split.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub test: Vec<Example>,
    pub n_classes: usize,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn from_synthetic(ds: &SyntheticDataset) -> Dataset {
        let convert = |items: &[synthetic::SyntheticItem]| {
            items
                .iter()
                .map(|it| Example {
                    text: TextData::Grid(it.text.clone()),
                    mel: it.mel.clone(),
                    label: it.label,
                })
                .collect()
        };
        Dataset {
            train: convert(&ds.train),
            test: convert(&ds.test),
            n_classes: ds.spec.n_classes,
            class_names: (0..ds.spec.n_classes).map(|c| format!("class_{c}")).collect(),
        }
    }
}
