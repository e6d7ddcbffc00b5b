//! End-to-end preprocessing: dataset directory → manifest + vocabulary +
//! cached fixed-shape features, and loading those back as [`Dataset`]s.

use std::path::{Path, PathBuf};

use crate::dataio::audio::load_wav;
use crate::dataio::cache::{CacheParams, CachedFeatures, FeatureCache, CACHE_VERSION};
use crate::dataio::corrupt::{corrupt_transcription, word_error_rate, CorruptionSpec};
use crate::dataio::filter::{zero_phase_filter, FilterSpec};
use crate::dataio::manifest::{build_manifest_with_classes, Manifest, Split};
use crate::dataio::mel::{mel_spectrogram, pad_or_truncate_frames, MelSpec};
use crate::dataio::text::{normalize_tokens, tokenize, Vocab};
use crate::dataio::{Dataset, Example, TextData};
use crate::error::{Error, Result};

/// Fixed file layout of a prepared data directory.
#[derive(Clone, Debug)]
pub struct PreparedPaths {
    pub root: PathBuf,
    pub manifest_csv: PathBuf,
    pub classes_txt: PathBuf,
    pub vocab_json: PathBuf,
    pub cache_dir: PathBuf,
}

impl PreparedPaths {
    pub fn new(root: &Path) -> PreparedPaths {
        PreparedPaths {
            root: root.to_path_buf(),
            manifest_csv: root.join("manifest.csv"),
            classes_txt: root.join("classes.txt"),
            vocab_json: root.join("vocab.json"),
            cache_dir: root.join("cache"),
        }
    }
}

/// Knobs for [`prepare_dataset`].
#[derive(Clone, Debug)]
pub struct PrepOptions {
    pub test_fraction: f64,
    pub seed: u64,
    pub mel: MelSpec,
    pub filter: FilterSpec,
    pub l_max: usize,
    pub t_max: usize,
    pub classes: Option<Vec<String>>,
}

impl Default for PrepOptions {
    fn default() -> Self {
        PrepOptions {
            test_fraction: 0.2,
            seed: 0,
            mel: MelSpec::default(),
            filter: FilterSpec::speech_band_default(),
            l_max: 32,
            t_max: 256,
            classes: None,
        }
    }
}

fn clip_features(
    audio_path: &Path,
    opts: &PrepOptions,
) -> Result<crate::autograd::Tensor> {
    let mut clip = load_wav(audio_path)?;
    clip = zero_phase_filter(&clip, &opts.filter)?;
    // very short clips are zero-padded up to one analysis window
    let min_len = opts.mel.stft.win_length;
    if clip.samples.len() < min_len {
        clip.samples.resize(min_len, 0.0);
    }
    let feature = mel_spectrogram(&clip, &opts.mel)?;
    Ok(pad_or_truncate_frames(&feature, opts.t_max, &opts.mel).data)
}

/// Scan `dataset_root`, split, build the vocabulary from *training*
/// transcriptions, extract features for every entry, and write everything
/// under `out_root`. Returns the manifest.
pub fn prepare_dataset(dataset_root: &Path, out_root: &Path, opts: &PrepOptions) -> Result<Manifest> {
    std::fs::create_dir_all(out_root)?;
    let paths = PreparedPaths::new(out_root);
    let manifest = build_manifest_with_classes(
        dataset_root,
        opts.test_fraction,
        opts.seed,
        opts.classes.as_deref(),
    )?;

    let train_sentences: Vec<&str> = manifest
        .split_entries(Split::Train)
        .map(|e| e.transcription.as_str())
        .collect();
    let vocab = Vocab::build(train_sentences.iter().copied());

    let cache = FeatureCache::open(
        &paths.cache_dir,
        CacheParams {
            version: CACHE_VERSION,
            mel: opts.mel.clone(),
            filter: opts.filter.clone(),
            l_max: opts.l_max,
            t_max: opts.t_max,
            vocab_hash: vocab.fingerprint(),
        },
    )?;

    for entry in &manifest.entries {
        if cache.contains(&entry.id) {
            continue;
        }
        let mel = clip_features(&entry.audio_path, opts)?;
        let tf = tokenize(&entry.transcription, &vocab, opts.l_max);
        cache.store(
            &entry.id,
            &CachedFeatures { token_ids: tf.token_ids, length: tf.length, mel },
        )?;
    }

    manifest.write_csv(&paths.manifest_csv)?;
    manifest.write_classes(&paths.classes_txt)?;
    vocab.save(&paths.vocab_json)?;
    Ok(manifest)
}

/// Which transcription text feeds the model.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TextSource {
    /// The transcription as recorded.
    Accurate,
    /// The transcription passed through seeded random word errors.
    Corrupted { spec: CorruptionSpec },
}

fn example_for(
    entry: &crate::dataio::manifest::ManifestEntry,
    cache: &FeatureCache,
    vocab: &Vocab,
    vocab_words: &[String],
    l_max: usize,
    source: &TextSource,
) -> Result<Example> {
    let cached = cache.load(&entry.id)?;
    let text = match source {
        TextSource::Accurate => TextData::Tokens { ids: cached.token_ids, length: cached.length },
        TextSource::Corrupted { spec } => {
            let corrupted = corrupt_transcription(&entry.transcription, spec, vocab_words);
            let tf = tokenize(&corrupted, vocab, l_max);
            TextData::Tokens { ids: tf.token_ids, length: tf.length }
        }
    };
    Ok(Example { text, mel: cached.mel, label: entry.label })
}

/// Load a prepared directory back into memory.
///
/// `train_text` / `test_text` choose accurate or corrupted transcriptions
/// per split, so robustness runs can corrupt only the evaluation side.
pub fn load_dataset_dir(
    out_root: &Path,
    train_text: &TextSource,
    test_text: &TextSource,
) -> Result<(Dataset, Vocab)> {
    let paths = PreparedPaths::new(out_root);
    for p in [&paths.manifest_csv, &paths.classes_txt, &paths.vocab_json] {
        if !p.exists() {
            return Err(Error::Missing(p.clone()));
        }
    }
    let classes = Manifest::read_classes(&paths.classes_txt)?;
    let manifest = Manifest::read_csv(&paths.manifest_csv, classes)?;
    let vocab = Vocab::load(&paths.vocab_json)?;
    let params_json = paths.cache_dir.join("params.json");
    if !params_json.exists() {
        return Err(Error::Missing(params_json));
    }
    let params: CacheParams = serde_json::from_str(&std::fs::read_to_string(&params_json)?)?;
    if params.vocab_hash != vocab.fingerprint() {
        return Err(Error::Data(format!(
            "cache under {} was built with a different vocabulary; re-run preparation",
            paths.cache_dir.display()
        )));
    }
    let cache = FeatureCache::open(&paths.cache_dir, params)?;
    let vocab_words = vocab.words();

    let mut train = Vec::new();
    let mut test = Vec::new();
    for entry in &manifest.entries {
        let (bucket, source) = match entry.split {
            Split::Train => (&mut train, train_text),
            Split::Test => (&mut test, test_text),
        };
        bucket.push(example_for(entry, &cache, &vocab, &vocab_words, cache.params.l_max, source)?);
    }
    Ok((
        Dataset {
            train,
            test,
            n_classes: manifest.n_classes(),
            class_names: manifest.classes.clone(),
        },
        vocab,
    ))
}

/// Write a per-sentence corruption report (`id,reference,corrupted,wer`)
/// plus the corpus-level rate, for inspecting what a corruption setting does.
pub fn write_corruption_report(
    manifest: &Manifest,
    spec: &CorruptionSpec,
    vocab_words: &[String],
    path: &Path,
) -> Result<f64> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["id", "reference", "corrupted", "wer"])?;
    let mut total_err = 0.0;
    let mut total_words = 0usize;
    for entry in &manifest.entries {
        let reference = normalize_tokens(&entry.transcription).join(" ");
        let corrupted = corrupt_transcription(&entry.transcription, spec, vocab_words);
        let n_ref = normalize_tokens(&reference).len();
        let wer = word_error_rate(&reference, &corrupted);
        w.write_record([&entry.id, &reference, &corrupted, &format!("{wer:.4}")])?;
        total_err += wer * n_ref as f64;
        total_words += n_ref;
    }
    w.flush()?;
    Ok(if total_words == 0 { 0.0 } else { total_err / total_words as f64 })
}
