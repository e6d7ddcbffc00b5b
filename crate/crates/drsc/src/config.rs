//! Run configuration: everything that determines a training/evaluation run,
//! serializable as JSON, overridable from the command line, and hashable so
//! checkpoints can detect configuration drift.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::dataio::{CorruptionSpec, SyntheticSpec, TextSource};
use crate::error::{Error, Result};

/// Distance used by the reconstruction-style losses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceCriterion {
    L1,
    L2,
    Cosine,
}

impl std::str::FromStr for DistanceCriterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(DistanceCriterion::L1),
            "l2" => Ok(DistanceCriterion::L2),
            "cosine" | "cos" => Ok(DistanceCriterion::Cosine),
            other => Err(Error::Config(format!(
                "unknown distance criterion {other:?} (expected l1, l2, or cosine)"
            ))),
        }
    }
}

impl std::fmt::Display for DistanceCriterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DistanceCriterion::L1 => "l1",
            DistanceCriterion::L2 => "l2",
            DistanceCriterion::Cosine => "cosine",
        })
    }
}

/// Per-term loss weights. The last three form the "additional" group that
/// the ablation study switches off.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub cycle: f64,
    pub distribution: f64,
    pub classification: f64,
    pub kl: f64,
    pub latent_regression: f64,
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            cycle: 1.0,
            distribution: 1.0,
            classification: 1.0,
            kl: 1.0,
            latent_regression: 1.0,
            adversarial: 1.0,
        }
    }
}

impl LossWeights {
    /// All six terms at weight 1.
    pub fn full() -> Self {
        Self::default()
    }

    /// Core three terms only: KL, latent-regression, and adversarial weights
    /// set to zero.
    pub fn without_additional() -> Self {
        LossWeights { kl: 0.0, latent_regression: 0.0, adversarial: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("cycle", self.cycle),
            ("distribution", self.distribution),
            ("classification", self.classification),
            ("kl", self.kl),
            ("latent_regression", self.latent_regression),
            ("adversarial", self.adversarial),
        ];
        for (name, v) in all {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("loss weight {name} must be ≥ 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which classifier to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Drsc,
    TxtOnly,
    MelOnly,
    Combined,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "drsc" => Ok(Method::Drsc),
            "txt_only" | "txt-only" | "txt" => Ok(Method::TxtOnly),
            "mel_only" | "mel-only" | "mel" => Ok(Method::MelOnly),
            "combined" => Ok(Method::Combined),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected drsc, txt_only, mel_only, or combined)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Drsc => "drsc",
            Method::TxtOnly => "txt_only",
            Method::MelOnly => "mel_only",
            Method::Combined => "combined",
        })
    }
}

/// Where examples come from.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataConfig {
    /// A directory produced by the preparation step (manifest + vocabulary +
    /// feature cache).
    Prepared { dir: PathBuf },
    /// Generated two-view data with known latent structure.
    Synthetic { spec: SyntheticSpec },
}

/// Network dimensions. Defaults are the full-scale model; tests shrink them.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub n_classes: usize,
    /// Vocabulary size for the trainable text embedding; 0 means the text
    /// view arrives as a continuous grid and no embedding is used.
    pub vocab_size: usize,
    /// Text embedding dimension (= text grid channel count when vocab_size
    /// is 0).
    pub d_txt: usize,
    pub l_max: usize,
    pub n_mels: usize,
    pub t_max: usize,
    /// Total output channels of each encoder's convolution bank.
    pub channels: usize,
    pub conv_bank_kernels: Vec<usize>,
    pub n_res_blocks: usize,
    /// Channels of the per-position content map.
    pub d_content: usize,
    /// Dimension of the pooled intent vector (shared across domains).
    pub d_intent: usize,
    pub intent_hidden: usize,
    pub fusion_hidden: usize,
    pub disc_channels: usize,
    pub disc_layers: usize,
    /// Mel grids enter the network as (value + mel_shift) * mel_scale.
    pub mel_shift: f64,
    pub mel_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_classes: 25,
            vocab_size: 0,
            d_txt: 256,
            l_max: 32,
            n_mels: 256,
            t_max: 256,
            channels: 128,
            conv_bank_kernels: (1..=8).collect(),
            n_res_blocks: 3,
            d_content: 64,
            d_intent: 128,
            intent_hidden: 128,
            fusion_hidden: 128,
            disc_channels: 64,
            disc_layers: 4,
            mel_shift: 11.5,
            mel_scale: 0.125,
        }
    }
}

impl ModelConfig {
    /// A deliberately tiny model for fast tests and gradient checks.
    pub fn toy(n_classes: usize) -> Self {
        ModelConfig {
            n_classes,
            vocab_size: 0,
            d_txt: 6,
            l_max: 5,
            n_mels: 7,
            t_max: 6,
            channels: 8,
            conv_bank_kernels: vec![1, 3],
            n_res_blocks: 1,
            d_content: 3,
            d_intent: 4,
            intent_hidden: 5,
            fusion_hidden: 6,
            disc_channels: 4,
            disc_layers: 2,
            mel_shift: 0.0,
            mel_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(Error::Config("n_classes must be positive".into()));
        }
        if self.channels == 0 || self.conv_bank_kernels.is_empty() {
            return Err(Error::Config("encoder needs channels and at least one kernel".into()));
        }
        if self.channels % self.conv_bank_kernels.len() != 0 {
            return Err(Error::Config(format!(
                "channels ({}) must divide evenly across {} bank kernels",
                self.channels,
                self.conv_bank_kernels.len()
            )));
        }
        if self.d_txt == 0 || self.n_mels == 0 || self.l_max == 0 || self.t_max == 0 {
            return Err(Error::Config("feature dimensions must be positive".into()));
        }
        if self.d_content == 0 || self.d_intent == 0 {
            return Err(Error::Config("latent dimensions must be positive".into()));
        }
        if self.disc_layers == 0 {
            return Err(Error::Config("discriminator needs at least one layer".into()));
        }
        // each stride-2 discriminator layer maps t → (t-2)/2 + 1 and needs
        // t ≥ 2, so the input length must survive disc_layers halvings
        let min_len = {
            let mut t = 1usize;
            for _ in 0..self.disc_layers {
                t = (t - 1) * 2 + 2;
            }
            t
        };
        if self.l_max < min_len || self.t_max < min_len {
            return Err(Error::Config(format!(
                "{} discriminator layers need sequence lengths ≥ {min_len}, got l_max={} t_max={}",
                self.disc_layers, self.l_max, self.t_max
            )));
        }
        if self.mel_scale == 0.0 {
            return Err(Error::Config("mel_scale must be nonzero".into()));
        }
        Ok(())
    }
}

/// Optimization knobs.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub d_steps_per_g_step: usize,
    pub grad_clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 16,
            dropout: 0.1,
            max_epochs: 50,
            seed: 0,
            d_steps_per_g_step: 1,
            grad_clip_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, v, lo, hi) in
            [("beta1", self.beta1, 0.0, 1.0), ("beta2", self.beta2, 0.0, 1.0), ("dropout", self.dropout, 0.0, 1.0)]
        {
            if !(v.is_finite() && v >= lo && v < hi) {
                return Err(Error::Config(format!("{name} must lie in [{lo}, {hi}), got {v}")));
            }
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.d_steps_per_g_step == 0 {
            return Err(Error::Config("batch_size, max_epochs, d_steps_per_g_step must be positive".into()));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!("grad_clip_norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// The complete, resolved description of one run.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub criterion: DistanceCriterion,
    pub weights: LossWeights,
    pub train_text: TextSource,
    pub eval_text: TextSource,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Drsc,
            data: DataConfig::Synthetic { spec: SyntheticSpec::default() },
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            criterion: DistanceCriterion::L1,
            weights: LossWeights::default(),
            train_text: TextSource::Accurate,
            eval_text: TextSource::Accurate,
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.weights.validate()?;
        if let TextSource::Corrupted { spec } = &self.train_text {
            spec.validate()?;
        }
        if let TextSource::Corrupted { spec } = &self.eval_text {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::Missing(path.to_path_buf()))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?)
    }

    /// Content hash of the serialized configuration. Stored in checkpoints
    /// so a resume against a drifted configuration is caught.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Convenience: a corruption source at the given target rate.
    pub fn corrupted_text(target_wer: f64) -> TextSource {
        TextSource::Corrupted { spec: CorruptionSpec::with_target(target_wer) }
    }
}

/// Apply `key=value` overrides with dotted paths into the JSON form of the
/// config, e.g. `train.lr=0.001`, `criterion="l2"`, `weights.kl=0`.
/// Values parse as JSON when possible, otherwise as bare strings.
pub fn apply_overrides(config: &RunConfig, overrides: &[String]) -> Result<RunConfig> {
    let mut value = serde_json::to_value(config)?;
    for item in overrides {
        let Some((path, raw)) = item.split_once('=') else {
            return Err(Error::Config(format!("override {item:?} is not key=value")));
        };
        let parsed: serde_json::Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        let mut cursor = &mut value;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let map = cursor.as_object_mut().ok_or_else(|| {
                Error::Config(format!("override path {path:?}: {part:?} is not an object"))
            })?;
            if i + 1 == parts.len() {
                if !map.contains_key(*part) {
                    return Err(Error::Config(format!(
                        "override path {path:?}: no such key {part:?}"
                    )));
                }
                map.insert((*part).to_string(), parsed);
                break;
            }
            cursor = map.get_mut(*part).ok_or_else(|| {
                Error::Config(format!("override path {path:?}: no such key {part:?}"))
            })?;
        }
    }
    let cfg: RunConfig = serde_json::from_value(value)
        .map_err(|e| Error::Config(format!("override produced invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_is_exact() {
        let cfg = RunConfig {
            criterion: DistanceCriterion::Cosine,
            weights: LossWeights::without_additional(),
            eval_text: RunConfig::corrupted_text(0.26),
            ..RunConfig::default()
        };
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        let cfg = RunConfig::default();
        cfg.save(&path).unwrap();
        assert_eq!(RunConfig::load(&path).unwrap(), cfg);
    }

    #[test]
    fn hash_changes_with_any_field() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.train.lr = 2e-4;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.weights.kl = 0.0;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = RunConfig::default();
        let out = apply_overrides(
            &cfg,
            &[
                "train.lr=0.001".into(),
                "criterion=\"l2\"".into(),
                "weights.kl=0".into(),
                "method=\"combined\"".into(),
                "train.grad_clip_norm=null".into(),
            ],
        )
        .unwrap();
        assert_eq!(out.train.lr, 0.001);
        assert_eq!(out.criterion, DistanceCriterion::L2);
        assert_eq!(out.weights.kl, 0.0);
        assert_eq!(out.method, Method::Combined);
        assert_eq!(out.train.grad_clip_norm, None);
    }

    #[test]
    fn unquoted_enum_override_also_works() {
        // bare words fail JSON parsing and fall back to strings
        let out = apply_overrides(&RunConfig::default(), &["criterion=cosine".into()]).unwrap();
        assert_eq!(out.criterion, DistanceCriterion::Cosine);
    }

    #[test]
    fn bad_override_paths_rejected() {
        let cfg = RunConfig::default();
        assert!(apply_overrides(&cfg, &["train.does_not_exist=1".into()]).is_err());
        assert!(apply_overrides(&cfg, &["no_equals_sign".into()]).is_err());
        assert!(apply_overrides(&cfg, &["train.lr=-5".into()]).is_err(), "validation runs");
    }

    #[test]
    fn validation_catches_bad_dimensions() {
        let mut cfg = RunConfig::default();
        cfg.model.channels = 127; // not divisible by 8 kernels
        assert!(cfg.validate().is_err());
        cfg.model.channels = 128;
        cfg.train.dropout = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn method_and_criterion_parse_from_cli_names() {
        for (s, m) in [
            ("drsc", Method::Drsc),
            ("txt_only", Method::TxtOnly),
            ("mel_only", Method::MelOnly),
            ("combined", Method::Combined),
        ] {
            assert_eq!(s.parse::<Method>().unwrap(), m);
            assert_eq!(m.to_string(), s);
        }
        assert!("banana".parse::<Method>().is_err());
        assert_eq!("L1".parse::<DistanceCriterion>().unwrap(), DistanceCriterion::L1);
    }
}
