//! Run configuration: one sectioned TOML file drives every command. A preset
//! ("paper-dims" or "tiny") supplies section defaults; explicit fields
//! override them field by field, and validation runs on the fully expanded
//! result.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::SynthConfig;
use crate::model::ModelConfig;
use crate::training::TrainRunConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config validation error: {0}")]
    Validation(String),
}

/// Where training/eval data comes from; exactly one source.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synth(SynthConfig),
    ManifestDir(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub protocol_seed: u64,
    pub grid_beta_c: Vec<f64>,
    pub grid_beta_s: Vec<f64>,
    pub probe_pairs: usize,
}

impl EvalConfig {
    pub fn defaults() -> Self {
        EvalConfig {
            protocol_seed: 11,
            grid_beta_c: vec![1e-3, 1e-2],
            grid_beta_s: vec![1e-5, 1e-4, 1e-3],
            probe_pairs: 60,
        }
    }
}

/// Fully expanded and validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub model: ModelConfig,
    pub data: DataSource,
    pub train: TrainRunConfig,
    pub eval: EvalConfig,
}

/// A named bundle of section defaults.
pub struct Preset {
    pub model: ModelConfig,
    pub synth: SynthConfig,
    pub train: TrainRunConfig,
    pub eval: EvalConfig,
}

pub fn preset(name: &str) -> Result<Preset, ConfigError> {
    match name {
        "paper-dims" => Ok(Preset {
            model: ModelConfig::paper_dims(),
            synth: SynthConfig::paper_dims(),
            train: TrainRunConfig::defaults(),
            eval: EvalConfig::defaults(),
        }),
        "tiny" => Ok(Preset {
            model: ModelConfig::tiny(),
            synth: SynthConfig::tiny(),
            train: TrainRunConfig {
                beta_c: 1e-2,
                beta_s: 1e-5,
                steps: 4000,
                batch_size: 16,
                crop_len: 64,
                seed: 1,
                checkpoint_every: 0,
                validate_every: 1000,
                log_every: 500,
                learning_rate: 1e-3,
            },
            eval: EvalConfig::defaults(),
        }),
        other => Err(ConfigError::Validation(format!(
            "unknown preset {other:?}; accepted presets: \"paper-dims\", \"tiny\""
        ))),
    }
}

// ---- raw (partial) layer -------------------------------------------------

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    feature_dim: Option<usize>,
    hidden: Option<usize>,
    content_dim: Option<usize>,
    speaker_dim: Option<usize>,
    heads: Option<usize>,
    ffn_dim: Option<usize>,
    down_kernels: Option<Vec<usize>>,
    conv_dropout: Option<f64>,
    postnet_dropout: Option<f64>,
    positional_encoding: Option<bool>,
    attention_identity: Option<bool>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynth {
    speakers_per_language: Option<usize>,
    utterances_per_speaker: Option<usize>,
    valid_speakers_per_language: Option<usize>,
    test_speakers_per_language: Option<usize>,
    frame_len_range: Option<(usize, usize)>,
    feature_dim: Option<usize>,
    content_factors: Option<usize>,
    speaker_factors: Option<usize>,
    token_base_a: Option<usize>,
    tokens_a: Option<usize>,
    token_base_b: Option<usize>,
    tokens_b: Option<usize>,
    token_hold_range: Option<(usize, usize)>,
    noise_sigma: Option<f64>,
    mixing_seed: Option<u64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    synth: Option<RawSynth>,
    manifest_dir: Option<String>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    beta_c: Option<f64>,
    beta_s: Option<f64>,
    steps: Option<u64>,
    batch_size: Option<usize>,
    crop_len: Option<usize>,
    seed: Option<u64>,
    checkpoint_every: Option<u64>,
    validate_every: Option<u64>,
    log_every: Option<u64>,
    learning_rate: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEval {
    protocol_seed: Option<u64>,
    grid_beta_c: Option<Vec<f64>>,
    grid_beta_s: Option<Vec<f64>>,
    probe_pairs: Option<usize>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    model: Option<RawModel>,
    data: Option<RawData>,
    train: Option<RawTrain>,
    eval: Option<RawEval>,
}

fn merge_model(base: ModelConfig, raw: &RawModel) -> ModelConfig {
    ModelConfig {
        feature_dim: raw.feature_dim.unwrap_or(base.feature_dim),
        hidden: raw.hidden.unwrap_or(base.hidden),
        content_dim: raw.content_dim.unwrap_or(base.content_dim),
        speaker_dim: raw.speaker_dim.unwrap_or(base.speaker_dim),
        heads: raw.heads.unwrap_or(base.heads),
        ffn_dim: raw.ffn_dim.unwrap_or(base.ffn_dim),
        down_kernels: raw.down_kernels.clone().unwrap_or(base.down_kernels),
        conv_dropout: raw.conv_dropout.unwrap_or(base.conv_dropout),
        postnet_dropout: raw.postnet_dropout.unwrap_or(base.postnet_dropout),
        positional_encoding: raw.positional_encoding.unwrap_or(base.positional_encoding),
        attention_identity: raw.attention_identity.unwrap_or(base.attention_identity),
    }
}

fn merge_synth(base: SynthConfig, raw: &RawSynth) -> SynthConfig {
    SynthConfig {
        speakers_per_language: raw.speakers_per_language.unwrap_or(base.speakers_per_language),
        utterances_per_speaker: raw
            .utterances_per_speaker
            .unwrap_or(base.utterances_per_speaker),
        valid_speakers_per_language: raw
            .valid_speakers_per_language
            .unwrap_or(base.valid_speakers_per_language),
        test_speakers_per_language: raw
            .test_speakers_per_language
            .unwrap_or(base.test_speakers_per_language),
        frame_len_range: raw.frame_len_range.unwrap_or(base.frame_len_range),
        feature_dim: raw.feature_dim.unwrap_or(base.feature_dim),
        content_factors: raw.content_factors.unwrap_or(base.content_factors),
        speaker_factors: raw.speaker_factors.unwrap_or(base.speaker_factors),
        token_base_a: raw.token_base_a.unwrap_or(base.token_base_a),
        tokens_a: raw.tokens_a.unwrap_or(base.tokens_a),
        token_base_b: raw.token_base_b.unwrap_or(base.token_base_b),
        tokens_b: raw.tokens_b.unwrap_or(base.tokens_b),
        token_hold_range: raw.token_hold_range.unwrap_or(base.token_hold_range),
        noise_sigma: raw.noise_sigma.unwrap_or(base.noise_sigma),
        mixing_seed: raw.mixing_seed.unwrap_or(base.mixing_seed),
    }
}

fn merge_train(base: TrainRunConfig, raw: &RawTrain) -> TrainRunConfig {
    TrainRunConfig {
        beta_c: raw.beta_c.unwrap_or(base.beta_c),
        beta_s: raw.beta_s.unwrap_or(base.beta_s),
        steps: raw.steps.unwrap_or(base.steps),
        batch_size: raw.batch_size.unwrap_or(base.batch_size),
        crop_len: raw.crop_len.unwrap_or(base.crop_len),
        seed: raw.seed.unwrap_or(base.seed),
        checkpoint_every: raw.checkpoint_every.unwrap_or(base.checkpoint_every),
        validate_every: raw.validate_every.unwrap_or(base.validate_every),
        log_every: raw.log_every.unwrap_or(base.log_every),
        learning_rate: raw.learning_rate.unwrap_or(base.learning_rate),
    }
}

fn merge_eval(base: EvalConfig, raw: &RawEval) -> EvalConfig {
    EvalConfig {
        protocol_seed: raw.protocol_seed.unwrap_or(base.protocol_seed),
        grid_beta_c: raw.grid_beta_c.clone().unwrap_or(base.grid_beta_c),
        grid_beta_s: raw.grid_beta_s.clone().unwrap_or(base.grid_beta_s),
        probe_pairs: raw.probe_pairs.unwrap_or(base.probe_pairs),
    }
}

/// Load and expand a configuration. `preset_override` (from the command line)
/// wins over the file's `preset` key; `seed_override` replaces the training
/// seed and the protocol seed.
pub fn load_run_config(
    path: Option<&Path>,
    preset_override: Option<&str>,
    seed_override: Option<u64>,
) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
        }
        None => RawConfig::default(),
    };
    let preset_name = preset_override
        .map(str::to_string)
        .or_else(|| raw.preset.clone());
    let Some(preset_name) = preset_name else {
        return Err(ConfigError::Validation(
            "no preset named and no --preset given; set preset = \"tiny\" or \"paper-dims\"".into(),
        ));
    };
    let base = preset(&preset_name)?;

    let model = merge_model(base.model, &raw.model.clone().unwrap_or_default());
    let raw_data = raw.data.clone().unwrap_or_default();
    let data = match (&raw_data.synth, &raw_data.manifest_dir) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::Validation(
                "exactly one data source allowed: [data.synth] or data.manifest_dir".into(),
            ));
        }
        (None, Some(dir)) => DataSource::ManifestDir(PathBuf::from(dir)),
        (synth, None) => DataSource::Synth(merge_synth(
            base.synth,
            &synth.clone().unwrap_or_default(),
        )),
    };
    let mut train = merge_train(base.train, &raw.train.clone().unwrap_or_default());
    let mut eval = merge_eval(base.eval, &raw.eval.clone().unwrap_or_default());
    if let Some(seed) = seed_override {
        train.seed = seed;
        eval.protocol_seed = seed;
    }

    let cfg = RunConfig {
        preset: Some(preset_name),
        model,
        data,
        train,
        eval,
    };
    validate(&cfg)?;
    Ok(cfg)
}

pub fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    cfg.model
        .validate()
        .map_err(|e| ConfigError::Validation(e.to_string()))?;
    cfg.train
        .validate()
        .map_err(|e| ConfigError::Validation(e.to_string()))?;
    if cfg.train.crop_len < cfg.model.min_speaker_frames() {
        return Err(ConfigError::Validation(format!(
            "train.crop_len {} is below the speaker encoder minimum {} (one frame must survive {} time halvings)",
            cfg.train.crop_len,
            cfg.model.min_speaker_frames(),
            cfg.model.down_kernels.len()
        )));
    }
    if cfg.train.crop_len < crate::data::MIN_SHUFFLE_FRAMES {
        return Err(ConfigError::Validation(format!(
            "train.crop_len {} is below the segment-shuffle minimum {}",
            cfg.train.crop_len,
            crate::data::MIN_SHUFFLE_FRAMES
        )));
    }
    if let DataSource::Synth(s) = &cfg.data {
        s.validate()
            .map_err(|e| ConfigError::Validation(e.to_string()))?;
        if s.feature_dim != cfg.model.feature_dim {
            return Err(ConfigError::Validation(format!(
                "data.synth.feature_dim {} does not match model.feature_dim {}",
                s.feature_dim, cfg.model.feature_dim
            )));
        }
        if s.frame_len_range.0 < cfg.train.crop_len {
            return Err(ConfigError::Validation(format!(
                "generated utterances can be as short as {} frames but train.crop_len is {}",
                s.frame_len_range.0, cfg.train.crop_len
            )));
        }
    }
    if cfg.eval.grid_beta_c.is_empty() || cfg.eval.grid_beta_s.is_empty() {
        return Err(ConfigError::Validation(
            "eval grids must be non-empty".into(),
        ));
    }
    for &b in cfg.eval.grid_beta_c.iter().chain(&cfg.eval.grid_beta_s) {
        if b < 0.0 {
            return Err(ConfigError::Validation(format!(
                "grid weights must be >= 0, got {b}"
            )));
        }
    }
    if cfg.eval.probe_pairs == 0 {
        return Err(ConfigError::Validation("probe_pairs must be positive".into()));
    }
    Ok(())
}

/// Serialize the fully expanded configuration back to TOML for echoing into
/// output directories.
pub fn to_resolved_toml(cfg: &RunConfig) -> String {
    let raw = RawConfig {
        preset: cfg.preset.clone(),
        model: Some(RawModel {
            feature_dim: Some(cfg.model.feature_dim),
            hidden: Some(cfg.model.hidden),
            content_dim: Some(cfg.model.content_dim),
            speaker_dim: Some(cfg.model.speaker_dim),
            heads: Some(cfg.model.heads),
            ffn_dim: Some(cfg.model.ffn_dim),
            down_kernels: Some(cfg.model.down_kernels.clone()),
            conv_dropout: Some(cfg.model.conv_dropout),
            postnet_dropout: Some(cfg.model.postnet_dropout),
            positional_encoding: Some(cfg.model.positional_encoding),
            attention_identity: Some(cfg.model.attention_identity),
        }),
        data: Some(match &cfg.data {
            DataSource::ManifestDir(d) => RawData {
                synth: None,
                manifest_dir: Some(d.display().to_string()),
            },
            DataSource::Synth(s) => RawData {
                synth: Some(RawSynth {
                    speakers_per_language: Some(s.speakers_per_language),
                    utterances_per_speaker: Some(s.utterances_per_speaker),
                    valid_speakers_per_language: Some(s.valid_speakers_per_language),
                    test_speakers_per_language: Some(s.test_speakers_per_language),
                    frame_len_range: Some(s.frame_len_range),
                    feature_dim: Some(s.feature_dim),
                    content_factors: Some(s.content_factors),
                    speaker_factors: Some(s.speaker_factors),
                    token_base_a: Some(s.token_base_a),
                    tokens_a: Some(s.tokens_a),
                    token_base_b: Some(s.token_base_b),
                    tokens_b: Some(s.tokens_b),
                    token_hold_range: Some(s.token_hold_range),
                    noise_sigma: Some(s.noise_sigma),
                    mixing_seed: Some(s.mixing_seed),
                }),
                manifest_dir: None,
            },
        }),
        train: Some(RawTrain {
            beta_c: Some(cfg.train.beta_c),
            beta_s: Some(cfg.train.beta_s),
            steps: Some(cfg.train.steps),
            batch_size: Some(cfg.train.batch_size),
            crop_len: Some(cfg.train.crop_len),
            seed: Some(cfg.train.seed),
            checkpoint_every: Some(cfg.train.checkpoint_every),
            validate_every: Some(cfg.train.validate_every),
            log_every: Some(cfg.train.log_every),
            learning_rate: Some(cfg.train.learning_rate),
        }),
        eval: Some(RawEval {
            protocol_seed: Some(cfg.eval.protocol_seed),
            grid_beta_c: Some(cfg.eval.grid_beta_c.clone()),
            grid_beta_s: Some(cfg.eval.grid_beta_s.clone()),
            probe_pairs: Some(cfg.eval.probe_pairs),
        }),
    };
    toml::to_string_pretty(&raw).expect("resolved config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_only_config_loads() {
        let cfg = load_run_config(None, Some("tiny"), None).unwrap();
        assert_eq!(cfg.model.feature_dim, 16);
        assert!(matches!(cfg.data, DataSource::Synth(_)));
    }

    #[test]
    fn file_overrides_preset_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            r#"
preset = "tiny"

[train]
steps = 10
seed = 99

[model]
hidden = 64
heads = 4
"#,
        )
        .unwrap();
        let cfg = load_run_config(Some(&path), None, None).unwrap();
        assert_eq!(cfg.train.steps, 10);
        assert_eq!(cfg.train.seed, 99);
        assert_eq!(cfg.model.hidden, 64);
        assert_eq!(cfg.model.heads, 4);
        // untouched fields come from the preset
        assert_eq!(cfg.model.feature_dim, 16);
        assert_eq!(cfg.train.batch_size, 16);
    }

    #[test]
    fn unknown_key_named_in_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "preset = \"tiny\"\n[train]\nstepz = 10\n").unwrap();
        let err = load_run_config(Some(&path), None, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("stepz"), "{msg}");
        assert!(msg.contains("steps"), "expected accepted keys in {msg}");
    }

    #[test]
    fn seed_override_wins() {
        let cfg = load_run_config(None, Some("tiny"), Some(1234)).unwrap();
        assert_eq!(cfg.train.seed, 1234);
        assert_eq!(cfg.eval.protocol_seed, 1234);
    }

    #[test]
    fn cross_field_validation_crop_vs_pooling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "preset = \"tiny\"\n[train]\ncrop_len = 8\n").unwrap();
        let err = load_run_config(Some(&path), None, None).unwrap_err();
        assert!(err.to_string().contains("minimum 16"), "{err}");
    }

    #[test]
    fn exactly_one_data_source() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "preset = \"tiny\"\n[data]\nmanifest_dir = \"x\"\n[data.synth]\nnoise_sigma = 0.1\n",
        )
        .unwrap();
        let err = load_run_config(Some(&path), None, None).unwrap_err();
        assert!(err.to_string().contains("exactly one data source"), "{err}");
    }

    #[test]
    fn resolved_echo_roundtrips() {
        let cfg = load_run_config(None, Some("tiny"), Some(7)).unwrap();
        let text = to_resolved_toml(&cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("resolved.toml");
        std::fs::write(&path, &text).unwrap();
        let back = load_run_config(Some(&path), None, None).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_preset_rejected() {
        let err = load_run_config(None, Some("huge"), None).unwrap_err();
        assert!(err.to_string().contains("huge"));
    }
}
