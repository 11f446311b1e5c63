//! The three networks: speaker encoder, content encoder, and decoder with a
//! convolutional refinement stage, plus posterior sampling and conversion.

pub mod net;

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{derive_rng, stream};
use crate::tensor::{Scalar, TensorError};

/// Number of self-attention blocks in the content encoder and decoder.
pub const ATTN_BLOCKS: usize = 2;
/// Refinement net depth and kernel width.
pub const POSTNET_LAYERS: usize = 5;
pub const POSTNET_KERNEL: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Feature dimension D_x of each frame.
    pub feature_dim: usize,
    /// Hidden width of every conv / attention layer.
    pub hidden: usize,
    /// Content latent dimension D_c (per frame).
    pub content_dim: usize,
    /// Speaker latent dimension D_s (per utterance).
    pub speaker_dim: usize,
    /// Attention heads; must divide `hidden`.
    pub heads: usize,
    /// Feed-forward width inside attention blocks.
    pub ffn_dim: usize,
    /// Kernel sizes of the speaker encoder's down-sampling blocks (all odd).
    pub down_kernels: Vec<usize>,
    /// Dropout rate after each content/decoder conv layer.
    pub conv_dropout: f64,
    /// Dropout rate inside the refinement net.
    pub postnet_dropout: f64,
    /// Add fixed sinusoidal positional encoding before attention stacks.
    pub positional_encoding: bool,
    /// Diagnostic mode: attention passes values through without cross-frame
    /// mixing, making the whole encoder frame-local.
    #[serde(default)]
    pub attention_identity: bool,
}

impl ModelConfig {
    pub fn paper_dims() -> Self {
        ModelConfig {
            feature_dim: 80,
            hidden: 256,
            content_dim: 128,
            speaker_dim: 128,
            heads: 4,
            ffn_dim: 1024,
            down_kernels: vec![3, 3, 5, 5],
            conv_dropout: 0.2,
            postnet_dropout: 0.2,
            positional_encoding: true,
            attention_identity: false,
        }
    }

    pub fn tiny() -> Self {
        ModelConfig {
            feature_dim: 16,
            hidden: 32,
            content_dim: 8,
            speaker_dim: 8,
            heads: 2,
            ffn_dim: 64,
            down_kernels: vec![3, 3, 5, 5],
            conv_dropout: 0.2,
            postnet_dropout: 0.2,
            positional_encoding: true,
            attention_identity: false,
        }
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        let positive = [
            ("feature_dim", self.feature_dim),
            ("hidden", self.hidden),
            ("content_dim", self.content_dim),
            ("speaker_dim", self.speaker_dim),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(TensorError::Config {
                    op: "model_config",
                    msg: format!("{name} must be positive"),
                });
            }
        }
        if self.hidden % self.heads != 0 {
            return Err(TensorError::Config {
                op: "model_config",
                msg: format!(
                    "hidden width {} not divisible by head count {}",
                    self.hidden, self.heads
                ),
            });
        }
        if self.down_kernels.is_empty() {
            return Err(TensorError::Config {
                op: "model_config",
                msg: "down_kernels must be non-empty".into(),
            });
        }
        for &k in &self.down_kernels {
            if k % 2 == 0 {
                return Err(TensorError::Config {
                    op: "model_config",
                    msg: format!("down-sampling kernel sizes must be odd, got {k}"),
                });
            }
        }
        for (name, rate) in [
            ("conv_dropout", self.conv_dropout),
            ("postnet_dropout", self.postnet_dropout),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(TensorError::Config {
                    op: "model_config",
                    msg: format!("{name} must be in [0, 1), got {rate}"),
                });
            }
        }
        Ok(())
    }

    /// Minimum input length the speaker encoder accepts: one frame must
    /// survive all time halvings.
    pub fn min_speaker_frames(&self) -> usize {
        1 << self.down_kernels.len()
    }
}

/// Shape of a diagonal-Gaussian posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorForm {
    /// One vector per utterance (speaker).
    Vector { dim: usize },
    /// One vector per frame (content).
    Sequence { frames: usize, dim: usize },
}

/// Diagonal Gaussian as mean plus log-variance, in value space.
#[derive(Debug, Clone)]
pub struct GaussianPosterior<F: Scalar> {
    form: PosteriorForm,
    mean: Vec<F>,
    log_variance: Vec<F>,
}

impl<F: Scalar> GaussianPosterior<F> {
    pub fn new(form: PosteriorForm, mean: Vec<F>, log_variance: Vec<F>) -> Result<Self, TensorError> {
        let expected = match form {
            PosteriorForm::Vector { dim } => dim,
            PosteriorForm::Sequence { frames, dim } => frames * dim,
        };
        if mean.len() != expected || log_variance.len() != mean.len() {
            return Err(TensorError::ShapeMismatch {
                op: "gaussian_posterior",
                left: vec![mean.len()],
                right: vec![log_variance.len()],
            });
        }
        if !crate::tensor::all_finite(&log_variance) || !crate::tensor::all_finite(&mean) {
            return Err(TensorError::Contract {
                op: "gaussian_posterior",
                msg: "mean and log-variance must be finite".into(),
            });
        }
        Ok(GaussianPosterior {
            form,
            mean,
            log_variance,
        })
    }

    pub fn form(&self) -> PosteriorForm {
        self.form
    }
    pub fn mean(&self) -> &[F] {
        &self.mean
    }
    pub fn log_variance(&self) -> &[F] {
        &self.log_variance
    }
    pub fn variance(&self) -> Vec<F> {
        self.log_variance.iter().map(|&v| v.exp()).collect()
    }
    pub fn dim(&self) -> usize {
        match self.form {
            PosteriorForm::Vector { dim } => dim,
            PosteriorForm::Sequence { dim, .. } => dim,
        }
    }
    pub fn frames(&self) -> Option<usize> {
        match self.form {
            PosteriorForm::Vector { .. } => None,
            PosteriorForm::Sequence { frames, .. } => Some(frames),
        }
    }

    /// z = mean + exp(log_variance / 2) * noise, in value space.
    pub fn sample_with(&self, noise: &[F]) -> Result<Vec<F>, TensorError> {
        if noise.len() != self.mean.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reparameterize",
                left: vec![self.mean.len()],
                right: vec![noise.len()],
            });
        }
        Ok(self
            .mean
            .iter()
            .zip(&self.log_variance)
            .zip(noise)
            .map(|((&m, &lv), &n)| m + (lv * F::lit(0.5)).exp() * n)
            .collect())
    }

    /// Time-mean of the per-frame means (sequence form), or the mean itself
    /// (vector form).
    pub fn mean_vector(&self) -> Vec<F> {
        match self.form {
            PosteriorForm::Vector { .. } => self.mean.clone(),
            PosteriorForm::Sequence { frames, dim } => {
                let mut out = vec![F::zero(); dim];
                for t in 0..frames {
                    for d in 0..dim {
                        out[d] += self.mean[t * dim + d];
                    }
                }
                let inv = F::lit(1.0 / frames as f64);
                for v in &mut out {
                    *v *= inv;
                }
                out
            }
        }
    }
}

/// One named parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamTensor<F: Scalar> {
    pub shape: Vec<usize>,
    pub values: Vec<F>,
}

/// Every weight and bias of the three networks, keyed by a stable
/// hierarchical name. The key set is a pure function of [`ModelConfig`].
#[derive(Debug, Clone)]
pub struct ModelParams<F: Scalar> {
    map: BTreeMap<String, ParamTensor<F>>,
}

enum Init {
    /// Normal(0, 1/sqrt(fan_in))
    FanIn(usize),
    Zero,
    One,
}

impl<F: Scalar> ModelParams<F> {
    /// Deterministic initialization from (config, seed).
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self, TensorError> {
        cfg.validate()?;
        let mut rng = derive_rng(seed, &[stream::INIT]);
        let mut map = BTreeMap::new();
        let mut add = |name: String, shape: Vec<usize>, init: Init| {
            let n: usize = shape.iter().product();
            let values: Vec<F> = match init {
                Init::Zero => vec![F::zero(); n],
                Init::One => vec![F::one(); n],
                Init::FanIn(fan_in) => {
                    let std = 1.0 / (fan_in as f64).sqrt();
                    (0..n)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            F::lit(z * std)
                        })
                        .collect()
                }
            };
            map.insert(name, ParamTensor { shape, values });
        };
        Self::visit_layout(cfg, &mut |name, shape, fan_in| {
            let init = match fan_in {
                LayerInit::FanIn(f) => Init::FanIn(f),
                LayerInit::Zero => Init::Zero,
                LayerInit::One => Init::One,
            };
            add(name, shape, init);
        });
        Ok(ModelParams { map })
    }

    /// All-zero parameters (layer-norm gains included); test helper for the
    /// degenerate-network contracts.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self, TensorError> {
        cfg.validate()?;
        let mut map = BTreeMap::new();
        Self::visit_layout(cfg, &mut |name, shape, _| {
            let n: usize = shape.iter().product();
            map.insert(
                name,
                ParamTensor {
                    shape,
                    values: vec![F::zero(); n],
                },
            );
        });
        Ok(ModelParams { map })
    }

    fn visit_layout(cfg: &ModelConfig, f: &mut dyn FnMut(String, Vec<usize>, LayerInit)) {
        let h = cfg.hidden;
        let dx = cfg.feature_dim;

        // speaker encoder
        f("spk.in_fc.w".into(), vec![dx, h], LayerInit::FanIn(dx));
        f("spk.in_fc.b".into(), vec![h], LayerInit::Zero);
        for (i, &k) in cfg.down_kernels.iter().enumerate() {
            for conv in ["conv1", "conv2"] {
                f(
                    format!("spk.block{i}.{conv}.k"),
                    vec![k, h, h],
                    LayerInit::FanIn(k * h),
                );
                f(format!("spk.block{i}.{conv}.b"), vec![h], LayerInit::Zero);
            }
        }
        f(
            "spk.out_fc.w".into(),
            vec![h, 2 * cfg.speaker_dim],
            LayerInit::FanIn(h),
        );
        f("spk.out_fc.b".into(), vec![2 * cfg.speaker_dim], LayerInit::Zero);

        // content encoder
        f("con.conv1.k".into(), vec![3, dx, h], LayerInit::FanIn(3 * dx));
        f("con.conv1.b".into(), vec![h], LayerInit::Zero);
        f("con.conv2.k".into(), vec![3, h, h], LayerInit::FanIn(3 * h));
        f("con.conv2.b".into(), vec![h], LayerInit::Zero);
        for i in 0..ATTN_BLOCKS {
            Self::visit_attn(cfg, &format!("con.attn{i}"), f);
        }
        f(
            "con.proj.w".into(),
            vec![h, 2 * cfg.content_dim],
            LayerInit::FanIn(h),
        );
        f("con.proj.b".into(), vec![2 * cfg.content_dim], LayerInit::Zero);

        // decoder
        let dz = cfg.content_dim + cfg.speaker_dim;
        f("dec.conv1.k".into(), vec![3, dz, h], LayerInit::FanIn(3 * dz));
        f("dec.conv1.b".into(), vec![h], LayerInit::Zero);
        f("dec.conv2.k".into(), vec![3, h, h], LayerInit::FanIn(3 * h));
        f("dec.conv2.b".into(), vec![h], LayerInit::Zero);
        for i in 0..ATTN_BLOCKS {
            Self::visit_attn(cfg, &format!("dec.attn{i}"), f);
        }
        f("dec.out_fc.w".into(), vec![h, dx], LayerInit::FanIn(h));
        f("dec.out_fc.b".into(), vec![dx], LayerInit::Zero);
        for j in 0..POSTNET_LAYERS {
            let (c_in, c_out) = match j {
                0 => (dx, h),
                j if j == POSTNET_LAYERS - 1 => (h, dx),
                _ => (h, h),
            };
            f(
                format!("dec.post{j}.k"),
                vec![POSTNET_KERNEL, c_in, c_out],
                LayerInit::FanIn(POSTNET_KERNEL * c_in),
            );
            f(format!("dec.post{j}.b"), vec![c_out], LayerInit::Zero);
        }
    }

    fn visit_attn(cfg: &ModelConfig, prefix: &str, f: &mut dyn FnMut(String, Vec<usize>, LayerInit)) {
        let h = cfg.hidden;
        f(format!("{prefix}.ln1.g"), vec![h], LayerInit::One);
        f(format!("{prefix}.ln1.b"), vec![h], LayerInit::Zero);
        for name in ["q", "k", "v", "o"] {
            f(format!("{prefix}.{name}.w"), vec![h, h], LayerInit::FanIn(h));
            f(format!("{prefix}.{name}.b"), vec![h], LayerInit::Zero);
        }
        f(format!("{prefix}.ln2.g"), vec![h], LayerInit::One);
        f(format!("{prefix}.ln2.b"), vec![h], LayerInit::Zero);
        f(format!("{prefix}.ff1.w"), vec![h, cfg.ffn_dim], LayerInit::FanIn(h));
        f(format!("{prefix}.ff1.b"), vec![cfg.ffn_dim], LayerInit::Zero);
        f(
            format!("{prefix}.ff2.w"),
            vec![cfg.ffn_dim, h],
            LayerInit::FanIn(cfg.ffn_dim),
        );
        f(format!("{prefix}.ff2.b"), vec![h], LayerInit::Zero);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<F>> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor<F>> {
        self.map.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamTensor<F>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamTensor<F>)> {
        self.map.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.map.values().map(|p| p.values.len()).sum()
    }

    /// Convert element type (used to run gradient checks in f64 on params
    /// initialized for f32 training, and vice versa).
    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        let map = self
            .map
            .iter()
            .map(|(k, p)| {
                (
                    k.clone(),
                    ParamTensor {
                        shape: p.shape.clone(),
                        values: p.values.iter().map(|&v| G::lit(v.dbl())).collect(),
                    },
                )
            })
            .collect();
        ModelParams { map }
    }

    pub fn insert(&mut self, name: String, tensor: ParamTensor<F>) {
        self.map.insert(name, tensor);
    }
}

enum LayerInit {
    FanIn(usize),
    Zero,
    One,
}
