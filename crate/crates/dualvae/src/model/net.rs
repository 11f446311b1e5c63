//! Graph-building forward passes for the three networks, plus value-level
//! inference wrappers (posterior extraction, reconstruction, conversion).

use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use super::{GaussianPosterior, ModelConfig, ModelParams, PosteriorForm, ATTN_BLOCKS, POSTNET_LAYERS};
use crate::tensor::{Graph, Result, Scalar, TensorError, TensorId};

/// Parameter tensors registered as leaves of one graph.
pub struct Bindings {
    ids: BTreeMap<String, TensorId>,
}

impl Bindings {
    /// Register every parameter on the graph. With `trainable`, leaves accept
    /// gradient; otherwise they are constants and backward skips them.
    pub fn bind<F: Scalar>(
        g: &mut Graph<F>,
        params: &ModelParams<F>,
        trainable: bool,
    ) -> Result<Self> {
        let mut ids = BTreeMap::new();
        for (name, p) in params.iter() {
            let id = g.leaf(p.values.clone(), p.shape.clone(), trainable)?;
            ids.insert(name.to_string(), id);
        }
        Ok(Bindings { ids })
    }

    pub fn id(&self, name: &str) -> TensorId {
        *self
            .ids
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, TensorId)> {
        self.ids.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Posterior as graph nodes; gradients flow through mean and log-variance.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorNodes {
    pub mean: TensorId,
    pub log_var: TensorId,
}

/// Everything a forward pass needs besides its input.
pub struct ForwardCtx<'a, F: Scalar> {
    pub graph: &'a mut Graph<F>,
    pub cfg: &'a ModelConfig,
    pub binds: &'a Bindings,
    pub training: bool,
    /// Mask source for dropout; `None` disables dropout even in training.
    pub dropout_rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a, F: Scalar> ForwardCtx<'a, F> {
    pub fn inference(graph: &'a mut Graph<F>, cfg: &'a ModelConfig, binds: &'a Bindings) -> Self {
        ForwardCtx {
            graph,
            cfg,
            binds,
            training: false,
            dropout_rng: None,
        }
    }

    fn dropout(&mut self, x: TensorId, rate: f64) -> Result<TensorId> {
        match (&mut self.dropout_rng, self.training) {
            (Some(rng), true) => self.graph.dropout(x, rate, true, rng),
            _ => Ok(x),
        }
    }
}

/// Fixed sinusoidal positional encoding, [frames, width].
fn positional_encoding<F: Scalar>(frames: usize, width: usize) -> Vec<F> {
    let mut pe = vec![F::zero(); frames * width];
    for t in 0..frames {
        for i in 0..width / 2 {
            let rate = 1.0 / 10_000f64.powf(2.0 * i as f64 / width as f64);
            let angle = t as f64 * rate;
            pe[t * width + 2 * i] = F::lit(angle.sin());
            pe[t * width + 2 * i + 1] = F::lit(angle.cos());
        }
        if width % 2 == 1 {
            let i = width / 2;
            let rate = 1.0 / 10_000f64.powf(2.0 * i as f64 / width as f64);
            pe[t * width + width - 1] = F::lit((t as f64 * rate).sin());
        }
    }
    pe
}

fn add_positional<F: Scalar>(ctx: &mut ForwardCtx<F>, x: TensorId) -> Result<TensorId> {
    if !ctx.cfg.positional_encoding {
        return Ok(x);
    }
    let shape = ctx.graph.shape(x).to_vec();
    let (t, h) = (shape[0], shape[1]);
    let pe = ctx.graph.constant(positional_encoding(t, h), vec![t, h])?;
    ctx.graph.add(x, pe)
}

/// Pre-LN self-attention block: attention sublayer + feed-forward sublayer,
/// residual connections around both.
fn attention_block<F: Scalar>(ctx: &mut ForwardCtx<F>, x: TensorId, prefix: &str) -> Result<TensorId> {
    let h = ctx.cfg.hidden;
    let heads = ctx.cfg.heads;
    let dh = h / heads;
    let b = ctx.binds;
    let p = |suffix: &str| format!("{prefix}.{suffix}");

    let ln1_g = b.id(&p("ln1.g"));
    let ln1_b = b.id(&p("ln1.b"));
    let a = ctx.graph.layer_norm(x, ln1_g, ln1_b)?;

    let q = {
        let (w, bias) = (b.id(&p("q.w")), b.id(&p("q.b")));
        ctx.graph.affine(a, w, bias)?
    };
    let k = {
        let (w, bias) = (b.id(&p("k.w")), b.id(&p("k.b")));
        ctx.graph.affine(a, w, bias)?
    };
    let v = {
        let (w, bias) = (b.id(&p("v.w")), b.id(&p("v.b")));
        ctx.graph.affine(a, w, bias)?
    };

    let mut contexts = Vec::with_capacity(heads);
    for head in 0..heads {
        let (from, to) = (head * dh, (head + 1) * dh);
        let vh = ctx.graph.slice_channels(v, from, to)?;
        if ctx.cfg.attention_identity {
            contexts.push(vh);
            continue;
        }
        let qh = ctx.graph.slice_channels(q, from, to)?;
        let kh = ctx.graph.slice_channels(k, from, to)?;
        let scores = ctx.graph.matmul_nt(qh, kh)?;
        let scaled = ctx.graph.scale(scores, F::lit(1.0 / (dh as f64).sqrt()))?;
        let attn = ctx.graph.softmax_lastdim(scaled)?;
        contexts.push(ctx.graph.matmul(attn, vh)?);
    }
    let merged = ctx.graph.concat_channels(&contexts)?;
    let o = {
        let (w, bias) = (b.id(&p("o.w")), b.id(&p("o.b")));
        ctx.graph.affine(merged, w, bias)?
    };
    let x = ctx.graph.add(x, o)?;

    let ln2_g = b.id(&p("ln2.g"));
    let ln2_b = b.id(&p("ln2.b"));
    let n = ctx.graph.layer_norm(x, ln2_g, ln2_b)?;
    let f1 = {
        let (w, bias) = (b.id(&p("ff1.w")), b.id(&p("ff1.b")));
        let lin = ctx.graph.affine(n, w, bias)?;
        ctx.graph.relu(lin)?
    };
    let f2 = {
        let (w, bias) = (b.id(&p("ff2.w")), b.id(&p("ff2.b")));
        ctx.graph.affine(f1, w, bias)?
    };
    ctx.graph.add(x, f2)
}

/// Speaker encoder: FC+ReLU, four down-sampling residual conv blocks, global
/// average pool, FC to [mean ‖ log-variance]. Output is a vector posterior.
pub fn speaker_encoder<F: Scalar>(ctx: &mut ForwardCtx<F>, x: TensorId) -> Result<PosteriorNodes> {
    let shape = ctx.graph.shape(x).to_vec();
    if shape.len() != 2 || shape[1] != ctx.cfg.feature_dim {
        return Err(TensorError::ShapeMismatch {
            op: "speaker_encoder",
            left: shape,
            right: vec![ctx.cfg.min_speaker_frames(), ctx.cfg.feature_dim],
        });
    }
    let t = shape[0];
    let min = ctx.cfg.min_speaker_frames();
    if t < min {
        return Err(TensorError::TooShort {
            op: "speaker_encoder",
            len: t,
            min,
        });
    }

    let b = ctx.binds;
    let fc_in = {
        let (w, bias) = (b.id("spk.in_fc.w"), b.id("spk.in_fc.b"));
        let lin = ctx.graph.affine(x, w, bias)?;
        ctx.graph.relu(lin)?
    };
    let mut u = fc_in;
    for i in 0..ctx.cfg.down_kernels.len() {
        let c1 = {
            let (k, bias) = (b.id(&format!("spk.block{i}.conv1.k")), b.id(&format!("spk.block{i}.conv1.b")));
            let conv = ctx.graph.conv1d_same(u, k, bias)?;
            ctx.graph.relu(conv)?
        };
        let c2 = {
            let (k, bias) = (b.id(&format!("spk.block{i}.conv2.k")), b.id(&format!("spk.block{i}.conv2.b")));
            let conv = ctx.graph.conv1d_same(c1, k, bias)?;
            ctx.graph.relu(conv)?
        };
        let pooled = ctx.graph.avg_pool_time(c2, 2)?;
        // residual path: the block input pooled to the same length
        let res = ctx.graph.avg_pool_time(u, 2)?;
        u = ctx.graph.add(pooled, res)?;
    }
    let agg = ctx.graph.global_avg_pool_time(u)?;
    let out = {
        let (w, bias) = (b.id("spk.out_fc.w"), b.id("spk.out_fc.b"));
        ctx.graph.affine(agg, w, bias)?
    };
    let ds = ctx.cfg.speaker_dim;
    Ok(PosteriorNodes {
        mean: ctx.graph.slice_channels(out, 0, ds)?,
        log_var: ctx.graph.slice_channels(out, ds, 2 * ds)?,
    })
}

/// Content encoder: two conv layers with dropout, positional encoding, two
/// self-attention blocks, per-frame projection to mean and log-variance.
/// Output is a sequence posterior with the input's frame count.
pub fn content_encoder<F: Scalar>(ctx: &mut ForwardCtx<F>, x: TensorId) -> Result<PosteriorNodes> {
    let shape = ctx.graph.shape(x).to_vec();
    if shape.len() != 2 || shape[1] != ctx.cfg.feature_dim {
        return Err(TensorError::ShapeMismatch {
            op: "content_encoder",
            left: shape,
            right: vec![1, ctx.cfg.feature_dim],
        });
    }
    let rate = ctx.cfg.conv_dropout;
    let b = ctx.binds;

    let c1 = {
        let (k, bias) = (b.id("con.conv1.k"), b.id("con.conv1.b"));
        ctx.graph.conv1d_same(x, k, bias)?
    };
    let c1 = ctx.dropout(c1, rate)?;
    let c2 = {
        let (k, bias) = (b.id("con.conv2.k"), b.id("con.conv2.b"));
        ctx.graph.conv1d_same(c1, k, bias)?
    };
    let c2 = ctx.dropout(c2, rate)?;

    let mut h = add_positional(ctx, c2)?;
    for i in 0..ATTN_BLOCKS {
        h = attention_block(ctx, h, &format!("con.attn{i}"))?;
    }
    let out = {
        let (w, bias) = (b.id("con.proj.w"), b.id("con.proj.b"));
        ctx.graph.affine(h, w, bias)?
    };
    let dc = ctx.cfg.content_dim;
    Ok(PosteriorNodes {
        mean: ctx.graph.slice_channels(out, 0, dc)?,
        log_var: ctx.graph.slice_channels(out, dc, 2 * dc)?,
    })
}

/// z = mean + exp(log_variance / 2) ⊙ noise as graph nodes; gradients flow to
/// mean and log-variance.
pub fn reparameterize<F: Scalar>(
    g: &mut Graph<F>,
    post: PosteriorNodes,
    noise: TensorId,
) -> Result<TensorId> {
    if g.shape(post.mean) != g.shape(noise) {
        return Err(TensorError::ShapeMismatch {
            op: "reparameterize",
            left: g.shape(post.mean).to_vec(),
            right: g.shape(noise).to_vec(),
        });
    }
    let half = g.scale(post.log_var, F::lit(0.5))?;
    let std = g.exp(half)?;
    let scaled = g.mul(std, noise)?;
    g.add(post.mean, scaled)
}

/// Decoder: speaker code tiled over time and concatenated channel-wise with
/// the content sequence, then the same conv + attention stack as the content
/// encoder, an FC to feature space (`pre`), and a refinement net predicting a
/// residual (`post = pre + residual`).
pub fn decoder<F: Scalar>(
    ctx: &mut ForwardCtx<F>,
    z_content: TensorId,
    z_speaker: TensorId,
) -> Result<(TensorId, TensorId)> {
    let sc = ctx.graph.shape(z_content).to_vec();
    if sc.len() != 2 || sc[1] != ctx.cfg.content_dim {
        return Err(TensorError::ShapeMismatch {
            op: "decoder",
            left: sc,
            right: vec![1, ctx.cfg.content_dim],
        });
    }
    if ctx.graph.shape(z_speaker) != [ctx.cfg.speaker_dim] {
        return Err(TensorError::ShapeMismatch {
            op: "decoder",
            left: ctx.graph.shape(z_speaker).to_vec(),
            right: vec![ctx.cfg.speaker_dim],
        });
    }
    let t = sc[0];
    let rate = ctx.cfg.conv_dropout;
    let b = ctx.binds;

    let tiled = ctx.graph.tile_rows(z_speaker, t)?;
    let cat = ctx.graph.concat_channels(&[z_content, tiled])?;

    let c1 = {
        let (k, bias) = (b.id("dec.conv1.k"), b.id("dec.conv1.b"));
        ctx.graph.conv1d_same(cat, k, bias)?
    };
    let c1 = ctx.dropout(c1, rate)?;
    let c2 = {
        let (k, bias) = (b.id("dec.conv2.k"), b.id("dec.conv2.b"));
        ctx.graph.conv1d_same(c1, k, bias)?
    };
    let c2 = ctx.dropout(c2, rate)?;

    let mut h = add_positional(ctx, c2)?;
    for i in 0..ATTN_BLOCKS {
        h = attention_block(ctx, h, &format!("dec.attn{i}"))?;
    }
    let pre = {
        let (w, bias) = (b.id("dec.out_fc.w"), b.id("dec.out_fc.b"));
        ctx.graph.affine(h, w, bias)?
    };

    let mut r = pre;
    for j in 0..POSTNET_LAYERS {
        let (k, bias) = (
            ctx.binds.id(&format!("dec.post{j}.k")),
            ctx.binds.id(&format!("dec.post{j}.b")),
        );
        r = ctx.graph.conv1d_same(r, k, bias)?;
        if j < POSTNET_LAYERS - 1 {
            r = ctx.graph.tanh(r)?;
        }
        r = ctx.dropout(r, ctx.cfg.postnet_dropout)?;
    }
    let post = ctx.graph.add(pre, r)?;
    Ok((pre, post))
}

fn posterior_from_nodes<F: Scalar>(
    g: &Graph<F>,
    nodes: PosteriorNodes,
    form: PosteriorForm,
) -> Result<GaussianPosterior<F>> {
    GaussianPosterior::new(form, g.values(nodes.mean).to_vec(), g.values(nodes.log_var).to_vec())
}

/// Value-level speaker posterior for one utterance (inference mode).
pub fn speaker_posterior<F: Scalar>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    features: &[F],
    frames: usize,
) -> Result<GaussianPosterior<F>> {
    let mut g = Graph::new();
    let binds = Bindings::bind(&mut g, params, false)?;
    let x = g.constant(features.to_vec(), vec![frames, cfg.feature_dim])?;
    let mut ctx = ForwardCtx::inference(&mut g, cfg, &binds);
    let nodes = speaker_encoder(&mut ctx, x)?;
    posterior_from_nodes(
        &g,
        nodes,
        PosteriorForm::Vector {
            dim: cfg.speaker_dim,
        },
    )
}

/// Value-level content posterior for one utterance (inference mode).
pub fn content_posterior<F: Scalar>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    features: &[F],
    frames: usize,
) -> Result<GaussianPosterior<F>> {
    let mut g = Graph::new();
    let binds = Bindings::bind(&mut g, params, false)?;
    let x = g.constant(features.to_vec(), vec![frames, cfg.feature_dim])?;
    let mut ctx = ForwardCtx::inference(&mut g, cfg, &binds);
    let nodes = content_encoder(&mut ctx, x)?;
    posterior_from_nodes(
        &g,
        nodes,
        PosteriorForm::Sequence {
            frames,
            dim: cfg.content_dim,
        },
    )
}

/// Decode the posterior means of (content of `source`, speaker of `target`)
/// into a feature matrix with the source's frame count. Fully deterministic:
/// dropout off, means only.
pub fn convert<F: Scalar>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    source: &[F],
    source_frames: usize,
    target: &[F],
    target_frames: usize,
) -> Result<Vec<F>> {
    let mut g = Graph::new();
    let binds = Bindings::bind(&mut g, params, false)?;
    let src = g.constant(source.to_vec(), vec![source_frames, cfg.feature_dim])?;
    let tgt = g.constant(target.to_vec(), vec![target_frames, cfg.feature_dim])?;
    let mut ctx = ForwardCtx::inference(&mut g, cfg, &binds);
    let content = content_encoder(&mut ctx, src)?;
    let speaker = speaker_encoder(&mut ctx, tgt)?;
    let mut ctx = ForwardCtx::inference(&mut g, cfg, &binds);
    let (_, post) = decoder(&mut ctx, content.mean, speaker.mean)?;
    Ok(g.values(post).to_vec())
}

/// Mean-mode reconstruction of one utterance: identical code path as
/// [`convert`] with source == target.
pub fn reconstruct<F: Scalar>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    features: &[F],
    frames: usize,
) -> Result<Vec<F>> {
    convert(params, cfg, features, frames, features, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_rng, stream};
    use rand::Rng;

    fn random_features(t: usize, d: usize, tag: u64) -> Vec<f64> {
        let mut rng = derive_rng(5, &[stream::CHECK, tag]);
        (0..t * d).map(|_| rng.random::<f64>() - 0.5).collect()
    }

    #[test]
    fn speaker_output_shapes_for_any_valid_length() {
        let cfg = ModelConfig::tiny();
        let params: ModelParams<f64> = ModelParams::init(&cfg, 3).unwrap();
        for t in [16usize, 64] {
            let x = random_features(t, cfg.feature_dim, t as u64);
            let post = speaker_posterior(&params, &cfg, &x, t).unwrap();
            assert_eq!(post.mean().len(), cfg.speaker_dim);
            assert_eq!(post.log_variance().len(), cfg.speaker_dim);
        }
    }

    #[test]
    fn speaker_rejects_short_input_naming_minimum() {
        let cfg = ModelConfig::tiny();
        let params: ModelParams<f64> = ModelParams::init(&cfg, 3).unwrap();
        let x = random_features(15, cfg.feature_dim, 1);
        let err = speaker_posterior(&params, &cfg, &x, 15).unwrap_err();
        match err {
            TensorError::TooShort { len, min, .. } => {
                assert_eq!(len, 15);
                assert_eq!(min, 16);
            }
            other => panic!("expected length error, got {other:?}"),
        }
    }

    #[test]
    fn zero_network_gives_zero_speaker_mean() {
        let cfg = ModelConfig::tiny();
        let params: ModelParams<f64> = ModelParams::zeros(&cfg).unwrap();
        let x = random_features(32, cfg.feature_dim, 2);
        let post = speaker_posterior(&params, &cfg, &x, 32).unwrap();
        assert!(post.mean().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn content_preserves_frame_count() {
        let cfg = ModelConfig::tiny();
        let params: ModelParams<f64> = ModelParams::init(&cfg, 3).unwrap();
        for t in [1usize, 7, 200] {
            let x = random_features(t, cfg.feature_dim, 100 + t as u64);
            let post = content_posterior(&params, &cfg, &x, t).unwrap();
            assert_eq!(post.frames(), Some(t));
            assert_eq!(post.mean().len(), t * cfg.content_dim);
            assert_eq!(post.log_variance().len(), t * cfg.content_dim);
        }
    }

    #[test]
    fn content_conv_stack_is_frame_local_in_identity_mode() {
        // Two inputs identical up to (excluding) frame `t_diff`; with
        // positional encoding off and attention in identity mode the whole
        // network is frame-local with receptive field 2 per conv stack, so
        // posterior means for frames < t_diff - 2 coincide exactly.
        let mut cfg = ModelConfig::tiny();
        cfg.positional_encoding = false;
        cfg.attention_identity = true;
        let params: ModelParams<f64> = ModelParams::init(&cfg, 9).unwrap();
        let t = 24;
        let t_diff = 12;
        let a = random_features(t, cfg.feature_dim, 7);
        let mut b = a.clone();
        for v in &mut b[t_diff * cfg.feature_dim..] {
            *v += 1.0;
        }
        let pa = content_posterior(&params, &cfg, &a, t).unwrap();
        let pb = content_posterior(&params, &cfg, &b, t).unwrap();
        let dc = cfg.content_dim;
        for frame in 0..t_diff - 2 {
            for d in 0..dc {
                assert_eq!(
                    pa.mean()[frame * dc + d].to_bits(),
                    pb.mean()[frame * dc + d].to_bits(),
                    "frame {frame} dim {d} differs"
                );
            }
        }
        // and the change is visible at the changed frames
        let last = t - 1;
        assert_ne!(
            pa.mean()[last * dc].to_bits(),
            pb.mean()[last * dc].to_bits()
        );
    }

    #[test]
    fn decoder_shapes_and_zero_postnet_identity() {
        let cfg = ModelConfig::tiny();
        let mut params: ModelParams<f64> = ModelParams::init(&cfg, 4).unwrap();
        // zero the refinement net: post == pre
        for j in 0..POSTNET_LAYERS {
            for suffix in ["k", "b"] {
                let t = params.get_mut(&format!("dec.post{j}.{suffix}")).unwrap();
                t.values.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let t = 20;
        let mut g: Graph<f64> = Graph::new();
        let binds = Bindings::bind(&mut g, &params, false).unwrap();
        let zc = g
            .constant(random_features(t, cfg.content_dim, 11), vec![t, cfg.content_dim])
            .unwrap();
        let zs = g
            .constant(random_features(1, cfg.speaker_dim, 12), vec![cfg.speaker_dim])
            .unwrap();
        let mut ctx = ForwardCtx::inference(&mut g, &cfg, &binds);
        let (pre, post) = decoder(&mut ctx, zc, zs).unwrap();
        assert_eq!(g.shape(pre), &[t, cfg.feature_dim]);
        assert_eq!(g.shape(post), &[t, cfg.feature_dim]);
        assert_eq!(g.values(pre), g.values(post));
    }

    #[test]
    fn conversion_is_deterministic_and_length_follows_source() {
        let cfg = ModelConfig::tiny();
        let params: ModelParams<f64> = ModelParams::init(&cfg, 5).unwrap();
        let src = random_features(40, cfg.feature_dim, 21);
        let tgt = random_features(64, cfg.feature_dim, 22);
        let a = convert(&params, &cfg, &src, 40, &tgt, 64).unwrap();
        let b = convert(&params, &cfg, &src, 40, &tgt, 64).unwrap();
        assert_eq!(a.len(), 40 * cfg.feature_dim);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        // short target rejected
        assert!(convert(&params, &cfg, &src, 40, &tgt[..15 * cfg.feature_dim], 15).is_err());
    }

    #[test]
    fn self_conversion_equals_mean_mode_reconstruction() {
        let cfg = ModelConfig::tiny();
        let params: ModelParams<f64> = ModelParams::init(&cfg, 6).unwrap();
        let x = random_features(32, cfg.feature_dim, 31);
        let conv = convert(&params, &cfg, &x, 32, &x, 32).unwrap();
        let rec = reconstruct(&params, &cfg, &x, 32).unwrap();
        for (a, b) in conv.iter().zip(&rec) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn inference_variances_positive() {
        let cfg = ModelConfig::tiny();
        let params: ModelParams<f32> = ModelParams::init(&cfg, 8).unwrap();
        let x: Vec<f32> = random_features(24, cfg.feature_dim, 41)
            .into_iter()
            .map(|v| v as f32)
            .collect();
        let sp = speaker_posterior(&params, &cfg, &x, 24).unwrap();
        let cp = content_posterior(&params, &cfg, &x, 24).unwrap();
        assert!(sp.variance().iter().all(|&v| v > 0.0 && v.is_finite()));
        assert!(cp.variance().iter().all(|&v| v > 0.0 && v.is_finite()));
    }

    #[test]
    fn reparameterize_graph_gradients_flow() {
        let mut g: Graph<f64> = Graph::new();
        let mean = g.param(vec![0.5, -0.5], vec![2]).unwrap();
        let log_var = g.param(vec![0.1, -0.2], vec![2]).unwrap();
        let noise = g.constant(vec![0.3, -0.9], vec![2]).unwrap();
        let z = reparameterize(
            &mut g,
            PosteriorNodes {
                mean,
                log_var,
            },
            noise,
        )
        .unwrap();
        let s = g.sum_all(z).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(mean).is_some());
        assert!(g.grad(log_var).is_some());

        // noise shape mismatch
        let bad = g.constant(vec![1.0], vec![1]).unwrap();
        assert!(reparameterize(&mut g, PosteriorNodes { mean, log_var }, bad).is_err());
    }
}
