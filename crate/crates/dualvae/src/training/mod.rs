//! Adam optimization of the weighted objective with exact reproducibility.
//!
//! Every stochastic choice of a step (batch members, crop offsets, shuffle,
//! sampling noise, dropout) derives from (run seed, step index, item index),
//! so the parameter trajectory is a pure function of (seed, config, corpus)
//! and a checkpoint needs only the seed and the next step index to resume
//! bit-exactly.

pub mod checkpoint;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{make_batch, DataError, Utterance};
use crate::model::net::Bindings;
use crate::model::{ModelConfig, ModelParams};
use crate::objective::{
    breakdown_from, loss_graph, Betas, LossBreakdown, SampleMode,
};
use crate::rng::{derive_rng, derive_seed, stream};
use crate::tensor::{Graph, Scalar, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("non-finite gradient in parameter {param} at step {step}")]
    NonFiniteGrad { param: String, step: u64 },
    #[error("checkpoint format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Config(String),
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1.25e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// First and second moment estimates of one parameter.
#[derive(Debug, Clone)]
pub struct Moments<F: Scalar> {
    pub m: Vec<F>,
    pub v: Vec<F>,
}

/// Per-parameter moments plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<F: Scalar> {
    pub hyper: AdamHyper,
    pub t: u64,
    moments: BTreeMap<String, Moments<F>>,
}

pub type GradMap<F> = BTreeMap<String, Vec<F>>;

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &ModelParams<F>, hyper: AdamHyper) -> Self {
        let moments = params
            .iter()
            .map(|(k, p)| {
                (
                    k.to_string(),
                    Moments {
                        m: vec![F::zero(); p.values.len()],
                        v: vec![F::zero(); p.values.len()],
                    },
                )
            })
            .collect();
        AdamState {
            hyper,
            t: 0,
            moments,
        }
    }

    pub fn moments(&self, name: &str) -> Option<&Moments<F>> {
        self.moments.get(name)
    }

    pub fn moments_mut(&mut self, name: &str) -> Option<&mut Moments<F>> {
        self.moments.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Moments<F>)> {
        self.moments.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// One bias-corrected Adam update. Rejects non-finite gradients, naming the
/// offending parameter.
pub fn adam_step<F: Scalar>(
    params: &mut ModelParams<F>,
    grads: &GradMap<F>,
    state: &mut AdamState<F>,
) -> Result<(), TrainError> {
    for (name, g) in grads {
        if !crate::tensor::all_finite(g) {
            return Err(TrainError::NonFiniteGrad {
                param: name.clone(),
                step: state.t + 1,
            });
        }
    }
    state.t += 1;
    let t = state.t;
    let h = state.hyper;
    let b1 = F::lit(h.beta1);
    let b2 = F::lit(h.beta2);
    let one_m_b1 = F::lit(1.0 - h.beta1);
    let one_m_b2 = F::lit(1.0 - h.beta2);
    let corr1 = F::lit(1.0 / (1.0 - h.beta1.powi(t as i32)));
    let corr2 = F::lit(1.0 / (1.0 - h.beta2.powi(t as i32)));
    let lr = F::lit(h.learning_rate);
    let eps = F::lit(h.epsilon);

    for (name, p) in params.iter_mut() {
        let Some(g) = grads.get(name) else { continue };
        let mom = state.moments.get_mut(name).expect("state covers all params");
        for i in 0..p.values.len() {
            mom.m[i] = b1 * mom.m[i] + one_m_b1 * g[i];
            mom.v[i] = b2 * mom.v[i] + one_m_b2 * g[i] * g[i];
            let m_hat = mom.m[i] * corr1;
            let v_hat = mom.v[i] * corr2;
            p.values[i] = p.values[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Run configuration for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub beta_c: f64,
    pub beta_s: f64,
    pub steps: u64,
    pub batch_size: usize,
    pub crop_len: usize,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub validate_every: u64,
    pub log_every: u64,
    pub learning_rate: f64,
}

impl TrainRunConfig {
    pub fn defaults() -> Self {
        TrainRunConfig {
            beta_c: 1e-2,
            beta_s: 1e-4,
            steps: 30_000,
            batch_size: 32,
            crop_len: 128,
            seed: 1,
            checkpoint_every: 5_000,
            validate_every: 1_000,
            log_every: 100,
            learning_rate: AdamHyper::default().learning_rate,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        Betas::new(self.beta_c, self.beta_s).map_err(TrainError::Tensor)?;
        if self.steps == 0 {
            return Err(TrainError::Config("steps must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if self.crop_len == 0 {
            return Err(TrainError::Config("crop_len must be positive".into()));
        }
        Ok(())
    }

    pub fn betas(&self) -> Betas {
        Betas {
            content: self.beta_c,
            speaker: self.beta_s,
        }
    }

    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            ..AdamHyper::default()
        }
    }
}

/// Result of a training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub loss_log: PathBuf,
    /// Set when the run stopped early (non-finite loss); the named checkpoint
    /// is the last good one.
    pub halted: Option<String>,
    pub steps_run: u64,
    pub last_breakdown: Option<LossBreakdown<f32>>,
}

/// Batch gradients and mean loss components for one step. Items are evaluated
/// on independent graphs (possibly in parallel); the reduction is sequential
/// in item order, so results are bit-identical regardless of thread count.
pub fn batch_step(
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    crops: &[Vec<f32>],
    crop_len: usize,
    betas: Betas,
    item_seeds: &[u64],
) -> Result<(LossBreakdown<f32>, GradMap<f32>), TrainError> {
    debug_assert_eq!(crops.len(), item_seeds.len());
    let items: Vec<Result<(LossBreakdown<f32>, Vec<Vec<f32>>), TensorError>> = crops
        .par_iter()
        .zip(item_seeds.par_iter())
        .map(|(features, &item_seed)| {
            let mut g: Graph<f32> = Graph::new();
            let binds = Bindings::bind(&mut g, params, true)?;
            let nodes = loss_graph(
                &mut g,
                &binds,
                cfg,
                features,
                crop_len,
                betas,
                SampleMode::Sampled { seed: item_seed },
            )?;
            g.backward(nodes.total)?;
            let breakdown = breakdown_from(&g, &nodes, betas);
            let grads: Vec<Vec<f32>> = params
                .iter()
                .map(|(name, p)| {
                    let id = binds.id(name);
                    g.grad(id)
                        .map(|v| v.to_vec())
                        .unwrap_or_else(|| vec![0.0; p.values.len()])
                })
                .collect();
            Ok((breakdown, grads))
        })
        .collect();

    let inv_b = 1.0 / crops.len() as f32;
    let mut recon = 0.0f32;
    let mut klc = 0.0f32;
    let mut kls = 0.0f32;
    let mut acc: Vec<Vec<f32>> = params
        .iter()
        .map(|(_, p)| vec![0.0f32; p.values.len()])
        .collect();
    for item in items {
        let (b, grads) = item?;
        recon += b.reconstruction;
        klc += b.content_kl;
        kls += b.speaker_kl;
        for (a, g) in acc.iter_mut().zip(&grads) {
            for (x, y) in a.iter_mut().zip(g) {
                *x += *y;
            }
        }
    }
    for a in &mut acc {
        for x in a.iter_mut() {
            *x *= inv_b;
        }
    }
    let breakdown = LossBreakdown::new(recon * inv_b, klc * inv_b, kls * inv_b, betas);
    let grad_map: GradMap<f32> = params
        .iter()
        .map(|(k, _)| k.to_string())
        .zip(acc)
        .collect();
    Ok((breakdown, grad_map))
}

/// Deterministic validation metric: mean reconstruction loss over held-out
/// utterances, center-cropped, inference semantics.
pub fn validation_loss(
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    valid: &[&Utterance],
    crop_len: usize,
    betas: Betas,
) -> Result<f32, TrainError> {
    let mut acc = 0.0f32;
    let mut count = 0usize;
    for u in valid {
        if u.frames < crop_len.max(cfg.min_speaker_frames()) {
            continue;
        }
        let offset = (u.frames - crop_len) / 2;
        let crop = &u.features[offset * u.feature_dim..(offset + crop_len) * u.feature_dim];
        let b = crate::objective::total_loss(
            params,
            cfg,
            crop,
            crop_len,
            betas,
            SampleMode::Deterministic,
        )?;
        acc += b.reconstruction;
        count += 1;
    }
    if count == 0 {
        return Err(TrainError::Config(
            "no validation utterance satisfies the length preconditions".into(),
        ));
    }
    Ok(acc / count as f32)
}

/// Train on the given split. `resume` continues from a checkpoint bit-exactly.
pub fn train(
    cfg: &ModelConfig,
    run: &TrainRunConfig,
    train_utts: &[&Utterance],
    valid_utts: &[&Utterance],
    out_dir: &Path,
    resume: Option<checkpoint::Checkpoint>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    run.validate()?;
    if train_utts.is_empty() {
        return Err(TrainError::Config("training corpus is empty".into()));
    }
    if run.crop_len < cfg.min_speaker_frames() {
        return Err(TrainError::Config(format!(
            "crop_len {} below the speaker encoder minimum {}",
            run.crop_len,
            cfg.min_speaker_frames()
        )));
    }
    for u in train_utts {
        if u.frames < run.crop_len {
            return Err(TrainError::Data(DataError::TooShort {
                id: u.id.clone(),
                len: u.frames,
                min: run.crop_len,
            }));
        }
    }
    fs::create_dir_all(out_dir)?;

    let (mut params, mut adam, start_step) = match resume {
        Some(ck) => {
            if ck.model != *cfg || ck.run != *run {
                return Err(TrainError::Config(
                    "checkpoint configuration does not match the requested run".into(),
                ));
            }
            (ck.params, ck.adam, ck.next_step)
        }
        None => {
            let params: ModelParams<f32> = ModelParams::init(cfg, run.seed)?;
            let adam = AdamState::new(&params, run.hyper());
            (params, adam, 0)
        }
    };
    let betas = run.betas();

    let log_path = out_dir.join("loss.log");
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)?;

    let ckpt_path = |step: u64| out_dir.join(format!("ckpt_step{step:07}.bin"));
    let write_ckpt = |params: &ModelParams<f32>, adam: &AdamState<f32>, next_step: u64, path: &Path|
     -> Result<(), TrainError> {
        checkpoint::save(
            path,
            &checkpoint::Checkpoint {
                model: cfg.clone(),
                run: run.clone(),
                params: params.clone(),
                adam: adam.clone(),
                master_seed: run.seed,
                next_step,
            },
        )
    };

    // guarantee a last-good checkpoint exists
    let mut last_good = ckpt_path(start_step);
    write_ckpt(&params, &adam, start_step, &last_good)?;

    let mut last_breakdown = None;
    for step in start_step..run.steps {
        // assemble the batch
        let mut batch_rng = derive_rng(run.seed, &[stream::BATCH, step]);
        let picks: Vec<&Utterance> = (0..run.batch_size)
            .map(|_| {
                let idx = rand::Rng::random_range(&mut batch_rng, 0..train_utts.len());
                train_utts[idx]
            })
            .collect();
        let crops = make_batch(&picks, run.crop_len, &mut batch_rng)?;
        let item_seeds: Vec<u64> = (0..run.batch_size)
            .map(|i| derive_seed(run.seed, &[stream::BATCH, 0x17EA, step, i as u64]))
            .collect();

        let (breakdown, grads) = batch_step(&params, cfg, &crops, run.crop_len, betas, &item_seeds)?;

        if !breakdown.is_finite() {
            return Ok(TrainOutcome {
                final_checkpoint: last_good,
                loss_log: log_path,
                halted: Some(format!("non-finite loss at step {step}")),
                steps_run: step,
                last_breakdown,
            });
        }

        adam_step(&mut params, &grads, &mut adam)?;
        writeln!(log, "{}", crate::objective::loss_log_line(step, &breakdown))?;
        last_breakdown = Some(breakdown);

        let next = step + 1;
        if run.log_every > 0 && next % run.log_every == 0 {
            println!(
                "step {next}/{}: total {:.5} recon {:.5} kl_c {:.5} kl_s {:.5}",
                run.steps, breakdown.total, breakdown.reconstruction, breakdown.content_kl,
                breakdown.speaker_kl
            );
        }
        if run.validate_every > 0 && next % run.validate_every == 0 && !valid_utts.is_empty() {
            match validation_loss(&params, cfg, valid_utts, run.crop_len, betas) {
                Ok(v) => println!("step {next}: validation reconstruction {v:.5}"),
                Err(e) => println!("step {next}: validation skipped ({e})"),
            }
        }
        if run.checkpoint_every > 0 && next % run.checkpoint_every == 0 && next < run.steps {
            let p = ckpt_path(next);
            write_ckpt(&params, &adam, next, &p)?;
            last_good = p;
        }
    }

    let final_path = out_dir.join("ckpt_final.bin");
    write_ckpt(&params, &adam, run.steps, &final_path)?;
    log.flush()?;
    Ok(TrainOutcome {
        final_checkpoint: final_path,
        loss_log: log_path,
        halted: None,
        steps_run: run.steps,
        last_breakdown,
    })
}

/// Ordered (beta_c, beta_s) trials following the tuning heuristic: start with
/// a large content weight and a small speaker weight, decrease the content
/// weight stepwise with the speaker weight proportional, then vary the
/// speaker weight independently at the final content weight. Optionally
/// guarantees coverage of an explicit grid. Pure planning; no side effects.
#[derive(Debug, Clone)]
pub struct ScheduleHintConfig {
    pub start_beta_c: f64,
    pub start_beta_s: f64,
    pub proportional_steps: usize,
    pub decay: f64,
    pub independent_factors: Vec<f64>,
    pub cover_grid: Option<(Vec<f64>, Vec<f64>)>,
}

impl Default for ScheduleHintConfig {
    fn default() -> Self {
        ScheduleHintConfig {
            start_beta_c: 0.1,
            start_beta_s: 1e-3,
            proportional_steps: 3,
            decay: 0.1,
            independent_factors: vec![10.0, 1.0, 0.1],
            cover_grid: None,
        }
    }
}

pub fn tune_schedule_hint(cfg: &ScheduleHintConfig) -> Vec<(f64, f64)> {
    let mut trials: Vec<(f64, f64)> = Vec::new();
    let push = |bc: f64, bs: f64, trials: &mut Vec<(f64, f64)>| {
        let dup = trials
            .iter()
            .any(|&(c, s)| (c - bc).abs() <= 1e-12 * bc.abs() && (s - bs).abs() <= 1e-12 * bs.abs());
        if !dup {
            trials.push((bc, bs));
        }
    };

    let mut bc = cfg.start_beta_c;
    let mut bs = cfg.start_beta_s;
    for _ in 0..cfg.proportional_steps {
        push(bc, bs, &mut trials);
        bc *= cfg.decay;
        bs *= cfg.decay;
    }
    let final_bc = trials.last().map(|&(c, _)| c).unwrap_or(cfg.start_beta_c);
    let final_bs = trials.last().map(|&(_, s)| s).unwrap_or(cfg.start_beta_s);
    for &f in &cfg.independent_factors {
        push(final_bc, final_bs * f, &mut trials);
    }
    if let Some((grid_c, grid_s)) = &cfg.cover_grid {
        let mut cs: Vec<f64> = grid_c.clone();
        cs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut ss: Vec<f64> = grid_s.clone();
        ss.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &c in &cs {
            for &s in &ss {
                push(c, s, &mut trials);
            }
        }
    }
    trials
}
