//! The operator surface behind the thin CLI binary: corpus generation,
//! training, evaluation, sweeps, conversion, and the verification suites.
//! Every command is a library function so the runnable examples and the test
//! suites drive the same code paths as the binary.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::config::{ConfigError, DataSource, RunConfig};
use crate::data::{self, Split, SynthCorpus, Utterance};
use crate::eval::sweep::{sweep, trend_verdicts, SweepTable, TrendVerdicts};
use crate::eval::{
    compute_eer, conversion_probe, sv_protocol, EvalError, EvalReport, ProbeReport, Representation,
};

use crate::objective::mi::{
    analytic_family_posterior, analytic_gaussian_lab, estimate_variational_mi,
    stratified_standard_normal,
};
use crate::objective::{gradient_check_suite, kl_diag_gaussian_to_standard};
use crate::rng::{derive_rng, stream};
use crate::training::{checkpoint, train, TrainError, TrainOutcome};

/// Stable process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Success = 0,
    Validation = 1,
    Runtime = 2,
}

/// A command failure with its exit classification; the message is a single
/// line.
#[derive(Debug)]
pub struct CommandError {
    pub kind: ExitKind,
    pub message: String,
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CommandError {}

impl CommandError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CommandError {
            kind: ExitKind::Validation,
            message: one_line(msg.into()),
        }
    }
    pub fn runtime(msg: impl Into<String>) -> Self {
        CommandError {
            kind: ExitKind::Runtime,
            message: one_line(msg.into()),
        }
    }
}

fn one_line(s: String) -> String {
    s.replace('\n', " | ")
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(_) => CommandError::runtime(e.to_string()),
            _ => CommandError::validation(e.to_string()),
        }
    }
}

impl From<data::DataError> for CommandError {
    fn from(e: data::DataError) -> Self {
        match e {
            data::DataError::Config(_) | data::DataError::TooShort { .. } => {
                CommandError::validation(e.to_string())
            }
            _ => CommandError::runtime(e.to_string()),
        }
    }
}

impl From<TrainError> for CommandError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::Tensor(_) | TrainError::Version { .. } => {
                CommandError::validation(e.to_string())
            }
            _ => CommandError::runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for CommandError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Protocol(_) | EvalError::Tensor(_) => {
                CommandError::validation(e.to_string())
            }
            EvalError::Io(_) => CommandError::runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError::runtime(format!("io: {e}"))
    }
}

fn prepare_out_dir(out: &Path, force: bool) -> Result<(), CommandError> {
    if out.exists() {
        let non_empty = std::fs::read_dir(out)
            .map(|mut it| it.next().is_some())
            .unwrap_or(false);
        if non_empty && !force {
            return Err(CommandError::validation(format!(
                "output directory {} exists and is not empty; pass --force to reuse it",
                out.display()
            )));
        }
    }
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn echo_config(cfg: &RunConfig, out: &Path) -> Result<(), CommandError> {
    std::fs::write(
        out.join("config.resolved.toml"),
        crate::config::to_resolved_toml(cfg),
    )?;
    Ok(())
}

fn synth_config(cfg: &RunConfig) -> Result<&crate::data::SynthConfig, CommandError> {
    match &cfg.data {
        DataSource::Synth(s) => Ok(s),
        DataSource::ManifestDir(_) => Err(CommandError::validation(
            "this command requires a synthetic data source ([data.synth])",
        )),
    }
}

/// Summary printed by `gen-data`.
#[derive(Debug)]
pub struct GenDataSummary {
    pub speakers: usize,
    pub utterances: usize,
    pub total_frames: usize,
    pub out_dir: PathBuf,
}

pub fn gen_data(cfg: &RunConfig, out: &Path, force: bool) -> Result<GenDataSummary, CommandError> {
    let synth = synth_config(cfg)?;
    prepare_out_dir(out, force)?;
    let corpus = data::generate_synthetic_corpus(synth, cfg.train.seed)?;
    data::write_corpus(out, &corpus)?;
    echo_config(cfg, out)?;
    let speakers = corpus.truth.speaker_factors_by_id.len();
    let total_frames = corpus.utterances.iter().map(|u| u.frames).sum();
    Ok(GenDataSummary {
        speakers,
        utterances: corpus.utterances.len(),
        total_frames,
        out_dir: out.to_path_buf(),
    })
}

/// Materialize the configured data source as an in-memory corpus view.
pub enum CorpusView {
    Synth(SynthCorpus),
    Loaded {
        train: Vec<Utterance>,
        valid: Vec<Utterance>,
        test: Vec<Utterance>,
        truth: Option<data::CorpusTruth>,
    },
}

impl CorpusView {
    pub fn split(&self, split: Split) -> Vec<&Utterance> {
        match self {
            CorpusView::Synth(c) => c.split(split),
            CorpusView::Loaded {
                train,
                valid,
                test,
                ..
            } => match split {
                Split::Train => train.iter().collect(),
                Split::Valid => valid.iter().collect(),
                Split::Test => test.iter().collect(),
            },
        }
    }

    pub fn truth(&self) -> Option<&data::CorpusTruth> {
        match self {
            CorpusView::Synth(c) => Some(&c.truth),
            CorpusView::Loaded { truth, .. } => truth.as_ref(),
        }
    }
}

pub fn load_data(cfg: &RunConfig) -> Result<CorpusView, CommandError> {
    match &cfg.data {
        DataSource::Synth(s) => Ok(CorpusView::Synth(data::generate_synthetic_corpus(
            s,
            cfg.train.seed,
        )?)),
        DataSource::ManifestDir(dir) => {
            let load = |name: &str, split: Split| -> Result<Vec<Utterance>, CommandError> {
                let path = dir.join(name);
                if path.exists() {
                    Ok(data::load_manifest_utterances(&path, split)?)
                } else {
                    Ok(Vec::new())
                }
            };
            let train = load("train.tsv", Split::Train)?;
            let valid = load("valid.tsv", Split::Valid)?;
            let test = load("test.tsv", Split::Test)?;
            if train.is_empty() && test.is_empty() {
                return Err(CommandError::validation(format!(
                    "no train.tsv or test.tsv found under {}",
                    dir.display()
                )));
            }
            let truth = data::load_truth(dir).ok();
            Ok(CorpusView::Loaded {
                train,
                valid,
                test,
                truth,
            })
        }
    }
}

pub fn train_cmd(
    cfg: &RunConfig,
    out: &Path,
    force: bool,
    resume: Option<&Path>,
) -> Result<TrainOutcome, CommandError> {
    prepare_out_dir(out, force)?;
    echo_config(cfg, out)?;
    let corpus = load_data(cfg)?;
    let train_utts = corpus.split(Split::Train);
    let valid_utts = corpus.split(Split::Valid);
    if train_utts.is_empty() {
        return Err(CommandError::validation("training split is empty"));
    }
    let resume_ck = match resume {
        Some(p) => Some(checkpoint::load(p)?),
        None => None,
    };
    let outcome = train(
        &cfg.model,
        &cfg.train,
        &train_utts,
        &valid_utts,
        out,
        resume_ck,
    )?;
    Ok(outcome)
}

pub fn eval_cmd(
    checkpoint_path: &Path,
    manifest_path: &Path,
    out: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<EvalReport, CommandError> {
    let ck = checkpoint::load(checkpoint_path)?;
    let utts = data::load_manifest_utterances(manifest_path, Split::Test)?;
    let refs: Vec<&Utterance> = utts.iter().collect();
    let seed = seed_override.unwrap_or(crate::config::EvalConfig::defaults().protocol_seed);
    let report = sv_protocol(
        &ck.params,
        &ck.model,
        &refs,
        (ck.run.beta_c, ck.run.beta_s),
        seed,
    )?;
    if let Some(out) = out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("eval.tsv"), report.to_tsv())?;
        std::fs::write(
            out.join("eval.json"),
            serde_json::to_string_pretty(&report)
                .map_err(|e| CommandError::runtime(e.to_string()))?,
        )?;
    }
    Ok(report)
}

pub fn convert_cmd(
    checkpoint_path: &Path,
    source: &Path,
    target: &Path,
    out_file: &Path,
) -> Result<(), CommandError> {
    let ck = checkpoint::load(checkpoint_path)?;
    let (src, src_frames, src_dim) = data::features::read_feature_file(source)?;
    let (tgt, tgt_frames, tgt_dim) = data::features::read_feature_file(target)?;
    for (dim, name) in [(src_dim, "source"), (tgt_dim, "target")] {
        if dim != ck.model.feature_dim {
            return Err(CommandError::validation(format!(
                "{name} feature dimension {dim} does not match the model's {}",
                ck.model.feature_dim
            )));
        }
    }
    let converted = crate::model::net::convert(
        &ck.params,
        &ck.model,
        &src,
        src_frames,
        &tgt,
        tgt_frames,
    )
    .map_err(|e| CommandError::validation(e.to_string()))?;
    data::features::write_feature_file(out_file, &converted, src_frames, ck.model.feature_dim)?;
    Ok(())
}

/// Sweep output: table, verdicts, probe of the best cell.
#[derive(Debug)]
pub struct SweepOutcome {
    pub table: SweepTable,
    pub verdicts: TrendVerdicts,
    pub best_cell: Option<(f64, f64)>,
    pub probe: Option<ProbeReport>,
}

/// Disentanglement quality of a report: worst-language content EER minus
/// worst-language speaker EER (higher is better).
pub fn disentanglement_margin(report: &EvalReport) -> f64 {
    let mut min_zc = f64::INFINITY;
    let mut max_zs = f64::NEG_INFINITY;
    for lang in crate::data::Language::both() {
        if let Some(c) = report.cell(Representation::Content, lang) {
            min_zc = min_zc.min(c.eer);
        }
        if let Some(c) = report.cell(Representation::Speaker, lang) {
            max_zs = max_zs.max(c.eer);
        }
    }
    min_zc - max_zs
}

/// Train and evaluate every grid cell with a shared seed, then probe
/// conversion on the best cell. Cell checkpoints and logs land in
/// `out/cell_<beta_c>_<beta_s>/`.
pub fn sweep_cmd(cfg: &RunConfig, out: &Path, force: bool) -> Result<SweepOutcome, CommandError> {
    prepare_out_dir(out, force)?;
    echo_config(cfg, out)?;
    let corpus = load_data(cfg)?;
    let train_utts = corpus.split(Split::Train);
    let valid_utts = corpus.split(Split::Valid);
    let test_utts = corpus.split(Split::Test);
    if train_utts.is_empty() || test_utts.is_empty() {
        return Err(CommandError::validation(
            "sweep needs non-empty train and test splits",
        ));
    }

    let mut checkpoints: Vec<((f64, f64), PathBuf)> = Vec::new();
    let table = sweep(&cfg.eval.grid_beta_c, &cfg.eval.grid_beta_s, |bc, bs| {
        let cell_dir = out.join(format!("cell_{bc:e}_{bs:e}"));
        let mut run = cfg.train.clone();
        run.beta_c = bc;
        run.beta_s = bs;
        let outcome = train(&cfg.model, &run, &train_utts, &valid_utts, &cell_dir, None)
            .map_err(|e| e.to_string())?;
        if let Some(reason) = outcome.halted {
            return Err(format!("training halted: {reason}"));
        }
        let ck = checkpoint::load(&outcome.final_checkpoint).map_err(|e| e.to_string())?;
        let report = sv_protocol(
            &ck.params,
            &ck.model,
            &test_utts,
            (bc, bs),
            cfg.eval.protocol_seed,
        )
        .map_err(|e| e.to_string())?;
        checkpoints.push(((bc, bs), outcome.final_checkpoint.clone()));
        println!("cell (beta_c={bc:e}, beta_s={bs:e}) done");
        for c in &report.cells {
            println!(
                "  {} {}: eer {:.4} ({} pos / {} neg)",
                c.representation.tag(),
                c.language.tag(),
                c.eer,
                c.n_pos,
                c.n_neg
            );
        }
        Ok(report)
    });

    let verdicts = trend_verdicts(&table);

    // best cell by disentanglement margin
    let mut best: Option<((f64, f64), f64)> = None;
    for cell in &table.cells {
        if let Ok(report) = &cell.outcome {
            let margin = disentanglement_margin(report);
            if best.map(|(_, m)| margin > m).unwrap_or(true) {
                best = Some(((cell.beta_c, cell.beta_s), margin));
            }
        }
    }

    let mut probe = None;
    if let (Some(((bc, bs), _)), Some(truth)) = (best, corpus.truth()) {
        if let Some((_, ck_path)) = checkpoints
            .iter()
            .find(|((c, s), _)| (*c - bc).abs() <= 1e-12 * bc && (*s - bs).abs() <= 1e-12 * bs.abs().max(1e-300))
        {
            let ck = checkpoint::load(ck_path)?;
            probe = Some(conversion_probe(
                &ck.params,
                &ck.model,
                &test_utts,
                truth,
                cfg.eval.protocol_seed,
                cfg.eval.probe_pairs,
            )?);
        }
    }

    std::fs::write(out.join("sweep.tsv"), table.to_tsv())?;
    let summary = serde_json::json!({
        "verdicts": verdicts,
        "best_cell": best.map(|((bc, bs), margin)| serde_json::json!({
            "beta_c": bc, "beta_s": bs, "margin": margin
        })),
        "probe": probe,
    });
    std::fs::write(
        out.join("sweep.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| CommandError::runtime(e.to_string()))?,
    )?;

    Ok(SweepOutcome {
        table,
        verdicts,
        best_cell: best.map(|(cell, _)| cell),
        probe,
    })
}

// ---- verification suites ---------------------------------------------------

/// One verification check outcome.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed,
            detail,
        }
    }
    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

/// Gradient fidelity: every tensor op plus the end-to-end objective against
/// central finite differences, 64-bit, threshold 1e-4.
pub fn verify_gradients(seed: u64) -> Result<Vec<CheckResult>, CommandError> {
    let reports = gradient_check_suite(seed).map_err(|e| CommandError::runtime(e.to_string()))?;
    Ok(reports
        .into_iter()
        .map(|r| {
            CheckResult::new(
                &format!("gradients.{}", r.op_name),
                r.passes(1e-4),
                format!(
                    "max relative error {:.3e} over {} probes (threshold 1e-4)",
                    r.max_relative_error, r.probe_count
                ),
            )
        })
        .collect())
}

/// Closed-form KL: three worked values, plus Monte Carlo agreement within 1%
/// relative at 1e6 samples for 20 randomized diagonal posteriors.
pub fn verify_kl(seed: u64) -> Result<Vec<CheckResult>, CommandError> {
    use crate::model::{GaussianPosterior, PosteriorForm};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    let mut results = Vec::new();
    let vector = |mean: Vec<f64>, lv: Vec<f64>| {
        let dim = mean.len();
        GaussianPosterior::new(PosteriorForm::Vector { dim }, mean, lv).unwrap()
    };

    let zero = kl_diag_gaussian_to_standard(&vector(vec![0.0, 0.0], vec![0.0, 0.0]));
    results.push(CheckResult::new(
        "kl.prior_is_zero",
        zero.abs() < 1e-9,
        format!("KL(prior || prior) = {zero:e} (threshold 1e-9)"),
    ));
    let half = kl_diag_gaussian_to_standard(&vector(vec![1.0, 0.0], vec![0.0, 0.0]));
    results.push(CheckResult::new(
        "kl.mean_shift",
        (half - 0.5).abs() < 1e-9,
        format!("KL = {half} vs 0.5 (threshold 1e-9)"),
    ));
    let ve = kl_diag_gaussian_to_standard(&vector(vec![0.0], vec![1.0]));
    let want = 0.5 * (std::f64::consts::E - 2.0);
    results.push(CheckResult::new(
        "kl.variance_e",
        (ve - want).abs() < 1e-3,
        format!("KL = {ve:.6} vs 0.5(e-2) = {want:.6} (threshold 1e-3)"),
    ));

    let mut rng = derive_rng(seed, &[stream::CHECK, 0x4B]);
    let mut worst: f64 = 0.0;
    let n = 1_000_000usize;
    for _ in 0..20 {
        let d = 3;
        let mean: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let lv: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let post = vector(mean.clone(), lv.clone());
        let closed = kl_diag_gaussian_to_standard(&post);
        let mut acc = 0.0;
        for _ in 0..n {
            let mut log_q = 0.0;
            let mut log_p = 0.0;
            for j in 0..d {
                let e: f64 = StandardNormal.sample(&mut rng);
                let z = mean[j] + (0.5 * lv[j]).exp() * e;
                log_q += -0.5 * (z - mean[j]).powi(2) / lv[j].exp()
                    - 0.5 * (2.0 * std::f64::consts::PI).ln()
                    - 0.5 * lv[j];
                log_p += -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
            }
            acc += log_q - log_p;
        }
        let mc = acc / n as f64;
        worst = worst.max(((mc - closed) / closed).abs());
    }
    results.push(CheckResult::new(
        "kl.monte_carlo_20x1e6",
        worst < 0.01,
        format!("worst relative deviation {worst:.4} over 20 posteriors (threshold 0.01)"),
    ));
    Ok(results)
}

/// MI bound lab: nonnegative gap over the analytic grid, estimator agreement
/// within 0.02 at n = 1e4, and the exact values at (a=1, s2=1).
pub fn verify_mi_bound(seed: u64) -> Result<Vec<CheckResult>, CommandError> {
    let mut results = Vec::new();

    let (mi11, ekl11) = analytic_gaussian_lab(1.0, 1.0).map_err(|e| CommandError::runtime(e.to_string()))?;
    results.push(CheckResult::new(
        "mi.exact_values_a1_s1",
        (mi11 - 0.5 * 2.0f64.ln()).abs() < 1e-12 && (ekl11 - 0.5).abs() < 1e-12,
        format!("mi = {mi11:.6} (0.5 ln 2), expected_kl = {ekl11:.6} (0.5)"),
    ));

    let grid_a = [0.0, 0.5, 1.0, 2.0];
    let grid_s2 = [0.25, 1.0, 4.0];
    let mut min_gap = f64::INFINITY;
    let mut worst_mi: f64 = 0.0;
    let mut worst_ekl: f64 = 0.0;
    for (ai, &a) in grid_a.iter().enumerate() {
        for (si, &s2) in grid_s2.iter().enumerate() {
            let (mi_exact, ekl_exact) =
                analytic_gaussian_lab(a, s2).map_err(|e| CommandError::runtime(e.to_string()))?;
            min_gap = min_gap.min(ekl_exact - mi_exact);

            let n = 10_000usize;
            let mut rng = derive_rng(seed, &[stream::CHECK, 40, ai as u64, si as u64]);
            let xs = stratified_standard_normal(n, &mut rng);
            let mut idx = 0usize;
            let report = estimate_variational_mi(
                |x: &f64| analytic_family_posterior(a, s2, *x),
                move |_| {
                    let x = xs[idx % n];
                    idx += 1;
                    x
                },
                n,
                &mut rng,
            )
            .map_err(|e| CommandError::runtime(e.to_string()))?;
            worst_mi = worst_mi.max((report.mi_estimate - mi_exact).abs());
            worst_ekl = worst_ekl.max((report.expected_kl - ekl_exact).abs());
        }
    }
    results.push(CheckResult::new(
        "mi.bound_gap_nonnegative",
        min_gap >= 0.0,
        format!("min gap over the 4x3 grid = {min_gap:.6}"),
    ));
    results.push(CheckResult::new(
        "mi.estimator_matches_exact",
        worst_mi < 0.02 && worst_ekl < 0.02,
        format!(
            "worst |mi - exact| = {worst_mi:.4}, worst |ekl - exact| = {worst_ekl:.4} at n=1e4 (threshold 0.02)"
        ),
    ));
    Ok(results)
}

/// EER oracle: agreement with the brute-force sweep on 100 randomized score
/// sets, perfect separation at 0, identical distributions at 0.5.
pub fn verify_eer_oracle(seed: u64) -> Result<Vec<CheckResult>, CommandError> {
    use rand::Rng;
    let mut results = Vec::new();

    let mut rng = derive_rng(seed, &[stream::CHECK, 50]);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n_pos = rng.random_range(1..60);
        let n_neg = rng.random_range(1..60);
        let quantize = rng.random::<bool>();
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let v = rng.random::<f64>() * 2.0 - 1.0;
            if quantize {
                (v * 8.0).round() / 8.0
            } else {
                v
            }
        };
        let pos: Vec<f64> = (0..n_pos).map(|_| draw(&mut rng) + 0.2).collect();
        let neg: Vec<f64> = (0..n_neg).map(|_| draw(&mut rng)).collect();
        let fast = compute_eer(&pos, &neg).map_err(|e| CommandError::runtime(e.to_string()))?;
        let slow = crate::eval::brute_force_eer(&pos, &neg)
            .map_err(|e| CommandError::runtime(e.to_string()))?;
        worst = worst.max((fast - slow).abs());
    }
    results.push(CheckResult::new(
        "eer.brute_force_agreement",
        worst < 1e-12,
        format!("worst |fast - oracle| = {worst:e} over 100 randomized sets"),
    ));

    let perfect = compute_eer(&[0.9, 0.8], &[0.7, 0.6])
        .map_err(|e| CommandError::runtime(e.to_string()))?;
    results.push(CheckResult::new(
        "eer.perfect_separation",
        perfect == 0.0,
        format!("eer = {perfect}"),
    ));

    let mut rng = derive_rng(seed, &[stream::CHECK, 51]);
    let pos: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
    let neg: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
    let chance = compute_eer(&pos, &neg).map_err(|e| CommandError::runtime(e.to_string()))?;
    results.push(CheckResult::new(
        "eer.identical_distributions",
        (chance - 0.5).abs() < 0.02,
        format!("eer = {chance:.4} (0.5 +- 0.02 at 1e4+1e4 scores)"),
    ));
    Ok(results)
}

/// Run one named verification suite.
pub fn verify_cmd(suite: &str, seed: u64) -> Result<Vec<CheckResult>, CommandError> {
    match suite {
        "gradients" => verify_gradients(seed),
        "kl" => verify_kl(seed),
        "mi-bound" => verify_mi_bound(seed),
        "eer-oracle" => verify_eer_oracle(seed),
        other => Err(CommandError::validation(format!(
            "unknown verify suite {other:?}; accepted: gradients, kl, mi-bound, eer-oracle"
        ))),
    }
}

/// Tiny-model end-to-end demo helper shared by examples and tests: returns
/// (config, corpus) for a fast synthetic run.
pub fn demo_config(steps: u64, seed: u64) -> Result<RunConfig, CommandError> {
    let mut cfg = crate::config::load_run_config(None, Some("tiny"), Some(seed))?;
    if let DataSource::Synth(s) = &mut cfg.data {
        s.speakers_per_language = 6;
        s.utterances_per_speaker = 6;
        s.valid_speakers_per_language = 1;
        s.test_speakers_per_language = 2;
        s.frame_len_range = (64, 96);
    }
    cfg.train.steps = steps;
    cfg.train.batch_size = 8;
    crate::config::validate(&cfg)?;
    Ok(cfg)
}

/// Print check results and return the exit classification.
pub fn report_checks(results: &[CheckResult]) -> ExitKind {
    let mut all = true;
    for r in results {
        println!("{}", r.line());
        all &= r.passed;
    }
    if all {
        ExitKind::Success
    } else {
        ExitKind::Runtime
    }
}
