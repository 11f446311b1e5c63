//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with output visible:
//!   cargo test -p dualvae --test acceptance -- --nocapture
//!
//! The disentanglement-trend criterion trains the full 2x3 weight grid on the
//! tiny-preset synthetic corpus and dominates the runtime (tens of minutes on
//! a desktop CPU).

use std::time::Instant;

use dualvae::commands::{self, demo_config, sweep_cmd};
use dualvae::config::load_run_config;
use dualvae::data::{Language, Split};
use dualvae::eval::Representation;
use dualvae::model::{ModelConfig, ModelParams};
use dualvae::objective::{total_loss, Betas, SampleMode};
use dualvae::rng::derive_rng;
use dualvae::training::{checkpoint, train};

fn criterion(id: &str, passed: bool, detail: &str) {
    println!(
        "[criterion {id}] {}: {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
}

fn assert_checks(id: &str, results: &[commands::CheckResult]) {
    let all = results.iter().all(|r| r.passed);
    let detail = results
        .iter()
        .map(|r| format!("{}={}", r.name, if r.passed { "ok" } else { "FAIL" }))
        .collect::<Vec<_>>()
        .join(", ");
    criterion(id, all, &detail);
    for r in results {
        assert!(r.passed, "{}", r.line());
    }
}

#[test]
fn criterion_1_gradient_fidelity() {
    let start = Instant::now();
    let results = commands::verify_gradients(42).expect("gradient suite runs");
    let elapsed = start.elapsed();
    assert_checks("1-gradients", &results);
    criterion(
        "1-gradients-runtime",
        elapsed.as_secs() < 120,
        &format!("{:.1}s (budget 120s)", elapsed.as_secs_f64()),
    );
    assert!(
        elapsed.as_secs() < 120,
        "gradient verification took {elapsed:?}, budget is 2 minutes"
    );
}

#[test]
fn criterion_2_kl_oracle() {
    let results = commands::verify_kl(42).expect("kl suite runs");
    assert_checks("2-kl", &results);
}

#[test]
fn criterion_3_mi_bound() {
    let results = commands::verify_mi_bound(42).expect("mi suite runs");
    assert_checks("3-mi-bound", &results);
}

#[test]
fn criterion_4_eer_oracle() {
    let results = commands::verify_eer_oracle(42).expect("eer suite runs");
    assert_checks("4-eer", &results);
}

#[test]
fn criterion_5_beta_vae_reduction() {
    use rand::Rng;
    // equal gates reduce to the single-weight objective over the
    // concatenated latent, to machine precision, in f64
    let cfg = ModelConfig::tiny();
    let params: ModelParams<f64> = ModelParams::init(&cfg, 3).unwrap();
    let mut rng = derive_rng(5, &[0xAC]);
    let mut worst: f64 = 0.0;
    for case in 0..5 {
        let frames = 20 + 4 * case;
        let features: Vec<f64> = (0..frames * cfg.feature_dim)
            .map(|_| rng.random::<f64>() - 0.5)
            .collect();
        for beta in [0.0, 1e-3, 0.3, 1.0, 4.0] {
            let b = total_loss(
                &params,
                &cfg,
                &features,
                frames,
                Betas::new(beta, beta).unwrap(),
                SampleMode::Deterministic,
            )
            .unwrap();
            let single = b.reconstruction + beta * (b.content_kl + b.speaker_kl);
            let rel = (b.total - single).abs() / single.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    criterion(
        "5-beta-vae-reduction",
        worst <= 1e-14,
        &format!("worst relative deviation {worst:.2e} (threshold 1e-14)"),
    );
    assert!(worst <= 1e-14, "reduction deviates by {worst:e}");
}

#[test]
fn criteria_6_and_7_disentanglement_trend_and_conversion_probe() {
    // the full tiny-preset pipeline: 30 speakers per language, 20 utterances
    // each, the 2x3 weight grid, one trained model per cell, shared seed
    let cfg = load_run_config(None, Some("tiny"), None).expect("tiny preset loads");
    let out = tempfile::tempdir().unwrap();
    let outcome = sweep_cmd(&cfg, out.path(), true).expect("sweep runs");

    let grid_c = &cfg.eval.grid_beta_c;
    let grid_s = &cfg.eval.grid_beta_s;
    let eer = |bc: f64, bs: f64, repr: Representation, lang: Language| -> f64 {
        outcome
            .table
            .cell(bc, bs)
            .and_then(|c| c.outcome.as_ref().ok())
            .and_then(|r| r.cell(repr, lang))
            .map(|c| c.eer)
            .unwrap_or(f64::NAN)
    };

    // (i) content EER non-decreasing in beta_c at every beta_s, per language
    let mut trend_i = true;
    for lang in Language::both() {
        for &bs in grid_s {
            for w in grid_c.windows(2) {
                let (lo, hi) = (
                    eer(w[0], bs, Representation::Content, lang),
                    eer(w[1], bs, Representation::Content, lang),
                );
                if !(hi >= lo - 1e-9) {
                    println!(
                        "  violation (i): z_c({lang}) at beta_s={bs}: {lo:.4} -> {hi:.4}"
                    );
                    trend_i = false;
                }
            }
        }
    }
    criterion(
        "6i-zc-nondecreasing-in-beta-c",
        trend_i,
        "content EER non-decreasing in beta_c at every beta_s, both languages",
    );

    // (ii) speaker EER non-decreasing in beta_s at every beta_c, per language
    let mut trend_ii = true;
    for lang in Language::both() {
        for &bc in grid_c {
            for w in grid_s.windows(2) {
                let (lo, hi) = (
                    eer(bc, w[0], Representation::Speaker, lang),
                    eer(bc, w[1], Representation::Speaker, lang),
                );
                if !(hi >= lo - 1e-9) {
                    println!(
                        "  violation (ii): z_s({lang}) at beta_c={bc}: {lo:.4} -> {hi:.4}"
                    );
                    trend_ii = false;
                }
            }
        }
    }
    criterion(
        "6ii-zs-nondecreasing-in-beta-s",
        trend_ii,
        "speaker EER non-decreasing in beta_s at every beta_c, both languages",
    );

    // (iii) best cell: separation thresholds per language
    let (best_c, best_s) = outcome.best_cell.expect("at least one cell trained");
    let mut sep = true;
    let mut sep_detail = format!("best cell (beta_c={best_c:e}, beta_s={best_s:e}):");
    for lang in Language::both() {
        let zc = eer(best_c, best_s, Representation::Content, lang);
        let zs = eer(best_c, best_s, Representation::Speaker, lang);
        sep_detail.push_str(&format!(" [{lang}] z_c={zc:.3} z_s={zs:.3}"));
        sep &= zs <= 0.15 && zc >= 0.35;
    }
    criterion("6iii-best-cell-separation", sep, &sep_detail);

    assert!(trend_i, "criterion 6(i) failed");
    assert!(trend_ii, "criterion 6(ii) failed");
    assert!(sep, "criterion 6(iii) failed: {sep_detail}");

    // criterion 7: conversion probe on the best cell
    let probe = outcome.probe.expect("probe ran on the best cell");
    let pass7 = probe.intra_score >= 0.9 && probe.cross_score >= 0.75;
    criterion(
        "7-conversion-probe",
        pass7,
        &format!(
            "intra {:.3} (>= 0.90, {} pairs), cross {:.3} (>= 0.75, {} pairs)",
            probe.intra_score, probe.n_intra, probe.cross_score, probe.n_cross
        ),
    );
    assert!(
        pass7,
        "conversion probe below thresholds: intra {} cross {}",
        probe.intra_score, probe.cross_score
    );
}

#[test]
fn criterion_8_reproducibility() {
    // two identical short runs produce bit-identical checkpoints; a resumed
    // run matches the uninterrupted one; file formats round-trip bit-exactly
    let cfg = demo_config(24, 77).unwrap();
    let corpus = commands::load_data(&cfg).unwrap();
    let train_utts = corpus.split(Split::Train);
    let valid_utts = corpus.split(Split::Valid);

    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let o1 = train(&cfg.model, &cfg.train, &train_utts, &valid_utts, d1.path(), None).unwrap();
    let o2 = train(&cfg.model, &cfg.train, &train_utts, &valid_utts, d2.path(), None).unwrap();
    let bytes1 = std::fs::read(&o1.final_checkpoint).unwrap();
    let bytes2 = std::fs::read(&o2.final_checkpoint).unwrap();
    let identical = bytes1 == bytes2;
    criterion(
        "8-identical-runs",
        identical,
        &format!("final checkpoints byte-identical ({} bytes)", bytes1.len()),
    );
    assert!(identical);

    // resume
    let mut run_ck = cfg.train.clone();
    run_ck.checkpoint_every = 12;
    let da = tempfile::tempdir().unwrap();
    let _ = train(&cfg.model, &run_ck, &train_utts, &valid_utts, da.path(), None).unwrap();
    let mid = checkpoint::load(&da.path().join("ckpt_step0000012.bin")).unwrap();
    let db = tempfile::tempdir().unwrap();
    let resumed = train(
        &cfg.model,
        &run_ck,
        &train_utts,
        &valid_utts,
        db.path(),
        Some(mid),
    )
    .unwrap();
    let full = train(
        &cfg.model,
        &run_ck,
        &train_utts,
        &valid_utts,
        &tempfile::tempdir().unwrap().keep(),
        None,
    )
    .unwrap();
    let a = checkpoint::load(&resumed.final_checkpoint).unwrap();
    let b = checkpoint::load(&full.final_checkpoint).unwrap();
    let mut resume_ok = a.adam.t == b.adam.t;
    for ((na, pa), (_, pb)) in a.params.iter().zip(b.params.iter()) {
        for (x, y) in pa.values.iter().zip(&pb.values) {
            if x.to_bits() != y.to_bits() {
                println!("  parameter {na} differs after resume");
                resume_ok = false;
                break;
            }
        }
    }
    criterion("8-resume", resume_ok, "resumed run matches uninterrupted run bit-exactly");
    assert!(resume_ok);

    // feature-file round trip
    use rand::Rng;
    let mut rng = derive_rng(9, &[0xF11E]);
    let (t, d) = (41, 16);
    let values: Vec<f32> = (0..t * d).map(|_| rng.random::<f32>() - 0.5).collect();
    let dir = tempfile::tempdir().unwrap();
    let fpath = dir.path().join("x.feat");
    dualvae::data::features::write_feature_file(&fpath, &values, t, d).unwrap();
    let (back, bt, bd) = dualvae::data::features::read_feature_file(&fpath).unwrap();
    let feat_ok =
        bt == t && bd == d && values.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits());
    criterion("8-feature-roundtrip", feat_ok, "write/read bit-exact");
    assert!(feat_ok);

    // checkpoint round trip
    let ck = checkpoint::load(&o1.final_checkpoint).unwrap();
    let cpath = dir.path().join("ck.bin");
    checkpoint::save(&cpath, &ck).unwrap();
    let ck_ok = std::fs::read(&cpath).unwrap() == bytes1;
    criterion("8-checkpoint-roundtrip", ck_ok, "load/save byte-identical");
    assert!(ck_ok);
}
