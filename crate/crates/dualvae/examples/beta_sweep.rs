//! Weight-grid sweep at micro scale: the tuning heuristic's trial order, a
//! small grid trained per cell, the emitted table, and trend verdicts.
//!
//! The full-size grid lives in the acceptance suite; this example keeps the
//! corpus and step budget small enough for a quick run.
//!
//! cargo run --example beta_sweep

use dualvae::commands::{demo_config, load_data};
use dualvae::data::Split;
use dualvae::eval::sweep::{sweep, trend_verdicts};
use dualvae::eval::sv_protocol;
use dualvae::training::{checkpoint, train, tune_schedule_hint, ScheduleHintConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // the tuning heuristic: start with a large content weight, decrease it
    // with the speaker weight proportional, then tune the speaker weight
    let trials = tune_schedule_hint(&ScheduleHintConfig {
        cover_grid: Some((vec![1e-3, 1e-2], vec![1e-5, 1e-4, 1e-3])),
        ..ScheduleHintConfig::default()
    });
    println!("suggested trial order:");
    for (bc, bs) in &trials {
        println!("  beta_c = {bc:<8e} beta_s = {bs:e}");
    }

    let mut cfg = demo_config(400, 13)?;
    cfg.train.log_every = 0;
    let corpus = load_data(&cfg)?;
    let train_utts = corpus.split(Split::Train);
    let test_utts = corpus.split(Split::Test);

    println!("\ntraining a 2x2 grid at micro scale...");
    let table = sweep(&[1e-3, 1e-2], &[1e-5, 1e-3], |bc, bs| {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut run = cfg.train.clone();
        run.beta_c = bc;
        run.beta_s = bs;
        let outcome = train(&cfg.model, &run, &train_utts, &[], dir.path(), None)
            .map_err(|e| e.to_string())?;
        let ck = checkpoint::load(&outcome.final_checkpoint).map_err(|e| e.to_string())?;
        sv_protocol(&ck.params, &ck.model, &test_utts, (bc, bs), cfg.eval.protocol_seed)
            .map_err(|e| e.to_string())
    });

    print!("\n{}", table.to_tsv());
    let v = trend_verdicts(&table);
    println!(
        "verdicts: content eer nondecreasing in beta_c = {}; opposite trends along beta_s = {}",
        v.content_eer_nondecreasing_in_beta_c, v.beta_s_opposite_trends
    );
    for d in &v.detail {
        println!("  note: {d}");
    }
    println!("(micro-scale runs are noisy; the acceptance suite uses the full corpus and budget)");
    Ok(())
}
