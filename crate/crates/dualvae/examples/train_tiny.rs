//! Short training run on a micro synthetic corpus; prints the loss trajectory
//! and demonstrates bit-exact checkpoint resumption.
//!
//! cargo run --example train_tiny

use dualvae::commands::{demo_config, load_data};
use dualvae::data::Split;
use dualvae::training::{checkpoint, train};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = demo_config(300, 5)?;
    cfg.train.log_every = 50;
    cfg.train.checkpoint_every = 150;

    let corpus = load_data(&cfg)?;
    let train_utts = corpus.split(Split::Train);
    let valid_utts = corpus.split(Split::Valid);
    let dir = tempfile::tempdir()?;

    let outcome = train(
        &cfg.model,
        &cfg.train,
        &train_utts,
        &valid_utts,
        dir.path(),
        None,
    )?;
    println!(
        "\nfinished {} steps; final checkpoint {}",
        outcome.steps_run,
        outcome.final_checkpoint.display()
    );

    // resume from the midpoint checkpoint and confirm bit-exact agreement
    let mid = checkpoint::load(&dir.path().join("ckpt_step0000150.bin"))?;
    let resume_dir = tempfile::tempdir()?;
    let resumed = train(
        &cfg.model,
        &cfg.train,
        &train_utts,
        &valid_utts,
        resume_dir.path(),
        Some(mid),
    )?;
    let a = checkpoint::load(&outcome.final_checkpoint)?;
    let b = checkpoint::load(&resumed.final_checkpoint)?;
    let identical = a
        .params
        .iter()
        .zip(b.params.iter())
        .all(|((_, pa), (_, pb))| {
            pa.values
                .iter()
                .zip(&pb.values)
                .all(|(x, y)| x.to_bits() == y.to_bits())
        });
    println!("resumed run matches uninterrupted run bit-exactly: {identical}");
    Ok(())
}
