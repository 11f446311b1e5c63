//! The speaker-verification EER protocol: enrollment averaging, cosine
//! scoring, and the exact-threshold EER sweep — demonstrated with oracle
//! embeddings (ground-truth speaker factors), random embeddings, and raw
//! feature time-means.
//!
//! cargo run --example speaker_verification

use dualvae::data::{generate_synthetic_corpus, SynthConfig, Split, Utterance};
use dualvae::eval::{compute_eer, sv_protocol_with, EvalError, Representation};
use dualvae::rng::derive_rng;
use rand::Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // EER basics
    println!("perfect separation: eer = {}", compute_eer(&[0.9, 0.8], &[0.7, 0.6])?);
    println!("interleaved ties:   eer = {}", compute_eer(&[0.9, 0.6], &[0.8, 0.5])?);

    let cfg = SynthConfig {
        speakers_per_language: 10,
        utterances_per_speaker: 12,
        valid_speakers_per_language: 1,
        test_speakers_per_language: 5,
        ..SynthConfig::tiny()
    };
    let corpus = generate_synthetic_corpus(&cfg, 21)?;
    let test: Vec<&Utterance> = corpus.split(Split::Test);
    println!("\ntest split: {} utterances", test.len());

    let show = |name: &str, report: &dualvae::eval::EvalReport| {
        println!("{name}:");
        for c in &report.cells {
            println!(
                "  {} ({}): eer {:.3} ({} pos / {} neg)",
                c.representation.tag(),
                c.language.tag(),
                c.eer,
                c.n_pos,
                c.n_neg
            );
        }
    };

    // oracle: embeddings are the true speaker factors -> EER ~ 0
    let oracle = sv_protocol_with(
        |u, _| Ok(u.truth.as_ref().unwrap().speaker_factor.clone()),
        &test,
        (0.0, 0.0),
        7,
    )?;
    show("ground-truth speaker factors", &oracle);

    // random embeddings -> EER ~ 0.5
    let random = sv_protocol_with(
        |u: &Utterance, _repr: Representation| -> Result<Vec<f64>, EvalError> {
            let mut rng = derive_rng(u.id.bytes().map(|b| b as u64).sum(), &[0xE]);
            Ok((0..8).map(|_| rng.random::<f64>() - 0.5).collect())
        },
        &test,
        (0.0, 0.0),
        7,
    )?;
    show("random embeddings", &random);

    // raw feature time-means: speaker offset plus windowed content mean
    let time_mean = sv_protocol_with(|u, _| Ok(u.time_mean()), &test, (0.0, 0.0), 7)?;
    show("feature time-means", &time_mean);
    Ok(())
}
