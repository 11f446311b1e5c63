//! Train briefly on a micro corpus, then convert: content of a source
//! utterance with the speaker of a target utterance. Compares the converted
//! time-mean against the ground-truth speaker signatures of both sides.
//!
//! cargo run --example convert_voice

use dualvae::commands::{demo_config, load_data};
use dualvae::data::Split;
use dualvae::eval::conversion_probe;
use dualvae::model::net::convert;
use dualvae::training::{checkpoint, train};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = demo_config(600, 9)?;
    cfg.train.log_every = 200;
    let corpus = load_data(&cfg)?;
    let train_utts = corpus.split(Split::Train);
    let dir = tempfile::tempdir()?;
    let outcome = train(&cfg.model, &cfg.train, &train_utts, &[], dir.path(), None)?;
    let ck = checkpoint::load(&outcome.final_checkpoint)?;

    let test = corpus.split(Split::Test);
    let src = test.iter().find(|u| u.language == dualvae::data::Language::A).unwrap();
    let tgt = test.iter().find(|u| u.language == dualvae::data::Language::B).unwrap();
    println!(
        "\nconverting content of {} ({} frames) with speaker of {} ({} frames)",
        src.id, src.frames, tgt.id, tgt.frames
    );
    let converted = convert(
        &ck.params,
        &ck.model,
        &src.features,
        src.frames,
        &tgt.features,
        tgt.frames,
    )?;
    assert_eq!(converted.len(), src.frames * ck.model.feature_dim);

    let truth = corpus.truth().unwrap();
    let mean: Vec<f64> = {
        let mut m = vec![0.0; ck.model.feature_dim];
        for t in 0..src.frames {
            for d in 0..ck.model.feature_dim {
                m[d] += converted[t * ck.model.feature_dim + d] as f64;
            }
        }
        m.iter().map(|v| v / src.frames as f64).collect()
    };
    let dist = |sig: &[f64]| -> f64 {
        mean.iter().zip(sig).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    let d_tgt = dist(&truth.speaker_signature(&tgt.speaker_id).unwrap());
    let d_src = dist(&truth.speaker_signature(&src.speaker_id).unwrap());
    println!("distance to target speaker signature: {d_tgt:.3}");
    println!("distance to source speaker signature: {d_src:.3}");
    println!("speaker transferred: {}", d_tgt < d_src);

    let probe = conversion_probe(&ck.params, &ck.model, &test, truth, 3, 30)?;
    println!(
        "\nprobe over sampled pairs: intra-language {:.2}, cross-language {:.2}",
        probe.intra_score, probe.cross_score
    );
    Ok(())
}
