//! Speaker-verification disentanglement evaluation: EER on the content and
//! speaker representations per language, plus a conversion-quality probe
//! against the synthetic corpus's ground truth.

pub mod sweep;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{CorpusTruth, Language, Utterance};
use crate::model::net::{content_posterior, convert, speaker_posterior};
use crate::model::{ModelConfig, ModelParams};
use crate::rng::{derive_rng, stream};
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Content,
    Speaker,
}

impl Representation {
    pub fn both() -> [Representation; 2] {
        [Representation::Content, Representation::Speaker]
    }
    pub fn tag(self) -> &'static str {
        match self {
            Representation::Content => "z_c",
            Representation::Speaker => "z_s",
        }
    }
    fn index(self) -> u64 {
        match self {
            Representation::Content => 0,
            Representation::Speaker => 1,
        }
    }
}

/// Number of enrollment utterances per speaker.
pub const ENROLL_PER_SPEAKER: usize = 4;

/// One EER measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EerCell {
    pub representation: Representation,
    pub language: Language,
    pub eer: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// EER per (representation, language) for one trained checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub beta_c: f64,
    pub beta_s: f64,
    pub cells: Vec<EerCell>,
}

impl EvalReport {
    pub fn cell(&self, repr: Representation, language: Language) -> Option<&EerCell> {
        self.cells
            .iter()
            .find(|c| c.representation == repr && c.language == language)
    }

    /// Tab-separated rows: beta_c, beta_s, representation, language, eer,
    /// n_pos, n_neg.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for c in &self.cells {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                self.beta_c,
                self.beta_s,
                c.representation.tag(),
                c.language.tag(),
                c.eer,
                c.n_pos,
                c.n_neg
            ));
        }
        out
    }
}

/// Equal error rate: the rate at the threshold where false acceptance equals
/// false rejection, with the score convention "accept when score >= theta".
///
/// Computed by an exact sweep over the distinct pooled scores with linear
/// interpolation at the sign change of FAR - FRR; discrete jumps across zero
/// land on the interpolated midpoint crossing.
pub fn compute_eer(positive_scores: &[f64], negative_scores: &[f64]) -> Result<f64, EvalError> {
    if positive_scores.is_empty() || negative_scores.is_empty() {
        return Err(EvalError::Protocol(
            "compute_eer requires non-empty positive and negative score lists".into(),
        ));
    }
    let mut pos = positive_scores.to_vec();
    let mut neg = negative_scores.to_vec();
    pos.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    neg.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));

    let mut thresholds: Vec<f64> = pos.iter().chain(neg.iter()).cloned().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let n_pos = pos.len() as f64;
    let n_neg = neg.len() as f64;
    // operating point at threshold t: FAR = #neg >= t, FRR = #pos < t
    let point = |t: f64| -> (f64, f64) {
        let far = (neg.len() - neg.partition_point(|&s| s < t)) as f64 / n_neg;
        let frr = pos.partition_point(|&s| s < t) as f64 / n_pos;
        (far, frr)
    };

    // below all scores: FAR 1, FRR 0
    let mut prev_far = 1.0f64;
    let mut prev_frr = 0.0f64;
    let mut prev_diff = 1.0f64;
    for (far, frr) in thresholds
        .iter()
        .map(|&t| point(t))
        .chain(std::iter::once((0.0, 1.0)))
    {
        let diff = far - frr;
        if diff <= 0.0 {
            if prev_diff == diff {
                return Ok((prev_frr + frr) / 2.0);
            }
            let t = prev_diff / (prev_diff - diff);
            return Ok(prev_frr + t * (frr - prev_frr));
        }
        prev_far = far;
        prev_frr = frr;
        prev_diff = diff;
    }
    let _ = prev_far;
    unreachable!("the virtual top threshold has FAR - FRR = -1");
}

/// Embedding of one utterance under the chosen representation: the speaker
/// posterior mean vector, or the time-mean of the per-frame content posterior
/// means.
pub fn utterance_embedding(
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    utterance: &Utterance,
    which: Representation,
) -> Result<Vec<f64>, EvalError> {
    let emb = match which {
        Representation::Speaker => {
            let post = speaker_posterior(params, cfg, &utterance.features, utterance.frames)?;
            post.mean().iter().map(|&v| v as f64).collect()
        }
        Representation::Content => {
            let post = content_posterior(params, cfg, &utterance.features, utterance.frames)?;
            post.mean_vector().iter().map(|&v| v as f64).collect()
        }
    };
    Ok(emb)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Enrollment embeddings plus scored trials for one (language,
/// representation) cell. Enrollment utterances never appear as trial
/// utterances, for any speaker.
#[derive(Debug, Clone)]
pub struct TrialSet {
    pub enrollments: BTreeMap<String, Vec<f64>>,
    pub positive_scores: Vec<f64>,
    pub negative_scores: Vec<f64>,
}

/// Build the trial set from per-utterance embeddings: enroll
/// [`ENROLL_PER_SPEAKER`] seeded-random utterances per speaker, average their
/// embeddings, then score every remaining utterance against every enrolled
/// speaker with cosine similarity.
pub fn build_trial_set(
    utterances: &[&Utterance],
    embeddings: &[Vec<f64>],
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<TrialSet, EvalError> {
    assert_eq!(utterances.len(), embeddings.len());
    let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, u) in utterances.iter().enumerate() {
        by_speaker.entry(&u.speaker_id).or_default().push(i);
    }
    let mut enrollments = BTreeMap::new();
    let mut enrolled = vec![false; utterances.len()];
    for (speaker, indices) in &by_speaker {
        if indices.len() < ENROLL_PER_SPEAKER + 1 {
            return Err(EvalError::Protocol(format!(
                "speaker {speaker} has {} utterances; need at least {}",
                indices.len(),
                ENROLL_PER_SPEAKER + 1
            )));
        }
        let mut order = indices.clone();
        order.shuffle(rng);
        let chosen = &order[..ENROLL_PER_SPEAKER];
        let dim = embeddings[chosen[0]].len();
        let mut mean = vec![0.0f64; dim];
        for &i in chosen {
            enrolled[i] = true;
            for (m, v) in mean.iter_mut().zip(&embeddings[i]) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= ENROLL_PER_SPEAKER as f64;
        }
        enrollments.insert(speaker.to_string(), mean);
    }

    let mut positive_scores = Vec::new();
    let mut negative_scores = Vec::new();
    for (speaker, enrollment) in &enrollments {
        for (i, u) in utterances.iter().enumerate() {
            if enrolled[i] {
                continue;
            }
            let score = cosine(enrollment, &embeddings[i]);
            if &u.speaker_id == speaker {
                positive_scores.push(score);
            } else {
                negative_scores.push(score);
            }
        }
    }
    Ok(TrialSet {
        enrollments,
        positive_scores,
        negative_scores,
    })
}

/// The full protocol with an injected embedder (the oracle tests use
/// ground-truth embeddings; the model path uses [`utterance_embedding`]).
pub fn sv_protocol_with<E>(
    embed: E,
    test_utterances: &[&Utterance],
    betas: (f64, f64),
    seed: u64,
) -> Result<EvalReport, EvalError>
where
    E: Fn(&Utterance, Representation) -> Result<Vec<f64>, EvalError> + Sync,
{
    let mut cells = Vec::new();
    for repr in Representation::both() {
        for language in Language::both() {
            let utts: Vec<&Utterance> = test_utterances
                .iter()
                .filter(|u| u.language == language)
                .copied()
                .collect();
            if utts.is_empty() {
                return Err(EvalError::Protocol(format!(
                    "no test utterances for language {language}"
                )));
            }
            let embeddings: Vec<Vec<f64>> = utts
                .par_iter()
                .map(|u| embed(u, repr))
                .collect::<Result<_, _>>()?;
            let mut rng = derive_rng(
                seed,
                &[stream::PROTOCOL, repr.index(), language.index()],
            );
            let trials = build_trial_set(&utts, &embeddings, &mut rng)?;
            let eer = compute_eer(&trials.positive_scores, &trials.negative_scores)?;
            cells.push(EerCell {
                representation: repr,
                language,
                eer,
                n_pos: trials.positive_scores.len(),
                n_neg: trials.negative_scores.len(),
            });
        }
    }
    Ok(EvalReport {
        beta_c: betas.0,
        beta_s: betas.1,
        cells,
    })
}

/// The protocol over a trained model.
pub fn sv_protocol(
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    test_utterances: &[&Utterance],
    betas: (f64, f64),
    seed: u64,
) -> Result<EvalReport, EvalError> {
    sv_protocol_with(
        |u, repr| utterance_embedding(params, cfg, u, repr),
        test_utterances,
        betas,
        seed,
    )
}

/// Conversion-probe outcome: fraction of pairs whose converted time-mean sits
/// closer to the target speaker's ground-truth signature than to the
/// source's.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    pub intra_score: f64,
    pub cross_score: f64,
    pub n_intra: usize,
    pub n_cross: usize,
}

impl ProbeReport {
    /// An untrained or shuffled checkpoint transfers nothing: scores hover
    /// near the coin-flip level.
    pub fn is_degenerate(&self) -> bool {
        (self.intra_score - 0.5).abs() < 0.1 && (self.cross_score - 0.5).abs() < 0.1
    }
}

/// Probe with an injected converter (source, target) -> [T_src, D] features.
pub fn conversion_probe_with<C>(
    convert_fn: C,
    utterances: &[&Utterance],
    truth: &CorpusTruth,
    seed: u64,
    pairs_per_class: usize,
) -> Result<ProbeReport, EvalError>
where
    C: Fn(&Utterance, &Utterance) -> Result<Vec<f32>, EvalError> + Sync,
{
    let mut rng = derive_rng(seed, &[stream::PROBE]);
    let mut intra_pairs = Vec::new();
    let mut cross_pairs = Vec::new();
    let mut guard = 0;
    while (intra_pairs.len() < pairs_per_class || cross_pairs.len() < pairs_per_class)
        && guard < pairs_per_class * 200
    {
        guard += 1;
        let i = rand::Rng::random_range(&mut rng, 0..utterances.len());
        let j = rand::Rng::random_range(&mut rng, 0..utterances.len());
        let (src, tgt) = (utterances[i], utterances[j]);
        if src.speaker_id == tgt.speaker_id {
            continue; // identity and same-speaker conversions are excluded
        }
        if src.language == tgt.language {
            if intra_pairs.len() < pairs_per_class {
                intra_pairs.push((i, j));
            }
        } else if cross_pairs.len() < pairs_per_class {
            cross_pairs.push((i, j));
        }
    }
    if intra_pairs.len() < pairs_per_class || cross_pairs.len() < pairs_per_class {
        return Err(EvalError::Protocol(
            "not enough distinct-speaker pairs for the conversion probe".into(),
        ));
    }

    let score_pairs = |pairs: &[(usize, usize)]| -> Result<f64, EvalError> {
        let outcomes: Vec<Result<bool, EvalError>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let (src, tgt) = (utterances[i], utterances[j]);
                let converted = convert_fn(src, tgt)?;
                let frames = src.frames;
                let dim = src.feature_dim;
                let mut mean = vec![0.0f64; dim];
                for t in 0..frames {
                    for d in 0..dim {
                        mean[d] += converted[t * dim + d] as f64;
                    }
                }
                for m in &mut mean {
                    *m /= frames as f64;
                }
                let sig_tgt = truth.speaker_signature(&tgt.speaker_id).ok_or_else(|| {
                    EvalError::Protocol(format!("no ground truth for speaker {}", tgt.speaker_id))
                })?;
                let sig_src = truth.speaker_signature(&src.speaker_id).ok_or_else(|| {
                    EvalError::Protocol(format!("no ground truth for speaker {}", src.speaker_id))
                })?;
                let d_tgt: f64 = mean
                    .iter()
                    .zip(&sig_tgt)
                    .map(|(m, s)| (m - s) * (m - s))
                    .sum::<f64>()
                    .sqrt();
                let d_src: f64 = mean
                    .iter()
                    .zip(&sig_src)
                    .map(|(m, s)| (m - s) * (m - s))
                    .sum::<f64>()
                    .sqrt();
                Ok(d_tgt < d_src)
            })
            .collect();
        let mut wins = 0usize;
        for o in &outcomes {
            match o {
                Ok(true) => wins += 1,
                Ok(false) => {}
                Err(e) => return Err(EvalError::Protocol(e.to_string())),
            }
        }
        Ok(wins as f64 / pairs.len() as f64)
    };

    Ok(ProbeReport {
        intra_score: score_pairs(&intra_pairs)?,
        cross_score: score_pairs(&cross_pairs)?,
        n_intra: intra_pairs.len(),
        n_cross: cross_pairs.len(),
    })
}

/// Probe a trained model's conversion on the synthetic corpus.
pub fn conversion_probe(
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    utterances: &[&Utterance],
    truth: &CorpusTruth,
    seed: u64,
    pairs_per_class: usize,
) -> Result<ProbeReport, EvalError> {
    conversion_probe_with(
        |src, tgt| {
            convert(
                params,
                cfg,
                &src.features,
                src.frames,
                &tgt.features,
                tgt.frames,
            )
            .map_err(EvalError::from)
        },
        utterances,
        truth,
        seed,
        pairs_per_class,
    )
}

/// Brute-force EER oracle: recount FAR/FRR at every distinct threshold by
/// scanning the full score lists, then apply the same interpolation rule.
/// Shares only the rule definition with [`compute_eer`].
pub fn brute_force_eer(positive_scores: &[f64], negative_scores: &[f64]) -> Result<f64, EvalError> {
    if positive_scores.is_empty() || negative_scores.is_empty() {
        return Err(EvalError::Protocol("empty score list".into()));
    }
    let mut thresholds: Vec<f64> = positive_scores
        .iter()
        .chain(negative_scores.iter())
        .cloned()
        .collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let mut points = vec![(1.0f64, 0.0f64)];
    for &t in &thresholds {
        let far = negative_scores.iter().filter(|&&s| s >= t).count() as f64
            / negative_scores.len() as f64;
        let frr =
            positive_scores.iter().filter(|&&s| s < t).count() as f64 / positive_scores.len() as f64;
        points.push((far, frr));
    }
    points.push((0.0, 1.0));
    for w in points.windows(2) {
        let (far0, frr0) = w[0];
        let (far1, frr1) = w[1];
        let d0 = far0 - frr0;
        let d1 = far1 - frr1;
        if d0 > 0.0 && d1 <= 0.0 {
            if d0 == d1 {
                return Ok((frr0 + frr1) / 2.0);
            }
            let t = d0 / (d0 - d1);
            return Ok(frr0 + t * (frr1 - frr0));
        }
        if d0 <= 0.0 {
            if d0 == d1 {
                return Ok((frr0 + frr1) / 2.0);
            }
            let t = d0 / (d0 - d1);
            return Ok(frr0 + t * (frr1 - frr0));
        }
    }
    unreachable!("sign change guaranteed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_corpus, Split, SynthConfig};
    use rand::Rng;

    #[test]
    fn eer_perfect_separation_is_zero() {
        let eer = compute_eer(&[0.9, 0.8], &[0.7, 0.6]).unwrap();
        assert_eq!(eer, 0.0);
    }

    #[test]
    fn eer_interleaved_worked_example() {
        let eer = compute_eer(&[0.9, 0.6], &[0.8, 0.5]).unwrap();
        assert!((eer - 0.5).abs() < 1e-12, "eer {eer}");
        // cross-check with the oracle
        let oracle = brute_force_eer(&[0.9, 0.6], &[0.8, 0.5]).unwrap();
        assert_eq!(eer, oracle);
    }

    #[test]
    fn eer_empty_list_rejected() {
        assert!(compute_eer(&[], &[0.1]).is_err());
        assert!(compute_eer(&[0.1], &[]).is_err());
    }

    #[test]
    fn eer_matches_brute_force_on_random_sets() {
        let mut rng = derive_rng(7, &[stream::CHECK, 30]);
        for case in 0..40 {
            let n_pos = rng.random_range(1..40);
            let n_neg = rng.random_range(1..40);
            // coarse grid scores force plenty of ties
            let pos: Vec<f64> = (0..n_pos)
                .map(|_| (rng.random_range(0..10) as f64) / 10.0)
                .collect();
            let neg: Vec<f64> = (0..n_neg)
                .map(|_| (rng.random_range(0..10) as f64) / 10.0 - 0.2)
                .collect();
            let fast = compute_eer(&pos, &neg).unwrap();
            let slow = brute_force_eer(&pos, &neg).unwrap();
            assert!(
                (fast - slow).abs() < 1e-12,
                "case {case}: {fast} vs {slow} (pos {pos:?}, neg {neg:?})"
            );
        }
    }

    #[test]
    fn eer_same_distribution_is_half() {
        let mut rng = derive_rng(8, &[stream::CHECK, 31]);
        let pos: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let neg: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let eer = compute_eer(&pos, &neg).unwrap();
        assert!((eer - 0.5).abs() < 0.02, "eer {eer}");
    }

    #[test]
    fn eer_invariant_under_monotone_transform() {
        let mut rng = derive_rng(9, &[stream::CHECK, 32]);
        let pos: Vec<f64> = (0..200).map(|_| rng.random::<f64>() * 2.0 - 0.5).collect();
        let neg: Vec<f64> = (0..300).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let base = compute_eer(&pos, &neg).unwrap();
        for transform in [|x: f64| x.exp(), |x: f64| 3.0 * x + 7.0] {
            let tp: Vec<f64> = pos.iter().map(|&x| transform(x)).collect();
            let tn: Vec<f64> = neg.iter().map(|&x| transform(x)).collect();
            let t = compute_eer(&tp, &tn).unwrap();
            assert!((base - t).abs() < 1e-9, "{base} vs {t}");
        }
    }

    fn test_corpus() -> crate::data::SynthCorpus {
        let cfg = SynthConfig {
            speakers_per_language: 8,
            utterances_per_speaker: 12,
            valid_speakers_per_language: 1,
            test_speakers_per_language: 4,
            frame_len_range: (48, 80),
            ..SynthConfig::tiny()
        };
        generate_synthetic_corpus(&cfg, 31).unwrap()
    }

    #[test]
    fn oracle_embeddings_reach_zero_eer() {
        let corpus = test_corpus();
        let test: Vec<&Utterance> = corpus.split(Split::Test);
        let report = sv_protocol_with(
            |u, _repr| Ok(u.truth.as_ref().unwrap().speaker_factor.clone()),
            &test,
            (0.0, 0.0),
            5,
        )
        .unwrap();
        assert_eq!(report.cells.len(), 4);
        for c in &report.cells {
            assert!(c.eer < 0.01, "{:?} {} eer {}", c.representation, c.language, c.eer);
            assert!(c.n_pos > 0 && c.n_neg > 0);
        }
    }

    #[test]
    fn random_embeddings_near_chance() {
        let corpus = test_corpus();
        let test: Vec<&Utterance> = corpus.split(Split::Test);
        let report = sv_protocol_with(
            |u, repr| {
                // embedding independent of the speaker: hash of utterance id
                let mut rng = derive_rng(
                    u.id.bytes().map(|b| b as u64).sum::<u64>(),
                    &[stream::CHECK, repr.index()],
                );
                Ok((0..8).map(|_| rng.random::<f64>() - 0.5).collect())
            },
            &test,
            (0.0, 0.0),
            6,
        )
        .unwrap();
        for c in &report.cells {
            assert!(
                (c.eer - 0.5).abs() < 0.2,
                "{:?} {} eer {}",
                c.representation,
                c.language,
                c.eer
            );
        }
    }

    #[test]
    fn protocol_is_deterministic_and_reports_four_cells() {
        let corpus = test_corpus();
        let test: Vec<&Utterance> = corpus.split(Split::Test);
        let embed = |u: &Utterance, _repr: Representation| -> Result<Vec<f64>, EvalError> {
            Ok(u.time_mean())
        };
        let a = sv_protocol_with(embed, &test, (1e-2, 1e-4), 9).unwrap();
        let b = sv_protocol_with(embed, &test, (1e-2, 1e-4), 9).unwrap();
        assert_eq!(a.cells.len(), 4);
        for (ca, cb) in a.cells.iter().zip(&b.cells) {
            assert_eq!(ca.eer.to_bits(), cb.eer.to_bits());
        }
        // different seed, different enrollment draw
        let c = sv_protocol_with(embed, &test, (1e-2, 1e-4), 10).unwrap();
        assert!(a.cells.iter().zip(&c.cells).any(|(x, y)| x.eer != y.eer));
    }

    #[test]
    fn protocol_rejects_scarce_speakers() {
        let cfg = SynthConfig {
            speakers_per_language: 6,
            utterances_per_speaker: 4, // enrollment needs 5
            valid_speakers_per_language: 1,
            test_speakers_per_language: 2,
            frame_len_range: (48, 64),
            ..SynthConfig::tiny()
        };
        let corpus = generate_synthetic_corpus(&cfg, 3).unwrap();
        let test: Vec<&Utterance> = corpus.split(Split::Test);
        let err = sv_protocol_with(
            |u, _| Ok(u.time_mean()),
            &test,
            (0.0, 0.0),
            1,
        )
        .unwrap_err();
        match err {
            EvalError::Protocol(msg) => assert!(msg.contains("A04") || msg.contains("has 4")),
            other => panic!("expected protocol error, got {other}"),
        }
    }

    #[test]
    fn oracle_converter_scores_one() {
        let corpus = test_corpus();
        let test: Vec<&Utterance> = corpus.split(Split::Test);
        let truth = corpus.truth.clone();
        // ideal converter: A c_src + B s_tgt from ground truth
        let report = conversion_probe_with(
            |src, tgt| {
                let t_src = src.truth.as_ref().unwrap();
                let s_tgt = &tgt.truth.as_ref().unwrap().speaker_factor;
                let (k_c, k_s) = (truth.content_factors, truth.speaker_factors);
                let dim = truth.feature_dim;
                let mut out = vec![0.0f32; src.frames * dim];
                for t in 0..src.frames {
                    for d in 0..dim {
                        let mut v = 0.0;
                        for j in 0..k_c {
                            v += truth.a_matrix[d * k_c + j] * t_src.content[t * k_c + j];
                        }
                        for j in 0..k_s {
                            v += truth.b_matrix[d * k_s + j] * s_tgt[j];
                        }
                        out[t * dim + d] = v as f32;
                    }
                }
                Ok(out)
            },
            &test,
            &corpus.truth,
            11,
            40,
        )
        .unwrap();
        assert!(report.intra_score > 0.97, "intra {}", report.intra_score);
        assert!(report.cross_score > 0.97, "cross {}", report.cross_score);
        assert!(!report.is_degenerate());
    }

    #[test]
    fn broken_converter_near_chance() {
        let corpus = test_corpus();
        let test: Vec<&Utterance> = corpus.split(Split::Test);
        let truth = corpus.truth.clone();
        // negative control: speaker offset replaced by a random draw per pair
        let report = conversion_probe_with(
            |src, tgt| {
                let t_src = src.truth.as_ref().unwrap();
                let (k_c, k_s) = (truth.content_factors, truth.speaker_factors);
                let dim = truth.feature_dim;
                let pair_seed = src.id.bytes().chain(tgt.id.bytes()).map(|b| b as u64).sum();
                let mut rng = derive_rng(pair_seed, &[stream::CHECK, 33]);
                let s_rand: Vec<f64> = (0..k_s)
                    .map(|_| {
                        rand_distr::Distribution::<f64>::sample(
                            &rand_distr::StandardNormal,
                            &mut rng,
                        )
                    })
                    .collect();
                let mut out = vec![0.0f32; src.frames * dim];
                for t in 0..src.frames {
                    for d in 0..dim {
                        let mut v = 0.0;
                        for j in 0..k_c {
                            v += truth.a_matrix[d * k_c + j] * t_src.content[t * k_c + j];
                        }
                        for j in 0..k_s {
                            v += truth.b_matrix[d * k_s + j] * s_rand[j];
                        }
                        out[t * dim + d] = v as f32;
                    }
                }
                Ok(out)
            },
            &test,
            &corpus.truth,
            12,
            60,
        )
        .unwrap();
        assert!(
            report.intra_score > 0.2 && report.intra_score < 0.8,
            "intra {}",
            report.intra_score
        );
        assert!(
            report.cross_score > 0.2 && report.cross_score < 0.8,
            "cross {}",
            report.cross_score
        );
    }
}
