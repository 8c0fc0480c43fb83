//! Synthetic corpora with a known relevant window per video.
//!
//! Feature layout shared with the synthetic-oracle backbone: channel
//! [`RELEVANCE_CHANNEL`] carries the relevance signal, the [`TEXT_DIM`]
//! channels starting at [`CONTENT_OFFSET`] carry the embedding of whatever
//! answer word the frame shows, and everything is perturbed by Gaussian noise.
//! In-window frames show the correct option (or, with probability
//! `noise_rate`, a uniformly drawn wrong option); out-of-window frames show a
//! uniformly drawn word from the whole answer pool, independent of the
//! question.

use std::sync::Arc;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    Corpus, Fps, MomentAnnotation, MomentExample, QAExample, Sample, SyntheticGroundTruth,
    VideoRecord,
};
use crate::error::{Error, Result};
use crate::text::{phrase_embedding, TEXT_DIM};

pub const RELEVANCE_CHANNEL: usize = 0;
pub const CONTENT_OFFSET: usize = 1;

pub const ANSWER_POOL: [&str; 16] = [
    "red", "blue", "green", "yellow", "dog", "cat", "ball", "cup", "book", "phone", "guitar",
    "bicycle", "apple", "hat", "chair", "kite",
];

const EVENTS: [&str; 8] = [
    "jump", "wave", "dance", "fall", "laugh", "throw", "run", "clap",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_videos: usize,
    pub n_frames: usize,
    pub window_len: usize,
    pub n_options: usize,
    pub feature_dim: usize,
    pub fps: Fps,
    pub noise_rate: f64,
    /// Added to the relevance channel of in-window frames.
    pub relevance_strength: f64,
    /// Scale of the answer-word embedding written into every frame.
    pub content_strength: f64,
    /// Standard deviation of the per-component Gaussian noise.
    pub feature_noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_videos: 100,
            n_frames: 32,
            window_len: 4,
            n_options: 4,
            feature_dim: 64,
            fps: Fps { num: 1, den: 2 },
            noise_rate: 0.1,
            relevance_strength: 2.0,
            content_strength: 2.0,
            feature_noise: 0.1,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_videos", self.n_videos),
            ("n_frames", self.n_frames),
            ("window_len", self.window_len),
            ("feature_dim", self.feature_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.window_len > self.n_frames {
            return Err(Error::Config(format!(
                "window_len {} exceeds n_frames {}",
                self.window_len, self.n_frames
            )));
        }
        if self.n_options < 2 || self.n_options > ANSWER_POOL.len() {
            return Err(Error::Config(format!(
                "n_options must be in [2, {}], got {}",
                ANSWER_POOL.len(),
                self.n_options
            )));
        }
        if self.feature_dim < CONTENT_OFFSET + TEXT_DIM {
            return Err(Error::Config(format!(
                "feature_dim must be at least {}",
                CONTENT_OFFSET + TEXT_DIM
            )));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!(
                "noise_rate must be in [0, 1), got {}",
                self.noise_rate
            )));
        }
        let reals = [
            self.relevance_strength,
            self.content_strength,
            self.feature_noise,
        ];
        if reals.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("signal strengths and noise must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Pure function of `(config, seed)`.
pub fn generate_synthetic_corpus(config: &SyntheticConfig, seed: u64) -> Result<Corpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, config.feature_noise)
        .map_err(|e| Error::Config(format!("feature_noise: {e}")))?;
    let pool: Vec<[f64; TEXT_DIM]> = ANSWER_POOL.iter().map(|w| phrase_embedding(w)).collect();
    let dim = config.feature_dim;

    let mut corpus = Corpus::default();
    for v in 0..config.n_videos {
        let video_id = format!("vid{v:05}");
        let start = rng.gen_range(0..=config.n_frames - config.window_len);
        let window = (start, start + config.window_len);
        let event = EVENTS[rng.gen_range(0..EVENTS.len())];
        let option_ids: Vec<usize> =
            (0..ANSWER_POOL.len()).choose_multiple(&mut rng, config.n_options);
        let mut option_ids = option_ids;
        option_ids.shuffle(&mut rng);
        let answer_index = rng.gen_range(0..config.n_options);

        let mut data = Vec::with_capacity(config.n_frames * dim);
        for frame in 0..config.n_frames {
            let mut h: Vec<f64> = (0..dim).map(|_| noise.sample(&mut rng)).collect();
            let word = if (window.0..window.1).contains(&frame) {
                h[RELEVANCE_CHANNEL] += config.relevance_strength;
                if rng.gen::<f64>() < config.noise_rate {
                    let wrong = rng.gen_range(0..config.n_options - 1);
                    let wrong = if wrong >= answer_index { wrong + 1 } else { wrong };
                    option_ids[wrong]
                } else {
                    option_ids[answer_index]
                }
            } else {
                rng.gen_range(0..ANSWER_POOL.len())
            };
            for (slot, e) in h[CONTENT_OFFSET..CONTENT_OFFSET + TEXT_DIM]
                .iter_mut()
                .zip(pool[word])
            {
                *slot += config.content_strength * e;
            }
            data.extend(h.into_iter().map(|x| x as f32));
        }
        let video = Arc::new(VideoRecord::new(&video_id, config.fps, dim, data)?);

        let options: Vec<String> = option_ids.iter().map(|&i| ANSWER_POOL[i].to_string()).collect();
        corpus.qa.push(Sample {
            video: Arc::clone(&video),
            example: QAExample {
                example_id: format!("{video_id}-qa"),
                video_id: video_id.clone(),
                question: format!("what is visible while the person starts to {event}"),
                options,
                answer_index,
            },
        });
        corpus.moment.push(Sample {
            video: Arc::clone(&video),
            example: MomentExample {
                example_id: format!("{video_id}-mr"),
                video_id: video_id.clone(),
                query: format!("the person starts to {event}"),
                spans: vec![MomentAnnotation {
                    start_s: config.fps.timestamp(window.0),
                    end_s: config.fps.timestamp(window.1),
                }],
            },
        });
        corpus.truth.push(SyntheticGroundTruth {
            video_id,
            relevant_window: window,
            noise_rate: config.noise_rate,
        });
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::save_corpus;
    use crate::moment::spans_to_frame_labels;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            n_videos: 100,
            n_frames: 32,
            window_len: 4,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        save_corpus(a.path(), &generate_synthetic_corpus(&small(), 0).unwrap()).unwrap();
        save_corpus(b.path(), &generate_synthetic_corpus(&small(), 0).unwrap()).unwrap();
        for name in ["qa.jsonl", "moment.jsonl", "truth.jsonl", "features.bin"] {
            let x = std::fs::read(a.path().join(name)).unwrap();
            let y = std::fs::read(b.path().join(name)).unwrap();
            assert!(x == y, "{name} differs between runs");
        }
        let c = generate_synthetic_corpus(&small(), 1).unwrap();
        assert_ne!(c.truth, generate_synthetic_corpus(&small(), 0).unwrap().truth);
    }

    #[test]
    fn window_longer_than_video_is_config_error() {
        let cfg = SyntheticConfig {
            window_len: 40,
            ..small()
        };
        assert!(matches!(
            generate_synthetic_corpus(&cfg, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn relevant_fraction_matches_window_ratio() {
        let cfg = SyntheticConfig {
            n_videos: 1000,
            ..small()
        };
        let corpus = generate_synthetic_corpus(&cfg, 3).unwrap();
        let labeled: usize = corpus
            .truth
            .iter()
            .map(|t| t.frame_labels(cfg.n_frames).iter().filter(|&&b| b == 1).count())
            .sum();
        let frac = labeled as f64 / (1000.0 * cfg.n_frames as f64);
        assert!((frac - 4.0 / 32.0).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn moment_spans_round_trip_to_window() {
        let corpus = generate_synthetic_corpus(&small(), 5).unwrap();
        for (m, t) in corpus.moment.iter().zip(&corpus.truth) {
            let labels = spans_to_frame_labels(&m.example.spans, m.video.features.timestamps());
            assert_eq!(labels, t.frame_labels(m.video.n_frames()), "{}", t.video_id);
        }
    }

    #[test]
    fn answer_pool_embeddings_are_separated() {
        let pool: Vec<_> = ANSWER_POOL.iter().map(|w| phrase_embedding(w)).collect();
        for i in 0..pool.len() {
            for j in 0..i {
                let c = crate::text::dot(&pool[i], &pool[j]);
                assert!(c < 0.7, "{} / {}: {c}", ANSWER_POOL[i], ANSWER_POOL[j]);
            }
        }
    }
}
