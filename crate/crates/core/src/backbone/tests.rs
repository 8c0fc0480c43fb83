use super::*;
use crate::answerer::{answer_single_frame, FrameIdToken};
use crate::datamodel::synthetic::{generate_synthetic_corpus, SyntheticConfig};
use crate::datamodel::Corpus;
use crate::localizer::{build_loc_context, build_qa_context};
use proptest::prelude::*;

fn toy() -> Backbone {
    Backbone::new(BackboneConfig::default()).unwrap()
}

fn oracle() -> Backbone {
    Backbone::new(BackboneConfig {
        implementation: Implementation::SyntheticOracle,
        ..BackboneConfig::default()
    })
    .unwrap()
}

fn options() -> Vec<String> {
    ["red kite", "blue cup", "green hat", "yellow ball"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn qa_ctx() -> EncodedContext {
    EncodedContext::new(&build_qa_context("what is held", &options(), "qa").unwrap())
}

fn loc_ctx() -> EncodedContext {
    EncodedContext::new(&build_loc_context("what is held", &options(), "details").unwrap())
}

fn random_features(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z as f32
                })
                .collect()
        })
        .collect()
}

fn corpus(n_videos: usize) -> Corpus {
    let cfg = SyntheticConfig {
        n_videos,
        ..SyntheticConfig::default()
    };
    generate_synthetic_corpus(&cfg, 11).unwrap()
}

fn assert_gradients_match(backbone: &Backbone, batch: &TrainBatch<'_>, params: &AdapterParams) {
    let (_, grads) = backbone.loss_and_grad(batch, params).unwrap();
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..params.num_values() {
        let base = params.flat_get(i);
        let mut plus = params.clone();
        plus.flat_set(i, base + eps);
        let mut minus = params.clone();
        minus.flat_set(i, base - eps);
        let numeric = (backbone.loss(batch, &plus).unwrap() - backbone.loss(batch, &minus).unwrap()) / (2.0 * eps);
        let analytic = grads.flat_get(i);
        let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-4);
        worst = worst.max(rel);
    }
    assert!(worst <= 1e-4, "worst relative gradient error {worst:e}");
}

#[test]
fn localizer_gradients_match_finite_differences() {
    let backbone = toy();
    let ctx = loc_ctx();
    for seed in 0..5 {
        let feats = random_features(3, 64, seed + 100);
        let params = AdapterParams::init(backbone.config(), Role::Localizer, seed);
        let batch = TrainBatch::Localization {
            samples: feats
                .iter()
                .enumerate()
                .map(|(i, f)| LocalizationSample {
                    feature: f,
                    context: &ctx,
                    label: i % 2 == 0,
                })
                .collect(),
            positive_weight: 2.5,
        };
        assert_gradients_match(&backbone, &batch, &params);
    }
}

#[test]
fn answerer_gradients_match_finite_differences() {
    let backbone = toy();
    let ctx = qa_ctx();
    for seed in 0..5 {
        let feats = random_features(4, 64, seed + 200);
        let params = AdapterParams::init(backbone.config(), Role::Answerer, seed);
        let sample = |target: usize, range: std::ops::Range<usize>| AnsweringSample {
            frames: range
                .enumerate()
                .map(|(ordinal, i)| {
                    (
                        feats[i].as_slice(),
                        FrameIdToken {
                            ordinal,
                            frame_index: 3 * i,
                        },
                    )
                })
                .collect(),
            context: &ctx,
            target,
        };
        let batch = TrainBatch::Answering(vec![sample(1, 0..3), sample(3, 2..4)]);
        assert_gradients_match(&backbone, &batch, &params);
    }
}

#[test]
fn zero_weight_adapter_outputs_its_bias() {
    let backbone = toy();
    let mut params = AdapterParams::zeros(backbone.config(), Role::Localizer);
    for i in 0..32 {
        params.array_mut(B_OUT)[i] = i as f64 * 0.25 - 1.0;
        params.array_mut(B_IN)[i] = 0.7;
    }
    let q = backbone.adapt(&random_features(1, 64, 3)[0], &params).unwrap();
    assert_eq!(q.0, params.array(B_OUT).to_vec());
}

#[test]
fn untagged_zero_queries_give_uniform_options() {
    let backbone = toy();
    let ctx = qa_ctx();
    let params = AdapterParams::zeros(backbone.config(), Role::Answerer);
    let q = backbone.adapt(&random_features(1, 64, 4)[0], &params).unwrap();
    let logp = backbone.score_options(&[q.clone(), q], &ctx).unwrap();
    for l in logp {
        assert!((l + 4f64.ln()).abs() < 1e-6);
    }
}

#[test]
fn zero_learning_rate_keeps_values() {
    let backbone = toy();
    let ctx = loc_ctx();
    let feats = random_features(2, 64, 5);
    let params = AdapterParams::init(backbone.config(), Role::Localizer, 9);
    let batch = TrainBatch::Localization {
        samples: feats
            .iter()
            .map(|f| LocalizationSample {
                feature: f,
                context: &ctx,
                label: true,
            })
            .collect(),
        positive_weight: 1.0,
    };
    let (next, _) = backbone.train_step(&batch, &params, 0.0).unwrap();
    assert_eq!(next.flat().collect::<Vec<_>>(), params.flat().collect::<Vec<_>>());
    assert_eq!(next.version, params.version + 1);
}

#[test]
fn training_leaves_frozen_heads_alone() {
    let backbone = toy();
    let before = backbone.frozen_fingerprint();
    let ctx = loc_ctx();
    let feats = random_features(4, 64, 6);
    let mut params = AdapterParams::init(backbone.config(), Role::Localizer, 1);
    let batch = TrainBatch::Localization {
        samples: feats
            .iter()
            .map(|f| LocalizationSample {
                feature: f,
                context: &ctx,
                label: false,
            })
            .collect(),
        positive_weight: 1.0,
    };
    let first = backbone.loss(&batch, &params).unwrap();
    for _ in 0..20 {
        params = backbone.train_step(&batch, &params, 0.1).unwrap().0;
    }
    assert!(backbone.loss(&batch, &params).unwrap() < first);
    assert_eq!(backbone.frozen_fingerprint(), before);
    assert_eq!(toy().frozen_fingerprint(), before);
}

#[test]
fn oracle_cannot_train() {
    let backbone = oracle();
    let ctx = loc_ctx();
    let f = random_features(1, 64, 7);
    let params = AdapterParams::zeros(backbone.config(), Role::Localizer);
    let batch = TrainBatch::Localization {
        samples: vec![LocalizationSample {
            feature: &f[0],
            context: &ctx,
            label: true,
        }],
        positive_weight: 1.0,
    };
    assert!(matches!(
        backbone.train_step(&batch, &params, 0.1),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn wrong_role_or_shape_is_rejected() {
    let backbone = toy();
    let ctx = loc_ctx();
    let f = random_features(1, 64, 8);
    let batch = TrainBatch::Localization {
        samples: vec![LocalizationSample {
            feature: &f[0],
            context: &ctx,
            label: true,
        }],
        positive_weight: 1.0,
    };
    let ans = AdapterParams::zeros(backbone.config(), Role::Answerer);
    assert!(backbone.train_step(&batch, &ans, 0.1).is_err());
    let small = AdapterParams::zeros(
        &BackboneConfig {
            hidden_dim: 8,
            ..BackboneConfig::default()
        },
        Role::Localizer,
    );
    assert!(backbone.adapt(&f[0], &small).is_err());
    assert!(backbone.adapt(&f[0][..10], &ans).is_err());
}

#[test]
fn oracle_separates_window_frames() {
    let backbone = oracle();
    let data = corpus(40);
    let truth = data.truth_by_video();
    let params = AdapterParams::zeros(backbone.config(), Role::Localizer);
    for s in &data.qa {
        let t = truth[s.video.video_id.as_str()];
        let ctx = EncodedContext::new(
            &build_loc_context(&s.example.question, &s.example.options, "details").unwrap(),
        );
        for i in 0..s.video.n_frames() {
            let q = backbone.adapt(s.video.frame(i), &params).unwrap();
            let p = backbone.score_yes(&q, &ctx).unwrap();
            if t.contains(i) {
                assert!(p > 0.5, "{} frame {i}: {p}", s.video.video_id);
            } else {
                assert!(p < 0.5, "{} frame {i}: {p}", s.video.video_id);
            }
        }
    }
}

#[test]
fn irrelevant_single_frames_answer_at_chance() {
    let backbone = oracle();
    let data = corpus(400);
    let truth = data.truth_by_video();
    let params = AdapterParams::zeros(backbone.config(), Role::Answerer);
    let (mut trials, mut correct) = (0usize, 0usize);
    'outer: for s in &data.qa {
        let t = truth[s.video.video_id.as_str()];
        let ctx = build_qa_context(&s.example.question, &s.example.options, "qa").unwrap();
        for i in (0..s.video.n_frames()).filter(|&i| !t.contains(i)) {
            let p = answer_single_frame(&backbone, &s.video, i, &ctx, &params, "x").unwrap();
            correct += usize::from(p.predicted_index == s.example.answer_index);
            trials += 1;
            if trials == 10_000 {
                break 'outer;
            }
        }
    }
    assert_eq!(trials, 10_000);
    let rate = correct as f64 / trials as f64;
    assert!((rate - 0.25).abs() <= 0.03, "rate {rate}");
}

#[test]
fn answer_depends_on_frame_ids() {
    let backbone = toy();
    let ctx = qa_ctx();
    let params = AdapterParams::init(backbone.config(), Role::Answerer, 2);
    let f = random_features(1, 64, 12);
    let q = backbone.adapt(&f[0], &params).unwrap();
    let a = backbone
        .score_options(&[q.clone().tagged(FrameIdToken { ordinal: 0, frame_index: 0 })], &ctx)
        .unwrap();
    let b = backbone
        .score_options(&[q.tagged(FrameIdToken { ordinal: 3, frame_index: 20 })], &ctx)
        .unwrap();
    assert_ne!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn option_scores_follow_permutations(seed in 0u64..1000, rot in 1usize..4) {
        let backbone = toy();
        let params = AdapterParams::init(backbone.config(), Role::Answerer, seed);
        let f = random_features(2, 64, seed);
        let queries: Vec<QueryFeature> = f
            .iter()
            .enumerate()
            .map(|(i, x)| backbone.adapt(x, &params).unwrap().tagged(FrameIdToken { ordinal: i, frame_index: 5 * i }))
            .collect();
        let opts = options();
        let mut rotated = opts.clone();
        rotated.rotate_left(rot);
        let base = backbone
            .score_options(&queries, &EncodedContext::new(&build_qa_context("q", &opts, "qa").unwrap()))
            .unwrap();
        let perm = backbone
            .score_options(&queries, &EncodedContext::new(&build_qa_context("q", &rotated, "qa").unwrap()))
            .unwrap();
        for (i, p) in perm.iter().enumerate() {
            prop_assert!((p - base[(i + rot) % opts.len()]).abs() < 1e-9);
        }
    }

    #[test]
    fn yes_scores_are_probabilities(seed in 0u64..1000, scale in 0.01f64..3.0) {
        let backbone = toy();
        let ctx = loc_ctx();
        let params = AdapterParams::init(backbone.config(), Role::Localizer, seed);
        for f in random_features(16, 64, seed) {
            let scaled: Vec<f32> = f.iter().map(|x| x * scale as f32).collect();
            let p = backbone.score_yes(&backbone.adapt(&scaled, &params).unwrap(), &ctx).unwrap();
            prop_assert!(p > 0.0 && p < 1.0, "{}", p);
        }
    }
}
