//! Forward chain (localize, then answer from keyframes) and reverse chain
//! (answerer-derived pseudo-labels refine the localizer), plus the three
//! training procedures built on them.

use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::answerer::{answer_multi, answer_single_frame, AnswerPrediction, FrameIdToken};
use crate::backbone::{
    AdapterParams, AnsweringSample, Backbone, BackboneConfig, EncodedContext, LocalizationSample,
    Role, TrainBatch,
};
use crate::datamodel::{uniform_sample, MomentSample, QAExample, QaSample, VideoRecord};
use crate::error::{ensure_arg, Error, Result};
use crate::localizer::{
    build_loc_context, build_qa_context, score_frame_subset, select_topk, KeyframeSelection,
    LanguageContext, DEFAULT_LOC_TEMPLATE, DEFAULT_QA_TEMPLATE,
};
use crate::moment::spans_to_frame_labels;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameSampling {
    Uniform,
    Localizer,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Frames uniformly sampled per video (`n`).
    pub n_frames_in: usize,
    /// Keyframes handed to the answerer (`k`).
    pub k_keyframes: usize,
    pub frame_sampling: FrameSampling,
    /// Loss weight of positive frames in localizer training.
    pub positive_weight: f64,
    pub loc_template: String,
    pub qa_template: String,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            learning_rate: 3e-5,
            seed: 0,
            n_frames_in: 32,
            k_keyframes: 4,
            frame_sampling: FrameSampling::Uniform,
            positive_weight: 1.0,
            loc_template: DEFAULT_LOC_TEMPLATE.to_string(),
            qa_template: DEFAULT_QA_TEMPLATE.to_string(),
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.n_frames_in == 0 || self.k_keyframes == 0 {
            return Err(Error::Config(
                "batch_size, n_frames_in and k_keyframes must be positive".into(),
            ));
        }
        if self.k_keyframes > self.n_frames_in {
            return Err(Error::Config(format!(
                "k_keyframes {} exceeds n_frames_in {}",
                self.k_keyframes, self.n_frames_in
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if !(self.positive_weight.is_finite() && self.positive_weight > 0.0) {
            return Err(Error::Config("positive_weight must be positive".into()));
        }
        build_loc_context("", &[], &self.loc_template)
            .and_then(|_| build_qa_context("", &[], &self.qa_template))
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    ReverseChain,
    SpanConversion,
}

/// Binary keyframe labels over the `n` uniformly sampled frames of a video.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLabelSet {
    pub example_id: String,
    pub labels: Vec<u8>,
    pub source: LabelSource,
}

impl PseudoLabelSet {
    pub fn is_degenerate(&self) -> bool {
        self.labels.iter().all(|&b| b == 0) || self.labels.iter().all(|&b| b == 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: AdapterParams,
    pub backbone: BackboneConfig,
    pub config: TrainRunConfig,
    pub epoch: usize,
    pub train_loss_history: Vec<f64>,
    /// Fraction of pseudo-label sets that were all-zero or all-one.
    pub degenerate_label_fraction: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct RunMetadata {
    role: Role,
    config: TrainRunConfig,
    seed: u64,
    epoch: usize,
    loss_history: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    degenerate_label_fraction: Option<f64>,
}

impl Checkpoint {
    pub fn metadata_path(path: &Path) -> PathBuf {
        let mut name = path.as_os_str().to_owned();
        name.push(".meta.json");
        PathBuf::from(name)
    }

    /// Writes the parameter file and its run-metadata JSON next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.params.save(path, &self.backbone)?;
        let meta = RunMetadata {
            role: self.params.role,
            config: self.config.clone(),
            seed: self.config.seed,
            epoch: self.epoch,
            loss_history: self.train_loss_history.clone(),
            degenerate_label_fraction: self.degenerate_label_fraction,
        };
        let meta_path = Self::metadata_path(path);
        let mut text = serde_json::to_string_pretty(&meta)?;
        text.push('\n');
        fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
    }

    /// Loads a checkpoint; missing run metadata yields an untrained record.
    pub fn load(path: &Path) -> Result<Self> {
        let (params, backbone) = AdapterParams::load(path)?;
        let meta_path = Self::metadata_path(path);
        let meta: Option<RunMetadata> = match fs::read_to_string(&meta_path) {
            Ok(text) => Some(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(Error::io(&meta_path, e)),
        };
        Ok(match meta {
            Some(m) => Self {
                params,
                backbone,
                config: m.config,
                epoch: m.epoch,
                train_loss_history: m.loss_history,
                degenerate_label_fraction: m.degenerate_label_fraction,
            },
            None => Self {
                params,
                backbone,
                config: TrainRunConfig::default(),
                epoch: 0,
                train_loss_history: Vec::new(),
                degenerate_label_fraction: None,
            },
        })
    }

    pub fn expect_role(&self, role: Role) -> Result<&AdapterParams> {
        if self.params.role != role {
            return Err(Error::Config(format!(
                "expected a {role:?} checkpoint, got {:?}",
                self.params.role
            )));
        }
        Ok(&self.params)
    }
}

pub fn loc_context(qa: &QAExample, template_id: &str) -> Result<LanguageContext> {
    build_loc_context(&qa.question, &qa.options, template_id)
}

pub fn qa_context(qa: &QAExample, template_id: &str) -> Result<LanguageContext> {
    build_qa_context(&qa.question, &qa.options, template_id)
}

/// Localizer keyframes: top-`k` of the `n` uniformly sampled frames, as
/// video frame indices in temporal order.
pub fn localize(
    backbone: &Backbone,
    video: &VideoRecord,
    context: &LanguageContext,
    loc_params: &AdapterParams,
    n: usize,
    k: usize,
) -> Result<KeyframeSelection> {
    ensure_arg!(k <= n, "k={k} exceeds n={n}");
    let sampled = uniform_sample(video.n_frames(), n)?;
    let scores = score_frame_subset(backbone, video, &sampled, context, loc_params)?;
    let top = select_topk(&scores, k)?;
    Ok(KeyframeSelection {
        indices: top.indices.iter().map(|&i| sampled[i]).collect(),
        scores: top.scores,
    })
}

/// `k` frames drawn without replacement from the `n` uniformly sampled ones,
/// seeded per example.
pub fn random_frames(n_total: usize, n: usize, k: usize, seed: u64, example_id: &str) -> Result<Vec<usize>> {
    ensure_arg!(k >= 1 && k <= n, "need 1 <= k <= n, got k={k}, n={n}");
    let sampled = uniform_sample(n_total, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ example_hash(example_id));
    let mut picked: Vec<usize> = index::sample(&mut rng, n, k)
        .into_iter()
        .map(|i| sampled[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

pub(crate) fn example_hash(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Localize with the localizer, then answer from the keyframes.
pub fn forward_infer(
    backbone: &Backbone,
    video: &VideoRecord,
    qa: &QAExample,
    loc_params: &AdapterParams,
    ans_params: &AdapterParams,
    n: usize,
    k: usize,
) -> Result<AnswerPrediction> {
    ensure_arg!(
        k <= n && n <= video.n_frames(),
        "forward_infer needs k <= n <= n_frames, got k={k}, n={n}, n_frames={}",
        video.n_frames()
    );
    let selection = localize(
        backbone,
        video,
        &loc_context(qa, DEFAULT_LOC_TEMPLATE)?,
        loc_params,
        n,
        k,
    )?;
    answer_multi(
        backbone,
        video,
        &selection,
        &qa_context(qa, DEFAULT_QA_TEMPLATE)?,
        ans_params,
        &qa.example_id,
    )
}

/// Label each of the `n` sampled frames 1 iff the frozen answerer gets the
/// question right from that frame alone.
pub fn make_pseudo_labels(
    backbone: &Backbone,
    video: &VideoRecord,
    qa: &QAExample,
    ans_params: &AdapterParams,
    n: usize,
) -> Result<PseudoLabelSet> {
    make_pseudo_labels_with(backbone, video, qa, ans_params, n, DEFAULT_QA_TEMPLATE)
}

fn make_pseudo_labels_with(
    backbone: &Backbone,
    video: &VideoRecord,
    qa: &QAExample,
    ans_params: &AdapterParams,
    n: usize,
    qa_template: &str,
) -> Result<PseudoLabelSet> {
    let context = qa_context(qa, qa_template)?;
    let labels = uniform_sample(video.n_frames(), n)?
        .into_iter()
        .map(|i| {
            let p = answer_single_frame(backbone, video, i, &context, ans_params, &qa.example_id)?;
            Ok(u8::from(p.predicted_index == qa.answer_index))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PseudoLabelSet {
        example_id: qa.example_id.clone(),
        labels,
        source: LabelSource::ReverseChain,
    })
}

/// Frames of one video with binary labels, ready for localizer training.
pub struct LabeledFrames<'a> {
    pub video: &'a VideoRecord,
    pub frames: Vec<usize>,
    pub labels: Vec<u8>,
    pub context: EncodedContext,
}

fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9 * (epoch as u64 + 1)));
    order.shuffle(&mut rng);
    order
}

fn require_trainable(backbone: &Backbone) -> Result<()> {
    if !backbone.is_trainable() {
        return Err(Error::Unsupported(
            "training needs the trainable-toy backbone".into(),
        ));
    }
    Ok(())
}

fn initial_params(backbone: &Backbone, role: Role, config: &TrainRunConfig, init: Option<&AdapterParams>) -> Result<AdapterParams> {
    match init {
        Some(p) => {
            ensure_arg!(p.role == role, "initial parameters have role {:?}, expected {role:?}", p.role);
            Ok(p.clone())
        }
        None => Ok(AdapterParams::init(backbone.config(), role, config.seed)),
    }
}

/// Mini-batch cross-entropy training of the localizer adapter on labeled
/// frames. Shared by pre-training and self-refinement.
pub fn train_localizer(
    backbone: &Backbone,
    data: &[LabeledFrames<'_>],
    config: &TrainRunConfig,
    init: Option<&AdapterParams>,
) -> Result<Checkpoint> {
    require_trainable(backbone)?;
    config.validate()?;
    ensure_arg!(!data.is_empty(), "empty localizer training set");
    let mut params = initial_params(backbone, Role::Localizer, config, init)?;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = epoch_order(data.len(), config.seed, epoch);
        let (mut loss_sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let samples: Vec<LocalizationSample<'_>> = chunk
                .iter()
                .flat_map(|&e| {
                    let ex = &data[e];
                    ex.frames.iter().zip(&ex.labels).map(move |(&f, &l)| LocalizationSample {
                        feature: ex.video.frame(f),
                        context: &ex.context,
                        label: l == 1,
                    })
                })
                .collect();
            let batch = TrainBatch::Localization {
                samples,
                positive_weight: config.positive_weight,
            };
            let (next, loss) = backbone.train_step(&batch, &params, config.learning_rate)?;
            params = next;
            loss_sum += loss * batch.len() as f64;
            count += batch.len();
        }
        let mean = loss_sum / count as f64;
        debug!("localizer epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        info!("localizer training: loss {first:.4} -> {last:.4} over {} epochs", history.len());
    }
    Ok(Checkpoint {
        params: params.rounded_to_f32(),
        backbone: backbone.config().clone(),
        config: config.clone(),
        epoch: config.epochs,
        train_loss_history: history,
        degenerate_label_fraction: None,
    })
}

/// Pre-trains the localizer from moment-retrieval spans converted to frame
/// labels; queries are rendered into the localization template without
/// options.
pub fn pretrain_localizer(
    backbone: &Backbone,
    dataset: &[MomentSample],
    config: &TrainRunConfig,
    init: Option<&AdapterParams>,
) -> Result<Checkpoint> {
    ensure_arg!(!dataset.is_empty(), "empty moment dataset");
    config.validate()?;
    let data = dataset
        .iter()
        .map(|s| {
            let n = config.n_frames_in.min(s.video.n_frames());
            let frames = uniform_sample(s.video.n_frames(), n)?;
            let stamps: Vec<f64> = frames.iter().map(|&i| s.video.features.timestamps()[i]).collect();
            let ctx = build_loc_context(&s.example.query, &[], &config.loc_template)?;
            Ok(LabeledFrames {
                video: &s.video,
                labels: spans_to_frame_labels(&s.example.spans, &stamps),
                frames,
                context: EncodedContext::new(&ctx),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    train_localizer(backbone, &data, config, init)
}

/// Reverse-chain pseudo-labels for every example, over the first
/// `min(n_frames_in, n_frames)` uniformly sampled frames.
pub fn make_pseudo_label_sets(
    backbone: &Backbone,
    dataset: &[QaSample],
    ans_params: &AdapterParams,
    config: &TrainRunConfig,
) -> Result<Vec<PseudoLabelSet>> {
    ensure_arg!(ans_params.role == Role::Answerer, "pseudo-labels need answerer parameters");
    dataset
        .iter()
        .map(|s| {
            let n = config.n_frames_in.min(s.video.n_frames());
            make_pseudo_labels_with(backbone, &s.video, &s.example, ans_params, n, &config.qa_template)
        })
        .collect()
}

/// Reverse chain: pseudo-labels from the frozen answerer, then localizer
/// training on them. Pass a pre-trained localizer as `init` for PT+SR.
pub fn refine_localizer(
    backbone: &Backbone,
    dataset: &[QaSample],
    ans_params: &AdapterParams,
    config: &TrainRunConfig,
    init: Option<&AdapterParams>,
) -> Result<Checkpoint> {
    ensure_arg!(!dataset.is_empty(), "empty QA dataset");
    config.validate()?;
    let labels = make_pseudo_label_sets(backbone, dataset, ans_params, config)?;
    let degenerate = labels.iter().filter(|l| l.is_degenerate()).count();
    let data = dataset
        .iter()
        .zip(labels)
        .map(|(s, l)| {
            Ok(LabeledFrames {
                video: &s.video,
                frames: uniform_sample(s.video.n_frames(), l.labels.len())?,
                labels: l.labels,
                context: EncodedContext::new(&loc_context(&s.example, &config.loc_template)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fraction = degenerate as f64 / dataset.len() as f64;
    info!("pseudo-labels: {degenerate} of {} videos all-zero or all-one", dataset.len());
    let mut ckpt = train_localizer(backbone, &data, config, init)?;
    ckpt.degenerate_label_fraction = Some(fraction);
    Ok(ckpt)
}

/// Frames the answerer sees for one example under `sampling`.
pub fn answerer_frames(
    backbone: &Backbone,
    sample: &QaSample,
    sampling: FrameSampling,
    loc_params: Option<&AdapterParams>,
    config: &TrainRunConfig,
) -> Result<Vec<usize>> {
    let video = &sample.video;
    let n = config.n_frames_in.min(video.n_frames());
    let k = config.k_keyframes.min(n);
    match sampling {
        FrameSampling::Uniform => uniform_sample(video.n_frames(), k),
        FrameSampling::Random => random_frames(video.n_frames(), n, k, config.seed, &sample.example.example_id),
        FrameSampling::Localizer => {
            let loc = loc_params.ok_or_else(|| {
                Error::Argument("localizer frame sampling needs localizer parameters".into())
            })?;
            let ctx = loc_context(&sample.example, &config.loc_template)?;
            Ok(localize(backbone, video, &ctx, loc, n, k)?.indices)
        }
    }
}

/// Forward-chain fine-tuning of the answerer on keyframes chosen by
/// `config.frame_sampling`. The localizer, when given, stays frozen.
pub fn finetune_answerer(
    backbone: &Backbone,
    dataset: &[QaSample],
    loc_params: Option<&AdapterParams>,
    config: &TrainRunConfig,
    init: Option<&AdapterParams>,
) -> Result<Checkpoint> {
    require_trainable(backbone)?;
    config.validate()?;
    ensure_arg!(!dataset.is_empty(), "empty QA dataset");
    if config.frame_sampling == FrameSampling::Localizer && loc_params.is_none() {
        return Err(Error::Argument(
            "frame_sampling=localizer requires a localizer checkpoint".into(),
        ));
    }
    let prepared = dataset
        .iter()
        .map(|s| {
            let frames = answerer_frames(backbone, s, config.frame_sampling, loc_params, config)?;
            let ctx = EncodedContext::new(&qa_context(&s.example, &config.qa_template)?);
            Ok((s, frames, ctx))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut params = initial_params(backbone, Role::Answerer, config, init)?;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = epoch_order(prepared.len(), config.seed, epoch);
        let (mut loss_sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let samples: Vec<AnsweringSample<'_>> = chunk
                .iter()
                .map(|&e| {
                    let (s, frames, ctx) = &prepared[e];
                    AnsweringSample {
                        frames: frames
                            .iter()
                            .enumerate()
                            .map(|(ordinal, &frame_index)| {
                                (
                                    s.video.frame(frame_index),
                                    FrameIdToken {
                                        ordinal,
                                        frame_index,
                                    },
                                )
                            })
                            .collect(),
                        context: ctx,
                        target: s.example.answer_index,
                    }
                })
                .collect();
            let batch = TrainBatch::Answering(samples);
            let (next, loss) = backbone.train_step(&batch, &params, config.learning_rate)?;
            params = next;
            loss_sum += loss * batch.len() as f64;
            count += batch.len();
        }
        let mean = loss_sum / count as f64;
        debug!("answerer epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        info!("answerer training: loss {first:.4} -> {last:.4} over {} epochs", history.len());
    }
    Ok(Checkpoint {
        params: params.rounded_to_f32(),
        backbone: backbone.config().clone(),
        config: config.clone(),
        epoch: config.epochs,
        train_loss_history: history,
        degenerate_label_fraction: None,
    })
}
