//! Evaluation drivers, the ablation grid, run configuration and the text
//! timeline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::answerer::{answer_multi, answer_single_frame, majority_vote, oracle_correct, AnswerPrediction};
use crate::backbone::{AdapterParams, Backbone, BackboneConfig, Role};
use crate::chain::{loc_context, localize, qa_context, random_frames, TrainRunConfig};
use crate::datamodel::{uniform_sample, Corpus, MomentSample, QaSample, SyntheticConfig, VideoRecord};
use crate::error::{ensure_arg, Error, Result};
use crate::localizer::{
    binarize, build_loc_context, score_frame_subset, KeyframeSelection, LanguageContext,
    DEFAULT_LOC_TEMPLATE, DEFAULT_QA_TEMPLATE,
};
use crate::moment::{
    aggregate, map_over_ladder, query_map, recall_at_1, single_span, spans_to_frame_labels,
    EvalLadder, QueryResult, SpanPrediction,
};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a parameter set's f32 byte image and role.
pub fn params_digest(params: &AdapterParams) -> String {
    let mut bytes = format!("{:?}:", params.role).into_bytes();
    bytes.extend(params.to_le_bytes());
    sha256_hex(&bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uniform,
    Random,
    Localizer,
    Voting,
    Oracle,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::Random => "random",
            Strategy::Localizer => "localizer",
            Strategy::Voting => "voting",
            Strategy::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Qa,
    Moment,
    FrameLabels,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub task: Task,
    pub config: Value,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    /// Rows sorted by example id.
    pub per_example: Vec<Value>,
    pub wall_time_s: f64,
}

impl EvalReport {
    fn rows_key(&self) -> &'static str {
        match self.task {
            Task::Moment => "per_query",
            _ => "per_example",
        }
    }

    /// Report body without timing; metrics sit at the top level.
    fn body(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("task".into(), serde_json::to_value(self.task).expect("task serializes"));
        m.insert("config".into(), self.config.clone());
        m.insert("seed".into(), json!(self.seed));
        for (k, v) in &self.metrics {
            m.insert(k.clone(), json!(v));
        }
        m.insert(self.rows_key().into(), Value::Array(self.per_example.clone()));
        m
    }

    /// SHA-256 of the canonical (sorted-key) JSON body, excluding timing.
    pub fn repro_hash(&self) -> String {
        let text = serde_json::to_string(&Value::Object(self.body())).expect("report serializes");
        sha256_hex(text.as_bytes())
    }

    pub fn to_json(&self) -> Value {
        let mut m = self.body();
        m.insert("wall_time_s".into(), json!(self.wall_time_s));
        m.insert("repro_hash".into(), json!(self.repro_hash()));
        Value::Object(m)
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_json())?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn validate_budget(dataset: &[QaSample], n: usize, k: usize) -> Result<()> {
    ensure_arg!(!dataset.is_empty(), "empty QA dataset");
    ensure_arg!(k >= 1 && k <= n, "need 1 <= k <= n, got k={k}, n={n}");
    for s in dataset {
        ensure_arg!(
            n <= s.video.n_frames(),
            "n={n} exceeds the {} frames of {}",
            s.video.n_frames(),
            s.video.video_id
        );
    }
    Ok(())
}

/// Answer one example under `strategy` with frame budget `n -> k`.
#[allow(clippy::too_many_arguments)]
pub fn answer_with_strategy(
    backbone: &Backbone,
    sample: &QaSample,
    strategy: Strategy,
    loc_params: Option<&AdapterParams>,
    ans_params: &AdapterParams,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<AnswerPrediction> {
    let (video, qa) = (&sample.video, &sample.example);
    let ctx = qa_context(qa, DEFAULT_QA_TEMPLATE)?;
    let fixed = |indices: Vec<usize>| KeyframeSelection {
        scores: vec![0.0; indices.len()],
        indices,
    };
    let selection = match strategy {
        Strategy::Uniform => fixed(uniform_sample(video.n_frames(), k)?),
        Strategy::Random => fixed(random_frames(video.n_frames(), n, k, seed, &qa.example_id)?),
        Strategy::Localizer => {
            let loc = loc_params.ok_or_else(|| {
                Error::Config("the localizer strategy needs a localizer checkpoint".into())
            })?;
            localize(backbone, video, &loc_context(qa, DEFAULT_LOC_TEMPLATE)?, loc, n, k)?
        }
        Strategy::Voting | Strategy::Oracle => {
            let frames = uniform_sample(video.n_frames(), n)?;
            let singles = frames
                .iter()
                .map(|&f| answer_single_frame(backbone, video, f, &ctx, ans_params, &qa.example_id))
                .collect::<Result<Vec<_>>>()?;
            let voted = majority_vote(&singles)?;
            let predicted_index = if strategy == Strategy::Oracle && oracle_correct(&singles, qa.answer_index)? {
                qa.answer_index
            } else {
                voted
            };
            let option_loglik = (0..qa.options.len())
                .map(|c| singles.iter().map(|p| p.option_loglik[c]).sum::<f64>() / singles.len() as f64)
                .collect();
            return Ok(AnswerPrediction {
                example_id: qa.example_id.clone(),
                predicted_index,
                option_loglik,
                frame_indices_used: frames,
            });
        }
    };
    answer_multi(backbone, video, &selection, &ctx, ans_params, &qa.example_id)
}

/// Multi-choice accuracy of one strategy.
#[allow(clippy::too_many_arguments)]
pub fn eval_qa(
    backbone: &Backbone,
    dataset: &[QaSample],
    strategy: Strategy,
    loc_params: Option<&AdapterParams>,
    ans_params: &AdapterParams,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<(EvalReport, Vec<AnswerPrediction>)> {
    let started = Instant::now();
    if strategy == Strategy::Localizer && loc_params.is_none() {
        return Err(Error::Config(
            "strategy localizer requires --localizer".into(),
        ));
    }
    ensure_arg!(ans_params.role == Role::Answerer, "answerer parameters expected");
    validate_budget(dataset, n, k)?;
    let mut order: Vec<&QaSample> = dataset.iter().collect();
    order.sort_by(|a, b| a.example.example_id.cmp(&b.example.example_id));
    let mut predictions = Vec::with_capacity(order.len());
    let mut rows = Vec::with_capacity(order.len());
    let mut correct = 0usize;
    for s in order {
        let p = answer_with_strategy(backbone, s, strategy, loc_params, ans_params, n, k, seed)?;
        let ok = p.predicted_index == s.example.answer_index;
        correct += usize::from(ok);
        rows.push(json!({
            "example_id": p.example_id,
            "predicted_index": p.predicted_index,
            "answer_index": s.example.answer_index,
            "correct": ok,
            "frame_indices_used": p.frame_indices_used,
        }));
        predictions.push(p);
    }
    let mut config = json!({
        "strategy": strategy,
        "n": n,
        "k": k,
        "n_examples": dataset.len(),
        "backbone": backbone.config(),
        "answerer_sha256": params_digest(ans_params),
    });
    if let (Strategy::Localizer, Some(loc)) = (strategy, loc_params) {
        config["localizer_sha256"] = json!(params_digest(loc));
    }
    let report = EvalReport {
        task: Task::Qa,
        config,
        seed,
        metrics: BTreeMap::from([("accuracy".to_string(), correct as f64 / dataset.len() as f64)]),
        per_example: rows,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok((report, predictions))
}

/// Localizer score dump row over the `n` uniformly sampled frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub example_id: String,
    pub video_id: String,
    pub scores: Vec<f64>,
}

/// Forward chain over a dataset: predictions plus the localizer scores that
/// chose the keyframes, both in dataset order.
pub fn infer_dataset(
    backbone: &Backbone,
    dataset: &[QaSample],
    loc_params: &AdapterParams,
    ans_params: &AdapterParams,
    n: usize,
    k: usize,
) -> Result<(Vec<AnswerPrediction>, Vec<ScoreRecord>)> {
    validate_budget(dataset, n, k)?;
    let mut preds = Vec::with_capacity(dataset.len());
    let mut scores = Vec::with_capacity(dataset.len());
    for s in dataset {
        let frames = uniform_sample(s.video.n_frames(), n)?;
        let ctx = loc_context(&s.example, DEFAULT_LOC_TEMPLATE)?;
        scores.push(ScoreRecord {
            example_id: s.example.example_id.clone(),
            video_id: s.video.video_id.clone(),
            scores: score_frame_subset(backbone, &s.video, &frames, &ctx, loc_params)?,
        });
        preds.push(crate::chain::forward_infer(
            backbone, &s.video, &s.example, loc_params, ans_params, n, k,
        )?);
    }
    Ok((preds, scores))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentPredictionRecord {
    pub example_id: String,
    pub spans: Vec<SpanPrediction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentEvalOptions {
    pub fps: f64,
    pub span_threshold: usize,
    pub single_span: bool,
}

impl Default for MomentEvalOptions {
    fn default() -> Self {
        Self {
            fps: crate::moment::DEFAULT_EVAL_FPS,
            span_threshold: crate::moment::DEFAULT_SPAN_THRESHOLD,
            single_span: false,
        }
    }
}

/// Turns per-frame scores into ranked spans.
pub fn spans_from_scores(scores: &[f64], options: &MomentEvalOptions) -> Result<Vec<SpanPrediction>> {
    let bits = binarize(scores);
    let spans = aggregate(&bits.bits, scores, options.fps, options.span_threshold)?;
    Ok(if options.single_span { single_span(spans) } else { spans })
}

/// mAP, R1@0.5 and R1@0.7 plus per-query rows, ordered by example id.
pub fn moment_report(
    mut queries: Vec<QueryResult>,
    config: Value,
    seed: u64,
    started: Instant,
) -> EvalReport {
    queries.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    let ladder = EvalLadder::default();
    let metrics = BTreeMap::from([
        ("mAP".to_string(), map_over_ladder(&queries, &ladder)),
        ("R1@0.5".to_string(), recall_at_1(&queries, 0.5)),
        ("R1@0.7".to_string(), recall_at_1(&queries, 0.7)),
    ]);
    let per_example = queries
        .iter()
        .map(|q| {
            json!({
                "example_id": q.example_id,
                "spans": q.predictions,
                "ground_truth": q.ground_truth,
                "ap": query_map(q, &ladder),
            })
        })
        .collect();
    EvalReport {
        task: Task::Moment,
        config,
        seed,
        metrics,
        per_example,
        wall_time_s: started.elapsed().as_secs_f64(),
    }
}

/// Score every frame, binarize, aggregate, and compute retrieval metrics.
pub fn eval_moment(
    backbone: &Backbone,
    dataset: &[MomentSample],
    loc_params: &AdapterParams,
    options: &MomentEvalOptions,
) -> Result<(EvalReport, Vec<MomentPredictionRecord>)> {
    let started = Instant::now();
    ensure_arg!(!dataset.is_empty(), "empty moment dataset");
    ensure_arg!(options.fps > 0.0 && options.fps.is_finite(), "fps must be positive");
    ensure_arg!(loc_params.role == Role::Localizer, "localizer parameters expected");
    let mut queries = Vec::with_capacity(dataset.len());
    for s in dataset {
        let ctx = build_loc_context(&s.example.query, &[], DEFAULT_LOC_TEMPLATE)?;
        let all: Vec<usize> = (0..s.video.n_frames()).collect();
        let scores = score_frame_subset(backbone, &s.video, &all, &ctx, loc_params)?;
        queries.push(QueryResult {
            example_id: s.example.example_id.clone(),
            predictions: spans_from_scores(&scores, options)?,
            ground_truth: s.example.spans.clone(),
        });
    }
    let records = queries
        .iter()
        .map(|q| MomentPredictionRecord {
            example_id: q.example_id.clone(),
            spans: q.predictions.clone(),
        })
        .collect();
    let config = json!({
        "fps": options.fps,
        "span_threshold": options.span_threshold,
        "single_span": options.single_span,
        "n_examples": dataset.len(),
        "backbone": backbone.config(),
        "localizer_sha256": params_digest(loc_params),
    });
    Ok((moment_report(queries, config, 0, started), records))
}

/// A video with a localization query and reference labels for every frame.
#[derive(Clone, Debug)]
pub struct FrameLabelTarget<'a> {
    pub example_id: String,
    pub video: &'a VideoRecord,
    pub context: LanguageContext,
    pub labels: Vec<u8>,
}

/// QA localization queries labelled with the generator's relevant windows.
pub fn qa_frame_targets(corpus: &Corpus) -> Result<Vec<FrameLabelTarget<'_>>> {
    let truth = corpus.truth_by_video();
    corpus
        .qa
        .iter()
        .map(|s| {
            let t = truth.get(s.video.video_id.as_str()).ok_or_else(|| {
                Error::validation(&s.example.example_id, "no ground-truth window for its video")
            })?;
            Ok(FrameLabelTarget {
                example_id: s.example.example_id.clone(),
                video: &s.video,
                context: loc_context(&s.example, DEFAULT_LOC_TEMPLATE)?,
                labels: t.frame_labels(s.video.n_frames()),
            })
        })
        .collect()
}

/// Moment queries labelled by their annotated spans.
pub fn moment_frame_targets(samples: &[MomentSample]) -> Result<Vec<FrameLabelTarget<'_>>> {
    samples
        .iter()
        .map(|s| {
            Ok(FrameLabelTarget {
                example_id: s.example.example_id.clone(),
                video: &s.video,
                context: build_loc_context(&s.example.query, &[], DEFAULT_LOC_TEMPLATE)?,
                labels: spans_to_frame_labels(&s.example.spans, s.video.features.timestamps()),
            })
        })
        .collect()
}

/// Micro-averaged precision, recall and F1 of binarized localizer scores.
pub fn eval_frame_labels(
    backbone: &Backbone,
    targets: &[FrameLabelTarget<'_>],
    loc_params: &AdapterParams,
) -> Result<EvalReport> {
    let started = Instant::now();
    ensure_arg!(!targets.is_empty(), "no frame-label targets");
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    let mut rows = Vec::with_capacity(targets.len());
    for t in targets {
        let all: Vec<usize> = (0..t.video.n_frames()).collect();
        let bits = binarize(&score_frame_subset(backbone, t.video, &all, &t.context, loc_params)?).bits;
        let (mut a, mut b, mut c) = (0, 0, 0);
        for (p, l) in bits.iter().zip(&t.labels) {
            match (p, l) {
                (1, 1) => a += 1,
                (1, 0) => b += 1,
                (0, 1) => c += 1,
                _ => {}
            }
        }
        tp += a;
        fp += b;
        fn_ += c;
        rows.push(json!({"example_id": t.example_id, "tp": a, "fp": b, "fn": c}));
    }
    rows.sort_by(|a, b| a["example_id"].as_str().cmp(&b["example_id"].as_str()));
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let metrics = BTreeMap::from([
        ("precision".to_string(), ratio(tp, tp + fp)),
        ("recall".to_string(), ratio(tp, tp + fn_)),
        ("f1".to_string(), ratio(2 * tp, 2 * tp + fp + fn_)),
    ]);
    Ok(EvalReport {
        task: Task::FrameLabels,
        config: json!({
            "n_targets": targets.len(),
            "backbone": backbone.config(),
            "localizer_sha256": params_digest(loc_params),
        }),
        seed: 0,
        metrics,
        per_example: rows,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSpec {
    /// `(n, k)` frame budgets.
    pub cells: Vec<(usize, usize)>,
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl AblationSpec {
    /// Validated copy with duplicate cells, strategies and seeds removed,
    /// first occurrence kept.
    pub fn normalized(&self) -> Result<Self> {
        if self.cells.is_empty() || self.strategies.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config(
                "ablation spec needs at least one cell, strategy and seed".into(),
            ));
        }
        for &(n, k) in &self.cells {
            if k == 0 || k > n {
                return Err(Error::Config(format!("invalid ablation cell {n}->{k}")));
            }
        }
        fn dedup<T: PartialEq + Copy + std::fmt::Debug>(what: &str, items: &[T]) -> Vec<T> {
            let mut out: Vec<T> = Vec::with_capacity(items.len());
            for &x in items {
                if out.contains(&x) {
                    warn!("duplicate ablation {what} {x:?} ignored");
                } else {
                    out.push(x);
                }
            }
            out
        }
        Ok(Self {
            cells: dedup("cell", &self.cells),
            strategies: dedup("strategy", &self.strategies),
            seeds: dedup("seed", &self.seeds),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub n: usize,
    pub k: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub accuracy: f64,
    pub repro_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn repro_hash(&self) -> String {
        let hashes: Vec<&str> = self.rows.iter().map(|r| r.repro_hash.as_str()).collect();
        sha256_hex(hashes.join("\n").as_bytes())
    }

    pub fn to_json(&self) -> Value {
        json!({"rows": self.rows, "repro_hash": self.repro_hash()})
    }

    /// Rows `n->k`, one column per strategy, accuracy averaged over seeds.
    pub fn render_grid(&self) -> String {
        let mut cells: Vec<(usize, usize)> = Vec::new();
        let mut strategies: Vec<Strategy> = Vec::new();
        let mut acc: BTreeMap<(usize, usize, Strategy), (f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            if !cells.contains(&(r.n, r.k)) {
                cells.push((r.n, r.k));
            }
            if !strategies.contains(&r.strategy) {
                strategies.push(r.strategy);
            }
            let e = acc.entry((r.n, r.k, r.strategy)).or_default();
            e.0 += r.accuracy;
            e.1 += 1;
        }
        let labels: Vec<String> = cells.iter().map(|(n, k)| format!("{n}->{k}")).collect();
        let first = labels.iter().map(String::len).max().unwrap_or(0).max("frames".len());
        let width = strategies.iter().map(|s| s.name().len()).max().unwrap_or(0).max(6);
        let mut out = format!("{:<first$}", "frames");
        for s in &strategies {
            let _ = write!(out, "  {:>width$}", s.name());
        }
        out.push('\n');
        for (label, &(n, k)) in labels.iter().zip(&cells) {
            let _ = write!(out, "{label:<first$}");
            for &s in &strategies {
                match acc.get(&(n, k, s)) {
                    Some(&(sum, count)) => {
                        let _ = write!(out, "  {:>width$.4}", sum / count as f64);
                    }
                    None => {
                        let _ = write!(out, "  {:>width$}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// One `eval_qa` per (cell, strategy, seed), in spec order.
pub fn run_ablation(
    backbone: &Backbone,
    spec: &AblationSpec,
    loc_params: Option<&AdapterParams>,
    ans_params: &AdapterParams,
    dataset: &[QaSample],
) -> Result<AblationTable> {
    let spec = spec.normalized()?;
    let mut rows = Vec::new();
    for &(n, k) in &spec.cells {
        for &strategy in &spec.strategies {
            for &seed in &spec.seeds {
                let (report, _) = eval_qa(backbone, dataset, strategy, loc_params, ans_params, n, k, seed)?;
                rows.push(AblationRow {
                    n,
                    k,
                    strategy,
                    seed,
                    accuracy: report.metric("accuracy").expect("qa reports carry accuracy"),
                    repro_hash: report.repro_hash(),
                });
            }
        }
    }
    Ok(AblationTable { rows })
}

const GLYPHS: [char; 8] = ['.', ':', '-', '=', '+', '*', '#', '@'];

/// Score line (one glyph per frame, darker is higher), keyframe marker line,
/// and an optional truth line bracketing the window `[start, end)`.
pub fn render_timeline(
    video_id: &str,
    scores: &[f64],
    selection: &[usize],
    truth: Option<(usize, usize)>,
) -> Result<String> {
    let n = scores.len();
    ensure_arg!(
        scores.iter().all(|s| (0.0..=1.0).contains(s)),
        "timeline scores must lie in [0, 1]"
    );
    ensure_arg!(
        selection.iter().all(|&i| i < n),
        "selected frame out of range for {n} frames"
    );
    let mut out = format!("{video_id} ({n} frames)\n");
    for s in scores {
        out.push(GLYPHS[((s * GLYPHS.len() as f64) as usize).min(GLYPHS.len() - 1)]);
    }
    out.push('\n');
    let mut marks = vec![' '; n];
    for &i in selection {
        marks[i] = '^';
    }
    out.extend(marks);
    out.push('\n');
    if let Some((a, b)) = truth {
        ensure_arg!(a < b && b <= n, "truth window [{a}, {b}) invalid for {n} frames");
        let mut line = vec![' '; n];
        for (i, c) in line.iter_mut().enumerate().take(b).skip(a) {
            *c = if b - a == 1 {
                '|'
            } else if i == a {
                '['
            } else if i == b - 1 {
                ']'
            } else {
                '='
            };
        }
        out.extend(line);
        out.push('\n');
    }
    Ok(out)
}

/// Combined run configuration file; every section is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub synthetic: SyntheticConfig,
    pub backbone: BackboneConfig,
    pub train: TrainRunConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.backbone.validate()?;
        self.train.validate()?;
        if self.synthetic.feature_dim != self.backbone.feature_dim {
            return Err(Error::Config(format!(
                "synthetic.feature_dim {} differs from backbone.feature_dim {}",
                self.synthetic.feature_dim, self.backbone.feature_dim
            )));
        }
        Ok(())
    }
}
