//! The three-part model: frame features arrive already encoded by a frozen
//! image encoder, a trainable per-frame adapter maps them to query features,
//! and a frozen scoring head reads query features together with the language
//! context.
//!
//! Two implementations share one interface. `synthetic-oracle` is a fixed
//! model calibrated to the synthetic generator's feature layout and has no
//! trainable weights. `trainable-toy` uses a one-hidden-layer adapter
//! (`affine -> tanh -> affine`) in front of seeded random frozen heads and
//! supports gradient steps.

mod params;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use params::{AdapterParams, ParamArray, Role, CHECKPOINT_FORMAT_VERSION};
use params::{B_IN, B_OUT, W_IN, W_OUT};

use crate::answerer::FrameIdToken;
use crate::datamodel::synthetic::{CONTENT_OFFSET, RELEVANCE_CHANNEL};
use crate::error::{ensure_arg, Error, Result};
use crate::localizer::LanguageContext;
use crate::text::{bag_of_tokens, dot, phrase_embedding, TEXT_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Implementation {
    SyntheticOracle,
    TrainableToy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneConfig {
    pub feature_dim: usize,
    pub query_dim: usize,
    pub hidden_dim: usize,
    pub implementation: Implementation,
    /// Seeds the frozen heads.
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            feature_dim: 64,
            query_dim: 32,
            hidden_dim: 32,
            implementation: Implementation::TrainableToy,
            seed: 0,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.query_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("backbone dims must be positive".into()));
        }
        if self.implementation == Implementation::SyntheticOracle
            && self.feature_dim < CONTENT_OFFSET + TEXT_DIM
        {
            return Err(Error::Config(format!(
                "synthetic-oracle needs feature_dim >= {}",
                CONTENT_OFFSET + TEXT_DIM
            )));
        }
        Ok(())
    }

    /// Length of the adapter output.
    pub fn query_len(&self) -> usize {
        match self.implementation {
            Implementation::SyntheticOracle => self.feature_dim,
            Implementation::TrainableToy => self.query_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryFeature(pub Vec<f64>);

impl QueryFeature {
    /// Adds the frame-ID embedding for `token`.
    pub fn tagged(mut self, token: FrameIdToken) -> Self {
        let tag = token.embedding(self.0.len());
        self.0.iter_mut().zip(tag).for_each(|(q, t)| *q += t);
        self
    }
}

/// Text-side inputs to the frozen heads, computed once per context.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedContext {
    pub context: [f64; TEXT_DIM],
    pub options: Vec<[f64; TEXT_DIM]>,
}

impl EncodedContext {
    pub fn new(ctx: &LanguageContext) -> Self {
        Self {
            context: bag_of_tokens(&ctx.rendered),
            options: ctx.options.iter().map(|o| phrase_embedding(o)).collect(),
        }
    }
}

/// Frozen synthetic-oracle head constants, calibrated to the default
/// generator (relevance strength 2, unit-norm answer embeddings).
const ORACLE_RELEVANCE_THRESHOLD: f64 = 1.0;
const ORACLE_RELEVANCE_SHARPNESS: f64 = 4.0;
const ORACLE_OPTION_SCALE: f64 = 2.0;

#[derive(Clone, Debug)]
struct ToyHead {
    /// Yes/no bilinear forms over (query, context), `query_dim x TEXT_DIM`.
    yes_bilinear: Vec<f64>,
    no_bilinear: Vec<f64>,
    yes_linear: Vec<f64>,
    no_linear: Vec<f64>,
    /// Projects option embeddings into query space, `query_dim x TEXT_DIM`.
    option_proj: Vec<f64>,
}

impl ToyHead {
    fn new(config: &BackboneConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let q = config.query_dim;
        let mut draw = |n: usize, scale: f64| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect()
        };
        Self {
            yes_bilinear: draw(q * TEXT_DIM, 1.0 / (q as f64).sqrt()),
            no_bilinear: draw(q * TEXT_DIM, 1.0 / (q as f64).sqrt()),
            yes_linear: draw(q, 1.0 / (q as f64).sqrt()),
            no_linear: draw(q, 1.0 / (q as f64).sqrt()),
            option_proj: draw(q * TEXT_DIM, 1.0 / (q as f64).sqrt()),
        }
    }

    /// Gradient of `logit_yes - logit_no` with respect to the query.
    fn yes_direction(&self, ctx: &EncodedContext) -> Vec<f64> {
        let q = self.yes_linear.len();
        (0..q)
            .map(|i| {
                let row = i * TEXT_DIM..(i + 1) * TEXT_DIM;
                dot(&self.yes_bilinear[row.clone()], &ctx.context) + self.yes_linear[i]
                    - dot(&self.no_bilinear[row], &ctx.context)
                    - self.no_linear[i]
            })
            .collect()
    }

    fn option_directions(&self, ctx: &EncodedContext) -> Vec<Vec<f64>> {
        let q = self.yes_linear.len();
        ctx.options
            .iter()
            .map(|e| {
                (0..q)
                    .map(|i| dot(&self.option_proj[i * TEXT_DIM..(i + 1) * TEXT_DIM], e))
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
enum Head {
    Oracle,
    Toy(ToyHead),
}

/// One localization training example: a frame and its binary label.
#[derive(Clone, Copy, Debug)]
pub struct LocalizationSample<'a> {
    pub feature: &'a [f32],
    pub context: &'a EncodedContext,
    pub label: bool,
}

/// One answering training example: keyframes in temporal order.
#[derive(Clone, Debug)]
pub struct AnsweringSample<'a> {
    pub frames: Vec<(&'a [f32], FrameIdToken)>,
    pub context: &'a EncodedContext,
    pub target: usize,
}

#[derive(Clone, Debug)]
pub enum TrainBatch<'a> {
    Localization {
        samples: Vec<LocalizationSample<'a>>,
        /// Loss weight of positive frames; negatives weigh 1.
        positive_weight: f64,
    },
    Answering(Vec<AnsweringSample<'a>>),
}

impl TrainBatch<'_> {
    pub fn len(&self) -> usize {
        match self {
            TrainBatch::Localization { samples, .. } => samples.len(),
            TrainBatch::Answering(samples) => samples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn role(&self) -> Role {
        match self {
            TrainBatch::Localization { .. } => Role::Localizer,
            TrainBatch::Answering(_) => Role::Answerer,
        }
    }
}

struct AdapterTrace {
    input: Vec<f64>,
    hidden: Vec<f64>,
    output: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    config: BackboneConfig,
    head: Head,
}

impl Backbone {
    pub fn new(config: BackboneConfig) -> Result<Self> {
        config.validate()?;
        let head = match config.implementation {
            Implementation::SyntheticOracle => Head::Oracle,
            Implementation::TrainableToy => Head::Toy(ToyHead::new(&config)),
        };
        Ok(Self { config, head })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn is_trainable(&self) -> bool {
        matches!(self.head, Head::Toy(_))
    }

    /// Byte image of the frozen head weights.
    pub fn frozen_fingerprint(&self) -> Vec<u8> {
        match &self.head {
            Head::Oracle => Vec::new(),
            Head::Toy(h) => [
                &h.yes_bilinear,
                &h.no_bilinear,
                &h.yes_linear,
                &h.no_linear,
                &h.option_proj,
            ]
            .into_iter()
            .flat_map(|v| v.iter().flat_map(|x| x.to_le_bytes()))
            .collect(),
        }
    }

    fn check_params(&self, params: &AdapterParams) -> Result<()> {
        let expected = AdapterParams::zeros(&self.config, params.role);
        ensure_arg!(
            params.same_shapes(&expected),
            "adapter parameters do not match the backbone configuration"
        );
        Ok(())
    }

    fn forward_adapter(&self, feature: &[f32], params: &AdapterParams) -> Result<AdapterTrace> {
        ensure_arg!(
            feature.len() == self.config.feature_dim,
            "frame feature has length {}, backbone expects {}",
            feature.len(),
            self.config.feature_dim
        );
        let input: Vec<f64> = feature.iter().map(|&x| f64::from(x)).collect();
        if let Head::Oracle = self.head {
            return Ok(AdapterTrace {
                output: input.clone(),
                hidden: Vec::new(),
                input,
            });
        }
        self.check_params(params)?;
        let (d, h, q) = (
            self.config.feature_dim,
            self.config.hidden_dim,
            self.config.query_dim,
        );
        let w_in = params.array(W_IN);
        let b_in = params.array(B_IN);
        let w_out = params.array(W_OUT);
        let b_out = params.array(B_OUT);
        let hidden: Vec<f64> = (0..h)
            .map(|i| (dot(&w_in[i * d..(i + 1) * d], &input) + b_in[i]).tanh())
            .collect();
        let output = (0..q)
            .map(|i| dot(&w_out[i * h..(i + 1) * h], &hidden) + b_out[i])
            .collect();
        Ok(AdapterTrace {
            input,
            hidden,
            output,
        })
    }

    /// Accumulates `d loss / d params` given `d loss / d output`.
    fn backward_adapter(
        &self,
        params: &AdapterParams,
        trace: &AdapterTrace,
        d_out: &[f64],
        grads: &mut AdapterParams,
    ) {
        let (d, h) = (self.config.feature_dim, self.config.hidden_dim);
        let w_out = params.array(W_OUT);
        let mut d_pre = vec![0.0; h];
        for (j, slot) in d_pre.iter_mut().enumerate() {
            let back: f64 = d_out
                .iter()
                .enumerate()
                .map(|(i, g)| g * w_out[i * h + j])
                .sum();
            *slot = back * (1.0 - trace.hidden[j] * trace.hidden[j]);
        }
        {
            let g = grads.array_mut(W_OUT);
            for (i, go) in d_out.iter().enumerate() {
                for (j, z) in trace.hidden.iter().enumerate() {
                    g[i * h + j] += go * z;
                }
            }
        }
        grads
            .array_mut(B_OUT)
            .iter_mut()
            .zip(d_out)
            .for_each(|(g, x)| *g += x);
        {
            let g = grads.array_mut(W_IN);
            for (j, gp) in d_pre.iter().enumerate() {
                for (k, x) in trace.input.iter().enumerate() {
                    g[j * d + k] += gp * x;
                }
            }
        }
        grads
            .array_mut(B_IN)
            .iter_mut()
            .zip(&d_pre)
            .for_each(|(g, x)| *g += x);
    }

    pub fn adapt(&self, feature: &[f32], params: &AdapterParams) -> Result<QueryFeature> {
        Ok(QueryFeature(self.forward_adapter(feature, params)?.output))
    }

    /// Normalized probability of "yes" from the two-way head.
    pub fn score_yes(&self, query: &QueryFeature, context: &EncodedContext) -> Result<f64> {
        self.check_query(query)?;
        Ok(sigmoid(self.yes_logit(query, context)))
    }

    /// `logit_yes - logit_no`.
    fn yes_logit(&self, query: &QueryFeature, context: &EncodedContext) -> f64 {
        match &self.head {
            Head::Oracle => {
                ORACLE_RELEVANCE_SHARPNESS * (query.0[RELEVANCE_CHANNEL] - ORACLE_RELEVANCE_THRESHOLD)
            }
            Head::Toy(head) => dot(&query.0, &head.yes_direction(context)),
        }
    }

    /// Log-likelihood of each option given the (tagged) keyframe queries.
    pub fn score_options(&self, queries: &[QueryFeature], context: &EncodedContext) -> Result<Vec<f64>> {
        ensure_arg!(!queries.is_empty(), "score_options needs at least one query");
        ensure_arg!(!context.options.is_empty(), "score_options needs at least one option");
        for q in queries {
            self.check_query(q)?;
        }
        let logits = match &self.head {
            Head::Oracle => context
                .options
                .iter()
                .map(|e| {
                    queries
                        .iter()
                        .map(|q| {
                            ORACLE_OPTION_SCALE
                                * dot(&q.0[CONTENT_OFFSET..CONTENT_OFFSET + TEXT_DIM], e)
                        })
                        .sum()
                })
                .collect::<Vec<f64>>(),
            Head::Toy(head) => {
                let dirs = head.option_directions(context);
                let squashed: Vec<Vec<f64>> = queries
                    .iter()
                    .map(|q| q.0.iter().map(|x| x.tanh()).collect())
                    .collect();
                dirs.iter()
                    .map(|u| squashed.iter().map(|z| dot(z, u)).sum())
                    .collect()
            }
        };
        Ok(log_softmax(&logits))
    }

    fn check_query(&self, query: &QueryFeature) -> Result<()> {
        ensure_arg!(
            query.0.len() == self.config.query_len(),
            "query feature has length {}, backbone expects {}",
            query.0.len(),
            self.config.query_len()
        );
        Ok(())
    }

    /// Mean cross-entropy over the batch and its gradient.
    pub fn loss_and_grad(&self, batch: &TrainBatch<'_>, params: &AdapterParams) -> Result<(f64, AdapterParams)> {
        let Head::Toy(head) = &self.head else {
            return Err(Error::Unsupported(
                "the synthetic-oracle backbone has no trainable parameters".into(),
            ));
        };
        ensure_arg!(!batch.is_empty(), "empty training batch");
        ensure_arg!(
            params.role == batch.role(),
            "batch for the {:?} trained with {:?} parameters",
            batch.role(),
            params.role
        );
        self.check_params(params)?;
        let mut grads = params.zeros_like();
        let mut total = 0.0;
        match batch {
            TrainBatch::Localization {
                samples,
                positive_weight,
            } => {
                for s in samples {
                    let trace = self.forward_adapter(s.feature, params)?;
                    let dir = head.yes_direction(s.context);
                    let logit = dot(&trace.output, &dir);
                    let (target, weight) = if s.label {
                        (1.0, *positive_weight)
                    } else {
                        (0.0, 1.0)
                    };
                    // -log p(label) with p(yes) = sigmoid(logit)
                    total += weight * if s.label { softplus(-logit) } else { softplus(logit) };
                    let g = weight * (sigmoid(logit) - target);
                    let d_out: Vec<f64> = dir.iter().map(|x| g * x).collect();
                    self.backward_adapter(params, &trace, &d_out, &mut grads);
                }
            }
            TrainBatch::Answering(samples) => {
                for s in samples {
                    ensure_arg!(!s.frames.is_empty(), "answering sample without frames");
                    ensure_arg!(
                        s.target < s.context.options.len(),
                        "target {} out of range",
                        s.target
                    );
                    let dirs = head.option_directions(s.context);
                    let mut traces = Vec::with_capacity(s.frames.len());
                    let mut squashed = Vec::with_capacity(s.frames.len());
                    for (feature, token) in &s.frames {
                        let trace = self.forward_adapter(feature, params)?;
                        let tagged = QueryFeature(trace.output.clone()).tagged(*token);
                        squashed.push(tagged.0.iter().map(|x| x.tanh()).collect::<Vec<f64>>());
                        traces.push(trace);
                    }
                    let logits: Vec<f64> = dirs
                        .iter()
                        .map(|u| squashed.iter().map(|z| dot(z, u)).sum())
                        .collect();
                    let logp = log_softmax(&logits);
                    total -= logp[s.target];
                    let mut d_z = vec![0.0; self.config.query_dim];
                    for (c, u) in dirs.iter().enumerate() {
                        let g = logp[c].exp() - if c == s.target { 1.0 } else { 0.0 };
                        d_z.iter_mut().zip(u).for_each(|(d, x)| *d += g * x);
                    }
                    for (trace, z) in traces.iter().zip(&squashed) {
                        let d_out: Vec<f64> = d_z
                            .iter()
                            .zip(z)
                            .map(|(d, z)| d * (1.0 - z * z))
                            .collect();
                        self.backward_adapter(params, trace, &d_out, &mut grads);
                    }
                }
            }
        }
        let n = batch.len() as f64;
        grads.scale_in_place(1.0 / n);
        Ok((total / n, grads))
    }

    /// One plain gradient-descent step. Returns the updated parameters and the
    /// batch loss measured before the update.
    pub fn train_step(
        &self,
        batch: &TrainBatch<'_>,
        params: &AdapterParams,
        learning_rate: f64,
    ) -> Result<(AdapterParams, f64)> {
        let (loss, grads) = self.loss_and_grad(batch, params)?;
        let mut next = params.add_scaled(&grads, -learning_rate)?;
        next.version = params.version + 1;
        if !next.is_finite() {
            return Err(Error::Argument(
                "parameter update diverged to non-finite values".into(),
            ));
        }
        Ok((next, loss))
    }

    /// Mean loss only, for finite-difference checks.
    pub fn loss(&self, batch: &TrainBatch<'_>, params: &AdapterParams) -> Result<f64> {
        Ok(self.loss_and_grad(batch, params)?.0)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

#[cfg(test)]
mod tests;
