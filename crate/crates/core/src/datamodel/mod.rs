//! Core records: videos as precomputed frame-feature sequences, multi-choice
//! QA examples, moment-retrieval examples, and corpus persistence.

mod manifest;
pub(crate) mod sidecar;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_arg, Error, Result};

pub use manifest::{
    load_corpus, load_moment_manifest, load_qa_manifest, load_truth, read_jsonl, save_corpus,
    write_jsonl, CorpusFiles,
};
pub use sidecar::{read_features, write_features, FEATURE_FORMAT_VERSION};
pub use synthetic::{generate_synthetic_corpus, SyntheticConfig};

/// Frame rate as an exact ratio `num / den` frames per second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 2]", into = "[u32; 2]")]
pub struct Fps {
    num: u32,
    den: u32,
}

impl Fps {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        ensure_arg!(num > 0 && den > 0, "fps must be positive, got {num}/{den}");
        Ok(Self { num, den })
    }

    pub fn num(self) -> u32 {
        self.num
    }

    pub fn den(self) -> u32 {
        self.den
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }

    /// Start time of frame `index` in seconds.
    pub fn timestamp(self, index: usize) -> f64 {
        (index as f64 * f64::from(self.den)) / f64::from(self.num)
    }
}

impl TryFrom<[u32; 2]> for Fps {
    type Error = Error;

    fn try_from([num, den]: [u32; 2]) -> Result<Self> {
        Fps::new(num, den)
    }
}

impl From<Fps> for [u32; 2] {
    fn from(fps: Fps) -> Self {
        [fps.num, fps.den]
    }
}

impl fmt::Display for Fps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Per-frame feature vectors, stored row-major, with frame timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameFeatureSequence {
    dim: usize,
    data: Vec<f32>,
    timestamps: Vec<f64>,
}

impl FrameFeatureSequence {
    pub fn new(dim: usize, data: Vec<f32>, timestamps: Vec<f64>) -> Result<Self> {
        ensure_arg!(dim > 0, "feature dim must be positive");
        ensure_arg!(
            data.len() == dim * timestamps.len(),
            "feature payload has {} values, expected {} frames x {dim}",
            data.len(),
            timestamps.len()
        );
        ensure_arg!(
            data.iter().all(|x| x.is_finite()),
            "feature payload contains non-finite values"
        );
        ensure_arg!(
            timestamps.iter().all(|t| t.is_finite() && *t >= 0.0),
            "timestamps must be finite and non-negative"
        );
        Ok(Self {
            dim,
            data,
            timestamps,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn frame(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoRecord {
    pub video_id: String,
    pub fps: Fps,
    pub features: FrameFeatureSequence,
}

impl VideoRecord {
    /// Builds a record whose timestamps are `index / fps`.
    pub fn new(video_id: impl Into<String>, fps: Fps, dim: usize, data: Vec<f32>) -> Result<Self> {
        let video_id = video_id.into();
        ensure_arg!(dim > 0, "video {video_id}: feature dim must be positive");
        ensure_arg!(
            !data.is_empty() && data.len().is_multiple_of(dim),
            "video {video_id}: payload length {} is not a positive multiple of dim {dim}",
            data.len()
        );
        let n_frames = data.len() / dim;
        let timestamps = (0..n_frames).map(|i| fps.timestamp(i)).collect();
        let features = FrameFeatureSequence::new(dim, data, timestamps)?;
        Ok(Self {
            video_id,
            fps,
            features,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.features.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.fps.timestamp(self.n_frames())
    }

    pub fn frame(&self, index: usize) -> &[f32] {
        self.features.frame(index)
    }

    /// Same video with frames in reverse order (timestamps re-derived).
    pub fn reversed(&self) -> Self {
        let dim = self.features.dim();
        let data = self
            .features
            .data
            .chunks_exact(dim)
            .rev()
            .flatten()
            .copied()
            .collect();
        Self::new(self.video_id.clone(), self.fps, dim, data).expect("reversing a valid video")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAExample {
    pub example_id: String,
    pub video_id: String,
    pub question: String,
    pub options: Vec<String>,
    pub answer_index: usize,
}

impl QAExample {
    pub fn validate(&self) -> Result<()> {
        if self.options.len() < 2 {
            return Err(Error::validation(
                &self.example_id,
                format!("needs at least 2 options, got {}", self.options.len()),
            ));
        }
        if self.answer_index >= self.options.len() {
            return Err(Error::validation(
                &self.example_id,
                format!(
                    "answer_index {} out of range for {} options",
                    self.answer_index,
                    self.options.len()
                ),
            ));
        }
        if self.options.iter().any(|o| o.trim().is_empty()) {
            return Err(Error::validation(&self.example_id, "empty option string"));
        }
        Ok(())
    }
}

/// Ground-truth temporal span in seconds; serialized as `[start_s, end_s]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct MomentAnnotation {
    pub start_s: f64,
    pub end_s: f64,
}

impl MomentAnnotation {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self> {
        ensure_arg!(
            start_s.is_finite() && end_s.is_finite() && start_s >= 0.0 && start_s < end_s,
            "invalid span [{start_s}, {end_s}]"
        );
        Ok(Self { start_s, end_s })
    }
}

impl From<(f64, f64)> for MomentAnnotation {
    fn from((start_s, end_s): (f64, f64)) -> Self {
        Self { start_s, end_s }
    }
}

impl From<MomentAnnotation> for (f64, f64) {
    fn from(m: MomentAnnotation) -> Self {
        (m.start_s, m.end_s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentExample {
    pub example_id: String,
    pub video_id: String,
    pub query: String,
    pub spans: Vec<MomentAnnotation>,
}

impl MomentExample {
    pub fn validate(&self, duration_s: f64) -> Result<()> {
        if self.spans.is_empty() {
            return Err(Error::validation(&self.example_id, "no spans"));
        }
        for span in &self.spans {
            if !(span.start_s >= 0.0 && span.start_s < span.end_s && span.end_s <= duration_s) {
                return Err(Error::validation(
                    &self.example_id,
                    format!(
                        "span [{}, {}] is empty or outside [0, {duration_s}]",
                        span.start_s, span.end_s
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Latent relevance used by the synthetic generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGroundTruth {
    pub video_id: String,
    /// Frame range `[start, end)`.
    pub relevant_window: (usize, usize),
    pub noise_rate: f64,
}

impl SyntheticGroundTruth {
    pub fn contains(&self, frame: usize) -> bool {
        (self.relevant_window.0..self.relevant_window.1).contains(&frame)
    }

    pub fn frame_labels(&self, n_frames: usize) -> Vec<u8> {
        (0..n_frames).map(|i| u8::from(self.contains(i))).collect()
    }
}

/// A video together with one example posed on it.
#[derive(Clone, Debug)]
pub struct Sample<E> {
    pub video: Arc<VideoRecord>,
    pub example: E,
}

pub type QaSample = Sample<QAExample>;
pub type MomentSample = Sample<MomentExample>;

/// Everything stored in a data directory.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub qa: Vec<QaSample>,
    pub moment: Vec<MomentSample>,
    pub truth: Vec<SyntheticGroundTruth>,
}

impl Corpus {
    pub fn truth_by_video(&self) -> BTreeMap<&str, &SyntheticGroundTruth> {
        self.truth.iter().map(|t| (t.video_id.as_str(), t)).collect()
    }

    /// Distinct videos referenced by either split, ordered by id.
    pub fn videos(&self) -> BTreeMap<&str, &Arc<VideoRecord>> {
        self.qa
            .iter()
            .map(|s| &s.video)
            .chain(self.moment.iter().map(|s| &s.video))
            .map(|v| (v.video_id.as_str(), v))
            .collect()
    }
}

/// Centered uniform sampling: index `floor((i + 0.5) * n_total / n)` for `i < n`.
pub fn uniform_sample(n_total: usize, n: usize) -> Result<Vec<usize>> {
    ensure_arg!(
        n >= 1 && n <= n_total,
        "uniform_sample needs 1 <= n <= n_total, got n={n}, n_total={n_total}"
    );
    Ok((0..n).map(|i| ((2 * i + 1) * n_total) / (2 * n)).collect())
}
