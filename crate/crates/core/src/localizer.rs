//! Language-aware frame scoring and keyframe selection.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::backbone::{AdapterParams, Backbone, EncodedContext};
use crate::datamodel::VideoRecord;
use crate::error::{ensure_arg, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextKind {
    Localization,
    Qa,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: &'static str,
    pub kind: ContextKind,
    pub text: &'static str,
}

const OPTIONS_SLOT: &str = "{options}";
const QUESTION_SLOT: &str = "{question}";

/// Registered prompt templates. The localization prompts are the three
/// candidates compared in prompt selection; `details` scored best.
pub const TEMPLATES: [PromptTemplate; 4] = [
    PromptTemplate {
        id: "needed",
        kind: ContextKind::Localization,
        text: "Question: {question} {options}Does the frame have the information needed to answer the question correctly?",
    },
    PromptTemplate {
        id: "contains",
        kind: ContextKind::Localization,
        text: "Question: {question} {options}Does the provided frame contain the necessary information to accurately answer the given question?",
    },
    PromptTemplate {
        id: "details",
        kind: ContextKind::Localization,
        text: "Question: {question} {options}Does the information within the frame provide the necessary details to accurately answer the given question?",
    },
    PromptTemplate {
        id: "qa",
        kind: ContextKind::Qa,
        text: "Question: {question} {options}Answer with the option letter.",
    },
];

pub const DEFAULT_LOC_TEMPLATE: &str = "details";
pub const DEFAULT_QA_TEMPLATE: &str = "qa";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageContext {
    pub kind: ContextKind,
    pub question: String,
    pub options: Vec<String>,
    pub prompt_template: String,
    pub rendered: String,
}

fn option_label(i: usize) -> String {
    if i < 26 {
        char::from(b'A' + i as u8).to_string()
    } else {
        (i + 1).to_string()
    }
}

fn render(template: &PromptTemplate, question: &str, options: &[String]) -> LanguageContext {
    let mut opts = String::new();
    for (i, o) in options.iter().enumerate() {
        let _ = write!(opts, "Option {}: {} ", option_label(i), o);
    }
    let rendered = template
        .text
        .replacen(QUESTION_SLOT, question, 1)
        .replacen(OPTIONS_SLOT, &opts, 1);
    LanguageContext {
        kind: template.kind,
        question: question.to_string(),
        options: options.to_vec(),
        prompt_template: template.text.to_string(),
        rendered,
    }
}

fn lookup(template_id: &str, kind: ContextKind) -> Result<&'static PromptTemplate> {
    TEMPLATES
        .iter()
        .find(|t| t.id == template_id && t.kind == kind)
        .ok_or_else(|| {
            let known: Vec<_> = TEMPLATES
                .iter()
                .filter(|t| t.kind == kind)
                .map(|t| t.id)
                .collect();
            Error::Argument(format!(
                "unknown {kind:?} template {template_id:?}; registered: {}",
                known.join(", ")
            ))
        })
}

/// Localization context; moment queries pass an empty option list.
pub fn build_loc_context(question: &str, options: &[String], template_id: &str) -> Result<LanguageContext> {
    Ok(render(lookup(template_id, ContextKind::Localization)?, question, options))
}

pub fn build_qa_context(question: &str, options: &[String], template_id: &str) -> Result<LanguageContext> {
    Ok(render(lookup(template_id, ContextKind::Qa)?, question, options))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScoreVector {
    pub video_id: String,
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyframeSelection {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl KeyframeSelection {
    /// Checks that indices are strictly increasing and below `n_frames`.
    pub fn validate(&self, n_frames: usize) -> Result<()> {
        ensure_arg!(!self.indices.is_empty(), "empty keyframe selection");
        ensure_arg!(
            self.indices.len() == self.scores.len(),
            "selection has {} indices but {} scores",
            self.indices.len(),
            self.scores.len()
        );
        ensure_arg!(
            self.indices.windows(2).all(|w| w[0] < w[1]),
            "keyframe indices must be strictly increasing: {:?}",
            self.indices
        );
        ensure_arg!(
            self.indices.iter().all(|&i| i < n_frames),
            "keyframe index out of range for {n_frames} frames"
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePredictionBits {
    pub bits: Vec<u8>,
    pub threshold_rule: String,
}

/// Scores the listed frames independently; output follows `frames` order.
pub fn score_frame_subset(
    backbone: &Backbone,
    video: &VideoRecord,
    frames: &[usize],
    context: &LanguageContext,
    params: &AdapterParams,
) -> Result<Vec<f64>> {
    ensure_arg!(
        context.kind == ContextKind::Localization,
        "frame scoring needs a localization context"
    );
    let encoded = EncodedContext::new(context);
    frames
        .iter()
        .map(|&i| {
            ensure_arg!(i < video.n_frames(), "frame {i} out of range");
            let q = backbone.adapt(video.frame(i), params)?;
            backbone.score_yes(&q, &encoded)
        })
        .collect()
}

pub fn score_frames(
    backbone: &Backbone,
    video: &VideoRecord,
    context: &LanguageContext,
    params: &AdapterParams,
) -> Result<FrameScoreVector> {
    let all: Vec<usize> = (0..video.n_frames()).collect();
    Ok(FrameScoreVector {
        video_id: video.video_id.clone(),
        scores: score_frame_subset(backbone, video, &all, context, params)?,
    })
}

/// The `k` highest scores, ties toward the lower index, returned in
/// ascending index order.
pub fn select_topk(scores: &[f64], k: usize) -> Result<KeyframeSelection> {
    ensure_arg!(
        k >= 1 && k <= scores.len(),
        "select_topk needs 1 <= k <= n, got k={k}, n={}",
        scores.len()
    );
    ensure_arg!(scores.iter().all(|s| s.is_finite()), "non-finite frame score");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => a.cmp(&b),
        other => other,
    });
    let mut indices = order[..k].to_vec();
    indices.sort_unstable();
    let selected = indices.iter().map(|&i| scores[i]).collect();
    Ok(KeyframeSelection {
        indices,
        scores: selected,
    })
}

/// Bit `i` is set iff `scores[i] > 0.5`.
pub fn binarize(scores: &[f64]) -> FramePredictionBits {
    FramePredictionBits {
        bits: scores.iter().map(|&s| u8::from(s > 0.5)).collect(),
        threshold_rule: "yes probability > 0.5".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn opts(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn default_template_renders_prompt_sentence() {
        let ctx = build_loc_context(
            "which item is held",
            &opts(&["cup", "ball", "kite", "hat"]),
            DEFAULT_LOC_TEMPLATE,
        )
        .unwrap();
        assert!(ctx.rendered.contains(
            "Does the information within the frame provide the necessary details to accurately answer the given question?"
        ));
        assert!(ctx.rendered.contains("Option A: cup Option B: ball Option C: kite Option D: hat "));
        for part in ["which item is held", "cup", "ball", "kite", "hat"] {
            assert_eq!(ctx.rendered.matches(part).count(), 1, "{part}");
        }
        assert_eq!(ctx, build_loc_context("which item is held", &ctx.options, "details").unwrap());
    }

    #[test]
    fn empty_options_render_query_and_prompt() {
        let ctx = build_loc_context("the dog runs", &[], "needed").unwrap();
        assert_eq!(
            ctx.rendered,
            "Question: the dog runs Does the frame have the information needed to answer the question correctly?"
        );
    }

    #[test]
    fn unknown_template_lists_registered() {
        let err = build_loc_context("q", &[], "nope").unwrap_err().to_string();
        assert!(err.contains("needed, contains, details"), "{err}");
        assert!(build_loc_context("q", &[], "qa").is_err());
    }

    #[test]
    fn topk_examples() {
        assert_eq!(select_topk(&[0.9, 0.1, 0.8, 0.7], 2).unwrap().indices, [0, 2]);
        assert_eq!(select_topk(&[0.3; 4], 2).unwrap().indices, [0, 1]);
        assert_eq!(select_topk(&[0.2, 0.9, 0.4], 3).unwrap().indices, [0, 1, 2]);
        assert!(select_topk(&[0.2, 0.9], 3).is_err());
        assert!(select_topk(&[0.2, 0.9], 0).is_err());
    }

    #[test]
    fn binarize_examples() {
        assert_eq!(binarize(&[0.9, 0.4, 0.51]).bits, [1, 0, 1]);
        assert_eq!(binarize(&[0.5, 0.5]).bits, [0, 0]);
    }

    /// Sort `(-score, index)` and take the first k, re-sorted ascending.
    fn brute_topk(scores: &[f64], k: usize) -> Vec<usize> {
        let mut keyed: Vec<(i64, usize)> = scores
            .iter()
            .enumerate()
            .map(|(i, &s)| (-(s * 1e6).round() as i64, i))
            .collect();
        keyed.sort();
        let mut idx: Vec<usize> = keyed[..k].iter().map(|&(_, i)| i).collect();
        idx.sort();
        idx
    }

    #[test]
    fn topk_matches_brute_force_on_quantized_grid() {
        // every vector of length <= 6 over a 3-level grid, plus sampled
        // length 7-8 vectors in the proptest below
        let grid = [0.1, 0.5, 0.9];
        for n in 1..=6usize {
            for code in 0..3usize.pow(n as u32) {
                let scores: Vec<f64> = (0..n).map(|i| grid[(code / 3usize.pow(i as u32)) % 3]).collect();
                for k in 1..=n {
                    assert_eq!(select_topk(&scores, k).unwrap().indices, brute_topk(&scores, k));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn topk_matches_brute_force_long(levels in prop::collection::vec(0u8..4, 7..=8), kf in 0.0f64..1.0) {
            let scores: Vec<f64> = levels.iter().map(|&l| f64::from(l) / 4.0).collect();
            let k = 1 + ((scores.len() - 1) as f64 * kf) as usize;
            prop_assert_eq!(select_topk(&scores, k).unwrap().indices, brute_topk(&scores, k));
        }

        #[test]
        fn topk_invariant_under_monotone_maps(
            scores in prop::collection::vec(0.0f64..1.0, 1..40),
            a in 0.1f64..5.0, b in -3.0f64..3.0, kf in 0.0f64..1.0,
        ) {
            let k = 1 + ((scores.len() - 1) as f64 * kf) as usize;
            let mapped: Vec<f64> = scores.iter().map(|s| (a * s + b).exp()).collect();
            prop_assert_eq!(select_topk(&scores, k).unwrap().indices, select_topk(&mapped, k).unwrap().indices);
        }

        #[test]
        fn binarize_invariant_under_monotone_maps_fixing_half(
            scores in prop::collection::vec(0.0f64..1.0, 1..40), p in 0.2f64..5.0,
        ) {
            // x -> 0.5 + sign(x - 0.5) * |2x - 1|^p / 2 fixes 0.5 and is strictly increasing
            let mapped: Vec<f64> = scores
                .iter()
                .map(|&s| 0.5 + (s - 0.5).signum() * (2.0 * (s - 0.5)).abs().powf(p) / 2.0)
                .collect();
            prop_assert_eq!(binarize(&scores), binarize(&mapped));
        }
    }
}
