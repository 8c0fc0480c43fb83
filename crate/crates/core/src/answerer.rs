//! Answering from keyframes, plus the single-frame voting and oracle
//! baselines.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backbone::{AdapterParams, Backbone, EncodedContext};
use crate::datamodel::VideoRecord;
use crate::error::{ensure_arg, Result};
use crate::localizer::{ContextKind, KeyframeSelection, LanguageContext};

/// Amplitude of the frame-ID embedding folded into each query.
const FRAME_ID_SCALE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameIdToken {
    /// Position among the selected keyframes.
    pub ordinal: usize,
    /// Position in the video.
    pub frame_index: usize,
}

impl FrameIdToken {
    /// Fixed sinusoidal code: even components carry the ordinal, odd
    /// components the frame index.
    pub fn embedding(&self, len: usize) -> Vec<f64> {
        (0..len)
            .map(|d| {
                let freq = 1.0 / 100f64.powf((d / 2) as f64 * 2.0 / len as f64);
                if d % 2 == 0 {
                    FRAME_ID_SCALE * ((self.ordinal + 1) as f64 * freq).sin()
                } else {
                    FRAME_ID_SCALE * ((self.frame_index + 1) as f64 * freq).cos()
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerPrediction {
    pub example_id: String,
    pub predicted_index: usize,
    pub option_loglik: Vec<f64>,
    pub frame_indices_used: Vec<usize>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn answer_multi(
    backbone: &Backbone,
    video: &VideoRecord,
    selection: &KeyframeSelection,
    context: &LanguageContext,
    params: &AdapterParams,
    example_id: &str,
) -> Result<AnswerPrediction> {
    ensure_arg!(context.kind == ContextKind::Qa, "answering needs a QA context");
    selection.validate(video.n_frames())?;
    let queries = selection
        .indices
        .iter()
        .enumerate()
        .map(|(ordinal, &frame_index)| {
            let q = backbone.adapt(video.frame(frame_index), params)?;
            Ok(q.tagged(FrameIdToken {
                ordinal,
                frame_index,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let option_loglik = backbone.score_options(&queries, &EncodedContext::new(context))?;
    Ok(AnswerPrediction {
        example_id: example_id.to_string(),
        predicted_index: argmax(&option_loglik),
        option_loglik,
        frame_indices_used: selection.indices.clone(),
    })
}

pub fn answer_single_frame(
    backbone: &Backbone,
    video: &VideoRecord,
    frame_index: usize,
    context: &LanguageContext,
    params: &AdapterParams,
    example_id: &str,
) -> Result<AnswerPrediction> {
    ensure_arg!(
        frame_index < video.n_frames(),
        "frame {frame_index} out of range for {} frames",
        video.n_frames()
    );
    let selection = KeyframeSelection {
        indices: vec![frame_index],
        scores: vec![1.0],
    };
    answer_multi(backbone, video, &selection, context, params, example_id)
}

/// Most frequent predicted option; ties go to the lowest option index.
pub fn majority_vote(predictions: &[AnswerPrediction]) -> Result<usize> {
    ensure_arg!(!predictions.is_empty(), "majority_vote needs at least one prediction");
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for p in predictions {
        *counts.entry(p.predicted_index).or_default() += 1;
    }
    let mut best = (0usize, 0usize);
    for (idx, count) in counts {
        if count > best.1 {
            best = (idx, count);
        }
    }
    Ok(best.0)
}

/// True iff any prediction is correct.
pub fn oracle_correct(predictions: &[AnswerPrediction], answer_index: usize) -> Result<bool> {
    ensure_arg!(!predictions.is_empty(), "oracle_correct needs at least one prediction");
    Ok(predictions.iter().any(|p| p.predicted_index == answer_index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(idx: usize) -> AnswerPrediction {
        AnswerPrediction {
            example_id: "e".into(),
            predicted_index: idx,
            option_loglik: vec![],
            frame_indices_used: vec![0],
        }
    }

    fn preds(idx: &[usize]) -> Vec<AnswerPrediction> {
        idx.iter().copied().map(pred).collect()
    }

    #[test]
    fn voting_examples() {
        assert_eq!(majority_vote(&preds(&[0, 1, 0, 0])).unwrap(), 0);
        assert_eq!(majority_vote(&preds(&[0, 1])).unwrap(), 0);
        assert_eq!(majority_vote(&preds(&[3, 1, 1, 3])).unwrap(), 1);
        assert_eq!(majority_vote(&preds(&[2])).unwrap(), 2);
        assert!(majority_vote(&[]).is_err());
    }

    #[test]
    fn oracle_examples() {
        assert!(oracle_correct(&preds(&[1, 2, 0, 3]), 0).unwrap());
        assert!(!oracle_correct(&preds(&[1, 1, 1, 1]), 0).unwrap());
        assert!(oracle_correct(&[], 0).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[-1.0, -1.0]), 0);
    }

    #[test]
    fn frame_id_embedding_distinguishes_tokens() {
        let a = FrameIdToken { ordinal: 0, frame_index: 4 }.embedding(32);
        let b = FrameIdToken { ordinal: 1, frame_index: 4 }.embedding(32);
        let c = FrameIdToken { ordinal: 0, frame_index: 5 }.embedding(32);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|x| x.abs() <= FRAME_ID_SCALE));
    }

    proptest! {
        #[test]
        fn oracle_dominates_voting(votes in prop::collection::vec(0usize..4, 1..16), gt in 0usize..4) {
            let p = preds(&votes);
            let voted_right = majority_vote(&p).unwrap() == gt;
            prop_assert!(!voted_right || oracle_correct(&p, gt).unwrap());
        }

        #[test]
        fn oracle_is_monotone(votes in prop::collection::vec(0usize..4, 1..10), extra in 0usize..4, gt in 0usize..4) {
            let mut p = preds(&votes);
            let before = oracle_correct(&p, gt).unwrap();
            p.push(pred(extra));
            prop_assert!(!before || oracle_correct(&p, gt).unwrap());
        }
    }
}
