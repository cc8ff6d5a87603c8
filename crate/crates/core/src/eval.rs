//! Precision, recall and F1 of selected masks against ground truth.
//!
//! Within each frame, predicted and ground-truth masks are matched greedily:
//! pairs are taken in descending IoU (ties by lower predicted id, then lower
//! ground-truth id), each mask at most once, and a pair counts only if its
//! IoU reaches the threshold. Counts are summed over all frames before the
//! ratios are formed.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{GroundTruthDocument, SelectionDocument};
use crate::raster::BitMask;
use crate::scene::SceneBundle;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub pred_id: u32,
    pub gt_id: u32,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEval {
    pub index: i64,
    pub predictions: usize,
    pub ground_truth: usize,
    pub matches: Vec<MatchPair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub true_positives: usize,
    pub predictions: usize,
    pub ground_truth: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub frames: Vec<FrameEval>,
}

/// Greedy one-to-one matching of `(id, mask)` lists.
pub fn match_frame(pred: &[(u32, &BitMask)], gt: &[(u32, &BitMask)], threshold: f64) -> Vec<MatchPair> {
    let mut pairs = Vec::new();
    for &(pid, pm) in pred {
        for &(gid, gm) in gt {
            let iou = pm.iou_unchecked(gm);
            if iou >= threshold && iou > 0.0 {
                pairs.push(MatchPair {
                    pred_id: pid,
                    gt_id: gid,
                    iou,
                });
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.pred_id.cmp(&b.pred_id))
            .then(a.gt_id.cmp(&b.gt_id))
    });
    let mut used_pred = Vec::new();
    let mut used_gt = Vec::new();
    let mut out = Vec::new();
    for p in pairs {
        if used_pred.contains(&p.pred_id) || used_gt.contains(&p.gt_id) {
            continue;
        }
        used_pred.push(p.pred_id);
        used_gt.push(p.gt_id);
        out.push(p);
    }
    out
}

impl EvalReport {
    pub fn from_frames(frames: Vec<FrameEval>, iou_threshold: f64) -> Self {
        let tp: usize = frames.iter().map(|f| f.matches.len()).sum();
        let np: usize = frames.iter().map(|f| f.predictions).sum();
        let ng: usize = frames.iter().map(|f| f.ground_truth).sum();
        // nothing predicted and nothing to find is a perfect score
        let ratio = |num: usize, den: usize, other: usize| match (den, other) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => num as f64 / den as f64,
        };
        let precision = ratio(tp, np, ng);
        let recall = ratio(tp, ng, np);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalReport {
            iou_threshold,
            true_positives: tp,
            predictions: np,
            ground_truth: ng,
            precision,
            recall,
            f1,
            frames,
        }
    }
}

/// Evaluates a selection document against ground truth on its scene.
pub fn evaluate(
    pred: &SelectionDocument,
    scene: &SceneBundle,
    gt: &GroundTruthDocument,
    iou_threshold: f64,
) -> Result<EvalReport> {
    pred.check_against(scene)?;
    gt.check_against(scene)?;
    let mut frames = Vec::with_capacity(scene.num_frames());
    for ((doc, frame), gt_frame) in pred.frames.iter().zip(&scene.frames).zip(&gt.frames) {
        let pred_masks: Vec<(u32, &BitMask)> = doc
            .selected_ids
            .iter()
            .map(|&id| (id, frame.candidate(id).expect("checked against scene").mask()))
            .collect();
        let gt_masks: Vec<(u32, BitMask)> = gt_frame
            .objects
            .iter()
            .map(|o| Ok((o.object_id, o.mask(gt.width, gt.height)?)))
            .collect::<Result<_>>()?;
        let gt_refs: Vec<(u32, &BitMask)> = gt_masks.iter().map(|(id, m)| (*id, m)).collect();
        frames.push(FrameEval {
            index: doc.index,
            predictions: pred_masks.len(),
            ground_truth: gt_refs.len(),
            matches: match_frame(&pred_masks, &gt_refs, iou_threshold),
        });
    }
    Ok(EvalReport::from_frames(frames, iou_threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: usize, y0: usize, s: usize) -> BitMask {
        BitMask::from_fn(10, 10, |x, y| (x0..x0 + s).contains(&x) && (y0..y0 + s).contains(&y))
    }

    fn frame(pred: &[(u32, &BitMask)], gt: &[(u32, &BitMask)]) -> FrameEval {
        FrameEval {
            index: 0,
            predictions: pred.len(),
            ground_truth: gt.len(),
            matches: match_frame(pred, gt, 0.5),
        }
    }

    #[test]
    fn identical_predictions_score_one() {
        let (a, b) = (square(0, 0, 3), square(5, 5, 3));
        let r = EvalReport::from_frames(vec![frame(&[(1, &a), (2, &b)], &[(1, &a), (2, &b)])], 0.5);
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_predictions() {
        let a = square(0, 0, 3);
        let r = EvalReport::from_frames(vec![frame(&[], &[(1, &a)])], 0.5);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn one_of_two_found() {
        let (a, b) = (square(0, 0, 3), square(5, 5, 3));
        let r = EvalReport::from_frames(vec![frame(&[(4, &a)], &[(1, &a), (2, &b)])], 0.5);
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.precision, 1.0);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn nothing_to_find_and_nothing_found() {
        let r = EvalReport::from_frames(vec![frame(&[], &[])], 0.5);
        assert_eq!(r.f1, 1.0);
    }

    #[test]
    fn greedy_prefers_best_pair_and_respects_threshold() {
        let g = square(0, 0, 4);
        let exact = square(0, 0, 4);
        let near = square(0, 1, 4); // IoU 12/20
        let far = square(0, 2, 4); // IoU 8/24
        let m = match_frame(&[(1, &near), (2, &exact), (3, &far)], &[(9, &g)], 0.5);
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].pred_id, m[0].iou), (2, 1.0));
        assert!(match_frame(&[(3, &far)], &[(9, &g)], 0.5).is_empty());
    }
}
