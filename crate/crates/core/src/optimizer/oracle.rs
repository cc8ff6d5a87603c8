//! Exact minimizer for small scenes: every valid subset of every frame becomes
//! a trellis node and the chain is solved by dynamic programming.

use crate::error::{Error, Result};
use crate::losses::{LossWeights, SceneEvaluator};
use crate::scene::{SceneBundle, Selection};

use super::topk::{canonical_order, LevelProblem};
use super::{assemble, build_trellis, viterbi, EvalCounters, FrameShortlist, SelectionResult};

pub const ORACLE_MAX_CANDIDATES: usize = 14;
pub const ORACLE_MAX_FRAMES: usize = 12;

/// All valid level subsets in canonical order.
pub(crate) fn all_subsets(problem: &LevelProblem<'_>) -> Vec<Selection> {
    let n = problem.len();
    let mut out = Vec::new();
    let mut stack = vec![(0usize, Selection::EMPTY, 0u64)];
    while let Some((level, levels, blocked)) = stack.pop() {
        if level == n {
            out.push(levels);
            continue;
        }
        stack.push((level + 1, levels, blocked));
        if blocked >> level & 1 == 0 {
            stack.push((level + 1, levels.with(level), blocked | problem.conflicts(level)));
        }
    }
    let mut scored: Vec<(f64, Selection)> = out.into_iter().map(|l| (problem.unary(l), l)).collect();
    scored.sort_by(|a, b| canonical_order(*a, *b));
    scored.into_iter().map(|(_, l)| l).collect()
}

/// Exact minimum of the objective under the non-overlap constraint.
pub fn oracle(scene: &SceneBundle, weights: &LossWeights, tolerance: usize) -> Result<SelectionResult> {
    weights.validate()?;
    let n = scene.max_candidates();
    if n > ORACLE_MAX_CANDIDATES {
        return Err(Error::InstanceTooLarge {
            reason: format!("{n} candidates in a frame, oracle limit is {ORACLE_MAX_CANDIDATES}"),
        });
    }
    if scene.num_frames() > ORACLE_MAX_FRAMES {
        return Err(Error::InstanceTooLarge {
            reason: format!(
                "{} frames, oracle limit is {ORACLE_MAX_FRAMES}",
                scene.num_frames()
            ),
        });
    }

    let evaluator = SceneEvaluator::new(scene, weights.epsilon);
    let mut counters = EvalCounters::default();
    let mut shortlists = Vec::with_capacity(scene.num_frames());
    for t in 0..evaluator.num_frames() {
        let problem = LevelProblem::new(evaluator.frame(t), tolerance, true)?;
        let subsets = all_subsets(&problem);
        counters.li_evaluations += subsets.len() as u64;
        shortlists.push(FrameShortlist {
            frame: t,
            combos: subsets.into_iter().map(|l| problem.combination(l)).collect(),
        });
    }
    let mut trellis = build_trellis(&evaluator, shortlists, weights)?;
    let path = viterbi(&mut trellis)?;
    assemble(trellis, &path, counters, *weights)
}
