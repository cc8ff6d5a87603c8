//! Two-stage minimization of the selection objective.
//!
//! Stage 1 shortlists, per frame, the `k` candidate subsets with the lowest
//! background loss ([`enumerate_topk`]). Stage 2 picks one shortlisted subset
//! per frame by a shortest path over the trellis of shortlists, now scoring
//! the full objective including the flow and regularization terms
//! ([`trellis`]). [`oracle`] solves the same problem exactly on small inputs.

pub mod oracle;
pub mod topk;
pub mod trellis;

use std::borrow::Cow;
use std::ops::AddAssign;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{FrameTerms, LossBreakdown, LossWeights, SceneEvaluator};
use crate::raster::BitMask;
use crate::scene::{FrameInputs, SceneBundle, Selection, SELECTION_CAPACITY};

pub use oracle::{oracle, ORACLE_MAX_CANDIDATES, ORACLE_MAX_FRAMES};
pub use trellis::{build_trellis, shortest_path, viterbi, SceneCosts, Trellis, TrellisCosts, TrellisPath};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_MAX_CANDIDATES: usize = 24;

/// Constant of the stage-1 budget `li_evaluations <= C1 * K * N^3 * T`
/// (with `N` taken as at least 1).
pub const BUDGET_C1: u64 = 8;

/// One subset of a frame's candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct Combination {
    pub frame: usize,
    /// Bits index the frame's candidate list.
    pub selection: Selection,
    /// Selected ids, ascending.
    pub ids: Vec<u32>,
    pub foreground: BitMask,
    pub unary_li: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameShortlist {
    pub frame: usize,
    pub combos: Vec<Combination>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounters {
    pub li_evaluations: u64,
    pub pair_evaluations: u64,
    pub tree_nodes_expanded: u64,
    pub trellis_edges_relaxed: u64,
}

impl AddAssign for EvalCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.li_evaluations += rhs.li_evaluations;
        self.pair_evaluations += rhs.pair_evaluations;
        self.tree_nodes_expanded += rhs.tree_nodes_expanded;
        self.trellis_edges_relaxed += rhs.trellis_edges_relaxed;
    }
}

impl EvalCounters {
    pub fn total_evaluations(&self) -> u64 {
        self.li_evaluations + self.pair_evaluations
    }

    pub fn li_budget(k: usize, n: usize, t: usize) -> u64 {
        let n = n.max(1) as u64;
        BUDGET_C1 * k as u64 * n * n * n * t as u64
    }

    pub fn pair_budget(k: usize, t: usize) -> u64 {
        (k * k * t.saturating_sub(1)) as u64
    }

    pub fn within_budget(&self, k: usize, n: usize, t: usize) -> bool {
        self.li_evaluations <= Self::li_budget(k, n, t)
            && self.pair_evaluations <= Self::pair_budget(k, t)
    }
}

/// Terms and constraints that can be switched off for ablation runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub flow: bool,
    pub regularization: bool,
    /// When off, overlapping masks may be co-selected and a subset's
    /// background loss is the empty-selection loss plus the per-mask deltas.
    pub overlap_constraint: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation {
            flow: true,
            regularization: true,
            overlap_constraint: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectConfig {
    pub weights: LossWeights,
    pub k: usize,
    pub overlap_tolerance: usize,
    pub ablation: Ablation,
    pub max_candidates: usize,
    /// Stage-1 worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            weights: LossWeights::default(),
            k: DEFAULT_K,
            overlap_tolerance: 0,
            ablation: Ablation::default(),
            max_candidates: DEFAULT_MAX_CANDIDATES,
            threads: None,
        }
    }
}

impl SelectConfig {
    /// Weights with ablated terms zeroed.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        if !self.ablation.flow {
            w.lambda_f = 0.0;
        }
        if !self.ablation.regularization {
            w.lambda_p = 0.0;
        }
        w
    }

    fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.k == 0 {
            return Err(Error::ConfigInvalid("k must be at least 1".into()));
        }
        if self.max_candidates == 0 || self.max_candidates > SELECTION_CAPACITY {
            return Err(Error::ConfigInvalid(format!(
                "max_candidates must lie in 1..={SELECTION_CAPACITY}, got {}",
                self.max_candidates
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::ConfigInvalid("threads must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameChoice {
    pub combination: Combination,
    /// `l_i` of this frame; `l_f` and `l_p` of the transition to the next
    /// frame (zero for the last frame).
    pub breakdown: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    pub frames: Vec<FrameChoice>,
    pub objective: f64,
    pub counters: EvalCounters,
    pub weights: LossWeights,
}

impl SelectionResult {
    pub fn selected_ids(&self) -> Vec<Vec<u32>> {
        self.frames.iter().map(|f| f.combination.ids.clone()).collect()
    }
}

/// The `k` lowest-background-loss non-overlapping subsets of a frame.
pub fn enumerate_topk(
    frame: &FrameInputs,
    k: usize,
    weights: &LossWeights,
    tolerance: usize,
) -> Result<(FrameShortlist, EvalCounters)> {
    enumerate_topk_with(frame, k, weights, tolerance, true, DEFAULT_MAX_CANDIDATES)
}

pub fn enumerate_topk_with(
    frame: &FrameInputs,
    k: usize,
    weights: &LossWeights,
    tolerance: usize,
    constraint: bool,
    max_candidates: usize,
) -> Result<(FrameShortlist, EvalCounters)> {
    if k == 0 {
        return Err(Error::ConfigInvalid("k must be at least 1".into()));
    }
    weights.validate()?;
    topk::check_candidate_count(frame, max_candidates)?;
    let terms = FrameTerms::new(frame, weights.epsilon);
    let mut counters = EvalCounters::default();
    let shortlist = topk::shortlist_for(&terms, k, tolerance, constraint, &mut counters)?;
    Ok((shortlist, counters))
}

/// Keeps the `limit` highest-scoring candidates of every frame (ties by
/// lower id), preserving the original relative order.
pub fn prune_candidates(scene: &SceneBundle, limit: usize) -> Cow<'_, SceneBundle> {
    if scene.frames.iter().all(|f| f.candidates.len() <= limit) {
        return Cow::Borrowed(scene);
    }
    let mut pruned = scene.clone();
    for frame in &mut pruned.frames {
        if frame.candidates.len() <= limit {
            continue;
        }
        let mut order: Vec<usize> = (0..frame.candidates.len()).collect();
        order.sort_by(|&a, &b| {
            let (ca, cb) = (&frame.candidates[a], &frame.candidates[b]);
            cb.score()
                .total_cmp(&ca.score())
                .then(ca.id().cmp(&cb.id()))
        });
        let mut keep = vec![false; frame.candidates.len()];
        for &i in &order[..limit] {
            keep[i] = true;
        }
        let mut i = 0;
        frame.candidates.retain(|_| {
            i += 1;
            keep[i - 1]
        });
    }
    Cow::Owned(pruned)
}

/// Two-stage selection over a whole scene.
pub fn select(scene: &SceneBundle, config: &SelectConfig) -> Result<SelectionResult> {
    config.validate()?;
    let weights = config.effective_weights();
    let scene = prune_candidates(scene, config.max_candidates);
    let evaluator = SceneEvaluator::new(&scene, weights.epsilon);

    let stage1 = || -> Vec<Result<(FrameShortlist, EvalCounters)>> {
        (0..evaluator.num_frames())
            .into_par_iter()
            .map(|t| {
                let mut counters = EvalCounters::default();
                let shortlist = topk::shortlist_for(
                    evaluator.frame(t),
                    config.k,
                    config.overlap_tolerance,
                    config.ablation.overlap_constraint,
                    &mut counters,
                )?;
                Ok((shortlist, counters))
            })
            .collect()
    };
    let per_frame = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?
            .install(stage1),
        None => stage1(),
    };

    let mut counters = EvalCounters::default();
    let mut shortlists = Vec::with_capacity(per_frame.len());
    for r in per_frame {
        let (shortlist, c) = r?;
        counters += c;
        shortlists.push(shortlist);
    }

    let mut trellis = build_trellis(&evaluator, shortlists, &weights)?;
    let path = shortest_path(&mut trellis)?;
    assemble(trellis, &path, counters, weights)
}

/// Builds the reported result from a decoded path, recomputing the
/// objective frame by frame.
pub(crate) fn assemble(
    mut trellis: Trellis<SceneCosts<'_, '_>>,
    path: &TrellisPath,
    mut counters: EvalCounters,
    weights: LossWeights,
) -> Result<SelectionResult> {
    trellis::add_trellis_counters(&trellis, &mut counters);
    let layers = trellis.num_layers();
    let mut frames = Vec::with_capacity(layers);
    let mut objective = 0.0;
    for t in 0..layers {
        let k = path.nodes[t];
        let (l_f, l_p) = if t + 1 < layers {
            trellis.costs_mut().transition_terms(t, k, path.nodes[t + 1])?
        } else {
            (0.0, 0.0)
        };
        let combination = trellis.costs().shortlists()[t].combos[k].clone();
        let breakdown = LossBreakdown::new(combination.unary_li, l_f, l_p, &weights);
        objective += breakdown.weighted_total;
        frames.push(FrameChoice {
            combination,
            breakdown,
        });
    }
    counters.pair_evaluations += trellis.costs().pair_evaluations();
    Ok(SelectionResult {
        frames,
        objective,
        counters,
        weights,
    })
}

#[cfg(test)]
mod tests;
