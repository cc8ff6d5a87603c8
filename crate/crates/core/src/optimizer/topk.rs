//! Per-frame K-best enumeration of non-overlapping candidate subsets.
//!
//! The subsets of a frame are the leaves of a binary decision tree: level `l`
//! decides whether the `l`-th candidate (candidates ordered by id) is
//! selected. Selecting a candidate costs its background-loss delta, skipping
//! it costs nothing, and selecting a candidate that overlaps an already
//! selected ancestor is forbidden (infinite weight). Both branches of level
//! `l` are shifted by `max(0, -delta_l)` so every branch weight is
//! nonnegative; every root-to-leaf path crosses each level once, so the
//! shift adds the same constant to all leaves and leaves their order intact.
//!
//! Best-first (Dijkstra) expansion of the implicit tree then pops leaves in
//! ascending cost, and the first `k` leaves form the shortlist. The heap key
//! `(cost, selected count, selected ids)` is a lower bound on the key of every
//! descendant, so exact cost ties come out in canonical order as well.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::losses::FrameTerms;
use crate::scene::{masks_overlap, FrameInputs, Selection, SELECTION_CAPACITY};

use super::{Combination, EvalCounters, FrameShortlist};

/// Relative slack used to keep popping leaves whose tree cost is within
/// rounding distance of the k-th leaf.
const COLLECT_MARGIN: f64 = 1e-9;

/// The tree problem for one frame, with candidates in id order ("levels").
pub(crate) struct LevelProblem<'f> {
    frame: &'f FrameInputs,
    base: f64,
    /// Candidate position of each level.
    position: Vec<usize>,
    delta: Vec<f64>,
    /// Bitset over levels of candidates that may not be co-selected.
    conflicts: Vec<u64>,
}

impl<'f> LevelProblem<'f> {
    pub(crate) fn new(terms: &FrameTerms<'f>, tolerance: usize, constraint: bool) -> Result<Self> {
        let frame = terms.frame();
        let mut position: Vec<usize> = (0..frame.candidates.len()).collect();
        position.sort_by_key(|&i| frame.candidates[i].id());
        let delta = position.iter().map(|&i| terms.deltas()[i]).collect();
        let n = position.len();
        let mut conflicts = vec![0u64; n];
        if constraint {
            for a in 0..n {
                for b in a + 1..n {
                    let ca = &frame.candidates[position[a]];
                    let cb = &frame.candidates[position[b]];
                    if masks_overlap(ca, cb, tolerance)? {
                        conflicts[a] |= 1 << b;
                        conflicts[b] |= 1 << a;
                    }
                }
            }
        }
        Ok(LevelProblem {
            frame,
            base: terms.base(),
            position,
            delta,
            conflicts,
        })
    }

    #[cfg(test)]
    pub(crate) fn from_parts(frame: &'f FrameInputs, base: f64, delta: Vec<f64>, conflicts: Vec<u64>) -> Self {
        LevelProblem {
            frame,
            base,
            position: (0..delta.len()).collect(),
            delta,
            conflicts,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.position.len()
    }

    pub(crate) fn conflicts(&self, level: usize) -> u64 {
        self.conflicts[level]
    }

    /// Background loss of a level subset: the empty-selection loss plus the
    /// selected deltas, accumulated in level order.
    pub(crate) fn unary(&self, levels: Selection) -> f64 {
        levels
            .indices()
            .fold(self.base, |acc, l| acc + self.delta[l])
    }

    pub(crate) fn combination(&self, levels: Selection) -> Combination {
        let frame = self.frame;
        let selection = Selection::from_indices(levels.indices().map(|l| self.position[l]));
        let ids = levels
            .indices()
            .map(|l| frame.candidates[self.position[l]].id())
            .collect();
        let foreground = crate::scene::union_foreground(frame, selection)
            .expect("selection indexes valid candidates");
        Combination {
            frame: frame.index,
            selection,
            ids,
            foreground,
            unary_li: self.unary(levels),
        }
    }
}

/// Canonical order of combinations: background loss, then fewer masks, then
/// the lexicographically smaller sorted id list.
pub(crate) fn canonical_order(a: (f64, Selection), b: (f64, Selection)) -> Ordering {
    a.0.total_cmp(&b.0)
        .then_with(|| a.1.len().cmp(&b.1.len()))
        .then_with(|| a.1.lex_cmp(b.1))
}

#[derive(Clone, Copy)]
struct Node {
    cost: f64,
    levels: Selection,
    blocked: u64,
    depth: usize,
}

impl Node {
    fn key_cmp(&self, other: &Node) -> Ordering {
        canonical_order((self.cost, self.levels), (other.cost, other.levels))
            .then_with(|| other.depth.cmp(&self.depth))
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

/// The `k` lowest-loss valid subsets of a prepared frame.
pub(crate) fn topk_levels(
    problem: &LevelProblem<'_>,
    k: usize,
    counters: &mut EvalCounters,
) -> Vec<Selection> {
    let n = problem.len();
    let shift: Vec<f64> = problem.delta.iter().map(|&d| (-d).max(0.0)).collect();
    counters.li_evaluations += n as u64 + 1;

    let mut heap = BinaryHeap::new();
    heap.push(Node {
        cost: 0.0,
        levels: Selection::EMPTY,
        blocked: 0,
        depth: 0,
    });

    // leaves beyond k are only kept while they might tie with the k-th one
    let extra_cap = 4 * k + 16;
    let mut leaves: Vec<Selection> = Vec::new();
    let mut threshold = f64::INFINITY;
    while let Some(node) = heap.pop() {
        if node.cost > threshold {
            break;
        }
        if node.depth == n {
            leaves.push(node.levels);
            if leaves.len() == k {
                threshold = node.cost + COLLECT_MARGIN * (1.0 + node.cost.abs());
            }
            if leaves.len() >= k + extra_cap {
                break;
            }
            continue;
        }
        counters.tree_nodes_expanded += 1;
        counters.li_evaluations += 1;
        let level = node.depth;
        heap.push(Node {
            cost: node.cost + shift[level],
            depth: level + 1,
            ..node
        });
        if node.blocked >> level & 1 == 0 {
            heap.push(Node {
                cost: node.cost + problem.delta[level] + shift[level],
                levels: node.levels.with(level),
                blocked: node.blocked | problem.conflicts[level],
                depth: level + 1,
            });
        }
    }

    counters.li_evaluations += leaves.len() as u64;
    let mut scored: Vec<(f64, Selection)> = leaves.into_iter().map(|l| (problem.unary(l), l)).collect();
    scored.sort_by(|a, b| canonical_order(*a, *b));
    scored.truncate(k);
    scored.into_iter().map(|(_, l)| l).collect()
}

pub(crate) fn check_candidate_count(frame: &FrameInputs, limit: usize) -> Result<()> {
    let count = frame.candidates.len();
    if count > limit.min(SELECTION_CAPACITY) {
        return Err(Error::TooManyCandidates {
            frame: frame.index,
            count,
            limit: limit.min(SELECTION_CAPACITY),
        });
    }
    Ok(())
}

/// Shortlist of a frame given precomputed terms.
pub(crate) fn shortlist_for(
    terms: &FrameTerms<'_>,
    k: usize,
    tolerance: usize,
    constraint: bool,
    counters: &mut EvalCounters,
) -> Result<FrameShortlist> {
    let problem = LevelProblem::new(terms, tolerance, constraint)?;
    let combos = topk_levels(&problem, k, counters)
        .into_iter()
        .map(|levels| problem.combination(levels))
        .collect();
    Ok(FrameShortlist {
        frame: terms.frame().index,
        combos,
    })
}
