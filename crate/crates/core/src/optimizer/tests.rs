use super::topk::{canonical_order, topk_levels, LevelProblem};
use super::*;
use crate::raster::{BgProbMap, FlowField, Raster};
use crate::scene::{masks_overlap, MaskCandidate};
use proptest::prelude::*;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn empty_frame() -> FrameInputs {
    FrameInputs::new(0, vec![], BgProbMap::uniform(2, 2, 0.5).unwrap(), None).unwrap()
}

/// Level subsets as 1-based level lists.
fn one_based(sels: &[Selection]) -> Vec<Vec<usize>> {
    sels.iter()
        .map(|s| s.indices().map(|i| i + 1).collect())
        .collect()
}

fn brute_force(base: f64, delta: &[f64], conflicts: &[u64], k: usize) -> Vec<Selection> {
    let n = delta.len();
    let mut all = Vec::new();
    'outer: for bits in 0u64..1 << n {
        let sel = Selection(bits);
        for i in sel.indices() {
            if conflicts[i] & bits != 0 {
                continue 'outer;
            }
        }
        let cost = sel.indices().fold(base, |acc, i| acc + delta[i]);
        all.push((cost, sel));
    }
    all.sort_by(|a, b| canonical_order(*a, *b));
    all.truncate(k);
    all.into_iter().map(|(_, s)| s).collect()
}

#[test]
fn ranking_without_overlaps() {
    let frame = empty_frame();
    let p = LevelProblem::from_parts(&frame, 0.0, vec![-2.0, -1.0, 1.0], vec![0; 3]);
    let mut c = EvalCounters::default();
    let got = topk_levels(&p, 4, &mut c);
    assert_eq!(
        one_based(&got),
        vec![vec![1, 2], vec![1], vec![1, 2, 3], vec![2]]
    );
}

#[test]
fn ranking_with_overlap() {
    let frame = empty_frame();
    let p = LevelProblem::from_parts(&frame, 0.0, vec![-5.0, -4.0, -1.0], vec![0b010, 0b001, 0]);
    let mut c = EvalCounters::default();
    let got = topk_levels(&p, 3, &mut c);
    assert_eq!(one_based(&got), vec![vec![1, 3], vec![1], vec![2, 3]]);
}

#[test]
fn no_candidates_gives_empty_selection() {
    let frame = empty_frame();
    let (shortlist, counters) = enumerate_topk(&frame, 5, &LossWeights::default(), 0).unwrap();
    assert_eq!(shortlist.combos.len(), 1);
    let combo = &shortlist.combos[0];
    assert!(combo.ids.is_empty());
    assert!((combo.unary_li - std::f64::consts::LN_2).abs() < 1e-12);
    assert!(counters.li_evaluations >= 1);
}

#[test]
fn too_many_candidates() {
    let (w, h) = (8, 8);
    let candidates = (0..25)
        .map(|i| MaskCandidate::new(i, 0.5, BitMask::from_fn(w, h, |x, y| x + y * w == i as usize)).unwrap())
        .collect();
    let frame = FrameInputs::new(0, candidates, BgProbMap::uniform(w, h, 0.5).unwrap(), None).unwrap();
    let r = enumerate_topk(&frame, 3, &LossWeights::default(), 0);
    assert!(matches!(r, Err(Error::TooManyCandidates { count: 25, limit: 24, .. })));
}

proptest! {
    #[test]
    fn topk_matches_brute_force(
        n in 0usize..8,
        raw in proptest::collection::vec(-3i32..4, 8),
        pairs in proptest::collection::vec((0usize..8, 0usize..8), 0..6),
        k in 1usize..20,
    ) {
        // small integers produce many exact ties
        let delta: Vec<f64> = raw[..n].iter().map(|&d| d as f64 * 0.5).collect();
        let mut conflicts = vec![0u64; n];
        for (a, b) in pairs {
            if a < n && b < n && a != b {
                conflicts[a] |= 1 << b;
                conflicts[b] |= 1 << a;
            }
        }
        let frame = empty_frame();
        let p = LevelProblem::from_parts(&frame, 0.25, delta.clone(), conflicts.clone());
        let mut c = EvalCounters::default();
        let got = topk_levels(&p, k, &mut c);
        prop_assert_eq!(got, brute_force(0.25, &delta, &conflicts, k));
        prop_assert!(c.li_evaluations <= EvalCounters::li_budget(k, n, 1));
    }
}

/// A small random scene: random rectangles as candidates over a noisy
/// background map and random flow.
pub(crate) fn random_scene(seed: u64, max_n: usize, max_t: usize) -> SceneBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut below = |n: u64| rng.next_u64() % n;
    let (w, h) = (10usize, 8usize);
    let t_count = 1 + below(max_t as u64) as usize;
    let mut frames = Vec::new();
    for t in 0..t_count {
        let n = below(max_n as u64 + 1) as usize;
        let mut candidates = Vec::new();
        for i in 0..n {
            let x0 = below(w as u64 - 1) as usize;
            let y0 = below(h as u64 - 1) as usize;
            let x1 = x0 + below((w - x0) as u64) as usize;
            let y1 = y0 + below((h - y0) as u64) as usize;
            let mask = BitMask::from_fn(w, h, |x, y| (x0..=x1).contains(&x) && (y0..=y1).contains(&y));
            let score = below(1000) as f64 / 1000.0;
            candidates.push(MaskCandidate::new(100 - 7 * i as u32, score, mask).unwrap());
        }
        let bg: Vec<f32> = (0..w * h).map(|_| below(1001) as f32 / 1000.0).collect();
        let flow = (t + 1 < t_count).then(|| {
            let u: Vec<f32> = (0..w * h).map(|_| below(9) as f32 - 4.0).collect();
            let v: Vec<f32> = (0..w * h).map(|_| below(5) as f32 - 2.0).collect();
            FlowField::new(Raster::new(w, h, u).unwrap(), Raster::new(w, h, v).unwrap()).unwrap()
        });
        let bg = BgProbMap::new(Raster::new(w, h, bg).unwrap()).unwrap();
        frames.push(FrameInputs::new(t, candidates, bg, flow).unwrap());
    }
    SceneBundle::new(w, h, frames).unwrap()
}

#[test]
fn select_with_full_k_equals_oracle() {
    for seed in 0..40 {
        let scene = random_scene(seed, 5, 4);
        let config = SelectConfig {
            k: 1 << scene.max_candidates(),
            ..SelectConfig::default()
        };
        let a = select(&scene, &config).unwrap();
        let b = oracle(&scene, &config.weights, 0).unwrap();
        assert_eq!(a.selected_ids(), b.selected_ids(), "seed {seed}");
        assert_eq!(a.objective, b.objective, "seed {seed}");
    }
}

#[test]
fn selections_never_overlap() {
    for seed in 0..30 {
        let scene = random_scene(seed, 6, 3);
        for tolerance in [0, 2] {
            let config = SelectConfig {
                overlap_tolerance: tolerance,
                ..SelectConfig::default()
            };
            let r = select(&scene, &config).unwrap();
            for (frame, choice) in scene.frames.iter().zip(&r.frames) {
                let ids = &choice.combination.ids;
                for (i, &a) in ids.iter().enumerate() {
                    for &b in &ids[i + 1..] {
                        let (ca, cb) = (frame.candidate(a).unwrap(), frame.candidate(b).unwrap());
                        assert!(!masks_overlap(ca, cb, tolerance).unwrap());
                    }
                }
            }
        }
    }
}

#[test]
fn objective_matches_recomputation() {
    for seed in 0..20 {
        let scene = random_scene(seed, 5, 4);
        let config = SelectConfig::default();
        let r = select(&scene, &config).unwrap();
        let mut total = 0.0;
        for (t, choice) in r.frames.iter().enumerate() {
            let frame = &scene.frames[t];
            let sel = Selection::from_indices(
                choice.combination.ids.iter().map(|id| frame.candidates.iter().position(|c| c.id() == *id).unwrap()),
            );
            let fg = crate::scene::union_foreground(frame, sel).unwrap();
            total += crate::losses::background_loss(&frame.bg, &fg, config.weights.epsilon).unwrap();
            if t + 1 < scene.num_frames() {
                let next = &scene.frames[t + 1];
                let next_ids = &r.frames[t + 1].combination.ids;
                let next_sel = Selection::from_indices(
                    next_ids.iter().map(|id| next.candidates.iter().position(|c| c.id() == *id).unwrap()),
                );
                let pair = crate::losses::pair_cost(&scene, t, sel, next_sel, &config.weights).unwrap();
                total += config.weights.lambda_f * pair.l_f + config.weights.lambda_p * pair.l_p;
            }
        }
        assert!((total - r.objective).abs() < 1e-8, "seed {seed}");
    }
}

#[test]
fn thread_count_does_not_change_result() {
    let scene = random_scene(3, 6, 5);
    let base = select(&scene, &SelectConfig::default()).unwrap();
    for threads in [1, 2, 4] {
        let config = SelectConfig {
            threads: Some(threads),
            ..SelectConfig::default()
        };
        assert_eq!(select(&scene, &config).unwrap(), base);
    }
}

#[test]
fn pair_evaluations_fill_the_trellis() {
    let scene = random_scene(11, 5, 6);
    let r = select(&scene, &SelectConfig { k: 3, ..SelectConfig::default() }).unwrap();
    let sizes: Vec<u64> = scene
        .frames
        .iter()
        .map(|f| {
            let p = LevelProblem::new(&FrameTerms::new(f, 1e-6), 0, true).unwrap();
            super::oracle::all_subsets(&p).len().min(3) as u64
        })
        .collect();
    let pairs: u64 = sizes.windows(2).map(|w| w[0] * w[1]).sum();
    assert_eq!(r.counters.pair_evaluations, pairs);
    assert_eq!(r.counters.trellis_edges_relaxed, pairs + sizes[0] + sizes[sizes.len() - 1]);
}

#[test]
fn oracle_guards() {
    let scene = random_scene(0, 1, 1);
    let frames: Vec<FrameInputs> = (0..13)
        .map(|t| FrameInputs {
            index: t,
            flow_to_next: (t < 12).then(|| FlowField::constant(10, 8, 0.0, 0.0).unwrap()),
            ..scene.frames[0].clone()
        })
        .collect();
    let long = SceneBundle::new(10, 8, frames).unwrap();
    assert!(matches!(
        oracle(&long, &LossWeights::default(), 0),
        Err(Error::InstanceTooLarge { .. })
    ));
}

#[test]
fn pruning_keeps_highest_scores() {
    let scene = random_scene(5, 6, 1);
    let pruned = prune_candidates(&scene, 2);
    for (a, b) in scene.frames.iter().zip(&pruned.frames) {
        assert!(b.candidates.len() <= 2);
        let mut scores: Vec<f64> = a.candidates.iter().map(|c| c.score()).collect();
        scores.sort_by(|x, y| y.total_cmp(x));
        let kept: Vec<f64> = b.candidates.iter().map(|c| c.score()).collect();
        for s in kept {
            assert!(scores[..b.candidates.len()].contains(&s));
        }
    }
}
