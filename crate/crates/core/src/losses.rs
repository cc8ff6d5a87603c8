//! The three terms of the selection objective.
//!
//! * background loss: mean per-pixel cross-entropy between the background
//!   probability map and the complement of the selected foreground,
//! * flow loss: mean per-pixel L1 distance between the measured flow and a
//!   piecewise-constant flow synthesized from the selected masks,
//! * regularization loss: negative IoU of consecutive selected foregrounds.
//!
//! All losses are evaluated in `f64` with natural logarithms; probabilities
//! are clamped to `[epsilon, 1 - epsilon]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BgProbMap, BitMask, FlowField, Raster};
use crate::scene::{FrameInputs, SceneBundle, Selection};

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_i: f64,
    pub lambda_f: f64,
    pub lambda_p: f64,
    pub epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_i: 1.0,
            lambda_f: 1.0,
            lambda_p: 0.5,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_i", self.lambda_i),
            ("lambda_f", self.lambda_f),
            ("lambda_p", self.lambda_p),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::ConfigInvalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::ConfigInvalid(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_i: f64,
    pub l_f: f64,
    pub l_p: f64,
    pub weighted_total: f64,
}

impl LossBreakdown {
    pub fn new(l_i: f64, l_f: f64, l_p: f64, weights: &LossWeights) -> Self {
        LossBreakdown {
            l_i,
            l_f,
            l_p,
            weighted_total: weights.lambda_i * l_i + weights.lambda_f * l_f + weights.lambda_p * l_p,
        }
    }
}

#[inline]
fn clamp_prob(p: f32, epsilon: f64) -> f64 {
    (p as f64).clamp(epsilon, 1.0 - epsilon)
}

fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::dims(a, b));
    }
    Ok(())
}

/// Mean cross-entropy between `bg` and the background indicator `1 - fg`.
pub fn background_loss(bg: &BgProbMap, fg: &BitMask, epsilon: f64) -> Result<f64> {
    same_dims(bg.dims(), fg.dims())?;
    let probs = bg.probs().values();
    let mut sum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        let p = clamp_prob(p, epsilon);
        let q = if fg.get_index(i) { 0.0 } else { 1.0 };
        sum -= q * p.ln() + (1.0 - q) * (1.0 - p).ln();
    }
    Ok(sum / probs.len() as f64)
}

/// Background loss split into the empty-selection value and one additive
/// delta per candidate. Exact for selections whose masks are disjoint.
pub fn background_loss_decomposed(
    bg: &BgProbMap,
    frame: &FrameInputs,
    epsilon: f64,
) -> Result<(f64, Vec<f64>)> {
    same_dims(bg.dims(), frame.dims())?;
    let terms = BackgroundTerms::new(bg, epsilon);
    let deltas = frame
        .candidates
        .iter()
        .map(|c| terms.delta(c.mask()))
        .collect();
    Ok((terms.base, deltas))
}

/// Per-pixel cross-entropy pieces of one probability map.
#[derive(Clone, Debug)]
pub(crate) struct BackgroundTerms {
    log_ratio: Vec<f64>,
    base: f64,
}

impl BackgroundTerms {
    pub(crate) fn new(bg: &BgProbMap, epsilon: f64) -> Self {
        let probs = bg.probs().values();
        let mut log_ratio = Vec::with_capacity(probs.len());
        let mut base = 0.0;
        for &p in probs {
            let p = clamp_prob(p, epsilon);
            base -= p.ln();
            log_ratio.push((p / (1.0 - p)).ln());
        }
        BackgroundTerms {
            log_ratio,
            base: base / probs.len() as f64,
        }
    }

    pub(crate) fn delta(&self, mask: &BitMask) -> f64 {
        let sum: f64 = mask.ones().map(|i| self.log_ratio[i]).sum();
        sum / self.log_ratio.len() as f64
    }
}

/// Mean L1 distance `|u - u'| + |v - v'|` per pixel.
pub fn flow_loss(measured: &FlowField, synthetic: &FlowField) -> Result<f64> {
    same_dims(measured.dims(), synthetic.dims())?;
    let (mu, mv) = (measured.u().values(), measured.v().values());
    let (su, sv) = (synthetic.u().values(), synthetic.v().values());
    let mut sum = 0.0;
    for i in 0..mu.len() {
        sum += (mu[i] as f64 - su[i] as f64).abs() + (mv[i] as f64 - sv[i] as f64).abs();
    }
    Ok(sum / mu.len() as f64)
}

/// Negative IoU of two foregrounds; 0 when both are empty.
pub fn regularization_loss(fg_t: &BitMask, fg_next: &BitMask) -> Result<f64> {
    same_dims(fg_t.dims(), fg_next.dims())?;
    Ok(-fg_t.iou_unchecked(fg_next))
}

/// Per-candidate data a frame contributes to flow synthesis.
#[derive(Clone, Debug)]
struct CandidateMotion {
    /// Mask moved by its rounded mean measured flow; only for frames with flow.
    shifted: Option<BitMask>,
    centroid: (f64, f64),
}

/// Precomputed per-frame quantities shared by every loss evaluation that
/// touches the frame.
#[derive(Clone, Debug)]
pub struct FrameTerms<'a> {
    frame: &'a FrameInputs,
    background: BackgroundTerms,
    deltas: Vec<f64>,
    motion: Vec<CandidateMotion>,
    /// Candidate positions sorted by id.
    by_id: Vec<usize>,
    mean_flow: (f64, f64),
}

impl<'a> FrameTerms<'a> {
    pub fn new(frame: &'a FrameInputs, epsilon: f64) -> Self {
        let background = BackgroundTerms::new(&frame.bg, epsilon);
        let deltas = frame
            .candidates
            .iter()
            .map(|c| background.delta(c.mask()))
            .collect();
        let motion = frame
            .candidates
            .iter()
            .map(|c| CandidateMotion {
                shifted: frame.flow_to_next.as_ref().map(|flow| {
                    let (mu, mv) = mean_over(flow, c.mask().ones());
                    c.mask().translated(mu.round() as i64, mv.round() as i64)
                }),
                centroid: c.mask().centroid().unwrap_or((0.0, 0.0)),
            })
            .collect();
        let mut by_id: Vec<usize> = (0..frame.candidates.len()).collect();
        by_id.sort_by_key(|&i| frame.candidates[i].id());
        let mean_flow = frame
            .flow_to_next
            .as_ref()
            .map(|flow| mean_over(flow, 0..flow.u().len()))
            .unwrap_or((0.0, 0.0));
        FrameTerms {
            frame,
            background,
            deltas,
            motion,
            by_id,
            mean_flow,
        }
    }

    pub fn frame(&self) -> &'a FrameInputs {
        self.frame
    }

    /// Background loss of the empty selection.
    pub fn base(&self) -> f64 {
        self.background.base
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    fn ordered(&self, sel: Selection) -> Vec<usize> {
        self.by_id
            .iter()
            .copied()
            .filter(|&i| sel.contains(i))
            .collect()
    }
}

fn mean_over(flow: &FlowField, pixels: impl Iterator<Item = usize>) -> (f64, f64) {
    let (u, v) = (flow.u().values(), flow.v().values());
    let (mut su, mut sv, mut n) = (0.0, 0.0, 0usize);
    for i in pixels {
        su += u[i] as f64;
        sv += v[i] as f64;
        n += 1;
    }
    if n == 0 {
        (0.0, 0.0)
    } else {
        (su / n as f64, sv / n as f64)
    }
}

/// Piecewise-constant description of a synthetic flow: a background value and
/// one value per selected mask of frame `t`, listed in ascending id order.
struct FlowModel {
    background: (f64, f64),
    masks: Vec<(usize, (f64, f64))>,
}

fn foreground_of(frame: &FrameInputs, positions: &[usize]) -> BitMask {
    let (w, h) = frame.dims();
    let mut fg = BitMask::empty(w, h);
    for &i in positions {
        for (a, b) in fg.words_mut().iter_mut().zip(frame.candidates[i].mask().words()) {
            *a |= b;
        }
    }
    fg
}

/// Iterate the row-major indices of pixels *not* set in `mask`.
fn complement_ones(mask: &BitMask) -> impl Iterator<Item = usize> + '_ {
    let total = mask.len();
    mask.words().iter().enumerate().flat_map(move |(wi, &w)| {
        let valid = if (wi + 1) * 64 <= total {
            u64::MAX
        } else {
            (1u64 << (total - wi * 64)) - 1
        };
        let mut bits = !w & valid;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let b = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(wi * 64 + b)
        })
    })
}

/// Match each selected mask of frame `t` to at most one selected mask of
/// frame `t+1`: candidates pairs are ranked by IoU between the flow-shifted
/// `t` mask and the `t+1` mask (descending, then lower ids), and accepted
/// greedily while both sides are free. Pairs with zero IoU never match.
fn build_flow_model(
    cur: &FrameTerms<'_>,
    cur_sel: &[usize],
    next: &FrameTerms<'_>,
    next_sel: &[usize],
    fg: &BitMask,
    flow: &FlowField,
) -> FlowModel {
    let background = if fg.count() == fg.len() {
        cur.mean_flow
    } else {
        mean_over(flow, complement_ones(fg))
    };

    let mut pairs = Vec::new();
    for &i in cur_sel {
        let Some(shifted) = cur.motion[i].shifted.as_ref() else {
            continue;
        };
        for &j in next_sel {
            let iou = shifted.iou_unchecked(next.frame.candidates[j].mask());
            if iou > 0.0 {
                pairs.push((iou, i, j));
            }
        }
    }
    let cur_ids = &cur.frame.candidates;
    let next_ids = &next.frame.candidates;
    pairs.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| cur_ids[a.1].id().cmp(&cur_ids[b.1].id()))
            .then_with(|| next_ids[a.2].id().cmp(&next_ids[b.2].id()))
    });

    let mut matched_cur = vec![None; cur.frame.candidates.len()];
    let mut used_next = vec![false; next.frame.candidates.len()];
    for (_, i, j) in pairs {
        if matched_cur[i].is_none() && !used_next[j] {
            matched_cur[i] = Some(j);
            used_next[j] = true;
        }
    }

    let masks = cur_sel
        .iter()
        .map(|&i| {
            let value = match matched_cur[i] {
                Some(j) => {
                    let (cx, cy) = cur.motion[i].centroid;
                    let (nx, ny) = next.motion[j].centroid;
                    (nx - cx, ny - cy)
                }
                None => background,
            };
            (i, value)
        })
        .collect();
    FlowModel { background, masks }
}

/// Values of the flow model, pixels of overlapping masks taking the value of
/// the lowest-id mask.
fn model_l1(model: &FlowModel, cur: &FrameTerms<'_>, fg: &BitMask, flow: &FlowField) -> f64 {
    let (u, v) = (flow.u().values(), flow.v().values());
    let (bu, bv) = model.background;
    let mut sum = 0.0;
    for i in complement_ones(fg) {
        sum += (u[i] as f64 - bu).abs() + (v[i] as f64 - bv).abs();
    }
    let (w, h) = fg.dims();
    let mut covered = BitMask::empty(w, h);
    for &(ci, (du, dv)) in &model.masks {
        let mask = cur.frame.candidates[ci].mask();
        for (wi, (&m, c)) in mask.words().iter().zip(covered.words_mut()).enumerate() {
            let mut bits = m & !*c;
            *c |= m;
            while bits != 0 {
                let p = wi * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                sum += (u[p] as f64 - du).abs() + (v[p] as f64 - dv).abs();
            }
        }
    }
    sum / u.len() as f64
}

/// Flow and regularization terms of the transition `t -> t+1`.
pub fn transition_terms(
    cur: &FrameTerms<'_>,
    cur_sel: Selection,
    next: &FrameTerms<'_>,
    next_sel: Selection,
) -> Result<(f64, f64)> {
    let flow = cur
        .frame
        .flow_to_next
        .as_ref()
        .ok_or(Error::MissingFlow {
            frame: cur.frame.index,
        })?;
    same_dims(cur.frame.dims(), next.frame.dims())?;
    let cur_pos = cur.ordered(cur_sel);
    let next_pos = next.ordered(next_sel);
    let fg = foreground_of(cur.frame, &cur_pos);
    let fg_next = foreground_of(next.frame, &next_pos);
    let model = build_flow_model(cur, &cur_pos, next, &next_pos, &fg, flow);
    let l_f = model_l1(&model, cur, &fg, flow);
    let l_p = -fg.iou_unchecked(&fg_next);
    Ok((l_f, l_p))
}

/// Synthetic flow for frame `t` given the selections in `t` and `t+1`.
pub fn synthetic_flow(
    frame_t: &FrameInputs,
    sel_t: Selection,
    frame_next: &FrameInputs,
    sel_next: Selection,
    measured: &FlowField,
) -> Result<FlowField> {
    same_dims(frame_t.dims(), measured.dims())?;
    same_dims(frame_t.dims(), frame_next.dims())?;
    let mut with_flow = frame_t.clone();
    with_flow.flow_to_next = Some(measured.clone());
    let cur = FrameTerms::new(&with_flow, DEFAULT_EPSILON);
    let next = FrameTerms::new(frame_next, DEFAULT_EPSILON);
    let cur_pos = cur.ordered(sel_t);
    let next_pos = next.ordered(sel_next);
    let fg = foreground_of(&with_flow, &cur_pos);
    let model = build_flow_model(&cur, &cur_pos, &next, &next_pos, &fg, measured);

    let (w, h) = frame_t.dims();
    let (bu, bv) = model.background;
    let mut u = vec![bu as f32; w * h];
    let mut v = vec![bv as f32; w * h];
    let mut covered = BitMask::empty(w, h);
    for &(ci, (du, dv)) in &model.masks {
        for p in with_flow.candidates[ci].mask().ones() {
            if !covered.get_index(p) {
                covered.set_index(p);
                u[p] = du as f32;
                v[p] = dv as f32;
            }
        }
    }
    FlowField::new(Raster::new(w, h, u)?, Raster::new(w, h, v)?)
}

/// All precomputed frame terms of a scene.
#[derive(Clone, Debug)]
pub struct SceneEvaluator<'a> {
    frames: Vec<FrameTerms<'a>>,
}

impl<'a> SceneEvaluator<'a> {
    pub fn new(scene: &'a SceneBundle, epsilon: f64) -> Self {
        SceneEvaluator {
            frames: scene
                .frames
                .iter()
                .map(|f| FrameTerms::new(f, epsilon))
                .collect(),
        }
    }

    pub fn frame(&self, t: usize) -> &FrameTerms<'a> {
        &self.frames[t]
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    /// `(l_f, l_p)` for the transition `t -> t+1`.
    pub fn transition(&self, t: usize, sel_t: Selection, sel_next: Selection) -> Result<(f64, f64)> {
        if t + 1 >= self.frames.len() {
            return Err(Error::IndexOutOfRange {
                index: t,
                len: self.frames.len(),
            });
        }
        transition_terms(&self.frames[t], sel_t, &self.frames[t + 1], sel_next)
    }
}

/// Loss of the transition `t -> t+1`: background loss of frame `t+1` plus the
/// flow and regularization terms linking the two frames.
pub fn pair_cost(
    scene: &SceneBundle,
    t: usize,
    sel_t: Selection,
    sel_next: Selection,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let len = scene.frames.len();
    if t + 1 >= len {
        return Err(Error::IndexOutOfRange { index: t, len });
    }
    let cur = FrameTerms::new(&scene.frames[t], weights.epsilon);
    let next = FrameTerms::new(&scene.frames[t + 1], weights.epsilon);
    let (l_f, l_p) = transition_terms(&cur, sel_t, &next, sel_next)?;
    let next_frame = &scene.frames[t + 1];
    let fg = crate::scene::union_foreground(next_frame, sel_next)?;
    let l_i = background_loss(&next_frame.bg, &fg, weights.epsilon)?;
    Ok(LossBreakdown::new(l_i, l_f, l_p, weights))
}
