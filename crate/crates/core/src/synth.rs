//! Seeded synthetic scenes: moving rectangles and ellipses with exact flow,
//! a background map that marks the objects, and per-frame distractor
//! candidates.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`. Uniform
//! reals are `(next_u64() >> 11) * 2^-53`, integers below `n` use rejection
//! sampling on `next_u64()`, and normals come from the Box-Muller transform
//! `sqrt(-2 ln(1 - u1)) * (cos, sin)(2 pi u2)`, both values of a pair being
//! used in turn. Draws happen in a fixed order: object shapes, sizes,
//! velocities and start positions first, then per frame the background noise,
//! the flow noise, the distractors, the candidate order, the ids and the
//! scores.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{
    write_ground_truth, write_provenance, write_scene, CandidateSource, DistractorKind, GroundTruthDocument,
    GtFrame, GtObject, ProvenanceDocument, ProvenanceEntry, ProvenanceFrame,
};
use crate::raster::{rle_encode, BgProbMap, BitMask, FlowField, Raster};
use crate::scene::{FrameInputs, MaskCandidate, SceneBundle};

pub const GT_FILE: &str = "gt.json";
pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Rectangle,
    Ellipse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    pub objects: usize,
    /// Shape of object `i` is `shapes[i % shapes.len()]`.
    pub shapes: Vec<ShapeKind>,
    /// Range of the half-width and half-height of an object, in pixels.
    pub half_extent: (f64, f64),
    /// Ranges of the horizontal and vertical velocity components.
    pub velocity_u: (f64, f64),
    pub velocity_v: (f64, f64),
    /// Round sampled velocities to whole pixels per frame.
    pub integer_velocity: bool,
    /// Require every pair of objects to move with different velocities.
    pub distinct_velocities: bool,
    pub camera_flow: (f32, f32),
    pub distractors_per_frame: usize,
    pub bg_noise_sigma: f64,
    pub flow_noise_sigma: f64,
    /// Background probability assigned to object pixels before noise.
    pub epsilon_bg: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 64,
            height: 48,
            num_frames: 8,
            objects: 2,
            shapes: vec![ShapeKind::Rectangle, ShapeKind::Ellipse],
            half_extent: (3.0, 6.0),
            velocity_u: (-2.0, 2.0),
            velocity_v: (-2.0, 2.0),
            integer_velocity: true,
            distinct_velocities: true,
            camera_flow: (0.0, 0.0),
            distractors_per_frame: 3,
            bg_noise_sigma: 0.0,
            flow_noise_sigma: 0.0,
            epsilon_bg: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be positive".into());
        }
        if self.num_frames == 0 {
            return bad("num_frames must be at least 1".into());
        }
        if self.objects > 0 && self.shapes.is_empty() {
            return bad("at least one shape kind is required".into());
        }
        let (lo, hi) = self.half_extent;
        if !(lo >= 0.5 && lo <= hi && hi.is_finite()) {
            return bad(format!("half_extent range ({lo}, {hi}) is invalid"));
        }
        for (name, (lo, hi)) in [("velocity_u", self.velocity_u), ("velocity_v", self.velocity_v)] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return bad(format!("{name} range ({lo}, {hi}) is invalid"));
            }
        }
        if !(self.camera_flow.0.is_finite() && self.camera_flow.1.is_finite()) {
            return bad("camera_flow must be finite".into());
        }
        for (name, s) in [("bg_noise_sigma", self.bg_noise_sigma), ("flow_noise_sigma", self.flow_noise_sigma)] {
            if !(s >= 0.0 && s.is_finite()) {
                return bad(format!("{name} must be >= 0, got {s}"));
            }
        }
        if !(self.epsilon_bg > 0.0 && self.epsilon_bg < 0.5) {
            return bad(format!("epsilon_bg must lie in (0, 0.5), got {}", self.epsilon_bg));
        }
        if self.objects + self.distractors_per_frame > u32::MAX as usize {
            return bad("too many candidates per frame".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthScene {
    pub scene: SceneBundle,
    pub ground_truth: GroundTruthDocument,
    pub provenance: ProvenanceDocument,
}

struct Stream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Stream {
    fn new(seed: u64) -> Self {
        Stream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    fn below(&mut self, n: u64) -> u64 {
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let x = self.rng.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let r = (-2.0 * (1.0 - self.uniform()).ln()).sqrt();
        let theta = std::f64::consts::TAU * self.uniform();
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Object {
    shape: ShapeKind,
    half: (f64, f64),
    start: (f64, f64),
    velocity: (f64, f64),
}

impl Object {
    fn center(&self, t: usize) -> (f64, f64) {
        (
            self.start.0 + self.velocity.0 * t as f64,
            self.start.1 + self.velocity.1 * t as f64,
        )
    }

    fn raster(&self, t: usize, w: usize, h: usize) -> BitMask {
        let (cx, cy) = self.center(t);
        let (a, b) = self.half;
        BitMask::from_fn(w, h, |x, y| {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            match self.shape {
                ShapeKind::Rectangle => dx.abs() <= a && dy.abs() <= b,
                ShapeKind::Ellipse => (dx / a).powi(2) + (dy / b).powi(2) <= 1.0,
            }
        })
    }
}

const PLACEMENT_ATTEMPTS: usize = 2000;

fn place_objects(config: &SynthConfig, rng: &mut Stream) -> Result<Vec<(Object, Vec<BitMask>)>> {
    let (w, h) = (config.width, config.height);
    let last = (config.num_frames - 1) as f64;
    let mut objects: Vec<Object> = Vec::new();
    let mut masks: Vec<Vec<BitMask>> = Vec::new();
    for i in 0..config.objects {
        let shape = config.shapes[i % config.shapes.len()];
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let (lo, hi) = config.half_extent;
            let half = (rng.range(lo, hi), rng.range(lo, hi));
            let mut velocity = (
                rng.range(config.velocity_u.0, config.velocity_u.1),
                rng.range(config.velocity_v.0, config.velocity_v.1),
            );
            if config.integer_velocity {
                velocity = (velocity.0.round(), velocity.1.round());
            }
            // the start range keeps the whole trajectory inside the frame
            let span = |extent: f64, half: f64, v: f64| {
                let lo = half - v.min(0.0) * last;
                let hi = extent - half - v.max(0.0) * last;
                (lo, hi)
            };
            let (xl, xh) = span(w as f64, half.0, velocity.0);
            let (yl, yh) = span(h as f64, half.1, velocity.1);
            if xl > xh || yl > yh {
                continue;
            }
            let start = (rng.range(xl, xh), rng.range(yl, yh));
            if config.distinct_velocities && objects.iter().any(|o| o.velocity == velocity) {
                continue;
            }
            let obj = Object {
                shape,
                half,
                start,
                velocity,
            };
            let first = obj.raster(0, w, h);
            let track: Vec<BitMask> = (0..config.num_frames)
                .map(|t| {
                    if config.integer_velocity {
                        // exact translation, free of rounding at shape borders
                        let k = t as f64;
                        first.translated((velocity.0 * k) as i64, (velocity.1 * k) as i64)
                    } else {
                        obj.raster(t, w, h)
                    }
                })
                .collect();
            if track.iter().any(|m| m.count() != first.count()) && config.integer_velocity {
                continue;
            }
            if track.iter().any(BitMask::is_empty) {
                continue;
            }
            let clash = masks.iter().any(|other| {
                other
                    .iter()
                    .zip(&track)
                    .any(|(a, b)| a.intersection_count_unchecked(b) > 0)
            });
            if clash {
                continue;
            }
            objects.push(obj);
            masks.push(track);
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::ConfigInvalid(format!(
                "could not place object {i} inside the frame without overlapping others"
            )));
        }
    }
    Ok(objects.into_iter().zip(masks).collect())
}

fn rect_mask(w: usize, h: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> BitMask {
    BitMask::from_fn(w, h, |x, y| (x0..x1).contains(&x) && (y0..y1).contains(&y))
}

fn background_rect(config: &SynthConfig, gt: &[&BitMask], rng: &mut Stream) -> Option<BitMask> {
    let (w, h) = (config.width, config.height);
    for _ in 0..100 {
        let (lo, hi) = config.half_extent;
        let rw = ((2.0 * rng.range(lo, hi)).round() as usize).clamp(1, w);
        let rh = ((2.0 * rng.range(lo, hi)).round() as usize).clamp(1, h);
        let x0 = rng.below((w - rw + 1) as u64) as usize;
        let y0 = rng.below((h - rh + 1) as u64) as usize;
        let m = rect_mask(w, h, x0, y0, x0 + rw, y0 + rh);
        if gt.iter().all(|g| g.intersection_count_unchecked(&m) == 0) {
            return Some(m);
        }
    }
    None
}

fn shifted(gt: &[&BitMask], rng: &mut Stream) -> Option<BitMask> {
    if gt.is_empty() {
        return None;
    }
    let src = gt[rng.below(gt.len() as u64) as usize];
    for _ in 0..50 {
        let dx = rng.below(13) as i64 - 6;
        let dy = rng.below(13) as i64 - 6;
        if dx.abs().max(dy.abs()) < 3 {
            continue;
        }
        let m = src.translated(dx, dy);
        if m.count() == src.count() && m.intersection_count_unchecked(src) > 0 {
            return Some(m);
        }
    }
    None
}

fn union_of_two(gt: &[&BitMask], rng: &mut Stream) -> Option<BitMask> {
    if gt.len() < 2 {
        return None;
    }
    let a = rng.below(gt.len() as u64) as usize;
    let b = (a + 1 + rng.below(gt.len() as u64 - 1) as usize) % gt.len();
    let mut m = gt[a].clone();
    m.union_with(gt[b]).ok()?;
    Some(m)
}

fn top_half(gt: &[&BitMask], rng: &mut Stream) -> Option<BitMask> {
    if gt.is_empty() {
        return None;
    }
    let src = gt[rng.below(gt.len() as u64) as usize];
    let (_, y0, _, y1) = src.bbox()?;
    let cut = y0 + (y1 - y0 + 1) / 2;
    let m = BitMask::from_fn(src.width(), src.height(), |x, y| y < cut && src.get(x, y));
    (!m.is_empty() && m.count() < src.count()).then_some(m)
}

const KINDS: [DistractorKind; 4] = [
    DistractorKind::Union,
    DistractorKind::Shifted,
    DistractorKind::Background,
    DistractorKind::TopHalf,
];

/// Distractor `j` of frame `t` has kind `(t + j) mod 4`, or a background
/// rectangle when that kind cannot be built.
fn distractor(
    config: &SynthConfig,
    gt: &[&BitMask],
    t: usize,
    j: usize,
    rng: &mut Stream,
) -> Option<(DistractorKind, BitMask)> {
    let kind = KINDS[(t + j) % 4];
    let built = match kind {
        DistractorKind::Union => union_of_two(gt, rng),
        DistractorKind::Shifted => shifted(gt, rng),
        DistractorKind::TopHalf => top_half(gt, rng),
        DistractorKind::Background => None,
    };
    match built {
        Some(m) => Some((kind, m)),
        None => background_rect(config, gt, rng).map(|m| (DistractorKind::Background, m)),
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthScene> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let mut rng = Stream::new(config.seed);
    let placed = place_objects(config, &mut rng)?;

    let mut frames = Vec::with_capacity(config.num_frames);
    let mut gt_frames = Vec::with_capacity(config.num_frames);
    let mut prov_frames = Vec::with_capacity(config.num_frames);
    for t in 0..config.num_frames {
        let gt: Vec<&BitMask> = placed.iter().map(|(_, track)| &track[t]).collect();
        // object index per pixel, first object wins
        let mut owner: Vec<Option<usize>> = vec![None; w * h];
        for (i, m) in gt.iter().enumerate() {
            for p in m.ones() {
                owner[p].get_or_insert(i);
            }
        }

        let eps = config.epsilon_bg;
        let probs: Vec<f32> = owner
            .iter()
            .map(|o| {
                let mut p = if o.is_some() { eps } else { 1.0 - eps };
                if config.bg_noise_sigma > 0.0 {
                    p += config.bg_noise_sigma * rng.normal();
                }
                p.clamp(0.0, 1.0) as f32
            })
            .collect();
        let bg = BgProbMap::new(Raster::new(w, h, probs)?)?;

        let flow = if t + 1 < config.num_frames {
            let mut u = Vec::with_capacity(w * h);
            let mut v = Vec::with_capacity(w * h);
            for o in &owner {
                let (mut fu, mut fv) = match o {
                    Some(i) => {
                        let vel = placed[*i].0.velocity;
                        (vel.0 as f32, vel.1 as f32)
                    }
                    None => config.camera_flow,
                };
                if config.flow_noise_sigma > 0.0 {
                    fu = (fu as f64 + config.flow_noise_sigma * rng.normal()) as f32;
                    fv = (fv as f64 + config.flow_noise_sigma * rng.normal()) as f32;
                }
                u.push(fu);
                v.push(fv);
            }
            Some(FlowField::new(Raster::new(w, h, u)?, Raster::new(w, h, v)?)?)
        } else {
            None
        };

        let mut entries: Vec<(CandidateSource, BitMask)> = gt
            .iter()
            .enumerate()
            .map(|(i, m)| {
                (
                    CandidateSource::GroundTruth {
                        object_id: i as u32 + 1,
                    },
                    (*m).clone(),
                )
            })
            .collect();
        for j in 0..config.distractors_per_frame {
            if let Some((kind, m)) = distractor(config, &gt, t, j, &mut rng) {
                entries.push((CandidateSource::Distractor { kind }, m));
            }
        }
        rng.shuffle(&mut entries);
        let mut ids: Vec<u32> = (1..=entries.len() as u32).collect();
        rng.shuffle(&mut ids);

        let mut candidates = Vec::with_capacity(entries.len());
        let mut prov = Vec::with_capacity(entries.len());
        for ((source, mask), id) in entries.into_iter().zip(ids) {
            let score = rng.uniform();
            candidates.push(MaskCandidate::new(id, score, mask)?);
            prov.push(ProvenanceEntry { id, source });
        }
        frames.push(FrameInputs::new(t, candidates, bg, flow)?);
        gt_frames.push(GtFrame {
            index: t as i64,
            objects: gt
                .iter()
                .enumerate()
                .map(|(i, m)| GtObject {
                    object_id: i as u32 + 1,
                    runs: rle_encode(m).runs,
                })
                .collect(),
        });
        prov_frames.push(ProvenanceFrame {
            index: t as i64,
            candidates: prov,
        });
    }

    Ok(SynthScene {
        scene: SceneBundle::new(w, h, frames)?,
        ground_truth: GroundTruthDocument {
            width: w,
            height: h,
            frames: gt_frames,
        },
        provenance: ProvenanceDocument { frames: prov_frames },
    })
}

/// Writes the scene, `gt.json` and `provenance.json` into a new directory
/// `dir`, returning the manifest path. The files are written into a sibling
/// temporary directory that is renamed into place at the end, so `dir` is
/// either complete or absent.
pub fn emit(scene: &SynthScene, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    if dir.exists() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::AlreadyExists, "output directory already exists"),
        ));
    }
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::Builder::new()
        .prefix(".masksel-gen-")
        .tempdir_in(parent)
        .map_err(|e| Error::io(parent, e))?;
    write_scene(&scene.scene, tmp.path())?;
    write_ground_truth(tmp.path().join(GT_FILE), &scene.ground_truth)?;
    write_provenance(tmp.path().join(PROVENANCE_FILE), &scene.provenance)?;
    let staged = tmp.keep();
    if let Err(e) = std::fs::rename(&staged, dir) {
        let _ = std::fs::remove_dir_all(&staged);
        return Err(Error::io(dir, e));
    }
    Ok(dir.join(crate::io::MANIFEST_NAME))
}
