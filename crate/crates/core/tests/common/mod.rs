#![allow(dead_code)]

use masksel::eval::{evaluate, DEFAULT_IOU_THRESHOLD};
use masksel::io::SelectionDocument;
use masksel::optimizer::SelectionResult;
use masksel::scene::{masks_overlap, SceneBundle};
use masksel::synth::{generate, ShapeKind, SynthConfig, SynthScene};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.0.next_u64() % n
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn pick<T: Copy>(&mut self, items: &[T]) -> T {
        items[self.below(items.len() as u64) as usize]
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// A random small synthetic scene with at most `max_n` candidates per frame
/// and at most `max_t` frames.
pub fn random_scene(seed: u64, max_n: usize, max_t: usize) -> SynthScene {
    let mut rng = Rng::new(seed ^ 0x5eed_0f_5ce4e);
    loop {
        let objects = rng.below(4.min(max_n as u64 + 1)) as usize;
        let distractors = rng.below((max_n - objects) as u64 + 1) as usize;
        let config = SynthConfig {
            width: 20 + rng.below(20) as usize,
            height: 14 + rng.below(16) as usize,
            num_frames: 1 + rng.below(max_t as u64) as usize,
            objects,
            shapes: vec![rng.pick(&[ShapeKind::Rectangle, ShapeKind::Ellipse]), ShapeKind::Ellipse],
            half_extent: (1.5, 4.0),
            velocity_u: (-2.0, 2.0),
            velocity_v: (-2.0, 2.0),
            integer_velocity: rng.below(2) == 0,
            distinct_velocities: rng.below(2) == 0,
            camera_flow: (rng.range(-1.0, 1.0) as f32, rng.range(-1.0, 1.0) as f32),
            distractors_per_frame: distractors,
            bg_noise_sigma: rng.pick(&[0.0, 0.1, 0.3]),
            flow_noise_sigma: rng.pick(&[0.0, 0.5]),
            epsilon_bg: rng.pick(&[0.05, 0.1, 0.3]),
            seed: rng.0.next_u64(),
        };
        if let Ok(scene) = generate(&config) {
            return scene;
        }
    }
}

/// Number of selected pairs sharing more than `tolerance` pixels.
pub fn overlap_violations(scene: &SceneBundle, result: &SelectionResult, tolerance: usize) -> usize {
    let mut bad = 0;
    for (frame, choice) in scene.frames.iter().zip(&result.frames) {
        let ids = &choice.combination.ids;
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                let (ca, cb) = (frame.candidate(a).unwrap(), frame.candidate(b).unwrap());
                if masks_overlap(ca, cb, tolerance).unwrap() {
                    bad += 1;
                }
            }
        }
    }
    bad
}

pub fn f1(synth: &SynthScene, result: &SelectionResult) -> f64 {
    let doc = SelectionDocument::from_result(result, &synth.scene, "select");
    evaluate(&doc, &synth.scene, &synth.ground_truth, DEFAULT_IOU_THRESHOLD)
        .unwrap()
        .f1
}
