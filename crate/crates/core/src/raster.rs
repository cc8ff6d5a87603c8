//! Pixel grids: scalar rasters, packed binary masks and their run-length form.

use crate::error::{Error, Result};

/// A `width x height` grid of scalars stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ConfigInvalid(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::ConfigInvalid(format!(
                "raster of {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Raster::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

/// Horizontal and vertical displacement, in pixels per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    u: Raster,
    v: Raster,
}

impl FlowField {
    pub fn new(u: Raster, v: Raster) -> Result<Self> {
        if u.dims() != v.dims() {
            return Err(Error::dims(u.dims(), v.dims()));
        }
        Ok(FlowField { u, v })
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Result<Self> {
        FlowField::new(
            Raster::filled(width, height, u)?,
            Raster::filled(width, height, v)?,
        )
    }

    pub fn u(&self) -> &Raster {
        &self.u
    }

    pub fn v(&self) -> &Raster {
        &self.v
    }

    pub fn dims(&self) -> (usize, usize) {
        self.u.dims()
    }
}

/// Per-pixel probability of belonging to the background.
#[derive(Clone, Debug, PartialEq)]
pub struct BgProbMap {
    probs: Raster,
}

impl BgProbMap {
    pub fn new(probs: Raster) -> Result<Self> {
        if let Some(bad) = probs.values().iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::ConfigInvalid(format!(
                "background probability {bad} outside [0, 1]"
            )));
        }
        Ok(BgProbMap { probs })
    }

    pub fn uniform(width: usize, height: usize, p: f32) -> Result<Self> {
        BgProbMap::new(Raster::filled(width, height, p)?)
    }

    pub fn probs(&self) -> &Raster {
        &self.probs
    }

    pub fn dims(&self) -> (usize, usize) {
        self.probs.dims()
    }
}

/// Packed binary image, one bit per pixel, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMask {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for BitMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BitMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("area", &self.count())
            .finish()
    }
}

impl BitMask {
    pub fn empty(width: usize, height: usize) -> Self {
        BitMask {
            width,
            height,
            words: vec![0; (width * height).div_ceil(64)],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = BitMask::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    mask.set_index(y * width + x);
                }
            }
        }
        mask
    }

    pub fn from_bools(width: usize, height: usize, bits: &[bool]) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::ConfigInvalid(format!(
                "grid of {width}x{height} needs {} cells, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(BitMask::from_fn(width, height, |x, y| bits[y * width + x]))
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len()).map(|i| self.get_index(i)).collect()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Number of pixels (set or not).
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub(crate) fn words_mut(&mut self) -> &mut [u64] {
        &mut self.words
    }

    #[inline]
    pub fn get_index(&self, i: usize) -> bool {
        self.words[i >> 6] >> (i & 63) & 1 == 1
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.get_index(y * self.width + x)
    }

    #[inline]
    pub fn set_index(&mut self, i: usize) {
        self.words[i >> 6] |= 1 << (i & 63);
    }

    pub fn set(&mut self, x: usize, y: usize) {
        self.set_index(y * self.width + x);
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn check_dims(&self, other: &BitMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::dims(self.dims(), other.dims()));
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &BitMask) -> Result<usize> {
        self.check_dims(other)?;
        Ok(self.intersection_count_unchecked(other))
    }

    pub(crate) fn intersection_count_unchecked(&self, other: &BitMask) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub(crate) fn union_count_unchecked(&self, other: &BitMask) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    pub fn union_with(&mut self, other: &BitMask) -> Result<()> {
        self.check_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        Ok(())
    }

    /// Intersection-over-union; 0 when both masks are empty.
    pub fn iou(&self, other: &BitMask) -> Result<f64> {
        self.check_dims(other)?;
        Ok(self.iou_unchecked(other))
    }

    pub(crate) fn iou_unchecked(&self, other: &BitMask) -> f64 {
        let union = self.union_count_unchecked(other);
        if union == 0 {
            0.0
        } else {
            self.intersection_count_unchecked(other) as f64 / union as f64
        }
    }

    /// Row-major indices of set pixels, ascending.
    pub fn ones(&self) -> Ones<'_> {
        Ones {
            words: &self.words,
            word_index: 0,
            current: self.words.first().copied().unwrap_or(0),
        }
    }

    /// Mean pixel coordinate `(x, y)` of the set pixels, `None` when empty.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut n = 0usize;
        for i in self.ones() {
            sx += (i % self.width) as f64;
            sy += (i / self.width) as f64;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Shift every set pixel by `(dx, dy)`; pixels leaving the grid are dropped.
    pub fn translated(&self, dx: i64, dy: i64) -> BitMask {
        let mut out = BitMask::empty(self.width, self.height);
        let (w, h) = (self.width as i64, self.height as i64);
        for i in self.ones() {
            let x = (i % self.width) as i64 + dx;
            let y = (i / self.width) as i64 + dy;
            if (0..w).contains(&x) && (0..h).contains(&y) {
                out.set_index((y * w + x) as usize);
            }
        }
        out
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of the set pixels.
    pub fn bbox(&self) -> Option<(usize, usize, usize, usize)> {
        let mut it = self.ones();
        let first = it.next()?;
        let (mut x0, mut y0) = (first % self.width, first / self.width);
        let (mut x1, mut y1) = (x0, y0);
        for i in it {
            let (x, y) = (i % self.width, i / self.width);
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        Some((x0, y0, x1, y1))
    }
}

pub struct Ones<'a> {
    words: &'a [u64],
    word_index: usize,
    current: u64,
}

impl Iterator for Ones<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        while self.current == 0 {
            self.word_index += 1;
            if self.word_index >= self.words.len() {
                return None;
            }
            self.current = self.words[self.word_index];
        }
        let bit = self.current.trailing_zeros() as usize;
        self.current &= self.current - 1;
        Some(self.word_index * 64 + bit)
    }
}

/// Run-length form of a binary mask: alternating runs of 0s and 1s in
/// row-major order, the first run counting 0s (possibly zero).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rle {
    pub width: usize,
    pub height: usize,
    pub runs: Vec<u32>,
}

impl Rle {
    /// Number of set pixels (sum of the odd-indexed runs).
    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }

    pub fn run_sum(&self) -> u64 {
        self.runs.iter().map(|&r| r as u64).sum()
    }
}

pub fn rle_encode(mask: &BitMask) -> Rle {
    let mut runs = Vec::new();
    let mut value = false;
    let mut count = 0u32;
    for i in 0..mask.len() {
        let bit = mask.get_index(i);
        if bit != value {
            runs.push(count);
            count = 0;
            value = bit;
        }
        count += 1;
    }
    runs.push(count);
    Rle {
        width: mask.width(),
        height: mask.height(),
        runs,
    }
}

pub fn rle_decode(rle: &Rle) -> Result<BitMask> {
    let expected = (rle.width * rle.height) as u64;
    let actual = rle.run_sum();
    if actual != expected {
        return Err(Error::RunSumMismatch { expected, actual });
    }
    let mut mask = BitMask::empty(rle.width, rle.height);
    let mut pos = 0usize;
    for (k, &run) in rle.runs.iter().enumerate() {
        let run = run as usize;
        if k % 2 == 1 {
            for i in pos..pos + run {
                mask.set_index(i);
            }
        }
        pos += run;
    }
    Ok(mask)
}
