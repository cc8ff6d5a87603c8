//! Mask candidates, per-frame inputs and the whole-video bundle.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::raster::{rle_decode, rle_encode, BgProbMap, BitMask, FlowField, Rle};

/// Largest number of candidates a [`Selection`] can address.
pub const SELECTION_CAPACITY: usize = 64;

/// One proposed object mask for a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskCandidate {
    id: u32,
    score: f64,
    mask: BitMask,
    area: usize,
}

impl MaskCandidate {
    pub fn new(id: u32, score: f64, mask: BitMask) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ConfigInvalid(format!(
                "candidate {id} score {score} outside [0, 1]"
            )));
        }
        let area = mask.count();
        if area == 0 {
            return Err(Error::EmptyCandidate { id });
        }
        Ok(MaskCandidate {
            id,
            score,
            mask,
            area,
        })
    }

    pub fn from_rle(id: u32, score: f64, rle: &Rle) -> Result<Self> {
        MaskCandidate::new(id, score, rle_decode(rle)?)
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn mask(&self) -> &BitMask {
        &self.mask
    }

    pub fn area(&self) -> usize {
        self.area
    }

    pub fn rle(&self) -> Rle {
        rle_encode(&self.mask)
    }
}

/// `true` iff the masks share more than `tolerance` pixels.
pub fn masks_overlap(a: &MaskCandidate, b: &MaskCandidate, tolerance: usize) -> Result<bool> {
    Ok(a.mask.intersection_count(&b.mask)? > tolerance)
}

/// A subset of a frame's candidates, by position in the candidate list.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Selection(pub u64);

impl Selection {
    pub const EMPTY: Selection = Selection(0);

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Selection {
        Selection(indices.into_iter().fold(0, |acc, i| acc | 1 << i))
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        i < SELECTION_CAPACITY && self.0 >> i & 1 == 1
    }

    #[inline]
    pub fn with(self, i: usize) -> Selection {
        Selection(self.0 | 1 << i)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Selected positions, ascending.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(i)
        })
    }

    /// Lexicographic order of the ascending index lists; a proper prefix
    /// sorts first.
    pub fn lex_cmp(self, other: Selection) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        let diff = self.0 ^ other.0;
        if diff == 0 {
            return Ordering::Equal;
        }
        // The lists agree below `p` and exactly one of them holds `p`.
        let p = diff.trailing_zeros();
        let (self_holds, lacking) = if self.0 >> p & 1 == 1 {
            (true, other.0)
        } else {
            (false, self.0)
        };
        // The lacking list is smaller only if it ends here.
        let holder_smaller = lacking >> p != 0;
        if self_holds == holder_smaller {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }
}

/// Inputs for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameInputs {
    pub index: usize,
    pub candidates: Vec<MaskCandidate>,
    pub bg: BgProbMap,
    pub flow_to_next: Option<FlowField>,
}

impl FrameInputs {
    pub fn new(
        index: usize,
        candidates: Vec<MaskCandidate>,
        bg: BgProbMap,
        flow_to_next: Option<FlowField>,
    ) -> Result<Self> {
        let dims = bg.dims();
        let mut seen = HashSet::new();
        for c in &candidates {
            if !seen.insert(c.id()) {
                return Err(Error::DuplicateId { id: c.id() });
            }
            if c.mask().dims() != dims {
                return Err(Error::dims(dims, c.mask().dims()));
            }
        }
        if let Some(flow) = &flow_to_next {
            if flow.dims() != dims {
                return Err(Error::dims(dims, flow.dims()));
            }
        }
        Ok(FrameInputs {
            index,
            candidates,
            bg,
            flow_to_next,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.bg.dims()
    }

    pub fn candidate(&self, id: u32) -> Option<&MaskCandidate> {
        self.candidates.iter().find(|c| c.id() == id)
    }

    /// Candidate ids of `selection`, in candidate-list order.
    pub fn selected_ids(&self, selection: Selection) -> Vec<u32> {
        selection
            .indices()
            .filter_map(|i| self.candidates.get(i).map(MaskCandidate::id))
            .collect()
    }
}

/// Binary image of the union of the selected masks.
pub fn union_foreground(frame: &FrameInputs, selection: Selection) -> Result<BitMask> {
    let (w, h) = frame.dims();
    let mut fg = BitMask::empty(w, h);
    for i in selection.indices() {
        let c = frame.candidates.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: frame.candidates.len(),
        })?;
        fg.union_with(c.mask())?;
    }
    Ok(fg)
}

/// A whole video's ingested inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneBundle {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<FrameInputs>,
    /// External index of frame 0.
    pub first_index: i64,
}

impl SceneBundle {
    pub fn new(width: usize, height: usize, frames: Vec<FrameInputs>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::ConfigInvalid("scene has no frames".into()));
        }
        let last = frames.len() - 1;
        for (t, frame) in frames.iter().enumerate() {
            if frame.index != t {
                return Err(Error::ConfigInvalid(format!(
                    "frame {t} carries index {}",
                    frame.index
                )));
            }
            if frame.dims() != (width, height) {
                return Err(Error::dims((width, height), frame.dims()));
            }
            match (&frame.flow_to_next, t < last) {
                (None, true) => return Err(Error::MissingFlow { frame: t }),
                (Some(_), false) => return Err(Error::UnexpectedFlow { frame: t }),
                _ => {}
            }
        }
        Ok(SceneBundle {
            width,
            height,
            frames,
            first_index: 0,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn max_candidates(&self) -> usize {
        self.frames
            .iter()
            .map(|f| f.candidates.len())
            .max()
            .unwrap_or(0)
    }
}
