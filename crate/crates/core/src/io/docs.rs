//! JSON documents: selection results, ground truth and candidate provenance.
//!
//! Readers ignore unknown fields; missing required fields are errors.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::json;
use crate::error::{Error, Result};
use crate::losses::{LossBreakdown, LossWeights};
use crate::optimizer::{EvalCounters, SelectionResult};
use crate::raster::{rle_decode, BitMask, Rle};
use crate::scene::SceneBundle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionDocument {
    /// `select` or `oracle`.
    pub method: String,
    pub objective: f64,
    pub weights: LossWeights,
    pub counters: EvalCounters,
    pub frames: Vec<FrameSelection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSelection {
    pub index: i64,
    pub selected_ids: Vec<u32>,
    pub breakdown: LossBreakdown,
}

impl SelectionDocument {
    pub fn from_result(result: &SelectionResult, scene: &SceneBundle, method: &str) -> Self {
        SelectionDocument {
            method: method.to_string(),
            objective: result.objective,
            weights: result.weights,
            counters: result.counters,
            frames: result
                .frames
                .iter()
                .enumerate()
                .map(|(t, f)| FrameSelection {
                    index: scene.first_index + t as i64,
                    selected_ids: f.combination.ids.clone(),
                    breakdown: f.breakdown,
                })
                .collect(),
        }
    }

    /// Checks that the document describes `scene`: one entry per frame, in
    /// order, and only ids present in the frame.
    pub fn check_against(&self, scene: &SceneBundle) -> Result<()> {
        if self.frames.len() != scene.num_frames() {
            return Err(Error::IndexOutOfRange {
                index: self.frames.len(),
                len: scene.num_frames(),
            });
        }
        for (t, (doc, frame)) in self.frames.iter().zip(&scene.frames).enumerate() {
            let index = scene.first_index + t as i64;
            if doc.index != index {
                return Err(Error::ConfigInvalid(format!(
                    "selection frame {t} has index {}, scene expects {index}",
                    doc.index
                )));
            }
            for &id in &doc.selected_ids {
                if frame.candidate(id).is_none() {
                    return Err(Error::UnknownId { frame: index, id });
                }
            }
        }
        Ok(())
    }
}

pub fn write_selection(path: impl AsRef<Path>, doc: &SelectionDocument) -> Result<()> {
    json::write(path.as_ref(), doc)
}

pub fn read_selection(path: impl AsRef<Path>) -> Result<SelectionDocument> {
    json::read(path.as_ref())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthDocument {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<GtFrame>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtFrame {
    pub index: i64,
    pub objects: Vec<GtObject>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    pub object_id: u32,
    pub runs: Vec<u32>,
}

impl GtObject {
    pub fn mask(&self, width: usize, height: usize) -> Result<BitMask> {
        rle_decode(&Rle {
            width,
            height,
            runs: self.runs.clone(),
        })
    }
}

impl GroundTruthDocument {
    fn validate(&self, path: &Path) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::parse(path, 0, "dimensions must be positive"));
        }
        let pixels = (self.width * self.height) as u64;
        for frame in &self.frames {
            let mut seen = HashSet::new();
            for obj in &frame.objects {
                if !seen.insert(obj.object_id) {
                    return Err(Error::DuplicateId { id: obj.object_id });
                }
                let actual: u64 = obj.runs.iter().map(|&r| r as u64).sum();
                if actual != pixels {
                    return Err(Error::RunSumMismatch {
                        expected: pixels,
                        actual,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn check_against(&self, scene: &SceneBundle) -> Result<()> {
        if (self.width, self.height) != (scene.width, scene.height) {
            return Err(Error::dims((scene.width, scene.height), (self.width, self.height)));
        }
        if self.frames.len() != scene.num_frames() {
            return Err(Error::IndexOutOfRange {
                index: self.frames.len(),
                len: scene.num_frames(),
            });
        }
        Ok(())
    }
}

pub fn write_ground_truth(path: impl AsRef<Path>, doc: &GroundTruthDocument) -> Result<()> {
    json::write(path.as_ref(), doc)
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruthDocument> {
    let path = path.as_ref();
    let doc: GroundTruthDocument = json::read(path)?;
    doc.validate(path)?;
    Ok(doc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorKind {
    /// Union of two ground-truth masks.
    Union,
    /// A ground-truth mask moved by at least 3 pixels.
    Shifted,
    /// A rectangle away from every object.
    Background,
    /// Top half of a ground-truth mask.
    TopHalf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CandidateSource {
    GroundTruth { object_id: u32 },
    Distractor { kind: DistractorKind },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub id: u32,
    #[serde(flatten)]
    pub source: CandidateSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceFrame {
    pub index: i64,
    pub candidates: Vec<ProvenanceEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceDocument {
    pub frames: Vec<ProvenanceFrame>,
}

impl ProvenanceDocument {
    /// Ids of the ground-truth candidates of every frame, ascending.
    pub fn ground_truth_ids(&self) -> Vec<Vec<u32>> {
        self.frames
            .iter()
            .map(|f| {
                let mut ids: Vec<u32> = f
                    .candidates
                    .iter()
                    .filter(|e| matches!(e.source, CandidateSource::GroundTruth { .. }))
                    .map(|e| e.id)
                    .collect();
                ids.sort_unstable();
                ids
            })
            .collect()
    }
}

pub fn write_provenance(path: impl AsRef<Path>, doc: &ProvenanceDocument) -> Result<()> {
    json::write(path.as_ref(), doc)
}

pub fn read_provenance(path: impl AsRef<Path>) -> Result<ProvenanceDocument> {
    json::read(path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SelectionDocument {
        SelectionDocument {
            method: "select".into(),
            objective: 0.1 + 0.2,
            weights: LossWeights::default(),
            counters: EvalCounters {
                li_evaluations: 12,
                pair_evaluations: 4,
                tree_nodes_expanded: 7,
                trellis_edges_relaxed: 8,
            },
            frames: vec![
                FrameSelection {
                    index: 3,
                    selected_ids: vec![],
                    breakdown: LossBreakdown::new(std::f64::consts::LN_2, 1.0 / 3.0, -0.0, &LossWeights::default()),
                },
                FrameSelection {
                    index: 4,
                    selected_ids: vec![2, 9],
                    breakdown: LossBreakdown::new(1e-300, 0.0, 0.0, &LossWeights::default()),
                },
            ],
        }
    }

    #[test]
    fn selection_round_trip_is_exact() {
        let doc = sample();
        let text = serde_json::to_string_pretty(&doc).unwrap();
        let back: SelectionDocument = json::parse(Path::new("mem"), &text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.objective.to_bits(), doc.objective.to_bits());
        assert!(text.contains("\"selected_ids\": []"));
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let mut value = serde_json::to_value(sample()).unwrap();
        value["future"] = serde_json::json!({"a": 1});
        value["frames"][0]["note"] = serde_json::json!("x");
        let back: SelectionDocument = json::parse(Path::new("mem"), &value.to_string()).unwrap();
        assert_eq!(back, sample());
    }

    #[test]
    fn missing_field_is_fatal() {
        let mut value = serde_json::to_value(sample()).unwrap();
        value.as_object_mut().unwrap().remove("objective");
        let r: Result<SelectionDocument> = json::parse(Path::new("mem"), &value.to_string());
        assert!(matches!(r, Err(Error::Parse { .. })));
    }

    #[test]
    fn parse_offset_points_at_error() {
        let text = "{\n  \"method\": 5\n}";
        match json::parse::<SelectionDocument>(Path::new("mem"), text) {
            Err(Error::Parse { offset, .. }) => assert!((14..=16).contains(&offset), "{offset}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn provenance_schema() {
        let doc = ProvenanceDocument {
            frames: vec![ProvenanceFrame {
                index: 0,
                candidates: vec![
                    ProvenanceEntry {
                        id: 4,
                        source: CandidateSource::GroundTruth { object_id: 1 },
                    },
                    ProvenanceEntry {
                        id: 2,
                        source: CandidateSource::Distractor {
                            kind: DistractorKind::TopHalf,
                        },
                    },
                ],
            }],
        };
        let text = serde_json::to_string(&doc).unwrap();
        assert_eq!(
            text,
            r#"{"frames":[{"index":0,"candidates":[{"id":4,"source":"ground_truth","object_id":1},{"id":2,"source":"distractor","kind":"top_half"}]}]}"#
        );
        assert_eq!(serde_json::from_str::<ProvenanceDocument>(&text).unwrap(), doc);
        assert_eq!(doc.ground_truth_ids(), vec![vec![4]]);
    }
}
