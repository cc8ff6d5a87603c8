//! File formats: binary `.flo` flow and `PMAP` probability rasters, text
//! candidate lists, and JSON documents for manifests, selections, ground
//! truth and provenance.

pub mod binary;
pub mod cand;
pub mod docs;
pub mod manifest;

pub use binary::{read_flow, read_probmap, write_flow, write_probmap};
pub use cand::{read_candidates, write_candidates, CandidateFile};
pub use docs::{
    read_ground_truth, read_provenance, read_selection, write_ground_truth, write_provenance,
    write_selection, CandidateSource, DistractorKind, FrameSelection, GroundTruthDocument, GtFrame,
    GtObject, ProvenanceDocument, ProvenanceEntry, ProvenanceFrame, SelectionDocument,
};
pub use manifest::{read_manifest, read_scene, write_scene, FrameRecord, SceneManifest, MANIFEST_NAME};

pub(crate) mod json {
    use std::path::Path;

    use serde::de::DeserializeOwned;
    use serde::Serialize;

    use crate::error::{Error, Result};

    /// Byte offset of a 1-based line/column position.
    fn offset_of(text: &str, line: usize, column: usize) -> usize {
        let line_start: usize = text
            .split_inclusive('\n')
            .take(line.saturating_sub(1))
            .map(str::len)
            .sum();
        (line_start + column.saturating_sub(1)).min(text.len())
    }

    pub(crate) fn parse<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
        serde_json::from_str(text).map_err(|e| {
            Error::parse(path, offset_of(text, e.line(), e.column()), e.to_string())
        })
    }

    pub(crate) fn read<T: DeserializeOwned>(path: &Path) -> Result<T> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::parse(path, e.valid_up_to(), "invalid UTF-8"))?;
        parse(path, text)
    }

    pub(crate) fn write<T: Serialize>(path: &Path, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::ConfigInvalid(format!("serializing {}: {e}", path.display())))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
