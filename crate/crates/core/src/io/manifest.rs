//! `scene.json`: the manifest tying a scene's per-frame files together.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::binary::{read_flow, read_probmap, write_flow, write_probmap};
use super::cand::{read_candidates, write_candidates};
use super::json;
use crate::error::{Error, Result};
use crate::scene::{FrameInputs, SceneBundle};

pub const MANIFEST_NAME: &str = "scene.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub width: usize,
    pub height: usize,
    pub num_frames: usize,
    pub frames: Vec<FrameRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: i64,
    pub candidates: String,
    pub background: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<String>,
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<SceneManifest> {
    let path = path.as_ref();
    let manifest: SceneManifest = json::read(path)?;
    if manifest.frames.len() != manifest.num_frames {
        return Err(Error::parse(
            path,
            0,
            format!(
                "num_frames is {} but {} frame records are listed",
                manifest.num_frames,
                manifest.frames.len()
            ),
        ));
    }
    if manifest.frames.is_empty() {
        return Err(Error::parse(path, 0, "scene has no frames"));
    }
    if manifest.width == 0 || manifest.height == 0 {
        return Err(Error::parse(path, 0, "dimensions must be positive"));
    }
    let first = manifest.frames[0].index;
    for (t, rec) in manifest.frames.iter().enumerate() {
        if rec.index != first + t as i64 {
            return Err(Error::parse(
                path,
                0,
                format!("frame indices must be consecutive ascending, found {} at position {t}", rec.index),
            ));
        }
    }
    Ok(manifest)
}

/// Loads and validates a whole scene.
pub fn read_scene(manifest_path: impl AsRef<Path>) -> Result<SceneBundle> {
    let manifest_path = manifest_path.as_ref();
    let manifest = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let dims = (manifest.width, manifest.height);
    let last = manifest.frames.len() - 1;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for (t, rec) in manifest.frames.iter().enumerate() {
        let cands = read_candidates(dir.join(&rec.candidates))?;
        if (cands.width, cands.height) != dims {
            return Err(Error::dims(dims, (cands.width, cands.height)));
        }
        let bg = read_probmap(dir.join(&rec.background))?;
        if bg.dims() != dims {
            return Err(Error::dims(dims, bg.dims()));
        }
        let flow = match (&rec.flow, t < last) {
            (None, true) => return Err(Error::MissingFlow { frame: t }),
            (Some(_), false) => return Err(Error::UnexpectedFlow { frame: t }),
            (None, false) => None,
            (Some(name), true) => {
                let path = dir.join(name);
                if !path.is_file() {
                    return Err(Error::MissingFlow { frame: t });
                }
                let flow = read_flow(path)?;
                if flow.dims() != dims {
                    return Err(Error::dims(dims, flow.dims()));
                }
                Some(flow)
            }
        };
        frames.push(FrameInputs::new(t, cands.candidates, bg, flow)?);
    }
    let mut scene = SceneBundle::new(manifest.width, manifest.height, frames)?;
    scene.first_index = manifest.frames[0].index;
    Ok(scene)
}

/// Writes every frame's files and the manifest into an existing directory,
/// returning the manifest path.
pub fn write_scene(scene: &SceneBundle, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let mut records = Vec::with_capacity(scene.num_frames());
    for (t, frame) in scene.frames.iter().enumerate() {
        let rec = FrameRecord {
            index: scene.first_index + t as i64,
            candidates: format!("frame_{t:04}.cand"),
            background: format!("frame_{t:04}.pmap"),
            flow: frame.flow_to_next.as_ref().map(|_| format!("frame_{t:04}.flo")),
        };
        write_candidates(dir.join(&rec.candidates), scene.width, scene.height, &frame.candidates)?;
        write_probmap(dir.join(&rec.background), &frame.bg)?;
        if let (Some(name), Some(flow)) = (&rec.flow, &frame.flow_to_next) {
            write_flow(dir.join(name), flow)?;
        }
        records.push(rec);
    }
    let manifest = SceneManifest {
        width: scene.width,
        height: scene.height,
        num_frames: scene.num_frames(),
        frames: records,
    };
    let path = dir.join(MANIFEST_NAME);
    json::write(&path, &manifest)?;
    Ok(path)
}
