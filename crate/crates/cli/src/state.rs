//! Versioned, checksummed round-state files and crash-safe writes.
//!
//! A state file is `{"schema_version", "checksum", "payload"}` where the
//! checksum is the SHA-256 of the payload's exact bytes as stored.

use std::collections::BTreeMap;
use std::fs::{File, TryLockError};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};
use vistrain_core::dataset::{Provenance, StoredTrack, TrainingDataset, VideoEntry};
use vistrain_core::nms::DetectionTrack;

use crate::error::{CliError, Result};
use crate::formats::{masks_from_json, masks_to_json, RleJson};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ProvenanceJson {
    Base,
    Pseudo,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrackJson {
    detection_id: String,
    score: f64,
    origin_round: u32,
    selected: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pred_ious: Option<Vec<f64>>,
    segmentations: Vec<Option<RleJson>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VideoJson {
    video_id: String,
    provenance: ProvenanceJson,
    num_frames: usize,
    tracks: Vec<TrackJson>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetJson {
    round: u32,
    videos: Vec<VideoJson>,
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    schema_version: u32,
    checksum: &'a str,
    payload: &'a RawValue,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    schema_version: u32,
    checksum: String,
    payload: Box<RawValue>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn to_json(ds: &TrainingDataset) -> DatasetJson {
    DatasetJson {
        round: ds.round,
        videos: ds
            .videos
            .iter()
            .map(|(id, v)| VideoJson {
                video_id: id.clone(),
                provenance: match v.provenance {
                    Provenance::Base => ProvenanceJson::Base,
                    Provenance::Pseudo => ProvenanceJson::Pseudo,
                },
                num_frames: v.num_frames,
                tracks: v
                    .tracks
                    .iter()
                    .map(|s| TrackJson {
                        detection_id: s.track.detection_id.clone(),
                        score: s.track.score,
                        origin_round: s.origin_round,
                        selected: s.track.selected.clone().unwrap_or_default(),
                        pred_ious: s.track.pred_iou.clone(),
                        segmentations: masks_to_json(&s.track.masks),
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn from_json(path: &Path, j: DatasetJson) -> Result<TrainingDataset> {
    let bad = |msg: String| CliError::schema(path, 0, msg);
    let mut videos = BTreeMap::new();
    for v in j.videos {
        let mut tracks = Vec::with_capacity(v.tracks.len());
        for t in v.tracks {
            let masks = masks_from_json(&t.segmentations).map_err(|e| bad(format!("{}/{}: {e}", v.video_id, t.detection_id)))?;
            let mut track = DetectionTrack::new(t.detection_id, v.video_id.clone(), t.score, masks).with_selected(t.selected);
            track.pred_iou = t.pred_ious;
            track.validate(v.num_frames)?;
            tracks.push(StoredTrack { track, origin_round: t.origin_round });
        }
        let provenance = match v.provenance {
            ProvenanceJson::Base => Provenance::Base,
            ProvenanceJson::Pseudo => Provenance::Pseudo,
        };
        if videos.insert(v.video_id.clone(), VideoEntry { provenance, num_frames: v.num_frames, tracks }).is_some() {
            return Err(bad(format!("duplicate video {}", v.video_id)));
        }
    }
    Ok(TrainingDataset { round: j.round, videos })
}

/// Serialized state file bytes and the payload checksum.
pub fn encode_state(ds: &TrainingDataset) -> Result<(Vec<u8>, String)> {
    let payload = serde_json::to_string(&to_json(ds)).map_err(|e| CliError::Usage(e.to_string()))?;
    let checksum = sha256_hex(payload.as_bytes());
    let raw = RawValue::from_string(payload).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut bytes = serde_json::to_vec(&EnvelopeOut { schema_version: SCHEMA_VERSION, checksum: &checksum, payload: &raw })
        .map_err(|e| CliError::Usage(e.to_string()))?;
    bytes.push(b'\n');
    Ok((bytes, checksum))
}

pub fn decode_state(path: &Path, bytes: &[u8]) -> Result<(TrainingDataset, String)> {
    let env: EnvelopeIn = serde_json::from_slice(bytes).map_err(|e| CliError::schema(path, e.line(), e))?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(CliError::Version { path: path.into(), found: env.schema_version, expected: SCHEMA_VERSION });
    }
    let computed = sha256_hex(env.payload.get().as_bytes());
    if computed != env.checksum {
        return Err(CliError::Checksum { path: path.into(), stored: env.checksum, computed });
    }
    let j: DatasetJson = serde_json::from_str(env.payload.get()).map_err(|e| CliError::schema(path, e.line(), e))?;
    Ok((from_json(path, j)?, computed))
}

pub fn load_state(path: &Path) -> Result<(TrainingDataset, String)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_state(path, &bytes)
}

pub fn save_state(path: &Path, ds: &TrainingDataset) -> Result<String> {
    let (bytes, checksum) = encode_state(ds)?;
    write_atomic(path, &bytes)?;
    Ok(checksum)
}

/// Writes to a temporary sibling, syncs it, renames it over `path`, then
/// syncs the directory so the rename itself is durable.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let io = |e| CliError::io(path, e);
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    #[cfg(unix)]
    File::open(&dir).and_then(|d| d.sync_all()).map_err(|e| CliError::io(&dir, e))?;
    Ok(())
}

/// Advisory lock on `<state>.lock`, held until dropped.
#[derive(Debug)]
pub struct StateLock {
    _file: File,
}

impl StateLock {
    pub fn acquire(state: &Path) -> Result<Self> {
        let mut name = state.as_os_str().to_owned();
        name.push(".lock");
        let path = PathBuf::from(name);
        let file = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| CliError::io(&path, e))?;
        match file.try_lock() {
            Ok(()) => Ok(StateLock { _file: file }),
            Err(TryLockError::WouldBlock) => Err(CliError::Locked { path }),
            Err(TryLockError::Error(e)) => Err(CliError::io(&path, e)),
        }
    }
}
