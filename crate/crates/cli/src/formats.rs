//! On-disk formats: per-frame RLE objects, line-delimited detection dumps and
//! YouTube-VIS style annotation files.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use vistrain_core::eval::{GroundTruthTrack, GroundTruthVideo};
use vistrain_core::mask::{FrameMask, MaskTrack};
use vistrain_core::nms::{DetectionSet, DetectionTrack};

use crate::error::{CliError, Result};

/// Integer or string identifier; normalized to its decimal/string form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Id {
    Int(i64),
    Str(String),
}

impl fmt::Display for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Id::Int(i) => write!(f, "{i}"),
            Id::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Counts {
    List(Vec<u32>),
    /// The compact ASCII form used by COCO tooling.
    Compressed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RleJson {
    /// `[height, width]`
    pub size: [u32; 2],
    pub counts: Counts,
}

/// Decodes the COCO compact string form of RLE counts.
pub fn decode_compressed_counts(s: &str) -> Result<Vec<u32>, String> {
    let bytes = s.as_bytes();
    let mut counts: Vec<i64> = Vec::new();
    let mut p = 0;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0;
        loop {
            let Some(&b) = bytes.get(p) else {
                return Err("truncated counts string".into());
            };
            if !(48..48 + 64).contains(&b) {
                return Err(format!("invalid byte {b:#x} in counts string"));
            }
            if k >= 12 {
                return Err("counts value overflows".into());
            }
            let c = (b - 48) as i64;
            x |= (c & 0x1f) << (5 * k);
            p += 1;
            k += 1;
            if c & 0x20 == 0 {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
        }
        if counts.len() > 2 {
            x += counts[counts.len() - 2];
        }
        counts.push(x);
    }
    counts
        .into_iter()
        .map(|c| u32::try_from(c).map_err(|_| format!("run length {c} out of range")))
        .collect()
}

/// Encodes counts in the COCO compact string form.
pub fn encode_compressed_counts(counts: &[u32]) -> String {
    let mut out = String::new();
    for (i, &c) in counts.iter().enumerate() {
        let mut x = c as i64;
        if i > 2 {
            x -= counts[i - 2] as i64;
        }
        loop {
            let mut c = (x & 0x1f) as u8;
            x >>= 5;
            let more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
            if more {
                c |= 0x20;
            }
            out.push((c + 48) as char);
            if !more {
                break;
            }
        }
    }
    out
}

impl RleJson {
    pub fn from_mask(m: &FrameMask) -> Self {
        RleJson { size: [m.height(), m.width()], counts: Counts::List(m.counts().to_vec()) }
    }

    pub fn to_mask(&self) -> Result<FrameMask, String> {
        let counts = match &self.counts {
            Counts::List(c) => c.clone(),
            Counts::Compressed(s) => decode_compressed_counts(s)?,
        };
        FrameMask::from_counts(self.size[0], self.size[1], counts).map_err(|e| e.to_string())
    }
}

pub fn masks_from_json(frames: &[Option<RleJson>]) -> Result<MaskTrack, String> {
    let frames = frames
        .iter()
        .enumerate()
        .map(|(t, f)| f.as_ref().map(|r| r.to_mask().map_err(|e| format!("frame {t}: {e}"))).transpose())
        .collect::<Result<Vec<_>, _>>()?;
    MaskTrack::new(frames).map_err(|e| e.to_string())
}

pub fn masks_to_json(masks: &MaskTrack) -> Vec<Option<RleJson>> {
    masks.frames().iter().map(|f| f.as_ref().map(RleJson::from_mask)).collect()
}

/// One line of a detection dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub video_id: Id,
    /// Defaults to the 1-based line number when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_id: Option<Id>,
    pub score: f64,
    pub segmentations: Vec<Option<RleJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_ious: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_id: Option<Id>,
}

impl DetectionRecord {
    pub fn from_track(d: &DetectionTrack) -> Self {
        DetectionRecord {
            video_id: Id::Str(d.video_id.clone()),
            detection_id: Some(Id::Str(d.detection_id.clone())),
            score: d.score,
            segmentations: masks_to_json(&d.masks),
            pred_ious: d.pred_iou.clone(),
            category_id: None,
        }
    }
}

/// Reads a dump into one validated set per video, ordered by video id.
pub fn read_detections(path: &Path) -> Result<Vec<DetectionSet>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut videos: BTreeMap<String, (usize, DetectionSet)> = BTreeMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord =
            serde_json::from_str(&line).map_err(|e| CliError::schema(path, lineno, e))?;
        let masks = masks_from_json(&rec.segmentations).map_err(|e| CliError::schema(path, lineno, e))?;
        let video_id = rec.video_id.to_string();
        let detection_id = rec.detection_id.map_or_else(|| lineno.to_string(), |d| d.to_string());
        let mut det = DetectionTrack::new(detection_id, video_id.clone(), rec.score, masks);
        if let Some(p) = rec.pred_ious {
            det = det.with_pred_iou(p);
        }
        let n = det.num_frames();
        let (first_line, set) = videos
            .entry(video_id.clone())
            .or_insert_with(|| (lineno, DetectionSet::new(video_id, n)));
        if set.num_frames != n {
            return Err(CliError::schema(
                path,
                lineno,
                format!("{} frames, but line {first_line} gave this video {}", n, set.num_frames),
            ));
        }
        det.validate(n).map_err(|e| CliError::schema(path, lineno, e))?;
        if let Some((h, w)) = det.masks.dims() {
            if let Some((h0, w0)) = set.detections.iter().find_map(|d| d.masks.dims()) {
                if (h, w) != (h0, w0) {
                    return Err(CliError::schema(path, lineno, format!("frame size {h}x{w}, video uses {h0}x{w0}")));
                }
            }
        }
        if set.detections.iter().any(|d| d.detection_id == det.detection_id) {
            return Err(CliError::schema(path, lineno, format!("duplicate detection id {}", det.detection_id)));
        }
        set.detections.push(det);
    }
    Ok(videos.into_values().map(|(_, s)| s).collect())
}

pub fn write_detections<W: Write>(mut out: W, sets: &[DetectionSet]) -> std::io::Result<()> {
    for set in sets {
        for d in &set.detections {
            serde_json::to_writer(&mut out, &DetectionRecord::from_track(d))?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YtVideo {
    pub id: Id,
    pub height: u32,
    pub width: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub file_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YtAnnotation {
    pub id: Id,
    pub video_id: Id,
    #[serde(default = "default_category")]
    pub category_id: Id,
    pub segmentations: Vec<Option<RleJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub areas: Option<Vec<Option<u64>>>,
    #[serde(default)]
    pub iscrowd: u8,
}

fn default_category() -> Id {
    Id::Int(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YtCategory {
    pub id: Id,
    #[serde(default)]
    pub name: String,
}

/// The subset of the YouTube-VIS annotation layout that is read; unknown
/// fields are ignored so public files parse as they are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YtvisFile {
    pub videos: Vec<YtVideo>,
    #[serde(default)]
    pub annotations: Vec<YtAnnotation>,
    #[serde(default)]
    pub categories: Vec<YtCategory>,
}

fn category_number(id: &Id) -> u64 {
    match id {
        Id::Int(i) => *i as u64,
        Id::Str(s) => s.parse().unwrap_or_else(|_| {
            // stable, order-independent hash of a string label
            s.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
        }),
    }
}

pub fn parse_ground_truth(path: &Path, text: &str) -> Result<Vec<GroundTruthVideo>> {
    let file: YtvisFile = serde_json::from_str(text).map_err(|e| CliError::schema(path, e.line(), e))?;
    ground_truth_from_file(path, &file)
}

pub fn ground_truth_from_file(path: &Path, file: &YtvisFile) -> Result<Vec<GroundTruthVideo>> {
    let mut videos: BTreeMap<String, (u32, u32, GroundTruthVideo)> = BTreeMap::new();
    for v in &file.videos {
        let id = v.id.to_string();
        let len = v.length.unwrap_or(v.file_names.len());
        let gt = GroundTruthVideo { video_id: id.clone(), num_frames: len, tracks: Vec::new() };
        if videos.insert(id.clone(), (v.height, v.width, gt)).is_some() {
            return Err(CliError::schema(path, 0, format!("duplicate video id {id}")));
        }
    }
    for a in &file.annotations {
        let vid = a.video_id.to_string();
        let ctx = |msg: String| CliError::schema(path, 0, format!("annotation {}: {msg}", a.id));
        let (h, w, video) = videos.get_mut(&vid).ok_or_else(|| ctx(format!("unknown video {vid}")))?;
        if a.segmentations.len() != video.num_frames {
            return Err(ctx(format!("{} frames, video has {}", a.segmentations.len(), video.num_frames)));
        }
        let masks = masks_from_json(&a.segmentations).map_err(ctx)?;
        if let Some(dims) = masks.dims() {
            if dims != (*h, *w) {
                return Err(ctx(format!("frame size {}x{}, video is {h}x{w}", dims.0, dims.1)));
            }
        }
        video.tracks.push(GroundTruthTrack {
            gt_id: a.id.to_string(),
            category_id: category_number(&a.category_id),
            masks,
        });
    }
    Ok(videos.into_values().map(|(_, _, v)| v).collect())
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthVideo>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_ground_truth(path, &text)
}

/// Serializes ground truth in the YouTube-VIS layout with one category.
pub fn ground_truth_to_file(videos: &[GroundTruthVideo], dims: impl Fn(&GroundTruthVideo) -> (u32, u32)) -> YtvisFile {
    let mut out = YtvisFile {
        videos: Vec::new(),
        annotations: Vec::new(),
        categories: vec![YtCategory { id: Id::Int(1), name: "object".into() }],
    };
    for v in videos {
        let (h, w) = dims(v);
        out.videos.push(YtVideo {
            id: Id::Str(v.video_id.clone()),
            height: h,
            width: w,
            length: Some(v.num_frames),
            file_names: (0..v.num_frames).map(|t| format!("{}/{t:05}.jpg", v.video_id)).collect(),
        });
        for t in &v.tracks {
            out.annotations.push(YtAnnotation {
                id: Id::Str(t.gt_id.clone()),
                video_id: Id::Str(v.video_id.clone()),
                category_id: Id::Int(t.category_id as i64),
                segmentations: masks_to_json(&t.masks),
                areas: Some(t.masks.frames().iter().map(|f| f.as_ref().map(FrameMask::area)).collect()),
                iscrowd: 0,
            });
        }
    }
    out
}
