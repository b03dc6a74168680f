//! The multi-round training set and its augmentation protocol.
//!
//! Retained detections for videos the dataset has never seen are added in
//! bulk. For known videos each new detection is folded in one at a time:
//! if it overlaps a stored track (IoU >= 0.5 in some frame) the two are fused
//! frame by frame, otherwise it is appended. Stored pseudo-labels are never
//! removed, whatever their selection flags.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask::{any_frame_overlap, best_frame_iou, MaskTrack};
use crate::nms::{DetectionSet, DetectionTrack};

/// Frame IoU at which two tracks count as the same object.
pub const PHI_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    /// Synthetic videos with their own labels.
    Base,
    /// Videos labeled by the self-training loop.
    Pseudo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTrack {
    pub track: DetectionTrack,
    /// Round in which the track entered the dataset.
    pub origin_round: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoEntry {
    pub provenance: Provenance,
    pub num_frames: usize,
    pub tracks: Vec<StoredTrack>,
}

impl VideoEntry {
    pub fn detections(&self) -> impl Iterator<Item = &DetectionTrack> {
        self.tracks.iter().map(|s| &s.track)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingDataset {
    pub round: u32,
    pub videos: BTreeMap<String, VideoEntry>,
}

impl TrainingDataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a labeled synthetic video; every frame of every track is selected.
    pub fn add_base_video(
        &mut self,
        video_id: impl Into<String>,
        num_frames: usize,
        tracks: Vec<MaskTrack>,
    ) -> Result<()> {
        let video_id = video_id.into();
        let mut stored = Vec::with_capacity(tracks.len());
        for (i, masks) in tracks.into_iter().enumerate() {
            let track = DetectionTrack::new(alloc::format!("{i}"), video_id.clone(), 1.0, masks)
                .with_selected(alloc::vec![true; num_frames]);
            track.validate(num_frames)?;
            stored.push(StoredTrack {
                track,
                origin_round: self.round,
            });
        }
        self.videos.insert(
            video_id,
            VideoEntry {
                provenance: Provenance::Base,
                num_frames,
                tracks: stored,
            },
        );
        Ok(())
    }

    pub fn count_videos(&self, provenance: Provenance) -> usize {
        self.videos.values().filter(|v| v.provenance == provenance).count()
    }

    pub fn count_tracks(&self) -> usize {
        self.videos.values().map(|v| v.tracks.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FusionKind {
    InsertedNewVideo,
    InsertedNewTrack,
    /// Fused into the stored track with this id.
    FusedWith(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutcome {
    pub kind: FusionKind,
    pub merged_track: DetectionTrack,
}

/// Per-pass counters reported by [`augment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AugmentStats {
    pub new_videos: usize,
    pub new_video_tracks: usize,
    pub inserted_tracks: usize,
    pub fused_tracks: usize,
}

/// Overlap predicate: some frame reaches IoU 0.5.
pub fn overlap_phi(d_new: &DetectionTrack, d_exist: &DetectionTrack) -> Result<bool> {
    if d_new.video_id != d_exist.video_id {
        return Err(Error::VideoMismatch {
            detection_id: d_new.detection_id.clone(),
            expected: d_exist.video_id.clone(),
            found: d_new.video_id.clone(),
        });
    }
    any_frame_overlap(&d_new.masks, &d_exist.masks, PHI_IOU)
}

fn flags(d: &DetectionTrack) -> Result<&[bool]> {
    d.selected
        .as_deref()
        .ok_or_else(|| Error::SelectionUnset(d.detection_id.clone()))
}

/// Frame-by-frame merge of an overlapping pair.
///
/// Selection is the elementwise max. A frame keeps the existing mask only
/// when the existing label is selected and the new one is not. Score and
/// predicted IoU come from `d_new`; the id stays that of `d_exist`.
pub fn fuse(d_new: &DetectionTrack, d_exist: &DetectionTrack) -> Result<DetectionTrack> {
    let n = d_new.num_frames();
    if d_exist.num_frames() != n {
        return Err(Error::LengthMismatch(n, d_exist.num_frames()));
    }
    let s_new = flags(d_new)?;
    let s_exist = flags(d_exist)?;
    if s_new.len() != n || s_exist.len() != n {
        return Err(Error::LengthMismatch(s_new.len(), s_exist.len()));
    }
    let mut frames = Vec::with_capacity(n);
    let mut selected = Vec::with_capacity(n);
    for t in 0..n {
        let keep_existing = s_exist[t] && !s_new[t];
        let src = if keep_existing { &d_exist.masks } else { &d_new.masks };
        frames.push(src.frames()[t].clone());
        selected.push(s_new[t] || s_exist[t]);
    }
    Ok(DetectionTrack {
        detection_id: d_exist.detection_id.clone(),
        video_id: d_exist.video_id.clone(),
        score: d_new.score,
        masks: MaskTrack::new(frames)?,
        pred_iou: d_new.pred_iou.clone(),
        selected: Some(selected),
    })
}

/// Folds one new detection into a video's stored tracks.
///
/// Among several overlapping tracks the one with the highest best-frame IoU
/// wins (ties by ascending id). The fused result is not re-checked against
/// the remaining tracks.
pub fn insert(
    tracks: &mut Vec<StoredTrack>,
    d_new: DetectionTrack,
    round: u32,
) -> Result<FusionOutcome> {
    let mut partner: Option<(usize, f64)> = None;
    for (i, stored) in tracks.iter().enumerate() {
        if !overlap_phi(&d_new, &stored.track)? {
            continue;
        }
        let iou = best_frame_iou(&d_new.masks, &stored.track.masks)?.unwrap_or(0.0);
        let better = match partner {
            None => true,
            Some((j, best)) => {
                iou > best
                    || (iou == best
                        && stored.track.detection_id < tracks[j].track.detection_id)
            }
        };
        if better {
            partner = Some((i, iou));
        }
    }
    match partner {
        Some((i, _)) => {
            let merged = fuse(&d_new, &tracks[i].track)?;
            tracks[i].track = merged.clone();
            Ok(FusionOutcome {
                kind: FusionKind::FusedWith(merged.detection_id.clone()),
                merged_track: merged,
            })
        }
        None => {
            if let Some(dup) = tracks
                .iter()
                .find(|s| s.track.detection_id == d_new.detection_id)
            {
                return Err(Error::DuplicateDetectionId {
                    video_id: dup.track.video_id.clone(),
                    detection_id: d_new.detection_id,
                });
            }
            tracks.push(StoredTrack {
                track: d_new.clone(),
                origin_round: round,
            });
            Ok(FusionOutcome {
                kind: FusionKind::InsertedNewTrack,
                merged_track: d_new,
            })
        }
    }
}

fn check_unique_ids(set: &DetectionSet) -> Result<()> {
    let mut seen = BTreeSet::new();
    for d in &set.detections {
        if !seen.insert(d.detection_id.as_str()) {
            return Err(Error::DuplicateDetectionId {
                video_id: set.video_id.clone(),
                detection_id: d.detection_id.clone(),
            });
        }
    }
    Ok(())
}

/// Produces the next round's dataset from the retained detections.
///
/// Empty retained sets are skipped, so a video only enters the dataset once
/// it contributes at least one detection.
pub fn augment(
    dataset: &TrainingDataset,
    retained: &[DetectionSet],
) -> Result<(TrainingDataset, AugmentStats, Vec<FusionOutcome>)> {
    let round = dataset.round + 1;
    let mut next = dataset.clone();
    next.round = round;
    let mut stats = AugmentStats::default();
    let mut outcomes = Vec::new();

    for set in retained {
        set.validate()?;
        check_unique_ids(set)?;
        if set.is_empty() {
            continue;
        }
        match next.videos.get_mut(&set.video_id) {
            None => {
                stats.new_videos += 1;
                stats.new_video_tracks += set.len();
                let tracks = set
                    .detections
                    .iter()
                    .map(|d| {
                        flags(d)?;
                        outcomes.push(FusionOutcome {
                            kind: FusionKind::InsertedNewVideo,
                            merged_track: d.clone(),
                        });
                        Ok(StoredTrack {
                            track: d.clone(),
                            origin_round: round,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                next.videos.insert(
                    set.video_id.clone(),
                    VideoEntry {
                        provenance: Provenance::Pseudo,
                        num_frames: set.num_frames,
                        tracks,
                    },
                );
            }
            Some(entry) => {
                if entry.num_frames != set.num_frames {
                    return Err(Error::LengthMismatch(set.num_frames, entry.num_frames));
                }
                let mut incoming: Vec<&DetectionTrack> = set.detections.iter().collect();
                incoming.sort_by(|a, b| a.detection_id.cmp(&b.detection_id));
                for d in incoming {
                    let outcome = insert(&mut entry.tracks, d.clone(), round)?;
                    match outcome.kind {
                        FusionKind::FusedWith(_) => stats.fused_tracks += 1,
                        _ => stats.inserted_tracks += 1,
                    }
                    outcomes.push(outcome);
                }
            }
        }
    }
    Ok((next, stats, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{rle_encode, Bitmap, FrameMask};
    use alloc::vec;

    fn blob(cols: core::ops::Range<u32>) -> FrameMask {
        rle_encode(&Bitmap::from_fn(2, 12, |_, c| cols.contains(&c)).unwrap())
    }

    fn det(id: &str, frames: Vec<FrameMask>, sel: Vec<bool>) -> DetectionTrack {
        let masks = MaskTrack::new(frames.into_iter().map(Some).collect()).unwrap();
        DetectionTrack::new(id, "v", 0.9, masks).with_selected(sel)
    }

    #[test]
    fn phi_fixtures() {
        let a = det("a", vec![blob(0..4), blob(0..4)], vec![true, true]);
        let b = det("b", vec![blob(6..10), blob(6..10)], vec![true, true]);
        assert!(overlap_phi(&a, &a).unwrap());
        assert!(!overlap_phi(&a, &b).unwrap());
        // frame 1: 2 of 4 columns shared -> 2/4 = 0.5 exactly
        let c = det("c", vec![blob(6..10), blob(0..2)], vec![true, true]);
        assert!(overlap_phi(&c, &a).unwrap());
        let mut w = a.clone();
        w.video_id = "w".into();
        assert!(matches!(overlap_phi(&w, &a), Err(Error::VideoMismatch { .. })));
    }

    #[test]
    fn fuse_case_table() {
        let exist = det("e", vec![blob(0..4), blob(0..4)], vec![true, false]);
        let new = det("n", vec![blob(1..5), blob(1..5)], vec![false, true]);
        let f = fuse(&new, &exist).unwrap();
        assert_eq!(f.masks.frames(), &[Some(blob(0..4)), Some(blob(1..5))]);
        assert_eq!(f.selected, Some(vec![true, true]));
        assert_eq!(f.detection_id, "e");

        let unselected = det("e", vec![blob(0..4), blob(0..4)], vec![false, false]);
        assert_eq!(fuse(&new, &unselected).unwrap().masks, new.masks);

        let both = det("e", vec![blob(0..4), blob(0..4)], vec![true, true]);
        let new_all = det("n", vec![blob(1..5), blob(1..5)], vec![true, true]);
        let f = fuse(&new_all, &both).unwrap();
        assert_eq!(f.masks, new_all.masks);
        assert_eq!(f.selected, Some(vec![true, true]));
    }

    #[test]
    fn insert_cases() {
        let mut list = Vec::new();
        let a = det("a", vec![blob(0..4)], vec![true]);
        assert_eq!(insert(&mut list, a.clone(), 1).unwrap().kind, FusionKind::InsertedNewTrack);
        assert_eq!(list.len(), 1);

        let b = det("b", vec![blob(6..10)], vec![true]);
        insert(&mut list, b, 1).unwrap();
        assert_eq!(list.len(), 2);

        let c = det("c", vec![blob(0..3)], vec![false]);
        let out = insert(&mut list, c, 2).unwrap();
        assert_eq!(out.kind, FusionKind::FusedWith("a".into()));
        assert_eq!(list.len(), 2);
        assert_eq!(list[0].track.detection_id, "a");
        assert_eq!(list[0].origin_round, 1);
    }

    #[test]
    fn insert_prefers_best_overlap() {
        let mut list = vec![
            StoredTrack { track: det("x", vec![blob(0..4)], vec![true]), origin_round: 0 },
            StoredTrack { track: det("y", vec![blob(1..5)], vec![true]), origin_round: 0 },
        ];
        // vs x: 3/5, vs y: 4/4
        let n = det("n", vec![blob(1..5)], vec![true]);
        assert_eq!(insert(&mut list, n, 1).unwrap().kind, FusionKind::FusedWith("y".into()));
        // equal IoU to both -> lower id
        let mut list = vec![
            StoredTrack { track: det("q", vec![blob(2..6)], vec![true]), origin_round: 0 },
            StoredTrack { track: det("p", vec![blob(0..4)], vec![true]), origin_round: 0 },
        ];
        let n = det("n", vec![blob(1..5)], vec![true]);
        assert_eq!(insert(&mut list, n, 1).unwrap().kind, FusionKind::FusedWith("p".into()));
    }

    #[test]
    fn augment_counts() {
        let mut ds = TrainingDataset::new();
        let existing = det("e0", vec![blob(0..4)], vec![true]);
        let (ds1, _, _) = augment(&ds, &[DetectionSet::new("v", 1).with_detections(vec![existing])]).unwrap();
        assert_eq!(ds1.round, 1);
        assert_eq!(ds1.videos["v"].provenance, Provenance::Pseudo);

        let news = vec![
            det("n1", vec![blob(0..4)], vec![true]),
            det("n2", vec![blob(5..8)], vec![true]),
            det("n3", vec![blob(9..12)], vec![true]),
        ];
        let (ds2, stats, _) = augment(&ds1, &[DetectionSet::new("v", 1).with_detections(news)]).unwrap();
        assert_eq!(ds2.videos["v"].tracks.len(), 3);
        assert_eq!(stats.fused_tracks, 1);
        assert_eq!(stats.inserted_tracks, 2);

        let (same, _, _) = augment(&ds2, &[]).unwrap();
        assert_eq!(same.round, 3);
        assert_eq!(same.videos, ds2.videos);

        ds.add_base_video("syn", 1, vec![MaskTrack::new(vec![Some(blob(0..4))]).unwrap()]).unwrap();
        assert_eq!(ds.count_videos(Provenance::Base), 1);
    }

    #[test]
    fn augment_rejects_duplicates() {
        let ds = TrainingDataset::new();
        let d = det("a", vec![blob(0..4)], vec![true]);
        let set = DetectionSet::new("v", 1).with_detections(vec![d.clone(), d]);
        assert!(matches!(augment(&ds, &[set]), Err(Error::DuplicateDetectionId { .. })));
    }
}
