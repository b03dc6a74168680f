mod common;

use rand::Rng;
use vistrain_core::dataset::{augment, fuse, Provenance, TrainingDataset};
use vistrain_core::mask::MaskTrack;
use vistrain_core::nms::{DetectionSet, DetectionTrack};

const H: u32 = 8;
const W: u32 = 8;
const FRAMES: usize = 4;

fn random_flags<R: Rng>(rng: &mut R) -> Vec<bool> {
    (0..FRAMES).map(|_| rng.random_bool(0.6)).collect()
}

/// A dataset with two base videos and one pseudo video, and a batch of
/// retained detections that mixes copies of stored tracks, fresh tracks and
/// unseen videos.
fn fixture(seed: u64) -> (TrainingDataset, Vec<DetectionSet>) {
    let mut rng = common::rng(seed);
    let mut ds = TrainingDataset::new();
    for v in 0..2 {
        let tracks = (0..rng.random_range(0..=3)).map(|_| common::random_track(&mut rng, FRAMES, H, W)).collect();
        ds.add_base_video(format!("b{v}"), FRAMES, tracks).unwrap();
    }
    let seedset = DetectionSet::new("p0", FRAMES).with_detections(
        (0..rng.random_range(1..=3))
            .map(|i| {
                DetectionTrack::new(format!("r0-{i}"), "p0", 0.9, common::random_track(&mut rng, FRAMES, H, W))
                    .with_selected(random_flags(&mut rng))
            })
            .collect(),
    );
    let (ds, _, _) = augment(&ds, &[seedset]).unwrap();

    let mut batch = Vec::new();
    for vid in ["b0", "b1", "p0", "n0", "n1"] {
        let stored: Vec<MaskTrack> = ds
            .videos
            .get(vid)
            .map(|e| e.detections().map(|d| d.masks.clone()).collect())
            .unwrap_or_default();
        let dets = (0..rng.random_range(0..=4))
            .map(|i| {
                let masks = match stored.get(rng.random_range(0..=stored.len())) {
                    Some(s) => {
                        let mut f = s.frames().to_vec();
                        let t = rng.random_range(0..FRAMES);
                        f[t] = common::random_track(&mut rng, 1, H, W).frames()[0].clone();
                        MaskTrack::new(f).unwrap()
                    }
                    None => common::random_track(&mut rng, FRAMES, H, W),
                };
                DetectionTrack::new(format!("r1-{i}"), vid, rng.random_range(0.3..1.0), masks)
                    .with_pred_iou(vec![0.5; FRAMES])
                    .with_selected(random_flags(&mut rng))
            })
            .collect();
        batch.push(DetectionSet::new(vid, FRAMES).with_detections(dets));
    }
    (ds, batch)
}

fn naive_phi(a: &MaskTrack, b: &MaskTrack) -> bool {
    (0..FRAMES).any(|t| common::naive_frame_iou(a.frame(t), b.frame(t), H, W).is_some_and(|v| v >= 0.5))
}

fn naive_best(a: &MaskTrack, b: &MaskTrack) -> f64 {
    (0..FRAMES).filter_map(|t| common::naive_frame_iou(a.frame(t), b.frame(t), H, W)).fold(0.0, f64::max)
}

struct Stored {
    id: String,
    masks: MaskTrack,
    flags: Vec<bool>,
}

/// Replays the protocol over plain vectors; returns the expected stored
/// tracks per known video and the (fused, inserted, new-video) counts.
fn oracle(ds: &TrainingDataset, batch: &[DetectionSet]) -> (Vec<(String, Vec<Stored>)>, (usize, usize, usize)) {
    let (mut fused, mut inserted, mut new_video) = (0, 0, 0);
    let mut out = Vec::new();
    for set in batch {
        if set.is_empty() {
            continue;
        }
        let Some(entry) = ds.videos.get(&set.video_id) else {
            new_video += set.len();
            continue;
        };
        let mut stored: Vec<Stored> = entry
            .detections()
            .map(|d| Stored { id: d.detection_id.clone(), masks: d.masks.clone(), flags: d.selected.clone().unwrap() })
            .collect();
        let mut order: Vec<&DetectionTrack> = set.detections.iter().collect();
        order.sort_by(|a, b| a.detection_id.cmp(&b.detection_id));
        for d in order {
            let mut partner: Option<(usize, f64)> = None;
            for (i, s) in stored.iter().enumerate() {
                if !naive_phi(&d.masks, &s.masks) {
                    continue;
                }
                let v = naive_best(&d.masks, &s.masks);
                if partner.is_none_or(|(j, b)| v > b || (v == b && s.id < stored[j].id)) {
                    partner = Some((i, v));
                }
            }
            let s_new = d.selected.as_ref().unwrap();
            match partner {
                Some((i, _)) => {
                    let s = &mut stored[i];
                    let frames = (0..FRAMES)
                        .map(|t| if s.flags[t] && !s_new[t] { s.masks.frames()[t].clone() } else { d.masks.frames()[t].clone() })
                        .collect();
                    s.masks = MaskTrack::new(frames).unwrap();
                    s.flags = s.flags.iter().zip(s_new).map(|(&a, &b)| a || b).collect();
                    fused += 1;
                }
                None => {
                    stored.push(Stored { id: d.detection_id.clone(), masks: d.masks.clone(), flags: s_new.clone() });
                    inserted += 1;
                }
            }
        }
        out.push((set.video_id.clone(), stored));
    }
    (out, (fused, inserted, new_video))
}

#[test]
fn augment_matches_replayed_protocol_on_50_fixtures() {
    let mut fusions_seen = 0;
    for seed in 0..50 {
        let (ds, batch) = fixture(seed);
        let (next, stats, outcomes) = augment(&ds, &batch).unwrap();
        let (expect, (fused, inserted, new_video)) = oracle(&ds, &batch);

        assert_eq!((stats.fused_tracks, stats.inserted_tracks, stats.new_video_tracks), (fused, inserted, new_video), "seed {seed}");
        assert_eq!(next.count_tracks(), ds.count_tracks() + inserted + new_video, "seed {seed}");
        assert_eq!(outcomes.len(), fused + inserted + new_video);
        assert_eq!(next.round, ds.round + 1);
        fusions_seen += fused;

        for (vid, stored) in &expect {
            let got: Vec<&DetectionTrack> = next.videos[vid].detections().collect();
            assert_eq!(got.len(), stored.len(), "seed {seed} {vid}");
            for (g, s) in got.iter().zip(stored) {
                assert_eq!(g.detection_id, s.id);
                assert_eq!(g.masks, s.masks, "seed {seed} {vid} {}", s.id);
                assert_eq!(g.selected.as_ref().unwrap(), &s.flags);
            }
        }
        for set in &batch {
            if !set.is_empty() && !ds.videos.contains_key(&set.video_id) {
                assert_eq!(next.videos[&set.video_id].provenance, Provenance::Pseudo);
            }
        }

        // base videos and their tracks survive
        for (vid, entry) in &ds.videos {
            let after = &next.videos[vid];
            assert_eq!(after.provenance, entry.provenance);
            for old in entry.detections() {
                let new = after.detections().find(|d| d.detection_id == old.detection_id).unwrap();
                let (a, b) = (old.selected.as_ref().unwrap(), new.selected.as_ref().unwrap());
                assert!(a.iter().zip(b).all(|(&x, &y)| !x || y), "flags only grow, seed {seed}");
            }
        }
    }
    assert!(fusions_seen > 20, "fixtures exercise fusion: {fusions_seen}");
}

#[test]
fn merge_case_table() {
    let mut rng = common::rng(7);
    let a = common::random_track(&mut rng, 4, H, W);
    let b = common::random_track(&mut rng, 4, H, W);
    // (s_exist, s_new) per frame: every combination once
    let s_exist = vec![false, false, true, true];
    let s_new = vec![false, true, false, true];
    let exist = DetectionTrack::new("old", "v", 0.4, a.clone()).with_selected(s_exist);
    let new = DetectionTrack::new("new", "v", 0.8, b.clone()).with_pred_iou(vec![0.1; 4]).with_selected(s_new);
    let m = fuse(&new, &exist).unwrap();
    let src = [&b, &b, &a, &b];
    for t in 0..4 {
        assert_eq!(m.masks.frame(t), src[t].frame(t), "frame {t}");
    }
    assert_eq!(m.selected.unwrap(), vec![false, true, true, true]);
    assert_eq!((m.detection_id.as_str(), m.score), ("old", 0.8));
    assert_eq!(m.pred_iou, Some(vec![0.1; 4]));
}

#[test]
fn replay_is_flag_idempotent() {
    for seed in 0..50 {
        let mut rng = common::rng(seed);
        let d = DetectionTrack::new("x", "v", 0.7, common::random_track(&mut rng, FRAMES, H, W))
            .with_selected(random_flags(&mut rng));
        assert_eq!(fuse(&d, &d).unwrap(), d);

        // replaying a merged result onto itself changes nothing
        let other = DetectionTrack::new("y", "v", 0.2, common::random_track(&mut rng, FRAMES, H, W))
            .with_selected(random_flags(&mut rng));
        let m = fuse(&d, &other).unwrap();
        assert_eq!(fuse(&m, &m).unwrap(), m);
    }
    for seed in 0..50 {
        let (ds, batch) = fixture(seed);
        let (once, _, _) = augment(&ds, &batch).unwrap();
        let (twice, _, _) = augment(&once, &batch).unwrap();
        for (vid, entry) in &once.videos {
            for old in entry.detections() {
                let new = twice.videos[vid].detections().find(|d| d.detection_id == old.detection_id).unwrap();
                let (a, b) = (old.selected.as_ref().unwrap(), new.selected.as_ref().unwrap());
                assert!(a.iter().zip(b).all(|(&x, &y)| !x || y), "seed {seed}");
            }
        }
    }
}
