#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vistrain_core::mask::{rle_decode, rle_encode, Bitmap, FrameMask, MaskTrack};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Axis-aligned rectangle mask, possibly empty.
pub fn rect(h: u32, w: u32, r0: u32, c0: u32, rh: u32, cw: u32) -> FrameMask {
    rle_encode(&Bitmap::from_fn(h, w, |r, c| r >= r0 && r < r0 + rh && c >= c0 && c < c0 + cw).unwrap())
}

/// A random track of small rectangles on an `h` x `w` grid; frames are
/// absent with probability 0.2.
pub fn random_track<R: Rng>(rng: &mut R, frames: usize, h: u32, w: u32) -> MaskTrack {
    let r0 = rng.random_range(0..h);
    let c0 = rng.random_range(0..w);
    let masks = (0..frames)
        .map(|_| {
            if rng.random_bool(0.2) {
                return None;
            }
            let dr = rng.random_range(0..3);
            let dc = rng.random_range(0..3);
            let rh = rng.random_range(1..=h / 2);
            let cw = rng.random_range(1..=w / 2);
            Some(rect(h, w, (r0 + dr).min(h - 1), (c0 + dc).min(w - 1), rh, cw))
        })
        .collect();
    MaskTrack::new(masks).unwrap()
}

/// Pixel-enumeration IoU on decoded bitmaps: `None` when both are empty.
pub fn naive_frame_iou(a: Option<&FrameMask>, b: Option<&FrameMask>, h: u32, w: u32) -> Option<f64> {
    let decode = |m: Option<&FrameMask>| m.map(rle_decode).unwrap_or_else(|| Bitmap::zeros(h, w).unwrap());
    let (a, b) = (decode(a), decode(b));
    let (mut i, mut u) = (0u64, 0u64);
    for (&x, &y) in a.as_column_major().iter().zip(b.as_column_major()) {
        i += (x && y) as u64;
        u += (x || y) as u64;
    }
    (u > 0).then(|| i as f64 / u as f64)
}

pub fn naive_track_iou(a: &MaskTrack, b: &MaskTrack, h: u32, w: u32) -> f64 {
    let decode = |m: Option<&FrameMask>| m.map(rle_decode).unwrap_or_else(|| Bitmap::zeros(h, w).unwrap());
    let (mut i, mut u) = (0u64, 0u64);
    for t in 0..a.len() {
        let (x, y) = (decode(a.frame(t)), decode(b.frame(t)));
        for (&p, &q) in x.as_column_major().iter().zip(y.as_column_major()) {
            i += (p && q) as u64;
            u += (p || q) as u64;
        }
    }
    if u == 0 {
        1.0
    } else {
        i as f64 / u as f64
    }
}
