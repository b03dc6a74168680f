//! Binary masks, the column-major run-length codec, and IoU/area primitives.
//!
//! Run lengths follow the uncompressed COCO convention: pixels are scanned
//! column by column, runs alternate background/foreground, and the first run
//! is background (possibly zero-length). Overlap statistics are computed
//! directly on the runs; [`rle_decode`] exists for interop and as a test oracle.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A dense binary grid stored column-major: pixel `(row, col)` lives at
/// `col * height + row`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Bitmap {
    height: u32,
    width: u32,
    bits: Vec<bool>,
}

impl Bitmap {
    pub fn zeros(height: u32, width: u32) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidBitmap);
        }
        Ok(Self {
            height,
            width,
            bits: vec![false; height as usize * width as usize],
        })
    }

    /// Builds a bitmap from row-major rows; every row must have the same length.
    pub fn from_rows<R: AsRef<[bool]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        if height == 0 || width == 0 || rows.iter().any(|r| r.as_ref().len() != width) {
            return Err(Error::InvalidBitmap);
        }
        let mut out = Self::zeros(height as u32, width as u32)?;
        for (row, r) in rows.iter().enumerate() {
            for (col, &v) in r.as_ref().iter().enumerate() {
                out.set(row as u32, col as u32, v);
            }
        }
        Ok(out)
    }

    pub fn from_fn(height: u32, width: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        let mut out = Self::zeros(height, width)?;
        for col in 0..width {
            for row in 0..height {
                out.set(row, col, f(row, col));
            }
        }
        Ok(out)
    }

    /// Wraps column-major pixel data.
    pub fn from_column_major(height: u32, width: u32, bits: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || bits.len() != height as usize * width as usize {
            return Err(Error::InvalidBitmap);
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.bits[col as usize * self.height as usize + row as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        self.bits[col as usize * self.height as usize + row as usize] = value;
    }

    pub fn as_column_major(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }
}

/// One object's mask in one frame, run-length encoded.
///
/// Counts are kept canonical: no zero-length runs except a leading
/// background run, and no trailing zero run.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FrameMask {
    height: u32,
    width: u32,
    counts: Vec<u32>,
}

impl FrameMask {
    /// Validates run lengths against the frame size and canonicalizes them.
    pub fn from_counts(height: u32, width: u32, counts: Vec<u32>) -> Result<Self> {
        let expected = height as u64 * width as u64;
        let actual: u64 = counts.iter().map(|&c| c as u64).sum();
        if actual != expected {
            return Err(Error::RleLength {
                height,
                width,
                expected,
                actual,
            });
        }
        Ok(Self {
            height,
            width,
            counts: canonicalize(&counts),
        })
    }

    pub fn empty(height: u32, width: u32) -> Self {
        Self {
            height,
            width,
            counts: vec![height.saturating_mul(width)],
        }
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn area(&self) -> u64 {
        mask_area(self)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.len() < 2
    }

    /// Foreground intervals `[start, end)` in column-major pixel order.
    pub fn foreground_runs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += c as u64;
            (i % 2 == 1).then_some((start, pos))
        })
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::DimensionMismatch(
                self.height,
                self.width,
                other.height,
                other.width,
            ));
        }
        Ok(())
    }
}

fn canonicalize(counts: &[u32]) -> Vec<u32> {
    // Runs alternate bg/fg; `out.len() % 2` tells which kind the next run is.
    let mut out: Vec<u32> = Vec::with_capacity(counts.len());
    let mut next_is_fg = false;
    for &c in counts {
        if c == 0 {
            next_is_fg = !next_is_fg;
            continue;
        }
        let want_fg = out.len() % 2 == 1;
        if want_fg == next_is_fg {
            out.push(c);
        } else if out.is_empty() {
            // leading foreground run: insert the empty background run
            out.push(0);
            out.push(c);
        } else {
            *out.last_mut().unwrap() += c;
        }
        next_is_fg = !next_is_fg;
    }
    if out.is_empty() {
        out.push(0);
    }
    out
}

/// Encodes a bitmap in column-major order.
pub fn rle_encode(bitmap: &Bitmap) -> FrameMask {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &bit in &bitmap.bits {
        if bit != current {
            counts.push(run);
            run = 0;
            current = bit;
        }
        run += 1;
    }
    counts.push(run);
    FrameMask {
        height: bitmap.height,
        width: bitmap.width,
        counts,
    }
}

pub fn rle_decode(mask: &FrameMask) -> Bitmap {
    let mut bits = Vec::with_capacity(mask.height as usize * mask.width as usize);
    for (i, &c) in mask.counts.iter().enumerate() {
        bits.extend(core::iter::repeat_n(i % 2 == 1, c as usize));
    }
    Bitmap {
        height: mask.height,
        width: mask.width,
        bits,
    }
}

/// Number of foreground pixels: the sum of odd-indexed runs.
pub fn mask_area(mask: &FrameMask) -> u64 {
    mask.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
}

/// Returns `(|a ∩ b|, |a ∪ b|)` by sweeping both run lists.
pub fn intersection_union(a: &FrameMask, b: &FrameMask) -> Result<(u64, u64)> {
    a.same_shape(b)?;
    let mut ra = a.foreground_runs().peekable();
    let mut rb = b.foreground_runs().peekable();
    let mut inter = 0u64;
    while let (Some(&(sa, ea)), Some(&(sb, eb))) = (ra.peek(), rb.peek()) {
        let lo = sa.max(sb);
        let hi = ea.min(eb);
        if hi > lo {
            inter += hi - lo;
        }
        if ea <= eb {
            ra.next();
        } else {
            rb.next();
        }
    }
    Ok((inter, a.area() + b.area() - inter))
}

/// Frame IoU. `None` when both masks are empty (0/0 is left to the caller).
pub fn frame_iou(a: &FrameMask, b: &FrameMask) -> Result<Option<f64>> {
    let (inter, union) = intersection_union(a, b)?;
    Ok((union > 0).then(|| inter as f64 / union as f64))
}

/// A mask sequence over a video's frames; `None` means the object is absent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct MaskTrack {
    frames: Vec<Option<FrameMask>>,
}

impl MaskTrack {
    /// All present frames must share one height/width.
    pub fn new(frames: Vec<Option<FrameMask>>) -> Result<Self> {
        let mut dims: Option<(u32, u32)> = None;
        for m in frames.iter().flatten() {
            match dims {
                None => dims = Some((m.height, m.width)),
                Some((h, w)) if (h, w) != (m.height, m.width) => {
                    return Err(Error::DimensionMismatch(h, w, m.height, m.width))
                }
                _ => {}
            }
        }
        Ok(Self { frames })
    }

    /// A track with no object in any of `len` frames.
    pub fn absent(len: usize) -> Self {
        Self {
            frames: vec![None; len],
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[Option<FrameMask>] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> Option<&FrameMask> {
        self.frames.get(t).and_then(Option::as_ref)
    }

    pub fn into_frames(self) -> Vec<Option<FrameMask>> {
        self.frames
    }

    /// Foreground area in frame `t`; absent frames have area 0.
    pub fn area(&self, t: usize) -> u64 {
        self.frame(t).map_or(0, mask_area)
    }

    /// True when no frame has any foreground pixel.
    pub fn is_blank(&self) -> bool {
        self.frames.iter().flatten().all(FrameMask::is_empty)
    }

    pub fn dims(&self) -> Option<(u32, u32)> {
        self.frames.iter().flatten().next().map(|m| (m.height, m.width))
    }
}

fn frame_pair_stats(a: Option<&FrameMask>, b: Option<&FrameMask>) -> Result<(u64, u64)> {
    match (a, b) {
        (Some(a), Some(b)) => intersection_union(a, b),
        (Some(m), None) | (None, Some(m)) => Ok((0, m.area())),
        (None, None) => Ok((0, 0)),
    }
}

fn same_len(a: &MaskTrack, b: &MaskTrack) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// Per-frame IoU across two tracks; absent frames count as empty masks.
pub fn frame_ious(a: &MaskTrack, b: &MaskTrack) -> Result<Vec<Option<f64>>> {
    same_len(a, b)?;
    a.frames
        .iter()
        .zip(&b.frames)
        .map(|(fa, fb)| {
            let (inter, union) = frame_pair_stats(fa.as_ref(), fb.as_ref())?;
            Ok((union > 0).then(|| inter as f64 / union as f64))
        })
        .collect()
}

/// Summed intersection over summed union. Two entirely empty tracks score 1.
pub fn track_iou(a: &MaskTrack, b: &MaskTrack) -> Result<f64> {
    same_len(a, b)?;
    let mut inter = 0u64;
    let mut union = 0u64;
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        let (i, u) = frame_pair_stats(fa.as_ref(), fb.as_ref())?;
        inter += i;
        union += u;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// True iff some frame reaches `thresh` IoU. Frames where both masks are
/// empty are skipped.
pub fn any_frame_overlap(a: &MaskTrack, b: &MaskTrack, thresh: f64) -> Result<bool> {
    same_len(a, b)?;
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        let (inter, union) = frame_pair_stats(fa.as_ref(), fb.as_ref())?;
        if union > 0 && inter as f64 / union as f64 >= thresh {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Largest defined per-frame IoU, `None` if every frame pair is empty.
pub fn best_frame_iou(a: &MaskTrack, b: &MaskTrack) -> Result<Option<f64>> {
    Ok(frame_ious(a, b)?
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |m| m.max(v)))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&[u8]]) -> Bitmap {
        let rows: Vec<Vec<bool>> = rows.iter().map(|r| r.iter().map(|&v| v != 0).collect()).collect();
        Bitmap::from_rows(&rows).unwrap()
    }

    fn mask(rows: &[&[u8]]) -> FrameMask {
        rle_encode(&grid(rows))
    }

    #[test]
    fn encode_fixtures() {
        assert_eq!(mask(&[&[0, 0], &[0, 0]]).counts(), &[4]);
        assert_eq!(mask(&[&[1, 1], &[1, 1]]).counts(), &[0, 4]);
        assert_eq!(mask(&[&[0, 1], &[0, 0]]).counts(), &[2, 1, 1]);
    }

    #[test]
    fn decode_fixtures() {
        let zero = FrameMask::from_counts(2, 2, vec![4]).unwrap();
        assert_eq!(rle_decode(&zero), grid(&[&[0, 0], &[0, 0]]));
        let one = FrameMask::from_counts(2, 2, vec![0, 4]).unwrap();
        assert_eq!(rle_decode(&one), grid(&[&[1, 1], &[1, 1]]));
    }

    #[test]
    fn decode_rejects_bad_sum() {
        assert!(matches!(
            FrameMask::from_counts(2, 2, vec![1, 2]),
            Err(Error::RleLength { expected: 4, actual: 3, .. })
        ));
    }

    #[test]
    fn interior_zero_runs_are_merged() {
        let m = FrameMask::from_counts(2, 3, vec![1, 0, 2, 3]).unwrap();
        assert_eq!(m.counts(), &[3, 3]);
        let m = FrameMask::from_counts(2, 2, vec![0, 1, 0, 3]).unwrap();
        assert_eq!(m.counts(), &[0, 4]);
        let m = FrameMask::from_counts(2, 2, vec![2, 2, 0]).unwrap();
        assert_eq!(m.counts(), &[2, 2]);
    }

    #[test]
    fn frame_iou_fixtures() {
        let a = mask(&[&[1, 1], &[0, 0]]);
        let b = mask(&[&[0, 1], &[0, 1]]);
        assert_eq!(frame_iou(&a, &a).unwrap(), Some(1.0));
        assert_eq!(frame_iou(&a, &mask(&[&[0, 0], &[1, 1]])).unwrap(), Some(0.0));
        assert_eq!(frame_iou(&a, &b).unwrap(), Some(1.0 / 3.0));
        let e = FrameMask::empty(2, 2);
        assert_eq!(frame_iou(&e, &e).unwrap(), None);
        assert_eq!(frame_iou(&a, &e).unwrap(), Some(0.0));
    }

    #[test]
    fn frame_iou_dimension_mismatch() {
        assert!(matches!(
            frame_iou(&FrameMask::empty(2, 2), &FrameMask::empty(2, 3)),
            Err(Error::DimensionMismatch(2, 2, 2, 3))
        ));
    }

    #[test]
    fn track_iou_fixtures() {
        // frame 1: |∩| = 2, |∪| = 4; frame 2: |∩| = 1, |∪| = 2
        let a = MaskTrack::new(vec![
            Some(mask(&[&[1, 1, 1], &[0, 0, 0]])),
            Some(mask(&[&[1, 1, 0], &[0, 0, 0]])),
        ])
        .unwrap();
        let b = MaskTrack::new(vec![
            Some(mask(&[&[0, 1, 1], &[0, 0, 1]])),
            Some(mask(&[&[1, 0, 0], &[0, 0, 0]])),
        ])
        .unwrap();
        assert_eq!(track_iou(&a, &b).unwrap(), 0.5);
        assert_eq!(track_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(track_iou(&a, &MaskTrack::absent(2)).unwrap(), 0.0);
        assert_eq!(track_iou(&MaskTrack::absent(2), &MaskTrack::absent(2)).unwrap(), 1.0);
        assert!(matches!(
            track_iou(&a, &MaskTrack::absent(3)),
            Err(Error::LengthMismatch(2, 3))
        ));
    }

    #[test]
    fn any_frame_overlap_fixtures() {
        let blob = |c: u32| {
            Some(rle_encode(&Bitmap::from_fn(4, 10, |_, col| col >= c && col < c + 5).unwrap()))
        };
        let none = || Some(FrameMask::empty(4, 10));
        let a = MaskTrack::new(vec![blob(0), blob(0), blob(0), None]).unwrap();
        assert!(any_frame_overlap(&a, &a, 0.5).unwrap());
        let far = MaskTrack::new(vec![blob(5), blob(5), blob(5), None]).unwrap();
        assert!(!any_frame_overlap(&a, &far, 0.5).unwrap());
        // Only frame 2 overlaps: 3 columns inside 5 columns, IoU 12/20.
        let wide = Some(rle_encode(&Bitmap::from_fn(4, 10, |_, col| col < 5).unwrap()));
        let narrow = Some(rle_encode(&Bitmap::from_fn(4, 10, |_, col| col < 3).unwrap()));
        let x = MaskTrack::new(vec![none(), blob(0), wide, none()]).unwrap();
        let y = MaskTrack::new(vec![none(), blob(5), narrow, none()]).unwrap();
        assert_eq!(frame_ious(&x, &y).unwrap()[2], Some(0.6));
        assert!(any_frame_overlap(&x, &y, 0.5).unwrap());
        assert!(!any_frame_overlap(&x, &y, 0.61).unwrap());
    }

    #[test]
    fn area_fixtures() {
        assert_eq!(mask_area(&FrameMask::empty(4, 4)), 0);
        assert_eq!(mask_area(&FrameMask::from_counts(4, 4, vec![0, 16]).unwrap()), 16);
        assert_eq!(mask_area(&FrameMask::from_counts(2, 2, vec![2, 1, 1]).unwrap()), 1);
    }
}
