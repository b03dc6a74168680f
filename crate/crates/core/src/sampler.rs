//! Training-time sampling: eligible frames, 3-frame clips, and the 50/50
//! choice between synthetic and pseudo-labeled videos.
//!
//! The generator is pinned to ChaCha8 seeded from a `u64`, so a given seed
//! yields the same plan stream on every platform.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Provenance, TrainingDataset};
use crate::error::{Error, Result};
use crate::nms::DetectionTrack;

/// Frames per training clip.
pub const CLIP_LEN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    Base,
    Pseudo,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Base => "base",
            Source::Pseudo => "pseudo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePlan {
    pub video_id: String,
    /// Strictly increasing.
    pub frame_indices: [usize; CLIP_LEN],
    pub source: Source,
}

/// Frames in which every detection of the video is selected. A video with no
/// detections has every frame eligible.
pub fn eligible_frames<'a>(
    tracks: impl IntoIterator<Item = &'a DetectionTrack>,
    num_frames: usize,
) -> Result<Vec<usize>> {
    let mut ok = alloc::vec![true; num_frames];
    for d in tracks {
        let flags = d
            .selected
            .as_ref()
            .ok_or_else(|| Error::SelectionUnset(d.detection_id.clone()))?;
        if flags.len() != num_frames {
            return Err(Error::LengthMismatch(flags.len(), num_frames));
        }
        for (o, &f) in ok.iter_mut().zip(flags) {
            *o &= f;
        }
    }
    Ok((0..num_frames).filter(|&t| ok[t]).collect())
}

/// Draws three distinct eligible frames uniformly, returned sorted.
pub fn sample_frames<R: Rng + ?Sized>(eligible: &[usize], rng: &mut R) -> Result<[usize; CLIP_LEN]> {
    if eligible.len() < CLIP_LEN {
        return Err(Error::TooFewEligibleFrames(eligible.len()));
    }
    let picks = index::sample(rng, eligible.len(), CLIP_LEN);
    let mut out = [0usize; CLIP_LEN];
    for (o, i) in out.iter_mut().zip(picks.iter()) {
        *o = eligible[i];
    }
    out.sort_unstable();
    Ok(out)
}

/// Fair coin between the two sources; always `Base` when there is nothing
/// pseudo-labeled to draw from.
pub fn choose_source<R: Rng + ?Sized>(rng: &mut R, pseudo_available: bool) -> Source {
    if !pseudo_available {
        return Source::Base;
    }
    if rng.random_bool(0.5) {
        Source::Pseudo
    } else {
        Source::Base
    }
}

/// Owns the generator and the per-source pools of sampleable videos.
#[derive(Debug, Clone)]
pub struct Sampler {
    base: Vec<(String, Vec<usize>)>,
    pseudo: Vec<(String, Vec<usize>)>,
    rng: ChaCha8Rng,
}

impl Sampler {
    /// Videos with fewer than three eligible frames are left out, as are
    /// pseudo videos without detections.
    pub fn new(dataset: &TrainingDataset, seed: u64) -> Result<Self> {
        let mut base = Vec::new();
        let mut pseudo = Vec::new();
        for (id, entry) in &dataset.videos {
            if entry.provenance == Provenance::Pseudo && entry.tracks.is_empty() {
                continue;
            }
            let eligible = eligible_frames(entry.detections(), entry.num_frames)?;
            if eligible.len() < CLIP_LEN {
                continue;
            }
            let pool = match entry.provenance {
                Provenance::Base => &mut base,
                Provenance::Pseudo => &mut pseudo,
            };
            pool.push((id.clone(), eligible));
        }
        Ok(Self {
            base,
            pseudo,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn pool_sizes(&self) -> (usize, usize) {
        (self.base.len(), self.pseudo.len())
    }

    pub fn next_plan(&mut self) -> Result<SamplePlan> {
        let source = if self.base.is_empty() && !self.pseudo.is_empty() {
            Source::Pseudo
        } else {
            choose_source(&mut self.rng, !self.pseudo.is_empty())
        };
        let pool = match source {
            Source::Base => &self.base,
            Source::Pseudo => &self.pseudo,
        };
        if pool.is_empty() {
            return Err(Error::NoEligibleVideos(source.as_str()));
        }
        let (video_id, eligible) = &pool[self.rng.random_range(0..pool.len())];
        let frame_indices = sample_frames(eligible, &mut self.rng)?;
        Ok(SamplePlan {
            video_id: video_id.clone(),
            frame_indices,
            source,
        })
    }
}
