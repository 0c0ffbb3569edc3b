//! Window and block layout of the hierarchy.
//!
//! Level 0 slides a `window_channels x window_frames` window over the
//! cochleogram with a base stride derived from its overlaps. All block
//! origins are expressed in base-stride units. A level-h block
//! concatenates `M x N` level-(h-1) blocks placed side by side, so its
//! extent is `M` (resp. `N`) times the child extent. The overlaps stored
//! on levels above 0 set the spacing of that level's own sampling grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of one hierarchy level as stored in dictionary files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// L_C; used by level 0 only.
    pub window_channels: usize,
    /// L_T in cochleogram frames (ms at 1 kHz); used by level 0 only.
    pub window_frames: usize,
    /// M; used above level 0.
    pub blocks_spectral: usize,
    /// N; used above level 0.
    pub blocks_temporal: usize,
    pub overlap_spectral: f64,
    pub overlap_temporal: f64,
}

impl WindowSpec {
    pub fn window(channels: usize, frames: usize, overlap_spectral: f64, overlap_temporal: f64) -> Self {
        Self {
            window_channels: channels,
            window_frames: frames,
            blocks_spectral: 1,
            blocks_temporal: 1,
            overlap_spectral,
            overlap_temporal,
        }
    }

    pub fn blocks(m: usize, n: usize, overlap_spectral: f64, overlap_temporal: f64) -> Self {
        Self {
            window_channels: 0,
            window_frames: 0,
            blocks_spectral: m,
            blocks_temporal: n,
            overlap_spectral,
            overlap_temporal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelLayout {
    /// Extent in channels.
    pub extent_channels: usize,
    /// Extent in cochleogram frames.
    pub extent_frames: usize,
    /// Effective number of child blocks along each axis (1 at level 0).
    pub blocks_spectral: usize,
    pub blocks_temporal: usize,
    /// Distance between adjacent children, in base units.
    pub child_step_spectral: usize,
    pub child_step_temporal: usize,
    /// Spacing of this level's sampling grid, in base units.
    pub grid_spectral: usize,
    pub grid_temporal: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyLayout {
    pub n_channels: usize,
    /// Base stride in channels and frames.
    pub stride_channels: usize,
    pub stride_frames: usize,
    pub levels: Vec<LevelLayout>,
}

fn check_overlap(v: f64, what: &str, level: usize) -> Result<()> {
    if !(0.0..1.0).contains(&v) {
        return Err(Error::Config(format!("level {level}: {what} overlap {v} must lie in [0, 1)")));
    }
    Ok(())
}

fn grid_step(extent_units: usize, overlap: f64) -> usize {
    ((extent_units as f64 * (1.0 - overlap)).round() as usize).max(1)
}

impl HierarchyLayout {
    /// Builds the layout for a cochleogram with `n_channels` rows. The
    /// spectral block count of a level is clamped so that it never spans
    /// more channels than exist.
    pub fn new(specs: &[WindowSpec], n_channels: usize) -> Result<Self> {
        let first = specs
            .first()
            .ok_or_else(|| Error::Config("hierarchy needs at least one level".into()))?;
        let (lc, lt) = (first.window_channels, first.window_frames);
        if lc == 0 || lt == 0 {
            return Err(Error::Config("level 0 window must be non-empty".into()));
        }
        if lc > n_channels {
            return Err(Error::Config(format!("window of {lc} channels exceeds {n_channels} channels")));
        }
        check_overlap(first.overlap_spectral, "spectral", 0)?;
        check_overlap(first.overlap_temporal, "temporal", 0)?;
        let sc = ((lc as f64 * (1.0 - first.overlap_spectral)).round() as usize).max(1);
        let st = ((lt as f64 * (1.0 - first.overlap_temporal)).round() as usize).max(1);

        let mut levels = vec![LevelLayout {
            extent_channels: lc,
            extent_frames: lt,
            blocks_spectral: 1,
            blocks_temporal: 1,
            child_step_spectral: 0,
            child_step_temporal: 0,
            grid_spectral: 1,
            grid_temporal: 1,
        }];
        for (h, spec) in specs.iter().enumerate().skip(1) {
            let prev = levels[h - 1];
            if spec.blocks_spectral == 0 || spec.blocks_temporal == 0 {
                return Err(Error::Config(format!("level {h}: block counts must be positive")));
            }
            check_overlap(spec.overlap_spectral, "spectral", h)?;
            check_overlap(spec.overlap_temporal, "temporal", h)?;
            if prev.extent_channels % sc != 0 || prev.extent_frames % st != 0 {
                return Err(Error::Config(format!(
                    "level {}: extent {}x{} is not a multiple of the base stride {sc}x{st}",
                    h - 1,
                    prev.extent_channels,
                    prev.extent_frames
                )));
            }
            let m = spec.blocks_spectral.min(n_channels / prev.extent_channels).max(1);
            let n = spec.blocks_temporal;
            let extent_channels = m * prev.extent_channels;
            let extent_frames = n * prev.extent_frames;
            levels.push(LevelLayout {
                extent_channels,
                extent_frames,
                blocks_spectral: m,
                blocks_temporal: n,
                child_step_spectral: prev.extent_channels / sc,
                child_step_temporal: prev.extent_frames / st,
                grid_spectral: grid_step(extent_channels.div_ceil(sc), spec.overlap_spectral),
                grid_temporal: grid_step(extent_frames.div_ceil(st), spec.overlap_temporal),
            });
        }
        Ok(Self {
            n_channels,
            stride_channels: sc,
            stride_frames: st,
            levels,
        })
    }

    pub fn top(&self) -> &LevelLayout {
        self.levels.last().expect("layout has at least one level")
    }

    /// Frames covered by one top-level block.
    pub fn receptive_field_frames(&self) -> usize {
        self.top().extent_frames
    }

    /// Largest base-unit origin whose block fits in `len` pixels.
    fn last_origin(extent: usize, stride: usize, len: usize) -> Option<usize> {
        (len >= extent).then(|| (len - extent) / stride)
    }

    /// Spectral origins (base units) on the sampling grid of `level`.
    pub fn spectral_positions(&self, level: usize) -> Vec<usize> {
        let l = &self.levels[level];
        match Self::last_origin(l.extent_channels, self.stride_channels, self.n_channels) {
            Some(last) => (0..=last).step_by(l.grid_spectral).collect(),
            None => Vec::new(),
        }
    }

    /// Temporal origins (base units) on the sampling grid of `level` for a
    /// cochleogram of `frames` columns.
    pub fn temporal_positions(&self, level: usize, frames: usize) -> Vec<usize> {
        let l = &self.levels[level];
        match Self::last_origin(l.extent_frames, self.stride_frames, frames) {
            Some(last) => (0..=last).step_by(l.grid_temporal).collect(),
            None => Vec::new(),
        }
    }

    /// Every temporal origin (not only grid points) that fits.
    pub fn all_temporal_origins(&self, level: usize, frames: usize) -> usize {
        let l = &self.levels[level];
        Self::last_origin(l.extent_frames, self.stride_frames, frames).map_or(0, |v| v + 1)
    }

    pub fn all_spectral_origins(&self, level: usize) -> usize {
        let l = &self.levels[level];
        Self::last_origin(l.extent_channels, self.stride_channels, self.n_channels).map_or(0, |v| v + 1)
    }

    /// Index into `temporal_positions(level, frames)` of the block whose
    /// temporal centre is nearest to pixel time `t` (lower on ties).
    pub fn nearest_temporal(&self, level: usize, frames: usize, t: f64) -> Option<usize> {
        let count = self.temporal_positions(level, frames).len();
        if count == 0 {
            return None;
        }
        let l = &self.levels[level];
        let spacing = (l.grid_temporal * self.stride_frames) as f64;
        let half = l.extent_frames as f64 / 2.0;
        let centre = |i: usize| i as f64 * spacing + half;
        let guess = ((t - half) / spacing).floor().clamp(0.0, (count - 1) as f64) as usize;
        let mut best = guess;
        for cand in [guess.saturating_sub(1), guess + 1] {
            if cand < count {
                let (d, db) = ((centre(cand) - t).abs(), (centre(best) - t).abs());
                if d < db || (d == db && cand < best) {
                    best = cand;
                }
            }
        }
        Some(best)
    }
}
