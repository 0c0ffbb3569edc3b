use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::fastica::{fast_ica, IcaOptions, IcaResult};
use super::whiten::{whiten, TrainingBatch, Whitening};
use crate::binio::*;
use crate::error::{Error, Result};
use crate::projection::{pseudo_inverse, HierarchyLayout, WindowSpec};
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"DICT";
const VERSION: u32 = 1;
const MAX_DIM: usize = 1 << 20;

/// Diagnostics recorded while learning a dictionary. Not persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub examples: usize,
    pub converged: bool,
    pub iterations: usize,
    pub dropped_dims: usize,
    pub negentropy: Vec<f64>,
}

/// One level's basis matrix D (N_in x K) with its preprocessing.
#[derive(Debug, Clone)]
pub struct Dictionary<T> {
    level: usize,
    window: WindowSpec,
    mean: DVector<T>,
    /// d x N_in whitening transform used before ICA.
    whitening: DMatrix<T>,
    bases: DMatrix<T>,
    pinv: DMatrix<T>,
    report: Option<TrainingReport>,
}

impl<T: Real> PartialEq for Dictionary<T> {
    fn eq(&self, other: &Self) -> bool {
        self.level == other.level
            && self.window == other.window
            && self.mean == other.mean
            && self.whitening == other.whitening
            && self.bases == other.bases
    }
}

impl<T: Real> Dictionary<T> {
    pub fn new(
        level: usize,
        window: WindowSpec,
        mean: DVector<T>,
        whitening: DMatrix<T>,
        bases: DMatrix<T>,
    ) -> Result<Self> {
        let (n_in, k) = bases.shape();
        if k == 0 || k > n_in {
            return Err(Error::Config(format!("level {level}: need 1 <= K <= N_in, got K={k}, N_in={n_in}")));
        }
        if mean.len() != n_in {
            return Err(Error::shape(format!("mean of length {n_in}"), format!("length {}", mean.len())));
        }
        if whitening.ncols() != n_in {
            return Err(Error::shape(
                format!("whitening with {n_in} columns"),
                format!("{} columns", whitening.ncols()),
            ));
        }
        if bases.iter().chain(mean.iter()).chain(whitening.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("level {level}: non-finite dictionary entries")));
        }
        let tol = T::lit(1e-4);
        for (j, col) in bases.column_iter().enumerate() {
            if (col.norm() - T::one()).abs() > tol {
                return Err(Error::Numeric(format!("level {level}: basis {j} is not unit norm")));
            }
        }
        let svd = bases.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > smax * T::lit(1e-10)) {
            return Err(Error::Numeric(format!("level {level}: dictionary is rank deficient")));
        }
        let pinv = pseudo_inverse(&bases);
        Ok(Self {
            level,
            window,
            mean,
            whitening,
            bases,
            pinv,
            report: None,
        })
    }

    /// Learns a dictionary of `k` bases from `batch`, whitening to
    /// `pca_dim` dimensions first.
    pub fn learn(
        batch: &TrainingBatch<T>,
        window: WindowSpec,
        k: usize,
        pca_dim: usize,
        opts: &IcaOptions,
        seed: u64,
    ) -> Result<Self> {
        if pca_dim < k {
            return Err(Error::Config(format!(
                "level {}: whitening dimension {pca_dim} is below K={k}",
                batch.level()
            )));
        }
        let (z, white) = whiten(batch, pca_dim)?;
        if z.nrows() < k {
            return Err(Error::Numeric(format!(
                "level {}: only {} non-degenerate dimensions for K={k}",
                batch.level(),
                z.nrows()
            )));
        }
        let ica = fast_ica(&z, k, opts, seed)?;
        Self::from_ica(batch.level(), window, batch.len(), white, ica)
    }

    fn from_ica(level: usize, window: WindowSpec, examples: usize, white: Whitening<T>, ica: IcaResult<T>) -> Result<Self> {
        // Unmixing in input space, then the mixing directions it implies.
        let unmix = &ica.unmixing * &white.transform;
        let mut bases = pseudo_inverse(&unmix);
        for mut col in bases.column_iter_mut() {
            let norm = col.norm();
            if !(norm > T::zero()) {
                return Err(Error::Numeric(format!("level {level}: zero basis vector")));
            }
            col /= norm;
            let peak = col.iter().fold(T::zero(), |m, &v| if v.abs() > m.abs() { v } else { m });
            if peak < T::zero() {
                col.neg_mut();
            }
        }
        let mut dict = Self::new(level, window, white.mean, white.transform, bases)?;
        dict.report = Some(TrainingReport {
            examples,
            converged: ica.converged,
            iterations: ica.iterations,
            dropped_dims: white.dropped,
            negentropy: ica.negentropy,
        });
        Ok(dict)
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn window(&self) -> &WindowSpec {
        &self.window
    }

    pub fn input_dim(&self) -> usize {
        self.bases.nrows()
    }

    pub fn k(&self) -> usize {
        self.bases.ncols()
    }

    pub fn bases(&self) -> &DMatrix<T> {
        &self.bases
    }

    /// Moore-Penrose pseudo-inverse of the bases, K x N_in.
    pub fn pinv(&self) -> &DMatrix<T> {
        &self.pinv
    }

    pub fn mean(&self) -> &DVector<T> {
        &self.mean
    }

    pub fn whitening(&self) -> &DMatrix<T> {
        &self.whitening
    }

    pub fn report(&self) -> Option<&TrainingReport> {
        self.report.as_ref()
    }

    /// Coefficients of a single input after removing the training mean.
    pub fn encode(&self, x: &DVector<T>) -> DVector<T> {
        &self.pinv * (x - &self.mean)
    }
}

/// Dictionaries for levels 0..H-1, trained bottom-up.
#[derive(Debug, Clone)]
pub struct DictionaryHierarchy<T> {
    levels: Vec<Dictionary<T>>,
}

impl<T: Real> PartialEq for DictionaryHierarchy<T> {
    fn eq(&self, other: &Self) -> bool {
        self.levels == other.levels
    }
}

impl<T: Real> DictionaryHierarchy<T> {
    pub fn new(levels: Vec<Dictionary<T>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Config("hierarchy needs at least one level".into()));
        }
        for (h, d) in levels.iter().enumerate() {
            if d.level != h {
                return Err(Error::Config(format!("dictionary at position {h} is labelled level {}", d.level)));
            }
            let w = &d.window;
            let expected = if h == 0 {
                w.window_channels * w.window_frames
            } else {
                w.blocks_spectral * w.blocks_temporal * levels[h - 1].k()
            };
            if d.input_dim() != expected {
                return Err(Error::shape(
                    format!("level {h} input dimension {expected}"),
                    format!("{}", d.input_dim()),
                ));
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[Dictionary<T>] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Dictionary::k).collect()
    }

    pub fn specs(&self) -> Vec<WindowSpec> {
        self.levels.iter().map(|d| d.window).collect()
    }

    /// Layout for cochleograms with `n_channels` rows; the stored spectral
    /// block counts must survive the channel clamp unchanged.
    pub fn layout(&self, n_channels: usize) -> Result<HierarchyLayout> {
        let layout = HierarchyLayout::new(&self.specs(), n_channels)?;
        for (h, (l, d)) in layout.levels.iter().zip(&self.levels).enumerate().skip(1) {
            if l.blocks_spectral != d.window.blocks_spectral {
                return Err(Error::Config(format!(
                    "level {h}: dictionary expects {} spectral blocks but {n_channels} channels allow {}",
                    d.window.blocks_spectral, l.blocks_spectral
                )));
            }
        }
        Ok(layout)
    }

    /// Pixel-space receptive field of every basis at `level`, shaped
    /// extent_channels x extent_frames.
    pub fn receptive_fields(&self, level: usize, n_channels: usize) -> Result<Vec<DMatrix<T>>> {
        if level >= self.levels.len() {
            return Err(Error::Index {
                index: level,
                len: self.levels.len(),
            });
        }
        let layout = self.layout(n_channels)?;
        Ok((0..self.levels[level].k())
            .map(|k| {
                let coeffs = DVector::from_fn(self.levels[level].k(), |i, _| if i == k { T::one() } else { T::zero() });
                self.render(&layout, level, &coeffs)
            })
            .collect())
    }

    fn render(&self, layout: &HierarchyLayout, level: usize, coeffs: &DVector<T>) -> DMatrix<T> {
        let l = &layout.levels[level];
        let v = &self.levels[level].bases * coeffs;
        if level == 0 {
            return DMatrix::from_row_slice(l.extent_channels, l.extent_frames, v.as_slice());
        }
        let child = &layout.levels[level - 1];
        let kc = self.levels[level - 1].k();
        let mut out = DMatrix::zeros(l.extent_channels, l.extent_frames);
        for i in 0..l.blocks_spectral {
            for j in 0..l.blocks_temporal {
                let slot = i * l.blocks_temporal + j;
                let part = DVector::from_column_slice(&v.as_slice()[slot * kc..(slot + 1) * kc]);
                let img = self.render(layout, level - 1, &part);
                let (r0, c0) = (i * child.extent_channels, j * child.extent_frames);
                let mut view = out.view_mut((r0, c0), (child.extent_channels, child.extent_frames));
                view += img;
            }
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(w, VERSION)?;
        put_u32(w, self.levels.len() as u32)?;
        for d in &self.levels {
            let g = &d.window;
            for v in [g.window_channels, g.window_frames, g.blocks_spectral, g.blocks_temporal] {
                put_u32(w, v as u32)?;
            }
            put_f32(w, g.overlap_spectral as f32)?;
            put_f32(w, g.overlap_temporal as f32)?;
            put_u32(w, d.input_dim() as u32)?;
            put_u32(w, d.k() as u32)?;
            for v in d.mean.iter() {
                put_f32(w, v.as_f64() as f32)?;
            }
            put_u32(w, d.whitening.nrows() as u32)?;
            write_row_major(w, &d.whitening)?;
            write_row_major(w, &d.bases)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        const KIND: &str = "DICT";
        expect_magic(r, MAGIC, KIND)?;
        let version = get_u32(r)?;
        if version != VERSION {
            return Err(Error::format(KIND, format!("unsupported version {version}")));
        }
        let count = get_count(r, 64, KIND, "level count")?;
        let mut levels = Vec::with_capacity(count);
        for h in 0..count {
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = get_count(r, MAX_DIM, KIND, "geometry field")?;
            }
            let window = WindowSpec {
                window_channels: dims[0],
                window_frames: dims[1],
                blocks_spectral: dims[2],
                blocks_temporal: dims[3],
                overlap_spectral: get_f32(r)? as f64,
                overlap_temporal: get_f32(r)? as f64,
            };
            let n_in = get_count(r, MAX_DIM, KIND, "N_in")?;
            let k = get_count(r, MAX_DIM, KIND, "K")?;
            let mean = DVector::from_iterator(n_in, read_f32s::<T>(r, n_in)?);
            let d = get_count(r, MAX_DIM, KIND, "whitening rows")?;
            let whitening = read_row_major(r, d, n_in)?;
            let bases = read_row_major(r, n_in, k)?;
            levels.push(Dictionary::new(h, window, mean, whitening, bases)?);
        }
        Self::new(levels)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn write_row_major<T: Real>(w: &mut impl Write, m: &DMatrix<T>) -> Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            put_f32(w, m[(r, c)].as_f64() as f32)?;
        }
    }
    Ok(())
}

fn read_f32s<T: Real>(r: &mut impl Read, n: usize) -> Result<Vec<T>> {
    (0..n).map(|_| get_f32(r).map(|v| T::lit(v as f64))).collect()
}

fn read_row_major<T: Real>(r: &mut impl Read, rows: usize, cols: usize) -> Result<DMatrix<T>> {
    if rows.saturating_mul(cols) > MAX_DIM * 64 {
        return Err(Error::format("DICT", format!("matrix {rows}x{cols} too large")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &read_f32s::<T>(r, rows * cols)?))
}
