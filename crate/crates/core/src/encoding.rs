//! Learnable multi-resolution vertex features: initialization, accumulation
//! across resolutions, barycentric interpolation at surface samples, and
//! the adjoint gradient scatter.
//!
//! A query is a `(face, barycentric)` pair on the original mesh. Vertex
//! positions never enter the encoding, so it is invariant under deformations
//! that keep the topology fixed.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::mesh::SurfaceSample;
use crate::scalar::Scalar;
use crate::simplify::Hierarchy;

/// Standard deviation of the feature initialization.
pub const FEATURE_INIT_SIGMA: f64 = 5e-4;

/// Per-resolution learnable feature matrices tied to a hierarchy.
#[derive(Debug, Clone)]
pub struct FeatureSet<T> {
    hierarchy: Arc<Hierarchy>,
    dim: usize,
    levels: Vec<Array2<T>>,
}

/// Encoded features for a batch of surface samples plus the provenance
/// needed to scatter gradients back: for every sample the face, the
/// barycentric triple, and per level the three feature rows it touched.
#[derive(Debug, Clone)]
pub struct EncodedBatch<T> {
    pub features: Array2<T>,
    pub samples: Vec<SurfaceSample>,
    /// `rows[level][sample]` are the three per-level feature-row indices of
    /// the sample's triangle corners.
    pub rows: Vec<Vec<[u32; 3]>>,
}

impl<T: Scalar> FeatureSet<T> {
    /// I.i.d. normal initialization with sigma 5e-4 from a seeded generator.
    /// The same seed yields bitwise-identical features.
    pub fn init(hierarchy: Arc<Hierarchy>, dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "feature dimension must be at least 1");
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, FEATURE_INIT_SIGMA).unwrap();
        let levels = (0..hierarchy.level_count())
            .map(|i| {
                let rows = hierarchy.mesh(i).vertex_count();
                Array2::from_shape_fn((rows, dim), |_| T::from_f64(normal.sample(&mut rng)))
            })
            .collect();
        FeatureSet {
            hierarchy,
            dim,
            levels,
        }
    }

    pub fn zeros(hierarchy: Arc<Hierarchy>, dim: usize) -> Self {
        let levels = (0..hierarchy.level_count())
            .map(|i| Array2::zeros((hierarchy.mesh(i).vertex_count(), dim)))
            .collect();
        FeatureSet {
            hierarchy,
            dim,
            levels,
        }
    }

    pub fn from_levels(hierarchy: Arc<Hierarchy>, levels: Vec<Array2<T>>) -> Result<Self> {
        if levels.len() != hierarchy.level_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature levels for a {}-level hierarchy",
                levels.len(),
                hierarchy.level_count()
            )));
        }
        let dim = levels.first().map(|l| l.ncols()).unwrap_or(0);
        for (i, level) in levels.iter().enumerate() {
            if level.nrows() != hierarchy.mesh(i).vertex_count() || level.ncols() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "level {i} features are {}x{}, expected {}x{dim}",
                    level.nrows(),
                    level.ncols(),
                    hierarchy.mesh(i).vertex_count()
                )));
            }
        }
        Ok(FeatureSet {
            hierarchy,
            dim,
            levels,
        })
    }

    pub fn hierarchy(&self) -> &Arc<Hierarchy> {
        &self.hierarchy
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, i: usize) -> &Array2<T> {
        &self.levels[i]
    }

    pub fn level_mut(&mut self, i: usize) -> &mut Array2<T> {
        &mut self.levels[i]
    }

    pub fn levels(&self) -> &[Array2<T>] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [Array2<T>] {
        &mut self.levels
    }

    /// Zero every level finer than the `keep_coarsest` coarsest ones, the
    /// progressive-unlock rendering mode. Level 0 is the finest.
    pub fn zero_finest_levels(&mut self, keep_coarsest: usize) {
        let count = self.levels.len();
        let cut = count.saturating_sub(keep_coarsest.min(count));
        for z in self.levels.iter_mut().take(cut) {
            z.fill(T::zero());
        }
    }

    /// Total number of feature parameters, `sum_i |V_i| * d`.
    pub fn param_count(&self) -> usize {
        self.levels.iter().map(|l| l.len()).sum()
    }

    /// Combined feature of an original vertex: the sum of its mapped rows
    /// over all resolutions.
    pub fn accumulate_vertex(&self, vertex: u32) -> Array1<T> {
        let mut out = Array1::zeros(self.dim);
        for (level, z) in self.levels.iter().enumerate() {
            let row = self.hierarchy.map(level)[vertex as usize] as usize;
            out += &z.row(row);
        }
        out
    }

    /// Accumulated features for every original vertex (the matrix the
    /// regularizer operates on).
    pub fn accumulate_all(&self) -> Array2<T> {
        let nv = self.hierarchy.original_vertex_count();
        let mut out = Array2::zeros((nv, self.dim));
        for (level, z) in self.levels.iter().enumerate() {
            let map = self.hierarchy.map(level);
            for v in 0..nv {
                let row = map[v] as usize;
                for k in 0..self.dim {
                    out[(v, k)] += z[(row, k)];
                }
            }
        }
        out
    }

    /// Encode a batch of surface samples: per-corner accumulated features
    /// blended with the barycentric weights.
    pub fn encode(&self, samples: &[SurfaceSample]) -> Result<EncodedBatch<T>> {
        self.encode_levels(samples, self.level_count())
    }

    /// Encode using only the `active` coarsest resolutions (counted from the
    /// coarse end); `active = level_count` reproduces [`FeatureSet::encode`].
    /// Exposes the progressive-unlock rendering mode.
    pub fn encode_levels(&self, samples: &[SurfaceSample], active: usize) -> Result<EncodedBatch<T>> {
        let levels = self.level_count();
        let active = active.min(levels);
        let faces = self.hierarchy.mesh(0).faces();
        let mut features = Array2::zeros((samples.len(), self.dim));
        let mut rows: Vec<Vec<[u32; 3]>> = vec![Vec::with_capacity(samples.len()); levels];

        for (s, sample) in samples.iter().enumerate() {
            let face = faces.get(sample.face as usize).ok_or(Error::IndexOutOfRange {
                what: "sample face index",
                index: sample.face as usize,
                limit: faces.len(),
            })?;
            for level in 0..levels {
                let map = self.hierarchy.map(level);
                let mapped = [
                    map[face[0] as usize],
                    map[face[1] as usize],
                    map[face[2] as usize],
                ];
                rows[level].push(mapped);
                if level < levels - active {
                    continue; // finer resolution not yet unlocked
                }
                let z = &self.levels[level];
                for (corner, &row) in mapped.iter().enumerate() {
                    let w = T::from_f64(sample.bary[corner]);
                    for k in 0..self.dim {
                        features[(s, k)] += w * z[(row as usize, k)];
                    }
                }
            }
        }
        Ok(EncodedBatch {
            features,
            samples: samples.to_vec(),
            rows,
        })
    }

    /// Encode without recording scatter provenance: the inference and
    /// benchmark fast path.
    pub fn encode_features_only(&self, samples: &[SurfaceSample]) -> Result<Array2<T>> {
        let levels = self.level_count();
        let faces = self.hierarchy.mesh(0).faces();
        let mut features = Array2::zeros((samples.len(), self.dim));
        for (s, sample) in samples.iter().enumerate() {
            let face = faces.get(sample.face as usize).ok_or(Error::IndexOutOfRange {
                what: "sample face index",
                index: sample.face as usize,
                limit: faces.len(),
            })?;
            for level in 0..levels {
                let map = self.hierarchy.map(level);
                let z = &self.levels[level];
                for corner in 0..3 {
                    let row = map[face[corner] as usize] as usize;
                    let w = T::from_f64(sample.bary[corner]);
                    for k in 0..self.dim {
                        features[(s, k)] += w * z[(row, k)];
                    }
                }
            }
        }
        Ok(features)
    }

    /// Adjoint of [`FeatureSet::encode`]: distribute per-sample feature
    /// gradients onto every level's touched rows, weighted by the
    /// barycentric coordinates. Contributions to a shared row are summed.
    pub fn scatter_gradients(
        &self,
        batch: &EncodedBatch<T>,
        dl_dphi: ArrayView2<T>,
    ) -> Result<Vec<Array2<T>>> {
        if dl_dphi.nrows() != batch.samples.len() || dl_dphi.ncols() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "gradient is {}x{}, batch is {}x{}",
                dl_dphi.nrows(),
                dl_dphi.ncols(),
                batch.samples.len(),
                self.dim
            )));
        }
        let mut grads: Vec<Array2<T>> = self
            .levels
            .iter()
            .map(|z| Array2::zeros(z.dim()))
            .collect();
        for (level, grad) in grads.iter_mut().enumerate() {
            let level_rows = &batch.rows[level];
            for (s, sample) in batch.samples.iter().enumerate() {
                for (corner, &row) in level_rows[s].iter().enumerate() {
                    let w = T::from_f64(sample.bary[corner]);
                    for k in 0..self.dim {
                        grad[(row as usize, k)] += w * dl_dphi[(s, k)];
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Add `scale * grad_phi` (a gradient w.r.t. the accumulated per-vertex
    /// features) onto per-level gradient buffers through the collapse maps.
    pub fn scatter_accumulated(
        &self,
        grad_phi: ArrayView2<T>,
        scale: T,
        grads: &mut [Array2<T>],
    ) -> Result<()> {
        let nv = self.hierarchy.original_vertex_count();
        if grad_phi.nrows() != nv || grad_phi.ncols() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "accumulated gradient is {}x{}, expected {nv}x{}",
                grad_phi.nrows(),
                grad_phi.ncols(),
                self.dim
            )));
        }
        for (level, grad) in grads.iter_mut().enumerate() {
            let map = self.hierarchy.map(level);
            for v in 0..nv {
                let row = map[v] as usize;
                for k in 0..self.dim {
                    grad[(row, k)] += scale * grad_phi[(v, k)];
                }
            }
        }
        Ok(())
    }
}
