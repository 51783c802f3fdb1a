//! Multi-resolution per-vertex feature encodings for neural fields on
//! triangle meshes.
//!
//! The crate builds a feature pyramid over a mesh by quadric-error
//! decimation, stores learnable feature vectors at the vertices of every
//! resolution, and decodes barycentrically interpolated feature sums with a
//! small MLP. On top of that sit two training pipelines (texture
//! reconstruction from posed images and isotropic Disney-BRDF estimation
//! under directional lights), image-quality metrics, and an inference
//! benchmark against a random-Fourier-feature baseline.

pub mod encoding;
pub mod error;
pub mod laplacian;
pub mod mesh;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod render;
pub mod scalar;
pub mod simplify;
pub mod synth;

pub use nalgebra;

pub use error::{Error, Result};
pub use mesh::{Mesh, SurfaceSample};
pub use scalar::Scalar;
pub use simplify::Hierarchy;
