//! Preprocessing: cast one ray per pixel of every training view and store
//! the resulting surface samples with their supervision targets.

use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, SurfaceSample};
use crate::pipeline::Task;
use crate::render::bvh::{shadow_test, Bvh};
use crate::render::camera::View;

/// Per-record shading inputs for the BRDF task. Shadow flags are
/// precomputed here; the indicator is data, not a function of parameters.
#[derive(Debug, Clone, Default)]
pub struct ShadingData {
    pub normals: Vec<Vector3<f64>>,
    pub view_dirs: Vec<Vector3<f64>>,
    pub light_dirs: Vec<Vector3<f64>>,
    pub light_intensities: Vec<f64>,
    pub occluded: Vec<bool>,
}

/// Flattened training records over all ray-hit pixels of all views.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub samples: Vec<SurfaceSample>,
    pub targets: Vec<[f32; 3]>,
    pub shading: Option<ShadingData>,
    /// Record count contributed by each included view.
    pub view_record_counts: Vec<usize>,
    /// Indices of views that produced no hits and were excluded.
    pub skipped_views: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

struct PixelRecord {
    sample: SurfaceSample,
    target: [f32; 3],
    normal: Vector3<f64>,
    view_dir: Vector3<f64>,
}

/// Intersect every pixel of every view and collect one record per hit.
/// Views without a target image are rejected; views with zero hits are
/// excluded with a warning. `vertex_normals` switches BRDF shading from
/// geometric face normals to interpolated smooth normals.
pub fn prepare_samples(
    mesh: &Mesh,
    bvh: &Bvh,
    views: &[View],
    task: Task,
    vertex_normals: Option<&[Vector3<f64>]>,
) -> Result<Dataset> {
    if views.is_empty() {
        return Err(Error::InvalidArgument("no views given".into()));
    }
    let scale = mesh.bounding_diagonal();
    let mut dataset = Dataset {
        shading: match task {
            Task::Brdf => Some(ShadingData::default()),
            Task::Texture => None,
        },
        ..Dataset::default()
    };

    for (view_index, view) in views.iter().enumerate() {
        let image = view.image.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("view {view_index} has no target image"))
        })?;
        if image.width() != view.width || image.height() != view.height {
            return Err(Error::DimensionMismatch(format!(
                "view {view_index}: image is {}x{}, camera is {}x{}",
                image.width(),
                image.height(),
                view.width,
                view.height
            )));
        }
        let light = view.light;
        if task == Task::Brdf && light.is_none() {
            return Err(Error::InvalidArgument(format!(
                "view {view_index} has no light; the BRDF task needs one"
            )));
        }
        let camera = view.camera_center();

        // Row-parallel intersection; rows are concatenated in order so the
        // record layout is deterministic.
        let rows: Vec<Vec<PixelRecord>> = (0..view.height)
            .into_par_iter()
            .map(|y| {
                let mut row = Vec::new();
                for x in 0..view.width {
                    let ray = view.ray_for_pixel(x, y);
                    let Some(hit) = bvh.intersect(mesh, &ray) else {
                        continue;
                    };
                    let point = mesh
                        .point_from_barycentric(&hit.sample)
                        .expect("intersection sample is valid");
                    let normal =
                        crate::render::shading_normal(mesh, vertex_normals, &hit.sample);
                    row.push(PixelRecord {
                        sample: hit.sample,
                        target: image.get(x, y),
                        normal,
                        view_dir: (camera - point).normalize(),
                    });
                }
                row
            })
            .collect();

        let count: usize = rows.iter().map(|r| r.len()).sum();
        if count == 0 {
            log::warn!("view {view_index} sees no geometry; excluded from the dataset");
            dataset.skipped_views.push(view_index);
            continue;
        }
        for record in rows.into_iter().flatten() {
            if let Some(shading) = dataset.shading.as_mut() {
                let light = light.expect("checked above");
                let point = mesh
                    .point_from_barycentric(&record.sample)
                    .expect("intersection sample is valid");
                shading.normals.push(record.normal);
                shading.view_dirs.push(record.view_dir);
                shading.light_dirs.push(light.direction);
                shading.light_intensities.push(light.intensity);
                shading.occluded.push(shadow_test(
                    bvh,
                    mesh,
                    point,
                    record.normal,
                    light.direction,
                    scale,
                ));
            }
            dataset.samples.push(record.sample);
            dataset.targets.push(record.target);
        }
        dataset.view_record_counts.push(count);
    }

    if dataset.is_empty() {
        return Err(Error::InvalidArgument(
            "no view produced any ray hits".into(),
        ));
    }
    Ok(dataset)
}

/// Load `mesh.obj` from a scene directory.
pub fn load_scene_mesh(scene: impl AsRef<Path>) -> Result<Mesh> {
    Mesh::load_obj(scene.as_ref().join("mesh.obj"))
}

/// Load the training views (`views/*.json`) of a scene directory.
pub fn load_train_views(scene: impl AsRef<Path>) -> Result<Vec<View>> {
    crate::render::camera::load_views_dir(scene.as_ref().join("views"))
}

/// Load the held-out views (`views_test/*.json`) of a scene directory.
pub fn load_test_views(scene: impl AsRef<Path>) -> Result<Vec<View>> {
    crate::render::camera::load_views_dir(scene.as_ref().join("views_test"))
}
