//! Evaluation: render views through the trained model in batches and score
//! them against the targets with masked PSNR/DSSIM.

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::encoding::FeatureSet;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, SurfaceSample};
use crate::metrics::{self, MetricReport};
use crate::nn::Mlp;
use crate::pipeline::Task;
use crate::render::brdf::{gamma_map, shade_directional, DisneyParams, PARAM_COUNT};
use crate::render::bvh::{shadow_test, Bvh};
use crate::render::camera::View;
use crate::render::image::ImageBuf;
use crate::scalar::Scalar;

/// Render one view through the model. Texture task: decoded sigmoid colors.
/// BRDF task: decoded parameters shaded under the view's directional light
/// (linear radiance). Returns the image and the ray-hit mask.
#[allow(clippy::too_many_arguments)]
pub fn render_model_view<T: Scalar>(
    features: &FeatureSet<T>,
    mlp: &Mlp<T>,
    mesh: &Mesh,
    bvh: &Bvh,
    view: &View,
    task: Task,
    background: [f32; 3],
    vertex_normals: Option<&[nalgebra::Vector3<f64>]>,
) -> Result<(ImageBuf, Vec<bool>)> {
    if task == Task::Brdf && view.light.is_none() {
        return Err(Error::InvalidArgument(
            "BRDF rendering needs a light on the view".into(),
        ));
    }

    // Intersect all pixels (row-parallel), then decode every hit in one
    // batched forward pass.
    let hits: Vec<Vec<(usize, SurfaceSample)>> = (0..view.height)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::new();
            for x in 0..view.width {
                let ray = view.ray_for_pixel(x, y);
                if let Some(hit) = bvh.intersect(mesh, &ray) {
                    row.push((y * view.width + x, hit.sample));
                }
            }
            row
        })
        .collect();
    let flat: Vec<(usize, SurfaceSample)> = hits.into_iter().flatten().collect();

    let mut img = ImageBuf::new(view.width, view.height, background);
    let mut mask = vec![false; view.width * view.height];
    if flat.is_empty() {
        return Ok((img, mask));
    }

    let samples: Vec<SurfaceSample> = flat.iter().map(|&(_, s)| s).collect();
    let encoded = features.encode_features_only(&samples)?;
    let y = mlp.forward_inference(encoded.view());

    match task {
        Task::Texture => {
            for (row, &(pixel, _)) in flat.iter().enumerate() {
                let rgb = [
                    y[(row, 0)].to_f64() as f32,
                    y[(row, 1)].to_f64() as f32,
                    y[(row, 2)].to_f64() as f32,
                ];
                img.pixels_mut()[pixel] = rgb;
                mask[pixel] = true;
            }
        }
        Task::Brdf => {
            let light = view.light.expect("checked above");
            let camera = view.camera_center();
            let scale = mesh.bounding_diagonal();
            for (row, &(pixel, sample)) in flat.iter().enumerate() {
                let params: [f64; PARAM_COUNT] =
                    std::array::from_fn(|j| y[(row, j)].to_f64());
                let point = mesh
                    .point_from_barycentric(&sample)
                    .expect("intersection sample is valid");
                let normal =
                    crate::render::shading_normal(mesh, vertex_normals, &sample);
                let v = (camera - point).normalize();
                let occluded =
                    shadow_test(bvh, mesh, point, normal, light.direction, scale);
                let rgb = shade_directional(
                    &DisneyParams::from_array(params),
                    normal,
                    light.direction,
                    v,
                    light.intensity,
                    occluded,
                );
                img.pixels_mut()[pixel] = [rgb[0] as f32, rgb[1] as f32, rgb[2] as f32];
                mask[pixel] = true;
            }
        }
    }
    Ok((img, mask))
}

/// Decode the model's twelve BRDF parameters at arbitrary surface samples.
pub fn decode_params<T: Scalar>(
    features: &FeatureSet<T>,
    mlp: &Mlp<T>,
    samples: &[SurfaceSample],
) -> Result<Array2<T>> {
    let encoded = features.encode_features_only(samples)?;
    Ok(mlp.forward_inference(encoded.view()))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub views: Vec<MetricReport>,
    #[serde(serialize_with = "crate::metrics::serialize_db")]
    pub mean_psnr_db: f64,
    pub mean_dssim: f64,
    pub mean_dssim_x100: f64,
    /// Everything needed to evaluate the model: decoder plus all feature
    /// matrices.
    pub param_count: usize,
    /// True when metrics were computed after gamma mapping (BRDF task).
    pub gamma_space: bool,
}

/// Per-channel gamma mapping of a linear-radiance image.
pub fn gamma_image(img: &ImageBuf) -> ImageBuf {
    let mut out = img.clone();
    for p in out.pixels_mut() {
        for c in p.iter_mut() {
            *c = gamma_map(*c as f64) as f32;
        }
    }
    out
}

/// Render and score every view (each must carry a target image). Masked
/// metrics: only ray-hit pixels are compared. For the BRDF task both sides
/// are gamma-mapped first.
pub fn evaluate<T: Scalar>(
    features: &FeatureSet<T>,
    mlp: &Mlp<T>,
    mesh: &Mesh,
    bvh: &Bvh,
    views: &[View],
    task: Task,
    vertex_normals: Option<&[nalgebra::Vector3<f64>]>,
) -> Result<EvalReport> {
    if views.is_empty() {
        return Err(Error::InvalidArgument("no views to evaluate".into()));
    }
    let mut reports = Vec::with_capacity(views.len());
    for (i, view) in views.iter().enumerate() {
        let target = view.image.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("view {i} has no target image"))
        })?;
        let (rendered, mask) =
            render_model_view(features, mlp, mesh, bvh, view, task, [0.0; 3], vertex_normals)?;
        let report = match task {
            Task::Texture => metrics::report(&rendered, target, Some(&mask))?,
            Task::Brdf => {
                metrics::report(&gamma_image(&rendered), &gamma_image(target), Some(&mask))?
            }
        };
        reports.push(report);
    }
    let n = reports.len() as f64;
    let mean_psnr_db = reports.iter().map(|r| r.psnr_db).sum::<f64>() / n;
    let mean_dssim = reports.iter().map(|r| r.dssim).sum::<f64>() / n;
    Ok(EvalReport {
        mean_psnr_db,
        mean_dssim,
        mean_dssim_x100: mean_dssim * 100.0,
        param_count: features.param_count() + mlp.param_count(),
        gamma_space: task == Task::Brdf,
        views: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::nn::OutputActivation;
    use crate::simplify::build_hierarchy;
    use crate::synth::{icosphere, orbit_view, test_orbit};

    #[test]
    fn untrained_model_scores_like_its_constant_image() {
        // Zero features decode to sigmoid(bias) everywhere, so the masked
        // PSNR must match the PSNR of the constant image analytically.
        let mesh = icosphere(2, 1.0);
        let bvh = Bvh::build(&mesh);
        let h = Arc::new(build_hierarchy(&mesh, &[1.0, 0.5]).unwrap());
        let features: FeatureSet<f64> = FeatureSet::zeros(h.clone(), 4);
        let mlp: Mlp<f64> = Mlp::new(&[4, 8, 3], OutputActivation::Sigmoid, 3);

        let mut view = test_orbit(0, 2, 64, 64);
        let (gt, mask) = crate::render::render_field_with_mask(
            &mesh,
            &bvh,
            &view,
            |s| {
                let p = mesh.point_from_barycentric(s).unwrap();
                crate::synth::checker_color(&p)
            },
            [0.0; 3],
        );
        view.image = Some(gt.clone());

        let report = evaluate(&features, &mlp, &mesh, &bvh, &[view], Task::Texture, None).unwrap();

        // Constant prediction: sigmoid of the output bias on zero input
        // (zero features -> ReLU stack collapses to the biases).
        let zero_in = ndarray::Array2::zeros((1, 4));
        let constant = mlp.forward_inference(zero_in.view());
        let mut constant_img = gt.clone();
        for p in constant_img.pixels_mut() {
            *p = [
                constant[(0, 0)] as f32,
                constant[(0, 1)] as f32,
                constant[(0, 2)] as f32,
            ];
        }
        let expect = crate::metrics::psnr(&constant_img, &gt, Some(&mask)).unwrap();
        assert!(
            (report.views[0].psnr_db - expect).abs() < 1.0,
            "{} vs {expect}",
            report.views[0].psnr_db
        );
    }

    #[test]
    fn self_evaluation_is_perfect() {
        // Evaluating against the model's own rendering gives infinite PSNR
        // and zero DSSIM.
        let mesh = icosphere(2, 1.0);
        let bvh = Bvh::build(&mesh);
        let h = Arc::new(build_hierarchy(&mesh, &[1.0]).unwrap());
        let features: FeatureSet<f32> = FeatureSet::init(h.clone(), 4, 5);
        let mlp: Mlp<f32> = Mlp::new(&[4, 16, 3], OutputActivation::Sigmoid, 6);
        let mut view = orbit_view(40.0, 18.0, 2.8, 48, 48, 40.0);
        let (rendered, _) =
            render_model_view(&features, &mlp, &mesh, &bvh, &view, Task::Texture, [0.0; 3], None)
                .unwrap();
        view.image = Some(rendered);
        let report = evaluate(&features, &mlp, &mesh, &bvh, &[view], Task::Texture, None).unwrap();
        assert!(report.views[0].psnr_db.is_infinite());
        assert_eq!(report.views[0].dssim, 0.0);
    }
}
