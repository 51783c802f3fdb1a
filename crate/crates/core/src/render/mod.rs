//! Rendering: cameras and rays, BVH-accelerated intersection, Disney BRDF
//! shading, gamma mapping, and image assembly.

pub mod brdf;
pub mod bvh;
pub mod camera;
pub mod image;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::mesh::{Mesh, SurfaceSample};

pub use brdf::{disney_brdf_eval, gamma_map, gamma_map_s, shade_directional, DisneyParams};
pub use bvh::{shadow_test, Bvh, Hit};
pub use camera::{load_view, load_views_dir, DirectionalLight, Ray, View, ViewFile};
pub use image::ImageBuf;

/// Shading normal at a surface sample: the geometric face normal by
/// default, or the barycentrically interpolated vertex normal when a
/// precomputed per-vertex normal table is supplied.
pub fn shading_normal(
    mesh: &Mesh,
    vertex_normals: Option<&[Vector3<f64>]>,
    sample: &SurfaceSample,
) -> Vector3<f64> {
    match vertex_normals {
        None => mesh
            .face_normal(sample.face)
            .expect("validated mesh has no degenerate faces"),
        Some(normals) => {
            let f = mesh.faces()[sample.face as usize];
            let blended = sample.bary[0] * normals[f[0] as usize]
                + sample.bary[1] * normals[f[1] as usize]
                + sample.bary[2] * normals[f[2] as usize];
            let len = blended.norm();
            if len > 1e-12 {
                blended / len
            } else {
                mesh.face_normal(sample.face)
                    .expect("validated mesh has no degenerate faces")
            }
        }
    }
}

/// Render one view of a surface field: per pixel, the nearest ray hit is
/// fed to `field`; misses get the background color. Also returns the hit
/// mask used by masked metrics.
pub fn render_field_with_mask<F>(
    mesh: &Mesh,
    bvh: &Bvh,
    view: &View,
    field: F,
    background: [f32; 3],
) -> (ImageBuf, Vec<bool>)
where
    F: Fn(&SurfaceSample) -> [f32; 3] + Sync,
{
    let mut img = ImageBuf::new(view.width, view.height, background);
    let mut mask = vec![false; view.width * view.height];
    let width = view.width;
    img.pixels_mut()
        .par_chunks_mut(width)
        .zip(mask.par_chunks_mut(width))
        .enumerate()
        .for_each(|(y, (row, mask_row))| {
            for x in 0..width {
                let ray = view.ray_for_pixel(x, y);
                if let Some(hit) = bvh.intersect(mesh, &ray) {
                    row[x] = field(&hit.sample);
                    mask_row[x] = true;
                }
            }
        });
    (img, mask)
}

/// [`render_field_with_mask`] without the mask.
pub fn render_field<F>(
    mesh: &Mesh,
    bvh: &Bvh,
    view: &View,
    field: F,
    background: [f32; 3],
) -> ImageBuf
where
    F: Fn(&SurfaceSample) -> [f32; 3] + Sync,
{
    render_field_with_mask(mesh, bvh, view, field, background).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Point3};

    use crate::mesh::Mesh;
    use crate::synth::icosphere;

    #[test]
    fn smooth_normals_interpolate_toward_radial() {
        let mesh = icosphere(3, 1.0);
        let normals = mesh.vertex_normals();
        let sample = SurfaceSample {
            face: 11,
            bary: [0.2, 0.5, 0.3],
        };
        let geometric = shading_normal(&mesh, None, &sample);
        let smooth = shading_normal(&mesh, Some(&normals), &sample);
        assert!((geometric.norm() - 1.0).abs() < 1e-12);
        assert!((smooth.norm() - 1.0).abs() < 1e-12);
        // On a sphere the smooth normal tracks the radial direction of the
        // sample point more closely than the flat face normal does.
        let p = mesh.point_from_barycentric(&sample).unwrap();
        let radial = p.coords.normalize();
        assert!(smooth.dot(&radial) > geometric.dot(&radial) - 1e-12);
        assert!(smooth.dot(&radial) > 0.9999);
    }

    fn look_down_view(size: usize) -> View {
        let f = size as f64;
        let k = Matrix3::new(f, 0.0, f / 2.0, 0.0, f, f / 2.0, 0.0, 0.0, 1.0);
        View::new(k, Matrix3::identity(), Vector3::new(0.0, 0.0, 3.0), size, size).unwrap()
    }

    #[test]
    fn constant_field_renders_silhouette() {
        let mesh = icosphere(2, 1.0);
        let bvh = Bvh::build(&mesh);
        let view = look_down_view(48);
        let (img, mask) = render_field_with_mask(&mesh, &bvh, &view, |_| [1.0, 1.0, 1.0], [0.0; 3]);
        let hits = mask.iter().filter(|&&m| m).count();
        assert!(hits > 100, "sphere should cover pixels, got {hits}");
        for (p, &m) in img.pixels().iter().zip(&mask) {
            if m {
                assert_eq!(*p, [1.0, 1.0, 1.0]);
            } else {
                assert_eq!(*p, [0.0, 0.0, 0.0]);
            }
        }
        // Center pixel looks straight at the sphere.
        assert!(mask[24 * 48 + 24]);
        // Corners miss.
        assert!(!mask[0]);
    }

    #[test]
    fn miss_everything_camera_gives_uniform_background() {
        let mesh = icosphere(1, 1.0);
        let bvh = Bvh::build(&mesh);
        let f = 32.0;
        let k = Matrix3::new(f, 0.0, 16.0, 0.0, f, 16.0, 0.0, 0.0, 1.0);
        //

        // Camera sits far on +z looking further along +z, away from the mesh.
        let view = View::new(k, Matrix3::identity(), Vector3::new(0.0, 0.0, -10.0), 32, 32)
            .unwrap();
        let (img, mask) = render_field_with_mask(&mesh, &bvh, &view, |_| [1.0; 3], [0.25, 0.5, 0.75]);
        assert!(mask.iter().all(|&m| !m));
        assert!(img.pixels().iter().all(|&p| p == [0.25, 0.5, 0.75]));
    }

    #[test]
    fn barycentric_field_matches_analytic_rasterization() {
        // A single triangle rendered with the barycentric-to-rgb identity
        // must equal an analytic evaluation at every covered pixel.
        let mesh = Mesh::new(
            vec![
                Point3::new(-1.0, -1.0, 0.0),
                Point3::new(1.0, -1.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let bvh = Bvh::build(&mesh);
        let view = look_down_view(64);
        let (img, mask) = render_field_with_mask(
            &mesh,
            &bvh,
            &view,
            |s| [s.bary[0] as f32, s.bary[1] as f32, s.bary[2] as f32],
            [0.0; 3],
        );
        let mut checked = 0;
        for y in 0..64 {
            for x in 0..64 {
                if !mask[y * 64 + x] {
                    continue;
                }
                // Analytic: unproject the pixel ray onto z = 0 and compute
                // barycentrics directly.
                let ray = view.ray_for_pixel(x, y);
                let t = -ray.origin.z / ray.direction.z;
                let p = ray.origin + ray.direction * t;
                let bary = mesh.barycentric_coords(0, p).unwrap();
                let got = img.get(x, y);
                for k in 0..3 {
                    assert!(
                        (got[k] as f64 - bary[k]).abs() < 1e-5,
                        "pixel ({x},{y}) channel {k}"
                    );
                }
                checked += 1;
            }
        }
        assert!(checked > 200, "only {checked} covered pixels");
    }
}
