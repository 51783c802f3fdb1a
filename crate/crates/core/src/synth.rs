//! Synthetic scene generation: icospheres, a procedural checker texture,
//! orbiting cameras, and the three scene kinds used by the end-to-end
//! tests (checker-sphere, two-material-sphere, deform-pair).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::render::brdf::{shade_directional, DisneyParams};
use crate::render::bvh::{shadow_test, Bvh};
use crate::render::camera::{View, ViewFile};
use crate::render::image::ImageBuf;
use crate::render::render_field_with_mask;

/// Icosphere: subdivided icosahedron projected onto a sphere. Subdivision
/// `n` yields `10 * 4^n + 2` vertices.
pub fn icosphere(subdivisions: u32, radius: f64) -> Mesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0u32; 3];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = if a < b { (a, b) } else { (b, a) };
                mids[k] = *midpoint.entry(key).or_insert_with(|| {
                    let m = (vertices[a as usize] + vertices[b as usize]).normalize();
                    vertices.push(m);
                    (vertices.len() - 1) as u32
                });
            }
            next_faces.push([f[0], mids[0], mids[2]]);
            next_faces.push([f[1], mids[1], mids[0]]);
            next_faces.push([f[2], mids[2], mids[1]]);
            next_faces.push([mids[0], mids[1], mids[2]]);
        }
        faces = next_faces;
    }

    let vertices = vertices
        .into_iter()
        .map(|v| Point3::from(v * radius))
        .collect();
    Mesh::new(vertices, faces).expect("icosphere construction is valid")
}

/// Smooth-edged 3D checker: the sign pattern of a sine product, pushed
/// through a sigmoid so the transitions have finite bandwidth, under a
/// low-frequency color tint. The tint gives the texture a locally
/// predictable component, the way natural textures have one.
pub fn checker_color(p: &Point3<f64>) -> [f32; 3] {
    const FREQ: f64 = 2.0;
    const STEEPNESS: f64 = 12.0;
    const COLOR_A: [f64; 3] = [0.90, 0.25, 0.12];
    const COLOR_B: [f64; 3] = [0.08, 0.32, 0.85];
    let s = (PI * FREQ * p.x).sin() * (PI * FREQ * p.y).sin() * (PI * FREQ * p.z).sin();
    let t = 1.0 / (1.0 + (-STEEPNESS * s).exp());
    let tint = [
        0.7 + 0.3 * (1.1 * p.x + 0.5 * p.z + 0.4).sin(),
        0.7 + 0.3 * (1.0 * p.y + 0.6 * p.x - 0.7).sin(),
        0.7 + 0.3 * (0.9 * p.z + 0.5 * p.y + 1.3).sin(),
    ];
    std::array::from_fn(|k| ((COLOR_A[k] + (COLOR_B[k] - COLOR_A[k]) * t) * tint[k]) as f32)
}

/// Camera orbiting the origin: spherical position, looking at the center,
/// world +z up, y-down image convention.
pub fn orbit_view(
    azimuth_deg: f64,
    elevation_deg: f64,
    distance: f64,
    width: usize,
    height: usize,
    fov_deg: f64,
) -> View {
    let az = azimuth_deg.to_radians();
    let el = elevation_deg.to_radians();
    let eye = Point3::new(
        distance * el.cos() * az.cos(),
        distance * el.cos() * az.sin(),
        distance * el.sin(),
    );
    let forward = (Point3::origin() - eye).normalize();
    let up = Vector3::new(0.0, 0.0, 1.0);
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right).normalize();
    let rotation = Matrix3::from_rows(&[
        right.transpose(),
        down.transpose(),
        forward.transpose(),
    ]);
    let translation = -(rotation * eye.coords);
    let focal = 0.5 * width as f64 / (0.5 * fov_deg.to_radians()).tan();
    let intrinsics = Matrix3::new(
        focal,
        0.0,
        width as f64 / 2.0,
        0.0,
        focal,
        height as f64 / 2.0,
        0.0,
        0.0,
        1.0,
    );
    View::new(intrinsics, rotation, translation, width, height)
        .expect("orbit view construction is valid")
}

/// Evenly spread unit directions (Fibonacci sphere).
pub fn fibonacci_directions(count: usize) -> Vec<Vector3<f64>> {
    let golden = PI * (3.0 - 5.0f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let theta = golden * i as f64;
            Vector3::new(r * theta.cos(), r * theta.sin(), z)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    CheckerSphere,
    TwoMaterialSphere,
    DeformPair,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "checker-sphere" => Ok(SceneKind::CheckerSphere),
            "two-material-sphere" => Ok(SceneKind::TwoMaterialSphere),
            "deform-pair" => Ok(SceneKind::DeformPair),
            other => Err(Error::InvalidArgument(format!(
                "unknown scene kind {other:?} (expected checker-sphere, \
                 two-material-sphere, or deform-pair)"
            ))),
        }
    }
}

/// Generation knobs. `lights`/`test_lights` only apply to the BRDF scene.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub views: usize,
    pub test_views: usize,
    pub image_size: usize,
    pub lights: usize,
    pub test_lights: usize,
    pub subdivisions: u32,
}

impl SceneSpec {
    pub fn defaults(kind: SceneKind) -> Self {
        match kind {
            SceneKind::CheckerSphere => SceneSpec {
                kind,
                views: 5,
                test_views: 2,
                image_size: 256,
                lights: 0,
                test_lights: 0,
                subdivisions: 5,
            },
            SceneKind::TwoMaterialSphere => SceneSpec {
                kind,
                views: 10,
                test_views: 4,
                image_size: 128,
                lights: 8,
                test_lights: 4,
                subdivisions: 4,
            },
            SceneKind::DeformPair => SceneSpec {
                kind,
                views: 5,
                test_views: 2,
                image_size: 192,
                lights: 0,
                test_lights: 0,
                subdivisions: 4,
            },
        }
    }
}

/// Training camera ring: evenly spaced azimuths with elevations cycling
/// high/low/southern so both hemispheres receive supervision.
pub fn train_orbit(index: usize, count: usize, width: usize, height: usize) -> View {
    let az = 360.0 * index as f64 / count as f64;
    let el = if index % 3 == 2 {
        -18.0
    } else if index % 2 == 1 {
        35.0
    } else {
        15.0
    };
    orbit_view(az, el, 2.8, width, height, 40.0)
}

/// Held-out cameras sit between the training azimuths, inside the band the
/// training ring covers.
pub fn test_orbit(index: usize, count: usize, width: usize, height: usize) -> View {
    let az = 36.0 + 360.0 * index as f64 / count.max(1) as f64;
    let el = if index.is_multiple_of(2) { 22.0 } else { 8.0 };
    orbit_view(az, el, 2.8, width, height, 40.0)
}

/// Two ground-truth materials, split across the sphere by the sign of the
/// face centroid's z coordinate.
pub fn two_material_set() -> [DisneyParams<f64>; 2] {
    [
        DisneyParams {
            base_color: [0.80, 0.26, 0.18],
            subsurface: 0.10,
            metallic: 0.0,
            specular: 0.35,
            specular_tint: 0.0,
            roughness: 0.55,
            sheen: 0.20,
            sheen_tint: 0.30,
            clearcoat: 0.0,
            clearcoat_gloss: 0.50,
        },
        DisneyParams {
            base_color: [0.12, 0.32, 0.78],
            subsurface: 0.0,
            metallic: 0.10,
            specular: 0.55,
            specular_tint: 0.20,
            roughness: 0.40,
            sheen: 0.0,
            sheen_tint: 0.0,
            clearcoat: 0.25,
            clearcoat_gloss: 0.85,
        },
    ]
}

/// Material assignment rule for the two-material sphere.
pub fn material_index_for_face(mesh: &Mesh, face: u32) -> usize {
    let [a, b, c] = mesh.face_points(face);
    if (a.z + b.z + c.z) / 3.0 >= 0.0 {
        0
    } else {
        1
    }
}

/// Ground-truth materials file written alongside the BRDF scene.
#[derive(Debug, Serialize, Deserialize)]
pub struct MaterialsFile {
    /// Assignment rule; currently always "centroid-z".
    pub split: String,
    /// Parameter vectors in the documented 12-value order.
    pub materials: Vec<[f64; 12]>,
}

/// Radial sinusoidal displacement; topology (and the face array) is
/// untouched.
pub fn sinusoidal_deform(mesh: &Mesh) -> Mesh {
    let vertices = mesh
        .vertices()
        .iter()
        .map(|p| {
            let scale = 1.0 + 0.22 * (3.0 * p.y + 0.8).sin();
            Point3::from(p.coords * scale)
        })
        .collect();
    Mesh::new(vertices, mesh.faces().to_vec()).expect("deformation keeps faces nondegenerate")
}

fn ensure_dirs(out: &Path) -> Result<()> {
    for sub in ["views", "views_test", "images"] {
        fs::create_dir_all(out.join(sub)).map_err(|e| Error::io(out.join(sub), e))?;
    }
    Ok(())
}

/// Generate a scene directory: `mesh.obj`, `views/*.json`,
/// `views_test/*.json`, `images/*`. Returns the number of (view, light)
/// pairs written for training.
pub fn generate_scene(spec: &SceneSpec, out: impl AsRef<Path>) -> Result<usize> {
    let out = out.as_ref();
    if spec.views == 0 {
        return Err(Error::InvalidArgument("scene needs at least one view".into()));
    }
    ensure_dirs(out)?;
    match spec.kind {
        SceneKind::CheckerSphere => generate_checker(spec, out, false),
        SceneKind::DeformPair => generate_checker(spec, out, true),
        SceneKind::TwoMaterialSphere => generate_two_material(spec, out),
    }
}

fn write_texture_view(
    out: &Path,
    mesh: &Mesh,
    bvh: &Bvh,
    view: &View,
    json_rel: &str,
    image_rel: &str,
) -> Result<()> {
    let (img, _) = render_field_with_mask(
        mesh,
        bvh,
        view,
        |sample| {
            let p = mesh
                .point_from_barycentric(sample)
                .expect("sample from intersection is valid");
            checker_color(&p)
        },
        [0.0; 3],
    );
    img.save_png(out.join(image_rel))?;
    ViewFile::from_view(view, Some(image_rel.to_string())).save(out.join(json_rel))
}

fn generate_checker(spec: &SceneSpec, out: &Path, deform_pair: bool) -> Result<usize> {
    let mesh = icosphere(spec.subdivisions, 1.0);
    let bvh = Bvh::build(&mesh);
    mesh.save_obj(out.join("mesh.obj"))?;
    if deform_pair {
        sinusoidal_deform(&mesh).save_obj(out.join("deformed.obj"))?;
    }
    let (w, h) = (spec.image_size, spec.image_size);
    for i in 0..spec.views {
        let view = train_orbit(i, spec.views, w, h);
        write_texture_view(
            out,
            &mesh,
            &bvh,
            &view,
            &format!("views/view_{i:03}.json"),
            &format!("images/view_{i:03}.png"),
        )?;
    }
    for j in 0..spec.test_views {
        let view = test_orbit(j, spec.test_views, w, h);
        write_texture_view(
            out,
            &mesh,
            &bvh,
            &view,
            &format!("views_test/test_{j:03}.json"),
            &format!("images/test_{j:03}.png"),
        )?;
    }
    Ok(spec.views)
}

fn render_brdf_target(
    mesh: &Mesh,
    bvh: &Bvh,
    view: &View,
    materials: &[DisneyParams<f64>; 2],
) -> ImageBuf {
    let light = view.light.expect("BRDF views carry a light");
    let scale = mesh.bounding_diagonal();
    let camera = view.camera_center();
    let (img, _) = render_field_with_mask(
        mesh,
        bvh,
        view,
        |sample| {
            let p = mesh
                .point_from_barycentric(sample)
                .expect("sample from intersection is valid");
            let n = mesh
                .face_normal(sample.face)
                .expect("mesh faces are nondegenerate");
            let v = (camera - p).normalize();
            let occluded = shadow_test(bvh, mesh, p, n, light.direction, scale);
            let rgb = shade_directional(
                &materials[material_index_for_face(mesh, sample.face)],
                n,
                light.direction,
                v,
                light.intensity,
                occluded,
            );
            [rgb[0] as f32, rgb[1] as f32, rgb[2] as f32]
        },
        [0.0; 3],
    );
    img
}

fn generate_two_material(spec: &SceneSpec, out: &Path) -> Result<usize> {
    if spec.lights == 0 {
        return Err(Error::InvalidArgument("BRDF scene needs at least one light".into()));
    }
    let mesh = icosphere(spec.subdivisions, 1.0);
    let bvh = Bvh::build(&mesh);
    mesh.save_obj(out.join("mesh.obj"))?;
    let materials = two_material_set();
    let mats_file = MaterialsFile {
        split: "centroid-z".into(),
        materials: materials.iter().map(|m| m.to_array()).collect(),
    };
    fs::write(
        out.join("materials.json"),
        serde_json::to_string_pretty(&mats_file)?,
    )
    .map_err(|e| Error::io(out.join("materials.json"), e))?;

    let (w, h) = (spec.image_size, spec.image_size);
    let train_lights = fibonacci_directions(spec.lights);
    let test_lights = fibonacci_directions(spec.test_lights.max(1) * 3 + 1);
    let mut written = 0usize;
    for i in 0..spec.views {
        let base = train_orbit(i, spec.views, w, h);
        for (li, dir) in train_lights.iter().enumerate() {
            let view = base.clone().with_light(*dir, 1.0)?;
            let img = render_brdf_target(&mesh, &bvh, &view, &materials);
            let image_rel = format!("images/view_{i:03}_{li:02}.pfm");
            img.save_pfm(out.join(&image_rel))?;
            ViewFile::from_view(&view, Some(image_rel.clone()))
                .save(out.join(format!("views/view_{i:03}_{li:02}.json")))?;
            written += 1;
        }
    }
    for j in 0..spec.test_views {
        let base = test_orbit(j, spec.test_views, w, h);
        for li in 0..spec.test_lights {
            // Sample a rotated subset so test lights differ from training.
            let dir = test_lights[(li * 3 + 1) % test_lights.len()];
            let view = base.clone().with_light(dir, 1.0)?;
            let img = render_brdf_target(&mesh, &bvh, &view, &materials);
            let image_rel = format!("images/test_{j:03}_{li:02}.pfm");
            img.save_pfm(out.join(&image_rel))?;
            ViewFile::from_view(&view, Some(image_rel.clone()))
                .save(out.join(format!("views_test/test_{j:03}_{li:02}.json")))?;
        }
    }
    Ok(written)
}
