//! Pinhole cameras: view descriptions, JSON (de)serialization, and ray
//! generation.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::image::ImageBuf;

/// Directional light: `direction` points from the surface toward the light,
/// in world coordinates, and is kept unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalLight {
    pub direction: Vector3<f64>,
    pub intensity: f64,
}

/// A posed pinhole camera, optionally paired with a target image and a
/// directional light. Extrinsics map world to camera: `x_cam = R x + t`,
/// with the camera looking down +z and image rows growing downward.
#[derive(Debug, Clone)]
pub struct View {
    pub intrinsics: Matrix3<f64>,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub width: usize,
    pub height: usize,
    pub image: Option<ImageBuf>,
    pub light: Option<DirectionalLight>,
}

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub direction: Vector3<f64>,
}

impl View {
    pub fn new(
        intrinsics: Matrix3<f64>,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let view = View {
            intrinsics,
            rotation,
            translation,
            width,
            height,
            image: None,
            light: None,
        };
        view.check()?;
        Ok(view)
    }

    fn check(&self) -> Result<()> {
        let gram = self.rotation.transpose() * self.rotation;
        let dev = (gram - Matrix3::identity()).abs().max();
        if dev > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "rotation is not orthonormal (deviation {dev:.2e})"
            )));
        }
        if self.intrinsics.determinant().abs() < 1e-12 {
            return Err(Error::InvalidArgument("singular intrinsic matrix".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("empty image plane".into()));
        }
        Ok(())
    }

    pub fn with_light(mut self, direction: Vector3<f64>, intensity: f64) -> Result<Self> {
        let norm = direction.norm();
        if norm < 1e-12 {
            return Err(Error::InvalidArgument("zero light direction".into()));
        }
        if intensity < 0.0 {
            return Err(Error::InvalidArgument("negative light intensity".into()));
        }
        self.light = Some(DirectionalLight {
            direction: direction / norm,
            intensity,
        });
        Ok(self)
    }

    /// Camera center in world coordinates.
    pub fn camera_center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    /// World-space ray through the center of pixel `(x, y)`.
    pub fn ray_for_pixel(&self, x: usize, y: usize) -> Ray {
        let k_inv = self
            .intrinsics
            .try_inverse()
            .expect("intrinsics validated invertible");
        let pixel = Vector3::new(x as f64 + 0.5, y as f64 + 0.5, 1.0);
        let dir_cam = k_inv * pixel;
        let dir_world = (self.rotation.transpose() * dir_cam).normalize();
        Ray {
            origin: self.camera_center(),
            direction: dir_world,
        }
    }

    /// Rays through all pixel centers in row-major order.
    pub fn generate_rays(&self) -> Vec<Ray> {
        let k_inv = self
            .intrinsics
            .try_inverse()
            .expect("intrinsics validated invertible");
        let origin = self.camera_center();
        let rt = self.rotation.transpose();
        let mut rays = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let pixel = Vector3::new(x as f64 + 0.5, y as f64 + 0.5, 1.0);
                let dir = (rt * (k_inv * pixel)).normalize();
                rays.push(Ray {
                    origin,
                    direction: dir,
                });
            }
        }
        rays
    }
}

/// On-disk JSON layout of a view. The image path is relative to the scene
/// root (the parent of the directory holding the JSON file).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewFile {
    #[serde(rename = "K")]
    pub k: [[f64; 3]; 3],
    #[serde(rename = "R")]
    pub r: [[f64; 3]; 3],
    pub t: [f64; 3],
    pub width: usize,
    pub height: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub light_dir: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub light_intensity: Option<f64>,
}

impl ViewFile {
    pub fn from_view(view: &View, image: Option<String>) -> Self {
        let m = |m: &Matrix3<f64>| {
            [
                [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
                [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
                [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            ]
        };
        ViewFile {
            k: m(&view.intrinsics),
            r: m(&view.rotation),
            t: [view.translation.x, view.translation.y, view.translation.z],
            width: view.width,
            height: view.height,
            image,
            light_dir: view.light.map(|l| [l.direction.x, l.direction.y, l.direction.z]),
            light_intensity: view.light.map(|l| l.intensity),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn into_view(self, scene_root: Option<&Path>) -> Result<View> {
        let rows = |a: [[f64; 3]; 3]| {
            Matrix3::new(
                a[0][0], a[0][1], a[0][2], //
                a[1][0], a[1][1], a[1][2], //
                a[2][0], a[2][1], a[2][2],
            )
        };
        let mut view = View::new(
            rows(self.k),
            rows(self.r),
            Vector3::new(self.t[0], self.t[1], self.t[2]),
            self.width,
            self.height,
        )?;
        match (self.light_dir, self.light_intensity) {
            (Some(d), intensity) => {
                view = view.with_light(
                    Vector3::new(d[0], d[1], d[2]),
                    intensity.unwrap_or(1.0),
                )?;
            }
            (None, Some(_)) => {
                return Err(Error::InvalidArgument(
                    "light_intensity given without light_dir".into(),
                ));
            }
            (None, None) => {}
        }
        if let (Some(rel), Some(root)) = (self.image.as_ref(), scene_root) {
            view.image = Some(ImageBuf::load_auto(root.join(rel))?);
        }
        Ok(view)
    }
}

/// Load a view JSON and its target image. The scene root is taken to be the
/// parent of the JSON's directory, matching the `scene/views/*.json`,
/// `scene/images/*` layout.
pub fn load_view(path: impl AsRef<Path>) -> Result<View> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ViewFile = serde_json::from_str(&text)?;
    let root: Option<PathBuf> = path
        .parent()
        .and_then(|views_dir| views_dir.parent())
        .map(|p| p.to_path_buf());
    file.into_view(root.as_deref())
}

/// Load every `*.json` view in a directory, sorted by file name.
pub fn load_views_dir(dir: impl AsRef<Path>) -> Result<Vec<View>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no view JSON files in {}",
            dir.display()
        )));
    }
    paths.iter().map(load_view).collect()
}
