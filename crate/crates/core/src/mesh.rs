//! Triangle-mesh data model, OBJ I/O, and geometric utilities.
//!
//! A [`Mesh`] is immutable after construction and safe to share across
//! threads. Faces are stored as 0-based index triples; the OBJ reader and
//! writer translate from/to the 1-based on-disk convention.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Triangle mesh: vertex positions plus face index triples.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
}

/// A point on the surface, identified by a face and barycentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub face: u32,
    pub bary: [f64; 3],
}

impl SurfaceSample {
    /// Validated constructor: weights must be nonnegative and sum to 1
    /// within 1e-9.
    pub fn new(face: u32, bary: [f64; 3]) -> Result<Self> {
        let sum: f64 = bary.iter().sum();
        if bary.iter().any(|&l| l < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "barycentric triple {bary:?} must be nonnegative and sum to 1"
            )));
        }
        Ok(SurfaceSample { face, bary })
    }
}

impl Mesh {
    /// Build a mesh and run [`Mesh::validate`].
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = Mesh { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    /// Index-range validity, minimum sizes, and rejection of degenerate
    /// (zero-area or repeated-index) faces.
    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 3 {
            return Err(Error::InvalidMesh(format!(
                "need at least 3 vertices, got {}",
                self.vertices.len()
            )));
        }
        if self.faces.is_empty() {
            return Err(Error::InvalidMesh("need at least 1 face".into()));
        }
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                if v as usize >= n {
                    return Err(Error::IndexOutOfRange {
                        what: "face vertex index",
                        index: v as usize,
                        limit: n,
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} repeats a vertex index: {f:?}"
                )));
            }
        }
        let degenerate: Vec<usize> = (0..self.faces.len())
            .filter(|&fi| self.face_area_normal(fi as u32).norm() <= degeneracy_threshold(&self.face_points(fi as u32)))
            .collect();
        if !degenerate.is_empty() {
            return Err(Error::DegenerateFaces(degenerate));
        }
        Ok(())
    }

    pub fn face_points(&self, face: u32) -> [Point3<f64>; 3] {
        let f = self.faces[face as usize];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    /// Cross-product normal of a face; its norm is twice the face area.
    pub fn face_area_normal(&self, face: u32) -> Vector3<f64> {
        let [a, b, c] = self.face_points(face);
        (b - a).cross(&(c - a))
    }

    /// Unit face normal, or `None` for a degenerate face.
    pub fn face_normal(&self, face: u32) -> Option<Vector3<f64>> {
        let n = self.face_area_normal(face);
        let len = n.norm();
        if len <= degeneracy_threshold(&self.face_points(face)) {
            None
        } else {
            Some(n / len)
        }
    }

    /// Area-weighted unit vertex normals; vertices without incident faces
    /// get (0, 0, 1).
    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for fi in 0..self.faces.len() {
            let n = self.face_area_normal(fi as u32);
            for &v in &self.faces[fi] {
                acc[v as usize] += n;
            }
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 1e-300 {
                    n / len
                } else {
                    Vector3::new(0.0, 0.0, 1.0)
                }
            })
            .collect()
    }

    /// Axis-aligned bounding box.
    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    pub fn bounding_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Barycentric coordinates of `point` in `face`. Out-of-plane points are
    /// first projected orthogonally onto the triangle plane; the result is
    /// clamped to `[0, 1]` per component and renormalized to sum 1.
    pub fn barycentric_coords(&self, face: u32, point: Point3<f64>) -> Result<[f64; 3]> {
        if face as usize >= self.faces.len() {
            return Err(Error::IndexOutOfRange {
                what: "face index",
                index: face as usize,
                limit: self.faces.len(),
            });
        }
        let corners = self.face_points(face);
        let [a, b, c] = corners;
        let e0 = b - a;
        let e1 = c - a;
        let normal = e0.cross(&e1);
        let n2 = normal.norm_squared();
        let thresh = degeneracy_threshold(&corners);
        if normal.norm() <= thresh {
            return Err(Error::DegenerateFaces(vec![face as usize]));
        }
        // Orthogonal projection onto the triangle plane.
        let offset = (point - a).dot(&normal) / n2;
        let projected = point - normal * offset;

        let v2 = projected - a;
        let d00 = e0.dot(&e0);
        let d01 = e0.dot(&e1);
        let d11 = e1.dot(&e1);
        let d20 = v2.dot(&e0);
        let d21 = v2.dot(&e1);
        let denom = d00 * d11 - d01 * d01;
        let l2 = (d11 * d20 - d01 * d21) / denom;
        let l3 = (d00 * d21 - d01 * d20) / denom;
        let l1 = 1.0 - l2 - l3;
        Ok(normalize_bary([l1, l2, l3]))
    }

    /// Affine combination of the face corners with the sample's weights.
    pub fn point_from_barycentric(&self, sample: &SurfaceSample) -> Result<Point3<f64>> {
        if sample.face as usize >= self.faces.len() {
            return Err(Error::IndexOutOfRange {
                what: "face index",
                index: sample.face as usize,
                limit: self.faces.len(),
            });
        }
        let [a, b, c] = self.face_points(sample.face);
        let [l1, l2, l3] = sample.bary;
        Ok(Point3::from(a.coords * l1 + b.coords * l2 + c.coords * l3))
    }

    /// Parse an ASCII OBJ document. Only `v` and `f` records are used;
    /// polygonal faces are fan-triangulated and `/...` attribute suffixes
    /// are stripped. In-file indices are 1-based.
    pub fn from_obj_str(text: &str) -> Result<Self> {
        let mut vertices: Vec<Point3<f64>> = Vec::new();
        // Face corner indices together with the source line, for bounds
        // reporting after the whole file is read.
        let mut faces: Vec<([u32; 3], usize)> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut tokens = trimmed.split_whitespace();
            match tokens.next() {
                Some("v") => {
                    let mut coords = [0.0f64; 3];
                    for coord in coords.iter_mut() {
                        let tok = tokens.next().ok_or_else(|| Error::Parse {
                            line,
                            message: "vertex record needs 3 coordinates".into(),
                        })?;
                        *coord = tok.parse().map_err(|_| Error::Parse {
                            line,
                            message: format!("bad coordinate {tok:?}"),
                        })?;
                    }
                    vertices.push(Point3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let mut corners: Vec<u32> = Vec::new();
                    for tok in tokens {
                        let head = tok.split('/').next().unwrap_or("");
                        let idx: i64 = head.parse().map_err(|_| Error::Parse {
                            line,
                            message: format!("bad face index {tok:?}"),
                        })?;
                        if idx < 1 {
                            return Err(Error::Parse {
                                line,
                                message: format!("face index {idx} out of range"),
                            });
                        }
                        corners.push((idx - 1) as u32);
                    }
                    if corners.len() < 3 {
                        return Err(Error::Parse {
                            line,
                            message: "face record needs at least 3 indices".into(),
                        });
                    }
                    for k in 1..corners.len() - 1 {
                        faces.push(([corners[0], corners[k], corners[k + 1]], line));
                    }
                }
                _ => {} // vt, vn, usemtl, o, g, s, mtllib: ignored
            }
        }

        for (f, line) in &faces {
            for &v in f {
                if v as usize >= vertices.len() {
                    return Err(Error::Parse {
                        line: *line,
                        message: format!(
                            "index out of range: {} of {} vertices",
                            v + 1,
                            vertices.len()
                        ),
                    });
                }
            }
        }
        Mesh::new(vertices, faces.into_iter().map(|(f, _)| f).collect())
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mesh::from_obj_str(&text)
    }

    pub fn to_obj_string(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            // Default float formatting round-trips exactly.
            writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
        }
        for f in &self.faces {
            writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
        }
        out
    }

    pub fn save_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_obj_string()).map_err(|e| Error::io(path, e))
    }
}

/// Scale-relative area threshold below which a face counts as degenerate.
fn degeneracy_threshold(corners: &[Point3<f64>; 3]) -> f64 {
    let [a, b, c] = corners;
    let longest2 = (b - a)
        .norm_squared()
        .max((c - a).norm_squared())
        .max((c - b).norm_squared());
    1e-12 * longest2
}

/// Clamp weights into `[0, 1]` and renormalize so they sum to 1.
pub(crate) fn normalize_bary(bary: [f64; 3]) -> [f64; 3] {
    let clamped = bary.map(|l| l.clamp(0.0, 1.0));
    let sum: f64 = clamped.iter().sum();
    if sum > 0.0 {
        clamped.map(|l| l / sum)
    } else {
        [1.0 / 3.0; 3]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tetrahedron() -> Mesh {
        Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.5, 1.0, 0.0),
                Point3::new(0.5, 0.5, 1.0),
            ],
            vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]],
        )
        .unwrap()
    }

    #[test]
    fn obj_tetrahedron_counts() {
        let text = "\
v 0 0 0
v 1 0 0
v 0.5 1 0
v 0.5 0.5 1
f 1 3 2
f 1 2 4
f 2 3 4
f 3 1 4
";
        let mesh = Mesh::from_obj_str(text).unwrap();
        assert_eq!(mesh.vertex_count(), 4);
        assert_eq!(mesh.face_count(), 4);
        assert_eq!(mesh.faces()[0], [0, 2, 1]);
    }

    #[test]
    fn obj_index_out_of_range_reports_line() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 5\n";
        let err = Mesh::from_obj_str(text).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 5);
                assert!(message.contains("index out of range"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn obj_quad_fan_triangulates() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let mesh = Mesh::from_obj_str(text).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_attribute_suffixes_are_stripped() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n";
        let mesh = Mesh::from_obj_str(text).unwrap();
        assert_eq!(mesh.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn obj_round_trip_is_identity() {
        let mesh = tetrahedron();
        let back = Mesh::from_obj_str(&mesh.to_obj_string()).unwrap();
        assert_eq!(mesh.vertices(), back.vertices());
        assert_eq!(mesh.faces(), back.faces());
    }

    #[test]
    fn validate_rejects_degenerate_faces() {
        let mesh = Mesh {
            vertices: vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(2.0, 0.0, 0.0), // collinear
                Point3::new(0.0, 1.0, 0.0),
            ],
            faces: vec![[0, 1, 3], [0, 1, 2]],
        };
        match mesh.validate().unwrap_err() {
            Error::DegenerateFaces(faces) => assert_eq!(faces, vec![1]),
            other => panic!("expected degenerate-face error, got {other:?}"),
        }
    }

    #[test]
    fn barycentric_corner_and_centroid() {
        let mesh = tetrahedron();
        let [a, b, c] = mesh.face_points(0);
        let at_corner = mesh.barycentric_coords(0, a).unwrap();
        assert!((at_corner[0] - 1.0).abs() < 1e-12);
        assert!(at_corner[1].abs() < 1e-12 && at_corner[2].abs() < 1e-12);

        let centroid = Point3::from((a.coords + b.coords + c.coords) / 3.0);
        let at_centroid = mesh.barycentric_coords(0, centroid).unwrap();
        for l in at_centroid {
            assert!((l - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn point_from_barycentric_corners() {
        let mesh = tetrahedron();
        let [a, b, _] = mesh.face_points(2);
        let p1 = mesh
            .point_from_barycentric(&SurfaceSample::new(2, [1.0, 0.0, 0.0]).unwrap())
            .unwrap();
        assert_eq!(p1, a);
        let p2 = mesh
            .point_from_barycentric(&SurfaceSample::new(2, [0.0, 1.0, 0.0]).unwrap())
            .unwrap();
        assert_eq!(p2, b);
    }

    #[test]
    fn flat_square_normals_point_up() {
        let mesh = Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        for n in mesh.vertex_normals() {
            assert!((n - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn isolated_vertex_gets_default_normal() {
        let mesh = Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(5.0, 5.0, 5.0), // referenced by nothing
            ],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(mesh.vertex_normals()[3], Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn icosphere_normals_are_radial() {
        let mesh = crate::synth::icosphere(2, 1.0);
        let normals = mesh.vertex_normals();
        for (v, n) in mesh.vertices().iter().zip(normals) {
            let radial = v.coords.normalize();
            let angle = n.dot(&radial).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle < 5.0, "normal deviates {angle} degrees");
        }
    }

    #[test]
    fn sample_validation() {
        assert!(SurfaceSample::new(0, [0.5, 0.5, 0.0]).is_ok());
        assert!(SurfaceSample::new(0, [0.6, 0.6, -0.2]).is_err());
        assert!(SurfaceSample::new(0, [0.3, 0.3, 0.3]).is_err());
    }

    proptest! {
        #[test]
        fn barycentric_round_trip(
            s in 0.0f64..1.0,
            t in 0.0f64..1.0,
            face in 0u32..4,
        ) {
            // Uniform point in the triangle via the square-fold trick.
            let (u, v) = if s + t > 1.0 { (1.0 - s, 1.0 - t) } else { (s, t) };
            let mesh = tetrahedron();
            let [a, b, c] = mesh.face_points(face);
            let p = Point3::from(
                a.coords * (1.0 - u - v) + b.coords * u + c.coords * v,
            );
            let bary = mesh.barycentric_coords(face, p).unwrap();
            prop_assert!((bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(bary.iter().all(|&l| l >= 0.0));
            let q = mesh
                .point_from_barycentric(&SurfaceSample { face, bary })
                .unwrap();
            let diameter = (b - a).norm().max((c - a).norm()).max((c - b).norm());
            prop_assert!((q - p).norm() < 1e-9 * diameter);
        }
    }
}
