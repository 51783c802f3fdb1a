//! Axis-aligned BVH over mesh triangles with Moeller-Trumbore
//! intersection. Backface hits are allowed; meshes may have inconsistent
//! winding.

use nalgebra::{Point3, Vector3};

use crate::mesh::{normalize_bary, Mesh, SurfaceSample};
use crate::render::camera::Ray;

/// Minimum ray parameter accepted as a hit.
pub const T_MIN: f64 = 1e-6;
/// Shadow-ray origin offset along the normal, as a fraction of the mesh
/// bounding-box diagonal.
pub const SHADOW_EPS_FRACTION: f64 = 1e-4;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Point3<f64>,
    max: Point3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn grow_point(&mut self, p: &Point3<f64>) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    fn grow(&mut self, other: &Aabb) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(other.min[k]);
            self.max[k] = self.max[k].max(other.max[k]);
        }
    }

    fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.min[k] && self.max[k] >= other.max[k])
    }

    /// Slab test against the ray, limited to `[T_MIN, t_max]`. The min/max
    /// formulation drops NaNs from 0 * inf, so axis-parallel rays are safe.
    fn hit(&self, origin: &Point3<f64>, inv_dir: &Vector3<f64>, t_max: f64) -> bool {
        let mut t0 = T_MIN;
        let mut t1 = t_max;
        for k in 0..3 {
            let a = (self.min[k] - origin[k]) * inv_dir[k];
            let b = (self.max[k] - origin[k]) * inv_dir[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        t0 <= t1
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        aabb: Aabb,
        start: usize,
        len: usize,
    },
    Inner {
        aabb: Aabb,
        left: usize,
        right: usize,
    },
}

/// Bounding volume hierarchy over the triangles of one mesh.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangle indices in leaf order.
    order: Vec<u32>,
    root: usize,
}

/// Nearest intersection: the surface sample plus the ray parameter.
#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub sample: SurfaceSample,
    pub t: f64,
}

impl Bvh {
    pub fn build(mesh: &Mesh) -> Self {
        struct TriRef {
            index: u32,
            aabb: Aabb,
            centroid: Point3<f64>,
        }
        let mut refs: Vec<TriRef> = (0..mesh.face_count() as u32)
            .map(|fi| {
                let [a, b, c] = mesh.face_points(fi);
                let mut aabb = Aabb::empty();
                aabb.grow_point(&a);
                aabb.grow_point(&b);
                aabb.grow_point(&c);
                TriRef {
                    index: fi,
                    aabb,
                    centroid: Point3::from((a.coords + b.coords + c.coords) / 3.0),
                }
            })
            .collect();

        let mut nodes = Vec::new();
        // Median split on the longest centroid axis; ties in the sort fall
        // back to the triangle index so builds are deterministic.
        fn build_range(refs: &mut [TriRef], offset: usize, nodes: &mut Vec<Node>) -> usize {
            let mut aabb = Aabb::empty();
            let mut cbox = Aabb::empty();
            for r in refs.iter() {
                aabb.grow(&r.aabb);
                cbox.grow_point(&r.centroid);
            }
            if refs.len() <= LEAF_SIZE {
                nodes.push(Node::Leaf {
                    aabb,
                    start: offset,
                    len: refs.len(),
                });
                return nodes.len() - 1;
            }
            let extent = cbox.max - cbox.min;
            let axis = if extent.x >= extent.y && extent.x >= extent.z {
                0
            } else if extent.y >= extent.z {
                1
            } else {
                2
            };
            refs.sort_unstable_by(|a, b| {
                a.centroid[axis]
                    .total_cmp(&b.centroid[axis])
                    .then(a.index.cmp(&b.index))
            });
            let mid = refs.len() / 2;
            let (lo, hi) = refs.split_at_mut(mid);
            let left = build_range(lo, offset, nodes);
            let right = build_range(hi, offset + mid, nodes);
            nodes.push(Node::Inner { aabb, left, right });
            nodes.len() - 1
        }

        let root = build_range(&mut refs, 0, &mut nodes);
        Bvh {
            nodes,
            order: refs.iter().map(|r| r.index).collect(),
            root,
        }
    }

    /// Nearest hit with `t > T_MIN`. Exact ties on `t` are broken toward the
    /// lower face index.
    pub fn intersect(&self, mesh: &Mesh, ray: &Ray) -> Option<Hit> {
        let inv_dir = Vector3::new(
            1.0 / ray.direction.x,
            1.0 / ray.direction.y,
            1.0 / ray.direction.z,
        );
        let mut best: Option<(f64, u32, [f64; 3])> = None;
        let mut stack = vec![self.root];
        while let Some(node) = stack.pop() {
            let t_max = best.map(|(t, _, _)| t).unwrap_or(f64::INFINITY);
            match &self.nodes[node] {
                Node::Inner { aabb, left, right } => {
                    if aabb.hit(&ray.origin, &inv_dir, t_max) {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
                Node::Leaf { aabb, start, len } => {
                    if !aabb.hit(&ray.origin, &inv_dir, t_max) {
                        continue;
                    }
                    for &fi in &self.order[*start..*start + *len] {
                        if let Some((t, bary)) = intersect_triangle(mesh, fi, ray) {
                            let better = match best {
                                None => true,
                                Some((bt, bf, _)) => t < bt || (t == bt && fi < bf),
                            };
                            if better {
                                best = Some((t, fi, bary));
                            }
                        }
                    }
                }
            }
        }
        best.map(|(t, face, bary)| Hit {
            sample: SurfaceSample { face, bary },
            t,
        })
    }

    /// Any-hit query for shadow rays.
    pub fn occluded(&self, mesh: &Mesh, ray: &Ray) -> bool {
        let inv_dir = Vector3::new(
            1.0 / ray.direction.x,
            1.0 / ray.direction.y,
            1.0 / ray.direction.z,
        );
        let mut stack = vec![self.root];
        while let Some(node) = stack.pop() {
            match &self.nodes[node] {
                Node::Inner { aabb, left, right } => {
                    if aabb.hit(&ray.origin, &inv_dir, f64::INFINITY) {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
                Node::Leaf { aabb, start, len } => {
                    if !aabb.hit(&ray.origin, &inv_dir, f64::INFINITY) {
                        continue;
                    }
                    for &fi in &self.order[*start..*start + *len] {
                        if intersect_triangle(mesh, fi, ray).is_some() {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }

    /// Sanity check used by tests: every triangle sits in exactly one leaf
    /// and parent boxes contain their children.
    pub fn validate(&self, mesh: &Mesh) -> bool {
        let mut seen = vec![0usize; mesh.face_count()];
        for &fi in &self.order {
            seen[fi as usize] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            return false;
        }
        self.nodes.iter().all(|n| match n {
            Node::Inner { aabb, left, right } => {
                let child = |i: usize| match &self.nodes[i] {
                    Node::Inner { aabb, .. } | Node::Leaf { aabb, .. } => *aabb,
                };
                aabb.contains(&child(*left)) && aabb.contains(&child(*right))
            }
            Node::Leaf { .. } => true,
        })
    }
}

/// Moeller-Trumbore ray/triangle test. Returns `(t, barycentric)` for hits
/// with `t > T_MIN`; backfaces included. Barycentrics are clamped and
/// renormalized.
pub fn intersect_triangle(mesh: &Mesh, face: u32, ray: &Ray) -> Option<(f64, [f64; 3])> {
    let [a, b, c] = mesh.face_points(face);
    let e1 = b - a;
    let e2 = c - a;
    let p = ray.direction.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None; // ray parallel to the triangle plane
    }
    let inv_det = 1.0 / det;
    let s = ray.origin - a;
    let u = s.dot(&p) * inv_det;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = ray.direction.dot(&q) * inv_det;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    let t = e2.dot(&q) * inv_det;
    if t <= T_MIN {
        return None;
    }
    Some((t, normalize_bary([1.0 - u - v, u, v])))
}

/// Cast a shadow ray from `point`, offset along `normal`, toward the light
/// direction `light` (pointing from the surface to the light). Any hit
/// means the point is occluded. `scale` is the mesh bounding-box diagonal.
pub fn shadow_test(
    bvh: &Bvh,
    mesh: &Mesh,
    point: Point3<f64>,
    normal: Vector3<f64>,
    light: Vector3<f64>,
    scale: f64,
) -> bool {
    let origin = point + normal * (SHADOW_EPS_FRACTION * scale);
    bvh.occluded(
        mesh,
        &Ray {
            origin,
            direction: light,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;
    use rand::{Rng, SeedableRng};

    use crate::mesh::Mesh;
    use crate::synth::icosphere;

    fn single_triangle() -> Mesh {
        Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    /// Straight all-triangles reference used as the intersection oracle.
    fn brute_force(mesh: &Mesh, ray: &Ray) -> Option<Hit> {
        let mut best: Option<(f64, u32, [f64; 3])> = None;
        for fi in 0..mesh.face_count() as u32 {
            if let Some((t, bary)) = intersect_triangle(mesh, fi, ray) {
                let better = match best {
                    None => true,
                    Some((bt, bf, _)) => t < bt || (t == bt && fi < bf),
                };
                if better {
                    best = Some((t, fi, bary));
                }
            }
        }
        best.map(|(t, face, bary)| Hit {
            sample: SurfaceSample { face, bary },
            t,
        })
    }

    #[test]
    fn orthogonal_ray_hits_centroid() {
        let mesh = single_triangle();
        let bvh = Bvh::build(&mesh);
        let ray = Ray {
            origin: Point3::new(1.0 / 3.0, 1.0 / 3.0, 2.0),
            direction: nalgebra::Vector3::new(0.0, 0.0, -1.0),
        };
        let hit = bvh.intersect(&mesh, &ray).unwrap();
        assert!((hit.t - 2.0).abs() < 1e-12);
        for l in hit.sample.bary {
            assert!((l - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ray_pointing_away_misses() {
        let mesh = single_triangle();
        let bvh = Bvh::build(&mesh);
        let ray = Ray {
            origin: Point3::new(0.2, 0.2, 1.0),
            direction: nalgebra::Vector3::new(0.0, 0.0, 1.0),
        };
        assert!(bvh.intersect(&mesh, &ray).is_none());
    }

    #[test]
    fn bvh_structure_is_valid() {
        let mesh = icosphere(3, 1.0);
        let bvh = Bvh::build(&mesh);
        assert!(bvh.validate(&mesh));
    }

    #[test]
    fn bvh_matches_brute_force_on_random_rays() {
        let mesh = icosphere(3, 1.0); // 1280 faces
        let bvh = Bvh::build(&mesh);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let mut hits = 0;
        for _ in 0..2000 {
            let origin = Point3::new(
                rng.gen::<f64>() * 6.0 - 3.0,
                rng.gen::<f64>() * 6.0 - 3.0,
                rng.gen::<f64>() * 6.0 - 3.0,
            );
            let direction = nalgebra::Vector3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            )
            .normalize();
            let ray = Ray { origin, direction };
            let fast = bvh.intersect(&mesh, &ray);
            let slow = brute_force(&mesh, &ray);
            match (fast, slow) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    hits += 1;
                    assert_eq!(a.sample.face, b.sample.face);
                    assert!((a.t - b.t).abs() < 1e-6);
                }
                other => panic!("bvh/brute-force disagree: {other:?}"),
            }
        }
        assert!(hits > 100, "test exercised only {hits} hits");
    }

    #[test]
    fn convex_mesh_outward_light_never_occluded() {
        let mesh = icosphere(2, 1.0);
        let bvh = Bvh::build(&mesh);
        let scale = mesh.bounding_diagonal();
        for fi in (0..mesh.face_count() as u32).step_by(7) {
            let [a, b, c] = mesh.face_points(fi);
            let p = Point3::from((a.coords + b.coords + c.coords) / 3.0);
            let n = mesh.face_normal(fi).unwrap();
            // Light along the outward normal.
            assert!(!shadow_test(&bvh, &mesh, p, n, n, scale));
        }
    }

    #[test]
    fn overhanging_slab_casts_shadow() {
        // Ground triangle at z = 0 plus a slab hovering at z = 1.
        let mesh = Mesh::new(
            vec![
                Point3::new(-2.0, -2.0, 0.0),
                Point3::new(2.0, -2.0, 0.0),
                Point3::new(0.0, 2.0, 0.0),
                Point3::new(-1.0, -1.0, 1.0),
                Point3::new(1.0, -1.0, 1.0),
                Point3::new(0.0, 1.0, 1.0),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let bvh = Bvh::build(&mesh);
        let scale = mesh.bounding_diagonal();
        let up = nalgebra::Vector3::new(0.0, 0.0, 1.0);
        // Under the slab: occluded from a light straight above.
        assert!(shadow_test(
            &bvh,
            &mesh,
            Point3::new(0.0, 0.0, 0.0),
            up,
            up,
            scale
        ));
        // Outside the slab's footprint: lit.
        assert!(!shadow_test(
            &bvh,
            &mesh,
            Point3::new(1.8, -1.9, 0.0),
            up,
            up,
            scale
        ));
    }

    #[test]
    fn offset_prevents_self_shadowing_on_flat_plane() {
        let mesh = Mesh::new(
            vec![
                Point3::new(-1.0, -1.0, 0.0),
                Point3::new(1.0, -1.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
                Point3::new(-1.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let bvh = Bvh::build(&mesh);
        let scale = mesh.bounding_diagonal();
        let up = nalgebra::Vector3::new(0.0, 0.0, 1.0);
        for &(x, y) in &[(0.0, 0.0), (0.5, 0.5), (-0.7, 0.2), (0.9, -0.9)] {
            assert!(!shadow_test(
                &bvh,
                &mesh,
                Point3::new(x, y, 0.0),
                up,
                up,
                scale
            ));
        }
    }
}
