//! Quadric-error-metric edge-collapse decimation and the resolution
//! hierarchy built from it.
//!
//! Decimation contracts existing edges only. Every collapse records which
//! vertex survived, so each original vertex can be mapped to its surviving
//! representative at every coarser resolution. No geometric correspondence
//! between resolutions is computed or stored; the hierarchy carries index
//! maps only.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Boundary-preservation weight for the quadric of an open edge.
const BOUNDARY_WEIGHT: f64 = 1e3;
/// Condition-number limit above which the 3x3 quadric solve is abandoned in
/// favor of the endpoint/midpoint fallback.
const CONDITION_LIMIT: f64 = 1e12;

/// Symmetric 4x4 plane-distance quadric, stored as its 10 unique entries.
///
/// Layout (row-major upper triangle):
/// ```text
/// | 0 1 2 3 |
/// | 1 4 5 6 |
/// | 2 5 7 8 |
/// | 3 6 8 9 |
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadric {
    data: [f64; 10],
}

impl Quadric {
    pub fn zero() -> Self {
        Quadric { data: [0.0; 10] }
    }

    /// Quadric of a plane `n . x + d = 0` with unit normal, scaled by
    /// `weight`.
    pub fn from_plane(n: Vector3<f64>, d: f64, weight: f64) -> Self {
        let (a, b, c) = (n.x, n.y, n.z);
        Quadric {
            data: [
                weight * a * a,
                weight * a * b,
                weight * a * c,
                weight * a * d,
                weight * b * b,
                weight * b * c,
                weight * b * d,
                weight * c * c,
                weight * c * d,
                weight * d * d,
            ],
        }
    }

    pub fn add_assign(&mut self, other: &Quadric) {
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    /// Squared-distance error `[p 1] Q [p 1]^T`.
    pub fn evaluate(&self, p: &Point3<f64>) -> f64 {
        let q = &self.data;
        let (x, y, z) = (p.x, p.y, p.z);
        q[0] * x * x
            + 2.0 * q[1] * x * y
            + 2.0 * q[2] * x * z
            + 2.0 * q[3] * x
            + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9]
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let q = &self.data;
        Matrix4::new(
            q[0], q[1], q[2], q[3], //
            q[1], q[4], q[5], q[6], //
            q[2], q[5], q[7], q[8], //
            q[3], q[6], q[8], q[9],
        )
    }

    /// Position minimizing the quadric, or the best of the two endpoints and
    /// their midpoint when the 3x3 system is near-singular.
    pub fn optimal_position(&self, a: Point3<f64>, b: Point3<f64>) -> Point3<f64> {
        let q = &self.data;
        let m = Matrix3::new(
            q[0], q[1], q[2], //
            q[1], q[4], q[5], //
            q[2], q[5], q[7],
        );
        let rhs = Vector3::new(-q[3], -q[6], -q[8]);
        let sv = m.svd(false, false).singular_values;
        let (smax, smin) = (sv[0], sv[2]);
        if smin > 0.0 && smax / smin <= CONDITION_LIMIT {
            if let Some(x) = m.lu().solve(&rhs) {
                return Point3::from(x);
            }
        }
        let mid = Point3::from((a.coords + b.coords) * 0.5);
        let mut best = a;
        let mut best_err = self.evaluate(&a);
        for cand in [b, mid] {
            let err = self.evaluate(&cand);
            if err < best_err {
                best = cand;
                best_err = err;
            }
        }
        best
    }
}

impl std::ops::Add for Quadric {
    type Output = Quadric;
    fn add(self, rhs: Quadric) -> Quadric {
        let mut out = self;
        out.add_assign(&rhs);
        out
    }
}

/// Collapse candidate. Ordering puts the cheapest unpenalized edge first and
/// breaks cost ties on the canonical `(u, v)` index pair, so runs are
/// deterministic.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    penalized: bool,
    cost: f64,
    u: u32,
    v: u32,
    pos: Point3<f64>,
    version_u: u32,
    version_v: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so BinaryHeap (a max-heap) pops the smallest
        // (penalized, cost, u, v) key.
        other
            .penalized
            .cmp(&self.penalized)
            .then(other.cost.total_cmp(&self.cost))
            .then(other.u.cmp(&self.u))
            .then(other.v.cmp(&self.v))
    }
}

/// Result of a decimation run.
#[derive(Debug, Clone)]
pub struct SimplifyOutcome {
    pub mesh: Mesh,
    /// For each input vertex, the index of its survivor in the output mesh.
    pub map: Vec<u32>,
    /// True when no valid collapse remained before the target was reached.
    pub stalled: bool,
}

struct Decimator {
    positions: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<Vec<u32>>,
    quadrics: Vec<Quadric>,
    alive: Vec<bool>,
    alive_count: usize,
    version: Vec<u32>,
    parent: Vec<u32>,
    heap: BinaryHeap<Candidate>,
}

impl Decimator {
    fn new(mesh: &Mesh) -> Self {
        let nv = mesh.vertex_count();
        let positions: Vec<_> = mesh.vertices().to_vec();
        let faces: Vec<_> = mesh.faces().to_vec();

        let mut vertex_faces = vec![Vec::new(); nv];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                vertex_faces[v as usize].push(fi as u32);
            }
        }

        let mut quadrics = vec![Quadric::zero(); nv];
        for f in &faces {
            let [a, b, c] = [
                positions[f[0] as usize],
                positions[f[1] as usize],
                positions[f[2] as usize],
            ];
            let n = (b - a).cross(&(c - a));
            let len = n.norm();
            if len <= 0.0 {
                continue;
            }
            let n = n / len;
            let d = -n.dot(&a.coords);
            let q = Quadric::from_plane(n, d, 1.0);
            for &v in f {
                quadrics[v as usize].add_assign(&q);
            }
        }

        // Boundary edges (exactly one incident face) get a preservation
        // quadric: the plane through the edge perpendicular to that face.
        let mut edge_faces: HashMap<(u32, u32), (u32, u32)> = HashMap::new();
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let e = canonical(f[k], f[(k + 1) % 3]);
                let entry = edge_faces.entry(e).or_insert((0, fi as u32));
                entry.0 += 1;
            }
        }
        // Sorted traversal keeps quadric accumulation deterministic.
        let mut boundary: Vec<((u32, u32), u32)> = edge_faces
            .iter()
            .filter(|(_, &(count, _))| count == 1)
            .map(|(&e, &(_, fi))| (e, fi))
            .collect();
        boundary.sort_unstable_by_key(|&(e, _)| e);
        for ((a, b), fi) in boundary {
            let pa = positions[a as usize];
            let pb = positions[b as usize];
            let edge = pb - pa;
            let f = faces[fi as usize];
            let fp = [
                positions[f[0] as usize],
                positions[f[1] as usize],
                positions[f[2] as usize],
            ];
            let fnormal = (fp[1] - fp[0]).cross(&(fp[2] - fp[0]));
            let m = edge.cross(&fnormal);
            let len = m.norm();
            if len <= 0.0 {
                continue;
            }
            let m = m / len;
            let d = -m.dot(&pa.coords);
            let q = Quadric::from_plane(m, d, BOUNDARY_WEIGHT);
            quadrics[a as usize].add_assign(&q);
            quadrics[b as usize].add_assign(&q);
        }

        let mut dec = Decimator {
            positions,
            face_alive: vec![true; faces.len()],
            vertex_faces,
            quadrics,
            alive: vec![true; nv],
            alive_count: nv,
            version: vec![0; nv],
            parent: (0..nv as u32).collect(),
            heap: BinaryHeap::new(),
            faces,
        };
        dec.seed_all_edges();
        dec
    }

    fn seed_all_edges(&mut self) {
        let mut seen: HashMap<(u32, u32), ()> = HashMap::new();
        for fi in 0..self.faces.len() {
            if !self.face_alive[fi] {
                continue;
            }
            let f = self.faces[fi];
            for k in 0..3 {
                let e = canonical(f[k], f[(k + 1) % 3]);
                if seen.insert(e, ()).is_none() {
                    self.push_candidate(e.0, e.1);
                }
            }
        }
    }

    fn push_candidate(&mut self, a: u32, b: u32) {
        let (u, v) = canonical(a, b);
        let q = self.quadrics[u as usize] + self.quadrics[v as usize];
        let pu = self.positions[u as usize];
        let pv = self.positions[v as usize];
        let pos = q.optimal_position(pu, pv);
        let cost = q.evaluate(&pos);
        self.heap.push(Candidate {
            penalized: false,
            cost,
            u,
            v,
            pos,
            version_u: self.version[u as usize],
            version_v: self.version[v as usize],
        });
    }

    fn alive_faces_of(&self, v: u32) -> impl Iterator<Item = u32> + '_ {
        self.vertex_faces[v as usize]
            .iter()
            .copied()
            .filter(move |&fi| {
                self.face_alive[fi as usize] && self.faces[fi as usize].contains(&v)
            })
    }

    fn neighbors(&self, v: u32) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::new();
        for fi in self.alive_faces_of(v) {
            for &w in &self.faces[fi as usize] {
                if w != v {
                    out.push(w);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Number of alive faces containing both endpoints.
    fn edge_face_count(&self, u: u32, v: u32) -> usize {
        self.alive_faces_of(u)
            .filter(|&fi| self.faces[fi as usize].contains(&v))
            .count()
    }

    /// Standard link condition: the shared neighborhood of the endpoints
    /// must consist of exactly the opposite vertices of the edge's faces.
    fn link_condition(&self, u: u32, v: u32) -> bool {
        let ef = self.edge_face_count(u, v);
        if ef == 0 || ef > 2 {
            return false;
        }
        let nu = self.neighbors(u);
        let nv = self.neighbors(v);
        let common = nu.iter().filter(|w| nv.binary_search(w).is_ok()).count();
        common == ef
    }

    /// Reject collapses that flip a surviving face normal by more than 90
    /// degrees or squash it to (near) zero area.
    fn collapse_flips_normal(&self, u: u32, v: u32, pos: Point3<f64>) -> bool {
        for moved in [u, v] {
            for fi in self.alive_faces_of(moved) {
                let f = self.faces[fi as usize];
                if f.contains(&u) && f.contains(&v) {
                    continue; // removed by the collapse
                }
                let old = [
                    self.positions[f[0] as usize],
                    self.positions[f[1] as usize],
                    self.positions[f[2] as usize],
                ];
                let mut new = old;
                for (k, &w) in f.iter().enumerate() {
                    if w == moved {
                        new[k] = pos;
                    }
                }
                let n0 = (old[1] - old[0]).cross(&(old[2] - old[0]));
                let n1 = (new[1] - new[0]).cross(&(new[2] - new[0]));
                let longest2 = (new[1] - new[0])
                    .norm_squared()
                    .max((new[2] - new[0]).norm_squared())
                    .max((new[2] - new[1]).norm_squared());
                if n1.norm() <= 1e-12 * longest2 || n0.dot(&n1) < 0.0 {
                    return true;
                }
            }
        }
        false
    }

    fn is_current(&self, c: &Candidate) -> bool {
        self.alive[c.u as usize]
            && self.alive[c.v as usize]
            && self.version[c.u as usize] == c.version_u
            && self.version[c.v as usize] == c.version_v
    }

    fn collapse(&mut self, u: u32, v: u32, pos: Point3<f64>) {
        let (survivor, removed) = (u, v);
        self.positions[survivor as usize] = pos;
        let rq = self.quadrics[removed as usize];
        self.quadrics[survivor as usize].add_assign(&rq);
        self.alive[removed as usize] = false;
        self.alive_count -= 1;
        self.parent[removed as usize] = survivor;
        self.version[survivor as usize] += 1;

        let removed_faces: Vec<u32> = self.alive_faces_of(removed).collect();
        for fi in removed_faces {
            let f = &mut self.faces[fi as usize];
            for w in f.iter_mut() {
                if *w == removed {
                    *w = survivor;
                }
            }
            let f = self.faces[fi as usize];
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                self.face_alive[fi as usize] = false;
            } else {
                self.vertex_faces[survivor as usize].push(fi);
            }
        }
        // Drop stale entries once the incidence list gets bloated.
        let list = &mut self.vertex_faces[survivor as usize];
        if list.len() > 32 {
            let faces = &self.faces;
            let face_alive = &self.face_alive;
            list.sort_unstable();
            list.dedup();
            list.retain(|&fi| face_alive[fi as usize] && faces[fi as usize].contains(&survivor));
        }

        for n in self.neighbors(survivor) {
            self.push_candidate(survivor, n);
        }
    }

    /// Drain the heap until the target vertex count is reached or no
    /// executable candidate remains. Returns the number of collapses done.
    fn drain(&mut self, target: usize) -> usize {
        let mut done = 0;
        while self.alive_count > target {
            let Some(c) = self.heap.pop() else { break };
            if !self.is_current(&c) {
                continue;
            }
            if !self.link_condition(c.u, c.v) {
                continue;
            }
            if self.collapse_flips_normal(c.u, c.v, c.pos) {
                if !c.penalized {
                    self.heap.push(Candidate { penalized: true, ..c });
                }
                continue;
            }
            self.collapse(c.u, c.v, c.pos);
            done += 1;
        }
        done
    }

    fn run(&mut self, target: usize) -> bool {
        loop {
            self.drain(target);
            if self.alive_count <= target {
                return false;
            }
            // The heap ran dry; collapses elsewhere may have made previously
            // rejected edges valid again, so reseed once and retry.
            let before = self.alive_count;
            self.heap.clear();
            self.seed_all_edges();
            self.drain(target);
            if self.alive_count <= target {
                return false;
            }
            if self.alive_count == before {
                return true; // no progress possible
            }
        }
    }

    fn root(&self, v: u32) -> u32 {
        let mut cur = v;
        while self.parent[cur as usize] != cur {
            cur = self.parent[cur as usize];
        }
        cur
    }

    fn finish(self, stalled: bool) -> Result<SimplifyOutcome> {
        let mut new_index = vec![u32::MAX; self.positions.len()];
        let mut vertices = Vec::with_capacity(self.alive_count);
        for (i, &alive) in self.alive.iter().enumerate() {
            if alive {
                new_index[i] = vertices.len() as u32;
                vertices.push(self.positions[i]);
            }
        }
        let faces: Vec<[u32; 3]> = self
            .faces
            .iter()
            .zip(self.face_alive.iter())
            .filter(|(_, &alive)| alive)
            .map(|(f, _)| f.map(|v| new_index[v as usize]))
            .collect();
        let map: Vec<u32> = (0..self.positions.len() as u32)
            .map(|v| new_index[self.root(v) as usize])
            .collect();
        let mesh = Mesh::new(vertices, faces)?;
        Ok(SimplifyOutcome { mesh, map, stalled })
    }
}

/// Decimate `mesh` down to `target_vertices` vertices by iterated
/// minimum-cost edge collapses.
pub fn simplify_to_count(mesh: &Mesh, target_vertices: usize) -> Result<SimplifyOutcome> {
    if target_vertices < 3 {
        return Err(Error::InvalidArgument(format!(
            "target vertex count {target_vertices} is below 3"
        )));
    }
    if target_vertices > mesh.vertex_count() {
        return Err(Error::InvalidArgument(format!(
            "target vertex count {} exceeds mesh size {}",
            target_vertices,
            mesh.vertex_count()
        )));
    }
    if target_vertices == mesh.vertex_count() {
        return Ok(SimplifyOutcome {
            mesh: mesh.clone(),
            map: (0..mesh.vertex_count() as u32).collect(),
            stalled: false,
        });
    }
    let mut dec = Decimator::new(mesh);
    let stalled = dec.run(target_vertices);
    dec.finish(stalled)
}

/// The resolution sequence of a mesh: per level a decimated mesh plus the
/// map sending every original vertex to its surviving vertex at that level.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    resolutions: Vec<f64>,
    meshes: Vec<Mesh>,
    maps: Vec<Vec<u32>>,
}

impl Hierarchy {
    pub fn level_count(&self) -> usize {
        self.meshes.len()
    }

    pub fn resolutions(&self) -> &[f64] {
        &self.resolutions
    }

    pub fn mesh(&self, level: usize) -> &Mesh {
        &self.meshes[level]
    }

    /// Original-vertex to level-vertex index map.
    pub fn map(&self, level: usize) -> &[u32] {
        &self.maps[level]
    }

    pub fn original_vertex_count(&self) -> usize {
        self.meshes[0].vertex_count()
    }

    pub fn vertex_counts(&self) -> Vec<usize> {
        self.meshes.iter().map(|m| m.vertex_count()).collect()
    }

    fn check(&self) -> Result<()> {
        let nv = self.original_vertex_count();
        if self.resolutions.len() != self.meshes.len() || self.maps.len() != self.meshes.len() {
            return Err(Error::InvalidArgument("hierarchy level lists disagree".into()));
        }
        if (self.resolutions[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("first resolution must be 1".into()));
        }
        for (level, map) in self.maps.iter().enumerate() {
            if map.len() != nv {
                return Err(Error::DimensionMismatch(format!(
                    "map at level {level} has length {} but |V| = {nv}",
                    map.len()
                )));
            }
            let limit = self.meshes[level].vertex_count();
            if map.iter().any(|&m| m as usize >= limit) {
                return Err(Error::InvalidArgument(format!(
                    "map at level {level} leaves the vertex range"
                )));
            }
        }
        if self.maps[0].iter().enumerate().any(|(i, &m)| m as usize != i) {
            return Err(Error::InvalidArgument("level-0 map must be the identity".into()));
        }
        Ok(())
    }

    /// Serialize to the binary sidecar layout: magic `MFH1`, little-endian
    /// level count, then per level vertex count, face count, `f32x3`
    /// vertices, `u32x3` faces, and the `u32` map of length |V|.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"MFH1");
        out.extend_from_slice(&(self.level_count() as u32).to_le_bytes());
        for (mesh, map) in self.meshes.iter().zip(self.maps.iter()) {
            out.extend_from_slice(&(mesh.vertex_count() as u32).to_le_bytes());
            out.extend_from_slice(&(mesh.face_count() as u32).to_le_bytes());
            for v in mesh.vertices() {
                for k in 0..3 {
                    out.extend_from_slice(&(v[k] as f32).to_le_bytes());
                }
            }
            for f in mesh.faces() {
                for &idx in f {
                    out.extend_from_slice(&idx.to_le_bytes());
                }
            }
            for &m in map {
                out.extend_from_slice(&m.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != b"MFH1" {
            return Err(Error::Format("bad magic, expected MFH1".into()));
        }
        let level_count = cur.u32()? as usize;
        if level_count == 0 {
            return Err(Error::Format("hierarchy needs at least one level".into()));
        }
        let mut meshes = Vec::with_capacity(level_count);
        let mut maps = Vec::with_capacity(level_count);
        let mut original = 0usize;
        for level in 0..level_count {
            let vc = cur.u32()? as usize;
            let fc = cur.u32()? as usize;
            if level == 0 {
                original = vc;
            }
            let mut vertices = Vec::with_capacity(vc);
            for _ in 0..vc {
                let x = cur.f32()? as f64;
                let y = cur.f32()? as f64;
                let z = cur.f32()? as f64;
                vertices.push(Point3::new(x, y, z));
            }
            let mut faces = Vec::with_capacity(fc);
            for _ in 0..fc {
                faces.push([cur.u32()?, cur.u32()?, cur.u32()?]);
            }
            let mut map = Vec::with_capacity(original);
            for _ in 0..original {
                map.push(cur.u32()?);
            }
            meshes.push(Mesh::new(vertices, faces)?);
            maps.push(map);
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after hierarchy payload",
                bytes.len() - cur.pos
            )));
        }
        let resolutions = meshes
            .iter()
            .map(|m| m.vertex_count() as f64 / original as f64)
            .collect();
        let hierarchy = Hierarchy {
            resolutions,
            meshes,
            maps,
        };
        hierarchy.check()?;
        Ok(hierarchy)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Hierarchy::from_bytes(&bytes)
    }

    /// SHA-256 of the serialized form; checkpoints store this to detect a
    /// mismatched hierarchy at load time.
    pub fn sha256(&self) -> [u8; 32] {
        let digest = Sha256::digest(self.to_bytes());
        digest.into()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Build the cascaded hierarchy for a descending resolution sequence
/// starting at 1. Level `i` continues decimation from level `i - 1`, and
/// each stored map composes the per-level collapse maps so it indexes
/// directly from the original mesh.
pub fn build_hierarchy(mesh: &Mesh, resolutions: &[f64]) -> Result<Hierarchy> {
    if resolutions.is_empty() {
        return Err(Error::InvalidArgument("resolution list is empty".into()));
    }
    if (resolutions[0] - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "first resolution must be 1, got {}",
            resolutions[0]
        )));
    }
    for w in resolutions.windows(2) {
        if w[1] > w[0] {
            return Err(Error::InvalidArgument(format!(
                "resolutions must be sorted descending, got {} after {}",
                w[1], w[0]
            )));
        }
    }
    if resolutions.iter().any(|&r| r <= 0.0 || r > 1.0) {
        return Err(Error::InvalidArgument(
            "resolutions must lie in (0, 1]".into(),
        ));
    }

    let nv = mesh.vertex_count();
    let mut meshes = vec![mesh.clone()];
    let mut maps: Vec<Vec<u32>> = vec![(0..nv as u32).collect()];

    for (level, &r) in resolutions.iter().enumerate().skip(1) {
        let target = ((r * nv as f64).round() as usize).max(3);
        let prev = meshes.last().unwrap();
        let target = target.min(prev.vertex_count());
        let outcome = simplify_to_count(prev, target)?;
        if outcome.mesh.vertex_count() > target + 1 {
            return Err(Error::InvalidArgument(format!(
                "decimation stalled at level {level}: reached {} vertices, target {target}",
                outcome.mesh.vertex_count()
            )));
        }
        let prev_map = maps.last().unwrap();
        let composed: Vec<u32> = prev_map
            .iter()
            .map(|&m| outcome.map[m as usize])
            .collect();
        maps.push(composed);
        meshes.push(outcome.mesh);
    }

    let hierarchy = Hierarchy {
        resolutions: resolutions.to_vec(),
        meshes,
        maps,
    };
    hierarchy.check()?;
    Ok(hierarchy)
}

fn canonical(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}
