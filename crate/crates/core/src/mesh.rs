//! Indexed triangle meshes with edge connectivity, plus the local mesh
//! operations the rest of the crate builds on: umbrella Laplacian smoothing,
//! midpoint subdivision and area-uniform surface sampling.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::{triangle_area, triangle_normal, Aabb, Vec3};

/// Marker for a missing face in [`TriangleMesh::edge_faces`].
pub const NO_FACE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("face {face} references vertex {index}, but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: u32,
        vertex_count: usize,
    },
    #[error("face {face} is degenerate (repeated index or zero area)")]
    DegenerateFace { face: usize },
    #[error("edge ({a}, {b}) has more than two incident faces")]
    NonManifoldEdge { a: u32, b: u32 },
    #[error("edge ({a}, {b}) is traversed in the same direction by both incident faces")]
    NonManifoldOrientation { a: u32, b: u32 },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteVertex(usize),
    #[error("mesh is not closed")]
    NotClosed,
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("{tags} tags given for {vertices} vertices")]
    TagCountMismatch { tags: usize, vertices: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug)]
struct Connectivity {
    faces: Vec<[u32; 3]>,
    /// Unique undirected edges as sorted pairs, in lexicographic order.
    edges: Vec<[u32; 2]>,
    /// Incident faces per edge; the face traversing the edge low→high comes first.
    edge_faces: Vec<[u32; 2]>,
    neighbor_offsets: Vec<usize>,
    neighbors: Vec<u32>,
    closed: bool,
}

/// Unique undirected edges with their lengths at the time of extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    pub edges: Vec<[u32; 2]>,
    pub rest_lengths: Vec<f64>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Validated indexed triangle mesh.
///
/// Connectivity is shared between a mesh and every mesh derived from it by
/// moving vertices ([`TriangleMesh::with_vertices`]), so deformations keep the
/// face list bit-identical.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    tags: Option<Vec<u32>>,
    conn: Arc<Connectivity>,
}

impl PartialEq for TriangleMesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.tags == other.tags
            && self.conn.faces == other.conn.faces
    }
}

impl TriangleMesh {
    /// Builds connectivity and validates indices, degeneracy, manifoldness and
    /// orientation consistency.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        let n = vertices.len();
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(MeshError::NonFiniteVertex(i));
        }
        for (f, tri) in faces.iter().enumerate() {
            for &idx in tri {
                if idx as usize >= n {
                    return Err(MeshError::IndexOutOfRange {
                        face: f,
                        index: idx,
                        vertex_count: n,
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::DegenerateFace { face: f });
            }
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            if (b - a).cross(&(c - a)) == Vec3::zeros() {
                return Err(MeshError::DegenerateFace { face: f });
            }
        }
        let conn = build_connectivity(n, faces)?;
        Ok(Self {
            vertices,
            tags: None,
            conn: Arc::new(conn),
        })
    }

    /// Attaches per-vertex provenance tags.
    pub fn with_tags(mut self, tags: Vec<u32>) -> Result<Self, MeshError> {
        if tags.len() != self.vertices.len() {
            return Err(MeshError::TagCountMismatch {
                tags: tags.len(),
                vertices: self.vertices.len(),
            });
        }
        self.tags = Some(tags);
        Ok(self)
    }

    /// Tags every vertex with its own index.
    pub fn with_sequential_tags(mut self) -> Self {
        self.tags = Some((0..self.vertices.len() as u32).collect());
        self
    }

    pub fn without_tags(mut self) -> Self {
        self.tags = None;
        self
    }

    /// Same connectivity and tags, new vertex positions.
    ///
    /// Panics if the vertex count changes.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Self {
        assert_eq!(vertices.len(), self.vertices.len(), "vertex count must not change");
        Self {
            vertices,
            tags: self.tags.clone(),
            conn: Arc::clone(&self.conn),
        }
    }

    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        self.with_vertices(self.vertices.iter().map(f).collect())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.conn.faces
    }

    pub fn tags(&self) -> Option<&[u32]> {
        self.tags.as_deref()
    }

    pub fn edges(&self) -> &[[u32; 2]] {
        &self.conn.edges
    }

    pub fn edge_faces(&self) -> &[[u32; 2]] {
        &self.conn.edge_faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.conn.faces.len()
    }

    pub fn edge_count(&self) -> usize {
        self.conn.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conn.faces.is_empty()
    }

    /// Every edge has exactly two incident faces.
    pub fn is_closed(&self) -> bool {
        self.conn.closed
    }

    /// 1-ring neighbors of `v`, ascending.
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.conn.neighbors[self.conn.neighbor_offsets[v]..self.conn.neighbor_offsets[v + 1]]
    }

    /// True when both meshes share the same face list (pointer or value equality).
    pub fn same_connectivity(&self, other: &TriangleMesh) -> bool {
        Arc::ptr_eq(&self.conn, &other.conn) || self.conn.faces == other.conn.faces
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        self.conn.faces[f].map(|i| self.vertices[i as usize])
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.triangle(f);
        triangle_normal(&a, &b, &c)
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        triangle_area(&a, &b, &c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.face_count()).map(|f| self.face_area(f)).sum()
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    /// Bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        self.bbox().diagonal()
    }

    /// Current edge lengths as an [`EdgeSet`].
    pub fn edge_set(&self) -> EdgeSet {
        let rest_lengths = self
            .conn
            .edges
            .iter()
            .map(|&[a, b]| (self.vertices[a as usize] - self.vertices[b as usize]).norm())
            .collect();
        EdgeSet {
            edges: self.conn.edges.clone(),
            rest_lengths,
        }
    }

    /// V − E + F. Requires a closed mesh.
    pub fn euler_characteristic(&self) -> Result<i64, MeshError> {
        if !self.is_closed() {
            return Err(MeshError::NotClosed);
        }
        Ok(self.vertex_count() as i64 - self.edge_count() as i64 + self.face_count() as i64)
    }

    /// Per-vertex component labels (edge connectivity) and the component count.
    /// Labels are assigned in order of the lowest vertex index.
    pub fn connected_components(&self) -> (Vec<u32>, usize) {
        let n = self.vertex_count();
        let mut label = vec![u32::MAX; n];
        let mut count = 0u32;
        let mut stack = Vec::new();
        for start in 0..n {
            if label[start] != u32::MAX {
                continue;
            }
            label[start] = count;
            stack.push(start);
            while let Some(v) = stack.pop() {
                for &w in self.neighbors(v) {
                    if label[w as usize] == u32::MAX {
                        label[w as usize] = count;
                        stack.push(w as usize);
                    }
                }
            }
            count += 1;
        }
        (label, count as usize)
    }

    /// The connected component with the most faces (ties: lowest label),
    /// with vertices renumbered in their original order.
    pub fn largest_component(&self) -> TriangleMesh {
        let (label, count) = self.connected_components();
        if count <= 1 {
            return self.clone();
        }
        let mut face_counts = vec![0usize; count];
        for tri in self.faces() {
            face_counts[label[tri[0] as usize] as usize] += 1;
        }
        let best = (0..count)
            .max_by(|&a, &b| face_counts[a].cmp(&face_counts[b]).then(b.cmp(&a)))
            .unwrap_or(0) as u32;
        self.submesh(|v| label[v] == best)
    }

    /// Keeps the faces whose vertices all satisfy `keep`, dropping unused vertices.
    pub fn submesh(&self, keep: impl Fn(usize) -> bool) -> TriangleMesh {
        let mut remap = vec![u32::MAX; self.vertex_count()];
        let mut vertices = Vec::new();
        let mut tags = Vec::new();
        for v in 0..self.vertex_count() {
            if keep(v) {
                remap[v] = vertices.len() as u32;
                vertices.push(self.vertices[v]);
                if let Some(t) = &self.tags {
                    tags.push(t[v]);
                }
            }
        }
        let faces: Vec<[u32; 3]> = self
            .faces()
            .iter()
            .filter(|tri| tri.iter().all(|&i| remap[i as usize] != u32::MAX))
            .map(|tri| tri.map(|i| remap[i as usize]))
            .collect();
        // A face subset of a valid mesh is valid.
        let conn = build_connectivity(vertices.len(), faces).expect("subset of a valid mesh");
        TriangleMesh {
            vertices,
            tags: self.tags.as_ref().map(|_| tags),
            conn: Arc::new(conn),
        }
    }

    /// Largest angle (radians) between the normals of two faces sharing an
    /// edge, i.e. the maximum deviation of a dihedral angle from π.
    pub fn max_dihedral_deviation(&self) -> f64 {
        let normals: Vec<Vec3> = (0..self.face_count()).map(|f| self.face_normal(f)).collect();
        self.edge_faces()
            .iter()
            .filter(|ef| ef[1] != NO_FACE)
            .map(|ef| {
                let c = normals[ef[0] as usize].dot(&normals[ef[1] as usize]);
                c.clamp(-1.0, 1.0).acos()
            })
            .fold(0.0, f64::max)
    }
}

fn build_connectivity(n: usize, faces: Vec<[u32; 3]>) -> Result<Connectivity, MeshError> {
    // (low, high, face, traversed low→high)
    let mut half: Vec<(u32, u32, u32, bool)> = Vec::with_capacity(faces.len() * 3);
    for (f, tri) in faces.iter().enumerate() {
        for k in 0..3 {
            let a = tri[k];
            let b = tri[(k + 1) % 3];
            if a < b {
                half.push((a, b, f as u32, true));
            } else {
                half.push((b, a, f as u32, false));
            }
        }
    }
    half.sort_unstable();

    let mut edges = Vec::with_capacity(half.len() / 2 + 1);
    let mut edge_faces = Vec::with_capacity(half.len() / 2 + 1);
    let mut closed = !faces.is_empty();
    let mut i = 0;
    while i < half.len() {
        let (a, b, _, _) = half[i];
        let mut j = i + 1;
        while j < half.len() && half[j].0 == a && half[j].1 == b {
            j += 1;
        }
        match j - i {
            1 => {
                closed = false;
                edge_faces.push([half[i].2, NO_FACE]);
            }
            2 => {
                let (f0, fwd0) = (half[i].2, half[i].3);
                let (f1, fwd1) = (half[i + 1].2, half[i + 1].3);
                if fwd0 == fwd1 {
                    return Err(MeshError::NonManifoldOrientation { a, b });
                }
                edge_faces.push(if fwd0 { [f0, f1] } else { [f1, f0] });
            }
            _ => return Err(MeshError::NonManifoldEdge { a, b }),
        }
        edges.push([a, b]);
        i = j;
    }

    let mut degree = vec![0usize; n + 1];
    for &[a, b] in &edges {
        degree[a as usize] += 1;
        degree[b as usize] += 1;
    }
    let mut neighbor_offsets = vec![0usize; n + 1];
    for v in 0..n {
        neighbor_offsets[v + 1] = neighbor_offsets[v] + degree[v];
    }
    let mut fill = neighbor_offsets.clone();
    let mut neighbors = vec![0u32; neighbor_offsets[n]];
    for &[a, b] in &edges {
        neighbors[fill[a as usize]] = b;
        fill[a as usize] += 1;
        neighbors[fill[b as usize]] = a;
        fill[b as usize] += 1;
    }
    for v in 0..n {
        neighbors[neighbor_offsets[v]..neighbor_offsets[v + 1]].sort_unstable();
    }

    Ok(Connectivity {
        faces,
        edges,
        edge_faces,
        neighbor_offsets,
        neighbors,
        closed,
    })
}

/// Umbrella-weight Laplacian smoothing: every iteration moves each vertex by
/// `lambda · (mean(neighbors) − v)`, using positions from the previous iteration.
/// Isolated vertices do not move.
pub fn laplacian_smooth(
    mesh: &TriangleMesh,
    iterations: usize,
    lambda: f64,
) -> Result<TriangleMesh, MeshError> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(MeshError::InvalidParameter(format!(
            "smoothing lambda must lie in (0, 1], got {lambda}"
        )));
    }
    let mut current = mesh.vertices().to_vec();
    let mut next = current.clone();
    for _ in 0..iterations {
        for (v, out) in next.iter_mut().enumerate() {
            let ring = mesh.neighbors(v);
            if ring.is_empty() {
                *out = current[v];
                continue;
            }
            let mut sum = Vec3::zeros();
            for &w in ring {
                sum += current[w as usize];
            }
            let centroid = sum / ring.len() as f64;
            *out = current[v] + (centroid - current[v]) * lambda;
        }
        std::mem::swap(&mut current, &mut next);
    }
    Ok(mesh.with_vertices(current))
}

/// Linear 1→4 subdivision. Each level inserts one vertex at every edge
/// midpoint; new vertex `V + e` belongs to edge `e` (in [`TriangleMesh::edges`]
/// order) and, when tags are present, is tagged `max_tag + 1 + e`.
pub fn subdivide_midpoint(mesh: &TriangleMesh, levels: usize) -> Result<TriangleMesh, MeshError> {
    if !mesh.is_closed() {
        return Err(MeshError::NotClosed);
    }
    let mut current = mesh.clone();
    for _ in 0..levels {
        current = subdivide_once(&current)?;
    }
    Ok(current)
}

fn subdivide_once(mesh: &TriangleMesh) -> Result<TriangleMesh, MeshError> {
    let v0 = mesh.vertex_count() as u32;
    let edges = mesh.edges();
    let edge_index = |a: u32, b: u32| -> u32 {
        let key = if a < b { [a, b] } else { [b, a] };
        edges.binary_search(&key).expect("face edge present in edge list") as u32
    };

    let mut vertices = mesh.vertices().to_vec();
    vertices.extend(
        edges
            .iter()
            .map(|&[a, b]| (mesh.vertices()[a as usize] + mesh.vertices()[b as usize]) * 0.5),
    );

    let mut faces = Vec::with_capacity(mesh.face_count() * 4);
    for &[a, b, c] in mesh.faces() {
        let ab = v0 + edge_index(a, b);
        let bc = v0 + edge_index(b, c);
        let ca = v0 + edge_index(c, a);
        faces.push([a, ab, ca]);
        faces.push([ab, b, bc]);
        faces.push([ca, bc, c]);
        faces.push([ab, bc, ca]);
    }

    let out = TriangleMesh::new(vertices, faces)?;
    match mesh.tags() {
        Some(tags) => {
            let base = tags.iter().copied().max().map_or(0, |m| m + 1);
            let mut new_tags = tags.to_vec();
            new_tags.extend((0..edges.len() as u32).map(|e| base + e));
            out.with_tags(new_tags)
        }
        None => Ok(out),
    }
}

/// Point samples on a surface with the normal and index of the face each was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSamples {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub faces: Vec<u32>,
}

impl SurfaceSamples {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Area-uniform surface sampling.
///
/// Uses a ChaCha8 stream seeded from `seed`. Per point, the draws are: one
/// uniform for the face (inverting the cumulative area table), then two
/// barycentric uniforms folded into the triangle.
pub fn sample_surface_uniform(
    mesh: &TriangleMesh,
    n_points: usize,
    seed: u64,
) -> Result<SurfaceSamples, MeshError> {
    if mesh.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    if n_points == 0 {
        return Err(MeshError::InvalidParameter("sample count must be at least 1".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.face_count());
    let mut total = 0.0;
    for f in 0..mesh.face_count() {
        total += mesh.face_area(f);
        cumulative.push(total);
    }
    let normals: Vec<Vec3> = (0..mesh.face_count()).map(|f| mesh.face_normal(f)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SurfaceSamples {
        points: Vec::with_capacity(n_points),
        normals: Vec::with_capacity(n_points),
        faces: Vec::with_capacity(n_points),
    };
    let last = mesh.face_count() - 1;
    for _ in 0..n_points {
        let target = rng.random::<f64>() * total;
        let f = cumulative.partition_point(|&c| c <= target).min(last);
        let mut u = rng.random::<f64>();
        let mut v = rng.random::<f64>();
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let [a, b, c] = mesh.triangle(f);
        out.points.push(a + (b - a) * u + (c - a) * v);
        out.normals.push(normals[f]);
        out.faces.push(f as u32);
    }
    Ok(out)
}
