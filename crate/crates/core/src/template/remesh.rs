//! Isotropic remeshing of closed manifold meshes: long-edge splits,
//! short-edge collapses, valence-improving flips and tangential relaxation,
//! with vertices projected back onto the input surface after each pass.

use crate::geom::{triangle_normal, Vec3};
use crate::mesh::{MeshError, TriangleMesh};
use crate::spatial::TriangleBvh;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemeshConfig {
    pub target_edge_length: f64,
    pub iterations: usize,
}

struct DynMesh {
    pos: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    face_alive: Vec<bool>,
    vert_alive: Vec<bool>,
    vfaces: Vec<Vec<u32>>,
}

impl DynMesh {
    fn from_mesh(mesh: &TriangleMesh) -> Self {
        let mut vfaces = vec![Vec::new(); mesh.vertex_count()];
        for (f, tri) in mesh.faces().iter().enumerate() {
            for &v in tri {
                vfaces[v as usize].push(f as u32);
            }
        }
        Self {
            pos: mesh.vertices().to_vec(),
            faces: mesh.faces().to_vec(),
            face_alive: vec![true; mesh.face_count()],
            vert_alive: vec![true; mesh.vertex_count()],
            vfaces,
        }
    }

    fn live_vertices(&self) -> usize {
        self.vert_alive.iter().filter(|&&a| a).count()
    }

    fn neighbors(&self, v: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self.vfaces[v as usize]
            .iter()
            .flat_map(|&f| self.faces[f as usize])
            .filter(|&w| w != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn valence(&self, v: u32) -> usize {
        self.vfaces[v as usize].len()
    }

    /// Unique edges (a < b) of live faces, sorted.
    fn edges(&self) -> Vec<[u32; 2]> {
        let mut e: Vec<[u32; 2]> = Vec::new();
        for (f, tri) in self.faces.iter().enumerate() {
            if !self.face_alive[f] {
                continue;
            }
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if a < b {
                    e.push([a, b]);
                }
            }
        }
        e.sort_unstable();
        e
    }

    /// The face traversing a→b and its third vertex.
    fn directed_face(&self, a: u32, b: u32) -> Option<(u32, u32)> {
        for &f in &self.vfaces[a as usize] {
            let t = self.faces[f as usize];
            for k in 0..3 {
                if t[k] == a && t[(k + 1) % 3] == b {
                    return Some((f, t[(k + 2) % 3]));
                }
            }
        }
        None
    }

    /// Faces (a, b, c) and (b, a, d) around edge a–b.
    fn edge_wings(&self, a: u32, b: u32) -> Option<(u32, u32, u32, u32)> {
        let (f1, c) = self.directed_face(a, b)?;
        let (f2, d) = self.directed_face(b, a)?;
        Some((f1, c, f2, d))
    }

    fn face_normal(&self, f: u32) -> Vec3 {
        let [a, b, c] = self.faces[f as usize].map(|v| self.pos[v as usize]);
        triangle_normal(&a, &b, &c)
    }

    fn replace_vertex_in_face(&mut self, f: u32, from: u32, to: u32) {
        for v in self.faces[f as usize].iter_mut() {
            if *v == from {
                *v = to;
            }
        }
    }

    fn detach(&mut self, v: u32, f: u32) {
        self.vfaces[v as usize].retain(|&g| g != f);
    }

    fn add_face(&mut self, tri: [u32; 3]) -> u32 {
        let f = self.faces.len() as u32;
        self.faces.push(tri);
        self.face_alive.push(true);
        for &v in &tri {
            self.vfaces[v as usize].push(f);
        }
        f
    }

    fn split(&mut self, a: u32, b: u32) -> bool {
        let Some((f1, c, f2, d)) = self.edge_wings(a, b) else {
            return false;
        };
        let m = self.pos.len() as u32;
        self.pos.push((self.pos[a as usize] + self.pos[b as usize]) * 0.5);
        self.vert_alive.push(true);
        self.vfaces.push(vec![f1, f2]);

        self.faces[f1 as usize] = [a, m, c];
        self.detach(b, f1);
        self.add_face([m, b, c]);

        self.faces[f2 as usize] = [b, m, d];
        self.detach(a, f2);
        self.add_face([m, a, d]);
        true
    }

    fn collapse(&mut self, a: u32, b: u32, high: f64) -> bool {
        let Some((f1, c, f2, d)) = self.edge_wings(a, b) else {
            return false;
        };
        if c == d || self.live_vertices() <= 4 {
            return false;
        }
        if self.valence(c) <= 3 || self.valence(d) <= 3 {
            return false;
        }
        let na = self.neighbors(a);
        let nb = self.neighbors(b);
        let common: Vec<u32> = na.iter().copied().filter(|v| nb.binary_search(v).is_ok()).collect();
        if common.len() != 2 {
            return false;
        }
        let mid = (self.pos[a as usize] + self.pos[b as usize]) * 0.5;
        let high2 = high * high;
        if na
            .iter()
            .chain(&nb)
            .any(|&x| x != a && x != b && (self.pos[x as usize] - mid).norm_squared() > high2)
        {
            return false;
        }
        for &(v, other) in &[(a, b), (b, a)] {
            for &f in &self.vfaces[v as usize] {
                if f == f1 || f == f2 {
                    continue;
                }
                let tri = self.faces[f as usize];
                if tri.contains(&other) {
                    continue;
                }
                let before = self.face_normal(f);
                let moved = tri.map(|w| if w == v { mid } else { self.pos[w as usize] });
                let n = (moved[1] - moved[0]).cross(&(moved[2] - moved[0]));
                let len = n.norm();
                if !(len > 1e-12 * high2) || (n / len).dot(&before) < 0.2 {
                    return false;
                }
            }
        }

        for &f in &[f1, f2] {
            self.face_alive[f as usize] = false;
            for v in self.faces[f as usize] {
                self.detach(v, f);
            }
        }
        let moved = std::mem::take(&mut self.vfaces[a as usize]);
        for &f in &moved {
            self.replace_vertex_in_face(f, a, b);
        }
        self.vfaces[b as usize].extend(moved);
        self.pos[b as usize] = mid;
        self.vert_alive[a as usize] = false;
        true
    }

    fn flip(&mut self, a: u32, b: u32) -> bool {
        let Some((f1, c, f2, d)) = self.edge_wings(a, b) else {
            return false;
        };
        if c == d || self.valence(a) <= 3 || self.valence(b) <= 3 {
            return false;
        }
        if self.directed_face(c, d).is_some() || self.directed_face(d, c).is_some() {
            return false;
        }
        let dev = |x: usize| (x as i64 - 6).abs();
        let (va, vb, vc, vd) = (self.valence(a), self.valence(b), self.valence(c), self.valence(d));
        let before = dev(va) + dev(vb) + dev(vc) + dev(vd);
        let after = dev(va - 1) + dev(vb - 1) + dev(vc + 1) + dev(vd + 1);
        if after >= before {
            return false;
        }
        let p = |v: u32| self.pos[v as usize];
        let old = (self.face_normal(f1) + self.face_normal(f2)).normalize();
        let n1 = triangle_normal(&p(a), &p(d), &p(c));
        let n2 = triangle_normal(&p(d), &p(b), &p(c));
        if !(n1.dot(&n2) > 0.5 && n1.dot(&old) > 0.5 && n2.dot(&old) > 0.5) {
            return false;
        }
        self.faces[f1 as usize] = [a, d, c];
        self.faces[f2 as usize] = [d, b, c];
        self.detach(b, f1);
        self.detach(a, f2);
        self.vfaces[d as usize].push(f1);
        self.vfaces[c as usize].push(f2);
        true
    }

    fn vertex_normal(&self, v: u32) -> Vec3 {
        let mut n = Vec3::zeros();
        for &f in &self.vfaces[v as usize] {
            let [a, b, c] = self.faces[f as usize].map(|w| self.pos[w as usize]);
            n += (b - a).cross(&(c - a));
        }
        n.try_normalize(0.0).unwrap_or_else(Vec3::zeros)
    }

    fn relax(&mut self, reference: &TriangleBvh) {
        let updated: Vec<(usize, Vec3)> = (0..self.pos.len())
            .filter(|&v| self.vert_alive[v])
            .map(|v| {
                let ring = self.neighbors(v as u32);
                let centroid = ring.iter().map(|&w| self.pos[w as usize]).sum::<Vec3>() / ring.len() as f64;
                let n = self.vertex_normal(v as u32);
                let delta = centroid - self.pos[v];
                let tangential = delta - n * n.dot(&delta);
                let moved = self.pos[v] + tangential * 0.5;
                let projected = reference.closest_point(&moved).map(|h| h.point).unwrap_or(moved);
                (v, projected)
            })
            .collect();
        for (v, p) in updated {
            self.pos[v] = p;
        }
    }

    fn into_mesh(self) -> Result<TriangleMesh, MeshError> {
        let mut remap = vec![u32::MAX; self.pos.len()];
        let mut vertices = Vec::new();
        for (v, &alive) in self.vert_alive.iter().enumerate() {
            if alive && !self.vfaces[v].is_empty() {
                remap[v] = vertices.len() as u32;
                vertices.push(self.pos[v]);
            }
        }
        let faces = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &alive)| alive)
            .map(|(t, _)| t.map(|v| remap[v as usize]))
            .collect();
        TriangleMesh::new(vertices, faces)
    }
}

/// Remeshes towards edges of length `target_edge_length`. Splits above 4/3
/// and collapses below 4/5 of the target; vertices stay on the input surface.
pub fn isotropic_remesh(mesh: &TriangleMesh, config: &RemeshConfig) -> Result<TriangleMesh, MeshError> {
    let l = config.target_edge_length;
    if !(l > 0.0 && l.is_finite()) {
        return Err(MeshError::InvalidParameter(format!("target edge length {l}")));
    }
    if !mesh.is_closed() {
        return Err(MeshError::NotClosed);
    }
    let reference = TriangleBvh::new(mesh.vertices(), mesh.faces());
    let (high, low) = (4.0 / 3.0 * l, 4.0 / 5.0 * l);
    let mut dm = DynMesh::from_mesh(mesh);
    let len = |dm: &DynMesh, [a, b]: [u32; 2]| (dm.pos[a as usize] - dm.pos[b as usize]).norm();

    for _ in 0..config.iterations {
        for e in dm.edges() {
            if len(&dm, e) > high {
                dm.split(e[0], e[1]);
            }
        }
        for e in dm.edges() {
            if dm.vert_alive[e[0] as usize] && dm.vert_alive[e[1] as usize] && len(&dm, e) < low {
                dm.collapse(e[0], e[1], high);
            }
        }
        for e in dm.edges() {
            if dm.directed_face(e[0], e[1]).is_some() {
                dm.flip(e[0], e[1]);
            }
        }
        dm.relax(&reference);
    }
    dm.into_mesh()
}
