//! Marching cubes with a case table generated at first use.
//!
//! Corner `c` of a cell sits at offset `(c & 1, c >> 1 & 1, c >> 2 & 1)`.
//! A corner is inside when its value is below the iso level. Ambiguous faces
//! (inside corners on a diagonal) are resolved by cutting each inside corner
//! off on its own, so inside regions never connect across a face diagonal.
//! Because neighbouring cells see the same face configuration, the
//! extracted surface is watertight and consistently oriented, with normals
//! pointing towards increasing values.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::sdf::SdfGrid;
use super::TemplateError;
use crate::geom::Vec3;
use crate::mesh::TriangleMesh;

const EDGES: [[usize; 2]; 12] = {
    let mut e = [[0usize; 2]; 12];
    let mut n = 0;
    let mut axis = 0;
    while axis < 3 {
        let mut c = 0;
        while c < 8 {
            if c & (1 << axis) == 0 {
                e[n] = [c, c | (1 << axis)];
                n += 1;
            }
            c += 1;
        }
        axis += 1;
    }
    e
};

/// Outward-oriented triangles of one inside/outside configuration.
#[derive(Debug, Clone, Default)]
struct Case {
    triangles: Vec<[Tri; 3]>,
}

/// A triangle corner: a cube edge, or the centroid of a loop's edges.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Tri {
    Edge(usize),
    Centroid(u16),
}

/// The 256 cases plus the edge loops that are triangulated around their
/// centroid (loops where every fan would reuse a diagonal of a cube face).
fn table() -> &'static (Vec<Case>, Vec<Vec<usize>>) {
    static TABLE: OnceLock<(Vec<Case>, Vec<Vec<usize>>)> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

fn corner_pos(c: usize) -> Vec3 {
    Vec3::new((c & 1) as f64, (c >> 1 & 1) as f64, (c >> 2 & 1) as f64)
}

fn edge_index(a: usize, b: usize) -> usize {
    let (a, b) = if a < b { (a, b) } else { (b, a) };
    EDGES.iter().position(|e| *e == [a, b]).expect("cube edge")
}

fn edge_mid(e: usize) -> Vec3 {
    (corner_pos(EDGES[e][0]) + corner_pos(EDGES[e][1])) * 0.5
}

/// The six faces as (outward normal, corner cycle).
fn faces() -> Vec<(Vec3, [usize; 4])> {
    let mut out = Vec::new();
    for axis in 0..3 {
        let (u, v) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for side in 0..2 {
            let base = side << axis;
            let cyc = [base, base | 1 << u, base | 1 << u | 1 << v, base | 1 << v];
            let mut n = Vec3::zeros();
            n[axis] = if side == 1 { 1.0 } else { -1.0 };
            out.push((n, cyc));
        }
    }
    out
}

fn build_table() -> (Vec<Case>, Vec<Vec<usize>>) {
    let faces = faces();
    let mut edge_faces: Vec<Vec<usize>> = vec![Vec::new(); 12];
    for (fi, (_, cyc)) in faces.iter().enumerate() {
        for k in 0..4 {
            edge_faces[edge_index(cyc[k], cyc[(k + 1) % 4])].push(fi);
        }
    }
    let share_face = |a: usize, b: usize| edge_faces[a].iter().any(|f| edge_faces[b].contains(f));

    let mut centroids = Vec::new();
    let mut cases = Vec::with_capacity(256);
    for mask in 0..256usize {
        let inside = |c: usize| mask >> c & 1 == 1;
        let mut next = [usize::MAX; 12];
        for (n, cyc) in &faces {
            let crossing: Vec<usize> = (0..4)
                .filter(|&k| inside(cyc[k]) != inside(cyc[(k + 1) % 4]))
                .collect();
            let mut segments: Vec<(usize, usize, usize)> = Vec::new();
            match crossing.len() {
                0 => {}
                2 => {
                    let e0 = edge_index(cyc[crossing[0]], cyc[(crossing[0] + 1) % 4]);
                    let e1 = edge_index(cyc[crossing[1]], cyc[(crossing[1] + 1) % 4]);
                    let probe = (0..4).find(|&k| inside(cyc[k])).expect("inside corner");
                    segments.push((e0, e1, cyc[probe]));
                }
                4 => {
                    for k in 0..4 {
                        if inside(cyc[k]) {
                            let prev = edge_index(cyc[(k + 3) % 4], cyc[k]);
                            let next = edge_index(cyc[k], cyc[(k + 1) % 4]);
                            segments.push((prev, next, cyc[k]));
                        }
                    }
                }
                _ => unreachable!("odd crossing count"),
            }
            for (e0, e1, inner) in segments {
                let (p, q) = (edge_mid(e0), edge_mid(e1));
                // The in-face normal n × (q − p) must point away from the inside corner.
                let side = n.cross(&(q - p)).dot(&(corner_pos(inner) - p));
                let (from, to) = if side < 0.0 { (e0, e1) } else { (e1, e0) };
                debug_assert_eq!(next[from], usize::MAX);
                next[from] = to;
            }
        }

        let mut used = [false; 12];
        let mut triangles = Vec::new();
        for start in 0..12 {
            if next[start] == usize::MAX || used[start] {
                continue;
            }
            let mut lp = vec![start];
            used[start] = true;
            let mut e = next[start];
            while e != start {
                used[e] = true;
                lp.push(e);
                e = next[e];
            }
            let m = lp.len();
            let apex = (0..m).find(|&r| {
                (2..m - 1).all(|i| !share_face(lp[r], lp[(r + i) % m]))
            });
            match apex {
                Some(r) => {
                    for i in 1..m - 1 {
                        triangles.push([
                            Tri::Edge(lp[r]),
                            Tri::Edge(lp[(r + i) % m]),
                            Tri::Edge(lp[(r + i + 1) % m]),
                        ]);
                    }
                }
                None => {
                    let id = centroids.len() as u16;
                    centroids.push(lp.clone());
                    for i in 0..m {
                        triangles.push([Tri::Centroid(id), Tri::Edge(lp[i]), Tri::Edge(lp[(i + 1) % m])]);
                    }
                }
            }
        }
        cases.push(Case { triangles });
    }
    (cases, centroids)
}

/// Extracts the `iso` level set of `grid` as a triangle mesh. Values strictly
/// below `iso` are inside. Crossing points are linearly interpolated and kept
/// off the grid nodes by a relative margin of 1e-6, so faces are never
/// degenerate. A level set that never crosses the grid yields an empty mesh.
pub fn marching_cubes(grid: &SdfGrid, iso: f64) -> Result<TriangleMesh, TemplateError> {
    if !iso.is_finite() {
        return Err(TemplateError::IsoOutOfRange(iso));
    }
    let (cases, centroid_loops) = table();
    let spec = &grid.spec;
    let [nx, ny, nz] = spec.dims;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut edge_vertex: HashMap<usize, u32> = HashMap::new();
    let clamp = 1e-6;

    for k in 0..nz.saturating_sub(1) {
        for j in 0..ny.saturating_sub(1) {
            for i in 0..nx.saturating_sub(1) {
                let node = |c: usize| spec.index(i + (c & 1), j + (c >> 1 & 1), k + (c >> 2 & 1));
                let mut mask = 0usize;
                let mut vals = [0.0; 8];
                for (c, v) in vals.iter_mut().enumerate() {
                    *v = grid.values[node(c)];
                    if *v < iso {
                        mask |= 1 << c;
                    }
                }
                if mask == 0 || mask == 255 {
                    continue;
                }
                let mut local = [u32::MAX; 12];
                let mut vertex_for = |e: usize, vertices: &mut Vec<Vec3>| -> u32 {
                    if local[e] != u32::MAX {
                        return local[e];
                    }
                    let [a, b] = EDGES[e];
                    let axis = (a ^ b).trailing_zeros() as usize;
                    let key = node(a) * 3 + axis;
                    let id = *edge_vertex.entry(key).or_insert_with(|| {
                        let t = ((iso - vals[a]) / (vals[b] - vals[a])).clamp(clamp, 1.0 - clamp);
                        let pa = spec.node_position(i + (a & 1), j + (a >> 1 & 1), k + (a >> 2 & 1));
                        let pb = spec.node_position(i + (b & 1), j + (b >> 1 & 1), k + (b >> 2 & 1));
                        vertices.push(pa + (pb - pa) * t);
                        (vertices.len() - 1) as u32
                    });
                    local[e] = id;
                    id
                };
                let mut centroid_ids: Vec<(u16, u32)> = Vec::new();
                for tri in &cases[mask].triangles {
                    let mut ids = [0u32; 3];
                    for (slot, corner) in ids.iter_mut().zip(tri) {
                        *slot = match *corner {
                            Tri::Edge(e) => vertex_for(e, &mut vertices),
                            Tri::Centroid(c) => {
                                if let Some(&(_, id)) = centroid_ids.iter().find(|(cc, _)| *cc == c) {
                                    id
                                } else {
                                    let lp = &centroid_loops[c as usize];
                                    let ids: Vec<u32> = lp.iter().map(|&e| vertex_for(e, &mut vertices)).collect();
                                    let mean = ids.iter().map(|&v| vertices[v as usize]).sum::<Vec3>()
                                        / ids.len() as f64;
                                    vertices.push(mean);
                                    let id = (vertices.len() - 1) as u32;
                                    centroid_ids.push((c, id));
                                    id
                                }
                            }
                        };
                    }
                    faces.push(ids);
                }
            }
        }
    }
    Ok(TriangleMesh::new(vertices, faces)?)
}
