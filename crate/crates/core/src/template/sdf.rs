//! Signed distance grids of closed triangle meshes.
//!
//! Magnitudes are exact point-to-triangle distances from a BVH query. Signs
//! come from the generalized winding number (inside ⇔ w ≥ ½). The winding
//! number is evaluated directly at nodes within half a voxel of the surface;
//! every other node inherits it from a representative of its connected
//! far-region component, since no grid edge joining two far nodes can cross
//! the surface.

use std::collections::VecDeque;
use std::f64::consts::PI;

use rayon::prelude::*;

use super::TemplateError;
use crate::field::GridSpec;
use crate::geom::{solid_angle, Aabb, Vec3};
use crate::mesh::TriangleMesh;
use crate::spatial::TriangleBvh;

/// Signed distances (negative inside) at the nodes of `spec`, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SdfGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl SdfGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self, TemplateError> {
        spec.validate().map_err(|e| TemplateError::InvalidConfig(e.to_string()))?;
        if values.len() != spec.node_count() {
            return Err(TemplateError::InvalidConfig(format!(
                "{} values for {} nodes",
                values.len(),
                spec.node_count()
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(&Vec3) -> f64) -> Result<Self, TemplateError> {
        let mut values = Vec::with_capacity(spec.node_count());
        for k in 0..spec.dims[2] {
            for j in 0..spec.dims[1] {
                for i in 0..spec.dims[0] {
                    values.push(f(&spec.node_position(i, j, k)));
                }
            }
        }
        Self::new(spec, values)
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.spec.index(i, j, k)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Generalized winding number of a closed, outward-oriented triangle set at `p`.
pub fn winding_number(p: &Vec3, triangles: &[[Vec3; 3]]) -> f64 {
    triangles
        .iter()
        .map(|t| solid_angle(p, &t[0], &t[1], &t[2]))
        .sum::<f64>()
        / (4.0 * PI)
}

fn triangles_of(mesh: &TriangleMesh) -> Vec<[Vec3; 3]> {
    (0..mesh.face_count()).map(|f| mesh.triangle(f)).collect()
}

/// Signed distance from each point to a closed mesh (negative inside).
pub fn signed_distances(mesh: &TriangleMesh, points: &[Vec3]) -> Result<Vec<f64>, TemplateError> {
    if !mesh.is_closed() {
        return Err(TemplateError::NotClosed);
    }
    let bvh = TriangleBvh::new(mesh.vertices(), mesh.faces());
    let tris = triangles_of(mesh);
    Ok(points
        .par_iter()
        .map(|p| {
            let d = bvh.closest_point(p).expect("non-empty mesh").distance_squared.sqrt();
            if winding_number(p, &tris) >= 0.5 {
                -d
            } else {
                d
            }
        })
        .collect())
}

/// Axis-aligned grid around all meshes with `resolution` nodes per axis,
/// the bounding box widened by `margin_voxels` voxels on every side.
pub fn common_bbox(
    meshes: &[TriangleMesh],
    resolution: usize,
    margin_voxels: usize,
) -> Result<GridSpec, TemplateError> {
    let mut bbox = Aabb::empty();
    for m in meshes {
        for v in m.vertices() {
            bbox.grow(v);
        }
    }
    if bbox.is_empty() {
        return Err(TemplateError::EmptyInput);
    }
    let intervals = resolution as i64 - 1 - 2 * margin_voxels as i64;
    if intervals < 1 {
        return Err(TemplateError::InvalidConfig(format!(
            "resolution {resolution} leaves no room for a {margin_voxels}-voxel margin"
        )));
    }
    let ext = bbox.extent();
    let scale = ext.amax().max(1.0);
    if ext.iter().any(|&e| !(e > 1e-12 * scale)) {
        return Err(TemplateError::DegenerateExtent);
    }
    let spacing = ext / intervals as f64;
    let origin = bbox.min - spacing * margin_voxels as f64;
    GridSpec::new([resolution; 3], origin, spacing).map_err(|e| TemplateError::InvalidConfig(e.to_string()))
}

/// Samples the signed distance of a closed mesh at every node of `spec`.
pub fn mesh_to_sdf(mesh: &TriangleMesh, spec: &GridSpec) -> Result<SdfGrid, TemplateError> {
    if !mesh.is_closed() {
        return Err(TemplateError::NotClosed);
    }
    let grid_box = spec.bbox();
    let mb = mesh.bbox();
    let slack = 1e-9 * grid_box.diagonal();
    if (0..3).any(|a| mb.min[a] < grid_box.min[a] - slack || mb.max[a] > grid_box.max[a] + slack) {
        return Err(TemplateError::MeshOutsideGrid);
    }
    let bvh = TriangleBvh::new(mesh.vertices(), mesh.faces());
    let [nx, ny, nz] = spec.dims;

    // Unsigned distances, one x-row per task.
    let rows: Vec<Vec<f64>> = (0..ny * nz)
        .into_par_iter()
        .map(|row| {
            let (j, k) = (row % ny, row / ny);
            (0..nx)
                .map(|i| {
                    let p = spec.node_position(i, j, k);
                    bvh.closest_point(&p).expect("non-empty mesh").distance_squared.sqrt()
                })
                .collect()
        })
        .collect();
    let unsigned: Vec<f64> = rows.into_iter().flatten().collect();

    let band = 0.5 * spec.spacing().amax() * (1.0 + 1e-9);
    let tris = triangles_of(mesh);
    let inside = |p: &Vec3| winding_number(p, &tris) >= 0.5;

    let near: Vec<usize> = (0..unsigned.len()).filter(|&n| unsigned[n] <= band).collect();
    let near_inside: Vec<bool> = near
        .par_iter()
        .map(|&n| {
            let (i, j, k) = (n % nx, (n / nx) % ny, n / (nx * ny));
            inside(&spec.node_position(i, j, k))
        })
        .collect();

    // 0 = unknown, 1 = inside, 2 = outside.
    let mut state = vec![0u8; unsigned.len()];
    for (&n, &ins) in near.iter().zip(&near_inside) {
        state[n] = if ins { 1 } else { 2 };
    }
    let mut queue = VecDeque::new();
    for seed in 0..unsigned.len() {
        if state[seed] != 0 {
            continue;
        }
        let (i, j, k) = (seed % nx, (seed / nx) % ny, seed / (nx * ny));
        let label = if inside(&spec.node_position(i, j, k)) { 1 } else { 2 };
        state[seed] = label;
        queue.push_back(seed);
        while let Some(n) = queue.pop_front() {
            let (i, j, k) = (n % nx, (n / nx) % ny, n / (nx * ny));
            let mut visit = |m: usize| {
                if state[m] == 0 && unsigned[m] > band {
                    state[m] = label;
                    queue.push_back(m);
                }
            };
            if i > 0 {
                visit(n - 1);
            }
            if i + 1 < nx {
                visit(n + 1);
            }
            if j > 0 {
                visit(n - nx);
            }
            if j + 1 < ny {
                visit(n + nx);
            }
            if k > 0 {
                visit(n - nx * ny);
            }
            if k + 1 < nz {
                visit(n + nx * ny);
            }
        }
    }

    let values = unsigned
        .iter()
        .zip(&state)
        .map(|(&d, &s)| if s == 1 { -d } else { d })
        .collect();
    SdfGrid::new(*spec, values)
}

/// Pointwise minimum of grids sharing one spec.
pub fn sdf_union(grids: &[SdfGrid]) -> Result<SdfGrid, TemplateError> {
    let first = grids.first().ok_or(TemplateError::EmptyInput)?;
    if grids.iter().any(|g| g.spec != first.spec) {
        return Err(TemplateError::SpecMismatch);
    }
    let mut values = first.values.clone();
    for g in &grids[1..] {
        for (v, &w) in values.iter_mut().zip(&g.values) {
            *v = v.min(w);
        }
    }
    SdfGrid::new(first.spec, values)
}
