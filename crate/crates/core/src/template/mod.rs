//! Genus-zero template construction from a set of closed training surfaces.
//!
//! The surfaces are rasterized into signed distance grids over a shared
//! frame, merged by pointwise minimum, and the union is extracted slightly
//! outside the zero level so every training surface ends up enclosed. The
//! extracted surface is cleaned, smoothed, remeshed to a uniform edge length
//! and then subdivided into a family of increasing resolution.

mod marching_cubes;
mod remesh;
mod sdf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use marching_cubes::marching_cubes;
pub use remesh::{isotropic_remesh, RemeshConfig};
pub use sdf::{common_bbox, mesh_to_sdf, sdf_union, signed_distances, winding_number, SdfGrid};

use crate::field::GridSpec;
use crate::mesh::{laplacian_smooth, subdivide_midpoint, MeshError, TriangleMesh};

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("no input meshes")]
    EmptyInput,
    #[error("input bounding box is degenerate along some axis")]
    DegenerateExtent,
    #[error("mesh is not closed")]
    NotClosed,
    #[error("mesh extends outside the grid")]
    MeshOutsideGrid,
    #[error("distance grids are defined over different grids")]
    SpecMismatch,
    #[error("iso level {0} is not finite")]
    IsoOutOfRange(f64),
    #[error("template has Euler characteristic {chi}, expected 2")]
    TopologyFailure { chi: i64 },
    #[error("training vertex lies {distance} outside the template (tolerance {tolerance})")]
    ContainmentFailure { distance: f64, tolerance: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateConfig {
    /// Grid nodes per axis.
    pub resolution: usize,
    pub margin_voxels: usize,
    /// Extraction level in voxels (multiples of the largest grid spacing).
    pub iso_voxels: f64,
    pub smoothing_iterations: usize,
    pub smoothing_lambda: f64,
    /// Remeshing target edge length in voxels.
    pub edge_length_voxels: f64,
    pub remesh_iterations: usize,
    /// Number of family members; member `i` is the remeshed surface
    /// subdivided `i` times.
    pub levels: usize,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self {
            resolution: 128,
            margin_voxels: 4,
            iso_voxels: 1.0,
            smoothing_iterations: 10,
            smoothing_lambda: 0.5,
            edge_length_voxels: 2.5,
            remesh_iterations: 8,
            levels: 3,
        }
    }
}

impl TemplateConfig {
    pub fn validate(&self) -> Result<(), TemplateError> {
        let bad = |m: &str| Err(TemplateError::InvalidConfig(m.to_string()));
        if self.resolution < 4 {
            return bad("resolution must be at least 4");
        }
        if !(self.iso_voxels.is_finite() && self.iso_voxels >= 0.0) {
            return bad("iso offset must be finite and non-negative");
        }
        if !(self.smoothing_lambda > 0.0 && self.smoothing_lambda <= 1.0) {
            return bad("smoothing lambda must lie in (0, 1]");
        }
        if !(self.edge_length_voxels > 0.0 && self.edge_length_voxels.is_finite()) {
            return bad("edge length must be positive");
        }
        if self.levels == 0 {
            return bad("at least one template level is required");
        }
        Ok(())
    }
}

/// Diagnostics gathered while building a template family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateReport {
    pub grid: GridSpec,
    pub iso: f64,
    pub extracted_vertices: usize,
    pub extracted_faces: usize,
    pub dihedral_before_smoothing: f64,
    pub dihedral_after_smoothing: f64,
    pub euler_characteristic: i64,
    /// Largest signed distance of any training vertex to the coarsest member.
    pub max_training_distance: f64,
    pub containment_tolerance: f64,
    pub level_sizes: Vec<[usize; 2]>,
}

#[derive(Debug, Clone)]
pub struct TemplateFamily {
    /// Coarsest first. Vertices of each member carry provenance tags that
    /// extend those of the previous member.
    pub levels: Vec<TemplateMesh>,
    pub report: TemplateReport,
}

#[derive(Debug, Clone)]
pub struct TemplateMesh {
    pub level: usize,
    pub mesh: TriangleMesh,
}

impl TemplateMesh {
    pub fn file_stem(&self) -> String {
        format!("template_L{}", self.level)
    }
}

fn check_genus_zero(mesh: &TriangleMesh) -> Result<i64, TemplateError> {
    let chi = mesh.euler_characteristic()?;
    if chi != 2 || !mesh.is_closed() {
        return Err(TemplateError::TopologyFailure { chi });
    }
    Ok(chi)
}

/// Builds a template family enclosing every training mesh.
pub fn build_template(meshes: &[TriangleMesh], config: &TemplateConfig) -> Result<TemplateFamily, TemplateError> {
    config.validate()?;
    if meshes.is_empty() {
        return Err(TemplateError::EmptyInput);
    }
    if meshes.iter().any(|m| !m.is_closed()) {
        return Err(TemplateError::NotClosed);
    }
    let grid = common_bbox(meshes, config.resolution, config.margin_voxels)?;
    let voxel = grid.spacing().amax();
    let grids = meshes
        .iter()
        .map(|m| mesh_to_sdf(m, &grid))
        .collect::<Result<Vec<_>, _>>()?;
    let union = sdf_union(&grids)?;
    drop(grids);

    let iso = config.iso_voxels * voxel;
    let extracted = marching_cubes(&union, iso)?;
    if extracted.is_empty() {
        return Err(TemplateError::TopologyFailure { chi: 0 });
    }
    let extracted = extracted.largest_component();
    check_genus_zero(&extracted)?;
    let dihedral_before = extracted.max_dihedral_deviation();
    let smoothed = laplacian_smooth(&extracted, config.smoothing_iterations, config.smoothing_lambda)?;
    let dihedral_after = smoothed.max_dihedral_deviation();
    log::debug!(
        "extracted {} vertices, dihedral deviation {dihedral_before:.3} -> {dihedral_after:.3}",
        extracted.vertex_count()
    );

    let base = isotropic_remesh(
        &smoothed,
        &RemeshConfig {
            target_edge_length: config.edge_length_voxels * voxel,
            iterations: config.remesh_iterations,
        },
    )?
    .with_sequential_tags();
    let chi = check_genus_zero(&base)?;

    let tolerance = grid.voxel_diagonal();
    let mut max_distance = f64::NEG_INFINITY;
    for m in meshes {
        let d = signed_distances(&base, m.vertices())?;
        max_distance = d.into_iter().fold(max_distance, f64::max);
    }
    if max_distance > tolerance {
        return Err(TemplateError::ContainmentFailure {
            distance: max_distance,
            tolerance,
        });
    }

    let mut levels = vec![TemplateMesh { level: 0, mesh: base }];
    for level in 1..config.levels {
        let mesh = subdivide_midpoint(&levels[level - 1].mesh, 1)?;
        check_genus_zero(&mesh)?;
        levels.push(TemplateMesh { level, mesh });
    }
    let report = TemplateReport {
        grid,
        iso,
        extracted_vertices: extracted.vertex_count(),
        extracted_faces: extracted.face_count(),
        dihedral_before_smoothing: dihedral_before,
        dihedral_after_smoothing: dihedral_after,
        euler_characteristic: chi,
        max_training_distance: max_distance,
        containment_tolerance: tolerance,
        level_sizes: levels.iter().map(|l| [l.mesh.vertex_count(), l.mesh.face_count()]).collect(),
    };
    Ok(TemplateFamily { levels, report })
}
