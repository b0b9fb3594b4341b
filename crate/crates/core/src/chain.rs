//! Sequential deformation stages: mesh₀ = seed, meshᵢ = DMD(Uᵢ, meshᵢ₋₁).
//!
//! The same machinery realizes template-seeded chains and white-to-pial
//! chains, where the seed is a previously deformed white surface.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldError, FlowField};
use crate::integrate::{integrate_mesh, IntegrateError, IntegratorConfig, Method};
use crate::mesh::TriangleMesh;
use crate::mesh_io::{read_mesh, MeshIoError};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("a deformation chain needs at least one stage")]
    NoStages,
    #[error("stage {stage} grid does not share the world frame of stage 0")]
    FrameMismatch { stage: usize },
    #[error("stage {stage}: {source}")]
    Integrate {
        stage: usize,
        #[source]
        source: IntegrateError,
    },
    #[error("white surface must be a closed manifold")]
    NotClosed,
    #[error("white surface carries no provenance tags")]
    MissingTags,
    #[error("meshes differ in connectivity or tags")]
    ConnectivityMismatch,
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    MeshIo(#[from] MeshIoError),
}

/// One DMD stage.
#[derive(Debug, Clone)]
pub struct Stage {
    pub field: FlowField,
    pub config: IntegratorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedKind {
    Template,
    WhiteSurface,
}

#[derive(Debug, Clone)]
pub enum Seed {
    Template(TriangleMesh),
    WhiteSurface(TriangleMesh),
}

impl Seed {
    pub fn mesh(&self) -> &TriangleMesh {
        match self {
            Seed::Template(m) | Seed::WhiteSurface(m) => m,
        }
    }

    pub fn kind(&self) -> SeedKind {
        match self {
            Seed::Template(_) => SeedKind::Template,
            Seed::WhiteSurface(_) => SeedKind::WhiteSurface,
        }
    }
}

/// Validated stage list plus seed surface.
#[derive(Debug, Clone)]
pub struct DeformationChain {
    seed: Seed,
    stages: Vec<Stage>,
}

/// Final mesh and, unless streaming, the mesh after every stage.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub output: TriangleMesh,
    pub intermediates: Vec<TriangleMesh>,
}

fn check_frames(stages: &[Stage]) -> Result<(), ChainError> {
    let Some(first) = stages.first() else {
        return Err(ChainError::NoStages);
    };
    for (i, s) in stages.iter().enumerate().skip(1) {
        if !first.field.grid().same_frame(s.field.grid()) {
            return Err(ChainError::FrameMismatch { stage: i });
        }
    }
    Ok(())
}

impl DeformationChain {
    pub fn new(seed: Seed, stages: Vec<Stage>) -> Result<Self, ChainError> {
        check_frames(&stages)?;
        for (i, s) in stages.iter().enumerate() {
            s.config
                .validate()
                .map_err(|source| ChainError::Integrate { stage: i, source })?;
        }
        if let Seed::WhiteSurface(m) = &seed {
            check_white(m)?;
        }
        Ok(Self { seed, stages })
    }

    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Overrides solver and/or step count on every stage.
    pub fn with_integrator(mut self, method: Option<Method>, n_steps: Option<usize>) -> Self {
        for s in &mut self.stages {
            if let Some(m) = method {
                s.config.method = m;
            }
            if let Some(n) = n_steps {
                s.config.n_steps = n;
            }
        }
        self
    }
}

fn check_white(mesh: &TriangleMesh) -> Result<(), ChainError> {
    if !mesh.is_closed() {
        return Err(ChainError::NotClosed);
    }
    if mesh.tags().is_none() {
        return Err(ChainError::MissingTags);
    }
    Ok(())
}

/// Runs `stages` from `seed`. With `retain_intermediates` false only the
/// final mesh is kept.
pub fn apply_stages(
    seed: &TriangleMesh,
    stages: &[Stage],
    retain_intermediates: bool,
) -> Result<ChainOutput, ChainError> {
    check_frames(stages)?;
    let mut current = seed.clone();
    let mut intermediates = Vec::new();
    for (i, stage) in stages.iter().enumerate() {
        current = integrate_mesh(&current, &stage.field, &stage.config)
            .map_err(|source| ChainError::Integrate { stage: i, source })?;
        if retain_intermediates {
            intermediates.push(current.clone());
        }
    }
    Ok(ChainOutput {
        output: current,
        intermediates,
    })
}

pub fn apply_chain(chain: &DeformationChain) -> Result<ChainOutput, ChainError> {
    apply_stages(chain.seed.mesh(), &chain.stages, true)
}

/// Deforms a predicted white surface into a pial surface. The result keeps
/// the white mesh's faces and tags, so vertex `i` of both surfaces correspond.
pub fn white_to_pial(white: &TriangleMesh, pial_stages: &[Stage]) -> Result<TriangleMesh, ChainError> {
    check_white(white)?;
    Ok(apply_stages(white, pial_stages, false)?.output)
}

/// Paired-vertex distances between corresponding white and pial vertices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thickness {
    pub per_vertex: Vec<f64>,
    pub mean: f64,
    pub max: f64,
}

pub fn cortical_thickness(white: &TriangleMesh, pial: &TriangleMesh) -> Result<Thickness, ChainError> {
    if white.vertex_count() != pial.vertex_count()
        || !white.same_connectivity(pial)
        || white.tags() != pial.tags()
    {
        return Err(ChainError::ConnectivityMismatch);
    }
    let per_vertex: Vec<f64> = white
        .vertices()
        .iter()
        .zip(pial.vertices())
        .map(|(a, b)| (a - b).norm())
        .collect();
    let n = per_vertex.len().max(1) as f64;
    Ok(Thickness {
        mean: per_vertex.iter().sum::<f64>() / n,
        max: per_vertex.iter().copied().fold(0.0, f64::max),
        per_vertex,
    })
}

/// On-disk chain description. Relative paths resolve against the manifest's
/// directory; `flow` names a field base path (`<flow>.ffjson` + `<flow>.ffraw`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainManifest {
    pub seed: SeedEntry,
    pub stages: Vec<StageEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub path: String,
    pub kind: SeedKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub flow: String,
    pub method: Method,
    pub n_steps: usize,
    #[serde(default = "default_total_time")]
    pub total_time: f64,
}

fn default_total_time() -> f64 {
    1.0
}

impl StageEntry {
    pub fn config(&self) -> IntegratorConfig {
        IntegratorConfig {
            method: self.method,
            n_steps: self.n_steps,
            total_time: self.total_time,
        }
    }
}

impl ChainManifest {
    pub fn load(path: &Path) -> Result<Self, ChainError> {
        let text = fs::read_to_string(path).map_err(|e| ChainError::Manifest {
            path: path.into(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| ChainError::Manifest {
            path: path.into(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ChainError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(path, json).map_err(|e| ChainError::Manifest {
            path: path.into(),
            message: e.to_string(),
        })
    }

    /// Loads every stage field, resolving names against `base_dir`.
    pub fn load_stages(&self, base_dir: &Path) -> Result<Vec<Stage>, ChainError> {
        self.stages
            .iter()
            .map(|s| {
                Ok(Stage {
                    field: FlowField::load(&resolve(base_dir, &s.flow))?,
                    config: s.config(),
                })
            })
            .collect()
    }

    /// Loads fields and, unless `seed_override` is given, the seed mesh.
    pub fn load_chain(
        &self,
        base_dir: &Path,
        seed_override: Option<TriangleMesh>,
    ) -> Result<DeformationChain, ChainError> {
        let stages = self.load_stages(base_dir)?;
        let mesh = match seed_override {
            Some(m) => m,
            None => read_mesh(&resolve(base_dir, &self.seed.path))?,
        };
        let seed = match self.seed.kind {
            SeedKind::Template => Seed::Template(mesh),
            SeedKind::WhiteSurface => Seed::WhiteSurface(mesh),
        };
        DeformationChain::new(seed, stages)
    }
}

fn resolve(base: &Path, name: &str) -> PathBuf {
    let p = Path::new(name);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
