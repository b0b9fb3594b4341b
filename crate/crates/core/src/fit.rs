//! Direct optimization of stage flow fields against target surfaces.
//!
//! The loss is a weighted sum of the Chamfer distance between the deformed
//! vertices and a fixed target point cloud and a mean squared edge-length
//! term. Gradients with respect to the grid values are exact: they are
//! accumulated in reverse through every Euler or RK4 substep and through the
//! trilinear interpolation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{apply_stages, ChainError, Stage};
use crate::field::{FieldError, FlowField, GridSpec};
use crate::geom::{Aabb, Vec3};
use crate::integrate::{integrate_mesh, IntegrateError, IntegratorConfig, Method};
use crate::mesh::{sample_surface_uniform, EdgeSet, MeshError, TriangleMesh};
use crate::spatial::KdTree;

/// Vertices per block in the gradient scatter. Blocks are summed in order,
/// so results do not depend on the thread count.
const SCATTER_BLOCK: usize = 256;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("target point cloud is empty")]
    EmptyTarget,
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("forward tape does not match this backward pass")]
    MissingForwardTape,
    #[error("loss diverged: {loss} at iteration {iteration} (initial {initial})")]
    DivergenceDetected { iteration: usize, loss: f64, initial: f64 },
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Fixed target cloud with its search tree.
#[derive(Debug, Clone)]
pub struct TargetCloud {
    tree: KdTree,
}

impl TargetCloud {
    pub fn new(points: &[Vec3]) -> Result<Self, FitError> {
        if points.is_empty() {
            return Err(FitError::EmptyTarget);
        }
        Ok(Self {
            tree: KdTree::new(points),
        })
    }

    /// Uniform area-weighted samples of `surface`.
    pub fn sample(surface: &TriangleMesh, n: usize, seed: u64) -> Result<Self, FitError> {
        let s = sample_surface_uniform(surface, n, seed)?;
        Self::new(&s.points)
    }

    pub fn points(&self) -> &[Vec3] {
        self.tree.points()
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeRest {
    /// Penalize squared edge length.
    Zero,
    /// Penalize deviation from the seed mesh's edge lengths.
    Seed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub chamfer_weight: f64,
    pub edge_weight: f64,
    pub edge_rest: EdgeRest,
    /// Points sampled from each target surface.
    pub target_samples: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            chamfer_weight: 1.0,
            edge_weight: 0.1,
            edge_rest: EdgeRest::Zero,
            target_samples: 20_000,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.chamfer_weight) || !ok(self.edge_weight) {
            return Err(FitError::InvalidConfig("loss weights must be finite and non-negative".into()));
        }
        if self.chamfer_weight == 0.0 && self.edge_weight == 0.0 {
            return Err(FitError::InvalidConfig("loss weights are both zero".into()));
        }
        Ok(())
    }

    /// Edge set used by the edge term for a given seed mesh.
    pub fn edges_for(&self, seed: &TriangleMesh) -> EdgeSet {
        let mut e = seed.edge_set();
        if self.edge_rest == EdgeRest::Zero {
            e.rest_lengths.iter_mut().for_each(|r| *r = 0.0);
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub chamfer: f64,
    pub edge: f64,
    /// ∂total/∂vertex.
    pub gradient: Vec<Vec3>,
}

fn unit_or_zero(v: Vec3) -> Vec3 {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        Vec3::zeros()
    }
}

/// `w_c · chamfer(vertices, target) + w_e · mean_e (‖e‖ − rest_e)²` and its
/// gradient. Chamfer is the mean of the two directed mean nearest-neighbor
/// distances; nearest-neighbor assignments are held fixed when
/// differentiating, and a zero distance contributes zero gradient.
pub fn loss(vertices: &[Vec3], target: &TargetCloud, edges: &EdgeSet, config: &LossConfig) -> Result<LossValue, FitError> {
    if target.is_empty() {
        return Err(FitError::EmptyTarget);
    }
    if vertices.is_empty() {
        return Err(FitError::InvalidConfig("mesh has no vertices".into()));
    }
    let n = vertices.len();
    let mut gradient = vec![Vec3::zeros(); n];
    let mut chamfer = 0.0;
    if config.chamfer_weight > 0.0 {
        let tp = target.points();
        let forward: Vec<(usize, f64)> = vertices
            .par_iter()
            .map(|v| {
                let (j, d2) = target.tree.nearest(v).expect("non-empty target");
                (j, d2.sqrt())
            })
            .collect();
        let vtree = KdTree::new(vertices);
        let backward: Vec<(usize, f64)> = tp
            .par_iter()
            .map(|t| {
                let (i, d2) = vtree.nearest(t).expect("non-empty mesh");
                (i, d2.sqrt())
            })
            .collect();
        let (wa, wb) = (0.5 / n as f64, 0.5 / tp.len() as f64);
        let mut sum_a = 0.0;
        for (i, &(j, d)) in forward.iter().enumerate() {
            sum_a += d;
            gradient[i] += unit_or_zero(vertices[i] - tp[j]) * (config.chamfer_weight * wa);
        }
        let mut sum_b = 0.0;
        for (j, &(i, d)) in backward.iter().enumerate() {
            sum_b += d;
            gradient[i] += unit_or_zero(vertices[i] - tp[j]) * (config.chamfer_weight * wb);
        }
        chamfer = sum_a * wa + sum_b * wb;
    }
    let mut edge = 0.0;
    if config.edge_weight > 0.0 && !edges.is_empty() {
        let scale = 1.0 / edges.len() as f64;
        for (&[a, b], &rest) in edges.edges.iter().zip(&edges.rest_lengths) {
            let d = vertices[a as usize] - vertices[b as usize];
            let len = d.norm();
            let r = len - rest;
            edge += r * r * scale;
            let g = if rest == 0.0 {
                d * (2.0 * scale * config.edge_weight)
            } else {
                unit_or_zero(d) * (2.0 * r * scale * config.edge_weight)
            };
            gradient[a as usize] += g;
            gradient[b as usize] -= g;
        }
    }
    Ok(LossValue {
        total: config.chamfer_weight * chamfer + config.edge_weight * edge,
        chamfer,
        edge,
        gradient,
    })
}

/// Positions at the start of every step of a forward integration.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    config: IntegratorConfig,
    n_vertices: usize,
    /// `n_vertices × (n_steps + 1)`, step-major per vertex.
    states: Vec<Vec3>,
}

impl ForwardTape {
    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    pub fn final_positions(&self) -> Vec<Vec3> {
        let s = self.config.n_steps + 1;
        (0..self.n_vertices).map(|v| self.states[v * s + s - 1]).collect()
    }
}

/// Integrates like [`integrate_mesh`] and records the trajectory for
/// [`backprop_through_integration`].
pub fn integrate_with_tape(
    field: &FlowField,
    vertices: &[Vec3],
    config: &IntegratorConfig,
) -> Result<ForwardTape, FitError> {
    config.validate()?;
    let h = config.step_size();
    let states: Vec<Vec3> = vertices
        .par_iter()
        .flat_map_iter(|x0| {
            let mut traj = Vec::with_capacity(config.n_steps + 1);
            let mut x = *x0;
            traj.push(x);
            for _ in 0..config.n_steps {
                x = match config.method {
                    Method::Euler => crate::integrate::euler_step(field, &x, h),
                    Method::Rk4 => crate::integrate::rk4_step(field, &x, h),
                };
                traj.push(x);
            }
            traj
        })
        .collect();
    Ok(ForwardTape {
        config: *config,
        n_vertices: vertices.len(),
        states,
    })
}

/// Sink for the grid gradient of one trajectory.
struct Scatter<'a> {
    grid: &'a GridSpec,
    out: &'a mut [Vec3],
}

impl Scatter<'_> {
    /// Adds `w_c · g` at the eight nodes around `x`.
    fn add(&mut self, x: &Vec3, g: &Vec3) {
        if let Some((nodes, weights)) = self.grid.trilinear_stencil(x) {
            for (n, w) in nodes.iter().zip(weights) {
                self.out[*n] += g * w;
            }
        }
    }
}

/// Reverse pass through one trajectory; returns ∂L/∂x0 and scatters ∂L/∂U.
fn backprop_vertex(field: &FlowField, traj: &[Vec3], config: &IntegratorConfig, upstream: Vec3, sink: &mut Scatter) -> Vec3 {
    let h = config.step_size();
    let mut a = upstream;
    for n in (0..config.n_steps).rev() {
        let x = traj[n];
        match config.method {
            Method::Euler => {
                let (_, j) = field.interpolate_with_jacobian(&x);
                sink.add(&x, &(a * h));
                a += j.transpose() * a * h;
            }
            Method::Rk4 => {
                let (k1, j1) = field.interpolate_with_jacobian(&x);
                let p2 = x + k1 * (0.5 * h);
                let (k2, j2) = field.interpolate_with_jacobian(&p2);
                let p3 = x + k2 * (0.5 * h);
                let (k3, j3) = field.interpolate_with_jacobian(&p3);
                let p4 = x + k3 * h;
                let (_, j4) = field.interpolate_with_jacobian(&p4);

                let mut xb = a;
                let k4b = a * (h / 6.0);
                let mut k3b = a * (h / 3.0);
                let mut k2b = a * (h / 3.0);
                let mut k1b = a * (h / 6.0);

                sink.add(&p4, &k4b);
                let p4b = j4.transpose() * k4b;
                xb += p4b;
                k3b += p4b * h;

                sink.add(&p3, &k3b);
                let p3b = j3.transpose() * k3b;
                xb += p3b;
                k2b += p3b * (0.5 * h);

                sink.add(&p2, &k2b);
                let p2b = j2.transpose() * k2b;
                xb += p2b;
                k1b += p2b * (0.5 * h);

                sink.add(&x, &k1b);
                xb += j1.transpose() * k1b;
                a = xb;
            }
        }
    }
    a
}

/// Gradient of a loss with respect to the grid values of `field`, given the
/// loss gradient at the integrated positions. `tape` must come from
/// [`integrate_with_tape`] with the same field and `config`.
pub fn backprop_through_integration(
    field: &FlowField,
    tape: &ForwardTape,
    config: &IntegratorConfig,
    upstream: &[Vec3],
) -> Result<Vec<Vec3>, FitError> {
    if tape.config != *config || tape.n_vertices != upstream.len() {
        return Err(FitError::MissingForwardTape);
    }
    let steps = config.n_steps + 1;
    let nodes = field.grid().node_count();
    let blocks: Vec<Vec<Vec3>> = upstream
        .par_chunks(SCATTER_BLOCK)
        .enumerate()
        .map(|(b, chunk)| {
            let mut out = vec![Vec3::zeros(); nodes];
            let mut sink = Scatter {
                grid: field.grid(),
                out: &mut out,
            };
            for (k, g) in chunk.iter().enumerate() {
                if *g == Vec3::zeros() {
                    continue;
                }
                let v = b * SCATTER_BLOCK + k;
                let traj = &tape.states[v * steps..(v + 1) * steps];
                backprop_vertex(field, traj, config, *g, &mut sink);
            }
            out
        })
        .collect();
    let mut total = vec![Vec3::zeros(); nodes];
    for block in blocks {
        for (t, b) in total.iter_mut().zip(block) {
            *t += b;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub iterations: usize,
    /// Flow-grid nodes per axis for this stage.
    pub resolution: usize,
    pub integrator: IntegratorConfig,
    /// Per-node field magnitude limit in voxel spacings per unit flow time.
    pub clamp_voxels: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 20.0,
            momentum: 0.9,
            iterations: 300,
            resolution: 24,
            integrator: IntegratorConfig::default(),
            clamp_voxels: 2.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(FitError::InvalidConfig("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(FitError::InvalidConfig("momentum must lie in [0, 1)".into()));
        }
        if self.iterations == 0 {
            return Err(FitError::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.resolution < 2 {
            return Err(FitError::InvalidConfig("grid resolution must be at least 2".into()));
        }
        if !(self.clamp_voxels > 0.0) {
            return Err(FitError::InvalidConfig("clamp must be positive".into()));
        }
        self.integrator.validate()?;
        Ok(())
    }
}

/// Result of fitting one stage.
#[derive(Debug, Clone)]
pub struct StageFit {
    /// Best iterate.
    pub field: FlowField,
    /// Loss of the field at each iteration, before its update.
    pub losses: Vec<f64>,
    /// Running minimum of `losses`.
    pub best_losses: Vec<f64>,
    pub best_iteration: usize,
    /// Chamfer term at the best iterate.
    pub chamfer: f64,
}

/// Iterations above the divergence threshold before giving up.
pub const DIVERGENCE_PATIENCE: usize = 50;

/// Fits one stage field on `grid`, starting from zero.
pub fn fit_stage(
    seed: &TriangleMesh,
    target: &TargetCloud,
    grid: GridSpec,
    fit: &FitConfig,
    loss_config: &LossConfig,
) -> Result<StageFit, FitError> {
    fit.validate()?;
    loss_config.validate()?;
    let edges = loss_config.edges_for(seed);
    let cfg = fit.integrator;
    let clamp = fit.clamp_voxels * grid.spacing().min() / cfg.total_time;

    let mut field = FlowField::zeros(grid)?;
    let mut velocity = vec![Vec3::zeros(); grid.node_count()];
    let mut best = (f64::INFINITY, 0usize, field.clone(), 0.0);
    let mut losses = Vec::with_capacity(fit.iterations);
    let mut best_losses = Vec::with_capacity(fit.iterations);
    let mut initial = None;
    let mut above = 0usize;

    for it in 0..fit.iterations {
        let tape = integrate_with_tape(&field, seed.vertices(), &cfg)?;
        let value = loss(&tape.final_positions(), target, &edges, loss_config)?;
        if !value.total.is_finite() {
            return Err(FitError::DivergenceDetected {
                iteration: it,
                loss: value.total,
                initial: initial.unwrap_or(f64::NAN),
            });
        }
        let initial_loss = *initial.get_or_insert(value.total);
        if value.total < best.0 {
            best = (value.total, it, field.clone(), value.chamfer);
        }
        losses.push(value.total);
        best_losses.push(best.0);
        if initial_loss > 0.0 && value.total > 10.0 * initial_loss {
            above += 1;
            if above >= DIVERGENCE_PATIENCE {
                return Err(FitError::DivergenceDetected {
                    iteration: it,
                    loss: value.total,
                    initial: initial_loss,
                });
            }
        } else {
            above = 0;
        }
        if it + 1 == fit.iterations {
            break;
        }
        let grad = backprop_through_integration(&field, &tape, &cfg, &value.gradient)?;
        for ((u, v), g) in field.data_mut().iter_mut().zip(velocity.iter_mut()).zip(&grad) {
            *v = *v * fit.momentum - g * fit.learning_rate;
            *u += *v;
        }
        field.clamp_magnitude(clamp);
    }
    log::debug!("stage fit: best loss {:.6} at iteration {}", best.0, best.1);
    Ok(StageFit {
        field: best.2,
        losses,
        best_losses,
        best_iteration: best.1,
        chamfer: best.3,
    })
}

/// Grid spanning `bbox` with `resolution` nodes per axis.
pub fn frame_grid(bbox: &Aabb, resolution: usize) -> Result<GridSpec, FitError> {
    let spacing = bbox.extent() / (resolution - 1) as f64;
    Ok(GridSpec::new([resolution; 3], bbox.min, spacing)?)
}

/// Box enclosing all meshes, padded by `padding` times its diagonal.
pub fn fit_frame(meshes: &[&TriangleMesh], padding: f64) -> Aabb {
    let mut b = Aabb::empty();
    for m in meshes {
        b = b.merge(&m.bbox());
    }
    let pad = Vec3::repeat(b.diagonal() * padding);
    Aabb {
        min: b.min - pad,
        max: b.max + pad,
    }
}

/// A sequence of fitted stages.
#[derive(Debug, Clone)]
pub struct FittedChain {
    pub stages: Vec<Stage>,
    pub fits: Vec<StageFit>,
    /// Mesh the final stage was fitted on (before deformation).
    pub seed: TriangleMesh,
    /// Final stage output.
    pub output: TriangleMesh,
}

impl FittedChain {
    /// Chamfer term at the end of each stage.
    pub fn stage_chamfer(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.chamfer).collect()
    }
}

/// Fits stages one after another with earlier stages frozen. Stage `i` is
/// fitted on `seeds[min(i, len − 1)]` deformed by stages `0..i`; the chain
/// output is the last used seed run through every stage.
pub fn fit_chain(
    seeds: &[TriangleMesh],
    target: &TargetCloud,
    frame: &Aabb,
    stages: &[FitConfig],
    loss_config: &LossConfig,
) -> Result<FittedChain, FitError> {
    if seeds.is_empty() || stages.is_empty() {
        return Err(FitError::InvalidConfig("need at least one seed and one stage".into()));
    }
    let mut fitted: Vec<Stage> = Vec::new();
    let mut fits = Vec::new();
    for (i, cfg) in stages.iter().enumerate() {
        let base = &seeds[i.min(seeds.len() - 1)];
        let start = if fitted.is_empty() {
            base.clone()
        } else {
            apply_stages(base, &fitted, false)?.output
        };
        let grid = frame_grid(frame, cfg.resolution)?;
        let fit = fit_stage(&start, target, grid, cfg, loss_config)?;
        log::info!("stage {} fitted: chamfer {:.6}", i + 1, fit.chamfer);
        fitted.push(Stage {
            field: fit.field.clone(),
            config: cfg.integrator,
        });
        fits.push(fit);
    }
    let seed = seeds[(stages.len() - 1).min(seeds.len() - 1)].clone();
    let output = apply_stages(&seed, &fitted, false)?.output;
    Ok(FittedChain {
        stages: fitted,
        fits,
        seed,
        output,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub white_stages: Vec<FitConfig>,
    pub pial_stages: Vec<FitConfig>,
    pub loss: LossConfig,
    /// Frame padding as a fraction of the bounding-box diagonal.
    pub frame_padding: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let stage = |resolution| FitConfig {
            resolution,
            ..FitConfig::default()
        };
        Self {
            white_stages: vec![stage(16), stage(24), stage(32)],
            pial_stages: vec![stage(24)],
            loss: LossConfig::default(),
            frame_padding: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineFit {
    pub white: FittedChain,
    pub pial: FittedChain,
}

/// Fits the white chain on `family` (coarsest first) and then the pial chain
/// seeded by the fitted white surface. The white output carries vertex tags
/// (sequential when the template has none) and the pial output shares them.
pub fn fit_pipeline(
    white_target: &TriangleMesh,
    pial_target: &TriangleMesh,
    family: &[TriangleMesh],
    config: &PipelineConfig,
) -> Result<PipelineFit, FitError> {
    let first = family
        .first()
        .ok_or_else(|| FitError::InvalidConfig("empty template family".into()))?;
    let frame = fit_frame(&[first, white_target, pial_target], config.frame_padding);
    let n = config.loss.target_samples;
    let white_cloud = TargetCloud::sample(white_target, n, config.seed)?;
    let pial_cloud = TargetCloud::sample(pial_target, n, config.seed.wrapping_add(1))?;
    let mut white = fit_chain(family, &white_cloud, &frame, &config.white_stages, &config.loss)?;
    if white.output.tags().is_none() {
        white.output = white.output.with_sequential_tags();
    }
    let pial = fit_chain(&[white.output.clone()], &pial_cloud, &frame, &config.pial_stages, &config.loss)?;
    Ok(PipelineFit { white, pial })
}

/// Convenience: integrates `mesh` through a fitted stage list.
pub fn deform(mesh: &TriangleMesh, stages: &[Stage]) -> Result<TriangleMesh, FitError> {
    let mut m = mesh.clone();
    for s in stages {
        m = integrate_mesh(&m, &s.field, &s.config)?;
    }
    Ok(m)
}
