//! Stationary vector fields on regular node-centred grids.
//!
//! Node `(i, j, k)` sits at `origin + (i, j, k) ⊙ spacing`. Values are
//! interpolated trilinearly inside the hull of node centres; outside it the
//! field is zero, so points that leave the grid stop moving.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Aabb, Vec3};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field data has {got} nodes, grid needs {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("field value at node {0} is not finite")]
    NonFinite(usize),
    #[error("unknown field kind `{0}` (expected translation, rotation, radial or shear)")]
    UnknownKind(String),
    #[error("bad parameters for {kind}: {message}")]
    InvalidParams { kind: String, message: String },
    #[error("malformed field file {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Placement of a regular grid in world space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
}

/// Cell containing a point: lower corner node and local coordinates in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub base: [usize; 3],
    pub t: [f64; 3],
}

impl GridSpec {
    pub fn new(dims: [usize; 3], origin: Vec3, spacing: Vec3) -> Result<Self, FieldError> {
        let g = Self {
            dims,
            origin: origin.into(),
            spacing: spacing.into(),
        };
        g.validate()?;
        Ok(g)
    }

    /// Cube grid with `n` nodes per axis spanning `[lo, hi]` on every axis.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self, FieldError> {
        let s = (hi - lo) / (n.max(2) - 1) as f64;
        Self::new([n; 3], Vec3::repeat(lo), Vec3::repeat(s))
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.dims.iter().any(|&d| d < 2) {
            return Err(FieldError::InvalidGrid(format!(
                "every axis needs at least 2 nodes, got {:?}",
                self.dims
            )));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(FieldError::InvalidGrid(format!(
                "spacing must be positive and finite, got {:?}",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(FieldError::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn origin(&self) -> Vec3 {
        Vec3::from(self.origin)
    }

    pub fn spacing(&self) -> Vec3 {
        Vec3::from(self.spacing)
    }

    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Linear index, x fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        )
    }

    /// Position of the last node.
    pub fn far_corner(&self) -> Vec3 {
        self.node_position(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    /// Hull of the node centres (the interpolation domain).
    pub fn bbox(&self) -> Aabb {
        Aabb {
            min: self.origin(),
            max: self.far_corner(),
        }
    }

    pub fn diameter(&self) -> f64 {
        self.bbox().diagonal()
    }

    pub fn voxel_diagonal(&self) -> f64 {
        self.spacing().norm()
    }

    /// Locates the cell containing `x`, or `None` outside the node hull.
    #[inline]
    pub fn locate(&self, x: &Vec3) -> Option<Cell> {
        let mut base = [0usize; 3];
        let mut t = [0.0; 3];
        for a in 0..3 {
            let g = (x[a] - self.origin[a]) / self.spacing[a];
            let last = (self.dims[a] - 1) as f64;
            if !(g >= 0.0 && g <= last) {
                return None;
            }
            let b = (g.floor() as usize).min(self.dims[a] - 2);
            base[a] = b;
            t[a] = g - b as f64;
        }
        Some(Cell { base, t })
    }

    /// Node indices and trilinear weights of the 8 corners around `x`,
    /// corner `c` having offsets `(c & 1, c >> 1 & 1, c >> 2 & 1)`.
    #[inline]
    pub fn trilinear_stencil(&self, x: &Vec3) -> Option<([usize; 8], [f64; 8])> {
        let cell = self.locate(x)?;
        let [i, j, k] = cell.base;
        let [tx, ty, tz] = cell.t;
        let mut idx = [0usize; 8];
        let mut w = [0.0; 8];
        for c in 0..8 {
            let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            idx[c] = self.index(i + dx, j + dy, k + dz);
            w[c] = (if dx == 1 { tx } else { 1.0 - tx })
                * (if dy == 1 { ty } else { 1.0 - ty })
                * (if dz == 1 { tz } else { 1.0 - tz });
        }
        Some((idx, w))
    }

    /// True when both grids cover the same world region (same frame, possibly
    /// different resolution): origins and far corners agree within half of the
    /// coarser voxel size.
    pub fn same_frame(&self, other: &GridSpec) -> bool {
        let tol = 0.5
            * self
                .spacing()
                .iter()
                .chain(other.spacing().iter())
                .fold(0.0f64, |m, &s| m.max(s));
        (self.origin() - other.origin()).amax() <= tol
            && (self.far_corner() - other.far_corner()).amax() <= tol
    }
}

/// Stationary 3-channel vector field sampled at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    grid: GridSpec,
    data: Vec<Vec3>,
}

impl FlowField {
    pub fn new(grid: GridSpec, data: Vec<Vec3>) -> Result<Self, FieldError> {
        grid.validate()?;
        if data.len() != grid.node_count() {
            return Err(FieldError::DataLength {
                expected: grid.node_count(),
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(Self { grid, data })
    }

    pub fn zeros(grid: GridSpec) -> Result<Self, FieldError> {
        grid.validate()?;
        Ok(Self {
            data: vec![Vec3::zeros(); grid.node_count()],
            grid,
        })
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&Vec3) -> Vec3) -> Result<Self, FieldError> {
        grid.validate()?;
        let mut data = Vec::with_capacity(grid.node_count());
        for k in 0..grid.dims[2] {
            for j in 0..grid.dims[1] {
                for i in 0..grid.dims[0] {
                    data.push(f(&grid.node_position(i, j, k)));
                }
            }
        }
        Self::new(grid, data)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[Vec3] {
        &self.data
    }

    /// Mutable node values. Callers must keep them finite.
    pub fn data_mut(&mut self) -> &mut [Vec3] {
        &mut self.data
    }

    /// Trilinear interpolation; zero outside the node hull.
    #[inline]
    pub fn interpolate(&self, x: &Vec3) -> Vec3 {
        match self.grid.trilinear_stencil(x) {
            Some((idx, w)) => {
                let mut v = Vec3::zeros();
                for c in 0..8 {
                    v += self.data[idx[c]] * w[c];
                }
                v
            }
            None => Vec3::zeros(),
        }
    }

    /// Value and spatial Jacobian `J[(c, a)] = ∂U_c/∂x_a` of the interpolant.
    /// Both are zero outside the node hull.
    pub fn interpolate_with_jacobian(&self, x: &Vec3) -> (Vec3, Matrix3<f64>) {
        let Some(cell) = self.grid.locate(x) else {
            return (Vec3::zeros(), Matrix3::zeros());
        };
        let [i, j, k] = cell.base;
        let [tx, ty, tz] = cell.t;
        let mut value = Vec3::zeros();
        let mut jac = Matrix3::zeros();
        for c in 0..8 {
            let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            let u = &self.data[self.grid.index(i + dx, j + dy, k + dz)];
            let (wx, gx) = if dx == 1 { (tx, 1.0) } else { (1.0 - tx, -1.0) };
            let (wy, gy) = if dy == 1 { (ty, 1.0) } else { (1.0 - ty, -1.0) };
            let (wz, gz) = if dz == 1 { (tz, 1.0) } else { (1.0 - tz, -1.0) };
            value += u * (wx * wy * wz);
            let grad = Vec3::new(
                gx * wy * wz / self.grid.spacing[0],
                wx * gy * wz / self.grid.spacing[1],
                wx * wy * gz / self.grid.spacing[2],
            );
            jac += u * grad.transpose();
        }
        (value, jac)
    }

    /// Pointwise −U.
    pub fn negate(&self) -> FlowField {
        FlowField {
            grid: self.grid,
            data: self.data.iter().map(|v| -v).collect(),
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Rescales every node vector longer than `max` to length `max`.
    pub fn clamp_magnitude(&mut self, max: f64) {
        for v in &mut self.data {
            let n = v.norm();
            if n > max {
                *v *= max / n;
            }
        }
    }

    /// Writes `<base>.ffjson` and `<base>.ffraw`.
    pub fn save(&self, base: &Path) -> Result<(), FieldError> {
        let (header_path, raw_path) = field_paths(base);
        let header = FieldHeader {
            dims: self.grid.dims,
            origin: self.grid.origin,
            spacing: self.grid.spacing,
            dtype: "f32".into(),
            order: "x-fastest".into(),
            channels: 3,
        };
        let json = serde_json::to_string_pretty(&header).expect("header serializes");
        fs::write(&header_path, json + "\n").map_err(|source| FieldError::Io {
            path: header_path.clone(),
            source,
        })?;
        let mut blob = Vec::with_capacity(self.data.len() * 12);
        for v in &self.data {
            for c in 0..3 {
                blob.extend_from_slice(&(v[c] as f32).to_le_bytes());
            }
        }
        let mut f = fs::File::create(&raw_path).map_err(|source| FieldError::Io {
            path: raw_path.clone(),
            source,
        })?;
        f.write_all(&blob)
            .map_err(|source| FieldError::Io { path: raw_path, source })
    }

    /// Reads a field written by [`FlowField::save`]; `base` may carry either extension.
    pub fn load(base: &Path) -> Result<Self, FieldError> {
        let (header_path, raw_path) = field_paths(base);
        let text = fs::read_to_string(&header_path).map_err(|source| FieldError::Io {
            path: header_path.clone(),
            source,
        })?;
        let bad = |message: String| FieldError::Format {
            path: header_path.clone(),
            message,
        };
        let header: FieldHeader = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if header.dtype != "f32" {
            return Err(bad(format!("unsupported dtype `{}`", header.dtype)));
        }
        if header.order != "x-fastest" {
            return Err(bad(format!("unsupported order `{}`", header.order)));
        }
        if header.channels != 3 {
            return Err(bad(format!("expected 3 channels, got {}", header.channels)));
        }
        let grid = GridSpec {
            dims: header.dims,
            origin: header.origin,
            spacing: header.spacing,
        };
        grid.validate()?;
        let mut blob = Vec::new();
        fs::File::open(&raw_path)
            .and_then(|mut f| f.read_to_end(&mut blob))
            .map_err(|source| FieldError::Io {
                path: raw_path.clone(),
                source,
            })?;
        let expected = grid.node_count() * 12;
        if blob.len() != expected {
            return Err(FieldError::Format {
                path: raw_path,
                message: format!("expected {expected} bytes, found {}", blob.len()),
            });
        }
        let data = blob
            .chunks_exact(12)
            .map(|c| {
                let f = |o: usize| f32::from_le_bytes([c[o], c[o + 1], c[o + 2], c[o + 3]]) as f64;
                Vec3::new(f(0), f(4), f(8))
            })
            .collect();
        Self::new(grid, data)
    }
}

/// JSON header of the on-disk field format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub dtype: String,
    pub order: String,
    pub channels: usize,
}

/// Header and blob paths for a field base name.
pub fn field_paths(base: &Path) -> (PathBuf, PathBuf) {
    let stem = match base.extension().and_then(|e| e.to_str()) {
        Some("ffjson") | Some("ffraw") => base.with_extension(""),
        _ => base.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut s = stem.clone().into_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    (with(".ffjson"), with(".ffraw"))
}

/// Closed-form stationary fields with known flow maps.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalyticFlow {
    /// U(x) = c.
    Translation { velocity: Vec3 },
    /// U(x) = ω·k × (x − center) with unit axis k.
    RigidRotation { axis: Vec3, angular_speed: f64, center: Vec3 },
    /// U(x) = a·(x − center).
    Radial { rate: f64, center: Vec3 },
    /// U(x) = A·x.
    Shear { matrix: Matrix3<f64> },
}

impl AnalyticFlow {
    pub fn rotation(axis: Vec3, angular_speed: f64, center: Vec3) -> Self {
        Self::RigidRotation {
            axis: axis.normalize(),
            angular_speed,
            center,
        }
    }

    /// Builds a field from its CLI name and flat parameter list:
    ///
    /// - `translation cx cy cz`
    /// - `rotation ax ay az omega [px py pz]`
    /// - `radial a [px py pz]`
    /// - `shear a11 a12 … a33` (row-major)
    pub fn from_kind(kind: &str, params: &[f64]) -> Result<Self, FieldError> {
        let bad = |message: &str| FieldError::InvalidParams {
            kind: kind.to_string(),
            message: message.to_string(),
        };
        let v3 = |s: &[f64]| Vec3::new(s[0], s[1], s[2]);
        match kind {
            "translation" => match params.len() {
                3 => Ok(Self::Translation { velocity: v3(params) }),
                _ => Err(bad("expected 3 values: cx cy cz")),
            },
            "rotation" | "rigid_rotation" => {
                if params.len() != 4 && params.len() != 7 {
                    return Err(bad("expected ax ay az omega [px py pz]"));
                }
                let axis = v3(params);
                if axis.norm() == 0.0 {
                    return Err(bad("rotation axis must be non-zero"));
                }
                let center = if params.len() == 7 { v3(&params[4..]) } else { Vec3::zeros() };
                Ok(Self::rotation(axis, params[3], center))
            }
            "radial" => match params.len() {
                1 => Ok(Self::Radial {
                    rate: params[0],
                    center: Vec3::zeros(),
                }),
                4 => Ok(Self::Radial {
                    rate: params[0],
                    center: v3(&params[1..]),
                }),
                _ => Err(bad("expected a [px py pz]")),
            },
            "shear" => match params.len() {
                9 => Ok(Self::Shear {
                    matrix: Matrix3::from_row_slice(params),
                }),
                _ => Err(bad("expected 9 row-major matrix entries")),
            },
            other => Err(FieldError::UnknownKind(other.to_string())),
        }
    }

    pub fn velocity(&self, x: &Vec3) -> Vec3 {
        match self {
            Self::Translation { velocity } => *velocity,
            Self::RigidRotation {
                axis,
                angular_speed,
                center,
            } => axis.cross(&(x - center)) * *angular_speed,
            Self::Radial { rate, center } => (x - center) * *rate,
            Self::Shear { matrix } => matrix * x,
        }
    }

    /// Exact flow map Φ(s; x).
    pub fn trajectory(&self, s: f64, x: &Vec3) -> Vec3 {
        match self {
            Self::Translation { velocity } => x + velocity * s,
            Self::RigidRotation {
                axis,
                angular_speed,
                center,
            } => center + rotate(axis, angular_speed * s, &(x - center)),
            Self::Radial { rate, center } => center + (x - center) * (rate * s).exp(),
            Self::Shear { matrix } => expm(&(matrix * s)) * x,
        }
    }

    pub fn sample(&self, grid: GridSpec) -> Result<FlowField, FieldError> {
        FlowField::from_fn(grid, |x| self.velocity(x))
    }
}

/// Rodrigues rotation of `v` by `angle` about unit `axis`.
pub fn rotate(axis: &Vec3, angle: f64, v: &Vec3) -> Vec3 {
    let (s, c) = angle.sin_cos();
    v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c))
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm(a: &Matrix3<f64>) -> Matrix3<f64> {
    let norm = a.abs().row_sum().max();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a / 2f64.powi(squarings as i32);
    let mut term = Matrix3::identity();
    let mut sum = Matrix3::identity();
    for k in 1..=20 {
        term = term * scaled / k as f64;
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}
