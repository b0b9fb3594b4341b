//! Diffeomorphic mesh deformation: per-vertex integration of the flow ODE
//! dΦ/ds = U(Φ), Φ(0) = x with forward Euler or classical RK4.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{AnalyticFlow, FlowField};
use crate::geom::Vec3;
use crate::mesh::TriangleMesh;

pub const DEFAULT_STEPS: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("non-finite start position {position:?} (vertex {vertex:?})")]
    NonFiniteInput {
        vertex: Option<usize>,
        position: [f64; 3],
    },
    #[error("invalid integrator config: {0}")]
    InvalidConfig(String),
    #[error("no closed-form trajectory available for this field")]
    OracleUnavailable,
    #[error("step counts must be ≥ 3 values, each double the previous: {0:?}")]
    InvalidStepCounts(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Rk4,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Euler => "euler",
            Method::Rk4 => "rk4",
        })
    }
}

impl FromStr for Method {
    type Err = IntegrateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Method::Euler),
            "rk4" => Ok(Method::Rk4),
            other => Err(IntegrateError::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

/// Solver, step count and flow-time span; the step size is `total_time / n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub n_steps: usize,
    pub total_time: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            n_steps: DEFAULT_STEPS,
            total_time: 1.0,
        }
    }
}

impl IntegratorConfig {
    pub fn new(method: Method, n_steps: usize) -> Self {
        Self {
            method,
            n_steps,
            total_time: 1.0,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.total_time / self.n_steps as f64
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        if self.n_steps == 0 {
            return Err(IntegrateError::InvalidConfig("n_steps must be ≥ 1".into()));
        }
        if !(self.total_time > 0.0 && self.total_time.is_finite()) {
            return Err(IntegrateError::InvalidConfig(format!(
                "total_time must be positive, got {}",
                self.total_time
            )));
        }
        Ok(())
    }
}

/// One Euler step `x + h·U(x)`.
#[inline]
pub fn euler_step(field: &FlowField, x: &Vec3, h: f64) -> Vec3 {
    x + field.interpolate(x) * h
}

/// One classical RK4 step with the h/6 weighting of the four slopes.
#[inline]
pub fn rk4_step(field: &FlowField, x: &Vec3, h: f64) -> Vec3 {
    let k1 = field.interpolate(x);
    let k2 = field.interpolate(&(x + k1 * (0.5 * h)));
    let k3 = field.interpolate(&(x + k2 * (0.5 * h)));
    let k4 = field.interpolate(&(x + k3 * h));
    x + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0)
}

fn advance(field: &FlowField, x0: &Vec3, config: &IntegratorConfig) -> Vec3 {
    let h = config.step_size();
    let mut x = *x0;
    match config.method {
        Method::Euler => {
            for _ in 0..config.n_steps {
                x = euler_step(field, &x, h);
            }
        }
        Method::Rk4 => {
            for _ in 0..config.n_steps {
                x = rk4_step(field, &x, h);
            }
        }
    }
    x
}

/// Integrates one trajectory from `x0` over `config.total_time`.
pub fn integrate_point(
    field: &FlowField,
    x0: &Vec3,
    config: &IntegratorConfig,
) -> Result<Vec3, IntegrateError> {
    config.validate()?;
    if !x0.iter().all(|c| c.is_finite()) {
        return Err(IntegrateError::NonFiniteInput {
            vertex: None,
            position: (*x0).into(),
        });
    }
    Ok(advance(field, x0, config))
}

/// Advects every vertex independently. Faces, orientation and tags are kept.
pub fn integrate_mesh(
    mesh: &TriangleMesh,
    field: &FlowField,
    config: &IntegratorConfig,
) -> Result<TriangleMesh, IntegrateError> {
    config.validate()?;
    if let Some((i, v)) = mesh
        .vertices()
        .iter()
        .enumerate()
        .find(|(_, v)| !v.iter().all(|c| c.is_finite()))
    {
        return Err(IntegrateError::NonFiniteInput {
            vertex: Some(i),
            position: (*v).into(),
        });
    }
    let moved: Vec<Vec3> = mesh
        .vertices()
        .par_iter()
        .map(|x| advance(field, x, config))
        .collect();
    Ok(mesh.with_vertices(moved))
}

/// Outcome of a step-halving study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceEstimate {
    pub step_counts: Vec<usize>,
    /// Terminal-position error against the exact flow map, per step count.
    pub errors: Vec<f64>,
    /// Mean of log2(e(h)/e(h/2)); `None` when the errors are at rounding
    /// level and the ratio carries no information.
    pub order: Option<f64>,
}

/// Observed order of accuracy from successive step halvings.
///
/// `oracle` supplies the exact flow map of the field; `field` is its sampled
/// grid. Errors are Euclidean terminal-position errors.
pub fn estimate_convergence_order(
    field: &FlowField,
    oracle: Option<&AnalyticFlow>,
    x0: &Vec3,
    method: Method,
    total_time: f64,
    step_counts: &[usize],
) -> Result<ConvergenceEstimate, IntegrateError> {
    let oracle = oracle.ok_or(IntegrateError::OracleUnavailable)?;
    if step_counts.len() < 3
        || step_counts[0] == 0
        || step_counts.windows(2).any(|w| w[1] != 2 * w[0])
    {
        return Err(IntegrateError::InvalidStepCounts(step_counts.to_vec()));
    }
    let exact = oracle.trajectory(total_time, x0);
    let mut errors = Vec::with_capacity(step_counts.len());
    for &n in step_counts {
        let config = IntegratorConfig {
            method,
            n_steps: n,
            total_time,
        };
        let x = integrate_point(field, x0, &config)?;
        errors.push((x - exact).norm());
    }
    let floor = 1e3 * f64::EPSILON * exact.norm().max(1.0);
    let order = if errors.iter().any(|&e| e <= floor) {
        None
    } else {
        let rates: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        Some(rates.iter().sum::<f64>() / rates.len() as f64)
    };
    Ok(ConvergenceEstimate {
        step_counts: step_counts.to_vec(),
        errors,
        order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;
    use crate::primitives;
    use std::f64::consts::FRAC_PI_2;

    fn grid() -> GridSpec {
        GridSpec::cube(33, -2.0, 2.0).unwrap()
    }

    #[test]
    fn constant_field_is_exact_for_both_methods() {
        let c = Vec3::new(0.25, -0.5, 0.125);
        let f = AnalyticFlow::Translation { velocity: c }.sample(grid()).unwrap();
        let x0 = Vec3::new(0.1, 0.2, -0.3);
        for method in [Method::Euler, Method::Rk4] {
            for n in [1, 7, 30] {
                let x = integrate_point(&f, &x0, &IntegratorConfig::new(method, n)).unwrap();
                assert!((x - (x0 + c)).amax() < 1e-15, "{method} {n}");
            }
        }
    }

    #[test]
    fn rk4_quarter_turn() {
        let rot = AnalyticFlow::rotation(Vec3::z(), FRAC_PI_2, Vec3::zeros());
        let f = rot.sample(grid()).unwrap();
        let x = integrate_point(&f, &Vec3::x(), &IntegratorConfig::new(Method::Rk4, 32)).unwrap();
        assert!((x - Vec3::y()).norm() < 1e-6);
        let e32 = (integrate_point(&f, &Vec3::x(), &IntegratorConfig::new(Method::Euler, 32)).unwrap()
            - Vec3::y())
        .norm();
        let e64 = (integrate_point(&f, &Vec3::x(), &IntegratorConfig::new(Method::Euler, 64)).unwrap()
            - Vec3::y())
        .norm();
        // First order: halving h roughly halves the error.
        assert!((e32 / e64 - 2.0).abs() < 0.2, "{e32} {e64}");
    }

    #[test]
    fn radial_growth() {
        let rad = AnalyticFlow::Radial {
            rate: 0.5,
            center: Vec3::zeros(),
        };
        let f = rad.sample(grid()).unwrap();
        let x0 = Vec3::repeat(1.0);
        let x = integrate_point(&f, &x0, &IntegratorConfig::new(Method::Rk4, 16)).unwrap();
        assert!((x - x0 * 0.5f64.exp()).amax() < 1e-8);
    }

    #[test]
    fn mesh_translation_and_rotation() {
        let ico = primitives::icosphere(2, 1.0).with_sequential_tags();
        let zero = FlowField::zeros(grid()).unwrap();
        assert_eq!(integrate_mesh(&ico, &zero, &IntegratorConfig::default()).unwrap(), ico);

        let c = Vec3::new(0.3, 0.0, -0.2);
        let t = AnalyticFlow::Translation { velocity: c }.sample(grid()).unwrap();
        let moved = integrate_mesh(&ico, &t, &IntegratorConfig::default()).unwrap();
        assert!(moved.same_connectivity(&ico));
        assert_eq!(moved.tags(), ico.tags());
        for (a, b) in moved.edge_set().rest_lengths.iter().zip(ico.edge_set().rest_lengths) {
            assert!((a - b).abs() < 1e-14);
        }

        let rot = AnalyticFlow::rotation(Vec3::new(1.0, 2.0, 2.0), 0.8, Vec3::zeros());
        let f = rot.sample(grid()).unwrap();
        let out = integrate_mesh(&ico, &f, &IntegratorConfig::new(Method::Rk4, 64)).unwrap();
        for (p, q) in ico.vertices().iter().zip(out.vertices()) {
            assert!((rot.trajectory(1.0, p) - q).norm() < 1e-6);
        }
    }

    #[test]
    fn non_finite_start_is_reported() {
        let f = FlowField::zeros(grid()).unwrap();
        let err = integrate_point(&f, &Vec3::new(f64::NAN, 0.0, 0.0), &IntegratorConfig::default());
        assert!(matches!(err, Err(IntegrateError::NonFiniteInput { vertex: None, .. })));
        assert!(matches!(
            integrate_point(&f, &Vec3::zeros(), &IntegratorConfig::new(Method::Rk4, 0)),
            Err(IntegrateError::InvalidConfig(_))
        ));
    }

    #[test]
    fn convergence_orders() {
        let rot = AnalyticFlow::rotation(Vec3::z(), FRAC_PI_2, Vec3::zeros());
        let f = rot.sample(grid()).unwrap();
        let steps = [8, 16, 32, 64];
        let e = estimate_convergence_order(&f, Some(&rot), &Vec3::x(), Method::Euler, 1.0, &steps).unwrap();
        let p = e.order.unwrap();
        assert!((0.8..=1.2).contains(&p), "{p}");
        let r = estimate_convergence_order(&f, Some(&rot), &Vec3::x(), Method::Rk4, 1.0, &steps).unwrap();
        let p = r.order.unwrap();
        assert!((3.5..=4.5).contains(&p), "{p}");

        let tr = AnalyticFlow::Translation { velocity: Vec3::x() };
        let ft = tr.sample(grid()).unwrap();
        let c = estimate_convergence_order(&ft, Some(&tr), &Vec3::zeros(), Method::Rk4, 1.0, &steps).unwrap();
        assert_eq!(c.order, None);

        assert!(matches!(
            estimate_convergence_order(&f, None, &Vec3::x(), Method::Rk4, 1.0, &steps),
            Err(IntegrateError::OracleUnavailable)
        ));
        assert!(matches!(
            estimate_convergence_order(&f, Some(&rot), &Vec3::x(), Method::Rk4, 1.0, &[8, 16]),
            Err(IntegrateError::InvalidStepCounts(_))
        ));
    }
}
