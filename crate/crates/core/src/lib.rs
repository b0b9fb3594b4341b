//! Diffeomorphic surface deformation toolkit.
//!
//! Triangle meshes are deformed by integrating stationary flow fields
//! (forward Euler or RK4), chained stage by stage, fitted to target surfaces
//! by gradient descent through the integrator, and scored with sample-based
//! surface metrics. A template builder produces smooth genus-0 starting
//! meshes from a set of training surfaces.

pub mod chain;
pub mod field;
pub mod fit;
pub mod geom;
pub mod integrate;
pub mod mesh;
pub mod mesh_io;
pub mod metrics;
pub mod primitives;
pub mod spatial;
pub mod template;

pub use field::{AnalyticFlow, FlowField, GridSpec};
pub use geom::Vec3;
pub use integrate::{integrate_mesh, integrate_point, IntegratorConfig, Method};
pub use mesh::{EdgeSet, MeshError, SurfaceSamples, TriangleMesh};
