//! Surface comparison metrics over uniform point samples (Chamfer,
//! Hausdorff, Chamfer normals) and the self-intersecting face ratio.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{orient3d, Aabb, Vec3};
use crate::mesh::{sample_surface_uniform, MeshError, SurfaceSamples, TriangleMesh};
use crate::spatial::{KdTree, TriangleBvh};

pub const DEFAULT_SAMPLES: usize = 200_000;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Relative tolerance of the orientation predicates in the intersection test.
const PREDICATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("normal {index} is not unit length (norm {norm})")]
    NonUnitNormal { index: usize, norm: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// A symmetric score together with its two one-sided components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Symmetric {
    pub value: f64,
    pub a_to_b: f64,
    pub b_to_a: f64,
}

/// Nearest neighbor in `target` of every point of `source`: (index, distance).
/// Ordered like `source`; ties go to the lowest target index.
pub fn nearest_neighbors(source: &[Vec3], target: &KdTree) -> Vec<(usize, f64)> {
    source
        .par_iter()
        .map(|p| {
            let (i, d2) = target.nearest(p).expect("non-empty target");
            (i, d2.sqrt())
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

fn check(points: &[Vec3]) -> Result<(), MetricsError> {
    if points.is_empty() {
        Err(MetricsError::EmptyCloud)
    } else {
        Ok(())
    }
}

/// Nearest neighbors in both directions between two clouds.
struct Matches {
    ab: Vec<(usize, f64)>,
    ba: Vec<(usize, f64)>,
}

impl Matches {
    fn new(a: &[Vec3], b: &[Vec3]) -> Result<Self, MetricsError> {
        check(a)?;
        check(b)?;
        Ok(Self {
            ab: nearest_neighbors(a, &KdTree::new(b)),
            ba: nearest_neighbors(b, &KdTree::new(a)),
        })
    }

    fn chamfer(&self) -> Symmetric {
        let a_to_b = mean(self.ab.iter().map(|x| x.1), self.ab.len());
        let b_to_a = mean(self.ba.iter().map(|x| x.1), self.ba.len());
        Symmetric {
            value: 0.5 * a_to_b + 0.5 * b_to_a,
            a_to_b,
            b_to_a,
        }
    }

    fn hausdorff(&self) -> Symmetric {
        let a_to_b = self.ab.iter().map(|x| x.1).fold(0.0, f64::max);
        let b_to_a = self.ba.iter().map(|x| x.1).fold(0.0, f64::max);
        Symmetric {
            value: a_to_b.max(b_to_a),
            a_to_b,
            b_to_a,
        }
    }

    fn normals(&self, a: &SurfaceSamples, b: &SurfaceSamples, signed: bool) -> Symmetric {
        let cos = |x: &Vec3, y: &Vec3| {
            let c = x.dot(y);
            if signed {
                c
            } else {
                c.abs()
            }
        };
        let a_to_b = mean(
            self.ab.iter().enumerate().map(|(i, &(j, _))| cos(&a.normals[i], &b.normals[j])),
            a.len(),
        );
        let b_to_a = mean(
            self.ba.iter().enumerate().map(|(i, &(j, _))| cos(&b.normals[i], &a.normals[j])),
            b.len(),
        );
        Symmetric {
            value: 0.5 * a_to_b + 0.5 * b_to_a,
            a_to_b,
            b_to_a,
        }
    }
}

/// ½·mean_a min_b ‖a − b‖ + ½·mean_b min_a ‖a − b‖.
pub fn chamfer_distance(a: &[Vec3], b: &[Vec3]) -> Result<Symmetric, MetricsError> {
    Ok(Matches::new(a, b)?.chamfer())
}

/// max(max_a min_b ‖a − b‖, max_b min_a ‖a − b‖).
pub fn hausdorff_distance(a: &[Vec3], b: &[Vec3]) -> Result<Symmetric, MetricsError> {
    Ok(Matches::new(a, b)?.hausdorff())
}

fn check_normals(s: &SurfaceSamples) -> Result<(), MetricsError> {
    check(&s.points)?;
    for (index, n) in s.normals.iter().enumerate() {
        let norm = n.norm();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(MetricsError::NonUnitNormal { index, norm });
        }
    }
    Ok(())
}

/// Mean cosine between each sample's normal and the normal of its nearest
/// neighbor in the other cloud, averaged over both directions. With
/// `signed == false` the absolute cosine is used, so flipped orientation
/// does not count against a surface.
pub fn chamfer_normals(a: &SurfaceSamples, b: &SurfaceSamples, signed: bool) -> Result<Symmetric, MetricsError> {
    check_normals(a)?;
    check_normals(b)?;
    Ok(Matches::new(&a.points, &b.points)?.normals(a, b, signed))
}

/// Segment `pq` crosses the interior or boundary of triangle `t`, with `p`
/// and `q` strictly on opposite sides of its plane.
fn segment_crosses(p: &Vec3, q: &Vec3, t: &[Vec3; 3], tol: f64) -> bool {
    let dp = orient3d(&t[0], &t[1], &t[2], p);
    let dq = orient3d(&t[0], &t[1], &t[2], q);
    if !((dp > tol && dq < -tol) || (dp < -tol && dq > tol)) {
        return false;
    }
    let s1 = orient3d(p, q, &t[0], &t[1]);
    let s2 = orient3d(p, q, &t[1], &t[2]);
    let s3 = orient3d(p, q, &t[2], &t[0]);
    (s1 >= -tol && s2 >= -tol && s3 >= -tol) || (s1 <= tol && s2 <= tol && s3 <= tol)
}

/// Proper intersection of two triangles: some edge of one passes through the
/// other. Coplanar contact and touching within the predicate tolerance are
/// not intersections.
pub fn triangles_intersect(a: &[Vec3; 3], b: &[Vec3; 3]) -> bool {
    let mut len: f64 = 0.0;
    for t in [a, b] {
        for k in 0..3 {
            len = len.max((t[k] - t[(k + 1) % 3]).norm());
        }
    }
    let tol = PREDICATE_TOL * len * len * len;
    (0..3).any(|k| segment_crosses(&a[k], &a[(k + 1) % 3], b, tol))
        || (0..3).any(|k| segment_crosses(&b[k], &b[(k + 1) % 3], a, tol))
}

/// Faces sharing at least one vertex are adjacent and never tested.
pub fn faces_adjacent(f: &[u32; 3], g: &[u32; 3]) -> bool {
    f.iter().any(|i| g.contains(i))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfIntersection {
    /// Faces involved in at least one proper intersection (both faces of a pair count).
    pub count: usize,
    /// 100 · count / F.
    pub percent: f64,
    pub flagged: Vec<bool>,
}

/// Counts faces that properly intersect a non-adjacent face, using a BVH
/// broad phase and [`triangles_intersect`] as the narrow phase.
pub fn self_intersecting_faces(mesh: &TriangleMesh) -> SelfIntersection {
    let faces = mesh.faces();
    let bvh = TriangleBvh::new(mesh.vertices(), faces);
    let pairs: Vec<Vec<u32>> = (0..faces.len())
        .into_par_iter()
        .map(|i| {
            let ti = bvh.triangle(i);
            let query = Aabb::from_points(ti);
            let mut hits = Vec::new();
            bvh.for_each_overlap(&query, |j| {
                if j > i && !faces_adjacent(&faces[i], &faces[j]) && triangles_intersect(ti, bvh.triangle(j)) {
                    hits.push(j as u32);
                }
            });
            hits
        })
        .collect();
    let mut flagged = vec![false; faces.len()];
    for (i, hits) in pairs.iter().enumerate() {
        if !hits.is_empty() {
            flagged[i] = true;
        }
        for &j in hits {
            flagged[j as usize] = true;
        }
    }
    let count = flagged.iter().filter(|&&f| f).count();
    SelfIntersection {
        count,
        percent: if faces.is_empty() { 0.0 } else { 100.0 * count as f64 / faces.len() as f64 },
        flagged,
    }
}

/// The full comparison of a predicted surface against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub chamfer_mm: f64,
    pub chamfer_pred_to_gt_mm: f64,
    pub chamfer_gt_to_pred_mm: f64,
    pub hausdorff_mm: f64,
    pub hausdorff_pred_to_gt_mm: f64,
    pub hausdorff_gt_to_pred_mm: f64,
    pub chamfer_normals: f64,
    pub sif_count: usize,
    pub sif_percent: f64,
    pub n_samples: usize,
    pub seed: u64,
}

const CSV_COLUMNS: [&str; 12] = [
    "schema_version",
    "chamfer_mm",
    "chamfer_pred_to_gt_mm",
    "chamfer_gt_to_pred_mm",
    "hausdorff_mm",
    "hausdorff_pred_to_gt_mm",
    "hausdorff_gt_to_pred_mm",
    "chamfer_normals",
    "sif_count",
    "sif_percent",
    "n_samples",
    "seed",
];

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn csv_header() -> String {
        CSV_COLUMNS.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.schema_version,
            self.chamfer_mm,
            self.chamfer_pred_to_gt_mm,
            self.chamfer_gt_to_pred_mm,
            self.hausdorff_mm,
            self.hausdorff_pred_to_gt_mm,
            self.hausdorff_gt_to_pred_mm,
            self.chamfer_normals,
            self.sif_count,
            self.sif_percent,
            self.n_samples,
            self.seed
        )
    }
}

/// Samples both surfaces with the same seed and computes every metric;
/// %SIF is reported for `pred`.
pub fn evaluate_surfaces(
    pred: &TriangleMesh,
    gt: &TriangleMesh,
    n_samples: usize,
    seed: u64,
) -> Result<MetricsReport, MetricsError> {
    let sp = sample_surface_uniform(pred, n_samples, seed)?;
    let sg = sample_surface_uniform(gt, n_samples, seed)?;
    check_normals(&sp)?;
    check_normals(&sg)?;
    let matches = Matches::new(&sp.points, &sg.points)?;
    let (ch, hd, chn) = (matches.chamfer(), matches.hausdorff(), matches.normals(&sp, &sg, false));
    let sif = self_intersecting_faces(pred);
    Ok(MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        chamfer_mm: ch.value,
        chamfer_pred_to_gt_mm: ch.a_to_b,
        chamfer_gt_to_pred_mm: ch.b_to_a,
        hausdorff_mm: hd.value,
        hausdorff_pred_to_gt_mm: hd.a_to_b,
        hausdorff_gt_to_pred_mm: hd.b_to_a,
        chamfer_normals: chn.value,
        sif_count: sif.count,
        sif_percent: sif.percent,
        n_samples,
        seed,
    })
}
