//! Exact spatial indices: a kd-tree for nearest-neighbor queries on point
//! clouds and a bounding-volume hierarchy over triangles.

use crate::geom::{closest_point_on_triangle, Aabb, Vec3};

const KD_LEAF: usize = 8;
const BVH_LEAF: usize = 4;

#[derive(Debug, Clone)]
enum KdNode {
    Leaf { start: u32, end: u32 },
    Split { left: u32, right: u32 },
}

/// Static kd-tree with exact nearest-neighbor queries.
///
/// Every node keeps the tight box of its points, which prunes far better
/// than split planes when the points lie on a surface. Ties in distance
/// resolve to the lowest point index, matching a first-minimum linear scan.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<u32>,
    nodes: Vec<KdNode>,
    boxes: Vec<Aabb>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
            boxes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let bbox = Aabb::from_points(self.order[start..end].iter().map(|&i| &self.points[i as usize]));
        self.boxes.push(bbox);
        if end - start <= KD_LEAF {
            self.nodes.push(KdNode::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }
        let ext = bbox.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize][axis].total_cmp(&points[b as usize][axis])
        });
        self.nodes.push(KdNode::Split { left: 0, right: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id as usize] = KdNode::Split { left, right };
        id
    }

    /// Index of the nearest point and its squared distance, or `None` when empty.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (u32::MAX, f64::INFINITY);
        self.nearest_in(0, q, &mut best);
        Some((best.0 as usize, best.1))
    }

    fn nearest_in(&self, node: u32, q: &Vec3, best: &mut (u32, f64)) {
        match self.nodes[node as usize] {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let d2 = (self.points[i as usize] - q).norm_squared();
                    if d2 < best.1 || (d2 == best.1 && i < best.0) {
                        *best = (i, d2);
                    }
                }
            }
            KdNode::Split { left, right } => {
                let dl = self.boxes[left as usize].distance_squared(q);
                let dr = self.boxes[right as usize].distance_squared(q);
                let [(d0, n0), (d1, n1)] = if dl <= dr { [(dl, left), (dr, right)] } else { [(dr, right), (dl, left)] };
                // Equality can still hide a lower-index tie.
                if d0 <= best.1 {
                    self.nearest_in(n0, q, best);
                }
                if d1 <= best.1 {
                    self.nearest_in(n1, q, best);
                }
            }
        }
    }
}

/// Linear-scan nearest neighbor with the same tie rule as [`KdTree::nearest`].
pub fn nearest_brute_force(points: &[Vec3], q: &Vec3) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d2 = (p - q).norm_squared();
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some((i, d2));
        }
    }
    best
}

#[derive(Debug, Clone)]
struct BvhNode {
    bbox: Aabb,
    /// Leaf: `count > 0`, triangles `first..first + count` of `order`.
    /// Interior: children at `first` and `first + 1`.
    first: u32,
    count: u32,
}

/// Bounding-volume hierarchy over a triangle soup.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    triangles: Vec<[Vec3; 3]>,
    order: Vec<u32>,
    nodes: Vec<BvhNode>,
}

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestHit {
    pub face: usize,
    pub point: Vec3,
    pub distance_squared: f64,
}

impl TriangleBvh {
    pub fn new(vertices: &[Vec3], faces: &[[u32; 3]]) -> Self {
        let triangles: Vec<[Vec3; 3]> = faces.iter().map(|f| f.map(|i| vertices[i as usize])).collect();
        let mut bvh = Self {
            order: (0..triangles.len() as u32).collect(),
            triangles,
            nodes: Vec::new(),
        };
        if !bvh.triangles.is_empty() {
            let centroids: Vec<Vec3> = bvh
                .triangles
                .iter()
                .map(|t| (t[0] + t[1] + t[2]) / 3.0)
                .collect();
            bvh.nodes.push(BvhNode {
                bbox: Aabb::empty(),
                first: 0,
                count: 0,
            });
            bvh.build(0, 0, bvh.triangles.len(), &centroids);
        }
        bvh
    }

    pub fn triangle(&self, face: usize) -> &[Vec3; 3] {
        &self.triangles[face]
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    fn build(&mut self, node: usize, start: usize, end: usize, centroids: &[Vec3]) {
        let mut bbox = Aabb::empty();
        for &t in &self.order[start..end] {
            for p in &self.triangles[t as usize] {
                bbox.grow(p);
            }
        }
        self.nodes[node].bbox = bbox;
        if end - start <= BVH_LEAF {
            self.nodes[node].first = start as u32;
            self.nodes[node].count = (end - start) as u32;
            return;
        }
        let cb = Aabb::from_points(self.order[start..end].iter().map(|&t| &centroids[t as usize]));
        let ext = cb.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis])
        });
        let left = self.nodes.len();
        let empty = BvhNode {
            bbox: Aabb::empty(),
            first: 0,
            count: 0,
        };
        self.nodes.push(empty.clone());
        self.nodes.push(empty);
        self.nodes[node].first = left as u32;
        self.nodes[node].count = 0;
        self.build(left, start, mid, centroids);
        self.build(left + 1, mid, end, centroids);
    }

    /// Closest point on any triangle; ties resolve to the lowest face index.
    pub fn closest_point(&self, p: &Vec3) -> Option<ClosestHit> {
        if self.triangles.is_empty() {
            return None;
        }
        let mut best = ClosestHit {
            face: usize::MAX,
            point: *p,
            distance_squared: f64::INFINITY,
        };
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if node.bbox.distance_squared(p) > best.distance_squared {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.first as usize..(node.first + node.count) as usize] {
                    let [a, b, c] = &self.triangles[t as usize];
                    let q = closest_point_on_triangle(p, a, b, c);
                    let d2 = (q - p).norm_squared();
                    let t = t as usize;
                    if d2 < best.distance_squared || (d2 == best.distance_squared && t < best.face) {
                        best = ClosestHit {
                            face: t,
                            point: q,
                            distance_squared: d2,
                        };
                    }
                }
            } else {
                let l = node.first;
                let r = node.first + 1;
                let dl = self.nodes[l as usize].bbox.distance_squared(p);
                let dr = self.nodes[r as usize].bbox.distance_squared(p);
                // Visit the nearer child first (pushed last).
                if dl <= dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        Some(best)
    }

    /// Calls `visit` for every triangle whose bounding box overlaps `query`.
    pub fn for_each_overlap(&self, query: &Aabb, mut visit: impl FnMut(usize)) {
        if self.triangles.is_empty() {
            return;
        }
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if !node.bbox.overlaps(query) {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.first as usize..(node.first + node.count) as usize] {
                    let tb = Aabb::from_points(&self.triangles[t as usize]);
                    if tb.overlaps(query) {
                        visit(t as usize);
                    }
                }
            } else {
                stack.push(node.first);
                stack.push(node.first + 1);
            }
        }
    }
}
