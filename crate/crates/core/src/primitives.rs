//! Procedural meshes used as fixtures, seeds and test oracles.

use crate::geom::Vec3;
use crate::mesh::{subdivide_midpoint, TriangleMesh};

/// Flips faces of a star-shaped mesh so their normals point away from `center`.
fn orient_outward(vertices: &[Vec3], faces: &mut [[u32; 3]], center: &Vec3) {
    for f in faces.iter_mut() {
        let [a, b, c] = f.map(|i| vertices[i as usize]);
        let n = (b - a).cross(&(c - a));
        if n.dot(&((a + b + c) / 3.0 - center)) < 0.0 {
            f.swap(1, 2);
        }
    }
}

fn convex(vertices: Vec<Vec3>, mut faces: Vec<[u32; 3]>) -> TriangleMesh {
    let center = vertices.iter().sum::<Vec3>() / vertices.len() as f64;
    orient_outward(&vertices, &mut faces, &center);
    TriangleMesh::new(vertices, faces).expect("valid primitive")
}

/// Regular tetrahedron inscribed in the cube [−1, 1]³.
pub fn tetrahedron() -> TriangleMesh {
    let v = vec![
        Vec3::new(1.0, 1.0, 1.0),
        Vec3::new(1.0, -1.0, -1.0),
        Vec3::new(-1.0, 1.0, -1.0),
        Vec3::new(-1.0, -1.0, 1.0),
    ];
    convex(v, vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])
}

/// Axis-aligned unit cube [0, 1]³, two triangles per side.
pub fn unit_cube() -> TriangleMesh {
    let mut v = Vec::with_capacity(8);
    for i in 0..8 {
        v.push(Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64));
    }
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    convex(v, faces)
}

/// Icosahedron with vertices on the unit sphere.
pub fn icosahedron() -> TriangleMesh {
    let p = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, p, 0.0),
        (1.0, p, 0.0),
        (-1.0, -p, 0.0),
        (1.0, -p, 0.0),
        (0.0, -1.0, p),
        (0.0, 1.0, p),
        (0.0, -1.0, -p),
        (0.0, 1.0, -p),
        (p, 0.0, -1.0),
        (p, 0.0, 1.0),
        (-p, 0.0, -1.0),
        (-p, 0.0, 1.0),
    ];
    let v = raw
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    convex(v, faces)
}

fn octahedron() -> TriangleMesh {
    let v = vec![
        Vec3::x(),
        -Vec3::x(),
        Vec3::y(),
        -Vec3::y(),
        Vec3::z(),
        -Vec3::z(),
    ];
    let faces = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [0, 5, 2],
        [2, 5, 1],
        [1, 5, 3],
        [3, 5, 0],
    ];
    convex(v, faces)
}

fn spherify(base: TriangleMesh, levels: usize, radius: f64) -> TriangleMesh {
    let mut m = base;
    for _ in 0..levels {
        m = subdivide_midpoint(&m, 1).expect("closed primitive");
        m = m.map_vertices(|v| v.normalize());
    }
    m.map_vertices(|v| v.normalize() * radius)
}

/// Icosahedron refined `levels` times with vertices projected to a sphere
/// centred at the origin: 10·4ˡ + 2 vertices, 20·4ˡ faces.
pub fn icosphere(levels: usize, radius: f64) -> TriangleMesh {
    spherify(icosahedron(), levels, radius)
}

/// Octahedron-based sphere; contains the six axis points (±r, 0, 0), ….
pub fn octasphere(levels: usize, radius: f64) -> TriangleMesh {
    spherify(octahedron(), levels, radius)
}

/// Sphere whose radius varies as `base + amplitude·sin(k·θ)·sin(k·φ)`
/// (θ polar, φ azimuthal).
pub fn wrinkled_sphere(levels: usize, base: f64, amplitude: f64, frequency: f64) -> TriangleMesh {
    icosphere(levels, 1.0).map_vertices(|d| {
        let theta = d.z.clamp(-1.0, 1.0).acos();
        let phi = d.y.atan2(d.x);
        d * (base + amplitude * (frequency * theta).sin() * (frequency * phi).sin())
    })
}

/// Torus around the z axis, `nu` segments around the ring and `nv` around the tube.
pub fn torus(major: f64, minor: f64, nu: usize, nv: usize) -> TriangleMesh {
    let mut v = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = std::f64::consts::TAU * i as f64 / nu as f64;
        for j in 0..nv {
            let w = std::f64::consts::TAU * j as f64 / nv as f64;
            let r = major + minor * w.cos();
            v.push(Vec3::new(r * u.cos(), r * u.sin(), minor * w.sin()));
        }
    }
    let id = |i: usize, j: usize| ((i % nu) * nv + (j % nv)) as u32;
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriangleMesh::new(v, faces).expect("valid torus")
}

/// Flat `nx × ny` vertex grid in the z = 0 plane with +z normals.
/// Vertex `(i, j)` has index `j·nx + i`.
pub fn grid_plane(nx: usize, ny: usize, spacing: f64) -> TriangleMesh {
    let mut v = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            v.push(Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0));
        }
    }
    let id = |i: usize, j: usize| (j * nx + i) as u32;
    let mut faces = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriangleMesh::new(v, faces).expect("valid plane")
}

/// Concatenates meshes into one (disjoint components). Tags are kept only if
/// every input carries them.
pub fn merge(meshes: &[TriangleMesh]) -> TriangleMesh {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut tags = Vec::new();
    let all_tagged = meshes.iter().all(|m| m.tags().is_some());
    for m in meshes {
        let offset = vertices.len() as u32;
        vertices.extend_from_slice(m.vertices());
        faces.extend(m.faces().iter().map(|f| f.map(|i| i + offset)));
        if let Some(t) = m.tags() {
            tags.extend_from_slice(t);
        }
    }
    let out = TriangleMesh::new(vertices, faces).expect("union of valid meshes");
    if all_tagged && !meshes.is_empty() {
        out.with_tags(tags).expect("one tag per vertex")
    } else {
        out
    }
}
