//! Wavefront OBJ (ASCII) and PLY (binary little-endian, ASCII on read) mesh files.
//!
//! PLY output stores double-precision coordinates and, when present, the
//! provenance tags as an extra `uint tag` vertex property. OBJ drops tags.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geom::Vec3;
use crate::mesh::{MeshError, TriangleMesh};

#[derive(Debug, Error)]
pub enum MeshIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: unsupported mesh extension (expected .ply or .obj)")]
    UnknownFormat { path: PathBuf },
    #[error("{path}: {source}")]
    Mesh {
        path: PathBuf,
        #[source]
        source: MeshError,
    },
}

/// Reads `.ply` or `.obj` by extension.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh, MeshIoError> {
    match extension(path).as_deref() {
        Some("ply") => read_ply(path),
        Some("obj") => read_obj(path),
        _ => Err(MeshIoError::UnknownFormat { path: path.into() }),
    }
}

/// Writes `.ply` or `.obj` by extension.
pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<(), MeshIoError> {
    match extension(path).as_deref() {
        Some("ply") => write_ply(path, mesh),
        Some("obj") => write_obj(path, mesh),
        _ => Err(MeshIoError::UnknownFormat { path: path.into() }),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MeshIoError + '_ {
    move |source| MeshIoError::Io {
        path: path.into(),
        source,
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> MeshIoError {
    MeshIoError::Parse {
        path: path.into(),
        message: message.into(),
    }
}

fn finish(
    path: &Path,
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    tags: Option<Vec<u32>>,
) -> Result<TriangleMesh, MeshIoError> {
    let wrap = |source| MeshIoError::Mesh {
        path: path.into(),
        source,
    };
    let mesh = TriangleMesh::new(vertices, faces).map_err(wrap)?;
    match tags {
        Some(t) => mesh.with_tags(t).map_err(wrap),
        None => Ok(mesh),
    }
}

pub fn encode_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::with_capacity(mesh.vertex_count() * 48 + mesh.face_count() * 24);
    for v in mesh.vertices() {
        s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for f in mesh.faces() {
        s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    s
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<(), MeshIoError> {
    fs::write(path, encode_obj(mesh)).map_err(io_err(path))
}

/// Reads `v` and `f` records; polygons are fan-triangulated, texture and
/// normal indices ignored, negative (relative) indices resolved.
pub fn read_obj(path: &Path) -> Result<TriangleMesh, MeshIoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| parse_err(path, format!("line {}: {e}", lineno + 1)))?;
                if coords.len() != 3 {
                    return Err(parse_err(path, format!("line {}: vertex needs 3 coordinates", lineno + 1)));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in parts {
                    let first = tok.split('/').next().unwrap_or("");
                    let idx: i64 = first
                        .parse()
                        .map_err(|e| parse_err(path, format!("line {}: {e}", lineno + 1)))?;
                    let resolved = if idx < 0 { vertices.len() as i64 + idx } else { idx - 1 };
                    if resolved < 0 {
                        return Err(parse_err(path, format!("line {}: bad index {idx}", lineno + 1)));
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(parse_err(path, format!("line {}: face needs 3 vertices", lineno + 1)));
                }
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    finish(path, vertices, faces, None)
}

pub fn encode_ply(mesh: &TriangleMesh) -> Vec<u8> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\ncomment diffeoflow\n");
    header.push_str(&format!("element vertex {}\n", mesh.vertex_count()));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if mesh.tags().is_some() {
        header.push_str("property uint tag\n");
    }
    header.push_str(&format!("element face {}\n", mesh.face_count()));
    header.push_str("property list uchar int vertex_indices\nend_header\n");

    let mut out = header.into_bytes();
    let tags = mesh.tags();
    for (i, v) in mesh.vertices().iter().enumerate() {
        for c in 0..3 {
            out.extend_from_slice(&v[c].to_le_bytes());
        }
        if let Some(t) = tags {
            out.extend_from_slice(&t[i].to_le_bytes());
        }
    }
    for f in mesh.faces() {
        out.push(3);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}

pub fn write_ply(path: &Path, mesh: &TriangleMesh) -> Result<(), MeshIoError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&encode_ply(mesh)).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Sequential reader over either binary or ASCII element data.
enum Body<'a> {
    Binary { data: &'a [u8], pos: usize },
    Ascii { tokens: std::str::SplitAsciiWhitespace<'a> },
}

impl Body<'_> {
    fn next(&mut self, ty: Scalar) -> Option<f64> {
        match self {
            Body::Binary { data, pos } => {
                let n = ty.size();
                let v = data.get(*pos..*pos + n).map(|b| ty.read(b));
                *pos += n;
                v
            }
            Body::Ascii { tokens } => tokens.next().and_then(|t| t.parse().ok()),
        }
    }
}

/// Reads a PLY mesh. Vertex `x y z` may be any scalar type; a `tag` vertex
/// property becomes the provenance tags; faces come from `vertex_indices`
/// (or `vertex_index`) and are fan-triangulated.
pub fn read_ply(path: &Path) -> Result<TriangleMesh, MeshIoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let marker = b"end_header";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| parse_err(path, "missing end_header"))?;
    let mut body_start = end + marker.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| parse_err(path, "header is not UTF-8"))?;

    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(parse_err(path, "not a PLY file"));
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", "ascii", _] => binary = Some(false),
            ["format", other, _] => return Err(parse_err(path, format!("unsupported PLY format `{other}`"))),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| parse_err(path, "bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(path, "property before element"))?;
                el.properties.push(Property::List {
                    name: name.to_string(),
                    count: Scalar::parse(count).ok_or_else(|| parse_err(path, "bad list count type"))?,
                    item: Scalar::parse(item).ok_or_else(|| parse_err(path, "bad list item type"))?,
                });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(path, "property before element"))?;
                el.properties.push(Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty).ok_or_else(|| parse_err(path, format!("bad property type `{ty}`")))?,
                });
            }
            _ => {}
        }
    }
    let binary = binary.ok_or_else(|| parse_err(path, "missing format line"))?;
    let mut body = if binary {
        Body::Binary {
            data: &bytes[body_start..],
            pos: 0,
        }
    } else {
        let text = std::str::from_utf8(&bytes[body_start..]).map_err(|_| parse_err(path, "body is not UTF-8"))?;
        Body::Ascii {
            tokens: text.split_ascii_whitespace(),
        }
    };

    let truncated = || parse_err(path, "unexpected end of data");
    let mut vertices = Vec::new();
    let mut tags: Option<Vec<u32>> = None;
    let mut faces = Vec::new();
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        let has_tag = is_vertex
            && el
                .properties
                .iter()
                .any(|p| matches!(p, Property::Scalar { name, .. } if name == "tag"));
        if has_tag {
            tags = Some(Vec::with_capacity(el.count));
        }
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            for p in &el.properties {
                match p {
                    Property::Scalar { name, ty } => {
                        let v = body.next(*ty).ok_or_else(truncated)?;
                        if is_vertex {
                            match name.as_str() {
                                "x" => xyz[0] = v,
                                "y" => xyz[1] = v,
                                "z" => xyz[2] = v,
                                "tag" => tags.as_mut().expect("tag vector").push(v as u32),
                                _ => {}
                            }
                        }
                    }
                    Property::List { name, count, item } => {
                        let n = body.next(*count).ok_or_else(truncated)? as usize;
                        let mut poly = Vec::with_capacity(n);
                        for _ in 0..n {
                            poly.push(body.next(*item).ok_or_else(truncated)?);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            if n < 3 {
                                return Err(parse_err(path, "face with fewer than 3 vertices"));
                            }
                            if poly.iter().any(|&i| i < 0.0) {
                                return Err(parse_err(path, "negative vertex index"));
                            }
                            for k in 1..n - 1 {
                                faces.push([poly[0] as u32, poly[k] as u32, poly[k + 1] as u32]);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
        }
    }
    finish(path, vertices, faces, tags)
}
