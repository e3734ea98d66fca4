use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), message: message.into() }
}

/// Loads a mesh by extension: `.obj` or `.ply`.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("obj") => load_mesh_obj(path),
        Some("ply") => load_mesh_ply(path),
        _ => Err(parse_err(path, "unsupported mesh extension (expected .obj or .ply)")),
    }
}

/// Wavefront OBJ loader: positions and (triangulated) faces; `vn` records are
/// used only when they map one-to-one onto vertices, otherwise normals are
/// recomputed.
pub fn load_mesh_obj(path: &Path) -> Result<TriangleMesh> {
    let file = std::fs::File::open(path)?;
    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut normals: Vec<Vector3<f64>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut normals_match_vertices = true;

    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> =
                    parts.take(3).map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(
                        |e| parse_err(path, format!("line {}: bad vertex: {e}", lineno + 1)),
                    )?;
                if coords.len() != 3 {
                    return Err(parse_err(path, format!("line {}: vertex needs 3 coords", lineno + 1)));
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("vn") => {
                let coords: Vec<f64> =
                    parts.take(3).map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(
                        |e| parse_err(path, format!("line {}: bad normal: {e}", lineno + 1)),
                    )?;
                if coords.len() == 3 {
                    let n = Vector3::new(coords[0], coords[1], coords[2]);
                    let len = n.norm();
                    normals.push(if len > 1e-12 { n / len } else { Vector3::new(0.0, 0.0, 1.0) });
                }
            }
            Some("f") => {
                let mut idx: Vec<u32> = Vec::new();
                for token in parts {
                    let mut fields = token.split('/');
                    let v_field = fields
                        .next()
                        .ok_or_else(|| parse_err(path, format!("line {}: empty face token", lineno + 1)))?;
                    let v: i64 = v_field.parse().map_err(|e| {
                        parse_err(path, format!("line {}: bad face index: {e}", lineno + 1))
                    })?;
                    let v = resolve_obj_index(v, vertices.len())
                        .ok_or_else(|| parse_err(path, format!("line {}: face index out of range", lineno + 1)))?;
                    // Normal index is the third field: v/vt/vn or v//vn.
                    let vn = fields.nth(1).filter(|s| !s.is_empty());
                    match vn {
                        Some(s) => {
                            let n: i64 = s.parse().map_err(|e| {
                                parse_err(path, format!("line {}: bad normal index: {e}", lineno + 1))
                            })?;
                            if resolve_obj_index(n, normals.len().max(1)) != Some(v) {
                                normals_match_vertices = false;
                            }
                        }
                        None => normals_match_vertices = false,
                    }
                    idx.push(v);
                }
                if idx.len() < 3 {
                    return Err(parse_err(path, format!("line {}: face needs 3+ vertices", lineno + 1)));
                }
                for i in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[i], idx[i + 1]]);
                }
            }
            _ => {}
        }
    }
    let normals = (normals_match_vertices && normals.len() == vertices.len() && !normals.is_empty())
        .then_some(normals);
    TriangleMesh::new(vertices, faces, normals)
}

fn resolve_obj_index(raw: i64, count: usize) -> Option<u32> {
    let idx = if raw > 0 { raw - 1 } else { count as i64 + raw };
    (0..count as i64).contains(&idx).then_some(idx as u32)
}

/// Writes positions and 1-based triangle faces.
pub fn save_mesh_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut out = String::new();
    for v in &mesh.vertices {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for f in &mesh.faces {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyFormat {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(token: &str) -> Option<Self> {
        Some(match token {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read(self, bytes: &[u8], big_endian: bool) -> f64 {
        macro_rules! decode {
            ($ty:ty, $n:expr) => {{
                let arr: [u8; $n] = bytes[..$n].try_into().unwrap();
                if big_endian {
                    <$ty>::from_be_bytes(arr) as f64
                } else {
                    <$ty>::from_le_bytes(arr) as f64
                }
            }};
        }
        match self {
            ScalarType::I8 => bytes[0] as i8 as f64,
            ScalarType::U8 => bytes[0] as f64,
            ScalarType::I16 => decode!(i16, 2),
            ScalarType::U16 => decode!(u16, 2),
            ScalarType::I32 => decode!(i32, 4),
            ScalarType::U32 => decode!(u32, 4),
            ScalarType::F32 => decode!(f32, 4),
            ScalarType::F64 => decode!(f64, 8),
        }
    }
}

#[derive(Debug, Clone)]
enum PlyProperty {
    Scalar { name: String, ty: ScalarType },
    List { name: String, count_ty: ScalarType, item_ty: ScalarType },
}

#[derive(Debug, Clone)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

/// PLY loader for ASCII and binary (either endianness) files. Vertex
/// positions and triangulated faces are required; per-vertex normals are
/// picked up when `nx`/`ny`/`nz` properties are present, otherwise
/// recomputed. Unknown properties are skipped.
pub fn load_mesh_ply(path: &Path) -> Result<TriangleMesh> {
    let mut file = std::fs::File::open(path)?;
    let mut data = Vec::new();
    file.read_to_end(&mut data)?;

    // Header is ASCII lines ending at "end_header".
    let header_end = find_header_end(&data)
        .ok_or_else(|| parse_err(path, "missing end_header"))?;
    let header = std::str::from_utf8(&data[..header_end])
        .map_err(|_| parse_err(path, "non-utf8 header"))?;
    let body = &data[header_end..];

    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(parse_err(path, "not a PLY file"));
    }
    let mut format = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    for line in lines {
        let line = line.trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("format") => {
                format = Some(match parts.next() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLe,
                    Some("binary_big_endian") => PlyFormat::BinaryBe,
                    other => return Err(parse_err(path, format!("unknown format {other:?}"))),
                });
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let name = parts.next().ok_or_else(|| parse_err(path, "element without name"))?;
                let count: usize = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(path, "element without count"))?;
                elements.push(PlyElement { name: name.to_string(), count, properties: Vec::new() });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(path, "property before element"))?;
                let first = parts.next().ok_or_else(|| parse_err(path, "bare property"))?;
                if first == "list" {
                    let count_ty = parts
                        .next()
                        .and_then(ScalarType::parse)
                        .ok_or_else(|| parse_err(path, "bad list count type"))?;
                    let item_ty = parts
                        .next()
                        .and_then(ScalarType::parse)
                        .ok_or_else(|| parse_err(path, "bad list item type"))?;
                    let name = parts.next().ok_or_else(|| parse_err(path, "unnamed list"))?;
                    element.properties.push(PlyProperty::List {
                        name: name.to_string(),
                        count_ty,
                        item_ty,
                    });
                } else {
                    let ty = ScalarType::parse(first)
                        .ok_or_else(|| parse_err(path, format!("bad property type {first}")))?;
                    let name = parts.next().ok_or_else(|| parse_err(path, "unnamed property"))?;
                    element.properties.push(PlyProperty::Scalar { name: name.to_string(), ty });
                }
            }
            Some("end_header") => break,
            _ => {}
        }
    }
    let format = format.ok_or_else(|| parse_err(path, "missing format line"))?;

    let mut vertices: Vec<Vector3<f64>> = Vec::new();
    let mut normals: Vec<Vector3<f64>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    match format {
        PlyFormat::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| parse_err(path, "non-utf8 body"))?;
            let mut rows = text.lines().filter(|l| !l.trim().is_empty());
            for element in &elements {
                for _ in 0..element.count {
                    let row = rows.next().ok_or_else(|| parse_err(path, "unexpected end of body"))?;
                    let mut tokens = row.split_whitespace();
                    parse_ply_row(path, element, &mut tokens, &mut vertices, &mut normals, &mut faces)?;
                }
            }
        }
        PlyFormat::BinaryLe | PlyFormat::BinaryBe => {
            let big = format == PlyFormat::BinaryBe;
            let mut cursor = 0usize;
            for element in &elements {
                for _ in 0..element.count {
                    parse_ply_binary_row(
                        path, element, body, &mut cursor, big, &mut vertices, &mut normals,
                        &mut faces,
                    )?;
                }
            }
        }
    }

    let normals = (normals.len() == vertices.len() && !normals.is_empty()).then(|| {
        normals
            .into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 1e-12 {
                    n / len
                } else {
                    Vector3::new(0.0, 0.0, 1.0)
                }
            })
            .collect()
    });
    TriangleMesh::new(vertices, faces, normals)
}

fn find_header_end(data: &[u8]) -> Option<usize> {
    let needle = b"end_header";
    let pos = data.windows(needle.len()).position(|w| w == needle)?;
    // Skip to after the newline terminating the end_header line.
    let mut end = pos + needle.len();
    while end < data.len() && data[end] != b'\n' {
        end += 1;
    }
    Some(end + 1)
}

fn push_face(faces: &mut Vec<[u32; 3]>, idx: &[u32]) {
    for i in 1..idx.len().saturating_sub(1) {
        faces.push([idx[0], idx[i], idx[i + 1]]);
    }
}

fn parse_ply_row<'a>(
    path: &Path,
    element: &PlyElement,
    tokens: &mut impl Iterator<Item = &'a str>,
    vertices: &mut Vec<Vector3<f64>>,
    normals: &mut Vec<Vector3<f64>>,
    faces: &mut Vec<[u32; 3]>,
) -> Result<()> {
    let mut pos = [f64::NAN; 3];
    let mut normal = [f64::NAN; 3];
    for property in &element.properties {
        match property {
            PlyProperty::Scalar { name, .. } => {
                let value: f64 = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(path, "bad scalar value"))?;
                store_vertex_scalar(name, value, &mut pos, &mut normal);
            }
            PlyProperty::List { name, .. } => {
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(path, "bad list count"))?;
                let mut idx = Vec::with_capacity(count);
                for _ in 0..count {
                    let value: i64 = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| parse_err(path, "bad list item"))?;
                    idx.push(value as u32);
                }
                if element.name == "face" && is_vertex_index_list(name) {
                    push_face(faces, &idx);
                }
            }
        }
    }
    finish_vertex_row(element, pos, normal, vertices, normals);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn parse_ply_binary_row(
    path: &Path,
    element: &PlyElement,
    body: &[u8],
    cursor: &mut usize,
    big_endian: bool,
    vertices: &mut Vec<Vector3<f64>>,
    normals: &mut Vec<Vector3<f64>>,
    faces: &mut Vec<[u32; 3]>,
) -> Result<()> {
    let mut pos = [f64::NAN; 3];
    let mut normal = [f64::NAN; 3];
    let mut take = |n: usize| -> Result<&[u8]> {
        if *cursor + n > body.len() {
            return Err(parse_err(path, "unexpected end of binary body"));
        }
        let slice = &body[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };
    for property in &element.properties {
        match property {
            PlyProperty::Scalar { name, ty } => {
                let value = ty.read(take(ty.size())?, big_endian);
                store_vertex_scalar(name, value, &mut pos, &mut normal);
            }
            PlyProperty::List { name, count_ty, item_ty } => {
                let count = count_ty.read(take(count_ty.size())?, big_endian) as usize;
                let mut idx = Vec::with_capacity(count);
                for _ in 0..count {
                    idx.push(item_ty.read(take(item_ty.size())?, big_endian) as u32);
                }
                if element.name == "face" && is_vertex_index_list(name) {
                    push_face(faces, &idx);
                }
            }
        }
    }
    finish_vertex_row(element, pos, normal, vertices, normals);
    Ok(())
}

fn is_vertex_index_list(name: &str) -> bool {
    matches!(name, "vertex_indices" | "vertex_index")
}

fn store_vertex_scalar(name: &str, value: f64, pos: &mut [f64; 3], normal: &mut [f64; 3]) {
    match name {
        "x" => pos[0] = value,
        "y" => pos[1] = value,
        "z" => pos[2] = value,
        "nx" => normal[0] = value,
        "ny" => normal[1] = value,
        "nz" => normal[2] = value,
        _ => {}
    }
}

fn finish_vertex_row(
    element: &PlyElement,
    pos: [f64; 3],
    normal: [f64; 3],
    vertices: &mut Vec<Vector3<f64>>,
    normals: &mut Vec<Vector3<f64>>,
) {
    if element.name == "vertex" && pos.iter().all(|v| v.is_finite()) {
        vertices.push(Vector3::new(pos[0], pos[1], pos[2]));
        if normal.iter().all(|v| v.is_finite()) {
            normals.push(Vector3::new(normal[0], normal[1], normal[2]));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{make_primitive, PrimitiveKind};

    #[test]
    fn obj_round_trip_recomputes_normals() {
        let mesh = make_primitive(PrimitiveKind::default_box()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("box.obj");
        save_mesh_obj(&path, &mesh).unwrap();
        let back = load_mesh_obj(&path).unwrap();
        assert_eq!(back.vertices.len(), 8);
        assert_eq!(back.faces, mesh.faces);
        assert!((back.diameter - mesh.diameter).abs() < 1e-12);
        for n in &back.vertex_normals {
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn obj_parses_slash_forms_and_quads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        std::fs::write(
            &path,
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nf 1/1/1 2/1/1 3/1/1 4/1/1\n",
        )
        .unwrap();
        let mesh = load_mesh_obj(&path).unwrap();
        assert_eq!(mesh.vertices.len(), 4);
        assert_eq!(mesh.faces.len(), 2); // quad fan-triangulated
    }

    #[test]
    fn ply_ascii_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ply");
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 4\n\
                    property float x\nproperty float y\nproperty float z\n\
                    element face 2\nproperty list uchar int vertex_indices\nend_header\n\
                    0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n";
        std::fs::write(&path, text).unwrap();
        let mesh = load_mesh_ply(&path).unwrap();
        assert_eq!(mesh.vertices.len(), 4);
        assert_eq!(mesh.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn ply_binary_little_endian() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ply");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(
            b"ply\nformat binary_little_endian 1.0\nelement vertex 3\n\
              property float x\nproperty float y\nproperty float z\n\
              property uchar red\n\
              element face 1\nproperty list uchar uint vertex_indices\nend_header\n",
        );
        for (x, y, z) in [(0.0f32, 0.0f32, 0.0f32), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)] {
            bytes.extend_from_slice(&x.to_le_bytes());
            bytes.extend_from_slice(&y.to_le_bytes());
            bytes.extend_from_slice(&z.to_le_bytes());
            bytes.push(200); // skipped color property
        }
        bytes.push(3);
        for i in [0u32, 1, 2] {
            bytes.extend_from_slice(&i.to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let mesh = load_mesh_ply(&path).unwrap();
        assert_eq!(mesh.vertices.len(), 3);
        assert_eq!(mesh.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn ply_binary_big_endian_with_normals() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ply");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(
            b"ply\nformat binary_big_endian 1.0\nelement vertex 3\n\
              property float x\nproperty float y\nproperty float z\n\
              property float nx\nproperty float ny\nproperty float nz\n\
              element face 1\nproperty list uchar int vertex_indices\nend_header\n",
        );
        for (x, y, z) in [(0.0f32, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)] {
            for v in [x, y, z, 0.0, 0.0, 1.0] {
                bytes.extend_from_slice(&v.to_be_bytes());
            }
        }
        bytes.push(3);
        for i in [0i32, 1, 2] {
            bytes.extend_from_slice(&i.to_be_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let mesh = load_mesh_ply(&path).unwrap();
        assert_eq!(mesh.vertices.len(), 3);
        assert_eq!(mesh.vertex_normals[0], Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ply");
        std::fs::write(&path, "not a ply").unwrap();
        assert!(load_mesh_ply(&path).is_err());
    }
}
