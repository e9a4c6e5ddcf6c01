//! OBJ (ASCII `v`/`f`) and binary little-endian PLY reading and writing.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{MeshError, TriMesh, Vec3};

/// Loads an OBJ or binary little-endian PLY file, chosen by extension.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh, MeshError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(MeshError::FileNotFound(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    if bytes.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    match extension(path).as_str() {
        "obj" => parse_obj(&String::from_utf8_lossy(&bytes)),
        "ply" => parse_ply(&bytes),
        other => Err(MeshError::UnsupportedFormat(other.to_string())),
    }
}

pub fn save_mesh(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "obj" => write_obj(mesh, path),
        "ply" => write_ply(mesh, path),
        other => Err(MeshError::UnsupportedFormat(other.to_string())),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

pub fn parse_obj(text: &str) -> Result<TriMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let err = |message: String| MeshError::ParseError {
            line: lineno + 1,
            message,
        };
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| err(format!("bad vertex coordinate: {e}")))?;
                if coords.len() != 3 {
                    return Err(err("vertex needs three coordinates".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = Vec::with_capacity(4);
                for tok in tokens {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| err(format!("bad face index `{tok}`")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        return Err(err("face index 0 is invalid".into()));
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(err(format!("face index {i} out of range")));
                    }
                    idx.push(resolved as u32);
                }
                match idx.len() {
                    3 => triangles.push([idx[0], idx[1], idx[2]]),
                    4 => {
                        triangles.push([idx[0], idx[1], idx[2]]);
                        triangles.push([idx[0], idx[2], idx[3]]);
                    }
                    n => return Err(err(format!("face with {n} vertices is not supported"))),
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, triangles)
}

#[derive(Debug, Clone, Copy)]
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
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

pub fn parse_ply(bytes: &[u8]) -> Result<TriMesh, MeshError> {
    let perr = |line: usize, message: &str| MeshError::ParseError {
        line,
        message: message.to_string(),
    };
    let header_end = find_subslice(bytes, b"end_header")
        .ok_or_else(|| perr(1, "missing end_header"))?;
    let body_start = bytes[header_end..]
        .iter()
        .position(|&b| b == b'\n')
        .map(|p| header_end + p + 1)
        .ok_or_else(|| perr(1, "truncated header"))?;
    let header = String::from_utf8_lossy(&bytes[..header_end]);

    let mut elements: Vec<Element> = Vec::new();
    for (lineno, line) in header.lines().enumerate() {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["ply"] | [] => {}
            ["format", fmt, ..] => {
                if *fmt != "binary_little_endian" {
                    return Err(MeshError::UnsupportedFormat(format!("ply {fmt}")));
                }
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| perr(lineno + 1, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", cnt, item, name] => {
                let (c, i) = Scalar::parse(cnt)
                    .zip(Scalar::parse(item))
                    .ok_or_else(|| perr(lineno + 1, "bad list property type"))?;
                elements
                    .last_mut()
                    .ok_or_else(|| perr(lineno + 1, "property before element"))?
                    .props
                    .push(Property::List(name.to_string(), c, i));
            }
            ["property", ty, name] => {
                let s = Scalar::parse(ty).ok_or_else(|| perr(lineno + 1, "bad property type"))?;
                elements
                    .last_mut()
                    .ok_or_else(|| perr(lineno + 1, "property before element"))?
                    .props
                    .push(Property::Scalar(name.to_string(), s));
            }
            _ => return Err(perr(lineno + 1, "unrecognized header line")),
        }
    }

    let mut cursor = body_start;
    let mut take = |n: usize| -> Result<&[u8], MeshError> {
        let s = bytes
            .get(cursor..cursor + n)
            .ok_or_else(|| perr(0, "truncated body"))?;
        cursor += n;
        Ok(s)
    };

    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let mut pos = [0.0f64; 3];
            let mut nrm = [0.0f64; 3];
            let mut has_normal = false;
            for prop in &el.props {
                match prop {
                    Property::Scalar(name, s) => {
                        let v = s.read(take(s.size())?);
                        match name.as_str() {
                            "x" => pos[0] = v,
                            "y" => pos[1] = v,
                            "z" => pos[2] = v,
                            "nx" => (nrm[0], has_normal) = (v, true),
                            "ny" => nrm[1] = v,
                            "nz" => nrm[2] = v,
                            _ => {}
                        }
                    }
                    Property::List(name, c, i) => {
                        let n = c.read(take(c.size())?) as usize;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            idx.push(i.read(take(i.size())?) as u32);
                        }
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            match idx.len() {
                                3 => triangles.push([idx[0], idx[1], idx[2]]),
                                4 => {
                                    triangles.push([idx[0], idx[1], idx[2]]);
                                    triangles.push([idx[0], idx[2], idx[3]]);
                                }
                                n => {
                                    return Err(perr(0, &format!("face with {n} vertices is not supported")))
                                }
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                vertices.push(Vec3::from(pos));
                if has_normal {
                    normals.push(Vec3::from(nrm));
                }
            }
        }
    }
    let mut mesh = TriMesh::new(vertices, triangles)?;
    if !normals.is_empty() && normals.len() == mesh.vertices.len() {
        mesh.normals = Some(normals);
    }
    Ok(mesh)
}

fn find_subslice(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

pub fn write_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for t in &mesh.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ply(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    )?;
    for v in &mesh.vertices {
        for c in [v.x, v.y, v.z] {
            w.write_all(&c.to_le_bytes())?;
        }
    }
    for t in &mesh.triangles {
        w.write_all(&[3u8])?;
        for &i in t {
            w.write_all(&(i as i32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE_OBJ: &str = "\
# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
";

    const CUBE_QUADS: &str = "\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 4 3 2
f 5 6 7 8
f 1 2 6 5
f 2 3 7 6
f 3 4 8 7
f 4 1 5 8
";

    #[test]
    fn cube_obj_counts() {
        let m = parse_obj(CUBE_OBJ).unwrap();
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.triangles.len(), 12);
        assert_eq!(m.boundary_edge_count(), 0);
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quads_are_fan_split() {
        let m = parse_obj(CUBE_QUADS).unwrap();
        assert_eq!(m.triangles.len(), 12);
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pentagon_is_rejected() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv -1 0 0\nf 1 2 3 4 5\n";
        assert!(matches!(parse_obj(text), Err(MeshError::ParseError { line: 6, .. })));
    }

    #[test]
    fn slashed_and_negative_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3/1/1 -2/2/2 -1//3\n";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn zero_byte_file_is_empty_mesh() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.obj");
        std::fs::write(&p, b"").unwrap();
        assert!(matches!(load_mesh(&p), Err(MeshError::EmptyMesh)));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_mesh("/definitely/not/here.obj"),
            Err(MeshError::FileNotFound(_))
        ));
    }

    #[test]
    fn ply_and_obj_roundtrip() {
        let m = parse_obj(CUBE_OBJ).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for name in ["c.ply", "c.obj"] {
            let p = dir.path().join(name);
            save_mesh(&m, &p).unwrap();
            let back = load_mesh(&p).unwrap();
            assert_eq!(back.triangles, m.triangles);
            assert_eq!(back.vertices, m.vertices);
        }
    }

    #[test]
    fn ply_with_float_vertices_and_extra_props() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\ncomment test\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n".to_vec();
        for (x, y, z) in [(0f32, 0f32, 0f32), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)] {
            bytes.extend(x.to_le_bytes());
            bytes.extend(y.to_le_bytes());
            bytes.extend(z.to_le_bytes());
            bytes.push(255);
        }
        bytes.push(3);
        for i in [0u32, 1, 2] {
            bytes.extend(i.to_le_bytes());
        }
        let m = parse_ply(&bytes).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
        assert_eq!(m.vertices[1], Vec3::x());
    }
}
