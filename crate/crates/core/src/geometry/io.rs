//! PLY (ASCII and binary little-endian) and OBJ mesh input; PLY output.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Mesh, Point3, PointCloud};
use crate::error::{Error, Result};

/// Loads a mesh, choosing the parser from the file extension.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("ply") => read_ply(&bytes),
        Some("obj") => read_obj(std::str::from_utf8(&bytes).map_err(|e| Error::format("obj", e.to_string()))?),
        other => Err(Error::format(
            "mesh",
            format!("unsupported extension {other:?} (expected .ply or .obj)"),
        )),
    }
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
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            other => return Err(Error::format("ply", format!("unknown scalar type `{other}`"))),
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug)]
enum Property {
    Single { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

fn ply_err(reason: impl Into<String>) -> Error {
    Error::format("ply", reason)
}

/// Parses a PLY file from memory.
pub fn read_ply(bytes: &[u8]) -> Result<Mesh> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| ply_err("missing end_header"))?;
    let mut body_start = end + END.len();
    // Header line terminator: "\n" or "\r\n".
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..end]).map_err(|e| ply_err(e.to_string()))?;
    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(ply_err("missing magic `ply`"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["format", fmt, _version] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    other => return Err(ply_err(format!("unsupported format `{other}`"))),
                })
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| ply_err(format!("bad element count `{count}`")))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => elements
                .last_mut()
                .ok_or_else(|| ply_err("property before element"))?
                .properties
                .push(Property::List {
                    name: name.to_string(),
                    count: Scalar::parse(count)?,
                    item: Scalar::parse(item)?,
                }),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| ply_err("property before element"))?
                .properties
                .push(Property::Single {
                    name: name.to_string(),
                    ty: Scalar::parse(ty)?,
                }),
            _ => return Err(ply_err(format!("unrecognised header line `{line}`"))),
        }
    }
    let encoding = encoding.ok_or_else(|| ply_err("missing format line"))?;
    let body = &bytes[body_start..];

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut reader = BodyReader::new(body, &encoding)?;
    for el in &elements {
        let xyz = if el.name == "vertex" {
            let find = |n: &str| {
                el.properties.iter().position(|p| matches!(p, Property::Single { name, .. } if name == n))
            };
            match (find("x"), find("y"), find("z")) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => return Err(ply_err("vertex element lacks x/y/z")),
            }
        } else {
            None
        };
        let face_prop = if el.name == "face" {
            Some(
                el.properties
                    .iter()
                    .position(|p| {
                        matches!(p, Property::List { name, .. } if name == "vertex_indices" || name == "vertex_index")
                    })
                    .ok_or_else(|| ply_err("face element lacks vertex_indices"))?,
            )
        } else {
            None
        };
        for _ in 0..el.count {
            let mut scalars = [0.0f64; 3];
            let mut polygon: Vec<usize> = Vec::new();
            for (pi, prop) in el.properties.iter().enumerate() {
                match prop {
                    Property::Single { ty, .. } => {
                        let v = reader.scalar(*ty)?;
                        if let Some(xyz) = xyz {
                            if let Some(slot) = xyz.iter().position(|&i| i == pi) {
                                scalars[slot] = v;
                            }
                        }
                    }
                    Property::List { count, item, .. } => {
                        let n = reader.scalar(*count)?;
                        if n < 0.0 || n.fract() != 0.0 {
                            return Err(ply_err("invalid list length"));
                        }
                        for _ in 0..n as usize {
                            let v = reader.scalar(*item)?;
                            if face_prop == Some(pi) {
                                if v < 0.0 || v.fract() != 0.0 {
                                    return Err(ply_err(format!("invalid vertex index {v}")));
                                }
                                polygon.push(v as usize);
                            }
                        }
                    }
                }
            }
            reader.end_row()?;
            if xyz.is_some() {
                vertices.push(Point3::new(scalars[0], scalars[1], scalars[2]));
            }
            if face_prop.is_some() {
                fan_triangulate(&polygon, &mut faces)?;
            }
        }
    }
    Mesh::new(vertices, faces)
}

fn fan_triangulate(polygon: &[usize], faces: &mut Vec<[usize; 3]>) -> Result<()> {
    if polygon.len() < 3 {
        return Err(Error::format("mesh", format!("face with {} vertices", polygon.len())));
    }
    for i in 1..polygon.len() - 1 {
        faces.push([polygon[0], polygon[i], polygon[i + 1]]);
    }
    Ok(())
}

enum BodyReader<'a> {
    Ascii {
        lines: std::str::Lines<'a>,
        current: std::vec::IntoIter<&'a str>,
    },
    Binary {
        bytes: &'a [u8],
        pos: usize,
    },
}

impl<'a> BodyReader<'a> {
    fn new(body: &'a [u8], encoding: &Encoding) -> Result<Self> {
        Ok(match encoding {
            Encoding::Ascii => BodyReader::Ascii {
                lines: std::str::from_utf8(body)
                    .map_err(|e| ply_err(e.to_string()))?
                    .lines(),
                current: Vec::new().into_iter(),
            },
            Encoding::BinaryLe => BodyReader::Binary { bytes: body, pos: 0 },
        })
    }

    fn scalar(&mut self, ty: Scalar) -> Result<f64> {
        match self {
            BodyReader::Ascii { lines, current } => loop {
                if let Some(tok) = current.next() {
                    return tok
                        .parse::<f64>()
                        .map_err(|_| ply_err(format!("bad number `{tok}`")));
                }
                let line = lines.next().ok_or_else(|| ply_err("unexpected end of data"))?;
                *current = line.split_whitespace().collect::<Vec<_>>().into_iter();
            },
            BodyReader::Binary { bytes, pos } => {
                let n = ty.size();
                let slice = bytes
                    .get(*pos..*pos + n)
                    .ok_or_else(|| ply_err("unexpected end of binary data"))?;
                *pos += n;
                Ok(ty.read_le(slice))
            }
        }
    }

    fn end_row(&mut self) -> Result<()> {
        if let BodyReader::Ascii { current, .. } = self {
            if current.next().is_some() {
                return Err(ply_err("trailing values on element row"));
            }
        }
        Ok(())
    }
}

/// Parses Wavefront OBJ text; polygons are fan-triangulated.
pub fn read_obj(text: &str) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let c: Vec<f64> = toks
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::format("obj", format!("line {}: {e}", lineno + 1)))?;
                if c.len() != 3 {
                    return Err(Error::format("obj", format!("line {}: vertex needs 3 coordinates", lineno + 1)));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut polygon = Vec::new();
                for tok in toks {
                    let idx_str = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str
                        .parse()
                        .map_err(|_| Error::format("obj", format!("line {}: bad index `{tok}`", lineno + 1)))?;
                    let resolved = if idx > 0 {
                        (idx - 1) as usize
                    } else if idx < 0 && (-idx) as usize <= vertices.len() {
                        vertices.len() - (-idx) as usize
                    } else {
                        return Err(Error::format("obj", format!("line {}: invalid index {idx}", lineno + 1)));
                    };
                    polygon.push(resolved);
                }
                fan_triangulate(&polygon, &mut faces)?;
            }
            _ => {}
        }
    }
    Mesh::new(vertices, faces)
}

fn ply_header(out: &mut Vec<u8>, vertices: usize, faces: Option<usize>) {
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {vertices}\n").as_bytes());
    out.extend_from_slice(b"property double x\nproperty double y\nproperty double z\n");
    if let Some(f) = faces {
        out.extend_from_slice(format!("element face {f}\n").as_bytes());
        out.extend_from_slice(b"property list uchar int vertex_indices\n");
    }
    out.extend_from_slice(b"end_header\n");
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Binary little-endian PLY containing only vertices.
pub fn write_ply_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let mut out = Vec::new();
    ply_header(&mut out, cloud.len(), None);
    for p in cloud.points() {
        for c in p.coords.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    write_bytes(path.as_ref(), &out)
}

/// Binary little-endian PLY with vertices and triangle faces.
pub fn write_ply_mesh(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    let mut out = Vec::new();
    ply_header(&mut out, mesh.vertex_count(), Some(mesh.faces().len()));
    for p in mesh.vertices() {
        for c in p.coords.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in mesh.faces() {
        out.push(3u8);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    write_bytes(path.as_ref(), &out)
}
