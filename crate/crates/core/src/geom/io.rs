//! Mesh I/O: Wavefront OBJ (with the common `v x y z r g b` color extension)
//! and PLY (binary little-endian written; binary-le and ascii read).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{TriangleMesh, Vec2, Vec3};

pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match extension(path).as_str() {
        "obj" => parse_obj(&String::from_utf8_lossy(&bytes)),
        "ply" => parse_ply(&bytes),
        other => Err(Error::Format(format!("unsupported mesh extension '{other}'"))),
    }
}

pub fn save_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let bytes = match extension(path).as_str() {
        "obj" => write_obj(mesh).into_bytes(),
        "ply" => write_ply(mesh),
        other => return Err(Error::Format(format!("unsupported mesh extension '{other}'"))),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

// ---------------------------------------------------------------- OBJ

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for (i, v) in mesh.vertices().iter().enumerate() {
        match mesh.colors() {
            Some(c) => {
                let c = c[i];
                writeln!(s, "v {} {} {} {} {} {}", v.x, v.y, v.z, c.x, c.y, c.z).unwrap()
            }
            None => writeln!(s, "v {} {} {}", v.x, v.y, v.z).unwrap(),
        }
    }
    if let Some(uvs) = mesh.uvs() {
        for t in uvs {
            writeln!(s, "vt {} {}", t.x, t.y).unwrap();
        }
    }
    if let Some(ns) = mesh.normals() {
        for n in ns {
            writeln!(s, "vn {} {} {}", n.x, n.y, n.z).unwrap();
        }
    }
    let (has_t, has_n) = (mesh.uvs().is_some(), mesh.normals().is_some());
    for f in mesh.faces() {
        s.push('f');
        for &i in f {
            let i = i + 1;
            match (has_t, has_n) {
                (false, false) => write!(s, " {i}").unwrap(),
                (true, false) => write!(s, " {i}/{i}").unwrap(),
                (false, true) => write!(s, " {i}//{i}").unwrap(),
                (true, true) => write!(s, " {i}/{i}/{i}").unwrap(),
            }
        }
        s.push('\n');
    }
    s
}

pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut pos = Vec::new();
    let mut cols: Vec<Vec3> = Vec::new();
    let mut tex = Vec::new();
    let mut nrm = Vec::new();
    let mut corners: Vec<[(usize, Option<usize>, Option<usize>); 3]> = Vec::new();
    let num = |tok: Option<&str>, line: usize| -> Result<f64> {
        tok.ok_or_else(|| Error::Format(format!("obj line {line}: missing value")))?
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("obj line {line}: {e}")))
    };
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut it = raw.split_whitespace();
        match it.next() {
            Some("v") => {
                let vals: Vec<&str> = it.collect();
                let p = Vec3::new(num(vals.first().copied(), line)?, num(vals.get(1).copied(), line)?, num(vals.get(2).copied(), line)?);
                pos.push(p);
                if vals.len() >= 6 {
                    cols.push(Vec3::new(num(Some(vals[3]), line)?, num(Some(vals[4]), line)?, num(Some(vals[5]), line)?));
                }
            }
            Some("vt") => tex.push(Vec2::new(num(it.next(), line)?, num(it.next(), line)?)),
            Some("vn") => nrm.push(Vec3::new(num(it.next(), line)?, num(it.next(), line)?, num(it.next(), line)?)),
            Some("f") => {
                let refs = it
                    .map(|tok| parse_face_ref(tok, pos.len(), tex.len(), nrm.len(), line))
                    .collect::<Result<Vec<_>>>()?;
                if refs.len() < 3 {
                    return Err(Error::Format(format!("obj line {line}: face with < 3 vertices")));
                }
                for k in 1..refs.len() - 1 {
                    corners.push([refs[0], refs[k], refs[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if !cols.is_empty() && cols.len() != pos.len() {
        return Err(Error::Format("obj: colors present on only some vertices".into()));
    }
    let has_t = !corners.is_empty() && corners.iter().flatten().all(|c| c.1.is_some());
    let has_n = !corners.is_empty() && corners.iter().flatten().all(|c| c.2.is_some());
    let direct = corners
        .iter()
        .flatten()
        .all(|c| (!has_t || c.1 == Some(c.0)) && (!has_n || c.2 == Some(c.0)));

    let (verts, colors, uvs, normals, faces) = if direct {
        let uvs = has_t.then(|| (0..pos.len()).map(|i| tex.get(i).copied().unwrap_or_default()).collect());
        let normals = has_n.then(|| (0..pos.len()).map(|i| nrm.get(i).copied().unwrap_or_else(Vec3::z)).collect());
        let faces = corners
            .iter()
            .map(|c| [c[0].0 as u32, c[1].0 as u32, c[2].0 as u32])
            .collect();
        (pos, (!cols.is_empty()).then_some(cols), uvs, normals, faces)
    } else {
        // split vertices on distinct (v, vt, vn) triples
        let mut map: HashMap<(usize, Option<usize>, Option<usize>), u32> = HashMap::new();
        let (mut v, mut c, mut t, mut n) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut faces = Vec::with_capacity(corners.len());
        for tri in &corners {
            let mut f = [0u32; 3];
            for (k, key) in tri.iter().enumerate() {
                let key = (key.0, if has_t { key.1 } else { None }, if has_n { key.2 } else { None });
                f[k] = *map.entry(key).or_insert_with(|| {
                    v.push(pos[key.0]);
                    if !cols.is_empty() {
                        c.push(cols[key.0]);
                    }
                    if let Some(ti) = key.1 {
                        t.push(tex[ti]);
                    }
                    if let Some(ni) = key.2 {
                        n.push(nrm[ni]);
                    }
                    (v.len() - 1) as u32
                });
            }
            faces.push(f);
        }
        (v, (!c.is_empty()).then_some(c), has_t.then_some(t), has_n.then_some(n), faces)
    };
    let mut mesh = TriangleMesh::new(verts, faces)?;
    if let Some(c) = colors {
        mesh = mesh.with_colors(c)?;
    }
    if let Some(t) = uvs {
        mesh = mesh.with_uvs(t)?;
    }
    if let Some(n) = normals {
        let n = n.into_iter().map(|n: Vec3| if n.norm() > 0.0 { n.normalize() } else { Vec3::z() }).collect();
        mesh = mesh.with_normals(n)?;
    }
    Ok(mesh)
}

fn parse_face_ref(
    tok: &str,
    nv: usize,
    nt: usize,
    nn: usize,
    line: usize,
) -> Result<(usize, Option<usize>, Option<usize>)> {
    let resolve = |s: &str, count: usize| -> Result<usize> {
        let i: i64 = s
            .parse()
            .map_err(|e| Error::Format(format!("obj line {line}: bad index '{s}': {e}")))?;
        let idx = if i < 0 { count as i64 + i } else { i - 1 };
        if idx < 0 || idx as usize >= count {
            return Err(Error::Format(format!("obj line {line}: index {i} out of range")));
        }
        Ok(idx as usize)
    };
    let mut parts = tok.split('/');
    let v = resolve(parts.next().unwrap_or(""), nv)?;
    let t = match parts.next() {
        Some(s) if !s.is_empty() => Some(resolve(s, nt)?),
        _ => None,
    };
    let n = match parts.next() {
        Some(s) if !s.is_empty() => Some(resolve(s, nn)?),
        _ => None,
    };
    Ok((v, t, n))
}

// ---------------------------------------------------------------- PLY

pub fn write_ply(mesh: &TriangleMesh) -> Vec<u8> {
    let mut h = String::from("ply\nformat binary_little_endian 1.0\n");
    writeln!(h, "element vertex {}", mesh.vertices().len()).unwrap();
    h.push_str("property float x\nproperty float y\nproperty float z\n");
    if mesh.normals().is_some() {
        h.push_str("property float nx\nproperty float ny\nproperty float nz\n");
    }
    if mesh.colors().is_some() {
        h.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    if mesh.uvs().is_some() {
        h.push_str("property float u\nproperty float v\n");
    }
    writeln!(h, "element face {}", mesh.faces().len()).unwrap();
    h.push_str("property list uchar int vertex_indices\nend_header\n");
    let mut out = h.into_bytes();
    for i in 0..mesh.vertices().len() {
        let p = mesh.vertices()[i];
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        if let Some(ns) = mesh.normals() {
            for c in ns[i].iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        if let Some(cs) = mesh.colors() {
            for c in cs[i].iter() {
                out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        if let Some(ts) = mesh.uvs() {
            for c in ts[i].iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
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
            other => return Err(Error::Format(format!("ply: unknown scalar type '{other}'"))),
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
}

#[derive(Debug)]
struct Property {
    name: String,
    ty: Scalar,
    list_count: Option<Scalar>,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Pulls scalars from either a binary little-endian or ascii body.
enum Body<'a> {
    Binary { data: &'a [u8], pos: usize },
    Ascii(std::str::SplitWhitespace<'a>),
}

impl Body<'_> {
    fn read(&mut self, ty: Scalar) -> Result<f64> {
        match self {
            Body::Binary { data, pos } => {
                let n = ty.size();
                let b = data
                    .get(*pos..*pos + n)
                    .ok_or_else(|| Error::Format("ply: truncated body".into()))?;
                *pos += n;
                Ok(match ty {
                    Scalar::I8 => b[0] as i8 as f64,
                    Scalar::U8 => b[0] as f64,
                    Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
                    Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
                    Scalar::I32 => i32::from_le_bytes(b.try_into().unwrap()) as f64,
                    Scalar::U32 => u32::from_le_bytes(b.try_into().unwrap()) as f64,
                    Scalar::F32 => f32::from_le_bytes(b.try_into().unwrap()) as f64,
                    Scalar::F64 => f64::from_le_bytes(b.try_into().unwrap()),
                })
            }
            Body::Ascii(it) => it
                .next()
                .ok_or_else(|| Error::Format("ply: truncated body".into()))?
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("ply: {e}"))),
        }
    }
}

pub fn parse_ply(bytes: &[u8]) -> Result<TriangleMesh> {
    const END: &[u8] = b"end_header";
    let hdr_end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::Format("ply: missing end_header".into()))?;
    let mut body_start = hdr_end + END.len();
    while body_start < bytes.len() && bytes[body_start] != b'\n' {
        body_start += 1;
    }
    body_start += 1;
    let header = std::str::from_utf8(&bytes[..hdr_end])
        .map_err(|_| Error::Format("ply: header is not utf-8".into()))?;
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Format("ply: bad magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", f, _] => format = Some(f.to_string()),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::Format(format!("ply: bad element count '{count}'")))?,
                props: Vec::new(),
            }),
            ["property", "list", cnt, ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Format("ply: property before element".into()))?
                .props
                .push(Property {
                    name: name.to_string(),
                    ty: Scalar::parse(ty)?,
                    list_count: Some(Scalar::parse(cnt)?),
                }),
            ["property", ty, name] => elements
                .last_mut()
                .ok_or_else(|| Error::Format("ply: property before element".into()))?
                .props
                .push(Property {
                    name: name.to_string(),
                    ty: Scalar::parse(ty)?,
                    list_count: None,
                }),
            _ => {}
        }
    }
    let mut body = match format.as_deref() {
        Some("binary_little_endian") => Body::Binary {
            data: &bytes[body_start.min(bytes.len())..],
            pos: 0,
        },
        Some("ascii") => Body::Ascii(
            std::str::from_utf8(&bytes[body_start.min(bytes.len())..])
                .map_err(|_| Error::Format("ply: ascii body is not utf-8".into()))?
                .split_whitespace(),
        ),
        other => return Err(Error::Format(format!("ply: unsupported format {other:?}"))),
    };

    let mut verts = Vec::new();
    let mut normals = Vec::new();
    let mut colors = Vec::new();
    let mut uvs = Vec::new();
    let mut faces = Vec::new();
    let mut flags = (false, false, false);
    for el in &elements {
        let col = |name: &str| el.props.iter().position(|p| p.name == name);
        let (ix, iy, iz) = (col("x"), col("y"), col("z"));
        let inn = [col("nx"), col("ny"), col("nz")];
        let icol = [col("red"), col("green"), col("blue")];
        let iuv = [
            col("u").or(col("s")).or(col("texture_u")),
            col("v").or(col("t")).or(col("texture_v")),
        ];
        let has_n = inn.iter().all(Option::is_some);
        let has_c = icol.iter().all(Option::is_some);
        let has_t = iuv.iter().all(Option::is_some);
        if el.name == "vertex" {
            flags = (has_n, has_c, has_t);
        }
        let color_scale = icol[0]
            .map(|i| match el.props[i].ty {
                Scalar::F32 | Scalar::F64 => 1.0,
                Scalar::U16 => 1.0 / 65535.0,
                _ => 1.0 / 255.0,
            })
            .unwrap_or(1.0);
        for _ in 0..el.count {
            let mut scalars = Vec::with_capacity(el.props.len());
            let mut list: Vec<u32> = Vec::new();
            for p in &el.props {
                match p.list_count {
                    Some(ct) => {
                        let n = body.read(ct)? as usize;
                        let mut vals = Vec::with_capacity(n);
                        for _ in 0..n {
                            vals.push(body.read(p.ty)? as u32);
                        }
                        if p.name == "vertex_indices" || p.name == "vertex_index" {
                            list = vals;
                        }
                        scalars.push(0.0);
                    }
                    None => scalars.push(body.read(p.ty)?),
                }
            }
            match el.name.as_str() {
                "vertex" => {
                    let (x, y, z) = match (ix, iy, iz) {
                        (Some(a), Some(b), Some(c)) => (scalars[a], scalars[b], scalars[c]),
                        _ => return Err(Error::Format("ply: vertex lacks x/y/z".into())),
                    };
                    verts.push(Vec3::new(x, y, z));
                    if has_n {
                        normals.push(Vec3::new(scalars[inn[0].unwrap()], scalars[inn[1].unwrap()], scalars[inn[2].unwrap()]));
                    }
                    if has_c {
                        colors.push(Vec3::new(
                            scalars[icol[0].unwrap()],
                            scalars[icol[1].unwrap()],
                            scalars[icol[2].unwrap()],
                        ) * color_scale);
                    }
                    if has_t {
                        uvs.push(Vec2::new(scalars[iuv[0].unwrap()], scalars[iuv[1].unwrap()]));
                    }
                }
                "face" => {
                    if list.len() < 3 {
                        return Err(Error::Format("ply: face with < 3 vertices".into()));
                    }
                    for k in 1..list.len() - 1 {
                        faces.push([list[0], list[k], list[k + 1]]);
                    }
                }
                _ => {}
            }
        }
    }
    let mut mesh = TriangleMesh::new(verts, faces)?;
    if flags.0 {
        let n = normals
            .into_iter()
            .map(|n: Vec3| if n.norm() > 0.0 { n.normalize() } else { Vec3::z() })
            .collect();
        mesh = mesh.with_normals(n)?;
    }
    if flags.1 {
        mesh = mesh.with_colors(colors)?;
    }
    if flags.2 {
        mesh = mesh.with_uvs(uvs)?;
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::shapes;

    fn decorated() -> TriangleMesh {
        let m = shapes::icosphere(0.5, 1);
        let n = m.compute_vertex_normals();
        let c: Vec<Vec3> = m.vertices().iter().map(|v| v.map(|x| (x + 0.5).clamp(0.0, 1.0))).collect();
        let t = shapes::spherical_uvs(&m);
        m.with_normals(n).unwrap().with_colors(c).unwrap().with_uvs(t).unwrap()
    }

    #[test]
    fn ply_round_trip_preserves_attributes() {
        let m = decorated();
        let back = parse_ply(&write_ply(&m)).unwrap();
        assert_eq!(back.faces(), m.faces());
        assert!(back.colors().is_some() && back.normals().is_some() && back.uvs().is_some());
        for (a, b) in back.vertices().iter().zip(m.vertices()) {
            assert!((a - b).norm() < 1e-6);
        }
        for (a, b) in back.colors().unwrap().iter().zip(m.colors().unwrap()) {
            assert!((a - b).amax() <= 0.5 / 255.0 + 1e-9);
        }
        let bare = parse_ply(&write_ply(&shapes::unit_cube(1.0))).unwrap();
        assert!(bare.colors().is_none() && bare.normals().is_none() && bare.uvs().is_none());
    }

    #[test]
    fn obj_round_trip_preserves_attributes() {
        let m = decorated();
        let back = parse_obj(&write_obj(&m)).unwrap();
        assert_eq!(back.faces(), m.faces());
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.colors(), m.colors());
        assert_eq!(back.uvs(), m.uvs());
        let only_color = parse_obj(&write_obj(&shapes::unit_cube(1.0).with_colors(vec![Vec3::x(); 8]).unwrap())).unwrap();
        assert!(only_color.colors().is_some() && only_color.uvs().is_none() && only_color.normals().is_none());
    }

    #[test]
    fn obj_splits_vertices_on_distinct_uvs() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nvt 0.5 0.5\nf 1/1 2/2 3/3\nf 1/4 3/3 2/2\n";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.uvs().unwrap().len(), 4);
    }

    #[test]
    fn ascii_ply_and_quads() {
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let m = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(m.faces().len(), 2);
    }
}
