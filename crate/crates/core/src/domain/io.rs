//! ASCII OFF, PLY and OBJ readers and writers.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::format::{fmt_sig9, write_atomic};
use crate::scalar::Real;

use super::{Mesh, PointCloud};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeFormat {
    Off,
    PlyAscii,
    Obj,
}

impl ShapeFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        match ext.as_str() {
            "off" => Ok(ShapeFormat::Off),
            "ply" => Ok(ShapeFormat::PlyAscii),
            "obj" => Ok(ShapeFormat::Obj),
            other => Err(Error::UnsupportedFormat(format!("extension `{other}` of {}", path.display()))),
        }
    }
}

impl FromStr for ShapeFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(ShapeFormat::Off),
            "ply" | "ply-ascii" => Ok(ShapeFormat::PlyAscii),
            "obj" => Ok(ShapeFormat::Obj),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Reads a mesh (3-D) from disk. Points keep file order; faces may be empty.
pub fn load_shape<T: Real>(path: &Path, format: ShapeFormat) -> Result<Mesh<T>> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = match String::from_utf8(text) {
        Ok(t) => t,
        Err(_) if format == ShapeFormat::PlyAscii => {
            return Err(Error::UnsupportedFormat(format!("{}: binary PLY", path.display())))
        }
        Err(_) => return Err(Error::parse(path, 1, "file is not valid UTF-8 text")),
    };
    let mesh = match format {
        ShapeFormat::Off => parse_off(path, &text),
        ShapeFormat::PlyAscii => parse_ply(path, &text),
        ShapeFormat::Obj => parse_obj(path, &text),
    }?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
    Ok(Mesh { cloud: mesh.cloud.with_id(id), faces: mesh.faces })
}

/// Writes a mesh with 9 significant digits per coordinate. 2-D clouds are
/// written with a zero third coordinate.
pub fn write_shape<T: Real>(path: &Path, format: ShapeFormat, mesh: &Mesh<T>) -> Result<()> {
    let text = match format {
        ShapeFormat::Off => format_off(mesh),
        ShapeFormat::PlyAscii => format_ply(mesh),
        ShapeFormat::Obj => format_obj(mesh),
    };
    write_atomic(path, text.as_bytes())
}

fn padded<T: Real>(p: &[T]) -> [f64; 3] {
    [p[0].as_f64(), p[1].as_f64(), p.get(2).map_or(0.0, |z| z.as_f64())]
}

fn format_off<T: Real>(mesh: &Mesh<T>) -> String {
    let c = &mesh.cloud;
    let mut s = String::new();
    s.push_str(if c.has_normals() { "NOFF\n" } else { "OFF\n" });
    let _ = writeln!(s, "{} {} 0", c.len(), mesh.faces.len());
    for i in 0..c.len() {
        let p = padded(c.point(i));
        let _ = write!(s, "{} {} {}", fmt_sig9(p[0]), fmt_sig9(p[1]), fmt_sig9(p[2]));
        if let Some(n) = c.normal(i) {
            let n = padded(n);
            let _ = write!(s, " {} {} {}", fmt_sig9(n[0]), fmt_sig9(n[1]), fmt_sig9(n[2]));
        }
        s.push('\n');
    }
    for f in &mesh.faces {
        let _ = write!(s, "{}", f.len());
        for v in f {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}

fn format_ply<T: Real>(mesh: &Mesh<T>) -> String {
    let c = &mesh.cloud;
    let mut s = String::from("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", c.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if c.has_normals() {
        s.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    let _ = writeln!(s, "element face {}", mesh.faces.len());
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for i in 0..c.len() {
        let p = padded(c.point(i));
        let _ = write!(s, "{} {} {}", fmt_sig9(p[0]), fmt_sig9(p[1]), fmt_sig9(p[2]));
        if let Some(n) = c.normal(i) {
            let n = padded(n);
            let _ = write!(s, " {} {} {}", fmt_sig9(n[0]), fmt_sig9(n[1]), fmt_sig9(n[2]));
        }
        s.push('\n');
    }
    for f in &mesh.faces {
        let _ = write!(s, "{}", f.len());
        for v in f {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}

fn format_obj<T: Real>(mesh: &Mesh<T>) -> String {
    let c = &mesh.cloud;
    let mut s = String::new();
    for p in c.points() {
        let p = padded(p);
        let _ = writeln!(s, "v {} {} {}", fmt_sig9(p[0]), fmt_sig9(p[1]), fmt_sig9(p[2]));
    }
    if let Some(ns) = c.normals() {
        for n in ns.chunks_exact(c.dim()) {
            let n = padded(n);
            let _ = writeln!(s, "vn {} {} {}", fmt_sig9(n[0]), fmt_sig9(n[1]), fmt_sig9(n[2]));
        }
    }
    for f in &mesh.faces {
        s.push(if f.len() == 2 { 'l' } else { 'f' });
        for v in f {
            let _ = write!(s, " {}", v + 1);
        }
        s.push('\n');
    }
    s
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn num<T: Real>(path: &Path, line: usize, tok: Option<&str>) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::parse(path, line, "missing value"))?;
    let v: f64 = tok.parse().map_err(|_| Error::parse(path, line, format!("`{tok}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite value `{tok}`")));
    }
    Ok(T::lit(v))
}

fn count(path: &Path, line: usize, tok: Option<&str>) -> Result<usize> {
    let tok = tok.ok_or_else(|| Error::parse(path, line, "missing count"))?;
    tok.parse().map_err(|_| Error::parse(path, line, format!("`{tok}` is not a nonnegative integer")))
}

fn finish<T: Real>(
    path: &Path,
    coords: Vec<T>,
    normals: Option<Vec<T>>,
    faces: Vec<(usize, Vec<usize>)>,
) -> Result<Mesh<T>> {
    let n = coords.len() / 3;
    if n == 0 {
        return Err(Error::parse(path, 1, "no vertices"));
    }
    for (line, f) in &faces {
        if let Some(&bad) = f.iter().find(|&&v| v >= n) {
            return Err(Error::parse(path, *line, format!("face references vertex {bad} but only {n} exist")));
        }
    }
    let cloud = match normals {
        Some(ns) => PointCloud::new(3, coords, None)?.with_normals(ns),
        None => PointCloud::new(3, coords, None),
    }
    .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    let line_of_first = faces.first().map_or(1, |f| f.0);
    Mesh::new(cloud, faces.into_iter().map(|f| f.1).collect()).map_err(|e| Error::parse(path, line_of_first, e.to_string()))
}

fn parse_off<T: Real>(path: &Path, text: &str) -> Result<Mesh<T>> {
    let mut lines = content_lines(text);
    let (hl, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let mut head = header.split_whitespace();
    let magic = head.next().unwrap_or("");
    let with_normals = match magic {
        "OFF" => false,
        "NOFF" => true,
        m if m.ends_with("OFF") => return Err(Error::UnsupportedFormat(format!("{m} variant of OFF"))),
        _ => return Err(Error::parse(path, hl, "missing OFF header")),
    };
    // Counts may follow the keyword on the same line.
    let rest: Vec<&str> = head.collect();
    let (cl, counts) = if rest.is_empty() {
        let (l, c) = lines.next().ok_or_else(|| Error::parse(path, hl, "missing counts"))?;
        (l, c.split_whitespace().collect::<Vec<_>>())
    } else {
        (hl, rest)
    };
    let nv = count(path, cl, counts.first().copied())?;
    let nf = count(path, cl, counts.get(1).copied())?;

    let mut coords = Vec::with_capacity(nv * 3);
    let mut normals = with_normals.then(|| Vec::with_capacity(nv * 3));
    for _ in 0..nv {
        let (l, rec) = lines.next().ok_or_else(|| Error::parse(path, cl, "fewer vertex records than declared"))?;
        let mut toks = rec.split_whitespace();
        for _ in 0..3 {
            coords.push(num(path, l, toks.next())?);
        }
        if let Some(ns) = normals.as_mut() {
            for _ in 0..3 {
                ns.push(num(path, l, toks.next())?);
            }
        }
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, rec) = lines.next().ok_or_else(|| Error::parse(path, cl, "fewer face records than declared"))?;
        let mut toks = rec.split_whitespace();
        let k = count(path, l, toks.next())?;
        let f = (0..k).map(|_| count(path, l, toks.next())).collect::<Result<Vec<_>>>()?;
        faces.push((l, f));
    }
    finish(path, coords, normals, faces)
}

fn parse_ply<T: Real>(path: &Path, text: &str) -> Result<Mesh<T>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(path, 1, "missing `ply` magic")),
    }
    let mut nv = 0;
    let mut nf = 0;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current: Option<String> = None;
    let mut header_end = 0;
    for (l, line) in lines.by_ref() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(Error::UnsupportedFormat(format!("PLY format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, n] => {
                let n = count(path, l, Some(n))?;
                match *name {
                    "vertex" => nv = n,
                    "face" => nf = n,
                    _ if n == 0 => {}
                    other => return Err(Error::UnsupportedFormat(format!("PLY element `{other}`"))),
                }
                current = Some(name.to_string());
            }
            ["property", "list", _, _, _] => {}
            ["property", _, name] => {
                if current.as_deref() == Some("vertex") {
                    vertex_props.push(name.to_string());
                }
            }
            ["end_header"] => {
                header_end = l;
                break;
            }
            _ => return Err(Error::parse(path, l, format!("unrecognized header line `{line}`"))),
        }
    }
    if header_end == 0 {
        return Err(Error::parse(path, 1, "missing end_header"));
    }
    let col = |name: &str| vertex_props.iter().position(|p| p == name);
    let (xi, yi, zi) = match (col("x"), col("y"), col("z")) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::parse(path, header_end, "vertex element lacks x/y/z")),
    };
    let normal_cols = match (col("nx"), col("ny"), col("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };

    let mut coords = Vec::with_capacity(nv * 3);
    let mut normals = normal_cols.map(|_| Vec::with_capacity(nv * 3));
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    for _ in 0..nv {
        let (l, rec) = body.next().ok_or_else(|| Error::parse(path, header_end, "fewer vertex records than declared"))?;
        let toks: Vec<&str> = rec.split_whitespace().collect();
        if toks.len() < vertex_props.len() {
            return Err(Error::parse(path, l, "short vertex record"));
        }
        for c in [xi, yi, zi] {
            coords.push(num(path, l, Some(toks[c]))?);
        }
        if let (Some(ns), Some(cols)) = (normals.as_mut(), normal_cols) {
            for c in cols {
                ns.push(num(path, l, Some(toks[c]))?);
            }
        }
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, rec) = body.next().ok_or_else(|| Error::parse(path, header_end, "fewer face records than declared"))?;
        let mut toks = rec.split_whitespace();
        let k = count(path, l, toks.next())?;
        let f = (0..k).map(|_| count(path, l, toks.next())).collect::<Result<Vec<_>>>()?;
        faces.push((l, f));
    }
    finish(path, coords, normals, faces)
}

fn parse_obj<T: Real>(path: &Path, text: &str) -> Result<Mesh<T>> {
    let mut coords: Vec<T> = Vec::new();
    let mut vn: Vec<T> = Vec::new();
    let mut faces = Vec::new();
    for (l, line) in content_lines(text) {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                for _ in 0..3 {
                    coords.push(num(path, l, toks.next())?);
                }
            }
            Some("vn") => {
                for _ in 0..3 {
                    vn.push(num(path, l, toks.next())?);
                }
            }
            Some(kind @ ("f" | "l")) => {
                let nverts = coords.len() / 3;
                let mut f = Vec::new();
                for tok in toks {
                    let first = tok.split('/').next().unwrap_or("");
                    let idx: i64 =
                        first.parse().map_err(|_| Error::parse(path, l, format!("bad vertex reference `{tok}`")))?;
                    let resolved = match idx {
                        0 => return Err(Error::parse(path, l, "vertex index 0 is invalid in OBJ")),
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = (-i) as usize;
                            if back > nverts {
                                return Err(Error::parse(path, l, format!("relative index {i} out of range")));
                            }
                            nverts - back
                        }
                    };
                    f.push(resolved);
                }
                let min = if kind == "f" { 3 } else { 2 };
                if f.len() < min {
                    return Err(Error::parse(path, l, format!("`{kind}` record with {} vertices", f.len())));
                }
                if kind == "l" {
                    for w in f.windows(2) {
                        faces.push((l, w.to_vec()));
                    }
                } else {
                    faces.push((l, f));
                }
            }
            _ => {}
        }
    }
    // Per-vertex normals only when they pair one-to-one with the vertices.
    let normals = (!vn.is_empty() && vn.len() == coords.len()).then_some(vn);
    finish(path, coords, normals, faces)
}
