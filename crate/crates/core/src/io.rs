//! ASCII PLY meshes and grayscale PFM rasters.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::mesh::TriangleMesh;
use crate::render::DepthMap;

pub fn write_ply(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", mesh.vertices.len());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    let _ = writeln!(s, "element face {}", mesh.triangles.len());
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for p in &mesh.vertices {
        // `{:?}` prints the shortest round-tripping representation.
        let _ = writeln!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

struct Element {
    name: String,
    count: usize,
    /// Property names; list properties are recorded as `list:<name>`.
    props: Vec<String>,
}

pub fn read_ply(path: &Path) -> Result<TriangleMesh> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&text).map_err(|m| Error::parse(path, m))
}

pub fn parse_ply(text: &str) -> std::result::Result<TriangleMesh, String> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing 'ply' magic".into());
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut ascii = false;
    for line in lines.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "ascii", _] => ascii = true,
            ["format", other, _] => return Err(format!("unsupported PLY format '{other}'")),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| format!("bad element count '{count}'"))?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, name] => elements
                .last_mut()
                .ok_or("property before element")?
                .props
                .push(format!("list:{name}")),
            ["property", _, name] => elements
                .last_mut()
                .ok_or("property before element")?
                .props
                .push(name.to_string()),
            ["end_header"] => break,
            _ => return Err(format!("unexpected header line '{line}'")),
        }
    }
    if !ascii {
        return Err("missing format line".into());
    }
    let mut mesh = TriangleMesh::default();
    let mut body = lines.filter(|l| !l.trim().is_empty());
    for el in &elements {
        for row in 0..el.count {
            let line = body
                .next()
                .ok_or_else(|| format!("unexpected end of file in element '{}'", el.name))?;
            let mut tokens = line.split_whitespace();
            let mut next = |what: &str| {
                tokens
                    .next()
                    .ok_or_else(|| format!("{} {row}: missing {what}", el.name))
            };
            match el.name.as_str() {
                "vertex" => {
                    let mut xyz = [None; 3];
                    for prop in &el.props {
                        if let Some(list) = prop.strip_prefix("list:") {
                            let n: usize = next(list)?
                                .parse()
                                .map_err(|_| format!("vertex {row}: bad list length"))?;
                            for _ in 0..n {
                                next(list)?;
                            }
                            continue;
                        }
                        let tok = next(prop)?;
                        let slot = match prop.as_str() {
                            "x" => 0,
                            "y" => 1,
                            "z" => 2,
                            _ => continue,
                        };
                        let v: f64 = tok
                            .parse()
                            .map_err(|_| format!("vertex {row}: bad coordinate '{tok}'"))?;
                        if !v.is_finite() {
                            return Err(format!("vertex {row}: non-finite coordinate"));
                        }
                        xyz[slot] = Some(v);
                    }
                    match xyz {
                        [Some(x), Some(y), Some(z)] => mesh.vertices.push(Point3::new(x, y, z)),
                        _ => return Err("vertex element lacks x, y or z".into()),
                    }
                }
                "face" => {
                    let mut found = false;
                    for prop in &el.props {
                        let Some(list) = prop.strip_prefix("list:") else {
                            next(prop)?;
                            continue;
                        };
                        let n: usize = next(list)?
                            .parse()
                            .map_err(|_| format!("face {row}: bad list length"))?;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            let tok = next(list)?;
                            idx.push(
                                tok.parse::<u32>()
                                    .map_err(|_| format!("face {row}: bad index '{tok}'"))?,
                            );
                        }
                        if list == "vertex_indices" || list == "vertex_index" {
                            if n < 3 {
                                return Err(format!("face {row} has {n} vertices"));
                            }
                            for k in 1..n - 1 {
                                mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                            }
                            found = true;
                        }
                    }
                    if !found {
                        return Err("face element lacks vertex_indices".into());
                    }
                }
                _ => {}
            }
        }
    }
    if !mesh.indices_in_range() {
        return Err("face index out of range".into());
    }
    Ok(mesh)
}

/// Writes a grayscale little-endian PFM (rows stored bottom-up).
pub fn write_pfm(path: &Path, width: usize, height: usize, values: &[f32]) -> Result<()> {
    assert_eq!(values.len(), width * height);
    let mut bytes = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    bytes.reserve(values.len() * 4);
    for y in (0..height).rev() {
        for v in &values[y * width..(y + 1) * width] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a grayscale PFM into top-down row-major order.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pfm(&bytes).map_err(|m| Error::parse(path, m))
}

fn parse_pfm(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<f32>), String> {
    // Header: three whitespace-separated tokens, then one whitespace byte.
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if tokens[0] != "Pf" {
        return Err(format!(
            "expected grayscale 'Pf' magic, found '{}'",
            tokens[0]
        ));
    }
    let width: usize = tokens[1].parse().map_err(|_| "bad width".to_string())?;
    let height: usize = tokens[2].parse().map_err(|_| "bad height".to_string())?;
    let scale: f64 = tokens[3].parse().map_err(|_| "bad scale".to_string())?;
    let little = scale < 0.0;
    let need = width * height * 4;
    let data = bytes.get(pos..pos + need).ok_or("truncated raster")?;
    let mut values = vec![0f32; width * height];
    for (r, row) in data.chunks_exact(width * 4).enumerate() {
        let y = height - 1 - r;
        for (x, b) in row.chunks_exact(4).enumerate() {
            let b = [b[0], b[1], b[2], b[3]];
            values[y * width + x] = if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
        }
    }
    Ok((width, height, values))
}

/// Depth maps store invalid pixels as 0.
pub fn write_depth_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    let values: Vec<f32> = depth
        .depth
        .iter()
        .zip(&depth.valid)
        .map(|(&d, &ok)| if ok { d as f32 } else { 0.0 })
        .collect();
    write_pfm(path, depth.width, depth.height, &values)
}

pub fn read_depth_pfm(path: &Path) -> Result<DepthMap> {
    let (w, h, v) = read_pfm(path)?;
    Ok(DepthMap::from_depths(
        w,
        h,
        v.into_iter().map(f64::from).collect(),
    ))
}
