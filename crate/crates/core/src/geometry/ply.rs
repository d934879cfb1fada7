//! ASCII PLY reading and writing.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Point3;

use super::mesh::TriMesh;
use super::GeometryError;

pub fn write_ply<W: Write>(mesh: &TriMesh, mut w: W) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "comment category {}", mesh.category_id)?;
    writeln!(w, "comment units mm")?;
    writeln!(w, "element vertex {}", mesh.vertices.len())?;
    writeln!(w, "property float x")?;
    writeln!(w, "property float y")?;
    writeln!(w, "property float z")?;
    writeln!(w, "element face {}", mesh.triangles.len())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    for v in &mesh.vertices {
        writeln!(w, "{:.6} {:.6} {:.6}", v.x, v.y, v.z)?;
    }
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    w.flush()
}

pub fn export_ply(mesh: &TriMesh, path: &Path) -> Result<(), GeometryError> {
    let f = std::fs::File::create(path)?;
    write_ply(mesh, BufWriter::new(f))?;
    Ok(())
}

pub fn import_ply(path: &Path) -> Result<TriMesh, GeometryError> {
    let f = std::fs::File::open(path)?;
    read_ply(BufReader::new(f))
}

/// Reads an ASCII PLY with x/y/z vertex properties (extra properties are
/// skipped) and triangular faces.
pub fn read_ply<R: BufRead>(r: R) -> Result<TriMesh, GeometryError> {
    let err = |line: usize, message: &str| GeometryError::Ply { line, message: message.to_string() };
    let mut lines = r.lines().enumerate();
    let mut next_line = || -> Result<Option<(usize, String)>, GeometryError> {
        match lines.next() {
            Some((i, l)) => Ok(Some((i + 1, l?))),
            None => Ok(None),
        }
    };

    match next_line()? {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(err(1, "missing `ply` magic")),
    }
    let mut category_id = 0u32;
    let mut n_vertices = 0usize;
    let mut n_faces = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current_element = String::new();
    loop {
        let Some((ln, line)) = next_line()? else {
            return Err(err(0, "unterminated header"));
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", fmt, ..] if *fmt != "ascii" => return Err(err(ln, "only ASCII PLY is supported")),
            ["comment", "category", id] => {
                category_id = id.parse().map_err(|_| err(ln, "bad category comment"))?
            }
            ["element", name, count] => {
                let count: usize = count.parse().map_err(|_| err(ln, "bad element count"))?;
                match *name {
                    "vertex" => n_vertices = count,
                    "face" => n_faces = count,
                    _ => {}
                }
                current_element = name.to_string();
            }
            ["property", .., name] if current_element == "vertex" => {
                vertex_props.push(name.to_string())
            }
            ["end_header"] => break,
            _ => {}
        }
    }
    let idx = |name: &str| vertex_props.iter().position(|p| p == name);
    let (Some(ix), Some(iy), Some(iz)) = (idx("x"), idx("y"), idx("z")) else {
        return Err(err(0, "vertex element lacks x/y/z"));
    };

    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let (ln, line) = next_line()?.ok_or_else(|| err(0, "truncated vertex list"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| err(ln, "bad vertex value"))?;
        if vals.len() < vertex_props.len() {
            return Err(err(ln, "short vertex line"));
        }
        vertices.push(Point3::new(vals[ix], vals[iy], vals[iz]));
    }
    let mut triangles = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        let (ln, line) = next_line()?.ok_or_else(|| err(0, "truncated face list"))?;
        let vals: Vec<u32> = line
            .split_whitespace()
            .map(|t| t.parse::<u32>())
            .collect::<Result<_, _>>()
            .map_err(|_| err(ln, "bad face index"))?;
        if vals.len() != 4 || vals[0] != 3 {
            return Err(err(ln, "only triangular faces are supported"));
        }
        if vals[1..].iter().any(|&v| v as usize >= n_vertices) {
            return Err(err(ln, "face index out of range"));
        }
        triangles.push([vals[1], vals[2], vals[3]]);
    }
    Ok(TriMesh::new(vertices, triangles, category_id))
}
