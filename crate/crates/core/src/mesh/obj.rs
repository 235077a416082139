use std::fmt::Write as _;
use std::path::Path;

use super::Mesh;
use crate::error::{Error, Result};

/// Reads the `v` / `f` subset of Wavefront OBJ. Quads are split as
/// `(v1, v2, v3)` + `(v1, v3, v4)`; every other line type is ignored.
pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    parse_obj(&text, path)
}

pub fn parse_obj(text: &str, path: &Path) -> Result<Mesh> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut nodes = Vec::new();
    let mut raw_faces: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|_| err(lineno, format!("bad coordinate '{s}'"))))
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(err(lineno, "vertex needs three coordinates".into()));
                }
                nodes.push([coords[0], coords[1], coords[2]]);
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|s| {
                        // accept `i`, `i/t`, `i/t/n`, `i//n`
                        let head = s.split('/').next().unwrap_or("");
                        head.parse::<usize>()
                            .map_err(|_| err(lineno, format!("bad face index '{s}'")))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 && idx.len() != 4 {
                    return Err(err(lineno, format!("faces must have 3 or 4 nodes, got {}", idx.len())));
                }
                if idx.contains(&0) {
                    return Err(err(lineno, "face indices are 1-based".into()));
                }
                raw_faces.push((lineno, idx));
            }
            _ => {}
        }
    }
    let n = nodes.len();
    let mut faces = Vec::with_capacity(raw_faces.len());
    for (lineno, idx) in raw_faces {
        if let Some(&bad) = idx.iter().find(|&&v| v > n) {
            return Err(err(lineno, format!("face index {bad} out of range ({n} vertices)")));
        }
        let z: Vec<usize> = idx.iter().map(|v| v - 1).collect();
        faces.push([z[0], z[1], z[2]]);
        if z.len() == 4 {
            faces.push([z[0], z[2], z[3]]);
        }
    }
    Mesh::new(nodes, faces).map_err(|e| match e {
        Error::Argument(msg) => err(0, msg),
        other => other,
    })
}

/// Writes `v` then `f` lines with 17 significant digits.
pub fn save_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    std::fs::write(path, format_obj(mesh))?;
    Ok(())
}

pub(crate) fn format_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    for p in mesh.nodes() {
        let _ = writeln!(s, "v {:.16e} {:.16e} {:.16e}", p[0], p[1], p[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}
