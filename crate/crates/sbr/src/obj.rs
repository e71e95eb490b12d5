//! Wavefront OBJ reading and writing.
//!
//! Only geometry matters here: `v` records and `f` records. Polygons are
//! fan-triangulated from their first vertex, `v/vt/vn` references keep the
//! position index, and negative indices count back from the latest vertex.
//! Everything else (`vt`, `vn`, groups, materials) is skipped.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::{debug, warn};
use sbr_core::geometry::{DegeneratePolicy, MeshError};
use sbr_core::{Mesh, Triangle, Vec3};

use crate::error::{Error, Result};

/// A mesh plus what the loader had to discard.
#[derive(Debug, Clone)]
pub struct LoadedMesh {
    pub mesh: Mesh,
    pub vertices: usize,
    /// Number of `f` records read.
    pub faces: usize,
    /// Zero-based indices of `f` records dropped for having zero area.
    pub dropped_faces: Vec<usize>,
}

pub fn load_obj(path: impl AsRef<Path>, policy: DegeneratePolicy) -> Result<LoadedMesh> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_obj(BufReader::new(file), path, policy)
}

/// Parses OBJ text from `reader`; `path` is used for messages and as the
/// mesh source label.
pub fn parse_obj<R: BufRead>(
    reader: R,
    path: &Path,
    policy: DegeneratePolicy,
) -> Result<LoadedMesh> {
    let err = |line: usize, msg: String| Error::Obj {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut verts: Vec<Vec3> = Vec::new();
    let mut tris = Vec::new();
    let mut dropped = Vec::new();
    let mut faces = 0usize;
    let mut idx = Vec::new();

    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.split('#').next().unwrap_or("");
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut c = [0.0f64; 3];
                for slot in &mut c {
                    let tok = it
                        .next()
                        .ok_or_else(|| err(lineno, "vertex needs three coordinates".into()))?;
                    *slot = tok
                        .parse()
                        .map_err(|_| err(lineno, format!("bad coordinate `{tok}`")))?;
                    if !slot.is_finite() {
                        return Err(err(lineno, format!("non-finite coordinate `{tok}`")));
                    }
                }
                verts.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                idx.clear();
                for tok in it {
                    let pos = tok.split('/').next().unwrap_or("");
                    let raw: i64 = pos
                        .parse()
                        .map_err(|_| err(lineno, format!("bad vertex reference `{tok}`")))?;
                    let resolved = match raw {
                        0 => None,
                        r if r > 0 => Some(r as usize - 1),
                        r => verts.len().checked_sub(r.unsigned_abs() as usize),
                    };
                    match resolved {
                        Some(i) if i < verts.len() => idx.push(i),
                        _ => {
                            return Err(err(
                                lineno,
                                format!(
                                    "vertex index {raw} out of range ({} vertices so far)",
                                    verts.len()
                                ),
                            ))
                        }
                    }
                }
                if idx.len() < 3 {
                    return Err(err(lineno, "face needs at least three vertices".into()));
                }
                let face = faces;
                faces += 1;
                let mut kept = false;
                for w in 1..idx.len() - 1 {
                    if let Some(t) = Triangle::new(verts[idx[0]], verts[idx[w]], verts[idx[w + 1]]) {
                        tris.push(t);
                        kept = true;
                    }
                }
                if !kept {
                    if policy == DegeneratePolicy::Strict {
                        return Err(Error::Mesh {
                            path: path.to_path_buf(),
                            source: MeshError::Degenerate { face },
                        });
                    }
                    dropped.push(face);
                }
            }
            _ => {}
        }
    }

    if !dropped.is_empty() {
        warn!(
            "{}: dropped {} zero-area face(s), first is face {}",
            path.display(),
            dropped.len(),
            dropped[0]
        );
    }
    let mesh = Mesh::from_triangles(tris, path.display().to_string()).map_err(|source| {
        Error::Mesh {
            path: path.to_path_buf(),
            source,
        }
    })?;
    debug!(
        "{}: {} vertices, {} faces, {} triangles",
        path.display(),
        verts.len(),
        faces,
        mesh.len()
    );
    Ok(LoadedMesh {
        mesh,
        vertices: verts.len(),
        faces,
        dropped_faces: dropped,
    })
}

/// Writes one `v` line per triangle corner and one `f` per triangle.
/// Coordinates use Rust's shortest round-trip formatting, so reading the
/// file back reproduces the mesh exactly.
pub fn write_obj<W: Write>(mesh: &Mesh, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# {} triangles", mesh.len())?;
    for t in mesh.triangles() {
        for p in [t.v0, t.v1, t.v2] {
            writeln!(out, "v {:?} {:?} {:?}", p.x, p.y, p.z)?;
        }
    }
    for i in 0..mesh.len() {
        let b = 3 * i + 1;
        writeln!(out, "f {} {} {}", b, b + 1, b + 2)?;
    }
    out.flush()
}

pub fn save_obj(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_obj(mesh, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}
