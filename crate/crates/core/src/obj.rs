//! Wavefront OBJ input and output for shells, plus an OBJ-like format for
//! displacement fields (`v dx dy dz` per vertex, no faces).
//!
//! Only `v` and triangular `f` records are interpreted. Normals, texture
//! coordinates, comments and blank lines are ignored. Indices are 1-based in
//! files and 0-based in memory. Output uses the shortest decimal
//! representation that round-trips, so save/load reproduces positions
//! bit-exactly.

use std::io::{BufRead, BufReader, Read, Write};
use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::mesh::{Displacement, Shell, Topology};
use crate::scalar::Real;

fn parse_coord<R: Real>(token: &str, line: usize) -> Result<R> {
    let x: f64 = token.parse().map_err(|_| Error::ObjParse {
        line,
        message: format!("invalid coordinate {token:?}"),
    })?;
    Ok(R::of(x))
}

fn parse_index(token: &str, line: usize, count: usize) -> Result<usize> {
    // Faces may carry `v/vt/vn` references; only the vertex index matters.
    let head = token.split('/').next().unwrap_or(token);
    let raw: i64 = head.parse().map_err(|_| Error::ObjParse {
        line,
        message: format!("invalid vertex index {token:?}"),
    })?;
    if raw < 1 || raw as usize > count {
        return Err(Error::VertexIndexOutOfRange {
            line,
            index: raw,
            count,
        });
    }
    Ok(raw as usize - 1)
}

/// Reads a shell and its topology from an OBJ stream.
pub fn load_obj<R: Real>(reader: impl Read) -> Result<(Arc<Topology>, Shell<R>)> {
    let mut positions: Vec<Vector3<R>> = Vec::new();
    let mut raw_faces: Vec<(usize, [String; 3])> = Vec::new();

    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<&str> = tokens.collect();
                if coords.len() < 3 {
                    return Err(Error::ObjParse {
                        line: lineno,
                        message: "vertex record needs three coordinates".into(),
                    });
                }
                positions.push(Vector3::new(
                    parse_coord(coords[0], lineno)?,
                    parse_coord(coords[1], lineno)?,
                    parse_coord(coords[2], lineno)?,
                ));
            }
            Some("f") => {
                let refs: Vec<&str> = tokens.collect();
                if refs.len() != 3 {
                    return Err(Error::UnsupportedFace {
                        line: lineno,
                        count: refs.len(),
                    });
                }
                raw_faces.push((
                    lineno,
                    [refs[0].to_string(), refs[1].to_string(), refs[2].to_string()],
                ));
            }
            // Ignored records: normals, texture coordinates, groups, etc.
            Some("vn") | Some("vt") | Some("vp") | Some("g") | Some("o") | Some("s")
            | Some("usemtl") | Some("mtllib") => {}
            Some(other) => {
                return Err(Error::ObjParse {
                    line: lineno,
                    message: format!("unsupported record {other:?}"),
                });
            }
            None => {}
        }
    }

    let mut faces = Vec::with_capacity(raw_faces.len());
    for (lineno, refs) in &raw_faces {
        faces.push([
            parse_index(&refs[0], *lineno, positions.len())?,
            parse_index(&refs[1], *lineno, positions.len())?,
            parse_index(&refs[2], *lineno, positions.len())?,
        ]);
    }

    let topology = Arc::new(Topology::new(positions.len(), faces)?);
    let shell = Shell::new(topology.clone(), positions)?;
    Ok((topology, shell))
}

/// Writes a shell as OBJ: one `v` per vertex, one 1-based `f` per face.
pub fn save_obj<R: Real>(shell: &Shell<R>, mut writer: impl Write) -> Result<()> {
    for p in shell.positions() {
        writeln!(
            writer,
            "v {} {} {}",
            p.x.to_f64().unwrap(),
            p.y.to_f64().unwrap(),
            p.z.to_f64().unwrap()
        )?;
    }
    for face in shell.topology().faces() {
        writeln!(writer, "f {} {} {}", face[0] + 1, face[1] + 1, face[2] + 1)?;
    }
    Ok(())
}

/// Reads a displacement stored as `v dx dy dz` lines for the given topology.
pub fn load_displacement<R: Real>(
    topology: Arc<Topology>,
    reader: impl Read,
) -> Result<Displacement<R>> {
    let mut values: Vec<Vector3<R>> = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<&str> = tokens.collect();
                if coords.len() < 3 {
                    return Err(Error::ObjParse {
                        line: lineno,
                        message: "displacement record needs three components".into(),
                    });
                }
                values.push(Vector3::new(
                    parse_coord(coords[0], lineno)?,
                    parse_coord(coords[1], lineno)?,
                    parse_coord(coords[2], lineno)?,
                ));
            }
            Some(other) => {
                return Err(Error::ObjParse {
                    line: lineno,
                    message: format!("unsupported record {other:?} in displacement file"),
                });
            }
            None => {}
        }
    }
    Displacement::new(topology, values)
}

/// Writes a displacement as `v dx dy dz` lines.
pub fn save_displacement<R: Real>(
    displacement: &Displacement<R>,
    mut writer: impl Write,
) -> Result<()> {
    for v in displacement.values() {
        writeln!(
            writer,
            "v {} {} {}",
            v.x.to_f64().unwrap(),
            v.y.to_f64().unwrap(),
            v.z.to_f64().unwrap()
        )?;
    }
    Ok(())
}
