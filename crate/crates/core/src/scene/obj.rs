//! Minimal Wavefront OBJ reader: `v`, `vn`, `f` and `usemtl`.
//!
//! Polygons are fan-triangulated. Texture coordinates, groups and smoothing
//! statements are accepted and ignored.

use glam::DVec3;

#[derive(Debug, Clone, PartialEq)]
pub struct ObjFace {
    pub positions: [DVec3; 3],
    /// Per-vertex normals when every corner of the face referenced one.
    pub normals: Option<[DVec3; 3]>,
    pub material: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ObjError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> ObjError {
    ObjError {
        line,
        message: message.into(),
    }
}

fn parse_vec3(parts: &[&str], line: usize) -> Result<DVec3, ObjError> {
    if parts.len() < 3 {
        return Err(err(line, "expected three coordinates"));
    }
    let mut v = [0.0; 3];
    for (slot, s) in v.iter_mut().zip(parts) {
        *slot = s
            .parse::<f64>()
            .map_err(|_| err(line, format!("bad number {s:?}")))?;
        if !slot.is_finite() {
            return Err(err(line, format!("non-finite coordinate {s:?}")));
        }
    }
    Ok(DVec3::from_array(v))
}

/// Resolves a 1-based (or negative, relative) OBJ index.
fn resolve(index: &str, count: usize, line: usize) -> Result<usize, ObjError> {
    let i: i64 = index
        .parse()
        .map_err(|_| err(line, format!("bad index {index:?}")))?;
    let resolved = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        return Err(err(line, "index 0 is invalid"));
    };
    if resolved < 0 || resolved as usize >= count {
        return Err(err(line, format!("index {i} out of range")));
    }
    Ok(resolved as usize)
}

pub fn parse_obj(text: &str) -> Result<Vec<ObjFace>, ObjError> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut faces = Vec::new();
    let mut material: Option<String> = None;

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut parts = content.split_whitespace();
        let keyword = parts.next().unwrap_or("");
        let rest: Vec<&str> = parts.collect();
        match keyword {
            "v" => positions.push(parse_vec3(&rest, line)?),
            "vn" => normals.push(parse_vec3(&rest, line)?),
            "usemtl" => material = rest.first().map(|s| s.to_string()),
            "f" => {
                if rest.len() < 3 {
                    return Err(err(line, "face needs at least three vertices"));
                }
                let mut corners = Vec::with_capacity(rest.len());
                for corner in &rest {
                    let mut fields = corner.split('/');
                    let v = resolve(fields.next().unwrap_or(""), positions.len(), line)?;
                    let _vt = fields.next();
                    let vn = match fields.next() {
                        Some(s) if !s.is_empty() => Some(resolve(s, normals.len(), line)?),
                        _ => None,
                    };
                    corners.push((v, vn));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    let face_normals = match (tri[0].1, tri[1].1, tri[2].1) {
                        (Some(a), Some(b), Some(c)) => Some([normals[a], normals[b], normals[c]]),
                        _ => None,
                    };
                    faces.push(ObjFace {
                        positions: [positions[tri[0].0], positions[tri[1].0], positions[tri[2].0]],
                        normals: face_normals,
                        material: material.clone(),
                    });
                }
            }
            "vt" | "o" | "g" | "s" | "mtllib" | "l" | "p" => {}
            other => log::debug!("obj line {line}: ignoring {other:?}"),
        }
    }
    Ok(faces)
}
