//! Mesh, label, matrix and feature files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hodgenet_core::eig::EigenSystem;
use hodgenet_core::linalg::Matrix;
use hodgenet_core::mesh::{Mesh, MeshError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },
    #[error("{path}: {source}")]
    Mesh { path: PathBuf, source: MeshError },
    #[error("{0}: unsupported mesh format, expected .obj or .off")]
    Extension(PathBuf),
}

/// Parse failure at a 1-based line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn perr(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError { line, msg: msg.into() }
}

pub type Soup = (Vec<[f64; 3]>, Vec<[usize; 3]>);

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64, ParseError> {
    let tok = tok.ok_or_else(|| perr(line, "missing coordinate"))?;
    tok.parse().map_err(|_| perr(line, format!("bad number {tok:?}")))
}

/// `v` and `f` records; other records are ignored. Face corners may carry
/// texture and normal indices and may be negative (relative).
pub fn parse_obj(text: &str) -> Result<Soup, ParseError> {
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        match toks.next() {
            Some("v") => {
                let p = [parse_f64(toks.next(), line)?, parse_f64(toks.next(), line)?, parse_f64(toks.next(), line)?];
                verts.push(p);
            }
            Some("f") => {
                let corners: Vec<&str> = toks.collect();
                if corners.len() != 3 {
                    return Err(perr(line, format!("face has {} corners, only triangles are supported", corners.len())));
                }
                let mut tri = [0usize; 3];
                for (slot, c) in tri.iter_mut().zip(&corners) {
                    let idx = c.split('/').next().unwrap_or("");
                    let n: i64 = idx.parse().map_err(|_| perr(line, format!("bad vertex index {idx:?}")))?;
                    let resolved = match n {
                        0 => return Err(perr(line, "vertex index 0 (indices are 1-based)")),
                        n if n > 0 => n - 1,
                        n => verts.len() as i64 + n,
                    };
                    if resolved < 0 {
                        return Err(perr(line, format!("relative index {n} before the first vertex")));
                    }
                    *slot = resolved as usize;
                }
                tris.push(tri);
            }
            _ => {}
        }
    }
    Ok((verts, tris))
}

/// ASCII OFF; `#` starts a comment, per-face color values are ignored.
pub fn parse_off(text: &str) -> Result<Soup, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim())).filter(|(_, l)| !l.is_empty());
    let (hl, header) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    let counts = match header.strip_prefix("OFF") {
        Some(rest) if !rest.trim().is_empty() => (hl, rest.trim()),
        Some(_) => lines.next().ok_or_else(|| perr(hl, "missing counts"))?,
        None => return Err(perr(hl, "missing OFF header")),
    };
    let nums: Vec<usize> = counts.1.split_whitespace().map(|t| t.parse().map_err(|_| perr(counts.0, format!("bad count {t:?}")))).collect::<Result<_, _>>()?;
    if nums.len() < 2 {
        return Err(perr(counts.0, "expected vertex and face counts"));
    }
    let (nv, nf) = (nums[0], nums[1]);
    let mut verts = Vec::with_capacity(nv);
    let mut tris = Vec::with_capacity(nf);
    for _ in 0..nv {
        let (line, l) = lines.next().ok_or_else(|| perr(counts.0, "fewer vertices than declared"))?;
        let mut t = l.split_whitespace();
        verts.push([parse_f64(t.next(), line)?, parse_f64(t.next(), line)?, parse_f64(t.next(), line)?]);
    }
    for _ in 0..nf {
        let (line, l) = lines.next().ok_or_else(|| perr(counts.0, "fewer faces than declared"))?;
        let vals: Vec<usize> =
            l.split_whitespace().map(|t| t.parse().map_err(|_| perr(line, format!("bad index {t:?}")))).take_while(|r| r.is_ok()).collect::<Result<_, _>>()?;
        match vals.first() {
            Some(3) if vals.len() >= 4 => tris.push([vals[1], vals[2], vals[3]]),
            Some(&n) => return Err(perr(line, format!("face has {n} corners, only triangles are supported"))),
            None => return Err(perr(line, "empty face record")),
        }
    }
    Ok((verts, tris))
}

pub fn write_obj(mesh: &Mesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {:?} {:?} {:?}", v[0], v[1], v[2]);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

pub fn write_off(mesh: &Mesh) -> String {
    let mut s = format!("OFF\n{} {} {}\n", mesh.num_vertices(), mesh.num_triangles(), mesh.num_edges());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?} {:?}", v[0], v[1], v[2]);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, contents).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

/// Loads by extension, `.obj` or `.off` in any case.
pub fn load_mesh(path: &Path) -> Result<Mesh, IoError> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let parse = match ext.as_deref() {
        Some("obj") => parse_obj,
        Some("off") => parse_off,
        _ => return Err(IoError::Extension(path.to_path_buf())),
    };
    let (verts, tris) = parse(&read(path)?).map_err(|e| IoError::Format { path: path.to_path_buf(), line: e.line, msg: e.msg })?;
    Mesh::new(verts, tris).map_err(|source| IoError::Mesh { path: path.to_path_buf(), source })
}

pub fn save_mesh(path: &Path, mesh: &Mesh) -> Result<(), IoError> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("obj") => write_file(path, write_obj(mesh)),
        Some("off") => write_file(path, write_off(mesh)),
        _ => Err(IoError::Extension(path.to_path_buf())),
    }
}

/// One integer per line; line `i` labels triangle `i`. Trailing blank
/// lines are allowed.
pub fn parse_labels(text: &str) -> Result<Vec<usize>, ParseError> {
    let body = text.trim_end();
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.lines().enumerate().map(|(i, l)| l.trim().parse().map_err(|_| perr(i + 1, format!("bad label {:?}", l.trim())))).collect()
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>, IoError> {
    parse_labels(&read(path)?).map_err(|e| IoError::Format { path: path.to_path_buf(), line: e.line, msg: e.msg })
}

pub fn write_labels(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

/// Matrix Market coordinate format, 1-based, every stored entry.
pub fn write_matrix_market(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> String {
    let mut s = format!("%%MatrixMarket matrix coordinate real general\n{rows} {cols} {}\n", triplets.len());
    for &(r, c, v) in triplets {
        let _ = writeln!(s, "{} {} {:?}", r + 1, c + 1, v);
    }
    s
}

/// Rows of `m` as CSV under a header `prefix0,prefix1,...`.
pub fn write_csv_matrix(m: &Matrix, prefix: &str) -> String {
    let mut s = (0..m.cols()).map(|c| format!("{prefix}{c}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for r in 0..m.rows() {
        s.push_str(&m.row(r).iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

/// `name,λ₀,r₀,λ₁,r₁,...` for every stored pair.
pub fn eigen_log_line(name: &str, sys: &EigenSystem) -> String {
    let mut s = String::from(name);
    for (l, r) in sys.values.iter().zip(&sys.residuals) {
        let _ = write!(s, ",{l:?},{r:?}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use hodgenet_core::mesh::shapes;

    #[test]
    fn obj_single_triangle() {
        let (v, t) = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let m = Mesh::new(v, t).unwrap();
        assert_eq!((m.num_vertices(), m.num_triangles(), m.num_boundary_edges()), (3, 1, 3));
    }

    #[test]
    fn obj_corner_forms() {
        let (_, t) = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2//1 -1\n# c\n").unwrap();
        assert_eq!(t, vec![[0, 1, 2]]);
    }

    #[test]
    fn obj_rejects_quads_and_zero() {
        let q = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap_err();
        assert_eq!(q.line, 5);
        assert!(parse_obj("v 0 0 0\nf 0 1 2\n").is_err());
    }

    #[test]
    fn off_forms() {
        let a = parse_off("OFF\n# c\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2 255 0 0\n").unwrap();
        let b = parse_off("OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        assert_eq!(a, b);
        assert!(parse_off("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n").is_err());
        assert!(parse_off("3 1 0\n").is_err());
    }

    #[test]
    fn round_trips() {
        let m = shapes::icosphere(1);
        for (w, p) in [(write_obj as fn(&Mesh) -> String, parse_obj as fn(&str) -> Result<Soup, ParseError>), (write_off, parse_off)] {
            let (v, t) = p(&w(&m)).unwrap();
            assert_eq!(v.as_slice(), m.vertices());
            assert_eq!(t.as_slice(), m.triangles());
        }
    }

    #[test]
    fn labels() {
        assert_eq!(parse_labels("1\n0\n 2 \n\n").unwrap(), vec![1, 0, 2]);
        assert_eq!(parse_labels("").unwrap(), Vec::<usize>::new());
        assert_eq!(parse_labels("1\nx\n").unwrap_err().line, 2);
        assert_eq!(parse_labels(&write_labels(&[3, 4])).unwrap(), vec![3, 4]);
    }

    #[test]
    fn matrix_market_header() {
        let s = write_matrix_market(2, 3, &[(0, 2, 1.5), (1, 0, -2.0)]);
        assert_eq!(s, "%%MatrixMarket matrix coordinate real general\n2 3 2\n1 3 1.5\n2 1 -2.0\n");
    }

    #[test]
    fn csv_matrix() {
        let s = write_csv_matrix(&Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 0.5]), "g");
        assert_eq!(s, "g0,g1\n1.0,2.0\n3.0,0.5\n");
    }
}
