//! Triangle meshes: construction with validation, OFF/OBJ I/O, edges and areas.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Relative area below which a triangle is rejected, in units of the squared
/// bounding-box diagonal.
pub const DEGENERATE_AREA_RATIO: f64 = 1e-12;

/// An indexed triangle mesh with 0-based vertex indices.
///
/// Immutable once built; every triangle references valid, distinct vertices
/// and has non-negligible area.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
}

/// Where a validation failure happened, so loaders can report the file line.
#[derive(Debug)]
struct Invalid {
    triangle: usize,
    msg: String,
}

fn check(vertices: &[Point3<f64>], triangles: &[[usize; 3]]) -> std::result::Result<(), Invalid> {
    let n = vertices.len();
    for (t, tri) in triangles.iter().enumerate() {
        if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
            return Err(Invalid {
                triangle: t,
                msg: format!("vertex index {bad} out of range (n = {n})"),
            });
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(Invalid {
                triangle: t,
                msg: "repeated vertex in triangle".into(),
            });
        }
    }
    let diag2 = bbox_diagonal(vertices).powi(2);
    for (t, tri) in triangles.iter().enumerate() {
        let a = triangle_area(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]);
        if a.is_nan() || a < DEGENERATE_AREA_RATIO * diag2 {
            return Err(Invalid {
                triangle: t,
                msg: format!("degenerate triangle (area {a:e})"),
            });
        }
    }
    Ok(())
}

fn bbox_diagonal(vertices: &[Point3<f64>]) -> f64 {
    let Some(first) = vertices.first() else {
        return 0.0;
    };
    let (mut lo, mut hi) = (first.coords, first.coords);
    for v in vertices {
        lo = lo.inf(&v.coords);
        hi = hi.sup(&v.coords);
    }
    (hi - lo).norm()
}

pub(crate) fn triangle_area(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

impl TriangleMesh {
    /// Builds a mesh, rejecting out-of-range indices, repeated vertices and
    /// degenerate triangles. Open and non-manifold meshes are accepted; the
    /// quality of their eigenbases is then not guaranteed.
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        check(&vertices, &triangles).map_err(|e| {
            Error::InvalidArgument(format!("triangle {}: {}", e.triangle, e.msg))
        })?;
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    /// Sum of triangle areas.
    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Uniformly scaled (about the origin) copy whose total area equals
    /// `target_area`.
    pub fn rescale_to_area(&self, target_area: f64) -> Result<Self> {
        if target_area <= 0.0 || !target_area.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "target area must be positive, got {target_area}"
            )));
        }
        let s = (target_area / self.total_area()).sqrt();
        Ok(self.map_vertices(|p| p * s))
    }

    /// Copy with every vertex moved by `f`; topology is kept as is.
    pub fn map_vertices(&self, f: impl Fn(Point3<f64>) -> Point3<f64>) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&p| f(p)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Undirected edges, each listed once, sorted by endpoint indices.
    pub fn edge_set(&self) -> EdgeSet {
        let mut pairs: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(i, j)| (i.min(j), i.max(j)))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let edges = pairs
            .into_iter()
            .map(|(a, b)| Edge {
                a,
                b,
                length: (self.vertices[a] - self.vertices[b]).norm(),
            })
            .collect();
        EdgeSet { edges }
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        let e = self.edge_set().len() as i64;
        self.n() as i64 - e + self.triangles.len() as i64
    }

    /// True when every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        let mut count = std::collections::HashMap::new();
        for &[a, b, c] in &self.triangles {
            for (i, j) in [(a, b), (b, c), (c, a)] {
                *count.entry((i.min(j), i.max(j))).or_insert(0usize) += 1;
            }
        }
        count.values().all(|&c| c == 2)
    }
}

/// One undirected edge with its Euclidean length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    pub edges: Vec<Edge>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    /// Weighted vertex adjacency lists for `n` vertices.
    pub fn adjacency(&self, n: usize) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            adj[e.a].push((e.b, e.length));
            adj[e.b].push((e.a, e.length));
        }
        adj
    }
}

/// Free function form of [`TriangleMesh::edge_set`].
pub fn edge_set(mesh: &TriangleMesh) -> EdgeSet {
    mesh.edge_set()
}

/// Free function form of [`TriangleMesh::total_area`].
pub fn total_area(mesh: &TriangleMesh) -> f64 {
    mesh.total_area()
}

/// Free function form of [`TriangleMesh::rescale_to_area`].
pub fn rescale_to_area(mesh: &TriangleMesh, target_area: f64) -> Result<TriangleMesh> {
    mesh.rescale_to_area(target_area)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    Obj,
}

impl MeshFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("off") => Ok(MeshFormat::Off),
            Some("obj") => Ok(MeshFormat::Obj),
            _ => Err(Error::InvalidArgument(format!(
                "{}: cannot infer mesh format (expected .off or .obj)",
                path.display()
            ))),
        }
    }
}

/// Loads a mesh, inferring the format from the extension.
pub fn load(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    load_mesh(path, MeshFormat::from_path(path)?)
}

pub fn load_mesh(path: impl AsRef<Path>, format: MeshFormat) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    match format {
        MeshFormat::Off => parse_off(&text, &origin),
        MeshFormat::Obj => parse_obj(&text, &origin),
    }
}

/// Writes a mesh, inferring the format from the extension.
pub fn save(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    save_mesh(mesh, path, MeshFormat::from_path(path)?)
}

pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>, format: MeshFormat) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        MeshFormat::Off => to_off(mesh),
        MeshFormat::Obj => to_obj(mesh),
    };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn to_off(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "OFF\n{} {} 0", mesh.n(), mesh.triangles.len());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

pub fn to_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    s
}

/// Numbered, non-empty, comment-stripped lines.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_floats<const N: usize>(
    fields: &mut dyn Iterator<Item = &str>,
    origin: &str,
    line: usize,
) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    for o in out.iter_mut() {
        let f = fields
            .next()
            .ok_or_else(|| Error::parse(origin, line, "too few coordinates"))?;
        *o = f
            .parse()
            .map_err(|_| Error::parse(origin, line, format!("invalid number '{f}'")))?;
    }
    Ok(out)
}

fn finish(
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[usize; 3]>,
    face_lines: &[usize],
    origin: &str,
) -> Result<TriangleMesh> {
    check(&vertices, &triangles)
        .map_err(|e| Error::parse(origin, face_lines[e.triangle], e.msg))?;
    Ok(TriangleMesh {
        vertices,
        triangles,
    })
}

/// Parses OFF text. `origin` names the source in error messages.
pub fn parse_off(text: &str, origin: &str) -> Result<TriangleMesh> {
    let mut lines = content_lines(text);
    let (hl, header) = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 1, "empty file"))?;
    let mut head = header.split_whitespace();
    if head.next() != Some("OFF") {
        return Err(Error::parse(origin, hl, "missing OFF header"));
    }
    // Counts may follow the keyword on the same line.
    let rest: Vec<&str> = head.collect();
    let (cl, counts) = if rest.is_empty() {
        lines
            .next()
            .map(|(l, s)| (l, s.split_whitespace().collect::<Vec<_>>()))
            .ok_or_else(|| Error::parse(origin, hl, "missing counts line"))?
    } else {
        (hl, rest)
    };
    let parse_count = |s: Option<&&str>| -> Result<usize> {
        s.and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(origin, cl, "invalid counts line"))
    };
    let nv = parse_count(counts.first())?;
    let nf = parse_count(counts.get(1))?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, s) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, cl, "unexpected end of file in vertex list"))?;
        let [x, y, z] = parse_floats::<3>(&mut s.split_whitespace(), origin, l)?;
        vertices.push(Point3::new(x, y, z));
    }
    let mut triangles = Vec::with_capacity(nf);
    let mut face_lines = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, s) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, cl, "unexpected end of file in face list"))?;
        let mut f = s.split_whitespace();
        let count: usize = f
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::parse(origin, l, "invalid face line"))?;
        if count != 3 {
            return Err(Error::parse(origin, l, "non-triangular face"));
        }
        let mut tri = [0usize; 3];
        for t in tri.iter_mut() {
            *t = f
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::parse(origin, l, "invalid face index"))?;
        }
        triangles.push(tri);
        face_lines.push(l);
    }
    finish(vertices, triangles, &face_lines, origin)
}

/// Parses the `v` and `f` records of OBJ text; other directives are skipped
/// with a warning.
pub fn parse_obj(text: &str, origin: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut face_lines = Vec::new();
    let mut warned = HashSet::new();
    for (l, s) in content_lines(text) {
        let mut f = s.split_whitespace();
        match f.next() {
            Some("v") => {
                let [x, y, z] = parse_floats::<3>(&mut f, origin, l)?;
                vertices.push(Point3::new(x, y, z));
            }
            Some("f") => {
                let idx: Vec<&str> = f.collect();
                if idx.len() != 3 {
                    return Err(Error::parse(origin, l, "non-triangular face"));
                }
                let mut tri = [0usize; 3];
                for (t, tok) in tri.iter_mut().zip(&idx) {
                    let head = tok.split('/').next().unwrap_or("");
                    let i: i64 = head.parse().map_err(|_| {
                        Error::parse(origin, l, format!("invalid face index '{tok}'"))
                    })?;
                    // 1-based, negative values count back from the last vertex.
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        -1
                    };
                    if resolved < 0 {
                        return Err(Error::parse(
                            origin,
                            l,
                            format!("vertex index {i} out of range"),
                        ));
                    }
                    *t = resolved as usize;
                }
                triangles.push(tri);
                face_lines.push(l);
            }
            Some(other) if warned.insert(other.to_string()) => {
                log::warn!("{origin}:{l}: ignoring OBJ directive '{other}'");
            }
            Some(_) => {}
            None => {}
        }
    }
    finish(vertices, triangles, &face_lines, origin)
}

/// Unit normal of a triangle, or zero for degenerate input.
pub fn triangle_normal(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Vector3<f64> {
    (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or_else(Vector3::zeros)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn equilateral() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.5, 3f64.sqrt() / 2.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    fn cube() -> TriangleMesh {
        let v: Vec<Point3<f64>> = (0..8)
            .map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let quads = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        let t = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        TriangleMesh::new(v, t).unwrap()
    }

    fn tetrahedron() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(1.0, 1.0, 1.0),
                Point3::new(1.0, -1.0, -1.0),
                Point3::new(-1.0, 1.0, -1.0),
                Point3::new(-1.0, -1.0, 1.0),
            ],
            vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
        )
        .unwrap()
    }

    #[test]
    fn smallest_off() {
        let m = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n", "t").unwrap();
        assert_eq!(m.n(), 3);
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
    }

    #[test]
    fn off_counts_on_header_line_and_comments() {
        let m = parse_off("OFF 3 1 0\n# c\n0 0 0\n1 0 0\n\n0 1 0\n3 0 1 2 255 0 0\n", "t").unwrap();
        assert_eq!(m.n(), 3);
    }

    #[test]
    fn obj_quad_rejected() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n", "q.obj").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("non-triangular face"), "{msg}");
        assert!(msg.contains("q.obj:5"), "{msg}");
    }

    #[test]
    fn off_repeated_vertex_rejected() {
        let err = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 0 1\n", "r.off").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("repeated vertex in triangle"), "{msg}");
        assert!(msg.contains(":6"), "{msg}");
    }

    #[test]
    fn out_of_range_and_degenerate_rejected() {
        let err = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n", "o").unwrap_err();
        assert!(err.to_string().contains("out of range"));
        let err = parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n2 0 0\n3 0 1 2\n", "d").unwrap_err();
        assert!(err.to_string().contains("degenerate"));
        let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n", "z").unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn obj_slashes_negative_and_other_directives() {
        let m = parse_obj(
            "o thing\nv 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nf 1/1/1 2//1 -1\n",
            "t",
        )
        .unwrap();
        assert_eq!(m.triangles(), &[[0, 1, 2]]);
    }

    #[test]
    fn edge_counts() {
        let e = equilateral().edge_set();
        assert_eq!(e.len(), 3);
        for edge in e.iter() {
            assert_relative_eq!(edge.length, 1.0, epsilon = 1e-15);
        }
        let two = TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap();
        assert_eq!(two.edge_set().len(), 5);
        assert_eq!(tetrahedron().edge_set().len(), 6);
    }

    #[test]
    fn closed_mesh_edge_count() {
        for m in [cube(), tetrahedron()] {
            assert!(m.is_closed());
            assert_eq!(2 * m.edge_set().len(), 3 * m.triangles().len());
            assert_eq!(m.euler_characteristic(), 2);
        }
    }

    #[test]
    fn areas() {
        assert_relative_eq!(equilateral().total_area(), 3f64.sqrt() / 4.0, epsilon = 1e-15);
        assert_relative_eq!(cube().total_area(), 6.0, epsilon = 1e-14);
        let s = 2.5;
        let scaled = cube().map_vertices(|p| p * s);
        assert_relative_eq!(scaled.total_area(), 6.0 * s * s, max_relative = 1e-14);
    }

    #[test]
    fn rescaling() {
        let m = cube().map_vertices(|p| p * (4.0f64 / 6.0).sqrt());
        assert_relative_eq!(m.total_area(), 4.0, max_relative = 1e-14);
        let half = m.rescale_to_area(1.0).unwrap();
        for (a, b) in m.vertices().iter().zip(half.vertices()) {
            assert_relative_eq!(a.coords * 0.5, b.coords, epsilon = 1e-14);
        }
        let same = m.rescale_to_area(m.total_area()).unwrap();
        assert_eq!(same.vertices(), m.vertices());

        let big = equilateral().rescale_to_area(3f64.sqrt()).unwrap();
        for e in big.edge_set().iter() {
            assert_relative_eq!(e.length, 2.0, max_relative = 1e-12);
        }
        assert!(cube().rescale_to_area(0.0).is_err());
    }
}
