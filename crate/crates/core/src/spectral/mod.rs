//! Cotangent Laplacian, lumped mass and the truncated generalized eigenbasis.

mod eigen;
pub mod envelope;
pub mod sparse;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DMatrixView};

pub use eigen::EigenOptions;
pub use sparse::CsrMatrix;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

/// Stiffness `W` (positive semi-definite cotangent weights) and the lumped
/// diagonal mass `A`. The Laplacian is `A⁻¹ W`.
#[derive(Debug, Clone)]
pub struct LaplacianPair {
    pub stiffness: CsrMatrix,
    pub mass: Vec<f64>,
}

impl LaplacianPair {
    pub fn n(&self) -> usize {
        self.mass.len()
    }

    /// `xᵀ W x`.
    pub fn dirichlet(&self, x: &[f64]) -> f64 {
        let mut wx = vec![0.0; x.len()];
        self.stiffness.mul_vec(x, &mut wx);
        wx.iter().zip(x).map(|(a, b)| a * b).sum()
    }
}

/// Assembles the cotangent stiffness and barycentric lumped mass.
///
/// Off-diagonal `W_ij = -(cot α + cot β)/2` over the angles opposite edge
/// `ij` (one angle on boundary edges); rows sum to zero.
pub fn cotan_laplacian(mesh: &TriangleMesh) -> LaplacianPair {
    let n = mesh.n();
    let v = mesh.vertices();
    let mut trip = Vec::with_capacity(mesh.triangles().len() * 12);
    let mut mass = vec![0.0; n];
    for &tri in mesh.triangles() {
        for c in 0..3 {
            let (k, i, j) = (tri[c], tri[(c + 1) % 3], tri[(c + 2) % 3]);
            let (e1, e2) = (v[i] - v[k], v[j] - v[k]);
            let half_cot = 0.5 * e1.dot(&e2) / e1.cross(&e2).norm();
            trip.extend([
                (i, j, -half_cot),
                (j, i, -half_cot),
                (i, i, half_cot),
                (j, j, half_cot),
            ]);
        }
        let third = crate::mesh::triangle_area(&v[tri[0]], &v[tri[1]], &v[tri[2]]) / 3.0;
        for &i in &tri {
            mass[i] += third;
        }
    }
    LaplacianPair {
        stiffness: CsrMatrix::from_triplets(n, trip),
        mass,
    }
}

/// The first `k` generalized eigenpairs `W φ = λ A φ`.
///
/// Columns of `phi` are A-orthonormal, eigenvalues ascending, and each column
/// has its first significant entry positive.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    phi: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    mass: Arc<[f64]>,
}

/// Entries smaller than this fraction of a column's largest magnitude are
/// skipped when fixing its sign.
const SIGN_THRESHOLD: f64 = 1e-6;

fn fix_signs(phi: &mut DMatrix<f64>) {
    for mut col in phi.column_iter_mut() {
        let amax = col.amax();
        if let Some(&first) = col.iter().find(|x| x.abs() >= SIGN_THRESHOLD * amax) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

impl SpectralBasis {
    /// Assembles a basis from precomputed parts (e.g. a cache file).
    pub fn from_parts(phi: DMatrix<f64>, eigenvalues: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if phi.ncols() != eigenvalues.len() || phi.nrows() != mass.len() {
            return Err(Error::Dimension(format!(
                "phi is {}x{}, {} eigenvalues, {} mass entries",
                phi.nrows(),
                phi.ncols(),
                eigenvalues.len(),
                mass.len()
            )));
        }
        Ok(Self {
            phi,
            eigenvalues,
            mass: mass.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn k(&self) -> usize {
        self.phi.ncols()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    /// First `k` columns of Φ.
    pub fn truncated(&self, k: usize) -> DMatrixView<'_, f64> {
        self.phi.columns(0, k)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Row `vertex` of Φ: the spectral embedding of that vertex.
    pub fn embed(&self, vertex: usize) -> Result<Vec<f64>> {
        if vertex >= self.n() {
            return Err(Error::OutOfRange {
                index: vertex,
                len: self.n(),
            });
        }
        Ok(self.phi.row(vertex).iter().copied().collect())
    }

    /// Writes the cache format: `n k`, the eigenvalues, then `n` rows of `k` values.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.n(), self.k());
        let _ = writeln!(s, "{}", join(self.eigenvalues.iter()));
        for r in 0..self.n() {
            let _ = writeln!(s, "{}", join(self.phi.row(r).iter()));
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Reads a basis cache. The file does not carry the mass matrix, so it is
    /// taken from `lap` (which must belong to the same mesh).
    pub fn load(path: impl AsRef<Path>, lap: &LaplacianPair) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string(), lap.mass.clone())
    }

    pub fn parse(text: &str, origin: &str, mass: Vec<f64>) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines
                .next()
                .map(|(i, l)| (i + 1, l))
                .ok_or_else(|| Error::parse(origin, 0, format!("missing {what}")))
        };
        let (hl, header) = next("header")?;
        let dims = parse_row(header, origin, hl)?;
        if dims.len() != 2 {
            return Err(Error::parse(origin, hl, "header must be 'n k'"));
        }
        let (n, k) = (dims[0] as usize, dims[1] as usize);
        let (el, ev) = next("eigenvalue line")?;
        let eigenvalues = parse_row(ev, origin, el)?;
        if eigenvalues.len() != k {
            return Err(Error::parse(origin, el, format!("expected {k} eigenvalues")));
        }
        let mut phi = DMatrix::zeros(n, k);
        for r in 0..n {
            let (l, row) = next("basis row")?;
            let vals = parse_row(row, origin, l)?;
            if vals.len() != k {
                return Err(Error::parse(origin, l, format!("expected {k} values")));
            }
            phi.row_mut(r).iter_mut().zip(vals).for_each(|(d, v)| *d = v);
        }
        Self::from_parts(phi, eigenvalues, mass)
    }
}

fn join<'a>(it: impl Iterator<Item = &'a f64>) -> String {
    it.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn parse_row(line: &str, origin: &str, l: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::parse(origin, l, format!("invalid number '{t}'")))
        })
        .collect()
}

/// First `k` eigenpairs with default solver options.
pub fn spectral_basis(lap: &LaplacianPair, k: usize) -> Result<SpectralBasis> {
    spectral_basis_with(lap, k, &EigenOptions::default())
}

pub fn spectral_basis_with(
    lap: &LaplacianPair,
    k: usize,
    opts: &EigenOptions,
) -> Result<SpectralBasis> {
    let n = lap.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "basis size k = {k} must be in [1, {n}]"
        )));
    }
    let pairs = eigen::smallest(&lap.stiffness, &lap.mass, k, opts)?;
    let mut phi = pairs.vectors;
    for (r, a) in lap.mass.iter().enumerate() {
        let s = 1.0 / a.sqrt();
        phi.row_mut(r).iter_mut().for_each(|x| *x *= s);
    }
    fix_signs(&mut phi);
    Ok(SpectralBasis {
        phi,
        eigenvalues: pairs.values,
        mass: lap.mass.clone().into(),
    })
}

/// Convenience: Laplacian plus basis of a mesh.
pub fn mesh_basis(mesh: &TriangleMesh, k: usize) -> Result<SpectralBasis> {
    spectral_basis(&cotan_laplacian(mesh), k)
}
