//! Functional maps and pointwise maps.
//!
//! Direction convention: a [`PointMap`] `T` sends vertices of the source `M`
//! to vertices of the target `N`; the associated [`FunctionalMap`] `C`
//! (`k_M × k_N`) transfers functions from `N` back to `M`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DMatrixView, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::sampling::{build_nn, NnMode};
use crate::spectral::SpectralBasis;

/// A `k_M × k_N` functional map with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMap {
    c: DMatrix<f64>,
}

impl FunctionalMap {
    pub fn new(c: DMatrix<f64>) -> Result<Self> {
        if c.nrows() == 0 || c.ncols() == 0 {
            return Err(Error::InvalidArgument("functional map must be non-empty".into()));
        }
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("functional map has non-finite entries".into()));
        }
        Ok(Self { c })
    }

    pub fn identity(k: usize) -> Self {
        Self {
            c: DMatrix::identity(k, k),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.c
    }

    pub fn k_m(&self) -> usize {
        self.c.nrows()
    }

    pub fn k_n(&self) -> usize {
        self.c.ncols()
    }

    /// Top-left `k_m × k_n` block.
    pub fn principal(&self, k_m: usize, k_n: usize) -> Result<Self> {
        if k_m == 0 || k_n == 0 || k_m > self.k_m() || k_n > self.k_n() {
            return Err(Error::Dimension(format!(
                "cannot take {k_m}x{k_n} block of a {}x{} map",
                self.k_m(),
                self.k_n()
            )));
        }
        Ok(Self {
            c: self.c.view((0, 0), (k_m, k_n)).into_owned(),
        })
    }

    /// Text form: `k_M k_N`, then `k_M` rows of `k_N` values.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.k_m(), self.k_n());
        for r in 0..self.k_m() {
            let row: Vec<String> = self.c.row(r).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hl, header) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "missing 'k_M k_N' header"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(origin, hl, "invalid header"))?;
        let [km, kn] = dims[..] else {
            return Err(Error::parse(origin, hl, "header must be 'k_M k_N'"));
        };
        let mut c = DMatrix::zeros(km, kn);
        for r in 0..km {
            let (l, row) = lines
                .next()
                .ok_or_else(|| Error::parse(origin, hl, format!("expected {km} rows")))?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|t| t.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(origin, l, "invalid number"))?;
            if vals.len() != kn {
                return Err(Error::parse(origin, l, format!("expected {kn} values")));
            }
            c.row_mut(r).iter_mut().zip(vals).for_each(|(d, v)| *d = v);
        }
        Self::new(c).map_err(|e| Error::parse(origin, hl, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Vertex-to-vertex map `T: M → N` (one target per source vertex; not
/// necessarily bijective).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointMap {
    targets: Vec<usize>,
}

impl PointMap {
    /// Wraps target indices, checking them against the target vertex count.
    pub fn new(targets: Vec<usize>, n_target: usize) -> Result<Self> {
        if let Some(&bad) = targets.iter().find(|&&t| t >= n_target) {
            return Err(Error::OutOfRange {
                index: bad,
                len: n_target,
            });
        }
        Ok(Self { targets })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            targets: (0..n).collect(),
        }
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// `T_2 ∘ T_1` where `self = T_1`.
    pub fn then(&self, next: &PointMap) -> Result<PointMap> {
        self.targets
            .iter()
            .map(|&t| {
                next.targets.get(t).copied().ok_or(Error::OutOfRange {
                    index: t,
                    len: next.len(),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(|targets| PointMap { targets })
    }

    /// Inverse of a bijection, `None` otherwise.
    pub fn inverse(&self) -> Option<PointMap> {
        let n = self.len();
        let mut inv = vec![usize::MAX; n];
        for (i, &t) in self.targets.iter().enumerate() {
            if t >= n || inv[t] != usize::MAX {
                return None;
            }
            inv[t] = i;
        }
        Some(PointMap { targets: inv })
    }

    /// One 0-based target index per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.len() * 6);
        for t in &self.targets {
            let _ = writeln!(s, "{t}");
        }
        s
    }

    /// Parses the one-index-per-line form; `n_target` bounds the indices when known.
    pub fn parse(text: &str, origin: &str, n_target: Option<usize>) -> Result<Self> {
        let mut targets = Vec::new();
        for (i, l) in text.lines().enumerate() {
            let l = l.trim();
            if l.is_empty() {
                continue;
            }
            let t: usize = l
                .parse()
                .map_err(|_| Error::parse(origin, i + 1, format!("invalid index '{l}'")))?;
            if n_target.is_some_and(|n| t >= n) {
                return Err(Error::parse(origin, i + 1, format!("index {t} out of range")));
            }
            targets.push(t);
        }
        Ok(Self { targets })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, n_target: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string(), n_target)
    }
}

fn check_sizes(basis_m: &SpectralBasis, basis_n: &SpectralBasis, k_m: usize, k_n: usize) -> Result<()> {
    if k_m == 0 || k_n == 0 || k_m > basis_m.k() || k_n > basis_n.k() {
        return Err(Error::Dimension(format!(
            "map size {k_m}x{k_n} exceeds bases of size {} and {}",
            basis_m.k(),
            basis_n.k()
        )));
    }
    Ok(())
}

/// `C = (Φ_M)ᵀ A_M Π Φ_N` at size `k_m × k_n`, without forming `Π`.
pub fn pointmap_to_fmap(
    t: &PointMap,
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
    k_m: usize,
    k_n: usize,
) -> Result<FunctionalMap> {
    check_sizes(basis_m, basis_n, k_m, k_n)?;
    if t.len() != basis_m.n() {
        return Err(Error::Dimension(format!(
            "point map has {} entries, source has {} vertices",
            t.len(),
            basis_m.n()
        )));
    }
    if let Some(&bad) = t.targets().iter().find(|&&j| j >= basis_n.n()) {
        return Err(Error::OutOfRange {
            index: bad,
            len: basis_n.n(),
        });
    }
    let phi_n = basis_n.phi();
    let mass = basis_m.mass();
    let pulled = DMatrix::from_fn(t.len(), k_n, |i, c| mass[i] * phi_n[(t.targets()[i], c)]);
    Ok(FunctionalMap {
        c: basis_m.truncated(k_m).tr_mul(&pulled),
    })
}

/// Least-squares conversion on a vertex subset: `C = Φ_M[S]⁺ Φ_N[T(S)]`,
/// where row `i` of `source_rows` is matched to row `targets[i]` of `target_rows`.
pub(crate) fn subset_pointmap_to_fmap(
    source_rows: &DMatrix<f64>,
    target_rows: &DMatrix<f64>,
    targets: &[usize],
    k_m: usize,
    k_n: usize,
) -> Result<FunctionalMap> {
    let a = source_rows.columns(0, k_m).into_owned();
    let b = DMatrix::from_fn(targets.len(), k_n, |i, c| target_rows[(targets[i], c)]);
    let svd = a.svd(true, true);
    let c = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidArgument(format!("least squares failed: {e}")))?;
    FunctionalMap::new(c)
}

/// Nearest-neighbour recovery: for every row `p` of `queries` (spectral
/// coordinates on M) the row `q` of `candidates` minimizing
/// `‖C Φ_N(q)ᵀ − Φ_M(p)ᵀ‖`. Ties go to the smallest `q`.
pub(crate) fn recover_targets(
    c: &FunctionalMap,
    queries: DMatrixView<'_, f64>,
    candidates: DMatrixView<'_, f64>,
    mode: NnMode,
) -> Result<Vec<usize>> {
    // Row q of Φ_N Cᵀ is (C Φ_N(q)ᵀ)ᵀ.
    let reference = candidates * c.matrix().transpose();
    let index = build_nn(&reference, mode)?;
    let q = queries.into_owned();
    Ok(index.query_rows(&q)?.into_iter().map(|(i, _)| i).collect())
}

/// Converts a functional map to a pointwise map `M → N`.
///
/// With `source_subset`, only those source vertices are queried and the
/// returned map lists their targets in subset order.
pub fn fmap_to_pointmap(
    c: &FunctionalMap,
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
    mode: NnMode,
    source_subset: Option<&[usize]>,
) -> Result<PointMap> {
    check_sizes(basis_m, basis_n, c.k_m(), c.k_n())?;
    let phi_m = basis_m.truncated(c.k_m());
    let phi_n = basis_n.truncated(c.k_n());
    let targets = match source_subset {
        None => recover_targets(c, phi_m, phi_n, mode)?,
        Some(subset) => {
            if let Some(&bad) = subset.iter().find(|&&p| p >= basis_m.n()) {
                return Err(Error::OutOfRange {
                    index: bad,
                    len: basis_m.n(),
                });
            }
            let rows = DMatrix::from_fn(subset.len(), c.k_m(), |i, j| phi_m[(subset[i], j)]);
            recover_targets(c, rows.as_view(), phi_n, mode)?
        }
    };
    Ok(PointMap { targets })
}

/// `Σ_{k=1}^{k_max} (1/k) ‖C_kᵀ C_k − I_k‖²_F` over the principal `k × k` blocks.
pub fn orthogonality_energy(c: &FunctionalMap, k_max: usize) -> Result<f64> {
    if k_max == 0 || k_max > c.k_m().min(c.k_n()) {
        return Err(Error::InvalidArgument(format!(
            "k_max = {k_max} must be in [1, {}]",
            c.k_m().min(c.k_n())
        )));
    }
    let m = c.matrix();
    // gram[(i, j)] accumulates Σ_{r<k} C[r,i] C[r,j] as rows are added.
    let mut gram = DMatrix::<f64>::zeros(k_max, k_max);
    let mut total = 0.0;
    for k in 1..=k_max {
        let r = k - 1;
        for i in 0..k_max {
            let ci = m[(r, i)];
            if ci == 0.0 {
                continue;
            }
            for j in 0..k_max {
                gram[(i, j)] += ci * m[(r, j)];
            }
        }
        let mut sq = 0.0;
        for i in 0..k {
            for j in 0..k {
                let d = gram[(i, j)] - if i == j { 1.0 } else { 0.0 };
                sq += d * d;
            }
        }
        total += sq / k as f64;
    }
    Ok(total)
}

/// Nearest orthonormal matrix `U Vᵀ` (all singular values set to 1).
pub fn icp_project(c: &FunctionalMap) -> Result<FunctionalMap> {
    if c.k_m() != c.k_n() {
        return Err(Error::Dimension(format!(
            "orthonormal projection needs a square map, got {}x{}",
            c.k_m(),
            c.k_n()
        )));
    }
    let svd = c.matrix().clone().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    Ok(FunctionalMap { c: u * vt })
}

/// Transfers `f` (values on N) to M: `Φ_M C (Φ_N)ᵀ A_N f`.
pub fn transfer_function(
    c: &FunctionalMap,
    f: &[f64],
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
) -> Result<Vec<f64>> {
    check_sizes(basis_m, basis_n, c.k_m(), c.k_n())?;
    if f.len() != basis_n.n() {
        return Err(Error::Dimension(format!(
            "function has {} values, target has {} vertices",
            f.len(),
            basis_n.n()
        )));
    }
    let weighted = DVector::from_iterator(f.len(), f.iter().zip(basis_n.mass()).map(|(x, a)| x * a));
    let coeffs = basis_n.truncated(c.k_n()).tr_mul(&weighted);
    let g = basis_m.truncated(c.k_m()) * (c.matrix() * coeffs);
    Ok(g.iter().copied().collect())
}

/// `C + σ G` with `G` i.i.d. standard normal, drawn row by row from a
/// ChaCha8 stream seeded with `seed`.
pub fn perturb_fmap(c: &FunctionalMap, sigma: f64, seed: u64) -> Result<FunctionalMap> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(c.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = c.matrix().clone();
    for r in 0..out.nrows() {
        for col in 0..out.ncols() {
            let g: f64 = StandardNormal.sample(&mut rng);
            out[(r, col)] += sigma * g;
        }
    }
    FunctionalMap::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::mesh_basis;
    use crate::testbed::icosphere;

    #[test]
    fn energy_small_cases() {
        assert_eq!(orthogonality_energy(&FunctionalMap::identity(5), 5).unwrap(), 0.0);
        let c = FunctionalMap::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]))).unwrap();
        assert!((orthogonality_energy(&c, 2).unwrap() - 13.5).abs() < 1e-12);
        assert!(orthogonality_energy(&c, 3).is_err());
        assert!(orthogonality_energy(&c, 0).is_err());
    }

    #[test]
    fn projection() {
        let c = FunctionalMap::new(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]))).unwrap();
        let p = icp_project(&c).unwrap();
        assert!((p.matrix() - DMatrix::identity(2, 2)).amax() < 1e-12);
        let rect = FunctionalMap::new(DMatrix::zeros(2, 3)).unwrap();
        assert!(icp_project(&rect).is_err());
    }

    #[test]
    fn perturbation() {
        let c = FunctionalMap::identity(4);
        assert_eq!(perturb_fmap(&c, 0.0, 7).unwrap(), c);
        assert_eq!(perturb_fmap(&c, 0.3, 7).unwrap(), perturb_fmap(&c, 0.3, 7).unwrap());
        assert_ne!(perturb_fmap(&c, 0.3, 7).unwrap(), perturb_fmap(&c, 0.3, 8).unwrap());
        assert!(perturb_fmap(&c, -1.0, 0).is_err());
    }

    #[test]
    fn identity_round_trip() {
        let b = mesh_basis(&icosphere(2), 10).unwrap();
        let id = PointMap::identity(b.n());
        let c = pointmap_to_fmap(&id, &b, &b, 10, 10).unwrap();
        assert!((c.matrix() - DMatrix::identity(10, 10)).amax() < 1e-8);
        // Exact identity C at full size recovers the identity map.
        let t = fmap_to_pointmap(&FunctionalMap::identity(10), &b, &b, NnMode::Exact, None).unwrap();
        assert_eq!(t, id);
        let sub = fmap_to_pointmap(&FunctionalMap::identity(10), &b, &b, NnMode::Exact, Some(&[5, 3])).unwrap();
        assert_eq!(sub.targets(), &[5, 3]);
    }

    #[test]
    fn dimension_errors() {
        let b = mesh_basis(&icosphere(1), 6).unwrap();
        let id = PointMap::identity(b.n());
        assert!(pointmap_to_fmap(&id, &b, &b, 7, 6).is_err());
        assert!(pointmap_to_fmap(&PointMap::identity(3), &b, &b, 2, 2).is_err());
        assert!(transfer_function(&FunctionalMap::identity(6), &[1.0; 3], &b, &b).is_err());
        assert!(PointMap::new(vec![0, 9], 5).is_err());
    }

    #[test]
    fn text_formats() {
        let c = FunctionalMap::new(DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 1e-17, 0.0, 2.0, 3.25])).unwrap();
        assert_eq!(FunctionalMap::parse(&c.to_text(), "m").unwrap(), c);
        assert!(FunctionalMap::parse("2 2\n1 0\n", "m").is_err());
        let t = PointMap::new(vec![2, 0, 1], 3).unwrap();
        assert_eq!(t.to_text(), "2\n0\n1\n");
        assert_eq!(PointMap::parse(&t.to_text(), "p", Some(3)).unwrap(), t);
        assert!(PointMap::parse("0\n3\n", "p", Some(3)).is_err());
        assert_eq!(t.inverse().unwrap().targets(), &[1, 2, 0]);
        assert_eq!(t.then(&t.inverse().unwrap()).unwrap(), PointMap::identity(3));
        assert!(PointMap::new(vec![0, 0], 2).unwrap().inverse().is_none());
    }
}
