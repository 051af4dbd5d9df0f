//! Envelope (skyline) Cholesky factorization under a reverse Cuthill–McKee
//! ordering. Mesh Laplacians have small profiles after RCM, which keeps the
//! factor compact enough for the shift-invert solves.

use std::collections::VecDeque;

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Reverse Cuthill–McKee permutation of the symmetric sparsity pattern.
/// `perm[new] = old`.
pub fn reverse_cuthill_mckee(m: &CsrMatrix) -> Vec<usize> {
    let n = m.n();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| m.row(i).0.iter().copied().filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        let start = pseudo_peripheral(seed, &adj, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_unstable_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Levels of a breadth-first search restricted to the component of `start`.
fn bfs_levels(start: usize, adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut seen = std::collections::HashSet::from([start]);
    let mut levels = vec![vec![start]];
    loop {
        let mut next = Vec::new();
        for &v in levels.last().unwrap() {
            for &u in &adj[v] {
                if seen.insert(u) {
                    next.push(u);
                }
            }
        }
        if next.is_empty() {
            return levels;
        }
        levels.push(next);
    }
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut v = seed;
    let mut ecc = bfs_levels(v, adj).len();
    for _ in 0..8 {
        let levels = bfs_levels(v, adj);
        let cand = *levels
            .last()
            .unwrap()
            .iter()
            .min_by_key(|&&u| (degree[u], u))
            .unwrap();
        let e = bfs_levels(cand, adj).len();
        if e <= ecc {
            break;
        }
        v = cand;
        ecc = e;
    }
    v
}

/// Lower-triangular Cholesky factor stored row by row over each row's envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    rowptr: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors a symmetric positive definite matrix.
    pub fn factor(m: &CsrMatrix) -> Result<Self> {
        let n = m.n();
        let perm = reverse_cuthill_mckee(m);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for &j in m.row(old).0 {
                first[new] = first[new].min(iperm[j]);
            }
        }
        let mut rowptr = Vec::with_capacity(n + 1);
        rowptr.push(0);
        for i in 0..n {
            rowptr.push(rowptr[i] + i - first[i] + 1);
        }
        let mut values = vec![0.0; rowptr[n]];
        for (new, &old) in perm.iter().enumerate() {
            let (cols, vals) = m.row(old);
            for (&j, &v) in cols.iter().zip(vals) {
                let nj = iperm[j];
                if nj <= new {
                    values[rowptr[new] + nj - first[new]] += v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let ri = rowptr[i];
            for j in fi..i {
                let fj = first[j];
                let rj = rowptr[j];
                let lo = fi.max(fj);
                let (head, row_i) = values.split_at_mut(ri);
                let row_j = &head[rj..rj + (j - fj + 1)];
                let dot: f64 = row_i[lo - fi..j - fi]
                    .iter()
                    .zip(&row_j[lo - fj..j - fj])
                    .map(|(a, b)| a * b)
                    .sum();
                row_i[j - fi] = (row_i[j - fi] - dot) / row_j[j - fj];
            }
            let row_i = &mut values[ri..ri + (i - fi + 1)];
            let (off, diag) = row_i.split_at_mut(i - fi);
            let d = diag[0] - off.iter().map(|x| x * x).sum::<f64>();
            if d.is_nan() || d <= 0.0 {
                return Err(Error::NotPositiveDefinite { pivot: i });
            }
            diag[0] = d.sqrt();
        }
        Ok(Self {
            perm,
            first,
            rowptr,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    /// Number of stored factor entries.
    pub fn profile(&self) -> usize {
        self.values.len()
    }

    /// Solves `M x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n();
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        // L y = Pb
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.rowptr[i]..self.rowptr[i + 1]];
            let dot: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / row[i - fi];
        }
        // L^T x = y
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.rowptr[i]..self.rowptr[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for (yk, &l) in y[fi..i].iter_mut().zip(&row[..i - fi]) {
                *yk -= l * xi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trip = Vec::new();
        let mut diag = vec![0.0; n];
        for _ in 0..3 * n {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i == j {
                continue;
            }
            let v: f64 = -rng.gen_range(0.1..1.0);
            trip.push((i, j, v));
            trip.push((j, i, v));
            diag[i] -= v;
            diag[j] -= v;
        }
        for (i, d) in diag.into_iter().enumerate() {
            trip.push((i, i, d + 0.5));
        }
        CsrMatrix::from_triplets(n, trip)
    }

    #[test]
    fn rcm_is_a_permutation() {
        let m = random_spd(60, 3);
        let mut p = reverse_cuthill_mckee(&m);
        p.sort_unstable();
        assert_eq!(p, (0..60).collect::<Vec<_>>());
    }

    #[test]
    fn solve_matches_dense() {
        for seed in 0..5 {
            let m = random_spd(80, seed);
            let f = EnvelopeCholesky::factor(&m).unwrap();
            let b: Vec<f64> = (0..80).map(|i| (i as f64 * 0.37).sin()).collect();
            let mut x = b.clone();
            f.solve_in_place(&mut x);
            let dense: DMatrix<f64> = m.to_dense();
            let r = &dense * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b);
            assert!(r.norm() < 1e-10, "residual {}", r.norm());
        }
    }

    #[test]
    fn indefinite_rejected() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(
            EnvelopeCholesky::factor(&m),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
