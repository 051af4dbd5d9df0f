//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zoomout::testbed::icosphere;
use zoomout::{PointMap, SpectralBasis, TriangleMesh};

/// Icosphere with every vertex pushed radially by a random factor.
pub fn jittered_sphere(freq: usize, seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = icosphere(freq);
    let scales: Vec<f64> = (0..m.n()).map(|_| rng.gen_range(0.8..1.25)).collect();
    let verts = m
        .vertices()
        .iter()
        .zip(&scales)
        .map(|(p, s)| Point3::from(p.coords * *s))
        .collect();
    TriangleMesh::new(verts, m.triangles().to_vec()).unwrap()
}

/// Open grid strip `w × h` with random heights.
pub fn grid_strip(w: usize, h: usize, seed: u64) -> TriangleMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut verts = Vec::new();
    for j in 0..h {
        for i in 0..w {
            verts.push(Point3::new(
                i as f64 + rng.gen_range(-0.2..0.2),
                j as f64 + rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.5..0.5),
            ));
        }
    }
    let mut tris = Vec::new();
    for j in 0..h - 1 {
        for i in 0..w - 1 {
            let a = j * w + i;
            tris.push([a, a + 1, a + w]);
            tris.push([a + 1, a + w + 1, a + w]);
        }
    }
    TriangleMesh::new(verts, tris).unwrap()
}

pub fn random_map(n_src: usize, n_tgt: usize, seed: u64) -> PointMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointMap::new((0..n_src).map(|_| rng.gen_range(0..n_tgt)).collect(), n_tgt).unwrap()
}

/// Cotangent weights from side lengths via the law of cosines, with the
/// triangle area from Heron's formula. Returns dense `W` and the lumped mass.
pub fn cotan_oracle(mesh: &TriangleMesh) -> (DMatrix<f64>, Vec<f64>) {
    let n = mesh.n();
    let v = mesh.vertices();
    let mut w = DMatrix::zeros(n, n);
    let mut mass = vec![0.0; n];
    for t in mesh.triangles() {
        let len = |a: usize, b: usize| (v[t[a]] - v[t[b]]).norm();
        // Side opposite corner c.
        let side = [len(1, 2), len(2, 0), len(0, 1)];
        let s = (side[0] + side[1] + side[2]) / 2.0;
        let area = (s * (s - side[0]) * (s - side[1]) * (s - side[2])).max(0.0).sqrt();
        for c in 0..3 {
            let (a, b, o) = (side[(c + 1) % 3], side[(c + 2) % 3], side[c]);
            let cot = (a * a + b * b - o * o) / (4.0 * area);
            let (i, j) = (t[(c + 1) % 3], t[(c + 2) % 3]);
            w[(i, j)] -= cot / 2.0;
            w[(j, i)] -= cot / 2.0;
            w[(i, i)] += cot / 2.0;
            w[(j, j)] += cot / 2.0;
        }
        for &i in t {
            mass[i] += area / 3.0;
        }
    }
    (w, mass)
}

/// `(A^{1/2} Φ_M)⁺ A^{1/2} Π Φ_N` with an explicit permutation matrix.
pub fn dense_conversion(t: &PointMap, bm: &SpectralBasis, bn: &SpectralBasis, km: usize, kn: usize) -> DMatrix<f64> {
    let (nm, nn) = (bm.n(), bn.n());
    let mut pi = DMatrix::zeros(nm, nn);
    for (i, &j) in t.targets().iter().enumerate() {
        pi[(i, j)] = 1.0;
    }
    let sqrt_a = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        nm,
        bm.mass().iter().map(|a| a.sqrt()),
    ));
    let phi_m = bm.phi().columns(0, km).into_owned();
    let phi_n = bn.phi().columns(0, kn).into_owned();
    let pinv = (&sqrt_a * phi_m).pseudo_inverse(1e-14).unwrap();
    pinv * sqrt_a * pi * phi_n
}

/// Brute-force `argmin_q ‖C Φ_N(q)ᵀ − Φ_M(p)ᵀ‖` with the smallest-index tie rule.
pub fn scan_pointmap(c: &DMatrix<f64>, phi_m: &DMatrix<f64>, phi_n: &DMatrix<f64>) -> Vec<usize> {
    let (km, kn) = c.shape();
    (0..phi_m.nrows())
        .map(|p| {
            let mut best = (f64::INFINITY, 0);
            for q in 0..phi_n.nrows() {
                let mut d = 0.0;
                for r in 0..km {
                    let mut v = 0.0;
                    for s in 0..kn {
                        v += c[(r, s)] * phi_n[(q, s)];
                    }
                    let e = v - phi_m[(p, r)];
                    d += e * e;
                }
                if d < best.0 {
                    best = (d, q);
                }
            }
            best.1
        })
        .collect()
}

/// Nearest row by linear scan, smallest index on ties.
pub fn scan_nearest(points: &DMatrix<f64>, q: &[f64]) -> (usize, f64) {
    let mut best = (f64::INFINITY, 0);
    for r in 0..points.nrows() {
        let d: f64 = points.row(r).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, r);
        }
    }
    (best.1, best.0.sqrt())
}

/// Direct sum of `(1/k)‖C_kᵀ C_k − I‖²_F`.
pub fn energy_oracle(c: &DMatrix<f64>, kmax: usize) -> f64 {
    (1..=kmax)
        .map(|k| {
            let ck = c.view((0, 0), (k, k));
            let g = ck.transpose() * ck - DMatrix::identity(k, k);
            g.norm_squared() / k as f64
        })
        .sum()
}

/// All-pairs shortest paths over mesh edges.
pub fn floyd_warshall(mesh: &TriangleMesh) -> DMatrix<f64> {
    let n = mesh.n();
    let mut d = DMatrix::from_element(n, n, f64::INFINITY);
    for i in 0..n {
        d[(i, i)] = 0.0;
    }
    let v = mesh.vertices();
    for t in mesh.triangles() {
        for c in 0..3 {
            let (a, b) = (t[c], t[(c + 1) % 3]);
            let l = (v[a] - v[b]).norm();
            d[(a, b)] = d[(a, b)].min(l);
            d[(b, a)] = d[(b, a)].min(l);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[(i, k)] + d[(k, j)];
                if via < d[(i, j)] {
                    d[(i, j)] = via;
                }
            }
        }
    }
    d
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || a == b
}
