mod common;

use common::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zoomout::fmap::{fmap_to_pointmap, orthogonality_energy, pointmap_to_fmap, FunctionalMap};
use zoomout::metrics::{self, dijkstra_geodesics};
use zoomout::sampling::{build_nn, NnMode};
use zoomout::spectral::{cotan_laplacian, spectral_basis, spectral_basis_with, EigenOptions};

const CASES: u64 = 50;

#[test]
fn cotan_matches_law_of_cosines() {
    for seed in 0..CASES {
        let mesh = if seed % 2 == 0 {
            jittered_sphere(2, seed)
        } else {
            grid_strip(5, 6, seed)
        };
        let lap = cotan_laplacian(&mesh);
        let (w, mass) = cotan_oracle(&mesh);
        let dense = lap.stiffness.to_dense();
        let scale = w.amax();
        assert!((dense - &w).amax() <= 1e-12 * scale, "seed {seed}");
        for (a, b) in lap.mass.iter().zip(&mass) {
            assert!(rel_close(*a, *b, 1e-12));
        }
    }
}

#[test]
fn eigenvalues_match_dense_schur() {
    for seed in 0..CASES {
        let mesh = jittered_sphere(2, seed);
        let lap = cotan_laplacian(&mesh);
        let k = 8 + (seed as usize % 8);
        // Force the sparse shift-invert path.
        let opts = EigenOptions {
            dense_threshold: 0,
            ..Default::default()
        };
        let basis = spectral_basis_with(&lap, k, &opts).unwrap();
        let w = lap.stiffness.to_dense();
        let a_inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            lap.n(),
            lap.mass.iter().map(|a| 1.0 / a),
        ));
        let mut reference: Vec<f64> = (a_inv * w).complex_eigenvalues().iter().map(|z| z.re).collect();
        reference.sort_by(f64::total_cmp);
        for (i, (got, want)) in basis.eigenvalues().iter().zip(&reference).enumerate() {
            assert!(
                (got - want).abs() <= 1e-8 * want.abs().max(1.0),
                "seed {seed} eigenvalue {i}: {got} vs {want}"
            );
        }
        // A-orthonormal columns.
        let mass = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(basis.mass()));
        let gram = basis.phi().transpose() * mass * basis.phi();
        assert!((gram - DMatrix::identity(k, k)).amax() < 1e-9, "seed {seed}");
    }
}

#[test]
fn conversion_matches_weighted_pseudo_inverse() {
    for seed in 0..CASES {
        let mm = jittered_sphere(2, seed);
        let mn = jittered_sphere(2, seed + 1000);
        let bm = spectral_basis(&cotan_laplacian(&mm), 12).unwrap();
        let bn = spectral_basis(&cotan_laplacian(&mn), 12).unwrap();
        let t = random_map(mm.n(), mn.n(), seed);
        let (km, kn) = (3 + seed as usize % 10, 2 + (seed as usize * 7) % 11);
        let got = pointmap_to_fmap(&t, &bm, &bn, km, kn).unwrap();
        let want = dense_conversion(&t, &bm, &bn, km, kn);
        assert!((got.matrix() - want).amax() <= 1e-10, "seed {seed}");
    }
}

#[test]
fn pointwise_recovery_matches_linear_scan() {
    for seed in 0..CASES {
        let mm = jittered_sphere(2, seed);
        let mn = jittered_sphere(2, seed + 500);
        let bm = spectral_basis(&cotan_laplacian(&mm), 10).unwrap();
        let bn = spectral_basis(&cotan_laplacian(&mn), 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (km, kn) = (rng.gen_range(1..=10), rng.gen_range(1..=10));
        let c = DMatrix::from_fn(km, kn, |_, _| rng.gen_range(-1.0..1.0));
        let got = fmap_to_pointmap(&FunctionalMap::new(c.clone()).unwrap(), &bm, &bn, NnMode::Exact, None).unwrap();
        let want = scan_pointmap(&c, bm.phi(), bn.phi());
        assert_eq!(got.targets(), &want[..], "seed {seed}");
    }
}

#[test]
fn exact_nn_matches_linear_scan() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, k) = (rng.gen_range(1..400), rng.gen_range(1..30));
        let pts = DMatrix::from_fn(m, k, |_, _| rng.gen_range(-1.0..1.0));
        let idx = build_nn(&pts, NnMode::Exact).unwrap();
        for _ in 0..20 {
            let q: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.2..1.2)).collect();
            let (i, d) = idx.query(&q).unwrap();
            let (j, e) = scan_nearest(&pts, &q);
            assert_eq!(i, j, "seed {seed}");
            assert!((d - e).abs() <= 1e-12 * e.max(1.0));
        }
    }
}

#[test]
fn energy_matches_direct_arithmetic() {
    for seed in 0..CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (km, kn) = (rng.gen_range(1..25), rng.gen_range(1..25));
        let c = DMatrix::from_fn(km, kn, |_, _| rng.gen_range(-2.0..2.0));
        let kmax = rng.gen_range(1..=km.min(kn));
        let got = orthogonality_energy(&FunctionalMap::new(c.clone()).unwrap(), kmax).unwrap();
        assert!(rel_close(got, energy_oracle(&c, kmax), 1e-12), "seed {seed}");
    }
}

#[test]
fn dijkstra_matches_floyd_warshall() {
    for seed in 0..CASES {
        let mesh = if seed % 2 == 0 {
            jittered_sphere(2, seed)
        } else {
            grid_strip(2 + seed as usize % 9, 2 + (seed as usize / 3) % 9, seed)
        };
        assert!(mesh.n() <= 100);
        let fw = floyd_warshall(&mesh);
        let g = metrics::all_pairs_geodesics(&mesh).unwrap();
        for a in 0..mesh.n() {
            for b in 0..mesh.n() {
                assert!(rel_close(g.distance(a, b).unwrap(), fw[(a, b)], 1e-12), "seed {seed}");
            }
        }
        // Symmetric and zero on the diagonal.
        for a in 0..mesh.n() {
            assert_eq!(g.distance(a, a).unwrap(), 0.0);
        }
    }
}

#[test]
fn metrics_match_direct_loops() {
    for seed in 0..CASES {
        let mm = jittered_sphere(2, seed);
        let mn = jittered_sphere(2, seed + 77);
        let (nm, nn) = (mm.n(), mn.n());
        let t = random_map(nm, nn, seed);
        let rev = random_map(nn, nm, seed + 1);
        let gt = random_map(nm, nn, seed + 2);
        let fw_m = floyd_warshall(&mm);
        let fw_n = floyd_warshall(&mn);
        let geo_n = metrics::all_pairs_geodesics(&mn).unwrap();
        let geo_m = metrics::all_pairs_geodesics(&mm).unwrap();
        let norm = 0.5 + seed as f64 / 10.0;

        let acc: f64 = (0..nm).map(|p| fw_n[(t.targets()[p], gt.targets()[p])]).sum::<f64>() / (nm as f64 * norm);
        assert!(rel_close(metrics::accuracy(&t, &gt, &geo_n, norm).unwrap(), acc, 1e-12));

        let bij: f64 = (0..nm).map(|p| fw_m[(rev.targets()[t.targets()[p]], p)]).sum::<f64>() / (nm as f64 * norm);
        assert!(rel_close(metrics::bijectivity(&t, &rev, &geo_m, norm).unwrap(), bij, 1e-12));

        let image: std::collections::BTreeSet<usize> = t.targets().iter().copied().collect();
        let unc = 100.0 * (nn - image.len()) as f64 / nn as f64;
        assert!(rel_close(metrics::uncoverage(&t, &mn).unwrap(), unc, 1e-12));

        let mut ed = 0.0;
        let mut count = 0;
        for tri in mm.triangles() {
            for c in 0..3 {
                let (a, b) = (tri[c], tri[(c + 1) % 3]);
                // Each interior edge appears in two triangles; count it once.
                if a < b {
                    let len = (mm.vertices()[a] - mm.vertices()[b]).norm();
                    let r = fw_n[(t.targets()[a], t.targets()[b])] / len - 1.0;
                    ed += r * r;
                    count += 1;
                }
            }
        }
        assert_eq!(count, mm.edge_set().len());
        assert!(rel_close(metrics::edge_distortion(&t, &mm.edge_set(), &geo_n).unwrap(), ed / count as f64, 1e-12));

        let lap = cotan_laplacian(&mm);
        let w = lap.stiffness.to_dense();
        let s = 1.0 / mn.total_area().sqrt();
        let mut dir = 0.0;
        for c in 0..3 {
            let f: Vec<f64> = t.targets().iter().map(|&q| mn.vertices()[q][c] * s).collect();
            for i in 0..nm {
                for j in 0..nm {
                    dir += f[i] * w[(i, j)] * f[j];
                }
            }
        }
        dir /= 3.0;
        let got = metrics::dirichlet_energy(&t, &lap, &mn).unwrap();
        assert!(rel_close(got, dir, 1e-12), "seed {seed}: {got} vs {dir}");
    }
}

#[test]
fn metrics_invariant_under_relabeling() {
    for seed in 0..CASES / 5 {
        let mm = jittered_sphere(2, seed);
        let mn = jittered_sphere(2, seed + 9);
        let t = random_map(mm.n(), mn.n(), seed);
        let gt = random_map(mm.n(), mn.n(), seed + 3);
        let pm = zoomout::testbed::make_permutation_pair(&mm, seed + 10);
        let pn = zoomout::testbed::make_permutation_pair(&mn, seed + 11);
        // σ_N ∘ T ∘ σ_M⁻¹ on the relabeled meshes.
        let relabel = |m: &zoomout::PointMap| {
            pm.gt_map_rev.then(m).unwrap().then(&pn.gt_map).unwrap()
        };
        let norm = 1.0;
        let a = metrics::accuracy(&t, &gt, &metrics::all_pairs_geodesics(&mn).unwrap(), norm).unwrap();
        let b = metrics::accuracy(
            &relabel(&t),
            &relabel(&gt),
            &metrics::all_pairs_geodesics(&pn.mesh_n).unwrap(),
            norm,
        )
        .unwrap();
        assert!(rel_close(a, b, 1e-12));
        let ea = metrics::edge_distortion(&t, &mm.edge_set(), &metrics::all_pairs_geodesics(&mn).unwrap()).unwrap();
        let eb = metrics::edge_distortion(
            &relabel(&t),
            &pm.mesh_n.edge_set(),
            &metrics::all_pairs_geodesics(&pn.mesh_n).unwrap(),
        )
        .unwrap();
        assert!(rel_close(ea, eb, 1e-12));
        let sources: Vec<usize> = (0..mn.n()).step_by(3).collect();
        let partial = dijkstra_geodesics(&mn, &mn.edge_set(), &sources).unwrap();
        assert_eq!(partial.sources(), &sources[..]);
    }
}
