mod common;

use common::*;
use zoomout::fmap::{orthogonality_energy, pointmap_to_fmap};
use zoomout::refine::RefineConfig;
use zoomout::spectral::{cotan_laplacian, spectral_basis};
use zoomout::testbed::*;

#[test]
fn blob_is_closed_separated_and_deterministic() {
    let m = make_asymmetric_blob(642, 1).unwrap();
    assert_eq!(m.n(), 642);
    assert!(m.is_closed());
    assert_eq!(m.euler_characteristic(), 2);
    assert!(rel_close(m.total_area(), 1.0, 1e-12));
    let b = spectral_basis(&cotan_laplacian(&m), GAP_CHECK_COUNT).unwrap();
    assert!(eigenvalues_separated(b.eigenvalues(), GAP_THRESHOLD));
    let again = make_asymmetric_blob(642, 1).unwrap();
    assert_eq!(again.vertices(), m.vertices());
    assert!(make_asymmetric_blob(10, 1).is_err());
}

#[test]
fn permutation_pair_has_equal_spectra_and_exact_gt() {
    let mesh = make_asymmetric_blob(642, 2).unwrap();
    let pair = make_permutation_pair(&mesh, 5);
    let prep = PreparedPair::new(&pair, 30).unwrap();
    for (a, b) in prep.basis_m.eigenvalues().iter().zip(prep.basis_n.eigenvalues()) {
        assert!(rel_close(*a, *b, 1e-8) || (a.abs() < 1e-10 && b.abs() < 1e-10));
    }
    let c = prep.gt_fmap(20, 20).unwrap();
    assert!(orthogonality_energy(&c, 20).unwrap() <= 1e-4);

    // Diagonal with unit-magnitude entries up to sign.
    let m = c.matrix();
    let diag: f64 = (0..20).map(|i| m[(i, i)] * m[(i, i)]).sum();
    let off = m.norm_squared() - diag;
    assert!(off <= 1e-3 * diag, "off {off} diag {diag}");
    let gram = m.transpose() * m;
    assert!((gram - nalgebra::DMatrix::identity(20, 20)).amax() <= 1e-3);

    // A random map is far from orthonormal.
    let rand = random_map(pair.mesh_m.n(), pair.mesh_n.n(), 9);
    let cr = pointmap_to_fmap(&rand, &prep.basis_m, &prep.basis_n, 20, 20).unwrap();
    let e_gt = orthogonality_energy(&c, 20).unwrap();
    assert!(orthogonality_energy(&cr, 20).unwrap() >= 10.0 * e_gt + 0.1);
}

#[test]
fn bent_pairs_depart_from_isometry_with_bend() {
    let mesh = make_asymmetric_blob(642, 3).unwrap();
    let flat = make_bent_pair(&mesh, 0.0, 4).unwrap();
    assert_eq!(flat.mesh_n.vertices(), mesh.vertices());
    let energy = |bend: f64| {
        let pair = make_bent_pair(&mesh, bend, 4).unwrap();
        let prep = PreparedPair::new(&pair, 20).unwrap();
        orthogonality_energy(&prep.gt_fmap(20, 20).unwrap(), 20).unwrap()
    };
    assert!(energy(0.0) <= 1e-4);
    let levels: Vec<f64> = [0.5, 1.5, 3.0].iter().map(|&b| energy(b)).collect();
    assert!(levels.windows(2).all(|w| w[0] < w[1]), "{levels:?}");
    assert!(make_bent_pair(&mesh, -1.0, 4).is_err());
}

#[test]
fn sparse_accuracy_agrees_with_full_metric() {
    let mesh = make_asymmetric_blob(300, 4).unwrap();
    let pair = make_permutation_pair(&mesh, 6);
    let map = random_map(mesh.n(), mesh.n(), 1);
    let geo = zoomout::metrics::all_pairs_geodesics(&pair.mesh_n).unwrap();
    let norm = zoomout::metrics::default_normalizer(&pair.mesh_n);
    let full = zoomout::metrics::accuracy(&map, &pair.gt_map, &geo, norm).unwrap();
    assert!(rel_close(sparse_accuracy(&map, &pair.gt_map, &pair.mesh_n).unwrap(), full, 1e-12));
    assert_eq!(sparse_accuracy(&pair.gt_map, &pair.gt_map, &pair.mesh_n).unwrap(), 0.0);
    assert_eq!(hit_rate(&pair.gt_map, &pair.gt_map), 1.0);
}

#[test]
fn stability_without_noise_always_converges() {
    let mesh = make_asymmetric_blob(642, 5).unwrap();
    let pair = make_permutation_pair(&mesh, 7);
    let cfg = RefineConfig::square(4, 50, 2);
    let res = run_stability_experiment(&pair, 0.0, 3, &cfg).unwrap();
    assert_eq!(res.summary["converged"], 3);
    assert_eq!(res.traces.len(), 3);
    let again = run_stability_experiment(&pair, 0.0, 3, &cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&res.summary).unwrap(),
        serde_json::to_string(&again.summary).unwrap()
    );
    assert!(run_stability_experiment(&pair, 0.1, 0, &cfg).is_err());
}

#[test]
fn energy_trace_from_exact_init_stays_near_zero() {
    let mesh = make_asymmetric_blob(642, 6).unwrap();
    let pair = make_permutation_pair(&mesh, 8);
    let cfg = RefineConfig::square(10, 40, 5);
    let res = run_energy_trace_experiment(&pair, &cfg, 4, 0.0).unwrap();
    let (zo, icp) = (&res.traces[0], &res.traces[1]);
    // One record per size 10, 15, ..., 40 and one per ICP iteration.
    assert_eq!(zo.len(), 7);
    assert_eq!(icp.len(), 4);
    assert!(zo.energies().iter().all(|e| *e <= 1e-4), "{:?}", zo.energies());
    assert!(icp.energies().iter().all(|e| *e <= 1e-4), "{:?}", icp.energies());
    assert!(run_energy_trace_experiment(&pair, &RefineConfig { kmax_n: 30, ..cfg }, 4, 0.0).is_err());
}

#[test]
fn subsample_experiment_reports_both_runs() {
    let mesh = make_asymmetric_blob(642, 7).unwrap();
    let pair = make_permutation_pair(&mesh, 9);
    let cfg = RefineConfig {
        sample_count: 150,
        ..RefineConfig::square(10, 40, 5)
    };
    let res = run_subsample_experiment(&pair, &cfg, 0.0).unwrap();
    assert_eq!(res.summary["dense_hit_rate"], 1.0);
    assert_eq!(res.summary["subsampled_hit_rate"], 1.0);
    assert_eq!(res.reports.len(), 2);
    assert!(run_subsample_experiment(&pair, &RefineConfig::square(10, 40, 5), 0.0).is_err());
}
