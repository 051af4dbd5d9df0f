//! Synthetic shape pairs with known ground truth, and experiment drivers.

use std::collections::HashMap;

use nalgebra::{Point3, Unit, UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::fmap::{fmap_to_pointmap, perturb_fmap, pointmap_to_fmap, FunctionalMap, PointMap};
use crate::mesh::TriangleMesh;
use crate::metrics::{self, MapReport};
use crate::refine::{self, icp_refine_with, IcpConfig, InitialMap, RefineConfig, RefineTrace};
use crate::spectral::{cotan_laplacian, spectral_basis, SpectralBasis};

const ICOSAHEDRON_FACES: [[usize; 3]; 20] = [
    [0, 11, 5],
    [0, 5, 1],
    [0, 1, 7],
    [0, 7, 10],
    [0, 10, 11],
    [1, 5, 9],
    [5, 11, 4],
    [11, 10, 2],
    [10, 7, 6],
    [7, 1, 8],
    [3, 9, 4],
    [3, 4, 2],
    [3, 2, 6],
    [3, 6, 8],
    [3, 8, 9],
    [4, 9, 5],
    [2, 4, 11],
    [6, 2, 10],
    [8, 6, 7],
    [9, 8, 1],
];

fn icosahedron_vertices() -> Vec<Point3<f64>> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Point3::from(Vector3::new(x, y, z).normalize()))
    .collect()
}

/// Unit sphere from an icosahedron with every face split into `freq²`
/// triangles; `10 freq² + 2` vertices.
pub fn icosphere(freq: usize) -> TriangleMesh {
    let freq = freq.max(1);
    let base = icosahedron_vertices();
    let mut vertices = Vec::new();
    // Key: the face corners with nonzero integer weight, sorted, so vertices on
    // shared edges and corners are created once.
    let mut ids: HashMap<Vec<(usize, usize)>, usize> = HashMap::new();
    let mut vertex = |weights: [(usize, usize); 3]| -> usize {
        let mut key: Vec<(usize, usize)> = weights.iter().copied().filter(|w| w.1 > 0).collect();
        key.sort_unstable();
        *ids.entry(key).or_insert_with(|| {
            let p = weights
                .iter()
                .fold(Vector3::zeros(), |acc, &(c, w)| acc + base[c].coords * w as f64);
            vertices.push(Point3::from(p.normalize()));
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(20 * freq * freq);
    for &[a, b, c] in &ICOSAHEDRON_FACES {
        let at = |i: usize, j: usize| [(a, freq - i - j), (b, i), (c, j)];
        for i in 0..freq {
            for j in 0..freq - i {
                let p = vertex(at(i, j));
                let q = vertex(at(i + 1, j));
                let r = vertex(at(i, j + 1));
                triangles.push([p, q, r]);
                if i + j + 1 < freq {
                    let s = vertex(at(i + 1, j + 1));
                    triangles.push([q, s, r]);
                }
            }
        }
    }
    TriangleMesh::new(vertices, triangles).expect("icosphere is valid")
}

/// Number of leading eigenvalues checked for separation.
pub const GAP_CHECK_COUNT: usize = 30;
/// Minimum relative gap between consecutive checked eigenvalues.
pub const GAP_THRESHOLD: f64 = 1e-4;
const BLOB_ATTEMPTS: u64 = 10;
// Strong bumps keep reflected or rotated maps from being near-isometries.
const BLOB_BUMPS: usize = 10;

/// True if the first `count` eigenvalues are pairwise separated by more than
/// `threshold` relative to the larger of each neighbouring pair.
pub fn eigenvalues_separated(lambda: &[f64], threshold: f64) -> bool {
    lambda
        .windows(2)
        .all(|w| w[1] - w[0] > threshold * w[1].abs().max(f64::MIN_POSITIVE))
}

fn blob_candidate(freq: usize, seed: u64) -> Result<TriangleMesh> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sphere = icosphere(freq);
    let axes = Vector3::new(
        1.0,
        0.8 + rng.gen_range(-0.05..0.05),
        0.65 + rng.gen_range(-0.05..0.05),
    );
    let bumps: Vec<(Vector3<f64>, f64, f64)> = (0..BLOB_BUMPS)
        .map(|_| {
            let c = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .try_normalize(1e-9)
            .unwrap_or_else(Vector3::x);
            (c, rng.gen_range(-0.3..0.5), rng.gen_range(0.3..0.6))
        })
        .collect();
    let rot = UnitQuaternion::from_euler_angles(
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );
    let mesh = sphere.map_vertices(|p| {
        let u = p.coords;
        let radial = 1.0
            + bumps
                .iter()
                .map(|(c, amp, w)| amp * (-(u - c).norm_squared() / (2.0 * w * w)).exp())
                .sum::<f64>();
        Point3::from(rot * (u * radial).component_mul(&axes))
    });
    mesh.rescale_to_area(1.0)
}

/// A closed genus-0 blob with about `n_target` vertices and well-separated
/// low eigenvalues, deterministic per seed. Surface area is normalized to 1.
pub fn make_asymmetric_blob(n_target: usize, seed: u64) -> Result<TriangleMesh> {
    if n_target < 50 {
        return Err(Error::InvalidArgument(format!(
            "n_target must be >= 50, got {n_target}"
        )));
    }
    let freq = (((n_target - 2) as f64 / 10.0).sqrt().round() as usize).max(1);
    for attempt in 0..BLOB_ATTEMPTS {
        let mesh = blob_candidate(freq, seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9)))?;
        let k = GAP_CHECK_COUNT.min(mesh.n());
        let basis = spectral_basis(&cotan_laplacian(&mesh), k)?;
        if eigenvalues_separated(basis.eigenvalues(), GAP_THRESHOLD) {
            return Ok(mesh);
        }
        log::debug!("blob seed {seed} attempt {attempt} failed the eigenvalue gap check");
    }
    Err(Error::GapCheckFailed {
        attempts: BLOB_ATTEMPTS as usize,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    PermutationIsometry,
    NearIsometricBend,
}

/// Two meshes with a known vertex correspondence in both directions.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub mesh_m: TriangleMesh,
    pub mesh_n: TriangleMesh,
    pub gt_map: PointMap,
    pub gt_map_rev: PointMap,
    pub kind: PairKind,
}

/// Relabels the vertices of `mesh` with a seeded random permutation.
pub fn make_permutation_pair(mesh: &TriangleMesh, seed: u64) -> SyntheticPair {
    let mut perm: Vec<usize> = (0..mesh.n()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    make_permutation_pair_with(mesh, perm).expect("shuffle is a permutation")
}

/// Relabels with an explicit permutation: vertex `p` of M becomes vertex
/// `perm[p]` of N.
pub fn make_permutation_pair_with(mesh: &TriangleMesh, perm: Vec<usize>) -> Result<SyntheticPair> {
    let n = mesh.n();
    let gt_map = PointMap::new(perm, n)?;
    let gt_map_rev = gt_map
        .inverse()
        .ok_or_else(|| Error::InvalidArgument("relabeling is not a permutation".into()))?;
    let perm = gt_map.targets();
    let vertices = gt_map_rev.targets().iter().map(|&p| mesh.vertices()[p]).collect();
    let triangles = mesh
        .triangles()
        .iter()
        .map(|t| [perm[t[0]], perm[t[1]], perm[t[2]]])
        .collect();
    Ok(SyntheticPair {
        mesh_m: mesh.clone(),
        mesh_n: TriangleMesh::new(vertices, triangles)?,
        gt_map,
        gt_map_rev,
        kind: PairKind::PermutationIsometry,
    })
}

/// Bends `mesh` around a seeded axis with curvature `bend` (per unit length
/// along the bending direction). The labeling is kept, so ground truth is the
/// identity; `bend = 0` returns an exact copy.
pub fn make_bent_pair(mesh: &TriangleMesh, bend: f64, seed: u64) -> Result<SyntheticPair> {
    if !(bend >= 0.0 && bend.is_finite()) {
        return Err(Error::InvalidArgument(format!("bend must be >= 0, got {bend}")));
    }
    let n = mesh.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot = UnitQuaternion::from_axis_angle(
        &Unit::new_normalize(Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.1..1.0),
        )),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );
    let (d, up) = (rot * Vector3::x(), rot * Vector3::y());
    let center = mesh
        .vertices()
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.coords)
        / n as f64;
    let bent = if bend == 0.0 {
        mesh.clone()
    } else {
        let radius = 1.0 / bend;
        mesh.map_vertices(|p| {
            let rel = p.coords - center;
            let (u, v) = (rel.dot(&d), rel.dot(&up));
            let rest = rel - d * u - up * v;
            let theta = u / radius;
            let (nu, nv) = ((radius - v) * theta.sin(), radius - (radius - v) * theta.cos());
            Point3::from(center + rest + d * nu + up * nv)
        })
    };
    Ok(SyntheticPair {
        mesh_m: mesh.clone(),
        mesh_n: TriangleMesh::new(bent.vertices().to_vec(), mesh.triangles().to_vec())?,
        gt_map: PointMap::identity(n),
        gt_map_rev: PointMap::identity(n),
        kind: PairKind::NearIsometricBend,
    })
}

/// A pair with eigenbases and the ground-truth functional map source.
pub struct PreparedPair<'a> {
    pub pair: &'a SyntheticPair,
    pub basis_m: SpectralBasis,
    pub basis_n: SpectralBasis,
}

impl<'a> PreparedPair<'a> {
    pub fn new(pair: &'a SyntheticPair, k: usize) -> Result<Self> {
        Ok(Self {
            pair,
            basis_m: spectral_basis(&cotan_laplacian(&pair.mesh_m), k)?,
            basis_n: spectral_basis(&cotan_laplacian(&pair.mesh_n), k)?,
        })
    }

    /// Ground-truth functional map at `k_m × k_n`.
    pub fn gt_fmap(&self, k_m: usize, k_n: usize) -> Result<FunctionalMap> {
        pointmap_to_fmap(&self.pair.gt_map, &self.basis_m, &self.basis_n, k_m, k_n)
    }

    /// Fraction of source vertices mapped to their ground-truth target.
    pub fn hit_rate(&self, map: &PointMap) -> f64 {
        hit_rate(map, &self.pair.gt_map)
    }

    /// Mean geodesic error normalized by `√area_N`.
    pub fn accuracy(&self, map: &PointMap) -> Result<f64> {
        sparse_accuracy(map, &self.pair.gt_map, &self.pair.mesh_n)
    }

    /// Largest per-vertex geodesic error normalized by `√area_N`.
    pub fn max_error(&self, map: &PointMap) -> Result<f64> {
        let e = sparse_errors(map, &self.pair.gt_map, &self.pair.mesh_n)?;
        Ok(e.into_iter().fold(0.0, f64::max))
    }
}

/// Fraction of entries equal in both maps.
pub fn hit_rate(map: &PointMap, gt: &PointMap) -> f64 {
    let same = map
        .targets()
        .iter()
        .zip(gt.targets())
        .filter(|(a, b)| a == b)
        .count();
    same as f64 / gt.len().max(1) as f64
}

/// Per-vertex geodesic error normalized by `√area_N`. Dijkstra only runs from
/// mismatched ground-truth targets.
pub fn sparse_errors(map: &PointMap, gt: &PointMap, mesh_n: &TriangleMesh) -> Result<Vec<f64>> {
    if map.len() != gt.len() {
        return Err(Error::Dimension("maps differ in length".into()));
    }
    let mut wrong: Vec<usize> = map
        .targets()
        .iter()
        .zip(gt.targets())
        .filter(|(a, b)| a != b)
        .map(|(_, &b)| b)
        .collect();
    wrong.sort_unstable();
    wrong.dedup();
    let geo = metrics::dijkstra_geodesics(mesh_n, &mesh_n.edge_set(), &wrong)?;
    let norm = metrics::default_normalizer(mesh_n);
    map.targets()
        .iter()
        .zip(gt.targets())
        .map(|(&t, &g)| if t == g { Ok(0.0) } else { Ok(geo.distance(g, t)? / norm) })
        .collect()
}

/// Mean of [`sparse_errors`].
pub fn sparse_accuracy(map: &PointMap, gt: &PointMap, mesh_n: &TriangleMesh) -> Result<f64> {
    let e = sparse_errors(map, gt, mesh_n)?;
    Ok(e.iter().sum::<f64>() / e.len().max(1) as f64)
}

/// Outcome of an experiment driver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub label: String,
    pub parameters: serde_json::Value,
    pub traces: Vec<RefineTrace>,
    pub reports: Vec<MapReport>,
    /// Experiment-specific per-trial values and aggregates.
    pub summary: serde_json::Value,
}

fn report_for(pair: &SyntheticPair, map: &PointMap) -> Result<MapReport> {
    metrics::evaluate(&metrics::EvalInputs {
        mesh_m: &pair.mesh_m,
        mesh_n: &pair.mesh_n,
        map,
        map_reverse: None,
        gt: Some(&pair.gt_map),
        normalizer: None,
        area_uncoverage: false,
    })
}

/// Per-trial perturbation seed.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add(trial as u64)
}

/// Hit rate above which a trial counts as converged.
pub const CONVERGED_HIT_RATE: f64 = 0.95;

/// Perturbs the `k0` ground-truth map with noise `sigma` in each trial and
/// refines it with `cfg`.
pub fn run_stability_experiment(
    pair: &SyntheticPair,
    sigma: f64,
    trials: usize,
    cfg: &RefineConfig,
) -> Result<ExperimentResult> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    cfg.validate()?;
    let prep = PreparedPair::new(pair, cfg.kmax_m.max(cfg.kmax_n))?;
    let gt = prep.gt_fmap(cfg.k0_m, cfg.k0_n)?;
    let mut traces = Vec::with_capacity(trials);
    let mut reports = Vec::with_capacity(trials);
    let mut rows = Vec::with_capacity(trials);
    let mut converged = 0;
    for trial in 0..trials {
        let seed = trial_seed(cfg.seed, trial);
        let init = perturb_fmap(&gt, sigma, seed)?;
        let init_map = fmap_to_pointmap(&init, &prep.basis_m, &prep.basis_n, cfg.nn_mode, None)?;
        let out = refine::zoomout_meshes(
            &InitialMap::Functional(init),
            (&pair.mesh_m, &prep.basis_m),
            (&pair.mesh_n, &prep.basis_n),
            &RefineConfig { seed, ..cfg.clone() },
        )?;
        let hit = prep.hit_rate(&out.pointmap);
        converged += usize::from(hit >= CONVERGED_HIT_RATE);
        rows.push(json!({
            "seed": seed,
            "initial_accuracy": prep.accuracy(&init_map)?,
            "initial_max_error": prep.max_error(&init_map)?,
            "final_accuracy": prep.accuracy(&out.pointmap)?,
            "hit_rate": hit,
        }));
        reports.push(report_for(pair, &out.pointmap)?);
        traces.push(out.trace);
    }
    Ok(ExperimentResult {
        label: "stability".into(),
        parameters: json!({ "sigma": sigma, "trials": trials, "config": cfg }),
        traces,
        reports,
        summary: json!({
            "trials": rows,
            "converged": converged,
            "converged_fraction": converged as f64 / trials as f64,
            "hit_rate_threshold": CONVERGED_HIT_RATE,
        }),
    })
}

/// Runs the upsampling refinement and fixed-size ICP from the same noisy
/// initial map and records both energy traces at probe size `cfg.kmax`.
///
/// The `k0 × k0` ground truth is perturbed with `sigma` (seed `cfg.seed`).
/// ICP runs at `kmax` from the zero-padded initial map, which induces the same
/// first pointwise map.
pub fn run_energy_trace_experiment(
    pair: &SyntheticPair,
    cfg: &RefineConfig,
    icp_iters: usize,
    sigma: f64,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    if cfg.kmax_m != cfg.kmax_n || cfg.k0_m != cfg.k0_n {
        return Err(Error::InvalidArgument(
            "energy trace comparison needs square sizes".into(),
        ));
    }
    let (k0, kmax) = (cfg.k0_m, cfg.kmax_m);
    let prep = PreparedPair::new(pair, kmax)?;
    let init = perturb_fmap(&prep.gt_fmap(k0, k0)?, sigma, cfg.seed)?;
    let cfg = RefineConfig {
        probe: Some(kmax),
        ..cfg.clone()
    };
    let zo = refine::zoomout_meshes(
        &InitialMap::Functional(init.clone()),
        (&pair.mesh_m, &prep.basis_m),
        (&pair.mesh_n, &prep.basis_n),
        &cfg,
    )?;
    let mut padded = nalgebra::DMatrix::zeros(kmax, kmax);
    padded.view_mut((0, 0), (k0, k0)).copy_from(init.matrix());
    let icp = icp_refine_with(
        &FunctionalMap::new(padded)?,
        &prep.basis_m,
        &prep.basis_n,
        &IcpConfig {
            iterations: icp_iters,
            nn_mode: cfg.nn_mode,
            probe: Some(kmax),
        },
    )?;
    let gt_energy = crate::fmap::orthogonality_energy(&prep.gt_fmap(kmax, kmax)?, kmax)?;
    let last = |t: &RefineTrace| t.records.last().map(|r| r.energy);
    let summary = json!({
        "zoomout_final_energy": last(&zo.trace),
        "icp_final_energy": last(&icp.trace),
        "gt_energy": gt_energy,
        "zoomout_hit_rate": prep.hit_rate(&zo.pointmap),
        "icp_hit_rate": prep.hit_rate(&icp.pointmap),
    });
    Ok(ExperimentResult {
        label: "energy-trace".into(),
        parameters: json!({ "sigma": sigma, "icp_iterations": icp_iters, "config": cfg }),
        reports: vec![report_for(pair, &zo.pointmap)?, report_for(pair, &icp.pointmap)?],
        traces: vec![zo.trace, icp.trace],
        summary,
    })
}

/// Dense versus sub-sampled refinement from the same initial map (the `k0`
/// ground truth perturbed with `sigma`). `cfg.sample_count` sets the sample
/// size of the second run.
pub fn run_subsample_experiment(pair: &SyntheticPair, cfg: &RefineConfig, sigma: f64) -> Result<ExperimentResult> {
    cfg.validate()?;
    if cfg.sample_count == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let prep = PreparedPair::new(pair, cfg.kmax_m.max(cfg.kmax_n))?;
    let init = InitialMap::Functional(perturb_fmap(&prep.gt_fmap(cfg.k0_m, cfg.k0_n)?, sigma, cfg.seed)?);
    let dense_cfg = RefineConfig {
        sample_count: 0,
        ..cfg.clone()
    };
    let m = (&pair.mesh_m, &prep.basis_m);
    let n = (&pair.mesh_n, &prep.basis_n);
    let dense = refine::zoomout_meshes(&init, m, n, &dense_cfg)?;
    let sub = refine::zoomout_meshes(&init, m, n, cfg)?;
    let summary = json!({
        "dense_accuracy": prep.accuracy(&dense.pointmap)?,
        "subsampled_accuracy": prep.accuracy(&sub.pointmap)?,
        "dense_hit_rate": prep.hit_rate(&dense.pointmap),
        "subsampled_hit_rate": prep.hit_rate(&sub.pointmap),
    });
    Ok(ExperimentResult {
        label: "subsample".into(),
        parameters: json!({ "sigma": sigma, "config": cfg }),
        reports: vec![report_for(pair, &dense.pointmap)?, report_for(pair, &sub.pointmap)?],
        traces: vec![dense.trace, sub.trace],
        summary,
    })
}
