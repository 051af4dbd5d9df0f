//! Iterative spectral upsampling of functional maps, and the fixed-size ICP
//! baseline.
//!
//! Each upsampling iteration recovers a pointwise map from the current
//! functional map by nearest neighbours in the spectral embedding, then
//! re-expresses that pointwise map as a functional map one step larger.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmap::{
    icp_project, orthogonality_energy, pointmap_to_fmap, recover_targets, subset_pointmap_to_fmap,
    FunctionalMap, PointMap,
};
use crate::mesh::TriangleMesh;
use crate::sampling::{farthest_point_sample, NnMode, SampleSet};
use crate::spectral::SpectralBasis;

/// Probe size used by [`estimate_rank`] unless configured otherwise.
pub const DEFAULT_RANK_PROBE: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    pub k0_m: usize,
    pub k0_n: usize,
    pub kmax_m: usize,
    pub kmax_n: usize,
    /// Rows and columns added per iteration in square mode.
    pub step: usize,
    #[serde(with = "nn_mode_serde")]
    pub nn_mode: NnMode,
    /// 0 refines on all vertices; otherwise the number of FPS samples on the
    /// source.
    pub sample_count: usize,
    /// Also sample the target (with seed `seed + 1`) instead of matching
    /// source samples against every target vertex.
    pub sample_target: bool,
    pub seed: u64,
    /// Grow columns faster than rows according to the spectral rank estimate.
    pub rectangular: bool,
    pub rank_estimate_k: usize,
    /// Size of the functional map on which trace energies are evaluated;
    /// `None` uses `min(kmax_m, kmax_n)`.
    pub probe: Option<usize>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self::square(20, 120, 1)
    }
}

mod nn_mode_serde {
    use super::NnMode;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &NnMode, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(match m {
            NnMode::Exact => "exact",
            NnMode::Approximate => "approx",
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NnMode, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl RefineConfig {
    /// Square refinement from `k0 × k0` to `kmax × kmax`.
    pub fn square(k0: usize, kmax: usize, step: usize) -> Self {
        Self {
            k0_m: k0,
            k0_n: k0,
            kmax_m: kmax,
            kmax_n: kmax,
            step,
            nn_mode: NnMode::Exact,
            sample_count: 0,
            sample_target: false,
            seed: 0,
            rectangular: false,
            rank_estimate_k: DEFAULT_RANK_PROBE,
            probe: None,
        }
    }

    pub fn probe_size(&self) -> usize {
        self.probe.unwrap_or(self.kmax_m.min(self.kmax_n))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.k0_m == 0 || self.k0_n == 0 {
            return bad("initial sizes must be positive".into());
        }
        if self.k0_m > self.kmax_m || self.k0_n > self.kmax_n {
            return bad(format!(
                "initial size {}x{} exceeds final size {}x{}",
                self.k0_m, self.k0_n, self.kmax_m, self.kmax_n
            ));
        }
        if self.step == 0 {
            return bad("step must be >= 1".into());
        }
        if self.sample_count != 0 && self.sample_count < self.kmax_m.max(self.kmax_n) {
            return bad(format!(
                "sample count {} must be 0 or at least the final map size {}",
                self.sample_count,
                self.kmax_m.max(self.kmax_n)
            ));
        }
        let probe = self.probe_size();
        if probe == 0 || probe > self.kmax_m.min(self.kmax_n) {
            return bad(format!("probe size {probe} must be in [1, min(kmax)]"));
        }
        if self.rectangular && self.rank_estimate_k == 0 {
            return bad("rank probe size must be >= 1".into());
        }
        Ok(())
    }

    /// Map sizes visited from `k0` to `kmax` in square mode.
    pub fn square_schedule(&self) -> Vec<(usize, usize)> {
        let mut sizes = vec![(self.k0_m, self.k0_n)];
        let (mut km, mut kn) = (self.k0_m, self.k0_n);
        while (km, kn) != (self.kmax_m, self.kmax_n) {
            km = (km + self.step).min(self.kmax_m);
            kn = (kn + self.step).min(self.kmax_n);
            sizes.push((km, kn));
        }
        sizes
    }
}

/// One iteration record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    #[serde(rename = "kM")]
    pub k_m: usize,
    #[serde(rename = "kN")]
    pub k_n: usize,
    /// Orthogonality energy of the iteration's pointwise map, expressed at the
    /// probe size.
    pub energy: f64,
    pub millis: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RefineTrace {
    pub records: Vec<TraceRecord>,
}

impl RefineTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }

    /// Sets every timing to zero, for byte-stable output.
    pub fn strip_timing(&mut self) {
        self.records.iter_mut().for_each(|r| r.millis = 0.0);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Initial map given to a refinement.
#[derive(Debug, Clone)]
pub enum InitialMap {
    Functional(FunctionalMap),
    Pointwise(PointMap),
}

#[derive(Debug, Clone)]
pub struct Refined {
    pub fmap: FunctionalMap,
    pub pointmap: PointMap,
    pub trace: RefineTrace,
}

fn need_basis(basis: &SpectralBasis, k: usize, which: &str) -> Result<()> {
    if basis.k() < k {
        return Err(Error::InvalidArgument(format!(
            "{which} basis has {} functions, refinement needs {k}",
            basis.k()
        )));
    }
    Ok(())
}

fn initial_fmap(
    init: &InitialMap,
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
    k_m: usize,
    k_n: usize,
) -> Result<FunctionalMap> {
    match init {
        InitialMap::Functional(c) => c.principal(k_m, k_n).map_err(|_| {
            Error::InvalidArgument(format!(
                "initial map is {}x{}, smaller than the starting size {k_m}x{k_n}",
                c.k_m(),
                c.k_n()
            ))
        }),
        InitialMap::Pointwise(t) => pointmap_to_fmap(t, basis_m, basis_n, k_m, k_n),
    }
}

/// The next map size in rectangular mode:
/// `k_M + 1` rows and `k_N + 1 + ⌈k_N (100 − r) / 100⌉` columns.
pub fn rectangular_updates(k_m: usize, k_n: usize, r: usize) -> Result<(usize, usize)> {
    if !(1..=100).contains(&r) {
        return Err(Error::InvalidArgument(format!("rank estimate {r} must be in [1, 100]")));
    }
    Ok((k_m + 1, k_n + 1 + (k_n * (100 - r)).div_ceil(100)))
}

/// Relative slack under which an eigenvalue still counts as below the
/// reference maximum.
const RANK_SLACK: f64 = 1e-9;

/// Spectral estimate of `rank(C)` for a partial source `M` and full target `N`:
/// the largest `i ≤ K` with `λ_i^M < max_{j ≤ K} λ_j^N`, at least 1.
pub fn estimate_rank(lambda_m: &[f64], lambda_n: &[f64], k: usize) -> Result<usize> {
    if k == 0 || lambda_m.len() < k || lambda_n.len() < k {
        return Err(Error::InvalidArgument(format!(
            "rank estimate needs {k} eigenvalues, have {} and {}",
            lambda_m.len(),
            lambda_n.len()
        )));
    }
    let max_n = lambda_n[..k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bound = max_n + RANK_SLACK * max_n.abs();
    let r = (1..=k).rev().find(|&i| lambda_m[i - 1] < bound).unwrap_or(0);
    Ok(r.max(1))
}

/// Shared state for one refinement: which rows take part in NN queries and how
/// a pointwise map becomes a functional map.
struct Domain<'a> {
    basis_m: &'a SpectralBasis,
    basis_n: &'a SpectralBasis,
    /// Spectral rows of the source samples, and of the target samples if the
    /// target is sampled too.
    sampled: Option<(DMatrix<f64>, Option<DMatrix<f64>>)>,
}

impl Domain<'_> {
    fn recover(&self, c: &FunctionalMap, mode: NnMode) -> Result<Vec<usize>> {
        match &self.sampled {
            None => recover_targets(
                c,
                self.basis_m.truncated(c.k_m()),
                self.basis_n.truncated(c.k_n()),
                mode,
            ),
            Some((rows_m, rows_n)) => recover_targets(
                c,
                rows_m.columns(0, c.k_m()),
                rows_n.as_ref().unwrap_or(self.basis_n.phi()).columns(0, c.k_n()),
                mode,
            ),
        }
    }

    fn to_fmap(&self, targets: &[usize], k_m: usize, k_n: usize) -> Result<FunctionalMap> {
        match &self.sampled {
            None => pointmap_to_fmap(
                &PointMap::new(targets.to_vec(), self.basis_n.n())?,
                self.basis_m,
                self.basis_n,
                k_m,
                k_n,
            ),
            Some((rows_m, rows_n)) => subset_pointmap_to_fmap(
                rows_m,
                rows_n.as_ref().unwrap_or(self.basis_n.phi()),
                targets,
                k_m,
                k_n,
            ),
        }
    }

    fn energy(&self, targets: &[usize], probe: usize) -> Result<f64> {
        orthogonality_energy(&self.to_fmap(targets, probe, probe)?, probe)
    }
}

fn rows_of(basis: &SpectralBasis, idx: &[usize]) -> DMatrix<f64> {
    let phi = basis.phi();
    DMatrix::from_fn(idx.len(), phi.ncols(), |i, c| phi[(idx[i], c)])
}

/// Refines on all vertices. `cfg.sample_count` must be 0; use
/// [`zoomout_subsampled`] or [`zoomout_meshes`] otherwise.
pub fn zoomout(
    init: &InitialMap,
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
    cfg: &RefineConfig,
) -> Result<Refined> {
    zoomout_observed(init, basis_m, basis_n, cfg, &mut |_, _| {})
}

/// [`zoomout`], calling `observer` after every nearest-neighbour recovery with
/// the functional map that was used and the recovered targets.
pub fn zoomout_observed(
    init: &InitialMap,
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
    cfg: &RefineConfig,
    observer: &mut dyn FnMut(&FunctionalMap, &[usize]),
) -> Result<Refined> {
    if cfg.sample_count != 0 {
        return Err(Error::InvalidArgument(
            "sub-sampled refinement needs sample sets; use zoomout_subsampled".into(),
        ));
    }
    run(
        init,
        Domain {
            basis_m,
            basis_n,
            sampled: None,
        },
        cfg,
        observer,
    )
}

/// Refines using only the spectral rows of the source samples (matched against
/// `samples_n` when given, else against every target vertex), then converts the
/// final functional map to a dense pointwise map once.
pub fn zoomout_subsampled(
    init: &InitialMap,
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
    samples_m: &SampleSet,
    samples_n: Option<&SampleSet>,
    cfg: &RefineConfig,
) -> Result<Refined> {
    for (s, b) in std::iter::once((samples_m, basis_m)).chain(samples_n.map(|s| (s, basis_n))) {
        if let Some(&bad) = s.indices.iter().find(|&&i| i >= b.n()) {
            return Err(Error::OutOfRange {
                index: bad,
                len: b.n(),
            });
        }
        if s.len() < cfg.kmax_m.max(cfg.kmax_n) {
            return Err(Error::InvalidArgument(format!(
                "{} samples cannot determine a {}x{} map",
                s.len(),
                cfg.kmax_m,
                cfg.kmax_n
            )));
        }
    }
    run(
        init,
        Domain {
            basis_m,
            basis_n,
            sampled: Some((
                rows_of(basis_m, &samples_m.indices),
                samples_n.map(|s| rows_of(basis_n, &s.indices)),
            )),
        },
        cfg,
        &mut |_, _| {},
    )
}

/// FPS samples on the source (seed `seed`) and, if `cfg.sample_target`, on
/// the target (seed `seed + 1`).
pub fn sample_pair(
    mesh_m: &TriangleMesh,
    mesh_n: &TriangleMesh,
    cfg: &RefineConfig,
) -> Result<(SampleSet, Option<SampleSet>)> {
    let sm = farthest_point_sample(mesh_m, cfg.sample_count, cfg.seed)?;
    let sn = if cfg.sample_target {
        Some(farthest_point_sample(mesh_n, cfg.sample_count, cfg.seed.wrapping_add(1))?)
    } else {
        None
    };
    Ok((sm, sn))
}

/// Dense or sub-sampled refinement as selected by `cfg.sample_count`.
pub fn zoomout_meshes(
    init: &InitialMap,
    (mesh_m, basis_m): (&TriangleMesh, &SpectralBasis),
    (mesh_n, basis_n): (&TriangleMesh, &SpectralBasis),
    cfg: &RefineConfig,
) -> Result<Refined> {
    if cfg.sample_count == 0 {
        zoomout(init, basis_m, basis_n, cfg)
    } else {
        cfg.validate()?;
        let (sm, sn) = sample_pair(mesh_m, mesh_n, cfg)?;
        zoomout_subsampled(init, basis_m, basis_n, &sm, sn.as_ref(), cfg)
    }
}

fn run(
    init: &InitialMap,
    dom: Domain<'_>,
    cfg: &RefineConfig,
    observer: &mut dyn FnMut(&FunctionalMap, &[usize]),
) -> Result<Refined> {
    cfg.validate()?;
    need_basis(dom.basis_m, cfg.kmax_m, "source")?;
    need_basis(dom.basis_n, cfg.kmax_n, "target")?;
    if let InitialMap::Pointwise(t) = init {
        if t.len() != dom.basis_m.n() {
            return Err(Error::Dimension(format!(
                "initial point map has {} entries, source has {} vertices",
                t.len(),
                dom.basis_m.n()
            )));
        }
    }
    let rank = if cfg.rectangular {
        Some(estimate_rank(
            dom.basis_m.eigenvalues(),
            dom.basis_n.eigenvalues(),
            cfg.rank_estimate_k,
        )?)
    } else {
        None
    };
    let probe = cfg.probe_size();
    let start = Instant::now();

    let (mut km, mut kn) = (cfg.k0_m, cfg.k0_n);
    let mut c = initial_fmap(init, dom.basis_m, dom.basis_n, km, kn)?;
    let mut trace = RefineTrace::default();
    loop {
        let targets = dom.recover(&c, cfg.nn_mode)?;
        observer(&c, &targets);
        trace.records.push(TraceRecord {
            k_m: km,
            k_n: kn,
            energy: dom.energy(&targets, probe)?,
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
        if (km, kn) == (cfg.kmax_m, cfg.kmax_n) {
            break;
        }
        (km, kn) = match rank {
            Some(r) => {
                let (a, b) = rectangular_updates(km, kn, r)?;
                (a.min(cfg.kmax_m), b.min(cfg.kmax_n))
            }
            None => (
                (km + cfg.step).min(cfg.kmax_m),
                (kn + cfg.step).min(cfg.kmax_n),
            ),
        };
        c = dom.to_fmap(&targets, km, kn)?;
    }

    // Sub-sampled runs also end with one dense conversion over all vertices.
    let pointmap = PointMap::new(
        recover_targets(&c, dom.basis_m.truncated(km), dom.basis_n.truncated(kn), cfg.nn_mode)?,
        dom.basis_n.n(),
    )?;
    Ok(Refined {
        fmap: c,
        pointmap,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    pub iterations: usize,
    pub nn_mode: NnMode,
    /// Trace probe size; `None` uses the map size.
    pub probe: Option<usize>,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            iterations: 15,
            nn_mode: NnMode::Exact,
            probe: None,
        }
    }
}

/// Fixed-size ICP: nearest-neighbour recovery, conversion back at the same
/// size, projection onto orthonormal matrices; `iters` times.
pub fn icp_refine(
    init: &FunctionalMap,
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
    iters: usize,
) -> Result<Refined> {
    icp_refine_with(
        init,
        basis_m,
        basis_n,
        &IcpConfig {
            iterations: iters,
            ..Default::default()
        },
    )
}

pub fn icp_refine_with(
    init: &FunctionalMap,
    basis_m: &SpectralBasis,
    basis_n: &SpectralBasis,
    cfg: &IcpConfig,
) -> Result<Refined> {
    let k = init.k_m();
    if init.k_n() != k {
        return Err(Error::Dimension(format!(
            "ICP needs a square initial map, got {}x{}",
            k,
            init.k_n()
        )));
    }
    need_basis(basis_m, k, "source")?;
    need_basis(basis_n, k, "target")?;
    let probe = cfg.probe.unwrap_or(k);
    need_basis(basis_m, probe, "source")?;
    need_basis(basis_n, probe, "target")?;
    let dom = Domain {
        basis_m,
        basis_n,
        sampled: None,
    };
    let start = Instant::now();
    let mut c = init.clone();
    let mut trace = RefineTrace::default();
    for _ in 0..cfg.iterations {
        let targets = dom.recover(&c, cfg.nn_mode)?;
        c = icp_project(&dom.to_fmap(&targets, k, k)?)?;
        trace.records.push(TraceRecord {
            k_m: k,
            k_n: k,
            energy: dom.energy(&targets, probe)?,
            millis: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    let pointmap = PointMap::new(dom.recover(&c, cfg.nn_mode)?, basis_n.n())?;
    Ok(Refined {
        fmap: c,
        pointmap,
        trace,
    })
}
