//! C interface to `zoomout`.
//!
//! Objects are opaque heap handles created by `zo_*` constructors and released
//! with the matching `zo_*_free`. Every fallible call returns a `ZoStatus`;
//! on failure `zo_last_error()` describes the cause for the calling thread.
//! Matrices cross the boundary in row-major order and vertex indices as
//! `uint32_t`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, Point3};
use zoomout::fmap::{self, FunctionalMap, PointMap};
use zoomout::refine::{self, IcpConfig, InitialMap, RefineConfig};
use zoomout::{mesh, spectral, Error, NnMode, SpectralBasis, TriangleMesh};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZoStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Io = 3,
    Parse = 4,
    Dimension = 5,
    /// Eigensolver failure or a degenerate operator.
    Numerical = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

/// Triangle mesh handle.
pub struct ZoMesh(TriangleMesh);

/// Laplacian eigenbasis handle.
pub struct ZoBasis(SpectralBasis);

/// Functional map handle.
pub struct ZoFunctionalMap(FunctionalMap);

/// Vertex-to-vertex map handle.
pub struct ZoPointMap(PointMap);

/// Refinement parameters; start from `zo_refine_config_default()`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ZoRefineConfig {
    pub k0_m: usize,
    pub k0_n: usize,
    pub kmax_m: usize,
    pub kmax_n: usize,
    pub step: usize,
    /// Source samples for accelerated refinement; 0 uses every vertex.
    pub sample_count: usize,
    pub sample_target: bool,
    pub rectangular: bool,
    pub rank_estimate_k: usize,
    pub approximate_nn: bool,
    pub seed: u64,
}

impl From<&ZoRefineConfig> for RefineConfig {
    fn from(c: &ZoRefineConfig) -> Self {
        RefineConfig {
            k0_m: c.k0_m,
            k0_n: c.k0_n,
            kmax_m: c.kmax_m,
            kmax_n: c.kmax_n,
            step: c.step,
            nn_mode: nn_mode(c.approximate_nn),
            sample_count: c.sample_count,
            sample_target: c.sample_target,
            seed: c.seed,
            rectangular: c.rectangular,
            rank_estimate_k: c.rank_estimate_k,
            probe: None,
        }
    }
}

fn nn_mode(approximate: bool) -> NnMode {
    if approximate {
        NnMode::Approximate
    } else {
        NnMode::Exact
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> ZoStatus {
    match e {
        Error::Io { .. } => ZoStatus::Io,
        Error::Parse { .. } | Error::Json(_) => ZoStatus::Parse,
        Error::Dimension(_) => ZoStatus::Dimension,
        Error::InvalidArgument(_) | Error::OutOfRange { .. } => ZoStatus::InvalidArgument,
        Error::NoConvergence { .. } | Error::NotPositiveDefinite { .. } | Error::GapCheckFailed { .. } => {
            ZoStatus::Numerical
        }
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ZoStatus {
    let (status, msg) = match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => return ZoStatus::Ok,
        Ok(Err(Fail::Null(what))) => (ZoStatus::NullPointer, format!("{what} is null")),
        Ok(Err(Fail::Arg(msg))) => (ZoStatus::InvalidArgument, msg),
        Ok(Err(Fail::Lib(e))) => (status_of(&e), e.to_string()),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (ZoStatus::Panic, format!("internal panic: {msg}"))
        }
    };
    set_error(msg);
    status
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_opt<T>(out: *mut *mut T, value: T) {
    if !out.is_null() {
        *out = Box::into_raw(Box::new(value));
    }
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn to_u32(v: usize) -> Result<u32, Fail> {
    u32::try_from(v).map_err(|_| Fail::Arg(format!("index {v} does not fit in 32 bits")))
}

fn copy_out<T: Copy>(src: &[T], dst: &mut [T]) -> Result<(), Fail> {
    if dst.len() != src.len() {
        return Err(Fail::Arg(format!(
            "output buffer holds {} values, {} needed",
            dst.len(),
            src.len()
        )));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn zo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on this thread, or an empty string.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn zo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads an OFF or OBJ mesh.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zo_mesh_load(path: *const c_char, out: *mut *mut ZoMesh) -> ZoStatus {
    guard(|| {
        if path.is_null() {
            return Err(Fail::Null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail::Arg("path is not UTF-8".into()))?;
        put(out, ZoMesh(mesh::load(path)?), "out")
    })
}

/// Builds a mesh from `3 n_vertices` coordinates and `3 n_triangles` vertex
/// indices.
///
/// # Safety
/// The arrays must hold the stated number of values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn zo_mesh_from_arrays(
    vertices: *const f64,
    n_vertices: usize,
    triangles: *const u32,
    n_triangles: usize,
    out: *mut *mut ZoMesh,
) -> ZoStatus {
    guard(|| {
        let v = slice(vertices, 3 * n_vertices, "vertices")?;
        let t = slice(triangles, 3 * n_triangles, "triangles")?;
        let verts = v.chunks_exact(3).map(|p| Point3::new(p[0], p[1], p[2])).collect();
        let tris = t
            .chunks_exact(3)
            .map(|f| [f[0] as usize, f[1] as usize, f[2] as usize])
            .collect();
        put(out, ZoMesh(TriangleMesh::new(verts, tris)?), "out")
    })
}

/// Number of vertices, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn zo_mesh_vertex_count(mesh: *const ZoMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.n())
}

/// # Safety
/// `mesh` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn zo_mesh_free(mesh: *mut ZoMesh) {
    free(mesh)
}

/// First `k` Laplace-Beltrami eigenpairs of `mesh`.
///
/// # Safety
/// `mesh` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zo_basis_compute(mesh: *const ZoMesh, k: usize, out: *mut *mut ZoBasis) -> ZoStatus {
    guard(|| {
        let m = get(mesh, "mesh")?;
        put(out, ZoBasis(spectral::mesh_basis(&m.0, k)?), "out")
    })
}

/// Number of eigenpairs, or 0 for a null handle.
///
/// # Safety
/// `basis` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn zo_basis_size(basis: *const ZoBasis) -> usize {
    basis.as_ref().map_or(0, |b| b.0.k())
}

/// Copies the eigenvalues into `out`, which must hold exactly
/// `zo_basis_size(basis)` values.
///
/// # Safety
/// `basis` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn zo_basis_eigenvalues(basis: *const ZoBasis, out: *mut f64, len: usize) -> ZoStatus {
    guard(|| {
        let b = get(basis, "basis")?;
        copy_out(b.0.eigenvalues(), slice_mut(out, len, "out")?)
    })
}

/// # Safety
/// `basis` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn zo_basis_free(basis: *mut ZoBasis) {
    free(basis)
}

/// Functional map from a `rows × cols` row-major array.
///
/// # Safety
/// `data` must hold `rows * cols` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn zo_fmap_from_data(
    data: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut ZoFunctionalMap,
) -> ZoStatus {
    guard(|| {
        let d = slice(data, rows * cols, "data")?;
        let c = FunctionalMap::new(DMatrix::from_row_slice(rows, cols, d))?;
        put(out, ZoFunctionalMap(c), "out")
    })
}

/// `k_m × k_n` functional map induced by a pointwise map from M to N.
///
/// # Safety
/// All handles must be live and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn zo_fmap_from_pointmap(
    map: *const ZoPointMap,
    basis_m: *const ZoBasis,
    basis_n: *const ZoBasis,
    k_m: usize,
    k_n: usize,
    out: *mut *mut ZoFunctionalMap,
) -> ZoStatus {
    guard(|| {
        let c = fmap::pointmap_to_fmap(
            &get(map, "map")?.0,
            &get(basis_m, "basis_m")?.0,
            &get(basis_n, "basis_n")?.0,
            k_m,
            k_n,
        )?;
        put(out, ZoFunctionalMap(c), "out")
    })
}

/// Writes the matrix size.
///
/// # Safety
/// `fmap` must be a live handle; `rows` and `cols` must be valid.
#[no_mangle]
pub unsafe extern "C" fn zo_fmap_shape(fmap: *const ZoFunctionalMap, rows: *mut usize, cols: *mut usize) -> ZoStatus {
    guard(|| {
        let c = get(fmap, "fmap")?;
        if rows.is_null() || cols.is_null() {
            return Err(Fail::Null("rows or cols"));
        }
        *rows = c.0.k_m();
        *cols = c.0.k_n();
        Ok(())
    })
}

/// Copies the matrix in row-major order into `out` (exactly `rows * cols`
/// values).
///
/// # Safety
/// `fmap` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn zo_fmap_data(fmap: *const ZoFunctionalMap, out: *mut f64, len: usize) -> ZoStatus {
    guard(|| {
        let c = get(fmap, "fmap")?.0.matrix();
        let row_major: Vec<f64> = c.transpose().iter().copied().collect();
        copy_out(&row_major, slice_mut(out, len, "out")?)
    })
}

/// Orthogonality energy summed over the principal blocks of size 1 to `k`.
///
/// # Safety
/// `fmap` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn zo_fmap_energy(fmap: *const ZoFunctionalMap, k: usize, out: *mut f64) -> ZoStatus {
    guard(|| {
        let e = fmap::orthogonality_energy(&get(fmap, "fmap")?.0, k)?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = e;
        Ok(())
    })
}

/// # Safety
/// `fmap` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn zo_fmap_free(fmap: *mut ZoFunctionalMap) {
    free(fmap)
}

/// Pointwise map with `len` targets, each below `n_target`.
///
/// # Safety
/// `targets` must hold `len` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn zo_pointmap_from_data(
    targets: *const u32,
    len: usize,
    n_target: usize,
    out: *mut *mut ZoPointMap,
) -> ZoStatus {
    guard(|| {
        let t = slice(targets, len, "targets")?;
        let map = PointMap::new(t.iter().map(|&v| v as usize).collect(), n_target)?;
        put(out, ZoPointMap(map), "out")
    })
}

/// Pointwise map recovered from a functional map by nearest neighbours in the
/// spectral embedding.
///
/// # Safety
/// All handles must be live and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn zo_pointmap_from_fmap(
    fmap: *const ZoFunctionalMap,
    basis_m: *const ZoBasis,
    basis_n: *const ZoBasis,
    approximate_nn: bool,
    out: *mut *mut ZoPointMap,
) -> ZoStatus {
    guard(|| {
        let map = fmap::fmap_to_pointmap(
            &get(fmap, "fmap")?.0,
            &get(basis_m, "basis_m")?.0,
            &get(basis_n, "basis_n")?.0,
            nn_mode(approximate_nn),
            None,
        )?;
        put(out, ZoPointMap(map), "out")
    })
}

/// Number of source vertices, or 0 for a null handle.
///
/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn zo_pointmap_len(map: *const ZoPointMap) -> usize {
    map.as_ref().map_or(0, |m| m.0.len())
}

/// Copies the targets into `out` (exactly `zo_pointmap_len(map)` values).
///
/// # Safety
/// `map` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn zo_pointmap_data(map: *const ZoPointMap, out: *mut u32, len: usize) -> ZoStatus {
    guard(|| {
        let m = get(map, "map")?;
        let t = m.0.targets().iter().map(|&v| to_u32(v)).collect::<Result<Vec<_>, _>>()?;
        copy_out(&t, slice_mut(out, len, "out")?)
    })
}

/// # Safety
/// `map` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn zo_pointmap_free(map: *mut ZoPointMap) {
    free(map)
}

/// Square refinement from 20 to 120 in steps of 1 on all vertices.
#[no_mangle]
pub extern "C" fn zo_refine_config_default() -> ZoRefineConfig {
    let d = RefineConfig::default();
    ZoRefineConfig {
        k0_m: d.k0_m,
        k0_n: d.k0_n,
        kmax_m: d.kmax_m,
        kmax_n: d.kmax_n,
        step: d.step,
        sample_count: d.sample_count,
        sample_target: d.sample_target,
        rectangular: d.rectangular,
        rank_estimate_k: d.rank_estimate_k,
        approximate_nn: d.nn_mode == NnMode::Approximate,
        seed: d.seed,
    }
}

/// Refines `init` by iterative spectral upsampling. Either output may be null
/// when not wanted.
///
/// # Safety
/// Handles and `config` must be live; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn zo_zoomout(
    init: *const ZoFunctionalMap,
    mesh_m: *const ZoMesh,
    basis_m: *const ZoBasis,
    mesh_n: *const ZoMesh,
    basis_n: *const ZoBasis,
    config: *const ZoRefineConfig,
    out_fmap: *mut *mut ZoFunctionalMap,
    out_map: *mut *mut ZoPointMap,
) -> ZoStatus {
    guard(|| {
        let cfg = RefineConfig::from(get(config, "config")?);
        let r = refine::zoomout_meshes(
            &InitialMap::Functional(get(init, "init")?.0.clone()),
            (&get(mesh_m, "mesh_m")?.0, &get(basis_m, "basis_m")?.0),
            (&get(mesh_n, "mesh_n")?.0, &get(basis_n, "basis_n")?.0),
            &cfg,
        )?;
        put_opt(out_fmap, ZoFunctionalMap(r.fmap));
        put_opt(out_map, ZoPointMap(r.pointmap));
        Ok(())
    })
}

/// Fixed-size ICP refinement of a square map. Either output may be null.
///
/// # Safety
/// Handles must be live; non-null outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn zo_icp(
    init: *const ZoFunctionalMap,
    basis_m: *const ZoBasis,
    basis_n: *const ZoBasis,
    iterations: usize,
    approximate_nn: bool,
    out_fmap: *mut *mut ZoFunctionalMap,
    out_map: *mut *mut ZoPointMap,
) -> ZoStatus {
    guard(|| {
        let r = refine::icp_refine_with(
            &get(init, "init")?.0,
            &get(basis_m, "basis_m")?.0,
            &get(basis_n, "basis_n")?.0,
            &IcpConfig {
                iterations,
                nn_mode: nn_mode(approximate_nn),
                probe: None,
            },
        )?;
        put_opt(out_fmap, ZoFunctionalMap(r.fmap));
        put_opt(out_map, ZoPointMap(r.pointmap));
        Ok(())
    })
}
