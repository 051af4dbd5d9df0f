//! The `zoomout` command line.
//!
//! Exit codes: 0 success, 1 computation error, 2 usage or I/O error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::{Error, Result};
use crate::fmap::{fmap_to_pointmap, pointmap_to_fmap, FunctionalMap, PointMap};
use crate::mesh::{self, TriangleMesh};
use crate::metrics::{self, EvalInputs};
use crate::refine::{self, IcpConfig, InitialMap, RefineConfig, Refined};
use crate::sampling::NnMode;
use crate::spectral::{cotan_laplacian, spectral_basis, SpectralBasis};
use crate::testbed;
use crate::VERSION;

#[derive(Parser, Debug)]
#[command(name = "zoomout", version, about = "Spectral upsampling refinement of shape correspondences")]
pub struct Cli {
    /// Worker threads for parallel loops (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compute and cache the first k Laplacian eigenpairs of a mesh.
    Basis(BasisArgs),
    /// Convert between pointwise and functional maps.
    Convert(ConvertArgs),
    /// Refine a map by iterative spectral upsampling.
    Zoomout(ZoomoutArgs),
    /// Refine a functional map with fixed-size ICP.
    Icp(IcpArgs),
    /// Evaluate a pointwise map.
    Eval(EvalArgs),
    /// Write a synthetic shape pair with ground truth.
    Synth(SynthArgs),
    /// Run an experiment driver on a synthetic pair.
    Experiment(ExperimentArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum NnArg {
    Exact,
    Approx,
}

impl From<NnArg> for NnMode {
    fn from(a: NnArg) -> Self {
        match a {
            NnArg::Exact => NnMode::Exact,
            NnArg::Approx => NnMode::Approximate,
        }
    }
}

#[derive(Args, Debug)]
pub struct BasisArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long, short)]
    pub k: usize,
    /// Basis cache output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Pointwise map to convert to a functional map.
    #[arg(long, conflicts_with = "fmap", required_unless_present = "fmap")]
    pub p2p: Option<PathBuf>,
    /// Functional map to convert to a pointwise map.
    #[arg(long)]
    pub fmap: Option<PathBuf>,
    /// Functional map size when converting from a pointwise map.
    #[arg(long, short, default_value_t = 20)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = NnArg::Exact)]
    pub nn: NnArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ZoomoutArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, conflicts_with = "init_p2p", required_unless_present = "init_p2p")]
    pub init_fmap: Option<PathBuf>,
    #[arg(long)]
    pub init_p2p: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub k0: usize,
    #[arg(long, default_value_t = 120)]
    pub kmax: usize,
    /// Initial column count when it differs from `--k0`.
    #[arg(long)]
    pub k0_n: Option<usize>,
    /// Final column count when it differs from `--kmax`.
    #[arg(long)]
    pub kmax_n: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub step: usize,
    #[arg(long)]
    pub rectangular: bool,
    /// Eigenvalues compared by the rank estimate in rectangular mode.
    #[arg(long, default_value_t = refine::DEFAULT_RANK_PROBE)]
    pub rank_k: usize,
    /// FPS samples on the source (0 = all vertices).
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    /// Sample the target as well instead of matching against all its vertices.
    #[arg(long)]
    pub sample_target: bool,
    #[arg(long, value_enum, default_value_t = NnArg::Exact)]
    pub nn: NnArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Map size at which trace energies are measured (default: final size).
    #[arg(long)]
    pub probe: Option<usize>,
    #[arg(long)]
    pub out_p2p: Option<PathBuf>,
    #[arg(long)]
    pub out_fmap: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Record wall-clock milliseconds in the trace (otherwise 0, so reruns are
    /// byte-identical).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug)]
pub struct IcpArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub init_fmap: PathBuf,
    #[arg(long, default_value_t = 15)]
    pub iters: usize,
    #[arg(long, value_enum, default_value_t = NnArg::Exact)]
    pub nn: NnArg,
    #[arg(long)]
    pub out_p2p: Option<PathBuf>,
    #[arg(long)]
    pub out_fmap: Option<PathBuf>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Record wall-clock milliseconds in the trace.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub map: PathBuf,
    /// Map from target to source; enables bijectivity.
    #[arg(long)]
    pub map_reverse: Option<PathBuf>,
    /// Ground-truth map; enables accuracy.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Error normalizer (default: square root of the target area).
    #[arg(long)]
    pub normalizer: Option<f64>,
    /// Measure un-coverage by area instead of vertex count.
    #[arg(long)]
    pub area_uncoverage: bool,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairArg {
    Perm,
    Bend,
}

#[derive(Args, Debug, Clone)]
pub struct PairSpec {
    #[arg(long, value_enum, default_value_t = PairArg::Perm)]
    pub kind: PairArg,
    /// Approximate vertex count.
    #[arg(long, default_value_t = 642)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bend curvature for `--kind bend`.
    #[arg(long, default_value_t = 0.5)]
    pub bend: f64,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub pair: PairSpec,
    /// Writes `<prefix>_M.off`, `<prefix>_N.off`, `<prefix>_gt.txt`, `<prefix>_gt_rev.txt`.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentName {
    Stability,
    EnergyTrace,
    Subsample,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub name: ExperimentName,
    #[command(flatten)]
    pub pair: PairSpec,
    /// Noise added to the initial functional map.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 4)]
    pub k0: usize,
    #[arg(long, default_value_t = 50)]
    pub kmax: usize,
    #[arg(long, default_value_t = 1)]
    pub step: usize,
    #[arg(long, default_value_t = 300)]
    pub samples: usize,
    #[arg(long, default_value_t = 15)]
    pub icp_iters: usize,
    #[arg(long, value_enum, default_value_t = NnArg::Exact)]
    pub nn: NnArg,
    /// Record wall-clock milliseconds in the trace (otherwise 0, so reruns are
    /// byte-identical).
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub report: PathBuf,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Errors are printed to stderr.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

/// Runs a parsed command.
pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Basis(a) => basis(a),
        Command::Convert(a) => convert(a),
        Command::Zoomout(a) => zoomout(a),
        Command::Icp(a) => icp(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Experiment(a) => experiment(a),
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, &text)
}

fn basis_for(mesh: &TriangleMesh, k: usize) -> Result<SpectralBasis> {
    spectral_basis(&cotan_laplacian(mesh), k)
}

fn basis(a: BasisArgs) -> Result<()> {
    let mesh = mesh::load(&a.mesh)?;
    let b = basis_for(&mesh, a.k)?;
    b.save(&a.out)
}

fn convert(a: ConvertArgs) -> Result<()> {
    let (mm, mn) = (mesh::load(&a.source)?, mesh::load(&a.target)?);
    if let Some(p) = &a.fmap {
        let c = FunctionalMap::load(p)?;
        let bm = basis_for(&mm, c.k_m())?;
        let bn = basis_for(&mn, c.k_n())?;
        let t = fmap_to_pointmap(&c, &bm, &bn, a.nn.into(), None)?;
        t.save(&a.out)
    } else {
        let t = PointMap::load(a.p2p.as_ref().expect("clap enforces one input"), Some(mn.n()))?;
        let bm = basis_for(&mm, a.k)?;
        let bn = basis_for(&mn, a.k)?;
        pointmap_to_fmap(&t, &bm, &bn, a.k, a.k)?.save(&a.out)
    }
}

fn save_outputs(out: &Refined, p2p: Option<&PathBuf>, fmap: Option<&PathBuf>, trace: Option<&PathBuf>, timing: bool) -> Result<()> {
    if let Some(p) = p2p {
        out.pointmap.save(p)?;
    }
    if let Some(p) = fmap {
        out.fmap.save(p)?;
    }
    if let Some(p) = trace {
        let mut t = out.trace.clone();
        if !timing {
            t.strip_timing();
        }
        let mut text = t.to_json()?;
        text.push('\n');
        write(p, &text)?;
    }
    Ok(())
}

/// Resolved refinement settings for a `zoomout` invocation.
pub fn zoomout_config(a: &ZoomoutArgs) -> RefineConfig {
    RefineConfig {
        k0_m: a.k0,
        k0_n: a.k0_n.unwrap_or(a.k0),
        kmax_m: a.kmax,
        kmax_n: a.kmax_n.unwrap_or(a.kmax),
        step: a.step,
        nn_mode: a.nn.into(),
        sample_count: a.samples,
        sample_target: a.sample_target,
        seed: a.seed,
        rectangular: a.rectangular,
        rank_estimate_k: a.rank_k,
        probe: a.probe,
    }
}

fn zoomout(a: ZoomoutArgs) -> Result<()> {
    let cfg = zoomout_config(&a);
    cfg.validate()?;
    let (mm, mn) = (mesh::load(&a.source)?, mesh::load(&a.target)?);
    let init = match (&a.init_fmap, &a.init_p2p) {
        (Some(p), _) => InitialMap::Functional(FunctionalMap::load(p)?),
        (None, Some(p)) => InitialMap::Pointwise(PointMap::load(p, Some(mn.n()))?),
        (None, None) => unreachable!("clap enforces one initial map"),
    };
    let rank_k = if cfg.rectangular { cfg.rank_estimate_k } else { 0 };
    let bm = basis_for(&mm, cfg.kmax_m.max(rank_k).min(mm.n()))?;
    let bn = basis_for(&mn, cfg.kmax_n.max(rank_k).min(mn.n()))?;
    let out = refine::zoomout_meshes(&init, (&mm, &bm), (&mn, &bn), &cfg)?;
    save_outputs(&out, a.out_p2p.as_ref(), a.out_fmap.as_ref(), a.trace.as_ref(), a.timing)
}

fn icp(a: IcpArgs) -> Result<()> {
    let (mm, mn) = (mesh::load(&a.source)?, mesh::load(&a.target)?);
    let c = FunctionalMap::load(&a.init_fmap)?;
    let bm = basis_for(&mm, c.k_m())?;
    let bn = basis_for(&mn, c.k_n())?;
    let out = refine::icp_refine_with(
        &c,
        &bm,
        &bn,
        &IcpConfig {
            iterations: a.iters,
            nn_mode: a.nn.into(),
            probe: None,
        },
    )?;
    save_outputs(&out, a.out_p2p.as_ref(), a.out_fmap.as_ref(), a.trace.as_ref(), a.timing)
}

fn eval(a: EvalArgs) -> Result<()> {
    let (mm, mn) = (mesh::load(&a.source)?, mesh::load(&a.target)?);
    let map = PointMap::load(&a.map, Some(mn.n()))?;
    let rev = a.map_reverse.as_ref().map(|p| PointMap::load(p, Some(mm.n()))).transpose()?;
    let gt = a.gt.as_ref().map(|p| PointMap::load(p, Some(mn.n()))).transpose()?;
    let normalizer = a.normalizer.unwrap_or_else(|| metrics::default_normalizer(&mn));
    let report = metrics::evaluate(&EvalInputs {
        mesh_m: &mm,
        mesh_n: &mn,
        map: &map,
        map_reverse: rev.as_ref(),
        gt: gt.as_ref(),
        normalizer: Some(normalizer),
        area_uncoverage: a.area_uncoverage,
    })?;
    write_json(
        &a.report,
        &json!({
            "accuracy_mean": report.accuracy_mean,
            "uncoverage_percent": report.uncoverage_percent,
            "bijectivity_mean": report.bijectivity_mean,
            "edge_distortion_mean": report.edge_distortion_mean,
            "dirichlet": report.dirichlet,
            "config": {
                "source": a.source,
                "target": a.target,
                "map": a.map,
                "map_reverse": a.map_reverse,
                "gt": a.gt,
                "normalizer": normalizer,
                "uncoverage": if a.area_uncoverage { "area" } else { "vertex" },
            },
            "version": VERSION,
        }),
    )
}

/// Builds the synthetic pair described by `desc`.
pub fn make_pair(desc: &PairSpec) -> Result<testbed::SyntheticPair> {
    let blob = testbed::make_asymmetric_blob(desc.n, desc.seed)?;
    match desc.kind {
        PairArg::Perm => Ok(testbed::make_permutation_pair(&blob, desc.seed.wrapping_add(1))),
        PairArg::Bend => testbed::make_bent_pair(&blob, desc.bend, desc.seed.wrapping_add(1)),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let pair = make_pair(&a.pair)?;
    let prefix = a.out_prefix.display().to_string();
    mesh::save(&pair.mesh_m, format!("{prefix}_M.off"))?;
    mesh::save(&pair.mesh_n, format!("{prefix}_N.off"))?;
    pair.gt_map.save(format!("{prefix}_gt.txt"))?;
    pair.gt_map_rev.save(format!("{prefix}_gt_rev.txt"))
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let pair = make_pair(&a.pair)?;
    let mut cfg = RefineConfig::square(a.k0, a.kmax, a.step);
    cfg.nn_mode = a.nn.into();
    cfg.seed = a.pair.seed;
    let mut result = match a.name {
        ExperimentName::Stability => testbed::run_stability_experiment(&pair, a.sigma, a.trials, &cfg)?,
        ExperimentName::EnergyTrace => testbed::run_energy_trace_experiment(&pair, &cfg, a.icp_iters, a.sigma)?,
        ExperimentName::Subsample => {
            cfg.sample_count = a.samples;
            testbed::run_subsample_experiment(&pair, &cfg, a.sigma)?
        }
    };
    if !a.timing {
        result.traces.iter_mut().for_each(|t| t.strip_timing());
    }
    let mut value = serde_json::to_value(&result)?;
    value["config"] = json!({
        "name": format!("{:?}", a.name).to_lowercase(),
        "pair": {
            "kind": format!("{:?}", a.pair.kind).to_lowercase(),
            "n": a.pair.n,
            "seed": a.pair.seed,
            "bend": a.pair.bend,
        },
        "sigma": a.sigma,
        "trials": a.trials,
        "icp_iters": a.icp_iters,
        "timing": a.timing,
        "refine": cfg,
    });
    value["version"] = json!(VERSION);
    write_json(&a.report, &value)
}
