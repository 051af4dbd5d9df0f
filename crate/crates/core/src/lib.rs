//! Spectral shape correspondence by iterative spectral upsampling.
//!
//! A pointwise map between two triangle meshes is refined by alternating
//! nearest-neighbour recovery in a growing Laplace–Beltrami eigenbasis with
//! re-expression of the map as a functional map of the next size up.
//!
//! * [`mesh`]: triangle meshes, OFF/OBJ I/O, edges and areas.
//! * [`spectral`]: cotangent Laplacian and the truncated generalized eigenbasis.
//! * [`fmap`]: functional map algebra, the principal-submatrix orthogonality
//!   energy, function transfer.
//! * [`refine`]: the upsampling refinement (square and rectangular) and the
//!   fixed-size ICP baseline.
//! * [`sampling`]: farthest point sampling and k-d tree nearest neighbours.
//! * [`metrics`]: geodesic accuracy, coverage, bijectivity, edge distortion,
//!   Dirichlet energy.
//! * [`testbed`]: synthetic shape pairs and experiment drivers.
//! * [`cli`]: the `zoomout` command line.

pub mod cli;
pub mod error;
pub mod fmap;
pub mod mesh;
pub mod metrics;
pub mod refine;
pub mod sampling;
pub mod spectral;
pub mod testbed;

pub use error::{Error, Result};
pub use fmap::{FunctionalMap, PointMap};
pub use mesh::{EdgeSet, TriangleMesh};
pub use refine::{RefineConfig, RefineTrace};
pub use sampling::{NnIndex, NnMode, SampleSet};
pub use spectral::{LaplacianPair, SpectralBasis};

/// Version string echoed into every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
