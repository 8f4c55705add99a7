//! Exact optimal transport on Cartesian grids.
//!
//! Densities are discretized into weighted Dirac sums on cell-center lattices
//! and coupled by solving the transportation linear program exactly with a
//! network-simplex solver. A coarse-to-fine refinement loop keeps the set of
//! admitted plan variables proportional to the number of grid cells, so large
//! problems stay tractable. On top of the balanced solver the crate provides
//! partial transport (a prescribed fraction of the mass moves), Wasserstein
//! barycenters of several measures, barycentric projection of plans into
//! maps, and Gaussian rasterization of point clouds for inspection.

pub mod cli;
pub mod grid;
pub mod io;
pub mod lp;
pub mod measure;
pub mod multiscale;
pub mod postprocess;
pub(crate) mod util;

pub use grid::{BBox, ChildMap, Grid};
pub use lp::{OptimalityReport, Plan, PlanEntry, SolveOptions, SupportSet};
pub use measure::{CostSpec, DensitySpec, DiscreteMeasure};
pub use multiscale::{LevelTrace, MultiscaleConfig};
pub use postprocess::{PointCloud, RasterDensity, TransportMap};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty domain: the mask excludes every lattice cell")]
    EmptyDomain,
    #[error("cell index {index} out of range for grid with {size} cells")]
    InvalidIndex { index: usize, size: usize },
    #[error("density must be nonnegative, found {value} at {point:?}")]
    NegativeDensity { point: Vec<f64>, value: f64 },
    #[error("density integrates to zero over the grid")]
    ZeroMass,
    #[error("source and target masses differ beyond tolerance: {0} vs {1}")]
    Unbalanced(f64, f64),
    #[error("restricted support admits no feasible transport plan")]
    InfeasibleSupport,
    #[error("pivot limit of {limit} exceeded")]
    PivotLimit {
        limit: usize,
        best: Option<Box<Plan>>,
    },
    #[error("transported mass {mass} outside (0, {max}]")]
    MassOutOfRange { mass: f64, max: f64 },
    #[error("plan carries no dual potentials")]
    MissingDuals,
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("multiscale level {level} failed after {retries} retries: {reason}")]
    Multiscale {
        level: u32,
        retries: u32,
        reason: String,
        traces: Vec<LevelTrace>,
    },
    #[error("linear program infeasible (phase-1 residual {0:.3e})")]
    LpInfeasible(f64),
    #[error("numerically singular basis in linear program")]
    SingularBasis,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("invalid argument: {0}")]
    InvalidArg(String),
}

pub type Result<T> = std::result::Result<T, Error>;
