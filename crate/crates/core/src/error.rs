//! Error types, one enum per subsystem plus a crate-level wrapper that keeps
//! the originating module visible in the message.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymbolicsError {
    #[error("grid shape must have 2 or 3 axes, got {0}")]
    BadDimensionality(usize),
    #[error("grid axis {axis} has {points} points; at least 2 are required")]
    AxisTooSmall { axis: usize, points: usize },
    #[error("grid extent along axis {axis} must be positive and finite, got {extent}")]
    BadExtent { axis: usize, extent: f64 },
    #[error("shape and extent disagree in length ({shape} vs {extent})")]
    ShapeExtentMismatch { shape: usize, extent: usize },
    #[error("space order must be an even positive integer, got {0}")]
    BadSpaceOrder(usize),
    #[error("time order must be 0, 1 or 2, got {0}")]
    BadTimeOrder(usize),
    #[error("unsupported derivative order {0}; only first and second derivatives are available")]
    UnsupportedDerivativeOrder(usize),
    #[error("accuracy order must be even and at least 2, got {0}")]
    BadAccuracyOrder(usize),
    #[error("stencil radius {radius} on field `{field}` along axis {axis} exceeds its halo of {halo}")]
    RadiusExceedsHalo {
        field: String,
        axis: usize,
        radius: usize,
        halo: usize,
    },
    #[error("field `{field}` accessed at time offset {offset}, outside its {buffers} time buffers")]
    BadTimeOffset {
        field: String,
        offset: i32,
        buffers: usize,
    },
    #[error("time derivative of static field `{0}`")]
    StaticTimeDerivative(String),
    #[error("equation is not affine in the unknown {0}")]
    NonlinearInUnknown(String),
    #[error("unknown {0} does not appear in the equation")]
    ZeroCoefficient(String),
    #[error("unknown must be a forward-time access with zero spatial offsets, got {0}")]
    BadUnknown(String),
    #[error("equation writes {0} while also reading that buffer")]
    ImplicitEquation(String),
    #[error("derivative placeholder left in a discretized expression")]
    UndiscretizedDerivative,
    #[error("no value bound for symbol `{0}`")]
    UnboundSymbol(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecompositionError {
    #[error("cannot split {npoints} points into {nparts} non-empty parts")]
    TooManyParts { npoints: usize, nparts: usize },
    #[error("topology {dims:?} has {product} ranks but {nranks} were requested")]
    TopologyMismatch {
        dims: Vec<usize>,
        product: usize,
        nranks: usize,
    },
    #[error("topology has {topology} axes but the grid has {grid}")]
    DimensionMismatch { topology: usize, grid: usize },
    #[error("topology entries must be at least 1: {0:?}")]
    ZeroDim(Vec<usize>),
    #[error("point {coords:?} lies outside the physical domain")]
    PointOutsideDomain { coords: Vec<f64> },
    #[error("rank {rank} out of range for {nranks} ranks")]
    BadRank { rank: usize, nranks: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("rank {rank} owns an empty extent of field `{field}`")]
    EmptyOwnedExtent { field: String, rank: usize },
    #[error("region {region:?} is not inside the global box {shape:?}")]
    RegionOutOfBounds {
        region: Vec<(usize, usize)>,
        shape: Vec<usize>,
    },
    #[error("array of {got} values does not conform to a region of {expected} points")]
    NonConformingArray { expected: usize, got: usize },
    #[error("radius {radius:?} exceeds halo {halo:?}")]
    RadiusExceedsHalo { radius: Vec<usize>, halo: Vec<usize> },
    #[error("box {0:?} is outside the local buffer")]
    BoxOutOfBounds(Vec<(usize, usize)>),
    #[error("buffer of {got} values cannot be unpacked into a box of {expected} points")]
    UnpackMismatch { expected: usize, got: usize },
    #[error("collective call with mismatched arguments across ranks")]
    NotCollective,
    #[error("field `{field}` halo is stale for buffer {buffer}")]
    StaleHalo { field: String, buffer: usize },
    #[error("malformed field file: {0}")]
    BadFile(String),
    #[error("time buffer {buffer} out of range for field `{field}`")]
    BadBuffer { field: String, buffer: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("cyclic dependency inside a timestep: `{reader}` reads {buffer} before it is written")]
    CyclicDependency { reader: String, buffer: String },
    #[error(
        "full mode needs a non-empty CORE but rank {rank} owns {extent:?} with radius {radius:?}; \
         use fewer ranks or a coarser topology"
    )]
    EmptyCore {
        rank: usize,
        extent: Vec<usize>,
        radius: Vec<usize>,
    },
    #[error(
        "rank {rank} owns only {extent} points along axis {axis} but neighbours need {radius} halo layers"
    )]
    ExtentBelowRadius {
        rank: usize,
        axis: usize,
        extent: usize,
        radius: usize,
    },
    #[error("fields span grids of different dimensionality")]
    MixedGrids,
    #[error("sparse operation references unknown point set `{0}`")]
    UnknownPointSet(String),
    #[error("injection scale must be pointwise, got {0}")]
    NonPointwiseScale(String),
    #[error("unknown mode `{0}` (expected basic, diagonal or full)")]
    UnknownMode(String),
    #[error(transparent)]
    Symbolics(#[from] SymbolicsError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("rank {rank}: watchdog timeout after {secs:.1} s waiting for {what}")]
    Timeout { rank: usize, secs: f64, what: String },
    #[error("rank {rank}: aborted because another rank failed")]
    Aborted { rank: usize },
    #[error("rank {rank} panicked: {message}")]
    Panic { rank: usize, message: String },
    #[error("{} rank(s) failed: {}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Failed(Vec<Error>),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("spawn requested {nranks} ranks for topology {dims:?}")]
    RankCountMismatch { nranks: usize, dims: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SparseError {
    #[error("point {coords:?} lies outside the physical domain")]
    OutsideDomain { coords: Vec<f64> },
    #[error("point has {got} coordinates, grid has {expected} axes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot parse point file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("peak frequency must be positive, got {0}")]
    BadFrequency(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("kernel `{kernel}` requires a {expected}D grid, got {got}D")]
    KernelDimensionality {
        kernel: String,
        expected: usize,
        got: usize,
    },
    #[error("time step {dt} exceeds the stability bound {bound}")]
    UnstableTimeStep { dt: f64, bound: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Crate-level error; the variant names the module that rejected the request.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("symbolics: {0}")]
    Symbolics(#[from] SymbolicsError),
    #[error("decomposition: {0}")]
    Decomposition(#[from] DecompositionError),
    #[error("distfield: {0}")]
    Field(#[from] FieldError),
    #[error("compiler: {0}")]
    Compile(#[from] CompileError),
    #[error("runtime: {0}")]
    Runtime(#[from] RuntimeError),
    #[error("sparse: {0}")]
    Sparse(#[from] SparseError),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
