use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("label out of range: {0}")]
    LabelOutOfRange(u8),
    #[error("grid must be square with side 64 or 256, got {rows}x{cols}")]
    GridShape { rows: usize, cols: usize },
    #[error("slice index {index} not below slice count {count}")]
    SliceIndex { index: u32, count: u32 },
    #[error("grid size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("registration would move {lost} labelled pixels outside the grid")]
    ContentOutOfBounds { lost: usize },
    #[error("metric undefined on an empty mask")]
    EmptyMask,
    #[error("empty calibration corpus")]
    EmptyCorpus,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("need at least 2 latents, got {0}")]
    TooFewLatents(usize),
    #[error("degenerate bandwidth (all latents identical)")]
    DegenerateBandwidth,
    #[error("degenerate proposal variance in dimension {0}")]
    DegenerateVariance(usize),
    #[error("acceptance rate {rate:e} below 1e-4 after {draws} draws")]
    AcceptanceCollapse { draws: u64, rate: f64 },
    #[error("empty index")]
    EmptyIndex,
    #[error("invalid anchor: the nearest valid latent does not decode to a valid map")]
    InvalidAnchor,
    #[error("no candidate survived unregistration")]
    Unrepresentable,
    #[error("shape parameters do not fit the grid: {0}")]
    ShapeParams(String),
    #[error("generator failed to produce a valid map after {0} attempts")]
    GeneratorExhausted(usize),
    #[error("corruption target class {0:?} absent")]
    TargetAbsent(crate::grid::Class),
    #[error("corruption cannot be placed: {0}")]
    CorruptionInfeasible(&'static str),
    #[error("undefined Hausdorff distance: empty mask")]
    UndefinedHausdorff,
    #[error("end-diastolic volume is zero")]
    ZeroVolume,
    #[error("corpus too small: {0}")]
    CorpusTooSmall(usize),
    #[error("corpus mismatch: {0}")]
    CorpusMismatch(String),
}
