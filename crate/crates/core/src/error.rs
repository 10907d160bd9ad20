use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("removal of {removed} from atom {atom} (weight {weight}) would leave negative mass")]
    NegativeMass { atom: usize, weight: f64, removed: f64 },

    #[error("deposit references atom {atom} but the measure has {len} atoms")]
    MissingAtom { atom: usize, len: usize },

    #[error("atom {atom} left the domain of compartment {compartment}: coordinate {coord} = {value}")]
    DomainExit { atom: usize, compartment: u8, coord: usize, value: f64 },

    #[error("invalid individual: {0}")]
    InvalidIndividual(String),

    #[error("thinning acceptance ratio {ratio} exceeds 1 (rate bound {bound} below true rate {rate})")]
    BoundViolation { ratio: f64, rate: f64, bound: f64 },

    #[error("jump count exceeded cap of {cap} at t = {time}")]
    ExplosionGuard { cap: u64, time: f64 },

    #[error("channel {channel} changed mass by {change}, more than its declared bound {bound}")]
    TvBoundExceeded { channel: usize, change: f64, bound: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("CFL violation: dt * max g / dx = {0} > 0.9")]
    CflViolation(f64),

    #[error("need at least 3 scaling levels, got {0}")]
    InsufficientLevels(usize),

    #[error("unknown observable {0:?}")]
    UnknownObservable(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
