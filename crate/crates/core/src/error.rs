use thiserror::Error;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("{0} Newton seed(s) failed to converge")]
    NewtonFailed(usize),
    #[error("critical point not resolved: {0}")]
    MissingCriticalPoint(String),
}

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("state became non-finite at t = {time}")]
    NonFinite { time: f64 },
}

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("invalid section: {0}")]
    InvalidSection(String),
    #[error("invalid descriptor settings: {0}")]
    InvalidConfig(String),
    #[error("malformed field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum ManifoldError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("polygon is self-intersecting (edges {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no accessible initial conditions on x = {0} at this energy")]
    InaccessibleLine(f64),
    #[error("design matrix is rank deficient (rank {rank} < {needed})")]
    RankDeficient { rank: usize, needed: usize },
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PotentialError {
    /// The inputs were fine but the computation did not succeed.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Self::NewtonFailed(_) | Self::MissingCriticalPoint(_))
    }
}

impl DynamicsError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, Self::NonFinite { .. })
    }
}

impl DescriptorError {
    pub fn is_numerical(&self) -> bool {
        false
    }
}

impl ManifoldError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, Self::SelfIntersecting(..) | Self::TooFewVertices(_))
    }
}

impl ExperimentError {
    pub fn is_numerical(&self) -> bool {
        match self {
            Self::RankDeficient { .. } => true,
            Self::Potential(e) => e.is_numerical(),
            Self::Dynamics(e) => e.is_numerical(),
            Self::Descriptor(e) => e.is_numerical(),
            Self::Manifold(e) => e.is_numerical(),
            Self::InvalidInput(_) | Self::InaccessibleLine(_) | Self::Io(_) => false,
        }
    }
}
