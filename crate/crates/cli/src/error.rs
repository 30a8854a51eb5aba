use serinv_core::adapter::AdapterError;
use serinv_core::encoder::EncodeError;
use serinv_core::eval::EvalError;
use serinv_core::geometry::GeometryError;
use serinv_core::store::StoreError;
use serinv_core::table::TableError;
use thiserror::Error;

/// Failure classes, each with its own exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    /// Bad flags, config keys or settings (exit 2).
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent inputs (exit 3).
    #[error("{0}")]
    Data(String),
    /// Non-finite values or failed numeric checks (exit 4).
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        match e {
            TableError::BadRange { .. } | TableError::VocabTooSmall { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NonFiniteValue(_) | StoreError::ZeroVector(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EncodeError> for CliError {
    fn from(e: EncodeError) -> Self {
        match e {
            EncodeError::BadConfig { .. } | EncodeError::NoFormats => CliError::Usage(e.to_string()),
            EncodeError::Store(s) => s.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AdapterError> for CliError {
    fn from(e: AdapterError) -> Self {
        match e {
            AdapterError::BadConfig(_) => CliError::Usage(e.to_string()),
            AdapterError::NonFiniteInput | AdapterError::NonFiniteGradient => CliError::Numeric(e.to_string()),
            AdapterError::Store(s) => s.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::BadK => CliError::Usage(e.to_string()),
            EvalError::Store(s) => s.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::NotACentroid(_) => CliError::Usage(e.to_string()),
            GeometryError::LinearityViolation(_) => CliError::Numeric(e.to_string()),
            GeometryError::Store(s) => s.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}
