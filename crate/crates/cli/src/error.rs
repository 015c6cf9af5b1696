use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("not certified: {0}")]
    NotCertified(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NotCertified(_) => 2,
            CliError::Invalid(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn from_core(e: delaycert::Error) -> Self {
        use delaycert::Error as E;
        match e {
            E::InvalidInterval { .. }
            | E::NegativeDelta(_)
            | E::UnsupportedPower { .. }
            | E::DimensionMismatch(_)
            | E::OutOfRange(_)
            | E::Precondition(_)
            | E::NonSymmetric(_)
            | E::InsufficientHistory { .. }
            | E::Format(_) => CliError::Invalid(e.to_string()),
            E::NoCertifiedPoint | E::BlowUp { .. } => CliError::NotCertified(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }

    pub fn io(what: &str, e: std::io::Error) -> Self {
        CliError::Numerical(format!("{what}: {e}"))
    }
}
