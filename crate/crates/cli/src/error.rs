use std::fmt;

/// Process exit codes.
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, arguments, CSV or model file.
    Input(String),
    UnknownGenerator(String),
    /// The library failed on well-formed input.
    Numerical(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::UnknownGenerator(_) => EXIT_INPUT,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "input error: {msg}"),
            CliError::UnknownGenerator(name) => write!(
                f,
                "input error: unknown generator '{name}' (known: {})",
                crate::commands::GENERATORS.join(", ")
            ),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<gpsysid_core::Error> for CliError {
    fn from(e: gpsysid_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;
    use gpsysid_core::Error;

    #[test]
    fn library_errors_map_to_exit_codes() {
        assert_eq!(CliError::from(Error::NotPositiveDefinite { dim: 3 }).exit_code(), EXIT_NUMERICAL);
        assert_eq!(CliError::from(Error::Singular).exit_code(), EXIT_NUMERICAL);
        assert_eq!(CliError::from(Error::InvalidArgument("x".into())).exit_code(), EXIT_INPUT);
        assert_eq!(CliError::UnknownGenerator("x".into()).exit_code(), EXIT_INPUT);
    }
}
