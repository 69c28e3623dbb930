use std::fmt;

pub const CONFIG: i32 = 2;
pub const NUMERICAL: i32 = 3;
pub const VARIANCE: i32 = 4;
pub const IO: i32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: String) -> Self {
        CliError {
            code: CONFIG,
            message,
        }
    }

    pub fn io(message: String) -> Self {
        CliError { code: IO, message }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ecap::Error> for CliError {
    fn from(e: ecap::Error) -> Self {
        use ecap::Error::*;
        let code = match e {
            NonConvergence { .. } | EvaluatorDiverged { .. } | CoincidentRoots { .. } => NUMERICAL,
            _ => CONFIG,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        let e: CliError = ecap::Error::NonConvergence {
            iterations: 3,
            width: 1.0,
        }
        .into();
        assert_eq!(e.code, NUMERICAL);
        let e: CliError = ecap::Error::InvalidPmf("x".into()).into();
        assert_eq!(e.code, CONFIG);
    }
}
