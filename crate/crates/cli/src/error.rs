use std::path::Path;

/// 2 for usage or configuration problems, 3 for I/O failures.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: 3,
            message: format!("i/o error on {}: {e}", path.display()),
        }
    }

    /// Errors while reading user-supplied inputs count as configuration errors.
    pub fn input(e: hardthresh::Error) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<hardthresh::Error> for CliError {
    fn from(e: hardthresh::Error) -> Self {
        let code = if matches!(e, hardthresh::Error::Io { .. }) { 3 } else { 2 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}
