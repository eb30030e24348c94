use std::path::PathBuf;

use lgkdr_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: CoreError,
    },
    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

impl HarnessError {
    pub fn stage(stage: &'static str) -> impl FnOnce(CoreError) -> HarnessError {
        move |source| HarnessError::Stage { stage, source }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    /// Process exit code: 2 configuration, 3 numerical, 4 degeneracy, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Stage { source, .. } => match source {
                CoreError::InvalidArgument(_) => 2,
                CoreError::Numerical { .. } => 3,
                CoreError::Degeneracy(_) => 4,
            },
            HarnessError::Io { .. } | HarnessError::Format { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let stage = |e: CoreError| HarnessError::stage("x")(e).exit_code();
        assert_eq!(HarnessError::Config("c".into()).exit_code(), 2);
        assert_eq!(stage(CoreError::invalid("i")), 2);
        assert_eq!(stage(CoreError::numerical("n")), 3);
        assert_eq!(stage(CoreError::Degeneracy("d".into())), 4);
        let io = HarnessError::io("/x")(std::io::Error::other("gone"));
        assert_eq!(io.exit_code(), 1);
    }
}
