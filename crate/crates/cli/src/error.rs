use std::path::Path;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(iafmc::Error),
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) | Self::Core(iafmc::Error::InvalidArgument(_)) => "config",
            Self::Core(iafmc::Error::Parse { .. }) => "parse",
            Self::Core(iafmc::Error::Divergence { .. }) => "divergence",
            Self::Io { .. } | Self::Core(iafmc::Error::Io(_)) => "io",
            Self::Core(_) => "data",
        }
    }

    /// Process exit code: 2 config, 3 parse, 4 data, 5 divergence, 6 io.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => 2,
            "parse" => 3,
            "data" => 4,
            "divergence" => 5,
            _ => 6,
        }
    }

    /// Single-line JSON error record for stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(m) => write!(f, "{m}"),
            Self::Core(e) => write!(f, "{e}"),
            Self::Io { path, source } => write!(f, "{path}: {source}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<iafmc::Error> for CliError {
    fn from(e: iafmc::Error) -> Self {
        Self::Core(e)
    }
}
