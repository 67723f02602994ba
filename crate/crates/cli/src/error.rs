use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] vrid::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        use vrid::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Core(e) => match e {
                E::Xml { .. } => "xml",
                E::Annotation { .. } => "annotation",
                E::InvalidSymbol(_) => "invalid_symbol",
                E::Shape { .. } => "shape",
                E::Region(_) => "region",
                E::InvalidArgument(_) => "invalid_argument",
                E::DuplicateVehicle { .. } => "duplicate_vehicle",
                E::Diverged { .. } => "diverged",
                E::Missing(_) => "missing",
                E::Checkpoint(_) => "checkpoint",
                E::Io { .. } => "io",
                E::Image(_) => "image",
                E::Csv(_) => "csv",
                E::Json(_) => "json",
            },
        }
    }

    /// Usage problems exit with 2, everything else with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// Single-line JSON rendering for stderr.
    pub fn to_json_line(&self) -> String {
        json!({"error": {"kind": self.kind(), "message": self.to_string()}}).to_string()
    }
}
