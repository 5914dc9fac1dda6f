use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    /// Parse or validation failure; `path` is the dotted config path.
    Config { path: String, message: String },
    Numerical(ekman::Error),
    Io(String),
}

impl CliError {
    pub fn config(path: &str, e: impl std::fmt::Display) -> Self {
        CliError::Config { path: path.to_string(), message: e.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Config { path, message } => json!({"error": "config", "path": path, "message": message}),
            CliError::Numerical(e) => json!({"error": "numerical", "message": e.to_string()}),
            CliError::Io(m) => json!({"error": "io", "message": m}),
        }
    }
}

impl From<ekman::Error> for CliError {
    fn from(e: ekman::Error) -> Self {
        CliError::Numerical(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
