use serde::{Deserialize, Serialize};

/// A failure with a stable code, the module that raised it and an exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    code: &'static str,
    module: &'static str,
    message: String,
    exit: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub module: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error: ErrorBody,
}

impl CliError {
    /// Configuration problems exit with 2.
    pub fn config(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, module: "cli_report", message: message.into(), exit: 2 }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: "IO_ERROR", module: "cli_report", message: message.into(), exit: 1 }
    }

    pub fn oracle(message: impl Into<String>) -> Self {
        Self { code: "ORACLE_DISAGREEMENT", module: "cli_report", message: message.into(), exit: 1 }
    }

    /// Marks an error as caused by the configuration, exiting with 2.
    pub fn in_config(self) -> Self {
        Self { exit: 2, ..self }
    }

    pub fn code(&self) -> &'static str {
        self.code
    }

    pub fn module(&self) -> &'static str {
        self.module
    }

    pub fn exit_code(&self) -> i32 {
        self.exit
    }

    pub fn envelope(&self) -> ErrorEnvelope {
        ErrorEnvelope {
            error: ErrorBody { code: self.code.into(), module: self.module.into(), message: self.message.clone() },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.code, self.module, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<conehit::Error> for CliError {
    fn from(e: conehit::Error) -> Self {
        Self { code: e.code(), module: e.module(), message: e.to_string(), exit: 1 }
    }
}
