use serde_json::json;

/// A failure with its exit status and a machine-readable code.
#[derive(Debug)]
pub struct CliError {
    pub exit: i32,
    pub code: String,
    pub message: String,
}

impl CliError {
    pub fn with_code(exit: i32, code: &str, message: impl Into<String>) -> Self {
        CliError {
            exit,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn schema(message: impl Into<String>) -> Self {
        Self::with_code(2, "SCHEMA", message)
    }

    /// An engine error raised while building the model or its sets.
    pub fn model(e: riskchain::Error) -> Self {
        Self::from_engine(e, 3)
    }

    /// An engine error raised while running a command.
    pub fn eval(e: riskchain::Error) -> Self {
        Self::from_engine(e, 4)
    }

    fn from_engine(e: riskchain::Error, exit: i32) -> Self {
        let exit = match e {
            riskchain::Error::TooLarge { .. } => 5,
            riskchain::Error::Model(_) => 3,
            _ => exit,
        };
        Self::with_code(exit, e.code(), e.to_string())
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::with_code(2, "IO", message)
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "code": self.code, "message": self.message } }).to_string()
    }
}
