use std::fmt;

use throwintent::balltrack::TrackError;
use throwintent::data::DataError;
use throwintent::detect::DetectError;
use throwintent::eval::EvalError;
use throwintent::intent::IntentError;
use throwintent::nn::NnError;
use throwintent::pipeline::PipelineError;
use throwintent::synth::SynthError;

/// Error classes, each with its own exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Training,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 2,
            Kind::Data => 3,
            Kind::Training => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Data,
            message: message.into(),
        }
    }

    pub fn training(message: impl Into<String>) -> Self {
        CliError {
            kind: Kind::Training,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<TrackError> for CliError {
    fn from(e: TrackError) -> Self {
        match e {
            TrackError::InvalidRange(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(_) | SynthError::Unreachable { .. } => CliError::usage(e.to_string()),
            SynthError::Data(d) => d.into(),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        CliError::training(e.to_string())
    }
}

impl From<IntentError> for CliError {
    fn from(e: IntentError) -> Self {
        match e {
            IntentError::Model(_) => CliError::training(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

fn eval_kind(e: &EvalError) -> Kind {
    match e {
        EvalError::Training(_) | EvalError::Intent(IntentError::Model(_)) => Kind::Training,
        EvalError::Fold { source, .. } => eval_kind(source),
        EvalError::Invalid(_) => Kind::Usage,
        _ => Kind::Data,
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError {
            kind: eval_kind(&e),
            message: e.to_string(),
        }
    }
}
