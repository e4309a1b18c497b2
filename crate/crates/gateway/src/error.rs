//! Error categories shared by the CLI (exit codes) and the HTTP API
//! (`{code, message}` bodies).

use whichcountry_core::engine::EngineError;
use whichcountry_core::evalkit::EvalError;
use whichcountry_core::fusion::FusionError;
use whichcountry_core::imaging::ImagingError;
use whichcountry_core::knowledge::KnowledgeError;
use whichcountry_core::providers::ProviderError;
use whichcountry_core::synth::SynthError;
use whichcountry_core::training::TrainingError;

/// Process exit codes of the `whichcountry` binary.
pub mod exit {
    pub const OK: u8 = 0;
    pub const OTHER: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const DECODE: u8 = 4;
    pub const PROVIDER: u8 = 5;
    pub const REMOTE: u8 = 6;
    pub const IO: u8 = 7;
    pub const DATA: u8 = 8;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    /// Bad arguments or request bodies.
    Usage,
    /// Missing or invalid engine configuration, knowledge or profiles.
    Config,
    /// Image bytes that cannot be decoded into a panorama.
    Decode,
    /// Inference provider failures.
    Provider,
    /// Upstream service refused or failed.
    Remote,
    Io,
    /// Invalid manifests or development sets.
    Data,
    NotFound,
    /// Operation not allowed in the current game state.
    State,
    Internal,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Usage => exit::USAGE,
            ErrorKind::Config => exit::CONFIG,
            ErrorKind::Decode => exit::DECODE,
            ErrorKind::Provider => exit::PROVIDER,
            ErrorKind::Remote => exit::REMOTE,
            ErrorKind::Io => exit::IO,
            ErrorKind::Data => exit::DATA,
            ErrorKind::NotFound | ErrorKind::State | ErrorKind::Internal => exit::OTHER,
        }
    }

    /// Machine-readable `code` of HTTP error bodies.
    pub fn code(self) -> &'static str {
        match self {
            ErrorKind::Usage => "bad_request",
            ErrorKind::Config => "config",
            ErrorKind::Decode => "decode",
            ErrorKind::Provider => "provider",
            ErrorKind::Remote => "remote",
            ErrorKind::Io => "io",
            ErrorKind::Data => "data",
            ErrorKind::NotFound => "not_found",
            ErrorKind::State => "state",
            ErrorKind::Internal => "internal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct GatewayError {
    pub kind: ErrorKind,
    pub message: String,
}

impl GatewayError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Config, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::NotFound, message)
    }

    pub fn state(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::State, message)
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Self::new(ErrorKind::Io, format!("{}: {e}", path.display()))
    }
}

fn provider_kind(e: &ProviderError) -> ErrorKind {
    match e {
        ProviderError::Unconfigured(_) => ErrorKind::Config,
        _ => ErrorKind::Provider,
    }
}

impl From<ImagingError> for GatewayError {
    fn from(e: ImagingError) -> Self {
        let kind = match e {
            ImagingError::Decode(_) | ImagingError::Shape { .. } => ErrorKind::Decode,
            ImagingError::Argument(_) => ErrorKind::Usage,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<ProviderError> for GatewayError {
    fn from(e: ProviderError) -> Self {
        Self::new(provider_kind(&e), e.to_string())
    }
}

impl From<KnowledgeError> for GatewayError {
    fn from(e: KnowledgeError) -> Self {
        Self::config(e.to_string())
    }
}

impl From<FusionError> for GatewayError {
    fn from(e: FusionError) -> Self {
        let kind = match e {
            FusionError::InvalidWeights(_) | FusionError::MissingWeight(_) => ErrorKind::Config,
            FusionError::Argument(_) => ErrorKind::Data,
            _ => ErrorKind::Internal,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<EngineError> for GatewayError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) | EngineError::Knowledge(_) | EngineError::Profile(_) => {
                Self::config(e.to_string())
            }
            EngineError::Provider(p) => p.into(),
            EngineError::Fusion(f) => f.into(),
            EngineError::Imaging(i) => i.into(),
        }
    }
}

impl From<EvalError> for GatewayError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Argument(m) => Self::usage(m),
            EvalError::Manifest { .. } => Self::new(ErrorKind::Data, e.to_string()),
            EvalError::Engine(inner) => inner.into(),
        }
    }
}

impl From<TrainingError> for GatewayError {
    fn from(e: TrainingError) -> Self {
        match e {
            TrainingError::Profile(_) => Self::new(ErrorKind::Io, e.to_string()),
            TrainingError::Provider(p) => p.into(),
            TrainingError::Engine(inner) => inner.into(),
            TrainingError::Argument(m) => Self::new(ErrorKind::Data, m),
        }
    }
}

impl From<SynthError> for GatewayError {
    fn from(e: SynthError) -> Self {
        let kind = match e {
            SynthError::Io { .. } => ErrorKind::Io,
            SynthError::Imaging(_) | SynthError::Argument(_) => ErrorKind::Usage,
        };
        Self::new(kind, e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_for_documented_kinds() {
        let kinds = [
            ErrorKind::Usage,
            ErrorKind::Config,
            ErrorKind::Decode,
            ErrorKind::Provider,
            ErrorKind::Remote,
            ErrorKind::Io,
            ErrorKind::Data,
        ];
        let mut codes: Vec<u8> = kinds.iter().map(|k| k.exit_code()).collect();
        codes.push(exit::OK);
        codes.push(exit::OTHER);
        let n = codes.len();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), n);
    }

    #[test]
    fn decode_and_shape_errors_map_to_decode() {
        let e: GatewayError = ImagingError::Shape { width: 3, height: 3 }.into();
        assert_eq!(e.kind, ErrorKind::Decode);
        let e: GatewayError = EngineError::Imaging(ImagingError::Decode("x".into())).into();
        assert_eq!(e.kind.exit_code(), exit::DECODE);
    }

    #[test]
    fn provider_failures_map_to_provider() {
        let e: GatewayError = ProviderError::Timeout(std::time::Duration::from_secs(1)).into();
        assert_eq!(e.kind, ErrorKind::Provider);
        let e: GatewayError = EngineError::Config("no factsheets".into()).into();
        assert_eq!(e.kind, ErrorKind::Config);
    }
}
