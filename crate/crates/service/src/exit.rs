//! Process exit codes shared by the `hla` and `agent` binaries.

use std::fmt;

/// Error class of a failed command; each maps to its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExitClass {
    Usage,
    EmptyInput,
    InsufficientData,
    Io,
    Parse,
    Network,
    Config,
}

impl ExitClass {
    pub fn code(self) -> u8 {
        match self {
            ExitClass::Usage => 2,
            ExitClass::EmptyInput => 3,
            ExitClass::InsufficientData => 4,
            ExitClass::Io => 5,
            ExitClass::Parse => 6,
            ExitClass::Network => 7,
            ExitClass::Config => 8,
        }
    }

    /// Short tag printed in front of the message.
    pub fn label(self) -> &'static str {
        match self {
            ExitClass::Usage => "usage",
            ExitClass::EmptyInput => "empty-input",
            ExitClass::InsufficientData => "no-trainable-data",
            ExitClass::Io => "io",
            ExitClass::Parse => "parse",
            ExitClass::Network => "network",
            ExitClass::Config => "config",
        }
    }
}

/// A command failure: its class plus a human-readable message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub class: ExitClass,
    pub message: String,
}

impl Failure {
    pub fn new(class: ExitClass, message: impl fmt::Display) -> Self {
        Failure {
            class,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = self.class.label();
        if self.message.starts_with(label) {
            f.write_str(&self.message)
        } else {
            write!(f, "{label}: {}", self.message)
        }
    }
}

impl std::error::Error for Failure {}

impl From<crate::pipeline::PipelineError> for Failure {
    fn from(e: crate::pipeline::PipelineError) -> Self {
        use crate::pipeline::PipelineError as P;
        let class = match e {
            P::EmptyInput => ExitClass::EmptyInput,
            P::NoTrainableData(_) | P::Training(_) => ExitClass::InsufficientData,
            P::Cluster(_) => ExitClass::Parse,
        };
        Failure::new(class, e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn codes_are_distinct_and_nonzero() {
        let all = [
            ExitClass::Usage,
            ExitClass::EmptyInput,
            ExitClass::InsufficientData,
            ExitClass::Io,
            ExitClass::Parse,
            ExitClass::Network,
            ExitClass::Config,
        ];
        let codes: HashSet<u8> = all.iter().map(|c| c.code()).collect();
        assert_eq!(codes.len(), all.len());
        assert!(!codes.contains(&0) && !codes.contains(&1));
    }

    #[test]
    fn message_is_labelled_once() {
        assert_eq!(Failure::new(ExitClass::Io, "disk full").to_string(), "io: disk full");
        let f: Failure = crate::pipeline::PipelineError::EmptyInput.into();
        assert_eq!(f.class.code(), 3);
        assert_eq!(f.to_string(), "empty-input: no usable logs");
    }
}
