use std::fmt;

use swgformer::Error;

/// A failed run, mapped to the process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

/// Raised by commands for invalid flag combinations or unparsable configs.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Raised when a verification suite finds failing cases.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

impl Failure {
    pub const USAGE: u8 = 1;
    pub const DATA: u8 = 2;
    pub const NUMERICAL: u8 = 3;

    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => Self::USAGE,
            Failure::Data(_) => Self::DATA,
            Failure::Numerical(_) => Self::NUMERICAL,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Data(_) => "data",
            Failure::Numerical(_) => "numerical",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

/// Usage and numerical markers anywhere in the chain decide the code; everything else
/// (I/O, malformed files, shape mismatches) is a data error.
pub fn classify(e: &anyhow::Error) -> Failure {
    let line = format!("{e:#}").replace('\n', " ");
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return Failure::Usage(line);
        }
        if cause.is::<NumericalFailure>() {
            return Failure::Numerical(line);
        }
        if let Some(Error::Numerical(_)) = cause.downcast_ref::<Error>() {
            return Failure::Numerical(line);
        }
    }
    Failure::Data(line)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_the_innermost_marker() {
        let usage = anyhow::Error::new(UsageError("bad overlap".into())).context("synth");
        assert_eq!(classify(&usage).code(), 1);
        let numeric = anyhow::Error::new(Error::Numerical("nan".into())).context("train");
        assert_eq!(classify(&numeric).code(), 3);
        let io = anyhow::Error::new(std::io::Error::other("denied")).context("reading x.wav");
        let f = classify(&io);
        assert_eq!(f.code(), 2);
        assert_eq!(f.message(), "reading x.wav: denied");
    }
}
