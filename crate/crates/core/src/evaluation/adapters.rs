//! Bridges to external speech models: a transcriber (audio to text) and a
//! speaker-embedding provider (audio to a fixed-width vector).

use std::path::Path;
use std::process::Command;

use crate::error::{Error, Result};

pub trait Transcriber {
    /// Text recognized in the WAV file at `wav`.
    fn transcribe(&self, wav: &Path) -> Result<String>;
}

pub trait EmbeddingProvider {
    /// Fixed-width embedding of the WAV file at `wav`.
    fn embed(&self, wav: &Path) -> Result<Vec<f64>>;
}

impl<F: Fn(&Path) -> Result<String>> Transcriber for F {
    fn transcribe(&self, wav: &Path) -> Result<String> {
        self(wav)
    }
}

/// Runs `program args... <wav>` and reads its standard output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalCommand {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalCommand {
    pub fn new(program: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            program: program.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    /// Splits a whitespace-separated command line (no quoting).
    pub fn parse(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty external command".into()))?;
        Ok(Self::new(program, parts))
    }

    fn run(&self, wav: &Path) -> std::result::Result<String, String> {
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(wav)
            .output()
            .map_err(|e| format!("cannot run {}: {e}", self.program))?;
        if !out.status.success() {
            return Err(format!(
                "{} exited with {}: {}",
                self.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            ));
        }
        String::from_utf8(out.stdout).map_err(|_| format!("{} wrote non-UTF-8 output", self.program))
    }
}

/// Transcriber backed by an external command printing the transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandTranscriber(pub ExternalCommand);

impl Transcriber for CommandTranscriber {
    fn transcribe(&self, wav: &Path) -> Result<String> {
        self.0.run(wav).map(|s| s.trim().to_string()).map_err(Error::Transcriber)
    }
}

/// Embedding provider backed by an external command printing one line of
/// space-separated decimals. Every call must return `dim` values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandEmbeddingProvider {
    pub command: ExternalCommand,
    pub dim: Option<usize>,
}

impl CommandEmbeddingProvider {
    pub fn new(command: ExternalCommand) -> Self {
        Self { command, dim: None }
    }
}

/// Parses a line of whitespace-separated finite decimals.
pub fn parse_embedding(text: &str) -> Result<Vec<f64>> {
    let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let v = line
        .split_whitespace()
        .map(|t| t.parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| Error::EmbeddingProvider(format!("not a list of numbers: {line:?}")))?;
    if v.is_empty() {
        return Err(Error::EmbeddingProvider("empty embedding".into()));
    }
    Ok(v)
}

impl EmbeddingProvider for CommandEmbeddingProvider {
    fn embed(&self, wav: &Path) -> Result<Vec<f64>> {
        let v = parse_embedding(&self.command.run(wav).map_err(Error::EmbeddingProvider)?)?;
        match self.dim {
            Some(d) if d != v.len() => Err(Error::EmbeddingProvider(format!(
                "expected {d} values, got {}",
                v.len()
            ))),
            _ => Ok(v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_lines() {
        assert_eq!(parse_embedding("1 2.5 -3e-1\n").unwrap(), vec![1.0, 2.5, -0.3]);
        assert!(parse_embedding("1 x").is_err());
        assert!(parse_embedding("").is_err());
        assert!(parse_embedding("nan 1").is_err());
    }

    #[cfg(unix)]
    #[test]
    fn external_commands() {
        let echo = CommandTranscriber(ExternalCommand::parse("echo seven").unwrap());
        assert_eq!(echo.transcribe(Path::new("a.wav")).unwrap(), "seven a.wav");
        let fail = CommandTranscriber(ExternalCommand::new("false", Vec::<String>::new()));
        assert!(matches!(fail.transcribe(Path::new("a.wav")), Err(Error::Transcriber(_))));
        let missing = CommandTranscriber(ExternalCommand::new("/nonexistent/asr", Vec::<String>::new()));
        assert!(missing.transcribe(Path::new("a.wav")).is_err());
        let mut emb = CommandEmbeddingProvider::new(ExternalCommand::new("sh", ["-c", "echo 0.5 1.5"]));
        assert_eq!(emb.embed(Path::new("x.wav")).unwrap(), vec![0.5, 1.5]);
        emb.dim = Some(3);
        assert!(matches!(emb.embed(Path::new("x.wav")), Err(Error::EmbeddingProvider(_))));
        assert!(ExternalCommand::parse("  ").is_err());
    }
}
