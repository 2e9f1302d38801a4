//! Newline-delimited JSON adapters for external encoders and generators.
//!
//! A server writes one handshake line on startup, then answers one JSON
//! request per line:
//!
//! ```text
//! -> {"handshake":{"protocol":1,"kind":"generator","name":"t5","version":"1",...}}
//! <- {"op":"encode","text":"..."}                       -> {"vectors":[[...],...]}
//! <- {"op":"generate","context":"...","params":{...}}   -> {"text":"..."}
//! <- {"op":"score","context":"...","target":"..."}      -> {"nll":[...]}
//! <- {"op":"shutdown"}
//! ```
//!
//! Failures are answered with `{"error":"..."}`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ci::{Encoder, EncoderError};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TURN_SEPARATOR: &str = "\n";

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("failed to start adapter {command:?}: {source}")]
    Spawn { command: String, source: std::io::Error },
    #[error("adapter handshake failed: {0}")]
    Handshake(String),
    #[error("adapter protocol error: {0}")]
    Protocol(String),
    #[error("adapter reported: {0}")]
    Remote(String),
    #[error("adapter does not support {0}")]
    Unsupported(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = AdapterError> = std::result::Result<T, E>;

/// Decoding settings passed to `generate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecodeParams {
    pub beam: usize,
    pub min_len: usize,
    /// Size of n-grams that may not repeat; 0 disables blocking.
    pub ngram_block: usize,
    pub seed: u64,
}

impl DecodeParams {
    pub fn plain5() -> Self {
        Self {
            beam: 5,
            min_len: 0,
            ngram_block: 0,
            seed: 0,
        }
    }

    pub fn reg10() -> Self {
        Self {
            beam: 10,
            min_len: 20,
            ngram_block: 3,
            seed: 0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "plain5" => Some(Self::plain5()),
            "reg10" => Some(Self::reg10()),
            _ => None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self::plain5()
    }
}

/// A response generator conditioned on a flattened history.
pub trait Generator: Send + Sync {
    fn name(&self) -> &str;
    fn version(&self) -> &str;

    /// Deterministic for fixed `context` and `params`.
    fn generate(&self, context: &str, params: &DecodeParams) -> Result<String>;

    /// Negative log-likelihood of each whitespace token of `target`.
    fn score_target(&self, context: &str, target: &str) -> Result<Vec<f64>>;

    /// Joins utterances into a conditioning text.
    fn turn_separator(&self) -> &str {
        DEFAULT_TURN_SEPARATOR
    }

    /// Maximum context length in whitespace tokens, if bounded.
    fn max_context(&self) -> Option<usize> {
        None
    }

    fn supports_concurrency(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    Encoder,
    Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub protocol: u32,
    pub kind: AdapterKind,
    pub name: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_context: Option<usize>,
    #[serde(default)]
    pub concurrency: bool,
    /// Encoder output dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_separator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommended_lr: Option<f64>,
}

impl Handshake {
    pub fn for_encoder(enc: &dyn Encoder) -> Self {
        Self {
            protocol: PROTOCOL_VERSION,
            kind: AdapterKind::Encoder,
            name: enc.name().to_string(),
            version: enc.version().to_string(),
            max_context: None,
            concurrency: enc.supports_concurrency(),
            dim: Some(enc.dim()),
            turn_separator: None,
            recommended_lr: enc.recommended_lr(),
        }
    }

    pub fn for_generator(gen: &dyn Generator) -> Self {
        Self {
            protocol: PROTOCOL_VERSION,
            kind: AdapterKind::Generator,
            name: gen.name().to_string(),
            version: gen.version().to_string(),
            max_context: gen.max_context(),
            concurrency: gen.supports_concurrency(),
            dim: None,
            turn_separator: Some(gen.turn_separator().to_string()),
            recommended_lr: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.protocol != PROTOCOL_VERSION {
            return Err(AdapterError::Handshake(format!(
                "protocol {} (expected {PROTOCOL_VERSION})",
                self.protocol
            )));
        }
        if self.name.is_empty() {
            return Err(AdapterError::Handshake("empty adapter name".into()));
        }
        if self.kind == AdapterKind::Encoder && !self.dim.is_some_and(|d| d > 0) {
            return Err(AdapterError::Handshake("encoder must declare a positive dim".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Encode { text: String },
    Generate { context: String, params: DecodeParams },
    Score { context: String, target: String },
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reply {
    Vectors { vectors: Vec<Vec<f64>> },
    Text { text: String },
    Nll { nll: Vec<f64> },
    Error { error: String },
}

#[derive(Serialize, Deserialize)]
struct HandshakeLine {
    handshake: Handshake,
}

/// What a server answers requests with.
#[derive(Clone, Copy)]
pub enum Served<'a> {
    Encoder(&'a dyn Encoder),
    Generator(&'a dyn Generator),
}

impl Served<'_> {
    fn handshake(&self) -> Handshake {
        match self {
            Served::Encoder(e) => Handshake::for_encoder(*e),
            Served::Generator(g) => Handshake::for_generator(*g),
        }
    }

    fn answer(&self, request: Request) -> Reply {
        let err = |e: String| Reply::Error { error: e };
        match (self, request) {
            (Served::Encoder(e), Request::Encode { text }) => match e.encode(&text) {
                Ok(vectors) => Reply::Vectors { vectors },
                Err(x) => err(x.0),
            },
            (Served::Generator(g), Request::Generate { context, params }) => match g.generate(&context, &params) {
                Ok(text) => Reply::Text { text },
                Err(x) => err(x.to_string()),
            },
            (Served::Generator(g), Request::Score { context, target }) => match g.score_target(&context, &target) {
                Ok(nll) => Reply::Nll { nll },
                Err(x) => err(x.to_string()),
            },
            (_, other) => err(format!("unsupported request {other:?}")),
        }
    }
}

/// Serves requests from `input` until end of input or a shutdown request.
pub fn serve(served: Served<'_>, input: impl BufRead, mut output: impl Write) -> Result<()> {
    let hs = HandshakeLine {
        handshake: served.handshake(),
    };
    writeln!(output, "{}", serde_json::to_string(&hs).expect("handshake serializes"))?;
    output.flush()?;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Request>(&line) {
            Ok(Request::Shutdown) => break,
            Ok(req) => served.answer(req),
            Err(e) => Reply::Error {
                error: format!("malformed request: {e}"),
            },
        };
        writeln!(output, "{}", serde_json::to_string(&reply).expect("reply serializes"))?;
        output.flush()?;
    }
    Ok(())
}

struct Pipe {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Client for an adapter running as a child process.
pub struct SubprocessAdapter {
    pipe: Mutex<Pipe>,
    child: Mutex<Child>,
    handshake: Handshake,
}

impl std::fmt::Debug for SubprocessAdapter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubprocessAdapter")
            .field("handshake", &self.handshake)
            .finish()
    }
}

impl SubprocessAdapter {
    /// Starts `program args...` and reads its handshake.
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| AdapterError::Spawn {
                command: program.to_string(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut line = String::new();
        let n = stdout.read_line(&mut line)?;
        if n == 0 {
            let _ = child.kill();
            return Err(AdapterError::Handshake("adapter exited before its handshake".into()));
        }
        let handshake = match serde_json::from_str::<HandshakeLine>(line.trim()) {
            Ok(h) => h.handshake,
            Err(e) => {
                let _ = child.kill();
                return Err(AdapterError::Handshake(format!("unreadable handshake: {e}")));
            }
        };
        if let Err(e) = handshake.validate() {
            let _ = child.kill();
            return Err(e);
        }
        Ok(Self {
            pipe: Mutex::new(Pipe { stdin, stdout }),
            child: Mutex::new(child),
            handshake,
        })
    }

    /// Splits a shell-like command line on whitespace and spawns it.
    pub fn spawn_command_line(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| AdapterError::Handshake("empty adapter command".into()))?;
        let args: Vec<String> = parts.collect();
        Self::spawn(&program, &args)
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    pub fn request(&self, request: &Request) -> Result<Reply> {
        let mut pipe = self.pipe.lock().expect("adapter pipe poisoned");
        writeln!(
            pipe.stdin,
            "{}",
            serde_json::to_string(request).expect("request serializes")
        )?;
        pipe.stdin.flush()?;
        let mut line = String::new();
        if pipe.stdout.read_line(&mut line)? == 0 {
            return Err(AdapterError::Protocol("adapter closed its output".into()));
        }
        let reply: Reply =
            serde_json::from_str(line.trim()).map_err(|e| AdapterError::Protocol(format!("unreadable reply: {e}")))?;
        if let Reply::Error { error } = reply {
            return Err(AdapterError::Remote(error));
        }
        Ok(reply)
    }

    fn expect_kind(&self, kind: AdapterKind, what: &'static str) -> Result<()> {
        if self.handshake.kind == kind {
            Ok(())
        } else {
            Err(AdapterError::Unsupported(what))
        }
    }
}

impl Drop for SubprocessAdapter {
    fn drop(&mut self) {
        if let Ok(mut pipe) = self.pipe.lock() {
            let _ = writeln!(pipe.stdin, "{}", serde_json::to_string(&Request::Shutdown).unwrap());
            let _ = pipe.stdin.flush();
        }
        if let Ok(mut child) = self.child.lock() {
            let _ = child.wait();
        }
    }
}

impl Encoder for SubprocessAdapter {
    fn name(&self) -> &str {
        &self.handshake.name
    }

    fn version(&self) -> &str {
        &self.handshake.version
    }

    fn dim(&self) -> usize {
        self.handshake.dim.unwrap_or(0)
    }

    fn encode(&self, text: &str) -> Result<Vec<Vec<f64>>, EncoderError> {
        self.expect_kind(AdapterKind::Encoder, "encode")
            .map_err(|e| EncoderError(e.to_string()))?;
        match self.request(&Request::Encode { text: text.to_string() }) {
            Ok(Reply::Vectors { vectors }) => Ok(vectors),
            Ok(other) => Err(EncoderError(format!("unexpected reply {other:?}"))),
            Err(e) => Err(EncoderError(e.to_string())),
        }
    }

    fn recommended_lr(&self) -> Option<f64> {
        self.handshake.recommended_lr
    }

    fn supports_concurrency(&self) -> bool {
        // requests are serialized over one pipe
        false
    }
}

impl Generator for SubprocessAdapter {
    fn name(&self) -> &str {
        &self.handshake.name
    }

    fn version(&self) -> &str {
        &self.handshake.version
    }

    fn generate(&self, context: &str, params: &DecodeParams) -> Result<String> {
        self.expect_kind(AdapterKind::Generator, "generate")?;
        match self.request(&Request::Generate {
            context: context.to_string(),
            params: *params,
        })? {
            Reply::Text { text } => Ok(text),
            other => Err(AdapterError::Protocol(format!("unexpected reply {other:?}"))),
        }
    }

    fn score_target(&self, context: &str, target: &str) -> Result<Vec<f64>> {
        self.expect_kind(AdapterKind::Generator, "score")?;
        match self.request(&Request::Score {
            context: context.to_string(),
            target: target.to_string(),
        })? {
            Reply::Nll { nll } => {
                let n = crate::text::token_count(target);
                if nll.len() != n {
                    return Err(AdapterError::Protocol(format!(
                        "{} NLL values for {n} target tokens",
                        nll.len()
                    )));
                }
                Ok(nll)
            }
            other => Err(AdapterError::Protocol(format!("unexpected reply {other:?}"))),
        }
    }

    fn turn_separator(&self) -> &str {
        self.handshake
            .turn_separator
            .as_deref()
            .unwrap_or(DEFAULT_TURN_SEPARATOR)
    }

    fn max_context(&self) -> Option<usize> {
        self.handshake.max_context
    }

    fn supports_concurrency(&self) -> bool {
        false
    }
}
