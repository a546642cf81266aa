//! Model gateway: pluggable text generation, tool retrieval and token accounting.
//!
//! Every model call in the engine goes through [`Gateway::complete`], which
//! records the call in the session's [`TokenLedger`]. The engine never looks
//! at which backend kind sits behind the gateway.

mod http;
mod ledger;
mod scripted;
pub mod tools;

use std::sync::{Arc, Mutex};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use http::HttpBackend;
pub use ledger::{LedgerRow, LedgerTotals, TokenLedger};
pub use scripted::{ConsumptionPolicy, Script, ScriptEntry, ScriptedBackend, FAIL_MARKER};

/// Stage tags used by the engine when calling a backend.
pub mod stage {
    pub const CLASSIFY: &str = "planner.classify";
    pub const EXPAND: &str = "planner.expand";
    pub const EVALUATE: &str = "planner.evaluate";
    pub const ALLOCATE: &str = "planner.allocate";
    pub const DIRECT_PLAN: &str = "planner.direct";
    pub const QUERY: &str = "memory.query";
    pub const DEPARTMENT: &str = "agent.department";
    pub const GENERIC: &str = "agent.generic";
    pub const LAB_SELECT: &str = "lab.select";
    pub const LAB_SYNTHESIZE: &str = "lab.synthesize";
    pub const AGGREGATE: &str = "aggregate";
    pub const REFLECT_CHECK: &str = "reflect.check";
    pub const REFLECT_REVISE: &str = "reflect.revise";
}

/// Text produced by a backend together with its token accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Scripted,
    Http,
}

/// A text generator. Implementations must be callable from several threads.
pub trait ModelBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn complete(&self, stage: &str, prompt: &str) -> Result<Completion>;
}

/// Whitespace token count, the accounting unit for scripted runs.
pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Wall-clock source. Deterministic runs use [`FixedClock`].
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that never advances.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub DateTime<Utc>);

impl Default for FixedClock {
    fn default() -> Self {
        FixedClock(Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap())
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Base URL of a chat-completion compatible endpoint.
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub api_key: Option<String>,
    /// Script file for the scripted kind.
    #[serde(default)]
    pub script: Option<std::path::PathBuf>,
}

fn default_temperature() -> f64 {
    0.7
}

fn default_retries() -> u32 {
    2
}

fn default_timeout() -> u64 {
    60
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            url: None,
            model: None,
            temperature: default_temperature(),
            max_retries: default_retries(),
            timeout_secs: default_timeout(),
            api_key: None,
            script: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::Config(format!(
                "backend.temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        match self.kind {
            BackendKind::Http if self.url.is_none() => {
                Err(Error::Config("backend.url is required for the http backend".into()))
            }
            BackendKind::Http if self.model.is_none() => {
                Err(Error::Config("backend.model is required for the http backend".into()))
            }
            _ => Ok(()),
        }
    }

    /// Builds a fresh backend. Scripted backends get their own cursors, so
    /// each session replays the script from the start.
    pub fn build(&self) -> Result<Arc<dyn ModelBackend>> {
        self.validate()?;
        match self.kind {
            BackendKind::Scripted => {
                let path = self.script.as_ref().ok_or_else(|| {
                    Error::Config("backend.script is required for the scripted backend".into())
                })?;
                Ok(Arc::new(ScriptedBackend::new(Script::load(path)?)))
            }
            BackendKind::Http => Ok(Arc::new(HttpBackend::new(self)?)),
        }
    }
}

/// Session-scoped entry point for model calls.
pub struct Gateway {
    backend: Arc<dyn ModelBackend>,
    clock: Arc<dyn Clock>,
    ledger: Mutex<TokenLedger>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ModelBackend>, clock: Arc<dyn Clock>) -> Self {
        Self::with_ledger(backend, clock, TokenLedger::default())
    }

    /// Resumes accounting on top of an existing ledger.
    pub fn with_ledger(
        backend: Arc<dyn ModelBackend>,
        clock: Arc<dyn Clock>,
        ledger: TokenLedger,
    ) -> Self {
        Gateway {
            backend,
            clock,
            ledger: Mutex::new(ledger),
        }
    }

    pub fn complete(&self, stage: &str, prompt: &str) -> Result<Completion> {
        let started = self.clock.now();
        let completion = self.backend.complete(stage, prompt)?;
        let elapsed = (self.clock.now() - started).num_milliseconds().max(0) as u64;
        self.ledger.lock().unwrap().record(
            stage,
            completion.input_tokens,
            completion.output_tokens,
            elapsed,
        );
        Ok(completion)
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        self.clock.clone()
    }

    pub fn ledger(&self) -> TokenLedger {
        self.ledger.lock().unwrap().clone()
    }
}
