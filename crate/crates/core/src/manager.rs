//! Concurrent session registry behind the service API.
//!
//! Reads return snapshots; writes to one session are serialized. Pipeline
//! runs work on a private copy of the state and commit it after every phase
//! and plan step, persisting each commit when a store is configured.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tracing::{error, info};

use crate::aggregation::{Feedback, FinalOutput};
use crate::config::Ablation;
use crate::error::{Error, Result};
use crate::pipeline::{self, Engine};
use crate::planner::{Plan, SearchTrace, TaskKind};
use crate::session::{Phase, SessionEvent, SessionState, SessionStore, StepRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// `run` returns once the session awaits review or has failed.
    Inline,
    /// `run` returns immediately; the pipeline continues on a thread.
    Background,
}

struct Slot {
    state: RwLock<SessionState>,
    write: Mutex<()>,
    running: AtomicBool,
}

impl Slot {
    fn new(state: SessionState) -> Arc<Self> {
        Arc::new(Slot {
            state: RwLock::new(state),
            write: Mutex::new(()),
            running: AtomicBool::new(false),
        })
    }

    fn snapshot(&self) -> SessionState {
        self.state.read().unwrap().clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub patient_id: String,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskKind>,
}

/// Planning and execution view for audit and review tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub session_id: String,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchTrace>,
    pub steps: Vec<StepRecord>,
    pub events: Vec<SessionEvent>,
}

pub struct SessionManager {
    engine: Arc<Engine>,
    store: Option<SessionStore>,
    slots: RwLock<BTreeMap<String, Arc<Slot>>>,
    counter: AtomicU64,
    mode: RunMode,
}

impl SessionManager {
    pub fn new(engine: Arc<Engine>, store: Option<SessionStore>, mode: RunMode) -> Self {
        SessionManager {
            engine,
            store,
            slots: RwLock::new(BTreeMap::new()),
            counter: AtomicU64::new(0),
            mode,
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn slot(&self, session_id: &str) -> Result<Arc<Slot>> {
        self.slots
            .read()
            .unwrap()
            .get(session_id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(session_id.to_string()))
    }

    fn persist(&self, state: &SessionState) -> Result<()> {
        match &self.store {
            Some(store) => store.save(state),
            None => Ok(()),
        }
    }

    /// Loads persisted sessions. Returns the ids of sessions stopped in the
    /// middle of the pipeline; pass them to [`SessionManager::resume`].
    pub fn recover(&self) -> Result<Vec<String>> {
        let Some(store) = &self.store else {
            return Ok(Vec::new());
        };
        let mut pending = Vec::new();
        let mut slots = self.slots.write().unwrap();
        for state in store.load_all()? {
            if let Some(n) = state.session_id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                self.counter.fetch_max(n, Ordering::SeqCst);
            }
            if matches!(
                state.phase,
                Phase::Planning | Phase::Executing | Phase::Aggregated | Phase::Reflected
            ) {
                pending.push(state.session_id.clone());
            }
            slots.insert(state.session_id.clone(), Slot::new(state));
        }
        info!(sessions = slots.len(), pending = pending.len(), "recovered sessions");
        Ok(pending)
    }

    pub fn create(&self, patient_id: &str, task_description: &str, ablations: &[Ablation]) -> Result<SessionState> {
        // Ids are only consumed by sessions that were actually created.
        let mut slots = self.slots.write().unwrap();
        let n = self.counter.load(Ordering::SeqCst) + 1;
        let id = format!("s{n:04}");
        let state = self.engine.new_session(&id, patient_id, task_description, ablations)?;
        self.persist(&state)?;
        self.counter.store(n, Ordering::SeqCst);
        slots.insert(id, Slot::new(state.clone()));
        Ok(state)
    }

    /// Starts the pipeline of a session in `created`.
    pub fn run(&self, session_id: &str) -> Result<()> {
        let slot = self.slot(session_id)?;
        {
            let _w = slot.write.lock().unwrap();
            let phase = slot.state.read().unwrap().phase;
            if phase != Phase::Created || slot.running.load(Ordering::SeqCst) {
                return Err(Error::IllegalTransition(format!(
                    "session `{session_id}` is {phase}; only created sessions can be run"
                )));
            }
            slot.running.store(true, Ordering::SeqCst);
        }
        self.start(slot);
        Ok(())
    }

    /// Continues a recovered session from its last committed phase.
    pub fn resume(&self, session_id: &str) -> Result<()> {
        let slot = self.slot(session_id)?;
        {
            let _w = slot.write.lock().unwrap();
            let phase = slot.state.read().unwrap().phase;
            if !matches!(
                phase,
                Phase::Planning | Phase::Executing | Phase::Aggregated | Phase::Reflected
            ) || slot.running.load(Ordering::SeqCst)
            {
                return Err(Error::IllegalTransition(format!(
                    "session `{session_id}` is {phase}; nothing to resume"
                )));
            }
            slot.running.store(true, Ordering::SeqCst);
        }
        self.start(slot);
        Ok(())
    }

    fn start(&self, slot: Arc<Slot>) {
        let engine = self.engine.clone();
        let store = self.store.clone();
        match self.mode {
            RunMode::Inline => drive(&engine, store.as_ref(), &slot),
            RunMode::Background => {
                std::thread::spawn(move || drive(&engine, store.as_ref(), &slot));
            }
        }
    }

    pub fn get_state(&self, session_id: &str) -> Result<SessionState> {
        Ok(self.slot(session_id)?.snapshot())
    }

    pub fn is_running(&self, session_id: &str) -> Result<bool> {
        Ok(self.slot(session_id)?.running.load(Ordering::SeqCst))
    }

    /// Polls until the pipeline of a session stops or `timeout` passes.
    pub fn wait(&self, session_id: &str, timeout: Duration) -> Result<SessionState> {
        let slot = self.slot(session_id)?;
        let deadline = Instant::now() + timeout;
        while slot.running.load(Ordering::SeqCst) && Instant::now() < deadline {
            std::thread::sleep(Duration::from_millis(5));
        }
        Ok(slot.snapshot())
    }

    pub fn list(&self) -> Vec<SessionSummary> {
        self.slots
            .read()
            .unwrap()
            .values()
            .map(|slot| {
                let s = slot.state.read().unwrap();
                SessionSummary {
                    session_id: s.session_id.clone(),
                    patient_id: s.patient_id.clone(),
                    phase: s.phase,
                    task: s.task,
                }
            })
            .collect()
    }

    pub fn submit_feedback(&self, session_id: &str, feedback: &Feedback) -> Result<FinalOutput> {
        let slot = self.slot(session_id)?;
        let _w = slot.write.lock().unwrap();
        let mut state = slot.snapshot();
        let output = pipeline::submit_feedback(&mut state, feedback, self.engine.clock().now())?;
        self.persist(&state)?;
        *slot.state.write().unwrap() = state;
        Ok(output)
    }

    pub fn finalize(&self, session_id: &str) -> Result<FinalOutput> {
        let slot = self.slot(session_id)?;
        let _w = slot.write.lock().unwrap();
        let mut state = slot.snapshot();
        let already = state.phase == Phase::Finalized;
        let output = pipeline::finalize(&mut state, self.engine.clock().now())?;
        if !already {
            self.persist(&state)?;
            *slot.state.write().unwrap() = state;
        }
        Ok(output)
    }

    pub fn trace(&self, session_id: &str) -> Result<SessionTrace> {
        let s = self.get_state(session_id)?;
        Ok(SessionTrace {
            session_id: s.session_id,
            phase: s.phase,
            plan: s.plan,
            search: s.trace,
            steps: s.steps,
            events: s.events,
        })
    }
}

fn drive(engine: &Engine, store: Option<&SessionStore>, slot: &Slot) {
    let mut state = slot.snapshot();
    let mut commit = |s: &SessionState| -> Result<()> {
        if let Some(store) = store {
            store.save(s)?;
        }
        *slot.state.write().unwrap() = s.clone();
        Ok(())
    };
    let result = engine.new_backend().and_then(|backend| engine.run_to_review(&mut state, backend, &mut commit));
    if let Err(e) = result {
        error!(session = %state.session_id, error = %e, "pipeline stopped");
        if !state.phase.is_terminal() && state.fail(e.to_string(), engine.clock().now()).is_ok() {
            let _ = commit(&state);
        }
    }
    slot.running.store(false, Ordering::SeqCst);
}
