use std::path::PathBuf;
use std::sync::Arc;

use periop_core::config::{Ablation, EngineConfig};
use periop_core::gateway::{FixedClock, Gateway, ModelBackend, Script, ScriptedBackend};
use periop_core::memory::{BasicInfo, PatientProfile};
use periop_core::pipeline::Engine;
use periop_core::session::SessionState;

pub const SEED: u64 = 0x5EED;

/// The three shipped sessions: patient, task description, golden name.
pub const SESSIONS: [(&str, &str, &str); 3] = [
    ("p001", "Simulate the aortic valve replacement for this patient", "p001"),
    ("p002", "Review the admission findings before cholecystectomy", "p002"),
    ("p003", "Guide recovery after hip hemiarthroplasty", "p003"),
];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn config() -> EngineConfig {
    EngineConfig::load(&fixtures().join("engine.toml")).expect("fixture config")
}

pub fn engine_with(config: EngineConfig) -> Engine {
    Engine::from_config(config, Arc::new(FixedClock::default()))
        .expect("fixture engine")
        .0
}

pub fn engine() -> Engine {
    engine_with(config())
}

pub fn run_fixture(engine: &Engine, index: usize, ablations: &[Ablation]) -> SessionState {
    let (patient, task, _) = SESSIONS[index];
    engine
        .run_session("s0001", patient, task, ablations)
        .expect("fixture session")
}

pub fn gateway(script: Script) -> (Arc<ScriptedBackend>, Gateway) {
    let backend = Arc::new(ScriptedBackend::new(script));
    let dynamic: Arc<dyn ModelBackend> = backend.clone();
    (backend, Gateway::new(dynamic, Arc::new(FixedClock::default())))
}

pub fn patient() -> PatientProfile {
    PatientProfile {
        patient_id: "px".into(),
        basic_info: BasicInfo {
            age: 60,
            sex: "female".into(),
            admission_reason: "elective surgery".into(),
            history_summary: "none".into(),
            region: String::new(),
            occupation: String::new(),
            blood_type: String::new(),
        },
    }
}

pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialize");
    s.push('\n');
    s
}

/// Compares `actual` with a golden file, or rewrites it when
/// `UPDATE_GOLDEN` is set.
pub fn golden(name: &str, actual: &str) -> Result<(), String> {
    let path = fixtures().join("golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let line = expected
        .lines()
        .zip(actual.lines())
        .position(|(a, b)| a != b)
        .unwrap_or_else(|| expected.lines().count().min(actual.lines().count()));
    Err(format!("{name} differs from golden at line {}", line + 1))
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}
