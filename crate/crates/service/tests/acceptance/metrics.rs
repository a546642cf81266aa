use periop_core::metrics::{
    complication_recall, diagnostic_coverage, early_warning_sensitivity, evaluate_record, false_alarm_rate,
    guideline_adherence, misdiagnosis_avoidance, plan_feasibility, rehab_similarity, Cell, EvalRecord,
    FeasibilityWeights, Metric, MetricError, Predictions, References,
};
use periop_core::memory::HashEmbedder;
use periop_core::planner::TaskKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::{ensure, SEED};
use crate::Outcome;

fn exact(name: &str, got: Result<f64, MetricError>, expected: f64) -> Result<(), String> {
    match got {
        Ok(v) if v == expected => Ok(()),
        other => Err(format!("{name}: got {other:?}, expected {expected}")),
    }
}

fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    dot / (aa.sqrt() * bb.sqrt())
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn run() -> Outcome {
    // Matching is trimmed and case-insensitive; duplicates count once.
    exact(
        "DC",
        diagnostic_coverage(&["Anemia", " hyperkalemia", "ANEMIA", "sepsis"], &["anemia", "Hyperkalemia", "AKI"]),
        2.0 / 3.0,
    )?;
    exact("MAR", misdiagnosis_avoidance(&["pe"], &["PE", "MI", "stroke", "AKI"]), 1.0 / 4.0)?;
    exact("MAR all", misdiagnosis_avoidance(&["mi", "pe"], &["PE", "MI"]), 1.0)?;
    exact("Recall", complication_recall(&["ileus", "delirium", "dvt"], &["Delirium", "DVT", "SSI", "pneumonia", "AKI"]), 2.0 / 5.0)?;
    exact("Recall none", complication_recall::<&str, &str>(&[], &["ssi"]), 0.0)?;
    exact("GAR", guideline_adherence(3, 4), 3.0 / 4.0)?;
    ensure(
        diagnostic_coverage::<&str, &str>(&["x"], &[]) == Err(MetricError::EmptyReference),
        || "empty reference must be undefined".into(),
    )?;
    ensure(guideline_adherence(0, 0) == Err(MetricError::ZeroDenominator), || "GAR 0/0 must be undefined".into())?;

    exact("EWS(3,1)", early_warning_sensitivity(3, 1), 0.75)?;
    exact("FAR(2,2)", false_alarm_rate(2, 2), 0.5)?;

    let weights = FeasibilityWeights::default();
    ensure(weights.0 == [1.0 / 3.0; 3], || format!("default PFS weights {:?}", weights.0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    for _ in 0..100 {
        let [p, r, s] = [(); 3].map(|_| rng.gen_range(0.0..=1.0));
        let pfs = plan_feasibility(p, r, s, &weights).map_err(|e| e.to_string())?;
        let mean = (p + r + s) / 3.0;
        ensure((pfs - mean).abs() <= 1e-12, || format!("PFS {pfs} vs mean {mean}"))?;
    }

    // GAR through the harness: plan steps aligned with the guideline.
    let record = EvalRecord {
        session_id: "g".into(),
        task: TaskKind::Surgery,
        predictions: Predictions {
            plan_steps: strings(&["Time-out", "incise", "Close", "dress"]),
            alarms: strings(&["hypotension", "bradycardia", "bleeding", "fever"]),
            ..Default::default()
        },
        references: References {
            guideline_steps: Some(strings(&["time-out", "close", "dress", "antibiotics"])),
            events: Some(strings(&["Hypotension", "Bleeding"])),
            ..Default::default()
        },
    };
    let row = evaluate_record(&record, &HashEmbedder::new(64), &weights).map_err(|e| e.to_string())?;
    for (metric, expected) in [(Metric::Gar, 0.75), (Metric::Ews, 1.0), (Metric::Far, 0.5)] {
        ensure(row.metrics.get(&metric) == Some(&Cell::Value { value: expected }), || {
            format!("{} through the harness: {:?}, expected {expected}", metric.as_str(), row.metrics.get(&metric))
        })?;
    }

    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let dim = rng.gen_range(1..=64);
        let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = rehab_similarity(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((got - naive_cosine(&a, &b)).abs());
    }
    ensure(worst <= 1e-9, || format!("rehab similarity deviates from cosine by {worst:e}"))?;

    Ok(format!(
        "set metrics exact, EWS(3,1)=0.75, FAR(2,2)=0.5, PFS = mean with 1/3 weights, cosine max error {worst:.1e} over 1000 pairs"
    ))
}
