use periop_core::agents::{identify_abnormal, select_lab_items};
use periop_core::gateway::{stage, Script, ScriptEntry, FAIL_MARKER};
use periop_core::memory::{LabItem, LabValue};
use periop_core::planner::TaskKind;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::{gateway, patient, SEED};
use crate::Outcome;

fn table(rng: &mut ChaCha8Rng) -> Vec<LabItem> {
    let n = rng.gen_range(0..=15);
    (0..n)
        .map(|i| LabItem {
            name: format!("Test{i}"),
            value: if rng.gen_bool(0.8) {
                LabValue::Number(rng.gen_range(0.0..10.0))
            } else {
                LabValue::Text("positive".into())
            },
            unit: String::new(),
            reference_range: None,
            abnormal: rng.gen_bool(0.5),
        })
        .collect()
}

/// A ranking reply mixing real names (in any case), repeats, unknown names
/// and blank lines, or a backend failure.
fn reply(rng: &mut ChaCha8Rng, labs: &[LabItem]) -> String {
    if rng.gen_bool(0.1) {
        return FAIL_MARKER.to_string();
    }
    let mut lines = Vec::new();
    for _ in 0..rng.gen_range(0..=12) {
        match rng.gen_range(0..4) {
            0 => lines.push(format!("Unknown{}", rng.gen_range(0..5))),
            1 => lines.push(String::new()),
            _ => {
                if let Some(item) = labs.choose(rng) {
                    let name = if rng.gen_bool(0.3) { item.name.to_uppercase() } else { item.name.clone() };
                    lines.push(format!("- {name}"));
                }
            }
        }
    }
    lines.join("\n")
}

fn position(haystack: &[LabItem], needle: &LabItem) -> Option<usize> {
    haystack.iter().position(|x| x == needle)
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut passthrough = 0;
    let mut ranked = 0;
    for case in 0..2000 {
        let labs = table(&mut rng);
        let k_max = rng.gen_range(1..=6);
        let abnormal = identify_abnormal(&labs);
        let expected: Vec<LabItem> = labs.iter().filter(|l| l.abnormal).cloned().collect();
        if abnormal != expected {
            return Err(format!("case {case}: abnormal set differs from the flagged rows"));
        }

        let text = reply(&mut rng, &labs);
        let (backend, gw) = gateway(Script::from_entries(vec![ScriptEntry::cycle(stage::LAB_SELECT, &[text.as_str()])]));
        let selection = select_lab_items(&abnormal, &patient(), TaskKind::Analysis, k_max, &gw).map_err(|e| e.to_string())?;
        let sel = &selection.items;

        if sel.len() > k_max {
            return Err(format!("case {case}: selected {} items, k_max {k_max}", sel.len()));
        }
        if sel.len() != abnormal.len().min(k_max) {
            return Err(format!("case {case}: selected {} of {} abnormal with k_max {k_max}", sel.len(), abnormal.len()));
        }
        let mut seen = Vec::new();
        for item in sel {
            let Some(i) = position(&abnormal, item) else {
                return Err(format!("case {case}: selected {} is not abnormal", item.name));
            };
            if seen.contains(&i) {
                return Err(format!("case {case}: {} selected twice", item.name));
            }
            seen.push(i);
            if position(&labs, item).is_none() {
                return Err(format!("case {case}: selected {} is not in the table", item.name));
            }
        }

        let calls = backend.calls(stage::LAB_SELECT);
        if abnormal.len() <= k_max {
            passthrough += 1;
            if calls != 0 || selection.ranked {
                return Err(format!("case {case}: passthrough made {calls} backend calls"));
            }
            if *sel != abnormal {
                return Err(format!("case {case}: passthrough reordered or dropped items"));
            }
        } else {
            ranked += 1;
            if calls != 1 {
                return Err(format!("case {case}: ranking made {calls} backend calls"));
            }
        }
    }
    Ok(format!(
        "2000 tables: L_sel in L_ab in L, |L_sel| <= k_max; {passthrough} passthroughs with 0 backend calls, {ranked} ranked with 1"
    ))
}
