use periop_core::gateway::{stage, Script, ScriptEntry};
use periop_core::planner::{evaluate_plan, Plan, RubricScore, RubricWeights, TaskKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::{gateway, patient, SEED};
use crate::Outcome;

const WEIGHTS: [f64; 5] = [0.30, 0.25, 0.20, 0.15, 0.10];

fn oracle(sub: &[f64; 5]) -> f64 {
    let clamped = sub.map(|x| x.clamp(0.0, 1.0));
    WEIGHTS.iter().zip(clamped).map(|(w, x)| w * x).sum()
}

fn check(i: usize, sub: &[f64; 5], score: &RubricScore) -> Result<(), String> {
    let expected = oracle(sub);
    if (score.total - expected).abs() > 1e-9 {
        return Err(format!("case {i}: total {} but dot product {expected} for {sub:?}", score.total));
    }
    if !(0.0..=1.0).contains(&score.total) || score.subscores().iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(format!("case {i}: score out of [0, 1]: {score:?}"));
    }
    Ok(())
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let weights = RubricWeights::default();
    if weights.0 != WEIGHTS {
        return Err(format!("default weights {:?}, expected {WEIGHTS:?}", weights.0));
    }
    let plan = Plan::from_texts(TaskKind::Surgery, &["incise", "close"]).map_err(|e| e.to_string())?;
    let mut through_backend = 0;
    for i in 0..1000 {
        // A quarter of the cases stray outside [0, 1] to exercise clamping.
        let sub: [f64; 5] = if i % 4 == 3 {
            [(); 5].map(|_| rng.gen_range(-0.5..1.5))
        } else {
            [(); 5].map(|_| rng.gen_range(0.0..=1.0))
        };
        check(i, &sub, &RubricScore::from_subscores(sub, &weights))?;

        if i % 10 == 0 {
            let text = format!(
                "conciseness: {}\nlogical_order: {}\ntask_alignment: {}\noperability: {}\nsafety_compliance: {}",
                sub[4], sub[2], sub[0], sub[3], sub[1]
            );
            let (_, gw) = gateway(Script::from_entries(vec![ScriptEntry::cycle(stage::EVALUATE, &[text.as_str()])]));
            let eval = evaluate_plan(&plan, &patient(), TaskKind::Surgery, &weights, &gw).map_err(|e| e.to_string())?;
            if eval.flagged {
                return Err(format!("case {i}: evaluator output flagged as unreadable"));
            }
            check(i, &sub, &eval.score)?;
            through_backend += 1;
        }
    }
    Ok(format!(
        "1000 sub-score vectors ({through_backend} through the evaluator) match the dot product within 1e-9, all in [0, 1]"
    ))
}
