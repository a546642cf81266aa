use chrono::NaiveDate;
use periop_core::memory::{
    retrieve_best_record, retrieve_exemplar_cases, ClinicalRecord, Embedding, ExemplarCase, LongTermMemory, Query,
};
use periop_core::Error;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::SEED;
use crate::Outcome;

const DIM: usize = 4;

fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        (dot / (aa * bb).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Small integer components make duplicate and parallel vectors, and so
/// exact similarity ties, common.
fn vector(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..DIM).map(|_| rng.gen_range(-2..=2) as f64).collect()
}

fn corpus(rng: &mut ChaCha8Rng) -> LongTermMemory {
    let n_records = rng.gen_range(0..=200);
    let n_patients = rng.gen_range(1..=4);
    let mut ids: Vec<usize> = (0..n_records).collect();
    ids.shuffle(rng);
    let records = ids
        .into_iter()
        .map(|i| ClinicalRecord {
            record_id: format!("r{i:03}"),
            patient_id: format!("p{}", rng.gen_range(0..n_patients)),
            date: NaiveDate::from_ymd_opt(2024, 1, rng.gen_range(1..=5)).unwrap(),
            text: String::new(),
            embedding: Embedding(vector(rng)),
        })
        .collect();
    let n_cases = rng.gen_range(0..=30);
    let mut ids: Vec<usize> = (0..n_cases).collect();
    ids.shuffle(rng);
    let cases = ids
        .into_iter()
        .map(|i| ExemplarCase {
            case_id: format!("c{i:02}"),
            summary: String::new(),
            steps: vec!["s".into()],
            embedding: Embedding(vector(rng)),
        })
        .collect();
    LongTermMemory {
        dim: DIM,
        patients: Vec::new(),
        cases,
        records,
        labs: Vec::new(),
    }
}

fn oracle_best(store: &LongTermMemory, q: &[f64], patient: &str) -> Option<(String, f64)> {
    let mut all: Vec<(&ClinicalRecord, f64)> = store
        .records
        .iter()
        .filter(|r| r.patient_id == patient)
        .map(|r| (r, naive_cosine(q, &r.embedding.0)))
        .collect();
    all.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then(a.0.date.cmp(&b.0.date))
            .then(a.0.record_id.cmp(&b.0.record_id))
    });
    all.first().map(|(r, s)| (r.record_id.clone(), *s))
}

fn oracle_cases(store: &LongTermMemory, q: &[f64], delta: f64, cap: usize) -> Vec<(String, f64)> {
    let mut hits: Vec<(String, f64)> = store
        .cases
        .iter()
        .map(|c| (c.case_id.clone(), naive_cosine(q, &c.embedding.0)))
        .filter(|(_, s)| *s >= delta)
        .collect();
    hits.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    hits.truncate(cap);
    hits
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut ties = 0;
    let mut queries = 0;
    for corpus_no in 0..100 {
        let store = corpus(&mut rng);
        for _ in 0..10 {
            queries += 1;
            let q = vector(&mut rng);
            let query = Query {
                text: "q".into(),
                embedding: Embedding(q.clone()),
                fallback: false,
            };
            let patient = format!("p{}", rng.gen_range(0..5));
            let expected = oracle_best(&store, &q, &patient);
            let got = match retrieve_best_record(&query, &store, &patient) {
                Ok((r, s)) => Some((r.record_id.clone(), s)),
                Err(Error::NoRecords(_)) => None,
                Err(e) => return Err(format!("corpus {corpus_no}: {e}")),
            };
            if got != expected {
                return Err(format!("corpus {corpus_no}: best record {got:?}, oracle {expected:?}"));
            }
            if let Some((_, s)) = &expected {
                let tied = store
                    .records
                    .iter()
                    .filter(|r| r.patient_id == patient && naive_cosine(&q, &r.embedding.0) == *s)
                    .count();
                if tied > 1 {
                    ties += 1;
                }
            }

            let delta = rng.gen_range(-10..=10) as f64 / 10.0;
            let cap = rng.gen_range(1..=5);
            let got: Vec<(String, f64)> = retrieve_exemplar_cases(&query, &store, delta, cap)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|(c, s)| (c.case_id.clone(), s))
                .collect();
            let expected = oracle_cases(&store, &q, delta, cap);
            if got != expected {
                return Err(format!("corpus {corpus_no}: cases {got:?}, oracle {expected:?} (delta {delta}, cap {cap})"));
            }

            let mut previous: Option<Vec<String>> = None;
            for step in (-10..=10).rev() {
                let delta = step as f64 / 10.0;
                let ids: Vec<String> = retrieve_exemplar_cases(&query, &store, delta, usize::MAX)
                    .map_err(|e| e.to_string())?
                    .into_iter()
                    .map(|(c, _)| c.case_id.clone())
                    .collect();
                if let Some(prev) = &previous {
                    if !prev.iter().all(|id| ids.contains(id)) {
                        return Err(format!("corpus {corpus_no}: lowering delta to {delta} dropped a case"));
                    }
                }
                previous = Some(ids);
            }
        }
    }
    Ok(format!(
        "100 corpora, {queries} queries match brute force ({ties} with similarity ties); delta-monotone"
    ))
}
