use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use periop_core::gateway::{stage, Script, ScriptEntry};
use periop_core::planner::{beam_search_plan, plan_key, PlannerConfig, TaskKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::common::{gateway, patient, SEED};
use crate::Outcome;

const WEIGHTS: [f64; 5] = [0.30, 0.25, 0.20, 0.15, 0.10];

/// A generation tree: children and rubric sub-scores keyed by path.
struct Tree {
    depth: usize,
    children: BTreeMap<Vec<String>, Vec<String>>,
    scores: BTreeMap<Vec<String>, [f64; 5]>,
}

fn weighted(sub: &[f64; 5]) -> f64 {
    let mut total = 0.0;
    for i in 0..5 {
        total += WEIGHTS[i] * sub[i];
    }
    total
}

impl Tree {
    fn random(rng: &mut ChaCha8Rng) -> Tree {
        let depth = rng.gen_range(1..=3);
        let mut tree = Tree {
            depth,
            children: BTreeMap::new(),
            scores: BTreeMap::new(),
        };
        let mut frontier = vec![Vec::<String>::new()];
        let mut counter = 0;
        for _ in 0..depth {
            let mut next = Vec::new();
            for path in frontier {
                let b = rng.gen_range(1..=3);
                let mut kids = Vec::new();
                for _ in 0..b {
                    counter += 1;
                    let text = format!("step {counter} of the plan");
                    let mut child = path.clone();
                    child.push(text.clone());
                    let sub = [(); 5].map(|_| rng.gen_range(0.0..=1.0));
                    tree.scores.insert(child.clone(), sub);
                    kids.push(text);
                    next.push(child);
                }
                tree.children.insert(path, kids);
            }
            frontier = next;
        }
        tree
    }

    fn leaves(&self) -> impl Iterator<Item = (&Vec<String>, f64)> {
        self.scores
            .iter()
            .filter(|(p, _)| p.len() == self.depth)
            .map(|(p, s)| (p, weighted(s)))
    }

    /// Leaf totals are pairwise separated, so the best path is unique.
    fn well_separated(&self) -> bool {
        let mut totals: Vec<f64> = self.leaves().map(|(_, t)| t).collect();
        totals.sort_by(f64::total_cmp);
        totals.windows(2).all(|w| w[1] - w[0] > 1e-9)
    }

    fn exhaustive_best(&self) -> (Vec<String>, f64) {
        let (p, t) = self
            .leaves()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("tree has leaves");
        (p.clone(), t)
    }

    /// Follows the highest-scoring child at every level; the first child
    /// wins ties.
    fn greedy(&self) -> (Vec<String>, f64) {
        let mut path = Vec::new();
        let mut score = 0.0;
        while path.len() < self.depth {
            let mut best: Option<(Vec<String>, f64)> = None;
            for kid in &self.children[&path] {
                let mut child = path.clone();
                child.push(kid.clone());
                let t = weighted(&self.scores[&child]);
                if best.as_ref().is_none_or(|(_, b)| t > *b) {
                    best = Some((child, t));
                }
            }
            (path, score) = best.expect("internal node has children");
        }
        (path, score)
    }

    /// Plain beam search: pool every child of the beam, keep the `width`
    /// best, and return the best node of the last level.
    fn beam(&self, width: usize) -> (Vec<String>, f64) {
        let mut beam: Vec<(Vec<String>, f64)> = vec![(Vec::new(), 0.0)];
        for _ in 0..self.depth {
            let mut pool = Vec::new();
            for (path, _) in &beam {
                for kid in &self.children[path] {
                    let mut child = path.clone();
                    child.push(kid.clone());
                    let t = weighted(&self.scores[&child]);
                    pool.push((child, t));
                }
            }
            pool.sort_by(|a, b| b.1.total_cmp(&a.1));
            pool.truncate(width);
            beam = pool;
        }
        beam.swap_remove(0)
    }

    fn script(&self) -> Script {
        let mut entries = Vec::new();
        for (path, kids) in &self.children {
            let text = kids.join("\n");
            entries.push(ScriptEntry::cycle(stage::EXPAND, &[text.as_str()]).keyed(plan_key(path)));
        }
        for (path, sub) in &self.scores {
            let text = format!(
                "task_alignment: {}\nsafety_compliance: {}\nlogical_order: {}\noperability: {}\nconciseness: {}",
                sub[0], sub[1], sub[2], sub[3], sub[4]
            );
            entries.push(ScriptEntry::cycle(stage::EVALUATE, &[text.as_str()]).keyed(plan_key(path)));
        }
        Script::from_entries(entries)
    }

    fn search(&self, beam_width: usize) -> Result<(Vec<String>, f64), String> {
        let (_, gw) = gateway(self.script());
        let config = PlannerConfig::new(self.depth, 3, beam_width);
        let (plan, trace) = beam_search_plan(&patient(), TaskKind::Surgery, &config, &gw).map_err(|e| e.to_string())?;
        Ok((plan.texts(), trace.best_score))
    }
}

pub fn run() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let started = Instant::now();
    let mut trees = 0;
    let mut below_greedy = Vec::new();
    while trees < 50 {
        let tree = Tree::random(&mut rng);
        if !tree.well_separated() {
            continue;
        }
        trees += 1;
        let (best_path, best) = tree.exhaustive_best();
        let (greedy_path, greedy) = tree.greedy();

        let (path, score) = tree.search(27)?;
        if path != best_path || (score - best).abs() > 1e-9 {
            return Err(format!(
                "tree {trees}: non-pruning beam returned {path:?} ({score}), exhaustive best is {best_path:?} ({best})"
            ));
        }

        let (path, _) = tree.search(1)?;
        if path != greedy_path {
            return Err(format!("tree {trees}: beam width 1 returned {path:?}, greedy is {greedy_path:?}"));
        }

        let (path2, score2) = tree.search(2)?;
        let (oracle_path, _) = tree.beam(2);
        if path2 != oracle_path {
            return Err(format!("tree {trees}: beam width 2 returned {path2:?}, oracle beam gives {oracle_path:?}"));
        }
        if score2 > best + 1e-9 {
            return Err(format!("tree {trees}: beam width 2 scored {score2} above the exhaustive best {best}"));
        }
        if score2 < greedy - 1e-9 {
            below_greedy.push(format!("tree {trees}: beam-2 {score2:.4} < greedy {greedy:.4} (depth {})", tree.depth));
        }
    }
    let elapsed = started.elapsed();
    if !below_greedy.is_empty() {
        return Err(format!(
            "width-2 beam (equal to the oracle beam) fell below greedy on {} of 50 trees: {}",
            below_greedy.len(),
            below_greedy.join("; ")
        ));
    }
    if elapsed > Duration::from_secs(5) {
        return Err(format!("50 trees took {:.2}s, limit 5s", elapsed.as_secs_f64()));
    }
    Ok(format!(
        "50 trees, width-27 beam = exhaustive best, width-1 = greedy, width-2 = oracle beam within [greedy, best]; {:.2}s",
        elapsed.as_secs_f64()
    ))
}
