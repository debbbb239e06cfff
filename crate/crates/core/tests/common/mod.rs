#![allow(dead_code)]

use cibflow::engine::Scenario;
use cibflow::fixtures;
use cibflow::model::{CellRef, JudgementCell, StateAssignment, StudySpec};
use cibflow::simulate::{EnsembleResult, Pathway, RunRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random study with 2..=max_desc descriptors of 2..=max_states states and
/// integer scores in [-3, 3]. Some specs get a forbidden pair.
pub fn random_spec(seed: u64, max_desc: usize, max_states: usize) -> StudySpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_desc);
    let counts: Vec<usize> = (0..n).map(|_| rng.random_range(2..=max_states)).collect();
    let mut spec = fixtures::zero_spec(&counts);
    let cells: Vec<CellRef> = spec.cim.cells().collect();
    for c in cells {
        let score = rng.random_range(-3i32..=3) as f64;
        spec.cim
            .set(
                c,
                JudgementCell {
                    score,
                    confidence: 5,
                },
            )
            .unwrap();
    }
    if rng.random_bool(0.3) {
        let a = StateAssignment::new(0, rng.random_range(0..counts[0]));
        let b = StateAssignment::new(1, rng.random_range(0..counts[1]));
        spec.rules.forbidden_pairs.push((a, b));
        spec.baseline = Scenario(vec![0; n]);
        if a.state == 0 && b.state == 0 {
            spec.baseline.0[0] = 1;
        }
    }
    spec
}

/// Every scenario of the space, written out as nested counting.
pub fn all_scenarios(counts: &[usize]) -> Vec<Scenario> {
    let mut out = vec![Vec::new()];
    for &c in counts {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                (0..c).map(move |s| {
                    let mut v = prefix.clone();
                    v.push(s);
                    v
                })
            })
            .collect();
    }
    out.into_iter().map(Scenario).collect()
}

/// Balance of descriptor j's state l, summed straight from the matrix.
pub fn theta(spec: &StudySpec, z: &Scenario, j: usize, l: usize) -> f64 {
    (0..z.len())
        .filter(|&i| i != j)
        .map(|i| {
            spec.cim.score(CellRef {
                source: i,
                source_state: z.0[i],
                target: j,
                target_state: l,
            })
        })
        .sum()
}

pub fn oracle_consistent(spec: &StudySpec, z: &Scenario) -> bool {
    (0..z.len()).all(|j| {
        let chosen = theta(spec, z, j, z.0[j]);
        (0..spec.descriptors[j].states.len()).all(|l| theta(spec, z, j, l) <= chosen)
    })
}

pub fn oracle_feasible(spec: &StudySpec, z: &Scenario) -> bool {
    spec.rules
        .forbidden_pairs
        .iter()
        .all(|(a, b)| !(z.0[a.descriptor] == a.state && z.0[b.descriptor] == b.state))
}

pub fn brute_force(spec: &StudySpec) -> Vec<Scenario> {
    all_scenarios(&spec.state_counts())
        .into_iter()
        .filter(|z| oracle_consistent(spec, z) && oracle_feasible(spec, z))
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1).
pub fn sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

/// Wilson score interval at z = 1.959963984540054, written out directly.
pub fn wilson95(successes: u64, trials: u64) -> (f64, f64) {
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    (centre - half, centre + half)
}

/// Pathway over 2025, 2030, ... with one state vector per period.
pub fn pathway(rows: &[Vec<usize>]) -> Pathway {
    Pathway {
        entries: rows
            .iter()
            .enumerate()
            .map(|(t, s)| (2025 + 5 * t as i32, Scenario(s.clone())))
            .collect(),
    }
}

/// Ensemble holding each pathway the given number of times, in order.
pub fn synthetic_ensemble(
    ids: &[&str],
    counts: &[usize],
    pathways: &[(Pathway, usize)],
) -> EnsembleResult {
    let mut runs = Vec::new();
    for (p, n) in pathways {
        for _ in 0..*n {
            runs.push(RunRecord {
                run_index: runs.len(),
                seed_stream: format!("synthetic/run{}", runs.len()),
                pathway: p.clone(),
                converged: vec![true; p.entries.len()],
                succession_iterations: vec![0; p.entries.len()],
                failure: None,
            });
        }
    }
    EnsembleResult {
        spec_digest: "synthetic".into(),
        master_seed: 0,
        run_count: runs.len(),
        periods: pathways[0].0.periods(),
        descriptor_ids: ids.iter().map(|s| s.to_string()).collect(),
        state_counts: counts.to_vec(),
        runs,
    }
}

/// Two descriptors X and O (outcome), three states each; X held at 1.
pub fn outcome_path(seq: &[usize]) -> Pathway {
    pathway(&seq.iter().map(|&o| vec![1, o]).collect::<Vec<_>>())
}
