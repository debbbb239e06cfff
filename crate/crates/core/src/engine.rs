//! Deterministic cross-impact balance mathematics: impact balances,
//! consistency, the succession operator, attractors and exhaustive
//! enumeration.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::{CrossImpactMatrix, StateAssignment, StateLayout, StudySpec};
use crate::{Error, Result};

/// One state index per descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scenario(pub Vec<usize>);

impl Scenario {
    pub fn states(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of descriptors whose states differ.
    pub fn hamming(&self, other: &Scenario) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl From<Vec<usize>> for Scenario {
    fn from(v: Vec<usize>) -> Self {
        Scenario(v)
    }
}

/// Impact score of every state of every descriptor under one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactBalance {
    layout: StateLayout,
    scores: Vec<f64>,
}

impl ImpactBalance {
    /// Scores of descriptor `j`, one per state.
    pub fn row(&self, j: usize) -> &[f64] {
        &self.scores[self.layout.range(j)]
    }

    /// All scores, flat in layout order.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Consistency {
    pub consistent: bool,
    /// Per descriptor, the best score minus the score of the chosen state.
    pub deficits: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttractorKind {
    FixedPoint,
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attractor {
    pub kind: AttractorKind,
    pub scenarios: Vec<Scenario>,
    pub steps_to_reach: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttractorSearch {
    Found(Attractor),
    /// `max_steps` successions without any scenario recurring.
    Exhausted {
        steps: usize,
        last: Scenario,
    },
}

impl AttractorSearch {
    pub fn attractor(&self) -> Option<&Attractor> {
        match self {
            AttractorSearch::Found(a) => Some(a),
            AttractorSearch::Exhausted { .. } => None,
        }
    }
}

fn check_structure(spec: &StudySpec, cim: &CrossImpactMatrix, scenario: &Scenario) -> Result<()> {
    let counts = spec.state_counts();
    if cim.state_counts() != counts.as_slice() {
        return Err(Error::Structure(format!(
            "matrix layout {:?} does not match descriptor state counts {counts:?}",
            cim.state_counts()
        )));
    }
    if scenario.len() != counts.len() {
        return Err(Error::Structure(format!(
            "scenario has {} entries for {} descriptors",
            scenario.len(),
            counts.len()
        )));
    }
    if let Some(j) = (0..counts.len()).find(|&j| scenario.0[j] >= counts[j]) {
        return Err(Error::Structure(format!(
            "state {} of descriptor `{}` does not exist",
            scenario.0[j], spec.descriptors[j].id
        )));
    }
    Ok(())
}

/// θ without threshold rules, written into `out` (flat, layout order).
fn raw_balance(cim: &CrossImpactMatrix, scenario: &Scenario, out: &mut [f64]) {
    let layout = cim.layout();
    out.fill(0.0);
    for (i, &zi) in scenario.0.iter().enumerate() {
        let row = cim.row(i, zi);
        let own = layout.range(i);
        for (k, (o, &s)) in out.iter_mut().zip(row).enumerate() {
            if !own.contains(&k) {
                *o += s;
            }
        }
    }
}

/// θ under the effective matrix: active threshold-rule deltas are added to
/// the cells they strengthen.
fn effective_balance(spec: &StudySpec, cim: &CrossImpactMatrix, scenario: &Scenario) -> Vec<f64> {
    let layout = cim.layout();
    let mut out = vec![0.0; layout.total()];
    raw_balance(cim, scenario, &mut out);
    for rule in &spec.threshold_rules {
        let c = rule.cell;
        if rule.is_active(scenario) && scenario.0[c.source] == c.source_state {
            out[layout.offset(c.target) + c.target_state] += rule.delta;
        }
    }
    out
}

/// θ_{j,l}(z): for every descriptor j and state l, the sum over all other
/// descriptors i of the cell (i, z_i) → (j, l). Threshold rules are not
/// applied; see [`effective_cim`].
pub fn impact_balance(
    spec: &StudySpec,
    cim: &CrossImpactMatrix,
    scenario: &Scenario,
) -> Result<ImpactBalance> {
    check_structure(spec, cim, scenario)?;
    let layout = cim.layout().clone();
    let mut scores = vec![0.0; layout.total()];
    raw_balance(cim, scenario, &mut scores);
    Ok(ImpactBalance { layout, scores })
}

/// Consistency of a scenario under the effective matrix at that scenario:
/// every chosen state must attain its descriptor's maximum (ties allowed).
pub fn check_consistency(
    spec: &StudySpec,
    cim: &CrossImpactMatrix,
    scenario: &Scenario,
) -> Result<Consistency> {
    check_structure(spec, cim, scenario)?;
    let theta = effective_balance(spec, cim, scenario);
    let layout = cim.layout();
    let deficits: Vec<f64> = (0..layout.descriptor_count())
        .map(|j| {
            let row = &theta[layout.range(j)];
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            best - row[scenario.0[j]]
        })
        .collect();
    Ok(Consistency {
        consistent: deficits.iter().all(|&d| d == 0.0),
        deficits,
    })
}

/// The matrix with every threshold rule whose conditions hold in `scenario`
/// applied. No clipping: strengthened cells may leave the elicitation range.
pub fn effective_cim(
    spec: &StudySpec,
    cim: &CrossImpactMatrix,
    scenario: &Scenario,
) -> Result<CrossImpactMatrix> {
    check_structure(spec, cim, scenario)?;
    let mut out = cim.clone();
    for rule in spec
        .threshold_rules
        .iter()
        .filter(|r| r.is_active(scenario))
    {
        out.add_score(rule.cell, rule.delta)?;
    }
    Ok(out)
}

/// Whether `(j, l)` is compatible with every other descriptor's state in `z`.
fn allowed(spec: &StudySpec, j: usize, l: usize, z: &[usize]) -> bool {
    spec.rules.forbidden_pairs.iter().all(|&(a, b)| {
        let clash = |x: StateAssignment, y: StateAssignment| {
            x.descriptor == j && x.state == l && y.descriptor != j && z[y.descriptor] == y.state
        };
        !clash(a, b) && !clash(b, a)
    })
}

/// Index of the first forbidden pair fully present in the scenario.
pub fn first_violation(spec: &StudySpec, scenario: &Scenario) -> Option<usize> {
    spec.rules
        .forbidden_pairs
        .iter()
        .position(|(a, b)| a.holds(scenario) && b.holds(scenario))
}

/// True when no forbidden pair is present.
pub fn is_feasible(spec: &StudySpec, scenario: &Scenario) -> bool {
    first_violation(spec, scenario).is_none()
}

/// Highest-scoring admissible state. Keeps `current` when it is admissible
/// and maximal, otherwise the lowest maximal index.
fn argmax(row: &[f64], current: usize, admissible: impl Fn(usize) -> bool) -> Option<usize> {
    let best = (0..row.len())
        .filter(|&l| admissible(l))
        .map(|l| row[l])
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))?;
    if current < row.len() && admissible(current) && row[current] == best {
        return Some(current);
    }
    (0..row.len()).find(|&l| admissible(l) && row[l] == best)
}

/// One simultaneous succession update.
///
/// Every unlocked descriptor moves to its highest-scoring state among those
/// compatible with the other descriptors' input states, under
/// θ' = θ(effective matrix) + perturbation. Implications are then applied
/// once in rule order, and any forbidden pair left in the successor is
/// resolved by re-choosing one unlocked member against the successor.
///
/// `locked` is either empty or has one flag per descriptor; `perturbation`
/// is flat in layout order.
pub fn succession_step(
    spec: &StudySpec,
    cim: &CrossImpactMatrix,
    scenario: &Scenario,
    locked: &[bool],
    perturbation: Option<&[f64]>,
) -> Result<Scenario> {
    check_structure(spec, cim, scenario)?;
    let layout = cim.layout();
    let n = layout.descriptor_count();
    if !locked.is_empty() && locked.len() != n {
        return Err(Error::Structure(format!(
            "{} lock flags for {n} descriptors",
            locked.len()
        )));
    }
    let is_locked = |j: usize| locked.get(j).copied().unwrap_or(false);

    let mut theta = effective_balance(spec, cim, scenario);
    if let Some(p) = perturbation {
        if p.len() != theta.len() {
            return Err(Error::Structure(format!(
                "perturbation has {} entries, expected {}",
                p.len(),
                theta.len()
            )));
        }
        for (t, e) in theta.iter_mut().zip(p) {
            *t += e;
        }
    }

    let input = &scenario.0;
    let mut next = input.clone();
    for j in (0..n).filter(|&j| !is_locked(j)) {
        let row = &theta[layout.range(j)];
        next[j] = argmax(row, input[j], |l| allowed(spec, j, l, input)).ok_or_else(|| {
            Error::Infeasible {
                descriptor: spec.descriptors[j].id.clone(),
                detail: "every state is excluded by a forbidden pair".into(),
            }
        })?;
    }

    let mut successor = Scenario(next);
    for imp in &spec.rules.implications {
        if imp.antecedent.holds(&successor) && !is_locked(imp.consequent.descriptor) {
            successor.0[imp.consequent.descriptor] = imp.consequent.state;
        }
    }

    // Each pass makes one descriptor compatible with all others, so the
    // number of violated pairs strictly decreases.
    while let Some(k) = first_violation(spec, &successor) {
        let (a, b) = spec.rules.forbidden_pairs[k];
        let changed = |d: usize| successor.0[d] != input[d];
        let pick = [a.descriptor, b.descriptor]
            .into_iter()
            .filter(|&d| !is_locked(d))
            .max_by_key(|&d| (changed(d), d))
            .ok_or_else(|| Error::Infeasible {
                descriptor: spec.descriptors[a.descriptor].id.clone(),
                detail: format!(
                    "locked states form the forbidden pair ({}, {})",
                    spec.describe_assignment(a),
                    spec.describe_assignment(b)
                ),
            })?;
        let row = &theta[layout.range(pick)];
        let current = successor.0.clone();
        successor.0[pick] = argmax(row, input[pick], |l| allowed(spec, pick, l, &current))
            .ok_or_else(|| Error::Infeasible {
                descriptor: spec.descriptors[pick].id.clone(),
                detail: "no state is compatible with the successor scenario".into(),
            })?;
    }
    Ok(successor)
}

/// Iterates unperturbed, unlocked succession from `start` until a scenario
/// recurs or `max_steps` updates have been made.
pub fn find_attractor(
    spec: &StudySpec,
    cim: &CrossImpactMatrix,
    start: &Scenario,
    max_steps: usize,
) -> Result<AttractorSearch> {
    if max_steps == 0 {
        return Err(Error::Config("max_steps must be at least 1".into()));
    }
    let mut trajectory = vec![start.clone()];
    let mut visited: HashMap<Scenario, usize> = HashMap::from([(start.clone(), 0)]);
    for step in 1..=max_steps {
        let current = trajectory.last().expect("trajectory is never empty");
        let next = succession_step(spec, cim, current, &[], None)?;
        if let Some(&first) = visited.get(&next) {
            let scenarios = trajectory.split_off(first);
            let kind = if scenarios.len() == 1 {
                AttractorKind::FixedPoint
            } else {
                AttractorKind::Cycle
            };
            return Ok(AttractorSearch::Found(Attractor {
                kind,
                scenarios,
                steps_to_reach: first,
            }));
        }
        visited.insert(next.clone(), step);
        trajectory.push(next);
    }
    Ok(AttractorSearch::Exhausted {
        steps: max_steps,
        last: trajectory.pop().expect("trajectory is never empty"),
    })
}

/// Visits every scenario in lexicographic order (last descriptor fastest).
pub fn for_each_scenario(counts: &[usize], mut f: impl FnMut(&Scenario)) {
    if counts.contains(&0) {
        return;
    }
    let mut z = Scenario(vec![0; counts.len()]);
    loop {
        f(&z);
        let mut k = counts.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            z.0[k] += 1;
            if z.0[k] < counts[k] {
                break;
            }
            z.0[k] = 0;
        }
    }
}

/// All consistent scenarios free of forbidden pairs, in lexicographic order.
pub fn enumerate_consistent(
    spec: &StudySpec,
    cim: &CrossImpactMatrix,
    limit: u64,
) -> Result<Vec<Scenario>> {
    let layout = spec.layout();
    let size = layout.space_size();
    if size > u128::from(limit) {
        return Err(Error::Intractable { size, limit });
    }
    check_structure(spec, cim, &Scenario(vec![0; layout.descriptor_count()]))?;
    let mut found = Vec::new();
    for_each_scenario(layout.counts(), |z| {
        if is_feasible(spec, z) {
            let theta = effective_balance(spec, cim, z);
            let consistent = (0..layout.descriptor_count()).all(|j| {
                let row = &theta[layout.range(j)];
                row.iter().all(|&v| v <= row[z.0[j]])
            });
            if consistent {
                found.push(z.clone());
            }
        }
    });
    Ok(found)
}
