use cibflow::analytics::state_share_series;
use cibflow::engine::{
    check_consistency, find_attractor, succession_step, AttractorKind, AttractorSearch, Scenario,
};
use cibflow::fixtures;
use cibflow::model::{
    has_errors, parse_study_spec, serialize_study_spec, validate_study_spec, Period,
    StructuralShock, StudySpec,
};
use cibflow::simulate::{robustness_fraction, simulate_ensemble, DEFAULT_MAX_ITER};
use serde::Serialize;

/// Upper bound on runs per request; the page runs on the main thread.
pub const MAX_RUNS: usize = 20_000;

pub fn sample_study() -> String {
    serialize_study_spec(&fixtures::miniature_study())
}

pub fn load_spec(text: &str) -> Result<StudySpec, String> {
    let spec = parse_study_spec(text).map_err(|e| e.to_string())?;
    let findings = validate_study_spec(&spec);
    if has_errors(&findings) {
        let lines: Vec<String> = findings
            .iter()
            .map(|f| format!("{}: {}", f.path, f.message))
            .collect();
        return Err(lines.join("\n"));
    }
    Ok(spec)
}

#[derive(Debug, Serialize)]
pub struct Band {
    pub share: f64,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Serialize)]
pub struct ShareFan {
    pub descriptor: String,
    pub states: Vec<String>,
    pub periods: Vec<Period>,
    pub runs: usize,
    pub failed: usize,
    /// `bands[state][period]`
    pub bands: Vec<Vec<Band>>,
}

pub fn share_fan(
    text: &str,
    descriptor: &str,
    runs: usize,
    seed: u64,
    level: f64,
) -> Result<ShareFan, String> {
    if runs == 0 || runs > MAX_RUNS {
        return Err(format!("runs must be between 1 and {MAX_RUNS}"));
    }
    let spec = load_spec(text)?;
    let d = spec
        .descriptor_index(descriptor)
        .ok_or_else(|| format!("unknown descriptor {descriptor}"))?;
    let e = simulate_ensemble(&spec, runs, seed, DEFAULT_MAX_ITER, 1).map_err(|e| e.to_string())?;
    let series = state_share_series(&e, descriptor, level).map_err(|e| e.to_string())?;
    let states: Vec<String> = spec.descriptors[d]
        .states
        .iter()
        .map(|s| s.label.clone())
        .collect();
    let bands = (0..states.len())
        .map(|k| {
            e.periods
                .iter()
                .map(|&t| {
                    let p = series
                        .point(t, k)
                        .expect("every period and state has a point");
                    Band {
                        share: p.share,
                        low: p.low,
                        high: p.high,
                    }
                })
                .collect()
        })
        .collect();
    Ok(ShareFan {
        descriptor: descriptor.to_string(),
        states,
        periods: e.periods.clone(),
        runs: series.runs,
        failed: runs - series.runs,
        bands,
    })
}

#[derive(Debug, Serialize)]
pub struct RobustnessPoint {
    pub scale: f64,
    pub fraction: f64,
}

pub fn robustness_curve(
    text: &str,
    scenario: &[usize],
    scales: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<RobustnessPoint>, String> {
    if samples == 0 || samples > MAX_RUNS {
        return Err(format!("samples must be between 1 and {MAX_RUNS}"));
    }
    let spec = load_spec(text)?;
    let z = Scenario(scenario.to_vec());
    let distribution = spec.shocks.structural.distribution;
    scales
        .iter()
        .map(|&scale| {
            let shock = StructuralShock {
                enabled: true,
                scale,
                distribution,
            };
            let fraction =
                robustness_fraction(&spec, &z, &shock, samples, seed).map_err(|e| e.to_string())?;
            Ok(RobustnessPoint { scale, fraction })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct Step {
    pub states: Vec<usize>,
    pub labels: Vec<String>,
    pub consistent: bool,
}

#[derive(Debug, Serialize)]
pub struct Exploration {
    pub descriptors: Vec<String>,
    /// Scenarios visited before entering the attractor.
    pub transient: Vec<Step>,
    /// `fixed_point`, `cycle`, or `none` when `max_steps` ran out.
    pub kind: String,
    pub attractor: Vec<Step>,
}

fn step(spec: &StudySpec, z: &Scenario) -> Result<Step, String> {
    let c = check_consistency(spec, &spec.cim, z).map_err(|e| e.to_string())?;
    Ok(Step {
        states: z.0.clone(),
        labels: z
            .0
            .iter()
            .zip(&spec.descriptors)
            .map(|(&s, d)| d.states[s].label.clone())
            .collect(),
        consistent: c.consistent,
    })
}

pub fn explore_attractor(
    text: &str,
    start: &[usize],
    max_steps: usize,
) -> Result<Exploration, String> {
    let spec = load_spec(text)?;
    let mut z = Scenario(start.to_vec());
    let search = find_attractor(&spec, &spec.cim, &z, max_steps).map_err(|e| e.to_string())?;
    let descriptors = spec.descriptors.iter().map(|d| d.id.clone()).collect();
    let mut transient = Vec::new();
    match search {
        AttractorSearch::Found(a) => {
            for _ in 0..a.steps_to_reach {
                transient.push(step(&spec, &z)?);
                z = succession_step(&spec, &spec.cim, &z, &[], None).map_err(|e| e.to_string())?;
            }
            let kind = match a.kind {
                AttractorKind::FixedPoint => "fixed_point",
                AttractorKind::Cycle => "cycle",
            };
            Ok(Exploration {
                descriptors,
                transient,
                kind: kind.into(),
                attractor: a
                    .scenarios
                    .iter()
                    .map(|s| step(&spec, s))
                    .collect::<Result<_, _>>()?,
            })
        }
        AttractorSearch::Exhausted { .. } => Ok(Exploration {
            descriptors,
            transient,
            kind: "none".into(),
            attractor: Vec::new(),
        }),
    }
}
