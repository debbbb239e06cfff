//! Multi-period Monte Carlo pathway ensembles.
//!
//! Each run starts from the baseline and evolves period by period: cyclic
//! descriptors take their transition draw and are locked, the period matrix
//! is sampled and shocked, the AR(1) perturbation advances once, and
//! perturbed succession settles the remaining descriptors. Every draw comes
//! from a sub-stream keyed by (master seed, run, period, purpose), so results
//! do not depend on worker count or evaluation order.

use serde::{Deserialize, Serialize};

use crate::engine::{check_consistency, succession_step, Scenario};
use crate::model::{spec_digest, CyclicParams, Period, Resample, StructuralShock, StudySpec};
use crate::uncertainty::{
    advance_dynamic_shock, apply_structural_shock, sample_cim, DynamicShockState, Purpose,
    RandomSource, StreamId,
};
use crate::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_RUNS: usize = 10_000;

/// One scenario per period of the time grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pathway {
    pub entries: Vec<(Period, Scenario)>,
}

impl Pathway {
    pub fn scenarios(&self) -> impl Iterator<Item = &Scenario> {
        self.entries.iter().map(|(_, s)| s)
    }

    pub fn terminal(&self) -> Option<&Scenario> {
        self.entries.last().map(|(_, s)| s)
    }

    /// States of one descriptor over time.
    pub fn trajectory(&self, descriptor: usize) -> Vec<usize> {
        self.entries.iter().map(|(_, s)| s.0[descriptor]).collect()
    }

    pub fn periods(&self) -> Vec<Period> {
        self.entries.iter().map(|(p, _)| *p).collect()
    }

    /// Mean per-period Hamming distance.
    pub fn distance(&self, other: &Pathway) -> f64 {
        let n = self.entries.len().max(1);
        let total: usize = self
            .scenarios()
            .zip(other.scenarios())
            .map(|(a, b)| a.hamming(b))
            .sum();
        total as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_index: usize,
    pub seed_stream: String,
    pub pathway: Pathway,
    pub converged: Vec<bool>,
    pub succession_iterations: Vec<u32>,
    /// Set when the run stopped early; the pathway then covers only the
    /// periods realised before the failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl RunRecord {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub spec_digest: String,
    pub master_seed: u64,
    pub run_count: usize,
    pub periods: Vec<Period>,
    pub descriptor_ids: Vec<String>,
    pub state_counts: Vec<usize>,
    pub runs: Vec<RunRecord>,
}

impl EnsembleResult {
    pub fn descriptor_index(&self, id: &str) -> Option<usize> {
        self.descriptor_ids.iter().position(|d| d == id)
    }

    pub fn complete_runs(&self) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(|r| r.is_complete())
    }

    pub fn failed_runs(&self) -> usize {
        self.runs.iter().filter(|r| !r.is_complete()).count()
    }
}

/// Moves a cyclic descriptor between periods: stay, one step or two steps,
/// upwards with probability (1 + drift)/2. A move past either end of the
/// ordinal scale is blocked and the state stays put.
pub fn transition_cyclic_state(
    params: &CyclicParams,
    current: usize,
    state_count: usize,
    rng: &mut RandomSource,
) -> usize {
    let u = rng.uniform();
    let distance = if u < params.stay {
        return current;
    } else if u < params.stay + params.step {
        1
    } else {
        2
    };
    let up = rng.uniform() < (1.0 + params.drift) / 2.0;
    let target = if up {
        current.checked_add(distance).filter(|&t| t < state_count)
    } else {
        current.checked_sub(distance)
    };
    target.unwrap_or(current)
}

/// Identifies a run's draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunContext {
    pub master_seed: u64,
    pub run_index: u64,
}

impl RunContext {
    fn source(&self, period: Period, purpose: Purpose) -> RandomSource {
        RandomSource::new(
            self.master_seed,
            StreamId::new(self.run_index, period, purpose),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodOutcome {
    pub scenario: Scenario,
    pub shock_state: DynamicShockState,
    pub converged: bool,
    /// Succession steps that changed the scenario.
    pub iterations: u32,
}

/// Realises one period after the first, starting from the previous
/// period's scenario.
pub fn simulate_period(
    spec: &StudySpec,
    prev: &Scenario,
    period: Period,
    shock_state: &DynamicShockState,
    ctx: RunContext,
    max_iter: usize,
) -> Result<PeriodOutcome> {
    if max_iter < 1 {
        return Err(Error::Config("max_iter must be at least 1".into()));
    }
    let first = *spec
        .time_grid
        .first()
        .ok_or_else(|| Error::Config("empty time grid".into()))?;
    if spec.period_index(period).is_none() {
        return Err(Error::range(
            "period",
            format!("{period} is not in the time grid"),
        ));
    }

    let sample_period = match spec.uncertainty.resample {
        Resample::PerRun => first,
        Resample::PerPeriod => period,
    };
    let mut cim = sample_cim(
        spec,
        &mut ctx.source(sample_period, Purpose::CimSample),
        sample_period,
    )?;
    let structural = &spec.shocks.structural;
    if structural.enabled {
        cim = apply_structural_shock(
            &cim,
            &mut ctx.source(period, Purpose::StructuralShock),
            structural,
        )?;
    }

    let mut current = prev.clone();
    let mut locked = vec![false; spec.descriptors.len()];
    for (j, d) in spec.descriptors.iter().enumerate() {
        if let Some(params) = d.cyclic.as_ref().filter(|_| d.is_cyclic()) {
            let mut rng = RandomSource::new(
                ctx.master_seed,
                StreamId::new(ctx.run_index, period, Purpose::Cyclic).entity(j as u64),
            );
            current.0[j] = transition_cyclic_state(params, prev.0[j], d.state_count(), &mut rng);
            locked[j] = true;
        }
    }

    let shock_state = if spec.shocks.dynamic.enabled {
        advance_dynamic_shock(shock_state, &mut ctx.source(period, Purpose::DynamicShock))?
    } else {
        shock_state.clone()
    };
    let perturbation = spec
        .shocks
        .dynamic
        .enabled
        .then_some(shock_state.eta.as_slice());

    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..max_iter {
        let next = succession_step(spec, &cim, &current, &locked, perturbation)?;
        if next == current {
            converged = true;
            break;
        }
        current = next;
        iterations += 1;
    }
    Ok(PeriodOutcome {
        scenario: current,
        shock_state,
        converged,
        iterations,
    })
}

fn simulate_run(spec: &StudySpec, ctx: RunContext, max_iter: usize) -> RunRecord {
    let first = spec.time_grid[0];
    let mut record = RunRecord {
        run_index: ctx.run_index as usize,
        seed_stream: format!("{:016x}/run{}", ctx.master_seed, ctx.run_index),
        pathway: Pathway {
            entries: vec![(first, spec.baseline.clone())],
        },
        converged: vec![true],
        succession_iterations: vec![0],
        failure: None,
    };
    let mut shock = DynamicShockState::zeroed(spec.layout().total(), spec.shocks.dynamic);
    let mut prev = spec.baseline.clone();
    for &period in &spec.time_grid[1..] {
        match simulate_period(spec, &prev, period, &shock, ctx, max_iter) {
            Ok(out) => {
                record.pathway.entries.push((period, out.scenario.clone()));
                record.converged.push(out.converged);
                record.succession_iterations.push(out.iterations);
                prev = out.scenario;
                shock = out.shock_state;
            }
            Err(e) => {
                record.failure = Some(format!("period {period}: {e}"));
                break;
            }
        }
    }
    record
}

fn preflight(spec: &StudySpec, run_count: usize, max_iter: usize) -> Result<()> {
    if run_count < 1 {
        return Err(Error::Config("run_count must be at least 1".into()));
    }
    if max_iter < 1 {
        return Err(Error::Config("max_iter must be at least 1".into()));
    }
    if spec.time_grid.is_empty() {
        return Err(Error::Config("empty time grid".into()));
    }
    // Configuration errors would otherwise surface once per run.
    crate::uncertainty::UnitSampler::new(spec.uncertainty.sampling_distribution)?;
    if spec.shocks.structural.enabled {
        crate::uncertainty::UnitSampler::new(spec.shocks.structural.distribution)?;
    }
    if spec.shocks.dynamic.enabled {
        crate::uncertainty::UnitSampler::new(spec.shocks.dynamic.distribution)?;
        if spec.shocks.dynamic.persistence.abs() >= 1.0 {
            return Err(Error::Config(
                "AR(1) persistence must satisfy |rho| < 1".into(),
            ));
        }
    }
    Ok(())
}

/// Runs `run_count` independent pathways. Output is identical for every
/// `worker_count`; per-run infeasibility is recorded on the run.
pub fn simulate_ensemble(
    spec: &StudySpec,
    run_count: usize,
    master_seed: u64,
    max_iter: usize,
    worker_count: usize,
) -> Result<EnsembleResult> {
    preflight(spec, run_count, max_iter)?;
    let run = |r: usize| {
        simulate_run(
            spec,
            RunContext {
                master_seed,
                run_index: r as u64,
            },
            max_iter,
        )
    };
    let runs = run_all(run_count, worker_count, run)?;
    Ok(EnsembleResult {
        spec_digest: spec_digest(spec),
        master_seed,
        run_count,
        periods: spec.time_grid.clone(),
        descriptor_ids: spec.descriptor_ids(),
        state_counts: spec.state_counts(),
        runs,
    })
}

#[cfg(feature = "parallel")]
fn run_all(
    run_count: usize,
    worker_count: usize,
    run: impl Fn(usize) -> RunRecord + Sync + Send,
) -> Result<Vec<RunRecord>> {
    use rayon::prelude::*;
    if worker_count <= 1 {
        return Ok((0..run_count).map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {worker_count} workers: {e}")))?;
    Ok(pool.install(|| (0..run_count).into_par_iter().map(run).collect()))
}

#[cfg(not(feature = "parallel"))]
fn run_all(
    run_count: usize,
    _worker_count: usize,
    run: impl Fn(usize) -> RunRecord,
) -> Result<Vec<RunRecord>> {
    Ok((0..run_count).map(run).collect())
}

/// Fraction of structurally shocked copies of the point-estimate matrix
/// under which `scenario` stays consistent. A disabled shock counts as
/// scale 0.
pub fn robustness_fraction(
    spec: &StudySpec,
    scenario: &Scenario,
    shock: &StructuralShock,
    sample_count: usize,
    master_seed: u64,
) -> Result<f64> {
    if sample_count < 1 {
        return Err(Error::Config("sample_count must be at least 1".into()));
    }
    let effective = StructuralShock {
        scale: if shock.enabled { shock.scale } else { 0.0 },
        ..*shock
    };
    let mut hits = 0usize;
    for k in 0..sample_count {
        let mut rng =
            RandomSource::new(master_seed, StreamId::new(k as u64, 0, Purpose::Robustness));
        let cim = apply_structural_shock(&spec.cim, &mut rng, &effective)?;
        if check_consistency(spec, &cim, scenario)?.consistent {
            hits += 1;
        }
    }
    Ok(hits as f64 / sample_count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{CyclicParams, DescriptorKind, Distribution};

    fn z(v: &[usize]) -> Scenario {
        Scenario(v.to_vec())
    }

    fn src(seed: u64) -> RandomSource {
        RandomSource::new(seed, StreamId::new(0, 0, Purpose::Cyclic))
    }

    fn ctx() -> RunContext {
        RunContext {
            master_seed: 11,
            run_index: 0,
        }
    }

    #[test]
    fn stay_one_never_moves() {
        let p = CyclicParams {
            stay: 1.0,
            step: 0.0,
            step2: 0.0,
            drift: 0.0,
        };
        let mut rng = src(1);
        for cur in 0..3 {
            for _ in 0..200 {
                assert_eq!(transition_cyclic_state(&p, cur, 3, &mut rng), cur);
            }
        }
    }

    #[test]
    fn full_drift_always_moves_up() {
        let p = CyclicParams {
            stay: 0.0,
            step: 1.0,
            step2: 0.0,
            drift: 1.0,
        };
        let mut rng = src(2);
        for _ in 0..500 {
            assert_eq!(transition_cyclic_state(&p, 0, 3, &mut rng), 1);
        }
    }

    #[test]
    fn blocked_moves_stay_put() {
        let p = CyclicParams {
            stay: 0.0,
            step: 0.0,
            step2: 1.0,
            drift: 0.0,
        };
        let mut rng = src(3);
        for _ in 0..200 {
            // Two steps from the middle of three states always leaves the scale.
            assert_eq!(transition_cyclic_state(&p, 1, 3, &mut rng), 1);
        }
    }

    #[test]
    fn deterministic_period_keeps_consistent_prev() {
        let spec = fixtures::two_by_two();
        let shock = DynamicShockState::zeroed(4, spec.shocks.dynamic);
        let out = simulate_period(&spec, &z(&[0, 0]), 2030, &shock, ctx(), 100).unwrap();
        assert_eq!(out.scenario, z(&[0, 0]));
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn cycling_period_is_flagged() {
        let spec = fixtures::two_by_two();
        let shock = DynamicShockState::zeroed(4, spec.shocks.dynamic);
        let out = simulate_period(&spec, &z(&[0, 1]), 2030, &shock, ctx(), 100).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 100);
        // An even number of steps around the 2-cycle returns to the start.
        assert_eq!(out.scenario, z(&[0, 1]));
        let odd = simulate_period(&spec, &z(&[0, 1]), 2030, &shock, ctx(), 3).unwrap();
        assert_eq!(odd.scenario, z(&[1, 0]));
    }

    #[test]
    fn max_iter_zero_is_a_configuration_error() {
        let spec = fixtures::two_by_two();
        let shock = DynamicShockState::zeroed(4, spec.shocks.dynamic);
        assert!(matches!(
            simulate_period(&spec, &z(&[0, 0]), 2030, &shock, ctx(), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn locked_cyclic_descriptor_ignores_balance() {
        let mut spec = fixtures::two_by_two();
        spec.descriptors[1].kind = DescriptorKind::Cyclic;
        spec.descriptors[1].cyclic = Some(CyclicParams {
            stay: 1.0,
            step: 0.0,
            step2: 0.0,
            drift: 0.0,
        });
        let shock = DynamicShockState::zeroed(4, spec.shocks.dynamic);
        // B2 is inconsistent with A1 but B is locked at B2; A follows B.
        let out = simulate_period(&spec, &z(&[0, 1]), 2030, &shock, ctx(), 100).unwrap();
        assert_eq!(out.scenario.0[1], 1);
        assert_eq!(out.scenario, z(&[1, 1]));
    }

    #[test]
    fn constant_pathways_from_fixed_point() {
        let spec = fixtures::two_by_two();
        let e = simulate_ensemble(&spec, 3, 5, 100, 1).unwrap();
        assert_eq!(e.runs.len(), 3);
        for r in &e.runs {
            assert!(r.pathway.scenarios().all(|s| *s == z(&[0, 0])));
            assert_eq!(r.pathway.periods(), spec.time_grid);
        }
    }

    #[test]
    fn ensemble_rejects_zero_runs() {
        let spec = fixtures::two_by_two();
        assert!(matches!(
            simulate_ensemble(&spec, 0, 1, 100, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn robustness_extremes_at_zero_scale() {
        let spec = fixtures::two_by_two();
        let shock = StructuralShock {
            enabled: true,
            scale: 0.0,
            distribution: Distribution::Gaussian,
        };
        assert_eq!(
            robustness_fraction(&spec, &z(&[0, 0]), &shock, 50, 1).unwrap(),
            1.0
        );
        assert_eq!(
            robustness_fraction(&spec, &z(&[0, 1]), &shock, 50, 1).unwrap(),
            0.0
        );
    }

    #[test]
    fn pathway_distance() {
        let a = Pathway {
            entries: vec![(1, z(&[0, 0])), (2, z(&[0, 1]))],
        };
        let b = Pathway {
            entries: vec![(1, z(&[1, 0])), (2, z(&[1, 0]))],
        };
        assert_eq!(a.distance(&b), 1.5);
        assert_eq!(a.distance(&a), 0.0);
    }
}
