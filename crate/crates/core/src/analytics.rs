//! Ensemble statistics: state shares with Wilson bands, pathway screening
//! and selection of a small, diverse candidate set.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::engine::Scenario;
use crate::model::{Period, StudySpec};
use crate::simulate::{EnsembleResult, Pathway};
use crate::{Error, Result};

pub const DEFAULT_LEVEL: f64 = 0.95;

/// Two-sided normal quantile for a confidence level in (0, 1).
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - (1.0 - level) / 2.0))
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, level: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::EmptyInput(
            "Wilson interval needs at least one trial".into(),
        ));
    }
    if successes > trials {
        return Err(Error::range(
            "successes",
            format!("{successes} successes exceed {trials} trials"),
        ));
    }
    let z = normal_quantile(level)?;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = if successes == 0 {
        0.0
    } else {
        (center - half).clamp(0.0, p)
    };
    let high = if successes == trials {
        1.0
    } else {
        (center + half).clamp(p, 1.0)
    };
    Ok((low, high))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharePoint {
    pub period: Period,
    pub state: usize,
    pub count: usize,
    pub share: f64,
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateShareSeries {
    pub descriptor: String,
    pub level: f64,
    /// Completed runs the shares are taken over.
    pub runs: usize,
    pub state_count: usize,
    /// Period-major, then state.
    pub points: Vec<SharePoint>,
}

impl StateShareSeries {
    pub fn point(&self, period: Period, state: usize) -> Option<&SharePoint> {
        self.points
            .iter()
            .find(|p| p.period == period && p.state == state)
    }

    pub fn shares_at(&self, period: Period) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| p.period == period)
            .map(|p| p.share)
            .collect()
    }
}

pub fn state_share_series(
    ensemble: &EnsembleResult,
    descriptor: &str,
    level: f64,
) -> Result<StateShareSeries> {
    let j = ensemble.descriptor_index(descriptor).ok_or_else(|| {
        Error::reference("descriptor", format!("unknown descriptor `{descriptor}`"))
    })?;
    normal_quantile(level)?;
    let state_count = ensemble.state_counts[j];
    let mut counts = vec![vec![0usize; state_count]; ensemble.periods.len()];
    let mut runs = 0;
    for r in ensemble.complete_runs() {
        runs += 1;
        for (t, s) in r.pathway.scenarios().enumerate() {
            counts[t][s.0[j]] += 1;
        }
    }
    if runs == 0 {
        return Err(Error::EmptyInput("ensemble has no completed runs".into()));
    }
    let mut points = Vec::with_capacity(counts.len() * state_count);
    for (t, row) in counts.iter().enumerate() {
        for (state, &count) in row.iter().enumerate() {
            let (low, high) = wilson_interval(count as u64, runs as u64, level)?;
            points.push(SharePoint {
                period: ensemble.periods[t],
                state,
                count,
                share: count as f64 / runs as f64,
                low,
                high,
            });
        }
    }
    Ok(StateShareSeries {
        descriptor: descriptor.to_string(),
        level,
        runs,
        state_count,
        points,
    })
}

pub fn all_share_series(ensemble: &EnsembleResult, level: f64) -> Result<Vec<StateShareSeries>> {
    ensemble
        .descriptor_ids
        .iter()
        .map(|id| state_share_series(ensemble, id, level))
        .collect()
}

fn state_label(spec: Option<&StudySpec>, descriptor: &str, state: usize) -> String {
    spec.and_then(|s| s.descriptor_index(descriptor).map(|j| &s.descriptors[j]))
        .and_then(|d| d.states.get(state))
        .map(|s| s.label.clone())
        .unwrap_or_default()
}

/// One row per descriptor, period and state.
pub fn write_share_csv(
    series: &[StateShareSeries],
    spec: Option<&StudySpec>,
    out: impl Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "descriptor",
        "period",
        "state",
        "label",
        "count",
        "runs",
        "share",
        "low",
        "high",
    ])?;
    for s in series {
        for p in &s.points {
            w.write_record([
                s.descriptor.clone(),
                p.period.to_string(),
                p.state.to_string(),
                state_label(spec, &s.descriptor, p.state),
                p.count.to_string(),
                s.runs.to_string(),
                p.share.to_string(),
                p.low.to_string(),
                p.high.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenRule {
    Backsliding,
    Endpoint,
    LateRush,
    Discontinuity,
}

impl fmt::Display for ScreenRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScreenRule::Backsliding => "backsliding",
            ScreenRule::Endpoint => "endpoint",
            ScreenRule::LateRush => "late_rush",
            ScreenRule::Discontinuity => "discontinuity",
        })
    }
}

/// A terminal combination that must not occur: all listed
/// (descriptor id, state) pairs holding at once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointRule {
    pub forbid: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    pub outcome: String,
    pub higher_is_better: bool,
    /// Check backsliding on every descriptor, not just the outcome.
    pub backsliding_all: bool,
    pub late_rush_steps: usize,
    pub discontinuity_steps: usize,
    pub endpoint_rules: Vec<EndpointRule>,
    /// Descriptors whose two-step moves are explained by a step2 transition.
    pub cyclic: Vec<String>,
}

impl ScreeningConfig {
    pub fn new(outcome: impl Into<String>) -> Self {
        ScreeningConfig {
            outcome: outcome.into(),
            higher_is_better: true,
            backsliding_all: false,
            late_rush_steps: 2,
            discontinuity_steps: 2,
            endpoint_rules: Vec::new(),
            cyclic: Vec::new(),
        }
    }

    /// Defaults with the spec's cyclic descriptors filled in.
    pub fn for_spec(spec: &StudySpec, outcome: impl Into<String>) -> Self {
        let mut cfg = Self::new(outcome);
        cfg.cyclic = spec
            .descriptors
            .iter()
            .filter(|d| d.is_cyclic())
            .map(|d| d.id.clone())
            .collect();
        cfg
    }
}

struct Resolved {
    outcome: usize,
    sign: i64,
    backsliding_all: bool,
    late_rush: i64,
    discontinuity: i64,
    cyclic: Vec<bool>,
    endpoints: Vec<Vec<(usize, usize)>>,
}

fn resolve(ids: &[String], cfg: &ScreeningConfig) -> Result<Resolved> {
    let find = |id: &str, path: String| {
        ids.iter()
            .position(|d| d == id)
            .ok_or_else(|| Error::reference(path, format!("unknown descriptor `{id}`")))
    };
    if cfg.late_rush_steps < 1 || cfg.discontinuity_steps < 1 {
        return Err(Error::Config(
            "screening step thresholds must be at least 1".into(),
        ));
    }
    let mut cyclic = vec![false; ids.len()];
    for (k, id) in cfg.cyclic.iter().enumerate() {
        cyclic[find(id, format!("screening.cyclic[{k}]"))?] = true;
    }
    let endpoints = cfg
        .endpoint_rules
        .iter()
        .enumerate()
        .map(|(r, rule)| {
            rule.forbid
                .iter()
                .enumerate()
                .map(|(k, (id, s))| {
                    Ok((find(id, format!("screening.endpoint_rules[{r}][{k}]"))?, *s))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Resolved {
        outcome: find(&cfg.outcome, "screening.outcome".into())?,
        sign: if cfg.higher_is_better { 1 } else { -1 },
        backsliding_all: cfg.backsliding_all,
        late_rush: cfg.late_rush_steps as i64,
        discontinuity: cfg.discontinuity_steps as i64,
        cyclic,
        endpoints,
    })
}

/// True when the trajectory falls below a level it had improved to.
fn backslides(v: &[i64]) -> bool {
    let mut peak: Option<i64> = None;
    for t in 1..v.len() {
        if peak.is_some_and(|p| v[t] < p) {
            return true;
        }
        if v[t] > v[t - 1] {
            peak = Some(peak.map_or(v[t], |p| p.max(v[t])));
        }
    }
    false
}

fn screen_resolved(pathway: &Pathway, r: &Resolved) -> Vec<ScreenRule> {
    let n = r.cyclic.len();
    let traj = |j: usize, sign: i64| -> Vec<i64> {
        pathway
            .trajectory(j)
            .into_iter()
            .map(|s| sign * s as i64)
            .collect()
    };
    let outcome = traj(r.outcome, r.sign);
    let mut reasons = Vec::new();

    let backslide = if r.backsliding_all {
        (0..n).any(|j| {
            let sign = if j == r.outcome { r.sign } else { 1 };
            backslides(&traj(j, sign))
        })
    } else {
        backslides(&outcome)
    };
    if backslide {
        reasons.push(ScreenRule::Backsliding);
    }

    if let Some(end) = pathway.terminal() {
        if r.endpoints
            .iter()
            .any(|rule| !rule.is_empty() && rule.iter().all(|&(j, s)| end.0.get(j) == Some(&s)))
        {
            reasons.push(ScreenRule::Endpoint);
        }
    }

    if let [.., a, b] = outcome.as_slice() {
        if b - a >= r.late_rush {
            reasons.push(ScreenRule::LateRush);
        }
    }

    let jumps = (0..n).any(|j| {
        traj(j, 1).windows(2).any(|w| {
            let d = (w[1] - w[0]).abs();
            d >= r.discontinuity && !(r.cyclic[j] && d <= 2)
        })
    });
    if jumps {
        reasons.push(ScreenRule::Discontinuity);
    }
    reasons
}

/// Failing screening rules for one pathway, in rule order.
pub fn screen_pathway(
    pathway: &Pathway,
    descriptor_ids: &[String],
    cfg: &ScreeningConfig,
) -> Result<Vec<ScreenRule>> {
    Ok(screen_resolved(pathway, &resolve(descriptor_ids, cfg)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum Rationale {
    Screened,
    FrequencyRank { rank: usize },
    DiversityGroup { group: usize },
    BestOutcome,
}

impl fmt::Display for Rationale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rationale::Screened => f.write_str("screened"),
            Rationale::FrequencyRank { rank } => write!(f, "frequency_rank={rank}"),
            Rationale::DiversityGroup { group } => write!(f, "diversity_group={group}"),
            Rationale::BestOutcome => f.write_str("best_outcome"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub pathway: Pathway,
    /// Runs that realised exactly this pathway.
    pub runs: usize,
    /// Share of completed runs ending in this pathway's terminal scenario.
    pub terminal_frequency: f64,
    pub rationale: Vec<Rationale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejected {
    pub id: String,
    pub pathway: Pathway,
    pub runs: usize,
    pub reasons: Vec<ScreenRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub descriptor_ids: Vec<String>,
    pub outcome: String,
    pub complete_runs: usize,
    pub candidates: Vec<Candidate>,
    pub rejected: Vec<Rejected>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl CandidateSet {
    pub fn candidate(&self, id: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.id == id)
    }
}

/// Screens every distinct completed pathway. Pathways are listed by run
/// count (descending), then lexicographically, and numbered `P1, P2, ...`
/// in that order across survivors and rejections.
pub fn screen_candidates(ensemble: &EnsembleResult, cfg: &ScreeningConfig) -> Result<CandidateSet> {
    let resolved = resolve(&ensemble.descriptor_ids, cfg)?;
    let mut distinct: BTreeMap<&Pathway, usize> = BTreeMap::new();
    let mut terminals: BTreeMap<&Scenario, usize> = BTreeMap::new();
    let mut complete = 0;
    for r in ensemble.complete_runs() {
        complete += 1;
        *distinct.entry(&r.pathway).or_default() += 1;
        if let Some(end) = r.pathway.terminal() {
            *terminals.entry(end).or_default() += 1;
        }
    }
    let mut ordered: Vec<(&Pathway, usize)> = distinct.into_iter().collect();
    ordered.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut set = CandidateSet {
        descriptor_ids: ensemble.descriptor_ids.clone(),
        outcome: cfg.outcome.clone(),
        complete_runs: complete,
        candidates: Vec::new(),
        rejected: Vec::new(),
        warnings: Vec::new(),
    };
    if ensemble.failed_runs() > 0 {
        set.warnings.push(format!(
            "{} failed runs excluded from screening",
            ensemble.failed_runs()
        ));
    }
    for (k, (pathway, runs)) in ordered.into_iter().enumerate() {
        let id = format!("P{}", k + 1);
        let reasons = screen_resolved(pathway, &resolved);
        if reasons.is_empty() {
            let end_count = pathway.terminal().map_or(0, |e| terminals[e]);
            set.candidates.push(Candidate {
                id,
                pathway: pathway.clone(),
                runs,
                terminal_frequency: end_count as f64 / complete as f64,
                rationale: vec![Rationale::Screened],
            });
        } else {
            set.rejected.push(Rejected {
                id,
                pathway: pathway.clone(),
                runs,
                reasons,
            });
        }
    }
    Ok(set)
}

struct Group<'a> {
    members: Vec<&'a Candidate>,
    weight: usize,
}

fn medoid<'a>(members: &[&'a Candidate]) -> &'a Candidate {
    let total: usize = members.iter().map(|m| m.runs).sum();
    let cost = |c: &Candidate| -> f64 {
        members
            .iter()
            .map(|o| o.runs as f64 * c.pathway.distance(&o.pathway))
            .sum::<f64>()
            / total as f64
    };
    // Members arrive in screening order, so the first minimum wins ties.
    let mut best = members[0];
    let mut best_cost = cost(best);
    for &m in &members[1..] {
        let c = cost(m);
        if c < best_cost {
            best = m;
            best_cost = c;
        }
    }
    best
}

/// Picks `k` representatives: medoids of the most frequent terminal groups,
/// with best-outcome pathways swapped in so that at least two selected
/// pathways end in `best` when the survivors allow it.
pub fn select_candidates(
    screened: &CandidateSet,
    k: usize,
    best: (&str, usize),
) -> Result<CandidateSet> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    let bj = screened
        .descriptor_ids
        .iter()
        .position(|d| d == best.0)
        .ok_or_else(|| {
            Error::reference("best_outcome", format!("unknown descriptor `{}`", best.0))
        })?;
    let survivors = &screened.candidates;
    if survivors.len() < k {
        return Err(Error::InsufficientCandidates(format!(
            "{} distinct pathways survived screening, {k} requested",
            survivors.len()
        )));
    }
    let is_best = |c: &Candidate| c.pathway.terminal().map(|s| s.0[bj]) == Some(best.1);

    let mut by_terminal: BTreeMap<&Scenario, Group> = BTreeMap::new();
    for c in survivors {
        let g = by_terminal
            .entry(c.pathway.terminal().expect("pathways are non-empty"))
            .or_insert(Group {
                members: Vec::new(),
                weight: 0,
            });
        g.members.push(c);
        g.weight += c.runs;
    }
    let mut groups: Vec<(&Scenario, Group)> = by_terminal.into_iter().collect();
    groups.sort_by(|a, b| b.1.weight.cmp(&a.1.weight).then_with(|| a.0.cmp(b.0)));
    let group_of = |c: &Candidate| {
        groups
            .iter()
            .position(|(t, _)| Some(*t) == c.pathway.terminal())
            .expect("every survivor has a group")
    };

    let mut warnings = screened.warnings.clone();
    let mut chosen: Vec<&Candidate> = groups
        .iter()
        .take(k)
        .map(|(_, g)| medoid(&g.members))
        .collect();
    if chosen.len() < k {
        warnings.push(format!(
            "only {} distinct terminal scenarios; filled with further pathways from the same groups",
            groups.len()
        ));
        for c in survivors {
            if chosen.len() == k {
                break;
            }
            if !chosen.iter().any(|s| s.id == c.id) {
                chosen.push(c);
            }
        }
    }

    let available = survivors.iter().filter(|c| is_best(c)).count();
    if available < 2 {
        warnings.push(format!(
            "only {available} surviving pathways end in {}={}; best-outcome quota relaxed",
            best.0, best.1
        ));
    }
    let need = available.min(2);
    let mut pool: Vec<&Candidate> = groups
        .iter()
        .filter(|(t, _)| t.0[bj] == best.1)
        .map(|(_, g)| medoid(&g.members))
        .collect();
    pool.extend(survivors.iter().filter(|c| is_best(c)));
    while chosen.iter().filter(|c| is_best(c)).count() < need {
        let add = *pool
            .iter()
            .find(|c| !chosen.iter().any(|s| s.id == c.id))
            .expect("enough best-outcome survivors");
        let drop = chosen
            .iter()
            .rposition(|c| !is_best(c))
            .expect("a non-best candidate to replace");
        chosen[drop] = add;
    }

    let mut tagged: Vec<(usize, Candidate)> = chosen
        .into_iter()
        .map(|c| {
            let g = group_of(c);
            let mut rationale = vec![
                Rationale::FrequencyRank { rank: g + 1 },
                Rationale::DiversityGroup { group: g + 1 },
            ];
            if is_best(c) {
                rationale.push(Rationale::BestOutcome);
            }
            (
                g,
                Candidate {
                    rationale,
                    ..c.clone()
                },
            )
        })
        .collect();
    tagged.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.runs.cmp(&a.1.runs)));
    let candidates = tagged
        .into_iter()
        .enumerate()
        .map(|(i, (_, c))| Candidate {
            id: format!("C{}", i + 1),
            ..c
        })
        .collect();
    Ok(CandidateSet {
        candidates,
        warnings,
        ..screened.clone()
    })
}

fn describe_terminal(spec: Option<&StudySpec>, pathway: &Pathway) -> String {
    match (spec, pathway.terminal()) {
        (Some(spec), Some(end)) => spec.describe(end),
        (None, Some(end)) => end
            .0
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(" "),
        (_, None) => String::new(),
    }
}

/// One row per candidate and per rejected pathway.
pub fn write_candidate_csv(
    set: &CandidateSet,
    spec: Option<&StudySpec>,
    out: impl Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "id",
        "status",
        "runs",
        "terminal_frequency",
        "tags",
        "terminal",
    ])?;
    let join = |items: Vec<String>| items.join(";");
    for c in &set.candidates {
        w.write_record([
            c.id.clone(),
            "candidate".into(),
            c.runs.to_string(),
            c.terminal_frequency.to_string(),
            join(c.rationale.iter().map(ToString::to_string).collect()),
            describe_terminal(spec, &c.pathway),
        ])?;
    }
    for r in &set.rejected {
        w.write_record([
            r.id.clone(),
            "rejected".into(),
            r.runs.to_string(),
            String::new(),
            join(r.reasons.iter().map(ToString::to_string).collect()),
            describe_terminal(spec, &r.pathway),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::RunRecord;

    fn pathway(traj: &[&[usize]]) -> Pathway {
        Pathway {
            entries: traj
                .iter()
                .enumerate()
                .map(|(t, s)| (2025 + 5 * t as i32, Scenario(s.to_vec())))
                .collect(),
        }
    }

    fn ensemble(pathways: &[(Pathway, usize)]) -> EnsembleResult {
        let mut runs = Vec::new();
        for (p, n) in pathways {
            for _ in 0..*n {
                runs.push(RunRecord {
                    run_index: runs.len(),
                    seed_stream: String::new(),
                    pathway: p.clone(),
                    converged: vec![true; p.entries.len()],
                    succession_iterations: vec![0; p.entries.len()],
                    failure: None,
                });
            }
        }
        EnsembleResult {
            spec_digest: String::new(),
            master_seed: 0,
            run_count: runs.len(),
            periods: pathways[0].0.periods(),
            descriptor_ids: vec!["X".into(), "O".into()],
            state_counts: vec![3, 3],
            runs,
        }
    }

    fn outcome_only(seq: &[usize]) -> Pathway {
        let rows: Vec<Vec<usize>> = seq.iter().map(|&o| vec![1, o]).collect();
        let refs: Vec<&[usize]> = rows.iter().map(Vec::as_slice).collect();
        pathway(&refs)
    }

    fn ids() -> Vec<String> {
        vec!["X".into(), "O".into()]
    }

    #[test]
    fn wilson_half_share() {
        let (lo, hi) = wilson_interval(5000, 10_000, 0.95).unwrap();
        assert!((lo - 0.4902).abs() < 1e-4 && (hi - 0.5098).abs() < 1e-4);
    }

    #[test]
    fn wilson_boundaries() {
        assert_eq!(wilson_interval(0, 50, 0.95).unwrap().0, 0.0);
        assert_eq!(wilson_interval(50, 50, 0.95).unwrap().1, 1.0);
        assert!(matches!(
            wilson_interval(0, 0, 0.95),
            Err(Error::EmptyInput(_))
        ));
        assert!(wilson_interval(1, 10, 1.0).is_err());
    }

    #[test]
    fn deterministic_shares_are_indicators() {
        let e = ensemble(&[(outcome_only(&[0, 1, 2]), 7)]);
        let s = state_share_series(&e, "O", 0.95).unwrap();
        assert_eq!(s.shares_at(2025), vec![1.0, 0.0, 0.0]);
        assert_eq!(s.shares_at(2035), vec![0.0, 0.0, 1.0]);
        assert!(state_share_series(&e, "nope", 0.95).is_err());
    }

    #[test]
    fn backsliding_after_improvement() {
        let cfg = ScreeningConfig::new("O");
        assert_eq!(
            screen_pathway(&outcome_only(&[1, 2, 1]), &ids(), &cfg).unwrap(),
            vec![ScreenRule::Backsliding]
        );
        // Falling from the start point is not backsliding.
        assert!(screen_pathway(&outcome_only(&[1, 0, 0]), &ids(), &cfg)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn lower_is_better_flips_direction() {
        let mut cfg = ScreeningConfig::new("O");
        cfg.higher_is_better = false;
        assert_eq!(
            screen_pathway(&outcome_only(&[1, 0, 1]), &ids(), &cfg).unwrap(),
            vec![ScreenRule::Backsliding]
        );
    }

    #[test]
    fn late_rush_and_jump() {
        let cfg = ScreeningConfig::new("O");
        assert_eq!(
            screen_pathway(&outcome_only(&[0, 0, 0, 0, 0, 2]), &ids(), &cfg).unwrap(),
            vec![ScreenRule::LateRush, ScreenRule::Discontinuity]
        );
        let jump = pathway(&[&[0, 1], &[2, 1], &[2, 1]]);
        assert_eq!(
            screen_pathway(&jump, &ids(), &cfg).unwrap(),
            vec![ScreenRule::Discontinuity]
        );
        let mut cyc = cfg.clone();
        cyc.cyclic = vec!["X".into()];
        assert!(screen_pathway(&jump, &ids(), &cyc).unwrap().is_empty());
    }

    #[test]
    fn endpoint_rule() {
        let mut cfg = ScreeningConfig::new("O");
        cfg.endpoint_rules = vec![EndpointRule {
            forbid: vec![("X".into(), 1), ("O".into(), 2)],
        }];
        assert_eq!(
            screen_pathway(&outcome_only(&[1, 2, 2]), &ids(), &cfg).unwrap(),
            vec![ScreenRule::Endpoint]
        );
    }

    #[test]
    fn screening_groups_distinct_pathways() {
        let good = outcome_only(&[0, 1, 2]);
        let bad = outcome_only(&[1, 2, 1]);
        let e = ensemble(&[(good.clone(), 3), (bad, 5)]);
        let set = screen_candidates(&e, &ScreeningConfig::new("O")).unwrap();
        assert_eq!(set.candidates.len(), 1);
        assert_eq!(set.candidates[0].pathway, good);
        assert_eq!(set.candidates[0].runs, 3);
        assert_eq!(set.candidates[0].id, "P2");
        assert_eq!(set.rejected[0].reasons, vec![ScreenRule::Backsliding]);
    }

    #[test]
    fn two_groups_give_one_each() {
        let a = outcome_only(&[0, 0, 0]);
        let b = outcome_only(&[0, 1, 1]);
        let e = ensemble(&[(a.clone(), 60), (b.clone(), 40)]);
        let set = screen_candidates(&e, &ScreeningConfig::new("O")).unwrap();
        let sel = select_candidates(&set, 2, ("O", 2)).unwrap();
        let got: Vec<&Pathway> = sel.candidates.iter().map(|c| &c.pathway).collect();
        assert_eq!(got, vec![&a, &b]);
        assert!(!sel.warnings.is_empty());
    }

    #[test]
    fn identical_runs_cannot_fill_k() {
        let e = ensemble(&[(outcome_only(&[1, 1, 1]), 10)]);
        let set = screen_candidates(&e, &ScreeningConfig::new("O")).unwrap();
        assert!(matches!(
            select_candidates(&set, 2, ("O", 2)),
            Err(Error::InsufficientCandidates(_))
        ));
    }

    #[test]
    fn best_outcome_quota_swaps_in_rare_groups() {
        let e = ensemble(&[
            (outcome_only(&[0, 0, 0]), 40),
            (outcome_only(&[1, 1, 1]), 30),
            (outcome_only(&[0, 1, 1]), 20),
            (pathway(&[&[0, 1], &[0, 1], &[0, 1]]), 10),
            (outcome_only(&[1, 1, 2]), 3),
            (outcome_only(&[0, 1, 2]), 2),
        ]);
        let set = screen_candidates(&e, &ScreeningConfig::new("O")).unwrap();
        let sel = select_candidates(&set, 3, ("O", 2)).unwrap();
        assert_eq!(sel.candidates.len(), 3);
        let best = sel
            .candidates
            .iter()
            .filter(|c| c.rationale.contains(&Rationale::BestOutcome))
            .count();
        assert_eq!(best, 2);
        // The largest group survives; the two smaller ones give way to the quota.
        assert_eq!(sel.candidates[0].pathway, outcome_only(&[1, 1, 1]));
    }
}
