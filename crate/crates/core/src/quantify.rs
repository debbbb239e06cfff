//! Translation of qualitative pathways into numeric model inputs.
//!
//! Each dimension is driven by one descriptor: x_d(t) = M_d(s_d(t)), or
//! M_d(s_d(t), t) for time-dependent tables. No interpolation is applied.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::Scenario;
use crate::model::{Period, StateRefDoc, StudySpec};
use crate::simulate::{EnsembleResult, Pathway};
use crate::{Error, Result};

pub const IDENTITY_TOLERANCE: f64 = 1e-9;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub id: String,
    pub unit: String,
    pub driver_id: String,
    pub driver: usize,
    /// Labels of the driver's states, for provenance.
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lookup {
    Static(Vec<Option<f64>>),
    ByPeriod(BTreeMap<Period, Vec<Option<f64>>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationMatrix {
    pub dimensions: Vec<Dimension>,
    /// Parallel to `dimensions`.
    pub tables: Vec<Lookup>,
}

impl TranslationMatrix {
    pub fn dimension_index(&self, id: &str) -> Option<usize> {
        self.dimensions.iter().position(|d| d.id == id)
    }

    /// M_d(state, period).
    pub fn lookup(&self, d: usize, state: usize, period: Period) -> Result<f64> {
        let missing = |period| Error::Coverage {
            dimension: self.dimensions[d].id.clone(),
            state,
            period,
        };
        let entry = match &self.tables[d] {
            Lookup::Static(v) => v
                .get(state)
                .copied()
                .flatten()
                .ok_or_else(|| missing(None))?,
            Lookup::ByPeriod(m) => m
                .get(&period)
                .and_then(|v| v.get(state).copied().flatten())
                .ok_or_else(|| missing(Some(period)))?,
        };
        Ok(entry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Fraction of the central value.
    Relative(f64),
    /// Absolute distance from the central value.
    Offset(f64),
    /// Fixed value.
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub low: Bound,
    pub high: Bound,
}

impl RangeSpec {
    pub fn bounds(&self, central: f64) -> (f64, f64) {
        let low = match self.low {
            Bound::Relative(r) => central * (1.0 - r),
            Bound::Offset(o) => central - o,
            Bound::Value(v) => v,
        };
        let high = match self.high {
            Bound::Relative(r) => central * (1.0 + r),
            Bound::Offset(o) => central + o,
            Bound::Value(v) => v,
        };
        (low, high)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    pub dimension: String,
    pub period: Period,
    pub value: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Note {
    Override { note: String, replaced: f64 },
    Repair { identity: String, before: f64 },
}

impl fmt::Display for Note {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Note::Override { note, replaced } => write!(f, "override ({note}), was {replaced}"),
            Note::Repair { identity, before } => write!(f, "repaired by {identity}, was {before}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub dimension: String,
    pub period: Period,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    /// Driver state and the matrix entry it selected.
    pub state: usize,
    pub label: String,
    pub entry: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<Note>,
}

impl Cell {
    pub fn provenance(&self) -> String {
        let mut parts = vec![format!("lookup {}={}", self.label, self.entry)];
        parts.extend(self.notes.iter().map(ToString::to_string));
        parts.join("; ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantifiedPathway {
    pub dimensions: Vec<String>,
    pub units: Vec<String>,
    pub periods: Vec<Period>,
    /// Dimension-major: cell (d, t) sits at `d * periods.len() + t`.
    pub cells: Vec<Cell>,
}

impl QuantifiedPathway {
    fn index(&self, dimension: &str, period: Period) -> Option<usize> {
        let d = self.dimensions.iter().position(|x| x == dimension)?;
        let t = self.periods.iter().position(|&p| p == period)?;
        Some(d * self.periods.len() + t)
    }

    pub fn cell(&self, dimension: &str, period: Period) -> Option<&Cell> {
        self.index(dimension, period).map(|i| &self.cells[i])
    }

    pub fn value(&self, dimension: &str, period: Period) -> Option<f64> {
        self.cell(dimension, period).map(|c| c.value)
    }

    pub fn series(&self, dimension: &str) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.dimension == dimension)
            .map(|c| c.value)
            .collect()
    }
}

pub fn quantify_pathway(
    pathway: &Pathway,
    matrix: &TranslationMatrix,
    overrides: &[Override],
) -> Result<QuantifiedPathway> {
    let periods = pathway.periods();
    let mut cells = Vec::with_capacity(matrix.dimensions.len() * periods.len());
    for (d, dim) in matrix.dimensions.iter().enumerate() {
        for (period, scenario) in &pathway.entries {
            let state = *scenario.0.get(dim.driver).ok_or_else(|| {
                Error::Structure(format!("pathway has no state for driver of `{}`", dim.id))
            })?;
            let entry = matrix.lookup(d, state, *period)?;
            cells.push(Cell {
                dimension: dim.id.clone(),
                period: *period,
                value: entry,
                low: None,
                high: None,
                state,
                label: dim
                    .labels
                    .get(state)
                    .cloned()
                    .unwrap_or_else(|| state.to_string()),
                entry,
                notes: Vec::new(),
            });
        }
    }
    let mut qp = QuantifiedPathway {
        dimensions: matrix.dimensions.iter().map(|d| d.id.clone()).collect(),
        units: matrix.dimensions.iter().map(|d| d.unit.clone()).collect(),
        periods,
        cells,
    };
    for (k, o) in overrides.iter().enumerate() {
        let path = format!("overrides[{k}]");
        if !o.value.is_finite() {
            return Err(Error::range(
                format!("{path}.value"),
                "override must be finite",
            ));
        }
        let i = qp.index(&o.dimension, o.period).ok_or_else(|| {
            Error::reference(
                path,
                format!(
                    "no cell for dimension `{}` at period {}",
                    o.dimension, o.period
                ),
            )
        })?;
        let cell = &mut qp.cells[i];
        cell.notes.push(Note::Override {
            note: o.note.clone(),
            replaced: cell.value,
        });
        cell.value = o.value;
    }
    Ok(qp)
}

/// Fills (low, high) for every cell of the named dimensions.
pub fn attach_uncertainty_ranges(
    qp: &QuantifiedPathway,
    ranges: &BTreeMap<String, RangeSpec>,
) -> Result<QuantifiedPathway> {
    for id in ranges.keys() {
        if !qp.dimensions.contains(id) {
            return Err(Error::reference(
                format!("ranges.{id}"),
                format!("unknown dimension `{id}`"),
            ));
        }
    }
    let mut out = qp.clone();
    for cell in &mut out.cells {
        let Some(spec) = ranges.get(&cell.dimension) else {
            continue;
        };
        let (low, high) = spec.bounds(cell.value);
        if !(low <= cell.value && cell.value <= high) {
            return Err(Error::range(
                format!("ranges.{}", cell.dimension),
                format!(
                    "range ({low}, {high}) does not bracket the central value {} at period {}",
                    cell.value, cell.period
                ),
            ));
        }
        cell.low = Some(low);
        cell.high = Some(high);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IdentityKind {
    /// Σ coefficient · x = rhs.
    Linear {
        terms: BTreeMap<String, f64>,
        rhs: f64,
    },
    /// Σ parts = total.
    Total { parts: Vec<String>, total: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identity {
    pub id: String,
    #[serde(flatten)]
    pub kind: IdentityKind,
    /// Dimensions the repair may rescale.
    pub adjustable: Vec<String>,
}

impl Identity {
    fn terms(&self) -> (Vec<(String, f64)>, f64) {
        match &self.kind {
            IdentityKind::Linear { terms, rhs } => {
                (terms.iter().map(|(k, v)| (k.clone(), *v)).collect(), *rhs)
            }
            IdentityKind::Total { parts, total } => {
                let mut t: Vec<(String, f64)> = parts.iter().map(|p| (p.clone(), 1.0)).collect();
                t.push((total.clone(), -1.0));
                (t, 0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityFile {
    pub identities: Vec<Identity>,
}

pub fn parse_identities(text: &str) -> Result<Vec<Identity>> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: IdentityFile = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::parse(e.path().to_string(), e.into_inner().to_string()))?;
    Ok(file.identities)
}

struct Resolved<'a> {
    id: &'a str,
    terms: Vec<(usize, f64, bool)>,
    rhs: f64,
}

fn resolve_identity<'a>(qp: &QuantifiedPathway, identity: &'a Identity) -> Result<Resolved<'a>> {
    if identity.adjustable.is_empty() {
        return Err(Error::Unrepairable(
            identity.id.clone(),
            "no adjustable dimension".into(),
        ));
    }
    let (terms, rhs) = identity.terms();
    for a in &identity.adjustable {
        if !terms.iter().any(|(d, c)| d == a && *c != 0.0) {
            return Err(Error::Unrepairable(
                identity.id.clone(),
                format!("adjustable dimension `{a}` does not appear in the identity"),
            ));
        }
    }
    let terms = terms
        .into_iter()
        .map(|(d, c)| {
            let i = qp.dimensions.iter().position(|x| *x == d).ok_or_else(|| {
                Error::reference(
                    format!("identities.{}", identity.id),
                    format!("unknown dimension `{d}`"),
                )
            })?;
            Ok((i, c, identity.adjustable.contains(&d)))
        })
        .collect::<Result<_>>()?;
    Ok(Resolved {
        id: &identity.id,
        terms,
        rhs,
    })
}

fn residual(qp: &QuantifiedPathway, r: &Resolved, t: usize) -> f64 {
    let n = qp.periods.len();
    let lhs: Vec<f64> = r
        .terms
        .iter()
        .map(|&(d, c, _)| c * qp.cells[d * n + t].value)
        .collect();
    crate::mcda::exact_sum(lhs) - r.rhs
}

/// Rescales the adjustable dimensions of each violated identity, per
/// period, until every identity holds within [`IDENTITY_TOLERANCE`].
pub fn enforce_identities(
    qp: &QuantifiedPathway,
    identities: &[Identity],
) -> Result<QuantifiedPathway> {
    let mut out = qp.clone();
    let resolved: Vec<Resolved> = identities
        .iter()
        .map(|i| resolve_identity(qp, i))
        .collect::<Result<_>>()?;
    let n = out.periods.len();
    for t in 0..n {
        let mut settled = false;
        for _ in 0..MAX_SWEEPS {
            settled = true;
            for r in &resolved {
                if residual(&out, r, t).abs() <= IDENTITY_TOLERANCE {
                    continue;
                }
                settled = false;
                let adjustable: Vec<f64> = r
                    .terms
                    .iter()
                    .filter(|x| x.2)
                    .map(|&(d, c, _)| c * out.cells[d * n + t].value)
                    .collect();
                let fixed: Vec<f64> = r
                    .terms
                    .iter()
                    .filter(|x| !x.2)
                    .map(|&(d, c, _)| c * out.cells[d * n + t].value)
                    .chain([-r.rhs])
                    .collect();
                let scaled = crate::mcda::exact_sum(adjustable);
                if scaled == 0.0 {
                    return Err(Error::Unrepairable(
                        r.id.to_string(),
                        format!(
                            "adjustable dimensions are all zero at period {}",
                            out.periods[t]
                        ),
                    ));
                }
                let k = -crate::mcda::exact_sum(fixed) / scaled;
                for &(d, _, adj) in &r.terms {
                    if !adj {
                        continue;
                    }
                    let cell = &mut out.cells[d * n + t];
                    cell.notes.push(Note::Repair {
                        identity: r.id.to_string(),
                        before: cell.value,
                    });
                    cell.value *= k;
                    cell.low = cell.low.map(|v| v * k);
                    cell.high = cell.high.map(|v| v * k);
                    if k < 0.0 {
                        std::mem::swap(&mut cell.low, &mut cell.high);
                    }
                }
            }
            if settled {
                break;
            }
        }
        if !settled {
            return Err(Error::Unrepairable(
                identities
                    .iter()
                    .map(|i| i.id.as_str())
                    .collect::<Vec<_>>()
                    .join(", "),
                format!("identities do not settle at period {}", out.periods[t]),
            ));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    OutcomeBased,
    DescriptorBased,
    FrequencyBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateStack {
    pub label: String,
    /// (descriptor index, state) pairs.
    pub states: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremesConfig {
    pub count: usize,
    pub outcome: Option<usize>,
    pub stack: Option<StateStack>,
    pub frequency_min_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeScenario {
    pub label: String,
    pub axis: Axis,
    pub period: Period,
    pub scenario: Scenario,
    /// Completed runs ending in `scenario`.
    pub runs: usize,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtremeSet {
    pub scenarios: Vec<ExtremeScenario>,
    pub warnings: Vec<String>,
}

fn terminal_counts(ensemble: &EnsembleResult) -> Vec<(Scenario, usize)> {
    let mut counts: BTreeMap<&Scenario, usize> = BTreeMap::new();
    for r in ensemble.complete_runs() {
        if let Some(end) = r.pathway.terminal() {
            *counts.entry(end).or_default() += 1;
        }
    }
    counts.into_iter().map(|(s, c)| (s.clone(), c)).collect()
}

fn picked(picks: &[(String, Axis, Scenario, usize)], s: &Scenario) -> bool {
    picks.iter().any(|p| p.2 == *s)
}

fn modal(candidates: impl Iterator<Item = (Scenario, usize)>) -> Option<(Scenario, usize)> {
    // Ties go to the lexicographically first scenario.
    candidates.fold(None, |best, (s, c)| match best {
        Some((_, bc)) if bc >= c => best,
        _ => Some((s, c)),
    })
}

/// Terminal-period bounding cases along the outcome, descriptor-stack and
/// frequency axes, in that order, capped at `cfg.count`. Later axes prefer
/// scenarios not already picked by earlier ones.
pub fn build_extreme_scenarios(
    ensemble: &EnsembleResult,
    spec: &StudySpec,
    matrix: &TranslationMatrix,
    cfg: &ExtremesConfig,
) -> Result<ExtremeSet> {
    if !(2..=4).contains(&cfg.count) {
        return Err(Error::Config(format!(
            "extreme scenario count must be 2 to 4, got {}",
            cfg.count
        )));
    }
    let period = *ensemble
        .periods
        .last()
        .ok_or_else(|| Error::EmptyInput("ensemble has no periods".into()))?;
    let terminals = terminal_counts(ensemble);
    if terminals.is_empty() {
        return Err(Error::EmptyInput("ensemble has no completed runs".into()));
    }
    let mut set = ExtremeSet::default();
    let mut picks: Vec<(String, Axis, Scenario, usize)> = Vec::new();

    if let Some(j) = cfg.outcome {
        let d = &spec.descriptors[j];
        for state in [0, d.state_count() - 1] {
            let hit = modal(terminals.iter().filter(|(s, _)| s.0[j] == state).cloned());
            let label = format!("{}={}", d.id, d.states[state].label);
            match hit {
                Some((s, c)) => picks.push((label, Axis::OutcomeBased, s, c)),
                None => set
                    .warnings
                    .push(format!("outcome axis: no run ends with {label}")),
            }
        }
    }
    if let Some(stack) = &cfg.stack {
        let matches = |s: &Scenario| stack.states.iter().all(|&(j, v)| s.0[j] == v);
        let fresh = modal(
            terminals
                .iter()
                .filter(|(s, _)| matches(s) && !picked(&picks, s))
                .cloned(),
        );
        match fresh.or_else(|| modal(terminals.iter().filter(|(s, _)| matches(s)).cloned())) {
            Some((s, c)) => picks.push((stack.label.clone(), Axis::DescriptorBased, s, c)),
            None => {
                let (mut s, _) = modal(terminals.iter().cloned()).expect("non-empty");
                for &(j, v) in &stack.states {
                    s.0[j] = v;
                }
                set.warnings.push(format!(
                    "descriptor axis: no run ends in `{}`; stacked onto the most frequent terminal scenario",
                    stack.label
                ));
                picks.push((stack.label.clone(), Axis::DescriptorBased, s, 0));
            }
        }
    }
    if let Some(min) = cfg.frequency_min_count {
        let rarest = |fresh: bool| {
            terminals
                .iter()
                .filter(|(s, c)| *c >= min && !(fresh && picked(&picks, s)))
                .fold(None::<&(Scenario, usize)>, |best, x| match best {
                    Some(b) if b.1 <= x.1 => Some(b),
                    _ => Some(x),
                })
        };
        let rare = rarest(true).or_else(|| rarest(false));
        match rare {
            Some((s, c)) => picks.push((
                format!("rare terminal ({c} runs)"),
                Axis::FrequencyBased,
                s.clone(),
                *c,
            )),
            None => set.warnings.push(format!(
                "frequency axis: no terminal scenario reaches {min} runs"
            )),
        }
    }
    if picks.len() > cfg.count {
        set.warnings.push(format!(
            "{} extreme scenarios found, keeping the first {}",
            picks.len(),
            cfg.count
        ));
        picks.truncate(cfg.count);
    }
    if picks.len() < 2 {
        set.warnings.push(format!(
            "only {} extreme scenarios could be built",
            picks.len()
        ));
    }
    for (label, axis, scenario, runs) in picks {
        let values = matrix
            .dimensions
            .iter()
            .enumerate()
            .map(|(d, dim)| {
                Ok((
                    dim.id.clone(),
                    matrix.lookup(d, scenario.0[dim.driver], period)?,
                ))
            })
            .collect::<Result<_>>()?;
        set.scenarios.push(ExtremeScenario {
            label,
            axis,
            period,
            scenario,
            runs,
            values,
        });
    }
    Ok(set)
}

/// Everything a translation file carries, resolved against a study.
#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    pub matrix: TranslationMatrix,
    pub ranges: BTreeMap<String, RangeSpec>,
    pub extremes: Option<ExtremesConfig>,
    pub overrides: Vec<Override>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TranslationDoc {
    dimensions: Vec<DimensionDoc>,
    #[serde(default)]
    extremes: Option<ExtremesDoc>,
    #[serde(default)]
    overrides: Vec<Override>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimensionDoc {
    id: String,
    unit: String,
    driver: String,
    #[serde(default)]
    values: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    values_by_period: Option<BTreeMap<String, BTreeMap<String, f64>>>,
    #[serde(default)]
    range: Option<RangeSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtremesDoc {
    #[serde(default = "default_extreme_count")]
    count: usize,
    #[serde(default)]
    outcome: Option<OutcomeDoc>,
    #[serde(default)]
    stack: Option<StackDoc>,
    #[serde(default)]
    frequency: Option<FrequencyDoc>,
}

fn default_extreme_count() -> usize {
    4
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeDoc {
    descriptor: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StackDoc {
    #[serde(default = "default_stack_label")]
    label: String,
    states: BTreeMap<String, StateRefDoc>,
}

fn default_stack_label() -> String {
    "descriptor stack".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrequencyDoc {
    min_count: usize,
}

fn table(
    spec: &StudySpec,
    driver: &str,
    values: &BTreeMap<String, f64>,
    path: &str,
) -> Result<Vec<Option<f64>>> {
    let j = spec
        .descriptor_index(driver)
        .ok_or_else(|| Error::reference(path, format!("unknown descriptor `{driver}`")))?;
    let mut row = vec![None; spec.descriptors[j].state_count()];
    for (key, &v) in values {
        let at = format!("{path}.{key}");
        let (_, s) = spec.resolve_state_key(driver, key, &at)?;
        if !v.is_finite() {
            return Err(Error::range(at, "matrix entry must be finite"));
        }
        row[s] = Some(v);
    }
    Ok(row)
}

pub fn parse_translation(text: &str, spec: &StudySpec) -> Result<Translation> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: TranslationDoc = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::parse(e.path().to_string(), e.into_inner().to_string()))?;

    let mut dimensions = Vec::new();
    let mut tables = Vec::new();
    let mut ranges = BTreeMap::new();
    for (k, d) in doc.dimensions.iter().enumerate() {
        let path = format!("dimensions[{k}]");
        if dimensions.iter().any(|x: &Dimension| x.id == d.id) {
            return Err(Error::parse(
                format!("{path}.id"),
                format!("duplicate dimension `{}`", d.id),
            ));
        }
        let driver = spec.descriptor_index(&d.driver).ok_or_else(|| {
            Error::reference(
                format!("{path}.driver"),
                format!("unknown descriptor `{}`", d.driver),
            )
        })?;
        let lookup = match (&d.values, &d.values_by_period) {
            (Some(v), None) => {
                Lookup::Static(table(spec, &d.driver, v, &format!("{path}.values"))?)
            }
            (None, Some(by)) => {
                let mut m = BTreeMap::new();
                for (p, v) in by {
                    let at = format!("{path}.values_by_period.{p}");
                    let period: Period = p
                        .parse()
                        .map_err(|_| Error::parse(&at, format!("`{p}` is not a period")))?;
                    m.insert(period, table(spec, &d.driver, v, &at)?);
                }
                Lookup::ByPeriod(m)
            }
            _ => {
                return Err(Error::parse(
                    path,
                    "exactly one of `values` and `values_by_period` is required",
                ))
            }
        };
        if let Some(r) = d.range {
            ranges.insert(d.id.clone(), r);
        }
        dimensions.push(Dimension {
            id: d.id.clone(),
            unit: d.unit.clone(),
            driver_id: d.driver.clone(),
            driver,
            labels: spec.descriptors[driver]
                .states
                .iter()
                .map(|s| s.label.clone())
                .collect(),
        });
        tables.push(lookup);
    }

    let extremes = doc
        .extremes
        .map(|x| -> Result<ExtremesConfig> {
            let outcome = x
                .outcome
                .map(|o| {
                    spec.descriptor_index(&o.descriptor).ok_or_else(|| {
                        Error::reference(
                            "extremes.outcome.descriptor",
                            format!("unknown descriptor `{}`", o.descriptor),
                        )
                    })
                })
                .transpose()?;
            let stack = x
                .stack
                .map(|s| -> Result<StateStack> {
                    let states = s
                        .states
                        .iter()
                        .map(|(id, r)| {
                            spec.resolve_state(id, r, &format!("extremes.stack.states.{id}"))
                        })
                        .collect::<Result<_>>()?;
                    Ok(StateStack {
                        label: s.label,
                        states,
                    })
                })
                .transpose()?;
            Ok(ExtremesConfig {
                count: x.count,
                outcome,
                stack,
                frequency_min_count: x.frequency.map(|f| f.min_count),
            })
        })
        .transpose()?;

    Ok(Translation {
        matrix: TranslationMatrix { dimensions, tables },
        ranges,
        extremes,
        overrides: doc.overrides,
    })
}

/// One row per dimension and period.
pub fn write_quantified_csv(qp: &QuantifiedPathway, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "dimension",
        "unit",
        "period",
        "central",
        "low",
        "high",
        "provenance",
    ])?;
    let n = qp.periods.len();
    for (i, c) in qp.cells.iter().enumerate() {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            c.dimension.clone(),
            qp.units[i / n.max(1)].clone(),
            c.period.to_string(),
            c.value.to_string(),
            opt(c.low),
            opt(c.high),
            c.provenance(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn price_matrix() -> TranslationMatrix {
        TranslationMatrix {
            dimensions: vec![Dimension {
                id: "price".into(),
                unit: "EUR/tCO2".into(),
                driver_id: "D0".into(),
                driver: 0,
                labels: vec!["Low".into(), "Medium".into(), "High".into()],
            }],
            tables: vec![Lookup::Static(vec![Some(50.0), Some(100.0), Some(200.0)])],
        }
    }

    fn driver_path(states: &[usize]) -> Pathway {
        Pathway {
            entries: states
                .iter()
                .enumerate()
                .map(|(t, &s)| (2025 + 5 * t as i32, Scenario(vec![s])))
                .collect(),
        }
    }

    fn shares(values: &[f64]) -> QuantifiedPathway {
        let ids: Vec<String> = (0..values.len()).map(|i| format!("x{i}")).collect();
        QuantifiedPathway {
            units: vec![String::new(); ids.len()],
            periods: vec![2025],
            cells: values
                .iter()
                .zip(&ids)
                .map(|(&v, id)| Cell {
                    dimension: id.clone(),
                    period: 2025,
                    value: v,
                    low: None,
                    high: None,
                    state: 0,
                    label: String::new(),
                    entry: v,
                    notes: Vec::new(),
                })
                .collect(),
            dimensions: ids,
        }
    }

    #[test]
    fn step_series_from_lookup() {
        let qp = quantify_pathway(&driver_path(&[1, 1, 1, 1, 2, 2]), &price_matrix(), &[]).unwrap();
        assert_eq!(
            qp.series("price"),
            vec![100.0, 100.0, 100.0, 100.0, 200.0, 200.0]
        );
        assert_eq!(qp.cell("price", 2045).unwrap().label, "High");
    }

    #[test]
    fn override_is_recorded() {
        let o = Override {
            dimension: "price".into(),
            period: 2045,
            value: 180.0,
            note: "panel plausibility".into(),
        };
        let qp =
            quantify_pathway(&driver_path(&[1, 1, 1, 1, 2, 2]), &price_matrix(), &[o]).unwrap();
        assert_eq!(
            qp.series("price"),
            vec![100.0, 100.0, 100.0, 100.0, 180.0, 200.0]
        );
        let cell = qp.cell("price", 2045).unwrap();
        assert!(cell.provenance().contains("panel plausibility"));
        assert!(qp.cell("price", 2050).unwrap().notes.is_empty());
    }

    #[test]
    fn missing_entry_names_the_state() {
        let mut m = price_matrix();
        m.tables[0] = Lookup::Static(vec![Some(50.0), None, Some(200.0)]);
        let err = quantify_pathway(&driver_path(&[0, 1]), &m, &[]).unwrap_err();
        assert!(matches!(err, Error::Coverage { state: 1, .. }));
    }

    #[test]
    fn ranges() {
        let qp = quantify_pathway(&driver_path(&[1]), &price_matrix(), &[]).unwrap();
        let rel = RangeSpec {
            low: Bound::Relative(0.2),
            high: Bound::Relative(0.2),
        };
        let out = attach_uncertainty_ranges(&qp, &[("price".to_string(), rel)].into()).unwrap();
        let c = out.cell("price", 2025).unwrap();
        assert_eq!((c.low, c.high), (Some(80.0), Some(120.0)));
        let abs = RangeSpec {
            low: Bound::Value(40.0),
            high: Bound::Value(250.0),
        };
        let out = attach_uncertainty_ranges(&qp, &[("price".to_string(), abs)].into()).unwrap();
        assert_eq!(out.cells[0].low, Some(40.0));
        let bad = RangeSpec {
            low: Bound::Value(120.0),
            high: Bound::Value(90.0),
        };
        assert!(matches!(
            attach_uncertainty_ranges(&qp, &[("price".to_string(), bad)].into()),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn sum_to_one_rescales_proportionally() {
        let id = Identity {
            id: "shares".into(),
            kind: IdentityKind::Linear {
                terms: [("x0", 1.0), ("x1", 1.0), ("x2", 1.0)]
                    .map(|(k, v)| (k.to_string(), v))
                    .into(),
                rhs: 1.0,
            },
            adjustable: vec!["x0".into(), "x1".into(), "x2".into()],
        };
        let out = enforce_identities(&shares(&[0.3, 0.3, 0.3]), &[id]).unwrap();
        for c in &out.cells {
            assert!((c.value - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_unknown_solve() {
        let id = Identity {
            id: "sum".into(),
            kind: IdentityKind::Linear {
                terms: [("x0", 1.0), ("x1", 1.0)]
                    .map(|(k, v)| (k.to_string(), v))
                    .into(),
                rhs: 100.0,
            },
            adjustable: vec!["x1".into()],
        };
        let out = enforce_identities(&shares(&[80.0, 30.0]), std::slice::from_ref(&id)).unwrap();
        assert_eq!(out.cells[0].value, 80.0);
        assert!((out.cells[1].value - 20.0).abs() < 1e-12);
        let done = enforce_identities(&out, &[id]).unwrap();
        assert_eq!(done, out);
    }

    #[test]
    fn no_adjustable_is_unrepairable() {
        let id = Identity {
            id: "sum".into(),
            kind: IdentityKind::Total {
                parts: vec!["x0".into()],
                total: "x1".into(),
            },
            adjustable: vec![],
        };
        assert!(matches!(
            enforce_identities(&shares(&[1.0, 1.0]), &[id]),
            Err(Error::Unrepairable(..))
        ));
    }

    #[test]
    fn bundled_translation_resolves() {
        let spec = fixtures::miniature_study();
        let t = parse_translation(fixtures::MINIATURE_TRANSLATION, &spec).unwrap();
        assert_eq!(t.matrix.dimensions.len(), 7);
        assert!(t.extremes.is_some());
        let ids = parse_identities(fixtures::MINIATURE_IDENTITIES).unwrap();
        let baseline = Pathway {
            entries: spec
                .time_grid
                .iter()
                .map(|&p| (p, spec.baseline.clone()))
                .collect(),
        };
        let qp = quantify_pathway(&baseline, &t.matrix, &t.overrides).unwrap();
        let fixed = enforce_identities(&qp, &ids).unwrap();
        for &p in &fixed.periods {
            let total = fixed.value("fe_total", p).unwrap();
            let parts =
                fixed.value("fe_electric", p).unwrap() + fixed.value("fe_other", p).unwrap();
            assert!((total - parts).abs() < 1e-9);
        }
        let with_ranges = attach_uncertainty_ranges(&fixed, &t.ranges).unwrap();
        assert!(with_ranges
            .cell("carbon_price", 2025)
            .unwrap()
            .low
            .is_some());
    }

    #[test]
    fn unknown_driver_is_a_reference_error() {
        let spec = fixtures::miniature_study();
        let text = r#"{"dimensions":[{"id":"x","unit":"u","driver":"NOPE","values":{"Low":1}}]}"#;
        assert!(matches!(
            parse_translation(text, &spec),
            Err(Error::Reference { .. })
        ));
    }
}
