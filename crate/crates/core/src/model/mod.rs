//! Study specification: descriptors, the cross-impact matrix, rules and the
//! stochastic configuration that every later stage consumes.
//!
//! Descriptors and states are addressed by position throughout the engine.
//! Identifiers and labels only exist at the file boundary, see [`document`].

mod document;
mod validate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use document::{hex_digest, parse_study_spec, serialize_study_spec, spec_digest, StateRefDoc};
pub use validate::{has_errors, validate_study_spec, Finding, Severity};

use crate::engine::Scenario;

/// A nodal year of the time grid.
pub type Period = i32;

pub const SCORE_MIN: f64 = -3.0;
pub const SCORE_MAX: f64 = 3.0;
pub const MAX_STATES: usize = 5;
pub const MIN_STATES: usize = 2;

/// Confidence-code to standard deviation mapping used when a study omits it.
/// Codes 1 and 5 are the anchors; codes 2 to 4 interpolate linearly.
pub const DEFAULT_CONFIDENCE_SIGMA: [f64; 5] = [1.5, 1.175, 0.85, 0.525, 0.2];

/// Time-scale factor at the first and last period when a study omits it.
pub const DEFAULT_TIME_SCALE: (f64, f64) = (1.0, 1.5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDef {
    pub index: usize,
    pub label: String,
    pub definition: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorKind {
    #[default]
    Endogenous,
    Exogenous,
    Cyclic,
}

/// Between-period transition law of a cyclic descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CyclicParams {
    pub stay: f64,
    pub step: f64,
    pub step2: f64,
    #[serde(default)]
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub id: String,
    pub name: String,
    pub states: Vec<StateDef>,
    pub kind: DescriptorKind,
    pub cyclic: Option<CyclicParams>,
}

impl Descriptor {
    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s.label == label)
    }

    pub fn is_cyclic(&self) -> bool {
        self.kind == DescriptorKind::Cyclic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgementCell {
    pub score: f64,
    pub confidence: u8,
}

/// Position of every descriptor's states inside a flat per-state vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    counts: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl StateLayout {
    pub fn new(counts: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(counts.len());
        let mut total = 0;
        for &c in &counts {
            offsets.push(total);
            total += c;
        }
        Self {
            counts,
            offsets,
            total,
        }
    }

    pub fn descriptor_count(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn count(&self, descriptor: usize) -> usize {
        self.counts[descriptor]
    }

    pub fn offset(&self, descriptor: usize) -> usize {
        self.offsets[descriptor]
    }

    /// Total number of (descriptor, state) pairs.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn range(&self, descriptor: usize) -> std::ops::Range<usize> {
        let o = self.offsets[descriptor];
        o..o + self.counts[descriptor]
    }

    /// Number of scenarios, saturating rather than overflowing.
    pub fn space_size(&self) -> u128 {
        self.counts
            .iter()
            .fold(1u128, |acc, &c| acc.saturating_mul(c as u128))
    }
}

/// Address of one judgement cell: impact of `source` in `source_state` on
/// `target` in `target_state`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellRef {
    pub source: usize,
    pub source_state: usize,
    pub target: usize,
    pub target_state: usize,
}

/// Dense cross-impact matrix over all descriptor states. Cells inside a
/// descriptor's own diagonal block do not exist and are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossImpactMatrix {
    layout: StateLayout,
    scores: Vec<f64>,
    confidence: Vec<u8>,
}

impl CrossImpactMatrix {
    /// All-zero matrix with the given confidence on every cell.
    pub fn zeros(state_counts: &[usize], confidence: u8) -> Self {
        let layout = StateLayout::new(state_counts.to_vec());
        let n = layout.total();
        let mut conf = vec![confidence; n * n];
        // self-impact blocks are never read; keep them canonical
        for d in 0..layout.descriptor_count() {
            for a in layout.range(d) {
                for b in layout.range(d) {
                    conf[a * n + b] = 0;
                }
            }
        }
        Self {
            layout,
            scores: vec![0.0; n * n],
            confidence: conf,
        }
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn state_counts(&self) -> &[usize] {
        self.layout.counts()
    }

    #[inline]
    fn flat(&self, cell: CellRef) -> usize {
        debug_assert_ne!(cell.source, cell.target);
        let row = self.layout.offset(cell.source) + cell.source_state;
        let col = self.layout.offset(cell.target) + cell.target_state;
        row * self.layout.total() + col
    }

    fn check(&self, cell: CellRef) -> crate::Result<()> {
        let n = self.layout.descriptor_count();
        if cell.source >= n
            || cell.target >= n
            || cell.source == cell.target
            || cell.source_state >= self.layout.count(cell.source)
            || cell.target_state >= self.layout.count(cell.target)
        {
            return Err(crate::Error::Structure(format!(
                "cell {cell:?} is not part of the matrix"
            )));
        }
        Ok(())
    }

    pub fn get(&self, cell: CellRef) -> JudgementCell {
        let k = self.flat(cell);
        JudgementCell {
            score: self.scores[k],
            confidence: self.confidence[k],
        }
    }

    pub fn score(&self, cell: CellRef) -> f64 {
        self.scores[self.flat(cell)]
    }

    pub fn set(&mut self, cell: CellRef, value: JudgementCell) -> crate::Result<()> {
        self.check(cell)?;
        let k = self.flat(cell);
        self.scores[k] = value.score;
        self.confidence[k] = value.confidence;
        Ok(())
    }

    pub fn set_score(&mut self, cell: CellRef, score: f64) -> crate::Result<()> {
        self.check(cell)?;
        let k = self.flat(cell);
        self.scores[k] = score;
        Ok(())
    }

    pub fn add_score(&mut self, cell: CellRef, delta: f64) -> crate::Result<()> {
        self.check(cell)?;
        let k = self.flat(cell);
        self.scores[k] += delta;
        Ok(())
    }

    /// Every cell in row-major order (source descriptor, source state, target
    /// descriptor, target state). Draw order of all samplers follows this.
    pub fn cells(&self) -> impl Iterator<Item = CellRef> + '_ {
        let n = self.layout.descriptor_count();
        (0..n).flat_map(move |source| {
            (0..self.layout.count(source)).flat_map(move |source_state| {
                (0..n)
                    .filter(move |&t| t != source)
                    .flat_map(move |target| {
                        (0..self.layout.count(target)).map(move |target_state| CellRef {
                            source,
                            source_state,
                            target,
                            target_state,
                        })
                    })
            })
        })
    }

    pub fn cell_count(&self) -> usize {
        let total = self.layout.total();
        let diag: usize = self.layout.counts().iter().map(|c| c * c).sum();
        total * total - diag
    }

    /// Row of scores for a source state, indexed by global target state.
    /// Entries inside the source descriptor's own block are meaningless.
    #[inline]
    pub(crate) fn row(&self, source: usize, source_state: usize) -> &[f64] {
        let n = self.layout.total();
        let r = self.layout.offset(source) + source_state;
        &self.scores[r * n..(r + 1) * n]
    }

    /// Applies `f` to every existing cell score.
    pub(crate) fn map_scores(&mut self, mut f: impl FnMut(CellRef, f64) -> f64) {
        let cells: Vec<CellRef> = self.cells().collect();
        for cell in cells {
            let k = self.flat(cell);
            self.scores[k] = f(cell, self.scores[k]);
        }
    }
}

/// One descriptor fixed to one state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateAssignment {
    pub descriptor: usize,
    pub state: usize,
}

impl StateAssignment {
    pub fn new(descriptor: usize, state: usize) -> Self {
        Self { descriptor, state }
    }

    pub fn holds(&self, scenario: &Scenario) -> bool {
        scenario.0.get(self.descriptor) == Some(&self.state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Implication {
    pub antecedent: StateAssignment,
    pub consequent: StateAssignment,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DomainRules {
    pub forbidden_pairs: Vec<(StateAssignment, StateAssignment)>,
    pub implications: Vec<Implication>,
}

/// Adds `delta` to one cell whenever every condition holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRule {
    pub conditions: Vec<StateAssignment>,
    pub cell: CellRef,
    pub delta: f64,
}

impl ThresholdRule {
    pub fn is_active(&self, scenario: &Scenario) -> bool {
        self.conditions.iter().all(|c| c.holds(scenario))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    #[default]
    Gaussian,
    StudentT {
        df: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralShock {
    pub enabled: bool,
    /// Per-cell standard deviation.
    pub scale: f64,
    pub distribution: Distribution,
}

impl Default for StructuralShock {
    fn default() -> Self {
        Self {
            enabled: false,
            scale: 0.30,
            distribution: Distribution::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DynamicShock {
    pub enabled: bool,
    /// Long-run standard deviation of the AR(1) process.
    pub long_run_sd: f64,
    pub persistence: f64,
    pub distribution: Distribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ShockConfig {
    #[serde(default)]
    pub structural: StructuralShock,
    #[serde(default)]
    pub dynamic: DynamicShock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    PerRun,
    PerPeriod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyConfig {
    /// Standard deviation for confidence codes 1..=5, index 0 is code 1.
    pub confidence_sigma: [f64; 5],
    pub time_scale: BTreeMap<Period, f64>,
    pub sampling_distribution: Distribution,
    pub resample: Resample,
}

impl UncertaintyConfig {
    /// Default mapping with a time scale rising linearly from 1.0 to 1.5
    /// across the grid.
    pub fn default_for_grid(grid: &[Period]) -> Self {
        let time_scale = default_time_scale(grid);
        let resample = default_resample(&time_scale);
        Self {
            confidence_sigma: DEFAULT_CONFIDENCE_SIGMA,
            time_scale,
            sampling_distribution: Distribution::Gaussian,
            resample,
        }
    }

    pub fn sigma_for_code(&self, confidence: u8) -> Option<f64> {
        (1..=5)
            .contains(&confidence)
            .then(|| self.confidence_sigma[confidence as usize - 1])
    }
}

pub(crate) fn default_time_scale(grid: &[Period]) -> BTreeMap<Period, f64> {
    let (lo, hi) = DEFAULT_TIME_SCALE;
    match (grid.first(), grid.last()) {
        (Some(&first), Some(&last)) if last > first => grid
            .iter()
            .map(|&p| {
                let frac = f64::from(p - first) / f64::from(last - first);
                (p, lo + (hi - lo) * frac)
            })
            .collect(),
        _ => grid.iter().map(|&p| (p, lo)).collect(),
    }
}

/// Per-period redraws when the scale varies over time, one matrix per run otherwise.
pub(crate) fn default_resample(time_scale: &BTreeMap<Period, f64>) -> Resample {
    let mut values = time_scale.values();
    match values.next() {
        Some(first) if values.any(|v| v != first) => Resample::PerPeriod,
        _ => Resample::PerRun,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub descriptors: Vec<Descriptor>,
    pub cim: CrossImpactMatrix,
    pub baseline: Scenario,
    pub rules: DomainRules,
    pub threshold_rules: Vec<ThresholdRule>,
    pub shocks: ShockConfig,
    pub uncertainty: UncertaintyConfig,
    pub time_grid: Vec<Period>,
}

impl StudySpec {
    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.state_counts())
    }

    pub fn state_counts(&self) -> Vec<usize> {
        self.descriptors
            .iter()
            .map(Descriptor::state_count)
            .collect()
    }

    pub fn descriptor_index(&self, id: &str) -> Option<usize> {
        self.descriptors.iter().position(|d| d.id == id)
    }

    /// Resolves a descriptor id and a state reference given by label or index.
    pub fn resolve_state(
        &self,
        descriptor: &str,
        state: &StateRefDoc,
        path: &str,
    ) -> crate::Result<(usize, usize)> {
        let j = self.descriptor_index(descriptor).ok_or_else(|| {
            crate::Error::reference(path, format!("unknown descriptor `{descriptor}`"))
        })?;
        let d = &self.descriptors[j];
        let s = match state {
            StateRefDoc::Index(i) => Some(*i).filter(|&i| i < d.state_count()),
            StateRefDoc::Label(l) => d.state_index(l),
        };
        s.map(|s| (j, s)).ok_or_else(|| {
            crate::Error::reference(
                path,
                format!("descriptor `{descriptor}` has no state {state}"),
            )
        })
    }

    /// Like [`StudySpec::resolve_state`] for a state written as a map key:
    /// a label, or failing that a decimal index.
    pub fn resolve_state_key(
        &self,
        descriptor: &str,
        key: &str,
        path: &str,
    ) -> crate::Result<(usize, usize)> {
        let label = StateRefDoc::Label(key.to_string());
        self.resolve_state(descriptor, &label, path)
            .or_else(|e| match key.parse::<usize>() {
                Ok(i) => self.resolve_state(descriptor, &StateRefDoc::Index(i), path),
                Err(_) => Err(e),
            })
    }

    pub fn descriptor_ids(&self) -> Vec<String> {
        self.descriptors.iter().map(|d| d.id.clone()).collect()
    }

    pub fn cyclic_mask(&self) -> Vec<bool> {
        self.descriptors.iter().map(Descriptor::is_cyclic).collect()
    }

    pub fn period_index(&self, period: Period) -> Option<usize> {
        self.time_grid.iter().position(|&p| p == period)
    }

    /// Human-readable form of a scenario, e.g. `A=High, B=Low`.
    pub fn describe(&self, scenario: &Scenario) -> String {
        scenario
            .0
            .iter()
            .zip(&self.descriptors)
            .map(|(&s, d)| {
                let label = d.states.get(s).map_or("?", |st| st.label.as_str());
                format!("{}={}", d.id, label)
            })
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn describe_assignment(&self, a: StateAssignment) -> String {
        match self.descriptors.get(a.descriptor) {
            Some(d) => format!(
                "{}={}",
                d.id,
                d.states.get(a.state).map_or("?", |s| s.label.as_str())
            ),
            None => format!("#{}={}", a.descriptor, a.state),
        }
    }
}
