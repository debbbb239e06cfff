//! Study-spec file schema (JSON) and its conversion to and from [`StudySpec`].

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    default_resample, default_time_scale, CellRef, CrossImpactMatrix, CyclicParams, Descriptor,
    DescriptorKind, Distribution, DomainRules, Implication, JudgementCell, Period, Resample,
    ShockConfig, StateAssignment, StateDef, StudySpec, ThresholdRule, UncertaintyConfig,
    DEFAULT_CONFIDENCE_SIGMA, SCORE_MAX, SCORE_MIN,
};
use crate::engine::Scenario;
use crate::{Error, Result};

/// A state given either by position or by label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateRefDoc {
    Index(usize),
    Label(String),
}

impl std::fmt::Display for StateRefDoc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StateRefDoc::Index(i) => write!(f, "{i}"),
            StateRefDoc::Label(l) => write!(f, "{l:?}"),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyDocument {
    descriptors: Vec<DescriptorDoc>,
    cim: Vec<CellDoc>,
    baseline: BTreeMap<String, StateRefDoc>,
    #[serde(default)]
    rules: RulesDoc,
    #[serde(default)]
    threshold_rules: Vec<ThresholdDoc>,
    #[serde(default)]
    shocks: ShockConfig,
    #[serde(default)]
    uncertainty: UncertaintyDoc,
    time_grid: Vec<Period>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DescriptorDoc {
    id: String,
    #[serde(default)]
    name: String,
    states: Vec<StateDoc>,
    #[serde(default)]
    kind: DescriptorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cyclic: Option<CyclicParams>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum StateDoc {
    Full {
        label: String,
        #[serde(default)]
        definition: String,
    },
    Label(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellDoc {
    source: String,
    source_state: StateRefDoc,
    target: String,
    target_state: StateRefDoc,
    score: f64,
    confidence: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignmentDoc {
    descriptor: String,
    state: StateRefDoc,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesDoc {
    #[serde(default)]
    forbidden_pairs: Vec<[AssignmentDoc; 2]>,
    #[serde(default)]
    implications: Vec<ImplicationDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImplicationDoc {
    #[serde(rename = "if")]
    antecedent: AssignmentDoc,
    #[serde(rename = "then")]
    consequent: AssignmentDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdDoc {
    conditions: Vec<AssignmentDoc>,
    effect: EffectDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EffectDoc {
    source: String,
    source_state: StateRefDoc,
    target: String,
    target_state: StateRefDoc,
    delta: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UncertaintyDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence_sigma: Option<BTreeMap<u8, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_scale: Option<BTreeMap<Period, f64>>,
    #[serde(default)]
    sampling_distribution: Distribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    resample: Option<Resample>,
}

/// Parses a study-spec document. Defaults are filled in; structural
/// invariants beyond references and score/confidence ranges are left to
/// [`super::validate_study_spec`].
pub fn parse_study_spec(text: &str) -> Result<StudySpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: StudyDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::parse(path, e.into_inner().to_string())
    })?;
    Resolver::new(&doc).build(doc)
}

struct Resolver {
    ids: HashMap<String, usize>,
    labels: Vec<Vec<String>>,
}

impl Resolver {
    fn new(doc: &StudyDocument) -> Self {
        let mut ids = HashMap::new();
        for (i, d) in doc.descriptors.iter().enumerate() {
            ids.entry(d.id.clone()).or_insert(i);
        }
        let labels = doc
            .descriptors
            .iter()
            .map(|d| d.states.iter().map(|s| s.label().to_string()).collect())
            .collect();
        Self { ids, labels }
    }

    fn descriptor(&self, path: &str, id: &str) -> Result<usize> {
        self.ids
            .get(id)
            .copied()
            .ok_or_else(|| Error::reference(path, format!("unknown descriptor `{id}`")))
    }

    fn state(&self, path: &str, descriptor: usize, state: &StateRefDoc) -> Result<usize> {
        let labels = &self.labels[descriptor];
        let found = match state {
            StateRefDoc::Index(i) => (*i < labels.len()).then_some(*i),
            StateRefDoc::Label(l) => labels.iter().position(|x| x == l),
        };
        found.ok_or_else(|| {
            Error::reference(
                path,
                format!("descriptor #{descriptor} has no state {state}"),
            )
        })
    }

    fn assignment(&self, path: &str, a: &AssignmentDoc) -> Result<StateAssignment> {
        let descriptor = self.descriptor(&format!("{path}.descriptor"), &a.descriptor)?;
        let state = self.state(&format!("{path}.state"), descriptor, &a.state)?;
        Ok(StateAssignment { descriptor, state })
    }

    fn cell(
        &self,
        path: &str,
        source: &str,
        source_state: &StateRefDoc,
        target: &str,
        target_state: &StateRefDoc,
    ) -> Result<CellRef> {
        let s = self.descriptor(&format!("{path}.source"), source)?;
        let t = self.descriptor(&format!("{path}.target"), target)?;
        if s == t {
            return Err(Error::reference(
                path,
                format!("descriptor `{source}` cannot impact itself"),
            ));
        }
        Ok(CellRef {
            source: s,
            source_state: self.state(&format!("{path}.source_state"), s, source_state)?,
            target: t,
            target_state: self.state(&format!("{path}.target_state"), t, target_state)?,
        })
    }

    fn build(&self, doc: StudyDocument) -> Result<StudySpec> {
        let descriptors: Vec<Descriptor> = doc
            .descriptors
            .into_iter()
            .map(|d| Descriptor {
                name: if d.name.is_empty() {
                    d.id.clone()
                } else {
                    d.name
                },
                id: d.id,
                states: d
                    .states
                    .into_iter()
                    .enumerate()
                    .map(|(index, s)| {
                        let (label, definition) = s.into_parts();
                        StateDef {
                            index,
                            label,
                            definition,
                        }
                    })
                    .collect(),
                kind: d.kind,
                cyclic: d.cyclic,
            })
            .collect();
        let counts: Vec<usize> = descriptors.iter().map(Descriptor::state_count).collect();

        let mut cim = CrossImpactMatrix::zeros(&counts, 0);
        let mut seen = vec![false; cim.layout().total().pow(2)];
        for (k, c) in doc.cim.iter().enumerate() {
            let path = format!("cim[{k}]");
            let cell = self.cell(
                &path,
                &c.source,
                &c.source_state,
                &c.target,
                &c.target_state,
            )?;
            if !c.score.is_finite() || !(SCORE_MIN..=SCORE_MAX).contains(&c.score) {
                return Err(Error::range(
                    format!("{path}.score"),
                    format!("score {} outside [{SCORE_MIN}, {SCORE_MAX}]", c.score),
                ));
            }
            if !(1..=5).contains(&c.confidence) {
                return Err(Error::range(
                    format!("{path}.confidence"),
                    format!("confidence {} outside 1..=5", c.confidence),
                ));
            }
            let flat = cim.flat(cell);
            if std::mem::replace(&mut seen[flat], true) {
                return Err(Error::parse(path, "duplicate cell"));
            }
            cim.set(
                cell,
                JudgementCell {
                    score: c.score,
                    confidence: c.confidence,
                },
            )?;
        }
        if let Some(missing) = cim.cells().find(|&cell| !seen[cim.flat(cell)]) {
            return Err(Error::parse(
                "cim",
                format!(
                    "missing cell {}[{}] -> {}[{}]",
                    descriptors[missing.source].id,
                    missing.source_state,
                    descriptors[missing.target].id,
                    missing.target_state
                ),
            ));
        }

        let mut baseline = vec![usize::MAX; descriptors.len()];
        for (id, state) in &doc.baseline {
            let path = format!("baseline.{id}");
            let d = self.descriptor(&path, id)?;
            baseline[d] = self.state(&path, d, state)?;
        }
        if let Some(d) = baseline.iter().position(|&s| s == usize::MAX) {
            return Err(Error::parse(
                "baseline",
                format!("no baseline state for descriptor `{}`", descriptors[d].id),
            ));
        }

        let forbidden_pairs = doc
            .rules
            .forbidden_pairs
            .iter()
            .enumerate()
            .map(|(k, [a, b])| {
                let path = format!("rules.forbidden_pairs[{k}]");
                Ok((
                    self.assignment(&format!("{path}[0]"), a)?,
                    self.assignment(&format!("{path}[1]"), b)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let implications = doc
            .rules
            .implications
            .iter()
            .enumerate()
            .map(|(k, imp)| {
                let path = format!("rules.implications[{k}]");
                Ok(Implication {
                    antecedent: self.assignment(&format!("{path}.if"), &imp.antecedent)?,
                    consequent: self.assignment(&format!("{path}.then"), &imp.consequent)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let threshold_rules = doc
            .threshold_rules
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let path = format!("threshold_rules[{k}]");
                let conditions = r
                    .conditions
                    .iter()
                    .enumerate()
                    .map(|(c, a)| self.assignment(&format!("{path}.conditions[{c}]"), a))
                    .collect::<Result<Vec<_>>>()?;
                let e = &r.effect;
                let cell = self.cell(
                    &format!("{path}.effect"),
                    &e.source,
                    &e.source_state,
                    &e.target,
                    &e.target_state,
                )?;
                if !e.delta.is_finite() {
                    return Err(Error::range(
                        format!("{path}.effect.delta"),
                        "delta must be finite",
                    ));
                }
                Ok(ThresholdRule {
                    conditions,
                    cell,
                    delta: e.delta,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let uncertainty = build_uncertainty(doc.uncertainty, &doc.time_grid)?;

        Ok(StudySpec {
            descriptors,
            cim,
            baseline: Scenario(baseline),
            rules: DomainRules {
                forbidden_pairs,
                implications,
            },
            threshold_rules,
            shocks: doc.shocks,
            uncertainty,
            time_grid: doc.time_grid,
        })
    }
}

impl StateDoc {
    fn label(&self) -> &str {
        match self {
            StateDoc::Full { label, .. } | StateDoc::Label(label) => label,
        }
    }

    fn into_parts(self) -> (String, String) {
        match self {
            StateDoc::Full { label, definition } => (label, definition),
            StateDoc::Label(label) => (label, String::new()),
        }
    }
}

fn build_uncertainty(doc: UncertaintyDoc, grid: &[Period]) -> Result<UncertaintyConfig> {
    let mut confidence_sigma = DEFAULT_CONFIDENCE_SIGMA;
    if let Some(map) = doc.confidence_sigma {
        for (code, sigma) in map {
            if !(1..=5).contains(&code) {
                return Err(Error::range(
                    format!("uncertainty.confidence_sigma.{code}"),
                    "confidence codes run from 1 to 5",
                ));
            }
            confidence_sigma[code as usize - 1] = sigma;
        }
    }
    // An absent table means the linear default; a partial one means 1.0
    // for every period it leaves out.
    let time_scale = match doc.time_scale {
        None => default_time_scale(grid),
        Some(given) => {
            let mut full: BTreeMap<Period, f64> = grid.iter().map(|&p| (p, 1.0)).collect();
            full.extend(given);
            full
        }
    };
    let resample = doc
        .resample
        .unwrap_or_else(|| default_resample(&time_scale));
    Ok(UncertaintyConfig {
        confidence_sigma,
        time_scale,
        sampling_distribution: doc.sampling_distribution,
        resample,
    })
}

fn state_ref(spec: &StudySpec, a: StateAssignment) -> AssignmentDoc {
    let d = &spec.descriptors[a.descriptor];
    AssignmentDoc {
        descriptor: d.id.clone(),
        state: label_ref(d, a.state),
    }
}

fn label_ref(d: &Descriptor, state: usize) -> StateRefDoc {
    match d.states.get(state) {
        Some(s) => StateRefDoc::Label(s.label.clone()),
        None => StateRefDoc::Index(state),
    }
}

fn to_document(spec: &StudySpec) -> StudyDocument {
    let ds = &spec.descriptors;
    StudyDocument {
        descriptors: ds
            .iter()
            .map(|d| DescriptorDoc {
                id: d.id.clone(),
                name: d.name.clone(),
                states: d
                    .states
                    .iter()
                    .map(|s| StateDoc::Full {
                        label: s.label.clone(),
                        definition: s.definition.clone(),
                    })
                    .collect(),
                kind: d.kind,
                cyclic: d.cyclic,
            })
            .collect(),
        cim: spec
            .cim
            .cells()
            .map(|c| {
                let cell = spec.cim.get(c);
                CellDoc {
                    source: ds[c.source].id.clone(),
                    source_state: label_ref(&ds[c.source], c.source_state),
                    target: ds[c.target].id.clone(),
                    target_state: label_ref(&ds[c.target], c.target_state),
                    score: cell.score,
                    confidence: cell.confidence,
                }
            })
            .collect(),
        baseline: spec
            .baseline
            .0
            .iter()
            .enumerate()
            .map(|(i, &s)| (ds[i].id.clone(), label_ref(&ds[i], s)))
            .collect(),
        rules: RulesDoc {
            forbidden_pairs: spec
                .rules
                .forbidden_pairs
                .iter()
                .map(|&(a, b)| [state_ref(spec, a), state_ref(spec, b)])
                .collect(),
            implications: spec
                .rules
                .implications
                .iter()
                .map(|i| ImplicationDoc {
                    antecedent: state_ref(spec, i.antecedent),
                    consequent: state_ref(spec, i.consequent),
                })
                .collect(),
        },
        threshold_rules: spec
            .threshold_rules
            .iter()
            .map(|r| ThresholdDoc {
                conditions: r.conditions.iter().map(|&a| state_ref(spec, a)).collect(),
                effect: EffectDoc {
                    source: ds[r.cell.source].id.clone(),
                    source_state: label_ref(&ds[r.cell.source], r.cell.source_state),
                    target: ds[r.cell.target].id.clone(),
                    target_state: label_ref(&ds[r.cell.target], r.cell.target_state),
                    delta: r.delta,
                },
            })
            .collect(),
        shocks: spec.shocks,
        uncertainty: UncertaintyDoc {
            confidence_sigma: Some((1..=5u8).zip(spec.uncertainty.confidence_sigma).collect()),
            time_scale: Some(spec.uncertainty.time_scale.clone()),
            sampling_distribution: spec.uncertainty.sampling_distribution,
            resample: Some(spec.uncertainty.resample),
        },
        time_grid: spec.time_grid.clone(),
    }
}

/// Writes the spec in the file schema with every default made explicit.
pub fn serialize_study_spec(spec: &StudySpec) -> String {
    serde_json::to_string_pretty(&to_document(spec)).expect("study document is serializable")
}

/// Hex SHA-256 of the compact canonical serialization.
pub fn spec_digest(spec: &StudySpec) -> String {
    let canonical = serde_json::to_vec(&to_document(spec)).expect("study document is serializable");
    hex_digest(&canonical)
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
