//! File-based orchestration: validate, simulate, screen, rank, quantify.
//!
//! Every stage reads the artifacts of earlier stages from the output
//! directory and writes its own; `manifest.json` records the digests of
//! inputs and outputs so repeat runs can be compared byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::{
    all_share_series, screen_candidates, select_candidates, write_candidate_csv, write_share_csv,
    CandidateSet, EndpointRule, ScreeningConfig, DEFAULT_LEVEL,
};
use crate::ensemble_file::{read_ensemble, write_ensemble};
use crate::mcda::{
    parse_mcda_input, rank_pathways, validate_mcda_input, write_ranking_csv, McdaRanking,
};
use crate::model::{
    has_errors, hex_digest, parse_study_spec, spec_digest, validate_study_spec, Finding, Severity,
    StateRefDoc, StudySpec,
};
use crate::quantify::{
    attach_uncertainty_ranges, build_extreme_scenarios, enforce_identities, parse_identities,
    parse_translation, quantify_pathway, write_quantified_csv, ExtremeSet, QuantifiedPathway,
};
use crate::simulate::{simulate_ensemble, EnsembleResult, DEFAULT_MAX_ITER, DEFAULT_RUNS};
use crate::{Error, Result};

pub const ENSEMBLE_FILE: &str = "ensemble.jsonl";
pub const SHARES_CSV: &str = "shares.csv";
pub const SHARES_JSON: &str = "shares.json";
pub const CANDIDATES_JSON: &str = "candidates.json";
pub const CANDIDATES_CSV: &str = "candidates.csv";
pub const MCDA_JSON: &str = "mcda.json";
pub const MCDA_CSV: &str = "mcda.csv";
pub const QUANTIFIED_CSV: &str = "quantified.csv";
pub const QUANTIFIED_JSON: &str = "quantified.json";
pub const FINDINGS_JSON: &str = "findings.json";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const ERROR_JSON: &str = "error.json";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Parse { .. } | Error::Reference { .. } | Error::Range { .. } | Error::Invalid(_) => {
            EXIT_INVALID
        }
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

pub fn error_kind(error: &Error) -> &'static str {
    match error {
        Error::Parse { .. } => "parse",
        Error::Reference { .. } => "reference",
        Error::Range { .. } => "range",
        Error::Structure(_) => "structure",
        Error::Infeasible { .. } => "infeasible",
        Error::Intractable { .. } => "intractable",
        Error::Config(_) => "config",
        Error::EmptyInput(_) => "empty_input",
        Error::InsufficientCandidates(_) => "insufficient_candidates",
        Error::Invalid(_) => "invalid",
        Error::Coverage { .. } => "coverage",
        Error::Unrepairable(..) => "unrepairable",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    }
}

/// Screening section of a pipeline config, with states by label or index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreeningDoc {
    pub outcome: String,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Defaults to the best end of the outcome scale.
    #[serde(default)]
    pub best_state: Option<StateRefDoc>,
    #[serde(default = "default_true")]
    pub higher_is_better: bool,
    #[serde(default)]
    pub backsliding_all: bool,
    #[serde(default = "default_steps")]
    pub late_rush_steps: usize,
    #[serde(default = "default_steps")]
    pub discontinuity_steps: usize,
    /// Each entry is a terminal combination that must not occur.
    #[serde(default)]
    pub endpoint_rules: Vec<BTreeMap<String, StateRefDoc>>,
}

fn default_k() -> usize {
    4
}

fn default_true() -> bool {
    true
}

fn default_steps() -> usize {
    2
}

impl ScreeningDoc {
    pub fn new(outcome: impl Into<String>) -> Self {
        ScreeningDoc {
            outcome: outcome.into(),
            k: default_k(),
            best_state: None,
            higher_is_better: true,
            backsliding_all: false,
            late_rush_steps: default_steps(),
            discontinuity_steps: default_steps(),
            endpoint_rules: Vec::new(),
        }
    }

    /// Screening config plus the best outcome state index.
    pub fn resolve(&self, spec: &StudySpec) -> Result<(ScreeningConfig, usize)> {
        let j = spec.descriptor_index(&self.outcome).ok_or_else(|| {
            Error::reference(
                "screening.outcome",
                format!("unknown descriptor `{}`", self.outcome),
            )
        })?;
        let best = match &self.best_state {
            Some(r) => {
                spec.resolve_state(&self.outcome, r, "screening.best_state")?
                    .1
            }
            None if self.higher_is_better => spec.descriptors[j].state_count() - 1,
            None => 0,
        };
        let mut cfg = ScreeningConfig::for_spec(spec, &self.outcome);
        cfg.higher_is_better = self.higher_is_better;
        cfg.backsliding_all = self.backsliding_all;
        cfg.late_rush_steps = self.late_rush_steps;
        cfg.discontinuity_steps = self.discontinuity_steps;
        cfg.endpoint_rules = self
            .endpoint_rules
            .iter()
            .enumerate()
            .map(|(k, rule)| {
                let forbid = rule
                    .iter()
                    .map(|(id, r)| {
                        let path = format!("screening.endpoint_rules[{k}].{id}");
                        Ok((id.clone(), spec.resolve_state(id, r, &path)?.1))
                    })
                    .collect::<Result<_>>()?;
                Ok(EndpointRule { forbid })
            })
            .collect::<Result<_>>()?;
        Ok((cfg, best))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stages {
    #[serde(default = "default_true")]
    pub simulate: bool,
    #[serde(default = "default_true")]
    pub screen: bool,
    #[serde(default = "default_true")]
    pub mcda: bool,
    #[serde(default = "default_true")]
    pub quantify: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            simulate: true,
            screen: true,
            mcda: true,
            quantify: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub spec: PathBuf,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Falls back to the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub stages: Stages,
    #[serde(default)]
    pub screening: Option<ScreeningDoc>,
    #[serde(default)]
    pub mcda: Option<PathBuf>,
    #[serde(default)]
    pub translation: Option<PathBuf>,
    #[serde(default)]
    pub identities: Option<PathBuf>,
}

fn default_runs() -> usize {
    DEFAULT_RUNS
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

fn default_level() -> f64 {
    DEFAULT_LEVEL
}

impl PipelineConfig {
    pub fn new(spec: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            spec: spec.into(),
            runs: DEFAULT_RUNS,
            seed: 0,
            workers: None,
            max_iter: DEFAULT_MAX_ITER,
            level: DEFAULT_LEVEL,
            out: None,
            stages: Stages::default(),
            screening: None,
            mcda: None,
            translation: None,
            identities: None,
        }
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut cfg: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            Error::Config(format!(
                "{}: at `{}`: {}",
                path.display(),
                e.path(),
                e.inner()
            ))
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.spec);
        for p in [
            &mut cfg.mcda,
            &mut cfg.translation,
            &mut cfg.identities,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn worker_count(&self) -> usize {
        self.workers.unwrap_or_else(default_workers)
    }

    /// Checks that every enabled stage has what it needs.
    pub fn check(&self) -> Result<()> {
        let need = |p: &Option<PathBuf>, what: &str, stage: &str| -> Result<()> {
            match p {
                None => Err(Error::Config(format!(
                    "stage `{stage}` needs a {what} path"
                ))),
                Some(p) if !p.is_file() => Err(Error::Config(format!(
                    "{what} file {} does not exist",
                    p.display()
                ))),
                Some(_) => Ok(()),
            }
        };
        if !self.spec.is_file() {
            return Err(Error::Config(format!(
                "spec file {} does not exist",
                self.spec.display()
            )));
        }
        if self.runs < 1 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if self.stages.screen && self.screening.is_none() {
            return Err(Error::Config(
                "stage `screen` needs a `screening` section".into(),
            ));
        }
        if self.stages.mcda {
            need(&self.mcda, "MCDA input", "mcda")?;
        }
        if self.stages.quantify {
            need(&self.translation, "translation matrix", "quantify")?;
            if self.identities.is_some() {
                need(&self.identities, "identity config", "quantify")?;
            }
        }
        Ok(())
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub spec_digest: String,
    pub master_seed: u64,
    pub run_count: usize,
    pub max_iter: usize,
    pub level: f64,
    /// Input file name to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Serialize)]
pub struct ErrorReport<'a> {
    pub stage: &'a str,
    pub kind: &'a str,
    pub exit_code: i32,
    pub message: String,
    #[serde(skip_serializing_if = "<[Finding]>::is_empty")]
    pub findings: &'a [Finding],
}

/// A stage failure: which stage, why, and any validation findings.
#[derive(Debug)]
pub struct PipelineFailure {
    pub stage: String,
    pub error: Error,
    pub findings: Vec<Finding>,
}

impl PipelineFailure {
    pub fn exit_code(&self) -> i32 {
        exit_code(&self.error)
    }

    pub fn report(&self) -> ErrorReport<'_> {
        ErrorReport {
            stage: &self.stage,
            kind: error_kind(&self.error),
            exit_code: self.exit_code(),
            message: self.error.to_string(),
            findings: &self.findings,
        }
    }
}

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.error)
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn put(dir: &Path, name: &str, bytes: &[u8], record: &mut Vec<Artifact>) -> Result<()> {
    fs::write(dir.join(name), bytes)?;
    record.push(Artifact {
        name: name.to_string(),
        sha256: hex_digest(bytes),
    });
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, json_bytes(value)?)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        Error::parse(
            format!("{}: {}", path.display(), e.path()),
            e.into_inner().to_string(),
        )
    })
}

/// Parses and validates a spec file. Parse failures are errors; the
/// findings say whether the spec is usable.
pub fn load_spec(path: &Path) -> Result<(StudySpec, Vec<Finding>)> {
    let text = fs::read_to_string(path)?;
    let spec = parse_study_spec(&text)?;
    let findings = validate_study_spec(&spec);
    Ok((spec, findings))
}

pub fn invalid(findings: &[Finding]) -> Error {
    Error::Invalid(
        findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
            .map(ToString::to_string)
            .collect(),
    )
}

pub fn read_ensemble_file(path: &Path) -> Result<EnsembleResult> {
    read_ensemble(BufReader::new(fs::File::open(path)?))
}

/// Ensemble file and state-share tables.
pub fn simulate_stage(
    spec: &StudySpec,
    cfg: &PipelineConfig,
    dir: &Path,
) -> Result<(EnsembleResult, Vec<Artifact>)> {
    let ensemble = simulate_ensemble(spec, cfg.runs, cfg.seed, cfg.max_iter, cfg.worker_count())?;
    let mut out = Vec::new();
    let mut bytes = Vec::new();
    write_ensemble(&ensemble, &mut bytes)?;
    put(dir, ENSEMBLE_FILE, &bytes, &mut out)?;
    out.extend(stats_stage(&ensemble, Some(spec), cfg.level, dir)?);
    Ok((ensemble, out))
}

pub fn stats_stage(
    ensemble: &EnsembleResult,
    spec: Option<&StudySpec>,
    level: f64,
    dir: &Path,
) -> Result<Vec<Artifact>> {
    let series = all_share_series(ensemble, level)?;
    let mut out = Vec::new();
    let mut csv = Vec::new();
    write_share_csv(&series, spec, &mut csv)?;
    put(dir, SHARES_CSV, &csv, &mut out)?;
    put(dir, SHARES_JSON, &json_bytes(&series)?, &mut out)?;
    Ok(out)
}

pub fn screen_stage(
    ensemble: &EnsembleResult,
    spec: &StudySpec,
    screening: &ScreeningDoc,
    dir: &Path,
) -> Result<(CandidateSet, Vec<Artifact>)> {
    let (cfg, best) = screening.resolve(spec)?;
    let screened = screen_candidates(ensemble, &cfg)?;
    let selected = select_candidates(&screened, screening.k, (&screening.outcome, best))?;
    let mut out = Vec::new();
    put(dir, CANDIDATES_JSON, &json_bytes(&selected)?, &mut out)?;
    let mut csv = Vec::new();
    write_candidate_csv(&selected, Some(spec), &mut csv)?;
    put(dir, CANDIDATES_CSV, &csv, &mut out)?;
    Ok((selected, out))
}

/// Ranks the pathways of an MCDA input. When a candidate set is given,
/// every scored pathway must be one of its candidates.
pub fn mcda_stage(
    input_path: &Path,
    candidates: Option<&CandidateSet>,
    dir: &Path,
) -> Result<(McdaRanking, Vec<Finding>, Vec<Artifact>)> {
    let input = parse_mcda_input(&fs::read_to_string(input_path)?)?;
    let mut findings = validate_mcda_input(&input);
    if let Some(set) = candidates {
        for p in &input.pathways {
            if set.candidate(p).is_none() {
                findings.push(Finding::error(
                    "pathways",
                    format!("`{p}` is not a selected candidate"),
                ));
            }
        }
    }
    if has_errors(&findings) {
        return Err(invalid(&findings));
    }
    let ranking = rank_pathways(&input)?;
    let mut out = Vec::new();
    put(dir, MCDA_JSON, &json_bytes(&ranking)?, &mut out)?;
    let mut csv = Vec::new();
    write_ranking_csv(&ranking, &mut csv)?;
    put(dir, MCDA_CSV, &csv, &mut out)?;
    Ok((ranking, findings, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantifiedBundle {
    pub pathway_id: String,
    pub pathway: QuantifiedPathway,
    pub extremes: ExtremeSet,
}

pub struct QuantifyInputs<'a> {
    pub spec: &'a StudySpec,
    pub candidates: &'a CandidateSet,
    pub pathway_id: &'a str,
    pub translation: &'a Path,
    pub identities: Option<&'a Path>,
    pub ensemble: Option<&'a EnsembleResult>,
}

pub fn quantify_stage(
    inputs: QuantifyInputs<'_>,
    dir: &Path,
) -> Result<(QuantifiedBundle, Vec<Artifact>)> {
    let spec = inputs.spec;
    let translation = parse_translation(&fs::read_to_string(inputs.translation)?, spec)?;
    let candidate = inputs
        .candidates
        .candidate(inputs.pathway_id)
        .ok_or_else(|| {
            Error::reference(
                "pathway",
                format!("`{}` is not a selected candidate", inputs.pathway_id),
            )
        })?;
    let mut qp = quantify_pathway(
        &candidate.pathway,
        &translation.matrix,
        &translation.overrides,
    )?;
    if let Some(path) = inputs.identities {
        let identities = parse_identities(&fs::read_to_string(path)?)?;
        qp = enforce_identities(&qp, &identities)?;
    }
    qp = attach_uncertainty_ranges(&qp, &translation.ranges)?;
    let extremes = match (&translation.extremes, inputs.ensemble) {
        (Some(cfg), Some(ensemble)) => {
            build_extreme_scenarios(ensemble, spec, &translation.matrix, cfg)?
        }
        (Some(_), None) => ExtremeSet {
            scenarios: Vec::new(),
            warnings: vec!["no ensemble given; extreme scenarios skipped".into()],
        },
        (None, _) => ExtremeSet::default(),
    };
    let bundle = QuantifiedBundle {
        pathway_id: inputs.pathway_id.to_string(),
        pathway: qp,
        extremes,
    };
    let mut out = Vec::new();
    let mut csv = Vec::new();
    write_quantified_csv(&bundle.pathway, &mut csv)?;
    put(dir, QUANTIFIED_CSV, &csv, &mut out)?;
    put(dir, QUANTIFIED_JSON, &json_bytes(&bundle)?, &mut out)?;
    Ok((bundle, out))
}

fn input_digest(path: &Path) -> Result<(String, String)> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok((name, hex_digest(&fs::read(path)?)))
}

/// Runs the enabled stages in order, writing artifacts and the manifest to
/// `out`. On failure `error.json` is written and no manifest.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    out: &Path,
) -> std::result::Result<Manifest, PipelineFailure> {
    let result = run_stages(cfg, out);
    if let Err(failure) = &result {
        if fs::create_dir_all(out).is_ok() {
            let _ = write_json(&out.join(ERROR_JSON), &failure.report());
        }
    }
    result
}

fn run_stages(cfg: &PipelineConfig, out: &Path) -> std::result::Result<Manifest, PipelineFailure> {
    let fail = |stage: &str| {
        let stage = stage.to_string();
        move |error: Error| PipelineFailure {
            stage: stage.clone(),
            error,
            findings: Vec::new(),
        }
    };
    cfg.check().map_err(fail("config"))?;
    fs::create_dir_all(out).map_err(|e| fail("config")(e.into()))?;
    let _ = fs::remove_file(out.join(ERROR_JSON));
    let _ = fs::remove_file(out.join(MANIFEST_JSON));

    let (spec, findings) = load_spec(&cfg.spec).map_err(fail("validate"))?;
    let mut validate_artifacts = Vec::new();
    put(
        out,
        FINDINGS_JSON,
        &json_bytes(&findings).map_err(fail("validate"))?,
        &mut validate_artifacts,
    )
    .map_err(fail("validate"))?;
    if has_errors(&findings) {
        return Err(PipelineFailure {
            stage: "validate".into(),
            error: invalid(&findings),
            findings,
        });
    }

    let mut inputs = BTreeMap::new();
    let mut paths = vec![cfg.spec.clone()];
    if cfg.stages.mcda {
        paths.extend(cfg.mcda.clone());
    }
    if cfg.stages.quantify {
        paths.extend(cfg.translation.clone());
        paths.extend(cfg.identities.clone());
    }
    for p in &paths {
        let (name, digest) = input_digest(p).map_err(fail("config"))?;
        inputs.insert(name, digest);
    }

    let mut manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        spec_digest: spec_digest(&spec),
        master_seed: cfg.seed,
        run_count: cfg.runs,
        max_iter: cfg.max_iter,
        level: cfg.level,
        inputs,
        stages: vec![StageRecord {
            stage: "validate".into(),
            artifacts: validate_artifacts,
        }],
    };

    let ensemble = if cfg.stages.simulate {
        let (ensemble, artifacts) = simulate_stage(&spec, cfg, out).map_err(fail("simulate"))?;
        manifest.stages.push(StageRecord {
            stage: "simulate".into(),
            artifacts,
        });
        Some(ensemble)
    } else {
        None
    };

    let needs_ensemble = |stage: &str| -> std::result::Result<EnsembleResult, PipelineFailure> {
        match &ensemble {
            Some(e) => Ok(e.clone()),
            None => {
                let e = read_ensemble_file(&out.join(ENSEMBLE_FILE)).map_err(fail(stage))?;
                if e.spec_digest != manifest.spec_digest {
                    return Err(fail(stage)(Error::Config(format!(
                        "{ENSEMBLE_FILE} was produced from a different spec"
                    ))));
                }
                Ok(e)
            }
        }
    };

    let candidates = if cfg.stages.screen {
        let ensemble = needs_ensemble("screen")?;
        let screening = cfg.screening.as_ref().expect("checked");
        let (set, artifacts) =
            screen_stage(&ensemble, &spec, screening, out).map_err(fail("screen"))?;
        manifest.stages.push(StageRecord {
            stage: "screen".into(),
            artifacts,
        });
        Some(set)
    } else {
        None
    };
    let load_candidates = |stage: &str| -> std::result::Result<CandidateSet, PipelineFailure> {
        match &candidates {
            Some(c) => Ok(c.clone()),
            None => read_json(&out.join(CANDIDATES_JSON)).map_err(fail(stage)),
        }
    };

    let ranking = if cfg.stages.mcda {
        let set = load_candidates("mcda")?;
        let path = cfg.mcda.as_ref().expect("checked");
        let (ranking, _, artifacts) = mcda_stage(path, Some(&set), out).map_err(fail("mcda"))?;
        manifest.stages.push(StageRecord {
            stage: "mcda".into(),
            artifacts,
        });
        Some(ranking)
    } else {
        None
    };

    if cfg.stages.quantify {
        let set = load_candidates("quantify")?;
        let ranking = match ranking {
            Some(r) => r,
            None => read_json(&out.join(MCDA_JSON)).map_err(fail("quantify"))?,
        };
        let ensemble = needs_ensemble("quantify")?;
        let (_, artifacts) = quantify_stage(
            QuantifyInputs {
                spec: &spec,
                candidates: &set,
                pathway_id: ranking.chosen(),
                translation: cfg.translation.as_deref().expect("checked"),
                identities: cfg.identities.as_deref(),
                ensemble: Some(&ensemble),
            },
            out,
        )
        .map_err(fail("quantify"))?;
        manifest.stages.push(StageRecord {
            stage: "quantify".into(),
            artifacts,
        });
    }

    write_json(&out.join(MANIFEST_JSON), &manifest).map_err(fail("manifest"))?;
    Ok(manifest)
}
