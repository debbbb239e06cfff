use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{
    CrossImpactMatrix, Distribution, StateAssignment, StudySpec, MAX_STATES, MIN_STATES, SCORE_MAX,
    SCORE_MIN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub path: String,
    pub message: String,
}

impl Finding {
    pub fn error(path: impl Into<String>, message: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Error,
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn warning(path: impl Into<String>, message: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Warning,
            path: path.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.path, self.message)
    }
}

#[derive(Default)]
struct Findings(Vec<Finding>);

impl Findings {
    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Finding::error(path, message));
    }

    fn warning(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Finding::warning(path, message));
    }
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(|f| f.severity == Severity::Error)
}

/// Checks every structural invariant of a study. Errors make the spec
/// unusable; warnings flag suspicious but legal content.
pub fn validate_study_spec(spec: &StudySpec) -> Vec<Finding> {
    let mut out = Findings::default();
    check_descriptors(spec, &mut out);
    let descriptors_ok = out.0.is_empty();
    check_cim(spec, &mut out);
    check_time_grid(spec, &mut out);
    check_uncertainty(spec, &mut out);
    check_shocks(spec, &mut out);
    let rules_ok = check_rules(spec, &mut out);
    if descriptors_ok && rules_ok {
        check_baseline(spec, &mut out);
    }
    out.0
}

fn check_descriptors(spec: &StudySpec, out: &mut Findings) {
    if spec.descriptors.is_empty() {
        out.error("descriptors", "at least one descriptor is required");
    }
    let mut ids = HashSet::new();
    for (i, d) in spec.descriptors.iter().enumerate() {
        let path = format!("descriptors[{i}]");
        if !ids.insert(d.id.as_str()) {
            out.error(
                format!("{path}.id"),
                format!("duplicate descriptor id `{}`", d.id),
            );
        }
        let n = d.states.len();
        if !(MIN_STATES..=MAX_STATES).contains(&n) {
            out.error(
                format!("{path}.states"),
                format!("{n} states, expected {MIN_STATES} to {MAX_STATES}"),
            );
        }
        let mut labels = HashSet::new();
        for (k, s) in d.states.iter().enumerate() {
            if s.index != k {
                out.error(
                    format!("{path}.states[{k}]"),
                    format!("state index {} does not match position {k}", s.index),
                );
            }
            if !labels.insert(s.label.as_str()) {
                out.error(
                    format!("{path}.states[{k}].label"),
                    format!("duplicate state label `{}`", s.label),
                );
            }
        }
        match (d.is_cyclic(), &d.cyclic) {
            (true, None) => out.error(
                format!("{path}.cyclic"),
                "cyclic descriptor without transition parameters",
            ),
            (false, Some(_)) => out.error(
                format!("{path}.cyclic"),
                "transition parameters on a non-cyclic descriptor",
            ),
            (true, Some(p)) => {
                for (name, v) in [("stay", p.stay), ("step", p.step), ("step2", p.step2)] {
                    if !(0.0..=1.0).contains(&v) {
                        out.error(
                            format!("{path}.cyclic.{name}"),
                            format!("probability {v} outside [0, 1]"),
                        );
                    }
                }
                let sum = p.stay + p.step + p.step2;
                if (sum - 1.0).abs() > 1e-9 {
                    out.error(
                        format!("{path}.cyclic"),
                        format!("stay + step + step2 = {sum}, must sum to 1.0"),
                    );
                }
                if !(-1.0..=1.0).contains(&p.drift) {
                    out.error(
                        format!("{path}.cyclic.drift"),
                        format!("drift {} outside [-1, 1]", p.drift),
                    );
                }
            }
            (false, None) => {}
        }
    }
}

fn check_cim(spec: &StudySpec, out: &mut Findings) {
    let cim: &CrossImpactMatrix = &spec.cim;
    if cim.state_counts() != spec.state_counts().as_slice() {
        out.error(
            "cim",
            format!(
                "matrix layout {:?} does not match descriptor state counts {:?}",
                cim.state_counts(),
                spec.state_counts()
            ),
        );
        return;
    }
    for cell in cim.cells() {
        let c = cim.get(cell);
        let src = &spec.descriptors[cell.source].id;
        let tgt = &spec.descriptors[cell.target].id;
        let path = format!(
            "cim[{src}:{} -> {tgt}:{}]",
            cell.source_state, cell.target_state
        );
        if !c.score.is_finite() || !(SCORE_MIN..=SCORE_MAX).contains(&c.score) {
            out.error(
                format!("{path}.score"),
                format!("score {} outside [{SCORE_MIN}, {SCORE_MAX}]", c.score),
            );
        }
        if !(1..=5).contains(&c.confidence) {
            out.error(
                format!("{path}.confidence"),
                format!("confidence {} outside 1..=5", c.confidence),
            );
        }
    }
    let n = spec.descriptors.len();
    if n < 2 {
        return;
    }
    let layout = cim.layout();
    for i in 0..n {
        let silent = (0..layout.count(i)).all(|a| {
            let row = cim.row(i, a);
            (0..n)
                .filter(|&j| j != i)
                .all(|j| row[layout.range(j)].iter().all(|&s| s == 0.0))
        });
        if silent {
            out.warning(
                format!("cim[{}]", spec.descriptors[i].id),
                "descriptor exerts no impact on any other descriptor (all-zero row)",
            );
        }
        let unaffected = (0..n).filter(|&k| k != i).all(|k| {
            (0..layout.count(k)).all(|a| cim.row(k, a)[layout.range(i)].iter().all(|&s| s == 0.0))
        });
        if unaffected && !spec.descriptors[i].is_cyclic() {
            out.warning(
                format!("cim[* -> {}]", spec.descriptors[i].id),
                "descriptor receives no impact; succession will never move it",
            );
        }
    }
}

fn check_time_grid(spec: &StudySpec, out: &mut Findings) {
    if spec.time_grid.len() < 2 {
        out.error("time_grid", "at least two periods are required");
    }
    if spec.time_grid.windows(2).any(|w| w[1] <= w[0]) {
        out.error("time_grid", "periods must be strictly increasing");
    }
}

fn check_distribution(path: &str, d: Distribution, out: &mut Findings) {
    if let Distribution::StudentT { df } = d {
        if df <= 2 {
            out.error(
                path,
                format!("student_t needs df > 2 for a finite variance, got {df}"),
            );
        }
    }
}

fn check_uncertainty(spec: &StudySpec, out: &mut Findings) {
    let u = &spec.uncertainty;
    for (k, &s) in u.confidence_sigma.iter().enumerate() {
        if !s.is_finite() || s < 0.0 {
            out.error(
                format!("uncertainty.confidence_sigma.{}", k + 1),
                format!("sigma {s} must be non-negative"),
            );
        }
    }
    if u.confidence_sigma.windows(2).any(|w| w[1] > w[0]) {
        out.error(
            "uncertainty.confidence_sigma",
            "sigma must not increase with the confidence code",
        );
    }
    for p in &spec.time_grid {
        match u.time_scale.get(p) {
            None => out.error(
                format!("uncertainty.time_scale.{p}"),
                "no time-scale factor for this period",
            ),
            Some(f) if !f.is_finite() || *f < 0.0 => out.error(
                format!("uncertainty.time_scale.{p}"),
                format!("factor {f} must be non-negative"),
            ),
            Some(_) => {}
        }
    }
    for p in u.time_scale.keys() {
        if !spec.time_grid.contains(p) {
            out.warning(
                format!("uncertainty.time_scale.{p}"),
                "factor for a period outside the time grid is ignored",
            );
        }
    }
    check_distribution(
        "uncertainty.sampling_distribution",
        u.sampling_distribution,
        out,
    );
}

fn check_shocks(spec: &StudySpec, out: &mut Findings) {
    let s = &spec.shocks.structural;
    if !s.scale.is_finite() || s.scale < 0.0 {
        out.error(
            "shocks.structural.scale",
            format!("scale {} must be non-negative", s.scale),
        );
    }
    if s.enabled {
        check_distribution("shocks.structural.distribution", s.distribution, out);
    }
    let d = &spec.shocks.dynamic;
    if !d.long_run_sd.is_finite() || d.long_run_sd < 0.0 {
        out.error(
            "shocks.dynamic.long_run_sd",
            format!("long-run sd {} must be non-negative", d.long_run_sd),
        );
    }
    if d.enabled {
        if !d.persistence.is_finite() || d.persistence.abs() >= 1.0 {
            out.error(
                "shocks.dynamic.persistence",
                format!("|rho| = {} must be below 1", d.persistence.abs()),
            );
        }
        check_distribution("shocks.dynamic.distribution", d.distribution, out);
    }
}

fn assignment_ok(spec: &StudySpec, a: StateAssignment) -> bool {
    spec.descriptors
        .get(a.descriptor)
        .is_some_and(|d| a.state < d.state_count())
}

fn check_rules(spec: &StudySpec, out: &mut Findings) -> bool {
    let before = out.0.len();
    for (k, &(a, b)) in spec.rules.forbidden_pairs.iter().enumerate() {
        let path = format!("rules.forbidden_pairs[{k}]");
        if !assignment_ok(spec, a) || !assignment_ok(spec, b) {
            out.error(path, "references an unknown descriptor or state");
        } else if a.descriptor == b.descriptor {
            out.error(path, "a forbidden pair must span two descriptors");
        }
    }
    for (k, imp) in spec.rules.implications.iter().enumerate() {
        if !assignment_ok(spec, imp.antecedent) || !assignment_ok(spec, imp.consequent) {
            out.error(
                format!("rules.implications[{k}]"),
                "references an unknown descriptor or state",
            );
        }
    }
    for (k, r) in spec.threshold_rules.iter().enumerate() {
        let path = format!("threshold_rules[{k}]");
        if r.conditions.iter().any(|&a| !assignment_ok(spec, a)) {
            out.error(
                format!("{path}.conditions"),
                "references an unknown descriptor or state",
            );
        }
        let c = r.cell;
        if c.source == c.target
            || !assignment_ok(spec, StateAssignment::new(c.source, c.source_state))
            || !assignment_ok(spec, StateAssignment::new(c.target, c.target_state))
        {
            out.error(format!("{path}.effect"), "does not address a matrix cell");
        }
        if !r.delta.is_finite() {
            out.error(format!("{path}.effect.delta"), "delta must be finite");
        }
    }
    out.0.len() == before
}

fn check_baseline(spec: &StudySpec, out: &mut Findings) {
    let b = &spec.baseline.0;
    if b.len() != spec.descriptors.len() {
        out.error(
            "baseline",
            format!(
                "{} states given for {} descriptors",
                b.len(),
                spec.descriptors.len()
            ),
        );
        return;
    }
    for (i, (&s, d)) in b.iter().zip(&spec.descriptors).enumerate() {
        if s >= d.state_count() {
            out.error(
                format!("baseline.{}", spec.descriptors[i].id),
                format!("state index {s} out of range"),
            );
            return;
        }
    }
    for &(a, c) in &spec.rules.forbidden_pairs {
        if a.holds(&spec.baseline) && c.holds(&spec.baseline) {
            out.error(
                "baseline",
                format!(
                    "baseline contains forbidden pair ({}, {})",
                    spec.describe_assignment(a),
                    spec.describe_assignment(c)
                ),
            );
        }
    }
}
