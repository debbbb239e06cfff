//! Small ready-made studies: the 2×2 hand-checked fixture, all-zero matrices
//! of any shape, and the bundled miniature energy-transition study.

use crate::engine::Scenario;
use crate::model::{
    parse_study_spec, CellRef, CrossImpactMatrix, Descriptor, DescriptorKind, DomainRules,
    JudgementCell, ShockConfig, StateDef, StudySpec, UncertaintyConfig,
};

pub const MINIATURE_STUDY: &str = include_str!("../data/mini_study.json");
pub const MINIATURE_MCDA: &str = include_str!("../data/mini_mcda.json");
pub const MINIATURE_TRANSLATION: &str = include_str!("../data/mini_translation.json");
pub const MINIATURE_IDENTITIES: &str = include_str!("../data/mini_identities.json");

pub fn miniature_study() -> StudySpec {
    parse_study_spec(MINIATURE_STUDY).expect("bundled study parses")
}

/// The nodal years 2025, 2030, ..., 2050.
pub fn five_year_grid() -> Vec<i32> {
    (0..6).map(|k| 2025 + 5 * k).collect()
}

fn descriptor(id: &str, labels: &[&str]) -> Descriptor {
    Descriptor {
        id: id.to_string(),
        name: id.to_string(),
        states: labels
            .iter()
            .enumerate()
            .map(|(index, l)| StateDef {
                index,
                label: l.to_string(),
                definition: String::new(),
            })
            .collect(),
        kind: DescriptorKind::Endogenous,
        cyclic: None,
    }
}

/// A spec with the given descriptors and matrix, baseline at state 0,
/// no rules, shocks off and zero sampling spread.
pub fn spec_with(descriptors: Vec<Descriptor>, cim: CrossImpactMatrix) -> StudySpec {
    let grid = five_year_grid();
    let mut uncertainty = UncertaintyConfig::default_for_grid(&grid);
    uncertainty.confidence_sigma = [0.0; 5];
    StudySpec {
        baseline: Scenario(vec![0; descriptors.len()]),
        descriptors,
        cim,
        rules: DomainRules::default(),
        threshold_rules: Vec::new(),
        shocks: ShockConfig::default(),
        uncertainty,
        time_grid: grid,
    }
}

/// Descriptors `D0, D1, ...` with states `s0, s1, ...` and an all-zero matrix.
pub fn zero_spec(counts: &[usize]) -> StudySpec {
    let descriptors = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let labels: Vec<String> = (0..c).map(|s| format!("s{s}")).collect();
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            descriptor(&format!("D{i}"), &refs)
        })
        .collect();
    spec_with(descriptors, CrossImpactMatrix::zeros(counts, 5))
}

/// Two descriptors A and B with two states each. A1 pushes B towards B1
/// (+2/−2) and A2 towards B2; B1 pushes A towards A1 (+1/−1) and B2
/// towards A2. Consistent set {(A1,B1), (A2,B2)}; (A1,B2) and (A2,B1)
/// form a 2-cycle under succession.
pub fn two_by_two() -> StudySpec {
    let descriptors = vec![
        descriptor("A", &["A1", "A2"]),
        descriptor("B", &["B1", "B2"]),
    ];
    let mut cim = CrossImpactMatrix::zeros(&[2, 2], 5);
    let entries = [
        (0, 0, 1, 0, 2.0),
        (0, 0, 1, 1, -2.0),
        (0, 1, 1, 0, -2.0),
        (0, 1, 1, 1, 2.0),
        (1, 0, 0, 0, 1.0),
        (1, 0, 0, 1, -1.0),
        (1, 1, 0, 0, -1.0),
        (1, 1, 0, 1, 1.0),
    ];
    for (source, source_state, target, target_state, score) in entries {
        cim.set(
            CellRef {
                source,
                source_state,
                target,
                target_state,
            },
            JudgementCell {
                score,
                confidence: 5,
            },
        )
        .expect("fixture cells are valid");
    }
    spec_with(descriptors, cim)
}
