//! Persona-weighted simple additive weighting over candidate pathways.
//!
//! V_p = (1/R) Σ_r Σ_c w_{r,c} s_{p,c}. Sums are correctly rounded, so a
//! value does not depend on the order personas or criteria are listed in.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::model::{has_errors, Finding};
use crate::{Error, Result};

/// Correctly rounded sum of finite values (Shewchuk's algorithm with the
/// half-way correction), independent of input order.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    let Some(mut n) = partials.len().checked_sub(1) else {
        return 0.0;
    };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreScale {
    pub min: f64,
    pub max: f64,
}

impl Default for ScoreScale {
    fn default() -> Self {
        ScoreScale { min: 1.0, max: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Persona {
    pub id: String,
    /// Criteria left out carry weight 0.
    pub weights: BTreeMap<String, f64>,
}

impl Persona {
    pub fn weight(&self, criterion: &str) -> f64 {
        self.weights.get(criterion).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McdaInput {
    #[serde(default)]
    pub scale: ScoreScale,
    /// Defaults to the pathway keys of `scores` in sorted order.
    #[serde(default)]
    pub pathways: Vec<String>,
    pub criteria: Vec<String>,
    pub personas: Vec<Persona>,
    pub scores: BTreeMap<String, BTreeMap<String, f64>>,
    /// Pathway chosen in deliberation, overriding the top rank downstream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<String>,
}

impl McdaInput {
    pub fn score(&self, pathway: &str, criterion: &str) -> Option<f64> {
        self.scores.get(pathway)?.get(criterion).copied()
    }
}

pub fn parse_mcda_input(text: &str) -> Result<McdaInput> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut input: McdaInput = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::parse(e.path().to_string(), e.into_inner().to_string()))?;
    if input.pathways.is_empty() {
        input.pathways = input.scores.keys().cloned().collect();
    }
    Ok(input)
}

fn duplicates<'a>(ids: impl Iterator<Item = &'a String>) -> Vec<&'a String> {
    let mut seen = HashSet::new();
    ids.filter(|id| !seen.insert(*id)).collect()
}

pub fn validate_mcda_input(input: &McdaInput) -> Vec<Finding> {
    let mut out = Vec::new();
    let scale = input.scale;
    if !(scale.min.is_finite() && scale.max.is_finite() && scale.min < scale.max) {
        out.push(Finding::error(
            "scale",
            format!(
                "scale [{}, {}] is not a proper interval",
                scale.min, scale.max
            ),
        ));
    }
    if input.pathways.len() < 2 {
        out.push(Finding::error(
            "pathways",
            "at least 2 pathways are required",
        ));
    }
    if input.criteria.is_empty() {
        out.push(Finding::error(
            "criteria",
            "at least 1 criterion is required",
        ));
    }
    if input.personas.is_empty() {
        out.push(Finding::error("personas", "at least 1 persona is required"));
    }
    for id in duplicates(input.pathways.iter()) {
        out.push(Finding::error(
            "pathways",
            format!("duplicate pathway `{id}`"),
        ));
    }
    for id in duplicates(input.criteria.iter()) {
        out.push(Finding::error(
            "criteria",
            format!("duplicate criterion `{id}`"),
        ));
    }
    for id in duplicates(input.personas.iter().map(|p| &p.id)) {
        out.push(Finding::warning(
            "personas",
            format!("persona id `{id}` appears more than once"),
        ));
    }

    let criteria: HashSet<&String> = input.criteria.iter().collect();
    for p in &input.pathways {
        for c in &input.criteria {
            match input.score(p, c) {
                None => out.push(Finding::error(
                    format!("scores.{p}.{c}"),
                    format!("missing score for ({p}, {c})"),
                )),
                Some(s) if !s.is_finite() || s < scale.min || s > scale.max => {
                    out.push(Finding::error(
                        format!("scores.{p}.{c}"),
                        format!("score {s} outside the scale [{}, {}]", scale.min, scale.max),
                    ))
                }
                Some(_) => {}
            }
        }
    }
    for (p, row) in &input.scores {
        if !input.pathways.contains(p) {
            out.push(Finding::error(
                format!("scores.{p}"),
                format!("unknown pathway `{p}`"),
            ));
        }
        for c in row.keys().filter(|c| !criteria.contains(c)) {
            out.push(Finding::error(
                format!("scores.{p}.{c}"),
                format!("unknown criterion `{c}`"),
            ));
        }
    }

    for (r, persona) in input.personas.iter().enumerate() {
        let path = format!("personas[{r}]");
        for (c, &w) in &persona.weights {
            if !criteria.contains(c) {
                out.push(Finding::error(
                    format!("{path}.weights.{c}"),
                    format!("unknown criterion `{c}`"),
                ));
            }
            if !w.is_finite() || w < 0.0 {
                out.push(Finding::error(
                    format!("{path}.weights.{c}"),
                    format!("weight {w} must be non-negative"),
                ));
            }
        }
        let sum = exact_sum(persona.weights.values().copied());
        if !sum.is_finite() || (sum - 1.0).abs() > 1e-9 {
            out.push(Finding::error(
                format!("{path}.weights"),
                format!("weights of `{}` sum to {sum}, not 1", persona.id),
            ));
        }
    }

    if let Some(sel) = &input.selected {
        if !input.pathways.contains(sel) {
            out.push(Finding::error(
                "selected",
                format!("unknown pathway `{sel}`"),
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaValues {
    pub persona: String,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McdaRanking {
    pub values: BTreeMap<String, f64>,
    /// Descending by value; equal values ordered by pathway id.
    pub order: Vec<String>,
    pub per_persona: Vec<PersonaValues>,
    /// Groups of two or more pathways with identical values.
    pub ties: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<String>,
}

impl McdaRanking {
    /// The override when one was given, otherwise the top-ranked pathway.
    pub fn chosen(&self) -> &str {
        self.selected.as_deref().unwrap_or(&self.order[0])
    }
}

pub fn rank_pathways(input: &McdaInput) -> Result<McdaRanking> {
    let findings = validate_mcda_input(input);
    if has_errors(&findings) {
        return Err(Error::Invalid(
            findings
                .iter()
                .filter(|f| f.severity == crate::model::Severity::Error)
                .map(ToString::to_string)
                .collect(),
        ));
    }
    let per_persona: Vec<PersonaValues> =
        input
            .personas
            .iter()
            .map(|persona| PersonaValues {
                persona: persona.id.clone(),
                values: input
                    .pathways
                    .iter()
                    .map(|p| {
                        let v =
                            exact_sum(input.criteria.iter().map(|c| {
                                persona.weight(c) * input.score(p, c).expect("validated")
                            }));
                        (p.clone(), v)
                    })
                    .collect(),
            })
            .collect();
    let r = per_persona.len() as f64;
    let values: BTreeMap<String, f64> = input
        .pathways
        .iter()
        .map(|p| {
            let total = exact_sum(per_persona.iter().map(|pv| pv.values[p]));
            (p.clone(), total / r)
        })
        .collect();

    let mut order: Vec<String> = input.pathways.clone();
    order.sort_by(|a, b| values[b].total_cmp(&values[a]).then_with(|| a.cmp(b)));
    let mut ties: Vec<Vec<String>> = Vec::new();
    let mut group: Vec<String> = Vec::new();
    for p in &order {
        if group.last().is_some_and(|q| values[q] != values[p]) {
            if group.len() > 1 {
                ties.push(std::mem::take(&mut group));
            }
            group.clear();
        }
        group.push(p.clone());
    }
    if group.len() > 1 {
        ties.push(group);
    }

    Ok(McdaRanking {
        values,
        order,
        per_persona,
        ties,
        selected: input.selected.clone(),
    })
}

/// One row per pathway in rank order, with a column per persona.
pub fn write_ranking_csv(ranking: &McdaRanking, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "rank".to_string(),
        "pathway".into(),
        "value".into(),
        "tie_group".into(),
    ];
    header.extend(ranking.per_persona.iter().map(|p| p.persona.clone()));
    w.write_record(&header)?;
    for (i, p) in ranking.order.iter().enumerate() {
        let tie = ranking
            .ties
            .iter()
            .position(|g| g.contains(p))
            .map(|g| (g + 1).to_string())
            .unwrap_or_default();
        let mut row = vec![
            (i + 1).to_string(),
            p.clone(),
            ranking.values[p].to_string(),
            tie,
        ];
        row.extend(
            ranking
                .per_persona
                .iter()
                .map(|pv| pv.values[p].to_string()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn persona(id: &str, w: &[(&str, f64)]) -> Persona {
        Persona {
            id: id.into(),
            weights: w.iter().map(|(c, v)| (c.to_string(), *v)).collect(),
        }
    }

    fn hand_input() -> McdaInput {
        let scores = [("p1", [4.0, 2.0]), ("p2", [3.0, 5.0])]
            .into_iter()
            .map(|(p, s)| {
                (
                    p.to_string(),
                    [("c1".to_string(), s[0]), ("c2".to_string(), s[1])].into(),
                )
            })
            .collect();
        McdaInput {
            scale: ScoreScale::default(),
            pathways: vec!["p1".into(), "p2".into()],
            criteria: vec!["c1".into(), "c2".into()],
            personas: vec![
                persona("r1", &[("c1", 0.5), ("c2", 0.5)]),
                persona("r2", &[("c1", 0.8), ("c2", 0.2)]),
            ],
            scores,
            selected: None,
        }
    }

    #[test]
    fn exact_sum_is_correctly_rounded() {
        assert_eq!(exact_sum([0.1; 10]), 1.0);
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([]), 0.0);
        assert_eq!(exact_sum([1.0, 1e-16, 1e-16]), 1.0000000000000002);
    }

    #[test]
    fn hand_example() {
        let r = rank_pathways(&hand_input()).unwrap();
        assert!((r.values["p1"] - 3.3).abs() < 1e-12);
        assert!((r.values["p2"] - 3.7).abs() < 1e-12);
        assert_eq!(r.per_persona[0].values["p1"], 3.0);
        assert!((r.per_persona[1].values["p1"] - 3.6).abs() < 1e-12);
        assert_eq!(r.order, vec!["p2", "p1"]);
        assert!(r.ties.is_empty());
        assert_eq!(r.chosen(), "p2");
    }

    #[test]
    fn weight_sum_violation() {
        let mut input = hand_input();
        input.personas[0] = persona("r1", &[("c1", 0.5), ("c2", 0.6)]);
        let f = validate_mcda_input(&input);
        assert!(has_errors(&f));
        assert!(f.iter().any(|x| x.message.contains("sum to 1.1")));
        assert!(matches!(rank_pathways(&input), Err(Error::Invalid(_))));
    }

    #[test]
    fn missing_score_names_the_cell() {
        let mut input = hand_input();
        input.scores.get_mut("p2").unwrap().remove("c2");
        let f = validate_mcda_input(&input);
        assert!(f.iter().any(|x| x.message == "missing score for (p2, c2)"));
    }

    #[test]
    fn full_tie_is_reported() {
        let mut input = hand_input();
        for row in input.scores.values_mut() {
            row.values_mut().for_each(|s| *s = 3.0);
        }
        let r = rank_pathways(&input).unwrap();
        assert_eq!(r.ties, vec![vec!["p1".to_string(), "p2".to_string()]]);
        assert_eq!(r.order, vec!["p1", "p2"]);
    }

    #[test]
    fn bundled_input_is_valid() {
        let input = parse_mcda_input(fixtures::MINIATURE_MCDA).unwrap();
        assert!(validate_mcda_input(&input).is_empty());
        assert_eq!(input.pathways.len(), 4);
        assert_eq!(input.criteria.len(), 5);
        assert_eq!(input.personas.len(), 10);
    }

    #[test]
    fn unknown_selected_is_an_error() {
        let mut input = hand_input();
        input.selected = Some("p9".into());
        assert!(has_errors(&validate_mcda_input(&input)));
        input.selected = Some("p1".into());
        assert_eq!(rank_pathways(&input).unwrap().chosen(), "p1");
    }
}
