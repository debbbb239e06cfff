//! Line-delimited ensemble file: one header line, then one line per run.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::engine::Scenario;
use crate::model::{hex_digest, Period};
use crate::simulate::{EnsembleResult, Pathway, RunRecord};
use crate::{Error, Result};

pub const FORMAT: &str = "cibflow-ensemble/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    spec_digest: String,
    master_seed: u64,
    run_count: usize,
    periods: Vec<Period>,
    descriptors: Vec<String>,
    state_counts: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunLine {
    run: usize,
    stream: String,
    states: Vec<Vec<usize>>,
    converged: Vec<bool>,
    iterations: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    failure: Option<String>,
}

pub fn write_ensemble(ensemble: &EnsembleResult, mut out: impl Write) -> Result<()> {
    let header = Header {
        format: FORMAT.to_string(),
        spec_digest: ensemble.spec_digest.clone(),
        master_seed: ensemble.master_seed,
        run_count: ensemble.run_count,
        periods: ensemble.periods.clone(),
        descriptors: ensemble.descriptor_ids.clone(),
        state_counts: ensemble.state_counts.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for r in &ensemble.runs {
        let line = RunLine {
            run: r.run_index,
            stream: r.seed_stream.clone(),
            states: r.pathway.scenarios().map(|s| s.0.clone()).collect(),
            converged: r.converged.clone(),
            iterations: r.succession_iterations.clone(),
            failure: r.failure.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn ensemble_to_bytes(ensemble: &EnsembleResult) -> Vec<u8> {
    let mut buf = Vec::new();
    write_ensemble(ensemble, &mut buf).expect("writing to memory cannot fail");
    buf
}

/// SHA-256 of the serialised ensemble.
pub fn ensemble_hash(ensemble: &EnsembleResult) -> String {
    hex_digest(&ensemble_to_bytes(ensemble))
}

pub fn read_ensemble(input: impl BufRead) -> Result<EnsembleResult> {
    let mut lines = input.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| Error::EmptyInput("ensemble file has no header".into()))?;
    let header: Header =
        serde_json::from_str(&first?).map_err(|e| Error::parse("line 1", e.to_string()))?;
    if header.format != FORMAT {
        return Err(Error::parse(
            "line 1.format",
            format!("expected {FORMAT}, found {}", header.format),
        ));
    }
    let mut runs = Vec::with_capacity(header.run_count);
    for (k, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at = format!("line {}", k + 1);
        let r: RunLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(&at, e.to_string()))?;
        if r.run != runs.len() {
            return Err(Error::parse(
                format!("{at}.run"),
                format!("expected run {}, found {}", runs.len(), r.run),
            ));
        }
        if r.states.len() > header.periods.len() {
            return Err(Error::parse(
                format!("{at}.states"),
                "more entries than periods",
            ));
        }
        for (t, s) in r.states.iter().enumerate() {
            let ok = s.len() == header.state_counts.len()
                && s.iter().zip(&header.state_counts).all(|(&v, &c)| v < c);
            if !ok {
                return Err(Error::parse(
                    format!("{at}.states[{t}]"),
                    "state vector does not match the descriptors",
                ));
            }
        }
        let entries = header
            .periods
            .iter()
            .copied()
            .zip(r.states.into_iter().map(Scenario))
            .collect();
        runs.push(RunRecord {
            run_index: r.run,
            seed_stream: r.stream,
            pathway: Pathway { entries },
            converged: r.converged,
            succession_iterations: r.iterations,
            failure: r.failure,
        });
    }
    if runs.len() != header.run_count {
        return Err(Error::parse(
            "run_count",
            format!(
                "header says {} runs, file has {}",
                header.run_count,
                runs.len()
            ),
        ));
    }
    Ok(EnsembleResult {
        spec_digest: header.spec_digest,
        master_seed: header.master_seed,
        run_count: header.run_count,
        periods: header.periods,
        descriptor_ids: header.descriptors,
        state_counts: header.state_counts,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::simulate::simulate_ensemble;

    #[test]
    fn round_trip() {
        let spec = fixtures::miniature_study();
        let e = simulate_ensemble(&spec, 20, 3, 100, 1).unwrap();
        let bytes = ensemble_to_bytes(&e);
        let back = read_ensemble(bytes.as_slice()).unwrap();
        assert_eq!(back, e);
        assert_eq!(ensemble_to_bytes(&back), bytes);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let spec = fixtures::two_by_two();
        let e = simulate_ensemble(&spec, 3, 3, 100, 1).unwrap();
        let text = String::from_utf8(ensemble_to_bytes(&e)).unwrap();
        let cut: Vec<&str> = text.lines().take(3).collect();
        assert!(read_ensemble(cut.join("\n").as_bytes()).is_err());
    }
}
