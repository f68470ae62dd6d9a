//! Results store: `<store>/index.csv` plus `<store>/runs/<config_id>.json`.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Artifacts, BenchmarkConfig, Measurement, RunOutcome, RunResult, SweepError};
use crate::meter;

pub const SCHEMA_VERSION: u32 = 1;

const INDEX: &str = "index.csv";
const RUNS: &str = "runs";

#[derive(Debug, Serialize, Deserialize)]
struct IndexRow {
    config_id: String,
    status: String,
    label: String,
}

#[derive(Serialize)]
struct DocOut<'a> {
    schema_version: u32,
    #[serde(flatten)]
    outcome: &'a RunOutcome,
}

#[derive(Deserialize)]
struct DocIn {
    schema_version: u32,
    #[serde(flatten)]
    outcome: serde_json::Value,
}

fn read_index(store: &Path) -> Result<Vec<IndexRow>, SweepError> {
    let path = store.join(INDEX);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::Reader::from_path(&path)
        .map_err(|e| SweepError::StoreCorrupt(format!("{}: {e}", path.display())))?;
    rdr.deserialize()
        .collect::<Result<Vec<IndexRow>, _>>()
        .map_err(|e| SweepError::StoreCorrupt(format!("{}: {e}", path.display())))
}

fn status(o: &RunOutcome) -> &'static str {
    match o {
        RunOutcome::Ok(_) => "ok",
        RunOutcome::Failed { .. } => "failed",
    }
}

/// Writes one document per outcome and updates the index. Outcomes whose
/// config_id is already present replace the old document in place; new ones
/// are appended.
pub fn persist_results(outcomes: &[RunOutcome], store: &Path) -> Result<(), SweepError> {
    fs::create_dir_all(store.join(RUNS))?;
    let mut index = read_index(store)?;
    for o in outcomes {
        let id = &o.config().config_id;
        let doc = DocOut {
            schema_version: SCHEMA_VERSION,
            outcome: o,
        };
        let file = fs::File::create(store.join(RUNS).join(format!("{id}.json")))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, &doc).map_err(std::io::Error::other)?;
        std::io::Write::write_all(&mut w, b"\n")?;
        let row = IndexRow {
            config_id: id.clone(),
            status: status(o).into(),
            label: o.config().label(),
        };
        match index.iter_mut().find(|r| &r.config_id == id) {
            Some(existing) => *existing = row,
            None => index.push(row),
        }
    }
    let mut wtr = csv::Writer::from_path(store.join(INDEX))
        .map_err(|e| SweepError::Io(std::io::Error::other(e)))?;
    for row in &index {
        wtr.serialize(row)
            .map_err(|e| SweepError::Io(std::io::Error::other(e)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Every outcome in index order. A missing or empty store yields no outcomes.
pub fn load_outcomes(store: &Path) -> Result<Vec<RunOutcome>, SweepError> {
    let index = read_index(store)?;
    let mut out = Vec::with_capacity(index.len());
    for row in index {
        let path = store.join(RUNS).join(format!("{}.json", row.config_id));
        let text = fs::read_to_string(&path).map_err(|_| {
            SweepError::StoreCorrupt(format!(
                "index lists {} but {} is missing",
                row.config_id,
                path.display()
            ))
        })?;
        let doc: DocIn = serde_json::from_str(&text)
            .map_err(|e| SweepError::StoreCorrupt(format!("{}: {e}", path.display())))?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(SweepError::VersionMismatch {
                found: doc.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let outcome: RunOutcome = serde_json::from_value(doc.outcome)
            .map_err(|e| SweepError::StoreCorrupt(format!("{}: {e}", path.display())))?;
        if outcome.config().config_id != row.config_id {
            return Err(SweepError::StoreCorrupt(format!(
                "{} holds config {}",
                path.display(),
                outcome.config().config_id
            )));
        }
        out.push(outcome);
    }
    Ok(out)
}

/// Successful runs only.
pub fn load_results(store: &Path) -> Result<Vec<RunResult>, SweepError> {
    Ok(load_outcomes(store)?
        .into_iter()
        .filter_map(|o| match o {
            RunOutcome::Ok(r) => Some(r),
            RunOutcome::Failed { .. } => None,
        })
        .collect())
}

/// Writes a run's trace and serving log under `<root>/artifacts/<config_id>/`
/// and returns their paths relative to `root`.
pub(super) fn write_artifacts(
    root: &Path,
    config: &BenchmarkConfig,
    m: &Measurement,
) -> Result<Artifacts, SweepError> {
    let rel = Path::new("artifacts").join(&config.config_id);
    fs::create_dir_all(root.join(&rel))?;
    let trace = rel.join("power.jsonl");
    let log = rel.join("serving.jsonl");
    meter::write_power_traces(
        BufWriter::new(fs::File::create(root.join(&trace))?),
        &m.traces,
        Some(m.clock_origin.as_str()),
    )?;
    m.log
        .write(BufWriter::new(fs::File::create(root.join(&log))?))?;
    let s = |p: &Path| p.to_string_lossy().replace('\\', "/");
    Ok(Artifacts {
        trace: s(&trace),
        log: s(&log),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{PreemptionMode, Task};

    fn result(batch: u32) -> RunResult {
        let config = BenchmarkConfig {
            config_id: String::new(),
            task: Task::Chat,
            model_id: "m".into(),
            device_profile: "high-tdp".into(),
            tp_degree: 1,
            max_batch_size: batch,
            denoising_steps: None,
            resolution: None,
            preemption_mode: PreemptionMode::Recompute,
            power_limit_w: None,
        }
        .with_id();
        RunResult {
            config,
            energy_per_request_j: 1.0 / f64::from(batch) + 0.1,
            energy_per_token_j: Some(0.1 / 3.0),
            mean_tpot_s: Some(0.0123456789),
            mean_ttft_s: Some(0.5),
            mean_e2e_s: 2.0,
            throughput: 1234.5,
            avg_power_w: 300.0,
            total_energy_j: 1e5,
            run_duration_s: 60.0,
            completed_requests: 10,
            preemptions: 0,
            tdp_ratio: Some(2.2),
            steady_window: None,
            flags: vec![],
            artifacts: None,
            repetitions: 1,
        }
    }

    #[test]
    fn round_trip_and_replace() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_results(dir.path()).unwrap().is_empty());
        let runs: Vec<RunOutcome> = [4, 8, 16, 32, 64].map(|b| RunOutcome::Ok(result(b))).into();
        persist_results(&runs, dir.path()).unwrap();
        assert_eq!(load_outcomes(dir.path()).unwrap(), runs);

        let failed = RunOutcome::Failed {
            config: result(8).config,
            error: "boom".into(),
        };
        persist_results(std::slice::from_ref(&failed), dir.path()).unwrap();
        let loaded = load_outcomes(dir.path()).unwrap();
        assert_eq!(loaded.len(), 5);
        assert_eq!(loaded[1], failed);
        assert_eq!(load_results(dir.path()).unwrap().len(), 4);
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let r = result(4);
        let id = r.config.config_id.clone();
        persist_results(&[RunOutcome::Ok(r)], dir.path()).unwrap();
        let doc = dir.path().join(RUNS).join(format!("{id}.json"));
        let text = fs::read_to_string(&doc).unwrap();
        fs::write(
            &doc,
            text.replace("\"schema_version\": 1", "\"schema_version\": 99"),
        )
        .unwrap();
        assert!(matches!(
            load_outcomes(dir.path()),
            Err(SweepError::VersionMismatch { found: 99, .. })
        ));
        fs::remove_file(&doc).unwrap();
        match load_outcomes(dir.path()) {
            Err(SweepError::StoreCorrupt(msg)) => assert!(msg.contains(&id)),
            other => panic!("expected StoreCorrupt, got {other:?}"),
        }
    }
}
