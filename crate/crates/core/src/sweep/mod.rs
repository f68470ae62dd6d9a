//! Configuration sweeps: grid expansion, sequential execution against a
//! measurement backend, per-run accounting, and the results store.

mod analysis;
mod backend;
mod http;
mod spec;
mod store;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::accounting::{AccountingError, SteadyParams, SteadyWindow};
use crate::meter::MeterError;
use crate::simulator::{DiffusionRequest, LlmRequest, SimError, SimWorkload};
use crate::task::{LatencyMetric, PreemptionMode, Task};
use crate::telemetry::TelemetryError;

pub use analysis::{analyze_run, RunAnalysis};
pub use backend::{Backend, BackendLease, LeaseToken, Measurement, SimulatorBackend};
pub use http::{derive_decode_iterations, HttpBackend, HttpBackendSpec};
pub use spec::{
    parse_constraint, BackendSpec, Constraint, GridValue, SimBackendSpec, SweepSpec, WorkloadSpec,
};
pub use store::{load_outcomes, load_results, persist_results, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("grid is empty after expansion and constraint filtering")]
    EmptyGrid,
    #[error("unknown grid dimension {0:?}")]
    UnknownDimension(String),
    #[error("constraint {rule:?}: {reason}")]
    ConstraintParseError { rule: String, reason: String },
    #[error("sweep spec: {0}")]
    Spec(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend already has a run in flight")]
    BackendBusy,
    #[error("results store is corrupt: {0}")]
    StoreCorrupt(String),
    #[error("results store schema version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Accounting(#[from] AccountingError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Meter(#[from] MeterError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One point of the sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub config_id: String,
    pub task: Task,
    pub model_id: String,
    pub device_profile: String,
    pub tp_degree: u32,
    pub max_batch_size: u32,
    pub denoising_steps: Option<u32>,
    pub resolution: Option<u32>,
    pub preemption_mode: PreemptionMode,
    /// Reserved; never actuated.
    pub power_limit_w: Option<f64>,
}

impl BenchmarkConfig {
    /// Stable id: a SHA-256 prefix of the canonical JSON of every other field.
    pub fn compute_id(&self) -> String {
        let canonical = serde_json::json!({
            "task": self.task,
            "model_id": self.model_id,
            "device_profile": self.device_profile,
            "tp_degree": self.tp_degree,
            "max_batch_size": self.max_batch_size,
            "denoising_steps": self.denoising_steps,
            "resolution": self.resolution,
            "preemption_mode": self.preemption_mode,
            "power_limit_w": self.power_limit_w,
        });
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn with_id(mut self) -> Self {
        self.config_id = self.compute_id();
        self
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: String| Err(SweepError::InvalidConfig(m));
        if self.tp_degree == 0 {
            return bad("tp_degree must be >= 1".into());
        }
        if self.max_batch_size == 0 {
            return bad("max_batch_size must be >= 1".into());
        }
        if !self.task.is_llm() && (self.denoising_steps.is_none() || self.resolution.is_none()) {
            return bad(format!(
                "{} configs need denoising_steps and resolution",
                self.task
            ));
        }
        if self.denoising_steps == Some(0) || self.resolution == Some(0) {
            return bad("denoising_steps and resolution must be >= 1".into());
        }
        Ok(())
    }

    /// Short human label, e.g. `high-tdp tp1 b8`.
    pub fn label(&self) -> String {
        let mut s = format!(
            "{} {} tp{} b{}",
            self.model_id, self.device_profile, self.tp_degree, self.max_batch_size
        );
        if let Some(steps) = self.denoising_steps {
            s.push_str(&format!(" s{steps}"));
        }
        if let Some(res) = self.resolution {
            s.push_str(&format!(" r{res}"));
        }
        if self.task.is_llm() {
            s.push(' ');
            s.push_str(self.preemption_mode.as_str());
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifacts {
    pub trace: String,
    pub log: String,
}

/// Measured summary of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: BenchmarkConfig,
    pub energy_per_request_j: f64,
    pub energy_per_token_j: Option<f64>,
    pub mean_tpot_s: Option<f64>,
    pub mean_ttft_s: Option<f64>,
    pub mean_e2e_s: f64,
    /// Tokens per second for LLM tasks, requests per second for diffusion.
    pub throughput: f64,
    pub avg_power_w: f64,
    pub total_energy_j: f64,
    pub run_duration_s: f64,
    pub completed_requests: u64,
    pub preemptions: u64,
    pub tdp_ratio: Option<f64>,
    pub steady_window: Option<SteadyWindow>,
    pub flags: Vec<String>,
    pub artifacts: Option<Artifacts>,
    pub repetitions: u32,
}

impl RunResult {
    pub fn latency(&self, metric: LatencyMetric) -> Option<f64> {
        match metric {
            LatencyMetric::Tpot => self.mean_tpot_s,
            LatencyMetric::Ttft => self.mean_ttft_s,
            LatencyMetric::E2e => Some(self.mean_e2e_s),
        }
    }

    pub fn throughput_unit(&self) -> &'static str {
        if self.config.task.is_llm() {
            "tokens/s"
        } else {
            "requests/s"
        }
    }

    /// Field-wise mean over repetitions of the same config. The steady window
    /// and artifacts come from the first repetition; flags are unioned.
    pub fn mean_of(runs: &[RunResult]) -> Option<RunResult> {
        let first = runs.first()?;
        let n = runs.len() as f64;
        let avg = |f: &dyn Fn(&RunResult) -> f64| runs.iter().map(f).sum::<f64>() / n;
        let avg_opt = |f: &dyn Fn(&RunResult) -> Option<f64>| {
            runs.iter()
                .map(f)
                .collect::<Option<Vec<f64>>>()
                .map(|v| v.iter().sum::<f64>() / n)
        };
        let mut flags: Vec<String> = runs.iter().flat_map(|r| r.flags.clone()).collect();
        flags.sort();
        flags.dedup();
        Some(RunResult {
            config: first.config.clone(),
            energy_per_request_j: avg(&|r| r.energy_per_request_j),
            energy_per_token_j: avg_opt(&|r| r.energy_per_token_j),
            mean_tpot_s: avg_opt(&|r| r.mean_tpot_s),
            mean_ttft_s: avg_opt(&|r| r.mean_ttft_s),
            mean_e2e_s: avg(&|r| r.mean_e2e_s),
            throughput: avg(&|r| r.throughput),
            avg_power_w: avg(&|r| r.avg_power_w),
            total_energy_j: avg(&|r| r.total_energy_j),
            run_duration_s: avg(&|r| r.run_duration_s),
            completed_requests: first.completed_requests,
            preemptions: (avg(&|r| r.preemptions as f64)).round() as u64,
            tdp_ratio: avg_opt(&|r| r.tdp_ratio),
            steady_window: first.steady_window.clone(),
            flags,
            artifacts: first.artifacts.clone(),
            repetitions: runs.len() as u32,
        })
    }
}

/// Result of one sweep point; failures are kept alongside successes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunOutcome {
    Ok(RunResult),
    Failed {
        config: BenchmarkConfig,
        error: String,
    },
}

impl RunOutcome {
    pub fn config(&self) -> &BenchmarkConfig {
        match self {
            RunOutcome::Ok(r) => &r.config,
            RunOutcome::Failed { config, .. } => config,
        }
    }

    pub fn result(&self) -> Option<&RunResult> {
        match self {
            RunOutcome::Ok(r) => Some(r),
            RunOutcome::Failed { .. } => None,
        }
    }
}

/// Where each run's requests come from.
#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSource {
    Llm(Vec<LlmRequest>),
    /// `n` images; steps and resolution come from each config.
    Diffusion {
        n_requests: usize,
    },
}

impl WorkloadSource {
    pub fn for_config(&self, config: &BenchmarkConfig) -> Result<SimWorkload, SweepError> {
        match (self, config.task.is_llm()) {
            (WorkloadSource::Llm(reqs), true) => Ok(SimWorkload::Llm(reqs.clone())),
            (WorkloadSource::Diffusion { n_requests }, false) => {
                let steps = config.denoising_steps.unwrap_or(1);
                let resolution = config.resolution.unwrap_or(512);
                Ok(SimWorkload::Diffusion(
                    (0..*n_requests)
                        .map(|i| DiffusionRequest {
                            id: format!("img{i}"),
                            steps,
                            resolution,
                        })
                        .collect(),
                ))
            }
            _ => Err(SweepError::InvalidConfig(format!(
                "workload kind does not match task {}",
                config.task
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepOptions {
    pub steady: SteadyParams,
    pub repetitions: u32,
    pub seed: u64,
    /// When set, each run's trace and serving log are written under
    /// `<artifact_root>/artifacts/<config_id>/`.
    pub artifact_root: Option<PathBuf>,
}

/// Expands the grid of a sweep spec into concrete configs.
///
/// Dimensions iterate in name order, the alphabetically first one outermost;
/// values within a dimension ascend. Configs failing any constraint are
/// dropped.
pub fn expand_grid(spec: &SweepSpec) -> Result<Vec<BenchmarkConfig>, SweepError> {
    let dims: Vec<(&String, &Vec<GridValue>)> = spec.grid.iter().collect();
    if dims.iter().any(|(_, values)| values.is_empty()) {
        return Err(SweepError::EmptyGrid);
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; dims.len()];
    loop {
        let mut config = spec.base.clone();
        for (d, (name, values)) in dims.iter().enumerate() {
            spec::apply_dimension(&mut config, name, &values[idx[d]])?;
        }
        let config = config.with_id();
        config.validate()?;
        let mut keep = true;
        for c in &spec.constraints {
            if !c.eval(&config, &spec.variables())? {
                keep = false;
                break;
            }
        }
        if keep {
            out.push(config);
        }
        // Odometer: last dimension varies fastest.
        let mut d = dims.len();
        loop {
            if d == 0 {
                if out.is_empty() {
                    return Err(SweepError::EmptyGrid);
                }
                return Ok(out);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < dims[d].1.len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

pub fn run_sweep(
    configs: &[BenchmarkConfig],
    backend: &dyn Backend,
    workload: &WorkloadSource,
    options: &SweepOptions,
) -> Result<Vec<RunOutcome>, SweepError> {
    run_sweep_with_progress(configs, backend, workload, options, |_, _| {})
}

/// Runs configs strictly one after another. A failing config is recorded and
/// the sweep continues; only an unreachable backend aborts.
pub fn run_sweep_with_progress(
    configs: &[BenchmarkConfig],
    backend: &dyn Backend,
    workload: &WorkloadSource,
    options: &SweepOptions,
    mut progress: impl FnMut(usize, &RunOutcome),
) -> Result<Vec<RunOutcome>, SweepError> {
    if configs.is_empty() {
        log::warn!("sweep has no configurations; nothing to run");
        return Ok(Vec::new());
    }
    backend.check_available()?;
    let mut outcomes = Vec::with_capacity(configs.len());
    for (i, config) in configs.iter().enumerate() {
        let outcome = match run_config(config, backend, workload, options) {
            Ok(result) => RunOutcome::Ok(result),
            Err(e) => {
                log::warn!(
                    "config {} ({}) failed: {e}",
                    config.config_id,
                    config.label()
                );
                RunOutcome::Failed {
                    config: config.clone(),
                    error: e.to_string(),
                }
            }
        };
        progress(i, &outcome);
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

fn run_config(
    config: &BenchmarkConfig,
    backend: &dyn Backend,
    workload: &WorkloadSource,
    options: &SweepOptions,
) -> Result<RunResult, SweepError> {
    config.validate()?;
    let workload = workload.for_config(config)?;
    let reps = options.repetitions.max(1);
    let mut runs = Vec::with_capacity(reps as usize);
    for rep in 0..reps {
        let _lease = backend.lease().acquire()?;
        backend.reset(config)?;
        let measurement =
            backend.execute(config, &workload, options.seed.wrapping_add(u64::from(rep)))?;
        let artifacts = match (&options.artifact_root, rep) {
            (Some(root), 0) => Some(store::write_artifacts(root, config, &measurement)?),
            _ => None,
        };
        let analysis = analyze_run(
            config.task,
            config.max_batch_size,
            &measurement.traces,
            &measurement.log,
            &options.steady,
        )?;
        runs.push(analysis.into_result(config.clone(), artifacts));
    }
    Ok(RunResult::mean_of(&runs).expect("at least one repetition"))
}

/// Sorted map of grid dimension names to their value lists.
pub type Grid = BTreeMap<String, Vec<GridValue>>;

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> BenchmarkConfig {
        BenchmarkConfig {
            config_id: String::new(),
            task: Task::Chat,
            model_id: "m".into(),
            device_profile: "high-tdp".into(),
            tp_degree: 1,
            max_batch_size: 8,
            denoising_steps: None,
            resolution: None,
            preemption_mode: PreemptionMode::Recompute,
            power_limit_w: None,
        }
    }

    #[test]
    fn config_id_is_stable_and_field_sensitive() {
        let a = base().with_id();
        assert_eq!(a.config_id, base().with_id().config_id);
        assert_eq!(a.config_id.len(), 16);
        let mut b = base();
        b.max_batch_size = 16;
        assert_ne!(a.config_id, b.with_id().config_id);
        let mut c = base();
        c.power_limit_w = Some(300.0);
        assert_ne!(a.config_id, c.with_id().config_id);
    }

    #[test]
    fn diffusion_config_requires_steps() {
        let mut c = base();
        c.task = Task::T2i;
        assert!(matches!(c.validate(), Err(SweepError::InvalidConfig(_))));
        c.denoising_steps = Some(25);
        c.resolution = Some(512);
        assert!(c.validate().is_ok());
    }
}
