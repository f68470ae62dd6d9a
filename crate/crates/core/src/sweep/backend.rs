use std::sync::atomic::{AtomicBool, Ordering};

use super::{BenchmarkConfig, SimBackendSpec, SweepError};
use crate::meter::PowerTrace;
use crate::simulator::{self, SimConfig, SimWorkload};
use crate::telemetry::ServingLog;

/// What one run hands back for accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub traces: Vec<PowerTrace>,
    pub log: ServingLog,
    pub clock_origin: String,
    pub tdp_w: Option<f64>,
}

/// A serving stack that can run one benchmark configuration at a time.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn check_available(&self) -> Result<(), SweepError>;
    /// Returns the backend to a clean state before a run.
    fn reset(&self, config: &BenchmarkConfig) -> Result<(), SweepError>;
    fn execute(
        &self,
        config: &BenchmarkConfig,
        workload: &SimWorkload,
        seed: u64,
    ) -> Result<Measurement, SweepError>;
    fn lease(&self) -> &BackendLease;
}

/// Single-run exclusivity for a backend.
#[derive(Debug, Default)]
pub struct BackendLease {
    busy: AtomicBool,
}

impl BackendLease {
    pub fn acquire(&self) -> Result<LeaseToken<'_>, SweepError> {
        self.busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map_err(|_| SweepError::BackendBusy)?;
        Ok(LeaseToken { lease: self })
    }

    pub fn is_held(&self) -> bool {
        self.busy.load(Ordering::Acquire)
    }
}

/// Releases the lease on drop.
#[derive(Debug)]
pub struct LeaseToken<'a> {
    lease: &'a BackendLease,
}

impl Drop for LeaseToken<'_> {
    fn drop(&mut self) {
        self.lease.busy.store(false, Ordering::Release);
    }
}

/// Runs configs through the deterministic simulator.
#[derive(Debug, Default)]
pub struct SimulatorBackend {
    pub spec: SimBackendSpec,
    lease: BackendLease,
}

impl SimulatorBackend {
    pub fn new(spec: SimBackendSpec) -> Self {
        Self {
            spec,
            lease: BackendLease::default(),
        }
    }

    pub fn sim_config(&self, config: &BenchmarkConfig, seed: u64) -> Result<SimConfig, SweepError> {
        let profile = self.spec.resolve_profile(&config.device_profile)?;
        Ok(SimConfig {
            max_batch_size: config.max_batch_size,
            tp_degree: config.tp_degree,
            kv_budget_tokens: profile.kv_budget_tokens,
            kv_tokens_per_request_token: self.spec.kv_tokens_per_request_token,
            preemption_mode: config.preemption_mode,
            swap_bandwidth_tokens_per_s: self.spec.swap_bandwidth_tokens_per_s,
            sampling_interval_s: self.spec.sampling_interval_s,
            trace_kind: self.spec.trace_kind,
            seed,
            ..SimConfig::default()
        })
    }
}

impl Backend for SimulatorBackend {
    fn name(&self) -> &str {
        "simulator"
    }

    fn check_available(&self) -> Result<(), SweepError> {
        Ok(())
    }

    fn reset(&self, _config: &BenchmarkConfig) -> Result<(), SweepError> {
        Ok(())
    }

    fn execute(
        &self,
        config: &BenchmarkConfig,
        workload: &SimWorkload,
        seed: u64,
    ) -> Result<Measurement, SweepError> {
        let profile = self.spec.resolve_profile(&config.device_profile)?;
        let sim = self.sim_config(config, seed)?;
        let out = simulator::simulate(&sim, workload, &profile.latency, &profile.power)?;
        Ok(Measurement {
            traces: out.traces,
            log: out.log,
            clock_origin: "run".into(),
            tdp_w: Some(profile.power.max_w),
        })
    }

    fn lease(&self) -> &BackendLease {
        &self.lease
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lease_is_exclusive_and_released_on_drop() {
        let lease = BackendLease::default();
        let token = lease.acquire().unwrap();
        assert!(matches!(lease.acquire(), Err(SweepError::BackendBusy)));
        drop(token);
        assert!(!lease.is_held());
        assert!(lease.acquire().is_ok());
    }
}
