use super::{Artifacts, BenchmarkConfig, RunResult, SweepError};
use crate::accounting::{self, EnergyAccount, SteadyParams};
use crate::meter::{self, PowerTrace};
use crate::task::Task;
use crate::telemetry::{self, LatencySummary, ServingLog};

/// Accounting and latency for one measured run, before it is tied to a config.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAnalysis {
    pub account: EnergyAccount,
    pub latency: LatencySummary,
    pub throughput: f64,
    pub avg_power_w: f64,
    pub total_energy_j: f64,
    pub run_window: (f64, f64),
    pub completed_requests: u64,
    pub preemptions: u64,
    pub tdp_ratio: Option<f64>,
    pub flags: Vec<String>,
}

/// Accounts one run: steady-state for LLM tasks, batch division for diffusion.
///
/// The run window spans first submission to last completion, clipped to the
/// interval every trace covers. The TDP ratio is computed over that window
/// when every trace declares a maximum power.
pub fn analyze_run(
    task: Task,
    max_batch_size: u32,
    traces: &[PowerTrace],
    log: &ServingLog,
    steady: &SteadyParams,
) -> Result<RunAnalysis, SweepError> {
    let latency = telemetry::latency_metrics(&log.records, task.is_llm())?;
    let (span0, span1) = meter::common_span(traces)?;
    let submit = log
        .records
        .iter()
        .map(|r| r.submit_t)
        .fold(f64::INFINITY, f64::min);
    let complete = log
        .records
        .iter()
        .map(|r| r.complete_t)
        .fold(f64::NEG_INFINITY, f64::max);
    let (w0, w1) = (submit.max(span0), complete.min(span1));
    if !(w0 < w1) {
        return Err(SweepError::Meter(meter::MeterError::WindowOutOfRange {
            device: traces[0].device_id.clone(),
            t0: submit,
            t1: complete,
            first: span0,
            last: span1,
        }));
    }
    let total_energy_j = meter::merge_energy(traces, w0, w1)?;
    let mut flags = Vec::new();
    if !log.incomplete.is_empty() {
        flags.push(format!("incomplete:{}", log.incomplete.len()));
    }

    let (account, throughput, avg_power_w) = if task.is_llm() {
        let timeline = telemetry::batch_timeline(&log.iterations)?;
        let window = accounting::steady_window_or_fallback(&timeline, max_batch_size, steady)?;
        if window.fallback {
            flags.push("non-steady".into());
        }
        let account = accounting::llm_account(traces, &log.records, &log.iterations, &window)?;
        let w = account
            .steady_window
            .as_ref()
            .expect("steady-state account has a window");
        let d = w.duration();
        (
            account.clone(),
            w.tokens_steady as f64 / d,
            w.energy_steady / d,
        )
    } else {
        let account = accounting::diffusion_account(traces, &log.batches)?;
        let d = w1 - w0;
        (account, log.records.len() as f64 / d, total_energy_j / d)
    };

    let num_devices = traces.len() as u32;
    let tdp_ratio = match traces
        .iter()
        .map(|t| t.declared_max_power)
        .collect::<Option<Vec<_>>>()
    {
        Some(maxes) if !maxes.is_empty() => {
            let tdp = maxes.iter().sum::<f64>() / maxes.len() as f64;
            Some(accounting::tdp_overestimate_ratio(
                traces,
                w0,
                w1,
                tdp,
                num_devices,
            )?)
        }
        _ => None,
    };

    Ok(RunAnalysis {
        account,
        latency,
        throughput,
        avg_power_w,
        total_energy_j,
        run_window: (w0, w1),
        completed_requests: log.records.len() as u64,
        preemptions: log.preemptions.len() as u64,
        tdp_ratio,
        flags,
    })
}

impl RunAnalysis {
    pub fn into_result(self, config: BenchmarkConfig, artifacts: Option<Artifacts>) -> RunResult {
        RunResult {
            config,
            energy_per_request_j: self.account.energy_per_request,
            energy_per_token_j: self.account.energy_per_token,
            mean_tpot_s: self.latency.mean_tpot,
            mean_ttft_s: self.latency.mean_ttft,
            mean_e2e_s: self.latency.mean_e2e,
            throughput: self.throughput,
            avg_power_w: self.avg_power_w,
            total_energy_j: self.total_energy_j,
            run_duration_s: self.run_window.1 - self.run_window.0,
            completed_requests: self.completed_requests,
            preemptions: self.preemptions,
            tdp_ratio: self.tdp_ratio,
            steady_window: self.account.steady_window,
            flags: self.flags,
            artifacts,
            repetitions: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{self, DeviceProfile, LlmRequest, SimConfig, SimWorkload};

    #[test]
    fn simulated_llm_run_is_consistent() {
        let p = DeviceProfile::high_tdp();
        let reqs: Vec<LlmRequest> = (0..64)
            .map(|i| LlmRequest {
                id: format!("r{i}"),
                input_tokens: 100,
                output_tokens: 50 + i,
            })
            .collect();
        let cfg = SimConfig {
            max_batch_size: 16,
            ..SimConfig::default()
        };
        let out = simulator::simulate(&cfg, &SimWorkload::Llm(reqs), &p.latency, &p.power).unwrap();
        let a = analyze_run(
            Task::Chat,
            16,
            &out.traces,
            &out.log,
            &SteadyParams::default(),
        )
        .unwrap();
        assert!(a.flags.is_empty());
        assert!(a.tdp_ratio.unwrap() >= 1.0);
        assert!((a.total_energy_j - out.total_energy()).abs() / out.total_energy() < 1e-9);
        let w = a.account.steady_window.as_ref().unwrap();
        assert!(a.avg_power_w > p.power.idle_w && a.avg_power_w <= p.power.max_w);
        assert!(w.tokens_steady > 0);
        let r = a.into_result(
            crate::sweep::BenchmarkConfig {
                config_id: String::new(),
                task: Task::Chat,
                model_id: "m".into(),
                device_profile: "high-tdp".into(),
                tp_degree: 1,
                max_batch_size: 16,
                denoising_steps: None,
                resolution: None,
                preemption_mode: crate::task::PreemptionMode::Recompute,
                power_limit_w: None,
            },
            None,
        );
        assert!(r.steady_window.is_some());
        assert!(r.mean_tpot_s.unwrap() > 0.0);
    }
}
