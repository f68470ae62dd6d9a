//! Deterministic discrete-event simulator of an inference server.
//!
//! LLM serving uses iteration-level batching: every loop admits queued
//! requests while the batch and KV budget allow, runs one prefill for the
//! newly admitted requests, preempts the most recently admitted requests if
//! the next decode step would overflow the KV budget, and then runs one decode
//! iteration emitting a token for every running request. Diffusion serving
//! runs fixed batches: encode, `S` denoising steps, then image decode.
//!
//! Every event has a constant per-device power, so the simulator also keeps an
//! exact per-event energy ledger that serves as ground truth for the meter and
//! accounting code. Latency and power coefficients are calibration knobs, not
//! measurements of any real device.

use std::collections::VecDeque;
use std::io::BufRead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Pareto};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meter::{PowerSample, PowerTrace, TraceKind};
use crate::task::PreemptionMode;
use crate::telemetry::{
    BatchGroup, IterationLog, Phase, PreemptionEvent, RequestRecord, ServingLog,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("infeasible config: {0}")]
    InfeasibleConfig(String),
    #[error("simulation exceeded {0} scheduler steps")]
    NonTerminating(u64),
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("invalid distribution parameters: {0}")]
    InvalidDistributionParams(String),
    #[error("line {line}: malformed workload record: {reason}")]
    MalformedRecord { line: usize, reason: String },
}

/// Event durations in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub prefill_base_s: f64,
    pub prefill_per_token_s: f64,
    pub decode_base_s: f64,
    pub decode_per_seq_s: f64,
    /// Added per extra tensor-parallel device to every compute event.
    pub comm_per_extra_device_s: f64,
    pub denoise_base_s: f64,
    pub denoise_per_image_s: f64,
    pub encode_s: f64,
    pub decode_image_s: f64,
}

impl LatencyModel {
    fn tp_scaled(&self, work_s: f64, tp: u32) -> f64 {
        work_s / f64::from(tp) + self.comm_per_extra_device_s * f64::from(tp - 1)
    }

    pub fn prefill(&self, tokens: u64, tp: u32) -> f64 {
        self.tp_scaled(
            self.prefill_base_s + self.prefill_per_token_s * tokens as f64,
            tp,
        )
    }

    pub fn decode(&self, batch: u32, tp: u32) -> f64 {
        self.tp_scaled(
            self.decode_base_s + self.decode_per_seq_s * f64::from(batch),
            tp,
        )
    }

    pub fn denoise_step(&self, batch: u32, pixel_factor: f64, tp: u32) -> f64 {
        self.tp_scaled(
            self.denoise_base_s + self.denoise_per_image_s * f64::from(batch) * pixel_factor,
            tp,
        )
    }

    fn validate(&self) -> Result<(), SimError> {
        let all = [
            self.prefill_base_s,
            self.prefill_per_token_s,
            self.decode_base_s,
            self.decode_per_seq_s,
            self.comm_per_extra_device_s,
            self.denoise_base_s,
            self.denoise_per_image_s,
            self.encode_s,
            self.decode_image_s,
        ];
        if all.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(SimError::InfeasibleConfig(
                "latency coefficients must be finite and >= 0".into(),
            ));
        }
        if self.decode_base_s + self.decode_per_seq_s <= 0.0 {
            return Err(SimError::InfeasibleConfig(
                "decode iterations need positive duration".into(),
            ));
        }
        Ok(())
    }
}

/// Per-device power draw in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub idle_w: f64,
    pub max_w: f64,
    /// Decode power grows as `(batch / decode_ref_batch)^decode_exponent`.
    pub decode_exponent: f64,
    pub decode_ref_batch: f64,
    /// Prefill power as a fraction of `max_w`.
    pub prefill_fraction: f64,
    pub denoise_fraction: f64,
    pub encode_fraction: f64,
    pub decode_image_fraction: f64,
}

impl PowerModel {
    pub fn decode(&self, batch: u32) -> f64 {
        let load = (f64::from(batch) / self.decode_ref_batch).powf(self.decode_exponent);
        (self.idle_w + (self.max_w - self.idle_w) * load).min(self.max_w)
    }

    pub fn prefill(&self) -> f64 {
        self.max_w * self.prefill_fraction
    }

    fn validate(&self) -> Result<(), SimError> {
        let fractions = [
            self.prefill_fraction,
            self.denoise_fraction,
            self.encode_fraction,
            self.decode_image_fraction,
        ];
        if !(self.idle_w >= 0.0 && self.idle_w < self.max_w)
            || !(self.decode_exponent > 0.0)
            || !(self.decode_ref_batch > 0.0)
            || fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0))
        {
            return Err(SimError::InfeasibleConfig(
                "power model needs 0 <= idle < max, exponent > 0, fractions in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// A named bundle of latency and power coefficients for one simulated device
/// class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub latency: LatencyModel,
    pub power: PowerModel,
    pub kv_budget_tokens: u64,
}

impl DeviceProfile {
    pub const NAMES: [&'static str; 2] = ["high-tdp", "mid-tdp"];

    /// 700 W class device. Saturated decode at batch 64 draws about 45% of TDP.
    pub fn high_tdp() -> Self {
        Self {
            name: "high-tdp".into(),
            latency: LatencyModel {
                prefill_base_s: 0.005,
                prefill_per_token_s: 15e-6,
                decode_base_s: 0.020,
                decode_per_seq_s: 0.00025,
                comm_per_extra_device_s: 0.0008,
                denoise_base_s: 0.02,
                denoise_per_image_s: 0.03,
                encode_s: 0.05,
                decode_image_s: 0.10,
            },
            power: PowerModel {
                idle_w: 140.0,
                max_w: 700.0,
                decode_exponent: 0.839,
                decode_ref_batch: 256.0,
                prefill_fraction: 0.85,
                denoise_fraction: 0.95,
                encode_fraction: 0.5,
                decode_image_fraction: 0.6,
            },
            kv_budget_tokens: 2_000_000,
        }
    }

    /// 400 W class device: slower, lower power.
    pub fn mid_tdp() -> Self {
        Self {
            name: "mid-tdp".into(),
            latency: LatencyModel {
                prefill_base_s: 0.008,
                prefill_per_token_s: 30e-6,
                decode_base_s: 0.028,
                decode_per_seq_s: 0.0004,
                comm_per_extra_device_s: 0.0012,
                denoise_base_s: 0.03,
                denoise_per_image_s: 0.06,
                encode_s: 0.08,
                decode_image_s: 0.16,
            },
            power: PowerModel {
                idle_w: 80.0,
                max_w: 400.0,
                decode_exponent: 0.839,
                decode_ref_batch: 256.0,
                prefill_fraction: 0.85,
                denoise_fraction: 0.95,
                encode_fraction: 0.5,
                decode_image_fraction: 0.6,
            },
            kv_budget_tokens: 1_000_000,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "high-tdp" => Some(Self::high_tdp()),
            "mid-tdp" => Some(Self::mid_tdp()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub max_batch_size: u32,
    pub tp_degree: u32,
    pub kv_budget_tokens: u64,
    /// KV slots per request token; models attention variants with different
    /// cache footprints.
    pub kv_tokens_per_request_token: f64,
    pub preemption_mode: PreemptionMode,
    pub swap_bandwidth_tokens_per_s: f64,
    pub sampling_interval_s: f64,
    pub trace_kind: TraceKind,
    pub seed: u64,
    pub max_steps: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            max_batch_size: 8,
            tp_degree: 1,
            kv_budget_tokens: 2_000_000,
            kv_tokens_per_request_token: 1.0,
            preemption_mode: PreemptionMode::Recompute,
            swap_bandwidth_tokens_per_s: 500_000.0,
            sampling_interval_s: 0.01,
            trace_kind: TraceKind::CumulativeEnergy,
            seed: 0,
            max_steps: 50_000_000,
        }
    }
}

impl SimConfig {
    pub fn num_devices(&self) -> u32 {
        self.tp_degree
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InfeasibleConfig(m.into()));
        if self.max_batch_size == 0 {
            return bad("max_batch_size must be >= 1");
        }
        if self.tp_degree == 0 {
            return bad("tp_degree must be >= 1");
        }
        if !(self.kv_tokens_per_request_token > 0.0) {
            return bad("kv_tokens_per_request_token must be > 0");
        }
        if !(self.swap_bandwidth_tokens_per_s > 0.0) {
            return bad("swap bandwidth must be > 0");
        }
        if !(self.sampling_interval_s > 0.0) {
            return bad("sampling interval must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub id: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffusionRequest {
    pub id: String,
    pub steps: u32,
    /// Side length in pixels of a square output.
    pub resolution: u32,
}

/// Requests all submitted at t = 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "requests", rename_all = "lowercase")]
pub enum SimWorkload {
    Llm(Vec<LlmRequest>),
    Diffusion(Vec<DiffusionRequest>),
}

impl SimWorkload {
    pub fn len(&self) -> usize {
        match self {
            SimWorkload::Llm(r) => r.len(),
            SimWorkload::Diffusion(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LedgerPhase {
    Prefill,
    Decode,
    SwapOut,
    SwapIn,
    Encode,
    DenoiseStep,
    DecodeImage,
}

/// Exact energy of one simulated event, summed over all devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub t_start: f64,
    pub t_end: f64,
    pub energy_j: f64,
    pub phase: LedgerPhase,
    #[serde(default)]
    pub tokens: u64,
}

impl LedgerEntry {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.t_start + self.t_end)
    }
}

pub fn write_ledger<W: std::io::Write>(mut out: W, ledger: &[LedgerEntry]) -> std::io::Result<()> {
    for e in ledger {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub traces: Vec<PowerTrace>,
    pub log: ServingLog,
    pub ledger: Vec<LedgerEntry>,
}

impl SimOutput {
    pub fn total_energy(&self) -> f64 {
        self.ledger.iter().map(|e| e.energy_j).sum()
    }

    pub fn makespan(&self) -> f64 {
        self.ledger.last().map(|e| e.t_end).unwrap_or(0.0)
    }

    pub fn preemption_count(&self) -> usize {
        self.log.preemptions.len()
    }
}

/// Constant-power interval on every device.
#[derive(Debug, Clone, Copy)]
struct Segment {
    t0: f64,
    t1: f64,
    watts: f64,
}

/// Accumulates events into ledger, log iterations, and power segments.
struct Recorder {
    tp: u32,
    t: f64,
    segments: Vec<Segment>,
    ledger: Vec<LedgerEntry>,
    iterations: Vec<IterationLog>,
}

impl Recorder {
    fn new(tp: u32) -> Self {
        Self {
            tp,
            t: 0.0,
            segments: Vec::new(),
            ledger: Vec::new(),
            iterations: Vec::new(),
        }
    }

    /// Advances the clock by `duration` at `watts` per device. Returns the
    /// event's `(start, end)`.
    fn event(
        &mut self,
        duration: f64,
        watts: f64,
        phase: LedgerPhase,
        tokens: u64,
        iteration: Option<(Phase, u32)>,
    ) -> (f64, f64) {
        let t0 = self.t;
        let t1 = t0 + duration;
        if t1 <= t0 {
            return (t0, t0);
        }
        self.segments.push(Segment { t0, t1, watts });
        self.ledger.push(LedgerEntry {
            t_start: t0,
            t_end: t1,
            energy_j: watts * f64::from(self.tp) * (t1 - t0),
            phase,
            tokens,
        });
        if let Some((phase, batch_size)) = iteration {
            self.iterations.push(IterationLog {
                t_start: t0,
                t_end: t1,
                batch_size,
                tokens_emitted: tokens,
                phase,
            });
        }
        self.t = t1;
        (t0, t1)
    }

    fn traces(&self, config: &SimConfig, max_w: f64) -> Vec<PowerTrace> {
        let samples = sample_segments(
            &self.segments,
            config.sampling_interval_s,
            config.trace_kind,
        );
        (0..self.tp)
            .map(|d| PowerTrace {
                device_id: format!("gpu{d}"),
                kind: config.trace_kind,
                samples: samples.clone(),
                declared_max_power: Some(max_w),
            })
            .collect()
    }
}

/// Samples contiguous constant-power segments on a fixed grid plus every
/// segment boundary.
fn sample_segments(segments: &[Segment], interval: f64, kind: TraceKind) -> Vec<PowerSample> {
    let mut out: Vec<PowerSample> = Vec::new();
    let Some(first) = segments.first() else {
        return out;
    };
    let mut cum = 0.0;
    let value = |cum: f64, watts: f64| match kind {
        TraceKind::CumulativeEnergy => cum,
        TraceKind::InstantaneousPower => watts,
    };
    out.push(PowerSample {
        t: first.t0,
        value: value(0.0, first.watts),
    });
    for seg in segments {
        if seg.t0 > out.last().map_or(f64::NEG_INFINITY, |s| s.t) {
            out.push(PowerSample {
                t: seg.t0,
                value: value(cum, seg.watts),
            });
        } else if kind == TraceKind::InstantaneousPower {
            // Boundary sample carries the new level (right-continuous).
            if let Some(last) = out.last_mut() {
                last.value = seg.watts;
            }
        }
        let mut k = (seg.t0 / interval).floor() as i64 + 1;
        loop {
            let t = k as f64 * interval;
            if t >= seg.t1 {
                break;
            }
            if t > seg.t0 {
                out.push(PowerSample {
                    t,
                    value: value(cum + seg.watts * (t - seg.t0), seg.watts),
                });
            }
            k += 1;
        }
        cum += seg.watts * (seg.t1 - seg.t0);
        out.push(PowerSample {
            t: seg.t1,
            value: value(cum, seg.watts),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Residency {
    Fresh,
    Dropped,
    Swapped,
}

struct ReqState {
    generated: u64,
    residency: Residency,
    first_token_t: Option<f64>,
    complete_t: Option<f64>,
    preemptions: u32,
}

pub fn simulate_llm(
    config: &SimConfig,
    requests: &[LlmRequest],
    latency: &LatencyModel,
    power: &PowerModel,
) -> Result<SimOutput, SimError> {
    config.validate()?;
    latency.validate()?;
    power.validate()?;
    let factor = config.kv_tokens_per_request_token;
    let budget = config.kv_budget_tokens as f64;
    for r in requests {
        if r.input_tokens == 0 || r.output_tokens == 0 {
            return Err(SimError::InvalidWorkload(format!(
                "request {} needs at least one input and output token",
                r.id
            )));
        }
        let peak = factor * (r.input_tokens + r.output_tokens) as f64;
        if peak > budget {
            return Err(SimError::InfeasibleConfig(format!(
                "request {} needs {peak} KV tokens, budget is {budget}",
                r.id
            )));
        }
    }

    let tp = config.tp_degree;
    let mut rec = Recorder::new(tp);
    let mut state: Vec<ReqState> = requests
        .iter()
        .map(|_| ReqState {
            generated: 0,
            residency: Residency::Fresh,
            first_token_t: None,
            complete_t: None,
            preemptions: 0,
        })
        .collect();
    let footprint = |i: usize, st: &[ReqState]| -> f64 {
        factor * (requests[i].input_tokens + st[i].generated) as f64
    };
    let mut waiting: VecDeque<usize> = (0..requests.len()).collect();
    let mut running: Vec<usize> = Vec::new();
    let mut used = 0.0;
    let mut preemptions = Vec::new();
    let mut steps = 0u64;

    while !(waiting.is_empty() && running.is_empty()) {
        steps += 1;
        if steps > config.max_steps {
            return Err(SimError::NonTerminating(config.max_steps));
        }

        // FIFO admission; leave room for every resident request's next token.
        let mut admitted = Vec::new();
        while running.len() < config.max_batch_size as usize {
            let Some(&next) = waiting.front() else { break };
            let need = footprint(next, &state);
            if used + need + factor * (running.len() + 1) as f64 > budget {
                break;
            }
            waiting.pop_front();
            used += need;
            running.push(next);
            admitted.push(next);
        }

        if !admitted.is_empty() {
            let swap_tokens: f64 = admitted
                .iter()
                .filter(|&&i| state[i].residency == Residency::Swapped)
                .map(|&i| footprint(i, &state))
                .sum();
            if swap_tokens > 0.0 {
                rec.event(
                    swap_tokens / config.swap_bandwidth_tokens_per_s,
                    power.idle_w,
                    LedgerPhase::SwapIn,
                    0,
                    None,
                );
            }
            let prefill_tokens: u64 = admitted
                .iter()
                .filter(|&&i| state[i].residency != Residency::Swapped)
                .map(|&i| requests[i].input_tokens + state[i].generated)
                .sum();
            if prefill_tokens > 0 {
                rec.event(
                    latency.prefill(prefill_tokens, tp),
                    power.prefill(),
                    LedgerPhase::Prefill,
                    0,
                    Some((Phase::Prefill, running.len() as u32)),
                );
            }
        }

        // Preempt the most recently admitted requests until the next decode
        // step fits.
        while used + factor * running.len() as f64 > budget && running.len() > 1 {
            let victim = running.pop().expect("running is non-empty");
            let fp = footprint(victim, &state);
            used -= fp;
            state[victim].preemptions += 1;
            preemptions.push(PreemptionEvent {
                id: requests[victim].id.clone(),
                t: rec.t,
                mode: config.preemption_mode,
            });
            match config.preemption_mode {
                PreemptionMode::Swap => {
                    rec.event(
                        fp / config.swap_bandwidth_tokens_per_s,
                        power.idle_w,
                        LedgerPhase::SwapOut,
                        0,
                        None,
                    );
                    state[victim].residency = Residency::Swapped;
                }
                PreemptionMode::Recompute => state[victim].residency = Residency::Dropped,
            }
            waiting.push_front(victim);
        }

        let batch = running.len() as u32;
        let (_, t_end) = rec.event(
            latency.decode(batch, tp),
            power.decode(batch),
            LedgerPhase::Decode,
            u64::from(batch),
            Some((Phase::Decode, batch)),
        );
        for &i in &running {
            state[i].generated += 1;
            used += factor;
            if state[i].first_token_t.is_none() {
                state[i].first_token_t = Some(t_end);
            }
        }
        running.retain(|&i| {
            if state[i].generated >= requests[i].output_tokens {
                state[i].complete_t = Some(t_end);
                used -= factor * (requests[i].input_tokens + state[i].generated) as f64;
                false
            } else {
                true
            }
        });
        if running.is_empty() {
            used = 0.0;
        }
    }

    let records = requests
        .iter()
        .zip(&state)
        .map(|(r, s)| RequestRecord {
            request_id: r.id.clone(),
            submit_t: 0.0,
            first_token_t: s.first_token_t,
            complete_t: s.complete_t.unwrap_or(rec.t),
            input_tokens: r.input_tokens,
            output_tokens: r.output_tokens,
            preemptions: s.preemptions,
            batch_id: None,
        })
        .collect();
    let traces = rec.traces(config, power.max_w);
    Ok(SimOutput {
        traces,
        log: ServingLog {
            records,
            iterations: rec.iterations,
            batches: Vec::new(),
            preemptions,
            incomplete: Vec::new(),
        },
        ledger: rec.ledger,
    })
}

pub fn simulate_diffusion(
    config: &SimConfig,
    requests: &[DiffusionRequest],
    latency: &LatencyModel,
    power: &PowerModel,
) -> Result<SimOutput, SimError> {
    config.validate()?;
    latency.validate()?;
    power.validate()?;
    if let Some(r) = requests.iter().find(|r| r.steps == 0 || r.resolution == 0) {
        return Err(SimError::InvalidWorkload(format!(
            "request {} needs steps >= 1 and resolution >= 1",
            r.id
        )));
    }
    let tp = config.tp_degree;
    let mut rec = Recorder::new(tp);
    let mut records = Vec::with_capacity(requests.len());
    let mut batches = Vec::new();

    for (b_idx, chunk) in requests.chunks(config.max_batch_size as usize).enumerate() {
        let batch_id = format!("b{b_idx}");
        let size = chunk.len() as u32;
        let steps = chunk.iter().map(|r| r.steps).max().unwrap_or(1);
        let resolution = chunk.iter().map(|r| r.resolution).max().unwrap_or(512);
        let pixel_factor = (f64::from(resolution) / 512.0).powi(2);
        let start = rec.t;

        rec.event(
            latency.tp_scaled(latency.encode_s, tp),
            power.max_w * power.encode_fraction,
            LedgerPhase::Encode,
            0,
            Some((Phase::Encode, size)),
        );
        let step = latency.denoise_step(size, pixel_factor, tp);
        for _ in 0..steps {
            rec.event(
                step,
                power.max_w * power.denoise_fraction,
                LedgerPhase::DenoiseStep,
                0,
                Some((Phase::DenoiseStep, size)),
            );
        }
        rec.event(
            latency.tp_scaled(latency.decode_image_s, tp),
            power.max_w * power.decode_image_fraction,
            LedgerPhase::DecodeImage,
            0,
            Some((Phase::DecodeImage, size)),
        );
        let end = rec.t;
        for r in chunk {
            records.push(RequestRecord {
                request_id: r.id.clone(),
                submit_t: 0.0,
                first_token_t: None,
                complete_t: end,
                input_tokens: 0,
                output_tokens: 0,
                preemptions: 0,
                batch_id: Some(batch_id.clone()),
            });
        }
        batches.push(BatchGroup {
            batch_id,
            t_start: start,
            t_end: end,
            size,
            request_ids: chunk.iter().map(|r| r.id.clone()).collect(),
        });
    }

    let traces = rec.traces(config, power.max_w);
    Ok(SimOutput {
        traces,
        log: ServingLog {
            records,
            iterations: rec.iterations,
            batches,
            preemptions: Vec::new(),
            incomplete: Vec::new(),
        },
        ledger: rec.ledger,
    })
}

/// Dispatches on workload kind.
pub fn simulate(
    config: &SimConfig,
    workload: &SimWorkload,
    latency: &LatencyModel,
    power: &PowerModel,
) -> Result<SimOutput, SimError> {
    match workload {
        SimWorkload::Llm(r) => simulate_llm(config, r, latency, power),
        SimWorkload::Diffusion(r) => simulate_diffusion(config, r, latency, power),
    }
}

/// Length distributions for a synthetic LLM request set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_requests: usize,
    pub input_mean: f64,
    #[serde(default = "default_alpha")]
    pub input_pareto_alpha: f64,
    pub output_mean: f64,
}

fn default_alpha() -> f64 {
    2.5
}

impl SynthSpec {
    /// Pareto scale giving the requested mean: `x_m = mean * (alpha - 1) / alpha`.
    pub fn pareto_scale(&self) -> f64 {
        self.input_mean * (self.input_pareto_alpha - 1.0) / self.input_pareto_alpha
    }
}

/// Pareto-distributed input lengths and exponentially distributed output
/// lengths, each rounded up to at least one token.
pub fn synth_workload(spec: &SynthSpec, seed: u64) -> Result<Vec<LlmRequest>, SimError> {
    if !(spec.input_pareto_alpha > 1.0) {
        return Err(SimError::InvalidDistributionParams(format!(
            "Pareto alpha must exceed 1 for a finite mean, got {}",
            spec.input_pareto_alpha
        )));
    }
    if !(spec.input_mean >= 1.0 && spec.output_mean >= 1.0) {
        return Err(SimError::InvalidDistributionParams(
            "input and output means must be >= 1".into(),
        ));
    }
    let input = Pareto::new(spec.pareto_scale(), spec.input_pareto_alpha)
        .map_err(|e| SimError::InvalidDistributionParams(e.to_string()))?;
    let output = Exp::new(1.0 / spec.output_mean)
        .map_err(|e| SimError::InvalidDistributionParams(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let to_tokens = |x: f64| (x.ceil() as u64).max(1);
    Ok((0..spec.n_requests)
        .map(|i| {
            let input_tokens = to_tokens(input.sample(&mut rng));
            let output_tokens = to_tokens(output.sample(&mut rng));
            LlmRequest {
                id: format!("r{i}"),
                input_tokens,
                output_tokens,
            }
        })
        .collect())
}

/// Reads a request dataset: one JSON object per line, either
/// `{"id","input_tokens","output_tokens"}` or `{"id","steps","resolution"}`.
pub fn parse_workload<R: BufRead>(reader: R) -> Result<SimWorkload, SimError> {
    let mut llm = Vec::new();
    let mut diffusion = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let malformed = |reason: String| SimError::MalformedRecord {
            line: idx + 1,
            reason,
        };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if value.get("steps").is_some() {
            diffusion.push(serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?);
        } else {
            llm.push(serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?);
        }
    }
    match (llm.is_empty(), diffusion.is_empty()) {
        (_, true) => Ok(SimWorkload::Llm(llm)),
        (true, false) => Ok(SimWorkload::Diffusion(diffusion)),
        (false, false) => Err(SimError::InvalidWorkload(
            "dataset mixes LLM and diffusion requests".into(),
        )),
    }
}

pub fn write_workload<W: std::io::Write>(
    mut out: W,
    workload: &SimWorkload,
) -> std::io::Result<()> {
    match workload {
        SimWorkload::Llm(reqs) => {
            for r in reqs {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
        }
        SimWorkload::Diffusion(reqs) => {
            for r in reqs {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}
