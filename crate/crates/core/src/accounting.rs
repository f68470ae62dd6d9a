//! Per-request energy accounting.
//!
//! LLM serving batches at iteration granularity, so per-request energy comes
//! from the steady state: the longest stretch where the running batch sits at
//! the configured maximum. Energy per token over that window, times the mean
//! output length, gives energy per request. Diffusion batches run as a unit
//! and their energy divides evenly among the batch members.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meter::{self, MeterError, PowerTrace};
use crate::telemetry::{BatchGroup, BatchTimeline, IterationLog, Phase, RequestRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccountingError {
    #[error("no steady state: batch size peaked at {peak} of max {max_batch_size}")]
    SteadyStateNotFound { peak: u32, max_batch_size: u32 },
    #[error("batch timeline is empty")]
    EmptyTimeline,
    #[error("no decode tokens emitted inside the steady window [{t0}, {t1}]")]
    ZeroSteadyTokens { t0: f64, t1: f64 },
    #[error("window [{t0}, {t1}] outside serving-log span [{first}, {last}]")]
    WindowOutOfRange {
        t0: f64,
        t1: f64,
        first: f64,
        last: f64,
    },
    #[error("batch {batch_id} has no requests")]
    EmptyBatch { batch_id: String },
    #[error("measured energy is zero; ratio undefined")]
    ZeroMeasuredEnergy,
    #[error("no completed requests to account")]
    NoCompletedRequests,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Meter(#[from] MeterError),
}

/// Knobs for steady-state detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyParams {
    /// Saturated intervals separated by less than this merge. `None` means 1%
    /// of the run span.
    pub gap_tolerance_s: Option<f64>,
    /// The detected window must cover at least this fraction of the run span.
    pub min_fraction: f64,
    /// Fall back to the central half of the run when no steady state exists.
    pub allow_unsaturated: bool,
}

impl Default for SteadyParams {
    fn default() -> Self {
        Self {
            gap_tolerance_s: None,
            min_fraction: 0.10,
            allow_unsaturated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyWindow {
    pub t0: f64,
    pub t1: f64,
    pub saturation_fraction: f64,
    pub tokens_steady: u64,
    pub energy_steady: f64,
    /// Set when the window is the central-half fallback, not a saturated span.
    #[serde(default)]
    pub fallback: bool,
}

impl SteadyWindow {
    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccountingMethod {
    SteadyState,
    BatchDivision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyAccount {
    pub method: AccountingMethod,
    pub energy_per_request: f64,
    pub energy_per_token: Option<f64>,
    pub per_request_energy: BTreeMap<String, f64>,
    pub steady_window: Option<SteadyWindow>,
    /// Diffusion only: `(batch_id, batch energy, batch size)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub batches: Vec<(String, f64, u32)>,
}

/// Finds the longest span where batch size equals `max_batch_size`, merging
/// saturated spans separated by short dips. Only `t0`, `t1` and
/// `saturation_fraction` are filled in.
pub fn detect_steady_state(
    timeline: &BatchTimeline,
    max_batch_size: u32,
    params: &SteadyParams,
) -> Result<SteadyWindow, AccountingError> {
    if max_batch_size == 0 {
        return Err(AccountingError::InvalidParams(
            "max_batch_size must be >= 1".into(),
        ));
    }
    if timeline.is_empty() || timeline.span_len() <= 0.0 {
        return Err(AccountingError::EmptyTimeline);
    }
    let span = timeline.span_len();
    let tolerance = params.gap_tolerance_s.unwrap_or(0.01 * span);
    let not_found = || AccountingError::SteadyStateNotFound {
        peak: timeline.peak(),
        max_batch_size,
    };

    // (start, end, saturated seconds)
    let mut merged: Vec<(f64, f64, f64)> = Vec::new();
    for (a, b, v) in timeline.segments() {
        if v < max_batch_size {
            continue;
        }
        match merged.last_mut() {
            Some(last) if a - last.1 <= 0.0 || a - last.1 < tolerance => {
                last.1 = b;
                last.2 += b - a;
            }
            _ => merged.push((a, b, b - a)),
        }
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for w in merged {
        if best.is_none_or(|b| w.1 - w.0 > b.1 - b.0) {
            best = Some(w);
        }
    }
    let (t0, t1, saturated) = best.ok_or_else(not_found)?;
    if t1 - t0 < params.min_fraction * span {
        return Err(not_found());
    }
    Ok(SteadyWindow {
        t0,
        t1,
        saturation_fraction: (saturated / (t1 - t0)).min(1.0),
        tokens_steady: 0,
        energy_steady: 0.0,
        fallback: false,
    })
}

/// Steady-state detection honoring `allow_unsaturated`: on failure, falls back
/// to the central 50% of the run and flags the window.
pub fn steady_window_or_fallback(
    timeline: &BatchTimeline,
    max_batch_size: u32,
    params: &SteadyParams,
) -> Result<SteadyWindow, AccountingError> {
    match detect_steady_state(timeline, max_batch_size, params) {
        Err(AccountingError::SteadyStateNotFound { peak, .. }) if params.allow_unsaturated => {
            log::warn!(
                "no steady state (peak batch {peak} of {max_batch_size}); \
                 falling back to the central half of the run, results are NOT steady-state"
            );
            let (a, b) = timeline.run_span;
            let len = b - a;
            let (t0, t1) = (a + 0.25 * len, a + 0.75 * len);
            let saturated: f64 = timeline
                .segments()
                .into_iter()
                .filter(|&(_, _, v)| v >= max_batch_size)
                .map(|(s, e, _)| (e.min(t1) - s.max(t0)).max(0.0))
                .sum();
            Ok(SteadyWindow {
                t0,
                t1,
                saturation_fraction: saturated / (t1 - t0),
                tokens_steady: 0,
                energy_steady: 0.0,
                fallback: true,
            })
        }
        other => other,
    }
}

/// Decode tokens from iterations whose midpoint falls inside `[t0, t1]`.
pub fn steady_tokens(iterations: &[IterationLog], t0: f64, t1: f64) -> u64 {
    iterations
        .iter()
        .filter(|it| it.phase == Phase::Decode)
        .filter(|it| {
            let m = it.midpoint();
            m >= t0 && m <= t1
        })
        .map(|it| it.tokens_emitted)
        .sum()
}

/// Steady-state LLM accounting: energy per steady token times output tokens.
pub fn llm_account(
    traces: &[PowerTrace],
    records: &[RequestRecord],
    iterations: &[IterationLog],
    window: &SteadyWindow,
) -> Result<EnergyAccount, AccountingError> {
    if records.is_empty() {
        return Err(AccountingError::NoCompletedRequests);
    }
    let (t0, t1) = (window.t0, window.t1);
    if !(t0 < t1) {
        return Err(AccountingError::InvalidParams(format!(
            "steady window [{t0}, {t1}] is empty"
        )));
    }
    let first = iterations
        .iter()
        .map(|i| i.t_start)
        .fold(f64::INFINITY, f64::min);
    let last = iterations
        .iter()
        .map(|i| i.t_end)
        .fold(f64::NEG_INFINITY, f64::max);
    if t0 < first || t1 > last {
        return Err(AccountingError::WindowOutOfRange {
            t0,
            t1,
            first,
            last,
        });
    }
    let energy_steady = meter::merge_energy(traces, t0, t1)?;
    let tokens_steady = steady_tokens(iterations, t0, t1);
    if tokens_steady == 0 {
        return Err(AccountingError::ZeroSteadyTokens { t0, t1 });
    }
    let per_token = energy_steady / tokens_steady as f64;
    let total_out: u64 = records.iter().map(|r| r.output_tokens).sum();
    let mean_out = total_out as f64 / records.len() as f64;
    let per_request_energy = records
        .iter()
        .map(|r| (r.request_id.clone(), per_token * r.output_tokens as f64))
        .collect();
    Ok(EnergyAccount {
        method: AccountingMethod::SteadyState,
        energy_per_request: per_token * mean_out,
        energy_per_token: Some(per_token),
        per_request_energy,
        steady_window: Some(SteadyWindow {
            tokens_steady,
            energy_steady,
            ..window.clone()
        }),
        batches: Vec::new(),
    })
}

/// Batch-division accounting for diffusion: each member of a batch of size B
/// is charged one B-th of the batch energy.
pub fn diffusion_account(
    traces: &[PowerTrace],
    batches: &[BatchGroup],
) -> Result<EnergyAccount, AccountingError> {
    if batches.is_empty() {
        return Err(AccountingError::NoCompletedRequests);
    }
    let mut per_request_energy = BTreeMap::new();
    let mut per_batch = Vec::with_capacity(batches.len());
    let mut total_energy = 0.0;
    let mut total_size = 0u64;
    for b in batches {
        if b.size == 0 {
            return Err(AccountingError::EmptyBatch {
                batch_id: b.batch_id.clone(),
            });
        }
        let energy = meter::merge_energy(traces, b.t_start, b.t_end)?;
        let share = energy / f64::from(b.size);
        for id in &b.request_ids {
            per_request_energy.insert(id.clone(), share);
        }
        per_batch.push((b.batch_id.clone(), energy, b.size));
        total_energy += energy;
        total_size += u64::from(b.size);
    }
    Ok(EnergyAccount {
        method: AccountingMethod::BatchDivision,
        energy_per_request: total_energy / total_size as f64,
        energy_per_token: None,
        per_request_energy,
        steady_window: None,
        batches: per_batch,
    })
}

/// How much a TDP-times-duration estimate overstates measured energy.
pub fn tdp_overestimate_ratio(
    traces: &[PowerTrace],
    t0: f64,
    t1: f64,
    tdp_w: f64,
    num_devices: u32,
) -> Result<f64, AccountingError> {
    if !(tdp_w > 0.0) || num_devices == 0 {
        return Err(AccountingError::InvalidParams(
            "tdp_w and num_devices must be positive".into(),
        ));
    }
    let measured = meter::merge_energy(traces, t0, t1)?;
    if measured <= 0.0 {
        return Err(AccountingError::ZeroMeasuredEnergy);
    }
    Ok(tdp_w * f64::from(num_devices) * (t1 - t0) / measured)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meter::{PowerSample, TraceKind};
    use crate::telemetry::batch_timeline;

    fn flat(watts: f64, t_end: f64) -> PowerTrace {
        PowerTrace::new(
            "gpu0",
            TraceKind::InstantaneousPower,
            vec![
                PowerSample {
                    t: 0.0,
                    value: watts,
                },
                PowerSample {
                    t: t_end,
                    value: watts,
                },
            ],
        )
    }

    fn timeline(steps: &[(f64, f64, u32)]) -> BatchTimeline {
        let its: Vec<IterationLog> = steps
            .iter()
            .map(|&(a, b, v)| IterationLog {
                t_start: a,
                t_end: b,
                batch_size: v,
                tokens_emitted: u64::from(v),
                phase: Phase::Decode,
            })
            .collect();
        batch_timeline(&its).unwrap()
    }

    fn record(id: &str, out: u64) -> RequestRecord {
        RequestRecord {
            request_id: id.into(),
            submit_t: 0.0,
            first_token_t: Some(0.1),
            complete_t: 1.0,
            input_tokens: 1,
            output_tokens: out,
            preemptions: 0,
            batch_id: None,
        }
    }

    #[test]
    fn detects_ramp_hold_drain() {
        let tl = timeline(&[
            (0.0, 1.0, 1),
            (1.0, 2.0, 4),
            (2.0, 50.0, 8),
            (50.0, 52.0, 3),
        ]);
        let w = detect_steady_state(&tl, 8, &SteadyParams::default()).unwrap();
        assert_eq!((w.t0, w.t1), (2.0, 50.0));
        assert_eq!(w.saturation_fraction, 1.0);
    }

    #[test]
    fn merges_short_dips() {
        let tl = timeline(&[
            (0.0, 2.0, 2),
            (2.0, 30.0, 8),
            (30.0, 30.5, 7),
            (30.5, 50.0, 8),
        ]);
        let params = SteadyParams {
            gap_tolerance_s: Some(1.0),
            ..Default::default()
        };
        let w = detect_steady_state(&tl, 8, &params).unwrap();
        assert_eq!((w.t0, w.t1), (2.0, 50.0));
        assert!((w.saturation_fraction - 47.5 / 48.0).abs() < 1e-12);

        let strict = SteadyParams {
            gap_tolerance_s: Some(0.25),
            ..Default::default()
        };
        let w = detect_steady_state(&tl, 8, &strict).unwrap();
        assert_eq!((w.t0, w.t1), (2.0, 30.0));
    }

    #[test]
    fn reports_peak_when_unsaturated() {
        let tl = timeline(&[(0.0, 10.0, 3), (10.0, 20.0, 6), (20.0, 30.0, 2)]);
        let err = detect_steady_state(&tl, 8, &SteadyParams::default()).unwrap_err();
        assert_eq!(
            err,
            AccountingError::SteadyStateNotFound {
                peak: 6,
                max_batch_size: 8
            }
        );
        let lenient = SteadyParams {
            allow_unsaturated: true,
            ..Default::default()
        };
        let w = steady_window_or_fallback(&tl, 8, &lenient).unwrap();
        assert!(w.fallback);
        assert_eq!((w.t0, w.t1), (7.5, 22.5));
    }

    #[test]
    fn too_short_window_is_rejected() {
        let tl = timeline(&[(0.0, 99.0, 2), (99.0, 100.0, 8)]);
        assert!(matches!(
            detect_steady_state(&tl, 8, &SteadyParams::default()),
            Err(AccountingError::SteadyStateNotFound { peak: 8, .. })
        ));
    }

    #[test]
    fn llm_account_substitution() {
        // 480 W for 10 s = 4800 J; 10 decode iterations of 160 tokens.
        let trace = flat(480.0, 10.0);
        let its: Vec<IterationLog> = (0..10)
            .map(|i| IterationLog {
                t_start: i as f64,
                t_end: i as f64 + 1.0,
                batch_size: 160,
                tokens_emitted: 160,
                phase: Phase::Decode,
            })
            .collect();
        let records = vec![record("a", 100), record("b", 300)];
        let window = SteadyWindow {
            t0: 0.0,
            t1: 10.0,
            saturation_fraction: 1.0,
            tokens_steady: 0,
            energy_steady: 0.0,
            fallback: false,
        };
        let acc = llm_account(&[trace], &records, &its, &window).unwrap();
        assert!((acc.energy_per_token.unwrap() - 3.0).abs() < 1e-12);
        assert!((acc.energy_per_request - 600.0).abs() < 1e-9);
        assert!((acc.per_request_energy["b"] - 900.0).abs() < 1e-9);
        let sw = acc.steady_window.unwrap();
        assert_eq!(sw.tokens_steady, 1600);
        assert!((sw.energy_steady - 4800.0).abs() < 1e-9);
    }

    #[test]
    fn single_request_conserves_energy() {
        let trace = flat(50.0, 10.0);
        let its = vec![IterationLog {
            t_start: 0.0,
            t_end: 10.0,
            batch_size: 1,
            tokens_emitted: 100,
            phase: Phase::Decode,
        }];
        let window = SteadyWindow {
            t0: 0.0,
            t1: 10.0,
            saturation_fraction: 1.0,
            tokens_steady: 0,
            energy_steady: 0.0,
            fallback: false,
        };
        let acc = llm_account(&[trace], &[record("only", 100)], &its, &window).unwrap();
        assert!((acc.per_request_energy["only"] - 500.0).abs() < 1e-9);
    }

    #[test]
    fn llm_account_errors() {
        let trace = flat(50.0, 10.0);
        let prefill_only = vec![IterationLog {
            t_start: 0.0,
            t_end: 10.0,
            batch_size: 1,
            tokens_emitted: 0,
            phase: Phase::Prefill,
        }];
        let window = SteadyWindow {
            t0: 1.0,
            t1: 9.0,
            saturation_fraction: 1.0,
            tokens_steady: 0,
            energy_steady: 0.0,
            fallback: false,
        };
        assert!(matches!(
            llm_account(
                std::slice::from_ref(&trace),
                &[record("a", 1)],
                &prefill_only,
                &window
            ),
            Err(AccountingError::ZeroSteadyTokens { .. })
        ));
        let late = SteadyWindow { t1: 11.0, ..window };
        assert!(matches!(
            llm_account(&[trace], &[record("a", 1)], &prefill_only, &late),
            Err(AccountingError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn diffusion_examples() {
        let group = |id: &str, a: f64, b: f64, size: u32| BatchGroup {
            batch_id: id.into(),
            t_start: a,
            t_end: b,
            size,
            request_ids: (0..size).map(|i| format!("{id}-{i}")).collect(),
        };
        let acc = diffusion_account(&[flat(200.0, 10.0)], &[group("b0", 0.0, 10.0, 4)]).unwrap();
        assert!((acc.energy_per_request - 500.0).abs() < 1e-9);
        assert_eq!(acc.per_request_energy.len(), 4);

        let acc = diffusion_account(&[flat(200.0, 10.0)], &[group("b0", 0.0, 10.0, 1)]).unwrap();
        assert!((acc.energy_per_request - 2000.0).abs() < 1e-9);

        // 1200 J with B=4, then 800 J with B=2.
        let trace = flat(100.0, 20.0);
        let acc = diffusion_account(
            &[trace],
            &[group("b0", 0.0, 12.0, 4), group("b1", 12.0, 20.0, 2)],
        )
        .unwrap();
        assert!((acc.energy_per_request - 2000.0 / 6.0).abs() < 1e-9);

        assert!(matches!(
            diffusion_account(&[flat(1.0, 1.0)], &[group("e", 0.0, 1.0, 0)]),
            Err(AccountingError::EmptyBatch { .. })
        ));
    }

    #[test]
    fn tdp_ratio_examples() {
        let at_tdp = flat(700.0, 10.0);
        assert!(
            (tdp_overestimate_ratio(&[at_tdp], 0.0, 10.0, 700.0, 1).unwrap() - 1.0).abs() < 1e-12
        );
        let quarter = flat(175.0, 10.0);
        assert!(
            (tdp_overestimate_ratio(&[quarter], 2.0, 6.0, 700.0, 1).unwrap() - 4.0).abs() < 1e-12
        );
        assert_eq!(
            tdp_overestimate_ratio(&[flat(0.0, 1.0)], 0.0, 1.0, 700.0, 1),
            Err(AccountingError::ZeroMeasuredEnergy)
        );
    }
}
