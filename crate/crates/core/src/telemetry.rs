//! Serving-log ingestion: request lifecycles, per-iteration batch records,
//! the batch-size timeline, and latency metrics.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::PreemptionMode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TelemetryError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: {event} for request {id} which was never submitted")]
    OrphanEvent {
        line: usize,
        id: String,
        event: &'static str,
    },
    #[error("line {line}: duplicate {event} for request {id}")]
    DuplicateLifecycle {
        line: usize,
        id: String,
        event: &'static str,
    },
    #[error("iterations overlap: one ends at {prev_end}, the next starts at {next_start}")]
    OverlappingIterations { prev_end: f64, next_start: f64 },
    #[error("no completed requests")]
    EmptyInput,
    #[error("request {id} has no first-token timestamp")]
    MissingFirstToken { id: String },
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request_id: String,
    pub submit_t: f64,
    pub first_token_t: Option<f64>,
    pub complete_t: f64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub preemptions: u32,
    pub batch_id: Option<String>,
}

impl RequestRecord {
    pub fn e2e(&self) -> f64 {
        self.complete_t - self.submit_t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Prefill,
    Decode,
    DenoiseStep,
    Encode,
    DecodeImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub t_start: f64,
    pub t_end: f64,
    pub batch_size: u32,
    pub tokens_emitted: u64,
    pub phase: Phase,
}

impl IterationLog {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.t_start + self.t_end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreemptionEvent {
    pub id: String,
    pub t: f64,
    pub mode: PreemptionMode,
}

/// A diffusion batch executed as one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchGroup {
    pub batch_id: String,
    pub t_start: f64,
    pub t_end: f64,
    pub size: u32,
    #[serde(default)]
    pub request_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ServingLog {
    pub records: Vec<RequestRecord>,
    pub iterations: Vec<IterationLog>,
    pub batches: Vec<BatchGroup>,
    pub preemptions: Vec<PreemptionEvent>,
    /// Submitted requests that never completed; excluded from `records`.
    pub incomplete: Vec<String>,
}

/// One line of the serving-log file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LogEvent {
    RequestSubmit {
        id: String,
        t: f64,
        input_tokens: u64,
    },
    FirstToken {
        id: String,
        t: f64,
    },
    RequestComplete {
        id: String,
        t: f64,
        #[serde(default)]
        output_tokens: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        batch_id: Option<String>,
    },
    Iteration {
        t_start: f64,
        t_end: f64,
        batch_size: u32,
        tokens_emitted: u64,
        phase: Phase,
    },
    Preemption {
        id: String,
        t: f64,
        mode: PreemptionMode,
    },
    Batch {
        batch_id: String,
        t_start: f64,
        t_end: f64,
        size: u32,
    },
}

impl LogEvent {
    fn time(&self) -> f64 {
        match self {
            LogEvent::RequestSubmit { t, .. }
            | LogEvent::FirstToken { t, .. }
            | LogEvent::RequestComplete { t, .. }
            | LogEvent::Preemption { t, .. } => *t,
            LogEvent::Iteration { t_start, .. } | LogEvent::Batch { t_start, .. } => *t_start,
        }
    }
}

struct Pending {
    order: usize,
    submit_t: f64,
    input_tokens: u64,
    first_token_t: Option<f64>,
    complete: Option<(f64, u64, Option<String>)>,
    preemptions: u32,
}

pub fn parse_serving_log<R: BufRead>(reader: R) -> Result<ServingLog, TelemetryError> {
    let mut events = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TelemetryError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let ev: LogEvent =
            serde_json::from_str(trimmed).map_err(|e| TelemetryError::MalformedRecord {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        events.push((idx + 1, ev));
    }
    join_events(events)
}

fn join_events(events: Vec<(usize, LogEvent)>) -> Result<ServingLog, TelemetryError> {
    let mut log = ServingLog::default();
    let mut pending: HashMap<String, Pending> = HashMap::new();
    let mut batch_members: BTreeMap<String, Vec<String>> = BTreeMap::new();

    // Submits first so the join does not depend on line order.
    for (line, ev) in &events {
        if let LogEvent::RequestSubmit {
            id,
            t,
            input_tokens,
        } = ev
        {
            if pending.contains_key(id) {
                return Err(TelemetryError::DuplicateLifecycle {
                    line: *line,
                    id: id.clone(),
                    event: "request_submit",
                });
            }
            let order = pending.len();
            pending.insert(
                id.clone(),
                Pending {
                    order,
                    submit_t: *t,
                    input_tokens: *input_tokens,
                    first_token_t: None,
                    complete: None,
                    preemptions: 0,
                },
            );
        }
    }

    for (line, ev) in events {
        let orphan = |id: &str, event| TelemetryError::OrphanEvent {
            line,
            id: id.to_string(),
            event,
        };
        let dup = |id: &str, event| TelemetryError::DuplicateLifecycle {
            line,
            id: id.to_string(),
            event,
        };
        match ev {
            LogEvent::RequestSubmit { .. } => {}
            LogEvent::FirstToken { id, t } => {
                let p = pending
                    .get_mut(&id)
                    .ok_or_else(|| orphan(&id, "first_token"))?;
                if p.first_token_t.replace(t).is_some() {
                    return Err(dup(&id, "first_token"));
                }
            }
            LogEvent::RequestComplete {
                id,
                t,
                output_tokens,
                batch_id,
            } => {
                let p = pending
                    .get_mut(&id)
                    .ok_or_else(|| orphan(&id, "request_complete"))?;
                if p.complete.is_some() {
                    return Err(dup(&id, "request_complete"));
                }
                if let Some(b) = &batch_id {
                    batch_members.entry(b.clone()).or_default().push(id.clone());
                }
                p.complete = Some((t, output_tokens, batch_id));
            }
            LogEvent::Preemption { id, t, mode } => {
                let p = pending
                    .get_mut(&id)
                    .ok_or_else(|| orphan(&id, "preemption"))?;
                p.preemptions += 1;
                log.preemptions.push(PreemptionEvent { id, t, mode });
            }
            LogEvent::Iteration {
                t_start,
                t_end,
                batch_size,
                tokens_emitted,
                phase,
            } => {
                if !(t_start < t_end) {
                    return Err(TelemetryError::MalformedRecord {
                        line,
                        reason: "iteration t_start must precede t_end".into(),
                    });
                }
                log.iterations.push(IterationLog {
                    t_start,
                    t_end,
                    batch_size,
                    tokens_emitted,
                    phase,
                });
            }
            LogEvent::Batch {
                batch_id,
                t_start,
                t_end,
                size,
            } => log.batches.push(BatchGroup {
                batch_id,
                t_start,
                t_end,
                size,
                request_ids: Vec::new(),
            }),
        }
    }

    for b in &mut log.batches {
        if let Some(members) = batch_members.get(&b.batch_id) {
            b.request_ids = members.clone();
        }
    }

    let mut joined: Vec<(String, Pending)> = pending.into_iter().collect();
    joined.sort_by(|a, b| {
        a.1.submit_t
            .total_cmp(&b.1.submit_t)
            .then(a.1.order.cmp(&b.1.order))
    });
    for (id, p) in joined {
        match p.complete {
            Some((complete_t, output_tokens, batch_id)) => log.records.push(RequestRecord {
                request_id: id,
                submit_t: p.submit_t,
                first_token_t: p.first_token_t,
                complete_t,
                input_tokens: p.input_tokens,
                output_tokens,
                preemptions: p.preemptions,
                batch_id,
            }),
            None => log.incomplete.push(id),
        }
    }
    Ok(log)
}

impl ServingLog {
    /// Flattens the log into time-ordered file events.
    pub fn to_events(&self) -> Vec<LogEvent> {
        let mut events = Vec::new();
        for r in &self.records {
            events.push(LogEvent::RequestSubmit {
                id: r.request_id.clone(),
                t: r.submit_t,
                input_tokens: r.input_tokens,
            });
        }
        for it in &self.iterations {
            events.push(LogEvent::Iteration {
                t_start: it.t_start,
                t_end: it.t_end,
                batch_size: it.batch_size,
                tokens_emitted: it.tokens_emitted,
                phase: it.phase,
            });
        }
        for b in &self.batches {
            events.push(LogEvent::Batch {
                batch_id: b.batch_id.clone(),
                t_start: b.t_start,
                t_end: b.t_end,
                size: b.size,
            });
        }
        for p in &self.preemptions {
            events.push(LogEvent::Preemption {
                id: p.id.clone(),
                t: p.t,
                mode: p.mode,
            });
        }
        for r in &self.records {
            if let Some(t) = r.first_token_t {
                events.push(LogEvent::FirstToken {
                    id: r.request_id.clone(),
                    t,
                });
            }
        }
        for r in &self.records {
            events.push(LogEvent::RequestComplete {
                id: r.request_id.clone(),
                t: r.complete_t,
                output_tokens: r.output_tokens,
                batch_id: r.batch_id.clone(),
            });
        }
        events.sort_by(|a, b| a.time().total_cmp(&b.time()));
        events
    }

    /// Writes the log as line-delimited JSON. Incomplete requests are not
    /// representable once dropped from `records` and are omitted.
    pub fn write<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for ev in self.to_events() {
            serde_json::to_writer(&mut out, &ev)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Right-continuous step function of running batch size over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTimeline {
    /// `(t, batch_size)`; the value holds from `t` until the next breakpoint.
    pub breakpoints: Vec<(f64, u32)>,
    pub run_span: (f64, f64),
}

impl BatchTimeline {
    pub fn is_empty(&self) -> bool {
        self.breakpoints.is_empty()
    }

    pub fn span_len(&self) -> f64 {
        self.run_span.1 - self.run_span.0
    }

    pub fn batch_at(&self, t: f64) -> u32 {
        let i = self.breakpoints.partition_point(|&(bt, _)| bt <= t);
        if i == 0 {
            0
        } else {
            self.breakpoints[i - 1].1
        }
    }

    pub fn peak(&self) -> u32 {
        self.breakpoints.iter().map(|&(_, b)| b).max().unwrap_or(0)
    }

    /// Constant-value segments `(start, end, batch_size)` inside the run span.
    pub fn segments(&self) -> Vec<(f64, f64, u32)> {
        let mut out = Vec::with_capacity(self.breakpoints.len());
        for (i, &(t, b)) in self.breakpoints.iter().enumerate() {
            let end = self
                .breakpoints
                .get(i + 1)
                .map(|&(nt, _)| nt)
                .unwrap_or(self.run_span.1);
            if end > t {
                out.push((t, end, b));
            }
        }
        out
    }

    /// Integral of batch size over `[t0, t1]` (batch-seconds).
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        self.segments()
            .into_iter()
            .map(|(a, b, v)| {
                let lo = a.max(t0);
                let hi = b.min(t1);
                if hi > lo {
                    f64::from(v) * (hi - lo)
                } else {
                    0.0
                }
            })
            .sum()
    }
}

/// Builds the batch-size step function from iteration records; gaps between
/// iterations read as batch size 0. An empty input yields an empty timeline
/// with zero span.
pub fn batch_timeline(iterations: &[IterationLog]) -> Result<BatchTimeline, TelemetryError> {
    let mut its: Vec<&IterationLog> = iterations.iter().collect();
    its.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    let mut bps: Vec<(f64, u32)> = Vec::with_capacity(its.len() + 1);
    let mut push = |t: f64, b: u32| {
        if let Some(&(_, last)) = bps.last() {
            if last == b {
                return;
            }
        }
        bps.push((t, b));
    };
    let mut prev_end: Option<f64> = None;
    for it in &its {
        if let Some(pe) = prev_end {
            if it.t_start < pe {
                return Err(TelemetryError::OverlappingIterations {
                    prev_end: pe,
                    next_start: it.t_start,
                });
            }
            if it.t_start > pe {
                push(pe, 0);
            }
        }
        push(it.t_start, it.batch_size);
        prev_end = Some(it.t_end);
    }
    let run_span = match (its.first(), prev_end) {
        (Some(first), Some(end)) => {
            push(end, 0);
            (first.t_start, end)
        }
        _ => (0.0, 0.0),
    };
    Ok(BatchTimeline {
        breakpoints: bps,
        run_span,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub mean_tpot: Option<f64>,
    pub mean_ttft: Option<f64>,
    pub mean_e2e: f64,
    pub tpot: Vec<f64>,
    pub ttft: Vec<f64>,
    pub e2e: Vec<f64>,
}

/// Order-independent mean: sums in sorted order so permutations of the input
/// give bit-identical results.
fn mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

/// Per-request TTFT, end-to-end latency, and time per output token.
///
/// TPOT divides the post-first-token time by the number of inter-token gaps,
/// `output_tokens - 1`, clamped to at least 1. When `llm` is false (diffusion)
/// only end-to-end latency is computed.
pub fn latency_metrics(
    records: &[RequestRecord],
    llm: bool,
) -> Result<LatencySummary, TelemetryError> {
    if records.is_empty() {
        return Err(TelemetryError::EmptyInput);
    }
    let e2e: Vec<f64> = records.iter().map(RequestRecord::e2e).collect();
    let mut tpot = Vec::new();
    let mut ttft = Vec::new();
    if llm {
        for r in records {
            let ft = r
                .first_token_t
                .ok_or_else(|| TelemetryError::MissingFirstToken {
                    id: r.request_id.clone(),
                })?;
            ttft.push(ft - r.submit_t);
            let gaps = r.output_tokens.saturating_sub(1).max(1) as f64;
            tpot.push((r.complete_t - ft) / gaps);
        }
    }
    Ok(LatencySummary {
        mean_tpot: llm.then(|| mean(&tpot)),
        mean_ttft: llm.then(|| mean(&ttft)),
        mean_e2e: mean(&e2e),
        tpot,
        ttft,
        e2e,
    })
}
