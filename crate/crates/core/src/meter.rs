//! Power-trace ingestion and exact window energy.
//!
//! A trace is either a series of instantaneous power readings (watts) or a
//! cumulative energy counter (joules). Instantaneous traces are integrated with
//! the trapezoidal rule, interpolating linearly at both window boundaries.
//! Cumulative traces are linearly interpolated at each boundary and differenced.
//!
//! Units are fixed: seconds, watts, joules.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeterError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: device {device} mixes power_w and energy_j samples")]
    MixedKind { device: String, line: usize },
    #[error("line {line}: device {device} time {t} does not strictly increase")]
    NonMonotonicTime { device: String, line: usize, t: f64 },
    #[error("device {device}: window [{t0}, {t1}] outside trace span [{first}, {last}]")]
    WindowOutOfRange {
        device: String,
        t0: f64,
        t1: f64,
        first: f64,
        last: f64,
    },
    #[error("device {device}: trace needs at least two samples")]
    EmptyTrace { device: String },
    #[error("window start {t0} is after window end {t1}")]
    InvalidWindow { t0: f64, t1: f64 },
    #[error("zero-length window at t={t}")]
    ZeroDuration { t: f64 },
    #[error("clock origin mismatch: run uses {expected:?}, trace declares {found:?}")]
    ClockOriginMismatch { expected: String, found: String },
    #[error("no traces supplied")]
    NoTraces,
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceKind {
    InstantaneousPower,
    CumulativeEnergy,
}

/// One reading: watts for instantaneous traces, joules for cumulative ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    pub device_id: String,
    pub kind: TraceKind,
    pub samples: Vec<PowerSample>,
    pub declared_max_power: Option<f64>,
}

/// Traces parsed from one file, together with its optional header.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceSet {
    pub clock_origin: Option<String>,
    pub tdp_w: Option<f64>,
    pub traces: Vec<PowerTrace>,
}

impl TraceSet {
    /// Rejects a file whose declared clock origin differs from the run's.
    pub fn check_clock_origin(&self, expected: &str) -> Result<(), MeterError> {
        match &self.clock_origin {
            Some(found) if found != expected => Err(MeterError::ClockOriginMismatch {
                expected: expected.to_string(),
                found: found.clone(),
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderMeta {
    clock_origin: Option<String>,
    tdp_w: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    meta: HeaderMeta,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    device: String,
    t: f64,
    power_w: Option<f64>,
    energy_j: Option<f64>,
}

fn is_header(line: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(line)
        .map(|v| v.get("meta").is_some())
        .unwrap_or(false)
}

/// Parses a line-delimited power-trace stream into one trace per device,
/// ordered by device id.
pub fn parse_power_trace<R: BufRead>(reader: R) -> Result<TraceSet, MeterError> {
    let mut set = TraceSet::default();
    let mut by_device: BTreeMap<String, PowerTrace> = BTreeMap::new();
    let mut seen_sample = false;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| MeterError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !seen_sample && is_header(trimmed) {
            let header: HeaderLine =
                serde_json::from_str(trimmed).map_err(|e| MeterError::MalformedRecord {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            set.clock_origin = header.meta.clock_origin;
            set.tdp_w = header.meta.tdp_w;
            continue;
        }
        let rec: SampleLine =
            serde_json::from_str(trimmed).map_err(|e| MeterError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        seen_sample = true;
        let malformed = |reason: &str| MeterError::MalformedRecord {
            line: line_no,
            reason: reason.to_string(),
        };
        let (kind, value) = match (rec.power_w, rec.energy_j) {
            (Some(p), None) => (TraceKind::InstantaneousPower, p),
            (None, Some(e)) => (TraceKind::CumulativeEnergy, e),
            (Some(_), Some(_)) => return Err(malformed("both power_w and energy_j present")),
            (None, None) => return Err(malformed("one of power_w or energy_j is required")),
        };
        if !rec.t.is_finite() || !value.is_finite() {
            return Err(malformed("non-finite value"));
        }
        let trace = by_device
            .entry(rec.device.clone())
            .or_insert_with(|| PowerTrace {
                device_id: rec.device.clone(),
                kind,
                samples: Vec::new(),
                declared_max_power: None,
            });
        if trace.kind != kind {
            return Err(MeterError::MixedKind {
                device: rec.device,
                line: line_no,
            });
        }
        if let Some(last) = trace.samples.last() {
            if rec.t <= last.t {
                return Err(MeterError::NonMonotonicTime {
                    device: rec.device,
                    line: line_no,
                    t: rec.t,
                });
            }
            if kind == TraceKind::CumulativeEnergy && value < last.value {
                return Err(malformed("cumulative energy decreased"));
            }
        }
        if kind == TraceKind::InstantaneousPower && value < 0.0 {
            return Err(malformed("negative power"));
        }
        trace.samples.push(PowerSample { t: rec.t, value });
    }

    set.traces = by_device
        .into_values()
        .map(|mut tr| {
            tr.declared_max_power = set.tdp_w;
            tr
        })
        .collect();
    Ok(set)
}

/// Serializes traces in the line-delimited file format, header first.
pub fn write_power_traces<W: std::io::Write>(
    mut out: W,
    traces: &[PowerTrace],
    clock_origin: Option<&str>,
) -> std::io::Result<()> {
    let tdp = traces.iter().find_map(|t| t.declared_max_power);
    if clock_origin.is_some() || tdp.is_some() {
        let mut meta = serde_json::Map::new();
        if let Some(origin) = clock_origin {
            meta.insert("clock_origin".into(), origin.into());
        }
        if let Some(tdp) = tdp {
            meta.insert("tdp_w".into(), tdp.into());
        }
        writeln!(out, "{}", serde_json::json!({ "meta": meta }))?;
    }
    for trace in traces {
        let field = match trace.kind {
            TraceKind::InstantaneousPower => "power_w",
            TraceKind::CumulativeEnergy => "energy_j",
        };
        for s in &trace.samples {
            writeln!(
                out,
                "{{\"device\":{},\"t\":{},\"{}\":{}}}",
                serde_json::Value::from(trace.device_id.as_str()),
                serde_json::Value::from(s.t),
                field,
                serde_json::Value::from(s.value)
            )?;
        }
    }
    Ok(())
}

impl PowerTrace {
    pub fn new(device_id: impl Into<String>, kind: TraceKind, samples: Vec<PowerSample>) -> Self {
        Self {
            device_id: device_id.into(),
            kind,
            samples,
            declared_max_power: None,
        }
    }

    pub fn with_max_power(mut self, watts: f64) -> Self {
        self.declared_max_power = Some(watts);
        self
    }

    /// `[first sample t, last sample t]`.
    pub fn span(&self) -> Result<(f64, f64), MeterError> {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) if self.samples.len() >= 2 => Ok((a.t, b.t)),
            _ => Err(MeterError::EmptyTrace {
                device: self.device_id.clone(),
            }),
        }
    }

    fn check_window(&self, t0: f64, t1: f64) -> Result<(), MeterError> {
        let (first, last) = self.span()?;
        if t0 > t1 {
            return Err(MeterError::InvalidWindow { t0, t1 });
        }
        if t0 < first || t1 > last {
            return Err(MeterError::WindowOutOfRange {
                device: self.device_id.clone(),
                t0,
                t1,
                first,
                last,
            });
        }
        Ok(())
    }

    /// Linear interpolation of the sample values at `t`, which must lie in span.
    fn interpolate(&self, t: f64) -> f64 {
        let s = &self.samples;
        let i = s.partition_point(|p| p.t <= t);
        if i == 0 {
            return s[0].value;
        }
        if i == s.len() {
            return s[s.len() - 1].value;
        }
        let (a, b) = (s[i - 1], s[i]);
        if t == a.t {
            return a.value;
        }
        a.value + (b.value - a.value) * (t - a.t) / (b.t - a.t)
    }

    /// Energy delivered in `[t0, t1]`, in joules.
    pub fn energy_in_window(&self, t0: f64, t1: f64) -> Result<f64, MeterError> {
        self.check_window(t0, t1)?;
        if t0 == t1 {
            return Ok(0.0);
        }
        let energy = match self.kind {
            TraceKind::CumulativeEnergy => self.interpolate(t1) - self.interpolate(t0),
            TraceKind::InstantaneousPower => self.trapezoid(t0, t1),
        };
        Ok(energy.max(0.0))
    }

    fn trapezoid(&self, t0: f64, t1: f64) -> f64 {
        let s = &self.samples;
        // Interior samples strictly inside (t0, t1).
        let lo = s.partition_point(|p| p.t <= t0);
        let hi = s.partition_point(|p| p.t < t1);
        let p0 = self.interpolate(t0);
        let p1 = self.interpolate(t1);
        if lo >= hi {
            return 0.5 * (p0 + p1) * (t1 - t0);
        }
        let mut area = 0.5 * (p0 + s[lo].value) * (s[lo].t - t0);
        for w in s[lo..hi].windows(2) {
            area += 0.5 * (w[0].value + w[1].value) * (w[1].t - w[0].t);
        }
        area + 0.5 * (s[hi - 1].value + p1) * (t1 - s[hi - 1].t)
    }

    pub fn average_power(&self, t0: f64, t1: f64) -> Result<f64, MeterError> {
        let energy = self.energy_in_window(t0, t1)?;
        if t1 == t0 {
            return Err(MeterError::ZeroDuration { t: t0 });
        }
        Ok(energy / (t1 - t0))
    }
}

pub fn energy_in_window(trace: &PowerTrace, t0: f64, t1: f64) -> Result<f64, MeterError> {
    trace.energy_in_window(t0, t1)
}

pub fn average_power(trace: &PowerTrace, t0: f64, t1: f64) -> Result<f64, MeterError> {
    trace.average_power(t0, t1)
}

/// Sum of per-device window energy. Errors name the failing device.
pub fn merge_energy(traces: &[PowerTrace], t0: f64, t1: f64) -> Result<f64, MeterError> {
    if traces.is_empty() {
        return Err(MeterError::NoTraces);
    }
    traces.iter().map(|tr| tr.energy_in_window(t0, t1)).sum()
}

/// Latest common start and earliest common end across traces.
pub fn common_span(traces: &[PowerTrace]) -> Result<(f64, f64), MeterError> {
    if traces.is_empty() {
        return Err(MeterError::NoTraces);
    }
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for tr in traces {
        let (a, b) = tr.span()?;
        lo = lo.max(a);
        hi = hi.min(b);
    }
    Ok((lo, hi))
}
