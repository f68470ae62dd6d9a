//! Derived metrics: throughput per watt, electricity cost, operational carbon.

use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meter::{self, MeterError, PowerTrace};
use crate::sweep::RunResult;

const J_PER_KWH: f64 = 3.6e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("average power is zero")]
    ZeroPower,
    #[error("rate series covers [{first}, {last}) but energy is needed at {t}")]
    RateCoverageGap { t: f64, first: f64, last: f64 },
    #[error("expected a {expected} series, got {found}")]
    KindMismatch { expected: RateKind, found: RateKind },
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("rate series is empty")]
    EmptySeries,
    #[error("energy segments are empty or out of order")]
    InvalidSegments,
    #[error(transparent)]
    Meter(#[from] MeterError),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    PriceUsdPerKwh,
    CarbonGPerKwh,
}

impl fmt::Display for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RateKind::PriceUsdPerKwh => "price_usd_per_kwh",
            RateKind::CarbonGPerKwh => "carbon_g_per_kwh",
        })
    }
}

/// Piecewise-constant, right-continuous rate. Segment `i` holds from its
/// `t_start` until the next one; the last holds until `end` (or forever).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    pub kind: RateKind,
    pub region: Option<String>,
    pub segments: Vec<(f64, f64)>,
    pub end: Option<f64>,
}

impl RateSeries {
    pub fn new(kind: RateKind, segments: Vec<(f64, f64)>) -> Result<Self, MetricsError> {
        let s = Self {
            kind,
            region: None,
            segments,
            end: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn flat(kind: RateKind, rate: f64) -> Self {
        Self {
            kind,
            region: None,
            segments: vec![(f64::NEG_INFINITY, rate)],
            end: None,
        }
    }

    fn validate(&self) -> Result<(), MetricsError> {
        if self.segments.is_empty() {
            return Err(MetricsError::EmptySeries);
        }
        for (i, &(t, r)) in self.segments.iter().enumerate() {
            let bad = |reason: String| MetricsError::MalformedRecord {
                line: i + 1,
                reason,
            };
            if t.is_nan() || !r.is_finite() || r < 0.0 {
                return Err(bad(format!("rate {r} at {t} must be finite and >= 0")));
            }
            if i > 0 && !(t > self.segments[i - 1].0) {
                return Err(bad("breakpoints must strictly increase".into()));
            }
        }
        if let Some(end) = self.end {
            if !(end
                > self
                    .segments
                    .last()
                    .map(|s| s.0)
                    .unwrap_or(f64::NEG_INFINITY))
            {
                return Err(MetricsError::MalformedRecord {
                    line: 0,
                    reason: "t_end must follow the last breakpoint".into(),
                });
            }
        }
        Ok(())
    }

    pub fn start(&self) -> f64 {
        self.segments[0].0
    }

    pub fn last(&self) -> f64 {
        self.end.unwrap_or(f64::INFINITY)
    }

    /// `(t0, t1, rate)` intervals.
    fn intervals(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.segments.iter().enumerate().map(move |(i, &(t, r))| {
            let end = self.segments.get(i + 1).map(|s| s.0).unwrap_or(self.last());
            (t, end, r)
        })
    }

    pub fn rate_at(&self, t: f64) -> Option<f64> {
        self.intervals()
            .find(|&(a, b, _)| a <= t && t < b)
            .map(|(_, _, r)| r)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: RateKind,
    region: Option<String>,
    t_end: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RateRow {
    t_start: f64,
    rate: f64,
}

/// Line-delimited JSON: a `{"kind", "region"}` header, then
/// `{"t_start", "rate"}` rows. An optional `t_end` in the header bounds the
/// last segment.
pub fn parse_rate_series<R: BufRead>(reader: R) -> Result<RateSeries, MetricsError> {
    let mut header: Option<Header> = None;
    let mut segments = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| MetricsError::Io(e.to_string()))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let bad = |e: serde_json::Error| MetricsError::MalformedRecord {
            line: i + 1,
            reason: e.to_string(),
        };
        if header.is_none() {
            header = Some(serde_json::from_str(text).map_err(bad)?);
        } else {
            let row: RateRow = serde_json::from_str(text).map_err(bad)?;
            segments.push((row.t_start, row.rate));
        }
    }
    let header = header.ok_or(MetricsError::EmptySeries)?;
    let series = RateSeries {
        kind: header.kind,
        region: header.region,
        segments,
        end: header.t_end,
    };
    series.validate()?;
    Ok(series)
}

/// CSV with `t_start,rate` columns. The kind is not in the file.
pub fn parse_rate_csv<R: std::io::Read>(
    reader: R,
    kind: RateKind,
    region: Option<String>,
) -> Result<RateSeries, MetricsError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut segments = Vec::new();
    for (i, row) in rdr.deserialize::<RateRow>().enumerate() {
        let row = row.map_err(|e| MetricsError::MalformedRecord {
            line: i + 2,
            reason: e.to_string(),
        })?;
        segments.push((row.t_start, row.rate));
    }
    let series = RateSeries {
        kind,
        region,
        segments,
        end: None,
    };
    series.validate()?;
    Ok(series)
}

/// Energy spent uniformly over `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySegment {
    pub t0: f64,
    pub t1: f64,
    pub energy_j: f64,
}

/// What to price: traces over a window, or pre-integrated segments.
#[derive(Debug, Clone, Copy)]
pub enum EnergySource<'a> {
    Traces {
        traces: &'a [PowerTrace],
        t0: f64,
        t1: f64,
    },
    Segments(&'a [EnergySegment]),
}

impl EnergySource<'_> {
    fn window(&self) -> Result<(f64, f64), MetricsError> {
        match self {
            EnergySource::Traces { t0, t1, .. } => Ok((*t0, *t1)),
            EnergySource::Segments(segs) => {
                let first = segs.first().ok_or(MetricsError::InvalidSegments)?;
                let last = segs.last().expect("non-empty");
                if segs.windows(2).any(|w| w[1].t0 < w[0].t1)
                    || segs.iter().any(|s| !(s.t1 >= s.t0))
                {
                    return Err(MetricsError::InvalidSegments);
                }
                Ok((first.t0, last.t1))
            }
        }
    }

    fn energy_between(&self, a: f64, b: f64) -> Result<f64, MetricsError> {
        match self {
            EnergySource::Traces { traces, .. } => Ok(meter::merge_energy(traces, a, b)?),
            EnergySource::Segments(segs) => Ok(segs
                .iter()
                .map(|s| {
                    let len = s.t1 - s.t0;
                    if len <= 0.0 {
                        // Instantaneous energy counts where it lands.
                        return if a <= s.t0 && s.t0 < b {
                            s.energy_j
                        } else {
                            0.0
                        };
                    }
                    let overlap = (b.min(s.t1) - a.max(s.t0)).max(0.0);
                    s.energy_j * overlap / len
                })
                .sum()),
        }
    }
}

/// Energy in kWh times rate, split at rate breakpoints.
///
/// Run time `t` maps to series time `t + offset`. Without an offset the series
/// is taken to start when the energy window starts.
fn integrate(
    source: &EnergySource,
    rates: &RateSeries,
    offset: Option<f64>,
) -> Result<f64, MetricsError> {
    rates.validate()?;
    let (a, b) = source.window()?;
    let offset = match offset {
        Some(o) => o,
        None if rates.start().is_finite() => rates.start() - a,
        None => 0.0,
    };
    let (ra, rb) = (a + offset, b + offset);
    if ra < rates.start() {
        return Err(MetricsError::RateCoverageGap {
            t: ra,
            first: rates.start(),
            last: rates.last(),
        });
    }
    if rb > rates.last() {
        return Err(MetricsError::RateCoverageGap {
            t: rb,
            first: rates.start(),
            last: rates.last(),
        });
    }
    let mut total = 0.0;
    for (s, e, rate) in rates.intervals() {
        let lo = ra.max(s);
        let hi = rb.min(e);
        if hi <= lo {
            continue;
        }
        let energy = source.energy_between(lo - offset, hi - offset)?;
        total += energy / J_PER_KWH * rate;
    }
    Ok(total)
}

fn expect_kind(rates: &RateSeries, kind: RateKind) -> Result<(), MetricsError> {
    if rates.kind != kind {
        return Err(MetricsError::KindMismatch {
            expected: kind,
            found: rates.kind,
        });
    }
    Ok(())
}

/// US dollars.
pub fn electricity_cost(
    source: &EnergySource,
    prices: &RateSeries,
    offset: Option<f64>,
) -> Result<f64, MetricsError> {
    expect_kind(prices, RateKind::PriceUsdPerKwh)?;
    integrate(source, prices, offset)
}

/// Grams of CO2-equivalent.
pub fn carbon_emissions(
    source: &EnergySource,
    intensity: &RateSeries,
    offset: Option<f64>,
) -> Result<f64, MetricsError> {
    expect_kind(intensity, RateKind::CarbonGPerKwh)?;
    integrate(source, intensity, offset)
}

/// Tokens/s/W for LLM runs, requests/s/W for diffusion.
pub fn throughput_per_watt(result: &RunResult) -> Result<f64, MetricsError> {
    if !(result.avg_power_w > 0.0) {
        return Err(MetricsError::ZeroPower);
    }
    Ok(result.throughput / result.avg_power_w)
}
