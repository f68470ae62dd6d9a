use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Workload family being benchmarked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Chat,
    Code,
    T2i,
    T2v,
    I2v,
}

impl Task {
    /// LLM text generation (iteration-level batching) as opposed to diffusion.
    pub fn is_llm(self) -> bool {
        matches!(self, Task::Chat | Task::Code)
    }

    /// Default latency metric for recommendations.
    pub fn default_latency_metric(self) -> LatencyMetric {
        match self {
            Task::Chat => LatencyMetric::Tpot,
            _ => LatencyMetric::E2e,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Chat => "chat",
            Task::Code => "code",
            Task::T2i => "t2i",
            Task::T2v => "t2v",
            Task::I2v => "i2v",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chat" => Ok(Task::Chat),
            "code" => Ok(Task::Code),
            "t2i" => Ok(Task::T2i),
            "t2v" => Ok(Task::T2v),
            "i2v" => Ok(Task::I2v),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// Latency figure used as the time axis of the frontier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyMetric {
    Tpot,
    Ttft,
    E2e,
}

impl LatencyMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            LatencyMetric::Tpot => "tpot",
            LatencyMetric::Ttft => "ttft",
            LatencyMetric::E2e => "e2e",
        }
    }
}

impl fmt::Display for LatencyMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LatencyMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tpot" => Ok(LatencyMetric::Tpot),
            "ttft" => Ok(LatencyMetric::Ttft),
            "e2e" => Ok(LatencyMetric::E2e),
            other => Err(format!("unknown latency metric {other:?}")),
        }
    }
}

/// How an engine evicts a request under KV-cache pressure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreemptionMode {
    Recompute,
    Swap,
}

impl PreemptionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PreemptionMode::Recompute => "recompute",
            PreemptionMode::Swap => "swap",
        }
    }
}

impl FromStr for PreemptionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "recompute" => Ok(PreemptionMode::Recompute),
            "swap" => Ok(PreemptionMode::Swap),
            other => Err(format!("unknown preemption mode {other:?}")),
        }
    }
}
