//! Sweep spec files (TOML) and grid constraints.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{BenchmarkConfig, Grid, SweepError, SweepOptions, WorkloadSource};
use crate::accounting::SteadyParams;
use crate::meter::TraceKind;
use crate::simulator::{self, DeviceProfile, SimWorkload, SynthSpec};
use crate::task::{PreemptionMode, Task};

/// A grid value: integer, float, or string.
#[derive(Debug, Clone, PartialEq)]
pub enum GridValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl GridValue {
    fn from_toml(v: &toml::Value) -> Option<Self> {
        match v {
            toml::Value::Integer(i) => Some(GridValue::Int(*i)),
            toml::Value::Float(f) => Some(GridValue::Float(*f)),
            toml::Value::String(s) => Some(GridValue::Str(s.clone())),
            _ => None,
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            GridValue::Int(i) => Some(*i as f64),
            GridValue::Float(f) => Some(*f),
            GridValue::Str(_) => None,
        }
    }

    fn cmp_key(&self, other: &Self) -> std::cmp::Ordering {
        match (self.as_f64(), other.as_f64()) {
            (Some(a), Some(b)) => a.total_cmp(&b),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => self.to_string().cmp(&other.to_string()),
        }
    }
}

impl fmt::Display for GridValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridValue::Int(i) => write!(f, "{i}"),
            GridValue::Float(x) => write!(f, "{x}"),
            GridValue::Str(s) => f.write_str(s),
        }
    }
}

const DIMENSIONS: [&str; 8] = [
    "denoising_steps",
    "device_profile",
    "max_batch_size",
    "model_id",
    "power_limit_w",
    "preemption_mode",
    "resolution",
    "tp_degree",
];

fn as_u32(name: &str, v: &GridValue) -> Result<u32, SweepError> {
    match v {
        GridValue::Int(i) if *i >= 0 && *i <= i64::from(u32::MAX) => Ok(*i as u32),
        _ => Err(SweepError::Spec(format!(
            "{name}: expected a non-negative integer, got {v}"
        ))),
    }
}

pub(super) fn apply_dimension(
    config: &mut BenchmarkConfig,
    name: &str,
    value: &GridValue,
) -> Result<(), SweepError> {
    let text = |v: &GridValue| match v {
        GridValue::Str(s) => Ok(s.clone()),
        other => Err(SweepError::Spec(format!(
            "{name}: expected a string, got {other}"
        ))),
    };
    match name {
        "tp_degree" => config.tp_degree = as_u32(name, value)?,
        "max_batch_size" => config.max_batch_size = as_u32(name, value)?,
        "denoising_steps" => config.denoising_steps = Some(as_u32(name, value)?),
        "resolution" => config.resolution = Some(as_u32(name, value)?),
        "power_limit_w" => {
            config.power_limit_w = Some(value.as_f64().ok_or_else(|| {
                SweepError::Spec(format!("{name}: expected a number, got {value}"))
            })?)
        }
        "model_id" => config.model_id = text(value)?,
        "device_profile" => config.device_profile = text(value)?,
        "preemption_mode" => {
            config.preemption_mode = text(value)?.parse().map_err(SweepError::Spec)?
        }
        other => return Err(SweepError::UnknownDimension(other.to_string())),
    }
    Ok(())
}

fn config_field(config: &BenchmarkConfig, name: &str) -> Option<GridValue> {
    let int = |v: u32| Some(GridValue::Int(i64::from(v)));
    match name {
        "tp_degree" => int(config.tp_degree),
        "max_batch_size" => int(config.max_batch_size),
        "denoising_steps" => config.denoising_steps.and_then(int),
        "resolution" => config.resolution.and_then(int),
        "power_limit_w" => config.power_limit_w.map(GridValue::Float),
        "model_id" => Some(GridValue::Str(config.model_id.clone())),
        "device_profile" => Some(GridValue::Str(config.device_profile.clone())),
        "preemption_mode" => Some(GridValue::Str(config.preemption_mode.as_str().into())),
        "task" => Some(GridValue::Str(config.task.as_str().into())),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CmpOp {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    Ne,
}

#[derive(Debug, Clone, PartialEq)]
enum Operand {
    Ident(String),
    Literal(GridValue),
}

/// `lhs op rhs`, where each side is a config field, a backend variable such
/// as `available_devices`, a number, or a quoted string.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub rule: String,
    lhs: Operand,
    op: CmpOp,
    rhs: Operand,
}

pub fn parse_constraint(rule: &str, variables: &[&str]) -> Result<Constraint, SweepError> {
    let err = |reason: &str| SweepError::ConstraintParseError {
        rule: rule.to_string(),
        reason: reason.to_string(),
    };
    const OPS: [(&str, CmpOp); 6] = [
        ("<=", CmpOp::Le),
        (">=", CmpOp::Ge),
        ("==", CmpOp::Eq),
        ("!=", CmpOp::Ne),
        ("<", CmpOp::Lt),
        (">", CmpOp::Gt),
    ];
    let (pos, sym, op) = OPS
        .iter()
        .filter_map(|&(sym, op)| rule.find(sym).map(|p| (p, sym, op)))
        .min_by_key(|&(p, sym, _)| (p, std::cmp::Reverse(sym.len())))
        .ok_or_else(|| err("expected one of <=, <, >=, >, ==, !="))?;
    let operand = |s: &str| -> Result<Operand, SweepError> {
        let s = s.trim();
        if s.is_empty() {
            return Err(err("missing operand"));
        }
        if let Some(inner) = s.strip_prefix('"').and_then(|x| x.strip_suffix('"')) {
            return Ok(Operand::Literal(GridValue::Str(inner.to_string())));
        }
        if let Ok(i) = s.parse::<i64>() {
            return Ok(Operand::Literal(GridValue::Int(i)));
        }
        if let Ok(f) = s.parse::<f64>() {
            return Ok(Operand::Literal(GridValue::Float(f)));
        }
        let known = DIMENSIONS.contains(&s) || s == "task" || variables.contains(&s);
        if s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') && known {
            Ok(Operand::Ident(s.to_string()))
        } else {
            Err(err(&format!("unknown identifier {s:?}")))
        }
    };
    let lhs = operand(&rule[..pos])?;
    let rest = &rule[pos + sym.len()..];
    if OPS.iter().any(|(s, _)| rest.contains(s)) {
        return Err(err("only one comparison per rule"));
    }
    let rhs = operand(rest)?;
    Ok(Constraint {
        rule: rule.to_string(),
        lhs,
        op,
        rhs,
    })
}

impl Constraint {
    /// Evaluates against a config. A config missing a referenced optional
    /// field fails the constraint.
    pub fn eval(
        &self,
        config: &BenchmarkConfig,
        variables: &BTreeMap<String, GridValue>,
    ) -> Result<bool, SweepError> {
        let resolve = |o: &Operand| -> Option<GridValue> {
            match o {
                Operand::Literal(v) => Some(v.clone()),
                Operand::Ident(name) => {
                    config_field(config, name).or_else(|| variables.get(name).cloned())
                }
            }
        };
        let (Some(a), Some(b)) = (resolve(&self.lhs), resolve(&self.rhs)) else {
            return Ok(false);
        };
        let ord = match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (None, None) => a.to_string().cmp(&b.to_string()),
            _ => {
                return Err(SweepError::ConstraintParseError {
                    rule: self.rule.clone(),
                    reason: "compares a number with a string".into(),
                })
            }
        };
        use std::cmp::Ordering::*;
        Ok(match self.op {
            CmpOp::Le => ord != Greater,
            CmpOp::Lt => ord == Less,
            CmpOp::Ge => ord != Less,
            CmpOp::Gt => ord == Greater,
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
        })
    }
}

/// Simulator backend settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimBackendSpec {
    pub sampling_interval_s: f64,
    pub trace_kind: TraceKind,
    pub kv_budget_tokens: Option<u64>,
    pub kv_tokens_per_request_token: f64,
    pub swap_bandwidth_tokens_per_s: f64,
    /// Partial overrides applied on top of every device profile.
    pub latency_overrides: toml::Table,
    pub power_overrides: toml::Table,
}

impl Default for SimBackendSpec {
    fn default() -> Self {
        Self {
            sampling_interval_s: 0.01,
            trace_kind: TraceKind::CumulativeEnergy,
            kv_budget_tokens: None,
            kv_tokens_per_request_token: 1.0,
            swap_bandwidth_tokens_per_s: 500_000.0,
            latency_overrides: toml::Table::new(),
            power_overrides: toml::Table::new(),
        }
    }
}

impl SimBackendSpec {
    /// Named profile with this spec's overrides applied.
    pub fn resolve_profile(&self, name: &str) -> Result<DeviceProfile, SweepError> {
        let mut profile = DeviceProfile::by_name(name).ok_or_else(|| {
            SweepError::InvalidConfig(format!(
                "unknown device profile {name:?}; known: {}",
                DeviceProfile::NAMES.join(", ")
            ))
        })?;
        profile.latency = overlay(&profile.latency, &self.latency_overrides, "backend.latency")?;
        profile.power = overlay(&profile.power, &self.power_overrides, "backend.power")?;
        if let Some(kv) = self.kv_budget_tokens {
            profile.kv_budget_tokens = kv;
        }
        Ok(profile)
    }
}

fn overlay<T>(base: &T, overrides: &toml::Table, header: &str) -> Result<T, SweepError>
where
    T: Clone + serde::Serialize + serde::de::DeserializeOwned,
{
    if overrides.is_empty() {
        return Ok(base.clone());
    }
    let mut table = toml::Table::try_from(base).map_err(|e| SweepError::Spec(e.to_string()))?;
    for (k, v) in overrides {
        if !table.contains_key(k) {
            return Err(SweepError::Spec(format!("[{header}] has no field {k:?}")));
        }
        let v = match v {
            toml::Value::Integer(i) => toml::Value::Float(*i as f64),
            other => other.clone(),
        };
        table.insert(k.clone(), v);
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| SweepError::Spec(format!("[{header}]: {e}")))
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Simulator(SimBackendSpec),
    Http(super::HttpBackendSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSpec {
    Dataset(PathBuf),
    Synthetic(SynthSpec),
    Diffusion { n_requests: usize },
}

/// A parsed sweep spec file.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: BenchmarkConfig,
    pub backend: BackendSpec,
    pub available_devices: Option<u32>,
    pub grid: Grid,
    pub constraints: Vec<Constraint>,
    pub workload: WorkloadSpec,
    pub seed: u64,
    pub steady: SteadyParams,
    pub repetitions: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    task: Task,
    #[serde(default = "default_model")]
    model_id: String,
    #[serde(default = "default_profile")]
    device_profile: String,
    #[serde(default = "one")]
    tp_degree: u32,
    #[serde(default = "eight")]
    max_batch_size: u32,
    denoising_steps: Option<u32>,
    resolution: Option<u32>,
    #[serde(default = "default_preemption")]
    preemption_mode: PreemptionMode,
    power_limit_w: Option<f64>,
}

fn default_model() -> String {
    "model".into()
}
fn default_profile() -> String {
    "high-tdp".into()
}
fn one() -> u32 {
    1
}
fn eight() -> u32 {
    8
}
fn default_preemption() -> PreemptionMode {
    PreemptionMode::Recompute
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBackend {
    #[serde(default = "default_kind")]
    kind: String,
    available_devices: Option<u32>,
    sampling_interval_s: Option<f64>,
    trace_kind: Option<TraceKind>,
    kv_budget_tokens: Option<u64>,
    kv_tokens_per_request_token: Option<f64>,
    swap_bandwidth_tokens_per_s: Option<f64>,
    #[serde(default)]
    latency: toml::Table,
    #[serde(default)]
    power: toml::Table,
    url: Option<String>,
    reset_url: Option<String>,
    power_trace: Option<String>,
    clock_origin: Option<String>,
    bearer_token_env: Option<String>,
    timeout_s: Option<f64>,
}

fn default_kind() -> String {
    "simulator".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGridDim {
    values: Vec<toml::Value>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConstraints {
    #[serde(default)]
    rules: Vec<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    dataset: Option<PathBuf>,
    n_requests: Option<usize>,
    input_mean: Option<f64>,
    input_pareto_alpha: Option<f64>,
    output_mean: Option<f64>,
    seed: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawAccounting {
    gap_tolerance_s: Option<f64>,
    min_fraction: Option<f64>,
    #[serde(default)]
    allow_unsaturated: bool,
    repetitions: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    task: RawTask,
    backend: Option<RawBackend>,
    #[serde(default)]
    grid: BTreeMap<String, RawGridDim>,
    #[serde(default)]
    constraints: RawConstraints,
    #[serde(default)]
    workload: RawWorkload,
    #[serde(default)]
    accounting: RawAccounting,
}

impl SweepSpec {
    pub fn from_file(path: &Path) -> Result<Self, SweepError> {
        let text = std::fs::read_to_string(path)?;
        let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base_dir)
    }

    /// Parses spec text; relative dataset paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, SweepError> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| SweepError::Spec(e.to_string()))?;
        let t = raw.task;
        let base = BenchmarkConfig {
            config_id: String::new(),
            task: t.task,
            model_id: t.model_id,
            device_profile: t.device_profile,
            tp_degree: t.tp_degree,
            max_batch_size: t.max_batch_size,
            denoising_steps: t.denoising_steps,
            resolution: t.resolution,
            preemption_mode: t.preemption_mode,
            power_limit_w: t.power_limit_w,
        };

        let rb = raw.backend.unwrap_or(RawBackend {
            kind: default_kind(),
            available_devices: None,
            sampling_interval_s: None,
            trace_kind: None,
            kv_budget_tokens: None,
            kv_tokens_per_request_token: None,
            swap_bandwidth_tokens_per_s: None,
            latency: toml::Table::new(),
            power: toml::Table::new(),
            url: None,
            reset_url: None,
            power_trace: None,
            clock_origin: None,
            bearer_token_env: None,
            timeout_s: None,
        });
        let available_devices = rb.available_devices;
        let backend = match rb.kind.as_str() {
            "simulator" => {
                let d = SimBackendSpec::default();
                let sim = SimBackendSpec {
                    sampling_interval_s: rb.sampling_interval_s.unwrap_or(d.sampling_interval_s),
                    trace_kind: rb.trace_kind.unwrap_or(d.trace_kind),
                    kv_budget_tokens: rb.kv_budget_tokens,
                    kv_tokens_per_request_token: rb
                        .kv_tokens_per_request_token
                        .unwrap_or(d.kv_tokens_per_request_token),
                    swap_bandwidth_tokens_per_s: rb
                        .swap_bandwidth_tokens_per_s
                        .unwrap_or(d.swap_bandwidth_tokens_per_s),
                    latency_overrides: rb.latency,
                    power_overrides: rb.power,
                };
                // Surface bad overrides at parse time rather than per config.
                sim.resolve_profile(&base.device_profile)?;
                BackendSpec::Simulator(sim)
            }
            "http" => {
                let url = rb.url.ok_or_else(|| {
                    SweepError::Spec("[backend] kind = \"http\" needs url".into())
                })?;
                let power_trace = rb.power_trace.ok_or_else(|| {
                    SweepError::Spec("[backend] kind = \"http\" needs power_trace".into())
                })?;
                BackendSpec::Http(super::HttpBackendSpec {
                    url,
                    reset_url: rb.reset_url,
                    power_trace: resolve(base_dir, PathBuf::from(power_trace))
                        .to_string_lossy()
                        .into_owned(),
                    clock_origin: rb.clock_origin.unwrap_or_else(|| "unix".into()),
                    bearer_token_env: rb.bearer_token_env,
                    timeout_s: rb.timeout_s.unwrap_or(600.0),
                })
            }
            other => return Err(SweepError::Spec(format!("unknown backend kind {other:?}"))),
        };

        let mut grid = Grid::new();
        for (name, dim) in raw.grid {
            if !DIMENSIONS.contains(&name.as_str()) {
                return Err(SweepError::UnknownDimension(name));
            }
            let mut values = dim
                .values
                .iter()
                .map(|v| {
                    GridValue::from_toml(v).ok_or_else(|| {
                        SweepError::Spec(format!("[grid.{name}] values must be numbers or strings"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            values.sort_by(GridValue::cmp_key);
            values.dedup();
            grid.insert(name, values);
        }

        let variables: Vec<&str> = if available_devices.is_some() {
            vec!["available_devices"]
        } else {
            Vec::new()
        };
        let constraints = raw
            .constraints
            .rules
            .iter()
            .map(|r| parse_constraint(r, &variables))
            .collect::<Result<Vec<_>, _>>()?;

        let w = raw.workload;
        let workload = if let Some(path) = w.dataset {
            WorkloadSpec::Dataset(resolve(base_dir, path))
        } else if base.task.is_llm() {
            WorkloadSpec::Synthetic(SynthSpec {
                n_requests: w.n_requests.unwrap_or(256),
                input_mean: w.input_mean.unwrap_or(512.0),
                input_pareto_alpha: w.input_pareto_alpha.unwrap_or(2.5),
                output_mean: w.output_mean.unwrap_or(256.0),
            })
        } else {
            WorkloadSpec::Diffusion {
                n_requests: w.n_requests.unwrap_or(32),
            }
        };

        let a = raw.accounting;
        let steady = SteadyParams {
            gap_tolerance_s: a.gap_tolerance_s,
            min_fraction: a.min_fraction.unwrap_or(0.10),
            allow_unsaturated: a.allow_unsaturated,
        };

        Ok(SweepSpec {
            base,
            backend,
            available_devices,
            grid,
            constraints,
            workload,
            seed: w.seed.unwrap_or(0),
            steady,
            repetitions: a.repetitions.unwrap_or(1).max(1),
        })
    }

    pub fn variables(&self) -> BTreeMap<String, GridValue> {
        let mut vars = BTreeMap::new();
        if let Some(n) = self.available_devices {
            vars.insert("available_devices".into(), GridValue::Int(i64::from(n)));
        }
        vars
    }

    /// Materializes the request set. Synthetic workloads draw from `seed`.
    pub fn workload_source(&self, seed: u64) -> Result<WorkloadSource, SweepError> {
        match &self.workload {
            WorkloadSpec::Synthetic(s) => {
                Ok(WorkloadSource::Llm(simulator::synth_workload(s, seed)?))
            }
            WorkloadSpec::Diffusion { n_requests } => Ok(WorkloadSource::Diffusion {
                n_requests: *n_requests,
            }),
            WorkloadSpec::Dataset(path) => {
                let file = std::fs::File::open(path)?;
                match simulator::parse_workload(std::io::BufReader::new(file))? {
                    SimWorkload::Llm(reqs) => Ok(WorkloadSource::Llm(reqs)),
                    SimWorkload::Diffusion(reqs) => Ok(WorkloadSource::Diffusion {
                        n_requests: reqs.len(),
                    }),
                }
            }
        }
    }

    pub fn options(&self, seed: u64, artifact_root: Option<PathBuf>) -> SweepOptions {
        SweepOptions {
            steady: self.steady,
            repetitions: self.repetitions,
            seed,
            artifact_root,
        }
    }
}

fn resolve(base_dir: &Path, path: PathBuf) -> PathBuf {
    if path.is_absolute() {
        path
    } else {
        base_dir.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::expand_grid;

    fn spec(extra: &str) -> Result<SweepSpec, SweepError> {
        SweepSpec::parse(&format!("[task]\ntask = \"chat\"\n{extra}"), Path::new("."))
    }

    #[test]
    fn batch_grid_of_five() {
        let s = spec(
            "[grid.max_batch_size]\nvalues = [64, 4, 16, 8, 32]\n[grid.tp_degree]\nvalues = [1]\n",
        )
        .unwrap();
        let configs = expand_grid(&s).unwrap();
        let sizes: Vec<u32> = configs.iter().map(|c| c.max_batch_size).collect();
        assert_eq!(sizes, vec![4, 8, 16, 32, 64]);
    }

    #[test]
    fn product_cardinality_and_order() {
        let s = spec(
            "[grid.tp_degree]\nvalues = [1, 2, 4]\n[grid.max_batch_size]\nvalues = [8, 16, 32, 64]\n",
        )
        .unwrap();
        let configs = expand_grid(&s).unwrap();
        assert_eq!(configs.len(), 12);
        // max_batch_size sorts before tp_degree, so it is the outer loop.
        assert_eq!((configs[0].max_batch_size, configs[0].tp_degree), (8, 1));
        assert_eq!((configs[1].max_batch_size, configs[1].tp_degree), (8, 2));
        let again = expand_grid(&s).unwrap();
        assert_eq!(configs, again);
    }

    #[test]
    fn constraints_filter() {
        let s = spec(
            "[grid.tp_degree]\nvalues = [1, 2, 4]\n[constraints]\nrules = [\"tp_degree <= 2\"]\n",
        )
        .unwrap();
        assert_eq!(expand_grid(&s).unwrap().len(), 2);

        let s = spec(
            "[backend]\navailable_devices = 2\n[grid.tp_degree]\nvalues = [1, 2, 4]\n\
             [constraints]\nrules = [\"tp_degree <= available_devices\", \"device_profile == \\\"high-tdp\\\"\"]\n",
        )
        .unwrap();
        assert_eq!(expand_grid(&s).unwrap().len(), 2);

        let s =
            spec("[grid.tp_degree]\nvalues = [4]\n[constraints]\nrules = [\"tp_degree < 2\"]\n")
                .unwrap();
        assert!(matches!(expand_grid(&s), Err(SweepError::EmptyGrid)));
    }

    #[test]
    fn spec_errors() {
        assert!(matches!(
            spec("[grid.flux_capacitor]\nvalues = [1]\n"),
            Err(SweepError::UnknownDimension(_))
        ));
        assert!(matches!(
            spec("[constraints]\nrules = [\"tp_degree ~ 2\"]\n"),
            Err(SweepError::ConstraintParseError { .. })
        ));
        assert!(matches!(
            spec("[constraints]\nrules = [\"gpus <= 2\"]\n"),
            Err(SweepError::ConstraintParseError { .. })
        ));
        assert!(matches!(
            spec("[grid.tp_degree]\nvalues = []\n").and_then(|s| expand_grid(&s)),
            Err(SweepError::EmptyGrid)
        ));
        assert!(matches!(spec("[task\n"), Err(SweepError::Spec(_))));
        assert!(matches!(
            spec("[backend.power]\nwarp_factor = 9\n"),
            Err(SweepError::Spec(_))
        ));
    }

    #[test]
    fn profile_overrides_apply() {
        let s = spec("[backend.power]\nidle_w = 100\n[backend.latency]\ndecode_base_s = 0.01\n")
            .unwrap();
        let BackendSpec::Simulator(sim) = &s.backend else {
            panic!("expected simulator")
        };
        let p = sim.resolve_profile("high-tdp").unwrap();
        assert_eq!(p.power.idle_w, 100.0);
        assert_eq!(p.latency.decode_base_s, 0.01);
        assert_eq!(p.power.max_w, 700.0);
    }
}
