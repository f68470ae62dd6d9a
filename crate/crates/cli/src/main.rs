mod fmt;
mod report;

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use energybench_core::accounting::SteadyParams;
use energybench_core::meter::{self, MeterError, TraceKind};
use energybench_core::metrics::{self, EnergySource, RateKind, RateSeries};
use energybench_core::optimizer::{self, OptimizerError};
use energybench_core::simulator::{self, DeviceProfile, SimConfig, SimWorkload, SynthSpec};
use energybench_core::sweep::{
    self, Backend, BackendSpec, HttpBackend, RunOutcome, SimulatorBackend, SweepError, SweepSpec,
};
use energybench_core::telemetry::{self, TelemetryError};
use energybench_core::{LatencyMetric, PreemptionMode, Task};

use crate::fmt::{g6, json_string, parse_seconds};

#[derive(Parser)]
#[command(
    name = "energybench",
    version,
    about = "Measure, account, and optimize inference energy"
)]
struct Cli {
    /// Results store directory.
    #[arg(
        long,
        global = true,
        env = "ENERGYBENCH_STORE",
        default_value = "energybench-store"
    )]
    store: PathBuf,
    /// Seed for workload synthesis; overrides the seed in the sweep file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a sweep spec, run every config, and persist results.
    Run {
        spec: PathBuf,
        /// Print the expanded grid and exit.
        #[arg(long)]
        dry_run: bool,
        /// Exit non-zero if any config fails.
        #[arg(long)]
        strict: bool,
    },
    /// Account energy for a power trace and serving log.
    Analyze(AnalyzeArgs),
    /// Recommend the minimum-energy config meeting a latency target.
    Recommend {
        /// Latency metric; defaults to tpot for chat and e2e otherwise.
        #[arg(long)]
        metric: Option<LatencyMetric>,
        /// Latency target, e.g. 0.1, 100ms, 5s.
        #[arg(long, value_parser = parse_seconds)]
        target: f64,
        /// Restrict to one task when the store mixes several.
        #[arg(long)]
        task: Option<Task>,
    },
    /// Write tables and time-energy plots for the store.
    Report {
        #[arg(long, value_delimiter = ',', default_value = "csv,md,svg")]
        format: Vec<ReportFormat>,
        /// Output directory; defaults to the store.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        metric: Option<LatencyMetric>,
        /// Adds a recommendation block to the Markdown report.
        #[arg(long, value_parser = parse_seconds)]
        target: Option<f64>,
    },
    /// Simulate one config and write its trace, serving log, and ledger.
    Simulate(SimulateArgs),
    /// Generate a synthetic LLM request dataset.
    SynthDataset {
        #[arg(long, default_value_t = 256)]
        n_requests: usize,
        #[arg(long, default_value_t = 512.0)]
        input_mean: f64,
        #[arg(long, default_value_t = 2.5)]
        input_alpha: f64,
        #[arg(long, default_value_t = 256.0)]
        output_mean: f64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Md,
    Svg,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    task: Task,
    /// Configured maximum batch size (LLM tasks).
    #[arg(long, default_value_t = 1)]
    max_batch_size: u32,
    #[arg(long)]
    gap_tolerance: Option<f64>,
    #[arg(long, default_value_t = 0.10)]
    min_fraction: f64,
    /// Use the central half of the run when no steady state exists.
    #[arg(long)]
    allow_unsaturated: bool,
    /// Required clock origin of the trace.
    #[arg(long)]
    clock_origin: Option<String>,
    /// Electricity price series (JSONL, or CSV with t_start,rate).
    #[arg(long)]
    prices: Option<PathBuf>,
    /// Carbon intensity series (JSONL, or CSV with t_start,rate).
    #[arg(long)]
    carbon: Option<PathBuf>,
    /// Series time minus run time; defaults to aligning series start with run start.
    #[arg(long, allow_hyphen_values = true)]
    rate_offset: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "chat")]
    task: Task,
    #[arg(long, default_value = "high-tdp")]
    profile: String,
    #[arg(long, default_value_t = 8)]
    max_batch_size: u32,
    #[arg(long, default_value_t = 1)]
    tp: u32,
    #[arg(long, default_value = "recompute")]
    preemption: PreemptionMode,
    #[arg(long)]
    kv_budget: Option<u64>,
    #[arg(long, default_value_t = 0.01)]
    sampling_interval: f64,
    #[arg(long, default_value = "cumulative-energy")]
    trace_kind: TraceKindArg,
    /// Request dataset (JSONL); otherwise a synthetic one is drawn.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    n_requests: usize,
    #[arg(long, default_value_t = 512.0)]
    input_mean: f64,
    #[arg(long, default_value_t = 256.0)]
    output_mean: f64,
    #[arg(long, default_value_t = 25)]
    steps: u32,
    #[arg(long, default_value_t = 512)]
    resolution: u32,
    /// Output directory for power.jsonl, serving.jsonl and ledger.jsonl.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceKindArg {
    InstantaneousPower,
    CumulativeEnergy,
}

/// An error with its process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CmdResult = Result<(), Failure>;

trait WithCode<T> {
    fn code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}

const EXIT_INTERNAL: u8 = 1;
const EXIT_SPEC: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_EMPTY: u8 = 4;

fn meter_code(e: &MeterError) -> u8 {
    match e {
        MeterError::Io(_) => EXIT_INTERNAL,
        MeterError::NoTraces | MeterError::EmptyTrace { .. } => EXIT_EMPTY,
        _ => EXIT_SPEC,
    }
}

fn sweep_code(e: &SweepError) -> u8 {
    match e {
        SweepError::Spec(_)
        | SweepError::UnknownDimension(_)
        | SweepError::ConstraintParseError { .. }
        | SweepError::InvalidConfig(_)
        | SweepError::Sim(_)
        | SweepError::Telemetry(TelemetryError::MalformedRecord { .. }) => EXIT_SPEC,
        SweepError::Meter(m) => meter_code(m),
        SweepError::EmptyGrid | SweepError::Telemetry(TelemetryError::EmptyInput) => EXIT_EMPTY,
        _ => EXIT_INTERNAL,
    }
}

fn sweep_fail(e: SweepError) -> Failure {
    Failure {
        code: sweep_code(&e),
        error: e.into(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match &cli.command {
        Command::Run {
            spec,
            dry_run,
            strict,
        } => cmd_run(&cli, spec, *dry_run, *strict),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Recommend {
            metric,
            target,
            task,
        } => cmd_recommend(&cli.store, *metric, *target, *task),
        Command::Report {
            format,
            out,
            metric,
            target,
        } => cmd_report(&cli.store, format, out.as_deref(), *metric, *target),
        Command::Simulate(args) => cmd_simulate(args, cli.seed.unwrap_or(0)),
        Command::SynthDataset {
            n_requests,
            input_mean,
            input_alpha,
            output_mean,
            out,
        } => cmd_synth(
            &SynthSpec {
                n_requests: *n_requests,
                input_mean: *input_mean,
                input_pareto_alpha: *input_alpha,
                output_mean: *output_mean,
            },
            cli.seed.unwrap_or(0),
            out.as_deref(),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_run(cli: &Cli, spec_path: &Path, dry_run: bool, strict: bool) -> CmdResult {
    let spec = SweepSpec::from_file(spec_path)
        .map_err(|e| match e {
            SweepError::Io(io) => SweepError::Spec(format!("{}: {io}", spec_path.display())),
            other => other,
        })
        .map_err(sweep_fail)?;
    let configs = sweep::expand_grid(&spec).map_err(sweep_fail)?;
    if dry_run {
        println!("{} configs", configs.len());
        for c in &configs {
            println!("{} {} {}", c.config_id, c.task, c.label());
        }
        return Ok(());
    }
    let seed = cli.seed.unwrap_or(spec.seed);
    let workload = spec.workload_source(seed).map_err(sweep_fail)?;
    let backend: Box<dyn Backend> = match &spec.backend {
        BackendSpec::Simulator(sim) => Box::new(SimulatorBackend::new(sim.clone())),
        BackendSpec::Http(http) => Box::new(HttpBackend::new(http.clone()).map_err(sweep_fail)?),
    };
    let options = spec.options(seed, Some(cli.store.clone()));
    let n = configs.len();
    let outcomes =
        sweep::run_sweep_with_progress(&configs, backend.as_ref(), &workload, &options, |i, o| {
            let c = o.config();
            match o {
                RunOutcome::Ok(r) => {
                    let metric = c.task.default_latency_metric();
                    println!(
                        "[{}/{n}] {} {}: ok, {} J/request, mean {} {} s",
                        i + 1,
                        c.config_id,
                        c.label(),
                        g6(r.energy_per_request_j),
                        metric,
                        r.latency(metric).map(g6).unwrap_or_else(|| "-".into())
                    );
                }
                RunOutcome::Failed { error, .. } => {
                    println!(
                        "[{}/{n}] {} {}: failed: {error}",
                        i + 1,
                        c.config_id,
                        c.label()
                    );
                }
            }
        })
        .map_err(sweep_fail)?;
    sweep::persist_results(&outcomes, &cli.store).map_err(sweep_fail)?;
    let failed = outcomes.iter().filter(|o| o.result().is_none()).count();
    println!(
        "{} runs: {} ok, {failed} failed; results in {}",
        outcomes.len(),
        outcomes.len() - failed,
        cli.store.display()
    );
    if failed > 0 {
        log::warn!("{failed} config(s) failed");
        if strict {
            return Err(Failure {
                code: EXIT_INTERNAL,
                error: anyhow!("{failed} config(s) failed (--strict)"),
            });
        }
    }
    Ok(())
}

fn load_rates(path: &Path, kind: RateKind) -> Result<RateSeries, Failure> {
    let file = fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .code(EXIT_SPEC)?;
    let series = if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        metrics::parse_rate_csv(file, kind, None)
    } else {
        metrics::parse_rate_series(BufReader::new(file))
    };
    series
        .with_context(|| format!("parsing {}", path.display()))
        .code(EXIT_SPEC)
}

fn cmd_analyze(a: &AnalyzeArgs) -> CmdResult {
    let open = |p: &Path| {
        fs::File::open(p)
            .map(BufReader::new)
            .with_context(|| format!("opening {}", p.display()))
            .code(EXIT_SPEC)
    };
    let set = meter::parse_power_trace(open(&a.trace)?).map_err(|e| Failure {
        code: meter_code(&e),
        error: anyhow::Error::new(e).context(format!("parsing {}", a.trace.display())),
    })?;
    if let Some(origin) = &a.clock_origin {
        set.check_clock_origin(origin).code(EXIT_SPEC)?;
    }
    let log = telemetry::parse_serving_log(open(&a.log)?).map_err(|e| Failure {
        code: if matches!(e, TelemetryError::EmptyInput) {
            EXIT_EMPTY
        } else {
            EXIT_SPEC
        },
        error: anyhow::Error::new(e).context(format!("parsing {}", a.log.display())),
    })?;
    let steady = SteadyParams {
        gap_tolerance_s: a.gap_tolerance,
        min_fraction: a.min_fraction,
        allow_unsaturated: a.allow_unsaturated,
    };
    let analysis = sweep::analyze_run(a.task, a.max_batch_size, &set.traces, &log, &steady)
        .map_err(sweep_fail)?;
    let (t0, t1) = analysis.run_window;
    let mut doc = json!({
        "task": a.task,
        "method": analysis.account.method,
        "energy_per_request_j": analysis.account.energy_per_request,
        "energy_per_token_j": analysis.account.energy_per_token,
        "steady_window": analysis.account.steady_window,
        "mean_tpot_s": analysis.latency.mean_tpot,
        "mean_ttft_s": analysis.latency.mean_ttft,
        "mean_e2e_s": analysis.latency.mean_e2e,
        "throughput": analysis.throughput,
        "avg_power_w": analysis.avg_power_w,
        "throughput_per_watt": if analysis.avg_power_w > 0.0 { Some(analysis.throughput / analysis.avg_power_w) } else { None },
        "total_energy_j": analysis.total_energy_j,
        "run_window": [t0, t1],
        "completed_requests": analysis.completed_requests,
        "preemptions": analysis.preemptions,
        "tdp_ratio": analysis.tdp_ratio,
        "flags": analysis.flags,
    });
    let source = EnergySource::Traces {
        traces: &set.traces,
        t0,
        t1,
    };
    let rate_code = |e: metrics::MetricsError| Failure {
        code: EXIT_SPEC,
        error: e.into(),
    };
    if let Some(p) = &a.prices {
        let rates = load_rates(p, RateKind::PriceUsdPerKwh)?;
        doc["electricity_cost_usd"] =
            json!(metrics::electricity_cost(&source, &rates, a.rate_offset).map_err(rate_code)?);
    }
    if let Some(p) = &a.carbon {
        let rates = load_rates(p, RateKind::CarbonGPerKwh)?;
        doc["carbon_g"] =
            json!(metrics::carbon_emissions(&source, &rates, a.rate_offset).map_err(rate_code)?);
    }
    println!("{}", json_string(&doc));
    Ok(())
}

fn load_store(store: &Path) -> Result<Vec<sweep::RunResult>, Failure> {
    let results = sweep::load_results(store).map_err(sweep_fail)?;
    if results.is_empty() {
        return Err(Failure {
            code: EXIT_EMPTY,
            error: anyhow!("no successful runs in {}", store.display()),
        });
    }
    Ok(results)
}

fn cmd_recommend(
    store: &Path,
    metric: Option<LatencyMetric>,
    target: f64,
    task: Option<Task>,
) -> CmdResult {
    let results = load_store(store)?;
    let task = match task {
        Some(t) => t,
        None => {
            let first = results[0].config.task;
            if results.iter().any(|r| r.config.task != first) {
                return Err(Failure {
                    code: EXIT_SPEC,
                    error: anyhow!("store mixes several tasks; pass --task"),
                });
            }
            first
        }
    };
    let runs: Vec<_> = results
        .into_iter()
        .filter(|r| r.config.task == task)
        .collect();
    let metric = metric.unwrap_or(task.default_latency_metric());
    let points = optimizer::points_from_results(&runs, metric);
    if points.is_empty() {
        return Err(Failure {
            code: EXIT_EMPTY,
            error: anyhow!("no {task} runs report mean {metric}"),
        });
    }
    match optimizer::recommend(&points, metric.as_str(), target) {
        Ok(rec) => {
            println!("{}", json_string(&rec.document()));
            Ok(())
        }
        Err(e @ OptimizerError::NoFeasiblePoint { min_latency, .. }) => {
            println!(
                "{}",
                json_string(&json!({
                    "metric": metric.as_str(),
                    "target": target,
                    "feasible": false,
                    "min_achievable_latency": min_latency,
                }))
            );
            Err(Failure {
                code: EXIT_INFEASIBLE,
                error: e.into(),
            })
        }
        Err(e) => Err(Failure {
            code: EXIT_SPEC,
            error: e.into(),
        }),
    }
}

fn cmd_report(
    store: &Path,
    formats: &[ReportFormat],
    out: Option<&Path>,
    metric: Option<LatencyMetric>,
    target: Option<f64>,
) -> CmdResult {
    let results = load_store(store)?;
    let groups = report::group(&results, metric, target);
    let out = out.unwrap_or(store);
    fs::create_dir_all(out).code(EXIT_INTERNAL)?;
    let write = |name: String, body: String| -> CmdResult {
        let path = out.join(name);
        fs::write(&path, body)
            .with_context(|| format!("writing {}", path.display()))
            .code(EXIT_INTERNAL)?;
        println!("wrote {}", path.display());
        Ok(())
    };
    for f in formats {
        match f {
            ReportFormat::Csv => write("report.csv".into(), report::csv(&groups))?,
            ReportFormat::Md => write("report.md".into(), report::markdown(&groups))?,
            ReportFormat::Svg => {
                for g in groups.iter().filter(|g| !g.points.is_empty()) {
                    write(format!("frontier-{}.svg", g.task), report::svg(g))?;
                }
            }
        }
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, seed: u64) -> CmdResult {
    let profile = DeviceProfile::by_name(&a.profile)
        .ok_or_else(|| {
            anyhow!(
                "unknown profile {:?}; known: {}",
                a.profile,
                DeviceProfile::NAMES.join(", ")
            )
        })
        .code(EXIT_SPEC)?;
    let config = SimConfig {
        max_batch_size: a.max_batch_size,
        tp_degree: a.tp,
        kv_budget_tokens: a.kv_budget.unwrap_or(profile.kv_budget_tokens),
        preemption_mode: a.preemption,
        sampling_interval_s: a.sampling_interval,
        trace_kind: match a.trace_kind {
            TraceKindArg::InstantaneousPower => TraceKind::InstantaneousPower,
            TraceKindArg::CumulativeEnergy => TraceKind::CumulativeEnergy,
        },
        seed,
        ..SimConfig::default()
    };
    let workload = match (&a.dataset, a.task.is_llm()) {
        (Some(path), _) => {
            let file = fs::File::open(path)
                .with_context(|| format!("opening {}", path.display()))
                .code(EXIT_SPEC)?;
            simulator::parse_workload(BufReader::new(file)).code(EXIT_SPEC)?
        }
        (None, true) => SimWorkload::Llm(
            simulator::synth_workload(
                &SynthSpec {
                    n_requests: a.n_requests,
                    input_mean: a.input_mean,
                    input_pareto_alpha: 2.5,
                    output_mean: a.output_mean,
                },
                seed,
            )
            .code(EXIT_SPEC)?,
        ),
        (None, false) => SimWorkload::Diffusion(
            (0..a.n_requests)
                .map(|i| simulator::DiffusionRequest {
                    id: format!("img{i}"),
                    steps: a.steps,
                    resolution: a.resolution,
                })
                .collect(),
        ),
    };
    let out = simulator::simulate(&config, &workload, &profile.latency, &profile.power)
        .code(EXIT_SPEC)?;
    fs::create_dir_all(&a.out).code(EXIT_INTERNAL)?;
    let create = |name: &str| {
        fs::File::create(a.out.join(name))
            .map(BufWriter::new)
            .code(EXIT_INTERNAL)
    };
    meter::write_power_traces(create("power.jsonl")?, &out.traces, Some("run"))
        .code(EXIT_INTERNAL)?;
    out.log
        .write(create("serving.jsonl")?)
        .code(EXIT_INTERNAL)?;
    simulator::write_ledger(create("ledger.jsonl")?, &out.ledger).code(EXIT_INTERNAL)?;
    println!(
        "{}",
        json_string(&json!({
            "requests": workload.len(),
            "total_energy_j": out.total_energy(),
            "makespan_s": out.makespan(),
            "preemptions": out.preemption_count(),
            "out": a.out,
        }))
    );
    Ok(())
}

fn cmd_synth(spec: &SynthSpec, seed: u64, out: Option<&Path>) -> CmdResult {
    let reqs = simulator::synth_workload(spec, seed).code(EXIT_SPEC)?;
    let workload = SimWorkload::Llm(reqs);
    match out {
        Some(p) => {
            let f = fs::File::create(p)
                .with_context(|| format!("creating {}", p.display()))
                .code(EXIT_INTERNAL)?;
            simulator::write_workload(BufWriter::new(f), &workload).code(EXIT_INTERNAL)
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            simulator::write_workload(&mut lock, &workload).code(EXIT_INTERNAL)?;
            lock.flush().code(EXIT_INTERNAL)
        }
    }
}
