//! CSV, Markdown and SVG renderings of a results store.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use energybench_core::metrics::throughput_per_watt;
use energybench_core::optimizer::{self, ParetoPoint, Recommendation};
use energybench_core::sweep::RunResult;
use energybench_core::{LatencyMetric, Task};

use crate::fmt::g6;

/// Runs of one task with their frontier under that task's latency metric.
pub struct TaskGroup<'a> {
    pub task: Task,
    pub metric: LatencyMetric,
    pub runs: Vec<&'a RunResult>,
    pub points: Vec<ParetoPoint>,
    pub frontier: Vec<ParetoPoint>,
    pub recommendation: Option<Result<Recommendation, optimizer::OptimizerError>>,
}

fn sort_key(r: &RunResult) -> (String, String, u32, u32, u32, u32, String, String) {
    let c = &r.config;
    (
        c.model_id.clone(),
        c.device_profile.clone(),
        c.tp_degree,
        c.max_batch_size,
        c.denoising_steps.unwrap_or(0),
        c.resolution.unwrap_or(0),
        c.preemption_mode.as_str().to_string(),
        c.config_id.clone(),
    )
}

pub fn group<'a>(
    results: &'a [RunResult],
    metric: Option<LatencyMetric>,
    target: Option<f64>,
) -> Vec<TaskGroup<'a>> {
    let mut by_task: BTreeMap<Task, Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        by_task.entry(r.config.task).or_default().push(r);
    }
    by_task
        .into_iter()
        .map(|(task, mut runs)| {
            runs.sort_by_key(|r| sort_key(r));
            let metric = metric.unwrap_or(task.default_latency_metric());
            let owned: Vec<RunResult> = runs.iter().map(|r| (*r).clone()).collect();
            let points = optimizer::points_from_results(&owned, metric);
            let frontier = if points.is_empty() {
                Vec::new()
            } else {
                optimizer::pareto_frontier(&points).unwrap_or_default()
            };
            let recommendation = target
                .filter(|_| !points.is_empty())
                .map(|t| optimizer::recommend(&points, metric.as_str(), t));
            TaskGroup {
                task,
                metric,
                runs,
                points,
                frontier,
                recommendation,
            }
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map(g6).unwrap_or_default()
}

const COLUMNS: [&str; 24] = [
    "config_id",
    "task",
    "model_id",
    "device_profile",
    "tp_degree",
    "max_batch_size",
    "denoising_steps",
    "resolution",
    "preemption_mode",
    "energy_per_request_j",
    "energy_per_token_j",
    "mean_tpot_s",
    "mean_ttft_s",
    "mean_e2e_s",
    "throughput",
    "throughput_unit",
    "avg_power_w",
    "throughput_per_watt",
    "total_energy_j",
    "tdp_ratio",
    "preemptions",
    "latency_metric",
    "on_frontier",
    "flags",
];

fn row(g: &TaskGroup, r: &RunResult) -> Vec<String> {
    let c = &r.config;
    let on_frontier = g.frontier.iter().any(|p| p.config_id == c.config_id);
    vec![
        c.config_id.clone(),
        c.task.to_string(),
        c.model_id.clone(),
        c.device_profile.clone(),
        c.tp_degree.to_string(),
        c.max_batch_size.to_string(),
        c.denoising_steps.map(|v| v.to_string()).unwrap_or_default(),
        c.resolution.map(|v| v.to_string()).unwrap_or_default(),
        if c.task.is_llm() {
            c.preemption_mode.as_str().to_string()
        } else {
            String::new()
        },
        g6(r.energy_per_request_j),
        opt(r.energy_per_token_j),
        opt(r.mean_tpot_s),
        opt(r.mean_ttft_s),
        g6(r.mean_e2e_s),
        g6(r.throughput),
        r.throughput_unit().to_string(),
        g6(r.avg_power_w),
        throughput_per_watt(r).map(g6).unwrap_or_default(),
        g6(r.total_energy_j),
        opt(r.tdp_ratio),
        r.preemptions.to_string(),
        g.metric.to_string(),
        on_frontier.to_string(),
        r.flags.join(";"),
    ]
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn csv(groups: &[TaskGroup]) -> String {
    let mut out = COLUMNS.join(",");
    out.push('\n');
    for g in groups {
        for r in &g.runs {
            let cells: Vec<String> = row(g, r).iter().map(|c| csv_field(c)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
    }
    out
}

pub fn markdown(groups: &[TaskGroup]) -> String {
    let mut out =
        String::from("# Energy benchmark report\n\nLatency aggregation: mean over requests.\n");
    let md_cols = [
        "config_id",
        "config",
        "energy/request (J)",
        "latency (s)",
        "throughput",
        "avg power (W)",
        "throughput/W",
        "TDP ratio",
        "frontier",
    ];
    for g in groups {
        let _ = write!(
            out,
            "\n## Task `{}`\n\nLatency metric: mean {}.\n\n| {} |\n|{}|\n",
            g.task,
            g.metric,
            md_cols.join(" | "),
            md_cols.iter().map(|_| "---").collect::<Vec<_>>().join("|")
        );
        for r in &g.runs {
            let on = g.frontier.iter().any(|p| p.config_id == r.config.config_id);
            let cells = [
                format!("`{}`", r.config.config_id),
                r.config.label(),
                g6(r.energy_per_request_j),
                opt(r.latency(g.metric)),
                format!("{} {}", g6(r.throughput), r.throughput_unit()),
                g6(r.avg_power_w),
                throughput_per_watt(r).map(g6).unwrap_or_default(),
                opt(r.tdp_ratio),
                if on { "yes".into() } else { String::new() },
            ];
            let _ = writeln!(out, "| {} |", cells.join(" | "));
        }
        if !g.frontier.is_empty() {
            let _ = writeln!(
                out,
                "\nPareto frontier ({} points, by latency):\n",
                g.frontier.len()
            );
            for p in &g.frontier {
                let _ = writeln!(
                    out,
                    "- `{}`: {} s, {} J/request",
                    p.config_id,
                    g6(p.latency),
                    g6(p.energy)
                );
            }
        }
        match &g.recommendation {
            Some(Ok(rec)) => {
                let _ = write!(
                    out,
                    "\nRecommendation for mean {} <= {} s: `{}` at {} s and {} J/request; \
                     baseline `{}` at {} s and {} J/request; savings {}.\n",
                    rec.latency_metric_name,
                    g6(rec.target),
                    rec.chosen.config_id,
                    g6(rec.chosen.latency),
                    g6(rec.chosen.energy),
                    rec.baseline.config_id,
                    g6(rec.baseline.latency),
                    g6(rec.baseline.energy),
                    g6(rec.savings_fraction)
                );
            }
            Some(Err(e)) => {
                let _ = write!(out, "\nRecommendation: {e}.\n");
            }
            None => {}
        }
    }
    out
}

/// Scatter of (latency, energy) per run; frontier points are filled and
/// joined by a polyline in latency order.
pub fn svg(g: &TaskGroup) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const M: f64 = 60.0;
    let pts = &g.points;
    let (lx0, lx1) = bounds(pts.iter().map(|p| p.latency));
    let (ey0, ey1) = bounds(pts.iter().map(|p| p.energy));
    let x = |v: f64| M + (v - lx0) / (lx1 - lx0) * (W - 2.0 * M);
    let y = |v: f64| H - M - (v - ey0) / (ey1 - ey0) * (H - 2.0 * M);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(out, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<line x1=\"{M}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        H - M,
        W - M,
        H - M
    );
    let _ = writeln!(
        out,
        "<line x1=\"{M}\" y1=\"{M}\" x2=\"{M}\" y2=\"{}\" stroke=\"black\"/>",
        H - M
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">mean {} (s)</text>",
        W / 2.0,
        H - 15.0,
        g.metric
    );
    let _ = writeln!(
        out,
        "<text x=\"15\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 15 {})\">energy per request (J)</text>",
        H / 2.0,
        H / 2.0
    );
    for (v, anchor) in [(lx0, "start"), (lx1, "end")] {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\" font-size=\"11\">{}</text>",
            g6(x(v)),
            H - M + 16.0,
            g6(v)
        );
    }
    for v in [ey0, ey1] {
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{}</text>",
            M - 4.0,
            g6(y(v) + 4.0),
            g6(v)
        );
    }
    if !g.frontier.is_empty() {
        let coords: Vec<String> = g
            .frontier
            .iter()
            .map(|p| format!("{},{}", g6(x(p.latency)), g6(y(p.energy))))
            .collect();
        let _ = writeln!(
            out,
            "<polyline class=\"frontier\" points=\"{}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\"/>",
            coords.join(" ")
        );
    }
    let mut sorted: Vec<&ParetoPoint> = pts.iter().collect();
    sorted.sort_by(|a, b| a.config_id.cmp(&b.config_id));
    for p in sorted {
        let on = g.frontier.iter().any(|f| f.config_id == p.config_id);
        let (class, fill) = if on {
            ("run frontier", "#d62728")
        } else {
            ("run", "#1f77b4")
        };
        let _ = writeln!(
            out,
            "<circle class=\"{class}\" data-config=\"{}\" cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{fill}\"/>",
            p.config_id,
            g6(x(p.latency)),
            g6(y(p.energy))
        );
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        (lo - pad, hi + pad)
    }
}
