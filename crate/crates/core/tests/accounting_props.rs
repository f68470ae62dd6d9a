use energybench_core::accounting::{
    detect_steady_state, diffusion_account, llm_account, steady_window_or_fallback,
    tdp_overestimate_ratio, AccountingError, SteadyParams,
};
use energybench_core::meter::{merge_energy, PowerSample, PowerTrace, TraceKind};
use energybench_core::simulator::{
    simulate, synth_workload, DeviceProfile, DiffusionRequest, SimConfig, SimWorkload, SynthSpec,
};
use energybench_core::telemetry::{batch_timeline, IterationLog, Phase};
use proptest::prelude::*;

const MAX: u32 = 8;
const TOL: f64 = 1.0;

/// Step timeline with a planted saturated window built from `pieces`
/// saturated spans separated by dips shorter than `TOL`, flanked by
/// unsaturated filler and shorter saturated decoys set apart by gaps of at
/// least `2 * TOL`.
#[derive(Debug, Clone)]
struct Planted {
    iterations: Vec<IterationLog>,
    t0: f64,
    t1: f64,
}

fn planted() -> impl Strategy<Value = Planted> {
    (
        prop::collection::vec((1u32..8, 1u32..MAX), 1..6),
        prop::collection::vec(1u32..3, 0..4),
        prop::collection::vec((1u32..8, 1u32..MAX), 1..6),
        prop::collection::vec(1u32..4, 0..3),
        prop::collection::vec(1u32..4, 0..3),
    )
        .prop_map(|(pieces, dips, filler, before, after)| {
            // Units of 0.25 s keep every boundary exact in binary.
            let q = 0.25;
            let mut its = Vec::new();
            let mut t = 0.0;
            let push = |its: &mut Vec<IterationLog>, t: &mut f64, len: f64, b: u32| {
                its.push(IterationLog {
                    t_start: *t,
                    t_end: *t + len,
                    batch_size: b,
                    tokens_emitted: u64::from(b),
                    phase: Phase::Decode,
                });
                *t += len;
            };
            let planted_len: f64 = pieces.iter().map(|p| f64::from(p.0) * q * 4.0).sum::<f64>()
                + dips
                    .iter()
                    .take(pieces.len() - 1)
                    .map(|&d| f64::from(d) * q)
                    .sum::<f64>();
            // Leading filler and decoys, each decoy shorter than the planted window.
            for &d in &before {
                let len = (f64::from(d) * q).min(planted_len / 2.0).max(q);
                push(&mut its, &mut t, len, MAX);
                push(&mut its, &mut t, 2.0 * TOL, 1);
            }
            for &(len, b) in &filler {
                push(&mut its, &mut t, f64::from(len) * q, b);
            }
            push(&mut its, &mut t, 2.0 * TOL, 0);
            let t0 = t;
            for (i, &(len, _)) in pieces.iter().enumerate() {
                push(&mut its, &mut t, f64::from(len) * q * 4.0, MAX);
                if i + 1 < pieces.len() {
                    let dip = dips.get(i).map(|&d| f64::from(d) * q).unwrap_or(0.5);
                    push(&mut its, &mut t, dip, MAX - 1);
                }
            }
            let t1 = t;
            push(&mut its, &mut t, 2.0 * TOL, 2);
            for &d in &after {
                let len = (f64::from(d) * q).min(planted_len / 2.0).max(q);
                push(&mut its, &mut t, len, MAX);
                push(&mut its, &mut t, 2.0 * TOL, 1);
            }
            Planted {
                iterations: its,
                t0,
                t1,
            }
        })
}

fn params(tol: f64) -> SteadyParams {
    SteadyParams {
        gap_tolerance_s: Some(tol),
        min_fraction: 0.0,
        allow_unsaturated: false,
    }
}

proptest! {
    #[test]
    fn detects_planted_window(p in planted()) {
        let tl = batch_timeline(&p.iterations).unwrap();
        let w = detect_steady_state(&tl, MAX, &params(TOL)).unwrap();
        prop_assert_eq!((w.t0, w.t1), (p.t0, p.t1));
        prop_assert!(w.t0 >= tl.run_span.0 && w.t1 <= tl.run_span.1);
        // Saturation fraction agrees with a direct integral of the indicator.
        let sat: f64 = tl
            .segments()
            .iter()
            .filter(|s| s.2 >= MAX)
            .map(|&(a, b, _)| (b.min(w.t1) - a.max(w.t0)).max(0.0))
            .sum();
        prop_assert!((w.saturation_fraction - sat / (w.t1 - w.t0)).abs() < 1e-12);
    }

    #[test]
    fn shrinking_tolerance_never_lengthens(p in planted(), a in 0.0f64..3.0, b in 0.0f64..3.0) {
        let (small, large) = if a < b { (a, b) } else { (b, a) };
        let tl = batch_timeline(&p.iterations).unwrap();
        let ws = detect_steady_state(&tl, MAX, &params(small)).unwrap();
        let wl = detect_steady_state(&tl, MAX, &params(large)).unwrap();
        prop_assert!(ws.duration() <= wl.duration() + 1e-12);
    }

    #[test]
    fn unsaturated_timeline_is_rejected(lens in prop::collection::vec((1u32..10, 0u32..MAX), 1..20)) {
        let mut t = 0.0;
        let its: Vec<IterationLog> = lens
            .iter()
            .map(|&(l, b)| {
                let it = IterationLog { t_start: t, t_end: t + f64::from(l), batch_size: b, tokens_emitted: 1, phase: Phase::Decode };
                t = it.t_end;
                it
            })
            .collect();
        let tl = batch_timeline(&its).unwrap();
        let is_not_found = matches!(
            detect_steady_state(&tl, MAX, &SteadyParams::default()),
            Err(AccountingError::SteadyStateNotFound { .. })
        );
        prop_assert!(is_not_found);
        let fb = steady_window_or_fallback(&tl, MAX, &SteadyParams { allow_unsaturated: true, ..SteadyParams::default() }).unwrap();
        prop_assert!(fb.fallback);
        prop_assert!((fb.t0 - 0.25 * t).abs() < 1e-9 && (fb.t1 - 0.75 * t).abs() < 1e-9);
    }

    #[test]
    fn llm_conservation(seed in 0u64..1000, batch in prop::sample::select(vec![4u32, 8, 16])) {
        let p = DeviceProfile::high_tdp();
        let reqs = synth_workload(&SynthSpec { n_requests: 96, input_mean: 128.0, input_pareto_alpha: 2.5, output_mean: 64.0 }, seed).unwrap();
        let cfg = SimConfig { max_batch_size: batch, ..SimConfig::default() };
        let out = simulate(&cfg, &SimWorkload::Llm(reqs), &p.latency, &p.power).unwrap();
        let tl = batch_timeline(&out.log.iterations).unwrap();
        let params = SteadyParams { allow_unsaturated: true, ..SteadyParams::default() };
        let w = steady_window_or_fallback(&tl, batch, &params).unwrap();
        let acc = llm_account(&out.traces, &out.log.records, &out.log.iterations, &w).unwrap();
        let per_token = acc.energy_per_token.unwrap();
        let sw = acc.steady_window.as_ref().unwrap();
        prop_assert!((per_token * sw.tokens_steady as f64 - sw.energy_steady).abs() <= 1e-9 * sw.energy_steady);
        let total_out: u64 = out.log.records.iter().map(|r| r.output_tokens).sum();
        let sum: f64 = acc.per_request_energy.values().sum();
        prop_assert!((sum - per_token * total_out as f64).abs() <= 1e-9 * sum);
    }

    #[test]
    fn diffusion_conservation(n in 1usize..40, batch in 1u32..10, steps in 1u32..40) {
        let p = DeviceProfile::high_tdp();
        let reqs = (0..n).map(|i| DiffusionRequest { id: format!("i{i}"), steps, resolution: 768 }).collect();
        let cfg = SimConfig { max_batch_size: batch, ..SimConfig::default() };
        let out = simulate(&cfg, &SimWorkload::Diffusion(reqs), &p.latency, &p.power).unwrap();
        let acc = diffusion_account(&out.traces, &out.log.batches).unwrap();
        for b in &out.log.batches {
            let energy = merge_energy(&out.traces, b.t_start, b.t_end).unwrap();
            let sum: f64 = b.request_ids.iter().map(|id| acc.per_request_energy[id]).sum();
            prop_assert!((sum - energy).abs() <= 1e-9 * energy);
        }
    }

    #[test]
    fn tdp_ratio_at_least_one(values in prop::collection::vec(0.0f64..400.0, 2..50), tdp in 400.0f64..1000.0) {
        let samples: Vec<PowerSample> = values.iter().enumerate().map(|(i, &v)| PowerSample { t: i as f64 * 0.1, value: v }).collect();
        let t1 = samples.last().unwrap().t;
        let tr = vec![PowerTrace::new("gpu0", TraceKind::InstantaneousPower, samples)];
        match tdp_overestimate_ratio(&tr, 0.0, t1, tdp, 1) {
            Ok(r) => prop_assert!(r >= 1.0),
            Err(e) => prop_assert_eq!(e, AccountingError::ZeroMeasuredEnergy),
        }
    }
}

#[test]
fn contiguous_saturated_spans_merge_at_zero_tolerance() {
    let its = [
        (0.0, 1.0, MAX),
        (1.0, 2.0, MAX),
        (2.0, 2.5, 3),
        (2.5, 3.0, MAX),
    ]
    .map(|(a, b, s)| IterationLog {
        t_start: a,
        t_end: b,
        batch_size: s,
        tokens_emitted: 1,
        phase: Phase::Decode,
    });
    let tl = batch_timeline(&its).unwrap();
    let w = detect_steady_state(&tl, MAX, &params(0.0)).unwrap();
    assert_eq!((w.t0, w.t1), (0.0, 2.0));
    let w = detect_steady_state(&tl, MAX, &params(0.6)).unwrap();
    assert_eq!((w.t0, w.t1), (0.0, 3.0));
}
