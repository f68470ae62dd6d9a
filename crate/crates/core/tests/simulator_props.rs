use energybench_core::accounting::{detect_steady_state, llm_account, SteadyParams};
use energybench_core::meter::{merge_energy, write_power_traces, TraceKind};
use energybench_core::simulator::{
    simulate, synth_workload, write_ledger, DeviceProfile, LedgerPhase, LlmRequest, SimConfig,
    SimWorkload, SynthSpec,
};
use energybench_core::telemetry::{batch_timeline, Phase};
use energybench_core::PreemptionMode;
use proptest::prelude::*;

fn workload() -> impl Strategy<Value = Vec<LlmRequest>> {
    prop::collection::vec((1u64..300, 1u64..100), 1..48).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (input_tokens, output_tokens))| LlmRequest {
                id: format!("r{i}"),
                input_tokens,
                output_tokens,
            })
            .collect()
    })
}

fn config() -> impl Strategy<Value = SimConfig> {
    (
        1u32..24,
        prop::sample::select(vec![1u32, 2, 4]),
        prop::sample::select(vec![800u64, 3_000, 2_000_000]),
        any::<bool>(),
        prop::sample::select(vec![0.001, 0.01, 0.05]),
        any::<bool>(),
    )
        .prop_map(|(b, tp, kv, swap, dt, inst)| SimConfig {
            max_batch_size: b,
            tp_degree: tp,
            kv_budget_tokens: kv,
            preemption_mode: if swap {
                PreemptionMode::Swap
            } else {
                PreemptionMode::Recompute
            },
            sampling_interval_s: dt,
            trace_kind: if inst {
                TraceKind::InstantaneousPower
            } else {
                TraceKind::CumulativeEnergy
            },
            ..SimConfig::default()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariants_hold(reqs in workload(), cfg in config()) {
        let p = DeviceProfile::high_tdp();
        let Ok(out) = simulate(&cfg, &SimWorkload::Llm(reqs.clone()), &p.latency, &p.power) else {
            return Ok(());
        };
        let tp = f64::from(cfg.tp_degree);
        let bound = 2.0 * cfg.sampling_interval_s * p.power.max_w * tp;
        for e in &out.ledger {
            let measured = merge_energy(&out.traces, e.t_start, e.t_end).unwrap();
            prop_assert!((measured - e.energy_j).abs() <= bound + 1e-9 * e.energy_j,
                "{:?}: measured {} ledger {}", e.phase, measured, e.energy_j);
        }
        for tr in &out.traces {
            if tr.kind == TraceKind::InstantaneousPower {
                prop_assert!(tr.samples.iter().all(|s| s.value <= p.power.max_w));
            }
        }
        for it in &out.log.iterations {
            prop_assert!(it.batch_size <= cfg.max_batch_size);
        }
        let decoded: u64 = out.log.iterations.iter().filter(|i| i.phase == Phase::Decode).map(|i| i.tokens_emitted).sum();
        let produced: u64 = out.log.records.iter().map(|r| r.output_tokens).sum();
        prop_assert_eq!(decoded, produced);
        prop_assert_eq!(out.log.records.len(), reqs.len());
        if cfg.trace_kind == TraceKind::CumulativeEnergy {
            // Counter samples land on every event boundary, so whole-run energy is exact.
            let total: f64 = out.ledger.iter().map(|e| e.energy_j).sum();
            let metered = merge_energy(&out.traces, 0.0, out.makespan()).unwrap();
            prop_assert!((metered - total).abs() <= 1e-9 * total);
        }
    }

    #[test]
    fn deterministic(reqs in workload(), cfg in config()) {
        let p = DeviceProfile::mid_tdp();
        let w = SimWorkload::Llm(reqs);
        let a = simulate(&cfg, &w, &p.latency, &p.power);
        let b = simulate(&cfg, &w, &p.latency, &p.power);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                let bytes = |o: &energybench_core::simulator::SimOutput| {
                    let mut v = Vec::new();
                    write_power_traces(&mut v, &o.traces, Some("run")).unwrap();
                    o.log.write(&mut v).unwrap();
                    write_ledger(&mut v, &o.ledger).unwrap();
                    v
                };
                prop_assert_eq!(bytes(&a), bytes(&b));
            }
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            _ => prop_assert!(false, "one run failed and the other did not"),
        }
    }

    #[test]
    fn steady_energy_per_token_matches_ledger(seed in 0u64..10_000, batch in prop::sample::select(vec![4u32, 8, 16, 32])) {
        let p = DeviceProfile::high_tdp();
        let reqs = synth_workload(&SynthSpec { n_requests: 8 * batch as usize, input_mean: 256.0, input_pareto_alpha: 2.5, output_mean: 96.0 }, seed).unwrap();
        let cfg = SimConfig { max_batch_size: batch, sampling_interval_s: 0.001, ..SimConfig::default() };
        let out = simulate(&cfg, &SimWorkload::Llm(reqs), &p.latency, &p.power).unwrap();
        let tl = batch_timeline(&out.log.iterations).unwrap();
        let Ok(w) = detect_steady_state(&tl, batch, &SteadyParams::default()) else {
            return Ok(());
        };
        let acc = llm_account(&out.traces, &out.log.records, &out.log.iterations, &w).unwrap();
        // Oracle: ledger energy of every event inside the window over the
        // decode tokens whose iteration midpoint lies inside it.
        let energy: f64 = out.ledger.iter()
            .map(|e| {
                let overlap = (e.t_end.min(w.t1) - e.t_start.max(w.t0)).max(0.0);
                e.energy_j * overlap / (e.t_end - e.t_start)
            })
            .sum();
        let tokens: u64 = out.ledger.iter()
            .filter(|e| e.phase == LedgerPhase::Decode && e.midpoint() >= w.t0 && e.midpoint() <= w.t1)
            .map(|e| e.tokens)
            .sum();
        let oracle = energy / tokens as f64;
        let got = acc.energy_per_token.unwrap();
        prop_assert!((got - oracle).abs() <= 1e-6 * oracle, "got {} oracle {}", got, oracle);
    }
}

#[test]
fn amortization_over_batch_grid() {
    let p = DeviceProfile::high_tdp();
    for seed in 0..4 {
        let reqs = synth_workload(
            &SynthSpec {
                n_requests: 384,
                input_mean: 512.0,
                input_pareto_alpha: 2.5,
                output_mean: 256.0,
            },
            seed,
        )
        .unwrap();
        let mut prev = f64::INFINITY;
        for batch in [4u32, 8, 16, 32, 64] {
            let cfg = SimConfig {
                max_batch_size: batch,
                ..SimConfig::default()
            };
            let out =
                simulate(&cfg, &SimWorkload::Llm(reqs.clone()), &p.latency, &p.power).unwrap();
            assert_eq!(out.preemption_count(), 0);
            let tl = batch_timeline(&out.log.iterations).unwrap();
            let w = detect_steady_state(&tl, batch, &SteadyParams::default()).unwrap();
            let e = llm_account(&out.traces, &out.log.records, &out.log.iterations, &w)
                .unwrap()
                .energy_per_request;
            assert!(e <= prev, "seed {seed} batch {batch}: {e} > {prev}");
            prev = e;
        }
    }
}
