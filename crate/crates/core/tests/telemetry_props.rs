use energybench_core::simulator::{
    simulate, DeviceProfile, DiffusionRequest, LlmRequest, SimConfig, SimWorkload,
};
use energybench_core::telemetry::{
    batch_timeline, latency_metrics, parse_serving_log, IterationLog, Phase, RequestRecord,
};
use energybench_core::PreemptionMode;
use proptest::prelude::*;

fn llm_workload() -> impl Strategy<Value = Vec<LlmRequest>> {
    prop::collection::vec((1u64..400, 1u64..120), 1..40).prop_map(|v| {
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

fn records() -> impl Strategy<Value = Vec<RequestRecord>> {
    prop::collection::vec((0.0f64..10.0, 0.0f64..2.0, 0.0f64..20.0, 1u64..500), 1..50).prop_map(
        |v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (submit, ttft, decode, out))| RequestRecord {
                    request_id: format!("q{i}"),
                    submit_t: submit,
                    first_token_t: Some(submit + ttft),
                    complete_t: submit + ttft + decode,
                    input_tokens: 10,
                    output_tokens: out,
                    preemptions: 0,
                    batch_id: None,
                })
                .collect()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulated_llm_log_round_trips(
        reqs in llm_workload(),
        batch in 1u32..16,
        kv in prop::sample::select(vec![600u64, 2_000, 2_000_000]),
        swap in any::<bool>(),
    ) {
        let p = DeviceProfile::high_tdp();
        let cfg = SimConfig {
            max_batch_size: batch,
            kv_budget_tokens: kv,
            preemption_mode: if swap { PreemptionMode::Swap } else { PreemptionMode::Recompute },
            ..SimConfig::default()
        };
        let Ok(out) = simulate(&cfg, &SimWorkload::Llm(reqs), &p.latency, &p.power) else {
            // Requests larger than the KV budget are rejected up front.
            return Ok(());
        };
        let mut buf = Vec::new();
        out.log.write(&mut buf).unwrap();
        let parsed = parse_serving_log(buf.as_slice()).unwrap();
        prop_assert_eq!(parsed, out.log);
    }

    #[test]
    fn simulated_diffusion_log_round_trips(n in 1usize..30, batch in 1u32..9, steps in 1u32..30) {
        let p = DeviceProfile::mid_tdp();
        let reqs = (0..n)
            .map(|i| DiffusionRequest { id: format!("img{i}"), steps, resolution: 512 })
            .collect();
        let cfg = SimConfig { max_batch_size: batch, ..SimConfig::default() };
        let out = simulate(&cfg, &SimWorkload::Diffusion(reqs), &p.latency, &p.power).unwrap();
        let mut buf = Vec::new();
        out.log.write(&mut buf).unwrap();
        prop_assert_eq!(parse_serving_log(buf.as_slice()).unwrap(), out.log);
    }

    #[test]
    fn latency_is_permutation_invariant(recs in records(), seed in any::<u64>()) {
        let mut shuffled = recs.clone();
        // Deterministic Fisher-Yates from the seed.
        let mut s = seed | 1;
        for i in (1..shuffled.len()).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            shuffled.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let a = latency_metrics(&recs, true).unwrap();
        let b = latency_metrics(&shuffled, true).unwrap();
        prop_assert_eq!(a.mean_tpot, b.mean_tpot);
        prop_assert_eq!(a.mean_ttft, b.mean_ttft);
        prop_assert_eq!(a.mean_e2e, b.mean_e2e);
    }

    #[test]
    fn timeline_integral_matches_iterations(
        steps in prop::collection::vec((0.0f64..0.5, 0.01f64..1.0, 0u32..64), 1..60),
        pick in prop::collection::vec(any::<bool>(), 60),
    ) {
        let mut t = 0.0;
        let its: Vec<IterationLog> = steps
            .iter()
            .map(|&(gap, dur, b)| {
                let it = IterationLog {
                    t_start: t + gap,
                    t_end: t + gap + dur,
                    batch_size: b,
                    tokens_emitted: u64::from(b),
                    phase: Phase::Decode,
                };
                t = it.t_end;
                it
            })
            .collect();
        let tl = batch_timeline(&its).unwrap();
        for (it, &take) in its.iter().zip(&pick) {
            if take {
                let expect = f64::from(it.batch_size) * (it.t_end - it.t_start);
                let got = tl.integral(it.t_start, it.t_end);
                prop_assert!((got - expect).abs() <= 1e-9 * expect.max(1.0));
            }
        }
        let total: f64 = its.iter().map(|i| f64::from(i.batch_size) * (i.t_end - i.t_start)).sum();
        let (a, b) = tl.run_span;
        prop_assert!((tl.integral(a, b) - total).abs() <= 1e-9 * total.max(1.0));
    }
}

#[test]
fn tpot_excludes_first_token_gap() {
    let r = RequestRecord {
        request_id: "a".into(),
        submit_t: 0.0,
        first_token_t: Some(1.0),
        complete_t: 2.0,
        input_tokens: 4,
        output_tokens: 11,
        preemptions: 0,
        batch_id: None,
    };
    let s = latency_metrics(&[r], true).unwrap();
    assert!((s.mean_tpot.unwrap() - 0.1).abs() < 1e-15);
    assert_eq!(s.mean_ttft, Some(1.0));
    assert_eq!(s.mean_e2e, 2.0);
}
