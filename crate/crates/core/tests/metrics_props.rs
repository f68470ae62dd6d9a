use energybench_core::meter::{PowerSample, PowerTrace, TraceKind};
use energybench_core::metrics::{
    carbon_emissions, electricity_cost, EnergySegment, EnergySource, RateKind, RateSeries,
};
use proptest::prelude::*;

const J_PER_KWH: f64 = 3.6e6;

fn trace(f: impl Fn(f64) -> f64, dt: f64, t_end: f64) -> PowerTrace {
    let n = (t_end / dt).round() as usize;
    let samples = (0..=n)
        .map(|i| PowerSample {
            t: i as f64 * dt,
            value: f(i as f64 * dt),
        })
        .collect();
    PowerTrace::new("gpu0", TraceKind::InstantaneousPower, samples)
}

/// Midpoint Riemann sum at 1 ms of interpolated power times the rate.
fn riemann(tr: &PowerTrace, rates: &RateSeries, t0: f64, t1: f64, offset: f64) -> f64 {
    let h = 0.001;
    let n = ((t1 - t0) / h).round() as usize;
    let h = (t1 - t0) / n as f64;
    let power = |t: f64| {
        let s = &tr.samples;
        let i = s.partition_point(|x| x.t <= t).clamp(1, s.len() - 1);
        let (a, b) = (s[i - 1], s[i]);
        a.value + (b.value - a.value) * (t - a.t) / (b.t - a.t)
    };
    (0..n)
        .map(|k| {
            let t = t0 + (k as f64 + 0.5) * h;
            power(t) * h / J_PER_KWH * rates.rate_at(t + offset).unwrap()
        })
        .sum()
}

fn rate_series() -> impl Strategy<Value = RateSeries> {
    prop::collection::vec((0.5f64..5.0, 0.01f64..0.6), 1..8).prop_map(|v| {
        let mut t = 0.0;
        let segments = v
            .into_iter()
            .map(|(len, r)| {
                let s = (t, r);
                t += len;
                s
            })
            .collect();
        RateSeries::new(RateKind::PriceUsdPerKwh, segments).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cost_matches_riemann_oracle(rates in rate_series(), amp in 0.0f64..200.0, w in 0.2f64..4.0) {
        let f = move |t: f64| 250.0 + amp * (w * t).sin();
        let tr = trace(f, 0.01, 12.0);
        let (t0, t1) = (0.37, 11.81);
        let got = electricity_cost(&EnergySource::Traces { traces: std::slice::from_ref(&tr), t0, t1 }, &rates, Some(0.0)).unwrap();
        let oracle = riemann(&tr, &rates, t0, t1, 0.0);
        prop_assert!((got - oracle).abs() <= 1e-3 * oracle, "got {got} oracle {oracle}");
    }

    #[test]
    fn additive_over_disjoint_windows(rates in rate_series(), cut in 0.1f64..0.9) {
        let tr = trace(|t| 100.0 + 20.0 * t, 0.05, 10.0);
        let m = 0.5 + cut * 9.0;
        let cost = |a: f64, b: f64| {
            electricity_cost(&EnergySource::Traces { traces: std::slice::from_ref(&tr), t0: a, t1: b }, &rates, Some(0.0)).unwrap()
        };
        let whole = cost(0.5, 9.5);
        let parts = cost(0.5, m) + cost(m, 9.5);
        prop_assert!((whole - parts).abs() <= 1e-9 * whole);
    }

    #[test]
    fn homogeneous_in_energy_and_rate(rates in rate_series(), a in 0.01f64..100.0, b in 0.01f64..100.0) {
        let segs = [
            EnergySegment { t0: 0.0, t1: 2.0, energy_j: 5_000.0 },
            EnergySegment { t0: 2.5, t1: 7.0, energy_j: 12_000.0 },
        ];
        let scaled_segs = segs.map(|s| EnergySegment { energy_j: s.energy_j * a, ..s });
        let scaled_rates = RateSeries::new(
            RateKind::PriceUsdPerKwh,
            rates.segments.iter().map(|&(t, r)| (t, r * b)).collect(),
        ).unwrap();
        let base = electricity_cost(&EnergySource::Segments(&segs), &rates, Some(0.0)).unwrap();
        let scaled = electricity_cost(&EnergySource::Segments(&scaled_segs), &scaled_rates, Some(0.0)).unwrap();
        prop_assert!((scaled - a * b * base).abs() <= 1e-9 * scaled.max(1e-12));
    }

    #[test]
    fn flat_rate_is_exact(watts in 1.0f64..1000.0, secs in 1.0f64..100.0, rate in 0.0f64..900.0) {
        let tr = trace(|_| watts, 0.5, secs.ceil());
        let flat = RateSeries::flat(RateKind::CarbonGPerKwh, rate);
        let got = carbon_emissions(&EnergySource::Traces { traces: &[tr], t0: 0.0, t1: secs }, &flat, None).unwrap();
        let expect = watts * secs / J_PER_KWH * rate;
        prop_assert!((got - expect).abs() <= 1e-12 * expect.max(1e-12));
    }
}

#[test]
fn offset_shifts_into_the_rate_series() {
    let rates = RateSeries::new(
        RateKind::PriceUsdPerKwh,
        vec![(0.0, 0.1), (3600.0, 0.3), (7200.0, 0.2)],
    )
    .unwrap();
    let segs = [EnergySegment {
        t0: 0.0,
        t1: 100.0,
        energy_j: J_PER_KWH,
    }];
    let at = |o: f64| electricity_cost(&EnergySource::Segments(&segs), &rates, Some(o)).unwrap();
    assert!((at(0.0) - 0.1).abs() < 1e-12);
    assert!((at(4000.0) - 0.3).abs() < 1e-12);
    // Half the window on each side of a breakpoint.
    assert!((at(3550.0) - 0.2).abs() < 1e-12);
}
