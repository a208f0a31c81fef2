mod common;

use bellsim::model::{Outcome, Setting, Station};
use bellsim::streams::{
    coincidences_to_csv_string, generate_streams, pair_coincidences, parse_timetag,
    read_coincidences_csv, write_timetag, ClickEvent, ClickStream, Schedule, SettingRule,
};
use bellsim::scenarios::m2_demo_scenario;
use proptest::prelude::*;

fn outcome() -> impl Strategy<Value = Outcome> {
    prop_oneof![Just(Outcome::Plus), Just(Outcome::Minus)]
}

/// Sorted clicks below `horizon` with one fixed setting per station.
fn stream(station: Station, setting: i32, horizon: u64) -> impl Strategy<Value = ClickStream> {
    prop::collection::vec((0..horizon, outcome()), 0..60).prop_map(move |mut raw| {
        raw.sort_by_key(|&(t, _)| t);
        ClickStream {
            station,
            events: raw
                .into_iter()
                .map(|(t, value)| ClickEvent {
                    t,
                    setting: Setting(setting),
                    value,
                })
                .collect(),
        }
    })
}

fn streams(horizon: u64) -> impl Strategy<Value = (ClickStream, ClickStream)> {
    (stream(Station::A, 1, horizon), stream(Station::B, 2, horizon))
}

proptest! {
    #![proptest_config(common::fixed_config(256))]

    #[test]
    fn pairing_is_deterministic((sa, sb) in streams(5_000), w in 1u64..400) {
        prop_assert_eq!(pair_coincidences(&sa, &sb, w).unwrap(), pair_coincidences(&sa, &sb, w).unwrap());
    }

    #[test]
    fn swapping_stations_mirrors_records((sa, sb) in streams(5_000), w in 1u64..400) {
        let fwd = pair_coincidences(&sa, &sb, w).unwrap();
        let rev = pair_coincidences(&sb, &sa, w).unwrap();
        prop_assert_eq!(fwd.records.len(), rev.records.len());
        prop_assert_eq!((fwd.dropped_a, fwd.dropped_b), (rev.dropped_b, rev.dropped_a));
        for (f, r) in fwd.records.iter().zip(&rev.records) {
            prop_assert_eq!((f.window, f.x, f.y, f.a, f.b), (r.window, r.y, r.x, r.b, r.a));
        }
    }

    #[test]
    fn record_count_and_no_double_silence((sa, sb) in streams(5_000), w in 1u64..400) {
        let duration = 5_000u64;
        let p = pair_coincidences(&sa, &sb, w).unwrap();
        prop_assert!(p.records.len() as u64 <= duration.div_ceil(w));
        for r in &p.records {
            prop_assert!(r.a.is_click() || r.b.is_click());
        }
        let clicks = (sa.events.len() + sb.events.len()) as u64;
        let kept = p.records.iter().map(|r| u64::from(r.a.is_click()) + u64::from(r.b.is_click())).sum::<u64>();
        prop_assert_eq!(kept + p.dropped_a + p.dropped_b, clicks);
    }

    #[test]
    fn doubling_the_window_never_adds_records((sa, sb) in streams(5_000), w in 1u64..400) {
        let narrow = pair_coincidences(&sa, &sb, w).unwrap().records.len();
        let wide = pair_coincidences(&sa, &sb, 2 * w).unwrap().records.len();
        prop_assert!(wide <= narrow);
    }

    #[test]
    fn narrow_windows_never_merge(gaps in prop::collection::vec(5u64..50, 1..40), w in 1u64..5) {
        let mut t = 0;
        let events: Vec<ClickEvent> = gaps
            .iter()
            .map(|g| {
                t += g;
                ClickEvent { t, setting: Setting(1), value: Outcome::Plus }
            })
            .collect();
        let n = events.len();
        let sa = ClickStream { station: Station::A, events };
        let p = pair_coincidences(&sa, &ClickStream::new(Station::B), w).unwrap();
        prop_assert_eq!(p.dropped_a, 0);
        prop_assert_eq!(p.records.len(), n);
    }

    #[test]
    fn timetag_files_round_trip(s in stream(Station::A, -3, 1 << 40)) {
        let mut buf = Vec::new();
        write_timetag(&s, &mut buf).unwrap();
        prop_assert_eq!(parse_timetag(buf.as_slice(), Station::A).unwrap(), s);
    }

    #[test]
    fn coincidence_csv_round_trips((sa, sb) in streams(5_000), w in 1u64..400) {
        let records = pair_coincidences(&sa, &sb, w).unwrap().records;
        let text = coincidences_to_csv_string(&records);
        prop_assert_eq!(read_coincidences_csv(text.as_bytes()).unwrap(), records);
    }
}

proptest! {
    #![proptest_config(common::fixed_config(24))]

    #[test]
    fn generated_streams_are_sorted_and_inside_their_windows(seed in any::<u64>(), rate in 0.0f64..=1.0) {
        let model = m2_demo_scenario().unwrap().model;
        let sched = Schedule::windows(500, 100, SettingRule::RoundRobin).unwrap();
        let (sa, sb) = generate_streams(&model, &sched, rate, seed).unwrap();
        for s in [&sa, &sb] {
            prop_assert!(s.is_sorted());
            prop_assert!(s.events.iter().all(|e| e.t < 500 * 100 && e.value.is_click()));
        }
        let p = pair_coincidences(&sa, &sb, 100).unwrap();
        prop_assert_eq!(p.dropped_a + p.dropped_b, 0);
        prop_assert!(p.records.len() <= 500);
    }
}

#[test]
fn rate_zero_produces_no_clicks() {
    let model = m2_demo_scenario().unwrap().model;
    let sched = Schedule::windows(1_000, 10, SettingRule::Random).unwrap();
    let (sa, sb) = generate_streams(&model, &sched, 0.0, 3).unwrap();
    assert!(sa.events.is_empty() && sb.events.is_empty());
}

#[test]
fn lower_rate_thins_clicks() {
    let model = common::random_lhvm(&mut common::rng(4));
    let sched = Schedule::windows(20_000, 10, SettingRule::Random).unwrap();
    let (full, _) = generate_streams(&model, &sched, 1.0, 9).unwrap();
    let (half, _) = generate_streams(&model, &sched, 0.5, 9).unwrap();
    assert_eq!(full.events.len(), 20_000);
    let frac = half.events.len() as f64 / 20_000.0;
    assert!((frac - 0.5).abs() < 5.0 * (0.25f64 / 20_000.0).sqrt(), "{frac}");
}
