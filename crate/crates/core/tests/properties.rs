use std::collections::BTreeSet;

use proptest::prelude::*;

use rampsim::demand::{
    decode_scenario, encode_scenario, generate_schedule, retarget_schedule, ArrivalProcess, ArrivalSchedule,
    DemandSpec, DesignChoice, Reassignment, ScenarioCode,
};
use rampsim::experiment::{compare, parse_records, write_records, LanePair, ResultRecord};
use rampsim::network::{storage_capacity, DesignVariant, LaneRole, PhaseId};
use rampsim::signal::{controller_step, default_controller, ControllerState, Interval, StepEvent};

const DT: f64 = 0.1;

fn actuation_stream() -> impl Strategy<Value = Vec<u8>> {
    // one bitmask of actuated phases per step
    prop::collection::vec(0u8..32, 1000..4000)
}

fn phases(mask: u8) -> BTreeSet<PhaseId> {
    (1..=5u8).filter(|i| mask & (1 << (i - 1)) != 0).map(PhaseId).collect()
}

fn code() -> impl Strategy<Value = ScenarioCode> {
    (1u8..=3, 1u8..=3, 1u8..=3).prop_map(|(a, b, c)| ScenarioCode::new(a, b, c).unwrap())
}

fn design() -> impl Strategy<Value = DesignChoice> {
    prop::sample::select(vec![
        DesignChoice::BASELINE,
        DesignChoice::EXTENDED,
        DesignChoice::RTO_I,
        DesignChoice::RTO_II,
        DesignChoice::DIVERGE,
    ])
}

fn lane() -> impl Strategy<Value = LaneRole> {
    prop::sample::select(vec![
        LaneRole::Left,
        LaneRole::Middle,
        LaneRole::Short,
        LaneRole::Diverge,
    ])
}

fn record() -> impl Strategy<Value = ResultRecord> {
    (
        design(),
        code(),
        1u64..10,
        lane(),
        0usize..2000,
        0.0f64..2000.0,
        0.0f64..1500.0,
    )
        .prop_map(|(d, code, seed, lane, n, delay, queue)| ResultRecord {
            design: d.variant,
            reassignment: d.reassignment,
            code,
            seed,
            lane,
            n_vehicles: n,
            mean_delay_s: delay,
            max_queue_ft: queue,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greens_stay_within_bounds(stream in actuation_stream()) {
        let config = default_controller();
        let mut state = ControllerState::initial(&config);
        for mask in stream {
            if let StepEvent::GreenEnded { phase, duration, .. } = state.step(&config, DT, &phases(mask)).unwrap() {
                let p = config.phase(phase).unwrap();
                prop_assert!(duration >= p.min_green - 1e-6 && duration <= p.max_green + 1e-6,
                    "phase {} green {}", phase.0, duration);
            }
            // minimum recall keeps every phase called except the one in green
            for id in 1..=5u8 {
                let green = state.interval == Interval::Green && state.active_phase == PhaseId(id);
                prop_assert_eq!(state.pending_calls.contains(&PhaseId(id)), !green);
            }
        }
    }

    #[test]
    fn controller_is_deterministic(stream in actuation_stream()) {
        let config = default_controller();
        let mut a = ControllerState::initial(&config);
        let mut b = ControllerState::initial(&config);
        for mask in stream {
            let (na, ia) = controller_step(&config, &a, DT, &phases(mask)).unwrap();
            let (nb, ib) = controller_step(&config, &b, DT, &phases(mask)).unwrap();
            prop_assert_eq!(&na, &nb);
            prop_assert_eq!(ia, ib);
            // split phasing: at most one phase shows anything but red
            prop_assert!(ia.non_red_phases().count() <= 1);
            a = na;
            b = nb;
        }
    }

    #[test]
    fn compare_is_antisymmetric(delays in prop::collection::vec((0.0f64..500.0, 0.0f64..500.0), 6)) {
        let codes: Vec<ScenarioCode> = ScenarioCode::all().into_iter().take(3).collect();
        let mk = |d: DesignChoice, pick: fn(&(f64, f64)) -> f64| -> Vec<ResultRecord> {
            delays.iter().enumerate().map(|(i, pair)| ResultRecord {
                design: d.variant,
                reassignment: d.reassignment,
                code: codes[i % 3],
                seed: (i / 3) as u64 + 1,
                lane: LaneRole::Middle,
                n_vehicles: 1,
                mean_delay_s: pick(pair),
                max_queue_ft: 0.0,
            }).collect()
        };
        let x = mk(DesignChoice::BASELINE, |p| p.0);
        let y = mk(DesignChoice::EXTENDED, |p| p.1);
        let pairs = [LanePair::same(LaneRole::Middle)];
        let fwd = compare(&x, &y, &pairs).unwrap();
        let back = compare(&y, &x, &pairs).unwrap();
        prop_assert_eq!(fwd.rows.len(), 3);
        for (f, b) in fwd.rows.iter().zip(&back.rows) {
            prop_assert_eq!(f.code, b.code);
            prop_assert!((f.delta_s + b.delta_s).abs() < 1e-9);
            prop_assert!((f.delta_s - (f.variant_delay_s - f.baseline_delay_s)).abs() < 1e-12);
        }
        prop_assert_eq!(fwd.summary[0].decreased, back.summary[0].increased);
    }

    #[test]
    fn result_csv_round_trips(rows in prop::collection::vec(record(), 0..40)) {
        let mut buf = Vec::new();
        write_records(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        prop_assert_eq!(text.lines().count(), rows.len() + 1);
        prop_assert!(text.ends_with('\n'));
        let back = parse_records(text.as_bytes()).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            prop_assert_eq!((a.design, a.reassignment, a.code, a.seed, a.lane, a.n_vehicles),
                (b.design, b.reassignment, b.code, b.seed, b.lane, b.n_vehicles));
            prop_assert!((a.mean_delay_s - b.mean_delay_s).abs() <= 0.0005 + 1e-9);
            prop_assert!((a.max_queue_ft - b.max_queue_ft).abs() <= 0.0005 + 1e-9);
        }
    }

    #[test]
    fn schedules_replay_exactly(code in code(), seed in any::<u64>(), d in design()) {
        let spec = DemandSpec::for_design(DesignChoice::BASELINE, code).unwrap();
        let a = generate_schedule(&spec, seed, 600.0, ArrivalProcess::Poisson).unwrap();
        let b = generate_schedule(&spec, seed, 600.0, ArrivalProcess::Poisson).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.events.windows(2).all(|w| w[0].time <= w[1].time));
        let csv = a.to_csv_string().unwrap();
        let back = ArrivalSchedule::read_csv(csv.as_bytes(), seed, 600.0).unwrap();
        prop_assert_eq!(&back, &a);

        let r = retarget_schedule(&a, d).unwrap();
        prop_assert_eq!(r.events.len(), a.events.len());
        for (x, y) in a.events.iter().zip(&r.events) {
            prop_assert_eq!(x.time.to_bits(), y.time.to_bits());
            prop_assert_eq!((x.entrance, x.movement), (y.entrance, y.movement));
        }
    }

    #[test]
    fn codes_decode_and_encode(code in code()) {
        prop_assert_eq!(encode_scenario(decode_scenario(code)).unwrap(), code);
    }

    #[test]
    fn capacity_is_floor_of_length(length in 0.1f64..2000.0, jam in 5.0f64..40.0) {
        let c = storage_capacity(length, jam).unwrap();
        prop_assert!(c as f64 * jam <= length + 1e-9);
        prop_assert!((c + 1) as f64 * jam > length);
    }
}

#[test]
fn reassigned_totals_are_preserved() {
    for (v, r) in [
        (DesignVariant::Baseline, Reassignment::None),
        (DesignVariant::ExtendedShort, Reassignment::None),
        (DesignVariant::RightTurnOnly, Reassignment::ScenarioI),
        (DesignVariant::RightTurnOnly, Reassignment::ScenarioIi),
        (DesignVariant::AddedDiverge, Reassignment::None),
    ] {
        assert_eq!(rampsim::demand::nw_flows(v, r).unwrap().total(), 1580.0);
    }
}
