use proptest::prelude::*;

use reachguard::data::{coverage, estimate_accel_bounds, min_time_headway, synth_trace, EstimateOptions, Scenario};
use reachguard::levelset::{initial_payoff, GridSpec, SafetyCriterion};
use reachguard::sim::{simulate, LeadProfile, SimSetup};
use reachguard::{AccelBounds, ControllerParams, State, Variant, VehicleModel};

fn scenario() -> impl Strategy<Value = Scenario> {
    prop::sample::select(Scenario::ALL.to_vec())
}

fn state() -> impl Strategy<Value = State> {
    (0.0..50.0f64, -15.0..15.0f64, 0.0..30.0f64).prop_map(|(x, vr, va)| State::new(x, vr, va))
}

fn variant() -> impl Strategy<Value = Variant> {
    prop::sample::select(vec![Variant::Original, Variant::Modified])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn command_stays_in_range_and_grows_with_gap(s in state(), extra in 0.0..20.0f64, v in variant()) {
        let p = ControllerParams::original().with_variant(v).unwrap();
        let near = p.command_speed(&s);
        let far = p.command_speed(&State::new(s.x_rel + extra, s.v_rel, s.v_av));
        prop_assert!((0.0..=p.speed_cap()).contains(&near));
        prop_assert!(far >= near);
    }

    #[test]
    fn boundaries_are_ordered(vr in -15.0..15.0f64, va in 0.0..30.0f64, v in variant()) {
        let p = ControllerParams::original().with_variant(v).unwrap();
        let [a, b, c] = p.zone_boundaries(vr, va);
        prop_assert!(a < b && b < c);
    }

    #[test]
    fn synthetic_drivers_keep_headway(sc in scenario(), seed in any::<u64>()) {
        let trace = synth_trace(sc, 180.0, 0.1, seed).unwrap();
        let h = min_time_headway(std::slice::from_ref(&trace), 1.0).unwrap_or(f64::INFINITY);
        prop_assert!(h >= 0.4, "{sc} seed {seed}: headway {h}");
    }

    #[test]
    fn estimate_ignores_trace_order(seeds in prop::collection::vec((scenario(), 0u64..1000), 2..5)) {
        let traces: Vec<_> = seeds.iter().map(|&(sc, seed)| synth_trace(sc, 60.0, 0.1, seed).unwrap()).collect();
        let mut reversed = traces.clone();
        reversed.reverse();
        let opts = EstimateOptions::default();
        prop_assert_eq!(estimate_accel_bounds(&traces, &opts).unwrap(), estimate_accel_bounds(&reversed, &opts).unwrap());
    }

    #[test]
    fn coverage_counts_nest(sc in scenario(), seed in 0u64..1000, margin in 0.0..5.0f64) {
        let trace = synth_trace(sc, 60.0, 0.1, seed).unwrap();
        let field = initial_payoff(&GridSpec::with_nodes(11).unwrap(), SafetyCriterion::time_headway(1.0).unwrap());
        let r = coverage(&field, &[trace], margin);
        prop_assert!(r.safe <= r.in_domain && r.in_domain <= r.total);
        prop_assert_eq!(r.safe + r.violations.len(), r.in_domain);
    }

    #[test]
    fn series_length_and_collision_flag(speed in 0.0..30.0f64, gap in 1.0..40.0f64, dt in 0.01..0.5f64, duration in 1.0..30.0f64) {
        let lead = LeadProfile::constant(speed, duration).unwrap();
        let setup = SimSetup { dt, initial_speed: Some(20.0), ..SimSetup::new(gap) };
        let r = simulate(&lead, &ControllerParams::original(), &VehicleModel::default(), &AccelBounds::default(), &setup).unwrap();
        prop_assert_eq!(r.samples.len(), (duration / dt).ceil() as usize + 1);
        prop_assert_eq!(r.metrics.collision, r.metrics.min_gap <= 0.0);
        prop_assert!(r.samples.iter().all(|s| s.v_av >= 0.0));
    }
}

#[test]
fn pooled_bounds_match_the_extremes_of_each_trace() {
    let a = synth_trace(Scenario::HardBrake, 120.0, 0.1, 5).unwrap();
    let b = synth_trace(Scenario::RampUp, 120.0, 0.1, 6).unwrap();
    let opts = EstimateOptions { widen: None, ..EstimateOptions::default() };
    let ea = estimate_accel_bounds(std::slice::from_ref(&a), &opts).unwrap();
    let eb = estimate_accel_bounds(std::slice::from_ref(&b), &opts).unwrap();
    let both = estimate_accel_bounds(&[a, b], &opts).unwrap();
    assert_eq!(both.raw[0], ea.raw[0].min(eb.raw[0]));
    assert_eq!(both.raw[1], ea.raw[1].max(eb.raw[1]));
    assert_eq!(both.raw[2], ea.raw[2].min(eb.raw[2]));
    assert_eq!(both.raw[3], ea.raw[3].max(eb.raw[3]));
}
