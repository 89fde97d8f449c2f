use reachguard::data::{synth_trace, Scenario};
use reachguard::sim::{simulate, LeadProfile, SimResult, SimSetup};
use reachguard::{AccelBounds, ControllerParams, Variant, VehicleModel};

fn run(params: &ControllerParams, lead: &LeadProfile, setup: &SimSetup) -> SimResult {
    simulate(lead, params, &VehicleModel::default(), &AccelBounds::default(), setup).unwrap()
}

#[test]
fn modified_keeps_a_longer_gap_at_highway_speed() {
    let lead = LeadProfile::constant(25.0, 120.0).unwrap();
    let setup = SimSetup::new(30.0);
    let o = run(&ControllerParams::original(), &lead, &setup).metrics.plateaus[0].steady_gap;
    let m = run(&ControllerParams::modified(), &lead, &setup).metrics.plateaus[0].steady_gap;
    // every boundary moves out by at least h1 · 25 = 10 m
    assert!(m >= o + 10.0 - 1e-6, "original {o}, modified {m}");
}

#[test]
fn modified_gap_grows_across_plateaus() {
    let lead = LeadProfile::steps(&[(5.0, 60.0), (10.0, 60.0), (15.0, 60.0)], 1.0).unwrap();
    let r = run(&ControllerParams::modified(), &lead, &SimSetup::new(12.0));
    let gaps: Vec<f64> = r.metrics.plateaus.iter().map(|p| p.steady_gap).collect();
    assert_eq!(gaps.len(), 3);
    assert!(gaps.windows(2).all(|w| w[1] > w[0]), "{gaps:?}");
}

#[test]
fn zero_headways_reproduce_original_series() {
    let o = ControllerParams::original();
    let m0 = ControllerParams::new(o.omega(), o.alpha(), [0.0; 3], o.speed_cap(), Variant::Modified).unwrap();
    let trace = synth_trace(Scenario::StopAndGo, 120.0, 0.1, 11).unwrap();
    let lead = LeadProfile::from_trace(&trace).unwrap();
    let setup = SimSetup { initial_speed: Some(trace.samples()[0].v_av), ..SimSetup::new(trace.samples()[0].x_rel) };
    assert_eq!(run(&o, &lead, &setup), run(&m0, &lead, &setup));
}

#[test]
fn halving_dt_barely_moves_min_gap() {
    let trace = synth_trace(Scenario::HardBrake, 120.0, 0.1, 4).unwrap();
    let lead = LeadProfile::from_trace(&trace).unwrap();
    for params in [ControllerParams::original(), ControllerParams::modified()] {
        let coarse = SimSetup { dt: 0.05, ..SimSetup::new(20.0) };
        let fine = SimSetup { dt: 0.025, ..coarse };
        let a = run(&params, &lead, &coarse).metrics.min_gap;
        let b = run(&params, &lead, &fine).metrics.min_gap;
        assert!((a - b).abs() < 0.01 * b.abs(), "{} vs {}", a, b);
    }
}

#[test]
fn replaying_a_recorded_drive_is_collision_free() {
    for scenario in Scenario::ALL {
        let trace = synth_trace(scenario, 300.0, 0.1, 1).unwrap();
        let lead = LeadProfile::from_trace(&trace).unwrap();
        let first = trace.samples()[0];
        let setup = SimSetup { initial_speed: Some(first.v_av), ..SimSetup::new(first.x_rel) };
        for params in [ControllerParams::original(), ControllerParams::modified()] {
            let r = run(&params, &lead, &setup);
            assert!(!r.metrics.collision, "{scenario} {}: min gap {}", params.variant(), r.metrics.min_gap);
        }
    }
}
