//! Closed-loop replay of the controller behind a lead vehicle.

use std::io::Write;

use crate::controller::{ControllerParams, State};
use crate::data::DriveTrace;
use crate::dynamics::{closed_loop_accel, lambda_gate, vector_field, AccelBounds, VehicleModel};
use crate::error::ParamError;
use crate::levelset::ValueField;

/// Speed below which time headway is not reported (m/s).
pub const HEADWAY_SPEED_FLOOR: f64 = 1.0;
pub const DEFAULT_DT: f64 = 0.05;

/// Lead speed as a piecewise-linear function of time, held constant outside
/// its knots and never negative.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadProfile {
    times: Vec<f64>,
    speeds: Vec<f64>,
}

impl LeadProfile {
    pub fn new(times: Vec<f64>, speeds: Vec<f64>) -> Result<Self, ParamError> {
        if times.is_empty() || times.len() != speeds.len() {
            return Err(ParamError::new("lead profile needs matching, nonempty knot lists"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ParamError::new("lead profile times must be strictly increasing"));
        }
        if times.iter().chain(&speeds).any(|v| !v.is_finite()) {
            return Err(ParamError::new("lead profile must be finite"));
        }
        Ok(Self { times, speeds })
    }

    pub fn constant(speed: f64, duration: f64) -> Result<Self, ParamError> {
        Self::new(vec![0.0, duration], vec![speed, speed])
    }

    /// Speed plateaus `(speed, hold)` joined by ramps at `ramp_accel` m/s².
    pub fn steps(levels: &[(f64, f64)], ramp_accel: f64) -> Result<Self, ParamError> {
        if levels.is_empty() || !(ramp_accel > 0.0) {
            return Err(ParamError::new("step profile needs levels and a positive ramp"));
        }
        let mut times = vec![0.0];
        let mut speeds = vec![levels[0].0];
        let mut t = 0.0;
        for (n, &(speed, hold)) in levels.iter().enumerate() {
            if n > 0 {
                let prev = levels[n - 1].0;
                t += (speed - prev).abs() / ramp_accel;
                if speed != prev {
                    times.push(t);
                    speeds.push(speed);
                }
            }
            t += hold;
            times.push(t);
            speeds.push(speed);
        }
        Self::new(times, speeds)
    }

    /// Lead speed `v_rel + v_AV` reconstructed from a recorded drive.
    pub fn from_trace(trace: &DriveTrace) -> Result<Self, ParamError> {
        let samples = trace.samples();
        let t0 = samples[0].t;
        Self::new(
            samples.iter().map(|s| s.t - t0).collect(),
            samples.iter().map(|s| (s.v_rel + s.v_av).max(0.0)).collect(),
        )
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        let v = if t <= self.times[0] {
            self.speeds[0]
        } else if t >= self.times[n - 1] {
            self.speeds[n - 1]
        } else {
            let k = self.times.partition_point(|&x| x <= t) - 1;
            let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
            self.speeds[k] + w * (self.speeds[k + 1] - self.speeds[k])
        };
        v.max(0.0)
    }

    /// Maximal intervals of constant speed with positive length.
    fn plateaus(&self) -> Vec<(f64, f64, f64)> {
        let mut out: Vec<(f64, f64, f64)> = Vec::new();
        for k in 0..self.times.len().saturating_sub(1) {
            if self.speeds[k] == self.speeds[k + 1] {
                match out.last_mut() {
                    Some(last) if last.1 == self.times[k] && last.2 == self.speeds[k] => last.1 = self.times[k + 1],
                    _ => out.push((self.times[k], self.times[k + 1], self.speeds[k])),
                }
            }
        }
        out
    }
}

/// Initial condition and step control for [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSetup {
    pub initial_gap: f64,
    /// Ego speed at t = 0; defaults to the lead's initial speed.
    pub initial_speed: Option<f64>,
    pub dt: f64,
    /// Defaults to the end of the lead profile.
    pub duration: Option<f64>,
}

impl SimSetup {
    pub fn new(initial_gap: f64) -> Self {
        Self { initial_gap, initial_speed: None, dt: DEFAULT_DT, duration: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSample {
    pub t: f64,
    pub x_rel: f64,
    pub v_rel: f64,
    pub v_av: f64,
    pub v_cmd: f64,
    pub u: f64,
}

/// Steady-state gap on one constant-lead-speed interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau {
    pub start: f64,
    pub end: f64,
    pub lead_speed: f64,
    /// Mean gap over the final 20% of the interval.
    pub steady_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub min_gap: f64,
    /// Minimum `x_rel / v_AV` over samples moving faster than 1 m/s.
    pub min_time_headway: Option<f64>,
    pub collision: bool,
    pub plateaus: Vec<Plateau>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub samples: Vec<SimSample>,
    pub metrics: SimMetrics,
}

impl SimResult {
    fn from_samples(samples: Vec<SimSample>, plateaus: &[(f64, f64, f64)]) -> Self {
        let min_gap = samples.iter().map(|s| s.x_rel).fold(f64::INFINITY, f64::min);
        let min_time_headway =
            samples.iter().filter(|s| s.v_av > HEADWAY_SPEED_FLOOR).map(|s| s.x_rel / s.v_av).reduce(f64::min);
        let t_last = samples.last().map_or(0.0, |s| s.t);
        let plateaus = plateaus
            .iter()
            .filter(|p| p.1 <= t_last + 1e-9)
            .filter_map(|&(start, end, lead_speed)| {
                let from = end - 0.2 * (end - start);
                let gaps: Vec<f64> =
                    samples.iter().filter(|s| s.t >= from - 1e-9 && s.t <= end + 1e-9).map(|s| s.x_rel).collect();
                (!gaps.is_empty()).then(|| Plateau {
                    start,
                    end,
                    lead_speed,
                    steady_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
                })
            })
            .collect();
        Self { metrics: SimMetrics { min_gap, min_time_headway, collision: min_gap <= 0.0, plateaus }, samples }
    }

    /// CSV with header `t,x_rel,v_rel,v_av,v_cmd,u`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x_rel,v_rel,v_av,v_cmd,u")?;
        for s in &self.samples {
            writeln!(out, "{},{},{},{},{},{}", s.t, s.x_rel, s.v_rel, s.v_av, s.v_cmd, s.u)?;
        }
        Ok(())
    }

    /// Human-readable `key: value` metrics block.
    pub fn metrics_text(&self) -> String {
        let m = &self.metrics;
        let mut out = String::new();
        out.push_str(&format!("samples: {}\n", self.samples.len()));
        out.push_str(&format!("min_gap: {}\n", m.min_gap));
        match m.min_time_headway {
            Some(h) => out.push_str(&format!("min_time_headway: {h}\n")),
            None => out.push_str("min_time_headway: none\n"),
        }
        out.push_str(&format!("collision: {}\n", m.collision));
        for p in &m.plateaus {
            out.push_str(&format!(
                "plateau: lead_speed={} start={} end={} steady_gap={}\n",
                p.lead_speed, p.start, p.end, p.steady_gap
            ));
        }
        out
    }
}

fn step_count(duration: f64, dt: f64) -> usize {
    (duration / dt).ceil().max(0.0) as usize
}

/// Replays the controller behind a prescribed lead-speed profile.
///
/// Gap and ego speed are integrated with classical RK4; the controller is
/// re-evaluated at every substep. The ego speed is clipped at zero after
/// each step, and a stopped ego stays stopped.
pub fn simulate(
    lead: &LeadProfile,
    params: &ControllerParams,
    model: &VehicleModel,
    bounds: &AccelBounds,
    setup: &SimSetup,
) -> Result<SimResult, ParamError> {
    if !(setup.dt.is_finite() && setup.dt > 0.0) {
        return Err(ParamError::new(format!("dt must be positive, got {}", setup.dt)));
    }
    if !(setup.initial_gap.is_finite() && setup.initial_gap > 0.0) {
        return Err(ParamError::new(format!("initial gap must be positive, got {}", setup.initial_gap)));
    }
    let t0 = lead.start();
    let duration = setup.duration.unwrap_or(lead.end() - t0);
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(ParamError::new(format!("duration must be nonnegative, got {duration}")));
    }
    let initial_speed = setup.initial_speed.unwrap_or_else(|| lead.speed_at(t0));
    if !(initial_speed >= 0.0) {
        return Err(ParamError::new("initial ego speed must be nonnegative"));
    }

    let accel = |t: f64, x: f64, v: f64| -> (State, f64, f64) {
        let s = State::new(x, lead.speed_at(t) - v, v);
        let u = closed_loop_accel(&s, params, model, bounds);
        let rate = lambda_gate(v) * u;
        (s, u, rate)
    };
    let deriv = |t: f64, x: f64, v: f64| -> [f64; 2] {
        let (s, _, rate) = accel(t, x, v);
        [s.v_rel, rate]
    };
    let record = |t: f64, x: f64, v: f64| -> SimSample {
        let (s, u, _) = accel(t, x, v);
        SimSample { t, x_rel: x, v_rel: s.v_rel, v_av: v, v_cmd: params.command_speed(&s), u }
    };

    let n = step_count(duration, setup.dt);
    let h = setup.dt;
    let (mut x, mut v) = (setup.initial_gap, initial_speed);
    let mut samples = Vec::with_capacity(n + 1);
    samples.push(record(t0, x, v));
    for step in 0..n {
        let t = t0 + step as f64 * h;
        let k1 = deriv(t, x, v);
        let k2 = deriv(t + 0.5 * h, x + 0.5 * h * k1[0], v + 0.5 * h * k1[1]);
        let k3 = deriv(t + 0.5 * h, x + 0.5 * h * k2[0], v + 0.5 * h * k2[1]);
        let k4 = deriv(t + h, x + h * k3[0], v + h * k3[1]);
        x += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        v += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        v = v.max(0.0);
        samples.push(record(t0 + (step + 1) as f64 * h, x, v));
    }
    let plateaus: Vec<(f64, f64, f64)> =
        lead.plateaus().into_iter().map(|(a, b, s)| (a, b.min(t0 + duration), s)).filter(|p| p.1 > p.0).collect();
    Ok(SimResult::from_samples(samples, &plateaus))
}

/// Clips speeds at zero while preserving the lead speed where possible.
fn clip_speeds(z: [f64; 3]) -> [f64; 3] {
    let [x, mut v_rel, mut v_av] = z;
    if v_av < 0.0 {
        v_rel += v_av;
        v_av = 0.0;
    }
    if v_rel + v_av < 0.0 {
        v_rel = -v_av;
    }
    [x, v_rel, v_av]
}

/// Full-braking lead scenario from `start`: the lead applies `d_min` until it
/// stops, then stays stopped. Integrates the two-car dynamics with RK4.
///
/// `start` must lie inside the field's grid.
pub fn worst_case_replay(
    field: &ValueField,
    start: &State,
    params: &ControllerParams,
    model: &VehicleModel,
    bounds: &AccelBounds,
    horizon: f64,
    dt: f64,
) -> Result<SimResult, ParamError> {
    if !field.grid().contains(start) {
        return Err(ParamError::new(format!("start state {start:?} lies outside the grid")));
    }
    if !(dt.is_finite() && dt > 0.0 && horizon.is_finite() && horizon >= 0.0) {
        return Err(ParamError::new("replay needs dt > 0 and horizon >= 0"));
    }
    let d = bounds.d_min();
    let deriv = |z: [f64; 3]| -> [f64; 3] {
        let s = State::from_array(z);
        vector_field(&s, closed_loop_accel(&s, params, model, bounds), d)
    };
    let record = |t: f64, z: [f64; 3]| -> SimSample {
        let s = State::from_array(z);
        SimSample {
            t,
            x_rel: s.x_rel,
            v_rel: s.v_rel,
            v_av: s.v_av,
            v_cmd: params.command_speed(&s),
            u: closed_loop_accel(&s, params, model, bounds),
        }
    };
    let axpy = |z: [f64; 3], a: f64, k: [f64; 3]| [z[0] + a * k[0], z[1] + a * k[1], z[2] + a * k[2]];

    let n = step_count(horizon, dt);
    let mut z = clip_speeds(start.as_array());
    let mut samples = Vec::with_capacity(n + 1);
    samples.push(record(0.0, z));
    for step in 0..n {
        let k1 = deriv(z);
        let k2 = deriv(axpy(z, 0.5 * dt, k1));
        let k3 = deriv(axpy(z, 0.5 * dt, k2));
        let k4 = deriv(axpy(z, dt, k3));
        for i in 0..3 {
            z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        z = clip_speeds(z);
        samples.push(record((step + 1) as f64 * dt, z));
    }
    Ok(SimResult::from_samples(samples, &[]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::{initial_payoff, GridSpec, SafetyCriterion};

    fn defaults() -> (ControllerParams, VehicleModel, AccelBounds) {
        (ControllerParams::original(), VehicleModel::default(), AccelBounds::default())
    }

    #[test]
    fn profile_interpolates_and_holds() {
        let p = LeadProfile::new(vec![0.0, 10.0], vec![0.0, 20.0]).unwrap();
        assert_eq!(p.speed_at(-1.0), 0.0);
        assert_eq!(p.speed_at(5.0), 10.0);
        assert_eq!(p.speed_at(30.0), 20.0);
        assert!(LeadProfile::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn step_profile_has_plateaus() {
        let p = LeadProfile::steps(&[(5.0, 30.0), (10.0, 30.0)], 1.0).unwrap();
        let plateaus = p.plateaus();
        assert_eq!(plateaus, vec![(0.0, 30.0, 5.0), (35.0, 65.0, 10.0)]);
    }

    #[test]
    fn everything_at_rest_stays_put() {
        let (p, m, b) = defaults();
        let lead = LeadProfile::constant(0.0, 20.0).unwrap();
        let r = simulate(&lead, &p, &m, &b, &SimSetup::new(10.0)).unwrap();
        assert!(r.samples.iter().all(|s| s.x_rel == 10.0 && s.v_av == 0.0));
        assert!(!r.metrics.collision);
        assert_eq!(r.metrics.min_time_headway, None);
    }

    #[test]
    fn series_length_matches_duration() {
        let (p, m, b) = defaults();
        let lead = LeadProfile::constant(10.0, 10.0).unwrap();
        let setup = SimSetup { dt: 0.3, ..SimSetup::new(20.0) };
        let r = simulate(&lead, &p, &m, &b, &setup).unwrap();
        assert_eq!(r.samples.len(), (10.0f64 / 0.3).ceil() as usize + 1);
    }

    #[test]
    fn collision_flag_tracks_min_gap() {
        let (p, m, _) = defaults();
        // barely any braking authority: ego at 20 m/s cannot stop for a stopped lead
        let weak = AccelBounds::new(-0.5, 1.0, -1.0, 1.0).unwrap();
        let lead = LeadProfile::constant(0.0, 20.0).unwrap();
        let setup = SimSetup { initial_speed: Some(20.0), ..SimSetup::new(30.0) };
        let r = simulate(&lead, &p, &m, &weak, &setup).unwrap();
        assert!(r.metrics.collision);
        assert!(r.metrics.min_gap <= 0.0);
    }

    #[test]
    fn rejects_bad_setup() {
        let (p, m, b) = defaults();
        let lead = LeadProfile::constant(5.0, 5.0).unwrap();
        assert!(simulate(&lead, &p, &m, &b, &SimSetup::new(0.0)).is_err());
        let zero_dt = SimSetup { dt: 0.0, ..SimSetup::new(5.0) };
        assert!(simulate(&lead, &p, &m, &b, &zero_dt).is_err());
    }

    #[test]
    fn replay_brakes_lead_to_rest() {
        let (p, m, b) = defaults();
        let field = initial_payoff(&GridSpec::with_nodes(5).unwrap(), SafetyCriterion::Distance);
        let r = worst_case_replay(&field, &State::new(40.0, 0.0, 15.0), &p, &m, &b, 15.0, 0.01).unwrap();
        let last = r.samples.last().unwrap();
        assert!(last.v_rel + last.v_av <= 1e-9);
        assert!(r.samples.iter().all(|s| s.v_av >= 0.0 && s.v_rel + s.v_av >= -1e-12));
        assert!(worst_case_replay(&field, &State::new(60.0, 0.0, 15.0), &p, &m, &b, 1.0, 0.01).is_err());
    }
}
