//! Driving traces: parsing, bound estimation, coverage checks and a
//! synthetic generator.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::controller::State;
use crate::dynamics::AccelBounds;
use crate::error::{DataError, ParamError};
use crate::levelset::{SafetyVerdict, ValueField};

pub const TRACE_HEADER: [&str; 5] = ["t", "x_rel", "v_rel", "v_av", "a_av"];
pub const UNITS_LINE: &str = "# units: s,m,m/s,m/s,m/s^2";
/// Ego speed below which a sample has no meaningful time headway (m/s).
pub const DEFAULT_V_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub x_rel: f64,
    pub v_rel: f64,
    pub v_av: f64,
    pub a_av: f64,
}

impl TraceSample {
    pub fn state(&self) -> State {
        State::new(self.x_rel, self.v_rel, self.v_av)
    }

    pub fn v_lead(&self) -> f64 {
        self.v_rel + self.v_av
    }
}

/// A validated, collision-free recorded drive.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveTrace {
    source: String,
    samples: Vec<TraceSample>,
}

impl DriveTrace {
    /// Checks that time increases strictly, the gap stays positive and the
    /// ego never reverses. Rows in errors are 1-based sample numbers.
    pub fn new(source: impl Into<String>, samples: Vec<TraceSample>) -> Result<Self, DataError> {
        let source = source.into();
        if samples.is_empty() {
            return Err(DataError::Empty { source_name: source });
        }
        let row_err = |row: usize, msg: String| DataError::Row { source_name: source.clone(), row, msg };
        for (n, s) in samples.iter().enumerate() {
            let row = n + 1;
            if [s.t, s.x_rel, s.v_rel, s.v_av, s.a_av].iter().any(|v| !v.is_finite()) {
                return Err(row_err(row, "non-finite value".into()));
            }
            if !(s.x_rel > 0.0) {
                return Err(row_err(row, format!("gap must be positive, got {}", s.x_rel)));
            }
            if s.v_av < 0.0 {
                return Err(row_err(row, format!("ego speed must be nonnegative, got {}", s.v_av)));
            }
            if n > 0 && !(s.t > samples[n - 1].t) {
                return Err(row_err(row, format!("time {} does not increase", s.t)));
            }
        }
        Ok(Self { source, samples })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn samples(&self) -> &[TraceSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples[self.samples.len() - 1].t - self.samples[0].t
    }
}

pub fn parse_trace(path: impl AsRef<Path>) -> Result<DriveTrace, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    read_trace(file, path.display().to_string())
}

/// Reads trace CSV. Lines starting with `#` are ignored; the header must be
/// exactly `t,x_rel,v_rel,v_av,a_av`. Row numbers in errors are file lines.
pub fn read_trace<R: Read>(input: R, source_name: impl Into<String>) -> Result<DriveTrace, DataError> {
    let source_name = source_name.into();
    let mut reader =
        csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).flexible(true).from_reader(input);
    let line_of = |pos: Option<&csv::Position>| pos.map_or(0, |p| p.line() as usize);
    let header = reader.headers().map_err(|e| DataError::Row {
        source_name: source_name.clone(),
        row: line_of(e.position()),
        msg: e.to_string(),
    })?;
    if header.is_empty() {
        return Err(DataError::Empty { source_name });
    }
    if header.iter().ne(TRACE_HEADER) {
        return Err(DataError::Row {
            source_name,
            row: line_of(Some(header.position().expect("header has a position"))),
            msg: format!(
                "expected header `{}`, got `{}`",
                TRACE_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut samples = Vec::new();
    let mut lines = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::Row {
            source_name: source_name.clone(),
            row: line_of(e.position()),
            msg: e.to_string(),
        })?;
        let row = line_of(record.position());
        if record.len() != TRACE_HEADER.len() {
            return Err(DataError::Row {
                source_name,
                row,
                msg: format!("expected {} fields, got {}", TRACE_HEADER.len(), record.len()),
            });
        }
        let mut v = [0.0; 5];
        for (slot, (field, name)) in v.iter_mut().zip(record.iter().zip(TRACE_HEADER)) {
            *slot = field.parse().map_err(|_| DataError::Row {
                source_name: source_name.clone(),
                row,
                msg: format!("bad {name} value `{field}`"),
            })?;
        }
        samples.push(TraceSample { t: v[0], x_rel: v[1], v_rel: v[2], v_av: v[3], a_av: v[4] });
        lines.push(row);
    }
    // re-key validation errors from sample numbers to file lines
    DriveTrace::new(source_name, samples).map_err(|e| match e {
        DataError::Row { source_name, row, msg } => DataError::Row { source_name, row: lines[row - 1], msg },
        other => other,
    })
}

pub fn write_trace<W: Write>(trace: &DriveTrace, out: W) -> Result<(), csv::Error> {
    let mut out = out;
    writeln!(out, "{UNITS_LINE}")?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(TRACE_HEADER)?;
    for s in &trace.samples {
        writer.write_record([s.t, s.x_rel, s.v_rel, s.v_av, s.a_av].map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Knobs for [`estimate_accel_bounds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    /// Tail fraction trimmed on each side; 0 keeps the true extremes.
    pub quantile: f64,
    /// Centered moving-average window in samples (odd).
    pub smooth_window: usize,
    /// Outward widening as a fraction of each bound's magnitude.
    pub widen: Option<f64>,
}

pub const DEFAULT_WIDEN: f64 = 0.05;

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { quantile: 0.0, smooth_window: 5, widen: Some(DEFAULT_WIDEN) }
    }
}

/// Acceleration extremes seen in data, before and after widening.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsEstimate {
    /// `[u_min, u_max, d_min, d_max]` straight from the quantiles.
    pub raw: [f64; 4],
    pub widened: [f64; 4],
    pub samples: usize,
}

impl BoundsEstimate {
    /// Fails when the data never decelerates or never accelerates, e.g. a
    /// constant-speed trace.
    pub fn to_accel_bounds(&self) -> Result<AccelBounds, ParamError> {
        let [u_min, u_max, d_min, d_max] = self.widened;
        AccelBounds::new(u_min, u_max, d_min, d_max)
    }
}

impl fmt::Display for BoundsEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = ["u_min", "u_max", "d_min", "d_max"];
        for (n, name) in names.iter().enumerate() {
            writeln!(f, "{name}: {} (raw {})", self.widened[n], self.raw[n])?;
        }
        write!(f, "samples: {}", self.samples)
    }
}

fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    xs.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
}

/// Type-7 empirical quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-trace lead and ego accelerations on the interior where the smoothing
/// window and the centered difference are both fully defined.
fn trace_accels(trace: &DriveTrace, window: usize) -> (Vec<f64>, Vec<f64>) {
    let s = &trace.samples;
    let half = window / 2;
    let v_lead = moving_average(&s.iter().map(TraceSample::v_lead).collect::<Vec<_>>(), window);
    let a_ego = moving_average(&s.iter().map(|x| x.a_av).collect::<Vec<_>>(), window);
    // smoothed[m] is centered on sample m + half
    let lead = (1..v_lead.len() - 1)
        .map(|m| (v_lead[m + 1] - v_lead[m - 1]) / (s[m + half + 1].t - s[m + half - 1].t))
        .collect();
    (a_ego[1..a_ego.len() - 1].to_vec(), lead)
}

/// Estimates ego (`u`) and lead (`d`) acceleration bounds from traces.
///
/// The lead speed `v_rel + v_AV` is smoothed and differentiated; the ego
/// acceleration column is smoothed only. Samples from all traces are pooled
/// before taking quantiles.
pub fn estimate_accel_bounds(traces: &[DriveTrace], opts: &EstimateOptions) -> Result<BoundsEstimate, DataError> {
    if !(0.0..0.5).contains(&opts.quantile) {
        return Err(DataError::Insufficient(format!("quantile must lie in [0, 0.5), got {}", opts.quantile)));
    }
    if opts.smooth_window == 0 || opts.smooth_window % 2 == 0 {
        return Err(DataError::Insufficient(format!("smoothing window must be odd, got {}", opts.smooth_window)));
    }
    if let Some(w) = opts.widen {
        if !(w.is_finite() && w >= 0.0) {
            return Err(DataError::Insufficient(format!("widening must be nonnegative, got {w}")));
        }
    }
    if traces.is_empty() {
        return Err(DataError::Insufficient("no traces given".into()));
    }
    let need = opts.smooth_window + 2;
    if let Some(short) = traces.iter().find(|t| t.len() < need) {
        return Err(DataError::Insufficient(format!(
            "{}: {} samples, need at least {need}",
            short.source(),
            short.len()
        )));
    }

    let per_trace: Vec<_> = traces.par_iter().map(|t| trace_accels(t, opts.smooth_window)).collect();
    let (mut ego, mut lead): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    for (e, l) in per_trace {
        ego.extend(e);
        lead.extend(l);
    }
    ego.sort_by(f64::total_cmp);
    lead.sort_by(f64::total_cmp);
    let q = opts.quantile;
    let raw = [
        quantile_sorted(&ego, q),
        quantile_sorted(&ego, 1.0 - q),
        quantile_sorted(&lead, q),
        quantile_sorted(&lead, 1.0 - q),
    ];
    let w = opts.widen.unwrap_or(0.0);
    let widened =
        [raw[0] - w * raw[0].abs(), raw[1] + w * raw[1].abs(), raw[2] - w * raw[2].abs(), raw[3] + w * raw[3].abs()];
    Ok(BoundsEstimate { raw, widened, samples: lead.len() })
}

/// Smallest `x_rel / v_AV` over samples with `v_AV > v_floor`.
pub fn min_time_headway(traces: &[DriveTrace], v_floor: f64) -> Result<f64, DataError> {
    traces
        .iter()
        .flat_map(|t| t.samples.iter())
        .filter(|s| s.v_av > v_floor)
        .map(|s| s.x_rel / s.v_av)
        .reduce(f64::min)
        .ok_or_else(|| DataError::Insufficient(format!("no sample moves faster than {v_floor} m/s")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub trace: usize,
    pub index: usize,
    pub state: State,
    pub value: f64,
}

/// How many recorded samples a safe set accounts for.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoverageReport {
    pub total: usize,
    pub in_domain: usize,
    pub safe: usize,
    pub violations: Vec<Violation>,
}

impl CoverageReport {
    pub fn out_of_domain(&self) -> usize {
        self.total - self.in_domain
    }

    /// CSV `trace,index,x_rel,v_rel,v_av,value`, one row per violation.
    pub fn write_violations_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["trace", "index", "x_rel", "v_rel", "v_av", "value"])?;
        for v in &self.violations {
            writer.write_record([
                v.trace.to_string(),
                v.index.to_string(),
                v.state.x_rel.to_string(),
                v.state.v_rel.to_string(),
                v.state.v_av.to_string(),
                v.value.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

impl fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total: {}", self.total)?;
        writeln!(f, "in_domain: {}", self.in_domain)?;
        writeln!(f, "out_of_domain: {}", self.out_of_domain())?;
        writeln!(f, "safe: {}", self.safe)?;
        write!(f, "violations: {}", self.violations.len())
    }
}

/// Classifies every sample against `field`; samples outside the grid are
/// counted but never judged.
pub fn coverage(field: &ValueField, traces: &[DriveTrace], margin: f64) -> CoverageReport {
    let mut report = CoverageReport::default();
    for (ti, trace) in traces.iter().enumerate() {
        for (index, sample) in trace.samples.iter().enumerate() {
            report.total += 1;
            let state = sample.state();
            match field.is_safe(&state, margin) {
                SafetyVerdict::OutOfDomain => {}
                SafetyVerdict::Safe { .. } => {
                    report.in_domain += 1;
                    report.safe += 1;
                }
                SafetyVerdict::Unsafe { value } => {
                    report.in_domain += 1;
                    report.violations.push(Violation { trace: ti, index, state, value });
                }
            }
        }
    }
    report
}

/// Lead-vehicle behaviour for [`synth_trace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    StopAndGo,
    Cruise,
    HardBrake,
    RampUp,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::StopAndGo, Scenario::Cruise, Scenario::HardBrake, Scenario::RampUp];
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::StopAndGo => "stop-and-go",
            Scenario::Cruise => "cruise",
            Scenario::HardBrake => "hard-brake",
            Scenario::RampUp => "ramp-up",
        })
    }
}

impl FromStr for Scenario {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "stop-and-go" | "stopandgo" => Ok(Scenario::StopAndGo),
            "cruise" => Ok(Scenario::Cruise),
            "hard-brake" | "hardbrake" => Ok(Scenario::HardBrake),
            "ramp-up" | "rampup" => Ok(Scenario::RampUp),
            other => Err(ParamError::new(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Synthetic human follower: constant-time-headway tracking.
const HUMAN_HEADWAY: f64 = 1.5;
const HUMAN_GAIN: f64 = 0.5;
const HUMAN_STANDSTILL: f64 = 2.0;
const HUMAN_ACCEL_MAX: f64 = 2.5;
/// Panic-stop deceleration once time to collision gets short.
const HUMAN_PANIC_BRAKE: f64 = -8.0;
const HUMAN_PANIC_TTC: f64 = 3.0;
const SUBSTEP: f64 = 0.01;

/// Piecewise-linear lead-speed knots for a scenario.
fn lead_knots(scenario: Scenario, duration: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut knots = Vec::new();
    let mut t = 0.0;
    match scenario {
        Scenario::Cruise => {
            let base = rng.gen_range(18.0..24.0);
            knots.push((0.0, base));
            while t < duration {
                t += rng.gen_range(8.0..15.0);
                knots.push((t, base + rng.gen_range(-1.5..1.5)));
            }
        }
        Scenario::StopAndGo => {
            knots.push((0.0, 0.0));
            while t < duration {
                let top = rng.gen_range(6.0..12.0);
                let accel = rng.gen_range(1.0..2.0);
                let brake = rng.gen_range(1.0..2.5);
                t += rng.gen_range(2.0..6.0);
                knots.push((t, 0.0));
                t += top / accel;
                knots.push((t, top));
                t += rng.gen_range(3.0..10.0);
                knots.push((t, top));
                t += top / brake;
                knots.push((t, 0.0));
            }
        }
        Scenario::HardBrake => {
            let cruise = rng.gen_range(18.0..26.0);
            knots.push((0.0, cruise));
            while t < duration {
                let low = rng.gen_range(0.0..8.0);
                let brake = rng.gen_range(3.0..4.5);
                t += rng.gen_range(10.0..20.0);
                knots.push((t, cruise));
                t += (cruise - low) / brake;
                knots.push((t, low));
                t += rng.gen_range(2.0..6.0);
                knots.push((t, low));
                t += (cruise - low) / rng.gen_range(1.0..2.0);
                knots.push((t, cruise));
            }
        }
        Scenario::RampUp => {
            knots.push((0.0, 0.0));
            let mut speed: f64 = 0.0;
            t = rng.gen_range(1.0..4.0);
            knots.push((t, 0.0));
            while t < duration {
                let next = (speed + rng.gen_range(4.0..8.0)).min(28.0);
                t += (next - speed) / rng.gen_range(1.5..2.5);
                knots.push((t, next));
                speed = next;
                t += rng.gen_range(4.0..10.0);
                knots.push((t, speed));
            }
        }
    }
    knots
}

fn interpolate(knots: &[(f64, f64)], t: f64) -> f64 {
    let k = knots.partition_point(|&(kt, _)| kt <= t);
    if k == 0 {
        return knots[0].1;
    }
    if k == knots.len() {
        return knots[k - 1].1;
    }
    let (t0, v0) = knots[k - 1];
    let (t1, v1) = knots[k];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

fn human_accel(gap: f64, v_rel: f64, v: f64) -> f64 {
    let tracking = HUMAN_GAIN * ((gap - HUMAN_STANDSTILL) / HUMAN_HEADWAY - v) + HUMAN_GAIN * v_rel;
    let closing = -v_rel;
    let a = if closing > 0.0 && gap < HUMAN_PANIC_TTC * closing {
        HUMAN_PANIC_BRAKE
    } else {
        tracking.clamp(HUMAN_PANIC_BRAKE, HUMAN_ACCEL_MAX)
    };
    if v <= 0.0 && a < 0.0 {
        0.0
    } else {
        a
    }
}

/// Deterministic synthetic drive: a randomized lead-speed profile followed by
/// a constant-time-headway human driver starting at equilibrium.
pub fn synth_trace(scenario: Scenario, duration: f64, dt: f64, seed: u64) -> Result<DriveTrace, ParamError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(ParamError::new(format!("dt must be positive, got {dt}")));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(ParamError::new(format!("duration must be positive, got {duration}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let knots = lead_knots(scenario, duration, &mut rng);

    let substeps = (dt / SUBSTEP).ceil().max(1.0) as usize;
    let h = dt / substeps as f64;
    let v_lead0 = knots[0].1;
    let mut v = v_lead0;
    let mut gap = HUMAN_STANDSTILL + HUMAN_HEADWAY * v;
    let n = (duration / dt).floor() as usize;
    let mut samples = Vec::with_capacity(n + 1);
    for step in 0..=n {
        let t = step as f64 * dt;
        let v_lead = interpolate(&knots, t);
        let a = human_accel(gap, v_lead - v, v);
        samples.push(TraceSample { t, x_rel: gap, v_rel: v_lead - v, v_av: v, a_av: a });
        for sub in 0..substeps {
            let ts = t + sub as f64 * h;
            let vl = interpolate(&knots, ts);
            let a = human_accel(gap, vl - v, v);
            let v_next = (v + h * a).max(0.0);
            let vl_next = interpolate(&knots, ts + h);
            gap += 0.5 * h * ((vl - v) + (vl_next - v_next));
            v = v_next;
        }
    }
    DriveTrace::new(format!("synth:{scenario}:{seed}"), samples)
        .map_err(|e| ParamError::new(format!("generator produced an invalid trace: {e}")))
}
