//! Subcommands of the `reachguard` binary.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use reachguard::config::{BoundsSource, Config};
use reachguard::data::{
    coverage, estimate_accel_bounds, min_time_headway, parse_trace, synth_trace, write_trace, DriveTrace,
    EstimateOptions, Scenario, DEFAULT_V_FLOOR,
};
use reachguard::levelset::{
    extract_slice, read_vfield, solve, write_vfield, GridSpec, SafetyCriterion, SolverOptions, ValueField,
};
use reachguard::sim::{simulate, LeadProfile, SimSetup, DEFAULT_DT};
use reachguard::{AccelBounds, ControllerParams, VehicleModel};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::NotConverged(_) => 3,
        }
    }
}

impl From<reachguard::ParamError> for CliError {
    fn from(e: reachguard::ParamError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<reachguard::DataError> for CliError {
    fn from(e: reachguard::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "reachguard", version, about = "Level-set safety analysis of the FollowerStopper controller")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "REACHGUARD_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the safe set and write a .vfield file.
    Safeset(SafesetArgs),
    /// Export zero-level-set contours at fixed ego speeds.
    Slice(SliceArgs),
    /// Check recorded traces against a safe set.
    Check(CheckArgs),
    /// Estimate acceleration bounds and minimum headway from traces.
    Estimate(EstimateArgs),
    /// Simulate the controller behind a lead vehicle.
    Simulate(SimulateArgs),
    /// Generate a synthetic trace.
    Synth(SynthArgs),
}

/// Run settings shared by `safeset` and `simulate`; flags override the file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    /// Three comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub omega: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub alpha: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub headways: Option<Vec<f64>>,
    /// Speed cap (m/s).
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub u_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub u_max: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub d_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub d_max: Option<f64>,
    /// Estimate bounds from these traces instead.
    #[arg(long, num_args = 1..)]
    pub bounds_from: Vec<PathBuf>,
    /// `distance` or `headway`.
    #[arg(long)]
    pub criterion: Option<String>,
    /// Minimum time headway for the headway criterion (s).
    #[arg(long)]
    pub headway: Option<f64>,
    /// Grid nodes per axis.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub cfl: Option<f64>,
    /// `upwind` or `lax-friedrichs`.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Ghost values past grid faces: `payoff-slope` or `linear`.
    #[arg(long)]
    pub faces: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Config, CliError> {
        let mut cfg = Config::default();
        let mut put = |k: &str, v: String| cfg.set(k, v);
        if let Some(v) = &self.variant {
            put("variant", v.clone())?;
        }
        for (stem, vals) in [("omega", &self.omega), ("alpha", &self.alpha), ("h", &self.headways)] {
            if let Some(vals) = vals {
                for (n, v) in vals.iter().enumerate() {
                    put(&format!("{stem}{}", n + 1), v.to_string())?;
                }
            }
        }
        let scalars = [
            ("r", self.r),
            ("tau", self.tau),
            ("u_min", self.u_min),
            ("u_max", self.u_max),
            ("d_min", self.d_min),
            ("d_max", self.d_max),
            ("headway", self.headway),
            ("tol", self.tol),
            ("t_max", self.t_max),
            ("cfl", self.cfl),
        ];
        for (k, v) in scalars {
            if let Some(v) = v {
                put(k, v.to_string())?;
            }
        }
        if !self.bounds_from.is_empty() {
            put("bounds", "from-data".into())?;
            let list: Vec<String> = self.bounds_from.iter().map(|p| p.display().to_string()).collect();
            put("traces", list.join(","))?;
        }
        if let Some(v) = &self.criterion {
            put("criterion", v.clone())?;
        }
        if let Some(v) = self.nodes {
            put("nodes", v.to_string())?;
        }
        if let Some(v) = &self.scheme {
            put("scheme", v.clone())?;
        }
        if let Some(v) = &self.faces {
            put("faces", v.clone())?;
        }
        if let Some(v) = self.seed {
            put("seed", v.to_string())?;
        }
        Ok(cfg)
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let base = match &self.config {
            Some(path) => {
                if !path.is_file() {
                    return Err(CliError::Data(format!("{}: config file not found", path.display())));
                }
                Config::load(path)?
            }
            None => Config::default(),
        };
        RunConfig::from_config(&base.merged(&self.overrides()?))
    }
}

/// Fully resolved settings for a solve or simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ControllerParams,
    pub model: VehicleModel,
    pub bounds: AccelBounds,
    /// `explicit`, or the trace list the bounds were estimated from.
    pub bounds_source: String,
    pub grid: GridSpec,
    pub criterion: SafetyCriterion,
    pub solver: SolverOptions,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_config(cfg: &Config) -> Result<Self, CliError> {
        let (bounds, bounds_source) = match cfg.bounds()? {
            BoundsSource::Explicit(b) => (b, "explicit".to_string()),
            BoundsSource::FromData(paths) => {
                let traces = load_traces(paths.iter().map(PathBuf::from))?;
                let est = estimate_accel_bounds(&traces, &EstimateOptions::default())?;
                let b = est.to_accel_bounds().map_err(|e| CliError::Data(format!("estimated bounds unusable: {e}")))?;
                (b, format!("from-data {}", paths.join(",")))
            }
        };
        Ok(Self {
            params: cfg.controller()?,
            model: cfg.vehicle()?,
            bounds,
            bounds_source,
            grid: cfg.grid()?,
            criterion: cfg.criterion()?,
            solver: cfg.solver()?,
            seed: cfg.seed()?,
        })
    }

    /// `key: value` provenance lines.
    pub fn echo(&self) -> Vec<String> {
        let p = &self.params;
        let b = &self.bounds;
        let join = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        vec![
            format!("variant: {}", p.variant()),
            format!("omega: {}", join(&p.omega())),
            format!("alpha: {}", join(&p.alpha())),
            format!("headways: {}", join(&p.headways())),
            format!("r: {}", p.speed_cap()),
            format!("tau: {}", self.model.tau()),
            format!("bounds: {}", join(&[b.u_min(), b.u_max(), b.d_min(), b.d_max()])),
            format!("bounds_source: {}", self.bounds_source),
            format!("criterion: {}", self.criterion),
            format!("nodes: {}", join(&self.grid.nodes().map(|n| n as f64))),
            format!("scheme: {}", self.solver.scheme),
            format!("faces: {}", self.solver.faces),
            format!("seed: {}", self.seed),
        ]
    }
}

fn load_traces(paths: impl IntoIterator<Item = PathBuf>) -> Result<Vec<DriveTrace>, CliError> {
    paths.into_iter().map(|p| parse_trace(&p).map_err(CliError::from)).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| write_err(path, e))
}

fn load_field(path: &Path) -> Result<ValueField, CliError> {
    let file = File::open(path).map_err(|e| write_err(path, e))?;
    read_vfield(BufReader::new(file)).map_err(|e| write_err(path, e))
}

#[derive(Debug, Args)]
pub struct SafesetArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the field and exit 0 even if the solve did not converge.
    #[arg(long)]
    pub allow_unconverged: bool,
}

pub fn cmd_safeset(args: &SafesetArgs, log: &mut dyn Write) -> Result<(), CliError> {
    let cfg = args.run.resolve()?;
    let field = solve(&cfg.grid, cfg.criterion, &cfg.params, &cfg.model, &cfg.bounds, &cfg.solver)?;
    let mut extra = vec!["command: safeset".to_string()];
    extra.extend(cfg.echo().into_iter().map(|l| format!("run.{l}")));
    let mut out = create(&args.out)?;
    write_vfield(&field, &extra, &mut out).map_err(|e| write_err(&args.out, e))?;
    let st = field.stats();
    let safe = field.values().iter().filter(|&&v| v > 0.0).count();
    let _ = writeln!(
        log,
        "iterations: {}\nconverged: {}\nresidual: {}\nsafe_nodes: {safe} of {}",
        st.iterations,
        st.converged,
        st.residual,
        field.values().len()
    );
    if !st.converged && !args.allow_unconverged {
        return Err(CliError::NotConverged(format!(
            "solver stopped at pseudo-time {} with residual {} (tolerance {})",
            st.horizon, st.residual, cfg.solver.tol
        )));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    #[arg(long)]
    pub field: PathBuf,
    /// Ego speeds (m/s), comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub v_av: Vec<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// File name used for the slice at `v_av`.
pub fn slice_file_name(v_av: f64) -> String {
    format!("slice_vav_{v_av}.csv")
}

pub fn cmd_slice(args: &SliceArgs, log: &mut dyn Write) -> Result<(), CliError> {
    let field = load_field(&args.field)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| write_err(&args.out_dir, e))?;
    for &v in &args.v_av {
        let lines = extract_slice(&field, v)?;
        let path = args.out_dir.join(slice_file_name(v));
        let mut out = create(&path)?;
        let mut body = || -> io::Result<()> {
            writeln!(out, "# field: {}", args.field.display())?;
            writeln!(out, "# criterion: {}", field.criterion())?;
            writeln!(out, "# v_av: {v}")?;
            writeln!(out, "x_rel,v_rel")?;
            for (n, line) in lines.iter().enumerate() {
                if n > 0 {
                    writeln!(out)?;
                }
                for [x, vr] in line {
                    writeln!(out, "{x},{vr}")?;
                }
            }
            out.flush()
        };
        body().map_err(|e| write_err(&path, e))?;
        let _ = writeln!(log, "{}: {} polylines", path.display(), lines.len());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub field: PathBuf,
    /// Required value above zero for a sample to count as safe.
    #[arg(long, default_value_t = 0.0)]
    pub margin: f64,
    /// Write violations as CSV here.
    #[arg(long)]
    pub violations: Option<PathBuf>,
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
}

pub fn cmd_check(args: &CheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let field = load_field(&args.field)?;
    let traces = load_traces(args.traces.iter().cloned())?;
    let report = coverage(&field, &traces, args.margin);
    let stdout_err = |e| CliError::Data(format!("stdout: {e}"));
    writeln!(out, "field: {}", args.field.display()).map_err(stdout_err)?;
    writeln!(out, "criterion: {}", field.criterion()).map_err(stdout_err)?;
    writeln!(out, "margin: {}", args.margin).map_err(stdout_err)?;
    writeln!(out, "{report}").map_err(stdout_err)?;
    if let Some(path) = &args.violations {
        report.write_violations_csv(create(path)?).map_err(|e| write_err(path, e))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Tail fraction trimmed on each side.
    #[arg(long, default_value_t = 0.0)]
    pub quantile: f64,
    /// Moving-average window in samples (odd).
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Report the raw extremes without the 5% widening.
    #[arg(long)]
    pub no_widen: bool,
    /// Ego speed below which headway is ignored (m/s).
    #[arg(long, default_value_t = DEFAULT_V_FLOOR)]
    pub v_floor: f64,
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
}

pub fn cmd_estimate(args: &EstimateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let traces = load_traces(args.traces.iter().cloned())?;
    let defaults = EstimateOptions::default();
    let opts = EstimateOptions {
        quantile: args.quantile,
        smooth_window: args.window,
        widen: if args.no_widen { None } else { defaults.widen },
    };
    let est = estimate_accel_bounds(&traces, &opts)?;
    let stdout_err = |e| CliError::Data(format!("stdout: {e}"));
    writeln!(out, "traces: {}", traces.len()).map_err(stdout_err)?;
    writeln!(out, "quantile: {}\nwindow: {}\nwiden: {}", opts.quantile, opts.smooth_window, opts.widen.unwrap_or(0.0))
        .map_err(stdout_err)?;
    writeln!(out, "{est}").map_err(stdout_err)?;
    match min_time_headway(&traces, args.v_floor) {
        Ok(h) => writeln!(out, "min_time_headway: {h}"),
        Err(_) => writeln!(out, "min_time_headway: none"),
    }
    .map_err(stdout_err)?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Replay the lead vehicle of a recorded trace.
    #[arg(long, conflicts_with_all = ["lead_speed", "lead_steps"])]
    pub trace: Option<PathBuf>,
    /// Constant lead speed (m/s); needs --duration.
    #[arg(long, conflicts_with = "lead_steps", requires = "duration")]
    pub lead_speed: Option<f64>,
    /// Lead plateaus `speed:hold,...` joined by ramps at --ramp m/s².
    #[arg(long, value_delimiter = ',')]
    pub lead_steps: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    pub ramp: f64,
    /// Initial gap (m); defaults to the trace's first gap.
    #[arg(long)]
    pub gap: Option<f64>,
    /// Initial ego speed (m/s); defaults to the trace's, else the lead's.
    #[arg(long)]
    pub initial_speed: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics file; printed to stdout when omitted.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

fn parse_steps(specs: &[String]) -> Result<Vec<(f64, f64)>, CliError> {
    specs
        .iter()
        .map(|s| {
            let (v, hold) =
                s.split_once(':').ok_or_else(|| CliError::Usage(format!("lead step `{s}` must be speed:hold")))?;
            let num = |x: &str| {
                x.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad number in lead step `{s}`")))
            };
            Ok((num(v)?, num(hold)?))
        })
        .collect()
}

pub fn cmd_simulate(args: &SimulateArgs, log: &mut dyn Write) -> Result<(), CliError> {
    let cfg = args.run.resolve()?;
    let (lead, source, trace_start) = if let Some(path) = &args.trace {
        let trace = parse_trace(path)?;
        let first = trace.samples()[0];
        (LeadProfile::from_trace(&trace)?, format!("trace {}", path.display()), Some(first))
    } else if let Some(v) = args.lead_speed {
        let d = args.duration.expect("clap enforces --duration");
        (LeadProfile::constant(v, d)?, format!("constant {v}"), None)
    } else if !args.lead_steps.is_empty() {
        let levels = parse_steps(&args.lead_steps)?;
        (
            LeadProfile::steps(&levels, args.ramp)?,
            format!("steps {} ramp {}", args.lead_steps.join(","), args.ramp),
            None,
        )
    } else {
        return Err(CliError::Usage("give a lead source: --trace, --lead-speed or --lead-steps".into()));
    };
    let initial_gap = args
        .gap
        .or(trace_start.map(|s| s.x_rel))
        .ok_or_else(|| CliError::Usage("--gap is required without --trace".into()))?;
    let setup = SimSetup {
        initial_gap,
        initial_speed: args.initial_speed.or(trace_start.map(|s| s.v_av)),
        dt: args.dt,
        duration: args.duration,
    };
    let result = simulate(&lead, &cfg.params, &cfg.model, &cfg.bounds, &setup)?;

    let mut out = create(&args.out)?;
    let mut header = vec!["command: simulate".to_string(), format!("lead: {source}")];
    header.push(format!("initial_gap: {initial_gap}"));
    header.push(format!("dt: {}", args.dt));
    header.extend(cfg.echo());
    let mut body = || -> io::Result<()> {
        for line in &header {
            writeln!(out, "# {line}")?;
        }
        result.write_csv(&mut out)?;
        out.flush()
    };
    body().map_err(|e| write_err(&args.out, e))?;
    let metrics = result.metrics_text();
    match &args.metrics {
        Some(path) => {
            let mut m = create(path)?;
            m.write_all(metrics.as_bytes()).and_then(|_| m.flush()).map_err(|e| write_err(path, e))?;
        }
        None => log.write_all(metrics.as_bytes()).map_err(|e| CliError::Data(format!("stdout: {e}")))?,
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// stop-and-go, cruise, hard-brake or ramp-up.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let scenario: Scenario = args.scenario.parse()?;
    let trace = synth_trace(scenario, args.duration, args.dt, args.seed)?;
    write_trace(&trace, create(&args.out)?).map_err(|e| write_err(&args.out, e))
}

/// Dispatches a parsed command line, writing reports to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // a pool may already exist when called repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Safeset(a) => cmd_safeset(a, out),
        Command::Slice(a) => cmd_slice(a, out),
        Command::Check(a) => cmd_check(a, out),
        Command::Estimate(a) => cmd_estimate(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Synth(a) => cmd_synth(a),
    }
}
