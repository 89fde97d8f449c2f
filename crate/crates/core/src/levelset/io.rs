//! `.vfield` files: a `key: value` text header, a blank line, then the node
//! values as row-major little-endian `f64`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::controller::{ControllerParams, Variant};
use crate::dynamics::{AccelBounds, VehicleModel};
use crate::error::FieldIoError;

use super::field::{SafetyCriterion, SolveSetup, SolveStats, ValueField};
use super::grid::{GridSpec, AXIS_NAMES};

const MAGIC: &str = "reachguard-vfield 1";

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Header lines for `field`, without the terminating blank line.
pub fn header_lines(field: &ValueField) -> Vec<String> {
    let grid = field.grid();
    let mut lines = vec![format!("format: {MAGIC}")];
    for (d, axis) in grid.axes().iter().enumerate() {
        lines.push(format!("{}: {} {} {}", AXIS_NAMES[d], axis.lower, axis.upper, axis.nodes));
    }
    lines.push(format!("criterion: {}", field.criterion()));
    if let Some(s) = field.setup() {
        lines.push(format!("variant: {}", s.params.variant()));
        lines.push(format!("omega: {}", join(&s.params.omega())));
        lines.push(format!("alpha: {}", join(&s.params.alpha())));
        lines.push(format!("headways: {}", join(&s.params.headways())));
        lines.push(format!("r: {}", s.params.speed_cap()));
        lines.push(format!("tau: {}", s.model.tau()));
        let b = &s.bounds;
        lines.push(format!("bounds: {}", join(&[b.u_min(), b.u_max(), b.d_min(), b.d_max()])));
        lines.push(format!("tol: {}", s.tol));
        lines.push(format!("t_max: {}", s.t_max));
        lines.push(format!("cfl: {}", s.cfl));
    }
    let st = field.stats();
    lines.push(format!("iterations: {}", st.iterations));
    lines.push(format!("converged: {}", st.converged));
    lines.push(format!("residual: {}", st.residual));
    lines.push(format!("horizon: {}", st.horizon));
    lines.push(format!("dt: {}", st.dt));
    lines.push("layout: row-major x_rel,v_rel,v_av f64le".to_string());
    lines
}

/// Writes `field`, preceded by any extra `key: value` provenance lines.
pub fn write_vfield<W: Write>(field: &ValueField, extra: &[String], mut out: W) -> Result<(), FieldIoError> {
    for line in header_lines(field).iter().chain(extra) {
        writeln!(out, "{line}")?;
    }
    writeln!(out)?;
    let mut bytes = Vec::with_capacity(field.values().len() * 8);
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

pub fn read_vfield<R: BufRead>(mut input: R) -> Result<ValueField, FieldIoError> {
    let mut header: HashMap<String, String> = HashMap::new();
    loop {
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            return Err(FieldIoError::Format("header not terminated by a blank line".into()));
        }
        let line = line.trim_end_matches(['\n', '\r']);
        if line.is_empty() {
            break;
        }
        let (k, v) = line.split_once(':').ok_or_else(|| FieldIoError::Format(format!("bad header line `{line}`")))?;
        header.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| {
        header.get(k).map(String::as_str).ok_or_else(|| FieldIoError::Format(format!("missing header key `{k}`")))
    };
    if get("format")? != MAGIC {
        return Err(FieldIoError::Format(format!("unsupported format `{}`", get("format")?)));
    }

    let mut lower = [0.0; 3];
    let mut upper = [0.0; 3];
    let mut nodes = [0usize; 3];
    for d in 0..3 {
        let parts: Vec<&str> = get(AXIS_NAMES[d])?.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(FieldIoError::Format(format!("axis `{}` needs lower upper nodes", AXIS_NAMES[d])));
        }
        lower[d] = num(parts[0])?;
        upper[d] = num(parts[1])?;
        nodes[d] = parts[2].parse().map_err(|_| FieldIoError::Format(format!("bad node count `{}`", parts[2])))?;
    }
    let grid = GridSpec::new(lower, upper, nodes)?;
    let criterion = parse_criterion(get("criterion")?)?;

    let setup = if header.contains_key("variant") {
        let variant: Variant = get("variant")?.parse()?;
        let params = ControllerParams::new(
            triple(get("omega")?)?,
            triple(get("alpha")?)?,
            triple(get("headways")?)?,
            num(get("r")?)?,
            variant,
        )?;
        let b = nums(get("bounds")?)?;
        if b.len() != 4 {
            return Err(FieldIoError::Format("bounds needs four values".into()));
        }
        Some(SolveSetup {
            params,
            model: VehicleModel::new(num(get("tau")?)?)?,
            bounds: AccelBounds::new(b[0], b[1], b[2], b[3])?,
            tol: num(get("tol")?)?,
            t_max: num(get("t_max")?)?,
            cfl: num(get("cfl")?)?,
        })
    } else {
        None
    };
    let stats = SolveStats {
        iterations: get("iterations")?.parse().map_err(|_| FieldIoError::Format("bad iteration count".into()))?,
        converged: get("converged")?.parse().map_err(|_| FieldIoError::Format("bad converged flag".into()))?,
        residual: num(get("residual")?)?,
        horizon: num(get("horizon")?)?,
        dt: num(get("dt")?)?,
    };

    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != grid.len() * 8 {
        return Err(FieldIoError::Format(format!("expected {} value bytes, found {}", grid.len() * 8, bytes.len())));
    }
    let values: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FieldIoError::Format("non-finite node value".into()));
    }
    Ok(ValueField::from_parts(grid, criterion, values, stats, setup))
}

fn num(s: &str) -> Result<f64, FieldIoError> {
    s.parse().map_err(|_| FieldIoError::Format(format!("bad number `{s}`")))
}

fn nums(s: &str) -> Result<Vec<f64>, FieldIoError> {
    s.split_whitespace().map(num).collect()
}

fn triple(s: &str) -> Result<[f64; 3], FieldIoError> {
    let v = nums(s)?;
    v.try_into().map_err(|_| FieldIoError::Format(format!("expected three values in `{s}`")))
}

fn parse_criterion(s: &str) -> Result<SafetyCriterion, FieldIoError> {
    let mut parts = s.split_whitespace();
    match (parts.next(), parts.next()) {
        (Some("distance"), None) => Ok(SafetyCriterion::Distance),
        (Some("time-headway"), Some(h)) => Ok(SafetyCriterion::time_headway(num(h)?)?),
        _ => Err(FieldIoError::Format(format!("bad criterion `{s}`"))),
    }
}
