//! Scenario files: a flat key-value text format describing one solver run
//! (flux, datum, grid, horizon, requested checks), plus deterministic
//! artifact writers. The format is line-oriented so fixtures diff cleanly.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::BoundReport;
use crate::error::{Error, Result};
use crate::flux::FluxModel;
use crate::fronttrack::{init_sim, FrontTracker, PolygonalFlux};
use crate::pwfun::PiecewiseConstantFn;

/// Flux selection carried by a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum FluxSpec {
    Burgers { lo: f64, hi: f64 },
    Cubic { lo: f64, hi: f64 },
    Power { q: u32, lo: f64, hi: f64 },
}

impl FluxSpec {
    pub fn build(&self) -> Result<FluxModel> {
        match *self {
            FluxSpec::Burgers { lo, hi } => Ok(FluxModel::burgers(lo, hi)),
            FluxSpec::Cubic { lo, hi } => Ok(FluxModel::cubic(lo, hi)),
            FluxSpec::Power { q, lo, hi } => FluxModel::power(q, lo, hi),
        }
    }
}

/// Datum selection: explicit breakpoints and values, or a seeded random
/// step function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DatumSpec {
    Explicit { breakpoints: Vec<f64>, values: Vec<f64> },
    Random { seed: u64, pieces: usize, vlo: f64, vhi: f64, span: f64 },
}

impl DatumSpec {
    pub fn build(&self) -> Result<PiecewiseConstantFn> {
        match self {
            DatumSpec::Explicit { breakpoints, values } => {
                PiecewiseConstantFn::new(breakpoints.clone(), values.clone())
            }
            DatumSpec::Random { seed, pieces, vlo, vhi, span } => {
                Ok(random_datum(*seed, *pieces, *vlo, *vhi, *span))
            }
        }
    }
}

/// One parsed scenario.
#[derive(Debug, Clone, Serialize)]
pub struct Scenario {
    pub name: String,
    pub flux: FluxSpec,
    pub datum: DatumSpec,
    pub dv: f64,
    pub horizon: f64,
    /// Label-grid resolution for characteristic tracking.
    pub y_res: usize,
    /// Named checks to run after the solve, e.g. "oleinik", "length".
    pub checks: Vec<String>,
    pub snapshot_times: Vec<f64>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "unnamed".into(),
            flux: FluxSpec::Burgers { lo: -2.0, hi: 2.0 },
            datum: DatumSpec::Explicit { breakpoints: vec![0.0, 1.0], values: vec![1.0] },
            dv: 0.01,
            horizon: 1.0,
            y_res: 64,
            checks: Vec::new(),
            snapshot_times: Vec::new(),
        }
    }
}

/// Random step function with `pieces` pieces of unit-average width over
/// [0, span], values uniform in [vlo, vhi]. The generator is fixed
/// (ChaCha8, widths then values) so a seed pins the datum exactly.
pub fn random_datum(seed: u64, pieces: usize, vlo: f64, vhi: f64, span: f64) -> PiecewiseConstantFn {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pieces = pieces.max(1);
    let mut widths: Vec<f64> = (0..pieces).map(|_| rng.gen_range(0.2..1.8)).collect();
    let total: f64 = widths.iter().sum();
    for w in &mut widths {
        *w *= span / total;
    }
    let mut bps = Vec::with_capacity(pieces + 1);
    bps.push(0.0);
    for w in &widths {
        let last = *bps.last().unwrap();
        bps.push(last + w);
    }
    let values: Vec<f64> = (0..pieces).map(|_| rng.gen_range(vlo..vhi)).collect();
    PiecewiseConstantFn::new(bps, values).expect("generated breakpoints are increasing")
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::ScenarioParse { line, msg: msg.into() }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.trim().parse().map_err(|_| parse_err(line, format!("{}: not a number: '{}'", key, v.trim())))
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| parse_f64(line, key, s))
        .collect()
}

/// Parse the flat sectioned format:
///
/// ```text
/// [flux]
/// kind = burgers        # burgers | cubic | power
/// range = -2, 2
/// q = 3                 # power only
/// [datum]
/// breakpoints = 0, 1
/// values = 1
/// # or: seed = 7 / pieces = 20 / value_range = -1, 1 / span = 10
/// [run]
/// dv = 0.01
/// horizon = 1
/// y_res = 64
/// checks = oleinik, sbv
/// snapshots = 0.5, 1
/// [output]
/// name = my_run
/// ```
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let mut sc = Scenario::default();
    let mut section = String::new();
    // Datum fields accumulate until the section is complete.
    let mut bps: Option<Vec<f64>> = None;
    let mut vals: Option<Vec<f64>> = None;
    let mut seed: Option<u64> = None;
    let mut pieces: Option<usize> = None;
    let mut vrange: Option<(f64, f64)> = None;
    let mut span: Option<f64> = None;
    let mut flux_kind = String::from("burgers");
    let mut flux_range = (-2.0, 2.0);
    let mut flux_q: u32 = 2;
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return Err(parse_err(ln, "unterminated section header"));
            }
            section = line[1..line.len() - 1].trim().to_string();
            match section.as_str() {
                "flux" | "datum" | "run" | "output" => {}
                other => return Err(parse_err(ln, format!("unknown section '{}'", other))),
            }
            continue;
        }
        let (key, val) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => return Err(parse_err(ln, "expected 'key = value'")),
        };
        match (section.as_str(), key) {
            ("flux", "kind") => flux_kind = val.to_string(),
            ("flux", "range") => {
                let r = parse_list(ln, key, val)?;
                if r.len() != 2 || r[0] >= r[1] {
                    return Err(parse_err(ln, "range needs two increasing numbers"));
                }
                flux_range = (r[0], r[1]);
            }
            ("flux", "q") => {
                flux_q = val
                    .parse()
                    .map_err(|_| parse_err(ln, format!("q: not an integer: '{}'", val)))?;
            }
            ("datum", "breakpoints") => bps = Some(parse_list(ln, key, val)?),
            ("datum", "values") => vals = Some(parse_list(ln, key, val)?),
            ("datum", "seed") => {
                seed = Some(
                    val.parse()
                        .map_err(|_| parse_err(ln, format!("seed: not an integer: '{}'", val)))?,
                );
            }
            ("datum", "pieces") => {
                pieces = Some(
                    val.parse()
                        .map_err(|_| parse_err(ln, format!("pieces: not an integer: '{}'", val)))?,
                );
            }
            ("datum", "value_range") => {
                let r = parse_list(ln, key, val)?;
                if r.len() != 2 || r[0] >= r[1] {
                    return Err(parse_err(ln, "value_range needs two increasing numbers"));
                }
                vrange = Some((r[0], r[1]));
            }
            ("datum", "span") => span = Some(parse_f64(ln, key, val)?),
            ("run", "dv") => sc.dv = parse_f64(ln, key, val)?,
            ("run", "horizon") => sc.horizon = parse_f64(ln, key, val)?,
            ("run", "y_res") => {
                sc.y_res = val
                    .parse()
                    .map_err(|_| parse_err(ln, format!("y_res: not an integer: '{}'", val)))?;
            }
            ("run", "checks") => {
                sc.checks = val.split(',').map(|s| s.trim().to_string()).collect();
            }
            ("run", "snapshots") => sc.snapshot_times = parse_list(ln, key, val)?,
            ("output", "name") => sc.name = val.to_string(),
            ("", _) => return Err(parse_err(ln, "key before any section header")),
            (_, k) => return Err(parse_err(ln, format!("unknown key '{}' in [{}]", k, section))),
        }
    }
    sc.flux = match flux_kind.as_str() {
        "burgers" => FluxSpec::Burgers { lo: flux_range.0, hi: flux_range.1 },
        "cubic" => FluxSpec::Cubic { lo: flux_range.0, hi: flux_range.1 },
        "power" => FluxSpec::Power { q: flux_q, lo: flux_range.0, hi: flux_range.1 },
        other => {
            return Err(Error::InvalidScenario(format!("unknown flux kind '{}'", other)));
        }
    };
    sc.datum = match (bps, vals, seed) {
        (Some(b), Some(v), None) => DatumSpec::Explicit { breakpoints: b, values: v },
        (None, None, Some(s)) => {
            let (vlo, vhi) = vrange.ok_or_else(|| {
                Error::InvalidScenario("random datum needs value_range".into())
            })?;
            DatumSpec::Random {
                seed: s,
                pieces: pieces.unwrap_or(16),
                vlo,
                vhi,
                span: span.unwrap_or(10.0),
            }
        }
        (None, None, None) => {
            return Err(Error::InvalidScenario(
                "datum needs breakpoints/values or a seed".into(),
            ));
        }
        _ => {
            return Err(Error::InvalidScenario(
                "datum must be either explicit or random, not both".into(),
            ));
        }
    };
    if sc.dv <= 0.0 || sc.horizon < 0.0 {
        return Err(Error::InvalidScenario("dv must be positive, horizon nonnegative".into()));
    }
    Ok(sc)
}

/// Serialize a scenario back to the text format (round-trips through
/// `parse_scenario`).
pub fn render_scenario(sc: &Scenario) -> String {
    let mut s = String::new();
    s.push_str("[flux]\n");
    match &sc.flux {
        FluxSpec::Burgers { lo, hi } => {
            let _ = writeln!(s, "kind = burgers\nrange = {}, {}", lo, hi);
        }
        FluxSpec::Cubic { lo, hi } => {
            let _ = writeln!(s, "kind = cubic\nrange = {}, {}", lo, hi);
        }
        FluxSpec::Power { q, lo, hi } => {
            let _ = writeln!(s, "kind = power\nq = {}\nrange = {}, {}", q, lo, hi);
        }
    }
    s.push_str("[datum]\n");
    match &sc.datum {
        DatumSpec::Explicit { breakpoints, values } => {
            let _ = writeln!(s, "breakpoints = {}", join_f64(breakpoints));
            let _ = writeln!(s, "values = {}", join_f64(values));
        }
        DatumSpec::Random { seed, pieces, vlo, vhi, span } => {
            let _ = writeln!(s, "seed = {}\npieces = {}", seed, pieces);
            let _ = writeln!(s, "value_range = {}, {}\nspan = {}", vlo, vhi, span);
        }
    }
    s.push_str("[run]\n");
    let _ = writeln!(s, "dv = {}\nhorizon = {}\ny_res = {}", sc.dv, sc.horizon, sc.y_res);
    if !sc.checks.is_empty() {
        let _ = writeln!(s, "checks = {}", sc.checks.join(", "));
    }
    if !sc.snapshot_times.is_empty() {
        let _ = writeln!(s, "snapshots = {}", join_f64(&sc.snapshot_times));
    }
    s.push_str("[output]\n");
    let _ = writeln!(s, "name = {}", sc.name);
    s
}

fn join_f64(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Bundled demonstration scenarios.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "burgers_dambreak" => Some(
            "[flux]\nkind = burgers\nrange = -0.5, 1.5\n\
             [datum]\nbreakpoints = 0, 1\nvalues = 1\n\
             [run]\ndv = 0.01\nhorizon = 1\ny_res = 64\nchecks = oleinik, sbv\nsnapshots = 0.5, 1\n\
             [output]\nname = burgers_dambreak\n",
        ),
        "cubic_oscillation" => Some(
            "[flux]\nkind = cubic\nrange = -1.5, 1.5\n\
             [datum]\nseed = 17\npieces = 24\nvalue_range = -0.9, 0.9\nspan = 8\n\
             [run]\ndv = 0.005\nhorizon = 1\ny_res = 96\nchecks = length, sbv\nsnapshots = 0.25, 0.5, 1\n\
             [output]\nname = cubic_oscillation\n",
        ),
        _ => None,
    }
}

/// Build a solver from a scenario and run it to the horizon.
pub fn run_solver(sc: &Scenario) -> Result<(FluxModel, PiecewiseConstantFn, FrontTracker)> {
    let m = sc.flux.build()?;
    let datum = sc.datum.build()?;
    let mut keys: Vec<f64> = datum.values().to_vec();
    keys.push(0.0);
    let pf = PolygonalFlux::polygonalize(&m, &keys, sc.dv, &[])?;
    let mut sim = init_sim(pf, &datum)?;
    sim.advance_to(sc.horizon)?;
    Ok((m, datum, sim))
}

/// Deterministic CSV of a step function: one row per piece, columns
/// left, right, value. Values print through f64 Display, which is exact
/// round-trip formatting, so equal inputs give equal bytes.
pub fn profile_csv(u: &PiecewiseConstantFn) -> String {
    let mut s = String::from("left,right,value\n");
    let bps = u.breakpoints();
    for (i, v) in u.values().iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", bps[i], bps[i + 1], v);
    }
    s
}

/// CSV of bound reports: name, measured, bound, slack, pass, t.
pub fn reports_csv(reports: &[BoundReport]) -> String {
    let mut s = String::from("name,measured,bound,slack,pass,t\n");
    for r in reports {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.name, r.measured, r.bound, r.slack, r.pass, r.t);
    }
    s
}

/// CSV of the front log of a finished run: one row per front with its
/// lifetime and endpoints.
pub fn fronts_csv(sim: &FrontTracker) -> String {
    let mut s = String::from("id,born,died,x0,t0,speed,ul,ur\n");
    for f in sim.fronts() {
        let died = match f.died {
            Some(d) => d.to_string(),
            None => String::new(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            f.id,
            f.born,
            died,
            f.x0,
            f.t0,
            f.speed,
            sim.pf.value(f.li),
            sim.pf.value(f.ri)
        );
    }
    s
}
