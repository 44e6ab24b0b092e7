//! Command line front: run scenarios, inspect Riemann problems, emit the
//! bundled constructions, and sweep scenario directories. All artifacts
//! are plain CSV or JSON written under --out.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use conslaw::analysis::{
    length_estimate_report, oleinik_check, sbv_diagnostic, BoundReport,
};
use conslaw::constructions::{
    build_box_train, build_cantor, build_flat_inflection, build_sawtooth_block,
    validate_flat_inflection,
};
use conslaw::lagrangian::{default_y_grid, track_characteristics};
use conslaw::riemann::solve_riemann;
use conslaw::scenario::{
    bundled, fronts_csv, parse_scenario, profile_csv, reports_csv, run_solver, Scenario,
};

#[derive(Parser)]
#[command(name = "conslaw", about = "1-D scalar conservation law workbench")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file to its horizon and write the final profile,
    /// front log, and snapshots.
    Solve {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario's value-grid resolution.
        #[arg(long)]
        dv: Option<f64>,
        /// Override the scenario's time horizon.
        #[arg(long)]
        horizon: Option<f64>,
        /// Override the random-datum seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Run a scenario plus its requested checks; exits nonzero when a
    /// check fails.
    Analyze {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        dv: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Solve one Riemann problem and print the wave fan.
    Riemann {
        /// Flux kind: burgers | cubic.
        #[arg(long, default_value = "burgers")]
        flux: String,
        #[arg(long)]
        left: f64,
        #[arg(long)]
        right: f64,
    },
    /// Emit one of the bundled constructions as scenario-style tables.
    Example {
        /// box_train | cantor | sawtooth | flat_inflection, or a bundled
        /// scenario name.
        name: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Truncation depth (boxes, levels, or layers).
        #[arg(long, default_value_t = 3)]
        depth: usize,
    },
    /// Run every *.scn file in a directory and write a combined summary.
    Sweep {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {:#}", e);
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Solve { scenario, out, dv, horizon, seed, format } => {
            let sc = load_scenario(&scenario, dv, horizon, seed)?;
            solve_one(&sc, &out, format)?;
            Ok(())
        }
        Cmd::Analyze { scenario, out, dv, horizon, seed, format } => {
            let sc = load_scenario(&scenario, dv, horizon, seed)?;
            let reports = analyze_one(&sc, &out, format)?;
            let failed: Vec<&BoundReport> = reports.iter().filter(|r| !r.pass).collect();
            if !failed.is_empty() {
                bail!(
                    "{} checks failed: {}",
                    failed.len(),
                    failed.iter().map(|r| r.name.as_str()).collect::<Vec<_>>().join(", ")
                );
            }
            Ok(())
        }
        Cmd::Riemann { flux, left, right } => {
            let m = match flux.as_str() {
                "burgers" => conslaw::flux::FluxModel::burgers(
                    left.min(right) - 1.0,
                    left.max(right) + 1.0,
                ),
                "cubic" => conslaw::flux::FluxModel::cubic(
                    left.min(right) - 1.0,
                    left.max(right) + 1.0,
                ),
                other => bail!("unknown flux '{}'", other),
            };
            let fan = solve_riemann(&m, left, right)?;
            for w in &fan.waves {
                println!("{:?}", w);
            }
            Ok(())
        }
        Cmd::Example { name, out, depth } => example_cmd(&name, &out, depth),
        Cmd::Sweep { dir, out } => sweep_cmd(&dir, &out),
    }
}

fn load_scenario(spec: &str, dv: Option<f64>, horizon: Option<f64>, seed: Option<u64>) -> Result<Scenario> {
    let text = match bundled(spec) {
        Some(t) => t.to_string(),
        None => fs::read_to_string(spec).with_context(|| format!("reading {}", spec))?,
    };
    let mut sc = parse_scenario(&text)?;
    if let Some(d) = dv {
        sc.dv = d;
    }
    if let Some(h) = horizon {
        sc.horizon = h;
    }
    if let Some(s) = seed {
        if let conslaw::scenario::DatumSpec::Random { seed: ref mut old, .. } = sc.datum {
            *old = s;
        }
    }
    Ok(sc)
}

fn write_artifact(out: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(out)?;
    let path = out.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn solve_one(sc: &Scenario, out: &Path, format: Format) -> Result<()> {
    let (_, _, sim) = run_solver(sc)?;
    let profile = sim.trace();
    match format {
        Format::Csv => {
            write_artifact(out, &format!("{}_profile.csv", sc.name), &profile_csv(&profile))?;
            write_artifact(out, &format!("{}_fronts.csv", sc.name), &fronts_csv(&sim))?;
        }
        Format::Json => {
            let doc = serde_json::json!({
                "name": sc.name,
                "t": sim.time,
                "breakpoints": profile.breakpoints(),
                "values": profile.values(),
                "mass": sim.mass(),
                "tv": sim.total_variation(),
            });
            write_artifact(
                out,
                &format!("{}_profile.json", sc.name),
                &serde_json::to_string_pretty(&doc)?,
            )?;
        }
    }
    // Snapshots rewind is not supported; rerun to each requested time.
    for &t in &sc.snapshot_times {
        if t < sim.time {
            let (_, _, snap) = run_solver(&Scenario { horizon: t, ..sc.clone() })?;
            write_artifact(
                out,
                &format!("{}_t{}.csv", sc.name, t),
                &profile_csv(&snap.trace()),
            )?;
        }
    }
    Ok(())
}

fn analyze_one(sc: &Scenario, out: &Path, format: Format) -> Result<Vec<BoundReport>> {
    let (m, datum, sim) = run_solver(sc)?;
    let profile = sim.trace();
    let mut reports = Vec::new();
    for check in &sc.checks {
        match check.as_str() {
            "oleinik" => {
                let vel = sim.trace_velocity_exact(&m)?;
                reports.push(oleinik_check(&m, &profile, &vel, sim.time, sc.dv, 0.02)?);
            }
            "length" => {
                let paths = track_characteristics(&sim, &datum, &default_y_grid(&datum, sc.y_res))?;
                reports.extend(length_estimate_report(
                    &m,
                    &paths,
                    datum.sup_norm(),
                    sim.time,
                    sc.dv,
                    0.05,
                )?);
            }
            "sbv" => {
                let paths = track_characteristics(&sim, &datum, &default_y_grid(&datum, sc.y_res))?;
                let times: Vec<f64> =
                    (0..=32).map(|i| sim.time * i as f64 / 32.0).collect();
                let rep = sbv_diagnostic(&paths, &times);
                reports.push(BoundReport::new(
                    "survival nonincreasing",
                    if rep.nonincreasing { 0.0 } else { 1.0 },
                    0.0,
                    sim.time,
                    0.0,
                ));
            }
            other => bail!("unknown check '{}'", other),
        }
    }
    match format {
        Format::Csv => write_artifact(out, &format!("{}_reports.csv", sc.name), &reports_csv(&reports))?,
        Format::Json => write_artifact(
            out,
            &format!("{}_reports.json", sc.name),
            &serde_json::to_string_pretty(&reports)?,
        )?,
    }
    Ok(reports)
}

fn example_cmd(name: &str, out: &Path, depth: usize) -> Result<()> {
    if let Some(text) = bundled(name) {
        write_artifact(out, &format!("{}.scn", name), text)?;
        return Ok(());
    }
    match name {
        "box_train" => {
            let inst = build_box_train(2, depth)?;
            let doc = serde_json::json!({
                "heights": inst.heights,
                "widths": inst.widths,
                "lefts": inst.lefts,
                "reference_half_tv": inst.reference_sum(2.0),
            });
            write_artifact(out, "box_train.json", &serde_json::to_string_pretty(&doc)?)?;
            write_artifact(out, "box_train_datum.csv", &profile_csv(&inst.datum))?;
        }
        "cantor" => {
            let fam = build_cantor(2.0, depth)?;
            let last = &fam.levels[fam.levels.len() - 1];
            let mut csv = String::from("x,v\n");
            for (x, v) in last.xs.iter().zip(&last.vs) {
                csv.push_str(&format!("{},{}\n", x, v));
            }
            write_artifact(out, "cantor_nodes.csv", &csv)?;
        }
        "sawtooth" => {
            let blk = build_sawtooth_block(depth.clamp(1, 4) as u32)?;
            let doc = serde_json::json!({
                "h": blk.h, "a": blk.a, "l": blk.l,
                "teeth": blk.teeth, "reference_mass": blk.reference_mass(),
            });
            write_artifact(out, "sawtooth.json", &serde_json::to_string_pretty(&doc)?)?;
            write_artifact(out, "sawtooth_datum.csv", &profile_csv(&blk.datum))?;
        }
        "flat_inflection" => {
            let inst = build_flat_inflection(depth.clamp(1, 4))?;
            validate_flat_inflection(&inst)?;
            let doc = serde_json::json!({
                "scales": inst.scales,
                "layers": inst.layers.iter().map(|l| serde_json::json!({
                    "a": l.a, "b": l.b, "eps": l.eps, "d": l.d,
                    "dt1": l.dt1, "dt2": l.dt2, "blocks": l.block_count,
                })).collect::<Vec<_>>(),
            });
            write_artifact(out, "flat_inflection.json", &serde_json::to_string_pretty(&doc)?)?;
        }
        other => bail!("unknown example '{}'", other),
    }
    Ok(())
}

fn sweep_cmd(dir: &Path, out: &Path) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |x| x == "scn"))
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(anyhow!("no .scn files in {}", dir.display()));
    }
    let mut summary = Vec::new();
    for path in &entries {
        let sc = parse_scenario(&fs::read_to_string(path)?)?;
        let reports = analyze_one(&sc, out, Format::Csv)?;
        let pass = reports.iter().all(|r| r.pass);
        summary.push(serde_json::json!({
            "scenario": sc.name,
            "checks": reports.len(),
            "pass": pass,
        }));
    }
    write_artifact(out, "sweep_summary.json", &serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}
