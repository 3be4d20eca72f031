//! `vshp` command-line front end. Writes CSV/JSON only; plotting lives in
//! `scripts/plot.py`.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or I/O error.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use vshp::efficiency::{default_omegas, default_powers, omega_map, power_map};
use vshp::params::parse_penstock_mode;
use vshp::sim::run_partial;
use vshp::smallsignal::{modes_with, power_grid, speed_grid, sweep, sweep_csv, Normalization};
use vshp::{linearize, load_params, LoadedParams, ModelKind, Plant, PlantInputs, PlantParams, Scenario};

use output::{Failure, Meta};

#[derive(Parser)]
#[command(
    name = "vshp",
    version,
    about = "Variable-speed hydropower plant simulation and small-signal analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Parameter file (`section.key = value`); the reference plant if omitted.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Override one parameter, e.g. `--set turbine.D_t=0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Penstock representation: travelling_wave_delay | lumped_tanh | inelastic.
    #[arg(long)]
    penstock: Option<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct Point {
    #[arg(long)]
    model: ModelKind,
    /// Power reference [pu].
    #[arg(long, default_value_t = 0.6)]
    pstar: f64,
    /// Speed reference [pu].
    #[arg(long, default_value_t = 1.0)]
    wstar: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    Pstar,
    Wstar,
}

#[derive(Clone, Copy, ValueEnum)]
enum Norm {
    Max,
    Sum,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file; writes trace.csv, events.json and run.json.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's model.
        #[arg(long)]
        model: Option<ModelKind>,
        #[command(flatten)]
        common: Common,
    },
    /// Equilibrium at (P*, ω*); writes trim.json.
    Trim {
        #[command(flatten)]
        point: Point,
        #[command(flatten)]
        common: Common,
    },
    /// State-space matrices at a trim point; writes linearize.json.
    Linearize {
        #[command(flatten)]
        point: Point,
        #[command(flatten)]
        common: Common,
    },
    /// Eigenvalues and participation at a trim point; writes modes.json.
    Modes {
        #[command(flatten)]
        point: Point,
        #[arg(long, value_enum, default_value = "max")]
        normalization: Norm,
        #[command(flatten)]
        common: Common,
    },
    /// Eigenvalue loci over a grid of P* or ω*; writes sweep.csv.
    Sweep {
        #[arg(long)]
        model: ModelKind,
        #[arg(long, value_enum)]
        grid: Grid,
        /// Fixed P* of an ω* grid.
        #[arg(long, default_value_t = 0.6)]
        pstar: f64,
        /// Fixed ω* of a P* grid.
        #[arg(long, default_value_t = 1.0)]
        wstar: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Hydraulic efficiency over speed and over power; writes
    /// efficiency_omega.csv and efficiency_power.csv.
    EfficiencyMap {
        /// Models to tabulate (comma separated).
        #[arg(long, value_delimiter = ',', default_value = "euler,ieee,hygov")]
        model: Vec<ModelKind>,
        /// Turbine power held along the speed axis [pu].
        #[arg(long, default_value_t = 0.6)]
        power: f64,
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<LoadedParams, Failure> {
    let mut loaded = match &common.params {
        Some(path) => load_params(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?,
        None => LoadedParams {
            params: PlantParams::reference(),
            defaulted: Vec::new(),
        },
    };
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        loaded
            .params
            .set(k.trim(), v)
            .map_err(|e| Failure::usage(format!("--set {kv}: {e}")))?;
    }
    if let Some(m) = &common.penstock {
        loaded.params.penstock_mode =
            parse_penstock_mode(m).ok_or_else(|| Failure::usage(format!("unknown penstock mode `{m}`")))?;
    }
    for (k, v) in &loaded.defaulted {
        eprintln!("note: `{k}` not set, using {v}");
    }
    Ok(loaded)
}

fn trim_at(point: &Point, params: &PlantParams) -> Result<(Plant, vshp::Trim), Failure> {
    let plant = Plant::assemble(point.model, *params)?;
    let trim = plant.trim(&PlantInputs::new(point.pstar, point.wstar))?;
    Ok((plant, trim))
}

fn trim_json(plant: &Plant, trim: &vshp::Trim) -> serde_json::Value {
    let state: serde_json::Map<String, serde_json::Value> = plant
        .layout()
        .names()
        .iter()
        .zip(&trim.state)
        .map(|(n, v)| (n.clone(), json!(v)))
        .collect();
    let o = &trim.outputs;
    json!({
        "P_star": trim.inputs.p_star,
        "omega_star": trim.inputs.omega_star,
        "g": trim.g,
        "state": state,
        "outputs": {"P_m": o.p_m, "T_m": o.t_m, "q": o.q, "h": o.h, "eta_h": o.eta_h},
        "residual": trim.residual,
        "iterations": trim.iterations,
    })
}

fn simulate(scenario: &PathBuf, model: Option<ModelKind>, common: &Common) -> Result<(), Failure> {
    let loaded = load(common)?;
    let mut sc =
        Scenario::load(scenario).map_err(|e| Failure::usage(format!("scenario {}: {e}", scenario.display())))?;
    if let Some(m) = model {
        sc.model = m;
    }
    if common.penstock.is_some() {
        sc.penstock_mode = Some(loaded.params.penstock_mode);
    }
    let penstock = sc.penstock_mode.unwrap_or(loaded.params.penstock_mode);
    let mut meta = Meta::new("simulate", &loaded, sc.model, penstock);
    meta.set("dt", json!(sc.dt));
    meta.set("t_end", json!(sc.t_end));
    meta.set("scenario", json!(scenario.display().to_string()));
    let out = &common.out;
    let (trace, failure) = match run_partial(&sc, &loaded.params) {
        Ok(t) => (Some(t), None),
        Err((e, partial)) => (partial, Some(Failure::from(e))),
    };
    if let Some(t) = &trace {
        let mut csv = meta.csv_header();
        let mut body = Vec::new();
        t.write_csv(&mut body).map_err(|e| Failure::io(out, e))?;
        csv.push_str(&String::from_utf8_lossy(&body));
        output::write(out, "trace.csv", &csv)?;
        let mut ev = t.events_json();
        ev["params_hash"] = json!(meta.hash());
        output::write_json(out, "events.json", &ev)?;
        meta.set("samples", json!(t.len()));
    }
    meta.set("status", json!(if failure.is_some() { "failed" } else { "ok" }));
    if let Some(f) = &failure {
        meta.set("error", json!(f.message()));
        meta.set("partial_trace", json!(trace.is_some()));
    }
    output::write_json(out, "run.json", &meta.to_json())?;
    match failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate {
            scenario,
            model,
            common,
        } => simulate(&scenario, model, &common),
        Command::Trim { point, common } => {
            let loaded = load(&common)?;
            let (plant, trim) = trim_at(&point, &loaded.params)?;
            let meta = Meta::new("trim", &loaded, point.model, loaded.params.penstock_mode);
            let body = trim_json(&plant, &trim);
            println!(
                "g = {:.6}, q = {:.6}, h = {:.6}, P_m = {:.6} (residual {:.1e})",
                trim.g, trim.outputs.q, trim.outputs.h, trim.outputs.p_m, trim.residual
            );
            output::write_json(&common.out, "trim.json", &meta.wrap(body))
        }
        Command::Linearize { point, common } => {
            let loaded = load(&common)?;
            let (plant, trim) = trim_at(&point, &loaded.params)?;
            let lin = linearize(&plant, &trim)?;
            let meta = Meta::new("linearize", &loaded, point.model, loaded.params.penstock_mode);
            let body = json!({
                "states": lin.labels,
                "inputs": ["P_star", "omega_star"],
                "A": lin.a.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
                "B": lin.b.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
                "difference_scheme": "central, h_i = max(1e-6, 1e-6 |x_i|)",
                "trim": trim_json(&plant, &trim),
            });
            output::write_json(&common.out, "linearize.json", &meta.wrap(body))
        }
        Command::Modes {
            point,
            normalization,
            common,
        } => {
            let loaded = load(&common)?;
            let (plant, trim) = trim_at(&point, &loaded.params)?;
            let lin = linearize(&plant, &trim)?;
            let norm = match normalization {
                Norm::Max => Normalization::Max,
                Norm::Sum => Normalization::Sum,
            };
            let report = modes_with(&lin.a, &lin.labels, norm)?;
            for m in 0..report.len() {
                let role = report.role(m);
                if !role.is_empty() && report.eigenvalues[m].im > 0.0 {
                    println!(
                        "{role} mode: {:.4}{:+.4}j, {:.4} Hz, damping {:.3}",
                        report.eigenvalues[m].re, report.eigenvalues[m].im, report.frequency[m], report.damping[m]
                    );
                }
            }
            let mut meta = Meta::new("modes", &loaded, point.model, loaded.params.penstock_mode);
            meta.set("P_star", json!(point.pstar));
            meta.set("omega_star", json!(point.wstar));
            output::write_json(&common.out, "modes.json", &meta.wrap(report.to_json()))
        }
        Command::Sweep {
            model,
            grid,
            pstar,
            wstar,
            common,
        } => {
            let loaded = load(&common)?;
            let (points, desc) = match grid {
                Grid::Pstar => (
                    power_grid(wstar),
                    format!("P_star in 0.3:0.1:0.9 at omega_star = {wstar}"),
                ),
                Grid::Wstar => (
                    speed_grid(pstar),
                    format!("omega_star in 0.90:0.05:1.10 at P_star = {pstar}"),
                ),
            };
            let result = sweep(model, &loaded.params, &points)?;
            for (p, r) in points.iter().zip(&result) {
                if let Err(e) = &r.result {
                    eprintln!("point P* = {}, w* = {}: {e}", p.p_star, p.omega_star);
                }
            }
            let mut meta = Meta::new("sweep", &loaded, model, loaded.params.penstock_mode);
            meta.set("grid", json!(desc));
            meta.set("participation", json!("|v_ki w_ik|, max-normalised per mode"));
            let mut csv = meta.csv_header();
            csv.push_str(&sweep_csv(&result));
            output::write(&common.out, "sweep.csv", &csv)
        }
        Command::EfficiencyMap { model, power, common } => {
            if model.contains(&ModelKind::Linearised) {
                return Err(Failure::usage(
                    "efficiency is undefined for the linearised model: it carries no hydraulic loss information",
                ));
            }
            let loaded = load(&common)?;
            let names: Vec<String> = model.iter().map(|m| m.to_string()).collect();
            let by_omega = omega_map(&loaded.params, &model, power, &default_omegas())?;
            let by_power = power_map(&loaded.params, &model, &default_powers())?;
            let mut meta = Meta::new("efficiency-map", &loaded, model[0], loaded.params.penstock_mode);
            meta.set("models", json!(names));
            let mut m1 = meta.clone();
            m1.set("axis", json!(format!("omega at turbine power {power}, rated head")));
            let mut m2 = meta;
            m2.set("axis", json!("trimmed P_m at omega_star = 1"));
            output::write(
                &common.out,
                "efficiency_omega.csv",
                &(m1.csv_header() + &by_omega.to_csv()),
            )?;
            output::write(
                &common.out,
                "efficiency_power.csv",
                &(m2.csv_header() + &by_power.to_csv()),
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
