//! Scenario files, unit conversion, CSV output and the command-line front
//! end.

pub mod csv;
pub mod manifest;
pub mod scenario;
pub mod units;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use crate::analysis::{delay_sweep, zeno_bound_series, BoundSeries};
use crate::distributions::{ideal_flux, kijowski_distribution, linspace, normalize_record, zeno_ideal_distribution};
use crate::error::{Error, Result};
use crate::measurement::{run_measurement, MeasurementModel};
use crate::io::csv::{bounds_table, distribution_table, fmt_num, record_table, sweep_table, Table};
use crate::io::manifest::RunManifest;
use crate::io::scenario::{parse_scenario, Prepared, Scenario};
use crate::io::units::Dimension;

#[derive(Debug, Parser)]
#[command(name = "zeno-toa", version, about = "Arrival-time measurements of one-dimensional wave packets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one measurement and write record.csv and dist_operational.csv.
    Run(CommonArgs),
    /// Write the flux, Kijowski and Zeno-limit densities.
    Ideal(CommonArgs),
    /// Mean detection time over the coupling ladder (sweep.csv).
    Sweep(CommonArgs),
    /// Commutator bound series for the configured couplings (bounds.csv).
    Bounds(CommonArgs),
    /// Check the scenario and report the initial-state diagnostics.
    Validate(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario file.
    #[arg(long)]
    pub scenario: PathBuf,
    /// Measurement model, overriding schedule.model.
    #[arg(long)]
    pub model: Option<MeasurementModel>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for independent runs.
    #[arg(long)]
    pub workers: Option<usize>,
    /// `section.key=value`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl clap::ValueEnum for MeasurementModel {
    fn value_variants<'a>() -> &'a [Self] {
        &[MeasurementModel::Projection, MeasurementModel::Kicked, MeasurementModel::Continuous]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 4,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Files written by a command, removed again if the command fails.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        std::fs::write(&path, body)?;
        Ok(())
    }

    fn discard(&self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

fn args_of(cmd: &Command) -> (&'static str, &CommonArgs) {
    match cmd {
        Command::Run(a) => ("run", a),
        Command::Ideal(a) => ("ideal", a),
        Command::Sweep(a) => ("sweep", a),
        Command::Bounds(a) => ("bounds", a),
        Command::Validate(a) => ("validate", a),
    }
}

fn load(args: &CommonArgs) -> Result<Scenario> {
    let text = std::fs::read_to_string(&args.scenario).map_err(|e| {
        Error::InvalidArgument(format!("cannot read scenario {}: {e}", args.scenario.display()))
    })?;
    parse_scenario(&text, &args.overrides)
}

fn execute(cli: &Cli) -> Result<()> {
    let (name, args) = args_of(&cli.command);
    let scenario = load(args)?;
    let started = Instant::now();
    let mut manifest = RunManifest::new(name, &scenario);
    let prepared = scenario.prepare()?;
    manifest.add_initial_state(&scenario, &prepared);

    if let Command::Validate(_) = cli.command {
        print_validation(&scenario, &prepared);
        return Ok(());
    }

    let mut out = Outputs::new(&args.out)?;
    let result = (|| -> Result<()> {
        let workers = args.workers.unwrap_or_else(default_workers).max(1);
        match &cli.command {
            Command::Run(_) => cmd_run(&scenario, &prepared, args, &mut out, &mut manifest),
            Command::Ideal(_) => cmd_ideal(&scenario, &prepared, &mut out, &mut manifest),
            Command::Sweep(_) => cmd_sweep(&scenario, &prepared, args, workers, &mut out, &mut manifest),
            Command::Bounds(_) => cmd_bounds(&scenario, &prepared, workers, &mut out, &mut manifest),
            Command::Validate(_) => Ok(()),
        }?;
        manifest.finish(started.elapsed().as_secs_f64(), &out.written)?;
        out.write("manifest.json", &manifest.to_json()?)
    })();
    if result.is_err() {
        out.discard();
    }
    result
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn write_table(out: &mut Outputs, name: &str, table: &Table) -> Result<()> {
    out.write(name, &table.render())
}

fn cmd_run(
    scenario: &Scenario,
    prepared: &Prepared,
    args: &CommonArgs,
    out: &mut Outputs,
    manifest: &mut RunManifest,
) -> Result<()> {
    let schedule = scenario.schedule_for(args.model, prepared.diagnostics.delta_h0)?;
    manifest.add_schedule(&scenario.units, &schedule);
    let rec = run_measurement(&prepared.psi0, &schedule)?;
    for w in &rec.warnings {
        eprintln!("warning: {w}");
        manifest.warnings.push(w.clone());
    }
    write_table(out, "record.csv", &record_table(&rec, &scenario.units))?;
    let dist = normalize_record(&rec)?;
    write_table(out, "dist_operational.csv", &distribution_table(&dist, &scenario.units))?;
    let mean = crate::distributions::mean_arrival(&dist);
    println!(
        "{}: detected fraction {:.6}, mean detection time {} s, reflection {}",
        schedule.model,
        rec.detected_fraction,
        fmt_num(scenario.units.to_si(Dimension::Time, mean)),
        rec.reflection_flag
    );
    Ok(())
}

fn cmd_ideal(scenario: &Scenario, prepared: &Prepared, out: &mut Outputs, manifest: &mut RunManifest) -> Result<()> {
    let t0 = scenario.ideal.t_min.unwrap_or(prepared.t_start);
    let t1 = scenario.ideal.t_max.unwrap_or(scenario.schedule.t_end);
    if !(t1 > t0) {
        return Err(Error::Validation("ideal.t_max must exceed ideal.t_min".into()));
    }
    let ts = linspace(t0, t1, scenario.ideal.points);
    manifest.parameters.insert(
        "ideal_window_s".into(),
        json!([scenario.units.to_si(Dimension::Time, t0), scenario.units.to_si(Dimension::Time, t1)]),
    );
    let dists = [
        ideal_flux(&prepared.state, &ts)?,
        kijowski_distribution(&prepared.state, &ts)?,
        zeno_ideal_distribution(&prepared.state, &ts)?,
    ];
    for d in &dists {
        write_table(out, &format!("dist_{}.csv", d.kind), &distribution_table(d, &scenario.units))?;
        println!("{}: integral {:.9}, min density {:.3e}", d.kind, d.integral(), d.min_density());
    }
    Ok(())
}

fn cmd_sweep(
    scenario: &Scenario,
    prepared: &Prepared,
    args: &CommonArgs,
    workers: usize,
    out: &mut Outputs,
    manifest: &mut RunManifest,
) -> Result<()> {
    let model = args
        .model
        .or(scenario.schedule.model)
        .ok_or_else(|| Error::InvalidArgument("sweep needs --model or schedule.model".into()))?;
    let cfg = scenario.sweep_config(prepared, model, workers)?;
    let u = &scenario.units;
    manifest.parameters.insert("model".into(), json!(model.name()));
    manifest.parameters.insert(
        "ladder_s".into(),
        json!(cfg.ladder.iter().map(|&x| u.to_si(Dimension::Time, x)).collect::<Vec<_>>()),
    );
    if model == MeasurementModel::Kicked {
        manifest.parameters.insert("alpha".into(), json!(cfg.alpha));
    }
    if model == MeasurementModel::Continuous {
        manifest.parameters.insert("sample_dt_s".into(), json!(u.to_si(Dimension::Time, cfg.sample_dt)));
    }
    let res = delay_sweep(&cfg)?;
    write_table(out, "sweep.csv", &sweep_table(&res, u))?;
    println!(
        "{model} sweep: slope {:.6}, intercept {} s over {} rows; Zeno-limit mean {} s",
        res.fit.slope,
        fmt_num(u.to_si(Dimension::Time, res.fit.intercept)),
        res.fit.n_points,
        fmt_num(u.to_si(Dimension::Time, res.zeno_mean)),
    );
    Ok(())
}

fn cmd_bounds(
    scenario: &Scenario,
    prepared: &Prepared,
    workers: usize,
    out: &mut Outputs,
    manifest: &mut RunManifest,
) -> Result<()> {
    let dh0 = prepared.diagnostics.delta_h0;
    let t_end = scenario.bounds.t_end.unwrap_or(scenario.schedule.t_end);
    let alpha = scenario.bounds.alpha;
    manifest.parameters.insert("bounds_v0_over_dh0".into(), json!(scenario.bounds.v0_over_dh0));
    manifest.parameters.insert("bounds_alpha".into(), json!(alpha));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let series: Vec<(f64, BoundSeries)> = pool.install(|| {
        scenario
            .bounds
            .v0_over_dh0
            .par_iter()
            .map(|&m| {
                let v0 = m * dh0;
                zeno_bound_series(&prepared.psi0, v0, alpha / v0, t_end).map(|s| (m, s))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    for (m, s) in &series {
        let v = s.violations(0.0);
        if let Some(&i) = v.first() {
            return Err(Error::Validation(format!(
                "commutator bound violated at V0 = {m} dH0, t = {}: {} > {}",
                s.times[i], s.commutator_lhs[i], s.bound_rhs[i]
            )));
        }
        println!(
            "V0 = {m} dH0: initial dH0/V0 {:.6e}, max {:.6e}",
            s.initial_ratio(),
            s.max_ratio(0.0)
        );
    }
    write_table(out, "bounds.csv", &bounds_table(&series, &scenario.units))
}

fn print_validation(scenario: &Scenario, p: &Prepared) {
    let u = &scenario.units;
    let s = &p.start;
    println!("scenario {} ({} packets) is valid", scenario.name, scenario.packets.len());
    println!("  start time            {} s", fmt_num(u.to_si(Dimension::Time, p.t_start)));
    println!("  negative-k fraction   {:.3e}", s.neg_k_fraction);
    println!("  right norm at start   {:.3e} (limit {:.3e})", s.right_norm, s.right_norm_limit);
    println!("  boundary density      {:.3e}", s.boundary_density);
    println!("  left clearance        {} um", fmt_num(s.left_margin));
    println!("  origin clearance      {} um", fmt_num(s.origin_margin));
    println!("  <k>                   {} 1/um", fmt_num(p.diagnostics.k0));
    println!("  Delta H0              {} hbar/s", fmt_num(u.to_si(Dimension::Rate, p.diagnostics.delta_h0)));
}
