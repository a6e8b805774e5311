use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use cotransport::scenario::parse_override;
use cotransport::sim::AuditReport;
use cotransport::{audit, load_scenario_with, plan_scenario, run, PlanFile, PlannerParams, Scenario, SimStatus};

mod svg;

#[derive(Parser)]
#[command(name = "cotransport", version, about = "Plan and simulate cooperative object transport")]
struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file without planning.
    Validate {
        scenario: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Global planning: regions, formation graph, path and reference.
    Plan(Common),
    /// Closed-loop simulation with the local planner.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Plan file from `plan`; computed afresh when omitted.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Comma-separated times for snapshot SVGs, s.
        #[arg(long, value_delimiter = ',')]
        snapshot_times: Vec<f64>,
    },
}

#[derive(Args)]
struct Common {
    scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("planning failed: {0}")]
    Planning(String),
    #[error("simulation ended with status {0}")]
    Simulation(&'static str),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Planning(_) => 3,
            CliError::Simulation(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    scenario: String,
    overrides: &'a [String],
    seed: u64,
    out: String,
    scenario_name: &'a str,
    scenario_hash: &'a str,
    params: &'a PlannerParams,
    artifacts: Vec<String>,
}

#[derive(Serialize)]
struct AuditFile<'a> {
    scenario_hash: &'a str,
    seed: u64,
    params: &'a PlannerParams,
    #[serde(flatten)]
    report: &'a AuditReport,
}

#[derive(Serialize)]
struct TimingFile<'a> {
    scenario_hash: &'a str,
    seed: u64,
    wall_ms_per_horizon: &'a [f64],
}

fn load(path: &Path, overrides: &[String]) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let pairs = overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    load_scenario_with(&text, &pairs).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

struct Writer {
    dir: PathBuf,
    written: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn manifest(&mut self, command: &str, c: &Common, sc: &Scenario) -> Result<(), CliError> {
        let name = format!("manifest_{command}.json");
        let m = RunManifest {
            command,
            scenario: c.scenario.display().to_string(),
            overrides: &c.overrides,
            seed: c.seed,
            out: c.out.display().to_string(),
            scenario_name: &sc.name,
            scenario_hash: &sc.hash,
            params: &sc.params,
            artifacts: self.written.clone(),
        };
        let body = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
        self.put(&name, &body)
    }
}

fn compute_plan(sc: &Scenario, seed: u64, w: &mut Writer) -> Result<PlanFile, CliError> {
    let plan = plan_scenario(sc, seed).map_err(|e| CliError::Planning(e.to_string()))?;
    w.put("plan.json", &plan.to_json())?;
    w.put("plan.svg", &svg::plan_svg(sc, &plan))?;
    log::info!(
        "path length {:.3} m through {} regions, reference {:.2} s",
        plan.path.length,
        plan.path.corridor.len(),
        plan.reference.duration()
    );
    Ok(plan)
}

fn cmd_validate(scenario: &Path, overrides: &[String]) -> Result<(), CliError> {
    let sc = load(scenario, overrides)?;
    println!("{}: ok ({}, hash {})", scenario.display(), sc.name, sc.hash);
    Ok(())
}

fn cmd_plan(c: &Common) -> Result<(), CliError> {
    let sc = load(&c.scenario, &c.overrides)?;
    let mut w = Writer::new(&c.out)?;
    let result = compute_plan(&sc, c.seed, &mut w);
    w.manifest("plan", c, &sc)?;
    let plan = result?;
    println!(
        "planned {}: path {:.3} m, {} regions, {} graph nodes",
        sc.name,
        plan.path.length,
        plan.regions.regions.len(),
        plan.graph.nodes.len()
    );
    Ok(())
}

fn cmd_simulate(c: &Common, plan_path: Option<&Path>, snapshot_times: &[f64]) -> Result<(), CliError> {
    let sc = load(&c.scenario, &c.overrides)?;
    let mut w = Writer::new(&c.out)?;
    let plan = match plan_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            let plan =
                PlanFile::from_json(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            if plan.scenario_hash != sc.hash {
                return Err(CliError::Validation(format!(
                    "{} was planned for scenario hash {}, not {}",
                    p.display(),
                    plan.scenario_hash,
                    sc.hash
                )));
            }
            plan
        }
        None => match compute_plan(&sc, c.seed, &mut w) {
            Ok(p) => p,
            Err(e) => {
                w.manifest("simulate", c, &sc)?;
                return Err(e);
            }
        },
    };
    let log = run(&sc, &plan, c.seed).map_err(|e| CliError::Validation(e.to_string()))?;
    let report = audit(&log, &sc.world, &sc.formation, &sc.params);
    let csv = log.to_csv_string().map_err(|e| CliError::Io(e.to_string()))?;
    w.put("sim.csv", &csv)?;
    // Wall-clock times go to their own file so the audit stays reproducible.
    let mut det = report.clone();
    det.wall_ms_per_horizon.clear();
    let a = AuditFile {
        scenario_hash: &sc.hash,
        seed: c.seed,
        params: &sc.params,
        report: &det,
    };
    w.put("audit.json", &(serde_json::to_string_pretty(&a).expect("audit serializes") + "\n"))?;
    let t = TimingFile {
        scenario_hash: &sc.hash,
        seed: c.seed,
        wall_ms_per_horizon: &report.wall_ms_per_horizon,
    };
    w.put("timing.json", &(serde_json::to_string_pretty(&t).expect("timing serializes") + "\n"))?;
    w.put("margins.svg", &svg::margin_svg(&sc, &log))?;
    let times: Vec<f64> = if snapshot_times.is_empty() {
        vec![0.0, log.completion_time()]
    } else {
        snapshot_times.to_vec()
    };
    for t in times {
        w.put(&format!("snapshot_{t:.2}.svg"), &svg::snapshot_svg(&sc, &plan, &log, t))?;
    }
    w.manifest("simulate", c, &sc)?;
    println!(
        "{}: {} at t = {:.2} s; min static margin {:.4} m, min dynamic margins {}, max grasp error {:.1e} m, {} audit findings",
        sc.name,
        log.status.as_str(),
        report.completion_time,
        report.min_static_margin,
        fmt_list(&report.min_dynamic_margins),
        report.max_grasp_error,
        report.findings.len()
    );
    match log.status {
        SimStatus::GoalReached => Ok(()),
        s => Err(CliError::Simulation(s.as_str())),
    }
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", items.join(", "))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Validate { scenario, overrides } => cmd_validate(scenario, overrides),
        Command::Plan(c) => cmd_plan(c),
        Command::Simulate {
            common,
            plan,
            snapshot_times,
        } => cmd_simulate(common, plan.as_deref(), snapshot_times),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
