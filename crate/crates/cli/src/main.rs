use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ztnet_core::agents::PlannerConfig;
use ztnet_core::gn;
use ztnet_core::rsa::{plan_service, OccupancyMap, PlanOptions, RsaError, ServiceRequest};
use ztnet_core::scenario::{run_scenario, CaseId, RunOptions, ScenarioSpec, CASE1_SERVICES, DEFAULT_NOISE_SIGMA_DB};
use ztnet_core::topology::{load_services, load_topology, NetworkTopology, Rate, SiteId};
use ztnet_core::twin::TwinModel;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "ztnet", version, about = "Agent-driven lifecycle workflows on a simulated optical network")]
struct Cli {
    /// Topology file; the bundled six-site mesh if unset.
    #[arg(long, global = true, env = "ZTNET_TOPOLOGY")]
    topology: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text, env = "ZTNET_FORMAT")]
    format: Format,

    #[arg(long, global = true, default_value = "warn", env = "ZTNET_LOG_LEVEL")]
    log_level: log::LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlannerKind {
    Deterministic,
    Generative,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one of the bundled lifecycle cases end to end.
    Run {
        #[arg(value_enum)]
        case: Case,
        #[command(flatten)]
        run: RunFlags,
        /// Write the report to <path>.json and <path>.txt.
        #[arg(long, env = "ZTNET_REPORT")]
        report: Option<PathBuf>,
    },
    /// Estimate QoT of a service roster on the topology.
    Qot {
        /// Services file; the ten-signal case-1 roster if unset.
        #[arg(long)]
        services: Option<PathBuf>,
    },
    /// Routing and spectrum assignment tools.
    Rsa {
        #[command(subcommand)]
        command: RsaCommand,
    },
    /// Shared-pool tools.
    Pool {
        #[command(subcommand)]
        command: PoolCommand,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Case {
    Case1,
    Case2,
    Case3,
}

impl From<Case> for CaseId {
    fn from(c: Case) -> Self {
        match c {
            Case::Case1 => CaseId::Case1,
            Case::Case2 => CaseId::Case2,
            Case::Case3 => CaseId::Case3,
        }
    }
}

#[derive(Args, Debug)]
struct RunFlags {
    #[arg(long, default_value_t = 0, env = "ZTNET_SEED")]
    seed: u64,
    /// Telemetry noise standard deviation in dB.
    #[arg(long, default_value_t = DEFAULT_NOISE_SIGMA_DB, env = "ZTNET_NOISE_SIGMA")]
    noise_sigma: f64,
    #[arg(long, value_enum, default_value_t = PlannerKind::Deterministic, env = "ZTNET_PLANNER")]
    planner: PlannerKind,
    /// HTTP endpoint of the generative planner.
    #[arg(long, env = "ZTNET_PLANNER_ENDPOINT")]
    planner_endpoint: Option<String>,
}

#[derive(Subcommand, Debug)]
enum RsaCommand {
    /// Plan one new service with k-shortest paths and first-fit.
    Plan {
        #[arg(long)]
        src: SiteId,
        #[arg(long)]
        dst: SiteId,
        /// Line rate in Gb/s (100, 400 or 800).
        #[arg(long, default_value_t = 800)]
        rate: u32,
        /// Occupancy file; empty spectrum if unset.
        #[arg(long)]
        occupancy: Option<PathBuf>,
        #[arg(long, default_value_t = ztnet_core::rsa::DEFAULT_K)]
        k: usize,
    },
}

#[derive(Subcommand, Debug)]
enum PoolCommand {
    /// Run a case and print every pool entry and audit record as JSON lines.
    Dump {
        #[arg(value_enum)]
        case: Case,
        #[command(flatten)]
        run: RunFlags,
    },
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

fn config(e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_CONFIG, message: e.to_string() }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))
}

fn topology(cli: &Cli) -> Result<NetworkTopology, Failure> {
    match &cli.topology {
        Some(p) => load_topology(&read(p)?).map_err(|e| config(format!("{}: {e}", p.display()))),
        None => Ok(NetworkTopology::default_topology()),
    }
}

fn scenario(cli: &Cli, case: Case, flags: &RunFlags) -> Result<(ScenarioSpec, RunOptions), Failure> {
    let mut spec = ScenarioSpec::on_topology(case.into(), topology(cli)?, flags.seed).map_err(config)?;
    spec.noise_sigma_db = flags.noise_sigma;
    let planner = match flags.planner {
        PlannerKind::Deterministic => PlannerConfig::Deterministic,
        PlannerKind::Generative => PlannerConfig::Generative { endpoint: flags.planner_endpoint.clone() },
    };
    Ok((spec, RunOptions { planner }))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| config(format!("{}: {e}", path.display())))
}

fn cmd_run(cli: &Cli, case: Case, flags: &RunFlags, report_path: Option<&Path>) -> Result<(), Failure> {
    let (spec, opts) = scenario(cli, case, flags)?;
    let outcome = run_scenario(&spec, &opts).map_err(config)?;
    let report = outcome.report.as_ref().map_err(|e| Failure { code: EXIT_FAILURE, message: e.clone() })?;
    match cli.format {
        Format::Text => emit(&report.render_text()),
        Format::Structured => emitln(&report.to_structured()),
    }
    if let Some(p) = report_path {
        write_file(&p.with_extension("json"), &report.to_structured())?;
        write_file(&p.with_extension("txt"), &report.render_text())?;
    }
    eprint!("{}", outcome.render_checks());
    if outcome.passed() {
        Ok(())
    } else {
        Err(Failure { code: EXIT_FAILURE, message: format!("{} did not meet its exit criteria", spec.id) })
    }
}

fn cmd_qot(cli: &Cli, services: Option<&Path>) -> Result<(), Failure> {
    let topo = topology(cli)?;
    let text = match services {
        Some(p) => read(p)?,
        None => CASE1_SERVICES.to_string(),
    };
    let roster = load_services(&text, &topo).map_err(config)?;
    let report = gn::estimate_path_qot(&topo, &roster, &[]).map_err(config)?;
    match cli.format {
        Format::Structured => emitln(&serde_json::to_string_pretty(&report).expect("report serializes")),
        Format::Text => {
            emitln(&format!("{:<16} {:>12} {:>6} {:>10}", "service", "center THz", "rate", "GSNR dB"));
            for c in &report.channels {
                let rate = roster.iter().find(|s| s.id == c.service_id).map_or(String::new(), |s| s.rate.to_string());
                emitln(&format!("{:<16} {:>12.4} {:>6} {:>10.2}", c.service_id, c.center_frequency_thz, rate, c.gsnr_db));
            }
        }
    }
    Ok(())
}

fn cmd_rsa_plan(cli: &Cli, src: SiteId, dst: SiteId, rate: u32, occupancy: Option<&Path>, k: usize) -> Result<(), Failure> {
    let topo = topology(cli)?;
    let occ = match occupancy {
        Some(p) => OccupancyMap::load(&read(p)?, &topo).map_err(config)?,
        None => OccupancyMap::empty(&topo),
    };
    let rate = Rate::try_from(rate).map_err(config)?;
    let twin = TwinModel::new(topo);
    let request = ServiceRequest { id: format!("new-{}g", rate.gbps()), src, dst, rate, launch_power_dbm: None };
    let opts = PlanOptions { k, ..PlanOptions::default() };
    let plan = plan_service(&occ, &twin, &[], &request, opts).map_err(|e| match e {
        RsaError::SrcEqualsDst | RsaError::UnknownNode(_) | RsaError::Occupancy(_) | RsaError::Topology(_) => config(e),
        other => Failure { code: EXIT_FAILURE, message: other.to_string() },
    })?;
    match cli.format {
        Format::Structured => emitln(&serde_json::to_string_pretty(&plan).expect("plan serializes")),
        Format::Text => {
            let path: Vec<String> = plan.path.path.iter().map(|s| s.to_string()).collect();
            emitln(&format!("path {} ({:.1} km, {} hops)", path.join("-"), plan.path.length_km, plan.path.hops));
            emitln(&format!("start slice {}, center {:.2} THz, {} slices", plan.start_slice, plan.center_frequency_thz, plan.service.width_slices));
            if let Some(g) = plan.rehearsal.predicted.gsnr(&plan.service.id) {
                emitln(&format!("predicted GSNR {g:.2} dB, minimum margin {:.2} dB", plan.rehearsal.margins.min_margin_db));
            }
        }
    }
    Ok(())
}

fn cmd_pool_dump(cli: &Cli, case: Case, flags: &RunFlags) -> Result<(), Failure> {
    let (spec, opts) = scenario(cli, case, flags)?;
    let outcome = run_scenario(&spec, &opts).map_err(config)?;
    emit(&outcome.pool.dump());
    Ok(())
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn emitln(text: &str) {
    emit(text);
    emit("\n");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    let result = match &cli.command {
        Command::Run { case, run, report } => cmd_run(&cli, *case, run, report.as_deref()),
        Command::Qot { services } => cmd_qot(&cli, services.as_deref()),
        Command::Rsa { command: RsaCommand::Plan { src, dst, rate, occupancy, k } } => {
            cmd_rsa_plan(&cli, *src, *dst, *rate, occupancy.as_deref(), *k)
        }
        Command::Pool { command: PoolCommand::Dump { case, run } } => cmd_pool_dump(&cli, *case, run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
