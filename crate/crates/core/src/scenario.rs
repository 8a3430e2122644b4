//! The three lifecycle cases, packaged as runnable scenarios.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{generate_plan, PlannerConfig, ToolSettings};
use crate::field::{init_field_with, FieldState, Perturbation};
use crate::gn::QotReport;
use crate::orchestrator::{
    execute, AnalysisReport, Environment, ExecutionTrace, FinalReport, Interceptor, PlannerInfo,
};
use crate::par::{self, ExecMode};
use crate::pool::{Payload, SharedPool};
use crate::topology::{load_services, NetworkTopology, Service, ServiceState, SiteId};
use crate::twin::TwinModel;
use crate::agents::AgentRole;

pub const CASE1_TARGET: &str =
    "to ensure the accuracy of the optical network modeling and provide the QoT estimation results of the current 10 signals";
pub const CASE2_TARGET: &str = "to analyze whether the margin is sufficient for dropping signals on Path A and Path C and retaining signals on Path B, and if the conditions are met, to perform signal dropping";
pub const CASE3_TARGET: &str =
    "to help analyze the feasibility for upgrading the system, find an appropriate channel to add an 800Gb/s signal";

pub const CASE1_SERVICES: &str = include_str!("../data/case1_services.toml");
pub const CASE2_SERVICES: &str = include_str!("../data/case2_services.toml");
pub const CASE3_SERVICES: &str = include_str!("../data/case3_services.toml");
/// Spectrum map of the case-3 roster, for standalone planning.
pub const CASE3_OCCUPANCY: &str = include_str!("../data/case3_occupancy.toml");

pub const DEFAULT_NOISE_SIGMA_DB: f64 = 0.1;

/// Pass bounds checked after a run.
pub const CASE1_MAX_ERROR_DB: f64 = 0.25;
pub const CASE2_MAX_ERROR_DB: f64 = 0.40;
pub const CASE2_DROPPED: usize = 4;
pub const CASE3_CENTER_THZ: f64 = 193.75;
pub const CASE3_MAX_DEGRADATION_DB: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseId {
    Case1,
    Case2,
    Case3,
}

impl CaseId {
    pub const ALL: [CaseId; 3] = [CaseId::Case1, CaseId::Case2, CaseId::Case3];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::Case1 => "case1",
            CaseId::Case2 => "case2",
            CaseId::Case3 => "case3",
        }
    }

    pub fn task_target(self) -> &'static str {
        match self {
            CaseId::Case1 => CASE1_TARGET,
            CaseId::Case2 => CASE2_TARGET,
            CaseId::Case3 => CASE3_TARGET,
        }
    }

    pub fn services_text(self) -> &'static str {
        match self {
            CaseId::Case1 => CASE1_SERVICES,
            CaseId::Case2 => CASE2_SERVICES,
            CaseId::Case3 => CASE3_SERVICES,
        }
    }

    /// Path names the task target refers to.
    pub fn path_labels(self) -> BTreeMap<String, Vec<SiteId>> {
        match self {
            CaseId::Case2 => [("A", vec![2, 3, 4]), ("B", vec![3, 4, 5, 2]), ("C", vec![4, 5, 2])]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            _ => BTreeMap::new(),
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseId {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "case1" | "1" => Ok(CaseId::Case1),
            "case2" | "2" => Ok(CaseId::Case2),
            "case3" | "3" => Ok(CaseId::Case3),
            _ => Err(ScenarioError::Config(format!("unknown case {s:?} (expected case1, case2 or case3)"))),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: CaseId,
    pub topology: NetworkTopology,
    pub services: Vec<Service>,
    pub seed: u64,
    pub noise_sigma_db: f64,
    pub perturbation: Perturbation,
    pub task_target: String,
    pub path_labels: BTreeMap<String, Vec<SiteId>>,
}

impl ScenarioSpec {
    /// Built-in roster on the default topology.
    pub fn builtin(id: CaseId, seed: u64) -> Self {
        Self::on_topology(id, NetworkTopology::default_topology(), seed).expect("built-in rosters fit the default topology")
    }

    /// Built-in roster re-validated against another topology.
    pub fn on_topology(id: CaseId, topology: NetworkTopology, seed: u64) -> Result<Self, ScenarioError> {
        let services = load_services(id.services_text(), &topology).map_err(|e| ScenarioError::Config(e.to_string()))?;
        crate::gn::check_overlaps(&topology, &services).map_err(|e| ScenarioError::Config(e.to_string()))?;
        Ok(ScenarioSpec {
            id,
            topology,
            services,
            seed,
            noise_sigma_db: DEFAULT_NOISE_SIGMA_DB,
            perturbation: Perturbation::Default,
            task_target: id.task_target().to_string(),
            path_labels: id.path_labels(),
        })
    }

    pub fn task_id(&self) -> String {
        format!("{}-seed{}", self.id, self.seed)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.noise_sigma_db.is_finite() && self.noise_sigma_db >= 0.0) {
            return Err(ScenarioError::Config(format!("noise sigma must be a non-negative number, got {}", self.noise_sigma_db)));
        }
        for s in &self.services {
            self.topology.validate_service(s).map_err(|e| ScenarioError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    pub planner: PlannerConfig,
}

/// One post-run condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub bound: String,
    pub passed: bool,
}

impl Check {
    fn bounded(name: &str, value: Option<f64>, bound: &str, ok: impl Fn(f64) -> bool) -> Self {
        Check { name: name.into(), value, bound: bound.into(), passed: value.is_some_and(ok) }
    }
}

pub struct ScenarioOutcome {
    pub spec: ScenarioSpec,
    pub trace: ExecutionTrace,
    pub report: Result<FinalReport, String>,
    pub checks: Vec<Check>,
    pub pool: SharedPool,
    pub field: FieldState,
    pub twin: TwinModel,
    /// Noise-free field QoT before and after the workflow.
    pub truth_before: QotReport,
    pub truth_after: QotReport,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.report.is_ok() && self.checks.iter().all(|c| c.passed)
    }

    /// 0 on success, 1 on scenario failure.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    /// The closing analysis report of the run.
    pub fn final_analysis(&self) -> Option<&AnalysisReport> {
        self.trace.steps.iter().rev().flat_map(|s| s.output_entries.iter().rev()).find_map(|id| {
            match self.pool.entries().iter().find(|e| e.entry_id == *id).map(|e| &e.content) {
                Some(Payload::AnalysisReport(a)) if a.author == AgentRole::StatisticalAnalyst => Some(a),
                _ => None,
            }
        })
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.final_analysis().and_then(|a| a.metric(name))
    }

    pub fn render_checks(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let v = c.value.map_or("n/a".to_string(), |v| format!("{v:.3}"));
            out.push_str(&format!("[{}] {}: {} ({})\n", if c.passed { "PASS" } else { "FAIL" }, c.name, v, c.bound));
        }
        out
    }
}

fn context_summary(spec: &ScenarioSpec) -> String {
    format!(
        "{} sites, {} line systems, {} active services",
        spec.topology.sites.len(),
        spec.topology.omses.len(),
        spec.services.len()
    )
}

fn config_err(e: impl fmt::Display) -> ScenarioError {
    ScenarioError::Config(e.to_string())
}

pub fn run_scenario(spec: &ScenarioSpec, opts: &RunOptions) -> Result<ScenarioOutcome, ScenarioError> {
    run_scenario_with(spec, opts, None)
}

/// Runs a scenario with an optional hook on forwarded pool payloads.
pub fn run_scenario_with(
    spec: &ScenarioSpec,
    opts: &RunOptions,
    interceptor: Option<Interceptor>,
) -> Result<ScenarioOutcome, ScenarioError> {
    spec.validate()?;
    let mut field = init_field_with(&spec.topology, spec.seed, spec.noise_sigma_db, spec.perturbation);
    field.provision(spec.services.clone()).map_err(config_err)?;
    let truth_before = field.noise_free_qot().map_err(config_err)?;
    let twin = TwinModel::new(spec.topology.clone());
    let settings = ToolSettings { path_labels: spec.path_labels.clone(), ..ToolSettings::default() };

    let task_id = spec.task_id();
    let outcome = generate_plan(&opts.planner, &task_id, &spec.task_target, &context_summary(spec)).map_err(config_err)?;
    let planner = PlannerInfo { name: opts.planner.name().to_string(), fallback: outcome.fallback.clone() };

    let mut env = Environment::new(field, twin, settings);
    env.interceptor = interceptor;
    let run = execute(&outcome.plan, &mut env, &planner);
    let Environment { pool, field, twin, .. } = env;
    let truth_after = field.noise_free_qot().map_err(config_err)?;

    let mut out = ScenarioOutcome {
        spec: spec.clone(),
        trace: run.trace,
        report: run.report.map_err(|e| e.to_string()),
        checks: vec![],
        pool,
        field,
        twin,
        truth_before,
        truth_after,
    };
    out.checks = checks(&out);
    Ok(out)
}

fn checks(o: &ScenarioOutcome) -> Vec<Check> {
    let mut c = vec![Check::bounded("completion", Some(o.trace.completion()), "= 1", |v| v == 1.0)];
    match o.spec.id {
        CaseId::Case1 => {
            c.push(Check::bounded(
                "hold-out max |dGSNR| (dB)",
                o.metric("holdout_max_abs_error_db"),
                &format!("<= {CASE1_MAX_ERROR_DB}"),
                |v| v <= CASE1_MAX_ERROR_DB,
            ));
        }
        CaseId::Case2 => {
            c.push(Check::bounded(
                "post-change max |dGSNR| (dB)",
                o.metric("post_change_max_abs_error_db"),
                &format!("<= {CASE2_MAX_ERROR_DB}"),
                |v| v <= CASE2_MAX_ERROR_DB,
            ));
            c.push(Check::bounded("signals dropped", o.metric("dropped_count"), &format!("= {CASE2_DROPPED}"), |v| {
                v == CASE2_DROPPED as f64
            }));
        }
        CaseId::Case3 => {
            let added = o
                .field
                .services()
                .iter()
                .find(|s| s.state == ServiceState::Active && !o.spec.services.iter().any(|x| x.id == s.id));
            c.push(Check::bounded(
                "added signal center (THz)",
                added.map(|s| s.center_frequency_thz),
                &format!("= {CASE3_CENTER_THZ}"),
                |v| (v - CASE3_CENTER_THZ).abs() < 1e-9,
            ));
            c.push(Check::bounded(
                "max degradation of existing signals (dB)",
                o.metric("max_degradation_db"),
                &format!("<= {CASE3_MAX_DEGRADATION_DB}"),
                |v| v <= CASE3_MAX_DEGRADATION_DB,
            ));
        }
    }
    c
}

/// Runs one case for every seed in `seeds`, in seed order.
pub fn sweep(
    mode: ExecMode,
    id: CaseId,
    seeds: std::ops::Range<u64>,
    opts: &RunOptions,
) -> Vec<Result<ScenarioOutcome, ScenarioError>> {
    par::map_range(mode, seeds, |seed| run_scenario(&ScenarioSpec::builtin(id, seed), opts))
}
