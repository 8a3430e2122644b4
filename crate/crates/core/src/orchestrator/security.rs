use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::agents::AgentRole;
use crate::field::{sha256_hex, CommandPayload, NmsCommand};
use crate::topology::{ChannelGrid, Service};

pub const MIN_LAUNCH_DBM: f64 = -5.0;
pub const MAX_LAUNCH_DBM: f64 = 3.0;

/// Ordered NMS commands with a digest over their canonical serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionSet {
    pub task_id: String,
    pub commands: Vec<NmsCommand>,
    pub issuer: AgentRole,
    pub policy_tags: Vec<String>,
    pub digest: String,
}

impl InstructionSet {
    pub fn new(task_id: &str, commands: Vec<NmsCommand>, issuer: AgentRole, policy_tags: Vec<String>) -> Self {
        let mut s = InstructionSet { task_id: task_id.to_string(), commands, issuer, policy_tags, digest: String::new() };
        s.digest = s.compute_digest();
        s
    }

    pub fn compute_digest(&self) -> String {
        let bytes = serde_json::to_vec(&(&self.task_id, &self.commands, self.issuer, &self.policy_tags))
            .expect("instruction set serializes");
        sha256_hex(&bytes)
    }

    /// Set digest and every command digest match their content.
    pub fn verify(&self) -> bool {
        self.compute_digest() == self.digest && self.commands.iter().all(NmsCommand::verify)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityPolicy {
    pub known_issuers: BTreeSet<AgentRole>,
    pub grid: ChannelGrid,
    pub min_launch_dbm: f64,
    pub max_launch_dbm: f64,
    /// Ids of protected services in the current roster.
    pub protected: BTreeSet<String>,
}

impl SecurityPolicy {
    pub fn new(grid: ChannelGrid, current: &[Service]) -> Self {
        SecurityPolicy {
            known_issuers: [AgentRole::ConfigurationDeployer].into(),
            grid,
            min_launch_dbm: MIN_LAUNCH_DBM,
            max_launch_dbm: MAX_LAUNCH_DBM,
            protected: current.iter().filter(|s| s.protected).map(|s| s.id.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleResult {
    pub rule: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityVerdict {
    pub approved: bool,
    pub authenticity: bool,
    pub integrity: bool,
    pub policy: Vec<RuleResult>,
    /// Digest of the instruction set the verdict applies to, when readable.
    pub instruction_digest: Option<String>,
}

impl SecurityVerdict {
    /// Verdict for instructions that could not be read at all.
    pub fn unreadable(reason: &str) -> Self {
        SecurityVerdict {
            approved: false,
            authenticity: false,
            integrity: false,
            policy: vec![RuleResult { rule: "readable".into(), passed: false, detail: reason.to_string() }],
            instruction_digest: None,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.approved == (self.authenticity && self.integrity && self.policy.iter().all(|r| r.passed))
    }
}

fn rule(rule: &str, passed: bool, detail: String) -> RuleResult {
    RuleResult { rule: rule.to_string(), passed, detail }
}

fn check_command(cmd: &NmsCommand, policy: &SecurityPolicy, out: &mut Vec<RuleResult>) {
    let id = cmd.payload.service_id();
    match &cmd.payload {
        CommandPayload::AddService { service } => {
            let half = service.width_slices as f64 * policy.grid.slice_width_thz() / 2.0;
            let in_band = service.center_frequency_thz - half >= policy.grid.base_frequency_thz - 1e-9
                && service.center_frequency_thz + half <= policy.grid.upper_edge_thz() + 1e-9;
            out.push(rule(
                "band",
                in_band,
                if in_band { format!("{id} within grid band") } else { format!("{id} out of band") },
            ));
            let p = service.launch_power_dbm;
            let ok = (policy.min_launch_dbm..=policy.max_launch_dbm).contains(&p);
            out.push(rule("launch_power", ok, format!("{id} launch power {p} dBm")));
            let r = service.rate;
            let ok = service.format == r.format() && service.symbol_rate_gbd == r.symbol_rate_gbd() && service.width_slices == r.width_slices();
            out.push(rule("rate_table", ok, format!("{id} rate {r} entry")));
        }
        CommandPayload::DropService { service_id } => {
            let ok = !policy.protected.contains(service_id);
            out.push(rule(
                "protected_drop",
                ok,
                if ok { format!("{id} not protected") } else { format!("{id} is protected") },
            ));
        }
        CommandPayload::AdjustPower { launch_power_dbm, .. } => {
            let ok = (policy.min_launch_dbm..=policy.max_launch_dbm).contains(launch_power_dbm);
            out.push(rule("launch_power", ok, format!("{id} launch power {launch_power_dbm} dBm")));
        }
    }
}

/// Authenticity, integrity and policy checks; total over its input.
pub fn security_gate(instr: &InstructionSet, policy: &SecurityPolicy) -> SecurityVerdict {
    let authenticity = policy.known_issuers.contains(&instr.issuer)
        && instr.commands.iter().all(|c| policy.known_issuers.contains(&c.issuer));
    let integrity = instr.verify();
    let mut rules = Vec::new();
    if instr.commands.is_empty() {
        rules.push(rule("non_empty", false, "instruction set has no commands".into()));
    }
    for c in &instr.commands {
        check_command(c, policy, &mut rules);
    }
    let approved = authenticity && integrity && rules.iter().all(|r| r.passed);
    SecurityVerdict { approved, authenticity, integrity, policy: rules, instruction_digest: Some(instr.digest.clone()) }
}
