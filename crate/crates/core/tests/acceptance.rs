//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Tolerances are pinned below.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use ztnet_core::field::{init_field_with, Nms, Perturbation, Telemetry, TelemetrySnapshot};
use ztnet_core::gn::{self, estimate_path_qot, nli_power_per_span, CombChannel, QotReport};
use ztnet_core::orchestrator::{gate_before_apply_holds, numeric_tokens, validate_citations, StepAction};
use ztnet_core::par::ExecMode;
use ztnet_core::pool::{ContentKind, EntryStatus, Payload, PoolError, SharedPool};
use ztnet_core::rsa::{first_fit, k_shortest_paths, path_omses, OccupancyMap, PathCandidate};
use ztnet_core::scenario::{
    run_scenario, run_scenario_with, sweep, CaseId, RunOptions, ScenarioOutcome, ScenarioSpec, CASE3_OCCUPANCY,
};
use ztnet_core::topology::{NetworkTopology, ServiceState, SiteId};
use ztnet_core::twin::{estimate_qot, TwinModel};

const SEEDS: std::ops::Range<u64> = 0..10;
const CASE1_BOUND_DB: f64 = 0.25;
const CASE1_RUNTIME_S: f64 = 5.0;
const CASE2_BOUND_DB: f64 = 0.40;
const CASE3_CENTER_THZ: f64 = 193.75;
const CASE3_START_SLICE: u32 = 216;
const CASE3_MIN_MARGIN_DB: f64 = 1.0;
const CASE3_REQUIRED_800G_DB: f64 = 20.0;
const CASE3_MAX_DEGRADATION_DB: f64 = 0.5;
const ORACLE_TOL_DB: f64 = 1e-9;
const GN_INSTANCES: u64 = 1000;
const NLI_SCALING_TOL_DB: f64 = 1e-9;
const MONOTONE_SLACK_DB: f64 = 1e-9;
const OCCUPANCY_MAPS: u64 = 500;
const POOL_SEQUENCES: u64 = 1000;
const TAMPER_RUNS: u64 = 100;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn max_abs_error(q: &QotReport, t: &Telemetry) -> f64 {
    q.channels
        .iter()
        .map(|c| (c.gsnr_db - t.channel(&c.service_id).expect("channel measured").gsnr_db).abs())
        .fold(0.0, f64::max)
}

/// Payloads produced by the steps running `action`, in order.
fn outputs(o: &ScenarioOutcome, action: StepAction) -> Vec<&Payload> {
    o.trace
        .steps
        .iter()
        .filter(|s| s.action == action)
        .flat_map(|s| &s.output_entries)
        .filter_map(|id| o.pool.entries().iter().find(|e| e.entry_id == *id).map(|e| &e.content))
        .collect()
}

fn snapshot(o: &ScenarioOutcome, action: StepAction) -> &TelemetrySnapshot {
    outputs(o, action)
        .into_iter()
        .find_map(|p| match p {
            Payload::TelemetrySnapshot(s) => Some(s),
            _ => None,
        })
        .expect("snapshot in the pool")
}

fn all_completed(o: &ScenarioOutcome) -> bool {
    o.trace.steps.iter().all(|s| s.status.is_completed())
}

fn criterion_1() -> Verdict {
    let mut worst_cal: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    let mut failures = Vec::new();
    for seed in SEEDS {
        let t0 = Instant::now();
        let o = run_scenario(&ScenarioSpec::builtin(CaseId::Case1, seed), &RunOptions::default()).expect("case 1 runs");
        let elapsed = t0.elapsed().as_secs_f64();
        let (_, holdout) = snapshot(&o, StepAction::CollectAndPackage).halves();
        let mean = holdout.mean().expect("hold-out batch");
        let services = &o.spec.services;
        let calibrated = max_abs_error(&estimate_qot(&o.twin, services).expect("estimate"), &mean);
        let nominal = TwinModel::new(o.spec.topology.clone());
        let uncalibrated = max_abs_error(&estimate_qot(&nominal, services).expect("estimate"), &mean);
        worst_cal = worst_cal.max(calibrated);
        slowest = slowest.max(elapsed);
        if mean.channels.len() != 10 || calibrated > CASE1_BOUND_DB || uncalibrated <= calibrated || elapsed >= CASE1_RUNTIME_S {
            failures.push(format!("seed {seed}: cal {calibrated:.3} uncal {uncalibrated:.3} dB, {elapsed:.2} s"));
        }
    }
    verdict(
        failures.is_empty(),
        format!("worst calibrated max|dGSNR| {worst_cal:.3} dB (bound {CASE1_BOUND_DB}), slowest seed {slowest:.2} s {failures:?}"),
    )
}

fn criterion_2(runs: &[ScenarioOutcome]) -> Verdict {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let path_b: Vec<SiteId> = CaseId::Case2.path_labels()["B"].clone();
    for o in runs {
        let seed = o.spec.seed;
        let predicted = outputs(o, StepAction::DtRehearsal)
            .into_iter()
            .find_map(|p| match p {
                Payload::RehearsalResult(r) => Some(r.predicted.clone()),
                _ => None,
            })
            .expect("rehearsal");
        let post = snapshot(o, StepAction::Recollect).mean().expect("post-change batch");
        let err = max_abs_error(&predicted, &post);
        worst = worst.max(err);
        let survivors: Vec<_> = o.spec.services.iter().filter(|s| s.path == path_b).collect();
        let monotone = !survivors.is_empty()
            && survivors.iter().all(|s| {
                o.truth_after.gsnr(&s.id).expect("survivor lit") >= o.truth_before.gsnr(&s.id).expect("lit before") - MONOTONE_SLACK_DB
            });
        let steps = o.trace.steps.len() == 8 && all_completed(o);
        let dropped = o.field.services().iter().filter(|s| s.state == ServiceState::Active).count() == survivors.len();
        if err > CASE2_BOUND_DB || !monotone || !steps || !dropped {
            failures.push(format!("seed {seed}: err {err:.3} monotone {monotone} steps {steps} dropped {dropped}"));
        }
    }
    verdict(
        failures.is_empty() && runs.len() == SEEDS.count(),
        format!("worst post-drop max|dGSNR| {worst:.3} dB (bound {CASE2_BOUND_DB}), survivors monotone, 8/8 steps {failures:?}"),
    )
}

fn criterion_3(o: &ScenarioOutcome) -> Verdict {
    let topo = NetworkTopology::default_topology();
    let occ = OccupancyMap::load(CASE3_OCCUPANCY, &topo).expect("case-3 occupancy");
    let start = first_fit(&topo, &occ, &[5, 6, 1], 8).expect("free window");
    let center = topo.grid.center_of(start, 8);
    let added = o
        .field
        .services()
        .iter()
        .find(|s| !o.spec.services.iter().any(|x| x.id == s.id))
        .expect("a new service")
        .clone();
    let gsnr = o.truth_after.gsnr(&added.id).expect("new service lit");
    let margin = gsnr - CASE3_REQUIRED_800G_DB;
    let degradation = o
        .spec
        .services
        .iter()
        .map(|s| o.truth_before.gsnr(&s.id).unwrap() - o.truth_after.gsnr(&s.id).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let ok = start == CASE3_START_SLICE
        && (center - CASE3_CENTER_THZ).abs() < 1e-9
        && (added.center_frequency_thz - CASE3_CENTER_THZ).abs() < 1e-9
        && added.rate.gbps() == 800
        && added.state == ServiceState::Active
        && margin >= CASE3_MIN_MARGIN_DB
        && degradation <= CASE3_MAX_DEGRADATION_DB
        && o.trace.steps.len() == 8
        && all_completed(o);
    verdict(
        ok,
        format!(
            "first fit slice {start} ({center:.2} THz), 800G at {:.2} THz margin {margin:.2} dB, worst degradation {degradation:.3} dB, {}/{} steps",
            added.center_frequency_thz,
            o.trace.completed(),
            o.trace.steps.len()
        ),
    )
}

fn criterion_4() -> Verdict {
    let mut worst: f64 = 0.0;
    for id in CaseId::ALL {
        let spec = ScenarioSpec::builtin(id, 0);
        let mut field = init_field_with(&spec.topology, 0, 0.0, Perturbation::None);
        field.provision(spec.services.clone()).expect("provision");
        let telemetry = field.collect_performance().expect("telemetry");
        let twin = TwinModel::new(spec.topology.clone());
        let est = estimate_qot(&twin, &spec.services).expect("estimate");
        if est.channels.len() != spec.services.len() {
            return verdict(false, format!("{id}: {} of {} channels", est.channels.len(), spec.services.len()));
        }
        worst = worst.max(max_abs_error(&est, &telemetry));
    }
    verdict(worst <= ORACLE_TOL_DB, format!("max |twin - field| {worst:.2e} dB over three rosters (tol {ORACLE_TOL_DB:e})"))
}

fn criterion_5() -> Verdict {
    let mut failures = Vec::new();
    for i in 0..GN_INSTANCES {
        let mut r = common::rng(0x5eed_0000 + i);
        // ASE vanishes at unity gain
        let ase = gn::ase_power_at_gain(0.0, r.random_range(3.0..8.0), r.random_range(191.0..197.0), r.random_range(1.0..100.0));
        if ase != 0.0 {
            failures.push(format!("#{i}: ASE {ase:e} at unity gain"));
        }
        // NLI scales with the cube of power
        let span = common::random_span(&mut r);
        let comb = common::random_comb(&mut r);
        let scaled: Vec<CombChannel> = comb.iter().map(|c| CombChannel { power_mw: c.power_mw * 10f64.powf(0.1), ..*c }).collect();
        for t in 0..comb.len() {
            let a = nli_power_per_span(&span, &comb, t).unwrap();
            let b = nli_power_per_span(&span, &scaled, t).unwrap();
            let shift = 10.0 * (b / a).log10();
            if (shift - 3.0).abs() > NLI_SCALING_TOL_DB {
                failures.push(format!("#{i}: NLI shift {shift} dB"));
            }
        }
        // appending a span never raises GSNR
        let (topo, services) = common::random_line_instance(&mut r);
        let before = estimate_path_qot(&topo, &services, &[]).unwrap();
        let mut longer = topo.clone();
        let el = common::random_element(&mut r);
        let oms = longer.omses.iter_mut().find(|o| o.connects(1, 2)).unwrap();
        let at = r.random_range(0..=oms.elements.len());
        oms.elements.insert(at, el);
        let after = estimate_path_qot(&longer, &services, &[]).unwrap();
        for c in &before.channels {
            if after.gsnr(&c.service_id).unwrap() > c.gsnr_db + MONOTONE_SLACK_DB {
                failures.push(format!("#{i}: {} rose after appending a span", c.service_id));
            }
        }
        // removing a channel never lowers a survivor's GSNR
        if services.len() > 1 {
            let gone = r.random_range(0..services.len());
            let rest: Vec<_> = services.iter().enumerate().filter(|(k, _)| *k != gone).map(|(_, s)| s.clone()).collect();
            let after = estimate_path_qot(&topo, &rest, &[]).unwrap();
            for c in &after.channels {
                if c.gsnr_db < before.gsnr(&c.service_id).unwrap() - MONOTONE_SLACK_DB {
                    failures.push(format!("#{i}: survivor {} dropped", c.service_id));
                }
            }
        }
    }
    let n = failures.len();
    failures.truncate(3);
    verdict(n == 0, format!("{GN_INSTANCES} instances: unity-gain ASE, +3 dB NLI, span and removal monotonicity; {n} violations {failures:?}"))
}

/// Every simple path by depth-first enumeration, in the planner's order.
fn enumerate_paths(t: &NetworkTopology, src: SiteId, dst: SiteId) -> Vec<PathCandidate> {
    fn walk(t: &NetworkTopology, at: SiteId, dst: SiteId, path: &mut Vec<SiteId>, out: &mut Vec<Vec<SiteId>>) {
        if at == dst {
            out.push(path.clone());
            return;
        }
        for (n, _) in t.neighbours(at) {
            if !path.contains(&n) {
                path.push(n);
                walk(t, n, dst, path, out);
                path.pop();
            }
        }
    }
    let mut raw = Vec::new();
    walk(t, src, dst, &mut vec![src], &mut raw);
    let mut c: Vec<PathCandidate> = raw
        .into_iter()
        .map(|p| {
            let length_km = t.path_length_km(&p).unwrap();
            PathCandidate { hops: p.len() - 1, path: p, length_km }
        })
        .collect();
    c.sort_by(|a, b| {
        a.length_km.total_cmp(&b.length_km).then(a.hops.cmp(&b.hops)).then(a.path.cmp(&b.path))
    });
    c
}

fn criterion_6() -> Verdict {
    let topo = NetworkTopology::default_topology();
    let mut pairs = 0;
    let mut mismatches = Vec::new();
    for a in 1..=6 {
        for b in 1..=6 {
            if a == b {
                continue;
            }
            pairs += 1;
            let all = enumerate_paths(&topo, a, b);
            let yen = k_shortest_paths(&topo, a, b, all.len() + 2).unwrap();
            let same = yen.len() == all.len()
                && yen.iter().zip(&all).all(|(x, y)| x.path == y.path && (x.length_km - y.length_km).abs() < 1e-9);
            if !same {
                mismatches.push(format!("{a}->{b}"));
            }
        }
    }
    let mut ff_failures = 0;
    let paths: Vec<Vec<SiteId>> = vec![vec![5, 6, 1], vec![3, 4, 5, 6, 1], vec![1, 2], vec![2, 5, 4, 3]];
    for i in 0..OCCUPANCY_MAPS {
        let mut r = common::rng(0x0cc0_0000 + i);
        let occ = common::random_occupancy(&mut r, &topo);
        let path = &paths[r.random_range(0..paths.len())];
        let width = [1u32, 4, 8, 16][r.random_range(0..4)];
        let omses = path_omses(&topo, path).unwrap();
        let free = |s: u32| (s..s + width).all(|x| omses.iter().all(|&o| !occ.is_taken(o, x)));
        let scan = (0..=occ.slice_count() - width).find(|&s| free(s));
        let got = first_fit(&topo, &occ, path, width).ok();
        if got != scan {
            ff_failures += 1;
        }
    }
    verdict(
        pairs == 30 && mismatches.is_empty() && ff_failures == 0,
        format!("Yen == enumeration on {pairs} ordered pairs {mismatches:?}; first fit == exhaustive scan on {OCCUPANCY_MAPS} maps ({ff_failures} mismatches)"),
    )
}

fn criterion_7() -> Verdict {
    let mut issues = Vec::new();
    let mut ops_total = 0;
    for i in 0..POOL_SEQUENCES {
        let mut r = common::rng(0x9001_0000 + i);
        let len = r.random_range(1..60);
        let ops = common::random_ops(&mut r, len);
        let mut pool = SharedPool::new();
        for (n, op) in ops.iter().enumerate() {
            ops_total += 1;
            let before = pool.entries().to_vec();
            let prior_status = match op {
                common::Op::Update { id, .. } => before.iter().find(|e| e.entry_id == *id).map(|e| e.status),
                _ => None,
            };
            let res = common::apply(&mut pool, op, n);
            let actor = common::actor_of(op);
            if actor.is_expert()
                && (!matches!(res, Err(PoolError::PermissionDenied(..))) || pool.entries() != before.as_slice())
            {
                issues.push(format!("seq {i} op {n}: expert access not denied cleanly"));
            }
            if let common::Op::Update { status, .. } = op {
                match (&res, prior_status) {
                    (Ok(()), Some(p)) if !p.can_become(*status) => issues.push(format!("seq {i} op {n}: illegal {p:?}->{status:?} accepted")),
                    (Err(PoolError::IllegalTransition(..)), Some(p)) if p.can_become(*status) => {
                        issues.push(format!("seq {i} op {n}: legal {p:?}->{status:?} refused"))
                    }
                    _ => {}
                }
                if res.is_err() && pool.entries() != before.as_slice() {
                    issues.push(format!("seq {i} op {n}: failed update changed state"));
                }
            }
        }
        match SharedPool::replay(pool.audit()) {
            Ok(rebuilt) if rebuilt == pool.entries() => {}
            _ => issues.push(format!("seq {i}: replay diverged")),
        }
    }
    // the canonical lifecycle is legal, shortcuts are not
    let legal = EntryStatus::Posted.can_become(EntryStatus::Claimed)
        && EntryStatus::Claimed.can_become(EntryStatus::Completed)
        && EntryStatus::Claimed.can_become(EntryStatus::Failed)
        && !EntryStatus::Posted.can_become(EntryStatus::Completed)
        && !EntryStatus::Completed.can_become(EntryStatus::Posted)
        && !EntryStatus::Failed.can_become(EntryStatus::Claimed);
    let n = issues.len();
    issues.truncate(3);
    verdict(
        n == 0 && legal,
        format!("{POOL_SEQUENCES} random sequences ({ops_total} ops): expert denial, replay equality, transition legality; {n} issues {issues:?}"),
    )
}

/// Flips one byte of the instruction set on its way to the security gate,
/// to the apply step, or to both.
fn tamper_run(i: u64, id: CaseId) -> ScenarioOutcome {
    let mut r = common::rng(0x7a3f_0000 + i);
    let targets: &[StepAction] = match r.random_range(0..3) {
        0 => &[StepAction::SecurityCheck],
        1 => &[StepAction::ApplyChange],
        _ => &[StepAction::SecurityCheck, StepAction::ApplyChange],
    };
    let targets = targets.to_vec();
    let pick: f64 = r.random_range(0.0..1.0);
    let bit: u8 = 1 << r.random_range(0..8);
    let hook = Box::new(move |ctx: &ztnet_core::orchestrator::WireContext, bytes: &mut Vec<u8>| {
        if ctx.kind == ContentKind::InstructionSet && targets.contains(&ctx.action) && !bytes.is_empty() {
            let at = ((bytes.len() as f64) * pick) as usize % bytes.len();
            bytes[at] ^= bit;
        }
    });
    run_scenario_with(&ScenarioSpec::builtin(id, i % 10), &RunOptions::default(), Some(hook)).expect("tampered run")
}

fn criterion_8(clean: &[&ScenarioOutcome]) -> Verdict {
    let mut issues = Vec::new();
    for o in clean {
        if !gate_before_apply_holds(&o.trace, o.pool.entries()) {
            issues.push(format!("{} seed {}: gate invariant broken", o.spec.id, o.spec.seed));
        }
        if o.trace.completion() != 1.0 {
            issues.push(format!("{} seed {}: completion {}", o.spec.id, o.spec.seed, o.trace.completion()));
        }
    }
    let tampered: Vec<ScenarioOutcome> = ztnet_core::par::map_range(ExecMode::Parallel, 0..TAMPER_RUNS, |i| {
        tamper_run(i, if i % 2 == 0 { CaseId::Case2 } else { CaseId::Case3 })
    });
    for (i, o) in tampered.iter().enumerate() {
        let unchanged = o.field.services().iter().filter(|s| s.state == ServiceState::Active).count() == o.spec.services.len()
            && o.field.services().len() == o.spec.services.len();
        let apply = o.trace.step(StepAction::ApplyChange).expect("apply step");
        let recollected = o.trace.step(StepAction::Recollect).is_some_and(|s| s.status.is_completed());
        if !unchanged || apply.status.is_completed() || !gate_before_apply_holds(&o.trace, o.pool.entries()) || !recollected {
            issues.push(format!("tamper {i}: applied or gate broken ({:?})", apply.status));
        }
    }
    let n = issues.len();
    issues.truncate(3);
    verdict(
        n == 0,
        format!(
            "gate invariant on {} clean and {TAMPER_RUNS} tampered traces, no tampered set applied, completion 1.0 on clean runs; {n} issues {issues:?}",
            clean.len()
        ),
    )
}

fn criterion_9(runs: &[&ScenarioOutcome]) -> Verdict {
    let mut claims = 0;
    let mut tokens = 0;
    let mut issues = Vec::new();
    for o in runs {
        let report = match &o.report {
            Ok(r) => r,
            Err(e) => {
                issues.push(format!("{} seed {}: {e}", o.spec.id, o.spec.seed));
                continue;
            }
        };
        if let Err(e) = validate_citations(report, o.pool.entries()) {
            issues.push(e.to_string());
        }
        let ids: BTreeSet<u64> = o.pool.entries().iter().map(|e| e.entry_id).collect();
        for c in report.claims() {
            claims += 1;
            let toks = numeric_tokens(&c.text);
            tokens += toks.len();
            if !toks.is_empty() && (c.citations.is_empty() || c.citations.iter().any(|x| !ids.contains(&x.entry_id))) {
                issues.push(format!("uncited claim \"{}\"", c.text));
            }
        }
    }
    verdict(issues.is_empty() && tokens > 0, format!("{claims} claims, {tokens} numeric tokens over {} reports {issues:?}", runs.len()))
}

fn criterion_10() -> Verdict {
    let mut diffs = Vec::new();
    for id in CaseId::ALL {
        let spec = ScenarioSpec::builtin(id, 7);
        let a = run_scenario(&spec, &RunOptions::default()).unwrap();
        let b = run_scenario(&spec, &RunOptions::default()).unwrap();
        let (ra, rb) = (a.report.unwrap(), b.report.unwrap());
        if ra.to_structured_without_wall_time() != rb.to_structured_without_wall_time() {
            diffs.push(format!("{id} repeated run"));
        }
    }
    let seq = sweep(ExecMode::Sequential, CaseId::Case2, 0..4, &RunOptions::default());
    let par = sweep(ExecMode::Parallel, CaseId::Case2, 0..4, &RunOptions::default());
    for (s, p) in seq.iter().zip(&par) {
        let (s, p) = (s.as_ref().unwrap(), p.as_ref().unwrap());
        if s.report.as_ref().unwrap().to_structured_without_wall_time() != p.report.as_ref().unwrap().to_structured_without_wall_time() {
            diffs.push(format!("case2 seed {} parallel vs sequential", s.spec.seed));
        }
    }
    verdict(diffs.is_empty(), format!("repeated runs and parallel/sequential sweeps byte-identical {diffs:?}"))
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let opts = RunOptions::default();
    let case2: Vec<ScenarioOutcome> =
        sweep(ExecMode::Parallel, CaseId::Case2, SEEDS, &opts).into_iter().map(|r| r.expect("case 2 runs")).collect();
    let case1: Vec<ScenarioOutcome> =
        sweep(ExecMode::Parallel, CaseId::Case1, SEEDS, &opts).into_iter().map(|r| r.expect("case 1 runs")).collect();
    let case3: Vec<ScenarioOutcome> =
        sweep(ExecMode::Parallel, CaseId::Case3, SEEDS, &opts).into_iter().map(|r| r.expect("case 3 runs")).collect();
    let clean: Vec<&ScenarioOutcome> = case1.iter().chain(&case2).chain(&case3).collect();

    let results: Vec<(&str, Verdict)> = vec![
        ("case-1 reproduction", criterion_1()),
        ("case-2 reproduction", criterion_2(&case2)),
        ("case-3 reproduction", criterion_3(&case3[0])),
        ("oracle equivalence", criterion_4()),
        ("GN physics properties", criterion_5()),
        ("RSA correctness", criterion_6()),
        ("pool and permissions", criterion_7()),
        ("orchestration safety", criterion_8(&clean)),
        ("report factuality", criterion_9(&clean)),
        ("determinism", criterion_10()),
    ];
    let mut failed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        println!("criterion {:>2} {:<24} {} {}", i + 1, name, if v.passed { "PASS" } else { "FAIL" }, v.detail);
        if !v.passed {
            failed += 1;
        }
    }
    println!("acceptance: {}/{} passed in {:.1} s", results.len() - failed, results.len(), t0.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
