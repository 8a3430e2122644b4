mod common;

use proptest::prelude::*;
use rand::Rng;
use ztnet_core::agents::AgentRole;
use ztnet_core::field::{init_field, CommandPayload, FieldState, Nms, NmsCommand};
use ztnet_core::scenario::CASE1_SERVICES;
use ztnet_core::topology::{load_services, NetworkTopology, Rate, Service};

fn provisioned(seed: u64) -> FieldState {
    let topo = NetworkTopology::default_topology();
    let mut f = init_field(&topo, seed, 0.1);
    f.provision(load_services(CASE1_SERVICES, &topo).unwrap()).unwrap();
    f
}

/// A mix of valid and invalid commands against the case-1 roster.
fn random_commands(seed: u64, n: usize) -> Vec<NmsCommand> {
    let mut r = common::rng(seed);
    let topo = NetworkTopology::default_topology();
    let roster = load_services(CASE1_SERVICES, &topo).unwrap();
    let ids: Vec<String> = roster.into_iter().map(|s| s.id).chain(["ghost".to_string()]).collect();
    (0..n)
        .map(|i| {
            let payload = match r.random_range(0..3) {
                0 => CommandPayload::DropService { service_id: ids[r.random_range(0..ids.len())].clone() },
                1 => CommandPayload::AdjustPower {
                    service_id: ids[r.random_range(0..ids.len())].clone(),
                    launch_power_dbm: r.random_range(-3.0..3.0),
                },
                _ => {
                    let k = r.random_range(0..60);
                    let center = 191.05 + k as f64 * 0.1;
                    CommandPayload::AddService { service: Service::new(format!("n{i}"), vec![5, 6, 1], center, Rate::G100) }
                }
            };
            let mut cmd = NmsCommand::new(payload, AgentRole::ConfigurationDeployer);
            if r.random_bool(0.15) {
                cmd.digest.replace_range(0..1, "x");
            }
            cmd
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn failed_commands_leave_state_untouched(seed in any::<u64>()) {
        let mut f = provisioned(seed % 8);
        for cmd in random_commands(seed, 12) {
            let before = f.clone();
            match f.apply_command(&cmd) {
                Ok(()) => prop_assert!(cmd.verify()),
                Err(_) => prop_assert_eq!(&f, &before),
            }
        }
    }

    #[test]
    fn same_seed_and_commands_replay_identically(seed in any::<u64>()) {
        let cmds = random_commands(seed, 8);
        let run = || {
            let mut f = provisioned(seed % 8);
            let mut stream = Vec::new();
            for c in &cmds {
                let _ = f.apply_command(c);
                stream.push(f.collect_performance().unwrap());
            }
            (f, stream)
        };
        prop_assert_eq!(run(), run());
    }
}
