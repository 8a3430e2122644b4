mod common;

use proptest::prelude::*;
use ztnet_core::gn::{self, nli_power_per_span, CombChannel, QotError, GSNR_CAP_DB};
use ztnet_core::par::ExecMode;
use ztnet_core::topology::{NetworkTopology, Rate, Service};
use ztnet_core::units::{db_to_lin, lin_to_db};

/// tests/oracles/path_gsnr.py, 40-digit evaluation.
const PATH_561_GSNR_DB: f64 = 23.889_338_145_589_3;

#[test]
fn single_400g_on_5_6_1_matches_oracle() {
    let topo = NetworkTopology::default_topology();
    let s = Service::new("probe", vec![5, 6, 1], 193.1, Rate::G400);
    let r = gn::estimate_path_qot(&topo, &[s], &[]).unwrap();
    let g = r.gsnr("probe").unwrap();
    assert!((g - PATH_561_GSNR_DB).abs() < 1e-6, "{g}");
    assert!((20.0..30.0).contains(&g));
}

#[test]
fn lower_noise_figure_everywhere_raises_gsnr() {
    let s = [Service::new("probe", vec![5, 6, 1], 193.1, Rate::G400)];
    let gsnr_at = |nf: f64| {
        let mut topo = NetworkTopology::default_topology();
        topo.omses.iter_mut().flat_map(|o| &mut o.elements).for_each(|e| e.amp.noise_figure_db = nf);
        gn::estimate_path_qot(&topo, &s, &[]).unwrap().gsnr("probe").unwrap()
    };
    assert!(gsnr_at(3.0) > gsnr_at(5.0));
}

#[test]
fn empty_path_is_rejected() {
    let topo = NetworkTopology::default_topology();
    let s = Service::new("probe", vec![], 193.1, Rate::G400);
    assert!(gn::estimate_path_qot(&topo, &[s], &[]).is_err());
    assert_eq!(gn::required_gsnr_db(600), Err(QotError::UnknownRate(600)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn nli_is_cubic_in_launch_power(seed in any::<u64>(), up_db in -3.0f64..3.0) {
        let mut r = common::rng(seed);
        let span = common::random_span(&mut r);
        let comb = common::random_comb(&mut r);
        let scaled: Vec<CombChannel> =
            comb.iter().map(|c| CombChannel { power_mw: c.power_mw * db_to_lin(up_db), ..*c }).collect();
        let base = nli_power_per_span(&span, &comb, 0).unwrap();
        let after = nli_power_per_span(&span, &scaled, 0).unwrap();
        prop_assert!((lin_to_db(after / base) - 3.0 * up_db).abs() < 1e-9);
    }

    #[test]
    fn gsnr_is_finite_and_capped(seed in any::<u64>()) {
        let (topo, services) = common::random_line_instance(&mut common::rng(seed));
        let r = gn::estimate_path_qot(&topo, &services, &[]).unwrap();
        prop_assert_eq!(r.channels.len(), services.len());
        for c in &r.channels {
            prop_assert!(c.gsnr_db.is_finite() && c.gsnr_db <= GSNR_CAP_DB);
        }
    }

    #[test]
    fn removing_a_channel_never_hurts_the_others(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let (topo, services) = common::random_line_instance(&mut common::rng(seed));
        let before = gn::estimate_path_qot(&topo, &services, &[]).unwrap();
        let mut fewer = services.clone();
        fewer.remove(pick.index(services.len()));
        let after = gn::estimate_path_qot(&topo, &fewer, &[]).unwrap();
        for c in &after.channels {
            prop_assert!(c.gsnr_db >= before.gsnr(&c.service_id).unwrap() - 1e-12, "{}", c.service_id);
        }
    }

    #[test]
    fn execution_modes_agree(seed in any::<u64>()) {
        let (topo, services) = common::random_line_instance(&mut common::rng(seed));
        let par = gn::propagate_with(ExecMode::Parallel, &topo, &services).unwrap();
        let seq = gn::propagate_with(ExecMode::Sequential, &topo, &services).unwrap();
        prop_assert_eq!(par, seq);
    }
}
