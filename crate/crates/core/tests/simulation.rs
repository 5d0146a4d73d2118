use offload_sim::config::{Mechanisms, ScenarioConfig, SweepVariable};
use offload_sim::energy::PowerModel;
use offload_sim::sim::{self, run_baseline, run_seeded, Summary};
use offload_sim::topology::BsMode;

fn short() -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.sim.horizon_s = 8.0 * 3600.0;
    c.sim.replicas = 2;
    c
}

#[test]
fn zero_load_baseline_matches_power_model() {
    let mut c = ScenarioConfig::default();
    c.traffic.busy_hour_users = 0.0;
    let r = run_baseline(&c).unwrap();
    let p = PowerModel::default();
    let oracle = 7.0 * 3.0 * p.p0_w * 24.0;
    assert!((r.summary.baseline_cellular_wh - oracle).abs() < 1e-6);
    assert!((r.summary.cellular_wh - oracle).abs() < 1e-6);
}

#[test]
fn baseline_has_no_omni_or_off_steps_and_ignores_mde_settings() {
    let c = short();
    let a = run_baseline(&c).unwrap();
    assert!(a
        .steps
        .iter()
        .all(|s| s.bs.iter().all(|b| b.mode == BsMode::TriSectorized)));
    let mut d = c.clone();
    d.mde.t_switch = 0.5;
    d.mde.nit_size = 2;
    let b = run_baseline(&d).unwrap();
    assert_eq!(a.summary.cellular_wh, b.summary.cellular_wh);
}

#[test]
fn baseline_power_equals_scenario_baseline_column() {
    let c = short();
    let base = run_baseline(&c).unwrap();
    let scen = run_seeded(&c, c.sim.seed, false).unwrap();
    assert!((base.summary.cellular_wh - scen.summary.baseline_cellular_wh).abs() < 1e-6);
}

#[test]
fn single_value_sweep_gives_one_point() {
    let p = sim::sweep(&short(), SweepVariable::Beta, &[10.0]).unwrap();
    assert_eq!(p.len(), 1);
    assert_eq!(p[0].savings_per_replica.len(), 2);
}

#[test]
fn sweep_results_follow_input_order() {
    let c = short();
    let p = sim::sweep(&c, SweepVariable::MeanUsers, &[40.0, 10.0]).unwrap();
    assert_eq!(p[0].value, 40.0);
    let direct = run_seeded(
        &SweepVariable::MeanUsers.apply(&c, 10.0),
        sim::replica_seed(c.sim.seed, 0),
        false,
    )
    .unwrap();
    assert_eq!(p[1].savings_per_replica[0], direct.summary.savings_pct);
}

#[test]
fn disabled_mechanisms_give_a_zero_curve() {
    let mut c = short();
    c.mechanisms = Mechanisms::NONE;
    let p = sim::sweep(&c, SweepVariable::MeanUsers, &[10.0, 40.0]).unwrap();
    assert!(p.iter().all(|x| x.savings_pct_mean == 0.0));
}

#[test]
fn invalid_sweep_value_is_a_config_error() {
    let r = sim::sweep(&short(), SweepVariable::Beta, &[0.0]);
    assert!(matches!(r, Err(sim::SimError::Config(_))));
}

#[test]
fn ss_alone_attributes_all_savings_to_omni_cells() {
    let mut c = short();
    c.mechanisms = Mechanisms {
        ss: true,
        pd: false,
        mde2: false,
    };
    let s: Summary = run_seeded(&c, 4, false).unwrap().summary;
    assert!(s.savings_pct > 0.0);
    assert!((s.ss_share - 1.0).abs() < 1e-9, "{s:?}");
    assert_eq!(s.pd_share, 0.0);
}

#[test]
fn invariants_hold_every_step_of_a_full_day() {
    let c = ScenarioConfig::default();
    let r = run_seeded(&c, 2, true).unwrap();
    assert_eq!(r.steps.len(), 1440);
    for s in &r.steps {
        for b in &s.bs {
            assert!((0.0..=1.0).contains(&b.load));
        }
        for a in &s.aps {
            assert!((0.0..=1.0).contains(&a.utilization));
        }
    }
}
