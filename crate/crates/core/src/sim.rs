//! Deterministic time-stepped simulation of one cluster over a day, its
//! always-on tri-sectorized baseline, and parameter sweeps.

use rand::Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig, SweepVariable};
use crate::energy::{EnergyLedger, PowerModel};
use crate::events::{Event, EventLog};
use crate::ids::{AccessPointId, BitRate, BsId, ElementId, FlowId, UserId};
use crate::ifom::{IfomError, OffloadMechanism};
use crate::mde::mde1::{self, DecisionHistory, DecisionParams};
use crate::mde::nit::{self, Ndcm, Nit};
use crate::mde::{LoadReport, MdeError, Thresholds};
use crate::network::NetworkState;
use crate::rng;
use crate::topology::{build_cluster, BsMode};
use crate::traffic::{assign_service, Network, ServiceModels, Session, TrafficProfile};

/// Cluster identifier used in network information tables.
pub const CLUSTER_ID: u32 = 0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("runtime invariant violated at t={t_s}s: {message}")]
    Invariant { t_s: f64, message: String },
}

impl SimError {
    fn invariant(t_s: f64, e: impl std::fmt::Display) -> Self {
        SimError::Invariant {
            t_s,
            message: e.to_string(),
        }
    }
}

impl From<MdeError> for SimError {
    fn from(e: MdeError) -> Self {
        SimError::invariant(f64::NAN, e)
    }
}

/// Simulation time: seconds since 00:00.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub t: f64,
    pub dt: f64,
    pub horizon: f64,
}

impl SimClock {
    pub fn new(dt: f64, horizon: f64) -> Self {
        SimClock {
            t: 0.0,
            dt,
            horizon,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// True when `t` is a multiple of `period`.
    pub fn on_period(&self, period: f64) -> bool {
        let r = self.t / period;
        (r - r.round()).abs() < 1e-9
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsStep {
    pub bs: BsId,
    pub mode: BsMode,
    pub load: f64,
    pub power_w: f64,
    /// Same cell in the always-on tri-sectorized replay.
    pub baseline_power_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApStep {
    pub ap: AccessPointId,
    pub utilization: f64,
    pub power_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t_s: f64,
    pub bs: Vec<BsStep>,
    pub aps: Vec<ApStep>,
    /// Sessions currently offloaded by each mechanism.
    pub offloads_uc: usize,
    pub offloads_nc: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub savings_pct: f64,
    /// Fraction of the saved energy earned while cells were omni-directional.
    pub ss_share: f64,
    /// Fraction of the saved energy earned while cells were off.
    pub pd_share: f64,
    pub cellular_wh: f64,
    pub baseline_cellular_wh: f64,
    pub wifi_wh: f64,
    /// Sum over steps of offloaded sessions (session-steps).
    pub offloaded_session_steps: u64,
}

impl Summary {
    /// Recomputes the summary from step records alone.
    pub fn from_steps(steps: &[StepRecord], dt_s: f64) -> Summary {
        let mut ledger = EnergyLedger::new();
        let (mut ss_saved, mut pd_saved, mut all_saved) = (0.0, 0.0, 0.0);
        let mut offloaded = 0u64;
        for s in steps {
            ledger.accumulate(
                s.bs.iter()
                    .map(|b| (ElementId::Bs(b.bs), b.power_w))
                    .chain(s.aps.iter().map(|a| (ElementId::Ap(a.ap), a.power_w))),
                dt_s,
            );
            ledger.accumulate_baseline(
                s.bs.iter()
                    .map(|b| (ElementId::Bs(b.bs), b.baseline_power_w)),
                dt_s,
            );
            for b in &s.bs {
                let saved = b.baseline_power_w - b.power_w;
                all_saved += saved;
                match b.mode {
                    BsMode::Omni => ss_saved += saved,
                    BsMode::Off => pd_saved += saved,
                    BsMode::TriSectorized => {}
                }
            }
            offloaded += (s.offloads_uc + s.offloads_nc) as u64;
        }
        let share = |x: f64| if all_saved > 0.0 { x / all_saved } else { 0.0 };
        Summary {
            savings_pct: ledger.savings().unwrap_or(0.0),
            ss_share: share(ss_saved),
            pd_share: share(pd_saved),
            cellular_wh: ledger.cellular_wh(),
            baseline_cellular_wh: ledger.baseline_cellular_wh(),
            wifi_wh: ledger.wifi_wh(),
            offloaded_session_steps: offloaded,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub steps: Vec<StepRecord>,
    pub summary: Summary,
    pub seed: u64,
    pub config_digest: String,
    pub counters: crate::network::Counters,
    pub events: EventLog,
    pub ledger: EnergyLedger,
}

/// Hex SHA-256 of the serialized configuration.
pub fn config_digest(cfg: &ScenarioConfig) -> String {
    let text = cfg.to_toml_string().unwrap_or_default();
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs the scenario with the configured seed.
pub fn run(cfg: &ScenarioConfig) -> Result<SimResult, SimError> {
    run_seeded(cfg, cfg.sim.seed, cfg.output.events)
}

/// Same traffic with every cell tri-sectorized and no offloading.
pub fn run_baseline(cfg: &ScenarioConfig) -> Result<SimResult, SimError> {
    let mut c = cfg.clone();
    c.mechanisms = crate::config::Mechanisms::NONE;
    run_seeded(&c, cfg.sim.seed, cfg.output.events)
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    seed: u64,
    net: NetworkState,
    profile: TrafficProfile,
    models: ServiceModels,
    thresholds: Thresholds,
    power: PowerModel,
    ndcm: Ndcm,
    previous_nit: Nit,
    previous_reports: Vec<LoadReport>,
    history: DecisionHistory,
}

pub fn run_seeded(cfg: &ScenarioConfig, seed: u64, events: bool) -> Result<SimResult, SimError> {
    cfg.validate().map_err(|e| {
        SimError::Config(ConfigError::Invalid {
            key: e.key.to_string(),
            line: None,
            message: e.message,
        })
    })?;
    let thresholds = cfg.thresholds().expect("validated");
    let mut topology = build_cluster(cfg.geometry.cells, cfg.geometry.cell_radius_m)
        .map_err(|e| SimError::invariant(0.0, e))?;
    topology.access_points = topology.place_access_points(
        cfg.wifi.density,
        cfg.wifi.beta,
        cfg.wifi.coverage_radius_m,
        seed,
    );
    let log = if events {
        EventLog::enabled()
    } else {
        EventLog::disabled()
    };
    let net = NetworkState::new(
        topology,
        BitRate::from_mbps(cfg.geometry.sector_capacity_mbps),
        cfg.ifom.auth_delay_ms,
        cfg.ifom.binding_lifetime_s,
        log,
    );
    let mut engine = Engine {
        cfg,
        seed,
        net,
        profile: cfg.profile(),
        models: cfg.service_models(),
        thresholds,
        power: cfg.power,
        ndcm: Ndcm::default(),
        previous_nit: Nit::empty(CLUSTER_ID),
        previous_reports: Vec::new(),
        history: DecisionHistory::default(),
    };
    engine.net.log(
        Event::new(0.0, "run-start")
            .with("seed", seed)
            .with("aps", engine.net.aps.len())
            .with("mechanisms", cfg.mechanisms.label())
            .with("config", config_digest(cfg)),
    );
    let mut clock = SimClock::new(cfg.sim.dt_s, cfg.sim.horizon_s);
    let mut steps = Vec::with_capacity(clock.steps());
    for i in 0..clock.steps() {
        clock.t = i as f64 * clock.dt;
        engine.net.t_s = clock.t;
        engine.step(&clock)?;
        steps.push(engine.record());
    }
    let summary = Summary::from_steps(&steps, cfg.sim.dt_s);
    let mut ledger = EnergyLedger::new();
    for s in &steps {
        ledger.accumulate(
            s.bs.iter()
                .map(|b| (ElementId::Bs(b.bs), b.power_w))
                .chain(s.aps.iter().map(|a| (ElementId::Ap(a.ap), a.power_w))),
            cfg.sim.dt_s,
        );
        ledger.accumulate_baseline(
            s.bs.iter()
                .map(|b| (ElementId::Bs(b.bs), b.baseline_power_w)),
            cfg.sim.dt_s,
        );
    }
    let t_end = clock.horizon;
    engine.net.log(
        Event::new(t_end, "run-end")
            .with("savings_pct", format!("{:.4}", summary.savings_pct))
            .with("offloads_uc", engine.net.counters.offloads_uc)
            .with("offloads_nc", engine.net.counters.offloads_nc),
    );
    Ok(SimResult {
        steps,
        summary,
        seed,
        config_digest: config_digest(cfg),
        counters: engine.net.counters,
        events: engine.net.events,
        ledger,
    })
}

impl Engine<'_> {
    fn step(&mut self, clock: &SimClock) -> Result<(), SimError> {
        let t = clock.t;
        self.depart_drained();
        if clock.on_period(3600.0) {
            self.resample_hour(self.net.hour());
        }
        if self.cfg.mechanisms.mde2 && clock.on_period(self.cfg.mde.nit_period_s) {
            self.run_mde2(t)?;
        }
        let m = self.cfg.mechanisms;
        if (m.ss || m.pd) && clock.on_period(self.cfg.mde.monitoring_period_s) {
            self.run_mde1(t)?;
            self.net
                .check_invariants()
                .map_err(|e| SimError::invariant(t, e))?;
        }
        self.net.step_sessions(clock.dt);
        Ok(())
    }

    /// Users marked to leave do so once their session is idle.
    fn depart_drained(&mut self) {
        let leaving: Vec<UserId> = self
            .net
            .users
            .values()
            .filter(|u| u.draining && u.session.current_rate() == BitRate::ZERO)
            .map(|u| u.id)
            .collect();
        for u in leaving {
            self.net.remove_user(u);
        }
    }

    fn resample_hour(&mut self, hour: usize) {
        let n_bs = self.net.topology.base_stations.len();
        let include_video = self.cfg.traffic.include_video;
        for b in 0..n_bs {
            let bs = BsId(b as u32);
            let mut count_rng =
                rng::stream(self.seed, "traffic.active-users", (hour * n_bs + b) as u64);
            let target = self
                .profile
                .sample_active_users(Network::Cellular, hour, &mut count_rng)
                .expect("hour in range") as usize;
            let mut active: Vec<UserId> = Vec::new();
            let mut draining: Vec<UserId> = Vec::new();
            for u in self.net.users.values().filter(|u| u.home == bs) {
                if u.draining {
                    draining.push(u.id);
                } else {
                    active.push(u.id);
                }
            }
            if target < active.len() {
                for id in active.iter().rev().take(active.len() - target) {
                    self.net.users.get_mut(id).expect("listed").draining = true;
                }
                continue;
            }
            let mut missing = target - active.len();
            for id in draining.iter().rev() {
                if missing == 0 {
                    break;
                }
                self.net.users.get_mut(id).expect("listed").draining = false;
                missing -= 1;
            }
            for _ in 0..missing {
                let id = UserId(self.net.next_user);
                let mut urng = rng::stream(self.seed, "traffic.user", id.0 as u64);
                let service = assign_service(&mut urng, include_video);
                let position = self.net.topology.sample_point_in_cell(
                    bs,
                    self.cfg.geometry.min_distance_m,
                    &mut urng,
                );
                let session = Session::start(FlowId(id.0), id, service, &self.models, &mut urng);
                self.net.add_user(bs, position, session, urng);
                self.net.log(
                    Event::new(self.net.t_s, "user-join")
                        .with("user", id)
                        .with("home", bs)
                        .with("service", service.as_str()),
                );
            }
        }
        for a in 0..self.net.aps.len() {
            let mut nrng = rng::stream(self.seed, "wifi.native", (a * 24 + hour) as u64);
            let count = self
                .profile
                .sample_active_users(Network::Wifi, hour, &mut nrng)
                .expect("hour in range");
            let rates: Vec<BitRate> = (0..count)
                .map(|_| {
                    let s = assign_service(&mut nrng, include_video);
                    BitRate::from_kbps(self.models.params(s).on_rate_kbps)
                })
                .collect();
            self.net.set_native_users(AccessPointId(a as u32), &rates);
        }
    }

    fn run_mde2(&mut self, t: f64) -> Result<(), SimError> {
        let reports = mde1::collect_reports(&self.net, &self.previous_reports);
        let ap_reports: Vec<LoadReport> = reports
            .into_iter()
            .filter(|r| matches!(r.element_id, ElementId::Ap(_)))
            .collect();
        let nit = self.ndcm.build(
            &ap_reports,
            &self.net.topology,
            self.cfg.mde.nit_size,
            CLUSTER_ID,
        );
        let delta = nit::filter_nit(&nit, &self.previous_nit)?;
        self.net.log(
            Event::new(t, "nit")
                .with("version", nit.version)
                .with("entries", nit.entries.len())
                .with("upserts", delta.upserts.len())
                .with("removals", delta.removals.len())
                .with(
                    "aps",
                    nit.entries
                        .iter()
                        .map(|e| format!("{}:{}", e.ap_id, e.qos_classes))
                        .collect::<Vec<_>>()
                        .join(","),
                ),
        );
        let mut unicasts = 0usize;
        let period = (t / self.cfg.mde.nit_period_s).round() as u64;
        let p = nit::p_t(t, &self.cfg.selection_window());
        let candidates: Vec<UserId> = self
            .net
            .users
            .values()
            .filter(|u| !u.draining)
            .map(|u| u.id)
            .collect();
        for id in candidates {
            let user = &self.net.users[&id];
            if nit::first_attach_nit(!user.nit_received, Some(&nit), CLUSTER_ID).is_some() {
                unicasts += 1;
                self.net.users.get_mut(&id).expect("listed").nit_received = true;
            }
            let coin = rng::keyed_uniform(self.seed, "mde2.coverage", id.0 as u64, period);
            let covered = self.cfg.mde.mandatory_offload || coin < p;
            let user = &self.net.users[&id];
            if user.wifi_selected {
                // Out of temporal coverage this period: back to cellular.
                if !covered {
                    self.net
                        .return_to_cellular(id)
                        .map_err(|e| SimError::invariant(t, e))?;
                }
                continue;
            }
            if !matches!(user.serving, ElementId::Bs(_)) {
                continue;
            }
            let target = nit::user_select_network(
                user.session.service,
                user.session.on_rate,
                &nit,
                covered,
                &self.net.aps,
            );
            if let Some(ap) = target {
                self.net
                    .offload_session(id, ap, self.cfg.mde.mde2_offload)
                    .map_err(|e| SimError::invariant(t, e))?;
                self.net.users.get_mut(&id).expect("listed").wifi_selected = true;
            }
        }
        if unicasts > 0 {
            self.net
                .log(Event::new(t, "nit-unicast").with("users", unicasts));
        }
        self.previous_nit = nit;
        Ok(())
    }

    fn run_mde1(&mut self, t: f64) -> Result<(), SimError> {
        let reports = mde1::collect_reports(&self.net, &self.previous_reports);
        let params = DecisionParams {
            thresholds: self.thresholds,
            power: self.power,
            sector_capacity_mbps: self.cfg.geometry.sector_capacity_mbps,
            ss_enabled: self.cfg.mechanisms.ss,
            pd_enabled: self.cfg.mechanisms.pd,
        };
        let assessment = mde1::assess(&reports, self.net.cluster(), &params)
            .map_err(|e| SimError::invariant(t, e))?;
        let decision = mde1::decide(&assessment, self.net.cluster(), &params, &self.history);
        self.history.record(t, &decision);
        mde1::execute(&decision, &mut self.net, self.cfg.mde.mde1_offload)
            .map_err(|e: IfomError| SimError::invariant(t, e))?;
        self.previous_reports = reports;
        Ok(())
    }

    fn record(&self) -> StepRecord {
        let loads = self.net.bs_loads();
        let demand = self.net.home_demand_all();
        let tri = self.net.tri_capacity();
        let bs = self
            .net
            .topology
            .base_stations
            .iter()
            .map(|b| {
                let i = b.id.0 as usize;
                let load = self.net.load_fraction(b.mode, loads[i].current);
                let baseline_load = if tri.0 == 0 {
                    0.0
                } else {
                    (demand[i].0 as f64 / tri.0 as f64).min(1.0)
                };
                BsStep {
                    bs: b.id,
                    mode: b.mode,
                    load,
                    power_w: self.power.bs_power(b.mode, load).expect("clamped"),
                    baseline_power_w: self
                        .power
                        .bs_power(BsMode::TriSectorized, baseline_load)
                        .expect("clamped"),
                }
            })
            .collect();
        let ap_power = self.power.ap_power();
        let aps = self
            .net
            .aps
            .iter()
            .map(|a| ApStep {
                ap: a.ap_id,
                utilization: a.utilization(),
                power_w: ap_power,
            })
            .collect();
        let (mut uc, mut nc) = (0, 0);
        for u in self.net.users.values() {
            match u.offload {
                Some(OffloadMechanism::UserCentric) => uc += 1,
                Some(OffloadMechanism::NetworkCentric) => nc += 1,
                None => {}
            }
        }
        StepRecord {
            t_s: self.net.t_s,
            bs,
            aps,
            offloads_uc: uc,
            offloads_nc: nc,
        }
    }
}

/// Seed of replica `i` of a sweep; shared by every point and arm.
pub fn replica_seed(root: u64, i: usize) -> u64 {
    rng::derive_seed(root, "sweep.replica", i as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub savings_pct_mean: f64,
    pub savings_pct_std: f64,
    pub ss_share: f64,
    pub pd_share: f64,
    pub offloaded_session_steps_mean: f64,
    pub savings_per_replica: Vec<f64>,
}

/// One run per value and replica (runs execute in parallel); results in
/// input order.
pub fn sweep(
    cfg: &ScenarioConfig,
    variable: SweepVariable,
    values: &[f64],
) -> Result<Vec<SweepPoint>, SimError> {
    let configs: Vec<ScenarioConfig> = values.iter().map(|v| variable.apply(cfg, *v)).collect();
    for c in &configs {
        c.validate().map_err(|e| {
            SimError::Config(ConfigError::Invalid {
                key: e.key.to_string(),
                line: None,
                message: e.message,
            })
        })?;
    }
    let replicas = cfg.sim.replicas;
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|v| (0..replicas).map(move |r| (v, r)))
        .collect();
    let results: Vec<Result<Summary, SimError>> = jobs
        .par_iter()
        .map(|&(v, r)| {
            run_seeded(&configs[v], replica_seed(cfg.sim.seed, r), false).map(|res| res.summary)
        })
        .collect();
    let mut points = Vec::with_capacity(values.len());
    let mut it = results.into_iter();
    for &value in values {
        let runs: Vec<Summary> = (&mut it).take(replicas).collect::<Result<_, _>>()?;
        let savings: Vec<f64> = runs.iter().map(|s| s.savings_pct).collect();
        let n = savings.len() as f64;
        let mean = savings.iter().sum::<f64>() / n;
        let var = if savings.len() > 1 {
            savings.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        points.push(SweepPoint {
            value,
            savings_pct_mean: mean,
            savings_pct_std: var.sqrt(),
            ss_share: runs.iter().map(|s| s.ss_share).sum::<f64>() / n,
            pd_share: runs.iter().map(|s| s.pd_share).sum::<f64>() / n,
            offloaded_session_steps_mean: runs
                .iter()
                .map(|s| s.offloaded_session_steps as f64)
                .sum::<f64>()
                / n,
            savings_per_replica: savings,
        });
    }
    Ok(points)
}

/// Uniform helper kept for callers that need a draw from a named stream.
pub fn uniform(seed: u64, label: &str, index: u64) -> f64 {
    rng::stream(seed, label, index).random::<f64>()
}
