//! Oracles and drivers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::net::Ipv6Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use offload_sim::energy::PowerModel;
use offload_sim::events::EventLog;
use offload_sim::ids::{AccessPointId, BitRate, BsId, ElementId, FlowId, UserId};
use offload_sim::ifom::{
    home_address, home_network_address, HomeAgent, Lma, MagId, OffloadMechanism,
};
use offload_sim::mde::mde1::{self, Decision, DecisionHistory, DecisionParams};
use offload_sim::mde::nit::{build_nit, Nit};
use offload_sim::mde::{HostedLoad, LoadReport, MdeConfig, WifiMetrics};
use offload_sim::network::NetworkState;
use offload_sim::rng;
use offload_sim::topology::{build_cluster, BsMode, Point, Topology};
use offload_sim::traffic::{Service, ServiceModels, Session};

// ---------------------------------------------------------------------------
// Home agent: exhaustive comparison against a declarative model.

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HaOp {
    Register(usize),
    Deregister(usize),
    Bind(usize, usize),
    Unbind(usize),
}

pub fn ha_alphabet(flows: usize, coas: usize) -> Vec<HaOp> {
    let mut ops = Vec::new();
    for c in 0..coas {
        ops.push(HaOp::Register(c));
        ops.push(HaOp::Deregister(c));
        for f in 0..flows {
            ops.push(HaOp::Bind(f, c));
        }
    }
    for f in 0..flows {
        ops.push(HaOp::Unbind(f));
    }
    ops
}

pub fn coa(c: usize) -> Ipv6Addr {
    Ipv6Addr::new(0x2001, 0xdb8, 0xc0a, 0, 0, 0, 0, c as u16 + 1)
}

pub const HOA: Ipv6Addr = Ipv6Addr::new(0x2001, 0xdb8, 1, 0, 0, 0, 0, 1);

/// Applies `op` to the agent; returns whether its precondition held.
pub fn ha_apply(ha: &mut HomeAgent, op: HaOp) -> bool {
    match op {
        HaOp::Register(c) => {
            ha.register_coa(HOA, coa(c));
            true
        }
        HaOp::Deregister(c) => match ha.binding_for_coa(HOA, coa(c)) {
            Some(b) => {
                ha.deregister(HOA, b);
                true
            }
            None => {
                // Unknown deregistrations are ignored.
                ha.deregister(HOA, offload_sim::ifom::BindingId(9999));
                false
            }
        },
        HaOp::Bind(f, c) => match ha.binding_for_coa(HOA, coa(c)) {
            Some(b) => ha.bind_flow(FlowId(f as u32), HOA, b).is_ok(),
            None => false,
        },
        HaOp::Unbind(f) => {
            ha.unbind_flow(FlowId(f as u32));
            true
        }
    }
}

/// Route of flow `f` computed from the history of effective operations
/// alone: a flow follows its last binding while that care-of address stays
/// registered, and otherwise the longest-registered care-of address.
pub fn ha_oracle(history: &[HaOp], f: usize) -> Option<Ipv6Addr> {
    let coas: Vec<usize> = history
        .iter()
        .filter_map(|op| match op {
            HaOp::Register(c) => Some(*c),
            _ => None,
        })
        .collect();
    // Start index of the current continuous registration of each address.
    let epoch = |c: usize| -> Option<usize> {
        let mut start = None;
        for (i, op) in history.iter().enumerate() {
            match op {
                HaOp::Register(x) if *x == c && start.is_none() => start = Some(i),
                HaOp::Deregister(x) if *x == c => start = None,
                _ => {}
            }
        }
        start
    };
    let default = coas
        .iter()
        .filter_map(|c| epoch(*c).map(|e| (e, *c)))
        .min()
        .map(|(_, c)| c)?;
    let last_bind = history
        .iter()
        .enumerate()
        .rev()
        .find_map(|(i, op)| match op {
            HaOp::Bind(x, c) if *x == f => Some(Some((i, *c))),
            HaOp::Unbind(x) if *x == f => Some(None),
            _ => None,
        });
    if let Some(Some((i, c))) = last_bind {
        let dropped = history[i..]
            .iter()
            .any(|op| matches!(op, HaOp::Deregister(x) if *x == c));
        if !dropped {
            return Some(coa(c));
        }
    }
    Some(coa(default))
}

/// Depth-first enumeration of every operation sequence up to `max_len`;
/// returns (route tables compared, mismatches).
pub fn ha_exhaustive(flows: usize, coas: usize, max_len: usize) -> (u64, u64) {
    let alphabet = ha_alphabet(flows, coas);
    let mut compared = 0;
    let mut mismatches = 0;
    let mut stack: Vec<(HomeAgent, Vec<HaOp>, usize)> = vec![(HomeAgent::default(), vec![], 0)];
    while let Some((ha, history, depth)) = stack.pop() {
        for f in 0..flows {
            compared += 1;
            let got = ha.route(FlowId(f as u32), HOA).ok();
            if got != ha_oracle(&history, f) || !ha.is_consistent() {
                mismatches += 1;
            }
        }
        if depth == max_len {
            continue;
        }
        for &op in &alphabet {
            let mut next = ha.clone();
            let mut h = history.clone();
            if ha_apply(&mut next, op) {
                h.push(op);
            }
            stack.push((next, h, depth + 1));
        }
    }
    (compared, mismatches)
}

// ---------------------------------------------------------------------------
// Local mobility anchor: exhaustive comparison against a declarative model.

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LmaOp {
    Attach(usize),
    Detach(usize),
    Add(usize),
    Move(usize, usize),
}

const LMA_USER: UserId = UserId(7);

pub fn mag(m: usize) -> MagId {
    if m == 0 {
        MagId(ElementId::Bs(BsId(0)))
    } else {
        MagId(ElementId::Ap(AccessPointId(m as u32 - 1)))
    }
}

pub fn lma_alphabet(flows: usize, mags: usize) -> Vec<LmaOp> {
    let mut ops = Vec::new();
    for m in 0..mags {
        ops.push(LmaOp::Attach(m));
        ops.push(LmaOp::Detach(m));
        for f in 0..flows {
            ops.push(LmaOp::Move(f, m));
        }
    }
    for f in 0..flows {
        ops.push(LmaOp::Add(f));
    }
    ops
}

pub fn lma_apply(lma: &mut Lma, op: LmaOp) -> bool {
    match op {
        LmaOp::Attach(m) => {
            lma.mag_attach(LMA_USER, mag(m));
            true
        }
        LmaOp::Detach(m) => {
            let known = lma.binding(LMA_USER, mag(m)).is_some();
            lma.mag_detach(LMA_USER, mag(m));
            known
        }
        LmaOp::Add(f) => {
            lma.add_flow(LMA_USER, FlowId(f as u32));
            true
        }
        LmaOp::Move(f, m) => lma.move_flow(FlowId(f as u32), mag(m)).is_ok(),
    }
}

/// Attachment state after `history`: attached MAGs with the index of their
/// latest attach.
fn lma_attached(history: &[LmaOp]) -> BTreeMap<usize, usize> {
    let mut attached = BTreeMap::new();
    for (i, op) in history.iter().enumerate() {
        match op {
            LmaOp::Attach(m) => {
                attached.insert(*m, i);
            }
            LmaOp::Detach(m) => {
                attached.remove(m);
            }
            _ => {}
        }
    }
    attached
}

/// A flow uses the MAG it was last anchored to while that MAG stays
/// attached, and otherwise the most recently attached MAG.
pub fn lma_oracle(history: &[LmaOp], f: usize) -> Option<MagId> {
    if !history.contains(&LmaOp::Add(f)) {
        return None;
    }
    let attached = lma_attached(history);
    let latest = attached.iter().max_by_key(|(_, i)| **i).map(|(m, _)| *m);
    let anchor = history
        .iter()
        .enumerate()
        .rev()
        .find_map(|(i, op)| match op {
            LmaOp::Move(x, m) if *x == f => Some(Some((i, *m))),
            LmaOp::Add(x) if *x == f => {
                let at = lma_attached(&history[..i]);
                Some(at.iter().max_by_key(|(_, j)| **j).map(|(m, _)| (i, *m)))
            }
            _ => None,
        });
    if let Some(Some((i, m))) = anchor {
        let detached = history[i..]
            .iter()
            .any(|op| matches!(op, LmaOp::Detach(x) if *x == m));
        if !detached {
            return Some(mag(m));
        }
    }
    latest.map(mag)
}

pub fn lma_exhaustive(flows: usize, mags: usize, max_len: usize) -> (u64, u64) {
    let alphabet = lma_alphabet(flows, mags);
    let mut compared = 0;
    let mut mismatches = 0;
    let mut stack: Vec<(Lma, Vec<LmaOp>, usize)> = vec![(Lma::default(), vec![], 0)];
    while let Some((lma, history, depth)) = stack.pop() {
        for f in 0..flows {
            compared += 1;
            let got = lma.route_mag(FlowId(f as u32)).ok();
            if got != lma_oracle(&history, f) || !lma.is_consistent() {
                mismatches += 1;
            }
        }
        if depth == max_len {
            continue;
        }
        for &op in &alphabet {
            let mut next = lma.clone();
            let mut h = history.clone();
            if lma_apply(&mut next, op) {
                h.push(op);
            }
            stack.push((next, h, depth + 1));
        }
    }
    (compared, mismatches)
}

// ---------------------------------------------------------------------------
// Service continuity under random offload / return / handover sequences.

pub fn continuity_network(users: usize) -> NetworkState {
    let mut topology = build_cluster(7, 300.0).unwrap();
    topology.access_points = topology.place_access_points(10.0, 10.0, 50.0, 3);
    assert!(topology.access_points.len() >= 2);
    let mut net = NetworkState::new(
        topology,
        BitRate::from_mbps(3.0),
        50.0,
        3600.0,
        EventLog::disabled(),
    );
    let models = ServiceModels::default();
    for i in 0..users {
        let id = UserId(net.next_user);
        let mut r = rng::stream(5, "test.user", i as u64);
        let home = BsId((i % 7) as u32);
        let pos = net.topology.sample_point_in_cell(home, 20.0, &mut r);
        let service = Service::ALL[i % 3];
        let session = Session::start(FlowId(id.0), id, service, &models, &mut r);
        net.add_user(home, pos, session, r);
    }
    net
}

#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct ContinuityTally {
    pub sequences: u64,
    pub operations: u64,
    pub address_changes: u64,
    pub flow_id_changes: u64,
    pub route_failures: u64,
}

/// Random valid operation sequences; every step checks that each user keeps
/// its exposed addresses and flow id and remains routable.
pub fn continuity(sequences: u64, ops_per_sequence: usize, seed: u64) -> ContinuityTally {
    let base = continuity_network(4);
    let ids: Vec<UserId> = base.users.keys().copied().collect();
    let expected: BTreeMap<UserId, (Ipv6Addr, FlowId)> = base
        .users
        .values()
        .map(|u| (u.id, (u.hoa, u.flow_id())))
        .collect();
    let n_aps = base.aps.len() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = ContinuityTally::default();
    for _ in 0..sequences {
        let mut net = base.clone();
        t.sequences += 1;
        for _ in 0..ops_per_sequence {
            let u = ids[rng.random_range(0..ids.len())];
            let on_wifi = matches!(net.users[&u].serving, ElementId::Ap(_));
            let result = match rng.random_range(0..3) {
                0 if !on_wifi => {
                    let ap = AccessPointId(rng.random_range(0..n_aps));
                    let mech = if rng.random_bool(0.5) {
                        OffloadMechanism::UserCentric
                    } else {
                        OffloadMechanism::NetworkCentric
                    };
                    // Admission rejection leaves the user on cellular.
                    let _ = net.offload_session(u, ap, mech);
                    Ok(())
                }
                1 if on_wifi => net.return_to_cellular(u),
                _ => {
                    let bs = BsId(rng.random_range(0..7));
                    net.move_to_bs(u, bs)
                }
            };
            t.operations += 1;
            if result.is_err() {
                t.route_failures += 1;
            }
            for (id, (hoa, flow)) in &expected {
                let user = &net.users[id];
                if user.hoa != *hoa || home_address(*id) != *hoa {
                    t.address_changes += 1;
                }
                if let Some(lif) = net.lma.interface(*id) {
                    if lif.exposed_address != home_network_address(*id) {
                        t.address_changes += 1;
                    }
                }
                if user.flow_id() != *flow {
                    t.flow_id_changes += 1;
                }
                match net.resolve_route(*id) {
                    Ok(e) if e == user.serving => {}
                    _ => t.route_failures += 1,
                }
            }
        }
        if net.check_invariants().is_err() {
            t.route_failures += 1;
        }
    }
    t
}

// ---------------------------------------------------------------------------
// Closed-loop base station cycle driven by scripted loads.

pub const SECTOR_MBPS: f64 = 10.0;

pub fn params(ss: bool, pd: bool, busy_hour_load: f64) -> DecisionParams {
    DecisionParams {
        thresholds: MdeConfig::default().thresholds(busy_hour_load, pd).unwrap(),
        power: PowerModel::default(),
        sector_capacity_mbps: SECTOR_MBPS,
        ss_enabled: ss,
        pd_enabled: pd,
    }
}

/// Reports in which cell `i` generates `loads[i]` (fraction of
/// tri-sectorized capacity) of traffic. An off cell's traffic is hosted by
/// its lowest-numbered live neighbour.
pub fn scripted_reports(net: &NetworkState, loads: &[f64]) -> Vec<LoadReport> {
    let tri = 3.0 * SECTOR_MBPS;
    let topo = &net.topology;
    let live = |b: BsId| topo.base_stations[b.0 as usize].mode != BsMode::Off;
    let mut hosted: BTreeMap<BsId, BTreeMap<BsId, HostedLoad>> = BTreeMap::new();
    for b in &topo.base_stations {
        let host = if live(b.id) {
            b.id
        } else {
            let mut n = topo.neighbors(b.id);
            n.sort();
            n.into_iter()
                .find(|x| live(*x))
                .expect("off cell has a live neighbour")
        };
        let mbps = loads[b.id.0 as usize] * tri;
        hosted.entry(host).or_default().insert(
            b.id,
            HostedLoad {
                current_mbps: mbps,
                reserved_mbps: mbps,
            },
        );
    }
    hosted
        .into_iter()
        .map(|(id, hosted)| {
            let mode = topo.base_stations[id.0 as usize].mode;
            let mbps: f64 = hosted.values().map(|h| h.current_mbps).sum();
            LoadReport {
                element_id: ElementId::Bs(id),
                timestamp_s: 0.0,
                load_fraction: mbps / net.capacity(mode).mbps(),
                attached_user_count: 0,
                mode: Some(mode),
                current_mbps: mbps,
                reserved_mbps: mbps,
                hosted,
                wifi: None,
            }
        })
        .collect()
}

pub struct Trace {
    pub net: NetworkState,
    pub params: DecisionParams,
    pub history: DecisionHistory,
}

impl Trace {
    pub fn new(params: DecisionParams) -> Self {
        Trace {
            net: NetworkState::new(
                build_cluster(7, 300.0).unwrap(),
                BitRate::from_mbps(SECTOR_MBPS),
                50.0,
                3600.0,
                EventLog::disabled(),
            ),
            params,
            history: DecisionHistory::default(),
        }
    }

    /// One monitoring period: assess, decide, execute.
    pub fn period(&mut self, loads: &[f64]) -> Decision {
        let reports = scripted_reports(&self.net, loads);
        let a = mde1::assess(&reports, self.net.cluster(), &self.params).unwrap();
        let d = mde1::decide(&a, self.net.cluster(), &self.params, &self.history);
        let t = self.history.periods as f64 * 900.0;
        self.history.record(t, &d);
        mde1::execute(&d, &mut self.net, OffloadMechanism::NetworkCentric).unwrap();
        d
    }

    pub fn modes(&self) -> Vec<BsMode> {
        self.net
            .topology
            .base_stations
            .iter()
            .map(|b| b.mode)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Random network information tables.

pub fn random_ap_reports<R: Rng>(rng: &mut R, n: usize) -> Vec<LoadReport> {
    (0..n)
        .map(|i| {
            // Coarse values so that equal spares and delays occur.
            let spare = rng.random_range(0..6) as f64 * 2.0;
            let delay = [50.0, 90.0, 200.0, 300.0, 550.0][rng.random_range(0..5)];
            LoadReport {
                element_id: ElementId::Ap(AccessPointId(i as u32)),
                timestamp_s: 0.0,
                load_fraction: 0.0,
                attached_user_count: 0,
                mode: None,
                current_mbps: 0.0,
                reserved_mbps: 0.0,
                hosted: BTreeMap::new(),
                wifi: Some(WifiMetrics {
                    bandwidth_utilization: 0.0,
                    spare_mbps: spare,
                    handover_delay_ms: 50.0,
                    end_to_end_delay_ms: delay,
                    jitter_ms: 0.0,
                    throughput_mbps: 0.0,
                    packet_loss_fraction: 0.0,
                }),
            }
        })
        .collect()
}

pub fn random_nit<R: Rng>(rng: &mut R, topology: &Topology, version: u64) -> Nit {
    let n = rng.random_range(0..12);
    let size = rng.random_range(0..8);
    build_nit(&random_ap_reports(rng, n), topology, size, 0, version)
}

pub fn nit_topology() -> Topology {
    let mut t = build_cluster(7, 300.0).unwrap();
    t.access_points = t.place_access_points(20.0, 10.0, 50.0, 1);
    t
}

/// Uniform point in the union of the cluster's cell disks.
pub fn point_in_cluster<R: Rng>(rng: &mut R, topology: &Topology) -> Point {
    let r = topology.cluster_radius_m;
    loop {
        let p = Point::new(rng.random_range(-r..=r), rng.random_range(-r..=r));
        if topology
            .base_stations
            .iter()
            .any(|b| p.distance(b.position) <= b.coverage_radius_m)
        {
            return p;
        }
    }
}
