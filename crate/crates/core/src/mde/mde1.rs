//! Base station cycle: monitoring reports, three-level situation
//! assessment, threshold decisions, and execution through offloading and
//! cell cooperation.

use std::collections::{BTreeMap, BTreeSet};

use crate::energy::PowerModel;
use crate::events::Event;
use crate::ids::{AccessPointId, BitRate, BsId, ElementId, UserId};
use crate::ifom::{IfomError, OffloadMechanism};
use crate::network::NetworkState;
use crate::topology::{BsMode, CooperationPattern, Topology};

use super::{Action, HostedLoad, LoadReport, MdeError, Thresholds, WifiMetrics};

/// Relative slack for comparing loads against thresholds.
const EPS: f64 = 1e-12;

fn at_most(x: f64, limit: f64) -> bool {
    x <= limit + EPS * limit.abs().max(1.0)
}

fn above(x: f64, limit: f64) -> bool {
    !at_most(x, limit)
}

/// One report per live base station and per access point.
pub fn collect_reports(net: &NetworkState, previous: &[LoadReport]) -> Vec<LoadReport> {
    let n_bs = net.topology.base_stations.len();
    let mut bs_hosted: Vec<BTreeMap<BsId, HostedLoad>> = vec![BTreeMap::new(); n_bs];
    let mut ap_hosted: Vec<BTreeMap<BsId, HostedLoad>> = vec![BTreeMap::new(); net.aps.len()];
    let mut ap_current = vec![BitRate::ZERO; net.aps.len()];
    for u in net.users.values() {
        let slot = match u.serving {
            ElementId::Bs(b) => Some(&mut bs_hosted[b.0 as usize]),
            ElementId::Ap(a) => {
                ap_current[a.0 as usize] += u.session.current_rate();
                (u.offload == Some(OffloadMechanism::NetworkCentric))
                    .then(|| &mut ap_hosted[a.0 as usize])
            }
        };
        if let Some(map) = slot {
            let h = map.entry(u.home).or_default();
            h.current_mbps += u.session.current_rate().mbps();
            h.reserved_mbps += u.session.on_rate.mbps();
        }
    }
    let loads = net.bs_loads();
    let mut reports = Vec::with_capacity(n_bs + net.aps.len());
    for (i, bs) in net.topology.base_stations.iter().enumerate() {
        if bs.mode == BsMode::Off {
            continue;
        }
        reports.push(LoadReport {
            element_id: ElementId::Bs(bs.id),
            timestamp_s: net.t_s,
            load_fraction: net.load_fraction(bs.mode, loads[i].current),
            attached_user_count: loads[i].users,
            mode: Some(bs.mode),
            current_mbps: loads[i].current.mbps(),
            reserved_mbps: loads[i].reserved.mbps(),
            hosted: std::mem::take(&mut bs_hosted[i]),
            wifi: None,
        });
    }
    for (i, ap) in net.aps.iter().enumerate() {
        let delay = ap.predicted_delay_ms();
        let element_id = ElementId::Ap(ap.ap_id);
        let jitter = previous
            .iter()
            .find(|r| r.element_id == element_id)
            .and_then(|r| r.wifi)
            .map(|w| (delay - w.end_to_end_delay_ms).abs())
            .unwrap_or(0.0);
        let throughput = ap_current[i].mbps();
        reports.push(LoadReport {
            element_id,
            timestamp_s: net.t_s,
            load_fraction: ap.utilization(),
            attached_user_count: ap.attached_user_count,
            mode: None,
            current_mbps: throughput,
            reserved_mbps: ap.reserved.mbps(),
            hosted: std::mem::take(&mut ap_hosted[i]),
            wifi: Some(WifiMetrics {
                bandwidth_utilization: ap.utilization(),
                spare_mbps: ap.spare().mbps(),
                handover_delay_ms: net.lma.auth_delay_ms,
                end_to_end_delay_ms: delay,
                jitter_ms: jitter,
                throughput_mbps: throughput,
                // Admission keeps the reserved rate within capacity.
                packet_loss_fraction: 0.0,
            }),
        });
    }
    reports
}

/// Cluster data the cycle consults besides the reports.
#[derive(Debug, Clone, Copy)]
pub struct Cluster<'a> {
    pub topology: &'a Topology,
    pub patterns: &'a [CooperationPattern],
    pub shares: &'a [BTreeMap<BsId, BTreeMap<BsId, f64>>],
    pub pattern: usize,
}

impl NetworkState {
    pub fn cluster(&self) -> Cluster<'_> {
        Cluster {
            topology: &self.topology,
            patterns: &self.patterns,
            shares: &self.area_shares,
            pattern: self.pattern,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DecisionParams {
    pub thresholds: Thresholds,
    pub power: PowerModel,
    pub sector_capacity_mbps: f64,
    pub ss_enabled: bool,
    pub pd_enabled: bool,
}

impl DecisionParams {
    fn tri(&self) -> f64 {
        3.0 * self.sector_capacity_mbps
    }

    fn omni(&self) -> f64 {
        self.sector_capacity_mbps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadClass {
    Off,
    AboveSwitch,
    BetweenTriggers,
    BelowSsTrigger,
    BelowPdTrigger,
}

/// Level-1 and level-2 view of one base station plus its level-3 projection.
#[derive(Debug, Clone, PartialEq)]
pub struct BsAssessment {
    pub bs: BsId,
    pub mode: BsMode,
    /// Carried rate over tri-sectorized capacity.
    pub load: f64,
    pub carried_mbps: f64,
    pub reserved_mbps: f64,
    /// The cell's own sessions currently on base stations.
    pub cell_demand: HostedLoad,
    /// The cell's own sessions the network moved to Wi-Fi.
    pub wifi_demand: HostedLoad,
    pub load_class: LoadClass,
    /// Overlapping access points with spare capacity.
    pub candidates: Vec<(AccessPointId, f64)>,
    pub projected: Action,
}

impl BsAssessment {
    pub fn candidate_spare_mbps(&self) -> f64 {
        self.candidates.iter().map(|(_, s)| s).sum()
    }

    fn home_demand_mbps(&self) -> f64 {
        self.cell_demand.current_mbps + self.wifi_demand.current_mbps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SituationAssessment {
    pub t_s: f64,
    pub bs: Vec<BsAssessment>,
    pub ap_spare_mbps: BTreeMap<AccessPointId, f64>,
}

/// Builds the three awareness levels from a complete set of reports.
pub fn assess(
    reports: &[LoadReport],
    cluster: Cluster<'_>,
    params: &DecisionParams,
) -> Result<SituationAssessment, MdeError> {
    let topology = cluster.topology;
    let n = topology.base_stations.len();
    let mut cell_demand = vec![HostedLoad::default(); n];
    let mut wifi_demand = vec![HostedLoad::default(); n];
    let mut ap_spare = BTreeMap::new();
    let mut bs_reports: BTreeMap<BsId, &LoadReport> = BTreeMap::new();
    let mut t_s = 0.0f64;
    for r in reports {
        t_s = t_s.max(r.timestamp_s);
        let target = match r.element_id {
            ElementId::Bs(b) => {
                bs_reports.insert(b, r);
                &mut cell_demand
            }
            ElementId::Ap(a) => {
                if let Some(w) = r.wifi {
                    ap_spare.insert(a, w.spare_mbps);
                }
                &mut wifi_demand
            }
        };
        for (home, h) in &r.hosted {
            if let Some(slot) = target.get_mut(home.0 as usize) {
                slot.current_mbps += h.current_mbps;
                slot.reserved_mbps += h.reserved_mbps;
            }
        }
    }
    let th = params.thresholds;
    let tri = params.tri();
    let mut out = Vec::with_capacity(n);
    for bs in &topology.base_stations {
        let (carried, reserved) = match (bs.mode, bs_reports.get(&bs.id)) {
            (BsMode::Off, _) => (0.0, 0.0),
            (_, Some(r)) => (r.current_mbps, r.reserved_mbps),
            (_, None) => return Err(MdeError::IncompleteAssessment(bs.id)),
        };
        let load = carried / tri;
        let load_class = if bs.mode == BsMode::Off {
            LoadClass::Off
        } else if at_most(load, th.pd_down()) {
            LoadClass::BelowPdTrigger
        } else if at_most(load, th.ss_down()) {
            LoadClass::BelowSsTrigger
        } else if at_most(load, th.t_switch) {
            LoadClass::BetweenTriggers
        } else {
            LoadClass::AboveSwitch
        };
        let candidates = topology
            .overlapping_aps(bs.id)
            .into_iter()
            .filter_map(|a| ap_spare.get(&a).map(|s| (a, *s)))
            .filter(|(_, s)| *s > 0.0)
            .collect();
        out.push(BsAssessment {
            bs: bs.id,
            mode: bs.mode,
            load,
            carried_mbps: carried,
            reserved_mbps: reserved,
            cell_demand: cell_demand[bs.id.0 as usize],
            wifi_demand: wifi_demand[bs.id.0 as usize],
            load_class,
            candidates,
            projected: Action::NoOp,
        });
    }
    let projections: Vec<Action> = out
        .iter()
        .map(|a| project_single(a, &out, cluster, params))
        .collect();
    for (a, p) in out.iter_mut().zip(projections) {
        a.projected = p;
    }
    Ok(SituationAssessment {
        t_s,
        bs: out,
        ap_spare_mbps: ap_spare,
    })
}

/// Level-3 candidate for one base station considered on its own.
fn project_single(
    a: &BsAssessment,
    all: &[BsAssessment],
    cluster: Cluster<'_>,
    params: &DecisionParams,
) -> Action {
    let th = params.thresholds;
    let tri = params.tri();
    match a.mode {
        BsMode::Off => {
            if at_most(th.pd_up(), a.home_demand_mbps() / tri) {
                Action::PowerUp(a.bs)
            } else {
                Action::NoOp
            }
        }
        BsMode::TriSectorized | BsMode::Omni => {
            if at_most(a.load, th.pd_down()) {
                // Neighbors' tri-sectorized headroom plus overlapping Wi-Fi.
                let headroom: f64 = cluster
                    .topology
                    .neighbors(a.bs)
                    .iter()
                    .filter_map(|n| all.iter().find(|x| x.bs == *n))
                    .filter(|x| x.mode != BsMode::Off)
                    .map(|x| (tri - x.carried_mbps).max(0.0))
                    .sum();
                let k = cluster
                    .patterns
                    .iter()
                    .find(|p| p.is_off(a.bs))
                    .map(|p| p.n_off);
                if let Some(k) = k {
                    if at_most(a.carried_mbps, headroom + a.candidate_spare_mbps()) {
                        return Action::PowerDown(a.bs, k);
                    }
                }
            }
            match a.mode {
                BsMode::TriSectorized
                    if at_most(a.load, th.ss_down())
                        && at_most(a.reserved_mbps - params.omni(), a.candidate_spare_mbps()) =>
                {
                    Action::SwitchToOmni(a.bs)
                }
                BsMode::Omni if above(a.load, th.ss_up()) => Action::SwitchToTriSectorized(a.bs),
                _ => Action::NoOp,
            }
        }
    }
}

/// Past decisions, kept for audit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecisionHistory {
    pub periods: u64,
    pub actions: Vec<(f64, Action)>,
}

impl DecisionHistory {
    pub fn record(&mut self, t_s: f64, decision: &Decision) {
        self.periods += 1;
        self.actions
            .extend(decision.actions.iter().map(|a| (t_s, *a)));
    }

    pub fn transitions(&self, bs: BsId) -> usize {
        self.actions
            .iter()
            .filter(|(_, a)| a.bs() == Some(bs))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    /// Cooperation pattern in force after execution.
    pub pattern: usize,
    /// Effective actions in execution order; empty means no operation.
    pub actions: Vec<Action>,
    pub projected_power_w: f64,
}

impl Decision {
    pub fn is_noop(&self) -> bool {
        self.actions.is_empty()
    }
}

struct Projection {
    power_w: f64,
    current: Vec<f64>,
    reserved: Vec<f64>,
}

/// Loads and power of the cluster if pattern `k` were in force.
fn project_pattern(
    assessment: &SituationAssessment,
    cluster: Cluster<'_>,
    params: &DecisionParams,
    k: usize,
) -> Option<Projection> {
    let th = params.thresholds;
    let tri = params.tri();
    let pattern = &cluster.patterns[k];
    let by_id = |b: BsId| &assessment.bs[b.0 as usize];
    for &c in &pattern.off_set {
        let a = by_id(c);
        let ok = if a.mode == BsMode::Off {
            above(th.pd_up(), a.home_demand_mbps() / tri)
        } else {
            at_most(a.home_demand_mbps() / tri, th.pd_down())
        };
        if !ok {
            return None;
        }
    }
    let n = assessment.bs.len();
    let mut current = vec![0.0; n];
    let mut reserved = vec![0.0; n];
    for a in &assessment.bs {
        let i = a.bs.0 as usize;
        if pattern.is_off(a.bs) {
            continue;
        }
        current[i] += a.cell_demand.current_mbps;
        reserved[i] += a.cell_demand.reserved_mbps;
        if a.mode == BsMode::Off {
            // Powering up brings its network-moved sessions home.
            current[i] += a.wifi_demand.current_mbps;
            reserved[i] += a.wifi_demand.reserved_mbps;
        }
    }
    for &c in &pattern.off_set {
        let a = by_id(c);
        for (l, share) in cluster.shares[k].get(&c).into_iter().flatten() {
            current[l.0 as usize] += a.cell_demand.current_mbps * share;
            reserved[l.0 as usize] += a.cell_demand.reserved_mbps * share;
        }
    }
    if k > 0 {
        let excess: f64 = (0..n)
            .filter(|i| !pattern.is_off(BsId(*i as u32)))
            .map(|i| (current[i] - tri).max(0.0))
            .sum();
        let newly_off: BTreeSet<AccessPointId> = pattern
            .off_set
            .iter()
            .filter(|c| by_id(**c).mode != BsMode::Off)
            .flat_map(|c| by_id(*c).candidates.iter().map(|(ap, _)| *ap))
            .collect();
        let spare: f64 = newly_off
            .iter()
            .map(|ap| assessment.ap_spare_mbps.get(ap).copied().unwrap_or(0.0))
            .sum();
        if above(excess, spare) {
            return None;
        }
    }
    let mut power_w = 0.0;
    for a in &assessment.bs {
        let i = a.bs.0 as usize;
        if pattern.is_off(a.bs) {
            power_w += params.power.sleep_w;
            continue;
        }
        let mode = projected_mode(a, current[i], reserved[i], params);
        let cap = if mode == BsMode::Omni {
            params.omni()
        } else {
            tri
        };
        let load = if cap > 0.0 {
            (current[i] / cap).min(1.0)
        } else {
            0.0
        };
        power_w += params
            .power
            .bs_power(mode, load)
            .expect("load clamped to [0, 1]");
    }
    Some(Projection {
        power_w,
        current,
        reserved,
    })
}

fn projected_mode(
    a: &BsAssessment,
    current: f64,
    reserved: f64,
    params: &DecisionParams,
) -> BsMode {
    if !params.ss_enabled {
        return BsMode::TriSectorized;
    }
    let th = params.thresholds;
    let load = current / params.tri();
    match a.mode {
        BsMode::Omni if !above(load, th.ss_up()) => BsMode::Omni,
        BsMode::Omni => BsMode::TriSectorized,
        _ if at_most(load, th.ss_down())
            && at_most(reserved - params.omni(), a.candidate_spare_mbps()) =>
        {
            BsMode::Omni
        }
        _ => BsMode::TriSectorized,
    }
}

/// Cluster-level decision.
///
/// When powering down is enabled every canonical cooperation pattern whose
/// off cells are light enough (with hysteresis for cells already off) and
/// whose displaced load fits the remaining cells is projected, and the one
/// with the lowest projected cluster power wins; ties keep the current
/// pattern, then prefer fewer cells off. Sectorization switching then runs
/// per live cell, greedily by projected power reduction with shared access
/// point spare capacity, lowest id first on ties.
pub fn decide(
    assessment: &SituationAssessment,
    cluster: Cluster<'_>,
    params: &DecisionParams,
    _history: &DecisionHistory,
) -> Decision {
    let current_k = cluster.pattern;
    let candidates: Vec<usize> = if params.pd_enabled {
        (0..cluster.patterns.len()).collect()
    } else {
        vec![current_k]
    };
    let mut best: Option<(usize, Projection)> = None;
    for k in candidates {
        let Some(p) = project_pattern(assessment, cluster, params, k) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some((bk, bp)) => {
                let diff = p.power_w - bp.power_w;
                if diff.abs() <= 1e-9 {
                    *bk != current_k && (k == current_k || k < *bk)
                } else {
                    diff < 0.0
                }
            }
        };
        if better {
            best = Some((k, p));
        }
    }
    let (k, proj) = match best {
        Some(b) => b,
        None => {
            // Only reachable when the current pattern itself became
            // infeasible: fall back to all cells on.
            let p = project_pattern(assessment, cluster, params, 0)
                .expect("pattern 0 has no off cells");
            (0, p)
        }
    };
    let pattern = &cluster.patterns[k];
    let mut actions = Vec::new();
    for a in &assessment.bs {
        if a.mode == BsMode::Off && !pattern.is_off(a.bs) {
            actions.push(Action::PowerUp(a.bs));
        }
    }
    for a in &assessment.bs {
        if a.mode != BsMode::Off && pattern.is_off(a.bs) {
            actions.push(Action::PowerDown(a.bs, k));
        }
    }
    if params.ss_enabled {
        let th = params.thresholds;
        let tri = params.tri();
        let mut to_tri = Vec::new();
        let mut to_omni = Vec::new();
        for a in &assessment.bs {
            if pattern.is_off(a.bs) {
                continue;
            }
            let i = a.bs.0 as usize;
            let load = proj.current[i] / tri;
            match a.mode {
                BsMode::Omni if above(load, th.ss_up()) => {
                    to_tri.push(Action::SwitchToTriSectorized(a.bs))
                }
                BsMode::TriSectorized | BsMode::Off if at_most(load, th.ss_down()) => {
                    let cur = proj.current[i];
                    let gain = params
                        .power
                        .bs_power(BsMode::TriSectorized, (cur / tri).min(1.0))
                        .unwrap_or(0.0)
                        - params
                            .power
                            .bs_power(BsMode::Omni, (cur / params.omni()).min(1.0))
                            .unwrap_or(0.0);
                    to_omni.push((gain, a));
                }
                _ => {}
            }
        }
        to_omni.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.bs.cmp(&y.1.bs)));
        let mut pool = assessment.ap_spare_mbps.clone();
        for (_, a) in to_omni {
            let mut overflow = proj.reserved[a.bs.0 as usize] - params.omni();
            let mut draws: Vec<(AccessPointId, f64)> = Vec::new();
            for (ap, _) in &a.candidates {
                if !above(overflow, 0.0) {
                    break;
                }
                let avail = pool.get(ap).copied().unwrap_or(0.0);
                let take = avail.min(overflow);
                if take > 0.0 {
                    draws.push((*ap, take));
                    overflow -= take;
                }
            }
            if at_most(overflow, 0.0) {
                for (ap, take) in draws {
                    *pool.entry(ap).or_default() -= take;
                }
                actions.push(Action::SwitchToOmni(a.bs));
            }
        }
        actions.extend(to_tri);
        actions.sort();
    }
    Decision {
        pattern: k,
        actions,
        projected_power_w: proj.power_w,
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExecutionReport {
    pub applied: Vec<Action>,
    pub aborted: Vec<Action>,
}

/// Access points covering the user, most spare capacity first.
fn ranked_coverage(net: &NetworkState, spare: &[u64], user: UserId) -> Vec<AccessPointId> {
    let mut aps = net.users[&user].coverage.clone();
    aps.sort_by(|a, b| spare[b.0 as usize].cmp(&spare[a.0 as usize]).then(a.cmp(b)));
    aps
}

/// Applies a decision: power-ups, the cooperation change, then
/// sectorization changes. Removing sectorization first moves the sessions
/// that exceed omni-directional capacity to covering access points; if that
/// is impossible the switch is aborted and the cell is left untouched.
pub fn execute(
    decision: &Decision,
    net: &mut NetworkState,
    mechanism: OffloadMechanism,
) -> Result<ExecutionReport, IfomError> {
    let mut report = ExecutionReport::default();
    let pattern_changes = decision
        .actions
        .iter()
        .any(|a| matches!(a, Action::PowerUp(_) | Action::PowerDown(..)));
    if pattern_changes || decision.pattern != net.pattern {
        apply_pattern(decision, net, mechanism)?;
        report.applied.extend(
            decision
                .actions
                .iter()
                .filter(|a| matches!(a, Action::PowerUp(_) | Action::PowerDown(..))),
        );
    }
    for action in &decision.actions {
        match *action {
            Action::SwitchToTriSectorized(b) => {
                net.set_mode(b, BsMode::TriSectorized);
                let back: Vec<UserId> = net
                    .users
                    .values()
                    .filter(|u| {
                        u.cell_mag == b && u.offload == Some(OffloadMechanism::NetworkCentric)
                    })
                    .map(|u| u.id)
                    .collect();
                for u in back {
                    net.return_to_cellular(u)?;
                }
                log_action(net, *action);
                report.applied.push(*action);
            }
            Action::SwitchToOmni(b) => {
                if switch_to_omni(net, b, mechanism)? {
                    log_action(net, *action);
                    report.applied.push(*action);
                } else {
                    net.counters.aborted_actions += 1;
                    net.log(
                        Event::new(net.t_s, "action-aborted")
                            .with("action", action)
                            .with("reason", "overflow-not-absorbable"),
                    );
                    report.aborted.push(*action);
                }
            }
            _ => {}
        }
    }
    Ok(report)
}

fn log_action(net: &mut NetworkState, action: Action) {
    let e = Event::new(net.t_s, "action").with("action", action);
    net.log(e);
}

fn switch_to_omni(
    net: &mut NetworkState,
    b: BsId,
    mechanism: OffloadMechanism,
) -> Result<bool, IfomError> {
    let omni = net.capacity(BsMode::Omni);
    let load = net.bs_loads()[b.0 as usize];
    let mut overflow = load.reserved.0.saturating_sub(omni.0);
    let mut plan = Vec::new();
    if overflow > 0 {
        let mut spare: Vec<u64> = net.aps.iter().map(|a| a.spare().0).collect();
        let mut users: Vec<(BitRate, UserId)> = net
            .users
            .values()
            .filter(|u| u.serving == ElementId::Bs(b) && !u.coverage.is_empty())
            .map(|u| (u.session.on_rate, u.id))
            .collect();
        users.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
        for (rate, u) in users {
            if overflow == 0 {
                break;
            }
            let target = ranked_coverage(net, &spare, u)
                .into_iter()
                .find(|ap| spare[ap.0 as usize] >= rate.0);
            if let Some(ap) = target {
                spare[ap.0 as usize] -= rate.0;
                overflow = overflow.saturating_sub(rate.0);
                plan.push((u, ap));
            }
        }
        if overflow > 0 {
            return Ok(false);
        }
    }
    net.set_mode(b, BsMode::Omni);
    for (u, ap) in plan {
        net.offload_session(u, ap, mechanism)?;
    }
    Ok(true)
}

fn apply_pattern(
    decision: &Decision,
    net: &mut NetworkState,
    mechanism: OffloadMechanism,
) -> Result<(), IfomError> {
    net.pattern = decision.pattern;
    for a in &decision.actions {
        match *a {
            Action::PowerUp(b) => net.set_mode(b, BsMode::TriSectorized),
            Action::PowerDown(b, _) => net.set_mode(b, BsMode::Off),
            _ => {}
        }
    }
    for a in &decision.actions {
        let e = Event::new(net.t_s, "action").with("action", a);
        if matches!(a, Action::PowerUp(_) | Action::PowerDown(..)) {
            net.log(e);
        }
    }
    // Sessions left on a powered-down cell: a covering access point first,
    // otherwise the neighbor that takes over the area.
    let stranded: Vec<UserId> = net
        .users
        .values()
        .filter(|u| matches!(u.serving, ElementId::Bs(b) if net.mode(b) == BsMode::Off))
        .map(|u| u.id)
        .collect();
    for u in stranded {
        let spare: Vec<u64> = net.aps.iter().map(|a| a.spare().0).collect();
        let rate = net.users[&u].session.on_rate;
        let target = ranked_coverage(net, &spare, u)
            .into_iter()
            .find(|ap| spare[ap.0 as usize] >= rate.0);
        if let Some(ap) = target {
            net.offload_session(u, ap, mechanism)?;
        }
        let (home, pos) = (net.users[&u].home, net.users[&u].position);
        let cover = net.cellular_server(home, pos);
        net.move_to_bs(u, cover)?;
    }
    // Re-anchor everyone whose cellular server changed, and bring home the
    // sessions the network moved away from cells that are back on.
    let moves: Vec<(UserId, BsId, bool)> = net
        .users
        .values()
        .filter_map(|u| {
            let want = net.cellular_server(u.home, u.position);
            let recall = want == u.home
                && u.offload == Some(OffloadMechanism::NetworkCentric)
                && decision.actions.contains(&Action::PowerUp(u.home));
            (want != u.cell_mag || recall).then_some((u.id, want, recall))
        })
        .collect();
    for (u, want, recall) in moves {
        net.move_to_bs(u, want)?;
        if recall {
            net.return_to_cellular(u)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::EventLog;
    use crate::mde::MdeConfig;
    use crate::topology::build_cluster;

    const SECTOR: f64 = 10.0;

    fn params(ss: bool, pd: bool) -> DecisionParams {
        DecisionParams {
            thresholds: MdeConfig::default().thresholds(1.0, pd).unwrap(),
            power: PowerModel::default(),
            sector_capacity_mbps: SECTOR,
            ss_enabled: ss,
            pd_enabled: pd,
        }
    }

    fn network() -> NetworkState {
        NetworkState::new(
            build_cluster(7, 300.0).unwrap(),
            BitRate::from_mbps(SECTOR),
            50.0,
            3600.0,
            EventLog::disabled(),
        )
    }

    /// Reports with every live cell carrying `loads[i]` (fraction of tri
    /// capacity) of its own traffic, reserved equal to carried.
    fn reports(net: &NetworkState, loads: &[f64]) -> Vec<LoadReport> {
        net.topology
            .base_stations
            .iter()
            .filter(|b| b.mode != BsMode::Off)
            .map(|b| {
                let mbps = loads[b.id.0 as usize] * 3.0 * SECTOR;
                let mut hosted = BTreeMap::new();
                hosted.insert(
                    b.id,
                    HostedLoad {
                        current_mbps: mbps,
                        reserved_mbps: mbps,
                    },
                );
                LoadReport {
                    element_id: ElementId::Bs(b.id),
                    timestamp_s: 0.0,
                    load_fraction: mbps / net.capacity(b.mode).mbps(),
                    attached_user_count: 1,
                    mode: Some(b.mode),
                    current_mbps: mbps,
                    reserved_mbps: mbps,
                    hosted,
                    wifi: None,
                }
            })
            .collect()
    }

    #[test]
    fn missing_report_is_incomplete() {
        let net = network();
        let mut r = reports(&net, &[0.5; 7]);
        r.remove(2);
        assert_eq!(
            assess(&r, net.cluster(), &params(true, true)),
            Err(MdeError::IncompleteAssessment(BsId(2)))
        );
    }

    #[test]
    fn powered_down_cell_sends_no_report() {
        let mut net = network();
        net.set_mode(BsId(0), BsMode::Off);
        assert_eq!(collect_reports(&net, &[]).len(), 6);
    }

    #[test]
    fn all_above_switch_projects_noop() {
        let net = network();
        let a = assess(
            &reports(&net, &[0.6; 7]),
            net.cluster(),
            &params(true, true),
        )
        .unwrap();
        assert!(a.bs.iter().all(|b| b.projected == Action::NoOp));
        let d = decide(
            &a,
            net.cluster(),
            &params(true, true),
            &DecisionHistory::default(),
        );
        assert!(d.is_noop());
    }

    #[test]
    fn switch_to_omni_just_below_trigger() {
        let net = network();
        let mut loads = [0.6; 7];
        loads[3] = 0.88 / 3.0;
        let a = assess(&reports(&net, &loads), net.cluster(), &params(true, false)).unwrap();
        assert_eq!(a.bs[3].projected, Action::SwitchToOmni(BsId(3)));
        let d = decide(
            &a,
            net.cluster(),
            &params(true, false),
            &DecisionHistory::default(),
        );
        assert_eq!(d.actions, vec![Action::SwitchToOmni(BsId(3))]);
    }

    #[test]
    fn overflow_without_wifi_projects_noop() {
        let net = network();
        let mut r = reports(&net, &[0.6; 7]);
        // 0.85 t_switch carried, but reserved above omni capacity.
        r[1].current_mbps = 0.85 * SECTOR;
        r[1].reserved_mbps = 1.5 * SECTOR;
        let a = assess(&r, net.cluster(), &params(true, false)).unwrap();
        assert_eq!(a.bs[1].projected, Action::NoOp);
        let d = decide(
            &a,
            net.cluster(),
            &params(true, false),
            &DecisionHistory::default(),
        );
        assert!(d.is_noop());
    }

    #[test]
    fn light_cells_power_down_with_lowest_power_pattern() {
        let net = network();
        let a = assess(
            &reports(&net, &[0.05; 7]),
            net.cluster(),
            &params(false, true),
        )
        .unwrap();
        assert!(matches!(a.bs[0].projected, Action::PowerDown(BsId(0), _)));
        let d = decide(
            &a,
            net.cluster(),
            &params(false, true),
            &DecisionHistory::default(),
        );
        assert_eq!(d.pattern, 4);
        assert_eq!(
            d.actions
                .iter()
                .filter(|a| matches!(a, Action::PowerDown(..)))
                .count(),
            4
        );
    }
}
