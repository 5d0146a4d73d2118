//! Network information tables: generation from access point reports,
//! change-only filtering, first-attach unicast, and the terminal's
//! energy-aware network selection.

use std::collections::BTreeMap;

use crate::ids::{AccessPointId, BitRate, ElementId, MacAddr};
use crate::topology::Topology;
use crate::traffic::Service;
use crate::wifi::{classify_qos, supports_service, ApState, QosClassSet};

use super::{LoadReport, MdeError};

#[derive(Debug, Clone, PartialEq)]
pub struct NitEntry {
    pub ap_id: AccessPointId,
    pub ap_mac: MacAddr,
    pub ssid: String,
    pub qos_classes: QosClassSet,
    /// Most demanding service the access point currently supports.
    pub recommended_service: Option<Service>,
    /// Position in the table, best first.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nit {
    pub cluster_id: u32,
    pub version: u64,
    pub entries: Vec<NitEntry>,
}

impl Nit {
    pub fn empty(cluster_id: u32) -> Self {
        Nit {
            cluster_id,
            version: 0,
            entries: Vec::new(),
        }
    }
}

/// Change set between two versions of a cluster's table.
#[derive(Debug, Clone, PartialEq)]
pub struct NitDelta {
    pub cluster_id: u32,
    pub base_version: u64,
    pub version: u64,
    pub upserts: Vec<NitEntry>,
    pub removals: Vec<MacAddr>,
}

impl NitDelta {
    pub fn is_empty(&self) -> bool {
        self.upserts.is_empty() && self.removals.is_empty()
    }
}

/// Services from the most to the least demanding delay bound.
const BY_DEMAND: [Service; 3] = [Service::Voip, Service::Video, Service::Web];

pub fn recommended_service(qos: QosClassSet) -> Option<Service> {
    BY_DEMAND.into_iter().find(|s| supports_service(qos, *s))
}

/// Ranks access points by spare capacity, then lower delay, then id, and
/// keeps the best `nit_size`.
pub fn build_nit(
    ap_reports: &[LoadReport],
    topology: &Topology,
    nit_size: usize,
    cluster_id: u32,
    version: u64,
) -> Nit {
    let mut rows: Vec<(AccessPointId, f64, f64)> = ap_reports
        .iter()
        .filter_map(|r| match (r.element_id, r.wifi) {
            (ElementId::Ap(a), Some(w)) => Some((a, w.spare_mbps, w.end_to_end_delay_ms)),
            _ => None,
        })
        .collect();
    rows.sort_by(|x, y| {
        y.1.total_cmp(&x.1)
            .then(x.2.total_cmp(&y.2))
            .then(x.0.cmp(&y.0))
    });
    let entries = rows
        .into_iter()
        .take(nit_size)
        .enumerate()
        .map(|(rank, (ap_id, _, delay))| {
            let qos_classes = classify_qos(delay);
            let (ap_mac, ssid) = topology
                .ap(ap_id)
                .map(|a| (a.mac, a.ssid.clone()))
                .unwrap_or((MacAddr::for_access_point(ap_id), String::new()));
            NitEntry {
                ap_id,
                ap_mac,
                ssid,
                qos_classes,
                recommended_service: recommended_service(qos_classes),
                rank,
            }
        })
        .collect();
    Nit {
        cluster_id,
        version,
        entries,
    }
}

/// Table generator with strictly increasing versions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ndcm {
    version: u64,
    pub current: Option<Nit>,
}

impl Ndcm {
    pub fn build(
        &mut self,
        ap_reports: &[LoadReport],
        topology: &Topology,
        nit_size: usize,
        cluster_id: u32,
    ) -> Nit {
        self.version += 1;
        let nit = build_nit(ap_reports, topology, nit_size, cluster_id, self.version);
        self.current = Some(nit.clone());
        nit
    }
}

/// Entries added, changed in any field, or removed since `previous`.
pub fn filter_nit(new: &Nit, previous: &Nit) -> Result<NitDelta, MdeError> {
    if new.cluster_id != previous.cluster_id {
        return Err(MdeError::ClusterMismatch {
            new: new.cluster_id,
            previous: previous.cluster_id,
        });
    }
    let old: BTreeMap<MacAddr, &NitEntry> =
        previous.entries.iter().map(|e| (e.ap_mac, e)).collect();
    let fresh: BTreeMap<MacAddr, &NitEntry> = new.entries.iter().map(|e| (e.ap_mac, e)).collect();
    let upserts = new
        .entries
        .iter()
        .filter(|e| old.get(&e.ap_mac) != Some(e))
        .cloned()
        .collect();
    let removals = previous
        .entries
        .iter()
        .filter(|e| !fresh.contains_key(&e.ap_mac))
        .map(|e| e.ap_mac)
        .collect();
    Ok(NitDelta {
        cluster_id: new.cluster_id,
        base_version: previous.version,
        version: new.version,
        upserts,
        removals,
    })
}

/// Terminal-side reconstruction of the new table.
pub fn apply_delta(previous: &Nit, delta: &NitDelta) -> Nit {
    let mut by_mac: BTreeMap<MacAddr, NitEntry> = previous
        .entries
        .iter()
        .map(|e| (e.ap_mac, e.clone()))
        .collect();
    for mac in &delta.removals {
        by_mac.remove(mac);
    }
    for e in &delta.upserts {
        by_mac.insert(e.ap_mac, e.clone());
    }
    let mut entries: Vec<NitEntry> = by_mac.into_values().collect();
    entries.sort_by_key(|e| e.rank);
    Nit {
        cluster_id: delta.cluster_id,
        version: delta.version,
        entries,
    }
}

/// Complete table for a terminal attaching for the first time; nothing for
/// terminals that already have one.
pub fn first_attach_nit(
    newly_attached: bool,
    current: Option<&Nit>,
    cluster_id: u32,
) -> Option<Nit> {
    newly_attached.then(|| current.cloned().unwrap_or_else(|| Nit::empty(cluster_id)))
}

/// Wi-Fi selection settings of the terminals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionWindow {
    pub p_t_day: f64,
    pub p_t_night: f64,
    pub day_start_h: f64,
    pub day_end_h: f64,
}

/// Probability of temporal Wi-Fi coverage at time of day `t_s`.
pub fn p_t(t_s: f64, w: &SelectionWindow) -> f64 {
    let h = (t_s / 3600.0).rem_euclid(24.0);
    if h >= w.day_start_h && h < w.day_end_h {
        w.p_t_day
    } else {
        w.p_t_night
    }
}

/// Best-ranked table entry that supports the session's service and can
/// admit its rate; `None` when the terminal has no Wi-Fi this period.
pub fn user_select_network(
    service: Service,
    rate: BitRate,
    nit: &Nit,
    wifi_available: bool,
    aps: &[ApState],
) -> Option<AccessPointId> {
    if !wifi_available {
        return None;
    }
    nit.entries
        .iter()
        .filter(|e| supports_service(e.qos_classes, service))
        .map(|e| e.ap_id)
        .find(|ap| aps.get(ap.0 as usize).is_some_and(|s| s.would_admit(rate)))
}
