//! Local mobility anchor with proxy bindings, per-MAG tunnels, a flow
//! mobility cache, and the terminal-side logical interface (network-centric
//! flow mobility).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv6Addr;

use crate::ids::{AccessPointId, BsId, ElementId, FlowId, UserId};

use super::{IfomError, ProtocolEvent};

/// Mobile access gateway; every base station and access point runs one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MagId(pub ElementId);

impl MagId {
    pub fn interface(self) -> PhysicalInterface {
        match self.0 {
            ElementId::Bs(_) => PhysicalInterface::Cellular,
            ElementId::Ap(_) => PhysicalInterface::WiFi,
        }
    }
}

impl fmt::Display for MagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "mag-{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TunnelId(pub u32);

impl fmt::Display for TunnelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tun{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PhysicalInterface {
    Cellular,
    WiFi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyBinding {
    pub user_id: UserId,
    pub mag_id: MagId,
    pub tunnel_id: TunnelId,
    pub lifetime_s: f64,
    attach_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowMobilityCacheEntry {
    pub flow_id: FlowId,
    pub anchor: MagId,
}

/// Terminal-side abstraction exposing one stable address over all radios.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalInterface {
    pub user_id: UserId,
    pub physical_interfaces: BTreeSet<PhysicalInterface>,
    pub exposed_address: Ipv6Addr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttachOutcome {
    pub tunnel_id: TunnelId,
    pub handover_delay_ms: f64,
    pub refreshed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lma {
    bindings: BTreeMap<(UserId, MagId), ProxyBinding>,
    flow_owner: BTreeMap<FlowId, UserId>,
    flow_cache: BTreeMap<FlowId, FlowMobilityCacheEntry>,
    interfaces: BTreeMap<UserId, LogicalInterface>,
    next_tunnel: u32,
    seq: u64,
    pub auth_delay_ms: f64,
    pub lifetime_s: f64,
    events: Vec<ProtocolEvent>,
}

impl Default for Lma {
    fn default() -> Self {
        Lma::new(50.0, 3600.0)
    }
}

/// Home network prefix the LMA hands out; the interface id is the user id.
pub fn home_network_address(user: UserId) -> Ipv6Addr {
    let u = user.0;
    Ipv6Addr::new(0x2001, 0xdb8, 0x100, 0, 0, 0, (u >> 16) as u16, u as u16)
}

impl Lma {
    pub fn new(auth_delay_ms: f64, lifetime_s: f64) -> Self {
        Lma {
            bindings: BTreeMap::new(),
            flow_owner: BTreeMap::new(),
            flow_cache: BTreeMap::new(),
            interfaces: BTreeMap::new(),
            next_tunnel: 1,
            seq: 0,
            auth_delay_ms,
            lifetime_s,
            events: Vec::new(),
        }
    }

    /// The MAG detects the user, authenticates it, and sends a proxy binding
    /// update; the LMA updates its binding cache and sets up a bi-directional
    /// tunnel. Attaching again to the same MAG refreshes the lifetime.
    pub fn mag_attach(&mut self, user_id: UserId, mag_id: MagId) -> AttachOutcome {
        self.seq += 1;
        let seq = self.seq;
        let lifetime = self.lifetime_s;
        self.events
            .push(ProtocolEvent::ProxyBindingUpdate { user_id, mag_id });
        if let Some(b) = self.bindings.get_mut(&(user_id, mag_id)) {
            b.lifetime_s = lifetime;
            b.attach_seq = seq;
            let tunnel_id = b.tunnel_id;
            self.events.push(ProtocolEvent::ProxyBindingAck {
                user_id,
                mag_id,
                tunnel_id,
                refreshed: true,
            });
            return AttachOutcome {
                tunnel_id,
                handover_delay_ms: 0.0,
                refreshed: true,
            };
        }
        let tunnel_id = TunnelId(self.next_tunnel);
        self.next_tunnel += 1;
        self.bindings.insert(
            (user_id, mag_id),
            ProxyBinding {
                user_id,
                mag_id,
                tunnel_id,
                lifetime_s: lifetime,
                attach_seq: seq,
            },
        );
        let lif = self
            .interfaces
            .entry(user_id)
            .or_insert_with(|| LogicalInterface {
                user_id,
                physical_interfaces: BTreeSet::new(),
                exposed_address: home_network_address(user_id),
            });
        lif.physical_interfaces.insert(mag_id.interface());
        self.events.push(ProtocolEvent::ProxyBindingAck {
            user_id,
            mag_id,
            tunnel_id,
            refreshed: false,
        });
        self.events.push(ProtocolEvent::TunnelEstablished {
            user_id,
            mag_id,
            tunnel_id,
        });
        AttachOutcome {
            tunnel_id,
            handover_delay_ms: self.auth_delay_ms,
            refreshed: false,
        }
    }

    /// Tears down the proxy binding. Flows cached on that MAG fall back to
    /// the user's most recently attached MAG.
    pub fn mag_detach(&mut self, user_id: UserId, mag_id: MagId) {
        if self.bindings.remove(&(user_id, mag_id)).is_none() {
            return;
        }
        let owner = &self.flow_owner;
        self.flow_cache
            .retain(|_, e| !(e.anchor == mag_id && owner.get(&e.flow_id) == Some(&user_id)));
        let remaining: BTreeSet<PhysicalInterface> = self
            .bindings_of(user_id)
            .map(|b| b.mag_id.interface())
            .collect();
        if remaining.is_empty() {
            self.interfaces.remove(&user_id);
        } else if let Some(lif) = self.interfaces.get_mut(&user_id) {
            lif.physical_interfaces = remaining;
        }
        self.events
            .push(ProtocolEvent::ProxyBindingRemoved { user_id, mag_id });
    }

    /// Registers a new flow of `user_id`, anchored at the user's current MAG.
    pub fn add_flow(&mut self, user_id: UserId, flow_id: FlowId) {
        self.flow_owner.insert(flow_id, user_id);
        if let Some(mag) = self.latest_mag(user_id) {
            self.flow_cache.insert(
                flow_id,
                FlowMobilityCacheEntry {
                    flow_id,
                    anchor: mag,
                },
            );
        }
    }

    pub fn remove_flow(&mut self, flow_id: FlowId) {
        self.flow_owner.remove(&flow_id);
        self.flow_cache.remove(&flow_id);
    }

    /// Points the flow at `target`; the user keeps its address.
    pub fn move_flow(&mut self, flow_id: FlowId, target: MagId) -> Result<(), IfomError> {
        let user = *self
            .flow_owner
            .get(&flow_id)
            .ok_or(IfomError::UnknownFlow(flow_id))?;
        if !self.bindings.contains_key(&(user, target)) {
            return Err(IfomError::NoBindingAtTarget {
                flow_id,
                mag: target,
            });
        }
        let from = self.flow_cache.get(&flow_id).map(|e| e.anchor);
        self.flow_cache.insert(
            flow_id,
            FlowMobilityCacheEntry {
                flow_id,
                anchor: target,
            },
        );
        self.events.push(ProtocolEvent::FlowMoved {
            flow_id,
            from,
            to: target,
        });
        Ok(())
    }

    /// Tunnel carrying the flow.
    pub fn route(&self, flow_id: FlowId) -> Result<TunnelId, IfomError> {
        Ok(self.route_binding(flow_id)?.tunnel_id)
    }

    /// MAG at the far end of the flow's tunnel.
    pub fn route_mag(&self, flow_id: FlowId) -> Result<MagId, IfomError> {
        Ok(self.route_binding(flow_id)?.mag_id)
    }

    fn route_binding(&self, flow_id: FlowId) -> Result<&ProxyBinding, IfomError> {
        let user = *self.flow_owner.get(&flow_id).ok_or(IfomError::NoRoute)?;
        self.flow_cache
            .get(&flow_id)
            .and_then(|e| self.bindings.get(&(user, e.anchor)))
            .or_else(|| self.latest_binding(user))
            .ok_or(IfomError::NoRoute)
    }

    fn latest_binding(&self, user_id: UserId) -> Option<&ProxyBinding> {
        self.bindings_of(user_id).max_by_key(|b| b.attach_seq)
    }

    pub fn latest_mag(&self, user_id: UserId) -> Option<MagId> {
        self.latest_binding(user_id).map(|b| b.mag_id)
    }

    pub fn binding(&self, user_id: UserId, mag_id: MagId) -> Option<&ProxyBinding> {
        self.bindings.get(&(user_id, mag_id))
    }

    pub fn bindings_of(&self, user_id: UserId) -> impl Iterator<Item = &ProxyBinding> {
        let lo = (user_id, MagId(ElementId::Bs(BsId(0))));
        let hi = (user_id, MagId(ElementId::Ap(AccessPointId(u32::MAX))));
        self.bindings.range(lo..=hi).map(|(_, b)| b)
    }

    pub fn interface(&self, user_id: UserId) -> Option<&LogicalInterface> {
        self.interfaces.get(&user_id)
    }

    pub fn cache_entry(&self, flow_id: FlowId) -> Option<&FlowMobilityCacheEntry> {
        self.flow_cache.get(&flow_id)
    }

    /// Removes every binding and flow of a departing user.
    pub fn forget(&mut self, user_id: UserId) {
        let mags: Vec<MagId> = self.bindings_of(user_id).map(|b| b.mag_id).collect();
        for m in mags {
            self.bindings.remove(&(user_id, m));
        }
        let flows: Vec<FlowId> = self
            .flow_owner
            .iter()
            .filter(|(_, u)| **u == user_id)
            .map(|(f, _)| *f)
            .collect();
        for f in flows {
            self.remove_flow(f);
        }
        self.interfaces.remove(&user_id);
    }

    pub fn drain_events(&mut self) -> Vec<ProtocolEvent> {
        std::mem::take(&mut self.events)
    }

    /// No cache entry references a MAG the flow's user is not attached to,
    /// and each (user, MAG) pair has one tunnel.
    pub fn is_consistent(&self) -> bool {
        let cache_ok = self.flow_cache.values().all(|e| {
            self.flow_owner
                .get(&e.flow_id)
                .is_some_and(|u| self.bindings.contains_key(&(*u, e.anchor)))
        });
        let tunnels: BTreeSet<TunnelId> = self.bindings.values().map(|b| b.tunnel_id).collect();
        cache_ok && tunnels.len() == self.bindings.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAG1: MagId = MagId(ElementId::Bs(BsId(0)));
    const MAG2: MagId = MagId(ElementId::Ap(AccessPointId(0)));

    #[test]
    fn attach_second_mag_creates_second_tunnel() {
        let mut lma = Lma::default();
        let u = UserId(1);
        let a = lma.mag_attach(u, MAG1);
        let before = lma.interface(u).unwrap().exposed_address;
        let b = lma.mag_attach(u, MAG2);
        assert_ne!(a.tunnel_id, b.tunnel_id);
        assert_eq!(lma.bindings_of(u).count(), 2);
        assert_eq!(b.handover_delay_ms, 50.0);
        assert_eq!(lma.interface(u).unwrap().exposed_address, before);
        assert_eq!(lma.interface(u).unwrap().physical_interfaces.len(), 2);
    }

    #[test]
    fn reattach_refreshes() {
        let mut lma = Lma::default();
        let u = UserId(1);
        let a = lma.mag_attach(u, MAG1);
        let b = lma.mag_attach(u, MAG1);
        assert!(b.refreshed);
        assert_eq!(a.tunnel_id, b.tunnel_id);
        assert_eq!(lma.bindings_of(u).count(), 1);
    }

    #[test]
    fn move_flow_redirects_and_round_trips() {
        let mut lma = Lma::default();
        let u = UserId(1);
        let t1 = lma.mag_attach(u, MAG1).tunnel_id;
        lma.add_flow(u, FlowId(5));
        let t2 = lma.mag_attach(u, MAG2).tunnel_id;
        assert_eq!(lma.route(FlowId(5)).unwrap(), t1);
        lma.move_flow(FlowId(5), MAG2).unwrap();
        assert_eq!(lma.route(FlowId(5)).unwrap(), t2);
        lma.move_flow(FlowId(5), MAG1).unwrap();
        assert_eq!(lma.route(FlowId(5)).unwrap(), t1);
    }

    #[test]
    fn move_to_detached_mag_is_rejected() {
        let mut lma = Lma::default();
        let u = UserId(1);
        lma.mag_attach(u, MAG1);
        lma.add_flow(u, FlowId(5));
        let before = lma.clone();
        assert_eq!(
            lma.move_flow(FlowId(5), MAG2),
            Err(IfomError::NoBindingAtTarget {
                flow_id: FlowId(5),
                mag: MAG2
            })
        );
        assert_eq!(lma.flow_cache, before.flow_cache);
    }

    #[test]
    fn detach_falls_back_to_latest_mag() {
        let mut lma = Lma::default();
        let u = UserId(1);
        lma.mag_attach(u, MAG1);
        lma.add_flow(u, FlowId(5));
        let t2 = lma.mag_attach(u, MAG2).tunnel_id;
        lma.mag_detach(u, MAG1);
        assert!(lma.is_consistent());
        assert_eq!(lma.route(FlowId(5)).unwrap(), t2);
        lma.mag_detach(u, MAG2);
        assert_eq!(lma.route(FlowId(5)), Err(IfomError::NoRoute));
    }
}
