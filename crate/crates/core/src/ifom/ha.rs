//! Home agent with multiple care-of address registration and flow bindings
//! (user-centric flow mobility).

use std::collections::BTreeMap;
use std::net::Ipv6Addr;

use crate::ids::FlowId;

use super::{IfomError, ProtocolEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BindingId(pub u32);

impl std::fmt::Display for BindingId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "bid{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BindingCacheEntry {
    pub hoa: Ipv6Addr,
    pub binding_id: BindingId,
    pub coa: Ipv6Addr,
    pub lifetime_s: f64,
    pub is_default: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowBindingEntry {
    pub flow_id: FlowId,
    pub hoa: Ipv6Addr,
    pub binding_id: BindingId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomeAgent {
    /// Entries per home address in registration order.
    bindings: BTreeMap<Ipv6Addr, Vec<BindingCacheEntry>>,
    /// The flow mobility cache.
    flow_bindings: BTreeMap<FlowId, FlowBindingEntry>,
    next_binding_id: u32,
    pub lifetime_s: f64,
    events: Vec<ProtocolEvent>,
}

impl Default for HomeAgent {
    fn default() -> Self {
        HomeAgent::new(3600.0)
    }
}

impl HomeAgent {
    pub fn new(lifetime_s: f64) -> Self {
        HomeAgent {
            bindings: BTreeMap::new(),
            flow_bindings: BTreeMap::new(),
            next_binding_id: 1,
            lifetime_s,
            events: Vec::new(),
        }
    }

    /// Registers `coa` for `hoa` (binding update) and acknowledges it.
    /// Re-registering a known care-of address refreshes its lifetime and
    /// keeps its binding id.
    pub fn register_coa(&mut self, hoa: Ipv6Addr, coa: Ipv6Addr) -> BindingId {
        let lifetime = self.lifetime_s;
        self.events.push(ProtocolEvent::BindingUpdate { hoa, coa });
        let entries = self.bindings.entry(hoa).or_default();
        if let Some(existing) = entries.iter_mut().find(|e| e.coa == coa) {
            existing.lifetime_s = lifetime;
            let bid = existing.binding_id;
            self.events.push(ProtocolEvent::BindingAck {
                hoa,
                binding_id: bid,
                refreshed: true,
            });
            return bid;
        }
        let bid = BindingId(self.next_binding_id);
        self.next_binding_id += 1;
        let is_default = entries.is_empty();
        entries.push(BindingCacheEntry {
            hoa,
            binding_id: bid,
            coa,
            lifetime_s: lifetime,
            is_default,
        });
        self.events.push(ProtocolEvent::BindingAck {
            hoa,
            binding_id: bid,
            refreshed: false,
        });
        bid
    }

    /// Binds `flow_id` to an existing binding, replacing any prior binding.
    pub fn bind_flow(
        &mut self,
        flow_id: FlowId,
        hoa: Ipv6Addr,
        binding_id: BindingId,
    ) -> Result<(), IfomError> {
        if self.entry(hoa, binding_id).is_none() {
            return Err(IfomError::UnknownBinding { hoa, binding_id });
        }
        self.flow_bindings.insert(
            flow_id,
            FlowBindingEntry {
                flow_id,
                hoa,
                binding_id,
            },
        );
        self.events.push(ProtocolEvent::FlowBound {
            flow_id,
            binding_id,
        });
        Ok(())
    }

    /// Drops the flow's binding so it follows the default again.
    pub fn unbind_flow(&mut self, flow_id: FlowId) {
        self.flow_bindings.remove(&flow_id);
    }

    /// Care-of address the flow is tunnelled to.
    pub fn route(&self, flow_id: FlowId, hoa: Ipv6Addr) -> Result<Ipv6Addr, IfomError> {
        let entries = self
            .bindings
            .get(&hoa)
            .filter(|e| !e.is_empty())
            .ok_or(IfomError::NoRoute)?;
        if let Some(fb) = self.flow_bindings.get(&flow_id).filter(|fb| fb.hoa == hoa) {
            if let Some(e) = entries.iter().find(|e| e.binding_id == fb.binding_id) {
                return Ok(e.coa);
            }
        }
        entries
            .iter()
            .find(|e| e.is_default)
            .map(|e| e.coa)
            .ok_or(IfomError::NoRoute)
    }

    /// Removes a binding. Flows bound to it fall back to the default; when
    /// the default goes, the oldest surviving binding takes over.
    pub fn deregister(&mut self, hoa: Ipv6Addr, binding_id: BindingId) {
        let Some(entries) = self.bindings.get_mut(&hoa) else {
            self.events
                .push(ProtocolEvent::UnknownDeregistration { hoa, binding_id });
            return;
        };
        let Some(pos) = entries.iter().position(|e| e.binding_id == binding_id) else {
            self.events
                .push(ProtocolEvent::UnknownDeregistration { hoa, binding_id });
            return;
        };
        let removed = entries.remove(pos);
        if removed.is_default {
            if let Some(first) = entries.first_mut() {
                first.is_default = true;
            }
        }
        if entries.is_empty() {
            self.bindings.remove(&hoa);
        }
        self.flow_bindings
            .retain(|_, fb| !(fb.hoa == hoa && fb.binding_id == binding_id));
        self.events
            .push(ProtocolEvent::BindingRemoved { hoa, binding_id });
    }

    /// Removes every binding of `hoa` and the flows bound to them.
    pub fn forget(&mut self, hoa: Ipv6Addr) {
        self.bindings.remove(&hoa);
        self.flow_bindings.retain(|_, fb| fb.hoa != hoa);
    }

    pub fn entry(&self, hoa: Ipv6Addr, binding_id: BindingId) -> Option<&BindingCacheEntry> {
        self.bindings
            .get(&hoa)?
            .iter()
            .find(|e| e.binding_id == binding_id)
    }

    pub fn entries(&self, hoa: Ipv6Addr) -> &[BindingCacheEntry] {
        self.bindings.get(&hoa).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn binding_for_coa(&self, hoa: Ipv6Addr, coa: Ipv6Addr) -> Option<BindingId> {
        self.entries(hoa)
            .iter()
            .find(|e| e.coa == coa)
            .map(|e| e.binding_id)
    }

    pub fn flow_binding(&self, flow_id: FlowId) -> Option<&FlowBindingEntry> {
        self.flow_bindings.get(&flow_id)
    }

    pub fn flow_bindings(&self) -> impl Iterator<Item = &FlowBindingEntry> {
        self.flow_bindings.values()
    }

    pub fn drain_events(&mut self) -> Vec<ProtocolEvent> {
        std::mem::take(&mut self.events)
    }

    /// Every flow binding references a live binding cache entry and each
    /// home address with entries has exactly one default.
    pub fn is_consistent(&self) -> bool {
        let defaults_ok = self
            .bindings
            .values()
            .all(|v| v.iter().filter(|e| e.is_default).count() == 1);
        let refs_ok = self
            .flow_bindings
            .values()
            .all(|fb| self.entry(fb.hoa, fb.binding_id).is_some());
        defaults_ok && refs_ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(last: u16) -> Ipv6Addr {
        Ipv6Addr::new(0x2001, 0xdb8, 0, 0, 0, 0, 0, last)
    }

    #[test]
    fn multiple_coas_per_home_address() {
        let mut ha = HomeAgent::default();
        let hoa = addr(1);
        let b1 = ha.register_coa(hoa, addr(10));
        let b2 = ha.register_coa(hoa, addr(20));
        assert_ne!(b1, b2);
        assert_eq!(ha.entries(hoa).len(), 2);
        assert!(ha.entry(hoa, b1).unwrap().is_default);
        assert!(!ha.entry(hoa, b2).unwrap().is_default);
        assert_eq!(ha.register_coa(hoa, addr(20)), b2);
        assert_eq!(ha.entries(hoa).len(), 2);
        let acks = ha
            .drain_events()
            .into_iter()
            .filter(|e| matches!(e, ProtocolEvent::BindingAck { .. }))
            .count();
        assert_eq!(acks, 3);
    }

    #[test]
    fn flow_binding_routes_and_replaces() {
        let mut ha = HomeAgent::default();
        let hoa = addr(1);
        let b1 = ha.register_coa(hoa, addr(10));
        let b2 = ha.register_coa(hoa, addr(20));
        let f = FlowId(1);
        assert_eq!(ha.route(f, hoa).unwrap(), addr(10));
        ha.bind_flow(f, hoa, b2).unwrap();
        assert_eq!(ha.route(f, hoa).unwrap(), addr(20));
        ha.bind_flow(f, hoa, b1).unwrap();
        assert_eq!(ha.flow_bindings().filter(|fb| fb.flow_id == f).count(), 1);
        assert_eq!(ha.route(f, hoa).unwrap(), addr(10));
    }

    #[test]
    fn binding_to_unknown_id_is_rejected() {
        let mut ha = HomeAgent::default();
        let hoa = addr(1);
        ha.register_coa(hoa, addr(10));
        let before = ha.clone();
        let err = ha.bind_flow(FlowId(1), hoa, BindingId(99));
        assert_eq!(
            err,
            Err(IfomError::UnknownBinding {
                hoa,
                binding_id: BindingId(99)
            })
        );
        assert_eq!(ha.flow_bindings, before.flow_bindings);
    }

    #[test]
    fn deregistration_fallbacks() {
        let mut ha = HomeAgent::default();
        let hoa = addr(1);
        let b1 = ha.register_coa(hoa, addr(10));
        let b2 = ha.register_coa(hoa, addr(20));
        ha.bind_flow(FlowId(7), hoa, b2).unwrap();
        ha.deregister(hoa, b2);
        assert_eq!(ha.route(FlowId(7), hoa).unwrap(), addr(10));

        let b3 = ha.register_coa(hoa, addr(30));
        ha.deregister(hoa, b1);
        assert!(ha.entry(hoa, b3).unwrap().is_default);
        ha.deregister(hoa, b3);
        assert_eq!(ha.route(FlowId(7), hoa), Err(IfomError::NoRoute));
        assert!(ha.is_consistent());
    }

    #[test]
    fn unknown_deregistration_warns() {
        let mut ha = HomeAgent::default();
        ha.deregister(addr(1), BindingId(3));
        assert!(matches!(
            ha.drain_events().as_slice(),
            [ProtocolEvent::UnknownDeregistration { .. }]
        ));
    }
}
