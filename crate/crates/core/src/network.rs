//! Mutable state of one simulated cluster: base station modes, users and
//! their sessions, access point load, and the mobility anchors.

use std::collections::BTreeMap;
use std::net::Ipv6Addr;

use crate::events::{Event, EventLog};
use crate::ids::{AccessPointId, BitRate, BsId, ElementId, FlowId, UserId};
use crate::ifom::{home_address, BindingId, HomeAgent, IfomError, Lma, MagId, OffloadMechanism};
use crate::rng::SimRng;
use crate::topology::{BsMode, CooperationPattern, Point, Topology};
use crate::traffic::Session;
use crate::wifi::ApState;

#[derive(Debug, Clone)]
pub struct User {
    pub id: UserId,
    pub home: BsId,
    pub position: Point,
    /// Access points whose coverage contains the user.
    pub coverage: Vec<AccessPointId>,
    pub session: Session,
    pub serving: ElementId,
    /// Base station holding the user's cellular proxy binding.
    pub cell_mag: BsId,
    pub offload: Option<OffloadMechanism>,
    /// Offloaded by the terminal's own NIT-based selection.
    pub wifi_selected: bool,
    pub draining: bool,
    /// Bits delivered to the session so far; never reset.
    pub delivered_bits: u64,
    pub hoa: Ipv6Addr,
    pub cellular_binding: BindingId,
    pub wifi_binding: Option<BindingId>,
    pub nit_received: bool,
    pub(crate) rng: SimRng,
}

impl User {
    pub fn flow_id(&self) -> FlowId {
        self.session.flow_id
    }
}

/// Aggregate per base station, indexed by `BsId`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BsLoad {
    pub current: BitRate,
    pub reserved: BitRate,
    pub users: usize,
}

#[derive(Debug, Clone)]
pub struct NetworkState {
    pub topology: Topology,
    pub patterns: Vec<CooperationPattern>,
    /// Per pattern: off cell -> covering cell -> share of the off cell's area.
    pub area_shares: Vec<BTreeMap<BsId, BTreeMap<BsId, f64>>>,
    pub pattern: usize,
    pub sector_capacity: BitRate,
    pub users: BTreeMap<UserId, User>,
    pub aps: Vec<ApState>,
    /// Nominal rates of the Wi-Fi network's own users on each access point.
    pub native: Vec<Vec<BitRate>>,
    pub ha: HomeAgent,
    pub lma: Lma,
    pub events: EventLog,
    pub t_s: f64,
    pub next_user: u32,
    pub counters: Counters,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub offloads_uc: u64,
    pub offloads_nc: u64,
    pub offload_failures: u64,
    pub returns: u64,
    pub handovers: u64,
    pub aborted_actions: u64,
    pub native_blocked: u64,
}

impl NetworkState {
    pub fn new(
        topology: Topology,
        sector_capacity: BitRate,
        auth_delay_ms: f64,
        binding_lifetime_s: f64,
        events: EventLog,
    ) -> Self {
        let patterns = topology.all_patterns();
        let area_shares = patterns
            .iter()
            .map(|p| p.area_shares(&topology, 5.0))
            .collect();
        let aps = topology
            .access_points
            .iter()
            .map(|ap| ApState::new(ap.id, ap.capacity))
            .collect();
        let native = vec![Vec::new(); topology.access_points.len()];
        NetworkState {
            topology,
            patterns,
            area_shares,
            pattern: 0,
            sector_capacity,
            users: BTreeMap::new(),
            aps,
            native,
            ha: HomeAgent::new(binding_lifetime_s),
            lma: Lma::new(auth_delay_ms, binding_lifetime_s),
            events,
            t_s: 0.0,
            next_user: 0,
            counters: Counters::default(),
        }
    }

    pub fn current_pattern(&self) -> &CooperationPattern {
        &self.patterns[self.pattern]
    }

    pub fn mode(&self, bs: BsId) -> BsMode {
        self.topology.bs(bs).map(|b| b.mode).unwrap_or(BsMode::Off)
    }

    pub fn set_mode(&mut self, bs: BsId, mode: BsMode) {
        if let Some(b) = self.topology.bs_mut(bs) {
            b.mode = mode;
        }
    }

    pub fn capacity(&self, mode: BsMode) -> BitRate {
        match mode {
            BsMode::TriSectorized => BitRate(self.sector_capacity.0 * 3),
            BsMode::Omni => self.sector_capacity,
            BsMode::Off => BitRate::ZERO,
        }
    }

    pub fn tri_capacity(&self) -> BitRate {
        self.capacity(BsMode::TriSectorized)
    }

    pub fn log(&mut self, event: Event) {
        self.events.push(event);
    }

    /// Copies the anchors' signalling into the events file.
    pub fn flush_protocol_events(&mut self) {
        let t = self.t_s;
        for e in self
            .ha
            .drain_events()
            .into_iter()
            .chain(self.lma.drain_events())
        {
            self.events.push(e.to_event(t));
        }
    }

    /// Live base station that serves a point of `home`'s cell.
    pub fn cellular_server(&self, home: BsId, p: Point) -> BsId {
        if self.mode(home) != BsMode::Off {
            return home;
        }
        self.current_pattern()
            .cover_for(&self.topology, home, p)
            .expect("every off cell has a live cover")
    }

    /// Creates a user with a running session attached to its cellular server.
    pub fn add_user(
        &mut self,
        home: BsId,
        position: Point,
        session: Session,
        rng: SimRng,
    ) -> UserId {
        let id = UserId(self.next_user);
        self.next_user += 1;
        debug_assert_eq!(session.user_id, id);
        let serving_bs = self.cellular_server(home, position);
        let mag = MagId(ElementId::Bs(serving_bs));
        self.lma.mag_attach(id, mag);
        self.lma.add_flow(id, session.flow_id);
        let exposed = self
            .lma
            .interface(id)
            .expect("attached user has a logical interface")
            .exposed_address;
        let hoa = home_address(id);
        let cellular_binding = self.ha.register_coa(hoa, exposed);
        let coverage = self.topology.wifi_coverage(position).into_iter().collect();
        self.users.insert(
            id,
            User {
                id,
                home,
                position,
                coverage,
                session,
                serving: ElementId::Bs(serving_bs),
                cell_mag: serving_bs,
                offload: None,
                wifi_selected: false,
                draining: false,
                delivered_bits: 0,
                hoa,
                cellular_binding,
                wifi_binding: None,
                nit_received: false,
                rng,
            },
        );
        self.flush_protocol_events();
        id
    }

    pub fn remove_user(&mut self, id: UserId) {
        let Some(user) = self.users.remove(&id) else {
            return;
        };
        if let ElementId::Ap(ap) = user.serving {
            self.aps[ap.0 as usize].release_flow(user.session.on_rate);
        }
        self.ha.forget(user.hoa);
        self.lma.forget(id);
        self.log(
            Event::new(self.t_s, "user-leave")
                .with("user", id)
                .with("flow", user.session.flow_id)
                .with("bits", user.delivered_bits),
        );
    }

    /// Cellular handover of a user between base stations.
    pub fn move_to_bs(&mut self, id: UserId, bs: BsId) -> Result<(), IfomError> {
        let user = self.users.get(&id).ok_or(IfomError::NoRoute)?;
        let (old, flow, on_cellular) = (
            user.cell_mag,
            user.flow_id(),
            matches!(user.serving, ElementId::Bs(_)),
        );
        if old == bs {
            return Ok(());
        }
        let target = MagId(ElementId::Bs(bs));
        self.lma.mag_attach(id, target);
        if on_cellular {
            self.lma.move_flow(flow, target)?;
        }
        self.lma.mag_detach(id, MagId(ElementId::Bs(old)));
        let user = self.users.get_mut(&id).expect("checked above");
        user.cell_mag = bs;
        if on_cellular {
            user.serving = ElementId::Bs(bs);
        }
        self.counters.handovers += 1;
        self.flush_protocol_events();
        self.log(
            Event::new(self.t_s, "handover")
                .with("user", id)
                .with("from", old)
                .with("to", bs),
        );
        Ok(())
    }

    /// Per base station aggregates of the sessions it currently serves.
    pub fn bs_loads(&self) -> Vec<BsLoad> {
        let mut loads = vec![BsLoad::default(); self.topology.base_stations.len()];
        for u in self.users.values() {
            if let ElementId::Bs(b) = u.serving {
                let l = &mut loads[b.0 as usize];
                l.current += u.session.current_rate();
                l.reserved += u.session.on_rate;
                l.users += 1;
            }
        }
        loads
    }

    /// Offered load of `bs` as a fraction of the capacity of its mode,
    /// clamped to 1 when overloaded.
    pub fn load_fraction(&self, mode: BsMode, current: BitRate) -> f64 {
        let cap = self.capacity(mode);
        if cap.0 == 0 {
            return 0.0;
        }
        (current.0 as f64 / cap.0 as f64).min(1.0)
    }

    /// Current ON rate of every user homed at each cell, regardless of where
    /// it is served.
    pub fn home_demand_all(&self) -> Vec<BitRate> {
        let mut d = vec![BitRate::ZERO; self.topology.base_stations.len()];
        for u in self.users.values() {
            d[u.home.0 as usize] += u.session.current_rate();
        }
        d
    }

    /// Element the anchors would deliver the user's flow to.
    pub fn resolve_route(&self, id: UserId) -> Result<ElementId, IfomError> {
        let user = self.users.get(&id).ok_or(IfomError::NoRoute)?;
        let coa = self.ha.route(user.flow_id(), user.hoa)?;
        let exposed = self
            .lma
            .interface(id)
            .map(|l| l.exposed_address)
            .ok_or(IfomError::NoRoute)?;
        if coa == exposed {
            return Ok(self.lma.route_mag(user.flow_id())?.0);
        }
        let segs = coa.segments();
        Ok(ElementId::Ap(AccessPointId(segs[3] as u32)))
    }

    /// Checks that every session is served by exactly the element its
    /// anchors route to and that no access point is over capacity.
    pub fn check_invariants(&self) -> Result<(), String> {
        for u in self.users.values() {
            let routed = self
                .resolve_route(u.id)
                .map_err(|e| format!("{}: {e}", u.id))?;
            if routed != u.serving {
                return Err(format!(
                    "{} served by {} but routed to {}",
                    u.id, u.serving, routed
                ));
            }
            if let ElementId::Bs(b) = u.serving {
                if self.mode(b) == BsMode::Off {
                    return Err(format!("{} served by powered-down {}", u.id, b));
                }
            }
        }
        for ap in &self.aps {
            if ap.reserved > ap.capacity {
                return Err(format!("{} over capacity", ap.ap_id));
            }
        }
        Ok(())
    }

    /// Advances every session by `dt_s` and credits delivered bits.
    pub fn step_sessions(&mut self, dt_s: f64) {
        for u in self.users.values_mut() {
            u.delivered_bits += (u.session.current_rate().0 as f64 * dt_s) as u64;
            u.session = crate::traffic::step_session(&u.session, dt_s, &mut u.rng);
        }
    }

    /// Replaces the native Wi-Fi users of `ap` with `rates`, admitting each
    /// in order while capacity lasts.
    pub fn set_native_users(&mut self, ap: AccessPointId, rates: &[BitRate]) {
        let i = ap.0 as usize;
        for r in std::mem::take(&mut self.native[i]) {
            self.aps[i].release_flow(r);
        }
        for &r in rates {
            if self.aps[i].admit_flow(r) == crate::wifi::Admission::Accept {
                self.native[i].push(r);
            } else {
                self.counters.native_blocked += 1;
            }
        }
    }

    pub fn hour(&self) -> usize {
        ((self.t_s / 3600.0) as usize) % 24
    }
}
