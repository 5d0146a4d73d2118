//! Moving a running session between cellular and Wi-Fi through one of the
//! two flow mobility mechanisms.

use crate::events::Event;
use crate::ids::{AccessPointId, ElementId, UserId};
use crate::network::NetworkState;
use crate::topology::BsMode;
use crate::wifi::Admission;

use super::{wifi_care_of_address, IfomError, MagId, OffloadMechanism};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffloadOutcome {
    pub ap: AccessPointId,
    pub mechanism: OffloadMechanism,
    pub handover_delay_ms: f64,
}

impl NetworkState {
    /// Offloads the user's session to `ap`. On rejection nothing changes
    /// except a failure event.
    pub fn offload_session(
        &mut self,
        user_id: UserId,
        ap: AccessPointId,
        mechanism: OffloadMechanism,
    ) -> Result<OffloadOutcome, IfomError> {
        let user = self.users.get(&user_id).ok_or(IfomError::NoRoute)?;
        let flow = user.flow_id();
        let rate = user.session.on_rate;
        let hoa = user.hoa;
        if user.offload.is_some() {
            return Err(IfomError::NoRoute);
        }
        let idx = ap.0 as usize;
        if idx >= self.aps.len() || self.aps[idx].admit_flow(rate) == Admission::Reject {
            self.counters.offload_failures += 1;
            self.log(
                Event::new(self.t_s, "offload-failed")
                    .with("user", user_id)
                    .with("flow", flow)
                    .with("ap", ap)
                    .with("mechanism", mechanism),
            );
            return Err(IfomError::AdmissionRejected { flow_id: flow, ap });
        }
        let mut wifi_binding = None;
        let handover_delay_ms = match mechanism {
            OffloadMechanism::NetworkCentric => {
                let mag = MagId(ElementId::Ap(ap));
                let outcome = self.lma.mag_attach(user_id, mag);
                self.lma
                    .move_flow(flow, mag)
                    .expect("binding established just above");
                outcome.handover_delay_ms
            }
            OffloadMechanism::UserCentric => {
                let bid = self.ha.register_coa(hoa, wifi_care_of_address(ap, user_id));
                self.ha
                    .bind_flow(flow, hoa, bid)
                    .expect("binding registered just above");
                wifi_binding = Some(bid);
                self.lma.auth_delay_ms
            }
        };
        let user = self.users.get_mut(&user_id).expect("checked above");
        user.serving = ElementId::Ap(ap);
        user.offload = Some(mechanism);
        user.wifi_binding = wifi_binding;
        match mechanism {
            OffloadMechanism::UserCentric => self.counters.offloads_uc += 1,
            OffloadMechanism::NetworkCentric => self.counters.offloads_nc += 1,
        }
        self.flush_protocol_events();
        let delay = self.aps[idx].predicted_delay_ms();
        self.log(
            Event::new(self.t_s, "offload")
                .with("user", user_id)
                .with("flow", flow)
                .with("ap", ap)
                .with("mechanism", mechanism)
                .with("handover_delay_ms", format!("{handover_delay_ms:.1}"))
                .with("ap_delay_ms", format!("{delay:.1}")),
        );
        Ok(OffloadOutcome {
            ap,
            mechanism,
            handover_delay_ms,
        })
    }

    /// Shifts an offloaded session back to its cellular base station (or
    /// the live base station covering it when that one is off).
    pub fn return_to_cellular(&mut self, user_id: UserId) -> Result<(), IfomError> {
        let user = self.users.get(&user_id).ok_or(IfomError::NoRoute)?;
        let ElementId::Ap(ap) = user.serving else {
            return Ok(());
        };
        let (flow, hoa, rate, mechanism) =
            (user.flow_id(), user.hoa, user.session.on_rate, user.offload);
        let (cellular_binding, wifi_binding) = (user.cellular_binding, user.wifi_binding);
        let mut bs = user.cell_mag;
        if self.mode(bs) == BsMode::Off {
            bs = self.cellular_server(user.home, user.position);
            self.move_to_bs(user_id, bs)?;
        }
        match mechanism {
            Some(OffloadMechanism::NetworkCentric) => {
                let mag = MagId(ElementId::Bs(bs));
                self.lma.move_flow(flow, mag)?;
                self.lma.mag_detach(user_id, MagId(ElementId::Ap(ap)));
            }
            Some(OffloadMechanism::UserCentric) | None => {
                self.ha.bind_flow(flow, hoa, cellular_binding)?;
                if let Some(bid) = wifi_binding {
                    self.ha.deregister(hoa, bid);
                }
            }
        }
        self.aps[ap.0 as usize].release_flow(rate);
        let user = self.users.get_mut(&user_id).expect("checked above");
        user.serving = ElementId::Bs(bs);
        user.offload = None;
        user.wifi_selected = false;
        user.wifi_binding = None;
        self.counters.returns += 1;
        self.flush_protocol_events();
        self.log(
            Event::new(self.t_s, "return")
                .with("user", user_id)
                .with("flow", flow)
                .with("ap", ap)
                .with("bs", bs),
        );
        Ok(())
    }
}
