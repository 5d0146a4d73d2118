//! IP flow mobility: the user-centric home agent and the network-centric
//! local mobility anchor, plus the glue that offloads sessions between
//! cellular and Wi-Fi.

pub mod ha;
pub mod lma;
mod offload;

use std::fmt;
use std::net::Ipv6Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::Event;
use crate::ids::{AccessPointId, FlowId};

pub use ha::{BindingCacheEntry, BindingId, FlowBindingEntry, HomeAgent};
pub use lma::{
    home_network_address, AttachOutcome, FlowMobilityCacheEntry, Lma, LogicalInterface, MagId,
    PhysicalInterface, ProxyBinding, TunnelId,
};
pub use offload::OffloadOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffloadMechanism {
    UserCentric,
    NetworkCentric,
}

impl OffloadMechanism {
    pub fn as_str(self) -> &'static str {
        match self {
            OffloadMechanism::UserCentric => "user-centric",
            OffloadMechanism::NetworkCentric => "network-centric",
        }
    }
}

impl fmt::Display for OffloadMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IfomError {
    #[error("no route for flow")]
    NoRoute,
    #[error("unknown binding {binding_id} for {hoa}")]
    UnknownBinding {
        hoa: Ipv6Addr,
        binding_id: BindingId,
    },
    #[error("{flow_id} has no proxy binding at {mag}")]
    NoBindingAtTarget { flow_id: FlowId, mag: MagId },
    #[error("unknown flow {0}")]
    UnknownFlow(FlowId),
    #[error("{ap} rejected {flow_id}")]
    AdmissionRejected { flow_id: FlowId, ap: AccessPointId },
    #[error("{0} is not covered by the target")]
    OutOfCoverage(FlowId),
}

/// Signalling records exchanged by the mobility entities.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolEvent {
    BindingUpdate {
        hoa: Ipv6Addr,
        coa: Ipv6Addr,
    },
    BindingAck {
        hoa: Ipv6Addr,
        binding_id: BindingId,
        refreshed: bool,
    },
    FlowBound {
        flow_id: FlowId,
        binding_id: BindingId,
    },
    BindingRemoved {
        hoa: Ipv6Addr,
        binding_id: BindingId,
    },
    UnknownDeregistration {
        hoa: Ipv6Addr,
        binding_id: BindingId,
    },
    ProxyBindingUpdate {
        user_id: crate::ids::UserId,
        mag_id: MagId,
    },
    ProxyBindingAck {
        user_id: crate::ids::UserId,
        mag_id: MagId,
        tunnel_id: TunnelId,
        refreshed: bool,
    },
    TunnelEstablished {
        user_id: crate::ids::UserId,
        mag_id: MagId,
        tunnel_id: TunnelId,
    },
    ProxyBindingRemoved {
        user_id: crate::ids::UserId,
        mag_id: MagId,
    },
    FlowMoved {
        flow_id: FlowId,
        from: Option<MagId>,
        to: MagId,
    },
}

impl ProtocolEvent {
    /// Events-file record at time `t_s`.
    pub fn to_event(&self, t_s: f64) -> Event {
        use ProtocolEvent::*;
        match self {
            BindingUpdate { hoa, coa } => Event::new(t_s, "bu").with("hoa", hoa).with("coa", coa),
            BindingAck {
                hoa,
                binding_id,
                refreshed,
            } => Event::new(t_s, "back")
                .with("hoa", hoa)
                .with("bid", binding_id)
                .with("refreshed", refreshed),
            FlowBound {
                flow_id,
                binding_id,
            } => Event::new(t_s, "flow-bound")
                .with("flow", flow_id)
                .with("bid", binding_id),
            BindingRemoved { hoa, binding_id } => Event::new(t_s, "binding-removed")
                .with("hoa", hoa)
                .with("bid", binding_id),
            UnknownDeregistration { hoa, binding_id } => Event::new(t_s, "warn-unknown-dereg")
                .with("hoa", hoa)
                .with("bid", binding_id),
            ProxyBindingUpdate { user_id, mag_id } => Event::new(t_s, "pbu")
                .with("user", user_id)
                .with("mag", mag_id),
            ProxyBindingAck {
                user_id,
                mag_id,
                tunnel_id,
                refreshed,
            } => Event::new(t_s, "pba")
                .with("user", user_id)
                .with("mag", mag_id)
                .with("tunnel", tunnel_id)
                .with("refreshed", refreshed),
            TunnelEstablished {
                user_id,
                mag_id,
                tunnel_id,
            } => Event::new(t_s, "tunnel-up")
                .with("user", user_id)
                .with("mag", mag_id)
                .with("tunnel", tunnel_id),
            ProxyBindingRemoved { user_id, mag_id } => Event::new(t_s, "pb-removed")
                .with("user", user_id)
                .with("mag", mag_id),
            FlowMoved { flow_id, from, to } => Event::new(t_s, "flow-moved")
                .with("flow", flow_id)
                .with(
                    "from",
                    from.map(|m| m.to_string()).unwrap_or_else(|| "-".into()),
                )
                .with("to", to),
        }
    }
}

/// Care-of address a user obtains on an access point's subnet.
pub fn wifi_care_of_address(ap: AccessPointId, user: crate::ids::UserId) -> Ipv6Addr {
    Ipv6Addr::new(
        0x2001,
        0xdb8,
        0x200,
        ap.0 as u16,
        0,
        0,
        (user.0 >> 16) as u16,
        user.0 as u16,
    )
}

/// Permanent home address used with the home agent.
pub fn home_address(user: crate::ids::UserId) -> Ipv6Addr {
    Ipv6Addr::new(
        0x2001,
        0xdb8,
        0x1,
        0,
        0,
        0,
        (user.0 >> 16) as u16,
        user.0 as u16,
    )
}
