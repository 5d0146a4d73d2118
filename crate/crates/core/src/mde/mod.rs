//! Cognitive management: the base station cycle (sectorization switching
//! and powering down) and the network selection cycle (NIT broadcast and
//! user-side selection).

pub mod mde1;
pub mod nit;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{BsId, ElementId};
use crate::ifom::OffloadMechanism;
use crate::topology::BsMode;

pub use mde1::{
    assess, collect_reports, decide, execute, BsAssessment, Decision, DecisionHistory,
    DecisionParams, ExecutionReport, LoadClass, SituationAssessment,
};
pub use nit::{
    apply_delta, build_nit, filter_nit, first_attach_nit, p_t, user_select_network, Ndcm, Nit,
    NitDelta, NitEntry,
};

#[derive(Debug, Error, PartialEq)]
pub enum MdeError {
    #[error("no report from live {0}")]
    IncompleteAssessment(BsId),
    #[error("NIT cluster mismatch: {new} vs {previous}")]
    ClusterMismatch { new: u32, previous: u32 },
}

/// Decision thresholds and periods of both cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MdeConfig {
    /// Load (fraction of tri-sectorized capacity) at which omni-directional
    /// mode must switch back to tri-sectorized.
    pub t_switch: f64,
    pub ss_trigger_fraction: f64,
    /// Applied to the busy-hour load.
    pub pd_trigger_fraction: f64,
    pub up_hysteresis: f64,
    pub monitoring_period_s: f64,
    pub nit_period_s: f64,
    pub nit_size: usize,
    pub mde1_offload: OffloadMechanism,
    pub mde2_offload: OffloadMechanism,
    /// Operator-enforced selection: every terminal follows the NIT whenever
    /// it can, ignoring temporal coverage.
    pub mandatory_offload: bool,
}

impl Default for MdeConfig {
    fn default() -> Self {
        MdeConfig {
            t_switch: 1.0 / 3.0,
            ss_trigger_fraction: 0.9,
            pd_trigger_fraction: 0.1,
            up_hysteresis: 1.1,
            monitoring_period_s: 900.0,
            nit_period_s: 900.0,
            nit_size: 5,
            mde1_offload: OffloadMechanism::NetworkCentric,
            mde2_offload: OffloadMechanism::UserCentric,
            mandatory_offload: false,
        }
    }
}

/// Resolved trigger levels, all as fractions of tri-sectorized capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub t_switch: f64,
    pub ss_trigger: f64,
    pub pd_trigger: f64,
    pub up_hysteresis: f64,
    pub busy_hour_load: f64,
}

impl Thresholds {
    /// Sectorization is removed at or below this load.
    pub fn ss_down(&self) -> f64 {
        self.ss_trigger * self.t_switch
    }

    /// Sectorization is restored strictly above this load. Never below
    /// `t_switch`, so a load held at `t_switch` causes no decision.
    pub fn ss_up(&self) -> f64 {
        self.t_switch.max(self.up_hysteresis * self.ss_down())
    }

    pub fn pd_down(&self) -> f64 {
        self.pd_trigger * self.busy_hour_load
    }

    pub fn pd_up(&self) -> f64 {
        self.up_hysteresis * self.pd_down()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{key}: {message}")]
pub struct InvalidSetting {
    pub key: &'static str,
    pub message: String,
}

fn invalid(key: &'static str, message: impl Into<String>) -> InvalidSetting {
    InvalidSetting {
        key,
        message: message.into(),
    }
}

impl MdeConfig {
    /// Checks the ranges and the ordering
    /// `0 < pd * busy_hour < ss * t_switch <= t_switch`; the lower bound is
    /// only enforced when powering down is enabled.
    pub fn thresholds(
        &self,
        busy_hour_load: f64,
        pd_enabled: bool,
    ) -> Result<Thresholds, InvalidSetting> {
        if !(self.t_switch > 0.0 && self.t_switch <= 1.0) {
            return Err(invalid("mde.t_switch", "must be in (0, 1]"));
        }
        if !(self.ss_trigger_fraction > 0.0 && self.ss_trigger_fraction <= 1.0) {
            return Err(invalid("mde.ss_trigger_fraction", "must be in (0, 1]"));
        }
        if !(self.pd_trigger_fraction > 0.0 && self.pd_trigger_fraction < 1.0) {
            return Err(invalid("mde.pd_trigger_fraction", "must be in (0, 1)"));
        }
        if !(self.up_hysteresis > 1.0 && self.up_hysteresis.is_finite()) {
            return Err(invalid("mde.up_hysteresis", "must be greater than 1"));
        }
        if !(self.monitoring_period_s > 0.0 && self.monitoring_period_s.is_finite()) {
            return Err(invalid("mde.monitoring_period_s", "must be positive"));
        }
        if !(self.nit_period_s > 0.0 && self.nit_period_s.is_finite()) {
            return Err(invalid("mde.nit_period_s", "must be positive"));
        }
        let t = Thresholds {
            t_switch: self.t_switch,
            ss_trigger: self.ss_trigger_fraction,
            pd_trigger: self.pd_trigger_fraction,
            up_hysteresis: self.up_hysteresis,
            busy_hour_load,
        };
        if pd_enabled && t.pd_down() <= 0.0 {
            return Err(invalid(
                "mde.pd_trigger_fraction",
                "powering down needs a positive busy-hour load",
            ));
        }
        if t.pd_down() >= t.ss_down() {
            return Err(invalid(
                "mde.pd_trigger_fraction",
                format!(
                    "pd trigger {:.4} must stay below the sectorization trigger {:.4}",
                    t.pd_down(),
                    t.ss_down()
                ),
            ));
        }
        Ok(t)
    }
}

/// One element's report for a monitoring period.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub element_id: ElementId,
    pub timestamp_s: f64,
    /// Offered rate over the capacity of the current mode (BS) or over
    /// reserved rate over capacity (AP).
    pub load_fraction: f64,
    pub attached_user_count: usize,
    pub mode: Option<BsMode>,
    pub current_mbps: f64,
    pub reserved_mbps: f64,
    /// Sessions hosted here that belong to each cell's own demand (users
    /// that chose Wi-Fi themselves are excluded).
    pub hosted: BTreeMap<BsId, HostedLoad>,
    pub wifi: Option<WifiMetrics>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HostedLoad {
    pub current_mbps: f64,
    pub reserved_mbps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WifiMetrics {
    pub bandwidth_utilization: f64,
    pub spare_mbps: f64,
    pub handover_delay_ms: f64,
    pub end_to_end_delay_ms: f64,
    pub jitter_ms: f64,
    pub throughput_mbps: f64,
    pub packet_loss_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Action {
    /// Applied first so that every later step sees final cell states.
    PowerUp(BsId),
    /// Powers the cell down under the cooperation pattern with that many
    /// cells off.
    PowerDown(BsId, usize),
    SwitchToTriSectorized(BsId),
    SwitchToOmni(BsId),
    NoOp,
}

impl Action {
    pub fn bs(self) -> Option<BsId> {
        match self {
            Action::PowerUp(b)
            | Action::PowerDown(b, _)
            | Action::SwitchToTriSectorized(b)
            | Action::SwitchToOmni(b) => Some(b),
            Action::NoOp => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::PowerUp(_) => "power-up",
            Action::PowerDown(..) => "power-down",
            Action::SwitchToTriSectorized(_) => "switch-to-tri",
            Action::SwitchToOmni(_) => "switch-to-omni",
            Action::NoOp => "noop",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::PowerDown(b, k) => write!(f, "{}({b},pattern={k})", self.as_str()),
            Action::NoOp => f.write_str("noop"),
            other => write!(f, "{}({})", other.as_str(), other.bs().expect("has bs")),
        }
    }
}
