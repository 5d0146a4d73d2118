//! Active-user populations and per-user ON/OFF sessions.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{BitRate, ElementId, FlowId, UserId};
use crate::rng::sample_poisson;

pub const HOURS: usize = 24;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("user {0} has a session but is not attached to any element")]
    Unattached(UserId),
    #[error("hour {0} is outside 0..24")]
    InvalidHour(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Service {
    Voip,
    Web,
    Video,
}

impl Service {
    pub const ALL: [Service; 3] = [Service::Voip, Service::Web, Service::Video];

    /// End-to-end delay requirement of the service.
    pub fn delay_bound_ms(self) -> f64 {
        match self {
            Service::Voip => 100.0,
            Service::Video => 250.0,
            Service::Web => 500.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Service::Voip => "voip",
            Service::Web => "web",
            Service::Video => "video",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OnOff {
    On,
    Off,
}

/// ON/OFF source parameters of one service.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnOffParams {
    pub mean_on_s: f64,
    pub mean_off_s: f64,
    pub on_rate_kbps: f64,
}

impl OnOffParams {
    pub fn on_fraction(&self) -> f64 {
        self.mean_on_s / (self.mean_on_s + self.mean_off_s)
    }

    pub fn mean_rate_mbps(&self) -> f64 {
        self.on_fraction() * self.on_rate_kbps / 1e3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceModels {
    pub voip: OnOffParams,
    pub web: OnOffParams,
    pub video: OnOffParams,
}

impl Default for ServiceModels {
    fn default() -> Self {
        ServiceModels {
            voip: OnOffParams {
                mean_on_s: 1.0,
                mean_off_s: 1.35,
                on_rate_kbps: 12.2,
            },
            web: OnOffParams {
                mean_on_s: 5.0,
                mean_off_s: 30.0,
                on_rate_kbps: 500.0,
            },
            video: OnOffParams {
                mean_on_s: 60.0,
                mean_off_s: 5.0,
                on_rate_kbps: 2000.0,
            },
        }
    }
}

impl ServiceModels {
    pub fn params(&self, service: Service) -> &OnOffParams {
        match service {
            Service::Voip => &self.voip,
            Service::Web => &self.web,
            Service::Video => &self.video,
        }
    }

    /// Expected rate of one active user under the equal-probability mix.
    pub fn mean_user_rate_mbps(&self, include_video: bool) -> f64 {
        let services = service_mix(include_video);
        services
            .iter()
            .map(|s| self.params(*s).mean_rate_mbps())
            .sum::<f64>()
            / services.len() as f64
    }
}

fn service_mix(include_video: bool) -> &'static [Service] {
    if include_video {
        &Service::ALL
    } else {
        &[Service::Voip, Service::Web]
    }
}

/// Picks a service with equal probability among the enabled ones.
pub fn assign_service<R: Rng + ?Sized>(rng: &mut R, include_video: bool) -> Service {
    let mix = service_mix(include_video);
    mix[rng.random_range(0..mix.len())]
}

/// Hourly mean active-user tables of both networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub cellular: Vec<f64>,
    pub wifi: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Network {
    Cellular,
    Wifi,
}

/// Day-night shape in `[0.1, 1]`: a half sine from 05:00 to 21:00 peaking at
/// 13:00 with a 0.1 floor, shifted by `shift_h` hours.
pub fn diurnal_shape(hour: usize, shift_h: usize) -> f64 {
    let h = (hour + HOURS - shift_h % HOURS) % HOURS;
    if (5..=21).contains(&h) {
        (PI * (h as f64 - 5.0) / 16.0).sin().max(0.1)
    } else {
        0.1
    }
}

impl TrafficProfile {
    /// Default tables scaled so the busy hour equals the given means; the
    /// Wi-Fi table is the cellular shape two hours later.
    pub fn diurnal(cellular_busy_hour: f64, wifi_busy_hour: f64) -> Self {
        let shape = |shift| -> Vec<f64> { (0..HOURS).map(|h| diurnal_shape(h, shift)).collect() };
        let scale = |v: Vec<f64>, peak: f64| -> Vec<f64> {
            let max = v.iter().cloned().fold(0.0, f64::max);
            v.into_iter().map(|x| x / max * peak).collect()
        };
        TrafficProfile {
            cellular: scale(shape(0), cellular_busy_hour),
            wifi: scale(shape(2), wifi_busy_hour),
        }
    }

    pub fn table(&self, network: Network) -> &[f64] {
        match network {
            Network::Cellular => &self.cellular,
            Network::Wifi => &self.wifi,
        }
    }

    /// Maximum of the cellular table.
    pub fn busy_hour_load(&self) -> f64 {
        self.cellular.iter().cloned().fold(0.0, f64::max)
    }

    pub fn mean_at(&self, network: Network, hour: usize) -> Result<f64, TrafficError> {
        self.table(network)
            .get(hour)
            .copied()
            .ok_or(TrafficError::InvalidHour(hour))
    }

    /// Poisson number of active users with the hour's mean.
    pub fn sample_active_users<R: Rng + ?Sized>(
        &self,
        network: Network,
        hour: usize,
        rng: &mut R,
    ) -> Result<u64, TrafficError> {
        Ok(sample_poisson(rng, self.mean_at(network, hour)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub flow_id: FlowId,
    pub user_id: UserId,
    pub service: Service,
    pub state: OnOff,
    pub on_rate: BitRate,
    pub delay_bound_ms: f64,
    pub mean_on_s: f64,
    pub mean_off_s: f64,
}

impl Session {
    /// New session whose initial state is drawn from the stationary ON/OFF
    /// distribution.
    pub fn start<R: Rng + ?Sized>(
        flow_id: FlowId,
        user_id: UserId,
        service: Service,
        models: &ServiceModels,
        rng: &mut R,
    ) -> Self {
        let p = models.params(service);
        let state = if rng.random::<f64>() < p.on_fraction() {
            OnOff::On
        } else {
            OnOff::Off
        };
        Session {
            flow_id,
            user_id,
            service,
            state,
            on_rate: BitRate::from_kbps(p.on_rate_kbps),
            delay_bound_ms: service.delay_bound_ms(),
            mean_on_s: p.mean_on_s,
            mean_off_s: p.mean_off_s,
        }
    }

    /// Rate currently offered (zero while OFF).
    pub fn current_rate(&self) -> BitRate {
        match self.state {
            OnOff::On => self.on_rate,
            OnOff::Off => BitRate::ZERO,
        }
    }

    /// Probability of being in the other state after `dt` seconds.
    ///
    /// With exponential holding times the ON/OFF process is a two-state
    /// Markov chain, so the transition probability over any step length is
    /// exact: `pi_other * (1 - exp(-(a + b) dt))`.
    pub fn flip_probability(&self, dt_s: f64) -> f64 {
        let a = 1.0 / self.mean_on_s;
        let b = 1.0 / self.mean_off_s;
        let mix = 1.0 - (-(a + b) * dt_s).exp();
        match self.state {
            OnOff::On => a / (a + b) * mix,
            OnOff::Off => b / (a + b) * mix,
        }
    }
}

/// Advances a session by `dt` seconds.
pub fn step_session<R: Rng + ?Sized>(session: &Session, dt_s: f64, rng: &mut R) -> Session {
    let mut next = session.clone();
    if rng.random::<f64>() < session.flip_probability(dt_s) {
        next.state = match session.state {
            OnOff::On => OnOff::Off,
            OnOff::Off => OnOff::On,
        };
    }
    next
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfferedLoad {
    pub element: ElementId,
    pub timestamp_s: f64,
    pub aggregate_rate_mbps: f64,
    pub active_user_count: usize,
}

/// Aggregates the ON-session rates of every element that has users attached.
pub fn offered_load<'a>(
    sessions: impl IntoIterator<Item = &'a Session>,
    attachment: &BTreeMap<UserId, ElementId>,
    t_s: f64,
) -> Result<Vec<OfferedLoad>, TrafficError> {
    let mut acc: BTreeMap<ElementId, (BitRate, usize)> = BTreeMap::new();
    for s in sessions {
        let element = attachment
            .get(&s.user_id)
            .ok_or(TrafficError::Unattached(s.user_id))?;
        let slot = acc.entry(*element).or_default();
        slot.0 += s.current_rate();
        slot.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(element, (rate, n))| OfferedLoad {
            element,
            timestamp_s: t_s,
            aggregate_rate_mbps: rate.mbps(),
            active_user_count: n,
        })
        .collect())
}
