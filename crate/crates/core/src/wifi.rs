//! Access point utilization, the utilization-dependent delay curve, flow
//! admission against capacity, and QoS-class classification.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AccessPointId, BitRate};
use crate::traffic::Service;

/// Delay floor, reached at and below 50% utilization.
pub const DELAY_FLOOR_MS: f64 = 50.0;
/// Delay at full utilization.
pub const DELAY_CEIL_MS: f64 = 600.0;

#[derive(Debug, Error, PartialEq)]
pub enum WifiError {
    #[error("utilization {0} outside [0, 1]")]
    UtilizationOutOfRange(f64),
}

/// Wi-Fi delay as a function of utilization: flat at 50 ms up to 50%, then
/// `50 * exp(2 ln 12 * (u - 0.5))`, which reaches 600 ms at full load.
pub fn delay_curve(utilization: f64) -> Result<f64, WifiError> {
    if !(0.0..=1.0).contains(&utilization) {
        return Err(WifiError::UtilizationOutOfRange(utilization));
    }
    if utilization <= 0.5 {
        return Ok(DELAY_FLOOR_MS);
    }
    if utilization == 1.0 {
        // exp(ln 12) is not exactly 12 in floating point.
        return Ok(DELAY_CEIL_MS);
    }
    let k = 2.0 * (DELAY_CEIL_MS / DELAY_FLOOR_MS).ln();
    Ok(DELAY_FLOOR_MS * (k * (utilization - 0.5)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Accept,
    Reject,
}

/// Load state of one access point. Flows reserve their nominal ON rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ApState {
    pub ap_id: AccessPointId,
    pub capacity: BitRate,
    pub reserved: BitRate,
    pub attached_user_count: usize,
}

impl ApState {
    pub fn new(ap_id: AccessPointId, capacity: BitRate) -> Self {
        ApState {
            ap_id,
            capacity,
            reserved: BitRate::ZERO,
            attached_user_count: 0,
        }
    }

    pub fn utilization(&self) -> f64 {
        if self.capacity.0 == 0 {
            return 1.0;
        }
        (self.reserved.0 as f64 / self.capacity.0 as f64).min(1.0)
    }

    pub fn spare(&self) -> BitRate {
        self.capacity.saturating_sub(self.reserved)
    }

    pub fn predicted_delay_ms(&self) -> f64 {
        delay_curve(self.utilization()).expect("utilization is clamped to [0, 1]")
    }

    /// Admits the flow iff it fits in the remaining capacity.
    pub fn admit_flow(&mut self, rate: BitRate) -> Admission {
        if self.reserved.0 + rate.0 <= self.capacity.0 {
            self.reserved += rate;
            self.attached_user_count += 1;
            Admission::Accept
        } else {
            Admission::Reject
        }
    }

    pub fn would_admit(&self, rate: BitRate) -> bool {
        self.reserved.0 + rate.0 <= self.capacity.0
    }

    pub fn release_flow(&mut self, rate: BitRate) {
        self.reserved = self.reserved.saturating_sub(rate);
        self.attached_user_count = self.attached_user_count.saturating_sub(1);
    }
}

/// 3GPP traffic classes, strictest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QosClass {
    Conversational,
    Streaming,
    Interactive,
    Background,
}

impl QosClass {
    pub const ALL: [QosClass; 4] = [
        QosClass::Conversational,
        QosClass::Streaming,
        QosClass::Interactive,
        QosClass::Background,
    ];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    /// Largest delay at which the class is still supported.
    pub fn delay_threshold_ms(self) -> f64 {
        match self {
            QosClass::Conversational => 100.0,
            QosClass::Streaming => 250.0,
            QosClass::Interactive => 500.0,
            QosClass::Background => f64::INFINITY,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QosClass::Conversational => "conversational",
            QosClass::Streaming => "streaming",
            QosClass::Interactive => "interactive",
            QosClass::Background => "background",
        }
    }
}

/// Set of supported QoS classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QosClassSet(u8);

impl QosClassSet {
    pub fn empty() -> Self {
        QosClassSet(0)
    }

    pub fn all() -> Self {
        QosClass::ALL.into_iter().collect()
    }

    pub fn contains(self, class: QosClass) -> bool {
        self.0 & class.bit() != 0
    }

    pub fn insert(&mut self, class: QosClass) {
        self.0 |= class.bit();
    }

    pub fn is_subset(self, other: QosClassSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = QosClass> {
        QosClass::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    /// Supporting a class implies supporting every less demanding one.
    pub fn is_downward_closed(self) -> bool {
        let mut seen = false;
        for c in QosClass::ALL {
            if self.contains(c) {
                seen = true;
            } else if seen {
                return false;
            }
        }
        true
    }
}

impl FromIterator<QosClass> for QosClassSet {
    fn from_iter<I: IntoIterator<Item = QosClass>>(iter: I) -> Self {
        let mut set = QosClassSet::empty();
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl fmt::Display for QosClassSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(QosClass::as_str).collect();
        f.write_str(&names.join("|"))
    }
}

/// Classes whose delay threshold the predicted delay meets.
pub fn classify_qos(predicted_delay_ms: f64) -> QosClassSet {
    QosClass::ALL
        .into_iter()
        .filter(|c| predicted_delay_ms <= c.delay_threshold_ms())
        .collect()
}

/// Class a service needs from an access point.
pub fn required_class(service: Service) -> QosClass {
    match service {
        Service::Voip => QosClass::Conversational,
        Service::Video => QosClass::Streaming,
        Service::Web => QosClass::Interactive,
    }
}

pub fn supports_service(qos: QosClassSet, service: Service) -> bool {
    qos.contains(required_class(service))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn delay_anchors() {
        assert_eq!(delay_curve(0.5).unwrap(), 50.0);
        assert_eq!(delay_curve(1.0).unwrap(), 600.0);
        assert_eq!(delay_curve(0.0).unwrap(), 50.0);
        // 50 * sqrt(12)
        assert!((delay_curve(0.75).unwrap() - 173.205).abs() < 1e-3);
        assert_eq!(
            delay_curve(1.01),
            Err(WifiError::UtilizationOutOfRange(1.01))
        );
        assert!(delay_curve(-0.1).is_err());
    }

    #[test]
    fn admission_rules() {
        let cap = BitRate::from_mbps(10.0);
        let mut ap = ApState::new(AccessPointId(0), cap);
        assert_eq!(ap.admit_flow(BitRate::from_mbps(1.0)), Admission::Accept);
        assert!((ap.utilization() - 0.1).abs() < 1e-12);

        let mut busy = ApState::new(AccessPointId(1), cap);
        busy.reserved = BitRate::from_mbps(9.5);
        assert_eq!(busy.admit_flow(BitRate::from_mbps(1.0)), Admission::Reject);
        assert_eq!(busy.reserved, BitRate::from_mbps(9.5));

        let mut exact = ApState::new(AccessPointId(2), cap);
        exact.reserved = BitRate::from_mbps(9.0);
        assert_eq!(exact.admit_flow(BitRate::from_mbps(1.0)), Admission::Accept);
        assert_eq!(exact.utilization(), 1.0);
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_qos(80.0), QosClassSet::all());
        let interactive: QosClassSet = [QosClass::Interactive, QosClass::Background]
            .into_iter()
            .collect();
        assert_eq!(classify_qos(300.0), interactive);
        let background: QosClassSet = [QosClass::Background].into_iter().collect();
        assert_eq!(classify_qos(700.0), background);
    }

    #[test]
    fn service_support() {
        let background: QosClassSet = [QosClass::Background].into_iter().collect();
        assert!(!supports_service(background, Service::Voip));
        assert!(supports_service(QosClassSet::all(), Service::Video));
        assert!(supports_service(classify_qos(300.0), Service::Web));
        assert!(!supports_service(classify_qos(300.0), Service::Video));
    }

    proptest! {
        #[test]
        fn delay_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(delay_curve(lo).unwrap() <= delay_curve(hi).unwrap());
        }

        #[test]
        fn classification_is_downward_closed_and_antitone(a in 0.0f64..1000.0, b in 0.0f64..1000.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(classify_qos(a).is_downward_closed());
            prop_assert!(classify_qos(hi).is_subset(classify_qos(lo)));
        }

        #[test]
        fn admission_never_exceeds_capacity(
            cap in 1u64..50_000_000,
            flows in proptest::collection::vec(1u64..5_000_000, 0..40),
        ) {
            let mut ap = ApState::new(AccessPointId(0), BitRate(cap));
            let mut admitted = Vec::new();
            for f in flows {
                if ap.admit_flow(BitRate(f)) == Admission::Accept {
                    admitted.push(f);
                }
                prop_assert!(ap.reserved.0 <= cap);
            }
            if let Some(&f) = admitted.first() {
                ap.release_flow(BitRate(f));
                prop_assert_eq!(ap.admit_flow(BitRate(f)), Admission::Accept);
            }
        }
    }
}
