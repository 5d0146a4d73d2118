//! Identifier newtypes shared by every subsystem.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// Base station id. The cluster center is `BsId(0)`, ring cell `k` is `BsId(k + 1)`.
    BsId,
    "bs"
);
id_type!(AccessPointId, "ap");
id_type!(UserId, "u");
id_type!(FlowId, "f");

/// Anything that can carry traffic and draw power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ElementId {
    Bs(BsId),
    Ap(AccessPointId),
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementId::Bs(id) => id.fmt(f),
            ElementId::Ap(id) => id.fmt(f),
        }
    }
}

/// 48-bit IEEE MAC address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    /// Locally administered unicast address derived from an access point index.
    pub fn for_access_point(id: AccessPointId) -> Self {
        let b = id.0.to_be_bytes();
        MacAddr([0x02, 0x00, b[0], b[1], b[2], b[3]])
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            m[0], m[1], m[2], m[3], m[4], m[5]
        )
    }
}

/// Bit rate in bits per second.
///
/// Integer arithmetic keeps capacity checks exact: a flow that exactly fills
/// an access point is admitted regardless of summation order.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct BitRate(pub u64);

impl BitRate {
    pub const ZERO: BitRate = BitRate(0);

    pub fn from_kbps(kbps: f64) -> Self {
        BitRate((kbps * 1e3).round().max(0.0) as u64)
    }

    pub fn from_mbps(mbps: f64) -> Self {
        BitRate((mbps * 1e6).round().max(0.0) as u64)
    }

    pub fn mbps(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: BitRate) -> BitRate {
        BitRate(self.0.saturating_sub(other.0))
    }
}

impl std::ops::Add for BitRate {
    type Output = BitRate;
    fn add(self, rhs: BitRate) -> BitRate {
        BitRate(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for BitRate {
    fn add_assign(&mut self, rhs: BitRate) {
        self.0 += rhs.0;
    }
}

impl std::ops::SubAssign for BitRate {
    fn sub_assign(&mut self, rhs: BitRate) {
        self.0 -= rhs.0;
    }
}

impl std::iter::Sum for BitRate {
    fn sum<I: Iterator<Item = BitRate>>(iter: I) -> BitRate {
        iter.fold(BitRate::ZERO, |a, b| a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voip_rate_converts_to_mbps() {
        assert_eq!(BitRate::from_kbps(12.2), BitRate(12_200));
        assert!((BitRate::from_kbps(12.2).mbps() - 0.0122).abs() < 1e-15);
    }

    #[test]
    fn mac_display() {
        let mac = MacAddr::for_access_point(AccessPointId(0x0102));
        assert_eq!(mac.to_string(), "02:00:00:00:01:02");
    }
}
