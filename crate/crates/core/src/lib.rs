//! Energy-saving simulation of a cellular cluster overlaid with Wi-Fi
//! access points: base-station sectorization switching and powering down,
//! NIT-driven network selection, and IP flow mobility for offloading.

pub mod config;
pub mod energy;
pub mod events;
pub mod ids;
pub mod ifom;
pub mod mde;
pub mod network;
pub mod output;
pub mod rng;
pub mod sim;
pub mod topology;
pub mod traffic;
pub mod wifi;
