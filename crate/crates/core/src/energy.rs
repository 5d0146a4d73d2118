//! Base station and access point power, energy accumulation, and savings
//! relative to the always-on tri-sectorized baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::ElementId;
use crate::topology::BsMode;

pub const SECTORS: f64 = 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("load fraction {0} outside [0, 1]")]
    LoadOutOfRange(f64),
    #[error("savings are undefined for zero baseline energy")]
    UndefinedSavings,
}

/// Affine per-sector power model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerModel {
    /// Static power per active sector.
    pub p0_w: f64,
    /// Load-dependent power per sector at full load.
    pub pmax_w: f64,
    /// Draw of a powered-down base station.
    pub sleep_w: f64,
    /// Access point power as a fraction of a fully loaded tri-sectorized BS.
    pub ap_fraction: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            p0_w: 130.0,
            pmax_w: 20.0,
            sleep_w: 0.0,
            ap_fraction: 0.01,
        }
    }
}

impl PowerModel {
    /// `load_fraction` is relative to the capacity of the given mode.
    pub fn bs_power(&self, mode: BsMode, load_fraction: f64) -> Result<f64, EnergyError> {
        if !(0.0..=1.0).contains(&load_fraction) {
            return Err(EnergyError::LoadOutOfRange(load_fraction));
        }
        let sector = self.p0_w + load_fraction * self.pmax_w;
        Ok(match mode {
            BsMode::TriSectorized => SECTORS * sector,
            BsMode::Omni => sector,
            BsMode::Off => self.sleep_w,
        })
    }

    pub fn ap_power(&self) -> f64 {
        self.ap_fraction * SECTORS * (self.p0_w + self.pmax_w)
    }
}

/// Cumulative energy in Wh of every element in a run and of its baseline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    pub scenario_wh: BTreeMap<ElementId, f64>,
    pub baseline_wh: BTreeMap<ElementId, f64>,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `power * dt` for every element of the scenario.
    pub fn accumulate<I>(&mut self, element_powers: I, dt_s: f64)
    where
        I: IntoIterator<Item = (ElementId, f64)>,
    {
        accumulate_into(&mut self.scenario_wh, element_powers, dt_s);
    }

    pub fn accumulate_baseline<I>(&mut self, element_powers: I, dt_s: f64)
    where
        I: IntoIterator<Item = (ElementId, f64)>,
    {
        accumulate_into(&mut self.baseline_wh, element_powers, dt_s);
    }

    pub fn cellular_wh(&self) -> f64 {
        sum_bs(&self.scenario_wh)
    }

    pub fn baseline_cellular_wh(&self) -> f64 {
        sum_bs(&self.baseline_wh)
    }

    pub fn wifi_wh(&self) -> f64 {
        self.scenario_wh
            .iter()
            .filter(|(k, _)| matches!(k, ElementId::Ap(_)))
            .map(|(_, v)| v)
            .sum()
    }

    /// Cellular savings in percent; access point energy is excluded.
    pub fn savings(&self) -> Result<f64, EnergyError> {
        let baseline = self.baseline_cellular_wh();
        if baseline <= 0.0 {
            return Err(EnergyError::UndefinedSavings);
        }
        Ok(100.0 * (1.0 - self.cellular_wh() / baseline))
    }
}

fn accumulate_into<I>(map: &mut BTreeMap<ElementId, f64>, element_powers: I, dt_s: f64)
where
    I: IntoIterator<Item = (ElementId, f64)>,
{
    for (element, watts) in element_powers {
        if watts == 0.0 {
            continue;
        }
        *map.entry(element).or_insert(0.0) += watts * dt_s / 3600.0;
    }
}

fn sum_bs(map: &BTreeMap<ElementId, f64>) -> f64 {
    map.iter()
        .filter(|(k, _)| matches!(k, ElementId::Bs(_)))
        .map(|(_, v)| v)
        .sum()
}
