//! Scenario configuration: a sectioned key-value file (TOML), defaults for
//! every absent key, and range validation with key and line diagnostics.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{PowerModel, SECTORS};
use crate::mde::nit::SelectionWindow;
use crate::mde::{InvalidSetting, MdeConfig, Thresholds};
use crate::topology::CLUSTER_CELLS;
use crate::traffic::{diurnal_shape, ServiceModels, TrafficProfile, HOURS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub cells: usize,
    pub cell_radius_m: f64,
    pub min_distance_m: f64,
    /// Capacity of one sector; tri-sectorized cells have three.
    pub sector_capacity_mbps: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            cells: CLUSTER_CELLS,
            cell_radius_m: 300.0,
            min_distance_m: 20.0,
            sector_capacity_mbps: DEFAULT_SECTOR_CAPACITY_MBPS,
        }
    }
}

pub const DEFAULT_SECTOR_CAPACITY_MBPS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WifiConfig {
    /// Access points per square kilometre.
    pub density: f64,
    /// Access point capacity in Mbps.
    pub beta: f64,
    pub coverage_radius_m: f64,
    pub p_t_day: f64,
    pub p_t_night: f64,
    pub day_start_h: f64,
    pub day_end_h: f64,
    /// Busy-hour mean of the Wi-Fi network's own users per access point.
    pub native_busy_hour_users: f64,
}

impl Default for WifiConfig {
    fn default() -> Self {
        WifiConfig {
            density: 5.0,
            beta: 10.0,
            coverage_radius_m: 50.0,
            p_t_day: 0.65,
            p_t_night: 0.85,
            day_start_h: 9.0,
            day_end_h: 18.0,
            native_busy_hour_users: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    /// Busy-hour mean of active users per cell.
    pub busy_hour_users: f64,
    pub include_video: bool,
    /// 24 hourly values; normalized to their maximum, then scaled by
    /// `busy_hour_users`. Defaults to the built-in day-night shape.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cellular_profile: Option<Vec<f64>>,
    /// Like `cellular_profile`, scaled by `wifi.native_busy_hour_users`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wifi_profile: Option<Vec<f64>>,
    pub voip: crate::traffic::OnOffParams,
    pub web: crate::traffic::OnOffParams,
    pub video: crate::traffic::OnOffParams,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        let m = ServiceModels::default();
        TrafficConfig {
            busy_hour_users: 40.0,
            include_video: true,
            cellular_profile: None,
            wifi_profile: None,
            voip: m.voip,
            web: m.web,
            video: m.video,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowFallback {
    /// Flows bound to a deregistered care-of address follow the default
    /// binding.
    DefaultBinding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IfomConfig {
    pub auth_delay_ms: f64,
    pub binding_lifetime_s: f64,
    pub deregistered_flow_fallback: FlowFallback,
}

impl Default for IfomConfig {
    fn default() -> Self {
        IfomConfig {
            auth_delay_ms: 50.0,
            binding_lifetime_s: 3600.0,
            deregistered_flow_fallback: FlowFallback::DefaultBinding,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mechanisms {
    /// Sectorization switching.
    pub ss: bool,
    /// Powering down.
    pub pd: bool,
    /// NIT-driven network selection.
    pub mde2: bool,
}

impl Default for Mechanisms {
    fn default() -> Self {
        Mechanisms {
            ss: true,
            pd: true,
            mde2: true,
        }
    }
}

impl Mechanisms {
    pub const NONE: Mechanisms = Mechanisms {
        ss: false,
        pd: false,
        mde2: false,
    };

    /// Curve name of the combination, e.g. `ss_pd` or `ss_mde2`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.ss {
            parts.push("ss");
        }
        if self.pd {
            parts.push("pd");
        }
        if self.mde2 {
            parts.push("mde2");
        }
        match parts.len() {
            0 => "none".into(),
            1 if !self.mde2 => format!("{}_only", parts[0]),
            _ => parts.join("_"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt_s: f64,
    pub horizon_s: f64,
    pub seed: u64,
    /// Paired realizations per sweep point.
    pub replicas: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt_s: 60.0,
            horizon_s: 86_400.0,
            seed: 1,
            replicas: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub events: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            events: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub geometry: GeometryConfig,
    pub wifi: WifiConfig,
    pub traffic: TrafficConfig,
    pub power: PowerModel,
    pub mde: MdeConfig,
    pub ifom: IfomConfig,
    pub mechanisms: Mechanisms,
    pub sim: SimConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        message: String,
    },
    #[error("invalid {key}{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Invalid {
        key: String,
        line: Option<usize>,
        message: String,
    },
}

impl ConfigError {
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

fn check(ok: bool, key: &'static str, message: &str) -> Result<(), InvalidSetting> {
    if ok {
        Ok(())
    } else {
        Err(InvalidSetting {
            key,
            message: message.to_string(),
        })
    }
}

fn profile_ok(p: &Option<Vec<f64>>) -> bool {
    match p {
        None => true,
        Some(v) => {
            v.len() == HOURS
                && v.iter().all(|x| x.is_finite() && *x >= 0.0)
                && v.iter().any(|x| *x > 0.0)
        }
    }
}

fn on_off_ok(p: &crate::traffic::OnOffParams) -> bool {
    [p.mean_on_s, p.mean_off_s, p.on_rate_kbps]
        .iter()
        .all(|x| x.is_finite() && *x > 0.0)
}

fn is_multiple(x: f64, of: f64) -> bool {
    let r = x / of;
    (r - r.round()).abs() < 1e-9 && r.round() >= 1.0
}

impl ScenarioConfig {
    pub fn from_toml_str(source: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(source).map_err(|e| ConfigError::Parse {
            line: e.span().map(|s| line_of_offset(source, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate().map_err(|e| ConfigError::Invalid {
            line: find_key_line(source, e.key),
            key: e.key.to_string(),
            message: e.message,
        })?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String, toml::ser::Error> {
        toml::to_string(self)
    }

    pub fn service_models(&self) -> ServiceModels {
        ServiceModels {
            voip: self.traffic.voip,
            web: self.traffic.web,
            video: self.traffic.video,
        }
    }

    pub fn profile(&self) -> TrafficProfile {
        let scale = |shape: Option<&Vec<f64>>, shift: usize, peak: f64| -> Vec<f64> {
            let raw: Vec<f64> = match shape {
                Some(v) => v.clone(),
                None => (0..HOURS).map(|h| diurnal_shape(h, shift)).collect(),
            };
            let max = raw.iter().cloned().fold(0.0, f64::max);
            raw.iter()
                .map(|x| if max > 0.0 { x / max * peak } else { 0.0 })
                .collect()
        };
        TrafficProfile {
            cellular: scale(
                self.traffic.cellular_profile.as_ref(),
                0,
                self.traffic.busy_hour_users,
            ),
            wifi: scale(
                self.traffic.wifi_profile.as_ref(),
                2,
                self.wifi.native_busy_hour_users,
            ),
        }
    }

    pub fn tri_capacity_mbps(&self) -> f64 {
        SECTORS * self.geometry.sector_capacity_mbps
    }

    /// Busy-hour demand of a cell as a fraction of tri-sectorized capacity,
    /// capped at full load.
    pub fn busy_hour_load(&self) -> f64 {
        let demand = self.profile().busy_hour_load()
            * self
                .service_models()
                .mean_user_rate_mbps(self.traffic.include_video);
        (demand / self.tri_capacity_mbps()).min(1.0)
    }

    pub fn thresholds(&self) -> Result<Thresholds, InvalidSetting> {
        self.mde
            .thresholds(self.busy_hour_load(), self.mechanisms.pd)
    }

    pub fn selection_window(&self) -> SelectionWindow {
        SelectionWindow {
            p_t_day: self.wifi.p_t_day,
            p_t_night: self.wifi.p_t_night,
            day_start_h: self.wifi.day_start_h,
            day_end_h: self.wifi.day_end_h,
        }
    }

    pub fn steps(&self) -> usize {
        (self.sim.horizon_s / self.sim.dt_s).round() as usize
    }

    pub fn validate(&self) -> Result<(), InvalidSetting> {
        let g = &self.geometry;
        check(
            g.cells == CLUSTER_CELLS,
            "geometry.cells",
            "only 7-cell clusters are supported",
        )?;
        check(
            g.cell_radius_m.is_finite() && g.cell_radius_m > 0.0,
            "geometry.cell_radius_m",
            "must be positive",
        )?;
        check(
            g.min_distance_m >= 0.0 && g.min_distance_m < g.cell_radius_m,
            "geometry.min_distance_m",
            "must be in [0, cell_radius_m)",
        )?;
        check(
            g.sector_capacity_mbps.is_finite() && g.sector_capacity_mbps > 0.0,
            "geometry.sector_capacity_mbps",
            "must be positive",
        )?;
        let w = &self.wifi;
        check(
            w.density.is_finite() && w.density >= 0.0,
            "wifi.density",
            "must be non-negative",
        )?;
        check(
            w.beta.is_finite() && w.beta > 0.0,
            "wifi.beta",
            "must be positive",
        )?;
        check(
            w.coverage_radius_m.is_finite() && w.coverage_radius_m > 0.0,
            "wifi.coverage_radius_m",
            "must be positive",
        )?;
        check(
            (0.0..=1.0).contains(&w.p_t_day),
            "wifi.p_t_day",
            "must be a probability",
        )?;
        check(
            (0.0..=1.0).contains(&w.p_t_night),
            "wifi.p_t_night",
            "must be a probability",
        )?;
        check(
            (0.0..24.0).contains(&w.day_start_h),
            "wifi.day_start_h",
            "must be in [0, 24)",
        )?;
        check(
            w.day_end_h > w.day_start_h && w.day_end_h <= 24.0,
            "wifi.day_end_h",
            "must be in (day_start_h, 24]",
        )?;
        check(
            w.native_busy_hour_users.is_finite() && w.native_busy_hour_users >= 0.0,
            "wifi.native_busy_hour_users",
            "must be non-negative",
        )?;
        let t = &self.traffic;
        check(
            t.busy_hour_users.is_finite() && t.busy_hour_users >= 0.0,
            "traffic.busy_hour_users",
            "must be non-negative",
        )?;
        check(
            profile_ok(&t.cellular_profile),
            "traffic.cellular_profile",
            "needs 24 non-negative values, not all zero",
        )?;
        check(
            profile_ok(&t.wifi_profile),
            "traffic.wifi_profile",
            "needs 24 non-negative values, not all zero",
        )?;
        check(
            on_off_ok(&t.voip),
            "traffic.voip",
            "durations and rate must be positive",
        )?;
        check(
            on_off_ok(&t.web),
            "traffic.web",
            "durations and rate must be positive",
        )?;
        check(
            on_off_ok(&t.video),
            "traffic.video",
            "durations and rate must be positive",
        )?;
        let p = &self.power;
        check(
            p.p0_w.is_finite() && p.p0_w >= 0.0,
            "power.p0_w",
            "must be non-negative",
        )?;
        check(
            p.pmax_w.is_finite() && p.pmax_w >= 0.0,
            "power.pmax_w",
            "must be non-negative",
        )?;
        check(
            p.sleep_w.is_finite() && p.sleep_w >= 0.0,
            "power.sleep_w",
            "must be non-negative",
        )?;
        check(
            (0.0..=1.0).contains(&p.ap_fraction),
            "power.ap_fraction",
            "must be in [0, 1]",
        )?;
        let s = &self.sim;
        check(
            s.dt_s.is_finite() && s.dt_s > 0.0,
            "sim.dt_s",
            "must be positive",
        )?;
        check(
            s.horizon_s.is_finite() && is_multiple(s.horizon_s, s.dt_s),
            "sim.horizon_s",
            "must be a positive multiple of dt_s",
        )?;
        check(s.replicas >= 1, "sim.replicas", "must be at least 1")?;
        let i = &self.ifom;
        check(
            i.auth_delay_ms.is_finite() && i.auth_delay_ms >= 0.0,
            "ifom.auth_delay_ms",
            "must be non-negative",
        )?;
        check(
            i.binding_lifetime_s.is_finite() && i.binding_lifetime_s > 0.0,
            "ifom.binding_lifetime_s",
            "must be positive",
        )?;
        self.thresholds()?;
        check(
            is_multiple(self.mde.monitoring_period_s, s.dt_s),
            "mde.monitoring_period_s",
            "must be a multiple of sim.dt_s",
        )?;
        check(
            is_multiple(self.mde.nit_period_s, s.dt_s),
            "mde.nit_period_s",
            "must be a multiple of sim.dt_s",
        )?;
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let source = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::from_toml_str(&source)
}

pub fn write_config(cfg: &ScenarioConfig, path: &Path) -> std::io::Result<()> {
    let text = cfg
        .to_toml_string()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    std::fs::write(path, text)
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

/// Line (1-based) where the dotted `section.key` is set, if present.
pub fn find_key_line(source: &str, dotted: &str) -> Option<usize> {
    let (section, key) = dotted.rsplit_once('.')?;
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// Variables a sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    MeanUsers,
    WifiDensity,
    Beta,
    NitSize,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::MeanUsers => "mean_users",
            SweepVariable::WifiDensity => "wifi_density",
            SweepVariable::Beta => "beta",
            SweepVariable::NitSize => "nit_size",
        }
    }

    /// Copy of `cfg` with the variable set to `value`.
    pub fn apply(self, cfg: &ScenarioConfig, value: f64) -> ScenarioConfig {
        let mut c = cfg.clone();
        match self {
            SweepVariable::MeanUsers => c.traffic.busy_hour_users = value,
            SweepVariable::WifiDensity => c.wifi.density = value,
            SweepVariable::Beta => c.wifi.beta = value,
            SweepVariable::NitSize => c.mde.nit_size = value.max(0.0).round() as usize,
        }
        c
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepVariable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean_users" => Ok(SweepVariable::MeanUsers),
            "wifi_density" => Ok(SweepVariable::WifiDensity),
            "beta" => Ok(SweepVariable::Beta),
            "nit_size" => Ok(SweepVariable::NitSize),
            other => Err(format!(
                "unknown sweep variable '{other}' (expected mean_users, wifi_density, beta or nit_size)"
            )),
        }
    }
}

/// `VAR=v1,v2,...`
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl FromStr for SweepSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (var, list) = s
            .split_once('=')
            .ok_or_else(|| format!("expected VAR=v1,v2,... but got '{s}'"))?;
        let variable: SweepVariable = var.trim().parse()?;
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite() && *x >= 0.0)
                    .ok_or_else(|| format!("'{}' is not a non-negative number", v.trim()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err("sweep needs at least one value".into());
        }
        Ok(SweepSpec { variable, values })
    }
}
