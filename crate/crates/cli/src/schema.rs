//! On-disk dataset schemas.
//!
//! Bundles are three (plus one optional) TOML documents: network, devices,
//! time series and scenario defaults. Every physical quantity carries an
//! explicit unit field and is converted to per-unit at load time; the
//! accepted unit spellings are deliberately small sets.
//!
//! `provenance` strings record which values come from the published
//! benchmark and which are synthetic reconstructions.

use serde::{Deserialize, Serialize};

pub const NETWORK_SCHEMA: &str = "gridtc-network/1";
pub const DEVICES_SCHEMA: &str = "gridtc-devices/1";
pub const TIMESERIES_SCHEMA: &str = "gridtc-timeseries/1";
pub const SCENARIO_SCHEMA: &str = "gridtc-scenario/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub schema: String,
    #[serde(default)]
    pub name: Option<String>,
    pub base: BaseSection,
    /// Node id of the slack (point of common coupling).
    pub slack: u32,
    #[serde(rename = "node", default)]
    pub nodes: Vec<NodeEntry>,
    #[serde(rename = "branch", default)]
    pub branches: Vec<BranchEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseSection {
    pub power: f64,
    /// "VA", "kVA" or "MVA".
    pub power_unit: String,
    /// Phase-to-neutral voltage base.
    pub voltage: f64,
    /// "V" or "kV".
    pub voltage_unit: String,
    pub v_nom: f64,
    /// Always "pu".
    pub v_nom_unit: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeEntry {
    pub id: u32,
    /// Present phases, e.g. "abc", "a", "bc".
    pub phases: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchEntry {
    pub from: u32,
    pub to: u32,
    /// Always "pu" (per-unit siemens on the system base).
    pub unit: String,
    /// 3x3 admittance, rectangular form.
    pub y_re: [[f64; 3]; 3],
    pub y_im: [[f64; 3]; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DevicesFile {
    pub schema: String,
    #[serde(rename = "load", default)]
    pub loads: Vec<LoadEntry>,
    #[serde(rename = "pv", default)]
    pub pv: Vec<PvEntry>,
    #[serde(rename = "wind", default)]
    pub wind: Vec<WindEntry>,
    #[serde(rename = "battery", default)]
    pub batteries: Vec<BatteryEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadEntry {
    pub node: u32,
    /// Peak apparent power magnitude is `peak / power_factor`.
    pub peak: f64,
    /// "W", "kW" or "pu" (active power at peak).
    pub unit: String,
    pub alpha: f64,
    #[serde(default = "default_pf")]
    pub power_factor: f64,
    #[serde(default = "default_split")]
    pub phase_split: [f64; 3],
    #[serde(default)]
    pub provenance: Option<String>,
}

fn default_pf() -> f64 {
    1.0
}

fn default_split() -> [f64; 3] {
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PvEntry {
    pub node: u32,
    /// Productivity: power per unit irradiance.
    pub rho: f64,
    /// "W_per_Wm2" or "pu_per_Wm2".
    pub rho_unit: String,
    pub s_max: f64,
    /// "VA", "kVA" or "pu".
    pub s_max_unit: String,
    #[serde(default)]
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindEntry {
    pub node: u32,
    pub p_nom: f64,
    pub s_max: f64,
    /// "W", "kW" or "pu"; applies to `p_nom` and `s_max`.
    pub power_unit: String,
    pub w_nom: f64,
    pub w_max: f64,
    /// Always "m/s".
    pub speed_unit: String,
    #[serde(default)]
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatteryEntry {
    pub node: u32,
    pub e_min: f64,
    pub e_max: f64,
    pub e_init: f64,
    /// "Wh", "kWh" or "puh".
    pub energy_unit: String,
    pub p_char_max: f64,
    pub p_disch_max: f64,
    pub s_max: f64,
    /// "W", "kW" or "pu".
    pub power_unit: String,
    pub loss_charge: LossCurveEntry,
    pub loss_discharge: LossCurveEntry,
    /// "per_W" (a in 1/W, b unitless, c in W) or "pu".
    pub loss_unit: String,
    #[serde(default)]
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossCurveEntry {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSeriesFile {
    pub schema: String,
    pub horizon: usize,
    pub dt: f64,
    /// Always "h".
    pub dt_unit: String,
    /// Demand multiplier per period (1.0 = peak).
    pub demand_scale: Vec<f64>,
    pub price: Vec<f64>,
    /// Always "$/kWh".
    pub price_unit: String,
    /// Either `irradiance` (with rho on each PV unit) or `pv_availability`
    /// (total available PV power); exactly one must be present.
    #[serde(default)]
    pub irradiance: Option<Vec<f64>>,
    #[serde(default)]
    pub irradiance_unit: Option<String>,
    #[serde(default)]
    pub pv_availability: Option<Vec<f64>>,
    /// "W" or "kW" when `pv_availability` is used.
    #[serde(default)]
    pub pv_availability_unit: Option<String>,
    pub wind_speed: Vec<f64>,
    /// Always "m/s".
    pub wind_speed_unit: String,
    #[serde(default)]
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub schema: String,
    /// 1 = surplus sale allowed, 2 = no export.
    #[serde(default)]
    pub case: Option<u8>,
    #[serde(default)]
    pub delta_v: Option<f64>,
    #[serde(default)]
    pub reserve_enabled: Option<bool>,
    #[serde(default)]
    pub reserve_tau: Option<f64>,
    /// Always "h" when present.
    #[serde(default)]
    pub reserve_tau_unit: Option<String>,
}
