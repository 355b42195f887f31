//! Device models: exponential loads, PV units, wind turbines, batteries.
//!
//! These are the exact (nonlinear) evaluations; the scheduler either bounds
//! them (PV, wind), relaxes them (battery losses) or linearizes them
//! (exponential loads, see [`crate::wirtinger`]). Powers are per-unit,
//! battery energy is per-unit-hours.

use num_complex::Complex64;
use thiserror::Error;

use crate::network::{Phase, ThreePhaseNetwork};

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("device references unknown node id {0}")]
    UnknownNode(u32),
    #[error("generator at node {0} requires all three phases")]
    GeneratorNeedsThreePhases(u32),
    #[error("load at node {node} targets inactive phase {phase}")]
    LoadOnInactivePhase { node: u32, phase: Phase },
    #[error("load phase split must be nonnegative and sum to 1, got {0:?}")]
    BadPhaseSplit([f64; 3]),
    #[error("load exponent must be finite, got {0}")]
    BadExponent(f64),
    #[error("time series length {got} does not match horizon {want}")]
    HorizonMismatch { got: usize, want: usize },
    #[error("negative irradiance {0}")]
    NegativeIrradiance(f64),
    #[error("negative power {0} passed to battery loss")]
    NegativePower(f64),
    #[error("pv productivity must be nonnegative and s_max positive")]
    BadPvParameters,
    #[error("wind turbine needs 0 < w_nom < w_max and p_nom <= s_max")]
    BadWindParameters,
    #[error("battery bounds must satisfy e_min <= e_init <= e_max")]
    BadEnergyBounds,
    #[error("battery quadratic loss coefficient `a` must be positive, `c` nonnegative")]
    BadLossCurve,
    #[error("prices must be positive")]
    NonPositivePrice,
    #[error("horizon must be at least 1")]
    EmptyHorizon,
}

/// Exponential (ZIP-exponent) load: `s = s_zip[t] * (|v|/v_nom)^alpha`,
/// split across phases by fixed weights.
#[derive(Debug, Clone)]
pub struct ExponentialLoad {
    pub node: u32,
    /// Voltage exponent: 0 constant power, 1 constant current, 2 constant impedance.
    pub alpha: f64,
    /// Per-period total complex power at nominal voltage, per-unit.
    pub s_zip: Vec<Complex64>,
    /// Fraction of `s_zip` on each phase; nonnegative, sums to 1.
    pub phase_split: [f64; 3],
}

impl ExponentialLoad {
    pub fn new(
        node: u32,
        alpha: f64,
        s_zip: Vec<Complex64>,
        phase_split: [f64; 3],
    ) -> Result<Self, DeviceError> {
        if !alpha.is_finite() {
            return Err(DeviceError::BadExponent(alpha));
        }
        let sum: f64 = phase_split.iter().sum();
        if phase_split.iter().any(|w| *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(DeviceError::BadPhaseSplit(phase_split));
        }
        Ok(ExponentialLoad { node, alpha, s_zip, phase_split })
    }

    /// Nominal complex power on one phase at period `t`.
    pub fn s_zip_phase(&self, phase: Phase, t: usize) -> Complex64 {
        self.s_zip[t] * self.phase_split[phase.index()]
    }
}

/// Exact exponential-load power on one phase at voltage `v`.
pub fn load_power_exact(
    load: &ExponentialLoad,
    phase: Phase,
    v: Complex64,
    v_nom: f64,
    t: usize,
) -> Complex64 {
    load.s_zip_phase(phase, t) * (v.norm() / v_nom).powf(load.alpha)
}

/// Photovoltaic unit behind a converter.
#[derive(Debug, Clone)]
pub struct PvUnit {
    pub node: u32,
    /// Productivity: per-unit power per unit of irradiance signal.
    pub rho: f64,
    /// Converter apparent-power limit, per-unit.
    pub s_max: f64,
}

impl PvUnit {
    pub fn new(node: u32, rho: f64, s_max: f64) -> Result<Self, DeviceError> {
        if rho < 0.0 || !(s_max > 0.0) {
            return Err(DeviceError::BadPvParameters);
        }
        Ok(PvUnit { node, rho, s_max })
    }
}

/// Available PV active power for irradiance `psi`. The scheduler treats this
/// as an upper bound, never an equality: converters may curtail.
pub fn pv_bound(pv: &PvUnit, psi: f64) -> Result<f64, DeviceError> {
    if psi < 0.0 {
        return Err(DeviceError::NegativeIrradiance(psi));
    }
    Ok(pv.rho * psi)
}

/// Wind turbine with the cubic power curve.
#[derive(Debug, Clone)]
pub struct WindTurbine {
    pub node: u32,
    /// Rated active power, per-unit.
    pub p_nom: f64,
    /// Rated wind speed, m/s.
    pub w_nom: f64,
    /// Cut-out wind speed, m/s.
    pub w_max: f64,
    /// Converter apparent-power limit, per-unit.
    pub s_max: f64,
}

impl WindTurbine {
    pub fn new(node: u32, p_nom: f64, w_nom: f64, w_max: f64, s_max: f64) -> Result<Self, DeviceError> {
        if !(0.0 < w_nom && w_nom < w_max) || p_nom > s_max || p_nom < 0.0 {
            return Err(DeviceError::BadWindParameters);
        }
        Ok(WindTurbine { node, p_nom, w_nom, w_max, s_max })
    }
}

/// Available wind active power at wind speed `w`: cubic below rated speed,
/// flat up to cut-out, zero beyond (discontinuous at cut-out).
pub fn wind_bound(wt: &WindTurbine, w: f64) -> f64 {
    if w < 0.0 {
        0.0
    } else if w <= wt.w_nom {
        wt.p_nom * (w / wt.w_nom).powi(3)
    } else if w <= wt.w_max {
        wt.p_nom
    } else {
        0.0
    }
}

/// Quadratic loss curve `a p^2 + b p + c` with `a > 0`.
#[derive(Debug, Clone, Copy)]
pub struct QuadLoss {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadLoss {
    pub fn eval(&self, p: f64) -> f64 {
        self.a * p * p + self.b * p + self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatteryMode {
    Charge,
    Discharge,
}

/// Battery energy storage with converter, quadratic conversion losses.
#[derive(Debug, Clone)]
pub struct Battery {
    pub node: u32,
    /// Energy bounds and initial state, per-unit-hours.
    pub e_min: f64,
    pub e_max: f64,
    pub e_init: f64,
    pub loss_char: QuadLoss,
    pub loss_disch: QuadLoss,
    /// Power limits per mode, per-unit.
    pub p_char_max: f64,
    pub p_disch_max: f64,
    /// Converter apparent-power limit, per-unit.
    pub s_max: f64,
}

impl Battery {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        node: u32,
        e_min: f64,
        e_max: f64,
        e_init: f64,
        loss_char: QuadLoss,
        loss_disch: QuadLoss,
        p_char_max: f64,
        p_disch_max: f64,
        s_max: f64,
    ) -> Result<Self, DeviceError> {
        if !(e_min <= e_init && e_init <= e_max) {
            return Err(DeviceError::BadEnergyBounds);
        }
        if !(loss_char.a > 0.0 && loss_disch.a > 0.0 && loss_char.c >= 0.0 && loss_disch.c >= 0.0) {
            return Err(DeviceError::BadLossCurve);
        }
        Ok(Battery {
            node,
            e_min,
            e_max,
            e_init,
            loss_char,
            loss_disch,
            p_char_max,
            p_disch_max,
            s_max,
        })
    }
}

/// Conversion loss at power `p >= 0` in the given mode.
pub fn battery_loss(bat: &Battery, p: f64, mode: BatteryMode) -> Result<f64, DeviceError> {
    if p < 0.0 {
        return Err(DeviceError::NegativePower(p));
    }
    let curve = match mode {
        BatteryMode::Charge => &bat.loss_char,
        BatteryMode::Discharge => &bat.loss_disch,
    };
    Ok(curve.eval(p))
}

/// Hourly input signals for one scheduling horizon.
#[derive(Debug, Clone)]
pub struct TimeSeriesSet {
    pub horizon: usize,
    pub dt_hours: f64,
    /// Demand scaling per period (1.0 = peak).
    pub demand_scale: Vec<f64>,
    /// Energy price per period, $/kWh.
    pub price: Vec<f64>,
    /// Irradiance-like PV signal per period (pv_bound = rho * psi).
    pub irradiance: Vec<f64>,
    /// Wind speed per period, m/s.
    pub wind_speed: Vec<f64>,
}

impl TimeSeriesSet {
    pub fn new(
        dt_hours: f64,
        demand_scale: Vec<f64>,
        price: Vec<f64>,
        irradiance: Vec<f64>,
        wind_speed: Vec<f64>,
    ) -> Result<Self, DeviceError> {
        let horizon = demand_scale.len();
        if horizon == 0 {
            return Err(DeviceError::EmptyHorizon);
        }
        for (name, v) in [("price", &price), ("irradiance", &irradiance), ("wind", &wind_speed)] {
            if v.len() != horizon {
                let _ = name;
                return Err(DeviceError::HorizonMismatch { got: v.len(), want: horizon });
            }
        }
        if price.iter().any(|c| !(*c > 0.0)) {
            return Err(DeviceError::NonPositivePrice);
        }
        Ok(TimeSeriesSet { horizon, dt_hours, demand_scale, price, irradiance, wind_speed })
    }
}

/// All devices attached to one network.
#[derive(Debug, Clone, Default)]
pub struct DeviceFleet {
    pub loads: Vec<ExponentialLoad>,
    pub pv_units: Vec<PvUnit>,
    pub wind_turbines: Vec<WindTurbine>,
    pub batteries: Vec<Battery>,
}

impl DeviceFleet {
    /// Check node references and phase availability against a network.
    ///
    /// Generators (PV, wind, batteries) inject balanced three-phase power and
    /// need a fully three-phase bus; loads may sit on any active phase.
    pub fn validate(&self, net: &ThreePhaseNetwork, horizon: usize) -> Result<(), DeviceError> {
        let pos = |id: u32| net.node_pos(id).ok_or(DeviceError::UnknownNode(id));
        for load in &self.loads {
            let p = pos(load.node)?;
            if load.s_zip.len() != horizon {
                return Err(DeviceError::HorizonMismatch { got: load.s_zip.len(), want: horizon });
            }
            for phase in Phase::ALL {
                if load.phase_split[phase.index()] > 0.0 && net.n_index(p, phase).is_none() {
                    return Err(DeviceError::LoadOnInactivePhase { node: load.node, phase });
                }
            }
        }
        for id in self
            .pv_units
            .iter()
            .map(|d| d.node)
            .chain(self.wind_turbines.iter().map(|d| d.node))
            .chain(self.batteries.iter().map(|d| d.node))
        {
            let p = pos(id)?;
            if Phase::ALL.iter().any(|&ph| net.n_index(p, ph).is_none()) {
                return Err(DeviceError::GeneratorNeedsThreePhases(id));
            }
        }
        Ok(())
    }
}
