//! Bundle loading: parse the TOML documents, validate units and cross-file
//! references, convert everything to per-unit and hand back ready-to-solve
//! model objects.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use num_complex::Complex64;
use thiserror::Error;

use gridtc_core::{
    Battery, DeviceFleet, ExponentialLoad, HyperBranch, Hypernode, PvUnit, QuadLoss,
    ScenarioOptions, ThreePhaseNetwork, TimeSeriesSet, WindTurbine,
};

use crate::schema::{
    BatteryEntry, DevicesFile, LoadEntry, NetworkFile, PvEntry, ScenarioFile, TimeSeriesFile,
    WindEntry, DEVICES_SCHEMA, NETWORK_SCHEMA, SCENARIO_SCHEMA, TIMESERIES_SCHEMA,
};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: expected schema `{want}`, found `{got}`")]
    WrongSchema { path: PathBuf, want: &'static str, got: String },
    #[error("{path}: field `{field}` has unsupported unit `{got}` (allowed: {allowed})")]
    BadUnit { path: PathBuf, field: String, got: String, allowed: &'static str },
    #[error("{path}: {entity} references node {node}, which is not in the network")]
    DanglingNode { path: PathBuf, entity: String, node: u32 },
    #[error("{path}: series `{field}` has {got} entries, horizon is {want}")]
    HorizonMismatch { path: PathBuf, field: String, got: usize, want: usize },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("network definition rejected: {0}")]
    Network(#[from] gridtc_core::NetworkError),
    #[error("device definition rejected: {0}")]
    Device(#[from] gridtc_core::DeviceError),
}

/// Paths of one bundle on disk.
#[derive(Debug, Clone)]
pub struct BundlePaths {
    pub network: PathBuf,
    pub devices: PathBuf,
    pub timeseries: PathBuf,
    pub scenario: Option<PathBuf>,
}

impl BundlePaths {
    /// Conventional file names inside a bundle directory.
    pub fn in_dir(dir: &Path) -> Self {
        let scenario = dir.join("scenario.toml");
        BundlePaths {
            network: dir.join("network.toml"),
            devices: dir.join("devices.toml"),
            timeseries: dir.join("timeseries.toml"),
            scenario: scenario.exists().then_some(scenario),
        }
    }
}

/// A fully validated, per-unit problem description.
#[derive(Debug, Clone)]
pub struct CaseBundle {
    pub name: String,
    pub network: ThreePhaseNetwork,
    pub fleet: DeviceFleet,
    pub series: TimeSeriesSet,
    pub scenario: ScenarioOptions,
}

/// Bundles compiled into the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Cigre,
    Ieee123,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        match name {
            "cigre" => Some(Builtin::Cigre),
            "ieee123" => Some(Builtin::Ieee123),
            _ => None,
        }
    }

    fn sources(self) -> [(&'static str, &'static str); 4] {
        match self {
            Builtin::Cigre => [
                ("cigre/network.toml", include_str!("../data/cigre/network.toml")),
                ("cigre/devices.toml", include_str!("../data/cigre/devices.toml")),
                ("cigre/timeseries.toml", include_str!("../data/cigre/timeseries.toml")),
                ("cigre/scenario.toml", include_str!("../data/cigre/scenario.toml")),
            ],
            Builtin::Ieee123 => [
                ("ieee123/network.toml", include_str!("../data/ieee123/network.toml")),
                ("ieee123/devices.toml", include_str!("../data/ieee123/devices.toml")),
                ("ieee123/timeseries.toml", include_str!("../data/ieee123/timeseries.toml")),
                ("ieee123/scenario.toml", include_str!("../data/ieee123/scenario.toml")),
            ],
        }
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Builtin::Cigre => write!(f, "cigre"),
            Builtin::Ieee123 => write!(f, "ieee123"),
        }
    }
}

/// Load a builtin bundle.
pub fn load_builtin(which: Builtin) -> Result<CaseBundle, LoadError> {
    let [net, dev, ts, sc] = which.sources();
    load_from_strings(net, dev, ts, Some(sc))
}

/// Load a bundle from files on disk.
pub fn load_bundle(paths: &BundlePaths) -> Result<CaseBundle, LoadError> {
    let read = |path: &Path| -> Result<String, LoadError> {
        std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.into(), source })
    };
    let net = read(&paths.network)?;
    let dev = read(&paths.devices)?;
    let ts = read(&paths.timeseries)?;
    let sc = match &paths.scenario {
        Some(p) => Some((p.to_string_lossy().into_owned(), read(p)?)),
        None => None,
    };
    load_from_strings(
        (&paths.network.to_string_lossy(), &net),
        (&paths.devices.to_string_lossy(), &dev),
        (&paths.timeseries.to_string_lossy(), &ts),
        sc.as_ref().map(|(p, s)| (p.as_str(), s.as_str())),
    )
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &str, text: &str) -> Result<T, LoadError> {
    toml::from_str(text).map_err(|e| LoadError::Parse {
        path: path.into(),
        message: e.to_string().replace('\n', " "),
    })
}

fn check_schema(path: &str, got: &str, want: &'static str) -> Result<(), LoadError> {
    if got != want {
        return Err(LoadError::WrongSchema { path: path.into(), want, got: got.to_string() });
    }
    Ok(())
}

fn check_unit(path: &str, field: &str, got: &str, allowed: &'static [&'static str]) -> Result<f64, LoadError> {
    // returns the multiplier to the canonical (first) unit
    let scale: &[f64] = match allowed {
        ["VA", "kVA", "MVA"] => &[1.0, 1e3, 1e6],
        ["V", "kV"] => &[1.0, 1e3],
        ["W", "kW"] => &[1.0, 1e3],
        _ => &[1.0, 1.0, 1.0],
    };
    for (i, u) in allowed.iter().enumerate() {
        if got == *u {
            return Ok(*scale.get(i).unwrap_or(&1.0));
        }
    }
    Err(LoadError::BadUnit {
        path: path.into(),
        field: field.into(),
        got: got.into(),
        allowed: Box::leak(allowed.join(", ").into_boxed_str()),
    })
}

fn load_from_strings(
    network_src: (&str, &str),
    devices_src: (&str, &str),
    timeseries_src: (&str, &str),
    scenario_src: Option<(&str, &str)>,
) -> Result<CaseBundle, LoadError> {
    let (net_path, net_text) = network_src;
    let (dev_path, dev_text) = devices_src;
    let (ts_path, ts_text) = timeseries_src;

    let net_file: NetworkFile = parse_toml(net_path, net_text)?;
    check_schema(net_path, &net_file.schema, NETWORK_SCHEMA)?;
    let dev_file: DevicesFile = parse_toml(dev_path, dev_text)?;
    check_schema(dev_path, &dev_file.schema, DEVICES_SCHEMA)?;
    let ts_file: TimeSeriesFile = parse_toml(ts_path, ts_text)?;
    check_schema(ts_path, &ts_file.schema, TIMESERIES_SCHEMA)?;
    let scenario_file: Option<ScenarioFile> = match scenario_src {
        Some((p, text)) => {
            let sf: ScenarioFile = parse_toml(p, text)?;
            check_schema(p, &sf.schema, SCENARIO_SCHEMA)?;
            Some(sf)
        }
        None => None,
    };

    let network = build_network(net_path, &net_file)?;
    let series = build_series(ts_path, &ts_file, &dev_file)?;
    let fleet = build_fleet(dev_path, &dev_file, &network, &series)?;
    fleet.validate(&network, series.horizon)?;

    let mut scenario = ScenarioOptions::default();
    if let Some(sf) = scenario_file {
        if let Some(case) = sf.case {
            scenario.surplus_allowed = match case {
                1 => true,
                2 => false,
                other => {
                    return Err(LoadError::Invalid {
                        path: net_path.into(),
                        message: format!("scenario case must be 1 or 2, got {other}"),
                    })
                }
            };
        }
        if let Some(d) = sf.delta_v {
            scenario.delta_v = d;
        }
        if let Some(r) = sf.reserve_enabled {
            scenario.reserve_enabled = r;
        }
        if let Some(tau) = sf.reserve_tau {
            if let Some(u) = &sf.reserve_tau_unit {
                check_unit(ts_path, "reserve_tau", u, &["h"])?;
            }
            scenario.reserve_tau_hours = tau;
        }
    }

    Ok(CaseBundle {
        name: net_file.name.unwrap_or_else(|| "unnamed".into()),
        network,
        fleet,
        series,
        scenario,
    })
}

fn build_network(path: &str, file: &NetworkFile) -> Result<ThreePhaseNetwork, LoadError> {
    let p_scale = check_unit(path, "base.power", &file.base.power_unit, &["VA", "kVA", "MVA"])?;
    let v_scale = check_unit(path, "base.voltage", &file.base.voltage_unit, &["V", "kV"])?;
    check_unit(path, "base.v_nom", &file.base.v_nom_unit, &["pu"])?;
    let base_power = file.base.power * p_scale;
    let base_voltage = file.base.voltage * v_scale;

    let mut nodes = Vec::with_capacity(file.nodes.len());
    let mut slack_seen = false;
    for n in &file.nodes {
        let mut phases = [false; 3];
        for ch in n.phases.chars() {
            match ch {
                'a' => phases[0] = true,
                'b' => phases[1] = true,
                'c' => phases[2] = true,
                other => {
                    return Err(LoadError::Invalid {
                        path: path.into(),
                        message: format!("node {}: unknown phase letter `{other}`", n.id),
                    })
                }
            }
        }
        let node = Hypernode { id: n.id, phases };
        if n.id == file.slack {
            slack_seen = true;
            nodes.insert(0, node);
        } else {
            nodes.push(node);
        }
    }
    if !slack_seen {
        return Err(LoadError::DanglingNode {
            path: path.into(),
            entity: "slack".into(),
            node: file.slack,
        });
    }

    let mut branches = Vec::with_capacity(file.branches.len());
    for (i, b) in file.branches.iter().enumerate() {
        check_unit(path, &format!("branch[{i}].unit"), &b.unit, &["pu"])?;
        let mut m = Matrix3::zeros();
        for p in 0..3 {
            for q in 0..3 {
                m[(p, q)] = Complex64::new(b.y_re[p][q], b.y_im[p][q]);
            }
        }
        branches.push(HyperBranch::new(b.from, b.to, m));
    }

    Ok(ThreePhaseNetwork::new(
        nodes,
        branches,
        base_power,
        base_voltage,
        file.base.v_nom,
    )?)
}

fn build_series(
    path: &str,
    file: &TimeSeriesFile,
    devices: &DevicesFile,
) -> Result<TimeSeriesSet, LoadError> {
    check_unit(path, "dt", &file.dt_unit, &["h"])?;
    check_unit(path, "price", &file.price_unit, &["$/kWh"])?;
    check_unit(path, "wind_speed", &file.wind_speed_unit, &["m/s"])?;

    let want = file.horizon;
    let check_len = |field: &str, len: usize| -> Result<(), LoadError> {
        if len != want {
            return Err(LoadError::HorizonMismatch {
                path: path.into(),
                field: field.into(),
                got: len,
                want,
            });
        }
        Ok(())
    };
    check_len("demand_scale", file.demand_scale.len())?;
    check_len("price", file.price.len())?;
    check_len("wind_speed", file.wind_speed.len())?;

    // The PV signal may arrive as irradiance directly, or as total available
    // power to be divided by the fleet's summed productivity.
    let irradiance = match (&file.irradiance, &file.pv_availability) {
        (Some(ir), None) => {
            if let Some(u) = &file.irradiance_unit {
                check_unit(path, "irradiance", u, &["W/m2"])?;
            }
            check_len("irradiance", ir.len())?;
            ir.clone()
        }
        (None, Some(avail)) => {
            let unit = file.pv_availability_unit.as_deref().unwrap_or("W");
            let scale = check_unit(path, "pv_availability", unit, &["W", "kW"])?;
            check_len("pv_availability", avail.len())?;
            let rho_total: f64 = devices.pv.iter().map(|p| p.rho).sum();
            if rho_total <= 0.0 {
                return Err(LoadError::Invalid {
                    path: path.into(),
                    message: "pv_availability given but the fleet has no PV productivity".into(),
                });
            }
            avail.iter().map(|a| a * scale / rho_total).collect()
        }
        (Some(_), Some(_)) => {
            return Err(LoadError::Invalid {
                path: path.into(),
                message: "give either `irradiance` or `pv_availability`, not both".into(),
            })
        }
        (None, None) => {
            if devices.pv.is_empty() {
                vec![0.0; want]
            } else {
                return Err(LoadError::Invalid {
                    path: path.into(),
                    message: "PV units present but no irradiance / pv_availability series".into(),
                });
            }
        }
    };

    Ok(TimeSeriesSet::new(
        file.dt,
        file.demand_scale.clone(),
        file.price.clone(),
        irradiance,
        file.wind_speed.clone(),
    )?)
}

fn build_fleet(
    path: &str,
    file: &DevicesFile,
    network: &ThreePhaseNetwork,
    series: &TimeSeriesSet,
) -> Result<DeviceFleet, LoadError> {
    let s_base = network.base_power;
    let require_node = |entity: String, node: u32| -> Result<(), LoadError> {
        if network.node_pos(node).is_none() {
            return Err(LoadError::DanglingNode { path: path.into(), entity, node });
        }
        Ok(())
    };

    let mut loads = Vec::with_capacity(file.loads.len());
    for (i, l) in file.loads.iter().enumerate() {
        require_node(format!("load[{i}]"), l.node)?;
        loads.push(build_load(path, i, l, s_base, series)?);
    }

    let mut pv_units = Vec::with_capacity(file.pv.len());
    for (i, p) in file.pv.iter().enumerate() {
        require_node(format!("pv[{i}]"), p.node)?;
        pv_units.push(build_pv(path, i, p, s_base)?);
    }

    let mut wind_turbines = Vec::with_capacity(file.wind.len());
    for (i, w) in file.wind.iter().enumerate() {
        require_node(format!("wind[{i}]"), w.node)?;
        wind_turbines.push(build_wind(path, i, w, s_base)?);
    }

    let mut batteries = Vec::with_capacity(file.batteries.len());
    for (i, b) in file.batteries.iter().enumerate() {
        require_node(format!("battery[{i}]"), b.node)?;
        batteries.push(build_battery(path, i, b, s_base)?);
    }

    Ok(DeviceFleet { loads, pv_units, wind_turbines, batteries })
}

fn build_load(
    path: &str,
    i: usize,
    l: &LoadEntry,
    s_base: f64,
    series: &TimeSeriesSet,
) -> Result<ExponentialLoad, LoadError> {
    let to_w = match l.unit.as_str() {
        "pu" => s_base,
        other => check_unit(path, &format!("load[{i}].unit"), other, &["W", "kW"])?,
    };
    if !(l.power_factor > 0.0 && l.power_factor <= 1.0) {
        return Err(LoadError::Invalid {
            path: path.into(),
            message: format!("load[{i}]: power_factor must be in (0, 1], got {}", l.power_factor),
        });
    }
    let p_peak_pu = l.peak * to_w / s_base;
    let tan_phi = (1.0 / (l.power_factor * l.power_factor) - 1.0).sqrt();
    let s_peak = Complex64::new(p_peak_pu, p_peak_pu * tan_phi);
    let s_zip: Vec<Complex64> = series.demand_scale.iter().map(|sc| s_peak * *sc).collect();
    Ok(ExponentialLoad::new(l.node, l.alpha, s_zip, l.phase_split)?)
}

fn build_pv(path: &str, i: usize, p: &PvEntry, s_base: f64) -> Result<PvUnit, LoadError> {
    let rho_pu = match p.rho_unit.as_str() {
        "W_per_Wm2" => p.rho / s_base,
        "pu_per_Wm2" => p.rho,
        other => {
            return Err(LoadError::BadUnit {
                path: path.into(),
                field: format!("pv[{i}].rho_unit"),
                got: other.into(),
                allowed: "W_per_Wm2, pu_per_Wm2",
            })
        }
    };
    let s_max_pu = match p.s_max_unit.as_str() {
        "pu" => p.s_max,
        other => {
            check_unit(path, &format!("pv[{i}].s_max_unit"), other, &["VA", "kVA", "MVA"])?
                * p.s_max
                / s_base
        }
    };
    Ok(PvUnit::new(p.node, rho_pu, s_max_pu)?)
}

fn build_wind(path: &str, i: usize, w: &WindEntry, s_base: f64) -> Result<WindTurbine, LoadError> {
    check_unit(path, &format!("wind[{i}].speed_unit"), &w.speed_unit, &["m/s"])?;
    let to_pu = match w.power_unit.as_str() {
        "pu" => 1.0,
        other => check_unit(path, &format!("wind[{i}].power_unit"), other, &["W", "kW"])? / s_base,
    };
    Ok(WindTurbine::new(w.node, w.p_nom * to_pu, w.w_nom, w.w_max, w.s_max * to_pu)?)
}

/// Write a loaded bundle back to disk in canonical per-unit form.
///
/// `load_bundle` on the result reproduces an equivalent `CaseBundle`
/// (same network matrices, device parameters and series up to float
/// round-trip, which Rust's shortest-representation formatting makes exact).
pub fn write_bundle(bundle: &CaseBundle, dir: &Path) -> Result<BundlePaths, LoadError> {
    use std::fmt::Write as _;
    std::fs::create_dir_all(dir)
        .map_err(|source| LoadError::Io { path: dir.into(), source })?;
    let net = &bundle.network;

    let fnum = |v: f64| -> String {
        if v == v.trunc() && v.abs() < 1e15 {
            format!("{v:.1}")
        } else {
            format!("{v}")
        }
    };
    let row = |m: &Matrix3<Complex64>, re: bool| -> String {
        let mut parts = Vec::new();
        for p in 0..3 {
            let cols: Vec<String> = (0..3)
                .map(|q| fnum(if re { m[(p, q)].re } else { m[(p, q)].im }))
                .collect();
            parts.push(format!("[{}]", cols.join(", ")));
        }
        format!("[{}]", parts.join(", "))
    };

    let mut n = String::new();
    let _ = writeln!(n, "schema = \"{NETWORK_SCHEMA}\"");
    let _ = writeln!(n, "name = \"{}\"", bundle.name);
    let _ = writeln!(n, "\n[base]");
    let _ = writeln!(n, "power = {}", fnum(net.base_power));
    let _ = writeln!(n, "power_unit = \"VA\"");
    let _ = writeln!(n, "voltage = {}", fnum(net.base_voltage));
    let _ = writeln!(n, "voltage_unit = \"V\"");
    let _ = writeln!(n, "v_nom = {}", fnum(net.v_nom));
    let _ = writeln!(n, "v_nom_unit = \"pu\"\n");
    let _ = writeln!(n, "slack = {}\n", net.nodes()[0].id);
    for node in net.nodes() {
        let phases: String = "abc"
            .chars()
            .zip(node.phases)
            .filter_map(|(c, on)| on.then_some(c))
            .collect();
        let _ = writeln!(n, "[[node]]\nid = {}\nphases = \"{phases}\"\n", node.id);
    }
    for br in net.branches() {
        let _ = writeln!(n, "[[branch]]\nfrom = {}\nto = {}\nunit = \"pu\"", br.from, br.to);
        let _ = writeln!(n, "y_re = {}", row(&br.admittance, true));
        let _ = writeln!(n, "y_im = {}\n", row(&br.admittance, false));
    }

    let mut d = String::new();
    let _ = writeln!(d, "schema = \"{DEVICES_SCHEMA}\"\n");
    let peak_idx = bundle
        .series
        .demand_scale
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let peak_scale = bundle.series.demand_scale[peak_idx].max(1e-12);
    for load in &bundle.fleet.loads {
        let s_peak = load.s_zip[peak_idx] / peak_scale;
        let pf = if s_peak.norm() > 0.0 { s_peak.re / s_peak.norm() } else { 1.0 };
        let _ = writeln!(d, "[[load]]\nnode = {}", load.node);
        let _ = writeln!(d, "peak = {}\nunit = \"pu\"", fnum(s_peak.re));
        let _ = writeln!(d, "alpha = {}", fnum(load.alpha));
        let _ = writeln!(d, "power_factor = {}", fnum(pf));
        let _ = writeln!(
            d,
            "phase_split = [{}, {}, {}]\n",
            fnum(load.phase_split[0]),
            fnum(load.phase_split[1]),
            fnum(load.phase_split[2])
        );
    }
    for pv in &bundle.fleet.pv_units {
        let _ = writeln!(d, "[[pv]]\nnode = {}", pv.node);
        let _ = writeln!(d, "rho = {}\nrho_unit = \"pu_per_Wm2\"", fnum(pv.rho));
        let _ = writeln!(d, "s_max = {}\ns_max_unit = \"pu\"\n", fnum(pv.s_max));
    }
    for w in &bundle.fleet.wind_turbines {
        let _ = writeln!(d, "[[wind]]\nnode = {}", w.node);
        let _ = writeln!(d, "p_nom = {}\ns_max = {}\npower_unit = \"pu\"", fnum(w.p_nom), fnum(w.s_max));
        let _ = writeln!(d, "w_nom = {}\nw_max = {}\nspeed_unit = \"m/s\"\n", fnum(w.w_nom), fnum(w.w_max));
    }
    for b in &bundle.fleet.batteries {
        let _ = writeln!(d, "[[battery]]\nnode = {}", b.node);
        let _ = writeln!(
            d,
            "e_min = {}\ne_max = {}\ne_init = {}\nenergy_unit = \"puh\"",
            fnum(b.e_min),
            fnum(b.e_max),
            fnum(b.e_init)
        );
        let _ = writeln!(
            d,
            "p_char_max = {}\np_disch_max = {}\ns_max = {}\npower_unit = \"pu\"",
            fnum(b.p_char_max),
            fnum(b.p_disch_max),
            fnum(b.s_max)
        );
        let _ = writeln!(
            d,
            "loss_charge = {{ a = {}, b = {}, c = {} }}",
            fnum(b.loss_char.a),
            fnum(b.loss_char.b),
            fnum(b.loss_char.c)
        );
        let _ = writeln!(
            d,
            "loss_discharge = {{ a = {}, b = {}, c = {} }}",
            fnum(b.loss_disch.a),
            fnum(b.loss_disch.b),
            fnum(b.loss_disch.c)
        );
        let _ = writeln!(d, "loss_unit = \"pu\"\n");
    }

    let mut t = String::new();
    let series_line = |name: &str, vals: &[f64]| -> String {
        let items: Vec<String> = vals.iter().map(|v| fnum(*v)).collect();
        format!("{name} = [{}]", items.join(", "))
    };
    let _ = writeln!(t, "schema = \"{TIMESERIES_SCHEMA}\"");
    let _ = writeln!(t, "horizon = {}", bundle.series.horizon);
    let _ = writeln!(t, "dt = {}\ndt_unit = \"h\"", fnum(bundle.series.dt_hours));
    let _ = writeln!(t, "{}", series_line("demand_scale", &bundle.series.demand_scale));
    let _ = writeln!(t, "{}", series_line("price", &bundle.series.price));
    let _ = writeln!(t, "price_unit = \"$/kWh\"");
    let _ = writeln!(t, "{}", series_line("irradiance", &bundle.series.irradiance));
    let _ = writeln!(t, "irradiance_unit = \"W/m2\"");
    let _ = writeln!(t, "{}", series_line("wind_speed", &bundle.series.wind_speed));
    let _ = writeln!(t, "wind_speed_unit = \"m/s\"");

    let mut s = String::new();
    let _ = writeln!(s, "schema = \"{SCENARIO_SCHEMA}\"");
    let _ = writeln!(s, "case = {}", if bundle.scenario.surplus_allowed { 1 } else { 2 });
    let _ = writeln!(s, "delta_v = {}", fnum(bundle.scenario.delta_v));
    let _ = writeln!(s, "reserve_enabled = {}", bundle.scenario.reserve_enabled);
    let _ = writeln!(s, "reserve_tau = {}", fnum(bundle.scenario.reserve_tau_hours));
    let _ = writeln!(s, "reserve_tau_unit = \"h\"");

    let paths = BundlePaths {
        network: dir.join("network.toml"),
        devices: dir.join("devices.toml"),
        timeseries: dir.join("timeseries.toml"),
        scenario: Some(dir.join("scenario.toml")),
    };
    let write = |path: &Path, content: &str| -> Result<(), LoadError> {
        std::fs::write(path, content).map_err(|source| LoadError::Io { path: path.into(), source })
    };
    write(&paths.network, &n)?;
    write(&paths.devices, &d)?;
    write(&paths.timeseries, &t)?;
    write(paths.scenario.as_ref().unwrap(), &s)?;
    Ok(paths)
}

fn build_battery(
    path: &str,
    i: usize,
    b: &BatteryEntry,
    s_base: f64,
) -> Result<Battery, LoadError> {
    let e_to_pu = match b.energy_unit.as_str() {
        "puh" => 1.0,
        "Wh" => 1.0 / s_base,
        "kWh" => 1000.0 / s_base,
        other => {
            return Err(LoadError::BadUnit {
                path: path.into(),
                field: format!("battery[{i}].energy_unit"),
                got: other.into(),
                allowed: "Wh, kWh, puh",
            })
        }
    };
    let p_to_pu = match b.power_unit.as_str() {
        "pu" => 1.0,
        other => {
            check_unit(path, &format!("battery[{i}].power_unit"), other, &["W", "kW"])? / s_base
        }
    };
    // loss curves: n = a p^2 + b p + c. In watt units a is 1/W and c is W;
    // per-unit conversion scales a by s_base and c by 1/s_base.
    let (la, lb) = (b.loss_charge, b.loss_discharge);
    let (char_curve, disch_curve) = match b.loss_unit.as_str() {
        "pu" => (
            QuadLoss { a: la.a, b: la.b, c: la.c },
            QuadLoss { a: lb.a, b: lb.b, c: lb.c },
        ),
        "per_W" => (
            QuadLoss { a: la.a * s_base, b: la.b, c: la.c / s_base },
            QuadLoss { a: lb.a * s_base, b: lb.b, c: lb.c / s_base },
        ),
        other => {
            return Err(LoadError::BadUnit {
                path: path.into(),
                field: format!("battery[{i}].loss_unit"),
                got: other.into(),
                allowed: "per_W, pu",
            })
        }
    };
    Ok(Battery::new(
        b.node,
        b.e_min * e_to_pu,
        b.e_max * e_to_pu,
        b.e_init * e_to_pu,
        char_curve,
        disch_curve,
        b.p_char_max * p_to_pu,
        b.p_disch_max * p_to_pu,
        b.s_max * p_to_pu,
    )?)
}
