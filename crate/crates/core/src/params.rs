//! Plant parameters and the flat key-value parameter file.
//!
//! The file format is one `section.key = value` per line, `#` starts a
//! comment. Every waterway, turbine and governor constant of the reference
//! plant is mandatory except the ones listed in [`DEFAULTED_KEYS`], which are
//! filled in and reported back to the caller.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reference parameter file shipped with the crate (rated values of the
/// studied plant).
pub const REFERENCE_PARAMS: &str = include_str!("../data/table1.params");

/// Mechanical starting time used when the parameter file does not set one.
pub const DEFAULT_T_A: f64 = 10.0;
/// Derivative filter time constant of the governor PID.
pub const DEFAULT_T_F: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterwayParams {
    /// Penstock water starting time [s].
    pub t_w: f64,
    /// Penstock wave travel time [s].
    pub t_e: f64,
    /// Penstock characteristic impedance [pu].
    pub z_0: f64,
    /// Penstock friction factor [pu].
    pub f_p1: f64,
    /// Surge tank friction factor [pu].
    pub f_p0: f64,
    /// Surge tank storage constant [pu].
    pub c_s: f64,
    /// Headrace tunnel water starting time [s].
    pub t_w2: f64,
    /// Headrace tunnel friction factor [pu].
    pub f_p2: f64,
    /// Rated plant flow [m^3/s].
    pub q_r: f64,
    /// Rated plant head [m].
    pub h_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurbineParams {
    pub a_t: f64,
    pub q_nl: f64,
    pub d_t: f64,
    pub psi: f64,
    pub xi: f64,
    pub sigma: f64,
    /// Rated guide-vane flow angle [rad].
    pub alpha_1r: f64,
    /// Turbine rated flow [m^3/s].
    pub q_rt: f64,
    /// Turbine rated head [m].
    pub h_rt: f64,
    /// Rated speed [rpm]. Informational only; all dynamics are per unit.
    pub omega_r_rpm: f64,
    /// Mechanical starting time of turbine and generator [s].
    pub t_a: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GovernorParams {
    pub k_gp: f64,
    pub k_gi: f64,
    pub k_gd: f64,
    /// Servo time constant [s].
    pub t_g: f64,
    /// Guide-vane command slew bound [pu/s].
    pub rate_limit: f64,
    pub g_min: f64,
    pub g_max: f64,
    /// Derivative filter time constant [s].
    pub t_f: f64,
}

/// Truncation of the tanh product expansion: `n_num` numerator factors and
/// `n_den` denominator factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TanhOrder {
    pub n_num: usize,
    pub n_den: usize,
}

impl TanhOrder {
    pub const fn new(n_num: usize, n_den: usize) -> Self {
        Self { n_num, n_den }
    }

    /// Number of states of the strictly proper part of the realization.
    pub fn states(&self) -> usize {
        2 * self.n_den
    }
}

impl Default for TanhOrder {
    fn default() -> Self {
        Self::new(1, 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenstockMode {
    /// Travelling wave with a `2 T_e` delay line.
    TravellingWaveDelay,
    /// Rational approximation of `tanh(s T_e)`.
    LumpedTanh,
    /// Rigid water column, `h/q = -T_w s`.
    Inelastic,
}

/// How the rotor speed equation combines turbine output and generator power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotorLaw {
    /// `T_a dω/dt = P_m - P_g`.
    PowerBalance,
    /// `T_a ω dω/dt = P_m - P_g`, the exact per-unit swing equation.
    TorqueBalance,
    /// `T_a dω/dt = T_m - P_g` with `T_m = P_m / ω`.
    PrintedTorque,
}

/// Sign of the speed term in the steady-state Euler head expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EulerHeadSign {
    /// `h_t = (q_t/κ)² + σ(ω² − 1)`, the fixed point of the momentum equation.
    Derived,
    /// `h_t = (q_t/κ)² − σ(ω² − 1)`.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub waterway: WaterwayParams,
    pub turbine: TurbineParams,
    pub governor: GovernorParams,
    pub tanh_order: TanhOrder,
    pub penstock_mode: PenstockMode,
    pub rotor_law: RotorLaw,
    pub euler_head_sign: EulerHeadSign,
    /// First-order converter lag between `P*` and `P_g` [s]; `None` means
    /// `P_g = P*`.
    pub converter_lag: Option<f64>,
}

/// A parsed and validated parameter set with the list of keys that were
/// filled from defaults.
#[derive(Debug, Clone)]
pub struct LoadedParams {
    pub params: PlantParams,
    pub defaulted: Vec<(String, String)>,
}

const MANDATORY_KEYS: &[&str] = &[
    "waterway.T_w",
    "waterway.T_e",
    "waterway.Z_0",
    "waterway.f_p1",
    "waterway.f_p0",
    "waterway.C_s",
    "waterway.T_w2",
    "waterway.f_p2",
    "waterway.Q_R",
    "waterway.H_R",
    "turbine.A_t",
    "turbine.q_nl",
    "turbine.D_t",
    "turbine.psi",
    "turbine.xi",
    "turbine.sigma",
    "turbine.alpha_1R",
    "turbine.Q_Rt",
    "turbine.H_Rt",
    "turbine.Omega_R",
    "governor.k_gp",
    "governor.k_gi",
    "governor.k_gd",
    "governor.T_G",
    "governor.rate_limit",
];

/// Optional keys and their default values.
pub const DEFAULTED_KEYS: &[(&str, &str)] = &[
    ("turbine.T_a", "10"),
    ("governor.T_f", "0.1"),
    ("governor.g_min", "0"),
    ("governor.g_max", "1"),
    ("model.tanh_n_num", "1"),
    ("model.tanh_n_den", "2"),
    ("model.penstock_mode", "lumped_tanh"),
    ("model.rotor_law", "torque_balance"),
    ("model.euler_head_sign", "derived"),
    ("model.converter_lag", "0"),
];

impl PlantParams {
    /// The shipped reference parameter set.
    pub fn reference() -> Self {
        parse_params(REFERENCE_PARAMS)
            .expect("shipped reference parameters are valid")
            .params
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.waterway;
        let t = &self.turbine;
        let g = &self.governor;
        for (name, v) in [
            ("T_w", w.t_w),
            ("T_e", w.t_e),
            ("T_w2", w.t_w2),
            ("C_s", w.c_s),
            ("Z_0", w.z_0),
            ("Q_R", w.q_r),
            ("H_R", w.h_r),
            ("Q_Rt", t.q_rt),
            ("H_Rt", t.h_rt),
            ("T_a", t.t_a),
            ("T_G", g.t_g),
            ("T_f", g.t_f),
            ("rate_limit", g.rate_limit),
        ] {
            positive(name, v)?;
        }
        for (name, v) in [("f_p0", w.f_p0), ("f_p1", w.f_p1), ("f_p2", w.f_p2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be >= 0")));
            }
        }
        let z_ratio = w.t_w / w.t_e;
        if (w.z_0 - z_ratio).abs() / w.z_0 > 1e-2 {
            return Err(Error::Validation(format!(
                "Z_0 = {} inconsistent with T_w/T_e = {z_ratio:.4} (tolerance 1%)",
                w.z_0
            )));
        }
        if !(t.xi > t.psi) {
            return Err(Error::Validation("xi must exceed psi".into()));
        }
        if !(t.alpha_1r > 0.0 && t.alpha_1r < FRAC_PI_2) {
            return Err(Error::Validation("alpha_1R must lie in (0, pi/2)".into()));
        }
        for (name, v) in [("A_t", t.a_t), ("q_nl", t.q_nl), ("D_t", t.d_t), ("sigma", t.sigma)] {
            if !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be finite")));
            }
        }
        for (name, v) in [("k_gp", g.k_gp), ("k_gi", g.k_gi), ("k_gd", g.k_gd)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be >= 0")));
            }
        }
        if !(g.g_min < g.g_max) {
            return Err(Error::Validation("g_min must be < g_max".into()));
        }
        if self.tanh_order.n_den < self.tanh_order.n_num {
            return Err(Error::Validation("tanh order requires n_den >= n_num".into()));
        }
        if let Some(tc) = self.converter_lag {
            positive("converter_lag", tc)?;
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back the same parameters.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_map() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    fn to_map(&self) -> BTreeMap<&'static str, String> {
        let w = &self.waterway;
        let t = &self.turbine;
        let g = &self.governor;
        let mut m = BTreeMap::new();
        let mut num = |k: &'static str, v: f64| {
            m.insert(k, format!("{v}"));
        };
        num("waterway.T_w", w.t_w);
        num("waterway.T_e", w.t_e);
        num("waterway.Z_0", w.z_0);
        num("waterway.f_p1", w.f_p1);
        num("waterway.f_p0", w.f_p0);
        num("waterway.C_s", w.c_s);
        num("waterway.T_w2", w.t_w2);
        num("waterway.f_p2", w.f_p2);
        num("waterway.Q_R", w.q_r);
        num("waterway.H_R", w.h_r);
        num("turbine.A_t", t.a_t);
        num("turbine.q_nl", t.q_nl);
        num("turbine.D_t", t.d_t);
        num("turbine.psi", t.psi);
        num("turbine.xi", t.xi);
        num("turbine.sigma", t.sigma);
        num("turbine.alpha_1R", t.alpha_1r);
        num("turbine.Q_Rt", t.q_rt);
        num("turbine.H_Rt", t.h_rt);
        num("turbine.Omega_R", t.omega_r_rpm);
        num("turbine.T_a", t.t_a);
        num("governor.k_gp", g.k_gp);
        num("governor.k_gi", g.k_gi);
        num("governor.k_gd", g.k_gd);
        num("governor.T_G", g.t_g);
        num("governor.rate_limit", g.rate_limit);
        num("governor.g_min", g.g_min);
        num("governor.g_max", g.g_max);
        num("governor.T_f", g.t_f);
        num("model.converter_lag", self.converter_lag.unwrap_or(0.0));
        m.insert("model.tanh_n_num", self.tanh_order.n_num.to_string());
        m.insert("model.tanh_n_den", self.tanh_order.n_den.to_string());
        m.insert("model.penstock_mode", penstock_mode_name(self.penstock_mode).into());
        m.insert("model.rotor_law", rotor_law_name(self.rotor_law).into());
        m.insert(
            "model.euler_head_sign",
            match self.euler_head_sign {
                EulerHeadSign::Derived => "derived",
                EulerHeadSign::Printed => "printed",
            }
            .into(),
        );
        m
    }

    /// Overrides one key with a textual value, then re-validates.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut map: BTreeMap<String, String> = self.to_map().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        if !map.contains_key(key) {
            return Err(Error::Parse {
                line: 0,
                msg: format!("unknown key `{key}`"),
            });
        }
        map.insert(key.to_string(), value.trim().to_string());
        *self = from_map(&map)?;
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} must be > 0")))
    }
}

pub fn penstock_mode_name(m: PenstockMode) -> &'static str {
    match m {
        PenstockMode::TravellingWaveDelay => "travelling_wave_delay",
        PenstockMode::LumpedTanh => "lumped_tanh",
        PenstockMode::Inelastic => "inelastic",
    }
}

pub fn parse_penstock_mode(s: &str) -> Option<PenstockMode> {
    match s.trim().to_ascii_lowercase().as_str() {
        "travelling_wave_delay" | "delay" | "travelling_wave" => Some(PenstockMode::TravellingWaveDelay),
        "lumped_tanh" | "lumped" => Some(PenstockMode::LumpedTanh),
        "inelastic" => Some(PenstockMode::Inelastic),
        _ => None,
    }
}

pub fn rotor_law_name(r: RotorLaw) -> &'static str {
    match r {
        RotorLaw::PowerBalance => "power_balance",
        RotorLaw::TorqueBalance => "torque_balance",
        RotorLaw::PrintedTorque => "printed_torque",
    }
}

/// Reads and validates a parameter file.
pub fn load_params(path: impl AsRef<Path>) -> Result<LoadedParams> {
    let text = std::fs::read_to_string(path)?;
    parse_params(&text)
}

/// Parses parameter text; see the module docs for the format.
pub fn parse_params(text: &str) -> Result<LoadedParams> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected `key = value`, got `{line}`"),
        })?;
        let k = k.trim();
        if !MANDATORY_KEYS.contains(&k) && !DEFAULTED_KEYS.iter().any(|(d, _)| *d == k) {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("unknown key `{k}`"),
            });
        }
        if map.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("duplicate key `{k}`"),
            });
        }
    }
    for k in MANDATORY_KEYS {
        if !map.contains_key(*k) {
            return Err(Error::MissingKey((*k).to_string()));
        }
    }
    let mut defaulted = Vec::new();
    for (k, v) in DEFAULTED_KEYS {
        if !map.contains_key(*k) {
            map.insert((*k).to_string(), (*v).to_string());
            defaulted.push(((*k).to_string(), (*v).to_string()));
        }
    }
    let params = from_map(&map)?;
    Ok(LoadedParams { params, defaulted })
}

fn from_map(map: &BTreeMap<String, String>) -> Result<PlantParams> {
    let num = |k: &str| -> Result<f64> {
        let v = map.get(k).ok_or_else(|| Error::MissingKey(k.to_string()))?;
        v.parse::<f64>().map_err(|_| Error::Parse {
            line: 0,
            msg: format!("`{k}`: `{v}` is not a number"),
        })
    };
    let int = |k: &str| -> Result<usize> {
        let v = map.get(k).ok_or_else(|| Error::MissingKey(k.to_string()))?;
        v.parse::<usize>().map_err(|_| Error::Parse {
            line: 0,
            msg: format!("`{k}`: `{v}` is not a non-negative integer"),
        })
    };
    let text = |k: &str| -> Result<&str> {
        map.get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::MissingKey(k.to_string()))
    };
    let bad = |k: &str, v: &str| Error::Parse {
        line: 0,
        msg: format!("`{k}`: unrecognised value `{v}`"),
    };

    let waterway = WaterwayParams {
        t_w: num("waterway.T_w")?,
        t_e: num("waterway.T_e")?,
        z_0: num("waterway.Z_0")?,
        f_p1: num("waterway.f_p1")?,
        f_p0: num("waterway.f_p0")?,
        c_s: num("waterway.C_s")?,
        t_w2: num("waterway.T_w2")?,
        f_p2: num("waterway.f_p2")?,
        q_r: num("waterway.Q_R")?,
        h_r: num("waterway.H_R")?,
    };
    let turbine = TurbineParams {
        a_t: num("turbine.A_t")?,
        q_nl: num("turbine.q_nl")?,
        d_t: num("turbine.D_t")?,
        psi: num("turbine.psi")?,
        xi: num("turbine.xi")?,
        sigma: num("turbine.sigma")?,
        alpha_1r: num("turbine.alpha_1R")?,
        q_rt: num("turbine.Q_Rt")?,
        h_rt: num("turbine.H_Rt")?,
        omega_r_rpm: num("turbine.Omega_R")?,
        t_a: num("turbine.T_a")?,
    };
    let governor = GovernorParams {
        k_gp: num("governor.k_gp")?,
        k_gi: num("governor.k_gi")?,
        k_gd: num("governor.k_gd")?,
        t_g: num("governor.T_G")?,
        rate_limit: num("governor.rate_limit")?,
        g_min: num("governor.g_min")?,
        g_max: num("governor.g_max")?,
        t_f: num("governor.T_f")?,
    };
    let mode_s = text("model.penstock_mode")?;
    let penstock_mode = parse_penstock_mode(mode_s).ok_or_else(|| bad("model.penstock_mode", mode_s))?;
    let law_s = text("model.rotor_law")?;
    let rotor_law = match law_s {
        "power_balance" => RotorLaw::PowerBalance,
        "torque_balance" => RotorLaw::TorqueBalance,
        "printed_torque" => RotorLaw::PrintedTorque,
        other => return Err(bad("model.rotor_law", other)),
    };
    let sign_s = text("model.euler_head_sign")?;
    let euler_head_sign = match sign_s {
        "derived" => EulerHeadSign::Derived,
        "printed" => EulerHeadSign::Printed,
        other => return Err(bad("model.euler_head_sign", other)),
    };
    let lag = num("model.converter_lag")?;
    let params = PlantParams {
        waterway,
        turbine,
        governor,
        tanh_order: TanhOrder::new(int("model.tanh_n_num")?, int("model.tanh_n_den")?),
        penstock_mode,
        rotor_law,
        euler_head_sign,
        converter_lag: if lag == 0.0 { None } else { Some(lag) },
    };
    params.validate()?;
    Ok(params)
}
