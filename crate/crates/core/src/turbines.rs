//! The four hydraulic machine models.
//!
//! Euler quantities are in the turbine per-unit base (`q_t`, `h_t`); the
//! plant converts at the boundary. The other three models work directly in
//! the plant base.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{EulerHeadSign, TurbineParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Euler,
    Ieee,
    Hygov,
    Linearised,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Euler,
        ModelKind::Ieee,
        ModelKind::Hygov,
        ModelKind::Linearised,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Euler => "euler",
            ModelKind::Ieee => "ieee",
            ModelKind::Hygov => "hygov",
            ModelKind::Linearised => "linearised",
        }
    }

    /// Whether the model is coupled to the waterway.
    pub fn has_waterway(self) -> bool {
        matches!(self, ModelKind::Euler | ModelKind::Ieee)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euler" => Ok(ModelKind::Euler),
            "ieee" => Ok(ModelKind::Ieee),
            "hygov" => Ok(ModelKind::Hygov),
            "linearised" | "linearized" | "linear" => Ok(ModelKind::Linearised),
            _ => Err(Error::UnknownModel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TurbineOutputs {
    pub p_m: f64,
    pub t_m: f64,
    /// Plant-pu flow.
    pub q: f64,
    /// Plant-pu head.
    pub h: f64,
    /// `None` for the linearised model.
    pub eta_h: Option<f64>,
    pub m_s: Option<f64>,
    pub kappa: Option<f64>,
    pub alpha_1: Option<f64>,
}

/// Opening degree `κ` and flow angle `α_1` for opening `g`;
/// `flow_ratio` is `Q_R / Q_Rt`.
pub fn euler_kinematics(g: f64, p: &TurbineParams, flow_ratio: f64) -> Result<(f64, f64)> {
    let kappa = flow_ratio * g;
    let s = kappa * p.alpha_1r.sin();
    if s > 1.0 + 1e-12 {
        return Err(Error::KinematicLimit(s));
    }
    Ok((kappa, s.clamp(-1.0, 1.0).asin()))
}

/// Momentum derivative and outputs of the Euler turbine, turbine base.
///
/// Returns `(dq_t/dt, outputs)`; `outputs.q` and `outputs.h` are still in
/// the turbine base here.
pub fn euler_step_quantities(
    q_t: f64,
    omega: f64,
    h_t: f64,
    g: f64,
    p: &TurbineParams,
    flow_ratio: f64,
    t_w: f64,
    sign: EulerHeadSign,
) -> Result<(f64, TurbineOutputs)> {
    if !(h_t > 0.0) {
        return Err(Error::HeadCollapse(h_t));
    }
    let (kappa, alpha_1) = euler_kinematics(g, p, flow_ratio)?;
    if kappa == 0.0 {
        if q_t != 0.0 {
            return Err(Error::SingularOpening(q_t));
        }
        let dq = (h_t - speed_head(omega, p, sign)) / t_w;
        let t_m = 0.0;
        return Ok((
            dq,
            TurbineOutputs {
                p_m: 0.0,
                t_m,
                q: 0.0,
                h: h_t,
                eta_h: Some(0.0),
                m_s: Some(0.0),
                kappa: Some(0.0),
                alpha_1: Some(alpha_1),
            },
        ));
    }
    let m_s = p.xi * (q_t / kappa) * (alpha_1.cos() + p.alpha_1r.tan() * alpha_1.sin());
    let dq = (h_t - q_t * q_t.abs() / (kappa * kappa) - speed_head(omega, p, sign)) / t_w;
    let t_m = q_t * (m_s - p.psi * omega) / h_t;
    let eta = (m_s - p.psi * omega) * omega / h_t;
    Ok((
        dq,
        TurbineOutputs {
            p_m: t_m * omega,
            t_m,
            q: q_t,
            h: h_t,
            eta_h: Some(eta),
            m_s: Some(m_s),
            kappa: Some(kappa),
            alpha_1: Some(alpha_1),
        },
    ))
}

/// Speed-dependent head term of the Euler momentum equation.
pub fn speed_head(omega: f64, p: &TurbineParams, sign: EulerHeadSign) -> f64 {
    let v = p.sigma * (omega * omega - 1.0);
    match sign {
        EulerHeadSign::Derived => v,
        EulerHeadSign::Printed => -v,
    }
}

/// Steady Euler flow `q_t = κ √(h_t − σ(ω² − 1))`.
pub fn euler_steady_flow(kappa: f64, omega: f64, h_t: f64, p: &TurbineParams, sign: EulerHeadSign) -> Result<f64> {
    let avail = h_t - speed_head(omega, p, sign);
    if avail < 0.0 {
        return Err(Error::Infeasible(format!(
            "no forward flow: h_t = {h_t} below speed head at omega = {omega}"
        )));
    }
    Ok(kappa * avail.sqrt())
}

/// IEEE model: `q = g√h`, `P_m = A_t h (q − q_nl) − D_t g Δω`.
pub fn ieee_outputs(g: f64, d_omega: f64, h: f64, p: &TurbineParams) -> Result<(f64, f64)> {
    if h < 0.0 {
        return Err(Error::HeadCollapse(h));
    }
    let q = g * h.sqrt();
    Ok((q, ieee_power(g, d_omega, h, q, p)))
}

/// Power law shared by the IEEE and Hygov models.
pub fn ieee_power(g: f64, d_omega: f64, h: f64, q: f64, p: &TurbineParams) -> f64 {
    p.a_t * h * (q - p.q_nl) - p.d_t * g * d_omega
}

/// Hygov model: returns `(dq/dt, h, P_m)`.
pub fn hygov_step_quantities(q: f64, g: f64, d_omega: f64, p: &TurbineParams, t_w: f64) -> Result<(f64, f64, f64)> {
    if g == 0.0 {
        return Err(Error::Singular("hygov head (q/g)^2 with g = 0".into()));
    }
    let h = (q / g).powi(2);
    Ok(((1.0 - h) / t_w, h, ieee_power(g, d_omega, h, q, p)))
}

/// First-order realization of `(1 − T_w s)/(1 + T_w s / 2)`:
/// returns `(dx/dt, P_m)`.
pub fn linearised_step_quantities(x: f64, g: f64, t_w: f64) -> (f64, f64) {
    ((g - x) / (0.5 * t_w), 3.0 * x - 2.0 * g)
}

/// Steady-state hydraulic efficiency of a model at opening `g`, speed
/// `omega` and plant head `h`.
///
/// Euler uses the momentum fixed point for the flow; IEEE and Hygov share
/// `η = P_m / (h q)` with `q = g√h`.
pub fn efficiency(
    kind: ModelKind,
    g: f64,
    omega: f64,
    h: f64,
    p: &TurbineParams,
    flow_ratio: f64,
    head_ratio: f64,
    sign: EulerHeadSign,
) -> Result<f64> {
    match kind {
        ModelKind::Linearised => Err(Error::EfficiencyUndefined(
            "the linearised model carries no hydraulic loss information".into(),
        )),
        ModelKind::Ieee | ModelKind::Hygov => {
            let (q, p_m) = ieee_outputs(g, omega - 1.0, h, p)?;
            if h * q == 0.0 {
                return Err(Error::EfficiencyUndefined("zero hydraulic power (h q = 0)".into()));
            }
            Ok(p_m / (h * q))
        }
        ModelKind::Euler => {
            let h_t = h * head_ratio;
            let (kappa, _) = euler_kinematics(g, p, flow_ratio)?;
            let q_t = euler_steady_flow(kappa, omega, h_t, p, sign)?;
            if q_t == 0.0 {
                return Err(Error::EfficiencyUndefined("zero flow".into()));
            }
            let (_, out) = euler_step_quantities(q_t, omega, h_t, g, p, flow_ratio, 1.0, sign)?;
            Ok(out.eta_h.unwrap_or(0.0))
        }
    }
}
