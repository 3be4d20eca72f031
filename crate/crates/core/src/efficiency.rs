//! Hydraulic efficiency maps.
//!
//! * Over speed: the turbine alone at rated head (`h = 1`), opening chosen
//!   so that the steady mechanical power equals the requested value.
//! * Over power: trimmed plant at `ω* = 1`; both the turbine's hydraulic
//!   efficiency and the overall efficiency `P_m / q` (reservoir head 1, so
//!   waterway losses included) are reported.

use crate::error::{Error, Result};
use crate::params::PlantParams;
use crate::plant::{ModelKind, Plant, PlantInputs};
use crate::turbines::{efficiency, euler_kinematics, euler_steady_flow, euler_step_quantities};

/// Column table with optional cells (unattainable points stay empty).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r
                .iter()
                .map(|c| c.map(|v| format!("{v}")).unwrap_or_default())
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

fn reject_linearised(models: &[ModelKind]) -> Result<()> {
    if models.contains(&ModelKind::Linearised) {
        return Err(Error::EfficiencyUndefined(
            "the linearised model has no hydraulic efficiency".into(),
        ));
    }
    Ok(())
}

/// Steady turbine power at rated head.
fn rated_head_power(kind: ModelKind, g: f64, omega: f64, params: &PlantParams) -> Result<f64> {
    let t = &params.turbine;
    let flow_ratio = params.waterway.q_r / t.q_rt;
    let head_ratio = params.waterway.h_r / t.h_rt;
    match kind {
        ModelKind::Euler => {
            let (kappa, _) = euler_kinematics(g, t, flow_ratio)?;
            let h_t = head_ratio;
            let q_t = euler_steady_flow(kappa, omega, h_t, t, params.euler_head_sign)?;
            let (_, out) = euler_step_quantities(q_t, omega, h_t, g, t, flow_ratio, 1.0, params.euler_head_sign)?;
            Ok(out.p_m)
        }
        _ => Ok(crate::turbines::ieee_power(g, omega - 1.0, 1.0, g, t)),
    }
}

/// Opening giving steady power `power` at speed `omega` and rated head.
pub fn opening_for_power(kind: ModelKind, power: f64, omega: f64, params: &PlantParams) -> Result<f64> {
    let t = &params.turbine;
    match kind {
        ModelKind::Ieee | ModelKind::Hygov => Ok((power + t.a_t * t.q_nl) / (t.a_t - t.d_t * (omega - 1.0))),
        ModelKind::Linearised => Ok(power),
        ModelKind::Euler => {
            let flow_ratio = params.waterway.q_r / t.q_rt;
            // kinematic limit on the opening
            let g_max = (1.0 / (flow_ratio * t.alpha_1r.sin())).min(params.governor.g_max);
            let f = |g: f64| rated_head_power(kind, g, omega, params).map(|p| p - power);
            let (mut lo, mut hi) = (1e-9, g_max);
            if f(hi)? < 0.0 {
                return Err(Error::Infeasible(format!(
                    "P = {power} not reachable at omega = {omega}"
                )));
            }
            if f(lo)? > 0.0 {
                return Err(Error::Infeasible(format!(
                    "P = {power} below the no-load power at omega = {omega}"
                )));
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid)? < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-14 {
                    break;
                }
            }
            Ok(0.5 * (lo + hi))
        }
    }
}

/// `η_h(ω)` at constant turbine power; one column per model.
pub fn omega_map(params: &PlantParams, models: &[ModelKind], power: f64, omegas: &[f64]) -> Result<Table> {
    reject_linearised(models)?;
    let t = &params.turbine;
    let flow_ratio = params.waterway.q_r / t.q_rt;
    let head_ratio = params.waterway.h_r / t.h_rt;
    let mut columns = vec!["omega".to_string()];
    columns.extend(models.iter().map(|m| format!("eta_{m}")));
    let rows = omegas
        .iter()
        .map(|&w| {
            let mut row = vec![Some(w)];
            for &m in models {
                let eta = opening_for_power(m, power, w, params)
                    .and_then(|g| efficiency(m, g, w, 1.0, t, flow_ratio, head_ratio, params.euler_head_sign));
                row.push(eta.ok());
            }
            row
        })
        .collect();
    Ok(Table { columns, rows })
}

/// `η_h` and overall efficiency over trimmed power at `ω* = 1`.
pub fn power_map(params: &PlantParams, models: &[ModelKind], powers: &[f64]) -> Result<Table> {
    reject_linearised(models)?;
    let plants = models
        .iter()
        .map(|&m| Plant::assemble(m, *params))
        .collect::<Result<Vec<_>>>()?;
    let mut columns = vec!["P_m".to_string()];
    for m in models {
        columns.push(format!("eta_h_{m}"));
        columns.push(format!("eta_total_{m}"));
    }
    let rows = powers
        .iter()
        .map(|&p| {
            let mut row = vec![Some(p)];
            for pl in &plants {
                match pl.trim(&PlantInputs::new(p, 1.0)) {
                    Ok(tr) => {
                        row.push(tr.outputs.eta_h);
                        let q = tr.outputs.q;
                        row.push((q > 0.0).then(|| tr.outputs.p_m / q));
                    }
                    Err(_) => {
                        row.push(None);
                        row.push(None);
                    }
                }
            }
            row
        })
        .collect();
    Ok(Table { columns, rows })
}

/// Default speed grid of the maps.
pub fn default_omegas() -> Vec<f64> {
    (0..=60).map(|k| 0.7 + 0.01 * k as f64).collect()
}

/// Default power grid of the maps.
pub fn default_powers() -> Vec<f64> {
    (1..=20).map(|k| 0.05 * k as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linearised_rejected() {
        let p = PlantParams::reference();
        assert!(matches!(
            omega_map(&p, &[ModelKind::Linearised], 0.6, &[1.0]),
            Err(Error::EfficiencyUndefined(_))
        ));
    }

    #[test]
    fn ieee_hygov_columns_identical() {
        let p = PlantParams::reference();
        let t = omega_map(&p, &[ModelKind::Ieee, ModelKind::Hygov], 0.6, &default_omegas()).unwrap();
        assert_eq!(t.column("eta_ieee"), t.column("eta_hygov"));
    }

    #[test]
    fn euler_opening_reproduces_power() {
        let p = PlantParams::reference();
        let g = opening_for_power(ModelKind::Euler, 0.6, 1.05, &p).unwrap();
        let back = rated_head_power(ModelKind::Euler, g, 1.05, &p).unwrap();
        assert!((back - 0.6).abs() < 1e-10);
    }
}
