//! Conversions between the plant and turbine per-unit bases.

use crate::params::{TurbineParams, WaterwayParams};

/// Plant-pu flow and head to turbine-pu `(q_t, h_t)`.
pub fn plant_to_turbine_pu(q: f64, h: f64, t: &TurbineParams, w: &WaterwayParams) -> (f64, f64) {
    (q * w.q_r / t.q_rt, h * w.h_r / t.h_rt)
}

/// Inverse of [`plant_to_turbine_pu`].
pub fn turbine_to_plant_pu(q_t: f64, h_t: f64, t: &TurbineParams, w: &WaterwayParams) -> (f64, f64) {
    (q_t * t.q_rt / w.q_r, h_t * t.h_rt / w.h_r)
}

/// Signed quadratic friction loss `f q |q|`.
pub fn friction_head_loss(f: f64, q: f64) -> f64 {
    f * q * q.abs()
}
