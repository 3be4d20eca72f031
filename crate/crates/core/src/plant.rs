//! One turbine model, the waterway, the governor and the rotor as a single
//! ODE system with inputs `(P*, ω*)`; equilibrium solving.
//!
//! State order: `omega`, turbine state (if any), `h_st`, `q_hr`,
//! `pen_1..pen_n` (waterway models with a lumped penstock), `p_g` (with a
//! converter lag), `gov_integ`, `gov_dfilt`, `g`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::governor::{governor_derivatives, governor_derivatives_in, sliding_fraction, GovernorMode, SlewWindow};
use crate::params::{PenstockMode, PlantParams, RotorLaw};
pub use crate::turbines::ModelKind;
use crate::turbines::{
    euler_kinematics, euler_step_quantities, hygov_step_quantities, ieee_power, linearised_step_quantities,
    TurbineOutputs,
};
use crate::units::friction_head_loss;
use crate::waterway::{
    delay_equilibrium_wave, surge_node_head, waterway_derivatives, DelayLine, Penstock, WaterwayState,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantInputs {
    pub p_star: f64,
    pub omega_star: f64,
}

impl PlantInputs {
    pub fn new(p_star: f64, omega_star: f64) -> Self {
        Self { p_star, omega_star }
    }
}

/// Name-to-index map of the plant state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    names: Vec<String>,
    pub omega: usize,
    pub turbine: Option<usize>,
    pub h_st: Option<usize>,
    pub q_hr: Option<usize>,
    pub penstock: Range<usize>,
    pub p_g: Option<usize>,
    pub integ: usize,
    pub dfilt: usize,
    pub g: usize,
}

impl StateLayout {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Indices of the rotor and governor states.
    pub fn governor_loop(&self) -> [usize; 4] {
        [self.omega, self.integ, self.dfilt, self.g]
    }
}

/// Extra information for one derivative evaluation inside a time step.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalContext<'a> {
    /// Absolute time (needed with the delay line).
    pub t: f64,
    /// Slew window on the governor command.
    pub window: Option<SlewWindow>,
    /// Travelling-wave history.
    pub delay: Option<&'a DelayLine>,
    /// Treat the travelling-wave penstock as at rest (`h_pen = 0`).
    pub static_penstock: bool,
    /// Governor constraint set imposed for this evaluation (requires a
    /// window); when sliding, the integrator runs at the fraction that keeps
    /// `g*` on the edge.
    pub mode: Option<GovernorMode>,
}

/// Algebraic quantities produced alongside the derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub outputs: TurbineOutputs,
    pub g_cmd: f64,
    pub p_g: f64,
    /// Penstock wave value at this time (travelling-wave mode only).
    pub wave: Option<f64>,
    /// Unclamped integrator fraction when sliding along a limit.
    pub slide_fraction: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Plant {
    kind: ModelKind,
    params: PlantParams,
    layout: StateLayout,
    penstock: Option<Penstock>,
    /// `Q_R / Q_Rt`.
    flow_ratio: f64,
    /// `H_R / H_Rt`.
    head_ratio: f64,
}

/// Equilibrium with its steady outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trim {
    pub state: Vec<f64>,
    pub inputs: PlantInputs,
    pub outputs: TurbineOutputs,
    pub g: f64,
    pub residual: f64,
    pub iterations: usize,
}

const IEEE_LOOP_TOL: f64 = 1e-12;
const IEEE_LOOP_MAX_ITER: usize = 50;

impl Plant {
    pub fn assemble(kind: ModelKind, params: PlantParams) -> Result<Self> {
        params.validate()?;
        let w = &params.waterway;
        let penstock = kind
            .has_waterway()
            .then(|| Penstock::new(params.penstock_mode, params.tanh_order, w));
        let improper = penstock.as_ref().is_some_and(|p| p.e_coeff() != 0.0);
        let mut names: Vec<String> = vec!["omega".into()];
        let turbine_name = match kind {
            ModelKind::Euler => Some("q_t"),
            ModelKind::Ieee if improper => Some("q"),
            ModelKind::Ieee => None,
            ModelKind::Hygov => Some("q"),
            ModelKind::Linearised => Some("x_lin"),
        };
        let turbine = turbine_name.map(|n| {
            names.push(n.into());
            names.len() - 1
        });
        let (mut h_st, mut q_hr) = (None, None);
        let mut pen_start = names.len();
        if let Some(p) = &penstock {
            names.push("h_st".into());
            h_st = Some(names.len() - 1);
            names.push("q_hr".into());
            q_hr = Some(names.len() - 1);
            pen_start = names.len();
            for i in 0..p.states() {
                names.push(format!("pen_{}", i + 1));
            }
        }
        let penstock_range = pen_start..names.len();
        let p_g = params.converter_lag.map(|_| {
            names.push("p_g".into());
            names.len() - 1
        });
        names.push("gov_integ".into());
        names.push("gov_dfilt".into());
        names.push("g".into());
        let n = names.len();
        let layout = StateLayout {
            names,
            omega: 0,
            turbine,
            h_st,
            q_hr,
            penstock: penstock_range,
            p_g,
            integ: n - 3,
            dfilt: n - 2,
            g: n - 1,
        };
        Ok(Self {
            kind,
            params,
            layout,
            penstock,
            flow_ratio: w.q_r / params.turbine.q_rt,
            head_ratio: w.h_r / params.turbine.h_rt,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    /// True when the travelling-wave delay line is part of the state.
    pub fn uses_delay_line(&self) -> bool {
        matches!(self.penstock, Some(Penstock::Delay))
    }

    pub fn flow_ratio(&self) -> f64 {
        self.flow_ratio
    }

    pub fn head_ratio(&self) -> f64 {
        self.head_ratio
    }

    /// Derivative at `x` without rate limiting. The travelling-wave penstock
    /// is taken at rest here; use [`Plant::evaluate`] with a delay line for
    /// time-domain work.
    pub fn derivatives(&self, x: &[f64], u: &PlantInputs) -> Result<Vec<f64>> {
        let mut dx = vec![0.0; self.dim()];
        let ctx = EvalContext {
            static_penstock: true,
            ..Default::default()
        };
        self.evaluate(x, u, &ctx, &mut dx)?;
        Ok(dx)
    }

    /// Outputs at `x` (same conventions as [`Plant::derivatives`]).
    pub fn outputs(&self, x: &[f64], u: &PlantInputs) -> Result<Evaluation> {
        let mut dx = vec![0.0; self.dim()];
        let ctx = EvalContext {
            static_penstock: true,
            ..Default::default()
        };
        self.evaluate(x, u, &ctx, &mut dx)
    }

    /// Full coupled evaluation; derivative written to `dx`.
    pub fn evaluate(&self, x: &[f64], u: &PlantInputs, ctx: &EvalContext<'_>, dx: &mut [f64]) -> Result<Evaluation> {
        let l = &self.layout;
        if x.len() != l.len() || dx.len() != l.len() {
            return Err(Error::Dimension {
                expected: l.len(),
                got: x.len().min(dx.len()),
            });
        }
        let p = &self.params;
        let omega = x[l.omega];
        let g = x[l.g];
        let gov = match (ctx.mode, ctx.window) {
            (Some(m), Some(w)) => {
                governor_derivatives_in(x[l.integ], x[l.dfilt], g, u.omega_star - omega, &p.governor, w, m)
            }
            _ => governor_derivatives(x[l.integ], x[l.dfilt], g, u.omega_star - omega, &p.governor, ctx.window),
        };
        dx[l.integ] = gov.deriv[0];
        dx[l.dfilt] = gov.deriv[1];
        dx[l.g] = gov.deriv[2];

        let d_omega_turb = omega - 1.0;
        let mut wave = None;
        let outputs = match self.kind {
            ModelKind::Linearised => {
                let xl = x[l.turbine.expect("linearised state")];
                let (d, p_m) = linearised_step_quantities(xl, g, p.waterway.t_w);
                dx[l.turbine.unwrap()] = d;
                TurbineOutputs {
                    p_m,
                    t_m: p_m / omega,
                    q: xl,
                    h: 1.0,
                    ..Default::default()
                }
            }
            ModelKind::Hygov => {
                let i = l.turbine.expect("hygov flow state");
                let q = x[i];
                let (d, h, p_m) = hygov_step_quantities(q, g, d_omega_turb, &p.turbine, p.waterway.t_w)?;
                dx[i] = d;
                TurbineOutputs {
                    p_m,
                    t_m: p_m / omega,
                    q,
                    h,
                    eta_h: (h * q != 0.0).then(|| p_m / (h * q)),
                    ..Default::default()
                }
            }
            ModelKind::Ieee => {
                let (out, wv) = self.ieee_with_waterway(x, g, d_omega_turb, ctx, dx)?;
                wave = wv;
                TurbineOutputs {
                    t_m: out.p_m / omega,
                    ..out
                }
            }
            ModelKind::Euler => {
                let (out, wv) = self.euler_with_waterway(x, g, omega, ctx, dx)?;
                wave = wv;
                out
            }
        };

        let p_g = match (l.p_g, p.converter_lag) {
            (Some(i), Some(tc)) => {
                dx[i] = (u.p_star - x[i]) / tc;
                x[i]
            }
            _ => u.p_star,
        };
        if !(omega > 0.0) {
            return Err(Error::Singular(format!("rotor speed omega = {omega}")));
        }
        dx[l.omega] = match p.rotor_law {
            RotorLaw::PowerBalance => (outputs.p_m - p_g) / p.turbine.t_a,
            RotorLaw::TorqueBalance => (outputs.p_m - p_g) / (p.turbine.t_a * omega),
            RotorLaw::PrintedTorque => (outputs.p_m / omega - p_g) / p.turbine.t_a,
        };
        let slide_fraction = ctx.mode.filter(|m| m.sliding).map(|m| {
            let d_omega = u.omega_star - omega;
            let gp = &p.governor;
            let edge_rate = m.constraint.edge_rate(gp.rate_limit);
            let a = sliding_fraction(d_omega, -dx[l.omega], x[l.dfilt], edge_rate, gp);
            dx[l.integ] = a * gp.k_gi * d_omega;
            a
        });
        Ok(Evaluation {
            outputs,
            g_cmd: gov.g_cmd,
            p_g,
            wave,
            slide_fraction,
        })
    }

    fn waterway_state<'a>(&self, x: &'a [f64]) -> WaterwayState<'a> {
        let l = &self.layout;
        WaterwayState {
            h_st: x[l.h_st.unwrap()],
            q_hr: x[l.q_hr.unwrap()],
            penstock: &x[l.penstock.clone()],
        }
    }

    fn delayed_wave(&self, q: f64, ctx: &EvalContext<'_>) -> Result<Option<f64>> {
        match self.penstock {
            Some(Penstock::Delay) => {
                if ctx.static_penstock {
                    Ok(Some(delay_equilibrium_wave(q, &self.params.waterway)))
                } else {
                    let line = ctx.delay.ok_or(Error::DelayLineRequired)?;
                    line.sample_delayed(ctx.t).map(Some)
                }
            }
            _ => Ok(None),
        }
    }

    /// Runs the waterway at penstock flow `q`, writing its derivatives.
    fn run_waterway(
        &self,
        x: &[f64],
        q: f64,
        ctx: &EvalContext<'_>,
        dx: &mut [f64],
    ) -> Result<crate::waterway::WaterwayOutput> {
        let l = &self.layout;
        let ws = self.waterway_state(x);
        let delayed = self.delayed_wave(q, ctx)?;
        let pen = self.penstock.as_ref().unwrap();
        let out = waterway_derivatives(&ws, q, pen, delayed, &self.params.waterway, &mut dx[l.penstock.clone()])?;
        dx[l.h_st.unwrap()] = out.dh_st;
        dx[l.q_hr.unwrap()] = out.dq_hr;
        Ok(out)
    }

    fn euler_with_waterway(
        &self,
        x: &[f64],
        g: f64,
        omega: f64,
        ctx: &EvalContext<'_>,
        dx: &mut [f64],
    ) -> Result<(TurbineOutputs, Option<f64>)> {
        let p = &self.params;
        let i = self.layout.turbine.unwrap();
        let q_t = x[i];
        let q = q_t / self.flow_ratio;
        let ww = self.run_waterway(x, q, ctx, dx)?;
        let c = self.head_ratio;
        let t_w = p.waterway.t_w;
        let (mut dq_t, mut out) = euler_step_quantities(
            q_t,
            omega,
            c * ww.h,
            g,
            &p.turbine,
            self.flow_ratio,
            t_w,
            p.euler_head_sign,
        )?;
        if ww.e_coeff != 0.0 {
            // h contains E q'; move it to the left-hand side.
            let denom = t_w - c * ww.e_coeff / self.flow_ratio;
            dq_t *= t_w / denom;
            let h = ww.h + ww.e_coeff * dq_t / self.flow_ratio;
            out = euler_step_quantities(
                q_t,
                omega,
                c * h,
                g,
                &p.turbine,
                self.flow_ratio,
                t_w,
                p.euler_head_sign,
            )?
            .1;
        }
        dx[i] = dq_t;
        out.q = q;
        out.h /= c;
        Ok((out, ww.wave))
    }

    fn ieee_with_waterway(
        &self,
        x: &[f64],
        g: f64,
        d_omega: f64,
        ctx: &EvalContext<'_>,
        dx: &mut [f64],
    ) -> Result<(TurbineOutputs, Option<f64>)> {
        let t = &self.params.turbine;
        if let Some(i) = self.layout.turbine {
            // Rigid or improper penstock: flow is a state, h = (q/g)^2.
            let q = x[i];
            if g == 0.0 {
                return Err(Error::Singular("ieee head (q/g)^2 with g = 0".into()));
            }
            let h = (q / g).powi(2);
            let ww = self.run_waterway(x, q, ctx, dx)?;
            dx[i] = (h - ww.h) / ww.e_coeff;
            let p_m = ieee_power(g, d_omega, h, q, t);
            return Ok((ieee_outputs_struct(p_m, q, h), ww.wave));
        }
        let h = self.solve_ieee_head(x, g, ctx)?;
        let q = g * h.sqrt();
        let ww = self.run_waterway(x, q, ctx, dx)?;
        let p_m = ieee_power(g, d_omega, h, q, t);
        Ok((ieee_outputs_struct(p_m, q, h), ww.wave))
    }

    /// Solves `u² = H(g u)` for `u = √h` by Newton's method kept inside a
    /// shrinking bracket.
    fn solve_ieee_head(&self, x: &[f64], g: f64, ctx: &EvalContext<'_>) -> Result<f64> {
        let w = &self.params.waterway;
        let ws = self.waterway_state(x);
        let (pen_const, pen_slope) = match self.penstock.as_ref().unwrap() {
            Penstock::Lumped(lp) => (lp.head(ws.penstock), 0.0),
            Penstock::Delay if ctx.static_penstock => (0.0, 0.0),
            Penstock::Delay => {
                let line = ctx.delay.ok_or(Error::DelayLineRequired)?;
                (line.sample_delayed(ctx.t)?, -w.z_0)
            }
        };
        let head = |q: f64| {
            surge_node_head(ws.h_st, ws.q_hr - q, w) + pen_const + pen_slope * q - friction_head_loss(w.f_p1, q)
        };
        let dhead = |q: f64| 2.0 * w.f_p0 * (ws.q_hr - q).abs() + pen_slope - 2.0 * w.f_p1 * q.abs();
        let f = |u: f64| u * u - head(g * u);
        let h0 = head(0.0);
        if !(h0 > 0.0) {
            return Err(Error::HeadCollapse(h0));
        }
        let (mut lo, mut hi) = (0.0, h0.sqrt().max(1.0));
        let mut grow = 0;
        while f(hi) <= 0.0 {
            hi *= 2.0;
            grow += 1;
            if grow > 60 {
                return Err(Error::AlgebraicLoop("no upper bracket for head".into()));
            }
        }
        let mut u = (lo + hi) / 2.0;
        if let Some(prev) = self.guess_u(x, g) {
            if prev > lo && prev < hi {
                u = prev;
            }
        }
        for _ in 0..IEEE_LOOP_MAX_ITER {
            let fu = f(u);
            if fu < 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let df = 2.0 * u - g * dhead(g * u);
            let mut next = if df > 0.0 { u - fu / df } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() <= IEEE_LOOP_TOL * (1.0 + u) {
                return Ok(next * next);
            }
            u = next;
        }
        Err(Error::AlgebraicLoop(format!(
            "head iteration did not reach {IEEE_LOOP_TOL:e} in {IEEE_LOOP_MAX_ITER} iterations"
        )))
    }

    /// Warm start for the head loop: the surge tank head.
    fn guess_u(&self, x: &[f64], _g: f64) -> Option<f64> {
        let h = x[self.layout.h_st?];
        (h > 0.0).then(|| h.sqrt())
    }

    /// Deterministic starting point for the equilibrium solve.
    pub fn initial_guess(&self, u: &PlantInputs) -> Vec<f64> {
        let p = &self.params;
        let t = &p.turbine;
        let l = &self.layout;
        let g = match self.kind {
            ModelKind::Ieee | ModelKind::Hygov => (u.p_star + t.a_t * t.q_nl) / (t.a_t - t.d_t * (u.omega_star - 1.0)),
            _ => u.p_star,
        };
        let mut x = vec![0.0; self.dim()];
        x[l.omega] = u.omega_star;
        let q = g;
        if let Some(i) = l.turbine {
            x[i] = match self.kind {
                ModelKind::Euler => q * self.flow_ratio,
                _ => q,
            };
        }
        if let (Some(ih), Some(iq)) = (l.h_st, l.q_hr) {
            x[iq] = q;
            x[ih] = 1.0 - friction_head_loss(p.waterway.f_p2, q);
            if let Some(Penstock::Lumped(lp)) = &self.penstock {
                for (k, v) in lp.equilibrium(q).into_iter().enumerate() {
                    x[l.penstock.start + k] = v;
                }
            }
        }
        if let Some(i) = l.p_g {
            x[i] = u.p_star;
        }
        x[l.integ] = g;
        x[l.dfilt] = 0.0;
        x[l.g] = g;
        x
    }

    /// Equilibrium for constant inputs by damped Newton iteration.
    pub fn trim(&self, u: &PlantInputs) -> Result<Trim> {
        const MAX_ITER: usize = 100;
        const TOL: f64 = 1e-10;
        let n = self.dim();
        let mut x = self.initial_guess(u);
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let mut fx = self.derivatives(&x, u)?;
        let mut iterations = 0;
        while norm(&fx) >= TOL {
            if iterations == MAX_ITER {
                return Err(self.trim_failure(&x, u, iterations, norm(&fx)));
            }
            iterations += 1;
            let jac = self.jacobian_fd(&x, u)?;
            let step = match jac.lu().solve(&DVector::from_column_slice(&fx)) {
                Some(s) => s,
                None => return Err(self.trim_failure(&x, u, iterations, norm(&fx))),
            };
            let mut lambda = 1.0;
            let f0 = norm(&fx);
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = (0..n).map(|i| x[i] - lambda * step[i]).collect();
                if let Ok(ft) = self.derivatives(&trial, u) {
                    if norm(&ft) < f0 || norm(&ft) < TOL {
                        x = trial;
                        fx = ft;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                return Err(self.trim_failure(&x, u, iterations, f0));
            }
        }
        let ev = self.outputs(&x, u)?;
        let gp = &self.params.governor;
        let g = x[self.layout.g];
        if g < gp.g_min || g > gp.g_max {
            return Err(Error::Infeasible(format!(
                "opening g = {g:.6} outside [{}, {}]",
                gp.g_min, gp.g_max
            )));
        }
        if self.kind != ModelKind::Linearised && !(ev.outputs.h > 0.0) {
            return Err(Error::Infeasible(format!("head h = {} not positive", ev.outputs.h)));
        }
        Ok(Trim {
            residual: norm(&fx),
            state: x,
            inputs: *u,
            outputs: ev.outputs,
            g,
            iterations,
        })
    }

    fn trim_failure(&self, x: &[f64], u: &PlantInputs, iterations: usize, residual: f64) -> Error {
        let gp = &self.params.governor;
        let g = x[self.layout.g];
        let mut dx = vec![0.0; self.dim()];
        let at_limit = g >= gp.g_max - 1e-6 || g <= gp.g_min + 1e-6;
        let bad_eval = self
            .evaluate(
                x,
                u,
                &EvalContext {
                    static_penstock: true,
                    ..Default::default()
                },
                &mut dx,
            )
            .is_err();
        if at_limit || bad_eval {
            Error::Infeasible(format!(
                "P* = {} not attainable at omega* = {} (opening {g:.4} at limit or outside the turbine's range)",
                u.p_star, u.omega_star
            ))
        } else {
            Error::TrimNoConvergence { iterations, residual }
        }
    }

    /// Central-difference Jacobian `∂f/∂x`, steps `max(1e-6, 1e-6 |x_i|)`.
    pub fn jacobian_fd(&self, x: &[f64], u: &PlantInputs) -> Result<DMatrix<f64>> {
        self.jacobian_fd_scaled(x, u, 1.0)
    }

    /// As [`Plant::jacobian_fd`] with all steps multiplied by `scale`.
    pub fn jacobian_fd_scaled(&self, x: &[f64], u: &PlantInputs, scale: f64) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut jac = DMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        for j in 0..n {
            let h = scale * (1e-6f64).max(1e-6 * x[j].abs());
            xp[j] = x[j] + h;
            let fp = self.derivatives(&xp, u)?;
            xp[j] = x[j] - h;
            let fm = self.derivatives(&xp, u)?;
            xp[j] = x[j];
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    /// `κ sin α_1R` at opening `g` is allowed (Euler only).
    pub fn opening_admissible(&self, g: f64) -> bool {
        self.kind != ModelKind::Euler || euler_kinematics(g, &self.params.turbine, self.flow_ratio).is_ok()
    }

    /// Penstock wave value to pre-fill the delay line with at state `x`.
    pub fn equilibrium_wave(&self, x: &[f64], u: &PlantInputs) -> Result<Option<f64>> {
        if !self.uses_delay_line() {
            return Ok(None);
        }
        let q = self.outputs(x, u)?.outputs.q;
        Ok(Some(delay_equilibrium_wave(q, &self.params.waterway)))
    }

    pub fn penstock_mode(&self) -> PenstockMode {
        self.params.penstock_mode
    }
}

fn ieee_outputs_struct(p_m: f64, q: f64, h: f64) -> TurbineOutputs {
    TurbineOutputs {
        p_m,
        t_m: 0.0,
        q,
        h,
        eta_h: (h * q != 0.0).then(|| p_m / (h * q)),
        ..Default::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> PlantParams {
        PlantParams::reference()
    }

    #[test]
    fn state_dimensions() {
        let p = reference();
        let e = Plant::assemble(ModelKind::Euler, p).unwrap();
        assert_eq!(e.dim(), 1 + 1 + 2 + 4 + 3);
        let l = Plant::assemble(ModelKind::Linearised, p).unwrap();
        assert_eq!(l.dim(), 5);
        let i = Plant::assemble(ModelKind::Ieee, p).unwrap();
        assert_eq!(i.layout().turbine, None);
        assert_eq!(i.dim(), 1 + 2 + 4 + 3);
        let h = Plant::assemble(ModelKind::Hygov, p).unwrap();
        assert_eq!(h.layout().names(), ["omega", "q", "gov_integ", "gov_dfilt", "g"]);
    }

    #[test]
    fn layout_is_a_bijection() {
        for kind in ModelKind::ALL {
            let pl = Plant::assemble(kind, reference()).unwrap();
            let l = pl.layout();
            for (i, n) in l.names().iter().enumerate() {
                assert_eq!(l.index(n), Some(i));
            }
        }
    }

    #[test]
    fn euler_rotor_derivative_composition() {
        let p = reference();
        let pl = Plant::assemble(ModelKind::Euler, p).unwrap();
        let u = PlantInputs::new(0.7, 1.0);
        let x = pl.initial_guess(&u);
        let ev = pl.outputs(&x, &u).unwrap();
        let dx = pl.derivatives(&x, &u).unwrap();
        // torque balance at omega = 1 reduces to (P_m - P*)/T_a
        assert_relative_eq!(dx[0], (ev.outputs.p_m - 0.7) / p.turbine.t_a, epsilon = 1e-15);
    }

    #[test]
    fn hygov_lossless_trim() {
        let mut p = reference();
        p.turbine.a_t = 1.0;
        p.turbine.q_nl = 0.0;
        p.turbine.d_t = 0.0;
        let pl = Plant::assemble(ModelKind::Hygov, p).unwrap();
        let tr = pl.trim(&PlantInputs::new(0.5, 1.0)).unwrap();
        assert_relative_eq!(tr.g, 0.5, epsilon = 1e-9);
        assert_relative_eq!(tr.outputs.q, 0.5, epsilon = 1e-9);
        assert_relative_eq!(tr.outputs.h, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn every_model_trims_at_reference_point() {
        for kind in ModelKind::ALL {
            let pl = Plant::assemble(kind, reference()).unwrap();
            let tr = pl.trim(&PlantInputs::new(0.6, 1.0)).unwrap();
            assert!(tr.residual < 1e-10, "{kind}: {}", tr.residual);
            assert_relative_eq!(tr.outputs.p_m, 0.6, epsilon = 1e-9);
        }
    }

    #[test]
    fn full_flow_head() {
        // full flow needs g = 1/√0.931 > 1
        let mut p = reference();
        p.governor.g_max = 1.2;
        let pl = Plant::assemble(ModelKind::Ieee, p).unwrap();
        // find P* with q = 1 at rated speed: h = 0.931, g = q / √h
        let h = 0.931f64;
        let t = reference().turbine;
        let p_star = t.a_t * h * (1.0 - t.q_nl);
        let tr = pl.trim(&PlantInputs::new(p_star, 1.0)).unwrap();
        assert_relative_eq!(tr.outputs.q, 1.0, epsilon = 1e-9);
        assert_relative_eq!(tr.outputs.h, 0.931, epsilon = 1e-9);
    }

    #[test]
    fn no_load_trim() {
        let pl = Plant::assemble(ModelKind::Ieee, reference()).unwrap();
        let tr = pl.trim(&PlantInputs::new(0.0, 1.0)).unwrap();
        assert!(tr.outputs.p_m.abs() < 1e-9);
        assert!(tr.g > 0.05 && tr.g < 0.1, "g = {}", tr.g);
    }

    #[test]
    fn infeasible_point_reported() {
        let pl = Plant::assemble(ModelKind::Euler, reference()).unwrap();
        let err = pl.trim(&PlantInputs::new(1.2, 0.6)).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err}");
    }

    #[test]
    fn inelastic_and_improper_variants_trim() {
        for (mode, order) in [
            (PenstockMode::Inelastic, crate::TanhOrder::new(0, 0)),
            (PenstockMode::LumpedTanh, crate::TanhOrder::new(1, 1)),
            (PenstockMode::TravellingWaveDelay, crate::TanhOrder::default()),
        ] {
            let mut p = reference();
            p.penstock_mode = mode;
            p.tanh_order = order;
            for kind in [ModelKind::Euler, ModelKind::Ieee] {
                let pl = Plant::assemble(kind, p).unwrap();
                let tr = pl.trim(&PlantInputs::new(0.6, 1.0)).unwrap();
                assert_relative_eq!(tr.outputs.p_m, 0.6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn converter_lag_adds_state() {
        let mut p = reference();
        p.converter_lag = Some(0.2);
        let pl = Plant::assemble(ModelKind::Hygov, p).unwrap();
        assert_eq!(pl.layout().index("p_g"), Some(2));
        assert!(pl.trim(&PlantInputs::new(0.6, 1.0)).is_ok());
    }
}
