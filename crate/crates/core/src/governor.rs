//! PID speed governor without droop.
//!
//! Signal chain: error `Δω = ω* − ω` → PID with filtered derivative → clamp
//! to `[g_min, g_max]` → slew window → servo lag `1/(1 + T_G s)` → `g`.
//! The slew window is supplied by the integrator: it is the last accepted
//! command plus or minus `rate_limit` times the elapsed part of the step.

use nalgebra::{Matrix3, Vector3};

use crate::error::Result;
use crate::params::GovernorParams;
use crate::sim::rk4_step;

/// Slew window, as a fraction of the step, used to classify the governor
/// mode at the start of a step (a zero-width window would read any pending
/// command change as a limit hit).
pub const START_WINDOW: f64 = 1e-6;

/// Bounds imposed on the command during one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlewWindow {
    pub lo: f64,
    pub hi: f64,
}

impl SlewWindow {
    /// Window reachable from `prev` after `elapsed` seconds.
    pub fn around(prev: f64, rate: f64, elapsed: f64) -> Self {
        let d = rate * elapsed.max(0.0);
        Self {
            lo: prev - d,
            hi: prev + d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GovernorEval {
    /// Derivatives of (integ, dfilt, g).
    pub deriv: [f64; 3],
    /// Unlimited PID output.
    pub g_star: f64,
    /// Command after saturation and slew window.
    pub g_cmd: f64,
    /// True when integration is held by anti-windup.
    pub integrator_held: bool,
}

/// Governor state derivatives for states `(integ, dfilt, g)` and speed
/// error `d_omega`.
pub fn governor_derivatives(
    integ: f64,
    dfilt: f64,
    g: f64,
    d_omega: f64,
    p: &GovernorParams,
    window: Option<SlewWindow>,
) -> GovernorEval {
    let g_star = p.k_gp * d_omega + integ + p.k_gd * (d_omega - dfilt) / p.t_f;
    let mut g_cmd = g_star.clamp(p.g_min, p.g_max);
    if let Some(w) = window {
        g_cmd = g_cmd.clamp(w.lo, w.hi);
    }
    // Hold the integrator while the command is cut off in the direction the
    // error is pushing it.
    let held = (g_cmd < g_star && d_omega > 0.0) || (g_cmd > g_star && d_omega < 0.0);
    GovernorEval {
        deriv: [
            if held { 0.0 } else { p.k_gi * d_omega },
            (d_omega - dfilt) / p.t_f,
            (g_cmd - g) / p.t_g,
        ],
        g_star,
        g_cmd,
        integrator_held: held,
    }
}

/// Constraint that shapes the command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Free,
    SlewHigh,
    SlewLow,
    Max,
    Min,
}

impl Constraint {
    /// Slope of the constraint edge.
    pub fn edge_rate(self, rate_limit: f64) -> f64 {
        match self {
            Constraint::SlewHigh => rate_limit,
            Constraint::SlewLow => -rate_limit,
            _ => 0.0,
        }
    }
}

/// Constraint set of the governor, held fixed over part of a time step so
/// that the integrator sees a smooth vector field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GovernorMode {
    pub constraint: Constraint,
    pub held: bool,
    /// The command slides along the constraint edge with the integrator
    /// partly active (see [`sliding_fraction`]).
    pub sliding: bool,
}

impl GovernorMode {
    /// Mode realised by an unconstrained evaluation.
    pub fn of(ev: &GovernorEval, p: &GovernorParams, window: SlewWindow) -> Self {
        let constraint = if ev.g_cmd == ev.g_star {
            Constraint::Free
        } else if ev.g_cmd == window.hi {
            Constraint::SlewHigh
        } else if ev.g_cmd == window.lo {
            Constraint::SlewLow
        } else if ev.g_cmd == p.g_max {
            Constraint::Max
        } else {
            Constraint::Min
        };
        Self {
            constraint,
            held: ev.integrator_held,
            sliding: false,
        }
    }
}

/// Governor derivatives with the constraint set fixed to `mode`; the
/// command follows the chosen edge even where another would apply.
pub fn governor_derivatives_in(
    integ: f64,
    dfilt: f64,
    g: f64,
    d_omega: f64,
    p: &GovernorParams,
    window: SlewWindow,
    mode: GovernorMode,
) -> GovernorEval {
    let g_star = p.k_gp * d_omega + integ + p.k_gd * (d_omega - dfilt) / p.t_f;
    let g_cmd = match mode.constraint {
        Constraint::Free => g_star,
        Constraint::SlewHigh => window.hi,
        Constraint::SlewLow => window.lo,
        Constraint::Max => p.g_max,
        Constraint::Min => p.g_min,
    };
    GovernorEval {
        deriv: [
            if mode.held { 0.0 } else { p.k_gi * d_omega },
            (d_omega - dfilt) / p.t_f,
            (g_cmd - g) / p.t_g,
        ],
        g_star,
        g_cmd,
        integrator_held: mode.held,
    }
}

/// Fraction of the integrator rate that keeps `g*` moving with a constraint
/// edge of slope `edge_rate` while the command slides along it.
///
/// Conditional integration switches the integrator off when the command is
/// cut off by a limit; if the free integrator would push `g*` across the edge
/// and the held one pulls it back, the motion stays on the edge with the
/// integrator partly active. `d_omega_rate` is the time derivative of the
/// speed error.
pub fn sliding_fraction(d_omega: f64, d_omega_rate: f64, dfilt: f64, edge_rate: f64, p: &GovernorParams) -> f64 {
    let dfilt_rate = (d_omega - dfilt) / p.t_f;
    let rest = p.k_gp * d_omega_rate + p.k_gd * (d_omega_rate - dfilt_rate) / p.t_f;
    (edge_rate - rest) / (p.k_gi * d_omega)
}

/// Mode that follows `mode` at a state where the sliding fraction is `a`.
pub fn after_sliding(mode: GovernorMode, a: f64) -> GovernorMode {
    if a > 1.0 {
        // the free integrator no longer crosses the edge
        GovernorMode {
            constraint: Constraint::Free,
            held: false,
            sliding: false,
        }
    } else if a < 0.0 {
        // the held integrator no longer returns to it
        GovernorMode {
            held: true,
            sliding: false,
            ..mode
        }
    } else {
        mode
    }
}

/// Sliding mode to try when the governor switches from `a` to `b`: the hold
/// toggles while the command sits on a constraint edge.
pub fn sliding_candidate(a: GovernorMode, b: GovernorMode) -> Option<GovernorMode> {
    let free = |m: GovernorMode| m.constraint == Constraint::Free && !m.held;
    let edge = match (free(a), free(b)) {
        (true, false) if b.held => b.constraint,
        (false, true) if a.held => a.constraint,
        _ => return None,
    };
    Some(GovernorMode {
        constraint: edge,
        held: false,
        sliding: true,
    })
}

/// Most regime switches resolved within one step.
const MAX_SPLITS: usize = 6;
/// Switch-time resolution as a fraction of the step.
const SWITCH_TOL: f64 = 1e-10;

/// A system integrated with the governor mode frozen over each sub-step.
pub(crate) trait Switched {
    /// State reached after `h` seconds from the current one under `mode`.
    fn trial(&self, h: f64, mode: GovernorMode) -> Result<Vec<f64>>;
    /// Mode valid at `x`, reached after `h` seconds under `mode`.
    fn realised(&self, x: &[f64], h: f64, mode: GovernorMode) -> Result<GovernorMode>;
    /// Mode entered at the current state when the logic switches from `a`
    /// to `b`.
    fn entered(&self, a: GovernorMode, b: GovernorMode) -> Result<GovernorMode>;
    /// Moves to `x`, reached after `h` seconds under `mode`.
    fn accept(&mut self, x: Vec<f64>, h: f64, mode: GovernorMode) -> Result<()>;
}

/// Advances `sys` by `dt` starting in `mode`. When the mode changes inside
/// the step, the switch time is located by bisection and the step is split
/// there. Returns the mode at the end of the step.
pub(crate) fn switched_step<S: Switched>(sys: &mut S, dt: f64, mut mode: GovernorMode) -> Result<GovernorMode> {
    let mut remaining = dt;
    for split in 0..=MAX_SPLITS {
        let next = sys.trial(remaining, mode)?;
        if split == MAX_SPLITS || sys.realised(&next, remaining, mode)? == mode {
            sys.accept(next, remaining, mode)?;
            return Ok(mode);
        }
        let (mut lo, mut hi) = (0.0, remaining);
        let mut after = None;
        while hi - lo > SWITCH_TOL * dt {
            let mid = 0.5 * (lo + hi);
            let x = sys.trial(mid, mode)?;
            let r = sys.realised(&x, mid, mode)?;
            if r == mode {
                lo = mid;
            } else {
                hi = mid;
                after = Some(r);
            }
        }
        let after = match after {
            Some(r) => r,
            None => {
                let x = sys.trial(hi, mode)?;
                sys.realised(&x, hi, mode)?
            }
        };
        if lo > 0.0 {
            let x = sys.trial(lo, mode)?;
            sys.accept(x, lo, mode)?;
            remaining -= lo;
        }
        mode = if mode.sliding { after } else { sys.entered(mode, after)? };
    }
    unreachable!()
}

/// Governor state with the rate limiter memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GovernorState {
    pub integ: f64,
    pub dfilt: f64,
    pub g: f64,
    pub g_cmd_prev: f64,
}

impl GovernorState {
    /// Equilibrium at opening `g` with zero speed error.
    pub fn settled(g: f64) -> Self {
        Self {
            integ: g,
            dfilt: 0.0,
            g,
            g_cmd_prev: g,
        }
    }
}

/// The governor alone, driven by a constant speed error.
struct Standalone<'a> {
    state: GovernorState,
    d_omega: f64,
    p: &'a GovernorParams,
}

impl Standalone<'_> {
    fn window(&self, elapsed: f64) -> SlewWindow {
        SlewWindow::around(self.state.g_cmd_prev, self.p.rate_limit, elapsed)
    }

    fn eval(&self, x: &[f64], elapsed: f64, mode: GovernorMode) -> (GovernorEval, f64) {
        let mut ev = governor_derivatives_in(x[0], x[1], x[2], self.d_omega, self.p, self.window(elapsed), mode);
        let mut a = 0.0;
        if mode.sliding {
            a = sliding_fraction(
                self.d_omega,
                0.0,
                x[1],
                mode.constraint.edge_rate(self.p.rate_limit),
                self.p,
            );
            ev.deriv[0] = a * self.p.k_gi * self.d_omega;
        }
        (ev, a)
    }

    fn classify(&self, x: &[f64], elapsed: f64) -> GovernorMode {
        let w = self.window(elapsed);
        GovernorMode::of(
            &governor_derivatives(x[0], x[1], x[2], self.d_omega, self.p, Some(w)),
            self.p,
            w,
        )
    }

    fn x(&self) -> [f64; 3] {
        [self.state.integ, self.state.dfilt, self.state.g]
    }
}

impl Switched for Standalone<'_> {
    fn trial(&self, h: f64, mode: GovernorMode) -> Result<Vec<f64>> {
        rk4_step(&self.x(), h, |c, x, dx| {
            dx.copy_from_slice(&self.eval(x, c * h, mode).0.deriv);
            Ok(())
        })
    }

    fn realised(&self, x: &[f64], h: f64, mode: GovernorMode) -> Result<GovernorMode> {
        Ok(if mode.sliding {
            after_sliding(mode, self.eval(x, h, mode).1)
        } else {
            self.classify(x, h)
        })
    }

    fn entered(&self, a: GovernorMode, b: GovernorMode) -> Result<GovernorMode> {
        Ok(match sliding_candidate(a, b) {
            Some(c) if (0.0..=1.0).contains(&self.eval(&self.x(), 0.0, c).1) => c,
            _ => b,
        })
    }

    fn accept(&mut self, x: Vec<f64>, h: f64, mode: GovernorMode) -> Result<()> {
        let g_cmd = self.eval(&x, h, mode).0.g_cmd;
        self.state = GovernorState {
            integ: x[0],
            dfilt: x[1],
            g: x[2],
            g_cmd_prev: g_cmd,
        };
        Ok(())
    }
}

/// Advances the governor alone by one step of length `dt` with the speed
/// held constant, locating limiter switches inside the step. Returns the
/// new state and the opening `g`.
pub fn governor_step(
    state: GovernorState,
    omega_star: f64,
    omega: f64,
    dt: f64,
    p: &GovernorParams,
) -> (GovernorState, f64) {
    let mut sys = Standalone {
        state,
        d_omega: omega_star - omega,
        p,
    };
    let mode = sys.classify(&sys.x(), START_WINDOW * dt);
    // only plain arithmetic inside: cannot fail
    switched_step(&mut sys, dt, mode).expect("governor step");
    (sys.state, sys.state.g)
}

/// Linear realization `(A, B, C, D)` from `Δω` to `g`, states
/// `(integ, dfilt, g)`, limits inactive.
pub fn governor_linear_matrices(p: &GovernorParams) -> (Matrix3<f64>, Vector3<f64>, Vector3<f64>, f64) {
    let a = Matrix3::new(
        0.0,
        0.0,
        0.0,
        0.0,
        -1.0 / p.t_f,
        0.0,
        1.0 / p.t_g,
        -p.k_gd / (p.t_f * p.t_g),
        -1.0 / p.t_g,
    );
    let b = Vector3::new(p.k_gi, 1.0 / p.t_f, (p.k_gp + p.k_gd / p.t_f) / p.t_g);
    let c = Vector3::new(0.0, 0.0, 1.0);
    (a, b, c, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::PlantParams;
    use nalgebra::Complex;

    fn gp() -> GovernorParams {
        PlantParams::reference().governor
    }

    #[test]
    fn zero_error_holds_opening() {
        let p = gp();
        let mut s = GovernorState::settled(0.6);
        for _ in 0..1000 {
            s = governor_step(s, 1.0, 1.0, 1e-2, &p).0;
        }
        assert_eq!(s.g, 0.6);
    }

    #[test]
    fn step_error_slope_capped() {
        let p = gp();
        let dt = 1e-3;
        let mut s = GovernorState::settled(0.5);
        let mut prev = s.g_cmd_prev;
        for _ in 0..1000 {
            s = governor_step(s, 1.05, 1.0, dt, &p).0;
            assert!((s.g_cmd_prev - prev).abs() <= p.rate_limit * dt + 1e-12);
            prev = s.g_cmd_prev;
        }
        // the ramp is active: the PID asks for far more than the limiter allows
        assert!((s.g_cmd_prev - 0.5 - p.rate_limit * 1.0).abs() < 1e-9);
    }

    #[test]
    fn persistent_error_saturates_without_windup() {
        let p = gp();
        let mut s = GovernorState::settled(0.5);
        for _ in 0..60000 {
            s = governor_step(s, 1.01, 1.0, 1e-2, &p).0;
        }
        assert!((s.g - p.g_max).abs() < 1e-6);
        // integrator stopped where the command reached the limit (located to
        // rounding)
        let g_star = p.k_gp * 0.01 + s.integ + p.k_gd * (0.01 - s.dfilt) / p.t_f;
        assert!(g_star >= p.g_max - 1e-12 && g_star < p.g_max + 0.01, "{g_star}");
        let before = s.integ;
        for _ in 0..20000 {
            s = governor_step(s, 1.01, 1.0, 1e-2, &p).0;
        }
        assert_eq!(s.integ, before);
    }

    #[test]
    fn linear_realization_matches_pid_with_filter() {
        let p = gp();
        let (a, b, c, d) = governor_linear_matrices(&p);
        for k in 0..10 {
            let s = Complex::new(0.0, 0.003 * 2.5f64.powi(k));
            let m = a.map(|v| Complex::new(-v, 0.0)) + nalgebra::Matrix3::from_diagonal_element(s);
            let x = m.lu().solve(&b.map(|v| Complex::new(v, 0.0))).unwrap();
            let got = x[2] * c[2] + d;
            let want = (p.k_gi / s + p.k_gp + p.k_gd * s / (1.0 + p.t_f * s)) / (1.0 + p.t_g * s);
            assert!((got - want).norm() < 1e-10 * want.norm().max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn integrator_pole_at_origin() {
        let (a, ..) = governor_linear_matrices(&gp());
        let ev = a.complex_eigenvalues();
        assert!(ev.iter().any(|l| l.norm() < 1e-12));
    }

    #[test]
    fn pi_case_decouples_filter() {
        let mut p = gp();
        p.k_gd = 0.0;
        let (a, b, ..) = governor_linear_matrices(&p);
        // dfilt no longer reaches g
        assert_eq!(a[(2, 1)], 0.0);
        assert_eq!(b[2], p.k_gp / p.t_g);
    }
}
