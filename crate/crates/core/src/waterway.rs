//! Headrace tunnel, surge tank and penstock.
//!
//! Composition (all per unit, plant base):
//!
//! ```text
//! n       = q_hr - q                         net flow into the surge tank
//! h_node  = h_st - f_p0 n|n|                 head at the tank junction
//! T_w2 q_hr' = 1 - h_node - f_p2 q_hr|q_hr|
//! C_s  h_st' = n
//! h       = h_node + h_pen - f_p1 q|q|       turbine head
//! ```
//!
//! `h_pen` is the dynamic penstock head: either the travelling-wave form
//! with a `2 T_e` delay line, or a rational approximation of
//! `-Z_0 tanh(s T_e)`. The orifice term enters with the sign drawn in the
//! block diagram; it vanishes at every equilibrium (n = 0) and so does its
//! first derivative.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::{PenstockMode, TanhOrder, WaterwayParams};
use crate::units::friction_head_loss;

/// `dq_hr/dt` for a tunnel discharging against head `h_down`.
pub fn headrace_derivative(q_hr: f64, h_down: f64, w: &WaterwayParams) -> f64 {
    (1.0 - h_down - friction_head_loss(w.f_p2, q_hr)) / w.t_w2
}

/// `dh_st/dt` from the flow balance at the tank.
pub fn surge_tank_derivative(q_hr: f64, q_pen: f64, w: &WaterwayParams) -> f64 {
    (q_hr - q_pen) / w.c_s
}

/// Head at the tank junction given net inflow `q_net`.
pub fn surge_node_head(h_st: f64, q_net: f64, w: &WaterwayParams) -> f64 {
    h_st - friction_head_loss(w.f_p0, q_net)
}

/// Ring buffer holding the travelling-wave variable with timestamps.
#[derive(Debug, Clone)]
pub struct DelayLine {
    delay: f64,
    samples: VecDeque<(f64, f64)>,
}

impl DelayLine {
    /// A line of length `delay` whose whole history (back to
    /// `t0 - delay - margin`) holds the constant `value`.
    pub fn prefilled(delay: f64, t0: f64, value: f64, margin: f64) -> Self {
        let mut samples = VecDeque::new();
        samples.push_back((t0 - delay - margin.max(0.0) - 1e-9, value));
        samples.push_back((t0, value));
        Self { delay, samples }
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn newest_time(&self) -> f64 {
        self.samples.back().map(|s| s.0).unwrap_or(f64::NEG_INFINITY)
    }

    /// Appends a sample; times must increase. Samples no longer reachable by
    /// `sample_delayed` from the newest time are dropped.
    pub fn push(&mut self, t: f64, value: f64) {
        debug_assert!(t > self.newest_time());
        self.samples.push_back((t, value));
        let horizon = t - self.delay;
        while self.samples.len() > 2 && self.samples[1].0 <= horizon {
            self.samples.pop_front();
        }
    }

    /// Linearly interpolated value at absolute time `t`.
    pub fn sample(&self, t: f64) -> Result<f64> {
        let oldest = self.samples.front().map(|s| s.0).unwrap_or(f64::INFINITY);
        let newest = self.newest_time();
        // Round-off from stage times must not trip the range check.
        let tol = 1e-9 * (1.0 + t.abs());
        if t < oldest - tol || t > newest + tol {
            return Err(Error::InsufficientHistory { needed: t, oldest });
        }
        let t = t.clamp(oldest, newest);
        let idx = self.samples.partition_point(|s| s.0 < t);
        if idx == 0 {
            return Ok(self.samples[0].1);
        }
        let (t1, v1) = self.samples[idx];
        let (t0, v0) = self.samples[idx - 1];
        if t1 == t0 {
            return Ok(v1);
        }
        Ok(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }

    /// Value at `t - delay`.
    pub fn sample_delayed(&self, t: f64) -> Result<f64> {
        self.sample(t - self.delay)
    }
}

/// Dynamic penstock head of the travelling-wave form, with the wave variable
/// delayed by `2 T_e` already looked up. Returns `(head, wave value at t)`;
/// the second element is what must be pushed into the delay line.
pub fn penstock_delay_head(q: f64, delayed_wave: f64, w: &WaterwayParams) -> (f64, f64) {
    let head = -w.z_0 * q + delayed_wave;
    let wave = 2.0 * w.z_0 * q - delayed_wave;
    (head, wave)
}

/// Wave variable at equilibrium flow `q`.
pub fn delay_equilibrium_wave(q: f64, w: &WaterwayParams) -> f64 {
    w.z_0 * q
}

/// Numerator and denominator of the truncated tanh product in `p = s T_e`
/// (ascending coefficients).
pub fn tanh_rational(order: TanhOrder) -> (Vec<f64>, Vec<f64>) {
    let mut num = vec![0.0, 1.0];
    for n in 1..=order.n_num {
        let c = 1.0 / (n as f64 * PI).powi(2);
        num = poly_mul(&num, &[1.0, 0.0, c]);
    }
    let mut den = vec![1.0];
    for n in 1..=order.n_den {
        let c = (2.0 / ((2 * n - 1) as f64 * PI)).powi(2);
        den = poly_mul(&den, &[1.0, 0.0, c]);
    }
    (num, den)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// State-space realization of the penstock head response to flow:
/// `x' = A x + B q`, `h_pen = C x + E q'`.
///
/// `E` is non-zero only when the rational approximation is improper
/// (`n_den == n_num`) and for the rigid column, where it is `-T_w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedPenstock {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub e: f64,
}

impl LumpedPenstock {
    /// Controllable canonical realization of `-Z_0 N(p)/D(p)`.
    pub fn new(order: TanhOrder, w: &WaterwayParams) -> Self {
        let (mut num, den) = tanh_rational(order);
        for c in num.iter_mut() {
            *c *= -w.z_0;
        }
        let n = den.len() - 1;
        let lead = den[n];
        let den: Vec<f64> = den.iter().map(|c| c / lead).collect();
        num.iter_mut().for_each(|c| *c /= lead);
        // Improper by one degree: split off E p with N = E_p p D + R.
        let mut e_p = 0.0;
        if num.len() - 1 == n + 1 {
            e_p = num[n + 1];
            for (i, d) in den.iter().enumerate() {
                num[i + 1] -= e_p * d;
            }
            num.truncate(n + 1);
        }
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = -den[j];
        }
        let mut b = DVector::zeros(n);
        if n > 0 {
            b[n - 1] = 1.0;
        }
        let mut c = DVector::zeros(n);
        for (i, v) in num.iter().enumerate().take(n) {
            c[i] = *v;
        }
        Self {
            a: a / w.t_e,
            b: b / w.t_e,
            c,
            e: e_p * w.t_e,
        }
    }

    /// Rigid water column `h_pen = -T_w q'`.
    pub fn inelastic(w: &WaterwayParams) -> Self {
        Self {
            a: DMatrix::zeros(0, 0),
            b: DVector::zeros(0),
            c: DVector::zeros(0),
            e: -w.t_w,
        }
    }

    pub fn for_mode(mode: PenstockMode, order: TanhOrder, w: &WaterwayParams) -> Option<Self> {
        match mode {
            PenstockMode::LumpedTanh => Some(Self::new(order, w)),
            PenstockMode::Inelastic => Some(Self::inelastic(w)),
            PenstockMode::TravellingWaveDelay => None,
        }
    }

    pub fn states(&self) -> usize {
        self.b.len()
    }

    pub fn is_proper(&self) -> bool {
        self.e == 0.0
    }

    /// State derivatives into `out` and the state part `C x` of the head.
    pub fn derivatives(&self, x: &[f64], q: f64, out: &mut [f64]) -> f64 {
        let n = self.states();
        let mut head = 0.0;
        for i in 0..n {
            let mut acc = self.b[i] * q;
            for j in 0..n {
                acc += self.a[(i, j)] * x[j];
            }
            out[i] = acc;
            head += self.c[i] * x[i];
        }
        head
    }

    pub fn head(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.c.iter()).map(|(a, b)| a * b).sum()
    }

    /// States holding still under constant flow `q`.
    pub fn equilibrium(&self, q: f64) -> Vec<f64> {
        let n = self.states();
        if n == 0 {
            return Vec::new();
        }
        let rhs = -&self.b * q;
        self.a
            .clone()
            .lu()
            .solve(&rhs)
            .map(|v| v.iter().copied().collect())
            .unwrap_or_else(|| vec![0.0; n])
    }

    /// `h_pen/q` at `s = j 2 pi f`.
    pub fn response(&self, f: f64) -> Complex64 {
        let s = Complex64::new(0.0, 2.0 * PI * f);
        let n = self.states();
        let mut out = s * self.e;
        if n > 0 {
            let m = DMatrix::from_fn(n, n, |i, j| {
                let d = if i == j { s } else { Complex64::new(0.0, 0.0) };
                d - Complex64::new(self.a[(i, j)], 0.0)
            });
            let rhs = DVector::from_fn(n, |i, _| Complex64::new(self.b[i], 0.0));
            if let Some(v) = m.lu().solve(&rhs) {
                out += (0..n).map(|i| v[i] * self.c[i]).sum::<Complex64>();
            } else {
                out = Complex64::new(f64::INFINITY, f64::INFINITY);
            }
        }
        out
    }
}

/// Penstock head/flow ratio from the continuous wave solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenstockResponse {
    Value(Complex64),
    /// Lossless quarter-wave resonance: `tanh(s T_e)` has a pole here.
    Resonance,
}

impl PenstockResponse {
    pub fn value(self) -> Option<Complex64> {
        match self {
            PenstockResponse::Value(v) => Some(v),
            PenstockResponse::Resonance => None,
        }
    }
}

/// Exact `h/q` of the penstock at frequency `f` [Hz].
///
/// The lossy form uses the distributed resistance linearised about rated
/// flow, `r = 2 f_p1 / T_w`, so that the DC limit equals the incremental
/// friction resistance `-2 f_p1`.
pub fn exact_penstock_response(f: f64, w: &WaterwayParams, lossy: bool) -> PenstockResponse {
    let omega = 2.0 * PI * f;
    if !lossy {
        // tanh(j x) = j tan(x)
        let x = omega * w.t_e;
        if x.cos().abs() < 1e-9 {
            return PenstockResponse::Resonance;
        }
        return PenstockResponse::Value(Complex64::new(0.0, -w.z_0 * x.tan()));
    }
    let r = 2.0 * w.f_p1 / w.t_w;
    if f == 0.0 {
        return PenstockResponse::Value(Complex64::new(-w.z_0 * w.t_e * r, 0.0));
    }
    let s = Complex64::new(0.0, omega);
    let z = (s * s + s * r).sqrt();
    let factor = (Complex64::new(1.0, 0.0) + r / s).sqrt();
    PenstockResponse::Value(-w.z_0 * factor * (z * w.t_e).tanh())
}

/// Waterway state variables in plant order.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterwayState<'a> {
    pub h_st: f64,
    pub q_hr: f64,
    pub penstock: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterwayOutput {
    /// Turbine head excluding `e_coeff q'`.
    pub h: f64,
    /// Coefficient of `dq/dt` in the turbine head (rigid or improper
    /// penstock), zero otherwise.
    pub e_coeff: f64,
    pub h_node: f64,
    pub dh_st: f64,
    pub dq_hr: f64,
    /// Wave value to store when the travelling-wave penstock is used.
    pub wave: Option<f64>,
}

/// Penstock realization used by the composed waterway.
#[derive(Debug, Clone, PartialEq)]
pub enum Penstock {
    Delay,
    Lumped(LumpedPenstock),
}

impl Penstock {
    pub fn new(mode: PenstockMode, order: TanhOrder, w: &WaterwayParams) -> Self {
        LumpedPenstock::for_mode(mode, order, w)
            .map(Penstock::Lumped)
            .unwrap_or(Penstock::Delay)
    }

    pub fn states(&self) -> usize {
        match self {
            Penstock::Delay => 0,
            Penstock::Lumped(l) => l.states(),
        }
    }

    pub fn e_coeff(&self) -> f64 {
        match self {
            Penstock::Delay => 0.0,
            Penstock::Lumped(l) => l.e,
        }
    }
}

/// Full waterway evaluation for penstock flow `q`. Lumped penstock
/// derivatives go to `dpen`; `delayed_wave` must be given for the delay form.
pub fn waterway_derivatives(
    state: &WaterwayState<'_>,
    q: f64,
    penstock: &Penstock,
    delayed_wave: Option<f64>,
    w: &WaterwayParams,
    dpen: &mut [f64],
) -> Result<WaterwayOutput> {
    let q_net = state.q_hr - q;
    let h_node = surge_node_head(state.h_st, q_net, w);
    let (h_pen, wave) = match penstock {
        Penstock::Delay => {
            let d = delayed_wave.ok_or(Error::DelayLineRequired)?;
            let (h, x) = penstock_delay_head(q, d, w);
            (h, Some(x))
        }
        Penstock::Lumped(l) => (l.derivatives(state.penstock, q, dpen), None),
    };
    Ok(WaterwayOutput {
        h: h_node + h_pen - friction_head_loss(w.f_p1, q),
        e_coeff: penstock.e_coeff(),
        h_node,
        dh_st: surge_tank_derivative(state.q_hr, q, w),
        dq_hr: headrace_derivative(state.q_hr, h_node, w),
        wave,
    })
}
