//! Fixed-step RK4 integration, scenarios and traces.
//!
//! Scenario file: `key = value` header lines followed by events, e.g.
//!
//! ```text
//! model = euler
//! t_end = 250
//! dt = 0.001
//! P_star = 0.9
//! omega_star = 1.0
//! t=5.0 set P_star 0.3
//! ```
//!
//! Optional header keys: `penstock_mode`, `output_dt` (recording interval,
//! a multiple of `dt`).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::governor::{
    after_sliding, governor_derivatives, sliding_candidate, switched_step, GovernorMode, SlewWindow, Switched,
    START_WINDOW,
};
use crate::params::{parse_penstock_mode, PenstockMode, PlantParams};
use crate::plant::{EvalContext, Evaluation, ModelKind, Plant, PlantInputs};
use crate::waterway::DelayLine;

/// One classical RK4 step. `f(c, x, dx)` evaluates the derivative at stage
/// time fraction `c` of the step.
pub fn rk4_step<F>(x: &[f64], dt: f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(0.0, x, &mut k1)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    f(0.5, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    f(0.5, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    f(1.0, &tmp, &mut k4)?;
    Ok((0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Names of the output columns following the states in a trace.
pub const OUTPUT_NAMES: [&str; 8] = ["P_m", "T_m", "h", "q_plant", "eta_h", "g_cmd", "P_star", "omega_star"];

/// Time-stepping state of one plant.
#[derive(Debug, Clone)]
pub struct Simulator<'p> {
    plant: &'p Plant,
    x: Vec<f64>,
    t: f64,
    dt: f64,
    g_cmd_prev: f64,
    /// Governor mode carried into the next step while sliding along a limit.
    sliding: Option<GovernorMode>,
    delay: Option<DelayLine>,
    last_outputs: [f64; 8],
}

impl<'p> Simulator<'p> {
    /// Starts from `x0` at time `t0`, with the delay line (if any) holding
    /// the wave value that keeps `x0`'s penstock at rest.
    pub fn new(plant: &'p Plant, x0: Vec<f64>, inputs: &PlantInputs, t0: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Scenario("dt must be > 0".into()));
        }
        if x0.len() != plant.dim() {
            return Err(Error::Dimension {
                expected: plant.dim(),
                got: x0.len(),
            });
        }
        let delay = match plant.equilibrium_wave(&x0, inputs)? {
            Some(wave) => {
                let two_te = 2.0 * plant.params().waterway.t_e;
                if dt >= two_te {
                    return Err(Error::Scenario(format!(
                        "dt = {dt} must be below the penstock round-trip time {two_te}"
                    )));
                }
                Some(DelayLine::prefilled(two_te, t0, wave, dt))
            }
            None => None,
        };
        let g = x0[plant.layout().g];
        let mut sim = Self {
            plant,
            x: x0,
            t: t0,
            dt,
            g_cmd_prev: g,
            sliding: None,
            delay,
            last_outputs: [0.0; 8],
        };
        let ev = sim.eval_at(&sim.x, sim.t, inputs, 0.0, None)?;
        sim.g_cmd_prev = ev.g_cmd;
        sim.last_outputs = output_row(&ev, sim.g_cmd_prev, inputs);
        Ok(sim)
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn g_cmd(&self) -> f64 {
        self.g_cmd_prev
    }

    /// Outputs at the current time, ordered as [`OUTPUT_NAMES`].
    pub fn outputs(&self) -> [f64; 8] {
        self.last_outputs
    }

    fn window(&self, elapsed: f64) -> SlewWindow {
        SlewWindow::around(self.g_cmd_prev, self.plant.params().governor.rate_limit, elapsed)
    }

    fn context(&self, t: f64, elapsed: f64, mode: Option<GovernorMode>) -> EvalContext<'_> {
        EvalContext {
            t,
            window: Some(self.window(elapsed)),
            delay: self.delay.as_ref(),
            static_penstock: false,
            mode,
        }
    }

    /// Evaluation at state `x` reached `elapsed` seconds into the step.
    fn eval_at(
        &self,
        x: &[f64],
        t: f64,
        inputs: &PlantInputs,
        elapsed: f64,
        mode: Option<GovernorMode>,
    ) -> Result<Evaluation> {
        let mut dx = vec![0.0; x.len()];
        self.plant.evaluate(x, inputs, &self.context(t, elapsed, mode), &mut dx)
    }

    /// Mode the governor logic itself selects at `x`.
    fn classify(&self, x: &[f64], inputs: &PlantInputs, elapsed: f64) -> GovernorMode {
        let l = self.plant.layout();
        let p = &self.plant.params().governor;
        let w = self.window(elapsed);
        let ev = governor_derivatives(
            x[l.integ],
            x[l.dfilt],
            x[l.g],
            inputs.omega_star - x[l.omega],
            p,
            Some(w),
        );
        GovernorMode::of(&ev, p, w)
    }

    /// Mode valid at `x` after integrating under `mode`; equals `mode` while
    /// that mode still applies.
    fn realised(
        &self,
        x: &[f64],
        t: f64,
        inputs: &PlantInputs,
        elapsed: f64,
        mode: GovernorMode,
    ) -> Result<GovernorMode> {
        if !mode.sliding {
            return Ok(self.classify(x, inputs, elapsed));
        }
        let a = self
            .eval_at(x, t, inputs, elapsed, Some(mode))?
            .slide_fraction
            .unwrap_or(0.5);
        Ok(after_sliding(mode, a))
    }

    /// Mode entered when the governor switches from `a` to `b` at the
    /// current state: sliding if the hold toggles on a constraint edge and
    /// neither side leaves it.
    fn entered(&self, a: GovernorMode, b: GovernorMode, inputs: &PlantInputs) -> Result<GovernorMode> {
        let Some(candidate) = sliding_candidate(a, b) else {
            return Ok(b);
        };
        let ev = self.eval_at(&self.x, self.t, inputs, START_WINDOW * self.dt, Some(candidate))?;
        Ok(match ev.slide_fraction {
            Some(f) if (0.0..=1.0).contains(&f) => candidate,
            _ => b,
        })
    }

    /// RK4 over `h` from the current state under a fixed governor mode.
    fn trial(&self, inputs: &PlantInputs, h: f64, mode: GovernorMode) -> Result<Vec<f64>> {
        let plant = self.plant;
        let t0 = self.t;
        let wrap = |e: Error| Error::Integration {
            t: t0,
            state: self.x.clone(),
            source: Box::new(e),
        };
        let next = rk4_step(&self.x, h, |c, x, dx| {
            let ctx = self.context(t0 + c * h, c * h, Some(mode));
            plant.evaluate(x, inputs, &ctx, dx).map(|_| ())
        })
        .map_err(wrap)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(wrap(Error::Singular("non-finite state".into())));
        }
        Ok(next)
    }

    /// Moves to `next`, reached after `h` seconds, ending at time `t`.
    fn accept(&mut self, next: Vec<f64>, h: f64, t: f64, inputs: &PlantInputs, mode: GovernorMode) -> Result<()> {
        let ev = self
            .eval_at(&next, t, inputs, h, Some(mode))
            .map_err(|e| Error::Integration {
                t,
                state: next.clone(),
                source: Box::new(e),
            })?;
        self.x = next;
        self.t = t;
        if let (Some(line), Some(w)) = (self.delay.as_mut(), ev.wave) {
            line.push(self.t, w);
        }
        self.g_cmd_prev = ev.g_cmd;
        self.last_outputs = output_row(&ev, self.g_cmd_prev, inputs);
        Ok(())
    }

    /// Advances one step of `dt` with constant inputs.
    ///
    /// Saturation, slew limiting and the integrator hold make the right-hand
    /// side non-smooth. Each RK4 step runs with the governor's constraint set
    /// frozen; when the set changes inside the step, the switch time is
    /// located by bisection and the step is split there. Where the hold would
    /// chatter on a constraint edge, the motion slides along the edge.
    pub fn step(&mut self, inputs: &PlantInputs) -> Result<()> {
        let mode = match self.sliding {
            Some(m) => m,
            None => self.classify(&self.x, inputs, START_WINDOW * self.dt),
        };
        let t_end = self.t + self.dt;
        let dt = self.dt;
        let mut stepper = Stepper {
            sim: self,
            inputs,
            t_end,
        };
        let mode = switched_step(&mut stepper, dt, mode)?;
        self.sliding = mode.sliding.then_some(mode);
        Ok(())
    }
}

/// A simulator bound to the inputs of one step.
struct Stepper<'s, 'p> {
    sim: &'s mut Simulator<'p>,
    inputs: &'s PlantInputs,
    t_end: f64,
}

impl Stepper<'_, '_> {
    /// Time `h` seconds after the current state; the step end exactly when
    /// `h` reaches it.
    fn time_after(&self, h: f64) -> f64 {
        let t = self.sim.t + h;
        if (t - self.t_end).abs() <= 1e-9 * self.sim.dt {
            self.t_end
        } else {
            t
        }
    }
}

impl Switched for Stepper<'_, '_> {
    fn trial(&self, h: f64, mode: GovernorMode) -> Result<Vec<f64>> {
        self.sim.trial(self.inputs, h, mode)
    }

    fn realised(&self, x: &[f64], h: f64, mode: GovernorMode) -> Result<GovernorMode> {
        self.sim.realised(x, self.time_after(h), self.inputs, h, mode)
    }

    fn entered(&self, a: GovernorMode, b: GovernorMode) -> Result<GovernorMode> {
        self.sim.entered(a, b, self.inputs)
    }

    fn accept(&mut self, x: Vec<f64>, h: f64, mode: GovernorMode) -> Result<()> {
        let t = self.time_after(h);
        self.sim.accept(x, h, t, self.inputs, mode)
    }
}

fn output_row(ev: &Evaluation, g_cmd: f64, u: &PlantInputs) -> [f64; 8] {
    let o = &ev.outputs;
    [
        o.p_m,
        o.t_m,
        o.h,
        o.q,
        o.eta_h.unwrap_or(0.0),
        g_cmd,
        u.p_star,
        u.omega_star,
    ]
}

/// Advances `state` by one step. The rate limiter window is centred on the
/// command implied by `state`; the travelling-wave penstock is assumed to
/// have been at rest.
pub fn integrate_step(plant: &Plant, state: &[f64], inputs: &PlantInputs, dt: f64) -> Result<Vec<f64>> {
    let mut sim = Simulator::new(plant, state.to_vec(), inputs, 0.0, dt)?;
    sim.step(inputs)?;
    Ok(sim.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventInput {
    #[serde(rename = "P_star")]
    PStar,
    #[serde(rename = "omega_star")]
    OmegaStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub input: EventInput,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: ModelKind,
    pub t_end: f64,
    pub dt: f64,
    pub initial: PlantInputs,
    pub events: Vec<Event>,
    pub penstock_mode: Option<PenstockMode>,
    /// Recording interval; `None` records every step.
    pub output_dt: Option<f64>,
}

impl Scenario {
    pub fn new(model: ModelKind, t_end: f64, dt: f64, initial: PlantInputs) -> Self {
        Self {
            model,
            t_end,
            dt,
            initial,
            events: Vec::new(),
            penstock_mode: None,
            output_dt: None,
        }
    }

    pub fn with_event(mut self, t: f64, input: EventInput, value: f64) -> Self {
        self.events.push(Event { t, input, value });
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut model = None;
        let mut t_end = None;
        let mut dt = 1e-3;
        let mut p_star = None;
        let mut omega_star = 1.0;
        let mut penstock_mode = None;
        let mut output_dt = None;
        let mut events = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::Scenario(format!("line {}: {m}", i + 1));
            let num = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| err(format!("`{v}` is not a number")))
            };
            if let Some(rest) = line.strip_prefix("t=") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 4 || parts[1] != "set" {
                    return Err(err(format!("expected `t=<time> set <input> <value>`, got `{line}`")));
                }
                let input = match parts[2] {
                    "P_star" => EventInput::PStar,
                    "omega_star" => EventInput::OmegaStar,
                    other => return Err(err(format!("unknown input `{other}`"))),
                };
                events.push(Event {
                    t: num(parts[0])?,
                    input,
                    value: num(parts[3])?,
                });
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let v = v.trim();
            match k.trim() {
                "model" => model = Some(v.parse::<ModelKind>()?),
                "t_end" => t_end = Some(num(v)?),
                "dt" => dt = num(v)?,
                "P_star" => p_star = Some(num(v)?),
                "omega_star" => omega_star = num(v)?,
                "output_dt" => output_dt = Some(num(v)?),
                "penstock_mode" => {
                    penstock_mode =
                        Some(parse_penstock_mode(v).ok_or_else(|| err(format!("unknown penstock mode `{v}`")))?)
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        let s = Scenario {
            model: model.ok_or_else(|| Error::Scenario("missing `model`".into()))?,
            t_end: t_end.ok_or_else(|| Error::Scenario("missing `t_end`".into()))?,
            dt,
            initial: PlantInputs::new(
                p_star.ok_or_else(|| Error::Scenario("missing `P_star`".into()))?,
                omega_star,
            ),
            events,
            penstock_mode,
            output_dt,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Scenario("dt must be > 0".into()));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::Scenario("t_end must be > 0".into()));
        }
        on_grid(self.t_end, self.dt).ok_or_else(|| Error::Scenario("t_end must be a multiple of dt".into()))?;
        if let Some(o) = self.output_dt {
            on_grid(o, self.dt).ok_or_else(|| Error::Scenario("output_dt must be a multiple of dt".into()))?;
        }
        let mut last = 0.0;
        for e in &self.events {
            if e.t < last || e.t > self.t_end {
                return Err(Error::Scenario(format!(
                    "event at t = {} out of order or outside [0, t_end]",
                    e.t
                )));
            }
            on_grid(e.t, self.dt)
                .ok_or_else(|| Error::Scenario(format!("event time {} is not on the dt grid", e.t)))?;
            last = e.t;
        }
        for u in std::iter::once(self.initial.p_star).chain(
            self.events
                .iter()
                .filter(|e| e.input == EventInput::PStar)
                .map(|e| e.value),
        ) {
            if !(0.0..=1.2).contains(&u) {
                return Err(Error::Scenario(format!("P_star = {u} outside [0, 1.2]")));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        on_grid(self.t_end, self.dt).unwrap_or(0)
    }
}

/// `t / dt` when it is an integer (to rounding), else `None`.
fn on_grid(t: f64, dt: f64) -> Option<usize> {
    let k = (t / dt).round();
    ((t / dt - k).abs() < 1e-6 && k >= 0.0).then_some(k as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub model: ModelKind,
    pub dt: f64,
    pub state_names: Vec<String>,
    pub t: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub outputs: Vec<[f64; 8]>,
    pub events: Vec<Event>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn column_names(&self) -> Vec<String> {
        std::iter::once("t".to_string())
            .chain(self.state_names.iter().cloned())
            .chain(OUTPUT_NAMES.iter().map(|s| s.to_string()))
            .collect()
    }

    /// A state or output column by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        if name == "t" {
            return Some(self.t.clone());
        }
        if let Some(i) = self.state_names.iter().position(|n| n == name) {
            return Some(self.states.iter().map(|r| r[i]).collect());
        }
        let j = OUTPUT_NAMES.iter().position(|n| *n == name)?;
        Some(self.outputs.iter().map(|r| r[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.column_names().join(","))?;
        for k in 0..self.len() {
            let mut line = format!("{}", self.t[k]);
            for v in self.states[k].iter().chain(self.outputs[k].iter()) {
                line.push(',');
                line.push_str(&format!("{v}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn events_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": crate::SCHEMA_VERSION,
            "events": self.events,
        })
    }
}

/// Runs a scenario; on a mid-run failure the trace recorded so far is
/// returned with the error.
pub fn run_partial(
    scenario: &Scenario,
    params: &PlantParams,
) -> std::result::Result<SimTrace, (Error, Option<SimTrace>)> {
    scenario.validate().map_err(|e| (e, None))?;
    let mut params = *params;
    if let Some(m) = scenario.penstock_mode {
        params.penstock_mode = m;
    }
    let plant = Plant::assemble(scenario.model, params).map_err(|e| (e, None))?;
    let mut inputs = scenario.initial;
    let trim = plant.trim(&inputs).map_err(|e| (e, None))?;
    let mut sim = Simulator::new(&plant, trim.state, &inputs, 0.0, scenario.dt).map_err(|e| (e, None))?;
    let every = scenario
        .output_dt
        .and_then(|o| on_grid(o, scenario.dt))
        .unwrap_or(1)
        .max(1);
    let mut trace = SimTrace {
        model: scenario.model,
        dt: scenario.dt,
        state_names: plant.layout().names().to_vec(),
        t: Vec::new(),
        states: Vec::new(),
        outputs: Vec::new(),
        events: Vec::new(),
    };
    let event_steps: Vec<usize> = scenario
        .events
        .iter()
        .map(|e| on_grid(e.t, scenario.dt).unwrap())
        .collect();
    let n = scenario.steps();
    let mut next_event = 0;
    for k in 0..=n {
        while next_event < event_steps.len() && event_steps[next_event] == k {
            let e = scenario.events[next_event];
            match e.input {
                EventInput::PStar => inputs.p_star = e.value,
                EventInput::OmegaStar => inputs.omega_star = e.value,
            }
            trace.events.push(e);
            next_event += 1;
        }
        if k % every == 0 || k == n {
            trace.t.push(k as f64 * scenario.dt);
            trace.states.push(sim.state().to_vec());
            let mut o = sim.outputs();
            o[6] = inputs.p_star;
            o[7] = inputs.omega_star;
            trace.outputs.push(o);
        }
        if k == n {
            break;
        }
        if let Err(e) = sim.step(&inputs) {
            return Err((e, Some(trace)));
        }
    }
    Ok(trace)
}

/// Trims at the initial inputs, then integrates the scenario.
pub fn run(scenario: &Scenario, params: &PlantParams) -> Result<SimTrace> {
    run_partial(scenario, params).map_err(|(e, _)| e)
}
