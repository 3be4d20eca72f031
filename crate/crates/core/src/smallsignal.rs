//! Linearization at a trim point, modal analysis and operating-point sweeps.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{PenstockMode, PlantParams};
use crate::plant::{ModelKind, Plant, PlantInputs, Trim};

/// Eigenvector condition number above which participation is not reported.
pub const CONDITION_LIMIT: f64 = 1e10;

#[derive(Debug, Clone)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    /// Columns: `P*`, `ω*`.
    pub b: DMatrix<f64>,
    pub labels: Vec<String>,
    pub trim: Trim,
}

fn fd_step(x: f64) -> f64 {
    (1e-6f64).max(1e-6 * x.abs())
}

/// Central-difference linearization of `plant` at `trim`.
pub fn linearize(plant: &Plant, trim: &Trim) -> Result<LinearModel> {
    check_linearizable(plant, trim)?;
    let a = plant.jacobian_fd(&trim.state, &trim.inputs)?;
    let n = plant.dim();
    let mut b = DMatrix::zeros(n, 2);
    for j in 0..2 {
        let base = [trim.inputs.p_star, trim.inputs.omega_star];
        let h = fd_step(base[j]);
        let mut up = base;
        let mut dn = base;
        up[j] += h;
        dn[j] -= h;
        let fp = plant.derivatives(&trim.state, &PlantInputs::new(up[0], up[1]))?;
        let fm = plant.derivatives(&trim.state, &PlantInputs::new(dn[0], dn[1]))?;
        for i in 0..n {
            b[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotLinearizable("non-finite Jacobian entry".into()));
    }
    Ok(LinearModel {
        a,
        b,
        labels: plant.layout().names().to_vec(),
        trim: trim.clone(),
    })
}

fn check_linearizable(plant: &Plant, trim: &Trim) -> Result<()> {
    if plant.uses_delay_line() {
        return Err(Error::NotLinearizable(
            "travelling-wave penstock has no finite-order linearization; use lumped_tanh or inelastic".into(),
        ));
    }
    if trim.residual >= 1e-8 {
        return Err(Error::NotLinearizable(format!(
            "trim residual {:e} too large",
            trim.residual
        )));
    }
    let ev = plant.outputs(&trim.state, &trim.inputs)?;
    let gp = &plant.params().governor;
    // Central differences straddle the point: keep clear of the clamp.
    let margin = 1e-4;
    if ev.g_cmd <= gp.g_min + margin || ev.g_cmd >= gp.g_max - margin {
        return Err(Error::LimitActive(format!(
            "opening command {:.6} at the limit [{}, {}]",
            ev.g_cmd, gp.g_min, gp.g_max
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Each mode's largest participation is 1.
    #[default]
    Max,
    /// Each mode's participations sum to 1.
    Sum,
}

#[derive(Debug, Clone)]
pub struct ModalReport {
    pub labels: Vec<String>,
    pub eigenvalues: Vec<Complex64>,
    pub frequency: Vec<f64>,
    pub damping: Vec<f64>,
    /// `participation[(state, mode)]`.
    pub participation: DMatrix<f64>,
    /// `‖w_i‖ ‖v_i‖` per mode.
    pub condition: Vec<f64>,
    /// Modes whose participation column is suppressed (set to zero).
    pub suppressed: Vec<bool>,
    pub normalization: Normalization,
    /// Right eigenvectors as columns.
    pub right: DMatrix<Complex64>,
}

/// Relative damping `−Re λ / |λ|`.
pub fn damping_ratio(l: Complex64) -> f64 {
    let m = l.norm();
    if m == 0.0 {
        0.0
    } else {
        -l.re / m
    }
}

/// Frequency `|Im λ| / 2π` [Hz].
pub fn frequency_hz(l: Complex64) -> f64 {
    l.im.abs() / (2.0 * std::f64::consts::PI)
}

/// Eigenvalues of a real matrix with conjugate pairs made exact and ordered
/// by decreasing real part, the positive-imaginary member first.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    let raw: Vec<Complex64> = a.clone().complex_eigenvalues().iter().copied().collect();
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale;
    // one entry per real eigenvalue or conjugate pair
    let mut entries: Vec<Complex64> = raw
        .into_iter()
        .filter(|l| l.im >= -tol)
        .map(|l| {
            if l.im.abs() <= tol {
                Complex64::new(l.re, 0.0)
            } else {
                l
            }
        })
        .collect();
    entries.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    let mut out = Vec::with_capacity(a.nrows());
    for l in entries {
        out.push(l);
        if l.im > 0.0 {
            out.push(l.conj());
        }
    }
    out
}

/// Right eigenvector for `lambda` by inverse iteration.
fn eigenvector(a: &DMatrix<f64>, lambda: Complex64) -> DVector<Complex64> {
    let n = a.nrows();
    let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let shift = lambda + Complex64::new(1e-10 * scale, 1e-10 * scale);
    let m = DMatrix::from_fn(n, n, |i, j| {
        let v = Complex64::new(a[(i, j)], 0.0);
        if i == j {
            v - shift
        } else {
            v
        }
    });
    let lu = m.lu();
    let mut v = DVector::from_fn(n, |i, _| Complex64::new(1.0 + 0.1 * i as f64, 0.05 * i as f64));
    for _ in 0..4 {
        if let Some(next) = lu.solve(&v) {
            let nrm = next.norm();
            if nrm.is_finite() && nrm > 0.0 {
                v = next / Complex64::new(nrm, 0.0);
            }
        }
    }
    // fix the phase: largest entry real positive
    let (k, _) = v.iter().enumerate().fold(
        (0, 0.0),
        |(bk, bm), (i, z)| {
            if z.norm() > bm {
                (i, z.norm())
            } else {
                (bk, bm)
            }
        },
    );
    let ph = v[k] / Complex64::new(v[k].norm(), 0.0);
    v.map(|z| z / ph)
}

/// Eigen-decomposition with participation factors.
pub fn modes(a: &DMatrix<f64>, labels: &[String]) -> Result<ModalReport> {
    modes_with(a, labels, Normalization::Max)
}

pub fn modes_with(a: &DMatrix<f64>, labels: &[String], normalization: Normalization) -> Result<ModalReport> {
    let n = a.nrows();
    if a.ncols() != n || labels.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: labels.len(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotLinearizable("non-finite state matrix".into()));
    }
    let eig = eigenvalues(a);
    let mut right = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut k = 0;
    while k < n {
        let v = eigenvector(a, eig[k]);
        right.set_column(k, &v);
        if eig[k].im > 0.0 && k + 1 < n {
            right.set_column(k + 1, &v.map(|z| z.conj()));
            k += 2;
        } else {
            k += 1;
        }
    }
    let left = right.clone().try_inverse();
    let mut participation = DMatrix::zeros(n, n);
    let mut condition = vec![f64::INFINITY; n];
    let mut suppressed = vec![true; n];
    if let Some(w) = left {
        for m in 0..n {
            let c = w.row(m).norm() * right.column(m).norm();
            condition[m] = c;
            if !(c.is_finite() && c <= CONDITION_LIMIT) {
                continue;
            }
            suppressed[m] = false;
            let col: Vec<f64> = (0..n).map(|s| (right[(s, m)] * w[(m, s)]).norm()).collect();
            let denom = match normalization {
                Normalization::Max => col.iter().cloned().fold(0.0, f64::max),
                Normalization::Sum => col.iter().sum(),
            };
            for s in 0..n {
                participation[(s, m)] = if denom > 0.0 { col[s] / denom } else { 0.0 };
            }
        }
    }
    Ok(ModalReport {
        labels: labels.to_vec(),
        frequency: eig.iter().map(|l| frequency_hz(*l)).collect(),
        damping: eig.iter().map(|l| damping_ratio(*l)).collect(),
        eigenvalues: eig,
        participation,
        condition,
        suppressed,
        normalization,
        right,
    })
}

impl ModalReport {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Label of the state with the largest participation in `mode`.
    pub fn dominant_state(&self, mode: usize) -> Option<&str> {
        if self.suppressed[mode] {
            return None;
        }
        let col = self.participation.column(mode);
        let (i, _) = col.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
        Some(&self.labels[i])
    }

    /// The oscillatory mode (positive-imaginary member) with the largest
    /// summed participation of the named states.
    pub fn dominant_pair(&self, states: &[&str]) -> Option<usize> {
        let idx: Vec<usize> = states
            .iter()
            .filter_map(|s| self.labels.iter().position(|l| l == s))
            .collect();
        if idx.is_empty() {
            return None;
        }
        (0..self.len())
            .filter(|&m| self.eigenvalues[m].im > 0.0 && !self.suppressed[m])
            .map(|m| (m, idx.iter().map(|&s| self.participation[(s, m)]).sum::<f64>()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(m, _)| m)
    }

    /// Oscillatory mode of the speed-governor loop.
    pub fn governor_mode(&self) -> Option<usize> {
        self.dominant_pair(&["omega", "gov_integ", "gov_dfilt", "g"])
    }

    /// Mass oscillation between surge tank and turbine.
    pub fn surge_mode(&self) -> Option<usize> {
        self.dominant_pair(&["h_st", "q_hr"])
    }

    pub fn role(&self, mode: usize) -> &'static str {
        let base = |m: usize| {
            if self.eigenvalues[m].im < 0.0 && m > 0 {
                m - 1
            } else {
                m
            }
        };
        let m = base(mode);
        if Some(m) == self.governor_mode() {
            "governor"
        } else if Some(m) == self.surge_mode() {
            "surge"
        } else {
            ""
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let modes: Vec<serde_json::Value> = (0..self.len())
            .map(|m| {
                serde_json::json!({
                    "index": m,
                    "re": self.eigenvalues[m].re,
                    "im": self.eigenvalues[m].im,
                    "frequency_hz": self.frequency[m],
                    "damping": self.damping[m],
                    "condition": if self.condition[m].is_finite() { Some(self.condition[m]) } else { None },
                    "participation_suppressed": self.suppressed[m],
                    "dominant_state": self.dominant_state(m),
                    "role": self.role(m),
                })
            })
            .collect();
        let participation: Vec<Vec<f64>> = (0..self.participation.nrows())
            .map(|s| self.participation.row(s).iter().copied().collect())
            .collect();
        serde_json::json!({
            "states": self.labels,
            "modes": modes,
            "participation": participation,
            "participation_convention": {
                "formula": "p_ki = |v_ki * w_ik|, W = V^-1",
                "normalization": self.normalization,
                "condition_limit": CONDITION_LIMIT,
            },
        })
    }
}

/// One operating point of a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub inputs: PlantInputs,
    pub result: std::result::Result<ModalReport, String>,
}

/// Grid of `P*` at fixed `ω*`.
pub fn power_grid(omega_star: f64) -> Vec<PlantInputs> {
    (3..=9).map(|k| PlantInputs::new(k as f64 / 10.0, omega_star)).collect()
}

/// Grid of `ω*` at fixed `P*`.
pub fn speed_grid(p_star: f64) -> Vec<PlantInputs> {
    (0..=4)
        .map(|k| PlantInputs::new(p_star, 0.9 + 0.05 * k as f64))
        .collect()
}

/// Trims and analyses each point concurrently; output order follows `grid`.
pub fn sweep(kind: ModelKind, params: &PlantParams, grid: &[PlantInputs]) -> Result<Vec<SweepPoint>> {
    let plant = Plant::assemble(kind, *params)?;
    if plant.uses_delay_line() {
        return Err(Error::NotLinearizable(
            "sweeps need a lumped or inelastic penstock".into(),
        ));
    }
    Ok(grid
        .par_iter()
        .map(|u| SweepPoint {
            inputs: *u,
            result: analyse(&plant, u).map_err(|e| e.to_string()),
        })
        .collect())
}

/// Trim, linearize and decompose at one point.
pub fn analyse(plant: &Plant, u: &PlantInputs) -> Result<ModalReport> {
    let trim = plant.trim(u)?;
    let lin = linearize(plant, &trim)?;
    modes(&lin.a, &lin.labels)
}

/// Locus table: one row per mode and point.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("point,P_star,omega_star,mode,re,im,frequency_hz,damping,dominant_state,role,status\n");
    for (i, p) in points.iter().enumerate() {
        match &p.result {
            Ok(r) => {
                for m in 0..r.len() {
                    let l = r.eigenvalues[m];
                    s.push_str(&format!(
                        "{i},{},{},{m},{},{},{},{},{},{},ok\n",
                        p.inputs.p_star,
                        p.inputs.omega_star,
                        l.re,
                        l.im,
                        r.frequency[m],
                        r.damping[m],
                        r.dominant_state(m).unwrap_or(""),
                        r.role(m),
                    ));
                }
            }
            Err(e) => s.push_str(&format!(
                "{i},{},{},,,,,,,,\"error: {}\"\n",
                p.inputs.p_star,
                p.inputs.omega_star,
                e.replace('"', "'")
            )),
        }
    }
    s
}

/// Single-input single-output linear model from opening `g` to `P_m` with
/// the rotor speed held at its trim value.
#[derive(Debug, Clone)]
pub struct SisoModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
    pub labels: Vec<String>,
}

/// Linearizes the hydraulic part (turbine and waterway states) of a trimmed
/// plant from opening to mechanical power.
pub fn linearize_turbine(plant: &Plant, trim: &Trim) -> Result<SisoModel> {
    if plant.uses_delay_line() {
        return Err(Error::NotLinearizable("travelling-wave penstock".into()));
    }
    let l = plant.layout();
    let excluded = [Some(l.omega), Some(l.integ), Some(l.dfilt), Some(l.g), l.p_g];
    let sub: Vec<usize> = (0..plant.dim()).filter(|i| !excluded.contains(&Some(*i))).collect();
    let m = sub.len();
    let x0 = &trim.state;
    let u = &trim.inputs;
    let eval = |x: &[f64]| -> Result<(Vec<f64>, f64)> {
        let f = plant.derivatives(x, u)?;
        let p = plant.outputs(x, u)?.outputs.p_m;
        Ok((sub.iter().map(|&i| f[i]).collect(), p))
    };
    let mut cols = Vec::with_capacity(m + 1);
    for &j in sub.iter().chain(std::iter::once(&l.g)) {
        let h = fd_step(x0[j]);
        let mut xp = x0.clone();
        xp[j] += h;
        let (fp, pp) = eval(&xp)?;
        xp[j] = x0[j] - h;
        let (fm, pm) = eval(&xp)?;
        let df: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        cols.push((df, (pp - pm) / (2.0 * h)));
    }
    let a = DMatrix::from_fn(m, m, |i, j| cols[j].0[i]);
    let b = DVector::from_fn(m, |i, _| cols[m].0[i]);
    let c = DVector::from_fn(m, |j, _| cols[j].1);
    let d = cols[m].1;
    Ok(SisoModel {
        a,
        b,
        c,
        d,
        labels: sub.iter().map(|&i| l.names()[i].clone()).collect(),
    })
}

fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    // ascending coefficients, monic
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); p.len() + 1];
        for (i, c) in p.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * r;
        }
        p = next;
    }
    p
}

fn roots_of(coeffs: &[f64]) -> Vec<Complex64> {
    // ascending, leading coefficient non-zero
    let n = coeffs.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = coeffs[n];
    let comp = DMatrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -coeffs[n - 1 - j] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    eigenvalues(&comp)
}

impl SisoModel {
    pub fn poles(&self) -> Vec<Complex64> {
        eigenvalues(&self.a)
    }

    /// Finite transmission zeros.
    pub fn zeros(&self) -> Vec<Complex64> {
        let scale = self.c.norm() * self.b.norm();
        if self.d.abs() > 1e-9 * scale.max(1.0) {
            let az = &self.a - &self.b * self.c.transpose() / self.d;
            return eigenvalues(&az);
        }
        // C adj(sI − A) B = det(sI − A + B C) − det(sI − A)
        let pa = poly_from_roots(&eigenvalues(&self.a));
        let pb = poly_from_roots(&eigenvalues(&(&self.a - &self.b * self.c.transpose())));
        let mut num: Vec<f64> = pb.iter().zip(&pa).map(|(x, y)| (x - y).re).collect();
        let big = num.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        while num.len() > 1 && num.last().unwrap().abs() <= 1e-9 * big {
            num.pop();
        }
        roots_of(&num)
    }

    /// Transfer function value at `s`.
    pub fn transfer(&self, s: Complex64) -> Complex64 {
        let n = self.a.nrows();
        if n == 0 {
            return Complex64::new(self.d, 0.0);
        }
        let m = DMatrix::from_fn(n, n, |i, j| {
            let v = Complex64::new(-self.a[(i, j)], 0.0);
            if i == j {
                v + s
            } else {
                v
            }
        });
        let rhs = self.b.map(|v| Complex64::new(v, 0.0));
        let x = m
            .lu()
            .solve(&rhs)
            .unwrap_or_else(|| rhs.map(|_| Complex64::new(f64::NAN, 0.0)));
        (0..n).map(|i| x[i] * self.c[i]).sum::<Complex64>() + self.d
    }
}

/// Small-signal analysis is restricted to finite-order penstocks.
pub fn penstock_supported(mode: PenstockMode) -> bool {
    mode != PenstockMode::TravellingWaveDelay
}
