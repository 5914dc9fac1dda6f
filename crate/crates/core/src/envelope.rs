//! Galerkin integration of the envelope equation
//! `∂_t w + Q̄(w,w) − Δ_h w + √(ν/ε)S_B(w) + νβS_T = 0`
//! and of its mean-limit decomposition `w = w̄ + w̃ + ũ`.
//!
//! All stiff terms are diagonal in the eigenbasis, so the scheme is
//! Crank–Nicolson on the linear part and Adams–Bashforth-2 on `Q̄`, with a
//! Heun first step. The wind source is evaluated at step midpoints.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Basis, SpectralField};
use crate::forcing::{ergodic_limit, PhasePoint, WindStress};
use crate::geometry::{ModeIndex, TorusGeometry};
use crate::layers::LayerParams;
use crate::resonance::{check_nonresonant_torus, Triad, TriadTable, DEFAULT_RESONANCE_TOL};
use crate::sources::{pumping_coefficient_a, s_t_delta, s_t_limit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    CnAb2,
}

fn one() -> usize {
    1
}
fn default_eta() -> f64 {
    0.05
}
fn default_bound() -> f64 {
    1e8
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub epsilon: f64,
    pub nu: f64,
    pub beta: f64,
    /// `0` selects the limit source `S_T`; positive values use `S_T^δ`.
    #[serde(default)]
    pub delta: f64,
    #[serde(rename = "N")]
    pub truncation: u32,
    pub dt: f64,
    #[serde(rename = "T_final")]
    pub t_final: f64,
    #[serde(default = "one")]
    pub output_every: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Margin required by the H2 check when `delta = 0`.
    #[serde(default = "default_eta")]
    pub h2_eta: f64,
    #[serde(default = "default_bound")]
    pub energy_bound: f64,
    #[serde(default = "yes")]
    pub nonlinear: bool,
}

impl EnvelopeConfig {
    pub fn new(epsilon: f64, nu: f64, beta: f64, truncation: u32, dt: f64, t_final: f64) -> Self {
        EnvelopeConfig {
            epsilon,
            nu,
            beta,
            delta: 0.0,
            truncation,
            dt,
            t_final,
            output_every: 1,
            seed: 0,
            scheme: Scheme::CnAb2,
            h2_eta: default_eta(),
            energy_bound: default_bound(),
            nonlinear: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| Err(Error::InvalidParameter { name, reason: reason.into() });
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", "must be positive");
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad("nu", "must be positive");
        }
        if !self.beta.is_finite() {
            return bad("beta", "must be finite");
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad("delta", "must be non-negative");
        }
        if self.truncation == 0 {
            return bad("N", "must be at least 1");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", "must be positive");
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad("T_final", "must be non-negative");
        }
        if self.output_every == 0 {
            return bad("output_every", "must be at least 1");
        }
        if !(self.energy_bound > 0.0) {
            return bad("energy_bound", "must be positive");
        }
        Ok(())
    }

    /// `√(ν/ε)`, the weight of the bottom pumping.
    pub fn pumping_weight(&self) -> f64 {
        (self.nu / self.epsilon).sqrt()
    }

    /// Number of steps and the step actually used (`T_final/steps`).
    pub fn steps(&self) -> (usize, f64) {
        if self.t_final == 0.0 {
            return (0, self.dt);
        }
        let n = (self.t_final / self.dt).round().max(1.0) as usize;
        (n, self.t_final / n as f64)
    }

    pub fn layer_params(&self) -> Result<LayerParams> {
        LayerParams::new(self.epsilon, self.nu, self.beta, if self.delta > 0.0 { self.delta } else { 1e-3 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub time: f64,
    /// `‖w‖²`.
    pub energy: f64,
    /// `‖∇_h w‖²`.
    pub dissipation: f64,
    /// `Re⟨S_B w, w⟩`.
    pub pumping: f64,
    /// `Re⟨S_T, w⟩`.
    pub source_work: f64,
    /// `Σ k3'²|c_k|²`.
    pub vertical_h1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub field: SpectralField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub fields: Vec<Snapshot>,
    pub diagnostics: Vec<Diagnostics>,
}

impl TrajectoryRecord {
    pub fn final_field(&self) -> &SpectralField {
        &self.fields.last().expect("trajectory has at least the initial snapshot").field
    }

    /// Residual of `d/dt(½‖w‖²) + ‖∇_hw‖² + √(ν/ε)Re⟨S_Bw,w⟩ + νβRe⟨S_T,w⟩`
    /// on each step: centred difference against the trapezoidal average.
    pub fn budget_residuals(&self, config: &EnvelopeConfig) -> Vec<f64> {
        let pw = config.pumping_weight();
        let nb = config.nu * config.beta;
        let rate = |d: &Diagnostics| d.dissipation + pw * d.pumping + nb * d.source_work;
        self.diagnostics
            .windows(2)
            .map(|w| {
                let dt = w[1].time - w[0].time;
                0.5 * (w[1].energy - w[0].energy) / dt + 0.5 * (rate(&w[0]) + rate(&w[1]))
            })
            .collect()
    }
}

/// CN–AB2 driver on a coefficient vector: `∂_t y + D y + N_n(y) + F_n = 0`.
///
/// `explicit(n, stage, y)` returns `N` at step `n` (`stage = 1` for the Heun
/// predictor at step 1); `forcing(n)` is `F` at `t = (n + ½)dt`.
struct Cnab2<'a> {
    diag: &'a [C64],
    dt: f64,
}

impl Cnab2<'_> {
    fn solve(&self, rhs: &mut [C64]) {
        for (r, d) in rhs.iter_mut().zip(self.diag) {
            *r /= C64::new(1.0, 0.0) + d * (0.5 * self.dt);
        }
    }

    fn explicit_half(&self, y: &[C64]) -> Vec<C64> {
        y.iter().zip(self.diag).map(|(c, d)| c * (C64::new(1.0, 0.0) - d * (0.5 * self.dt))).collect()
    }

    fn run<E, F, O>(&self, y0: Vec<C64>, steps: usize, mut explicit: E, forcing: F, mut observe: O) -> Result<Vec<C64>>
    where
        E: FnMut(usize, &[C64]) -> Result<Option<Vec<C64>>>,
        F: Fn(usize) -> Option<Vec<C64>>,
        O: FnMut(usize, &[C64]) -> Result<()>,
    {
        let dt = self.dt;
        let mut y = y0;
        observe(0, &y)?;
        let mut prev: Option<Vec<C64>> = None;
        for n in 0..steps {
            let nl = explicit(n, &y)?;
            let f = forcing(n);
            let mut base = self.explicit_half(&y);
            if let Some(f) = &f {
                for (b, v) in base.iter_mut().zip(f) {
                    *b -= v * dt;
                }
            }
            let mut next = base.clone();
            match (&nl, &prev) {
                (None, _) => {}
                (Some(cur), Some(old)) => {
                    for ((x, c), o) in next.iter_mut().zip(cur).zip(old) {
                        *x -= (c * 1.5 - o * 0.5) * dt;
                    }
                }
                (Some(cur), None) => {
                    let mut pred = base.clone();
                    for (x, c) in pred.iter_mut().zip(cur) {
                        *x -= c * dt;
                    }
                    self.solve(&mut pred);
                    let star = explicit(n + 1, &pred)?.expect("explicit term is present at every step");
                    for ((x, c), s) in next.iter_mut().zip(cur).zip(&star) {
                        *x -= (c + s) * (0.5 * dt);
                    }
                }
            }
            self.solve(&mut next);
            prev = nl;
            y = next;
            observe(n + 1, &y)?;
        }
        Ok(y)
    }
}

/// Wind source `S_T` at unit envelope; the slow envelope is applied per step.
pub fn wind_source(ws: &WindStress, config: &EnvelopeConfig, omega: &PhasePoint) -> Result<SpectralField> {
    let unit = ws.clone().with_envelope(vec![1.0]);
    if config.delta > 0.0 {
        s_t_delta(&unit, config.delta, 0.0, omega, config.truncation)
    } else {
        s_t_limit(&unit, 0.0, omega, config.truncation, config.h2_eta)
    }
}

/// Reusable envelope integrator: the diagonal operator and the resonant
/// triad table are built once per geometry and configuration.
#[derive(Debug, Clone)]
pub struct EnvelopeSolver {
    pub geometry: TorusGeometry,
    pub config: EnvelopeConfig,
    basis: Basis,
    pumping: Vec<C64>,
    diag: Vec<C64>,
    table: Option<TriadTable>,
}

impl EnvelopeSolver {
    pub fn new(geometry: TorusGeometry, config: EnvelopeConfig) -> Result<Self> {
        Self::with_table(geometry, config, None)
    }

    /// As [`EnvelopeSolver::new`], reusing a prebuilt resonant table (e.g.
    /// one loaded from a cache) when given. The table must match the
    /// geometry and truncation.
    pub fn with_table(geometry: TorusGeometry, config: EnvelopeConfig, table: Option<TriadTable>) -> Result<Self> {
        config.validate()?;
        if let Some(t) = &table {
            if t.geometry != geometry {
                return Err(Error::GeometryMismatch);
            }
            if t.truncation != config.truncation || t.output_cutoff != config.truncation || t.includes_nonresonant {
                return Err(Error::InvalidParameter { name: "table", reason: "expected resonant triads with inputs and outputs in the solver truncation".into() });
            }
        }
        let table = match (config.nonlinear, table) {
            (false, _) => None,
            (true, Some(t)) => Some(t),
            (true, None) => Some(TriadTable::build(&geometry, config.truncation, config.truncation, DEFAULT_RESONANCE_TOL, false)?),
        };
        let basis = Basis::new(geometry, config.truncation)?;
        let pumping: Vec<C64> = basis.modes.iter().map(|m| pumping_coefficient_a(&geometry, m.k)).collect::<Result<_>>()?;
        let pw = config.pumping_weight();
        let diag = basis.modes.iter().zip(&pumping).map(|(m, a)| C64::new(m.kh_norm().powi(2), 0.0) + a * pw).collect();
        Ok(EnvelopeSolver { geometry, config, basis, pumping, diag, table })
    }

    pub fn table(&self) -> Option<&TriadTable> {
        self.table.as_ref()
    }

    /// `|k_h'|² + √(ν/ε)A_k` per mode.
    pub fn linear_rates(&self) -> &[C64] {
        &self.diag
    }

    fn zeros(&self) -> SpectralField {
        SpectralField::zeros(self.geometry, self.config.truncation)
    }

    fn wrap(&self, coeffs: Vec<C64>) -> SpectralField {
        SpectralField { geometry: self.geometry, truncation: self.config.truncation, coeffs }
    }

    fn check_input(&self, u0: &SpectralField) -> Result<()> {
        u0.check_compatible(&self.zeros())
    }

    pub fn diagnostics(&self, t: f64, w: &SpectralField, source: &SpectralField) -> Diagnostics {
        let mut d = Diagnostics { time: t, energy: 0.0, dissipation: 0.0, pumping: 0.0, source_work: 0.0, vertical_h1: 0.0 };
        for ((c, m), a) in w.coeffs.iter().zip(&self.basis.modes).zip(&self.pumping) {
            let e = c.norm_sqr();
            d.energy += e;
            d.dissipation += m.kh_norm().powi(2) * e;
            d.pumping += a.re * e;
            d.vertical_h1 += m.kprime[2].powi(2) * e;
        }
        d.source_work = source.inner(w).re;
        d
    }

    /// Integrate from `u0` with source `S_T` given at unit envelope.
    pub fn solve_with_source(&self, u0: &SpectralField, source: &SpectralField, envelope: &[f64]) -> Result<TrajectoryRecord> {
        self.check_input(u0)?;
        source.check_compatible(u0)?;
        let (steps, dt) = self.config.steps();
        let nb = self.config.nu * self.config.beta;
        let env = |t: f64| envelope.iter().rev().fold(0.0, |acc, c| acc * t + c);
        let forced = source.norm() > 0.0 && nb != 0.0;
        let bound = self.config.energy_bound;
        let every = self.config.output_every;
        let mut rec = TrajectoryRecord { times: vec![], fields: vec![], diagnostics: vec![] };
        let driver = Cnab2 { diag: &self.diag, dt };
        driver.run(
            u0.coeffs.clone(),
            steps,
            |_, y| match &self.table {
                Some(t) => {
                    let w = self.wrap(y.to_vec());
                    Ok(Some(t.qbar_apply(&w, &w)?.coeffs))
                }
                None => Ok(None),
            },
            |n| forced.then(|| source.coeffs.iter().map(|c| c * (nb * env((n as f64 + 0.5) * dt))).collect()),
            |n, y| {
                let t = n as f64 * dt;
                let w = self.wrap(y.to_vec());
                let d = self.diagnostics(t, &w, &source.scaled(C64::new(env(t), 0.0)));
                if !(d.energy <= bound) {
                    return Err(Error::BlowUp { time: t, energy: d.energy, bound });
                }
                rec.times.push(t);
                rec.diagnostics.push(d);
                if n % every == 0 || n == steps {
                    rec.fields.push(Snapshot { time: t, field: w });
                }
                Ok(())
            },
        )?;
        Ok(rec)
    }

    pub fn solve(&self, u0: &SpectralField, ws: &WindStress, omega: &PhasePoint) -> Result<TrajectoryRecord> {
        if ws.geometry != self.geometry {
            return Err(Error::GeometryMismatch);
        }
        let source = wind_source(ws, &self.config, omega)?;
        self.solve_with_source(u0, &source, &ws.slow_envelope)
    }

    /// Linear integration with explicit term `Q̄(b_n, y) + Q̄(y, b_n)` around a
    /// background given at every step, and a unit-envelope source.
    fn solve_linearized(&self, y0: &SpectralField, background: &[SpectralField], source: &SpectralField, envelope: &[f64]) -> Result<Vec<SpectralField>> {
        let (steps, dt) = self.config.steps();
        let nb = self.config.nu * self.config.beta;
        let env = |t: f64| envelope.iter().rev().fold(0.0, |acc, c| acc * t + c);
        let forced = source.norm() > 0.0 && nb != 0.0;
        let every = self.config.output_every;
        let mut out = Vec::new();
        let driver = Cnab2 { diag: &self.diag, dt };
        driver.run(
            y0.coeffs.clone(),
            steps,
            |n, y| match &self.table {
                Some(t) => {
                    let v = self.wrap(y.to_vec());
                    let mut q = t.qbar_apply(&background[n], &v)?;
                    q.axpy(C64::new(1.0, 0.0), &t.qbar_apply(&v, &background[n])?);
                    Ok(Some(q.coeffs))
                }
                None => Ok(None),
            },
            |n| forced.then(|| source.coeffs.iter().map(|c| c * (nb * env((n as f64 + 0.5) * dt))).collect()),
            |n, y| {
                if n % every == 0 || n == steps {
                    out.push(self.wrap(y.to_vec()));
                }
                Ok(())
            },
        )?;
        Ok(out)
    }
}

pub fn solve_envelope(u0: &SpectralField, ws: &WindStress, config: &EnvelopeConfig, omega: &PhasePoint) -> Result<TrajectoryRecord> {
    EnvelopeSolver::new(u0.geometry, config.clone())?.solve(u0, ws, omega)
}

/// Galerkin 2D Navier–Stokes in vorticity form on the horizontal modes
/// `0 < max(|k1|,|k2|) ≤ N`:
/// `∂_tφ + u·∇φ + |k'|²φ + dφ = f`, `û = i(k2', −k1')φ̂/|k'|²`.
#[derive(Debug, Clone)]
pub struct Vorticity2d {
    pub geometry: TorusGeometry,
    pub truncation: u32,
    pub modes: Vec<[i32; 2]>,
    kprime: Vec<[f64; 2]>,
    index: BTreeMap<[i32; 2], usize>,
    /// `(k, l, m, (k'×l')/|k'|²)` with `k + l = m`.
    pairs: Vec<(usize, usize, usize, f64)>,
}

impl Vorticity2d {
    pub fn new(geometry: TorusGeometry, truncation: u32) -> Result<Self> {
        geometry.validate()?;
        let n = truncation as i32;
        let mut modes = Vec::new();
        for k1 in -n..=n {
            for k2 in -n..=n {
                if (k1, k2) != (0, 0) {
                    modes.push([k1, k2]);
                }
            }
        }
        let tau = 2.0 * std::f64::consts::PI;
        let kprime: Vec<[f64; 2]> = modes.iter().map(|k| [tau * k[0] as f64 / geometry.a1, tau * k[1] as f64 / geometry.a2]).collect();
        let index: BTreeMap<[i32; 2], usize> = modes.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let mut pairs = Vec::new();
        for (i, k) in modes.iter().enumerate() {
            for (j, l) in modes.iter().enumerate() {
                let Some(&m) = index.get(&[k[0] + l[0], k[1] + l[1]]) else { continue };
                let (a, b) = (kprime[i], kprime[j]);
                let w = (a[0] * b[1] - a[1] * b[0]) / (a[0] * a[0] + a[1] * a[1]);
                if w != 0.0 {
                    pairs.push((i, j, m, w));
                }
            }
        }
        Ok(Vorticity2d { geometry, truncation, modes, kprime, index, pairs })
    }

    pub fn k2(&self, i: usize) -> f64 {
        let k = self.kprime[i];
        k[0] * k[0] + k[1] * k[1]
    }

    pub fn index(&self, kh: [i32; 2]) -> Option<usize> {
        self.index.get(&kh).copied()
    }

    /// `(u·∇φ)^` by direct convolution.
    pub fn advection(&self, phi: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); phi.len()];
        for &(i, j, m, w) in &self.pairs {
            out[m] += phi[i] * phi[j] * w;
        }
        out
    }

    /// Velocity coefficients `û(k_h)` of a vorticity field.
    pub fn velocity(&self, phi: &[C64]) -> Vec<[C64; 2]> {
        phi.iter()
            .enumerate()
            .map(|(i, p)| {
                let k = self.kprime[i];
                let s = p / self.k2(i);
                [C64::new(0.0, k[1]) * s, C64::new(0.0, -k[0]) * s]
            })
            .collect()
    }

    /// `φ̂ = c_{(k_h,0)}|k_h'|/√V`.
    pub fn from_field(&self, w: &SpectralField) -> Vec<C64> {
        let v = self.geometry.volume().sqrt();
        (0..self.modes.len()).map(|i| w.get(ModeIndex::new(self.modes[i][0], self.modes[i][1], 0)) * (self.k2(i).sqrt() / v)).collect()
    }

    pub fn to_field(&self, phi: &[C64], truncation: u32) -> SpectralField {
        let v = self.geometry.volume().sqrt();
        let mut out = SpectralField::zeros(self.geometry, truncation);
        for (i, kh) in self.modes.iter().enumerate() {
            let _ = out.set(ModeIndex::new(kh[0], kh[1], 0), phi[i] * (v / self.k2(i).sqrt()));
        }
        out
    }

    /// Vorticity forcing `(νβ/a)(rot σ̄ + δ div σ̄)/(1 + δ²)` of the mean wind
    /// `σ̄ = E[σ]` at unit envelope; `δ = 0` for the limit source.
    pub fn wind_forcing(&self, ws: &WindStress, nu: f64, beta: f64, delta: f64) -> Vec<C64> {
        let mean = ws.mean_part().with_envelope(vec![1.0]);
        let omega = PhasePoint::zero(mean.phase_dim());
        let scale = nu * beta / self.geometry.a / (1.0 + delta * delta);
        (0..self.modes.len())
            .map(|i| {
                let s = ergodic_limit(&mean, 0.0, self.modes[i], &omega);
                let k = self.kprime[i];
                let rot = C64::new(0.0, 1.0) * (s[1] * k[0] - s[0] * k[1]);
                let div = C64::new(0.0, 1.0) * (s[0] * k[0] + s[1] * k[1]);
                (rot + div * delta) * scale
            })
            .collect()
    }

    /// CN–AB2 integration with linear rate `|k'|² + damping`, returning every
    /// step.
    pub fn solve(&self, phi0: Vec<C64>, damping: f64, forcing: &[C64], envelope: &[f64], dt: f64, steps: usize) -> Result<Vec<Vec<C64>>> {
        let diag: Vec<C64> = (0..self.modes.len()).map(|i| C64::new(self.k2(i) + damping, 0.0)).collect();
        let env = |t: f64| envelope.iter().rev().fold(0.0, |acc, c| acc * t + c);
        let forced = forcing.iter().any(|f| f.norm() > 0.0);
        let mut out = Vec::with_capacity(steps + 1);
        Cnab2 { diag: &diag, dt }.run(
            phi0,
            steps,
            |_, y| Ok(Some(self.advection(y))),
            |n| forced.then(|| forcing.iter().map(|f| -f * env((n as f64 + 0.5) * dt)).collect()),
            |_, y| {
                out.push(y.to_vec());
                Ok(())
            },
        )?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanLimit {
    /// Snapshot times (every `output_every` steps and the last).
    pub times: Vec<f64>,
    pub wbar: Vec<SpectralField>,
    pub wtilde: Vec<SpectralField>,
    /// One trajectory per phase realization.
    pub utilde: Vec<Vec<SpectralField>>,
}

impl MeanLimit {
    /// `w̄ + w̃` at each snapshot, the prediction for `E[w]`.
    pub fn expected(&self) -> Vec<SpectralField> {
        self.wbar
            .iter()
            .zip(&self.wtilde)
            .map(|(a, b)| {
                let mut s = a.clone();
                s.axpy(C64::new(1.0, 0.0), b);
                s
            })
            .collect()
    }
}

/// `w̄` from the standalone 2D solve, `w̃` and `ũ(ω)` from the linearized
/// equations around it. Requires a non-resonant torus at the working cutoff.
pub fn solve_mean_limit(u0: &SpectralField, ws: &WindStress, config: &EnvelopeConfig, omegas: &[PhasePoint]) -> Result<MeanLimit> {
    let geom = u0.geometry;
    if ws.geometry != geom {
        return Err(Error::GeometryMismatch);
    }
    let report = check_nonresonant_torus(&geom, config.truncation, DEFAULT_RESONANCE_TOL)?;
    if !report.is_nonresonant() {
        return Err(Error::ResonantTorus(report.violations.len()));
    }
    let solver = EnvelopeSolver::new(geom, config.clone())?;
    solver.check_input(u0)?;
    let (steps, dt) = config.steps();
    let n = config.truncation;

    let vort = Vorticity2d::new(geom, n)?;
    let damping = config.pumping_weight() / (geom.a * std::f64::consts::SQRT_2);
    let forcing = vort.wind_forcing(ws, config.nu, config.beta, config.delta);
    let phis = vort.solve(vort.from_field(u0), damping, &forcing, &ws.slow_envelope, dt, steps)?;
    let background: Vec<SpectralField> = phis.iter().map(|p| vort.to_field(p, n)).collect();

    let mean_src = wind_source(&ws.mean_part(), config, &PhasePoint::zero(ws.phase_dim()))?;
    let osc_mean = mean_src.sub(&mean_src.horizontal_part());
    let wtilde = solver.solve_linearized(&u0.sub(&u0.horizontal_part()), &background, &osc_mean, &ws.slow_envelope)?;
    let zero = solver.zeros();
    let utilde = omegas
        .par_iter()
        .map(|om| {
            let src = wind_source(ws, config, om)?.sub(&mean_src);
            solver.solve_linearized(&zero, &background, &src, &ws.slow_envelope)
        })
        .collect::<Result<Vec<_>>>()?;

    let every = config.output_every;
    let keep: Vec<usize> = (0..=steps).filter(|i| i % every == 0 || *i == steps).collect();
    Ok(MeanLimit {
        times: keep.iter().map(|&i| i as f64 * dt).collect(),
        wbar: keep.iter().map(|&i| background[i].clone()).collect(),
        wtilde,
        utilde,
    })
}

/// Monte Carlo envelope solves over independent phase draws derived from
/// `config.seed`.
pub fn monte_carlo_envelope(u0: &SpectralField, ws: &WindStress, config: &EnvelopeConfig, realizations: usize) -> Result<(Vec<PhasePoint>, Vec<TrajectoryRecord>)> {
    let solver = EnvelopeSolver::new(u0.geometry, config.clone())?;
    let omegas = phase_draws(ws.phase_dim(), config.seed, realizations);
    let runs = omegas.par_iter().map(|om| solver.solve(u0, ws, om)).collect::<Result<Vec<_>>>()?;
    Ok((omegas, runs))
}

/// Independent phase points, the `i`-th seeded by `(seed, i)`.
pub fn phase_draws(dim: usize, seed: u64, count: usize) -> Vec<PhasePoint> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            PhasePoint::random(dim, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DecouplingReport {
    pub nonresonant: bool,
    pub samples: usize,
    /// Largest `‖Q̄(u,u)‖/‖u‖²` over fields without horizontal mean.
    pub max_relative: f64,
    /// Resonant triads coupling three modes with `k3 ≠ 0`.
    pub coupling_triads: Vec<Triad>,
}

impl DecouplingReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_relative < tol
    }
}

/// `Q̄(u, u)` for random `u` with zero horizontal mean, plus the list of
/// resonant triads that could couple such fields.
pub fn decoupling_check(geom: &TorusGeometry, truncation: u32, samples: usize, seed: u64) -> Result<DecouplingReport> {
    let table = TriadTable::build(geom, truncation, truncation, DEFAULT_RESONANCE_TOL, false)?;
    let nonresonant = check_nonresonant_torus(geom, truncation, DEFAULT_RESONANCE_TOL)?.is_nonresonant();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_relative: f64 = 0.0;
    for _ in 0..samples {
        let u = SpectralField::random_real(*geom, truncation, &mut rng, |k| if k.k3 == 0 { 0.0 } else { 1.0 });
        let q = table.qbar_apply(&u, &u)?;
        max_relative = max_relative.max(q.norm() / u.norm_sqr());
    }
    let coupling_triads = table.triads.iter().filter(|t| t.k.k3 != 0 && t.l.k3 != 0 && t.alpha.norm() > 1e-12).copied().collect();
    Ok(DecouplingReport { nonresonant, samples, max_relative, coupling_triads })
}
