//! Stationary wind stress built from finitely many horizontal modes and
//! frequency atoms, with random phases on a torus.
//!
//! A stored atom `(μ, φ)` at horizontal mode `k_h` contributes
//! `φ e^{i(k_h'·x + μτ + ϑ(ω))}` plus its complex conjugate, where the phase
//! `ϑ(ω) = n·ω_j` uses the phase coordinate `j` whose base frequency `ν_j`
//! satisfies `n·ν_j = μ`. Shifting `ω_j` by `ν_j s` therefore shifts `τ` by
//! `s`, which is the stationarity identity. Atoms at `μ = 0` are
//! deterministic.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TorusGeometry;
use crate::quad::{adaptive, adaptive_panels, composite_gl};
use crate::resonance::phase_average;

/// Frequencies closer than this are treated as equal when matching atoms to
/// eigenvalues or merging atoms.
pub const FREQUENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyAtom {
    pub mu: f64,
    pub coeff: [C64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingMode {
    pub kh: [i32; 2],
    pub atoms: Vec<FrequencyAtom>,
}

/// One exponential `amp·e^{i(k_h'·x + μτ)}` of a realization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralLine {
    pub kh: [i32; 2],
    pub mu: f64,
    pub amp: [C64; 2],
}

/// The random element `ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub phases: Vec<f64>,
}

impl PhasePoint {
    pub fn zero(dim: usize) -> Self {
        PhasePoint { phases: vec![0.0; dim] }
    }

    pub fn random<R: Rng>(dim: usize, rng: &mut R) -> Self {
        PhasePoint { phases: (0..dim).map(|_| rng.gen::<f64>() * 2.0 * PI).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct PhaseSlot {
    coordinate: usize,
    multiplier: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindStress {
    pub geometry: TorusGeometry,
    pub modes: Vec<ForcingMode>,
    pub base_frequencies: Vec<f64>,
    /// Polynomial coefficients of the slow envelope in `t`, lowest first.
    pub slow_envelope: Vec<f64>,
    slots: Vec<Vec<Option<PhaseSlot>>>,
}

impl WindStress {
    pub fn empty(geometry: TorusGeometry) -> Self {
        WindStress { geometry, modes: vec![], base_frequencies: vec![], slow_envelope: vec![1.0], slots: vec![] }
    }

    /// Builds a wind, merging equal frequencies within a mode and assigning
    /// phase coordinates.
    ///
    /// With an empty `base_frequencies`, every distinct nonzero `|μ|` gets its
    /// own coordinate. Otherwise each nonzero `μ` must be an integer multiple
    /// (up to 20) of one of the given base frequencies.
    pub fn new(geometry: TorusGeometry, modes: Vec<ForcingMode>, base_frequencies: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        let mut merged: Vec<ForcingMode> = Vec::new();
        for m in modes {
            if m.atoms.iter().any(|a| !a.mu.is_finite() || a.coeff.iter().any(|c| !c.re.is_finite() || !c.im.is_finite())) {
                return Err(Error::InvalidParameter { name: "wind.atoms", reason: format!("non-finite atom at kh={:?}", m.kh) });
            }
            let target = match merged.iter_mut().find(|x| x.kh == m.kh) {
                Some(t) => t,
                None => {
                    merged.push(ForcingMode { kh: m.kh, atoms: vec![] });
                    merged.last_mut().unwrap()
                }
            };
            for a in m.atoms {
                match target.atoms.iter_mut().find(|b| (b.mu - a.mu).abs() <= FREQUENCY_TOL) {
                    Some(b) => {
                        b.coeff[0] += a.coeff[0];
                        b.coeff[1] += a.coeff[1];
                    }
                    None => target.atoms.push(a),
                }
            }
        }
        let mut base = base_frequencies;
        if base.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidParameter { name: "wind.base_frequencies", reason: "must be positive and finite".into() });
        }
        let auto = base.is_empty();
        let mut slots = Vec::with_capacity(merged.len());
        for m in &merged {
            let mut ms = Vec::with_capacity(m.atoms.len());
            for a in &m.atoms {
                if a.mu.abs() <= FREQUENCY_TOL {
                    ms.push(None);
                    continue;
                }
                let found = find_slot(&base, a.mu);
                let slot = match (found, auto) {
                    (Some(s), _) => s,
                    (None, true) => {
                        base.push(a.mu.abs());
                        PhaseSlot { coordinate: base.len() - 1, multiplier: a.mu.signum() as i32 }
                    }
                    (None, false) => {
                        return Err(Error::InvalidParameter {
                            name: "wind.base_frequencies",
                            reason: format!("frequency {} is not an integer multiple (≤20) of any base frequency", a.mu),
                        })
                    }
                };
                ms.push(Some(slot));
            }
            slots.push(ms);
        }
        Ok(WindStress { geometry, modes: merged, base_frequencies: base, slow_envelope: vec![1.0], slots })
    }

    pub fn with_envelope(mut self, coefficients: Vec<f64>) -> Self {
        self.slow_envelope = if coefficients.is_empty() { vec![1.0] } else { coefficients };
        self
    }

    pub fn phase_dim(&self) -> usize {
        self.base_frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.iter().all(|m| m.atoms.is_empty())
    }

    /// The deterministic part: atoms with `μ = 0`. Every other atom carries a
    /// uniformly distributed phase, so this is also `E[σ]`.
    pub fn mean_part(&self) -> WindStress {
        let mut out = self.clone();
        for (m, ms) in out.modes.iter_mut().zip(out.slots.iter_mut()) {
            let keep: Vec<bool> = ms.iter().map(|s| s.is_none()).collect();
            let mut it = keep.iter();
            m.atoms.retain(|_| *it.next().unwrap());
            ms.retain(|s| s.is_none());
        }
        out
    }

    pub fn envelope(&self, t: f64) -> f64 {
        self.slow_envelope.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    /// `θ_s ω`: each coordinate advances by its base frequency times `s`.
    pub fn shift(&self, omega: &PhasePoint, s: f64) -> PhasePoint {
        PhasePoint {
            phases: omega
                .phases
                .iter()
                .zip(&self.base_frequencies)
                .map(|(p, nu)| (p + nu * s).rem_euclid(2.0 * PI))
                .collect(),
        }
    }

    fn atom_phase(&self, slot: Option<PhaseSlot>, omega: &PhasePoint) -> C64 {
        match slot {
            None => C64::new(1.0, 0.0),
            Some(s) => C64::from_polar(1.0, s.multiplier as f64 * omega.phases[s.coordinate]),
        }
    }

    /// Stored atoms of a realization (the conjugate half is implicit).
    pub fn half_lines(&self, omega: &PhasePoint) -> Vec<SpectralLine> {
        let mut out = Vec::new();
        for (m, ms) in self.modes.iter().zip(&self.slots) {
            for (a, s) in m.atoms.iter().zip(ms) {
                let e = self.atom_phase(*s, omega);
                out.push(SpectralLine { kh: m.kh, mu: a.mu, amp: [a.coeff[0] * e, a.coeff[1] * e] });
            }
        }
        out
    }

    /// Every exponential of a realization, conjugate partners included.
    pub fn lines(&self, omega: &PhasePoint) -> Vec<SpectralLine> {
        let mut out = Vec::new();
        for l in self.half_lines(omega) {
            out.push(l);
            out.push(SpectralLine { kh: [-l.kh[0], -l.kh[1]], mu: -l.mu, amp: [l.amp[0].conj(), l.amp[1].conj()] });
        }
        out
    }

    /// Lines grouped by horizontal mode.
    pub fn lines_by_mode(&self, omega: &PhasePoint) -> BTreeMap<[i32; 2], Vec<SpectralLine>> {
        let mut map: BTreeMap<[i32; 2], Vec<SpectralLine>> = BTreeMap::new();
        for l in self.lines(omega) {
            map.entry(l.kh).or_default().push(l);
        }
        map
    }

    pub fn kprime_h(&self, kh: [i32; 2]) -> [f64; 2] {
        [2.0 * PI * kh[0] as f64 / self.geometry.a1, 2.0 * PI * kh[1] as f64 / self.geometry.a2]
    }

    /// Largest `|μ|` among atoms.
    pub fn max_frequency(&self) -> f64 {
        self.modes.iter().flat_map(|m| m.atoms.iter()).map(|a| a.mu.abs()).fold(0.0, f64::max)
    }

    /// `Σ |φ_μ|` over all atoms and both components, bounding `|σ|`.
    pub fn amplitude_bound(&self) -> f64 {
        2.0 * self.modes.iter().flat_map(|m| m.atoms.iter()).map(|a| a.coeff[0].norm() + a.coeff[1].norm()).sum::<f64>()
    }
}

fn find_slot(base: &[f64], mu: f64) -> Option<PhaseSlot> {
    let mut best: Option<PhaseSlot> = None;
    for (j, nu) in base.iter().enumerate() {
        let n = (mu / nu).round();
        if n != 0.0 && n.abs() <= 20.0 && (n * nu - mu).abs() <= 1e-12 * mu.abs().max(1.0) {
            let cand = PhaseSlot { coordinate: j, multiplier: n as i32 };
            if best.map_or(true, |b| cand.multiplier.abs() < b.multiplier.abs()) {
                best = Some(cand);
            }
        }
    }
    best
}

/// Small integer relations `Σ n_j ν_j ≈ 0` among pairs and triples of base
/// frequencies, coefficients bounded by `max_coeff`.
pub fn integer_relations(freqs: &[f64], max_coeff: i32, tol: f64) -> Vec<Vec<(usize, i32)>> {
    let mut out = Vec::new();
    let d = freqs.len();
    for i in 0..d {
        for j in (i + 1)..d {
            'pair: for a in 1..=max_coeff {
                for b in -max_coeff..=max_coeff {
                    if b != 0 && (a as f64 * freqs[i] + b as f64 * freqs[j]).abs() <= tol {
                        out.push(vec![(i, a), (j, b)]);
                        break 'pair;
                    }
                }
            }
            for k in (j + 1)..d {
                'triple: for a in 1..=max_coeff {
                    for b in -max_coeff..=max_coeff {
                        for c in -max_coeff..=max_coeff {
                            if b != 0 && c != 0 && (a as f64 * freqs[i] + b as f64 * freqs[j] + c as f64 * freqs[k]).abs() <= tol {
                                out.push(vec![(i, a), (j, b), (k, c)]);
                                break 'triple;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// `σ(t, τ, x_h; ω)`.
pub fn sample_sigma(ws: &WindStress, t: f64, tau: f64, x_h: [f64; 2], omega: &PhasePoint) -> [f64; 2] {
    let env = ws.envelope(t);
    let mut out = [0.0; 2];
    for l in ws.half_lines(omega) {
        let k = ws.kprime_h(l.kh);
        let e = C64::from_polar(1.0, k[0] * x_h[0] + k[1] * x_h[1] + l.mu * tau);
        out[0] += 2.0 * (l.amp[0] * e).re;
        out[1] += 2.0 * (l.amp[1] * e).re;
    }
    [env * out[0], env * out[1]]
}

/// Unnormalised Fourier coefficient `σ̂(t, τ, k_h) = ∫_{T²} σ e^{-ik_h'·x}`.
pub fn sigma_hat(ws: &WindStress, t: f64, tau: f64, kh: [i32; 2], omega: &PhasePoint) -> [C64; 2] {
    let scale = ws.geometry.area() * ws.envelope(t);
    let mut out = [C64::new(0.0, 0.0); 2];
    for l in ws.lines(omega).iter().filter(|l| l.kh == kh) {
        let e = C64::from_polar(scale, l.mu * tau);
        out[0] += l.amp[0] * e;
        out[1] += l.amp[1] * e;
    }
    out
}

fn lorentzian(alpha: f64, x: f64) -> f64 {
    2.0 * alpha / (alpha * alpha + x * x)
}

/// `F_ασ(λ)` at horizontal mode `k_h` (coefficient of `e^{ik_h'·x}`):
/// `(1/2π) Σ φ_μ 2α/(α² + (μ−λ)²)`.
pub fn spectral_density_falpha(ws: &WindStress, lambda: f64, alpha: f64, kh: [i32; 2], omega: &PhasePoint) -> Result<[C64; 2]> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter { name: "alpha", reason: format!("must be positive, got {alpha}") });
    }
    let mut out = [C64::new(0.0, 0.0); 2];
    for l in ws.lines(omega).iter().filter(|l| l.kh == kh) {
        let w = lorentzian(alpha, l.mu - lambda) / (2.0 * PI);
        out[0] += l.amp[0] * w;
        out[1] += l.amp[1] * w;
    }
    Ok(out)
}

/// `σ_α(τ) = (1/π)∫ e^{−α|τ+αs|}/(1+s²) σ(τ+αs) ds`, truncated to
/// `|s| ≤ 50/α`. Returns the value and the analytic bound on the discarded
/// tails, `(2/π)·sup|σ|·α/50`.
pub fn reconstruct_sigma_alpha(
    ws: &WindStress,
    alpha: f64,
    t: f64,
    tau: f64,
    x_h: [f64; 2],
    omega: &PhasePoint,
) -> Result<([f64; 2], f64)> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter { name: "alpha", reason: format!("must be positive, got {alpha}") });
    }
    let smax = 50.0 / alpha;
    let tail = 2.0 / PI * ws.amplitude_bound() * ws.envelope(t).abs() / smax;
    if ws.is_empty() {
        return Ok(([0.0, 0.0], 0.0));
    }
    let breaks = kernel_breaks(smax, -tau / alpha, alpha * ws.max_frequency());
    let r = adaptive_panels(
        |s| {
            let tt = tau + alpha * s;
            let w = (-alpha * tt.abs()).exp() / (1.0 + s * s);
            let v = sample_sigma(ws, t, tt, x_h, omega);
            // Both real components packed into one complex integrand.
            C64::new(v[0], v[1]) * w
        },
        &breaks,
        1e-11,
        1e-12,
    )?;
    Ok(([r.value.re / PI, r.value.im / PI], tail))
}

/// Panel breaks on `[-S, S]`: geometric around the peak at `s = 0`, capped at
/// a quarter period of the fastest oscillation, plus the kink at `s = kink`.
fn kernel_breaks(smax: f64, kink: f64, omega_s: f64) -> Vec<f64> {
    let cap = if omega_s > 0.0 { (0.5 * PI / omega_s).max(1.0) } else { f64::INFINITY };
    let mut pos = vec![0.0];
    let mut x = 1.0_f64.min(smax);
    let mut step: f64 = 1.0;
    while x < smax {
        pos.push(x);
        step = (step * 2.0).min(cap);
        x += step;
    }
    pos.push(smax);
    let mut b: Vec<f64> = pos.iter().rev().map(|v| -v).chain(pos.iter().skip(1).copied()).collect();
    if kink.abs() < smax {
        b.push(kink);
    }
    b.sort_by(|p, q| p.partial_cmp(q).unwrap());
    b.dedup_by(|p, q| (*p - *q).abs() < 1e-12);
    b
}

/// Finite-horizon ergodic average `(1/θ)∫₀^θ φ(τ)e^{−iλτ}dτ` of the mode-`k_h`
/// coefficient process `φ(τ) = Σ φ_μ e^{iμτ}`, integrated exactly per atom.
pub fn ergodic_average(ws: &WindStress, lambda: f64, theta: f64, kh: [i32; 2], omega: &PhasePoint) -> [C64; 2] {
    let mut out = [C64::new(0.0, 0.0); 2];
    for l in ws.lines(omega).iter().filter(|l| l.kh == kh) {
        let p = phase_average(l.mu - lambda, theta);
        out[0] += l.amp[0] * p;
        out[1] += l.amp[1] * p;
    }
    out
}

/// `E_λ[φ] = Σ_μ 1_{μ=λ} φ_μ`, the `θ → ∞` limit of [`ergodic_average`].
pub fn ergodic_limit(ws: &WindStress, lambda: f64, kh: [i32; 2], omega: &PhasePoint) -> [C64; 2] {
    let mut out = [C64::new(0.0, 0.0); 2];
    for l in ws.lines(omega).iter().filter(|l| l.kh == kh && (l.mu - lambda).abs() <= FREQUENCY_TOL) {
        out[0] += l.amp[0];
        out[1] += l.amp[1];
    }
    out
}

/// Finite-horizon average of an arbitrary scalar process, by composite
/// Gauss–Legendre quadrature with panels of unit length.
pub fn ergodic_average_callable<F: FnMut(f64) -> C64>(mut f: F, lambda: f64, theta: f64) -> C64 {
    let panels = (theta.ceil() as usize).max(1);
    composite_gl(|tau| f(tau) * C64::from_polar(1.0, -lambda * tau), 0.0, theta, panels, 12) / theta
}

#[derive(Debug, Clone, Serialize)]
pub struct H1Report {
    /// `max_{k_h, component} Σ_μ |φ_μ|`.
    pub closed_form: f64,
    /// `(α, max_{k_h, component} ∫|F_ασ(λ)|dλ)`.
    pub grid: Vec<(f64, f64)>,
}

impl H1Report {
    pub fn sup_over_grid(&self) -> f64 {
        self.grid.iter().map(|g| g.1).fold(0.0, f64::max)
    }
}

/// Hypothesis (H1): `sup_α ∫ |F_ασ(λ)| dλ < ∞`.
pub fn check_h1(ws: &WindStress, alpha_grid: &[f64], omega: &PhasePoint) -> Result<H1Report> {
    let by_mode = ws.lines_by_mode(omega);
    let mut closed: f64 = 0.0;
    for lines in by_mode.values() {
        for c in 0..2 {
            closed = closed.max(lines.iter().map(|l| l.amp[c].norm()).sum());
        }
    }
    let mut grid = Vec::with_capacity(alpha_grid.len());
    for &alpha in alpha_grid {
        let mut best: f64 = 0.0;
        for lines in by_mode.values() {
            for c in 0..2 {
                best = best.max(l1_norm_of_density(lines, c, alpha)?);
            }
        }
        grid.push((alpha, best));
    }
    Ok(H1Report { closed_form: closed, grid })
}

/// `∫ |F_α(λ)| dλ` for one component: the real line is cut at midpoints
/// between peaks and each piece integrated in `u` with `λ = μ + α tan u`.
fn l1_norm_of_density(lines: &[SpectralLine], comp: usize, alpha: f64) -> Result<f64> {
    let mut mus: Vec<f64> = lines.iter().filter(|l| l.amp[comp].norm() > 0.0).map(|l| l.mu).collect();
    if mus.is_empty() {
        return Ok(0.0);
    }
    mus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    mus.dedup_by(|a, b| (*a - *b).abs() <= FREQUENCY_TOL);
    let density = |lam: f64| -> f64 {
        lines
            .iter()
            .map(|l| l.amp[comp] * (lorentzian(alpha, l.mu - lam) / (2.0 * PI)))
            .sum::<C64>()
            .norm()
    };
    let mut total = 0.0;
    for (i, &mu) in mus.iter().enumerate() {
        let lo = if i == 0 { f64::NEG_INFINITY } else { 0.5 * (mus[i - 1] + mu) };
        let hi = if i + 1 == mus.len() { f64::INFINITY } else { 0.5 * (mus[i + 1] + mu) };
        let ulo = ((lo - mu) / alpha).atan();
        let uhi = ((hi - mu) / alpha).atan();
        let r = adaptive(
            |u| {
                let c = u.cos();
                C64::new(density(mu + alpha * u.tan()) * alpha / (c * c), 0.0)
            },
            ulo,
            uhi,
            1e-12,
            1e-10,
            4000,
        )?;
        total += r.value.re;
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize)]
pub struct H2Report {
    pub pass: bool,
    /// Smallest distance from an atom frequency to `{−1, +1}`.
    pub min_distance: f64,
    pub eta: f64,
    /// `(α, sup_{λ∈V±} |F_ασ(λ)|)` with `V± = [±1 − η/2, ±1 + η/2]`.
    pub curve: Vec<(f64, f64)>,
}

/// Hypothesis (H2) for a finite atom set: no atom within `η` of `±1`.
pub fn check_h2(ws: &WindStress, eta: f64, alpha_grid: &[f64], omega: &PhasePoint) -> Result<H2Report> {
    let lines = ws.lines(omega);
    let min_distance = lines.iter().map(|l| (l.mu.abs() - 1.0).abs()).fold(f64::INFINITY, f64::min);
    let by_mode = ws.lines_by_mode(omega);
    let mut curve = Vec::new();
    for &alpha in alpha_grid {
        let mut sup: f64 = 0.0;
        for centre in [-1.0, 1.0] {
            let mut probes: Vec<f64> = (0..=400).map(|i| centre - 0.5 * eta + eta * i as f64 / 400.0).collect();
            probes.extend(lines.iter().map(|l| l.mu).filter(|m| (m - centre).abs() <= 0.5 * eta));
            for &lam in &probes {
                for (kh, _) in by_mode.iter() {
                    let f = spectral_density_falpha(ws, lam, alpha, *kh, omega)?;
                    sup = sup.max(f[0].norm()).max(f[1].norm());
                }
            }
        }
        curve.push((alpha, sup));
    }
    Ok(H2Report { pass: min_distance >= eta, min_distance, eta, curve })
}

/// Atoms at `μ_n = 1 − 1/n`, `n = 2..=n_max`, amplitude `decay^n` in the
/// first component of mode `k_h = (1, 0)`.
pub fn build_h2_counterexample(geometry: TorusGeometry, n_max: u32, decay: f64) -> Result<WindStress> {
    if n_max < 2 {
        return Err(Error::InvalidParameter { name: "n_max", reason: "needs at least two".into() });
    }
    let atoms = (2..=n_max)
        .map(|n| FrequencyAtom {
            mu: 1.0 - 1.0 / n as f64,
            coeff: [C64::new(decay.powi(n as i32), 0.0), C64::new(0.0, 0.0)],
        })
        .collect();
    WindStress::new(geometry, vec![ForcingMode { kh: [1, 0], atoms }], vec![])
}

/// Wind block of the experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindConfig {
    pub modes: Vec<WindModeConfig>,
    #[serde(default)]
    pub base_frequencies: Vec<f64>,
    #[serde(default)]
    pub envelope: Vec<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindModeConfig {
    pub kh: [i32; 2],
    pub atoms: Vec<AtomConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub mu: f64,
    pub re1: f64,
    pub im1: f64,
    pub re2: f64,
    pub im2: f64,
}

impl WindConfig {
    pub fn build(&self, geometry: TorusGeometry) -> Result<WindStress> {
        let modes = self
            .modes
            .iter()
            .map(|m| ForcingMode {
                kh: m.kh,
                atoms: m
                    .atoms
                    .iter()
                    .map(|a| FrequencyAtom { mu: a.mu, coeff: [C64::new(a.re1, a.im1), C64::new(a.re2, a.im2)] })
                    .collect(),
            })
            .collect();
        Ok(WindStress::new(geometry, modes, self.base_frequencies.clone())?.with_envelope(self.envelope.clone()))
    }
}
