//! Ekman boundary layers at the wind-driven top and the no-slip bottom, the
//! resonant `√(νt)` layer of the vertically constant modes, and the interior
//! correctors `v^int` and `δu^int`.
//!
//! Horizontal Fourier coefficients written `ĉ` are unnormalised integrals over
//! `T²`, so a pointwise field is `c(x_h) = (1/(a₁a₂)) Σ ĉ(k_h) e^{ik_h'·x_h}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{semigroup_apply, Basis, SpectralField};
use crate::forcing::{sample_sigma, PhasePoint, SpectralLine, WindStress, FREQUENCY_TOL};
use crate::geometry::{eigenvector, ModeIndex, TorusGeometry};
use crate::quad::{adaptive, composite_gl};
use crate::resonance::{phase_average, TriadTable};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerParams {
    pub epsilon: f64,
    pub nu: f64,
    pub beta: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_delta() -> f64 {
    1e-3
}

impl LayerParams {
    pub fn new(epsilon: f64, nu: f64, beta: f64, delta: f64) -> Result<Self> {
        let p = LayerParams { epsilon, nu, beta, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.epsilon), ("nu", self.nu), ("beta", self.beta), ("delta", self.delta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter { name, reason: format!("must be positive, got {v}") });
            }
        }
        Ok(())
    }

    /// Ekman depth `√(εν)`.
    pub fn depth(&self) -> f64 {
        (self.epsilon * self.nu).sqrt()
    }

    /// Warnings when `ν/ε` or `β√(εν)` exceed `bound`.
    pub fn regime_flags(&self, bound: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.nu / self.epsilon > bound {
            out.push(format!("nu/epsilon = {:.3e} exceeds {bound}", self.nu / self.epsilon));
        }
        if self.beta * self.depth() > bound {
            out.push(format!("beta*sqrt(epsilon*nu) = {:.3e} exceeds {bound}", self.beta * self.depth()));
        }
        out
    }
}

fn perp(v: [C64; 2]) -> [C64; 2] {
    [-v[1], v[0]]
}

/// `G_δ(τ, ζ) = ζ/(√(4π) τ^{3/2}) exp(−ζ²/4τ − δτ)`.
pub fn kernel_g_delta(tau: f64, zeta: f64, delta: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter { name: "tau", reason: format!("must be positive, got {tau}") });
    }
    if zeta < 0.0 {
        return Err(Error::InvalidParameter { name: "zeta", reason: format!("must be nonnegative, got {zeta}") });
    }
    Ok(zeta / ((4.0 * PI).sqrt() * tau.powf(1.5)) * (-zeta * zeta / (4.0 * tau) - delta * tau).exp())
}

/// `p_± = δ + i(μ ∓ 1)`.
fn p_pm(delta: f64, mu: f64) -> [C64; 2] {
    [C64::new(delta, mu - 1.0), C64::new(delta, mu + 1.0)]
}

fn kprime_h(geom: &TorusGeometry, kh: [i32; 2]) -> [f64; 2] {
    [2.0 * PI * kh[0] as f64 / geom.a1, 2.0 * PI * kh[1] as f64 / geom.a2]
}

/// `σ^± = ik_h'·φ ± (k_h')^⊥·φ` for one line.
fn sigma_pm(k: [f64; 2], amp: [C64; 2]) -> [C64; 2] {
    let div = I * (k[0] * amp[0] + k[1] * amp[1]);
    let rot = -k[1] * amp[0] + k[0] * amp[1];
    [div + rot, div - rot]
}

fn line_uh(l: &SpectralLine, params: &LayerParams, zeta: f64) -> [C64; 2] {
    let p = p_pm(params.delta, l.mu);
    let ph = perp(l.amp);
    let mut out = [C64::new(0.0, 0.0); 2];
    for (s, pp) in p.iter().enumerate() {
        let sign = if s == 0 { 1.0 } else { -1.0 };
        let r = pp.sqrt();
        let f = (-r * zeta).exp() / r;
        out[0] += (l.amp[0] + I * sign * ph[0]) * f;
        out[1] += (l.amp[1] + I * sign * ph[1]) * f;
    }
    let c = 0.5 * params.beta * params.depth();
    [out[0] * c, out[1] * c]
}

fn line_u3(l: &SpectralLine, geom: &TorusGeometry, params: &LayerParams, zeta: f64) -> C64 {
    let p = p_pm(params.delta, l.mu);
    let sp = sigma_pm(kprime_h(geom, l.kh), l.amp);
    let sum: C64 = (0..2).map(|s| sp[s] * (-p[s].sqrt() * zeta).exp() / p[s]).sum();
    -0.5 * params.nu * params.epsilon * params.beta * sum
}

/// Horizontal top-layer velocity `u_{T,h}^δ(t, τ, x_h, ζ; ω)` with
/// `ζ = (a − z)/√(εν)`, from the Laplace-transform closed form per line.
pub fn top_layer_uh(ws: &WindStress, params: &LayerParams, t: f64, tau: f64, x_h: [f64; 2], zeta: f64, omega: &PhasePoint) -> [C64; 2] {
    let env = ws.envelope(t);
    let mut out = [C64::new(0.0, 0.0); 2];
    for l in ws.lines(omega) {
        let k = ws.kprime_h(l.kh);
        let e = C64::from_polar(env, k[0] * x_h[0] + k[1] * x_h[1] + l.mu * tau);
        let u = line_uh(&l, params, zeta);
        out[0] += u[0] * e;
        out[1] += u[1] * e;
    }
    out
}

/// Vertical top-layer velocity `u_{T,3}^δ`.
pub fn top_layer_u3(ws: &WindStress, params: &LayerParams, t: f64, tau: f64, x_h: [f64; 2], zeta: f64, omega: &PhasePoint) -> C64 {
    let env = ws.envelope(t);
    ws.lines(omega)
        .iter()
        .map(|l| {
            let k = ws.kprime_h(l.kh);
            line_u3(l, &ws.geometry, params, zeta) * C64::from_polar(env, k[0] * x_h[0] + k[1] * x_h[1] + l.mu * tau)
        })
        .sum()
}

/// Unnormalised horizontal Fourier coefficient of `(u_{T,h}, u_{T,3})` at `k_h`.
pub fn top_layer_hat(ws: &WindStress, params: &LayerParams, t: f64, tau: f64, kh: [i32; 2], zeta: f64, omega: &PhasePoint) -> [C64; 3] {
    let scale = ws.geometry.area() * ws.envelope(t);
    let mut out = [C64::new(0.0, 0.0); 3];
    for l in ws.lines(omega).iter().filter(|l| l.kh == kh) {
        let e = C64::from_polar(scale, l.mu * tau);
        let u = line_uh(l, params, zeta);
        out[0] += u[0] * e;
        out[1] += u[1] * e;
        out[2] += line_u3(l, &ws.geometry, params, zeta) * e;
    }
    out
}

/// `∫₀^∞ f(s) ds` for integrands carrying `e^{−δs}` and oscillating at most
/// at angular frequency `freq`. The region `s ≤ s₁` (with the `s^{−1/2}` and
/// `e^{−ζ²/4s}` structure) is integrated adaptively in `r = √s`; the tail by
/// composite Gauss–Legendre on quarter-period panels up to `e^{−δs} < 1e−16`.
fn half_line<F: FnMut(f64) -> C64>(mut f: F, delta: f64, freq: f64, zeta: f64) -> Result<C64> {
    let s1 = 2.0 * (1.0 + zeta * zeta);
    let smax = (37.0 / delta).max(2.0 * s1);
    let head = adaptive(|r| f(r * r) * (2.0 * r), 0.0, s1.sqrt(), 1e-14, 1e-13, 4000)?;
    let width = (0.5 * PI / freq.max(1e-3)).min(1.0);
    let panels = ((smax - s1) / width).ceil() as usize;
    let tail = composite_gl(&mut f, s1, smax, panels.max(1), 16);
    Ok(head.value + tail)
}

/// Quadrature of the top-layer integral representation
/// `(β√(νε)/√(4π)) Σ_± ∫₀^∞ s^{−1/2} e^{−ζ²/4s} (σ ± iσ^⊥)(τ − s) e^{−δs ± is} ds`.
pub fn top_layer_uh_quadrature(
    ws: &WindStress,
    params: &LayerParams,
    t: f64,
    tau: f64,
    x_h: [f64; 2],
    zeta: f64,
    omega: &PhasePoint,
) -> Result<[C64; 2]> {
    let freq = ws.max_frequency() + 1.0;
    let mut out = [C64::new(0.0, 0.0); 2];
    for (j, o) in out.iter_mut().enumerate() {
        let v = half_line(
            |s| {
                if s <= 0.0 {
                    return C64::new(0.0, 0.0);
                }
                let sg = sample_sigma(ws, t, tau - s, x_h, omega);
                let sg = [C64::new(sg[0], 0.0), C64::new(sg[1], 0.0)];
                let sp = perp(sg);
                let w = (-zeta * zeta / (4.0 * s) - params.delta * s).exp() / s.sqrt();
                let plus = (sg[j] + I * sp[j]) * C64::from_polar(1.0, s);
                let minus = (sg[j] - I * sp[j]) * C64::from_polar(1.0, -s);
                (plus + minus) * w
            },
            params.delta,
            freq,
            zeta,
        )?;
        *o = v * (params.beta * params.depth() / (4.0 * PI).sqrt());
    }
    Ok(out)
}

/// Quadrature of `(νεβ/√(4π)) Σ_± ∫₀^∞ φ(ζ/√s)(div σ ∓ i rot σ)(τ − s) e^{−δs ± is} ds`
/// with `φ(x) = −√π erfc(x/2)`.
pub fn top_layer_u3_quadrature(
    ws: &WindStress,
    params: &LayerParams,
    t: f64,
    tau: f64,
    x_h: [f64; 2],
    zeta: f64,
    omega: &PhasePoint,
) -> Result<C64> {
    let freq = ws.max_frequency() + 1.0;
    let lines = ws.half_lines(omega);
    let env = ws.envelope(t);
    let v = half_line(
        |s| {
            let phi = if s <= 0.0 {
                if zeta > 0.0 { 0.0 } else { -PI.sqrt() }
            } else {
                -PI.sqrt() * libm::erfc(zeta / (2.0 * s.sqrt()))
            };
            let (mut div, mut rot) = (0.0, 0.0);
            for l in &lines {
                let k = ws.kprime_h(l.kh);
                let e = C64::from_polar(1.0, k[0] * x_h[0] + k[1] * x_h[1] + l.mu * (tau - s));
                div += 2.0 * (I * (k[0] * l.amp[0] + k[1] * l.amp[1]) * e).re;
                rot += 2.0 * (I * (k[0] * l.amp[1] - k[1] * l.amp[0]) * e).re;
            }
            let plus = C64::new(div, -rot) * C64::from_polar(1.0, s);
            let minus = C64::new(div, rot) * C64::from_polar(1.0, -s);
            (plus + minus) * (phi * env * (-params.delta * s).exp())
        },
        params.delta,
        freq,
        zeta,
    )?;
    Ok(v * (params.nu * params.epsilon * params.beta / (4.0 * PI).sqrt()))
}

/// `η_k^± = √(1 ∓ λ)(1 ± i)/√2`.
pub fn eta_pm(lambda: f64) -> [C64; 2] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    [
        C64::new(1.0, 1.0) * ((1.0 - lambda).max(0.0).sqrt() * r),
        C64::new(1.0, -1.0) * ((1.0 + lambda).max(0.0).sqrt() * r),
    ]
}

/// Bottom boundary data of one mode with `k_h ≠ 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BottomLayerSpec {
    pub k: ModeIndex,
    pub lambda: f64,
    pub kprime: [f64; 3],
    /// Horizontal velocity the layer must produce at `ζ = 0`.
    pub c_hat: [C64; 2],
    /// `w^±` with `w^+ + w^- = ĉ`, eigenvectors of `⊥`.
    pub w: [[C64; 2]; 2],
    pub eta: [C64; 2],
}

impl BottomLayerSpec {
    pub fn new(geom: &TorusGeometry, k: ModeIndex, c_hat: [C64; 2]) -> Result<Self> {
        if k.horizontal_is_zero() {
            return Err(Error::ZeroMode);
        }
        let m = eigenvector(geom, k)?;
        let plus = (c_hat[0] + I * c_hat[1]) * 0.5;
        let minus = (c_hat[0] - I * c_hat[1]) * 0.5;
        Ok(BottomLayerSpec {
            k,
            lambda: m.lambda,
            kprime: m.kprime,
            c_hat,
            w: [[plus, -I * plus], [minus, I * minus]],
            eta: eta_pm(m.lambda),
        })
    }

    /// Layer cancelling the interior term `c·N_k` at `z = 0`: `ĉ = −c·n_h(k)`.
    pub fn from_interior(geom: &TorusGeometry, k: ModeIndex, c: C64) -> Result<Self> {
        let m = eigenvector(geom, k)?;
        Self::new(geom, k, [-c * m.n[0], -c * m.n[1]])
    }

    /// `Σ_± ik_h'·w^±/η^±`, so that `u_{B,3}(ζ=0) = √(εν)·this·phase`.
    pub fn flux_factor(&self) -> C64 {
        (0..2).map(|s| I * (self.kprime[0] * self.w[s][0] + self.kprime[1] * self.w[s][1]) / self.eta[s]).sum()
    }
}

/// `u_{B,k}(τ, x_h, ζ)` with `ζ = z/√(εν)`.
pub fn bottom_layer(spec: &BottomLayerSpec, params: &LayerParams, tau: f64, x_h: [f64; 2], zeta: f64) -> [C64; 3] {
    let ph = C64::from_polar(1.0, spec.kprime[0] * x_h[0] + spec.kprime[1] * x_h[1] - spec.lambda * tau);
    let mut out = [C64::new(0.0, 0.0); 3];
    for s in 0..2 {
        let e = ph * (-spec.eta[s] * zeta).exp();
        out[0] += spec.w[s][0] * e;
        out[1] += spec.w[s][1] * e;
        out[2] += I * (spec.kprime[0] * spec.w[s][0] + spec.kprime[1] * spec.w[s][1]) / spec.eta[s] * e;
    }
    out[2] *= params.depth();
    out
}

/// `ψ(X) = (1/√π)∫_X^∞ e^{−u²/4} du = erfc(X/2)`.
pub fn psi(x: f64) -> f64 {
    libm::erfc(0.5 * x)
}

/// `ψ(z/√(νt)) Σ_± α_± e^{±iτ}(1, ±i)` with `τ = t/ε`.
pub fn resonant_layer(alpha: [C64; 2], t: f64, tau: f64, z: f64, nu: f64) -> Result<[C64; 2]> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter { name: "t", reason: format!("must be positive, got {t}") });
    }
    let p = psi(z / (nu * t).sqrt());
    let a = alpha[0] * C64::from_polar(1.0, tau);
    let b = alpha[1] * C64::from_polar(1.0, -tau);
    Ok([(a + b) * p, (a - b) * I * p])
}

/// A non-resonant component `amp·(1, s·i)·e^{iντ − ηζ}` of the `k_h = 0`
/// bottom data, `s = ±1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaTerm {
    pub nu: f64,
    pub polarization: i32,
    pub amp: C64,
    pub eta: C64,
}

/// Split of `k_h = 0` bottom data into the resonant amplitudes `α_±` (frequency
/// `±1` on polarisation `(1, ±i)`) and classical layers `γ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroModeSplit {
    pub alpha: [C64; 2],
    pub gamma: Vec<GammaTerm>,
}

impl ZeroModeSplit {
    /// Classical part at `(τ, ζ)`.
    pub fn classical(&self, tau: f64, zeta: f64) -> [C64; 2] {
        let mut out = [C64::new(0.0, 0.0); 2];
        for g in &self.gamma {
            let e = g.amp * C64::from_polar(1.0, g.nu * tau) * (-g.eta * zeta).exp();
            out[0] += e;
            out[1] += e * I * g.polarization as f64;
        }
        out
    }
}

/// Splits `ĉ(τ) = Σ ĉ_ν e^{iντ}` (pointwise horizontal data at `k_h = 0`).
pub fn split_zero_mode(terms: &[(f64, [C64; 2])]) -> ZeroModeSplit {
    let mut alpha = [C64::new(0.0, 0.0); 2];
    let mut gamma = Vec::new();
    for &(nu, c) in terms {
        for (pol, amp) in [(1, (c[0] - I * c[1]) * 0.5), (-1, (c[0] + I * c[1]) * 0.5)] {
            if amp == C64::new(0.0, 0.0) {
                continue;
            }
            // (1, ±i)^⊥ = ∓i(1, ±i); the layer ODE gives η² = i(ν ∓ 1).
            let target = pol as f64;
            if (nu - target).abs() <= FREQUENCY_TOL {
                alpha[if pol == 1 { 0 } else { 1 }] += amp;
            } else {
                let eta = (I * (nu - target)).sqrt();
                gamma.push(GammaTerm { nu, polarization: pol, amp, eta });
            }
        }
    }
    ZeroModeSplit { alpha, gamma }
}

/// `k_h = 0` bottom data `−Σ_{k₃} c_k n_h(k) e^{−iλ_kτ}` of an interior field.
pub fn zero_mode_boundary_terms(w: &SpectralField) -> Result<Vec<(f64, [C64; 2])>> {
    let mut out = Vec::new();
    for (k, c) in w.modes() {
        if k.horizontal_is_zero() && c != C64::new(0.0, 0.0) {
            let m = eigenvector(&w.geometry, k)?;
            out.push((-m.lambda, [-c * m.n[0], -c * m.n[1]]));
        }
    }
    Ok(out)
}

/// Finite exponential sum `Σ c_j e^{iν_jτ}` in the fast time.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExpSum {
    pub terms: Vec<(f64, C64)>,
}

impl ExpSum {
    pub fn push(&mut self, nu: f64, c: C64) {
        match self.terms.iter_mut().find(|t| (t.0 - nu).abs() <= FREQUENCY_TOL) {
            Some(t) => t.1 += c,
            None => self.terms.push((nu, c)),
        }
    }

    pub fn eval(&self, tau: f64) -> C64 {
        self.terms.iter().map(|(nu, c)| c * C64::from_polar(1.0, nu * tau)).sum()
    }

    pub fn deriv(&self, tau: f64) -> C64 {
        self.terms.iter().map(|(nu, c)| c * I * nu * C64::from_polar(1.0, nu * tau)).sum()
    }

    /// `E_λ[c] = lim (1/θ)∫₀^θ c(τ)e^{−iλτ}dτ`.
    pub fn ergodic_limit(&self, lambda: f64) -> C64 {
        self.terms.iter().filter(|(nu, _)| (nu - lambda).abs() <= FREQUENCY_TOL).map(|t| t.1).sum()
    }

    pub fn average(&self, lambda: f64, theta: f64) -> C64 {
        self.terms.iter().map(|(nu, c)| c * phase_average(nu - lambda, theta)).sum()
    }

    pub fn max_frequency(&self) -> f64 {
        self.terms.iter().map(|t| t.0.abs()).fold(0.0, f64::max)
    }
}

/// Per horizontal mode exponential sums of `ĉ_{B,3}` and `ĉ_{T,3}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BoundaryFluxes {
    pub bottom: BTreeMap<[i32; 2], ExpSum>,
    pub top: BTreeMap<[i32; 2], ExpSum>,
}

impl BoundaryFluxes {
    pub fn new(w: Option<&SpectralField>, wind: Option<(&WindStress, &LayerParams, f64, &PhasePoint)>) -> Result<Self> {
        Ok(BoundaryFluxes {
            bottom: match w {
                Some(w) => cb3_series(w)?,
                None => BTreeMap::new(),
            },
            top: match wind {
                Some((ws, p, t, om)) => ct3_series(ws, p, t, om),
                None => BTreeMap::new(),
            },
        })
    }

    fn get(map: &BTreeMap<[i32; 2], ExpSum>, kh: [i32; 2]) -> Option<&ExpSum> {
        map.get(&kh)
    }

    pub fn max_frequency(&self) -> f64 {
        self.bottom.values().chain(self.top.values()).map(ExpSum::max_frequency).fold(0.0, f64::max)
    }
}

/// `ĉ_{B,3}(τ, k_h) = −a₁a₂ Σ_{k₃} Σ_± ik_h'·w_k^±/η_k^± e^{−iλ_kτ}` for the
/// bottom data of `w`.
pub fn cb3_series(w: &SpectralField) -> Result<BTreeMap<[i32; 2], ExpSum>> {
    let area = w.geometry.area();
    let mut out: BTreeMap<[i32; 2], ExpSum> = BTreeMap::new();
    for (k, c) in w.modes() {
        if k.horizontal_is_zero() || c == C64::new(0.0, 0.0) {
            continue;
        }
        let spec = BottomLayerSpec::from_interior(&w.geometry, k, c)?;
        out.entry(k.kh()).or_default().push(-spec.lambda, -area * spec.flux_factor());
    }
    Ok(out)
}

/// `ĉ_{T,3}(t, τ, k_h) = ½ Σ_± ∫₀^∞ σ̂^±(τ − s) e^{−δs ± is} ds`, exact per line.
pub fn ct3_series(ws: &WindStress, params: &LayerParams, t: f64, omega: &PhasePoint) -> BTreeMap<[i32; 2], ExpSum> {
    let scale = ws.geometry.area() * ws.envelope(t);
    let mut out: BTreeMap<[i32; 2], ExpSum> = BTreeMap::new();
    for l in ws.lines(omega) {
        if l.kh == [0, 0] {
            continue;
        }
        let sp = sigma_pm(ws.kprime_h(l.kh), l.amp);
        let p = p_pm(params.delta, l.mu);
        let c = (sp[0] / p[0] + sp[1] / p[1]) * (0.5 * scale);
        out.entry(l.kh).or_default().push(l.mu, c);
    }
    out
}

pub fn compute_cb3(w: &SpectralField, tau: f64) -> Result<BTreeMap<[i32; 2], C64>> {
    Ok(cb3_series(w)?.into_iter().map(|(k, s)| (k, s.eval(tau))).collect())
}

pub fn compute_ct3(ws: &WindStress, params: &LayerParams, t: f64, tau: f64, omega: &PhasePoint) -> BTreeMap<[i32; 2], C64> {
    ct3_series(ws, params, t, omega).into_iter().map(|(k, s)| (k, s.eval(tau))).collect()
}

/// Interior lift `v^int(x_h, z)` of the boundary fluxes: `v₃` interpolates
/// linearly between `√(εν)c_{B,3}` and `ενβc_{T,3}`, and
/// `v_h = (1/a)∇_hΔ_h^{−1}[√(εν)c_{B,3} − ενβc_{T,3}]`.
pub fn corrector_vint(
    geom: &TorusGeometry,
    cb3: &BTreeMap<[i32; 2], C64>,
    ct3: &BTreeMap<[i32; 2], C64>,
    params: &LayerParams,
    x_h: [f64; 2],
    z: f64,
) -> Result<[C64; 3]> {
    let mut keys: Vec<[i32; 2]> = cb3.keys().chain(ct3.keys()).copied().collect();
    keys.sort();
    keys.dedup();
    let (sb, st) = (params.depth(), params.epsilon * params.nu * params.beta);
    let zero = C64::new(0.0, 0.0);
    let mut out = [zero; 3];
    for kh in keys {
        let b = *cb3.get(&kh).unwrap_or(&zero);
        let tp = *ct3.get(&kh).unwrap_or(&zero);
        let g = sb * b - st * tp;
        if kh == [0, 0] {
            if g.norm() > 1e-13 * (1.0 + b.norm() + tp.norm()) {
                return Err(Error::NonzeroHorizontalMean);
            }
            continue;
        }
        let k = kprime_h(geom, kh);
        let e = C64::from_polar(1.0 / geom.area(), k[0] * x_h[0] + k[1] * x_h[1]);
        let k2 = k[0] * k[0] + k[1] * k[1];
        let vh = -I * g / (geom.a * k2);
        out[0] += vh * k[0] * e;
        out[1] += vh * k[1] * e;
        out[2] += (st * tp * z + sb * b * (geom.a - z)) / geom.a * e;
    }
    Ok(out)
}

/// `L(−τ)P[∂_τ v^int + e₃∧v^int]` as one exponential sum per mode `|k| ≤ K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaSeries {
    pub geometry: TorusGeometry,
    pub truncation: u32,
    pub modes: Vec<ExpSum>,
}

impl SigmaSeries {
    pub fn new(geom: &TorusGeometry, flux: &BoundaryFluxes, params: &LayerParams, truncation: u32) -> Result<Self> {
        let basis = Basis::new(*geom, truncation)?;
        let pref = 1.0 / geom.volume().sqrt();
        let (sb, st) = (params.depth(), params.epsilon * params.nu * params.beta);
        let mut modes = vec![ExpSum::default(); basis.modes.len()];
        for (i, m) in basis.modes.iter().enumerate() {
            let k = basis.set.mode(i);
            if k.horizontal_is_zero() {
                continue;
            }
            let kh = m.kh_norm();
            let sign = if k.k3 % 2 == 0 { 1.0 } else { -1.0 };
            let parts = [(BoundaryFluxes::get(&flux.bottom, k.kh()), sb), (BoundaryFluxes::get(&flux.top, k.kh()), -sign * st)];
            for (series, weight) in parts {
                let Some(series) = series else { continue };
                for &(nu, c) in &series.terms {
                    if k.k3 != 0 {
                        let f = -I * pref * kh / (m.kprime[2] * m.norm());
                        modes[i].push(nu + m.lambda, f * weight * c * I * nu);
                    } else {
                        // λ = 0 and the top sign is +1 here
                        modes[i].push(nu, pref / kh * weight * c);
                    }
                }
            }
        }
        Ok(SigmaSeries { geometry: *geom, truncation, modes })
    }

    pub fn eval(&self, tau: f64) -> SpectralField {
        let mut out = SpectralField::zeros(self.geometry, self.truncation);
        for (c, s) in out.coeffs.iter_mut().zip(&self.modes) {
            *c = s.eval(tau);
        }
        out
    }

    pub fn max_frequency(&self) -> f64 {
        self.modes.iter().map(ExpSum::max_frequency).fold(0.0, f64::max)
    }

    /// `∫₀^τ` of [`SigmaSeries::eval`] by composite 12-point Gauss–Legendre
    /// with panels shorter than half the fastest period.
    pub fn integrate(&self, tau: f64) -> SpectralField {
        let mut out = SpectralField::zeros(self.geometry, self.truncation);
        if tau == 0.0 {
            return out;
        }
        let panels = ((tau.abs() * self.max_frequency() / PI).ceil() as usize).max(1);
        let (x, w) = crate::quad::gauss_legendre(12);
        let h = tau / panels as f64;
        for p in 0..panels {
            let c = (p as f64 + 0.5) * h;
            for (xi, wi) in x.iter().zip(&w) {
                let s = c + 0.5 * h * xi;
                let f = 0.5 * h * wi;
                for (o, m) in out.coeffs.iter_mut().zip(&self.modes) {
                    *o += m.eval(s) * f;
                }
            }
        }
        out
    }
}

/// `L(−τ)P[∂_τ v^int + e₃∧v^int]` on modes `|k| ≤ K`.
pub fn sigma_projection(geom: &TorusGeometry, flux: &BoundaryFluxes, params: &LayerParams, truncation: u32, tau: f64) -> Result<SpectralField> {
    Ok(SigmaSeries::new(geom, flux, params, truncation)?.eval(tau))
}

/// `S̄[c_{B,3}, c_{T,3}] = (1/√(aa₁a₂)) Σ |k_h'|/|k'|² E_{−λ_k}[√(εν)ĉ_{B,3} − (−1)^{k₃}ενβĉ_{T,3}] N_k`.
pub fn source_limit(geom: &TorusGeometry, flux: &BoundaryFluxes, params: &LayerParams, truncation: u32) -> Result<SpectralField> {
    let basis = Basis::new(*geom, truncation)?;
    let mut out = SpectralField::zeros(*geom, truncation);
    let pref = 1.0 / geom.volume().sqrt();
    let (sb, st) = (params.depth(), params.epsilon * params.nu * params.beta);
    let zero = C64::new(0.0, 0.0);
    for (i, m) in basis.modes.iter().enumerate() {
        let k = basis.set.mode(i);
        if k.horizontal_is_zero() {
            continue;
        }
        let sign = if k.k3 % 2 == 0 { 1.0 } else { -1.0 };
        let eb = BoundaryFluxes::get(&flux.bottom, k.kh()).map_or(zero, |s| s.ergodic_limit(-m.lambda));
        let et = BoundaryFluxes::get(&flux.top, k.kh()).map_or(zero, |s| s.ergodic_limit(-m.lambda));
        out.coeffs[i] = pref * m.kh_norm() / (m.norm() * m.norm()) * (sb * eb - sign * st * et);
    }
    Ok(out)
}

/// `δu^int(τ)` on each `τ` in `taus`, truncated to `|k| ≤ K`:
/// `L(τ)[ε∫₀^τ(Q̄ − Q(s))ds + ∫₀^τ(S̄ − L(−s)P(∂_τv + e₃∧v))ds]`.
///
/// `table` must include non-resonant triads; pass `None` to drop the
/// quadratic part.
pub fn compute_delta_uint(
    table: Option<&TriadTable>,
    w: &SpectralField,
    flux: &BoundaryFluxes,
    params: &LayerParams,
    truncation: u32,
    taus: &[f64],
) -> Result<Vec<SpectralField>> {
    let geom = w.geometry;
    let basis = Basis::new(geom, truncation)?;
    let sbar = source_limit(&geom, flux, params, truncation)?;
    let series = SigmaSeries::new(&geom, flux, params, truncation)?;
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut acc = SpectralField::zeros(geom, truncation);
        if let Some(tab) = table {
            let q = tab.q_defect_integral(w, w, tau)?.retruncate(truncation);
            acc.axpy(C64::new(params.epsilon, 0.0), &q);
        }
        acc.axpy(C64::new(tau, 0.0), &sbar);
        acc.axpy(C64::new(-1.0, 0.0), &series.integrate(tau));
        out.push(semigroup_apply(&acc, &basis, tau, 1));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualReport {
    pub max: f64,
    pub rms: f64,
}

/// Central-difference residual of `∂_τu − ∂_ζ²u + u^⊥ + δu` on a grid.
pub fn layer_residual<F: Fn(f64, f64) -> [C64; 2]>(profile: F, delta: f64, taus: &[f64], zetas: &[f64], h: f64) -> ResidualReport {
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    let mut n = 0usize;
    for &tau in taus {
        for &zeta in zetas {
            let u = profile(tau, zeta);
            let up = profile(tau + h, zeta);
            let um = profile(tau - h, zeta);
            let zp = profile(tau, zeta + h);
            let zm = profile(tau, zeta - h);
            let pu = perp(u);
            for j in 0..2 {
                let r = (up[j] - um[j]) / (2.0 * h) - (zp[j] - 2.0 * u[j] + zm[j]) / (h * h) + pu[j] + u[j] * delta;
                max = max.max(r.norm());
                sum += r.norm_sqr();
                n += 1;
            }
        }
    }
    ResidualReport { max, rms: (sum / n.max(1) as f64).sqrt() }
}

/// Residual of `−(X/2)ψ′ − ψ″ = 0` by central differences.
pub fn psi_residual(xs: &[f64], h: f64) -> f64 {
    xs.iter()
        .map(|&x| {
            let d1 = (psi(x + h) - psi(x - h)) / (2.0 * h);
            let d2 = (psi(x + h) - 2.0 * psi(x) + psi(x - h)) / (h * h);
            (-0.5 * x * d1 - d2).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub nu: f64,
    /// `sup |u_{T,h}^δ| / (√(εν)β)` over the sampled `(τ, x_h, z)`.
    pub sup_ratio: f64,
    /// `‖u_{T,h}^δ‖_{L²(dz)} / ((εν)^{1/4}β)`, i.e. the `ζ`-L² norm per unit `√(εν)β`.
    pub l2_ratio: f64,
}

/// Top-layer amplitude ratios over `ε = ν` in `epsilons`, evaluated in the
/// physical variable `z ∈ [0, a]` on a grid refined towards the surface.
pub fn layer_scaling_sweep(ws: &WindStress, epsilons: &[f64], beta: f64, delta: f64, omega: &PhasePoint, taus: &[f64]) -> Result<Vec<ScalingRow>> {
    let a = ws.geometry.a;
    let xs = [[0.0, 0.0], [0.3 * ws.geometry.a1, 0.7 * ws.geometry.a2]];
    let mut rows = Vec::new();
    for &eps in epsilons {
        let params = LayerParams::new(eps, eps, beta, delta)?;
        let d = params.depth();
        let (gz, gw) = crate::quad::gauss_legendre(48);
        let mut sup: f64 = 0.0;
        let mut l2max: f64 = 0.0;
        for &tau in taus {
            for x in &xs {
                let mut l2 = 0.0;
                // depth from the surface, panels [0, d·2^j] up to a
                let mut lo = 0.0;
                let mut hi = 0.25 * d;
                while lo < a {
                    let top = hi.min(a);
                    for (xi, wi) in gz.iter().zip(&gw) {
                        let depth = 0.5 * (lo + top) + 0.5 * (top - lo) * xi;
                        let u = top_layer_uh(ws, &params, 0.0, tau, *x, depth / d, omega);
                        let n2 = u[0].norm_sqr() + u[1].norm_sqr();
                        l2 += 0.5 * (top - lo) * wi * n2;
                        sup = sup.max(n2.sqrt());
                    }
                    lo = top;
                    hi = 2.0 * top;
                }
                let u0 = top_layer_uh(ws, &params, 0.0, tau, *x, 0.0, omega);
                sup = sup.max((u0[0].norm_sqr() + u0[1].norm_sqr()).sqrt());
                l2max = l2max.max(l2.sqrt());
            }
        }
        rows.push(ScalingRow { epsilon: eps, nu: eps, sup_ratio: sup / (d * beta), l2_ratio: l2max / (d.sqrt() * d * beta) });
    }
    Ok(rows)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{ForcingMode, FrequencyAtom};

    fn single_atom(mu: f64) -> WindStress {
        WindStress::new(
            TorusGeometry::new(1.0, 1.3, 0.9).unwrap(),
            vec![ForcingMode { kh: [1, -1], atoms: vec![FrequencyAtom { mu, coeff: [C64::new(0.4, 0.1), C64::new(-0.2, 0.3)] }] }],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_g_delta(1.0, 0.0, 0.1).unwrap(), 0.0);
        assert!(kernel_g_delta(0.0, 1.0, 0.1).is_err());
        for zeta in [0.5, 1.0, 2.0] {
            // s = (ζ/2)²/u² maps the heat-kernel flux onto ∫ (2/√π)e^{−u²}du
            let r = adaptive(|s| C64::new(kernel_g_delta(s, zeta, 0.0).unwrap_or(0.0), 0.0), 0.0, 1e3, 1e-12, 1e-12, 4000).unwrap();
            let tail = libm::erf(zeta / (2.0 * 1e3f64.sqrt()));
            assert!((r.value.re + tail - 1.0).abs() < 1e-9, "{zeta}: {}", r.value.re);
        }
    }

    #[test]
    fn top_layer_neumann_condition() {
        let ws = single_atom(0.4);
        let om = PhasePoint::random(ws.phase_dim(), &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3));
        let p = LayerParams::new(1e-2, 2e-2, 1.5, 1e-3).unwrap();
        let x = [0.2, 0.45];
        for tau in [0.0, 1.3, 7.0] {
            let h = 1e-5;
            let up = top_layer_uh(&ws, &p, 0.0, tau, x, h, &om);
            let um = top_layer_uh(&ws, &p, 0.0, tau, x, -h, &om);
            let s = sample_sigma(&ws, 0.0, tau, x, &om);
            for j in 0..2 {
                let d = (up[j] - um[j]) / (2.0 * h);
                let target = -p.depth() * p.beta * s[j];
                assert!((d.re - target).abs() < 1e-8 && d.im.abs() < 1e-12, "{d} vs {target}");
            }
        }
    }

    #[test]
    fn top_layer_is_real_and_decays() {
        let ws = single_atom(-0.6);
        let om = PhasePoint::zero(ws.phase_dim());
        let p = LayerParams::new(1e-2, 1e-2, 1.0, 1e-3).unwrap();
        let u = top_layer_uh(&ws, &p, 0.0, 0.7, [0.1, 0.2], 0.5, &om);
        assert!(u[0].im.abs() < 1e-15 && u[1].im.abs() < 1e-15);
        let far = top_layer_uh(&ws, &p, 0.0, 0.7, [0.1, 0.2], 60.0, &om);
        assert!(far[0].norm() < 1e-12);
        assert_eq!(top_layer_uh(&WindStress::empty(ws.geometry), &p, 0.0, 0.0, [0.0; 2], 0.0, &PhasePoint::zero(0)), [C64::new(0.0, 0.0); 2]);
    }

    #[test]
    fn stationary_atom_decay_rate_matches_bottom_eta() {
        // μ = 0, δ → 0: √p_± → √(∓i), real part 1/√2 = Re η^± at λ = 0
        let p = p_pm(0.0, 0.0);
        let e = eta_pm(0.0);
        for s in 0..2 {
            assert!((p[s].sqrt().re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
            assert!((e[s].re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        }
    }

    #[test]
    fn u3_surface_value_is_ct3() {
        let ws = single_atom(0.25);
        let om = PhasePoint::zero(ws.phase_dim());
        let p = LayerParams::new(1e-2, 1e-2, 2.0, 1e-2).unwrap();
        let tau = 0.8;
        let x = [0.3, 0.1];
        let u3 = top_layer_u3(&ws, &p, 0.0, tau, x, 0.0, &om);
        let ct3 = compute_ct3(&ws, &p, 0.0, tau, &om);
        let pointwise: C64 = ct3
            .iter()
            .map(|(kh, c)| {
                let k = kprime_h(&ws.geometry, *kh);
                c * C64::from_polar(1.0 / ws.geometry.area(), k[0] * x[0] + k[1] * x[1])
            })
            .sum();
        let target = -p.epsilon * p.nu * p.beta * pointwise;
        assert!((u3 - target).norm() < 1e-15, "{u3} vs {target}");
    }

    #[test]
    fn bottom_layer_dirichlet_and_spiral() {
        let g = TorusGeometry::unit();
        let k = ModeIndex::new(1, 0, 0);
        let c = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let spec = BottomLayerSpec::new(&g, k, c).unwrap();
        assert!(spec.lambda.abs() < 1e-15);
        let p = LayerParams::new(1e-2, 1e-2, 1.0, 1e-3).unwrap();
        let u0 = bottom_layer(&spec, &p, 0.0, [0.0, 0.0], 0.0);
        assert!((u0[0] - 1.0).norm() < 1e-15 && u0[1].norm() < 1e-15);
        // λ = 0: u_h(ζ) = e^{−ζ/√2}(cos(ζ/√2), −sin(ζ/√2))
        for zeta in [0.0, 1.0, 2.0] {
            let u = bottom_layer(&spec, &p, 0.0, [0.0, 0.0], zeta);
            let r = zeta * std::f64::consts::FRAC_1_SQRT_2;
            assert!((u[0] - C64::new((-r).exp() * r.cos(), 0.0)).norm() < 1e-14);
            assert!((u[1] - C64::new(-(-r).exp() * r.sin(), 0.0)).norm() < 1e-14);
        }
        assert!(BottomLayerSpec::new(&g, ModeIndex::new(0, 0, 1), c).is_err());
    }

    #[test]
    fn eta_bounds() {
        for l in [-0.99, -0.5, 0.0, 0.3, 0.95] {
            for e in eta_pm(l) {
                assert!(e.re >= 0.0);
                assert!(e.norm() <= 2f64.sqrt() + 1e-15);
            }
        }
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi(0.0), 1.0);
        assert!(psi(60.0) < 1e-300);
        assert!((psi(2.0) - 0.157_299_207_050_285_1).abs() < 1e-12);
        assert!(psi_residual(&[0.1, 0.5, 1.0, 2.0, 3.0], 1e-3) < 1e-6);
        assert!(resonant_layer([C64::new(1.0, 0.0); 2], 0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn zero_mode_split_of_basis_modes_is_resonant() {
        let g = TorusGeometry::new(1.0, 1.2, 0.8).unwrap();
        let mut w = SpectralField::zeros(g, 2);
        w.set(ModeIndex::new(0, 0, 1), C64::new(0.3, -0.1)).unwrap();
        w.set(ModeIndex::new(0, 0, -2), C64::new(0.2, 0.5)).unwrap();
        let split = split_zero_mode(&zero_mode_boundary_terms(&w).unwrap());
        assert!(split.gamma.is_empty());
        let s = g.volume().sqrt();
        assert!((split.alpha[0] + C64::new(0.3, -0.1) / s).norm() < 1e-15);
        let u = resonant_layer(split.alpha, 1.0, 0.0, 0.0, 1e-2).unwrap();
        let bd: Vec<(f64, [C64; 2])> = zero_mode_boundary_terms(&w).unwrap();
        let total = [bd.iter().map(|t| t.1[0]).sum::<C64>(), bd.iter().map(|t| t.1[1]).sum::<C64>()];
        assert!((u[0] - total[0]).norm() < 1e-15 && (u[1] - total[1]).norm() < 1e-15);
        let off = split_zero_mode(&[(0.5, [C64::new(1.0, 0.0), C64::new(0.0, 0.0)])]);
        assert_eq!(off.gamma.len(), 2);
        let c = off.classical(0.0, 0.0);
        assert!((c[0] - 1.0).norm() < 1e-15 && c[1].norm() < 1e-15);
    }

    #[test]
    fn vint_boundary_values() {
        let g = TorusGeometry::new(1.0, 1.3, 0.9).unwrap();
        let p = LayerParams::new(1e-2, 2e-2, 3.0, 1e-3).unwrap();
        let cb: BTreeMap<[i32; 2], C64> = [([1, 0], C64::new(0.2, 0.1)), ([-1, 0], C64::new(0.2, -0.1))].into();
        let ct: BTreeMap<[i32; 2], C64> = [([0, 1], C64::new(-0.5, 0.0)), ([0, -1], C64::new(-0.5, 0.0))].into();
        let x = [0.37, 0.81];
        let b = corrector_vint(&g, &cb, &ct, &p, x, 0.0).unwrap();
        let t = corrector_vint(&g, &cb, &ct, &p, x, g.a).unwrap();
        let pw = |m: &BTreeMap<[i32; 2], C64>| -> C64 {
            m.iter().map(|(kh, c)| c * C64::from_polar(1.0 / g.area(), kprime_h(&g, *kh)[0] * x[0] + kprime_h(&g, *kh)[1] * x[1])).sum()
        };
        assert!((b[2] - p.depth() * pw(&cb)).norm() < 1e-15);
        assert!((t[2] - p.epsilon * p.nu * p.beta * pw(&ct)).norm() < 1e-15);
        let mean: BTreeMap<[i32; 2], C64> = [([0, 0], C64::new(1.0, 0.0))].into();
        assert!(corrector_vint(&g, &mean, &BTreeMap::new(), &p, x, 0.1).is_err());
        let empty = corrector_vint(&g, &BTreeMap::new(), &BTreeMap::new(), &p, x, 0.4).unwrap();
        assert_eq!(empty, [C64::new(0.0, 0.0); 3]);
    }

    #[test]
    fn expsum_algebra() {
        let mut s = ExpSum::default();
        s.push(0.5, C64::new(1.0, 0.0));
        s.push(0.5, C64::new(0.0, 1.0));
        s.push(-1.0, C64::new(2.0, 0.0));
        assert_eq!(s.terms.len(), 2);
        assert_eq!(s.ergodic_limit(0.5), C64::new(1.0, 1.0));
        let h = 1e-6;
        let fd = (s.eval(0.3 + h) - s.eval(0.3 - h)) / (2.0 * h);
        assert!((fd - s.deriv(0.3)).norm() < 1e-8);
    }
}
