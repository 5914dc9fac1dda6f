//! Ekman pumping: the bottom damping `S_B`, the wind source `S_T^δ` and its
//! `δ → 0` limit, and the fast-time averages `S_θ` they come from.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Basis, SpectralField};
use crate::forcing::{ergodic_limit, PhasePoint, WindStress};
use crate::geometry::{eigenvector, ModeIndex, TorusGeometry};
use crate::layers::{BoundaryFluxes, ExpSum, LayerParams, SigmaSeries};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PumpingCoefficient {
    pub k: ModeIndex,
    pub a: C64,
}

/// `A_k = |k_h'|²/(2√2 a|k'|²) Σ_± (1 ± λ_k)/√(1 ∓ λ_k) (1 ± i)`; zero when `k_h = 0`.
pub fn pumping_coefficient_a(geom: &TorusGeometry, k: ModeIndex) -> Result<C64> {
    let m = eigenvector(geom, k)?;
    if k.horizontal_is_zero() {
        return Ok(C64::new(0.0, 0.0));
    }
    let l = m.lambda;
    if (1.0 - l.abs()) <= 0.0 {
        return Err(Error::InvalidParameter { name: "k", reason: format!("|λ| = 1 at {k} with nonzero horizontal part") });
    }
    let kh2 = m.kh_norm().powi(2);
    let k2 = m.norm().powi(2);
    let sum = C64::new(1.0, 1.0) * ((1.0 + l) / (1.0 - l).sqrt()) + C64::new(1.0, -1.0) * ((1.0 - l) / (1.0 + l).sqrt());
    Ok(sum * (kh2 / (2.0 * 2f64.sqrt() * geom.a * k2)))
}

pub fn pumping_table(geom: &TorusGeometry, truncation: u32) -> Result<Vec<PumpingCoefficient>> {
    crate::field::ModeSet::new(truncation)
        .iter()
        .map(|k| Ok(PumpingCoefficient { k, a: pumping_coefficient_a(geom, k)? }))
        .collect()
}

/// `S_B(w) = Σ ⟨N_k, w⟩ A_k N_k`.
pub fn s_b_apply(field: &SpectralField) -> Result<SpectralField> {
    let mut out = field.clone();
    for (i, k) in field.mode_set().iter().enumerate() {
        if out.coeffs[i] != C64::new(0.0, 0.0) {
            out.coeffs[i] *= pumping_coefficient_a(&field.geometry, k)?;
        }
    }
    Ok(out)
}

/// `E_{−λ_k}[σ̂(k_h)]` (unnormalised coefficient, envelope included).
fn sigma_hat_average(ws: &WindStress, t: f64, kh: [i32; 2], lambda: f64, omega: &PhasePoint) -> [C64; 2] {
    let e = ergodic_limit(ws, -lambda, kh, omega);
    let s = ws.geometry.area() * ws.envelope(t);
    [e[0] * s, e[1] * s]
}

/// `S_T^δ(σ) = ½(1/√(aa₁a₂)) Σ_k Σ_± (−1)^{k₃}|k_h'|/|k'|² E_{−λ_k}[σ̂^±(k_h)]/(−δ + i(λ_k ± 1)) N_k`.
pub fn s_t_delta(ws: &WindStress, delta: f64, t: f64, omega: &PhasePoint, truncation: u32) -> Result<SpectralField> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter { name: "delta", reason: format!("must be positive, got {delta}") });
    }
    let geom = ws.geometry;
    let basis = Basis::new(geom, truncation)?;
    let mut out = SpectralField::zeros(geom, truncation);
    let pref = 0.5 / geom.volume().sqrt();
    for (i, m) in basis.modes.iter().enumerate() {
        let k = basis.set.mode(i);
        if k.horizontal_is_zero() {
            continue;
        }
        let e = sigma_hat_average(ws, t, k.kh(), m.lambda, omega);
        if e == [C64::new(0.0, 0.0); 2] {
            continue;
        }
        let kp = [m.kprime[0], m.kprime[1]];
        let div = I * (kp[0] * e[0] + kp[1] * e[1]);
        let rot = -kp[1] * e[0] + kp[0] * e[1];
        let sign = if k.k3 % 2 == 0 { 1.0 } else { -1.0 };
        let plus = (div + rot) / C64::new(-delta, m.lambda + 1.0);
        let minus = (div - rot) / C64::new(-delta, m.lambda - 1.0);
        out.coeffs[i] = (plus + minus) * (pref * sign * m.kh_norm() / m.norm().powi(2));
    }
    Ok(out)
}

/// `S_T(σ) = −(1/√(aa₁a₂)) Σ (−1)^{k₃}/|k_h'| (λ_k k_h' + i(k_h')^⊥)·E_{−λ_k}[σ̂(k_h)] N_k`.
///
/// Fails when a contributing wind frequency lies within `eta` of `±1`.
pub fn s_t_limit(ws: &WindStress, t: f64, omega: &PhasePoint, truncation: u32, eta: f64) -> Result<SpectralField> {
    let geom = ws.geometry;
    let basis = Basis::new(geom, truncation)?;
    let mut out = SpectralField::zeros(geom, truncation);
    let pref = 1.0 / geom.volume().sqrt();
    for (i, m) in basis.modes.iter().enumerate() {
        let k = basis.set.mode(i);
        if k.horizontal_is_zero() {
            continue;
        }
        let e = sigma_hat_average(ws, t, k.kh(), m.lambda, omega);
        if e == [C64::new(0.0, 0.0); 2] {
            continue;
        }
        let distance = (m.lambda.abs() - 1.0).abs();
        if distance < eta {
            return Err(Error::H2Violation { mode: k, distance });
        }
        let kp = [m.kprime[0], m.kprime[1]];
        let v = [m.lambda * kp[0] - I * kp[1], m.lambda * kp[1] + I * kp[0]];
        let sign = if k.k3 % 2 == 0 { 1.0 } else { -1.0 };
        out.coeffs[i] = -(v[0] * e[0] + v[1] * e[1]) * (pref * sign / m.kh_norm());
    }
    Ok(out)
}

/// Lift change `V(τ) = Σ g_k(τ) N_k`; any such `V` keeps the flux
/// conditions since `N_{k,3}` vanishes at both walls.
#[derive(Debug, Clone, Default)]
pub struct LiftPerturbation {
    pub modes: Vec<(ModeIndex, ExpSum)>,
}

/// `S_θ = (1/θ)∫₀^θ L(−τ)P[∂_τ v + e₃∧v] dτ` by composite Gauss–Legendre in
/// `τ`, for the lift `v = v^int + V`.
pub fn source_average_stheta(
    geom: &TorusGeometry,
    flux: &BoundaryFluxes,
    params: &LayerParams,
    truncation: u32,
    theta: f64,
    lift: Option<&LiftPerturbation>,
) -> Result<SpectralField> {
    if !(theta > 0.0) {
        return Err(Error::InvalidParameter { name: "theta", reason: format!("must be positive, got {theta}") });
    }
    let mut series = SigmaSeries::new(geom, flux, params, truncation)?;
    if let Some(lift) = lift {
        let set = crate::field::ModeSet::new(truncation);
        for (k, g) in &lift.modes {
            let idx = set.index(*k).ok_or(Error::OutsideTruncation(*k, truncation))?;
            let lambda = eigenvector(geom, *k)?.lambda;
            // L(−τ)[∂_τV + LV] = d/dτ[e^{iλτ} g(τ)]
            for &(nu, c) in &g.terms {
                series.modes[idx].push(nu + lambda, c * I * (nu + lambda));
            }
        }
    }
    Ok(series.integrate(theta).scaled(C64::new(1.0 / theta, 0.0)))
}

/// `S̄ = √(εν)S_B(w) + ενβS_T^δ(σ)` assembled from the two operators.
pub fn source_limit_from_operators(
    w: &SpectralField,
    ws: &WindStress,
    params: &LayerParams,
    t: f64,
    omega: &PhasePoint,
    truncation: u32,
) -> Result<SpectralField> {
    let mut out = s_b_apply(&w.retruncate(truncation))?.scaled(C64::new(params.depth(), 0.0));
    out.axpy(C64::new(params.epsilon * params.nu * params.beta, 0.0), &s_t_delta(ws, params.delta, t, omega, truncation)?);
    Ok(out)
}

/// Atom frequency matching mode `k` in `S_T`: `μ = −λ_k`.
pub fn resonant_wind_frequency(geom: &TorusGeometry, k: ModeIndex) -> Result<f64> {
    Ok(-eigenvector(geom, k)?.lambda)
}

/// Third-component values of a field at `(x_h, z)`.
pub fn vertical_component(field: &SpectralField, basis: &Basis, x_h: [f64; 2], z: f64) -> C64 {
    field.evaluate(basis, x_h, z)[2]
}

/// `1/(a√2)`, the pumping coefficient of every `k₃ = 0` mode.
pub fn vertical_mean_pumping(geom: &TorusGeometry) -> f64 {
    1.0 / (geom.a * 2f64.sqrt())
}
