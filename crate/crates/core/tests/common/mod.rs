//! Quadrature oracles shared by the integration tests and the acceptance
//! binary. They evaluate modes pointwise and never touch the spectral
//! machinery under test.
#![allow(dead_code)]

use std::f64::consts::PI;

use ekman::quad::gauss_legendre_on;
use ekman::{eigenvector, EigenMode, ModeIndex, TorusGeometry};
use num_complex::Complex64 as C64;

/// Trapezoid sum of `e^{2πi d x/L}` over one period with `n` points, times `L`.
pub fn trapezoid_phase(d: i32, n: usize, len: f64) -> C64 {
    let s: C64 = (0..n).map(|j| C64::from_polar(1.0, 2.0 * PI * d as f64 * j as f64 / n as f64)).sum();
    s * (len / n as f64)
}

pub struct ModeQuadrature {
    pub geom: TorusGeometry,
    pub nx: usize,
    z: Vec<f64>,
    w: Vec<f64>,
}

impl ModeQuadrature {
    pub fn new(geom: TorusGeometry, cutoff: u32) -> Self {
        let (z, w) = gauss_legendre_on(8 * cutoff as usize + 16, 0.0, geom.a);
        ModeQuadrature { geom, nx: 4 * cutoff as usize + 4, z, w }
    }

    fn horizontal(&self, k: &EigenMode, l: &EigenMode) -> C64 {
        trapezoid_phase(l.k.k1 - k.k.k1, self.nx, self.geom.a1) * trapezoid_phase(l.k.k2 - k.k.k2, self.nx, self.geom.a2)
    }

    /// `∫ conj(N_k)·N_l` by trapezoid × Gauss–Legendre.
    pub fn inner(&self, k: &EigenMode, l: &EigenMode) -> C64 {
        let h = self.horizontal(k, l);
        if h.norm() < 1e-13 {
            return h;
        }
        let v: C64 = self
            .z
            .iter()
            .zip(&self.w)
            .map(|(&z, &w)| {
                let (p, q) = (k.profile(z), l.profile(z));
                (p[0].conj() * q[0] + p[1].conj() * q[1] + p[2].conj() * q[2]) * w
            })
            .sum();
        h * v
    }

    /// `∫ conj(N_l)·(e₃∧N_k)` with `e₃∧u = (−u₂, u₁, 0)`.
    pub fn coriolis(&self, l: &EigenMode, k: &EigenMode) -> C64 {
        let h = self.horizontal(l, k);
        if h.norm() < 1e-13 {
            return h;
        }
        let v: C64 = self
            .z
            .iter()
            .zip(&self.w)
            .map(|(&z, &w)| {
                let (p, q) = (l.profile(z), k.profile(z));
                (-p[0].conj() * q[1] + p[1].conj() * q[0]) * w
            })
            .sum();
        h * v
    }
}

pub fn modes_within(geom: &TorusGeometry, cutoff: i32) -> Vec<EigenMode> {
    let mut out = vec![];
    for k3 in -cutoff..=cutoff {
        for k1 in -cutoff..=cutoff {
            for k2 in -cutoff..=cutoff {
                let k = ModeIndex::new(k1, k2, k3);
                if !k.is_zero() {
                    out.push(eigenvector(geom, k).unwrap());
                }
            }
        }
    }
    out
}

/// Worst deviations `(orthonormality, Coriolis)` from `δ_kl` and `iλ_kδ_kl`.
pub fn basis_defects(geom: &TorusGeometry, cutoff: i32) -> (f64, f64) {
    let q = ModeQuadrature::new(*geom, cutoff as u32);
    let modes = modes_within(geom, cutoff);
    let mut ortho: f64 = 0.0;
    let mut cor: f64 = 0.0;
    for k in &modes {
        for l in &modes {
            let same = k.k == l.k;
            let e = q.inner(k, l) - if same { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            ortho = ortho.max(e.norm());
            let c = q.coriolis(l, k) - if same { C64::new(0.0, k.lambda) } else { C64::new(0.0, 0.0) };
            cor = cor.max(c.norm());
        }
    }
    (ortho, cor)
}
