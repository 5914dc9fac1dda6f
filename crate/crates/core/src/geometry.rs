//! The slab `T² × (0, a)` and the eigenbasis of the Coriolis operator on
//! divergence-free fields with no flux through the walls.
//!
//! Each mode is
//!
//! ```text
//! N_k(x_h, z) = e^{i k_h'·x_h} ( cos(k3' z) n1, cos(k3' z) n2, sin(k3' z) n3 )
//! ```
//!
//! with `k' = (2πk1/a1, 2πk2/a2, πk3/a)` and eigenvalue `λ_k = -k3'/|k'|`,
//! so that `P(e3 ∧ N_k) = iλ_k N_k`. The modes are orthonormal in `L²` and
//! satisfy `N_{-k} = conj(N_k)` when `k_h ≠ 0`, `N_{-k} = -conj(N_k)` when
//! `k_h = 0`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusGeometry {
    pub a1: f64,
    pub a2: f64,
    pub a: f64,
}

impl TorusGeometry {
    pub fn new(a1: f64, a2: f64, a: f64) -> Result<Self> {
        let g = TorusGeometry { a1, a2, a };
        g.validate()?;
        Ok(g)
    }

    pub fn unit() -> Self {
        TorusGeometry { a1: 1.0, a2: 1.0, a: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.a1) && ok(self.a2) && ok(self.a) {
            Ok(())
        } else {
            Err(Error::InvalidGeometry { a1: self.a1, a2: self.a2, a: self.a })
        }
    }

    /// `a1·a2·a`, the volume of the period cell.
    pub fn volume(&self) -> f64 {
        self.a1 * self.a2 * self.a
    }

    /// `a1·a2`, the horizontal area.
    pub fn area(&self) -> f64 {
        self.a1 * self.a2
    }

    /// Squared aspect factors `((2a/a1)², (2a/a2)²)` when both are integers,
    /// in which case `|k'|²·a²/π²` is an integer for every mode.
    pub fn integer_aspects(&self) -> Option<(i64, i64)> {
        let r1 = (2.0 * self.a / self.a1).powi(2);
        let r2 = (2.0 * self.a / self.a2).powi(2);
        let n1 = r1.round();
        let n2 = r2.round();
        if (r1 - n1).abs() < 1e-12 * r1.max(1.0) && (r2 - n2).abs() < 1e-12 * r2.max(1.0) && n1 >= 1.0 && n2 >= 1.0 {
            Some((n1 as i64, n2 as i64))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeIndex {
    pub k1: i32,
    pub k2: i32,
    pub k3: i32,
}

impl ModeIndex {
    pub const fn new(k1: i32, k2: i32, k3: i32) -> Self {
        ModeIndex { k1, k2, k3 }
    }

    pub fn is_zero(&self) -> bool {
        self.k1 == 0 && self.k2 == 0 && self.k3 == 0
    }

    pub fn horizontal_is_zero(&self) -> bool {
        self.k1 == 0 && self.k2 == 0
    }

    pub fn neg(&self) -> Self {
        ModeIndex::new(-self.k1, -self.k2, -self.k3)
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> u32 {
        self.k1.unsigned_abs().max(self.k2.unsigned_abs()).max(self.k3.unsigned_abs())
    }

    pub fn kh(&self) -> [i32; 2] {
        [self.k1, self.k2]
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.k1, self.k2, self.k3)
    }
}

impl From<[i32; 3]> for ModeIndex {
    fn from(v: [i32; 3]) -> Self {
        ModeIndex::new(v[0], v[1], v[2])
    }
}

/// A basis mode with its wavevector, eigenvalue and amplitude vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenMode {
    pub k: ModeIndex,
    pub kprime: [f64; 3],
    pub lambda: f64,
    pub n: [C64; 3],
}

impl EigenMode {
    pub fn kh_norm(&self) -> f64 {
        self.kprime[0].hypot(self.kprime[1])
    }

    pub fn norm(&self) -> f64 {
        norm3(&self.kprime)
    }

    /// Vertical profile `(cos(k3'z)n1, cos(k3'z)n2, sin(k3'z)n3)`.
    #[inline]
    pub fn profile(&self, z: f64) -> [C64; 3] {
        let (s, c) = (self.kprime[2] * z).sin_cos();
        [self.n[0] * c, self.n[1] * c, self.n[2] * s]
    }

    /// `d/dz` of [`EigenMode::profile`].
    #[inline]
    pub fn profile_dz(&self, z: f64) -> [C64; 3] {
        let q = self.kprime[2];
        let (s, c) = (q * z).sin_cos();
        [-self.n[0] * (q * s), -self.n[1] * (q * s), self.n[2] * (q * c)]
    }

    /// `e^{i k_h'·x_h}`.
    #[inline]
    pub fn horizontal_phase(&self, x: [f64; 2]) -> C64 {
        C64::from_polar(1.0, self.kprime[0] * x[0] + self.kprime[1] * x[1])
    }
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn wavevector(geom: &TorusGeometry, k: ModeIndex) -> [f64; 3] {
    [
        2.0 * PI * k.k1 as f64 / geom.a1,
        2.0 * PI * k.k2 as f64 / geom.a2,
        PI * k.k3 as f64 / geom.a,
    ]
}

pub fn eigenvalue(geom: &TorusGeometry, k: ModeIndex) -> Result<f64> {
    if k.is_zero() {
        return Err(Error::ZeroMode);
    }
    let kp = wavevector(geom, k);
    if k.horizontal_is_zero() {
        // Avoid the division: λ = -sgn(k3) exactly.
        return Ok(-(k.k3.signum() as f64));
    }
    Ok(-kp[2] / norm3(&kp))
}

pub fn eigenvector(geom: &TorusGeometry, k: ModeIndex) -> Result<EigenMode> {
    let lambda = eigenvalue(geom, k)?;
    let kp = wavevector(geom, k);
    let s = geom.volume().sqrt();
    let n = if k.horizontal_is_zero() {
        [C64::new(k.k3.signum() as f64 / s, 0.0), I / s, C64::new(0.0, 0.0)]
    } else {
        let kh = kp[0].hypot(kp[1]);
        let kn = norm3(&kp);
        [
            (I * kp[1] + kp[0] * lambda) / (s * kh),
            (-I * kp[0] + kp[1] * lambda) / (s * kh),
            I * (kh / (s * kn)),
        ]
    };
    Ok(EigenMode { k, kprime: kp, lambda, n })
}

pub fn evaluate_mode(mode: &EigenMode, geom: &TorusGeometry, x_h: [f64; 2], z: f64) -> Result<[C64; 3]> {
    if !(0.0..=geom.a).contains(&z) {
        return Err(Error::OutOfSlab { z, a: geom.a });
    }
    let e = mode.horizontal_phase(x_h);
    let p = mode.profile(z);
    // sin(k3' a) is a rounding error away from 0; the wall value is exact.
    let third = if z == 0.0 || z == geom.a { C64::new(0.0, 0.0) } else { p[2] * e };
    Ok([p[0] * e, p[1] * e, third])
}

/// Sign `s` in `N_{-k} = s·conj(N_k)`: `+1` for `k_h ≠ 0`, `-1` otherwise.
pub fn conjugation_sign(k: ModeIndex) -> f64 {
    if k.horizontal_is_zero() {
        -1.0
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wavevector_examples() {
        let g = TorusGeometry::unit();
        assert_eq!(wavevector(&g, ModeIndex::new(1, 0, 0)), [2.0 * PI, 0.0, 0.0]);
        assert_eq!(wavevector(&g, ModeIndex::new(0, 0, 1)), [0.0, 0.0, PI]);
        let g2 = TorusGeometry::new(2.0, 1.0, 1.0).unwrap();
        let v = wavevector(&g2, ModeIndex::new(1, 1, 1));
        assert_abs_diff_eq!(v[0], PI, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1], 2.0 * PI, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], PI, epsilon = 1e-15);
    }

    #[test]
    fn eigenvalue_examples() {
        let g = TorusGeometry::new(1.3, 0.7, 2.1).unwrap();
        assert_eq!(eigenvalue(&g, ModeIndex::new(3, -1, 0)).unwrap(), 0.0);
        assert_eq!(eigenvalue(&g, ModeIndex::new(0, 0, 2)).unwrap(), -1.0);
        assert_eq!(eigenvalue(&g, ModeIndex::new(0, 0, -5)).unwrap(), 1.0);
        // k'=(2π,2π,π), |k'|=3π
        let u = TorusGeometry::unit();
        assert_abs_diff_eq!(eigenvalue(&u, ModeIndex::new(1, 1, 1)).unwrap(), -1.0 / 3.0, epsilon = 1e-15);
        assert!(matches!(eigenvalue(&u, ModeIndex::new(0, 0, 0)), Err(Error::ZeroMode)));
    }

    #[test]
    fn eigenvector_examples() {
        let g = TorusGeometry::unit();
        let m = eigenvector(&g, ModeIndex::new(0, 0, 1)).unwrap();
        assert_eq!(m.n, [C64::new(1.0, 0.0), I, C64::new(0.0, 0.0)]);
        let m = eigenvector(&g, ModeIndex::new(1, 0, 0)).unwrap();
        assert_abs_diff_eq!(m.n[0].norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((m.n[1] + I).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((m.n[2] - I).norm(), 0.0, epsilon = 1e-15);
        assert!(eigenvector(&g, ModeIndex::new(0, 0, 0)).is_err());
    }

    #[test]
    fn evaluate_mode_walls_and_midpoint() {
        let g = TorusGeometry::unit();
        let m = eigenvector(&g, ModeIndex::new(0, 0, 1)).unwrap();
        let v = evaluate_mode(&m, &g, [0.0, 0.0], 0.5).unwrap();
        for c in v {
            assert!(c.norm() < 1e-15);
        }
        let m = eigenvector(&g, ModeIndex::new(2, -1, 3)).unwrap();
        assert_eq!(evaluate_mode(&m, &g, [0.3, 0.1], 0.0).unwrap()[2], C64::new(0.0, 0.0));
        assert_eq!(evaluate_mode(&m, &g, [0.3, 0.1], 1.0).unwrap()[2], C64::new(0.0, 0.0));
        assert!(matches!(evaluate_mode(&m, &g, [0.0, 0.0], 1.5), Err(Error::OutOfSlab { .. })));
    }

    #[test]
    fn conjugate_partner_relation() {
        let g = TorusGeometry::new(1.1, 0.9, 0.8).unwrap();
        for k in [ModeIndex::new(1, 2, -1), ModeIndex::new(0, 1, 0), ModeIndex::new(0, 0, 3)] {
            let a = eigenvector(&g, k).unwrap();
            let b = eigenvector(&g, k.neg()).unwrap();
            let s = conjugation_sign(k);
            for z in [0.1, 0.45, 0.7] {
                let va = evaluate_mode(&a, &g, [0.2, 0.6], z).unwrap();
                let vb = evaluate_mode(&b, &g, [0.2, 0.6], z).unwrap();
                for j in 0..3 {
                    assert!((vb[j] - va[j].conj() * s).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn integer_aspects_detection() {
        assert_eq!(TorusGeometry::unit().integer_aspects(), Some((4, 4)));
        assert_eq!(TorusGeometry::new(2.0, 1.0, 1.0).unwrap().integer_aspects(), Some((1, 4)));
        assert_eq!(TorusGeometry::new(1.0, 1.3, 1.0).unwrap().integer_aspects(), None);
    }
}
