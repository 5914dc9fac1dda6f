//! Truncated spectral fields over the eigenbasis.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{conjugation_sign, eigenvector, EigenMode, ModeIndex, TorusGeometry};
use crate::quad::gauss_legendre_on;

/// All modes with `|k_i| ≤ N`, `k ≠ 0`, ordered lexicographically on
/// `(k3, k1, k2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeSet {
    pub truncation: u32,
}

impl ModeSet {
    pub fn new(truncation: u32) -> Self {
        ModeSet { truncation }
    }

    fn side(&self) -> i64 {
        2 * self.truncation as i64 + 1
    }

    pub fn len(&self) -> usize {
        (self.side().pow(3) - 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, k: ModeIndex) -> bool {
        !k.is_zero() && k.max_abs() <= self.truncation
    }

    pub fn index(&self, k: ModeIndex) -> Option<usize> {
        if !self.contains(k) {
            return None;
        }
        let n = self.truncation as i64;
        let m = self.side();
        let lin = ((k.k3 as i64 + n) * m + (k.k1 as i64 + n)) * m + (k.k2 as i64 + n);
        let centre = (m.pow(3) - 1) / 2;
        Some(if lin > centre { lin - 1 } else { lin } as usize)
    }

    pub fn mode(&self, idx: usize) -> ModeIndex {
        let m = self.side();
        let centre = (m.pow(3) - 1) / 2;
        let mut lin = idx as i64;
        if lin >= centre {
            lin += 1;
        }
        let n = self.truncation as i64;
        let k2 = lin % m - n;
        let k1 = (lin / m) % m - n;
        let k3 = lin / (m * m) - n;
        ModeIndex::new(k1 as i32, k2 as i32, k3 as i32)
    }

    pub fn iter(&self) -> impl Iterator<Item = ModeIndex> + '_ {
        (0..self.len()).map(move |i| self.mode(i))
    }
}

/// Precomputed eigenmodes of a [`ModeSet`], indexed like the set.
#[derive(Debug, Clone)]
pub struct Basis {
    pub geometry: TorusGeometry,
    pub set: ModeSet,
    pub modes: Vec<EigenMode>,
}

impl Basis {
    pub fn new(geometry: TorusGeometry, truncation: u32) -> Result<Self> {
        geometry.validate()?;
        let set = ModeSet::new(truncation);
        let modes = set.iter().map(|k| eigenvector(&geometry, k)).collect::<Result<Vec<_>>>()?;
        Ok(Basis { geometry, set, modes })
    }

    pub fn get(&self, k: ModeIndex) -> Option<&EigenMode> {
        self.set.index(k).map(|i| &self.modes[i])
    }

    /// Gram and Coriolis defects of the tabulated modes. Modes with distinct
    /// `k_h` are orthogonal exactly through the horizontal integral, so only
    /// pairs sharing `k_h` need the vertical Gauss rule.
    pub fn orthonormality(&self) -> OrthonormalityReport {
        let n = 6 * self.set.truncation as usize + 24;
        let (z, w) = gauss_legendre_on(n, 0.0, self.geometry.a);
        let area = self.geometry.area();
        let mut groups: std::collections::BTreeMap<[i32; 2], Vec<&EigenMode>> = Default::default();
        for m in &self.modes {
            groups.entry(m.k.kh()).or_default().push(m);
        }
        let mut rep = OrthonormalityReport { modes: self.modes.len(), max_offdiag: 0.0, max_diag_defect: 0.0, max_coriolis_defect: 0.0 };
        for g in groups.values() {
            let tab: Vec<Vec<[C64; 3]>> = g.iter().map(|m| z.iter().map(|&zz| m.profile(zz)).collect()).collect();
            for (i, mk) in g.iter().enumerate() {
                for j in 0..g.len() {
                    let mut ip = C64::new(0.0, 0.0);
                    let mut cor = C64::new(0.0, 0.0);
                    for (q, wq) in w.iter().enumerate() {
                        let (pk, pl) = (&tab[i][q], &tab[j][q]);
                        ip += (pl[0].conj() * pk[0] + pl[1].conj() * pk[1] + pl[2].conj() * pk[2]) * *wq;
                        // ⟨N_l, e3∧N_k⟩ with e3∧u = (−u2, u1, 0)
                        cor += (-pl[0].conj() * pk[1] + pl[1].conj() * pk[0]) * *wq;
                    }
                    ip *= area;
                    cor *= area;
                    if i == j {
                        rep.max_diag_defect = rep.max_diag_defect.max((ip - 1.0).norm());
                        rep.max_coriolis_defect = rep.max_coriolis_defect.max((cor - C64::new(0.0, mk.lambda)).norm());
                    } else {
                        rep.max_offdiag = rep.max_offdiag.max(ip.norm());
                        rep.max_coriolis_defect = rep.max_coriolis_defect.max(cor.norm());
                    }
                }
            }
        }
        rep
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrthonormalityReport {
    pub modes: usize,
    /// `max_{k≠l} |⟨N_k, N_l⟩|`.
    pub max_offdiag: f64,
    /// `max_k |‖N_k‖² − 1|`.
    pub max_diag_defect: f64,
    /// `max_{k,l} |⟨N_l, e3∧N_k⟩ − iλ_k δ_kl|`.
    pub max_coriolis_defect: f64,
}

/// Coefficients `⟨N_k, u⟩` of a velocity field for all modes of a [`ModeSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub geometry: TorusGeometry,
    pub truncation: u32,
    pub coeffs: Vec<C64>,
}

impl SpectralField {
    pub fn zeros(geometry: TorusGeometry, truncation: u32) -> Self {
        let n = ModeSet::new(truncation).len();
        SpectralField { geometry, truncation, coeffs: vec![C64::new(0.0, 0.0); n] }
    }

    pub fn single(geometry: TorusGeometry, truncation: u32, k: ModeIndex, c: C64) -> Result<Self> {
        let mut f = Self::zeros(geometry, truncation);
        f.set(k, c)?;
        Ok(f)
    }

    pub fn mode_set(&self) -> ModeSet {
        ModeSet::new(self.truncation)
    }

    pub fn get(&self, k: ModeIndex) -> C64 {
        self.mode_set().index(k).map(|i| self.coeffs[i]).unwrap_or_default()
    }

    pub fn set(&mut self, k: ModeIndex, c: C64) -> Result<()> {
        let i = self.mode_set().index(k).ok_or(Error::OutsideTruncation(k, self.truncation))?;
        self.coeffs[i] = c;
        Ok(())
    }

    pub fn modes(&self) -> impl Iterator<Item = (ModeIndex, C64)> + '_ {
        let set = self.mode_set();
        self.coeffs.iter().enumerate().map(move |(i, c)| (set.mode(i), *c))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `⟨self, other⟩ = Σ conj(a_k) b_k`.
    pub fn inner(&self, other: &SpectralField) -> C64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn check_compatible(&self, other: &SpectralField) -> Result<()> {
        if self.truncation != other.truncation {
            return Err(Error::TruncationMismatch { expected: self.truncation, found: other.truncation });
        }
        if self.geometry != other.geometry {
            return Err(Error::GeometryMismatch);
        }
        Ok(())
    }

    pub fn scaled(&self, s: C64) -> SpectralField {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// `self += s·other`.
    pub fn axpy(&mut self, s: C64, other: &SpectralField) {
        debug_assert_eq!(self.truncation, other.truncation);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(C64::new(-1.0, 0.0), other);
        out
    }

    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Copy into a different truncation, dropping or zero-filling modes.
    pub fn retruncate(&self, truncation: u32) -> SpectralField {
        let mut out = SpectralField::zeros(self.geometry, truncation);
        let set = out.mode_set();
        for (k, c) in self.modes() {
            if let Some(i) = set.index(k) {
                out.coeffs[i] = c;
            }
        }
        out
    }

    /// Keep only modes with `k3 = 0` (the vertical average).
    pub fn horizontal_part(&self) -> SpectralField {
        let mut out = self.clone();
        for (i, k) in self.mode_set().iter().enumerate() {
            if k.k3 != 0 {
                out.coeffs[i] = C64::new(0.0, 0.0);
            }
        }
        out
    }

    /// Largest violation of the symmetry `c_{-k} = s_k·conj(c_k)` that
    /// characterises real velocity fields.
    pub fn hermitian_defect(&self) -> f64 {
        self.modes()
            .map(|(k, c)| (self.get(k.neg()) - c.conj() * conjugation_sign(k)).norm())
            .fold(0.0, f64::max)
    }

    /// Random real field with independent Gaussian coefficients of standard
    /// deviation `amplitude(k)`.
    pub fn random_real<R: Rng>(
        geometry: TorusGeometry,
        truncation: u32,
        rng: &mut R,
        mut amplitude: impl FnMut(ModeIndex) -> f64,
    ) -> SpectralField {
        let mut f = SpectralField::zeros(geometry, truncation);
        let set = f.mode_set();
        let half = set.len() / 2;
        // Modes in the lower half of the enumeration map to the upper half
        // under k → -k, because the order is antisymmetric about the centre.
        for i in 0..half {
            let k = set.mode(i);
            let amp = amplitude(k);
            let c = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * (amp / std::f64::consts::SQRT_2);
            f.coeffs[i] = c;
            let j = set.index(k.neg()).expect("partner within truncation");
            f.coeffs[j] = c.conj() * conjugation_sign(k);
        }
        f
    }

    /// Physical-space velocity at `(x_h, z)`.
    pub fn evaluate(&self, basis: &Basis, x_h: [f64; 2], z: f64) -> [C64; 3] {
        let mut out = [C64::new(0.0, 0.0); 3];
        for (c, m) in self.coeffs.iter().zip(&basis.modes) {
            if *c == C64::new(0.0, 0.0) {
                continue;
            }
            let e = m.horizontal_phase(x_h) * c;
            let p = m.profile(z);
            for j in 0..3 {
                out[j] += p[j] * e;
            }
        }
        out
    }
}

/// Multiply each coefficient by `e^{-i·direction·λ_k·τ}`.
///
/// `direction = 1` is `L(τ)`; `direction = -1` is the filter `exp(τL)`.
pub fn semigroup_apply(field: &SpectralField, basis: &Basis, tau: f64, direction: i32) -> SpectralField {
    let mut out = field.clone();
    let d = direction.signum() as f64;
    for (c, m) in out.coeffs.iter_mut().zip(&basis.modes) {
        *c *= C64::from_polar(1.0, -d * m.lambda * tau);
    }
    out
}

#[derive(Serialize, Deserialize)]
struct FieldJson {
    geometry: TorusGeometry,
    truncation: u32,
    entries: Vec<(i32, i32, i32, f64, f64)>,
}

impl Serialize for SpectralField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FieldJson {
            geometry: self.geometry,
            truncation: self.truncation,
            entries: self.modes().map(|(k, c)| (k.k1, k.k2, k.k3, c.re, c.im)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpectralField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = FieldJson::deserialize(d)?;
        let mut f = SpectralField::zeros(j.geometry, j.truncation);
        for (k1, k2, k3, re, im) in j.entries {
            f.set(ModeIndex::new(k1, k2, k3), C64::new(re, im)).map_err(D::Error::custom)?;
        }
        Ok(f)
    }
}

/// Quadrature resolution for [`project_function`].
#[derive(Debug, Clone, Copy)]
pub struct ProjectionRule {
    /// Trapezoid points per horizontal direction.
    pub nx: usize,
    /// Gauss–Legendre nodes in `z`.
    pub nz: usize,
}

impl ProjectionRule {
    pub fn for_truncation(n: u32) -> Self {
        ProjectionRule { nx: (4 * n as usize).max(8), nz: 4 * n as usize + 16 }
    }

    fn doubled(self) -> Self {
        ProjectionRule { nx: 2 * self.nx, nz: 2 * self.nz }
    }
}

fn project_with_rule<F>(basis: &Basis, u: &F, rule: ProjectionRule) -> SpectralField
where
    F: Fn([f64; 2], f64) -> [C64; 3] + Sync,
{
    use rayon::prelude::*;
    let g = basis.geometry;
    let n = basis.set.truncation as i32;
    let (zn, zw) = gauss_legendre_on(rule.nz, 0.0, g.a);
    let nx = rule.nx;
    let side = (2 * n + 1) as usize;
    let cell = g.area() / (nx * nx) as f64;
    // Horizontal Fourier coefficients at each z node: uh[iz][(k1,k2)][comp].
    let uh: Vec<Vec<[C64; 3]>> = zn
        .par_iter()
        .map(|&z| {
            let mut samples = vec![[C64::new(0.0, 0.0); 3]; nx * nx];
            for i in 0..nx {
                for j in 0..nx {
                    let x = [g.a1 * i as f64 / nx as f64, g.a2 * j as f64 / nx as f64];
                    samples[i * nx + j] = u(x, z);
                }
            }
            let mut out = vec![[C64::new(0.0, 0.0); 3]; side * side];
            for k1 in -n..=n {
                for k2 in -n..=n {
                    let mut acc = [C64::new(0.0, 0.0); 3];
                    for i in 0..nx {
                        for j in 0..nx {
                            let ph = -2.0 * PI * (k1 as f64 * i as f64 + k2 as f64 * j as f64) / nx as f64;
                            let e = C64::from_polar(cell, ph);
                            let s = &samples[i * nx + j];
                            for c in 0..3 {
                                acc[c] += s[c] * e;
                            }
                        }
                    }
                    out[((k1 + n) as usize) * side + (k2 + n) as usize] = acc;
                }
            }
            out
        })
        .collect();
    let mut field = SpectralField::zeros(g, basis.set.truncation);
    for (idx, m) in basis.modes.iter().enumerate() {
        let h = ((m.k.k1 + n) as usize) * side + (m.k.k2 + n) as usize;
        let mut acc = C64::new(0.0, 0.0);
        for (iz, (&z, &w)) in zn.iter().zip(&zw).enumerate() {
            let p = m.profile(z);
            let v = &uh[iz][h];
            acc += (p[0].conj() * v[0] + p[1].conj() * v[1] + p[2].conj() * v[2]) * w;
        }
        field.coeffs[idx] = acc;
    }
    field
}

/// Coefficients `⟨N_k, u⟩` by trapezoid (horizontal) × Gauss–Legendre
/// (vertical) quadrature, checked against a run at doubled resolution.
pub fn project_function<F>(basis: &Basis, u: F, tol: f64) -> Result<SpectralField>
where
    F: Fn([f64; 2], f64) -> [C64; 3] + Sync,
{
    let rule = ProjectionRule::for_truncation(basis.set.truncation);
    let coarse = project_with_rule(basis, &u, rule);
    let fine = project_with_rule(basis, &u, rule.doubled());
    let change = coarse.max_abs_diff(&fine);
    if change > tol {
        return Err(Error::Quadrature(format!(
            "projection changed by {change:.3e} under grid doubling (tolerance {tol:.1e})"
        )));
    }
    Ok(fine)
}
