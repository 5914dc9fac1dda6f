//! Resonant triads, interaction coefficients and the filtered quadratic
//! form `Q̄`.
//!
//! Three modes interact when `k_h + l_h = m_h` and `m3 = ±k3 ± l3`; the
//! triad is resonant when in addition `λ_k + λ_l = λ_m`. On geometries where
//! `(2a/a1)²` and `(2a/a2)²` are integers every `|k'|²a²/π²` is an integer
//! and resonance is decided exactly; otherwise a float tolerance is used.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Basis, ModeSet, SpectralField};
use crate::geometry::{eigenvector, EigenMode, ModeIndex, TorusGeometry};
use crate::quad::gauss_legendre_on;

/// Default float tolerance for eigenvalue coincidences.
pub const DEFAULT_RESONANCE_TOL: f64 = 1e-12;

/// `|k'|²·a²/π²` as an integer, when the geometry allows it.
fn integer_norm_sq(aspects: (i64, i64), k: ModeIndex) -> i64 {
    let (r1, r2) = aspects;
    r1 * (k.k1 as i64).pow(2) + r2 * (k.k2 as i64).pow(2) + (k.k3 as i64).pow(2)
}

/// Exact test of `p/√A + q/√B = r/√C` for integers with `A, B, C > 0`.
pub fn radical_sum_equals(p: i64, a: i64, q: i64, b: i64, r: i64, c: i64) -> bool {
    let (p, a, q, b, r, c) = (p as i128, a as i128, q as i128, b as i128, r as i128, c as i128);
    // Squaring once: 2pq/√(AB) = r²/C − p²/A − q²/B =: num/(ABC).
    let num = r * r * a * b - p * p * b * c - q * q * a * c;
    let squared_ok = if p * q == 0 {
        num == 0
    } else {
        (p * q).signum() == num.signum() && 4 * p * p * q * q * a * b * c * c == num * num
    };
    if !squared_ok {
        return false;
    }
    // (X+Y)² = Z² holds; the float sign separates X+Y = Z from X+Y = -Z,
    // since 2|Z| ≥ 2/√C is far above rounding.
    let x = p as f64 / (a as f64).sqrt() + q as f64 / (b as f64).sqrt();
    let z = r as f64 / (c as f64).sqrt();
    (x - z).abs() <= (x + z).abs() || z == 0.0
}

/// Decides eigenvalue coincidences for one geometry.
#[derive(Debug, Clone, Copy)]
pub struct ResonanceTest {
    aspects: Option<(i64, i64)>,
    pub tolerance: f64,
}

impl ResonanceTest {
    pub fn new(geom: &TorusGeometry, tolerance: f64) -> Self {
        ResonanceTest { aspects: geom.integer_aspects(), tolerance }
    }

    pub fn is_exact(&self) -> bool {
        self.aspects.is_some()
    }

    /// Whether `s1·λ_k + s2·λ_l = s3·λ_m`, with `s_i = ±1`.
    pub fn signed_sum_vanishes(&self, s: [i32; 3], k: &EigenMode, l: &EigenMode, m: &EigenMode) -> bool {
        match self.aspects {
            Some(asp) => {
                // λ = -k3/√A; the common factor -1 drops out.
                let ak = integer_norm_sq(asp, k.k);
                let al = integer_norm_sq(asp, l.k);
                let am = integer_norm_sq(asp, m.k);
                radical_sum_equals(
                    (s[0] * k.k.k3) as i64,
                    ak,
                    (s[1] * l.k.k3) as i64,
                    al,
                    (s[2] * m.k.k3) as i64,
                    am,
                )
            }
            None => {
                (s[0] as f64 * k.lambda + s[1] as f64 * l.lambda - s[2] as f64 * m.lambda).abs() <= self.tolerance
            }
        }
    }

    /// `λ_k + λ_l = λ_m`.
    pub fn resonant(&self, k: &EigenMode, l: &EigenMode, m: &EigenMode) -> bool {
        self.signed_sum_vanishes([1, 1, 1], k, l, m)
    }
}

/// Gauss–Legendre rule in `z` accurate for the trigonometric integrands of
/// triads whose vertical indices are bounded by `kmax`.
#[derive(Debug, Clone)]
pub struct VerticalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl VerticalRule {
    pub fn for_max_index(a: f64, kmax: u32) -> Self {
        Self::with_nodes(a, 6 * kmax as usize + 24)
    }

    pub fn with_nodes(a: f64, n: usize) -> Self {
        let (nodes, weights) = gauss_legendre_on(n, 0.0, a);
        VerticalRule { nodes, weights }
    }
}

/// Mode profiles and their derivatives tabulated at the vertical rule.
struct Tabulated {
    mode: EigenMode,
    p: Vec<[C64; 3]>,
    dp: Vec<[C64; 3]>,
}

impl Tabulated {
    fn new(mode: EigenMode, rule: &VerticalRule) -> Self {
        Tabulated {
            mode,
            p: rule.nodes.iter().map(|&z| mode.profile(z)).collect(),
            dp: rule.nodes.iter().map(|&z| mode.profile_dz(z)).collect(),
        }
    }
}

/// `⟨N_m, (N_k·∇)N_l⟩` with the horizontal integral done exactly (the
/// trapezoid rule is exact on the trigonometric product) and the vertical
/// one by the tabulated Gauss rule.
fn advective_coefficient(area: f64, rule: &VerticalRule, k: &Tabulated, l: &Tabulated, m: &Tabulated) -> C64 {
    if k.mode.k.k1 + l.mode.k.k1 != m.mode.k.k1 || k.mode.k.k2 + l.mode.k.k2 != m.mode.k.k2 {
        return C64::new(0.0, 0.0);
    }
    let (l1, l2) = (l.mode.kprime[0], l.mode.kprime[1]);
    let mut acc = C64::new(0.0, 0.0);
    for (j, w) in rule.weights.iter().enumerate() {
        let pk = &k.p[j];
        let pl = &l.p[j];
        let dl = &l.dp[j];
        let pm = &m.p[j];
        let adv_h = C64::new(0.0, 1.0) * (pk[0] * l1 + pk[1] * l2);
        let mut s = C64::new(0.0, 0.0);
        for c in 0..3 {
            s += pm[c].conj() * (adv_h * pl[c] + pk[2] * dl[c]);
        }
        acc += s * *w;
    }
    acc * area
}

fn symmetrized(area: f64, rule: &VerticalRule, k: &Tabulated, l: &Tabulated, m: &Tabulated) -> C64 {
    (advective_coefficient(area, rule, k, l, m) + advective_coefficient(area, rule, l, k, m)) * 0.5
}

/// `α_{k,l,m} = ½(⟨N_m,(N_k·∇)N_l⟩ + ⟨N_m,(N_l·∇)N_k⟩)`.
///
/// Evaluated with two Gauss rules; an error is returned if they disagree.
pub fn interaction_coefficient(geom: &TorusGeometry, k: ModeIndex, l: ModeIndex, m: ModeIndex) -> Result<C64> {
    let kmax = k.max_abs().max(l.max_abs()).max(m.max_abs());
    let modes = [eigenvector(geom, k)?, eigenvector(geom, l)?, eigenvector(geom, m)?];
    let base = VerticalRule::for_max_index(geom.a, kmax);
    let fine = VerticalRule::with_nodes(geom.a, 2 * base.nodes.len());
    let eval = |rule: &VerticalRule| {
        let t: Vec<Tabulated> = modes.iter().map(|md| Tabulated::new(*md, rule)).collect();
        symmetrized(geom.area(), rule, &t[0], &t[1], &t[2])
    };
    let a = eval(&base);
    let b = eval(&fine);
    let scale = modes.iter().map(|md| md.norm()).fold(1.0, f64::max) / geom.volume().sqrt();
    if (a - b).norm() > 1e-11 * scale {
        return Err(Error::Quadrature(format!("α{k}{l}{m}: rules differ by {:.3e}", (a - b).norm())));
    }
    Ok(b)
}

/// One interacting triad `(k, l) → m`, stored by position in the table's
/// mode sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triad {
    pub k: ModeIndex,
    pub l: ModeIndex,
    pub m: ModeIndex,
    pub alpha: C64,
    /// `λ_m − λ_k − λ_l`.
    pub detuning: f64,
    pub resonant: bool,
}

/// Triads grouped by output mode `m`, in enumeration order of `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriadTable {
    pub geometry: TorusGeometry,
    pub truncation: u32,
    /// Largest `|m_i|` among stored outputs.
    pub output_cutoff: u32,
    pub tolerance: f64,
    /// Whether non-resonant triads are stored as well.
    pub includes_nonresonant: bool,
    pub triads: Vec<Triad>,
}

fn l3_candidates(m3: i32, k3: i32) -> Vec<i32> {
    let mut c = vec![m3 - k3, m3 + k3, k3 - m3, -m3 - k3];
    c.sort_unstable();
    c.dedup();
    c
}

impl TriadTable {
    /// Resonant triads with inputs in truncation `N` and outputs `|m_i| ≤ 2N`.
    pub fn resonant(geom: &TorusGeometry, truncation: u32, tolerance: f64) -> Result<Self> {
        Self::build(geom, truncation, 2 * truncation, tolerance, false)
    }

    /// Every triad with nonzero coefficient, inputs and outputs in
    /// truncation `N`; the oscillatory precursor `Q(τ)` needs all of them.
    pub fn all(geom: &TorusGeometry, truncation: u32, tolerance: f64) -> Result<Self> {
        Self::build(geom, truncation, truncation, tolerance, true)
    }

    pub fn build(
        geom: &TorusGeometry,
        truncation: u32,
        output_cutoff: u32,
        tolerance: f64,
        include_nonresonant: bool,
    ) -> Result<Self> {
        geom.validate()?;
        let n = truncation as i32;
        let inputs = Basis::new(*geom, truncation)?;
        let outputs = Basis::new(*geom, output_cutoff)?;
        let rule = VerticalRule::for_max_index(geom.a, 2 * truncation.max(output_cutoff));
        let tab_in: Vec<Tabulated> = inputs.modes.iter().map(|m| Tabulated::new(*m, &rule)).collect();
        let test = ResonanceTest::new(geom, tolerance);
        let area = geom.area();
        let groups: Vec<Vec<Triad>> = outputs
            .modes
            .par_iter()
            .map(|mm| {
                let tm = Tabulated::new(*mm, &rule);
                let m = mm.k;
                let mut out = Vec::new();
                for (ki, km) in inputs.modes.iter().enumerate() {
                    let k = km.k;
                    let (l1, l2) = (m.k1 - k.k1, m.k2 - k.k2);
                    if l1.abs() > n || l2.abs() > n {
                        continue;
                    }
                    for l3 in l3_candidates(m.k3, k.k3) {
                        let l = ModeIndex::new(l1, l2, l3);
                        let Some(li) = inputs.set.index(l) else { continue };
                        let lm = &inputs.modes[li];
                        let resonant = test.resonant(km, lm, mm);
                        if !resonant && !include_nonresonant {
                            continue;
                        }
                        let alpha = symmetrized(area, &rule, &tab_in[ki], &tab_in[li], &tm);
                        if include_nonresonant && alpha.norm() < 1e-14 {
                            continue;
                        }
                        out.push(Triad {
                            k,
                            l,
                            m,
                            alpha,
                            detuning: mm.lambda - km.lambda - lm.lambda,
                            resonant,
                        });
                    }
                }
                out
            })
            .collect();
        Ok(TriadTable {
            geometry: *geom,
            truncation,
            output_cutoff,
            tolerance,
            includes_nonresonant: include_nonresonant,
            triads: groups.into_iter().flatten().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.triads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triads.is_empty()
    }

    pub fn resonant_count(&self) -> usize {
        self.triads.iter().filter(|t| t.resonant).count()
    }

    fn check(&self, w: &SpectralField) -> Result<()> {
        if w.truncation != self.truncation {
            return Err(Error::TruncationMismatch { expected: self.truncation, found: w.truncation });
        }
        if w.geometry != self.geometry {
            return Err(Error::GeometryMismatch);
        }
        Ok(())
    }

    fn contract(
        &self,
        w1: &SpectralField,
        w2: &SpectralField,
        weight: impl Fn(&Triad) -> Option<C64>,
    ) -> Result<SpectralField> {
        self.check(w1)?;
        self.check(w2)?;
        let set = ModeSet::new(self.truncation);
        let mut out = SpectralField::zeros(self.geometry, self.truncation);
        for t in &self.triads {
            let Some(mi) = set.index(t.m) else { continue };
            let Some(f) = weight(t) else { continue };
            let c1 = w1.coeffs[set.index(t.k).expect("input in truncation")];
            let c2 = w2.coeffs[set.index(t.l).expect("input in truncation")];
            if c1 == C64::new(0.0, 0.0) || c2 == C64::new(0.0, 0.0) {
                continue;
            }
            out.coeffs[mi] += t.alpha * c1 * c2 * f;
        }
        Ok(out)
    }

    /// `Q̄(w1, w2) = Σ_m Σ_{(k,l)∈K_m} ⟨N_k,w1⟩⟨N_l,w2⟩ α_{k,l,m} N_m`,
    /// truncated to `N`.
    pub fn qbar_apply(&self, w1: &SpectralField, w2: &SpectralField) -> Result<SpectralField> {
        self.contract(w1, w2, |t| t.resonant.then_some(C64::new(1.0, 0.0)))
    }

    /// `Q(τ, w1, w2) = L(−τ) P[(L(τ)w1·∇)L(τ)w2]` symmetrized, i.e. every
    /// triad weighted by `e^{i(λ_m − λ_k − λ_l)τ}`.
    pub fn q_tau_apply(&self, w1: &SpectralField, w2: &SpectralField, tau: f64) -> Result<SpectralField> {
        self.require_full()?;
        self.contract(w1, w2, |t| Some(C64::from_polar(1.0, t.detuning * tau)))
    }

    /// `(1/θ)∫₀^θ Q(τ, w1, w2) dτ`, integrated exactly triad by triad.
    pub fn q_tau_average(&self, w1: &SpectralField, w2: &SpectralField, theta: f64) -> Result<SpectralField> {
        self.require_full()?;
        self.contract(w1, w2, |t| Some(if t.resonant { C64::new(1.0, 0.0) } else { phase_average(t.detuning, theta) }))
    }

    /// `∫₀^τ [Q̄ − Q(s)] ds`: only non-resonant triads contribute.
    pub fn q_defect_integral(&self, w1: &SpectralField, w2: &SpectralField, tau: f64) -> Result<SpectralField> {
        self.require_full()?;
        self.contract(w1, w2, |t| {
            if t.resonant {
                None
            } else {
                Some(-phase_average(t.detuning, tau) * tau)
            }
        })
    }

    fn require_full(&self) -> Result<()> {
        if self.includes_nonresonant {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "table",
                reason: "the oscillatory form needs a table built with non-resonant triads".into(),
            })
        }
    }

    /// Pairs `(k, l)` of the resonant set `K_m` stored in the table.
    pub fn resonant_pairs(&self, m: ModeIndex) -> Vec<(ModeIndex, ModeIndex)> {
        self.triads.iter().filter(|t| t.m == m && t.resonant).map(|t| (t.k, t.l)).collect()
    }
}

/// `(1/θ)∫₀^θ e^{iΔs} ds`.
pub fn phase_average(delta: f64, theta: f64) -> C64 {
    let x = delta * theta;
    if x.abs() < 1e-6 {
        // Series keeps full relative accuracy near Δθ = 0.
        C64::new(1.0 - x * x / 6.0, x / 2.0 - x * x * x / 24.0)
    } else {
        (C64::from_polar(1.0, x) - 1.0) / C64::new(0.0, x)
    }
}

/// Brute-force `K_m` within truncation `N`, independent of any table.
pub fn resonant_set(geom: &TorusGeometry, m: ModeIndex, truncation: u32, tol: f64) -> Result<Vec<(ModeIndex, ModeIndex)>> {
    let mm = eigenvector(geom, m)?;
    let basis = Basis::new(*geom, truncation)?;
    let test = ResonanceTest::new(geom, tol);
    let mut out = Vec::new();
    for km in &basis.modes {
        for l3 in l3_candidates(m.k3, km.k.k3) {
            let l = ModeIndex::new(m.k1 - km.k.k1, m.k2 - km.k.k2, l3);
            let Some(lm) = basis.get(l) else { continue };
            if test.resonant(km, lm, &mm) {
                out.push((km.k, l));
            }
        }
    }
    Ok(out)
}

/// A pair violating the non-resonance condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonresonanceViolation {
    pub k: ModeIndex,
    pub n: ModeIndex,
    /// Signs `(η1, η2)` with `η1λ_k + η2λ_{n−k} = λ_n`.
    pub eta: [i32; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct NonresonanceReport {
    pub cutoff: u32,
    pub exact: bool,
    pub pairs_checked: usize,
    pub violations: Vec<NonresonanceViolation>,
}

impl NonresonanceReport {
    pub fn is_nonresonant(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Scan all `(k, n)` with `|k_i|, |n_i| ≤ K` for eigenvalue relations
/// `η1λ_k + η2λ_{n−k} = λ_n` that are not explained by `k3·n3·(n3−k3) = 0`.
pub fn check_nonresonant_torus(geom: &TorusGeometry, cutoff: u32, tol: f64) -> Result<NonresonanceReport> {
    let basis = Basis::new(*geom, cutoff)?;
    let test = ResonanceTest::new(geom, tol);
    let per_k: Vec<(usize, Vec<NonresonanceViolation>)> = basis
        .modes
        .par_iter()
        .map(|km| {
            let mut found = Vec::new();
            let mut checked = 0;
            for nm in &basis.modes {
                let d = ModeIndex::new(nm.k.k1 - km.k.k1, nm.k.k2 - km.k.k2, nm.k.k3 - km.k.k3);
                if d.is_zero() {
                    continue;
                }
                checked += 1;
                let k3 = km.k.k3 as i64;
                let n3 = nm.k.k3 as i64;
                if k3 * n3 * (n3 - k3) == 0 {
                    continue;
                }
                let dm = eigenvector(geom, d).expect("nonzero mode");
                for eta in [[1, 1], [1, -1], [-1, 1], [-1, -1]] {
                    if test.signed_sum_vanishes([eta[0], eta[1], 1], km, &dm, nm) {
                        found.push(NonresonanceViolation { k: km.k, n: nm.k, eta });
                        break;
                    }
                }
            }
            (checked, found)
        })
        .collect();
    let pairs_checked = per_k.iter().map(|p| p.0).sum();
    let violations = per_k.into_iter().flat_map(|p| p.1).collect();
    Ok(NonresonanceReport { cutoff, exact: test.is_exact(), pairs_checked, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn radical_sum_small_cases() {
        // 1/√4 + 1/√4 = 1/√1
        assert!(radical_sum_equals(1, 4, 1, 4, 1, 1));
        assert!(!radical_sum_equals(1, 4, 1, 4, -1, 1));
        // 1/√2 + 1/√2 = 2/√2 = 1/√(1/2) -> p=2, A=8? 1/√2+1/√2 = √2 = 2/√2
        assert!(radical_sum_equals(1, 2, 1, 2, 2, 2));
        assert!(!radical_sum_equals(1, 2, 1, 3, 2, 2));
        // zero cases
        assert!(radical_sum_equals(0, 5, 0, 7, 0, 3));
        assert!(radical_sum_equals(3, 5, 0, 7, 3, 5));
        assert!(!radical_sum_equals(3, 5, 0, 7, -3, 5));
        // 1/√5 - 1/√5 = 0
        assert!(radical_sum_equals(1, 5, -1, 5, 0, 9));
    }

    #[test]
    fn horizontal_triad_is_resonant() {
        let g = TorusGeometry::unit();
        let set = resonant_set(&g, ModeIndex::new(1, 1, 0), 1, DEFAULT_RESONANCE_TOL).unwrap();
        assert!(set.contains(&(ModeIndex::new(1, 0, 0), ModeIndex::new(0, 1, 0))));
        for (k, l) in set {
            assert_eq!(k.k1 + l.k1, 1);
            assert_eq!(k.k2 + l.k2, 1);
        }
    }

    #[test]
    fn coefficient_vanishes_without_horizontal_matching() {
        let g = TorusGeometry::unit();
        let a = interaction_coefficient(&g, ModeIndex::new(1, 0, 1), ModeIndex::new(0, 1, 1), ModeIndex::new(1, 0, 0)).unwrap();
        assert_eq!(a, C64::new(0.0, 0.0));
    }

    #[test]
    fn table_is_closed_under_swap() {
        let g = TorusGeometry::new(1.0, 1.3, 0.9).unwrap();
        let t = TriadTable::resonant(&g, 2, DEFAULT_RESONANCE_TOL).unwrap();
        assert!(!t.is_empty());
        for tr in &t.triads {
            let partner = t.triads.iter().find(|s| s.k == tr.l && s.l == tr.k && s.m == tr.m).expect("swap partner");
            assert!((partner.alpha - tr.alpha).norm() < 1e-15);
        }
    }

    #[test]
    fn qbar_is_symmetric_and_bilinear() {
        let g = TorusGeometry::new(1.0, 1.3, 0.9).unwrap();
        let t = TriadTable::resonant(&g, 2, DEFAULT_RESONANCE_TOL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = SpectralField::random_real(g, 2, &mut rng, |_| 1.0);
        let b = SpectralField::random_real(g, 2, &mut rng, |_| 1.0);
        let ab = t.qbar_apply(&a, &b).unwrap();
        let ba = t.qbar_apply(&b, &a).unwrap();
        assert!(ab.max_abs_diff(&ba) < 1e-12);
        let zero = SpectralField::zeros(g, 2);
        assert_eq!(t.qbar_apply(&zero, &b).unwrap().norm(), 0.0);
        assert!(matches!(t.qbar_apply(&SpectralField::zeros(g, 1), &b), Err(Error::TruncationMismatch { .. })));
    }

    #[test]
    fn phase_average_limits() {
        assert!((phase_average(0.0, 10.0) - 1.0).norm() < 1e-15);
        let d: f64 = 0.7;
        let th: f64 = 3.0;
        let exact = (C64::from_polar(1.0, d * th) - 1.0) / C64::new(0.0, d * th);
        assert!((phase_average(d, th) - exact).norm() < 1e-15);
        let small = phase_average(1e-9, 1.0);
        assert!((small - C64::new(1.0, 5e-10)).norm() < 1e-15);
    }
}
