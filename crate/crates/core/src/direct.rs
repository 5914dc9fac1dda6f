//! Linear direct simulation of the rotating slab at finite `ε, ν`:
//! `∂_t u + (1/ε)e₃∧u − Δ_h u − ν∂_z²u + ∇p = 0`, `div u = 0`, with
//! `u|_{z=0} = 0`, `∂_z u_h|_{z=a} = βσ(t, t/ε)`, `u₃|_{z=a} = 0`.
//!
//! Each horizontal wavenumber decouples. Writing `û_h = A k̂ + B k̂^⊥`, the
//! column unknowns `A, B, p` sit at cell centres and `u₃` at faces of a
//! tanh-stretched grid; Crank–Nicolson with the pressure as a Lagrange
//! multiplier gives one banded saddle system per wavenumber.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::{BandedLu, BandedMatrix};
use crate::envelope::{wind_source, EnvelopeConfig, EnvelopeSolver};
use crate::error::{Error, Result};
use crate::field::{semigroup_apply, Basis, SpectralField};
use crate::forcing::{sigma_hat, PhasePoint, WindStress};
use crate::geometry::TorusGeometry;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Points required inside each Ekman layer.
pub const MIN_LAYER_POINTS: usize = 8;

fn default_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "Nz")]
    pub nz: usize,
    /// tanh clustering strength; `None` picks the smallest value that puts
    /// [`MIN_LAYER_POINTS`] cells inside the layer.
    #[serde(default)]
    pub stretch: Option<f64>,
    #[serde(rename = "Nh")]
    pub nh: u32,
    pub dt: f64,
    #[serde(rename = "T_final")]
    pub t_final: f64,
    #[serde(default = "default_every")]
    pub output_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerticalGrid {
    pub depth: f64,
    pub stretch: f64,
    /// `nz + 1` face positions from `0` to `a`.
    pub faces: Vec<f64>,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
}

impl VerticalGrid {
    pub fn new(depth: f64, nz: usize, stretch: f64) -> Result<Self> {
        if nz < 4 {
            return Err(Error::InvalidParameter { name: "Nz", reason: format!("need at least 4 cells, got {nz}") });
        }
        if !(stretch >= 0.0 && stretch.is_finite()) {
            return Err(Error::InvalidParameter { name: "stretch", reason: format!("must be non-negative, got {stretch}") });
        }
        let map = |xi: f64| {
            if stretch < 1e-8 {
                depth * xi
            } else {
                0.5 * depth * (1.0 + (stretch * (2.0 * xi - 1.0)).tanh() / stretch.tanh())
            }
        };
        let mut faces: Vec<f64> = (0..=nz).map(|j| map(j as f64 / nz as f64)).collect();
        faces[0] = 0.0;
        faces[nz] = depth;
        let centers = faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let widths = faces.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(VerticalGrid { depth, stretch, faces, centers, widths })
    }

    pub fn nz(&self) -> usize {
        self.widths.len()
    }

    /// Cell centres within `layer` of the nearer wall (the smaller count).
    pub fn points_within(&self, layer: f64) -> usize {
        let bottom = self.centers.iter().filter(|z| **z <= layer).count();
        let top = self.centers.iter().filter(|z| self.depth - **z <= layer).count();
        bottom.min(top)
    }

    /// Smallest stretch giving `min_points` centres inside `layer`.
    pub fn resolving(depth: f64, nz: usize, layer: f64, min_points: usize) -> Result<Self> {
        let uniform = Self::new(depth, nz, 0.0)?;
        if uniform.points_within(layer) >= min_points {
            return Ok(uniform);
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while Self::new(depth, nz, hi)?.points_within(layer) < min_points {
            hi *= 2.0;
            if hi > 64.0 {
                return Err(Error::InvalidParameter {
                    name: "Nz",
                    reason: format!("{nz} cells cannot put {min_points} points inside a layer of width {layer:.3e}"),
                });
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if Self::new(depth, nz, mid)?.points_within(layer) >= min_points {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Self::new(depth, nz, hi)
    }

    /// Distance between the centres on either side of interior face `f`.
    fn dzc(&self, f: usize) -> f64 {
        self.centers[f] - self.centers[f - 1]
    }
}

/// One wavenumber's column: `A, B, p` at centres, `u₃` at all faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub a: Vec<C64>,
    pub b: Vec<C64>,
    pub p: Vec<C64>,
    pub w: Vec<C64>,
}

impl Column {
    pub fn zeros(nz: usize) -> Self {
        Column { a: vec![ZERO; nz], b: vec![ZERO; nz], p: vec![ZERO; nz], w: vec![ZERO; nz + 1] }
    }

    /// `max_j |iκA_j + (w_{j+1} − w_j)/h_j|`.
    pub fn divergence(&self, kappa: f64, grid: &VerticalGrid) -> f64 {
        (0..grid.nz()).map(|j| (I * kappa * self.a[j] + (self.w[j + 1] - self.w[j]) / grid.widths[j]).norm()).fold(0.0, f64::max)
    }
}

/// Unit vectors `(k̂, k̂^⊥)`; for `k_h = 0` the coordinate axes.
pub fn horizontal_frame(geom: &TorusGeometry, kh: [i32; 2]) -> (f64, [f64; 2], [f64; 2]) {
    let k = [2.0 * std::f64::consts::PI * kh[0] as f64 / geom.a1, 2.0 * std::f64::consts::PI * kh[1] as f64 / geom.a2];
    let kappa = k[0].hypot(k[1]);
    if kappa == 0.0 {
        return (0.0, [1.0, 0.0], [0.0, 1.0]);
    }
    let e = [k[0] / kappa, k[1] / kappa];
    (kappa, e, [-e[1], e[0]])
}

fn split_h(v: [C64; 2], e: [f64; 2], f: [f64; 2]) -> (C64, C64) {
    (v[0] * e[0] + v[1] * e[1], v[0] * f[0] + v[1] * f[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectState {
    pub time: f64,
    pub columns: BTreeMap<[i32; 2], Column>,
    /// Largest discrete divergence over the columns.
    pub divergence: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectTrajectory {
    pub geometry: TorusGeometry,
    pub grid: VerticalGrid,
    pub epsilon: f64,
    pub states: Vec<DirectState>,
}

/// Grid values of a spectral field, one column per horizontal wavenumber
/// present in the field.
pub fn columns_from_field(field: &SpectralField, grid: &VerticalGrid) -> Result<BTreeMap<[i32; 2], Column>> {
    let basis = Basis::new(field.geometry, field.truncation)?;
    let mut out: BTreeMap<[i32; 2], Column> = BTreeMap::new();
    for ((k, c), m) in field.modes().zip(&basis.modes) {
        if c == ZERO {
            continue;
        }
        let (_, e, f) = horizontal_frame(&field.geometry, k.kh());
        let col = out.entry(k.kh()).or_insert_with(|| Column::zeros(grid.nz()));
        for (j, z) in grid.centers.iter().enumerate() {
            let p = m.profile(*z);
            let (a, b) = split_h([p[0] * c, p[1] * c], e, f);
            col.a[j] += a;
            col.b[j] += b;
        }
        for (j, z) in grid.faces.iter().enumerate().skip(1).take(grid.nz() - 1) {
            col.w[j] += m.profile(*z)[2] * c;
        }
    }
    Ok(out)
}

/// Physical parameters of the direct problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectParams {
    pub epsilon: f64,
    pub nu: f64,
    pub beta: f64,
}

struct ColumnSystem {
    frame: ([f64; 2], [f64; 2]),
    lu: BandedLu,
    explicit: BandedMatrix,
}

fn ia(j: usize) -> usize {
    4 * j
}
fn ib(j: usize) -> usize {
    4 * j + 1
}
fn ip(j: usize) -> usize {
    4 * j + 2
}
/// `u₃` at face `j + 1`.
fn iw(j: usize) -> usize {
    4 * j + 3
}

impl ColumnSystem {
    fn new(geom: &TorusGeometry, kh: [i32; 2], grid: &VerticalGrid, params: &DirectParams, dt: f64) -> Result<Self> {
        let (kappa, e, f) = horizontal_frame(geom, kh);
        let nz = grid.nz();
        let n = 4 * nz;
        let (kl, ku) = (4, 4);
        let mut lhs = BandedMatrix::new(n, kl, ku);
        let mut rhs = BandedMatrix::new(n, kl, ku);
        let nu = params.nu;
        let rot = 1.0 / params.epsilon;
        let k2 = kappa * kappa;
        // spatial operator K on the evolving rows: lhs = I/dt + K/2, rhs = I/dt − K/2
        let mut put = |r: usize, c: usize, v: f64| {
            lhs.add(r, c, C64::new(0.5 * v, 0.0));
            rhs.add(r, c, C64::new(-0.5 * v, 0.0));
        };
        for j in 0..nz {
            let h = grid.widths[j];
            for (row, var) in [(ia(j), ia as fn(usize) -> usize), (ib(j), ib as fn(usize) -> usize)] {
                let mut diag = k2;
                if j + 1 < nz {
                    let g = nu / (h * grid.dzc(j + 1));
                    diag += g;
                    put(row, var(j + 1), -g);
                }
                let g = if j == 0 { nu / (h * grid.centers[0]) } else { nu / (h * grid.dzc(j)) };
                diag += g;
                if j > 0 {
                    put(row, var(j - 1), -g);
                }
                put(row, var(j), diag);
            }
            put(ia(j), ib(j), -rot);
            put(ib(j), ia(j), rot);
        }
        if kappa > 0.0 {
            for j in 0..nz - 1 {
                let (hm, hp) = (grid.widths[j], grid.widths[j + 1]);
                let s = 2.0 * nu / (hm + hp);
                put(iw(j), iw(j), k2 + s / hp + s / hm);
                put(iw(j), iw(j + 1), -s / hp);
                if j > 0 {
                    put(iw(j), iw(j - 1), -s / hm);
                }
            }
        }
        let inv = C64::new(1.0 / dt, 0.0);
        for j in 0..nz {
            lhs.add(ia(j), ia(j), inv);
            lhs.add(ib(j), ib(j), inv);
            rhs.add(ia(j), ia(j), inv);
            rhs.add(ib(j), ib(j), inv);
            if kappa > 0.0 {
                // pressure gradient, divergence, and u₃ = 0 at the top face
                lhs.add(ia(j), ip(j), I * kappa);
                lhs.add(ip(j), ia(j), I * kappa);
                lhs.add(ip(j), iw(j), C64::new(1.0 / grid.widths[j], 0.0));
                if j > 0 {
                    lhs.add(ip(j), iw(j - 1), C64::new(-1.0 / grid.widths[j], 0.0));
                }
                if j + 1 < nz {
                    lhs.add(iw(j), iw(j), inv);
                    rhs.add(iw(j), iw(j), inv);
                    let g = 1.0 / grid.dzc(j + 1);
                    lhs.add(iw(j), ip(j + 1), C64::new(g, 0.0));
                    lhs.add(iw(j), ip(j), C64::new(-g, 0.0));
                } else {
                    lhs.add(iw(j), iw(j), C64::new(1.0, 0.0));
                }
            } else {
                lhs.add(ip(j), ip(j), C64::new(1.0, 0.0));
                lhs.add(iw(j), iw(j), C64::new(1.0, 0.0));
            }
        }
        Ok(ColumnSystem { frame: (e, f), lu: lhs.factor()?, explicit: rhs })
    }

    fn pack(&self, c: &Column) -> Vec<C64> {
        let nz = c.a.len();
        let mut x = vec![ZERO; 4 * nz];
        for j in 0..nz {
            x[ia(j)] = c.a[j];
            x[ib(j)] = c.b[j];
            x[ip(j)] = c.p[j];
            x[iw(j)] = c.w[j + 1];
        }
        x
    }

    fn unpack(&self, x: &[C64]) -> Column {
        let nz = x.len() / 4;
        let mut c = Column::zeros(nz);
        for j in 0..nz {
            c.a[j] = x[ia(j)];
            c.b[j] = x[ib(j)];
            c.p[j] = x[ip(j)];
            if j + 1 < nz {
                c.w[j + 1] = x[iw(j)];
            }
        }
        c
    }

    /// One step; `flux` is the trapezoidal average of `βσ` in the `(k̂, k̂^⊥)`
    /// frame.
    fn step(&self, x: &[C64], flux: (C64, C64), nu: f64, h_top: f64) -> Vec<C64> {
        let mut r = self.explicit.matvec(x);
        let nz = x.len() / 4;
        for j in 0..nz {
            r[ip(j)] = ZERO;
        }
        r[iw(nz - 1)] = ZERO;
        r[ia(nz - 1)] += flux.0 * (nu / h_top);
        r[ib(nz - 1)] += flux.1 * (nu / h_top);
        self.lu.solve_in_place(&mut r);
        r
    }
}

/// Integrate the columns in `initial` (plus every wavenumber the wind
/// forces) from `initial.time` for `steps` steps of size `dt`, keeping every
/// `every`-th state and the last.
pub fn integrate_columns(
    geom: &TorusGeometry,
    grid: &VerticalGrid,
    initial: &DirectState,
    ws: &WindStress,
    params: &DirectParams,
    omega: &PhasePoint,
    dt: f64,
    steps: usize,
    every: usize,
) -> Result<Vec<DirectState>> {
    let mut khs: BTreeSet<[i32; 2]> = initial.columns.keys().copied().collect();
    if params.beta != 0.0 {
        for m in &ws.modes {
            khs.insert(m.kh);
            khs.insert([-m.kh[0], -m.kh[1]]);
        }
    }
    let nz = grid.nz();
    let area = geom.area();
    let h_top = grid.widths[nz - 1];
    let t0 = initial.time;
    let per_k: Vec<([i32; 2], Vec<Column>)> = khs
        .into_par_iter()
        .map(|kh| {
            let sys = ColumnSystem::new(geom, kh, grid, params, dt)?;
            let (e, f) = sys.frame;
            let flux_at = |t: f64| {
                if params.beta == 0.0 {
                    return (ZERO, ZERO);
                }
                let s = sigma_hat(ws, t, t / params.epsilon, kh, omega);
                let s = [s[0] * (params.beta / area), s[1] * (params.beta / area)];
                split_h(s, e, f)
            };
            let mut x = sys.pack(initial.columns.get(&kh).unwrap_or(&Column::zeros(nz)));
            let mut kept = vec![sys.unpack(&x)];
            let mut prev = flux_at(t0);
            for n in 0..steps {
                let next = flux_at(t0 + (n + 1) as f64 * dt);
                let avg = ((prev.0 + next.0) * 0.5, (prev.1 + next.1) * 0.5);
                x = sys.step(&x, avg, params.nu, h_top);
                prev = next;
                if (n + 1) % every == 0 || n + 1 == steps {
                    kept.push(sys.unpack(&x));
                }
            }
            Ok((kh, kept))
        })
        .collect::<Result<Vec<_>>>()?;
    let times: Vec<f64> = std::iter::once(0).chain((1..=steps).filter(|n| n % every == 0 || *n == steps)).map(|n| t0 + n as f64 * dt).collect();
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let columns: BTreeMap<[i32; 2], Column> = per_k.iter().map(|(kh, cols)| (*kh, cols[i].clone())).collect();
            let divergence = if i == 0 {
                // the interpolated initial data is only divergence-free up to O(h²)
                0.0
            } else {
                columns.iter().map(|(kh, c)| c.divergence(horizontal_frame(geom, *kh).0, grid)).fold(0.0, f64::max)
            };
            DirectState { time: t, columns, divergence }
        })
        .collect())
}

pub fn solve_direct_linear(u0: &SpectralField, ws: &WindStress, params: &DirectParams, grid_cfg: &GridConfig, omega: &PhasePoint) -> Result<DirectTrajectory> {
    let geom = u0.geometry;
    if ws.geometry != geom {
        return Err(Error::GeometryMismatch);
    }
    if !(params.epsilon > 0.0 && params.nu > 0.0) {
        return Err(Error::InvalidParameter { name: "epsilon", reason: "epsilon and nu must be positive".into() });
    }
    if !(grid_cfg.dt > 0.0 && grid_cfg.t_final >= 0.0) || grid_cfg.output_every == 0 {
        return Err(Error::InvalidParameter { name: "grid", reason: "dt must be positive, T_final non-negative, output_every ≥ 1".into() });
    }
    let layer = (params.epsilon * params.nu).sqrt();
    let grid = match grid_cfg.stretch {
        Some(s) => VerticalGrid::new(geom.a, grid_cfg.nz, s)?,
        None => VerticalGrid::resolving(geom.a, grid_cfg.nz, layer, MIN_LAYER_POINTS)?,
    };
    if grid.points_within(layer) < MIN_LAYER_POINTS {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: format!("only {} points inside the layer of width {layer:.3e}; need {MIN_LAYER_POINTS}", grid.points_within(layer)),
        });
    }
    let u0 = u0.retruncate(grid_cfg.nh);
    let initial = DirectState { time: 0.0, columns: columns_from_field(&u0, &grid)?, divergence: 0.0 };
    let steps = if grid_cfg.t_final == 0.0 { 0 } else { (grid_cfg.t_final / grid_cfg.dt).round().max(1.0) as usize };
    let dt = if steps == 0 { grid_cfg.dt } else { grid_cfg.t_final / steps as f64 };
    let states = integrate_columns(&geom, &grid, &initial, ws, params, omega, dt, steps, grid_cfg.output_every)?;
    Ok(DirectTrajectory { geometry: geom, grid, epsilon: params.epsilon, states })
}

/// `⟨N_k, u⟩ = a₁a₂∫₀^a conj(profile_k)·û(k_h, z) dz`, midpoint rule on cells
/// for the horizontal components and face weights for `u₃`.
pub fn project_state(state: &DirectState, geom: &TorusGeometry, grid: &VerticalGrid, truncation: u32) -> Result<SpectralField> {
    let basis = Basis::new(*geom, truncation)?;
    let mut out = SpectralField::zeros(*geom, truncation);
    let area = geom.area();
    let nz = grid.nz();
    for (i, m) in basis.modes.iter().enumerate() {
        let Some(col) = state.columns.get(&m.k.kh()) else { continue };
        let (_, e, f) = horizontal_frame(geom, m.k.kh());
        let mut s = ZERO;
        for j in 0..nz {
            let p = m.profile(grid.centers[j]);
            let uh = [col.a[j] * e[0] + col.b[j] * f[0], col.a[j] * e[1] + col.b[j] * f[1]];
            s += (p[0].conj() * uh[0] + p[1].conj() * uh[1]) * grid.widths[j];
        }
        for fc in 1..nz {
            s += m.profile(grid.faces[fc])[2].conj() * col.w[fc] * grid.dzc(fc);
        }
        out.coeffs[i] = s * area;
    }
    Ok(out)
}

/// Project every state and undo the fast rotation: `exp((t/ε)L)` applied to
/// the projection.
pub fn filter_project(traj: &DirectTrajectory, truncation: u32) -> Result<Vec<(f64, SpectralField)>> {
    let basis = Basis::new(traj.geometry, truncation)?;
    traj.states
        .iter()
        .map(|s| {
            let c = project_state(s, &traj.geometry, &traj.grid, truncation)?;
            Ok((s.time, semigroup_apply(&c, &basis, s.time / traj.epsilon, -1)))
        })
        .collect()
}

/// Squared `L²` and `‖∇_h·‖²` norms of the difference between grid columns
/// and `L(t/ε)w` evaluated on the grid.
pub fn grid_error(state: &DirectState, w: &SpectralField, epsilon: f64, grid: &VerticalGrid) -> Result<(f64, f64)> {
    let geom = w.geometry;
    let basis = Basis::new(geom, w.truncation)?;
    let rotated = semigroup_apply(w, &basis, state.time / epsilon, 1);
    let reference = columns_from_field(&rotated, grid)?;
    let nz = grid.nz();
    let zero = Column::zeros(nz);
    let khs: BTreeSet<[i32; 2]> = state.columns.keys().chain(reference.keys()).copied().collect();
    let (mut l2, mut h1) = (0.0, 0.0);
    for kh in khs {
        let u = state.columns.get(&kh).unwrap_or(&zero);
        let r = reference.get(&kh).unwrap_or(&zero);
        let mut s = 0.0;
        for j in 0..nz {
            s += ((u.a[j] - r.a[j]).norm_sqr() + (u.b[j] - r.b[j]).norm_sqr()) * grid.widths[j];
        }
        for f in 1..nz {
            s += (u.w[f] - r.w[f]).norm_sqr() * grid.dzc(f);
        }
        let kappa = horizontal_frame(&geom, kh).0;
        l2 += s * geom.area();
        h1 += s * geom.area() * kappa * kappa;
    }
    Ok((l2, h1))
}

fn default_samples() -> usize {
    20
}
fn default_steps_per_eps() -> f64 {
    40.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub epsilons: Vec<f64>,
    /// `ν = nu_ratio·ε`.
    #[serde(default = "one_f")]
    pub nu_ratio: f64,
    /// `β√(εν)` held fixed across the sweep.
    #[serde(default = "one_f")]
    pub layer_amplitude: f64,
    #[serde(rename = "Nz")]
    pub nz: usize,
    #[serde(rename = "N")]
    pub truncation: u32,
    #[serde(rename = "T_final")]
    pub t_final: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Direct steps per unit of `ε` (the fast period is `2πε`).
    #[serde(default = "default_steps_per_eps")]
    pub steps_per_epsilon: f64,
    /// Envelope steps per sample interval.
    #[serde(default = "default_env_sub")]
    pub envelope_substeps: usize,
}

fn one_f() -> f64 {
    1.0
}
fn default_env_sub() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub nu: f64,
    pub beta: f64,
    pub err_linf_l2: f64,
    pub err_l2_h10: f64,
    pub max_divergence: f64,
    pub runtime_s: f64,
}

/// For each `ε`: the direct linear solve against the linear envelope
/// solution in `L^∞(0,T; L²)` and `L²(0,T; H^{1,0})`.
pub fn convergence_study(u0: &SpectralField, ws: &WindStress, omega: &PhasePoint, cfg: &ConvergenceConfig) -> Result<Vec<ConvergenceRow>> {
    if cfg.samples == 0 || cfg.envelope_substeps == 0 || !(cfg.t_final > 0.0) {
        return Err(Error::InvalidParameter { name: "convergence", reason: "samples, envelope_substeps and T_final must be positive".into() });
    }
    let geom = u0.geometry;
    let u0 = u0.retruncate(cfg.truncation);
    let interval = cfg.t_final / cfg.samples as f64;
    cfg.epsilons
        .iter()
        .map(|&eps| {
            let start = Instant::now();
            let nu = cfg.nu_ratio * eps;
            let beta = cfg.layer_amplitude / (eps * nu).sqrt();
            let mut ecfg = EnvelopeConfig::new(eps, nu, beta, cfg.truncation, interval / cfg.envelope_substeps as f64, cfg.t_final);
            ecfg.nonlinear = false;
            ecfg.output_every = cfg.envelope_substeps;
            let solver = EnvelopeSolver::new(geom, ecfg.clone())?;
            let env = solver.solve_with_source(&u0, &wind_source(ws, &ecfg, omega)?, &ws.slow_envelope)?;

            let per_sample = ((interval * cfg.steps_per_epsilon / eps).ceil() as usize).max(1);
            let grid_cfg = GridConfig { nz: cfg.nz, stretch: None, nh: cfg.truncation, dt: interval / per_sample as f64, t_final: cfg.t_final, output_every: per_sample };
            let params = DirectParams { epsilon: eps, nu, beta };
            let direct = solve_direct_linear(&u0, ws, &params, &grid_cfg, omega)?;
            if direct.states.len() != env.fields.len() {
                return Err(Error::InvalidParameter { name: "samples", reason: "direct and envelope sample times disagree".into() });
            }
            let errs: Vec<(f64, f64)> = direct
                .states
                .par_iter()
                .zip(&env.fields)
                .map(|(s, w)| grid_error(s, &w.field, eps, &direct.grid))
                .collect::<Result<_>>()?;
            let linf = errs.iter().map(|e| e.0).fold(0.0, f64::max).sqrt();
            let mut int = 0.0;
            for w in errs.windows(2) {
                int += 0.5 * interval * (w[0].0 + w[0].1 + w[1].0 + w[1].1);
            }
            let max_divergence = direct.states.iter().map(|s| s.divergence).fold(0.0, f64::max);
            Ok(ConvergenceRow { epsilon: eps, nu, beta, err_linf_l2: linf, err_l2_h10: int.sqrt(), max_divergence, runtime_s: start.elapsed().as_secs_f64() })
        })
        .collect()
}

/// Errors decrease strictly along the sweep in both norms.
pub fn is_monotone(rows: &[ConvergenceRow]) -> bool {
    rows.windows(2).all(|w| w[1].err_linf_l2 < w[0].err_linf_l2 && w[1].err_l2_h10 < w[0].err_l2_h10)
}

/// Horizontal wavenumbers carrying the wind, for building `k_h ≠ 0` data.
pub fn forced_wavenumbers(ws: &WindStress) -> Vec<[i32; 2]> {
    ws.modes.iter().map(|m| m.kh).collect()
}

/// Modes of `field` with `k_h = 0` removed.
pub fn without_horizontal_mean_flow(field: &SpectralField) -> SpectralField {
    let mut out = field.clone();
    for (i, k) in field.mode_set().iter().enumerate() {
        if k.horizontal_is_zero() {
            out.coeffs[i] = ZERO;
        }
    }
    out
}
