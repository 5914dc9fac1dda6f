//! One function per subcommand. Each writes its artifacts under
//! `<out>/<subcommand>/` and returns a one-line summary.

use std::path::Path;

use ekman::direct::{convergence_study, filter_project, forced_wavenumbers, is_monotone, project_state, solve_direct_linear, without_horizontal_mean_flow, ConvergenceConfig, DirectParams};
use ekman::envelope::{phase_draws, solve_mean_limit, EnvelopeConfig, EnvelopeSolver};
use ekman::forcing::{build_h2_counterexample, check_h1, check_h2, reconstruct_sigma_alpha, sample_sigma, spectral_density_falpha};
use ekman::layers::{layer_residual, layer_scaling_sweep, loglog_slope, psi, psi_residual, source_limit, top_layer_hat, top_layer_u3, top_layer_uh, BoundaryFluxes, LayerParams};
use ekman::resonance::{check_nonresonant_torus, DEFAULT_RESONANCE_TOL};
use ekman::sources::{pumping_table, s_t_delta, source_average_stheta};
use ekman::{Basis, PhasePoint, SpectralField, TorusGeometry, WindStress};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::artifacts::{f, Artifacts};
use crate::cache::{self, TableKey};
use crate::config::{ExperimentConfig, Kind};
use crate::error::CliError;
use crate::seeds::{derive, Stream};

/// Largest Gram or Coriolis defect accepted by the `basis` report.
pub const ORTHO_TOL: f64 = 1e-8;

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub seed: u64,
    pub out: &'a Path,
    pub rebuild_cache: bool,
}

impl Context<'_> {
    fn cache_dir(&self) -> std::path::PathBuf {
        self.out.join("cache")
    }

    fn wind(&self, geom: TorusGeometry, kind: Kind) -> Result<WindStress, CliError> {
        let w = ExperimentConfig::require(&self.cfg.wind, "wind", kind)?;
        w.build(geom).map_err(|e| CliError::config("wind", e))
    }

    /// `wind.seed` when given, else the derived phase stream.
    fn phase(&self, ws: &WindStress) -> PhasePoint {
        let s = self.cfg.wind.as_ref().and_then(|w| w.seed).unwrap_or_else(|| derive(self.seed, Stream::Phase));
        PhasePoint::random(ws.phase_dim(), &mut ChaCha8Rng::seed_from_u64(s))
    }

    fn initial(&self, geom: TorusGeometry, truncation: u32) -> SpectralField {
        let b = &self.cfg.initial;
        let mut rng = ChaCha8Rng::seed_from_u64(derive(self.seed, Stream::Initial));
        let u = SpectralField::random_real(geom, truncation, &mut rng, |k| b.amplitude / (1.0 + k.max_abs() as f64).powf(b.decay));
        if b.remove_mean_flow {
            without_horizontal_mean_flow(&u)
        } else {
            u
        }
    }

    fn solver(&self, kind: Kind) -> Result<EnvelopeConfig, CliError> {
        let mut s = ExperimentConfig::require(&self.cfg.solver, "solver", kind)?.clone();
        if s.seed == 0 {
            s.seed = derive(self.seed, Stream::MonteCarlo);
        }
        s.validate().map_err(|e| CliError::config("solver", e))?;
        Ok(s)
    }
}

fn mode_cols(k: ekman::ModeIndex) -> [String; 3] {
    [k.k1.to_string(), k.k2.to_string(), k.k3.to_string()]
}

fn c_cols(c: C64) -> [String; 2] {
    [f(c.re), f(c.im)]
}

pub fn basis(ctx: &Context, art: &mut Artifacts) -> Result<String, CliError> {
    let geom = ctx.cfg.geometry()?;
    let basis = Basis::new(geom, ctx.cfg.basis.truncation)?;
    let rows = basis.modes.iter().map(|m| {
        let mut r: Vec<String> = mode_cols(m.k).into();
        r.extend(m.kprime.iter().map(|x| f(*x)));
        r.push(f(m.lambda));
        for c in m.n {
            r.extend(c_cols(c));
        }
        r
    });
    art.csv("modes.csv", &["k1", "k2", "k3", "kp1", "kp2", "kp3", "lambda", "re_n1", "im_n1", "re_n2", "im_n2", "re_n3", "im_n3"], rows)?;
    let rep = basis.orthonormality();
    let pass = rep.max_offdiag < ORTHO_TOL && rep.max_diag_defect < ORTHO_TOL && rep.max_coriolis_defect < ORTHO_TOL;
    art.json("report.json", &json!({"N": basis.set.truncation, "geometry": geom, "tolerance": ORTHO_TOL, "orthonormality": rep, "pass": pass}))?;
    Ok(format!("{} modes, max off-diagonal {:.2e}, pass {pass}", rep.modes, rep.max_offdiag))
}

pub fn resonance(ctx: &Context, art: &mut Artifacts) -> Result<String, CliError> {
    let geom = ctx.cfg.geometry()?;
    let b = &ctx.cfg.resonance;
    let key = TableKey::new(geom, b.truncation, b.output_cutoff.unwrap_or(2 * b.truncation), b.tolerance, b.include_nonresonant);
    let (table, status) = cache::load_or_build(&ctx.cache_dir(), &key, ctx.rebuild_cache)?;
    art.note("triad_cache", json!({"status": status, "hash": key.hash()}));
    let rows = table.triads.iter().map(|t| {
        let mut r: Vec<String> = Vec::with_capacity(14);
        for k in [t.k, t.l, t.m] {
            r.extend(mode_cols(k));
        }
        r.extend(c_cols(t.alpha));
        r.push(f(t.detuning));
        r.push(u8::from(t.resonant).to_string());
        r
    });
    art.csv("triads.csv", &["k1", "k2", "k3", "l1", "l2", "l3", "m1", "m2", "m3", "re_alpha", "im_alpha", "detuning", "resonant"], rows)?;
    let audit = check_nonresonant_torus(&geom, b.audit_cutoff.unwrap_or(b.truncation), b.tolerance)?;
    art.json("audit.json", &json!({"nonresonant": audit.is_nonresonant(), "report": audit}))?;
    Ok(format!("{} triads ({} resonant); non-resonant torus up to K={}: {}", table.len(), table.resonant_count(), audit.cutoff, audit.is_nonresonant()))
}

pub fn forcing_check(ctx: &Context, art: &mut Artifacts) -> Result<String, CliError> {
    let geom = ctx.cfg.geometry()?;
    let b = &ctx.cfg.forcing;
    let ws = match &b.counterexample {
        Some(c) => build_h2_counterexample(geom, c.n_max, c.decay).map_err(|e| CliError::config("forcing.counterexample", e))?,
        None => ctx.wind(geom, Kind::ForcingCheck)?,
    };
    if b.alphas.is_empty() || b.alphas.iter().any(|a| !(*a > 0.0)) {
        return Err(CliError::config("forcing.alphas", "need at least one positive α"));
    }
    let om = ctx.phase(&ws);
    let h1 = check_h1(&ws, &b.alphas, &om)?;
    // the L¹ norm of each Lorentzian equals its weight, so the grid values
    // are bounded by the closed form up to quadrature error
    let h1_pass = h1.closed_form.is_finite() && h1.sup_over_grid() <= h1.closed_form * (1.0 + 1e-6) + 1e-12;
    let h2 = check_h2(&ws, b.eta, &b.alphas, &om)?;
    let verdict = if h1_pass && h2.pass { "pass" } else { "fail" };
    art.json(
        "report.json",
        &json!({
            "source": if b.counterexample.is_some() { "h2_counterexample" } else { "wind" },
            "h1": {"pass": h1_pass, "closed_form": h1.closed_form, "sup_over_grid": h1.sup_over_grid(), "grid": h1.grid},
            "h2": h2,
            "verdict": verdict,
        }),
    )?;

    let (lo, hi, n) = b.lambda_grid;
    if n < 2 || !(hi > lo) {
        return Err(CliError::config("forcing.lambda_grid", "need max > min and at least two points"));
    }
    let lambdas: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let mut rows = Vec::new();
    for kh in forced_wavenumbers(&ws) {
        for &alpha in &b.alphas {
            let vals = lambdas.par_iter().map(|&lam| spectral_density_falpha(&ws, lam, alpha, kh, &om)).collect::<ekman::Result<Vec<_>>>()?;
            for (lam, v) in lambdas.iter().zip(vals) {
                let mut r = vec![f(alpha), f(*lam), kh[0].to_string(), kh[1].to_string()];
                r.extend(c_cols(v[0]));
                r.extend(c_cols(v[1]));
                rows.push(r);
            }
        }
    }
    art.csv("falpha.csv", &["alpha", "lambda", "k1", "k2", "re_f1", "im_f1", "re_f2", "im_f2"], rows)?;

    let mut rows = Vec::new();
    for &alpha in &b.alphas {
        let (mut sup, mut tail): (f64, f64) = (0.0, 0.0);
        for i in 0..=b.tau_samples {
            let tau = b.tau_end * i as f64 / b.tau_samples.max(1) as f64;
            let (s, t) = reconstruct_sigma_alpha(&ws, alpha, 0.0, tau, b.x_h, &om)?;
            let e = sample_sigma(&ws, 0.0, tau, b.x_h, &om);
            sup = sup.max((s[0] - e[0]).hypot(s[1] - e[1]));
            tail = tail.max(t);
        }
        rows.push(vec![f(alpha), f(sup), f(tail)]);
    }
    art.csv("sigma_alpha.csv", &["alpha", "sup_error", "tail_bound"], rows)?;
    Ok(format!("H1 {}, H2 {} (min distance to ±1: {:.3e}); verdict {verdict}", h1_pass, h2.pass, h2.min_distance))
}

pub fn layers(ctx: &Context, art: &mut Artifacts) -> Result<String, CliError> {
    let geom = ctx.cfg.geometry()?;
    let ws = ctx.wind(geom, Kind::Layers)?;
    let b = &ctx.cfg.layers;
    let p = LayerParams::new(b.epsilon, b.nu, b.beta, b.delta).map_err(|e| CliError::config("layers", e))?;
    let om = ctx.phase(&ws);
    let mut rows = Vec::new();
    for &tau in &b.taus {
        for &zeta in &b.zetas {
            let u = top_layer_uh(&ws, &p, b.t, tau, b.x_h, zeta, &om);
            let u3 = top_layer_u3(&ws, &p, b.t, tau, b.x_h, zeta, &om);
            let mut r = vec![f(tau), f(zeta)];
            for c in [u[0], u[1], u3] {
                r.extend(c_cols(c));
            }
            rows.push(r);
        }
    }
    art.csv("profile.csv", &["tau", "zeta", "re_u1", "im_u1", "re_u2", "im_u2", "re_u3", "im_u3"], rows)?;

    let scale = p.beta * p.depth();
    let kh = *forced_wavenumbers(&ws).first().ok_or_else(|| CliError::config("wind.modes", "no forced wavenumber"))?;
    let res = layer_residual(
        |tau, zeta| {
            let u = top_layer_hat(&ws, &p, b.t, tau, kh, zeta, &om);
            [u[0] / scale, u[1] / scale]
        },
        p.delta,
        &[0.0, 0.5, 2.0],
        &[0.5, 1.0, 2.0, 4.0],
        1e-3,
    );
    let psi_res = psi_residual(&[0.05, 0.1, 0.5, 1.0, 2.0, 3.0, 5.0], 1e-3);

    let sweep = layer_scaling_sweep(&ws, &b.scaling_epsilons, b.beta, b.delta, &om, &b.taus)?;
    let eps: Vec<f64> = sweep.iter().map(|r| r.epsilon).collect();
    let sup: Vec<f64> = sweep.iter().map(|r| r.sup_ratio).collect();
    let l2: Vec<f64> = sweep.iter().map(|r| r.l2_ratio).collect();
    let slopes = if eps.len() >= 2 { Some((loglog_slope(&eps, &sup), loglog_slope(&eps, &l2))) } else { None };
    art.csv("scaling.csv", &["epsilon", "nu", "sup_ratio", "l2_ratio"], sweep.iter().map(|r| vec![f(r.epsilon), f(r.nu), f(r.sup_ratio), f(r.l2_ratio)]))?;
    art.json(
        "report.json",
        &json!({
            "params": p,
            "residual_kh": kh,
            "layer_residual": res,
            "psi_residual": psi_res,
            "psi_at_2": psi(2.0),
            "scaling_slopes": slopes.map(|(a, c)| json!({"sup": a, "l2": c})),
        }),
    )?;
    Ok(format!("layer residual max {:.2e}; ψ residual {:.2e}; scaling slopes {:?}", res.max, psi_res, slopes))
}

pub fn sources(ctx: &Context, art: &mut Artifacts) -> Result<String, CliError> {
    let geom = ctx.cfg.geometry()?;
    let ws = ctx.wind(geom, Kind::Sources)?;
    let b = &ctx.cfg.sources;
    let p = LayerParams::new(b.epsilon, b.nu, b.beta, b.delta).map_err(|e| CliError::config("sources", e))?;
    let n = b.truncation;
    let om = ctx.phase(&ws);

    let table = pumping_table(&geom, n)?;
    art.csv("pumping.csv", &["k1", "k2", "k3", "re_a", "im_a"], table.iter().map(|c| [mode_cols(c.k).to_vec(), c_cols(c.a).to_vec()].concat()))?;

    let st = s_t_delta(&ws, b.delta, b.t, &om, n)?;
    art.csv("s_t.csv", &["k1", "k2", "k3", "re", "im"], st.modes().map(|(k, c)| [mode_cols(k).to_vec(), c_cols(c).to_vec()].concat()))?;

    let w = ctx.initial(geom, n);
    let flux = BoundaryFluxes::new(Some(&w), Some((&ws, &p, b.t, &om)))?;
    let sbar = source_limit(&geom, &flux, &p, n)?;
    let errs = b.thetas.par_iter().map(|&th| Ok(source_average_stheta(&geom, &flux, &p, n, th, None)?.sub(&sbar).norm())).collect::<Result<Vec<f64>, CliError>>()?;
    art.csv("stheta.csv", &["theta", "error"], b.thetas.iter().zip(&errs).map(|(t, e)| vec![f(*t), f(*e)]))?;
    let slope = if b.thetas.len() >= 2 { Some(loglog_slope(&b.thetas, &errs)) } else { None };
    art.json("report.json", &json!({"params": p, "N": n, "limit_norm": sbar.norm(), "s_t_norm": st.norm(), "stheta_slope": slope}))?;
    Ok(format!("{} pumping coefficients; ‖S_T^δ‖ = {:.4e}; S_θ slope {:?}", table.len(), st.norm(), slope))
}

fn envelope_solver(ctx: &Context, geom: TorusGeometry, cfg: &EnvelopeConfig, art: &mut Artifacts) -> Result<EnvelopeSolver, CliError> {
    let table = if cfg.nonlinear {
        let key = TableKey::new(geom, cfg.truncation, cfg.truncation, DEFAULT_RESONANCE_TOL, false);
        let (t, status) = cache::load_or_build(&ctx.cache_dir(), &key, ctx.rebuild_cache)?;
        art.note("triad_cache", json!({"status": status, "hash": key.hash()}));
        Some(t)
    } else {
        None
    };
    Ok(EnvelopeSolver::with_table(geom, cfg.clone(), table)?)
}

pub fn solve_envelope(ctx: &Context, art: &mut Artifacts) -> Result<String, CliError> {
    let geom = ctx.cfg.geometry()?;
    let ws = ctx.wind(geom, Kind::SolveEnvelope)?;
    let cfg = ctx.solver(Kind::SolveEnvelope)?;
    let solver = envelope_solver(ctx, geom, &cfg, art)?;
    let om = ctx.phase(&ws);
    let u0 = ctx.initial(geom, cfg.truncation);
    let rec = solver.solve(&u0, &ws, &om)?;
    art.csv(
        "trajectory.csv",
        &["time", "energy", "dissipation", "pumping", "source_work"],
        rec.diagnostics.iter().map(|d| vec![f(d.time), f(d.energy), f(d.dissipation), f(d.pumping), f(d.source_work)]),
    )?;
    art.json("snapshots.json", &rec.fields)?;
    let budget = rec.budget_residuals(&cfg).into_iter().fold(0.0, f64::max);
    art.json("report.json", &json!({"config": cfg, "steps": rec.times.len().saturating_sub(1), "final_energy": rec.final_field().norm_sqr(), "max_budget_residual": budget}))?;
    Ok(format!("{} steps, final energy {:.6e}", rec.times.len().saturating_sub(1), rec.final_field().norm_sqr()))
}

pub fn mean_limit(ctx: &Context, art: &mut Artifacts) -> Result<String, CliError> {
    let geom = ctx.cfg.geometry()?;
    let ws = ctx.wind(geom, Kind::MeanLimit)?;
    let cfg = ctx.solver(Kind::MeanLimit)?;
    let draws = ctx.cfg.mean_limit.realizations;
    if draws < 2 {
        return Err(CliError::config("mean_limit.realizations", "need at least two realizations"));
    }
    let solver = envelope_solver(ctx, geom, &cfg, art)?;
    let u0 = ctx.initial(geom, cfg.truncation);
    let omegas = phase_draws(ws.phase_dim(), cfg.seed, draws);
    let runs = omegas.par_iter().map(|om| solver.solve(&u0, &ws, om)).collect::<ekman::Result<Vec<_>>>()?;
    let ml = solve_mean_limit(&u0, &ws, &cfg, &omegas)?;
    let expected = ml.expected();
    let n = draws as f64;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (s, exp) in expected.iter().enumerate() {
        let mut mean = SpectralField::zeros(geom, cfg.truncation);
        for r in &runs {
            mean.axpy(C64::new(1.0 / n, 0.0), &r.fields[s].field);
        }
        let std = (runs.iter().map(|r| r.fields[s].field.sub(&mean).norm_sqr()).sum::<f64>() / (n - 1.0)).sqrt();
        let err = mean.sub(exp).norm();
        let stderr = std / n.sqrt();
        // the initial snapshot is identical across draws
        let ratio = if std > 1e-12 * (1.0 + exp.norm()) { err / (3.0 * stderr) } else { 0.0 };
        worst = worst.max(ratio);
        rows.push(vec![f(ml.times[s]), f(exp.norm()), f(mean.norm()), f(err), f(stderr), f(ratio)]);
    }
    art.csv("mean.csv", &["time", "norm_expected", "norm_mc_mean", "error", "mc_stderr", "ratio_to_3se"], rows)?;
    art.json("report.json", &json!({"realizations": draws, "phase_seed": cfg.seed, "max_ratio_to_3se": worst, "within_3se": worst <= 1.0}))?;
    Ok(format!("{draws} draws, max |mean − (w̄+w̃)| / 3se = {worst:.3}"))
}

pub fn solve_direct(ctx: &Context, art: &mut Artifacts) -> Result<String, CliError> {
    let geom = ctx.cfg.geometry()?;
    let ws = ctx.wind(geom, Kind::SolveDirect)?;
    let s = ExperimentConfig::require(&ctx.cfg.solver, "solver", Kind::SolveDirect)?;
    let grid = ExperimentConfig::require(&ctx.cfg.grid, "grid", Kind::SolveDirect)?;
    let params = DirectParams { epsilon: s.epsilon, nu: s.nu, beta: s.beta };
    let om = ctx.phase(&ws);
    let u0 = ctx.initial(geom, grid.nh);
    let traj = solve_direct_linear(&u0, &ws, &params, grid, &om)?;
    let rows = traj
        .states
        .iter()
        .map(|st| Ok(vec![f(st.time), f(project_state(st, &geom, &traj.grid, grid.nh)?.norm_sqr()), f(st.divergence)]))
        .collect::<Result<Vec<_>, CliError>>()?;
    art.csv("trajectory.csv", &["time", "energy", "max_divergence"], rows)?;
    let filtered: Vec<_> = filter_project(&traj, grid.nh)?.into_iter().map(|(t, field)| json!({"time": t, "field": field})).collect();
    art.json("filtered.json", &filtered)?;
    let div = traj.states.iter().map(|s| s.divergence).fold(0.0, f64::max);
    art.json("report.json", &json!({"params": params, "grid": grid, "stretch": traj.grid.stretch, "states": traj.states.len(), "max_divergence": div}))?;
    Ok(format!("{} states on {} cells, max divergence {div:.2e}", traj.states.len(), traj.grid.nz()))
}

pub fn compare(ctx: &Context, art: &mut Artifacts) -> Result<String, CliError> {
    let geom = ctx.cfg.geometry()?;
    let ws = ctx.wind(geom, Kind::Compare)?;
    let cc = ExperimentConfig::require(&ctx.cfg.convergence, "convergence", Kind::Compare)?;
    if cc.epsilons.is_empty() {
        return Err(CliError::config("convergence.epsilons", "empty sweep"));
    }
    let om = ctx.phase(&ws);
    let u0 = ctx.initial(geom, cc.truncation);
    let points = art.dir.join("points");
    let rows = cc
        .epsilons
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| {
            let one = ConvergenceConfig { epsilons: vec![eps], ..cc.clone() };
            let row = convergence_study(&u0, &ws, &om, &one)?.remove(0);
            crate::artifacts::write_atomic(&points.join(format!("eps-{i:03}.json")), &serde_json::to_vec_pretty(&row)?)?;
            Ok(row)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    art.csv(
        "convergence.csv",
        &["epsilon", "nu", "beta", "err_LinfL2", "err_L2H10", "max_divergence"],
        rows.iter().map(|r| vec![f(r.epsilon), f(r.nu), f(r.beta), f(r.err_linf_l2), f(r.err_l2_h10), f(r.max_divergence)]),
    )?;
    let monotone = is_monotone(&rows);
    art.json("report.json", &json!({"monotone": monotone, "points": rows.len()}))?;
    art.note("point_runtime_s", json!(rows.iter().map(|r| json!({"epsilon": r.epsilon, "runtime_s": r.runtime_s})).collect::<Vec<_>>()));
    Ok(format!("{} ε values, monotone decrease {monotone}", rows.len()))
}
