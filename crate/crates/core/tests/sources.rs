use ekman::forcing::{ForcingMode, FrequencyAtom};
use ekman::layers::{loglog_slope, BoundaryFluxes, ExpSum, LayerParams};
use ekman::sources::*;
use ekman::{Basis, Error, ModeIndex, PhasePoint, SpectralField, TorusGeometry, WindStress};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn geom() -> TorusGeometry {
    TorusGeometry::new(1.0, 1.3, 0.9).unwrap()
}

/// Wind with atoms tuned to `μ = −λ_k` on two modes plus a steady component.
fn tuned_wind(g: TorusGeometry) -> WindStress {
    let m1 = ModeIndex::new(1, 0, 1);
    let m2 = ModeIndex::new(0, 1, -2);
    let mu1 = resonant_wind_frequency(&g, m1).unwrap();
    let mu2 = resonant_wind_frequency(&g, m2).unwrap();
    WindStress::new(
        g,
        vec![
            ForcingMode {
                kh: [1, 0],
                atoms: vec![
                    FrequencyAtom { mu: mu1, coeff: [C64::new(0.3, -0.2), C64::new(0.1, 0.4)] },
                    FrequencyAtom { mu: 0.0, coeff: [C64::new(0.2, 0.0), C64::new(-0.3, 0.1)] },
                ],
            },
            ForcingMode { kh: [0, 1], atoms: vec![FrequencyAtom { mu: mu2, coeff: [C64::new(-0.25, 0.05), C64::new(0.2, 0.2)] }] },
        ],
        vec![],
    )
    .unwrap()
}

#[test]
fn pumping_coefficient_examples() {
    let g = geom();
    assert_eq!(pumping_coefficient_a(&g, ModeIndex::new(0, 0, 3)).unwrap(), C64::new(0.0, 0.0));
    for k in [ModeIndex::new(1, 0, 0), ModeIndex::new(-2, 3, 0)] {
        let a = pumping_coefficient_a(&g, k).unwrap();
        assert!((a - C64::new(1.0 / (2f64.sqrt() * g.a), 0.0)).norm() < 1e-15, "{a}");
    }
    // unit torus, k = (1,1,1): λ = −1/3, |k_h'|² = 8π², |k'|² = 9π²
    let a = pumping_coefficient_a(&TorusGeometry::unit(), ModeIndex::new(1, 1, 1)).unwrap();
    let oracle = (C64::new(1.0, 1.0) * ((2.0 / 3.0) / (4.0f64 / 3.0).sqrt()) + C64::new(1.0, -1.0) * ((4.0 / 3.0) / (2.0f64 / 3.0).sqrt()))
        * (4.0 / (9.0 * 2f64.sqrt()));
    assert!((a - oracle).norm() < 1e-14, "{a} vs {oracle}");
}

#[test]
fn pumping_real_part_nonnegative_exhaustive() {
    let g = geom();
    for row in pumping_table(&g, 20).unwrap() {
        assert!(row.a.re >= 0.0, "{}: {}", row.k, row.a);
        if row.k.k3 == 0 && !row.k.horizontal_is_zero() {
            assert!((row.a.re - vertical_mean_pumping(&g)).abs() < 1e-14);
        }
    }
}

#[test]
fn s_b_damps() {
    let g = geom();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let w = SpectralField::random_real(g, 2, &mut rng, |_| 1.0);
        let s = s_b_apply(&w).unwrap();
        assert!(w.inner(&s).re >= 0.0);
    }
    let w = SpectralField::random_real(g, 2, &mut rng, |_| 1.0).horizontal_part();
    let s = s_b_apply(&w).unwrap();
    let expect = w.scaled(C64::new(vertical_mean_pumping(&g), 0.0));
    assert!(s.max_abs_diff(&expect) < 1e-14);
    assert_eq!(s_b_apply(&SpectralField::zeros(g, 2)).unwrap().norm(), 0.0);
}

#[test]
fn s_t_delta_steady_wind_hand_expansion() {
    let g = geom();
    let phi = [C64::new(0.7, -0.2), C64::new(0.1, 0.5)];
    let ws = WindStress::new(g, vec![ForcingMode { kh: [1, 0], atoms: vec![FrequencyAtom { mu: 0.0, coeff: phi }] }], vec![]).unwrap();
    let delta = 0.03;
    let s = s_t_delta(&ws, delta, 0.0, &PhasePoint::zero(0), 2).unwrap();
    let v = g.volume().sqrt();
    let sig = [phi[0] * g.area(), phi[1] * g.area()];
    let oracle = -C64::new(0.0, 1.0) * (sig[0] * delta + sig[1]) / (v * (1.0 + delta * delta));
    let k = ModeIndex::new(1, 0, 0);
    assert!((s.get(k) - oracle).norm() < 1e-12, "{} vs {oracle}", s.get(k));
    for (m, c) in s.modes() {
        if m != k && m != ModeIndex::new(-1, 0, 0) {
            assert_eq!(c, C64::new(0.0, 0.0), "{m}");
        }
    }
    // off-spectrum wind: every E_{−λ_k} vanishes
    let off = WindStress::new(g, vec![ForcingMode { kh: [1, 0], atoms: vec![FrequencyAtom { mu: 0.123456, coeff: phi }] }], vec![]).unwrap();
    assert_eq!(s_t_delta(&off, delta, 0.0, &PhasePoint::zero(1), 3).unwrap().norm(), 0.0);
    assert_eq!(s_t_delta(&WindStress::empty(g), delta, 0.0, &PhasePoint::zero(0), 2).unwrap().norm(), 0.0);
}

#[test]
fn s_t_limit_is_the_small_delta_limit() {
    let g = geom();
    let ws = tuned_wind(g);
    let om = PhasePoint::random(ws.phase_dim(), &mut ChaCha8Rng::seed_from_u64(6));
    let limit = s_t_limit(&ws, 0.0, &om, 3, 0.05).unwrap();
    assert!(limit.norm() > 0.1);
    let near = s_t_delta(&ws, 1e-6, 0.0, &om, 3).unwrap();
    assert!(near.sub(&limit).norm() < 1e-5 * limit.norm());
    // linear in δ: halving δ halves the gap
    let e1 = s_t_delta(&ws, 1e-2, 0.0, &om, 3).unwrap().sub(&limit).norm();
    let e2 = s_t_delta(&ws, 5e-3, 0.0, &om, 3).unwrap().sub(&limit).norm();
    assert!((e1 / e2 - 2.0).abs() < 0.01, "{}", e1 / e2);
}

#[test]
fn s_t_limit_rejects_frequencies_near_inertial() {
    let g = geom();
    let k = ModeIndex::new(3, 0, 1);
    let mu = resonant_wind_frequency(&g, k).unwrap();
    let ws = WindStress::new(g, vec![ForcingMode { kh: [3, 0], atoms: vec![FrequencyAtom { mu, coeff: [C64::new(1.0, 0.0), C64::new(0.0, 0.0)] }] }], vec![]).unwrap();
    let om = PhasePoint::zero(ws.phase_dim());
    let gap = 1.0 - mu.abs();
    assert!(matches!(s_t_limit(&ws, 0.0, &om, 3, gap + 0.01), Err(Error::H2Violation { .. })));
    assert!(s_t_limit(&ws, 0.0, &om, 3, gap - 0.01).is_ok());
}

fn setup() -> (TorusGeometry, WindStress, PhasePoint, LayerParams, SpectralField) {
    let g = geom();
    let ws = tuned_wind(g);
    let om = PhasePoint::random(ws.phase_dim(), &mut ChaCha8Rng::seed_from_u64(17));
    let p = LayerParams::new(0.05, 0.05, 2.0, 0.05).unwrap();
    let w = SpectralField::random_real(g, 2, &mut ChaCha8Rng::seed_from_u64(23), |_| 1.0);
    (g, ws, om, p, w)
}

#[test]
fn averaged_source_equals_operator_form() {
    let (g, ws, om, p, w) = setup();
    let flux = BoundaryFluxes::new(Some(&w), Some((&ws, &p, 0.0, &om))).unwrap();
    let sbar = ekman::layers::source_limit(&g, &flux, &p, 2).unwrap();
    let ops = source_limit_from_operators(&w, &ws, &p, 0.0, &om, 2).unwrap();
    assert!(sbar.max_abs_diff(&ops) < 1e-13 * (1.0 + sbar.norm()), "{}", sbar.max_abs_diff(&ops));
    let zero = BoundaryFluxes::default();
    assert_eq!(source_average_stheta(&g, &zero, &p, 2, 10.0, None).unwrap().norm(), 0.0);
}

#[test]
fn stheta_converges_at_rate_one_over_theta() {
    let (g, ws, om, p, w) = setup();
    let flux = BoundaryFluxes::new(Some(&w), Some((&ws, &p, 0.0, &om))).unwrap();
    let sbar = ekman::layers::source_limit(&g, &flux, &p, 2).unwrap();
    let thetas = [1e2, 1e3, 1e4];
    let errs: Vec<f64> = thetas.iter().map(|&th| source_average_stheta(&g, &flux, &p, 2, th, None).unwrap().sub(&sbar).norm()).collect();
    let slope = loglog_slope(&thetas, &errs);
    assert!((slope + 1.0).abs() < 0.15, "slope {slope}, errors {errs:?}");

    // a different admissible lift changes S_θ only by O(1/θ)
    let mut g1 = ExpSum::default();
    g1.push(0.4, C64::new(0.3, 0.1));
    g1.push(-1.3, C64::new(0.0, 0.2));
    let lift = LiftPerturbation { modes: vec![(ModeIndex::new(1, 1, 1), g1.clone()), (ModeIndex::new(0, 1, 0), g1)] };
    let diffs: Vec<f64> = thetas
        .iter()
        .map(|&th| {
            let a = source_average_stheta(&g, &flux, &p, 2, th, None).unwrap();
            let b = source_average_stheta(&g, &flux, &p, 2, th, Some(&lift)).unwrap();
            a.sub(&b).norm()
        })
        .collect();
    for (d, th) in diffs.iter().zip(thetas) {
        assert!(*d <= 2.0 * 2.0 * (0.3f64.hypot(0.1) + 0.2) / th, "{d} at {th}");
    }
}

#[test]
fn expectation_identities_under_random_phases() {
    let g = geom();
    let ws = tuned_wind(g);
    let n = 400;
    let basis = Basis::new(g, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let first = s_t_limit(&ws, 0.0, &PhasePoint::random(ws.phase_dim(), &mut rng), 2, 0.05).unwrap();
    let mut mean = SpectralField::zeros(g, 2);
    let mut sq = 0.0;
    let pts = [([0.1, 0.2], 0.3), ([0.5, 0.9], 0.7)];
    let mut v3_mean = [C64::new(0.0, 0.0); 2];
    for _ in 0..n {
        let om = PhasePoint::random(ws.phase_dim(), &mut rng);
        let s = s_t_limit(&ws, 0.0, &om, 2, 0.05).unwrap();
        // the vertically averaged part is the same for every realisation
        assert!(s.horizontal_part().max_abs_diff(&first.horizontal_part()) < 1e-14);
        for (j, (x, z)) in pts.iter().enumerate() {
            v3_mean[j] += vertical_component(&s, &basis, *x, *z) / n as f64;
        }
        sq += s.sub(&s.horizontal_part()).norm_sqr();
        mean.axpy(C64::new(1.0 / n as f64, 0.0), &s);
    }
    let spread = (sq / n as f64).sqrt();
    let fluct = mean.sub(&mean.horizontal_part()).norm();
    assert!(fluct < 3.0 * spread / (n as f64).sqrt(), "{fluct} vs {spread}");
    for v in v3_mean {
        assert!(v.norm() < 3.0 * spread / (n as f64).sqrt());
    }
}
