use std::f64::consts::PI;

use ekman::forcing::*;
use ekman::quad::adaptive;
use ekman::TorusGeometry;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_atom() -> WindStress {
    WindStress::new(
        TorusGeometry::new(1.0, 1.2247, 0.8173).unwrap(),
        vec![ForcingMode {
            kh: [1, 0],
            atoms: vec![
                FrequencyAtom { mu: 0.3, coeff: [C64::new(0.5, 0.0), C64::new(0.0, 0.2)] },
                FrequencyAtom { mu: 2f64.sqrt(), coeff: [C64::new(0.0, 0.25), C64::new(0.1, 0.0)] },
            ],
        }],
        vec![],
    )
    .unwrap()
}

fn with_mean() -> WindStress {
    let mut modes = two_atom().modes;
    modes.push(ForcingMode { kh: [0, 1], atoms: vec![FrequencyAtom { mu: 0.0, coeff: [C64::new(0.3, -0.1), C64::new(0.2, 0.0)] }] });
    WindStress::new(two_atom().geometry, modes, vec![]).unwrap()
}

#[test]
fn single_atom_density_integrates_to_its_amplitude() {
    let g = TorusGeometry::unit();
    let phi = C64::new(0.3, 0.4);
    let ws = WindStress::new(g, vec![ForcingMode { kh: [0, 1], atoms: vec![FrequencyAtom { mu: 0.7, coeff: [phi, C64::new(0.0, 0.0)] }] }], vec![]).unwrap();
    let om = PhasePoint::zero(ws.phase_dim());
    for alpha in [0.5, 0.05] {
        // λ = 0.7 + α tan u maps the line onto (−π/2, π/2)
        let r = adaptive(
            |u| {
                let lam = 0.7 + alpha * u.tan();
                let f = spectral_density_falpha(&ws, lam, alpha, [0, 1], &om).unwrap();
                C64::new(f[0].norm() * alpha / u.cos().powi(2), 0.0)
            },
            -PI / 2.0,
            PI / 2.0,
            1e-13,
            1e-11,
            2000,
        )
        .unwrap();
        assert!((r.value.re - phi.norm()).abs() < 1e-8, "{}", r.value.re);
        let peak = spectral_density_falpha(&ws, 0.7, alpha, [0, 1], &om).unwrap()[0];
        assert!((peak - phi / (PI * alpha)).norm() < 1e-14);
    }
}

#[test]
fn counterexample_density_blows_up_at_its_atoms() {
    let g = TorusGeometry::unit();
    let decay = 0.8;
    let ce = build_h2_counterexample(g, 10, decay).unwrap();
    // zero phases make every Lorentzian term positive
    let om = PhasePoint::zero(ce.phase_dim());
    let mu5 = 1.0 - 1.0 / 5.0;
    let phi5 = decay.powi(5);
    for alpha in [1e-1, 1e-2, 1e-3] {
        // the density without the 1/2π prefactor, the Lorentzian sum itself
        let f = spectral_density_falpha(&ce, mu5, alpha, [1, 0], &om).unwrap()[0].norm() * 2.0 * PI;
        assert!(f >= 2.0 * phi5 / alpha, "{alpha}: {f}");
    }
    let h1 = check_h1(&ce, &[1e-1, 1e-2, 1e-3], &om).unwrap();
    let sum: f64 = (2..=10).map(|n| decay.powi(n)).sum();
    assert!((h1.closed_form - sum).abs() < 1e-14);
    assert!(!check_h2(&ce, 0.2, &[1e-2], &om).unwrap().pass);
}

#[test]
fn sigma_alpha_error_decreases_with_alpha() {
    let ws = two_atom();
    let om = PhasePoint::random(ws.phase_dim(), &mut ChaCha8Rng::seed_from_u64(3));
    let x = [0.2, 0.7];
    let sups: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&alpha| {
            (0..=40)
                .map(|i| {
                    let tau = 10.0 * i as f64 / 40.0;
                    let (s, _) = reconstruct_sigma_alpha(&ws, alpha, 0.0, tau, x, &om).unwrap();
                    let e = sample_sigma(&ws, 0.0, tau, x, &om);
                    (s[0] - e[0]).hypot(s[1] - e[1])
                })
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(sups[0] > sups[1] && sups[1] > sups[2], "{sups:?}");
}

#[test]
fn ergodic_averages_converge_at_rate_one_over_theta() {
    let ws = two_atom();
    let om = PhasePoint::random(ws.phase_dim(), &mut ChaCha8Rng::seed_from_u64(4));
    let lam = 0.3;
    let limit = ergodic_limit(&ws, lam, [1, 0], &om);
    let thetas = [1e2, 1e3, 1e4];
    let errs: Vec<f64> = thetas
        .iter()
        .map(|&th| {
            (0..=20)
                .map(|i| {
                    let a = ergodic_average(&ws, lam, th * (1.0 + i as f64 / 20.0), [1, 0], &om);
                    (a[0] - limit[0]).norm() + (a[1] - limit[1]).norm()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let lx: Vec<f64> = thetas.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let slope = (ly[2] - ly[0]) / (lx[2] - lx[0]);
    assert!((slope + 1.0).abs() < 0.1, "{slope} {errs:?}");
}

#[test]
fn expectation_law_by_monte_carlo() {
    let ws = with_mean();
    let n = 4000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut acc = [C64::new(0.0, 0.0); 2];
    for _ in 0..n {
        let om = PhasePoint::random(ws.phase_dim(), &mut rng);
        let e = ergodic_limit(&ws, 0.3, [1, 0], &om);
        acc[0] += e[0];
        acc[1] += e[1];
        // the λ = 0 average of every realization is the deterministic mean
        let e0 = ergodic_limit(&ws, 0.0, [0, 1], &om);
        assert_eq!(e0, [C64::new(0.3, -0.1), C64::new(0.2, 0.0)]);
    }
    // |φ| bounds each draw, so the MC standard error is at most |φ|/√n
    let tol = [0.5, 0.2].map(|a: f64| 3.0 * a / (n as f64).sqrt());
    for c in 0..2 {
        assert!((acc[c] / n as f64).norm() < tol[c], "{c}: {}", (acc[c] / n as f64).norm());
    }
    // the mean part is exactly the μ = 0 atoms
    let mp = ws.mean_part();
    assert_eq!(mp.phase_dim(), ws.phase_dim());
    assert_eq!(mp.modes.iter().map(|m| m.atoms.len()).sum::<usize>(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn stationarity(seed in 0u64..100_000, tau in -50.0f64..50.0, s in -50.0f64..50.0, x1 in 0.0f64..1.0, x2 in 0.0f64..1.3) {
        let ws = with_mean();
        let om = PhasePoint::random(ws.phase_dim(), &mut ChaCha8Rng::seed_from_u64(seed));
        let a = sample_sigma(&ws, 0.4, tau + s, [x1, x2], &om);
        let b = sample_sigma(&ws, 0.4, tau, [x1, x2], &ws.shift(&om, s));
        prop_assert!((a[0] - b[0]).abs() < 1e-11 && (a[1] - b[1]).abs() < 1e-11);
    }

    #[test]
    fn ergodic_shift_identity(seed in 0u64..100_000, s in -100.0f64..100.0, pick in 0usize..3) {
        let ws = with_mean();
        let om = PhasePoint::random(ws.phase_dim(), &mut ChaCha8Rng::seed_from_u64(seed));
        let (lam, kh) = [(0.3, [1, 0]), (2f64.sqrt(), [1, 0]), (-0.3, [-1, 0])][pick];
        let e = ergodic_limit(&ws, lam, kh, &om);
        let sh = ergodic_limit(&ws, lam, kh, &ws.shift(&om, s));
        let rot = C64::from_polar(1.0, lam * s);
        prop_assert!((sh[0] - e[0] * rot).norm() < 1e-12 && (sh[1] - e[1] * rot).norm() < 1e-12);
    }

    #[test]
    fn samples_are_real_and_bounded(seed in 0u64..100_000) {
        let ws = with_mean();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let om = PhasePoint::random(ws.phase_dim(), &mut rng);
        let v = sample_sigma(&ws, 0.0, rng.gen::<f64>() * 100.0, [rng.gen(), rng.gen()], &om);
        prop_assert!(v[0].hypot(v[1]) <= ws.amplitude_bound());
    }
}
