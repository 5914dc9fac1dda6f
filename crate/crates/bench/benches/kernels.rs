use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use ekman::banded::BandedMatrix;
use ekman::envelope::{EnvelopeConfig, EnvelopeSolver};
use ekman::forcing::{ForcingMode, FrequencyAtom};
use ekman::layers::{top_layer_uh, LayerParams};
use ekman::resonance::{TriadTable, DEFAULT_RESONANCE_TOL};
use ekman::{PhasePoint, SpectralField, TorusGeometry, WindStress};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn geom() -> TorusGeometry {
    TorusGeometry::new(1.0, 1.2247, 0.8173).unwrap()
}

fn field(n: u32, seed: u64) -> SpectralField {
    SpectralField::random_real(geom(), n, &mut ChaCha8Rng::seed_from_u64(seed), |k| 1.0 / (1.0 + k.max_abs() as f64).powi(2))
}

fn wind() -> WindStress {
    WindStress::new(
        geom(),
        vec![
            ForcingMode { kh: [1, 0], atoms: vec![FrequencyAtom { mu: 0.35, coeff: [C64::new(0.3, 0.2), C64::new(-0.1, 0.4)] }] },
            ForcingMode { kh: [0, 1], atoms: vec![FrequencyAtom { mu: -1.7, coeff: [C64::new(0.0, 0.25), C64::new(0.15, 0.0)] }] },
        ],
        vec![],
    )
    .unwrap()
}

fn triads(c: &mut Criterion) {
    let mut g = c.benchmark_group("triads");
    g.sample_size(10);
    g.bench_function("build_resonant_n3", |b| b.iter(|| TriadTable::build(&geom(), 3, 3, DEFAULT_RESONANCE_TOL, false).unwrap()));
    g.finish();

    for n in [2u32, 3] {
        let table = TriadTable::build(&geom(), n, n, DEFAULT_RESONANCE_TOL, false).unwrap();
        let (w1, w2) = (field(n, 1), field(n, 2));
        c.bench_function(&format!("qbar_apply_n{n}"), |b| b.iter(|| table.qbar_apply(black_box(&w1), black_box(&w2)).unwrap()));
    }
}

fn envelope(c: &mut Criterion) {
    let mut cfg = EnvelopeConfig::new(0.05, 0.05, 4.0, 2, 0.01, 0.1);
    cfg.output_every = 10;
    let solver = EnvelopeSolver::new(geom(), cfg).unwrap();
    let ws = wind();
    let u0 = field(2, 3);
    let om = PhasePoint::zero(ws.phase_dim());
    c.bench_function("envelope_10_steps_n2", |b| b.iter(|| solver.solve(black_box(&u0), &ws, &om).unwrap()));
}

fn banded(c: &mut Criterion) {
    let n = 512;
    let mut m = BandedMatrix::new(n, 2, 2);
    for i in 0..n {
        m.add(i, i, C64::new(4.0, 0.3));
        if i + 1 < n {
            m.add(i, i + 1, C64::new(-1.0, 0.1));
            m.add(i + 1, i, C64::new(-1.0, -0.1));
        }
        if i + 2 < n {
            m.add(i, i + 2, C64::new(0.2, 0.0));
            m.add(i + 2, i, C64::new(0.2, 0.0));
        }
    }
    let rhs: Vec<C64> = (0..n).map(|i| C64::new((i as f64).sin(), 0.0)).collect();
    c.bench_function("banded_factor_512", |b| b.iter_batched(|| m.clone(), |m| m.factor().unwrap(), BatchSize::SmallInput));
    let lu = m.clone().factor().unwrap();
    c.bench_function("banded_solve_512", |b| {
        b.iter_batched(
            || rhs.clone(),
            |mut x| {
                lu.solve_in_place(&mut x);
                x
            },
            BatchSize::SmallInput,
        )
    });
}

fn layer(c: &mut Criterion) {
    let ws = wind();
    let p = LayerParams::new(1e-2, 1e-2, 1.0, 1e-3).unwrap();
    let om = PhasePoint::zero(ws.phase_dim());
    c.bench_function("top_layer_profile_64", |b| {
        b.iter(|| (0..64).map(|i| top_layer_uh(&ws, &p, 0.0, 0.7, [0.2, 0.4], 0.1 * i as f64, &om)[0]).sum::<C64>())
    });
}

criterion_group!(benches, triads, envelope, banded, layer);
criterion_main!(benches);
