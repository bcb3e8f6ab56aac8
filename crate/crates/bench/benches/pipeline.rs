use arraysep::doa::{
    music_locate, music_locate_covariance, music_spectrum, noise_subspace, spatial_covariance, MusicConfig, MusicGrid,
};
use arraysep::geometry::mixing_matrix;
use arraysep::iva::{auxiva_iss, DEFAULT_VARIANCE_FLOOR};
use arraysep::losses::{spatial_loss, SpatialLossMode};
use arraysep::sim::{simulate_farfield, speech_like, Scenario};
use arraysep::stft::stft;
use arraysep::{
    ArrayGeometry, Complex64, DemixingSystem, Direction, ProjectionReference, SourceVarianceModel, StftConfig, TimeSignal,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FS: f64 = 16000.0;

fn scenario(mics: usize, sources: usize, seconds: f64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let len = (seconds * FS) as usize;
    let dry = (0..sources).map(|_| speech_like(len, FS, &mut rng)).collect();
    Scenario {
        geometry: ArrayGeometry::circular(mics, 0.0425, false).unwrap(),
        directions: (0..sources).map(|k| Direction::horizontal(0.4 + 2.1 * k as f64)).collect(),
        sources: TimeSignal::new(dry, FS).unwrap(),
        snr_db: Some(30.0),
        reverb: None,
        seed: 3,
    }
}

fn bench_stft(c: &mut Criterion) {
    let sc = scenario(6, 2, 4.0);
    let mut group = c.benchmark_group("stft");
    for n_fft in [512, 4096] {
        let cfg = StftConfig::new(n_fft, n_fft / 4);
        group.bench_with_input(BenchmarkId::from_parameter(n_fft), &cfg, |b, cfg| b.iter(|| stft(&sc.sources, cfg).unwrap()));
    }
    group.finish();
}

fn bench_iss(c: &mut Criterion) {
    let cfg = StftConfig::new(1024, 256);
    let mut group = c.benchmark_group("auxiva_iss");
    group.sample_size(10);
    for m in [2, 4] {
        let sim = simulate_farfield(&scenario(m, m, 4.0), &cfg).unwrap();
        let model = SourceVarianceModel::GaussSpherical { floor: DEFAULT_VARIANCE_FLOOR };
        group.bench_with_input(BenchmarkId::new("5 sweeps", m), &sim.mixture_spec, |b, spec| {
            b.iter(|| auxiva_iss(spec, 5, &model, ProjectionReference::Channel(0)).unwrap())
        });
    }
    group.finish();
}

fn bench_music(c: &mut Criterion) {
    let cfg = StftConfig::new(512, 128);
    let sc = scenario(6, 2, 1.0);
    let sim = simulate_farfield(&sc, &cfg).unwrap();
    let spec = &sim.mixture_spec;
    let music = MusicConfig::default();
    let cov = spatial_covariance(spec, 0..15).unwrap();
    let sub = noise_subspace(&cov, 2).unwrap();
    let grid: Vec<Direction> = (0..360).map(|d| Direction::horizontal((d as f64).to_radians())).collect();
    let mut group = c.benchmark_group("music");
    group.bench_function("spectrum 360 directions", |b| b.iter(|| music_spectrum(&sub, &sc.geometry, &grid).unwrap()));
    group.bench_function("locate 15-frame window", |b| {
        b.iter(|| music_locate_covariance(&cov, &sc.geometry, 2, &music).unwrap())
    });
    let sphere = MusicConfig { grid: MusicGrid::Sphere { points: 2000 }, ..MusicConfig::default() };
    group.bench_function("locate 15-frame window, sphere grid", |b| {
        b.iter(|| music_locate_covariance(&cov, &sc.geometry, 2, &sphere).unwrap())
    });
    group.bench_function("locate 1 s", |b| b.iter(|| music_locate(spec, &sc.geometry, 2, &music).unwrap()));
    group.finish();
}

fn bench_spatial_loss(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut group = c.benchmark_group("spatial_loss");
    for n in [2, 4, 6] {
        let geom = ArrayGeometry::circular(n, 0.0425, false).unwrap();
        let dirs: Vec<Direction> = (0..n).map(|k| Direction::horizontal(k as f64 * 1.0)).collect();
        let freqs: Vec<f64> = (0..2049).map(|k| k as f64 * FS / 4096.0).collect();
        let a = mixing_matrix(&geom, &dirs, &freqs).unwrap();
        let w = DemixingSystem {
            matrices: ndarray::Array3::from_shape_fn((freqs.len(), n, n), |_| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            }),
            reference: ProjectionReference::Channel(0),
        };
        group.bench_with_input(BenchmarkId::new("doa2", n), &n, |b, _| b.iter(|| spatial_loss(&w, &a, SpatialLossMode::Doa2).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_stft, bench_iss, bench_music, bench_spatial_loss);
criterion_main!(benches);
