use criterion::{black_box, criterion_group, criterion_main, Criterion};
use fracgel::corpus::{bump, log_profile, radial_lattice};
use fracgel::energy::energy;
use fracgel::extension::{ExtensionField, PoissonKernel};
use fracgel::nonlocal::{calibrate_singular_constant, frac_laplacian, PvQuadratureScheme};
use fracgel::regularity::{default_scales, detect_singular};
use fracgel::Params;

fn flap(c: &mut Criterion) {
    let p = Params::new(1, 0.5).unwrap();
    let u = bump(&p).unwrap();
    let scheme = PvQuadratureScheme::for_field(&u);
    c.bench_function("frac_laplacian/bump_1d", |b| {
        b.iter(|| frac_laplacian(&u, black_box(&[0.3]), &p, &scheme).unwrap())
    });
    let p2 = Params::new(2, 0.3).unwrap();
    let u2 = bump(&p2).unwrap();
    let scheme2 = PvQuadratureScheme::for_field(&u2);
    c.bench_function("frac_laplacian/bump_2d", |b| {
        b.iter(|| frac_laplacian(&u2, black_box(&[0.3, 0.1]), &p2, &scheme2).unwrap())
    });
}

fn extension(c: &mut Criterion) {
    let p = Params::new(1, 0.25).unwrap();
    let u = bump(&p).unwrap();
    let k = PoissonKernel::new(&p).unwrap();
    c.bench_function("extend_at/bump_1d", |b| b.iter(|| k.extend_at(&u, black_box(&[0.2]), 0.1)));
}

fn energy_bench(c: &mut Criterion) {
    let p = Params::new(1, 0.5).unwrap();
    let u = bump(&p).unwrap();
    let ext = ExtensionField::kernel_only(&u, &p).unwrap();
    let mut g = c.benchmark_group("energy");
    g.sample_size(10);
    g.bench_function("bump_1d_r1", |b| b.iter(|| energy(&u, &ext, black_box(&[0.0]), 1.0, &p).unwrap()));
    g.finish();
}

fn golden(c: &mut Criterion) {
    let p = Params::new(1, 0.25).unwrap();
    let mut g = c.benchmark_group("golden");
    g.sample_size(10);
    g.bench_function("calibrate", |b| b.iter(|| calibrate_singular_constant(black_box(&p)).unwrap()));
    let cal = calibrate_singular_constant(&p).unwrap();
    let u = log_profile(&p, cal.lambda.ln(), radial_lattice(1)).unwrap();
    let scales = default_scales(&u);
    g.bench_function("detect", |b| b.iter(|| detect_singular(&u, 2.0, 1.8, &scales, &p).unwrap()));
    g.finish();
}

criterion_group!(kernels, flap, extension, energy_bench, golden);
criterion_main!(kernels);
