use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use tfpaint_core::eval::{make_test_signal, SignalKind};
use tfpaint_core::pipeline::ColumnMask;
use tfpaint_core::solver::{gcpa_inner, InpaintProblem};
use tfpaint_core::{
    CMatrix, Complex64, IfEstimator, IpctvOperator, SolverConfig, Stft, StftConfig, Thresholder,
};

const SUITE_LEN: usize = 79872;
// gap of 6 columns plus 4 padding columns each side, rounded to whole frames
const SEGMENT_COLS: usize = 16;

fn signal(len: usize) -> Vec<f64> {
    let kind = SignalKind::random_multitone(3, 5);
    let mut x = make_test_signal(&kind, 5.0, 16000).unwrap();
    x.truncate(len);
    x
}

fn stft_kernels(c: &mut Criterion) {
    let cfg = StftConfig::standard(SUITE_LEN).unwrap();
    let stft = Stft::tight_hann(cfg).unwrap();
    let x = signal(SUITE_LEN);
    let spec = stft.analyze(&x).unwrap();
    let mut coeffs = CMatrix::zeros(cfg.channels, cfg.n_frames());
    let mut out = vec![0.0; SUITE_LEN];

    let mut g = c.benchmark_group("stft_5s");
    g.sample_size(20);
    g.bench_function("analyze", |b| {
        b.iter(|| stft.analyze_into(black_box(&x), &mut coeffs))
    });
    g.bench_function("adjoint", |b| {
        b.iter(|| stft.adjoint_into(black_box(spec.data()), &mut out))
    });
    g.bench_function("synthesize", |b| {
        b.iter(|| stft.synthesize(black_box(&spec)).unwrap())
    });
    g.finish();
}

fn segment_problem() -> (InpaintProblem, IfEstimator) {
    let len = SEGMENT_COLS * 512;
    let cfg = StftConfig::standard(len).unwrap();
    let stft = Stft::tight_hann(cfg).unwrap();
    let x = signal(len);
    let mut observed = stft.analyze(&x).unwrap().into_data();
    let missing: Vec<usize> = (5..11).collect();
    for &n in &missing {
        observed.col_mut(n).fill(Complex64::default());
    }
    let mask = ColumnMask::new(SEGMENT_COLS, missing).unwrap();
    let problem = InpaintProblem::new(stft, mask, observed).unwrap();
    (problem, IfEstimator::hann(cfg).unwrap())
}

fn segment_kernels(c: &mut Criterion) {
    let (problem, estimator) = segment_problem();
    let cfg = *problem.stft().config();
    let x = problem.initial_state().x;
    let omega = estimator.estimate(&x).unwrap();
    let op = IpctvOperator::new(problem.stft().clone(), &omega).unwrap();
    let (m, n) = op.variation_shape();
    let mut work = CMatrix::zeros(cfg.channels, cfg.n_frames());
    let mut z = CMatrix::zeros(m, n);
    let mut back = vec![0.0; cfg.signal_len];
    op.apply_into(&x, &mut work, &mut z);

    let mut g = c.benchmark_group("segment");
    g.bench_function("if_estimate", |b| {
        b.iter(|| estimator.estimate(black_box(&x)).unwrap())
    });
    g.bench_function("ipctv_apply", |b| {
        b.iter(|| op.apply_into(black_box(&x), &mut work, &mut z))
    });
    g.bench_function("ipctv_adjoint", |b| {
        b.iter(|| op.adjoint_into(black_box(&z), &mut work, &mut back))
    });
    let soft = Thresholder::soft(1e-2).unwrap();
    let mut scratch = CMatrix::zeros(m, n);
    g.bench_function("soft_dual_step", |b| {
        b.iter_batched(
            || z.clone(),
            |mut q| soft.conjugate_step_inplace(&mut q, 0.25, &mut scratch),
            BatchSize::SmallInput,
        )
    });
    let solver = SolverConfig {
        inner_iters: 10,
        ..SolverConfig::default()
    };
    g.bench_function("gcpa_10_iterations", |b| {
        b.iter_batched(
            || problem.initial_state(),
            |state| gcpa_inner(&problem, state, &omega, &solver, 0, None).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, stft_kernels, segment_kernels);
criterion_main!(benches);
