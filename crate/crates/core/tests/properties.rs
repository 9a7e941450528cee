use approx::assert_relative_eq;
use proptest::prelude::*;
use tfpaint_core::pipeline::apply_mask;
use tfpaint_core::prox::{project_feasible, prox_conjugate, soft_threshold};
use tfpaint_core::{CMatrix, ColumnMask, Complex64, Spectrogram, Stft, StftConfig};

fn cmatrix(rows: usize, cols: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), rows * cols).prop_map(move |v| {
        CMatrix::from_col_major(
            rows,
            cols,
            v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect(),
        )
        .unwrap()
    })
}

proptest! {
    #[test]
    fn soft_threshold_is_firmly_nonexpansive(
        x in cmatrix(3, 4),
        y in cmatrix(3, 4),
        lambda in 0.0f64..3.0,
    ) {
        let px = soft_threshold(&x, lambda).unwrap();
        let py = soft_threshold(&y, lambda).unwrap();
        let d = px.sub(&py);
        let lhs = d.norm_fro().powi(2);
        let rhs = d.inner_re(&x.sub(&y));
        prop_assert!(lhs <= rhs + 1e-9);
    }

    #[test]
    fn soft_threshold_never_grows_magnitude(x in cmatrix(4, 4), lambda in 0.0f64..3.0) {
        let p = soft_threshold(&x, lambda).unwrap();
        for (a, b) in p.as_slice().iter().zip(x.as_slice()) {
            prop_assert!(a.norm() <= b.norm() + 1e-12);
        }
    }

    #[test]
    fn moreau_decomposition(x in cmatrix(2, 5), lambda in 0.01f64..2.0, eta in 0.1f64..5.0) {
        // x = prox_{eta f*}(x) + eta prox_{f / eta}(x / eta)
        let soft = |v: &CMatrix, s: f64| soft_threshold(v, lambda * s);
        let dual = prox_conjugate(soft, eta, &x).unwrap();
        let primal = soft_threshold(&x.scaled(1.0 / eta), lambda / eta).unwrap().scaled(eta);
        let mut sum = dual.clone();
        sum.axpy(1.0, &primal);
        prop_assert!(sum.sub(&x).norm_fro() <= 1e-12 * (1.0 + x.norm_fro()));
        // the conjugate of an l1 penalty is the indicator of an l_inf ball
        prop_assert!(dual.max_abs() <= lambda + 1e-12);
    }

    #[test]
    fn mask_application_is_idempotent(
        zero in prop::collection::vec(0usize..12, 0..12),
        seed in 0u64..1000,
    ) {
        let cfg = StftConfig::new(16, 4, 16, 48).unwrap();
        let stft = Stft::tight_hann(cfg).unwrap();
        let x: Vec<f64> = (0..48).map(|i| ((i as u64 * 7919 + seed) % 97) as f64 / 97.0 - 0.5).collect();
        let spec = stft.analyze(&x).unwrap();
        let mask = ColumnMask::new(12, zero).unwrap();
        let once = apply_mask(&spec, &mask).unwrap();
        let twice = apply_mask(&once, &mask).unwrap();
        prop_assert_eq!(&once, &twice);
        for c in mask.reliable_cols() {
            prop_assert_eq!(once.data().col(c), spec.data().col(c));
        }
    }

    #[test]
    fn projection_is_idempotent(x in cmatrix(3, 6), obs in cmatrix(3, 6), zero in prop::collection::vec(0usize..6, 0..6)) {
        let mask = ColumnMask::new(6, zero).unwrap();
        let p = project_feasible(&x, &mask, &obs).unwrap();
        prop_assert_eq!(&project_feasible(&p, &mask, &obs).unwrap(), &p);
    }

    #[test]
    fn analysis_adjoint_identity(seed in 0u64..10_000, hop_pow in 0u32..3) {
        let hop = 2usize << hop_pow;
        let cfg = StftConfig::new(16, hop, 16, 64).unwrap();
        let stft = Stft::tight_hann(cfg).unwrap();
        let (m, n) = cfg.shape();
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let x: Vec<f64> = (0..64).map(|_| next()).collect();
        let y = CMatrix::from_fn(m, n, |_, _| Complex64::new(next(), next()));
        let lhs = stft.analyze(&x).unwrap().data().inner_re(&y);
        let rhs: f64 = x.iter().zip(stft.adjoint(&y).unwrap()).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12, max_relative = 1e-10);
    }
}

#[test]
fn spectrogram_columns_keep_geometry() {
    let cfg = StftConfig::new(16, 4, 16, 64).unwrap();
    let spec = Spectrogram::zeros(cfg);
    let part = spec.columns(4, 8).unwrap();
    assert_eq!(part.cols(), 8);
    assert_eq!(part.config().signal_len, 32);
}
