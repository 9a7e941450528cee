//! Instantaneous-frequency estimation and the phase-corrected total variation
//! (iPCTV) prior: `|| D R_omega A x ||_1`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::CMatrix;
use crate::stft::{make_hann, make_hann_derivative, Spectrogram, Stft, StftConfig, Window};

/// Coefficients below this fraction of the largest magnitude get zero IF.
pub const DEFAULT_MAG_FLOOR: f64 = 1e-10;

/// Relative instantaneous frequency per coefficient, in frequency bins.
#[derive(Debug, Clone, PartialEq)]
pub struct IfMatrix {
    rows: usize,
    cols: usize,
    omega: Vec<f64>,
}

impl IfMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            omega: vec![0.0; rows * cols],
        }
    }

    /// Column-major values; all must be finite.
    pub fn from_col_major(rows: usize, cols: usize, omega: Vec<f64>) -> Result<Self> {
        if omega.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{} values cannot fill a {rows}x{cols} IF matrix",
                omega.len()
            )));
        }
        if omega.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("instantaneous frequency".into()));
        }
        Ok(Self { rows, cols, omega })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.omega[col * self.rows + row]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.omega
    }
}

/// Pair of analysis operators (window and its time derivative) used to
/// estimate the instantaneous frequency of a signal.
#[derive(Debug, Clone)]
pub struct IfEstimator {
    plain: Stft,
    derivative: Stft,
    mag_floor: f64,
}

impl IfEstimator {
    pub fn new(cfg: StftConfig, g: &Window, g_prime: &Window, mag_floor: f64) -> Result<Self> {
        if !(mag_floor >= 0.0) {
            return Err(Error::invalid(format!(
                "mag_floor {mag_floor} must be >= 0"
            )));
        }
        Ok(Self {
            plain: Stft::new(cfg, g)?,
            derivative: Stft::new(cfg, g_prime)?,
            mag_floor,
        })
    }

    /// Hann window and its analytic derivative. The ratio of the two
    /// transforms is invariant to a common scaling, so the tight-frame
    /// normalization is not needed here.
    pub fn hann(cfg: StftConfig) -> Result<Self> {
        Self::new(
            cfg,
            &make_hann(cfg.window_len)?,
            &make_hann_derivative(cfg.window_len)?,
            DEFAULT_MAG_FLOOR,
        )
    }

    pub fn with_signal_len(&self, signal_len: usize) -> Result<Self> {
        Ok(Self {
            plain: self.plain.with_signal_len(signal_len)?,
            derivative: self.derivative.with_signal_len(signal_len)?,
            mag_floor: self.mag_floor,
        })
    }

    pub fn config(&self) -> &StftConfig {
        self.plain.config()
    }

    /// `omega = -Im(A_{g'} x / A_g x) * M / (2 pi)`, guarded where the plain
    /// coefficient is negligible.
    pub fn estimate(&self, x: &[f64]) -> Result<IfMatrix> {
        let plain = self.plain.analyze(x)?;
        let deriv = self.derivative.analyze(x)?;
        let scale = self.plain.config().channels as f64 / (2.0 * PI);
        let floor = self.mag_floor * plain.data().max_abs();
        let (rows, cols) = plain.data().shape();
        let omega = plain
            .data()
            .as_slice()
            .iter()
            .zip(deriv.data().as_slice())
            .map(|(p, d)| {
                let mag = p.norm();
                if mag == 0.0 || mag < floor {
                    0.0
                } else {
                    let w = -(d / p).im * scale;
                    if w.is_finite() {
                        w
                    } else {
                        0.0
                    }
                }
            })
            .collect();
        Ok(IfMatrix { rows, cols, omega })
    }
}

pub fn estimate_if(
    x: &[f64],
    g: &Window,
    g_prime: &Window,
    cfg: &StftConfig,
    mag_floor: f64,
) -> Result<IfMatrix> {
    IfEstimator::new(*cfg, g, g_prime, mag_floor)?.estimate(x)
}

/// Unit-modulus rotation factors `exp(-2 pi i a sum_{t<n} omega[m, t] / M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCorrection {
    factors: CMatrix,
}

impl PhaseCorrection {
    pub fn new(omega: &IfMatrix, hop: usize, channels: usize) -> Self {
        let (rows, cols) = omega.shape();
        let step = -2.0 * PI * hop as f64 / channels as f64;
        let mut factors = CMatrix::zeros(rows, cols);
        let mut acc = vec![0.0; rows];
        for n in 0..cols {
            let col = factors.col_mut(n);
            for (m, f) in col.iter_mut().enumerate() {
                *f = Complex64::from_polar(1.0, step * acc[m]);
            }
            for (m, a) in acc.iter_mut().enumerate() {
                *a += omega.get(m, n);
            }
        }
        Self { factors }
    }

    pub fn identity(rows: usize, cols: usize) -> Self {
        Self {
            factors: CMatrix::from_fn(rows, cols, |_, _| Complex64::new(1.0, 0.0)),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.factors.shape()
    }

    pub fn factors(&self) -> &CMatrix {
        &self.factors
    }

    pub fn apply_inplace(&self, x: &mut CMatrix) {
        debug_assert_eq!(x.shape(), self.factors.shape());
        for (z, f) in x.as_mut_slice().iter_mut().zip(self.factors.as_slice()) {
            *z *= f;
        }
    }

    pub fn apply_adjoint_inplace(&self, x: &mut CMatrix) {
        debug_assert_eq!(x.shape(), self.factors.shape());
        for (z, f) in x.as_mut_slice().iter_mut().zip(self.factors.as_slice()) {
            *z *= f.conj();
        }
    }

    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        self.factors.ensure_same_shape(x)?;
        let mut out = x.clone();
        self.apply_inplace(&mut out);
        Ok(out)
    }

    pub fn apply_adjoint(&self, x: &CMatrix) -> Result<CMatrix> {
        self.factors.ensure_same_shape(x)?;
        let mut out = x.clone();
        self.apply_adjoint_inplace(&mut out);
        Ok(out)
    }
}

fn check_if_shape(spec: &Spectrogram, omega: &IfMatrix) -> Result<()> {
    let (r, c) = omega.shape();
    spec.data().ensure_shape(r, c)
}

pub fn phase_correct(spec: &Spectrogram, omega: &IfMatrix) -> Result<Spectrogram> {
    check_if_shape(spec, omega)?;
    let cfg = spec.config();
    let rot = PhaseCorrection::new(omega, cfg.hop, cfg.channels);
    Spectrogram::new(rot.apply(spec.data())?, *cfg)
}

pub fn phase_correct_adjoint(spec: &Spectrogram, omega: &IfMatrix) -> Result<Spectrogram> {
    check_if_shape(spec, omega)?;
    let cfg = spec.config();
    let rot = PhaseCorrection::new(omega, cfg.hop, cfg.channels);
    Spectrogram::new(rot.apply_adjoint(spec.data())?, *cfg)
}

/// `out[m, n] = x[m, n] - x[m, n + 1]`, an `M x (N - 1)` matrix.
pub fn time_variation(x: &CMatrix) -> Result<CMatrix> {
    if x.cols() < 2 {
        return Err(Error::invalid(format!(
            "time variation needs at least 2 columns, got {}",
            x.cols()
        )));
    }
    let mut out = CMatrix::zeros(x.rows(), x.cols() - 1);
    time_variation_into(x, &mut out);
    Ok(out)
}

pub fn time_variation_into(x: &CMatrix, out: &mut CMatrix) {
    debug_assert_eq!(out.shape(), (x.rows(), x.cols() - 1));
    for n in 0..out.cols() {
        let (a, b) = (x.col(n), x.col(n + 1));
        for ((o, p), q) in out.col_mut(n).iter_mut().zip(a).zip(b) {
            *o = p - q;
        }
    }
}

/// Adjoint of [`time_variation`]: maps `M x (N - 1)` back to `M x N`.
pub fn time_variation_adjoint(y: &CMatrix) -> Result<CMatrix> {
    if y.cols() == 0 {
        return Err(Error::invalid("variation matrix has no columns"));
    }
    let mut out = CMatrix::zeros(y.rows(), y.cols() + 1);
    time_variation_adjoint_into(y, &mut out);
    Ok(out)
}

pub fn time_variation_adjoint_into(y: &CMatrix, out: &mut CMatrix) {
    let k = y.cols();
    debug_assert_eq!(out.shape(), (y.rows(), k + 1));
    for n in 0..=k {
        let col = out.col_mut(n);
        if n < k {
            col.copy_from_slice(y.col(n));
        } else {
            col.fill(Complex64::default());
        }
        if n > 0 {
            for (o, p) in col.iter_mut().zip(y.col(n - 1)) {
                *o -= p;
            }
        }
    }
}

/// The composite linear map `x -> D R_omega A x` and its adjoint.
#[derive(Debug, Clone)]
pub struct IpctvOperator {
    stft: Stft,
    rotation: PhaseCorrection,
}

impl IpctvOperator {
    pub fn new(stft: Stft, omega: &IfMatrix) -> Result<Self> {
        let cfg = *stft.config();
        if cfg.n_frames() < 2 {
            return Err(Error::invalid("iPCTV needs at least 2 frames"));
        }
        if omega.shape() != cfg.shape() {
            return Err(Error::shape(cfg.shape(), omega.shape()));
        }
        Ok(Self {
            rotation: PhaseCorrection::new(omega, cfg.hop, cfg.channels),
            stft,
        })
    }

    pub fn stft(&self) -> &Stft {
        &self.stft
    }

    pub fn rotation(&self) -> &PhaseCorrection {
        &self.rotation
    }

    pub fn variation_shape(&self) -> (usize, usize) {
        let (m, n) = self.stft.config().shape();
        (m, n - 1)
    }

    /// `out = D R A x`; `work` is an `M x N` buffer.
    pub fn apply_into(&self, x: &[f64], work: &mut CMatrix, out: &mut CMatrix) {
        self.stft.analyze_into(x, work);
        let f = &self.rotation.factors;
        for n in 0..out.cols() {
            let (a, fa) = (work.col(n), f.col(n));
            let (b, fb) = (work.col(n + 1), f.col(n + 1));
            for (k, o) in out.col_mut(n).iter_mut().enumerate() {
                *o = a[k] * fa[k] - b[k] * fb[k];
            }
        }
    }

    /// `out = A* R* D* z`; `work` is an `M x N` buffer.
    pub fn adjoint_into(&self, z: &CMatrix, work: &mut CMatrix, out: &mut [f64]) {
        let f = &self.rotation.factors;
        let k = z.cols();
        for n in 0..=k {
            let fc = f.col(n);
            let col = work.col_mut(n);
            if n == 0 {
                for ((o, p), g) in col.iter_mut().zip(z.col(0)).zip(fc) {
                    *o = p * g.conj();
                }
            } else if n == k {
                for ((o, q), g) in col.iter_mut().zip(z.col(k - 1)).zip(fc) {
                    *o = -q * g.conj();
                }
            } else {
                for (((o, p), q), g) in col.iter_mut().zip(z.col(n)).zip(z.col(n - 1)).zip(fc) {
                    *o = (p - q) * g.conj();
                }
            }
        }
        self.stft.adjoint_into(work, out);
    }

    pub fn apply(&self, x: &[f64]) -> Result<CMatrix> {
        if x.len() != self.stft.config().signal_len {
            return Err(Error::invalid("signal length does not match operator"));
        }
        let (m, n) = self.stft.config().shape();
        let mut work = CMatrix::zeros(m, n);
        let mut out = CMatrix::zeros(m, n - 1);
        self.apply_into(x, &mut work, &mut out);
        Ok(out)
    }

    pub fn adjoint(&self, z: &CMatrix) -> Result<Vec<f64>> {
        let (m, k) = self.variation_shape();
        z.ensure_shape(m, k)?;
        let mut work = CMatrix::zeros(m, k + 1);
        let mut out = vec![0.0; self.stft.config().signal_len];
        self.adjoint_into(z, &mut work, &mut out);
        Ok(out)
    }
}

/// `|| D R_omega A_g x ||_1` (sum of moduli).
pub fn ipctv_value(x: &[f64], omega: &IfMatrix, g: &Window, cfg: &StftConfig) -> Result<f64> {
    let op = IpctvOperator::new(Stft::new(*cfg, g)?, omega)?;
    Ok(op.apply(x)?.norm_l1())
}
