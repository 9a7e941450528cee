//! Discrete Gabor transform (STFT) with frequency-invariant phase on circular
//! signals, built as a Parseval tight frame.
//!
//! Frame `n` places the window on samples `a*n .. a*n + window_len` (wrapping
//! around the end of the signal) and the complex exponential is referenced to
//! the absolute sample index, so
//!
//! ```text
//! X[m, n] = sum_l x[l] g[l - a n] exp(-2 pi i m l / M)
//! ```
//!
//! The signal length must be a multiple of both the hop and the channel count;
//! under that layout the frame operator is diagonal and the canonical tight
//! window makes analysis an isometry whose adjoint is its left inverse.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::matrix::CMatrix;

pub const DEFAULT_WINDOW_LEN: usize = 2048;
pub const DEFAULT_HOP: usize = 512;
pub const DEFAULT_CHANNELS: usize = 2048;

/// Imaginary residue tolerated by [`Stft::synthesize`], relative to the
/// largest real output sample (or absolute when that is below one).
pub const SYNTHESIS_RESIDUE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub channels: usize,
    pub signal_len: usize,
}

impl StftConfig {
    pub fn new(window_len: usize, hop: usize, channels: usize, signal_len: usize) -> Result<Self> {
        let cfg = Self {
            window_len,
            hop,
            channels,
            signal_len,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 2048-sample window, 75 % overlap, 2048 channels.
    pub fn standard(signal_len: usize) -> Result<Self> {
        Self::new(
            DEFAULT_WINDOW_LEN,
            DEFAULT_HOP,
            DEFAULT_CHANNELS,
            signal_len,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let Self {
            window_len,
            hop,
            channels,
            signal_len,
        } = *self;
        if window_len < 2 {
            return Err(Error::invalid(format!("window_len {window_len} < 2")));
        }
        if hop == 0 || hop > window_len {
            return Err(Error::invalid(format!(
                "hop {hop} must lie in 1..={window_len}"
            )));
        }
        if channels < window_len {
            return Err(Error::invalid(format!(
                "channels {channels} < window_len {window_len}"
            )));
        }
        if signal_len == 0 || signal_len % hop != 0 || signal_len % channels != 0 {
            return Err(Error::invalid(format!(
                "signal_len {signal_len} must be a positive multiple of hop {hop} and channels {channels}"
            )));
        }
        Ok(())
    }

    /// Same geometry, different signal length.
    pub fn with_signal_len(&self, signal_len: usize) -> Result<Self> {
        Self::new(self.window_len, self.hop, self.channels, signal_len)
    }

    #[inline]
    pub fn n_frames(&self) -> usize {
        self.signal_len / self.hop
    }

    /// Column granularity `M / a` at which the phase of a segment agrees with
    /// the phase of the full signal. Zero when the hop does not divide `M`.
    #[inline]
    pub fn frame_ratio(&self) -> usize {
        if self.channels % self.hop == 0 {
            self.channels / self.hop
        } else {
            0
        }
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.n_frames())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hann,
    HannDerivative,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    samples: Vec<f64>,
    kind: WindowKind,
}

impl Window {
    pub fn custom(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("window must be non-empty and finite"));
        }
        Ok(Self {
            samples,
            kind: WindowKind::Custom,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn kind(&self) -> WindowKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

impl std::ops::Index<usize> for Window {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.samples[i]
    }
}

/// Periodic Hann window `0.5 (1 - cos(2 pi k / len))`.
pub fn make_hann(window_len: usize) -> Result<Window> {
    if window_len < 2 {
        return Err(Error::invalid(format!("window_len {window_len} < 2")));
    }
    let n = window_len as f64;
    let samples = (0..window_len)
        .map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / n).cos()))
        .collect();
    Ok(Window {
        samples,
        kind: WindowKind::Hann,
    })
}

/// Per-sample time derivative of the continuous periodic Hann window.
pub fn make_hann_derivative(window_len: usize) -> Result<Window> {
    if window_len < 2 {
        return Err(Error::invalid(format!("window_len {window_len} < 2")));
    }
    let n = window_len as f64;
    let samples = (0..window_len)
        .map(|k| (PI / n) * (2.0 * PI * k as f64 / n).sin())
        .collect();
    Ok(Window {
        samples,
        kind: WindowKind::HannDerivative,
    })
}

/// Canonical tight window: `g[k] / sqrt(M * sum_j g[k + j a]^2)`.
pub fn tight_window(g: &Window, cfg: &StftConfig) -> Result<Window> {
    cfg.validate()?;
    if g.len() != cfg.window_len {
        return Err(Error::invalid(format!(
            "window has {} samples, config expects {}",
            g.len(),
            cfg.window_len
        )));
    }
    let a = cfg.hop;
    let mut diag = vec![0.0; a];
    for (k, v) in g.samples.iter().enumerate() {
        diag[k % a] += v * v;
    }
    for (r, d) in diag.iter_mut().enumerate() {
        *d *= cfg.channels as f64;
        if *d <= 0.0 {
            return Err(Error::DegenerateWindow {
                index: r,
                value: *d,
            });
        }
    }
    let samples = g
        .samples
        .iter()
        .enumerate()
        .map(|(k, v)| v / diag[k % a].sqrt())
        .collect();
    Ok(Window {
        samples,
        kind: WindowKind::Custom,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: CMatrix,
    config: StftConfig,
}

impl Spectrogram {
    pub fn new(data: CMatrix, config: StftConfig) -> Result<Self> {
        config.validate()?;
        let (m, n) = config.shape();
        data.ensure_shape(m, n)?;
        Ok(Self { data, config })
    }

    pub fn zeros(config: StftConfig) -> Self {
        let (m, n) = config.shape();
        Self {
            data: CMatrix::zeros(m, n),
            config,
        }
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut CMatrix {
        &mut self.data
    }

    pub fn into_data(self) -> CMatrix {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn cols(&self) -> usize {
        self.data.cols()
    }

    pub fn scaled(&self, factor: f64) -> Spectrogram {
        Spectrogram {
            data: self.data.scaled(factor),
            config: self.config,
        }
    }

    /// Sub-spectrogram of columns `start..start + len`, as the spectrogram of a
    /// signal of `len * hop` samples.
    pub fn columns(&self, start: usize, len: usize) -> Result<Spectrogram> {
        if start + len > self.cols() {
            return Err(Error::invalid(format!(
                "columns {start}..{} out of range for {} columns",
                start + len,
                self.cols()
            )));
        }
        let config = self.config.with_signal_len(len * self.config.hop)?;
        Spectrogram::new(self.data.columns(start, len), config)
    }
}

/// Analysis/synthesis pair for one frame geometry and window.
#[derive(Clone)]
pub struct Stft {
    cfg: StftConfig,
    window: Arc<[f64]>,
    fwd: Arc<dyn RealToComplex<f64>>,
    /// Real-output inverse, used by the adjoint.
    inv_real: Arc<dyn ComplexToReal<f64>>,
    /// Complex inverse, used by the strict synthesis check.
    inv: Arc<dyn Fft<f64>>,
    /// `exp(-2 pi i j / M)` for `j in 0..M`.
    twiddle: Arc<[Complex64]>,
}

impl fmt::Debug for Stft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stft")
            .field("cfg", &self.cfg)
            .finish_non_exhaustive()
    }
}

impl Stft {
    /// Uses `window` as given; pass a tight window for the Parseval property.
    pub fn new(cfg: StftConfig, window: &Window) -> Result<Self> {
        cfg.validate()?;
        if window.len() != cfg.window_len {
            return Err(Error::invalid(format!(
                "window has {} samples, config expects {}",
                window.len(),
                cfg.window_len
            )));
        }
        let m = cfg.channels;
        let mut planner = FftPlanner::new();
        let mut real_planner = RealFftPlanner::new();
        let twiddle: Vec<Complex64> = (0..m)
            .map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / m as f64))
            .collect();
        Ok(Self {
            cfg,
            window: window.samples().into(),
            fwd: real_planner.plan_fft_forward(m),
            inv_real: real_planner.plan_fft_inverse(m),
            inv: planner.plan_fft_inverse(m),
            twiddle: twiddle.into(),
        })
    }

    /// Tight frame built on the periodic Hann window.
    pub fn tight_hann(cfg: StftConfig) -> Result<Self> {
        let g = tight_window(&make_hann(cfg.window_len)?, &cfg)?;
        Self::new(cfg, &g)
    }

    /// Same window and plans for a different signal length.
    pub fn with_signal_len(&self, signal_len: usize) -> Result<Self> {
        let mut out = self.clone();
        out.cfg = self.cfg.with_signal_len(signal_len)?;
        Ok(out)
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn analyze(&self, x: &[f64]) -> Result<Spectrogram> {
        if x.len() != self.cfg.signal_len {
            return Err(Error::invalid(format!(
                "signal has {} samples, config expects {}",
                x.len(),
                self.cfg.signal_len
            )));
        }
        let (m, n) = self.cfg.shape();
        let mut out = CMatrix::zeros(m, n);
        self.analyze_into(x, &mut out);
        Ok(Spectrogram {
            data: out,
            config: self.cfg,
        })
    }

    /// Writes the analysis of `x` into `out` (shape `M x N`).
    pub fn analyze_into(&self, x: &[f64], out: &mut CMatrix) {
        let StftConfig {
            window_len: w,
            hop: a,
            channels: m,
            signal_len: l,
        } = self.cfg;
        debug_assert_eq!(x.len(), l);
        debug_assert_eq!(out.shape(), self.cfg.shape());
        let half = m / 2;
        let mut frame = vec![0.0; m];
        let mut spectrum = vec![Complex64::default(); half + 1];
        let mut scratch = vec![Complex64::default(); self.fwd.get_scratch_len()];
        for n in 0..self.cfg.n_frames() {
            let start = a * n;
            // Placing sample start + k at buffer index (start + k) mod M
            // references the phase to absolute time, so no twiddle is needed.
            if w < m {
                frame.fill(0.0);
            }
            let (mut src, mut dst) = (start, start % m);
            for &g in self.window.iter() {
                frame[dst] = x[src] * g;
                src += 1;
                if src == l {
                    src = 0;
                }
                dst += 1;
                if dst == m {
                    dst = 0;
                }
            }
            self.fwd
                .process_with_scratch(&mut frame, &mut spectrum, &mut scratch)
                .expect("buffer sizes fixed at construction");
            let buf = out.col_mut(n);
            buf[..=half].copy_from_slice(&spectrum);
            for j in half + 1..m {
                buf[j] = spectrum[m - j].conj();
            }
        }
    }

    /// Adjoint of analysis with respect to the real inner product: the real
    /// part of the synthesis sum. Accepts any complex matrix.
    pub fn adjoint(&self, coeffs: &CMatrix) -> Result<Vec<f64>> {
        let (m, n) = self.cfg.shape();
        coeffs.ensure_shape(m, n)?;
        let mut out = vec![0.0; self.cfg.signal_len];
        self.adjoint_into(coeffs, &mut out);
        Ok(out)
    }

    pub fn adjoint_into(&self, coeffs: &CMatrix, out: &mut [f64]) {
        let StftConfig {
            window_len: _,
            hop: a,
            channels: m,
            signal_len: l,
        } = self.cfg;
        debug_assert_eq!(coeffs.shape(), self.cfg.shape());
        debug_assert_eq!(out.len(), l);
        out.fill(0.0);
        let half = m / 2;
        // Re(ifft(c)) is the inverse of the Hermitian part of c
        let mut spectrum = vec![Complex64::default(); half + 1];
        let mut frame = vec![0.0; m];
        let mut scratch = vec![Complex64::default(); self.inv_real.get_scratch_len()];
        for n in 0..self.cfg.n_frames() {
            let start = a * n;
            let col = coeffs.col(n);
            for (j, s) in spectrum.iter_mut().enumerate() {
                *s = (col[j] + col[(m - j) % m].conj()) * 0.5;
            }
            spectrum[0].im = 0.0;
            if m % 2 == 0 {
                spectrum[half].im = 0.0;
            }
            self.inv_real
                .process_with_scratch(&mut spectrum, &mut frame, &mut scratch)
                .expect("buffer sizes fixed at construction");
            let (mut dst, mut src) = (start, start % m);
            for &g in self.window.iter() {
                out[dst] += frame[src] * g;
                dst += 1;
                if dst == l {
                    dst = 0;
                }
                src += 1;
                if src == m {
                    src = 0;
                }
            }
        }
    }

    /// Inverse STFT of a conjugate-symmetric spectrogram. Fails when the
    /// imaginary part of the synthesis sum is not negligible.
    pub fn synthesize(&self, spec: &Spectrogram) -> Result<Vec<f64>> {
        if spec.config != self.cfg {
            return Err(Error::invalid(format!(
                "spectrogram config {:?} does not match transform config {:?}",
                spec.config, self.cfg
            )));
        }
        let mut re = vec![0.0; self.cfg.signal_len];
        let mut im = vec![0.0; self.cfg.signal_len];
        self.synthesis_sum(&spec.data, &mut re, Some(&mut im));
        let peak = re.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let residue = im.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if residue > SYNTHESIS_RESIDUE_TOL * peak.max(1.0) {
            return Err(Error::ImaginaryResidue(residue));
        }
        Ok(re)
    }

    fn synthesis_sum(&self, coeffs: &CMatrix, re: &mut [f64], mut im: Option<&mut [f64]>) {
        let StftConfig {
            window_len: w,
            hop: a,
            channels: m,
            signal_len: l,
        } = self.cfg;
        debug_assert_eq!(coeffs.shape(), self.cfg.shape());
        re.fill(0.0);
        if let Some(im) = im.as_deref_mut() {
            im.fill(0.0);
        }
        let mut buf = vec![Complex64::default(); m];
        let mut scratch = vec![Complex64::default(); self.inv.get_inplace_scratch_len()];
        for n in 0..self.cfg.n_frames() {
            let start = a * n;
            let shift = start % m;
            let col = coeffs.col(n);
            if shift == 0 {
                buf.copy_from_slice(col);
            } else {
                let mut idx = 0;
                for (b, c) in buf.iter_mut().zip(col) {
                    *b = c * self.twiddle[idx].conj();
                    idx += shift;
                    if idx >= m {
                        idx -= m;
                    }
                }
            }
            self.inv.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..w {
                let idx = (start + k) % l;
                re[idx] += buf[k].re * self.window[k];
                if let Some(im) = im.as_deref_mut() {
                    im[idx] += buf[k].im * self.window[k];
                }
            }
        }
    }
}

/// Analysis with an explicit window; see [`Stft`] for repeated use.
pub fn analyze(x: &[f64], g: &Window, cfg: &StftConfig) -> Result<Spectrogram> {
    Stft::new(*cfg, g)?.analyze(x)
}

pub fn synthesize(spec: &Spectrogram, g: &Window, cfg: &StftConfig) -> Result<Vec<f64>> {
    Stft::new(*cfg, g)?.synthesize(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> StftConfig {
        StftConfig::new(16, 4, 16, 64).unwrap()
    }

    fn norm(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Direct evaluation of the defining double sum.
    fn analyze_direct(x: &[f64], g: &[f64], cfg: &StftConfig) -> CMatrix {
        let (m, n) = cfg.shape();
        let l = cfg.signal_len;
        CMatrix::from_fn(m, n, |mi, ni| {
            let mut acc = Complex64::default();
            for (li, &xv) in x.iter().enumerate() {
                let k = (li + l - (cfg.hop * ni) % l) % l;
                if k < g.len() {
                    let phase = -2.0 * PI * (mi * li) as f64 / m as f64;
                    acc += Complex64::from_polar(xv * g[k], phase);
                }
            }
            acc
        })
    }

    #[test]
    fn hann_values() {
        let h = make_hann(4).unwrap();
        assert_eq!(h[0], 0.0);
        assert!((h[2] - 1.0).abs() < 1e-15);
        let sum: f64 = make_hann(2048).unwrap().samples().iter().sum();
        assert!((sum - 1024.0).abs() < 1e-9);
        assert!(make_hann(1).is_err());
    }

    #[test]
    fn hann_is_even_and_bounded() {
        let h = make_hann(64).unwrap();
        for k in 1..64 {
            assert!((h[k] - h[64 - k]).abs() < 1e-15);
            assert!((0.0..=1.0).contains(&h[k]));
        }
    }

    #[test]
    fn hann_derivative_values() {
        let d = make_hann_derivative(4).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((d[1] - PI / 4.0).abs() < 1e-15);
        let sum: f64 = make_hann_derivative(2048).unwrap().samples().iter().sum();
        assert!(sum.abs() < 1e-12);
        assert!(make_hann_derivative(0).is_err());
    }

    #[test]
    fn hann_derivative_matches_finite_difference() {
        let n = 256;
        let d = make_hann_derivative(n).unwrap();
        let f = |t: f64| 0.5 * (1.0 - (2.0 * PI * t / n as f64).cos());
        for k in 0..n {
            let h = 1e-5;
            let fd = (f(k as f64 + h) - f(k as f64 - h)) / (2.0 * h);
            assert!((fd - d[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn config_validation() {
        assert!(StftConfig::new(2048, 512, 2048, 8192).is_ok());
        assert!(StftConfig::new(2048, 512, 1024, 8192).is_err());
        assert!(StftConfig::new(2048, 4096, 2048, 8192).is_err());
        assert!(StftConfig::new(2048, 512, 2048, 8000).is_err());
        assert!(StftConfig::new(2048, 512, 2048, 2560).is_err());
        assert_eq!(StftConfig::standard(8192).unwrap().n_frames(), 16);
        assert_eq!(StftConfig::standard(8192).unwrap().frame_ratio(), 4);
    }

    #[test]
    fn tight_window_is_idempotent() {
        let cfg = StftConfig::standard(8192).unwrap();
        let g1 = tight_window(&make_hann(2048).unwrap(), &cfg).unwrap();
        let g2 = tight_window(&g1, &cfg).unwrap();
        for (a, b) in g1.samples().iter().zip(g2.samples()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn tight_window_rejects_uncovered_samples() {
        // Hann with hop == window length leaves sample 0 of every frame at zero.
        let cfg = StftConfig::new(8, 8, 8, 32).unwrap();
        let err = tight_window(&make_hann(8).unwrap(), &cfg).unwrap_err();
        assert!(matches!(err, Error::DegenerateWindow { index: 0, .. }));
    }

    #[test]
    fn fast_analysis_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for cfg in [
            small_cfg(),
            StftConfig::new(12, 3, 16, 48).unwrap(),
            StftConfig::new(8, 8, 8, 16).unwrap(),
        ] {
            let g: Vec<f64> = (0..cfg.window_len)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let x: Vec<f64> = (0..cfg.signal_len)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let stft = Stft::new(cfg, &Window::custom(g.clone()).unwrap()).unwrap();
            let fast = stft.analyze(&x).unwrap();
            let direct = analyze_direct(&x, &g, &cfg);
            assert!(fast.data().sub(&direct).norm_fro() < 1e-12 * direct.norm_fro());
        }
    }

    #[test]
    fn constant_signal_is_dc_only() {
        let cfg = StftConfig::new(16, 4, 16, 64).unwrap();
        let stft = Stft::tight_hann(cfg).unwrap();
        let x = vec![1.0; 64];
        let spec = stft.analyze(&x).unwrap();
        let dc: f64 = stft.window().iter().sum();
        for n in 0..spec.cols() {
            assert!((spec.data().get(0, n).re - dc).abs() < 1e-12);
            // a periodic Hann only leaks into bins 1 and M - 1
            for m in 2..15 {
                assert!(spec.data().get(m, n).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_signal_and_zero_spectrogram() {
        let cfg = small_cfg();
        let stft = Stft::tight_hann(cfg).unwrap();
        assert_eq!(stft.analyze(&[0.0; 64]).unwrap().data().max_abs(), 0.0);
        let x = stft.synthesize(&Spectrogram::zeros(cfg)).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conjugate_symmetry_for_real_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = StftConfig::standard(8192).unwrap();
        let stft = Stft::tight_hann(cfg).unwrap();
        let x: Vec<f64> = (0..8192).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spec = stft.analyze(&x).unwrap();
        let d = spec.data();
        for n in 0..d.cols() {
            for m in 1..d.rows() {
                assert!((d.get(d.rows() - m, n) - d.get(m, n).conj()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn perfect_reconstruction_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = StftConfig::standard(8192).unwrap();
        let stft = Stft::tight_hann(cfg).unwrap();
        for _ in 0..3 {
            let x: Vec<f64> = (0..8192).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let spec = stft.analyze(&x).unwrap();
            let y = stft.synthesize(&spec).unwrap();
            let err: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
            assert!(norm(&err) <= 1e-10 * norm(&x));
            assert!((spec.data().norm_fro() - norm(&x)).abs() <= 1e-10 * norm(&x));
        }
    }

    #[test]
    fn synthesize_rejects_asymmetric_input() {
        let cfg = small_cfg();
        let stft = Stft::tight_hann(cfg).unwrap();
        let mut spec = Spectrogram::zeros(cfg);
        spec.data_mut().set(3, 2, Complex64::new(1.0, 0.0));
        assert!(matches!(
            stft.synthesize(&spec),
            Err(Error::ImaginaryResidue(_))
        ));
        assert!(stft.adjoint(spec.data()).is_ok());
    }

    #[test]
    fn length_and_shape_mismatch() {
        let stft = Stft::tight_hann(small_cfg()).unwrap();
        assert!(stft.analyze(&[0.0; 60]).is_err());
        assert!(stft.adjoint(&CMatrix::zeros(16, 15)).is_err());
    }

    #[test]
    fn shift_by_channel_count_shifts_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = StftConfig::standard(16384).unwrap();
        let stft = Stft::tight_hann(cfg).unwrap();
        let x: Vec<f64> = (0..16384).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = cfg.channels;
        let shifted: Vec<f64> = (0..x.len())
            .map(|l| x[(l + x.len() - m) % x.len()])
            .collect();
        let a = stft.analyze(&x).unwrap();
        let b = stft.analyze(&shifted).unwrap();
        let r = cfg.frame_ratio();
        for n in r..cfg.n_frames() {
            for k in 0..m {
                assert!((b.data().get(k, n) - a.data().get(k, n - r)).norm() < 1e-10);
            }
        }
    }
}
