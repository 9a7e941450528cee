//! Primal-dual solvers for phase-aware spectrogram inpainting.
//!
//! The main problem is
//!
//! ```text
//! argmin_x  lambda || D R_omega A x ||_1 + i_Gamma(A x)
//! ```
//!
//! solved with the generalized Chambolle-Pock iteration (one primal signal,
//! two dual spectrogram-shaped variables), wrapped in an outer loop that
//! re-estimates the instantaneous frequency from the current solution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CMatrix;
use crate::phase_prior::{IfEstimator, IfMatrix, IpctvOperator};
use crate::pipeline::ColumnMask;
use crate::prox::{project_feasible, ThresholdKind, Thresholder};
use crate::stft::Stft;

/// Slack allowed on the step-size products to absorb rounding.
const STEP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tau: f64,
    pub sigma: f64,
    pub eta: f64,
    pub lambda: f64,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub epsilon: f64,
    pub alpha_relax: f64,
    pub threshold: ThresholdKind,
    /// Skip the convergence conditions on the step sizes.
    pub allow_unsafe_steps: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 0.25,
            sigma: 1.0,
            eta: 4.0,
            lambda: 0.01,
            inner_iters: 500,
            outer_iters: 10,
            epsilon: 1e-3,
            alpha_relax: 1.0,
            threshold: ThresholdKind::Soft,
            allow_unsafe_steps: false,
        }
    }
}

impl SolverConfig {
    /// Bound on `||D R_omega A||^2` used by the step-size condition.
    pub const IPCTV_NORM_SQ: f64 = 4.0;
    /// `||A||^2` for a tight frame.
    pub const ANALYSIS_NORM_SQ: f64 = 1.0;

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau", self.tau), ("sigma", self.sigma), ("eta", self.eta)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} = {v} must be finite and > 0"
                )));
            }
        }
        if !(self.alpha_relax > 0.0 && self.alpha_relax < 2.0) {
            return Err(Error::invalid(format!(
                "relaxation {} must lie in (0, 2)",
                self.alpha_relax
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::invalid(format!(
                "epsilon {} must be >= 0",
                self.epsilon
            )));
        }
        if self.outer_iters == 0 {
            return Err(Error::invalid("outer_iters must be >= 1"));
        }
        self.thresholder()?;
        if !self.allow_unsafe_steps {
            let ts = self.tau * self.sigma * Self::IPCTV_NORM_SQ;
            let te = self.tau * self.eta * Self::ANALYSIS_NORM_SQ;
            if ts > 1.0 + STEP_SLACK || te > 1.0 + STEP_SLACK {
                return Err(Error::invalid(format!(
                    "step sizes violate convergence conditions: tau*sigma*4 = {ts}, tau*eta = {te}"
                )));
            }
        }
        Ok(())
    }

    pub fn thresholder(&self) -> Result<Thresholder> {
        Thresholder::new(self.threshold, self.lambda)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub y: CMatrix,
    pub z: CMatrix,
}

/// One diagnostic sample from an inner iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEvent {
    pub outer: usize,
    pub iteration: usize,
    /// Regularizer value `lambda * penalty(D R A x)`.
    pub objective: f64,
    /// `|| M (A x - X_obs) ||_F` over reliable columns.
    pub feasibility_residual: f64,
}

pub type TraceFn<'a> = dyn FnMut(&TraceEvent) + 'a;

/// A single inpainting problem: a (normalized) observed spectrogram, the
/// columns that are missing, and the frame it lives in.
#[derive(Debug, Clone)]
pub struct InpaintProblem {
    stft: Stft,
    mask: ColumnMask,
    observed: CMatrix,
}

impl InpaintProblem {
    pub fn new(stft: Stft, mask: ColumnMask, observed: CMatrix) -> Result<Self> {
        let (m, n) = stft.config().shape();
        observed.ensure_shape(m, n)?;
        if n < 2 {
            return Err(Error::invalid("problem needs at least 2 columns"));
        }
        if mask.n_cols() != n {
            return Err(Error::invalid(format!(
                "mask covers {} columns, spectrogram has {n}",
                mask.n_cols()
            )));
        }
        Ok(Self {
            stft,
            mask,
            observed,
        })
    }

    pub fn stft(&self) -> &Stft {
        &self.stft
    }

    pub fn mask(&self) -> &ColumnMask {
        &self.mask
    }

    pub fn observed(&self) -> &CMatrix {
        &self.observed
    }

    /// `x = A* X_obs`, zero duals.
    pub fn initial_state(&self) -> SolverState {
        let (m, n) = self.stft.config().shape();
        let mut x = vec![0.0; self.stft.config().signal_len];
        self.stft.adjoint_into(&self.observed, &mut x);
        SolverState {
            x,
            y: CMatrix::zeros(m, n),
            z: CMatrix::zeros(m, n - 1),
        }
    }

    pub fn project(&self, x: &CMatrix) -> Result<CMatrix> {
        project_feasible(x, &self.mask, &self.observed)
    }

    fn feasibility_residual(&self, coeffs: &CMatrix) -> f64 {
        self.mask
            .reliable_cols()
            .map(|n| {
                coeffs
                    .col(n)
                    .iter()
                    .zip(self.observed.col(n))
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn penalty(kind: ThresholdKind, v: &CMatrix) -> f64 {
    match kind {
        ThresholdKind::L2Block => v.norm_fro(),
        ThresholdKind::L2Squared => v.norm_fro().powi(2),
        _ => v.norm_l1(),
    }
}

/// Value of the inner objective `lambda * penalty(D R A x)` and the
/// feasibility residual of `A x`.
pub fn inner_objective(
    problem: &InpaintProblem,
    op: &IpctvOperator,
    x: &[f64],
    cfg: &SolverConfig,
) -> Result<(f64, f64)> {
    let coeffs = problem.stft.analyze(x)?;
    let v = op.apply(x)?;
    Ok((
        cfg.lambda * penalty(cfg.threshold, &v),
        problem.feasibility_residual(coeffs.data()),
    ))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|a| a.is_finite())
}

/// Runs `cfg.inner_iters` iterations of the generalized Chambolle-Pock method
/// for a fixed instantaneous frequency, starting from `state`.
pub fn gcpa_inner(
    problem: &InpaintProblem,
    mut state: SolverState,
    omega: &IfMatrix,
    cfg: &SolverConfig,
    outer: usize,
    mut trace: Option<&mut TraceFn<'_>>,
) -> Result<SolverState> {
    cfg.validate()?;
    let stft = &problem.stft;
    let (m, n) = stft.config().shape();
    let len = stft.config().signal_len;
    if state.x.len() != len {
        return Err(Error::invalid("state signal length does not match problem"));
    }
    state.y.ensure_shape(m, n)?;
    state.z.ensure_shape(m, n - 1)?;
    let op = IpctvOperator::new(stft.clone(), omega)?;
    let thresholder = cfg.thresholder()?;
    let SolverConfig {
        tau,
        sigma,
        eta,
        alpha_relax: alpha,
        ..
    } = *cfg;

    let mut work = CMatrix::zeros(m, n);
    let mut r = CMatrix::zeros(m, n);
    let mut q = CMatrix::zeros(m, n - 1);
    let mut q_work = CMatrix::zeros(m, n - 1);
    let mut s_z = vec![0.0; len];
    let mut s_y = vec![0.0; len];
    let mut s_yh = vec![0.0; len];
    let mut tmp = vec![0.0; len];
    let mut xh = vec![0.0; len];

    stft.adjoint_into(&state.y, &mut s_y);

    for it in 0..cfg.inner_iters {
        // A* R* D* Z
        op.adjoint_into(&state.z, &mut work, &mut s_z);

        // R = Y + eta A (x - tau (A* R* D* Z + A* Y))
        for ((t, &x), (&a, &b)) in tmp.iter_mut().zip(&state.x).zip(s_z.iter().zip(&s_y)) {
            *t = x - tau * (a + b);
        }
        stft.analyze_into(&tmp, &mut r);

        // Y_half = R - eta P(R / eta): zero on missing columns.
        for col in 0..n {
            let rc = r.col_mut(col);
            if problem.mask.is_missing(col) {
                rc.fill(Default::default());
            } else {
                for ((a, y), b) in rc
                    .iter_mut()
                    .zip(state.y.col(col))
                    .zip(problem.observed.col(col))
                {
                    *a = *a * eta + y - b * eta;
                }
            }
        }
        let y_half = &r;
        stft.adjoint_into(y_half, &mut s_yh);

        // x_half = x - tau (A* R* D* Z + A* Y_half)
        for ((h, &x), (&a, &b)) in xh.iter_mut().zip(&state.x).zip(s_z.iter().zip(&s_yh)) {
            *h = x - tau * (a + b);
        }

        // Q = Z + sigma D R A (2 x_half - x)
        for ((t, &h), &x) in tmp.iter_mut().zip(&xh).zip(&state.x) {
            *t = 2.0 * h - x;
        }
        op.apply_into(&tmp, &mut work, &mut q);
        q.scale(sigma);
        q.axpy(1.0, &state.z);

        // Z_half = prox_{sigma g*}(Q)
        thresholder.conjugate_step_inplace(&mut q, sigma, &mut q_work);
        let z_half = &q;

        if alpha == 1.0 {
            std::mem::swap(&mut state.x, &mut xh);
            std::mem::swap(&mut state.y, &mut r);
            std::mem::swap(&mut state.z, &mut q);
            std::mem::swap(&mut s_y, &mut s_yh);
        } else {
            for (x, h) in state.x.iter_mut().zip(&xh) {
                *x += alpha * (h - *x);
            }
            for (y, h) in state.y.as_mut_slice().iter_mut().zip(y_half.as_slice()) {
                *y += (h - *y) * alpha;
            }
            for (z, h) in state.z.as_mut_slice().iter_mut().zip(z_half.as_slice()) {
                *z += (h - *z) * alpha;
            }
            for (s, h) in s_y.iter_mut().zip(&s_yh) {
                *s += alpha * (h - *s);
            }
        }

        // non-finite duals reach x on the next iteration
        let last = it + 1 == cfg.inner_iters;
        if !all_finite(&state.x) || (last && (!state.z.is_finite() || !state.y.is_finite())) {
            return Err(Error::Divergence {
                outer,
                iteration: it,
            });
        }

        if let Some(cb) = trace.as_deref_mut() {
            let (objective, feasibility_residual) = inner_objective(problem, &op, &state.x, cfg)?;
            cb(&TraceEvent {
                outer,
                iteration: it,
                objective,
                feasibility_residual,
            });
        }
    }
    Ok(state)
}

/// Result of a full solve on one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    /// Projected reconstruction; reliable columns equal the observation.
    pub spectrogram: CMatrix,
    /// Final time-domain estimate (before projection).
    pub signal: Vec<f64>,
    /// Outer iterations actually executed.
    pub outer_iters_used: usize,
}

/// Outer loop with instantaneous-frequency updates around [`gcpa_inner`].
/// Stops when two consecutive outer estimates differ by less than epsilon
/// (first checked after the second outer iteration).
pub fn uphain_tf(
    problem: &InpaintProblem,
    estimator: &IfEstimator,
    cfg: &SolverConfig,
    mut trace: Option<&mut TraceFn<'_>>,
) -> Result<SolveOutput> {
    cfg.validate()?;
    let estimator = estimator.with_signal_len(problem.stft.config().signal_len)?;
    let mut state = problem.initial_state();
    let mut x_hat = state.x.clone();
    let mut used = 0;
    for j in 0..cfg.outer_iters {
        let omega = estimator.estimate(&x_hat)?;
        state = gcpa_inner(problem, state, &omega, cfg, j, trace.as_deref_mut())?;
        used = j + 1;
        let change = norm(
            &state
                .x
                .iter()
                .zip(&x_hat)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        x_hat.copy_from_slice(&state.x);
        if j >= 1 && change < cfg.epsilon {
            break;
        }
    }
    finish(problem, x_hat, used)
}

fn finish(problem: &InpaintProblem, signal: Vec<f64>, used: usize) -> Result<SolveOutput> {
    let coeffs = problem.stft.analyze(&signal)?;
    Ok(SolveOutput {
        spectrogram: problem.project(coeffs.data())?,
        signal,
        outer_iters_used: used,
    })
}

/// Where the fixed instantaneous frequency of the single-pass solver comes from.
#[derive(Debug, Clone, Copy)]
pub enum IfSource<'a> {
    /// The zero-filled observation.
    Corrupted,
    /// A reference signal of the problem's length (e.g. the ground truth).
    Oracle(&'a [f64]),
}

/// Single IF estimate, then one inner run.
pub fn bphain_tf(
    problem: &InpaintProblem,
    estimator: &IfEstimator,
    cfg: &SolverConfig,
    source: IfSource<'_>,
    trace: Option<&mut TraceFn<'_>>,
) -> Result<SolveOutput> {
    cfg.validate()?;
    let estimator = estimator.with_signal_len(problem.stft.config().signal_len)?;
    let state = problem.initial_state();
    let omega = match source {
        IfSource::Corrupted => estimator.estimate(&state.x)?,
        IfSource::Oracle(reference) => estimator.estimate(reference)?,
    };
    let state = gcpa_inner(problem, state, &omega, cfg, 0, trace)?;
    finish(problem, state.x, 1)
}

/// Chambolle-Pock on the spectrogram itself:
/// `argmin_X lambda ||D R_omega X||_1 + i_Gamma(X)`, with the same outer IF
/// update and stopping rule as [`uphain_tf`].
pub fn cpa_tf_only(
    problem: &InpaintProblem,
    estimator: &IfEstimator,
    cfg: &SolverConfig,
) -> Result<SolveOutput> {
    cfg.validate()?;
    let stft = &problem.stft;
    let estimator = estimator.with_signal_len(stft.config().signal_len)?;
    let (m, n) = stft.config().shape();
    let len = stft.config().signal_len;
    let thresholder = cfg.thresholder()?;
    let SolverConfig {
        tau,
        sigma,
        alpha_relax: alpha,
        ..
    } = *cfg;

    let mut x = problem.observed.clone();
    let mut z = CMatrix::zeros(m, n - 1);
    let mut work = CMatrix::zeros(m, n);
    let mut xh = CMatrix::zeros(m, n);
    let mut q = CMatrix::zeros(m, n - 1);
    let mut q_work = CMatrix::zeros(m, n - 1);
    let mut x_hat = vec![0.0; len];
    stft.adjoint_into(&x, &mut x_hat);
    let mut x_next = vec![0.0; len];
    let mut used = 0;

    for j in 0..cfg.outer_iters {
        let omega = estimator.estimate(&x_hat)?;
        let op = IpctvOperator::new(stft.clone(), &omega)?;
        let rot = op.rotation();
        for it in 0..cfg.inner_iters {
            // X_half = P(X - tau R* D* Z)
            crate::phase_prior::time_variation_adjoint_into(&z, &mut work);
            rot.apply_adjoint_inplace(&mut work);
            for col in 0..n {
                let dst = xh.col_mut(col);
                if problem.mask.is_missing(col) {
                    for ((d, a), b) in dst.iter_mut().zip(x.col(col)).zip(work.col(col)) {
                        *d = a - b * tau;
                    }
                } else {
                    dst.copy_from_slice(problem.observed.col(col));
                }
            }
            // Q = Z + sigma D R (2 X_half - X)
            for ((w, h), a) in work
                .as_mut_slice()
                .iter_mut()
                .zip(xh.as_slice())
                .zip(x.as_slice())
            {
                *w = h * 2.0 - a;
            }
            rot.apply_inplace(&mut work);
            crate::phase_prior::time_variation_into(&work, &mut q);
            q.scale(sigma);
            q.axpy(1.0, &z);
            thresholder.conjugate_step_inplace(&mut q, sigma, &mut q_work);

            if alpha == 1.0 {
                std::mem::swap(&mut x, &mut xh);
                std::mem::swap(&mut z, &mut q);
            } else {
                for (a, h) in x.as_mut_slice().iter_mut().zip(xh.as_slice()) {
                    *a += (h - *a) * alpha;
                }
                for (a, h) in z.as_mut_slice().iter_mut().zip(q.as_slice()) {
                    *a += (h - *a) * alpha;
                }
            }
            if !x.is_finite() || !z.is_finite() {
                return Err(Error::Divergence {
                    outer: j,
                    iteration: it,
                });
            }
        }
        used = j + 1;
        stft.adjoint_into(&x, &mut x_next);
        let change = norm(
            &x_next
                .iter()
                .zip(&x_hat)
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        std::mem::swap(&mut x_hat, &mut x_next);
        if j >= 1 && change < cfg.epsilon {
            break;
        }
    }
    Ok(SolveOutput {
        spectrogram: problem.project(&x)?,
        signal: x_hat,
        outer_iters_used: used,
    })
}

/// Power iteration on `adjoint . apply`; returns the estimated operator norm
/// `sqrt(lambda_max)`. The domain is `R^dim`.
pub fn operator_norm_estimate<T, F, G>(
    apply: F,
    apply_adjoint: G,
    dim: usize,
    iters: usize,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<T>,
    G: Fn(&T) -> Result<Vec<f64>>,
{
    if dim == 0 {
        return Err(Error::invalid("operator domain is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|a| *a /= n0);
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        let w = apply_adjoint(&apply(&v)?)?;
        if w.len() != dim || !all_finite(&w) {
            return Err(Error::NonFinite("power iteration".into()));
        }
        // Rayleigh quotient <v, A*A v> with |v| = 1
        estimate = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let nw = norm(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        v = w.into_iter().map(|a| a / nw).collect();
    }
    if !estimate.is_finite() {
        return Err(Error::NonFinite("power iteration".into()));
    }
    Ok(estimate.max(0.0).sqrt())
}
