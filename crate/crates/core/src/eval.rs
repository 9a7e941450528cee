//! Objective evaluation: SNR, synthetic test signals and the sweep/compare
//! harnesses.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{
    aligned_signal_len, apply_mask, make_mask, ColumnMask, Inpainter, MaskPlacement, MaskSpec,
    Method, DEFAULT_PAD,
};
use crate::solver::SolverConfig;
use crate::stft::{Stft, StftConfig, DEFAULT_CHANNELS, DEFAULT_HOP};

pub const SAMPLE_RATE: u32 = 16_000;
pub const SUITE_DURATION_S: f64 = 5.0;

/// `10 log10(|x_ref|^2 / |x_ref - x_test|^2)`; `+inf` for identical signals.
pub fn snr(x_ref: &[f64], x_test: &[f64]) -> Result<f64> {
    if x_ref.len() != x_test.len() {
        return Err(Error::invalid(format!(
            "signal lengths differ: {} vs {}",
            x_ref.len(),
            x_test.len()
        )));
    }
    let signal: f64 = x_ref.iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(Error::invalid("reference signal is all zero"));
    }
    let noise: f64 = x_ref
        .iter()
        .zip(x_test)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SignalKind {
    Tone {
        freq_hz: f64,
        phase: f64,
    },
    /// Sum of sinusoids; amplitudes are scaled so their sum is 0.9.
    Multitone {
        freqs_hz: Vec<f64>,
        amps: Vec<f64>,
        phases: Vec<f64>,
    },
    /// Linear frequency sweep from `f0_hz` to `f1_hz` over the signal.
    Chirp {
        f0_hz: f64,
        f1_hz: f64,
    },
    /// Uniform white noise in [-1, 1).
    Noise {
        seed: u64,
    },
}

impl SignalKind {
    /// Tone at `bin + delta` for an `channels`-point frequency grid.
    pub fn tone_at_bin(bin: usize, delta: f64, channels: usize, sample_rate: u32) -> Self {
        SignalKind::Tone {
            freq_hz: (bin as f64 + delta) * sample_rate as f64 / channels as f64,
            phase: 0.0,
        }
    }

    /// `count` tones with log-uniform frequencies in [150, 3000] Hz.
    pub fn random_multitone(count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut freqs_hz = Vec::with_capacity(count);
        let mut amps = Vec::with_capacity(count);
        let mut phases = Vec::with_capacity(count);
        for _ in 0..count {
            freqs_hz.push(150.0 * 20f64.powf(rng.gen_range(0.0..1.0)));
            amps.push(rng.gen_range(0.3..1.0));
            phases.push(rng.gen_range(0.0..2.0 * PI));
        }
        SignalKind::Multitone {
            freqs_hz,
            amps,
            phases,
        }
    }
}

pub fn make_test_signal(kind: &SignalKind, duration_s: f64, sample_rate: u32) -> Result<Vec<f64>> {
    if !(duration_s > 0.0) || sample_rate == 0 {
        return Err(Error::invalid("duration and sample rate must be positive"));
    }
    let fs = sample_rate as f64;
    let nyquist = fs / 2.0;
    let len = (duration_s * fs).floor() as usize;
    let check = |f: f64| {
        if !(f >= 0.0 && f < nyquist) {
            Err(Error::invalid(format!(
                "frequency {f} Hz outside [0, {nyquist}) Hz"
            )))
        } else {
            Ok(())
        }
    };
    let t = |l: usize| l as f64 / fs;
    match kind {
        SignalKind::Tone { freq_hz, phase } => {
            check(*freq_hz)?;
            Ok((0..len)
                .map(|l| 0.9 * (2.0 * PI * freq_hz * t(l) + phase).cos())
                .collect())
        }
        SignalKind::Multitone {
            freqs_hz,
            amps,
            phases,
        } => {
            if freqs_hz.is_empty() || freqs_hz.len() != amps.len() || amps.len() != phases.len() {
                return Err(Error::invalid(
                    "multitone needs equal, non-empty parameter lists",
                ));
            }
            for &f in freqs_hz {
                check(f)?;
            }
            let total: f64 = amps.iter().map(|a| a.abs()).sum();
            if total == 0.0 {
                return Err(Error::invalid("multitone amplitudes are all zero"));
            }
            let norm = 0.9 / total;
            Ok((0..len)
                .map(|l| {
                    freqs_hz
                        .iter()
                        .zip(amps)
                        .zip(phases)
                        .map(|((f, a), p)| a * norm * (2.0 * PI * f * t(l) + p).cos())
                        .sum()
                })
                .collect())
        }
        SignalKind::Chirp { f0_hz, f1_hz } => {
            check(*f0_hz)?;
            check(*f1_hz)?;
            let rate = (f1_hz - f0_hz) / duration_s;
            Ok((0..len)
                .map(|l| {
                    let tt = t(l);
                    0.9 * (2.0 * PI * (f0_hz * tt + 0.5 * rate * tt * tt)).cos()
                })
                .collect())
        }
        SignalKind::Noise { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalClass {
    Multitone,
    Chirp,
    Tone,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSignal {
    pub id: String,
    pub class: SignalClass,
    pub samples: Vec<f64>,
}

/// Truncates to a length compatible with the standard frame layout.
pub fn align_standard(samples: &mut Vec<f64>) {
    let len = aligned_signal_len(samples.len(), DEFAULT_HOP, DEFAULT_CHANNELS / DEFAULT_HOP);
    samples.truncate(len);
}

/// Seeded desk-scale suite: 10 multitone, 10 chirp and 4 pure-tone signals,
/// 5 s at 16 kHz, truncated to the standard frame layout.
pub fn synthetic_suite(seed: u64) -> Result<Vec<TestSignal>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(24);
    let mut push = |id: String, class, kind: SignalKind| -> Result<()> {
        let mut samples = make_test_signal(&kind, SUITE_DURATION_S, SAMPLE_RATE)?;
        align_standard(&mut samples);
        out.push(TestSignal { id, class, samples });
        Ok(())
    };
    for i in 0..10 {
        let count = rng.gen_range(2..=5);
        let kind = SignalKind::random_multitone(count, rng.gen());
        push(format!("multitone-{i:02}"), SignalClass::Multitone, kind)?;
    }
    for i in 0..10 {
        let f0: f64 = rng.gen_range(200.0..2000.0);
        let ratio: f64 = rng.gen_range(0.5..2.0);
        let kind = SignalKind::Chirp {
            f0_hz: f0,
            f1_hz: f0 * ratio,
        };
        push(format!("chirp-{i:02}"), SignalClass::Chirp, kind)?;
    }
    for i in 0..4 {
        let bin = rng.gen_range(20..300);
        let delta = rng.gen_range(-0.5..0.5);
        let kind = SignalKind::tone_at_bin(bin, delta, DEFAULT_CHANNELS, SAMPLE_RATE);
        push(format!("tone-{i:02}"), SignalClass::Tone, kind)?;
    }
    Ok(out)
}

/// One row of an evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub method: String,
    pub mask_gap_cols: usize,
    pub signal_id: String,
    /// May be `+inf` for a perfect reconstruction.
    pub snr_db: f64,
    pub runtime_s: f64,
    pub lambda: f64,
    pub iters_inner: usize,
    pub iters_outer_used: usize,
}

/// Full-signal restoration experiment for one signal, mask and method.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub solver: SolverConfig,
    pub pad: usize,
    pub placement: MaskPlacement,
    pub jobs: usize,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            pad: DEFAULT_PAD,
            placement: MaskPlacement::PerSecondCenter,
            jobs: 1,
        }
    }
}

/// Outcome of [`Experiment::run`] with the intermediate signals.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: EvalRecord,
    pub corrupted_snr_db: f64,
    pub mask: ColumnMask,
    pub observed: crate::stft::Spectrogram,
    pub restored: crate::stft::Spectrogram,
    pub restored_signal: Vec<f64>,
}

impl Experiment {
    pub fn mask_for(&self, signal_len: usize, gap_cols: usize) -> Result<ColumnMask> {
        // a 5 s signal truncated to whole frames still counts as 5 seconds
        let duration_s = (signal_len as f64 / SAMPLE_RATE as f64).ceil();
        let mut spec = MaskSpec::standard(duration_s, SAMPLE_RATE, gap_cols);
        spec.pad = self.pad;
        spec.placement = self.placement;
        let mask = make_mask(&spec)?;
        let n_cols = signal_len / DEFAULT_HOP;
        if mask.n_cols() != n_cols {
            return Err(Error::invalid(format!(
                "signal of {signal_len} samples is not aligned to the standard layout"
            )));
        }
        Ok(mask)
    }

    pub fn run(&self, signal: &TestSignal, gap_cols: usize, method: Method) -> Result<RunOutcome> {
        let cfg = StftConfig::standard(signal.samples.len())?;
        let mask = self.mask_for(signal.samples.len(), gap_cols)?;
        self.run_with_mask(signal, &cfg, &mask, method)
    }

    pub fn run_with_mask(
        &self,
        signal: &TestSignal,
        cfg: &StftConfig,
        mask: &ColumnMask,
        method: Method,
    ) -> Result<RunOutcome> {
        let stft = Stft::tight_hann(*cfg)?;
        let original = stft.analyze(&signal.samples)?;
        let observed = apply_mask(&original, mask)?;
        let corrupted_signal = stft.synthesize(&observed)?;
        let corrupted_snr_db = snr(&signal.samples, &corrupted_signal)?;

        let started = Instant::now();
        let out = Inpainter::new(method, self.solver)
            .with_pad(self.pad)
            .with_jobs(self.jobs)
            .run(&observed, mask, Some(&signal.samples))?;
        let runtime_s = started.elapsed().as_secs_f64();
        let restored_signal = stft.synthesize(&out.spectrogram)?;
        let iters_outer_used = out
            .segments
            .iter()
            .map(|s| s.outer_iters_used)
            .max()
            .unwrap_or(0);
        let gap_cols = crate::pipeline::find_gaps(mask)
            .first()
            .map(|g| g.len())
            .unwrap_or(0);
        Ok(RunOutcome {
            record: EvalRecord {
                method: method.name().to_string(),
                mask_gap_cols: gap_cols,
                signal_id: signal.id.clone(),
                snr_db: snr(&signal.samples, &restored_signal)?,
                runtime_s,
                lambda: self.solver.lambda,
                iters_inner: self.solver.inner_iters,
                iters_outer_used,
            },
            corrupted_snr_db,
            mask: mask.clone(),
            observed,
            restored: out.spectrogram,
            restored_signal,
        })
    }
}

/// Ten log-spaced values from 1e-7 to 1e2.
pub fn default_lambda_grid() -> Vec<f64> {
    (-7..=2).map(|e| 10f64.powi(e)).collect()
}

/// Mean SNR of a group of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub mask_gap_cols: usize,
    pub lambda: f64,
    pub mean_snr_db: f64,
    pub count: usize,
}

/// Groups by (method, gap length, lambda) and averages SNR. Infinite SNRs
/// are capped at 200 dB so a single perfect run cannot dominate the mean.
pub fn summarize(records: &[EvalRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize, u64), (f64, usize)> = BTreeMap::new();
    for r in records {
        let key = (r.method.clone(), r.mask_gap_cols, r.lambda.to_bits());
        let e = groups.entry(key).or_insert((0.0, 0));
        e.0 += r.snr_db.min(200.0);
        e.1 += 1;
    }
    groups
        .into_iter()
        .map(|((method, gap, lambda), (sum, count))| SummaryRow {
            method,
            mask_gap_cols: gap,
            lambda: f64::from_bits(lambda),
            mean_snr_db: sum / count as f64,
            count,
        })
        .collect()
}

/// Runs the uphain pipeline for every (signal, lambda) pair.
pub fn sweep_lambda(
    signals: &[TestSignal],
    gap_cols: usize,
    lambda_grid: &[f64],
    experiment: &Experiment,
) -> Result<Vec<EvalRecord>> {
    if lambda_grid.is_empty() {
        return Err(Error::invalid("lambda grid is empty"));
    }
    let mut records = Vec::with_capacity(signals.len() * lambda_grid.len());
    for &lambda in lambda_grid {
        let mut exp = experiment.clone();
        exp.solver = exp.solver.with_lambda(lambda);
        for s in signals {
            records.push(exp.run(s, gap_cols, Method::Uphain)?.record);
        }
    }
    Ok(records)
}

/// Runs each method on each signal for each gap length.
pub fn compare_methods(
    signals: &[TestSignal],
    gap_lengths: &[usize],
    methods: &[Method],
    experiment: &Experiment,
) -> Result<(Vec<EvalRecord>, Vec<SummaryRow>)> {
    let mut records = Vec::new();
    for &gap in gap_lengths {
        for s in signals {
            for &m in methods {
                records.push(experiment.run(s, gap, m)?.record);
            }
        }
    }
    let summary = summarize(&records);
    Ok((records, summary))
}
