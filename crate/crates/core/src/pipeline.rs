//! End-to-end inpainting of whole-column gaps: mask construction, gap
//! discovery, aligned segment extraction, peak normalization, solver
//! dispatch and write-back.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CMatrix;
use crate::phase_prior::IfEstimator;
use crate::solver::{
    bphain_tf, cpa_tf_only, uphain_tf, IfSource, InpaintProblem, SolverConfig, TraceEvent,
};
use crate::stft::{Spectrogram, Stft, StftConfig};

/// Set of missing (all-zero) spectrogram columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMask {
    n_cols: usize,
    zero_cols: Vec<usize>,
    missing: Vec<bool>,
}

impl ColumnMask {
    /// Indices are sorted and deduplicated; out-of-range indices are rejected.
    pub fn new(n_cols: usize, mut zero_cols: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = zero_cols.iter().find(|&&c| c >= n_cols) {
            return Err(Error::invalid(format!(
                "masked column {bad} out of range for {n_cols} columns"
            )));
        }
        zero_cols.sort_unstable();
        zero_cols.dedup();
        let mut missing = vec![false; n_cols];
        for &c in &zero_cols {
            missing[c] = true;
        }
        Ok(Self {
            n_cols,
            zero_cols,
            missing,
        })
    }

    pub fn empty(n_cols: usize) -> Self {
        Self {
            n_cols,
            zero_cols: Vec::new(),
            missing: vec![false; n_cols],
        }
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn zero_cols(&self) -> &[usize] {
        &self.zero_cols
    }

    #[inline]
    pub fn is_missing(&self, col: usize) -> bool {
        self.missing[col]
    }

    pub fn reliable_cols(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_cols).filter(move |&c| !self.missing[c])
    }

    pub fn is_empty(&self) -> bool {
        self.zero_cols.is_empty()
    }

    /// Restriction to columns `start..start + len`, re-indexed from zero.
    pub fn window(&self, start: usize, len: usize) -> ColumnMask {
        let cols = self
            .zero_cols
            .iter()
            .filter(|&&c| c >= start && c < start + len)
            .map(|&c| c - start)
            .collect();
        ColumnMask::new(len, cols).expect("window indices are in range")
    }
}

/// Inclusive range of consecutive missing columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapRange {
    pub start: usize,
    pub end: usize,
}

impl GapRange {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn columns(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

impl fmt::Display for GapRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..={}", self.start, self.end)
    }
}

/// Maximal runs of consecutive missing columns, ascending.
pub fn find_gaps(mask: &ColumnMask) -> Vec<GapRange> {
    let mut gaps: Vec<GapRange> = Vec::new();
    for &c in mask.zero_cols() {
        match gaps.last_mut() {
            Some(g) if g.end + 1 == c => g.end = c,
            _ => gaps.push(GapRange { start: c, end: c }),
        }
    }
    gaps
}

/// Time-domain samples touched by a run of `gap_cols` missing columns.
pub fn gap_footprint_samples(gap_cols: usize, window_len: usize, hop: usize) -> usize {
    gap_cols.saturating_sub(1) * hop + window_len
}

/// Largest prefix length that fits whole frames and whole `M / a` column
/// groups, so segments and the full signal share phase references.
pub fn aligned_signal_len(len: usize, hop: usize, frame_ratio: usize) -> usize {
    let unit = hop * frame_ratio.max(1);
    len / unit * unit
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskPlacement {
    /// Gap centered on the middle column of each second.
    PerSecondCenter,
    /// Gap start drawn uniformly within each second (away from its edges).
    SeededRandom(u64),
}

/// Parameters of a one-gap-per-second column mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSpec {
    pub duration_s: f64,
    pub sample_rate: u32,
    pub hop: usize,
    /// Column count is truncated to a multiple of this (`M / a`).
    pub frame_ratio: usize,
    pub gap_cols: usize,
    pub pad: usize,
    pub placement: MaskPlacement,
}

impl MaskSpec {
    pub fn standard(duration_s: f64, sample_rate: u32, gap_cols: usize) -> Self {
        Self {
            duration_s,
            sample_rate,
            hop: crate::stft::DEFAULT_HOP,
            frame_ratio: crate::stft::DEFAULT_CHANNELS / crate::stft::DEFAULT_HOP,
            gap_cols,
            pad: DEFAULT_PAD,
            placement: MaskPlacement::PerSecondCenter,
        }
    }

    pub fn n_cols(&self) -> usize {
        let total = (self.duration_s * self.sample_rate as f64 / self.hop as f64).floor() as usize;
        let r = self.frame_ratio.max(1);
        total / r * r
    }
}

/// One contiguous run of `gap_cols` missing columns in every whole second.
pub fn make_mask(spec: &MaskSpec) -> Result<ColumnMask> {
    if !(spec.duration_s >= 1.0) {
        return Err(Error::invalid(format!(
            "duration {} s is shorter than one second",
            spec.duration_s
        )));
    }
    if spec.gap_cols == 0 || spec.hop == 0 || spec.sample_rate == 0 {
        return Err(Error::invalid(
            "gap_cols, hop and sample_rate must be positive",
        ));
    }
    let n_cols = spec.n_cols();
    let cols_per_sec = spec.sample_rate as f64 / spec.hop as f64;
    let seconds = spec.duration_s.floor() as usize;
    let mut rng = match spec.placement {
        MaskPlacement::SeededRandom(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        MaskPlacement::PerSecondCenter => None,
    };
    let mut zero_cols = Vec::with_capacity(seconds * spec.gap_cols);
    for k in 0..seconds {
        let lo = (k as f64 * cols_per_sec).floor() as usize;
        let hi = (((k + 1) as f64 * cols_per_sec).floor() as usize).min(n_cols);
        // usable starts keep `pad` reliable columns on both sides
        let first = lo + spec.pad;
        let needed = spec.gap_cols + spec.pad;
        if hi < first + needed {
            return Err(Error::invalid(format!(
                "gap of {} columns with {} columns of context does not fit in second {k} ({} columns)",
                spec.gap_cols,
                spec.pad,
                hi.saturating_sub(lo)
            )));
        }
        let last = hi - needed;
        let start = match rng.as_mut() {
            Some(rng) => rng.gen_range(first..=last),
            None => {
                let center = (lo + hi) / 2;
                center.saturating_sub(spec.gap_cols / 2).clamp(first, last)
            }
        };
        zero_cols.extend(start..start + spec.gap_cols);
    }
    ColumnMask::new(n_cols, zero_cols)
}

/// Zeroes masked columns; other columns are copied unchanged.
pub fn apply_mask(spec: &Spectrogram, mask: &ColumnMask) -> Result<Spectrogram> {
    if mask.n_cols() != spec.cols() {
        return Err(Error::invalid(format!(
            "mask covers {} columns, spectrogram has {}",
            mask.n_cols(),
            spec.cols()
        )));
    }
    let mut out = spec.clone();
    for &c in mask.zero_cols() {
        out.data_mut().col_mut(c).fill(Default::default());
    }
    Ok(out)
}

/// Default context on either side of a gap: window length over hop.
pub const DEFAULT_PAD: usize = 4;

/// Segment geometry around one gap.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSegment {
    pub gap: GapRange,
    /// First column of the segment in the full spectrogram.
    pub start: usize,
    /// Segment length in columns.
    pub len: usize,
    /// Time-domain peak used for normalization (1 until normalized).
    pub peak: f64,
    /// Missing columns within the segment, re-indexed.
    pub local_mask: ColumnMask,
}

/// Smallest `[start, start + len)` with `start <= gap.start - pad`,
/// `start + len >= gap.end + pad + 1`, and both `start` and `len`
/// multiples of `ratio`.
pub fn segment_bounds(
    gap: GapRange,
    pad: usize,
    ratio: usize,
    n_cols: usize,
) -> Result<(usize, usize)> {
    let ratio = ratio.max(1);
    let context_err = |reason: String| Error::Context {
        start: gap.start,
        end: gap.end,
        reason,
    };
    if gap.start < pad {
        return Err(context_err(format!(
            "needs {pad} columns before the gap, only {} available",
            gap.start
        )));
    }
    let start = (gap.start - pad) / ratio * ratio;
    let end = (gap.end + pad + 1).div_ceil(ratio) * ratio;
    if end > n_cols {
        return Err(context_err(format!(
            "aligned segment would end at column {end}, beyond {n_cols}"
        )));
    }
    Ok((start, end - start))
}

/// Cuts the aligned segment around `gap` out of the observation.
pub fn extract_segment(
    observed: &Spectrogram,
    mask: &ColumnMask,
    gap: GapRange,
    pad: usize,
) -> Result<(GapSegment, Spectrogram)> {
    if pad == 0 {
        return Err(Error::invalid("pad must be >= 1"));
    }
    let cfg = observed.config();
    let ratio = cfg.frame_ratio();
    if ratio == 0 {
        return Err(Error::invalid(format!(
            "hop {} does not divide channel count {}",
            cfg.hop, cfg.channels
        )));
    }
    if mask.n_cols() != observed.cols() {
        return Err(Error::invalid("mask does not match spectrogram width"));
    }
    let (start, len) = segment_bounds(gap, pad, ratio, observed.cols())?;
    let context = (gap.start - pad..gap.start).chain(gap.end + 1..=gap.end + pad);
    for c in context {
        if mask.is_missing(c) {
            return Err(Error::Context {
                start: gap.start,
                end: gap.end,
                reason: format!("context column {c} is itself missing"),
            });
        }
    }
    debug_assert!(start % ratio == 0 && len % ratio == 0);
    let segment = observed.columns(start, len)?;
    Ok((
        GapSegment {
            gap,
            start,
            len,
            peak: 1.0,
            local_mask: mask.window(start, len),
        },
        segment,
    ))
}

/// Divides by the time-domain peak of the segment. An all-zero segment is
/// returned unchanged with peak 1.
pub fn peak_normalize(segment: &Spectrogram) -> Result<(Spectrogram, f64)> {
    let stft = Stft::tight_hann(*segment.config())?;
    peak_normalize_with(&stft, segment)
}

pub fn peak_normalize_with(stft: &Stft, segment: &Spectrogram) -> Result<(Spectrogram, f64)> {
    let x = stft.adjoint(segment.data())?;
    let peak = x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return Ok((segment.clone(), 1.0));
    }
    Ok((segment.scaled(1.0 / peak), peak))
}

pub fn denormalize(segment: &Spectrogram, peak: f64) -> Spectrogram {
    segment.scaled(peak)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Outer IF updates around the generalized Chambolle-Pock solver.
    Uphain,
    /// IF estimated once from the observation.
    Bphain,
    /// IF estimated once from a ground-truth reference.
    BphainOracle,
    /// Primal variable in the spectrogram domain.
    TfOnly,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Uphain,
        Method::Bphain,
        Method::BphainOracle,
        Method::TfOnly,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Uphain => "uphain",
            Method::Bphain => "bphain",
            Method::BphainOracle => "bphain-oracle",
            Method::TfOnly => "tf-only",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "uphain" => Ok(Method::Uphain),
            "bphain" => Ok(Method::Bphain),
            "bphain-oracle" => Ok(Method::BphainOracle),
            "tf-only" | "tfonly" => Ok(Method::TfOnly),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Per-gap outcome of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentReport {
    pub segment: GapSegment,
    pub outer_iters_used: usize,
    pub trace: Vec<TraceEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InpaintOutput {
    pub spectrogram: Spectrogram,
    pub segments: Vec<SegmentReport>,
}

/// Configured pipeline; reusable across inputs with the same frame geometry.
#[derive(Debug, Clone)]
pub struct Inpainter {
    pub method: Method,
    pub solver: SolverConfig,
    pub pad: usize,
    /// Worker threads for gap-level parallelism (1 = sequential).
    pub jobs: usize,
    pub trace: bool,
}

impl Inpainter {
    pub fn new(method: Method, solver: SolverConfig) -> Self {
        Self {
            method,
            solver,
            pad: DEFAULT_PAD,
            jobs: 1,
            trace: false,
        }
    }

    pub fn with_pad(mut self, pad: usize) -> Self {
        self.pad = pad;
        self
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs.max(1);
        self
    }

    pub fn with_trace(mut self, trace: bool) -> Self {
        self.trace = trace;
        self
    }

    /// Inpaints every gap of `mask` independently and writes the de-normalized
    /// gap columns back into a copy of `observed`. `reference` is the
    /// ground-truth signal, required by [`Method::BphainOracle`].
    pub fn run(
        &self,
        observed: &Spectrogram,
        mask: &ColumnMask,
        reference: Option<&[f64]>,
    ) -> Result<InpaintOutput> {
        self.solver.validate()?;
        let cfg = *observed.config();
        if mask.n_cols() != observed.cols() {
            return Err(Error::invalid(format!(
                "mask covers {} columns, spectrogram has {}",
                mask.n_cols(),
                observed.cols()
            )));
        }
        if self.method == Method::BphainOracle {
            match reference {
                Some(r) if r.len() == cfg.signal_len => {}
                Some(r) => {
                    return Err(Error::invalid(format!(
                        "reference has {} samples, expected {}",
                        r.len(),
                        cfg.signal_len
                    )))
                }
                None => return Err(Error::invalid("oracle method needs a reference signal")),
            }
        }
        let gaps = find_gaps(mask);
        // Validate all segments before spending time on any solve.
        let segments = gaps
            .iter()
            .map(|&g| extract_segment(observed, mask, g, self.pad))
            .collect::<Result<Vec<_>>>()?;

        let stft = Stft::tight_hann(cfg)?;
        let estimator = IfEstimator::hann(cfg)?;
        let solve = |(seg, spec): &(GapSegment, Spectrogram)| {
            self.solve_segment(&stft, &estimator, seg.clone(), spec, reference)
        };
        let results: Vec<Result<(SegmentReport, Spectrogram)>> = if self.jobs <= 1 {
            segments.iter().map(solve).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.jobs)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            pool.install(|| segments.par_iter().map(solve).collect())
        };

        let mut out = observed.clone();
        let mut reports = Vec::with_capacity(results.len());
        for res in results {
            let (report, solved) = res?;
            let seg = &report.segment;
            for c in seg.gap.columns() {
                out.data_mut()
                    .col_mut(c)
                    .copy_from_slice(solved.data().col(c - seg.start));
            }
            reports.push(report);
        }
        Ok(InpaintOutput {
            spectrogram: out,
            segments: reports,
        })
    }

    fn solve_segment(
        &self,
        stft: &Stft,
        estimator: &IfEstimator,
        mut seg: GapSegment,
        spec: &Spectrogram,
        reference: Option<&[f64]>,
    ) -> Result<(SegmentReport, Spectrogram)> {
        let seg_cfg: StftConfig = *spec.config();
        let seg_stft = stft.with_signal_len(seg_cfg.signal_len)?;
        let (normalized, peak) = peak_normalize_with(&seg_stft, spec)?;
        seg.peak = peak;
        let problem =
            InpaintProblem::new(seg_stft, seg.local_mask.clone(), normalized.into_data())?;
        let mut events = Vec::new();
        let mut record = |e: &TraceEvent| events.push(*e);
        let trace: Option<&mut crate::solver::TraceFn<'_>> =
            if self.trace { Some(&mut record) } else { None };
        let ref_segment;
        let solved = match self.method {
            Method::Uphain => uphain_tf(&problem, estimator, &self.solver, trace)?,
            Method::Bphain => bphain_tf(
                &problem,
                estimator,
                &self.solver,
                IfSource::Corrupted,
                trace,
            )?,
            Method::BphainOracle => {
                let r = reference.expect("checked by caller");
                let a = seg_cfg.hop;
                ref_segment = &r[seg.start * a..(seg.start + seg.len) * a];
                bphain_tf(
                    &problem,
                    estimator,
                    &self.solver,
                    IfSource::Oracle(ref_segment),
                    trace,
                )?
            }
            Method::TfOnly => cpa_tf_only(&problem, estimator, &self.solver)?,
        };
        let restored: CMatrix = solved.spectrogram;
        let restored = denormalize(&Spectrogram::new(restored, seg_cfg)?, peak);
        Ok((
            SegmentReport {
                segment: seg,
                outer_iters_used: solved.outer_iters_used,
                trace: events,
            },
            restored,
        ))
    }
}

/// Convenience wrapper around [`Inpainter::run`] returning only the spectrogram.
pub fn inpaint_spectrogram(
    observed: &Spectrogram,
    mask: &ColumnMask,
    method: Method,
    solver: &SolverConfig,
    pad: usize,
    reference: Option<&[f64]>,
) -> Result<Spectrogram> {
    Ok(Inpainter::new(method, *solver)
        .with_pad(pad)
        .run(observed, mask, reference)?
        .spectrogram)
}
