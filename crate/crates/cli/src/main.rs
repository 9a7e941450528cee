mod formats;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tfpaint_core::eval::{
    self, compare_methods, default_lambda_grid, make_test_signal, summarize, sweep_lambda,
    synthetic_suite, Experiment, SignalKind,
};
use tfpaint_core::pipeline::{apply_mask, MaskPlacement, MaskSpec, DEFAULT_PAD};
use tfpaint_core::stft::{DEFAULT_CHANNELS, DEFAULT_HOP, DEFAULT_WINDOW_LEN};
use tfpaint_core::{
    make_mask, Inpainter, Method, SolverConfig, Spectrogram, Stft, StftConfig, ThresholdKind,
};

use formats::{
    check_writable, is_spectrogram_file, read_mask, read_spectrogram, read_wav, write_mask,
    write_results, write_spectrogram, write_trace, write_wav, Audio, MaskFile, ResultRow,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_DIVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "tfpaint",
    version,
    about = "Phase-aware spectrogram inpainting"
)]
struct Cli {
    /// Worker threads for per-gap parallelism.
    #[arg(long, global = true, env = "TFPAINT_JOBS", default_value_t = 1)]
    jobs: usize,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Restore the missing columns of a corrupted spectrogram (or WAV).
    Inpaint(InpaintArgs),
    /// Write a one-gap-per-second column mask.
    MakeMask(MakeMaskArgs),
    /// Zero the masked columns of a clean WAV's spectrogram.
    Corrupt(CorruptArgs),
    /// Print the SNR of a test WAV against a reference WAV.
    Snr(SnrArgs),
    /// Lambda sweep of the outer-loop method over the synthetic suite.
    Sweep(SweepArgs),
    /// Compare methods over the synthetic suite.
    Compare(CompareArgs),
    /// Write a synthetic test signal.
    GenSignal(GenSignalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ThresholdArg {
    Soft,
    Pshrink,
    Smoothhard,
    L2,
    L2sq,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "soft")]
    threshold: ThresholdArg,
    /// Defaults depend on --threshold (soft 0.01, pshrink 0.01,
    /// smoothhard 0.001, l2 1, l2sq 0.2).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = ThresholdKind::DEFAULT_P)]
    p: f64,
    #[arg(long, default_value_t = ThresholdKind::DEFAULT_ALPHA)]
    alpha: f64,
    /// Inner iterations per outer step.
    #[arg(long, default_value_t = 500)]
    inner: usize,
    /// Maximum outer iterations.
    #[arg(long, default_value_t = 10)]
    outer: usize,
    /// Outer stopping threshold on the change of the signal estimate.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Reliable context columns on each side of a gap.
    #[arg(long, default_value_t = DEFAULT_PAD)]
    pad: usize,
}

impl SolverArgs {
    fn solver(&self) -> Result<SolverConfig> {
        let threshold = match self.threshold {
            ThresholdArg::Soft => ThresholdKind::Soft,
            ThresholdArg::Pshrink => ThresholdKind::PShrinkage { p: self.p },
            ThresholdArg::Smoothhard => ThresholdKind::SmoothHard { alpha: self.alpha },
            ThresholdArg::L2 => ThresholdKind::L2Block,
            ThresholdArg::L2sq => ThresholdKind::L2Squared,
        };
        let cfg = SolverConfig {
            lambda: self.lambda.unwrap_or_else(|| threshold.default_lambda()),
            inner_iters: self.inner,
            outer_iters: self.outer,
            epsilon: self.eps,
            threshold,
            ..SolverConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct InpaintArgs {
    /// Corrupted spectrogram (SPGM1) or WAV file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Restored WAV.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "uphain")]
    method: Method,
    /// Clean WAV, required by bphain-oracle.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Also write the restored spectrogram.
    #[arg(long)]
    spectrogram_out: Option<PathBuf>,
    /// Per-iteration trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Output rate when the input is a spectrogram file.
    #[arg(long, default_value_t = eval::SAMPLE_RATE)]
    sample_rate: u32,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    Center,
    Random,
}

#[derive(Args)]
struct MakeMaskArgs {
    #[arg(long)]
    seconds: f64,
    #[arg(long)]
    gap_cols: usize,
    #[arg(long, default_value_t = eval::SAMPLE_RATE)]
    sample_rate: u32,
    #[arg(long, default_value_t = DEFAULT_HOP)]
    hop: usize,
    #[arg(long, default_value_t = DEFAULT_CHANNELS)]
    channels: usize,
    #[arg(long, default_value_t = DEFAULT_PAD)]
    pad: usize,
    #[arg(long, value_enum, default_value = "center")]
    placement: PlacementArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct CorruptArgs {
    /// Clean WAV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Corrupted spectrogram (SPGM1).
    #[arg(long)]
    output: PathBuf,
    /// Also write the zero-filled synthesis as WAV.
    #[arg(long)]
    wav: Option<PathBuf>,
}

#[derive(Args)]
struct SnrArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct SuiteArgs {
    /// Suite seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Use only the first N suite signals.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 4)]
    gap_cols: usize,
    /// Comma-separated values; defaults to 1e-7 .. 1e2 in decades.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[command(flatten)]
    suite: SuiteArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
    gaps: Vec<usize>,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "uphain,bphain,bphain-oracle,tf-only"
    )]
    methods: Vec<Method>,
    #[command(flatten)]
    suite: SuiteArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Tone,
    Multitone,
    Chirp,
    Noise,
}

#[derive(Args)]
struct GenSignalArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long, default_value_t = 5.0)]
    seconds: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tone frequency or chirp start (Hz).
    #[arg(long, default_value_t = 440.0)]
    freq: f64,
    /// Chirp end frequency (Hz).
    #[arg(long, default_value_t = 880.0)]
    freq_end: f64,
    /// Number of multitone components.
    #[arg(long, default_value_t = 3)]
    tones: usize,
    #[arg(long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<tfpaint_core::Error>() {
                Some(tfpaint_core::Error::Divergence { .. }) => ExitCode::from(EXIT_DIVERGENCE),
                _ => ExitCode::from(EXIT_FAILURE),
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let jobs = cli.jobs.max(1);
    match cli.command {
        Command::Inpaint(a) => cmd_inpaint(a, jobs, cli.force),
        Command::MakeMask(a) => cmd_make_mask(a, cli.force),
        Command::Corrupt(a) => cmd_corrupt(a, cli.force),
        Command::Snr(a) => cmd_snr(a),
        Command::Sweep(a) => cmd_sweep(a, jobs, cli.force),
        Command::Compare(a) => cmd_compare(a, jobs, cli.force),
        Command::GenSignal(a) => cmd_gen_signal(a, cli.force),
    }
}

fn standard_config(hop: usize, signal_len: usize) -> Result<StftConfig> {
    Ok(StftConfig::new(
        DEFAULT_WINDOW_LEN,
        hop,
        DEFAULT_CHANNELS,
        signal_len,
    )?)
}

/// Truncates `samples` to the mask's column count.
fn fit_to_mask(mut samples: Vec<f64>, mask: &MaskFile, what: &Path) -> Result<Vec<f64>> {
    let len = mask.n_cols * mask.hop;
    ensure!(
        samples.len() >= len,
        "{} has {} samples, mask needs {len}",
        what.display(),
        samples.len()
    );
    if samples.len() > len {
        eprintln!(
            "note: using the first {len} of {} samples of {}",
            samples.len(),
            what.display()
        );
        samples.truncate(len);
    }
    Ok(samples)
}

fn cmd_inpaint(a: InpaintArgs, jobs: usize, force: bool) -> Result<()> {
    check_writable(&a.output, force)?;
    for p in [&a.spectrogram_out, &a.trace].into_iter().flatten() {
        check_writable(p, force)?;
    }
    let solver = a.solver.solver()?;
    let mask_file = read_mask(&a.mask)?;
    let mask = mask_file.to_mask()?;

    let (observed, sample_rate) = if is_spectrogram_file(&a.input)? {
        let spec = read_spectrogram(&a.input)?;
        ensure!(
            spec.config().hop == mask_file.hop,
            "mask hop {} differs from spectrogram hop {}",
            mask_file.hop,
            spec.config().hop
        );
        (apply_mask(&spec, &mask)?, a.sample_rate)
    } else {
        // the zero-filled synthesis is re-analyzed; reliable columns near gaps
        // only approximate the original coefficients
        let audio = read_wav(&a.input)?;
        let x = fit_to_mask(audio.samples, &mask_file, &a.input)?;
        let stft = Stft::tight_hann(standard_config(mask_file.hop, x.len())?)?;
        (apply_mask(&stft.analyze(&x)?, &mask)?, audio.sample_rate)
    };

    let reference = match &a.reference {
        Some(p) => Some(fit_to_mask(read_wav(p)?.samples, &mask_file, p)?),
        None => None,
    };
    if a.method == Method::BphainOracle && reference.is_none() {
        bail!("--method bphain-oracle needs --reference");
    }

    let out = Inpainter::new(a.method, solver)
        .with_pad(a.solver.pad)
        .with_jobs(jobs)
        .with_trace(a.trace.is_some())
        .run(&observed, &mask, reference.as_deref())?;
    let stft = Stft::tight_hann(*observed.config())?;
    let restored = stft.synthesize(&out.spectrogram)?;
    write_wav(
        &a.output,
        &Audio {
            samples: restored,
            sample_rate,
        },
    )?;
    if let Some(p) = &a.spectrogram_out {
        write_spectrogram(p, &out.spectrogram)?;
    }
    if let Some(p) = &a.trace {
        write_trace(p, &out.segments)?;
    }
    eprintln!(
        "{}: {} gaps restored with {}",
        a.output.display(),
        out.segments.len(),
        a.method
    );
    Ok(())
}

fn cmd_make_mask(a: MakeMaskArgs, force: bool) -> Result<()> {
    check_writable(&a.output, force)?;
    ensure!(
        a.hop > 0 && a.channels % a.hop == 0,
        "channels must be a multiple of hop"
    );
    let spec = MaskSpec {
        duration_s: a.seconds,
        sample_rate: a.sample_rate,
        hop: a.hop,
        frame_ratio: a.channels / a.hop,
        gap_cols: a.gap_cols,
        pad: a.pad,
        placement: match a.placement {
            PlacementArg::Center => MaskPlacement::PerSecondCenter,
            PlacementArg::Random => MaskPlacement::SeededRandom(a.seed),
        },
    };
    let mask = make_mask(&spec)?;
    write_mask(&a.output, &MaskFile::from_mask(&mask, a.hop))?;
    eprintln!(
        "{}: {} of {} columns masked",
        a.output.display(),
        mask.zero_cols().len(),
        mask.n_cols()
    );
    Ok(())
}

fn cmd_corrupt(a: CorruptArgs, force: bool) -> Result<()> {
    check_writable(&a.output, force)?;
    if let Some(p) = &a.wav {
        check_writable(p, force)?;
    }
    let mask_file = read_mask(&a.mask)?;
    let mask = mask_file.to_mask()?;
    let audio = read_wav(&a.input)?;
    let x = fit_to_mask(audio.samples, &mask_file, &a.input)?;
    let stft = Stft::tight_hann(standard_config(mask_file.hop, x.len())?)?;
    let corrupted: Spectrogram = apply_mask(&stft.analyze(&x)?, &mask)?;
    write_spectrogram(&a.output, &corrupted)?;
    if let Some(p) = &a.wav {
        write_wav(
            p,
            &Audio {
                samples: stft.synthesize(&corrupted)?,
                sample_rate: audio.sample_rate,
            },
        )?;
    }
    Ok(())
}

fn format_snr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

fn cmd_snr(a: SnrArgs) -> Result<()> {
    let r = read_wav(&a.reference)?.samples;
    let t = read_wav(&a.test)?.samples;
    let len = r.len().min(t.len());
    if r.len() != t.len() {
        eprintln!("note: comparing the first {len} samples");
    }
    let v = eval::snr(&r[..len], &t[..len]).context("computing SNR")?;
    println!("{}", format_snr(v));
    Ok(())
}

fn load_suite(s: &SuiteArgs) -> Result<Vec<eval::TestSignal>> {
    let mut suite = synthetic_suite(s.seed)?;
    if let Some(n) = s.limit {
        suite.truncate(n);
    }
    ensure!(!suite.is_empty(), "no signals selected");
    Ok(suite)
}

fn emit(s: &SuiteArgs, records: &[eval::EvalRecord]) -> Result<()> {
    let rows: Vec<ResultRow> = records.iter().map(ResultRow::from).collect();
    write_results(&s.csv, s.json.as_deref(), &rows)?;
    for row in summarize(records) {
        println!(
            "{:<14} gap {:>2}  lambda {:<8e} mean SNR {:>8} dB  (n = {})",
            row.method,
            row.mask_gap_cols,
            row.lambda,
            format_snr(row.mean_snr_db),
            row.count
        );
    }
    Ok(())
}

fn experiment(solver: &SolverArgs, jobs: usize) -> Result<Experiment> {
    Ok(Experiment {
        solver: solver.solver()?,
        pad: solver.pad,
        jobs,
        ..Experiment::default()
    })
}

fn cmd_sweep(a: SweepArgs, jobs: usize, force: bool) -> Result<()> {
    check_writable(&a.suite.csv, force)?;
    if let Some(p) = &a.suite.json {
        check_writable(p, force)?;
    }
    let suite = load_suite(&a.suite)?;
    let grid = a.lambdas.clone().unwrap_or_else(default_lambda_grid);
    let records = sweep_lambda(&suite, a.gap_cols, &grid, &experiment(&a.solver, jobs)?)?;
    emit(&a.suite, &records)
}

fn cmd_compare(a: CompareArgs, jobs: usize, force: bool) -> Result<()> {
    check_writable(&a.suite.csv, force)?;
    if let Some(p) = &a.suite.json {
        check_writable(p, force)?;
    }
    let suite = load_suite(&a.suite)?;
    let (records, _) = compare_methods(&suite, &a.gaps, &a.methods, &experiment(&a.solver, jobs)?)?;
    emit(&a.suite, &records)
}

fn cmd_gen_signal(a: GenSignalArgs, force: bool) -> Result<()> {
    check_writable(&a.output, force)?;
    let kind = match a.kind {
        KindArg::Tone => SignalKind::Tone {
            freq_hz: a.freq,
            phase: 0.0,
        },
        KindArg::Multitone => SignalKind::random_multitone(a.tones, a.seed),
        KindArg::Chirp => SignalKind::Chirp {
            f0_hz: a.freq,
            f1_hz: a.freq_end,
        },
        KindArg::Noise => SignalKind::Noise { seed: a.seed },
    };
    let samples = make_test_signal(&kind, a.seconds, eval::SAMPLE_RATE)?;
    write_wav(
        &a.output,
        &Audio {
            samples,
            sample_rate: eval::SAMPLE_RATE,
        },
    )
}
