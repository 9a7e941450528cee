//! On-disk formats: 16-bit mono WAV, JSON column masks, binary spectrograms,
//! result tables and solver traces.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use tfpaint_core::eval::EvalRecord;
use tfpaint_core::pipeline::SegmentReport;
use tfpaint_core::{CMatrix, ColumnMask, Complex64, Spectrogram, StftConfig};

pub const SPGM_MAGIC: &[u8; 5] = b"SPGM1";
pub const EXPECTED_RATE: u32 = 16_000;
const I16_SCALE: f64 = 32768.0;

/// Refuses to overwrite an existing file unless `force` is set.
pub fn check_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!("{} exists; pass --force to overwrite", path.display());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

pub fn read_wav(path: &Path) -> Result<Audio> {
    let mut reader =
        hound::WavReader::open(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = reader.spec();
    ensure!(
        spec.channels == 1,
        "{}: expected mono audio, found {} channels",
        path.display(),
        spec.channels
    );
    ensure!(
        spec.sample_format == hound::SampleFormat::Int && spec.bits_per_sample == 16,
        "{}: expected 16-bit PCM",
        path.display()
    );
    if spec.sample_rate != EXPECTED_RATE {
        eprintln!(
            "warning: {} is sampled at {} Hz; presets assume {EXPECTED_RATE} Hz",
            path.display(),
            spec.sample_rate
        );
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / I16_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("decoding {}", path.display()))?;
    Ok(Audio {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Quantizes to 16 bits (round to nearest, clipped to full scale).
pub fn write_wav(path: &Path, audio: &Audio) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .with_context(|| format!("writing {}", path.display()))?;
    let mut clipped = 0usize;
    for &s in &audio.samples {
        let v = (s * I16_SCALE).round();
        if !(i16::MIN as f64..=i16::MAX as f64).contains(&v) {
            clipped += 1;
        }
        writer.write_sample(v.clamp(i16::MIN as f64, i16::MAX as f64) as i16)?;
    }
    writer.finalize()?;
    if clipped > 0 {
        eprintln!(
            "warning: {clipped} samples clipped while writing {}",
            path.display()
        );
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFile {
    pub n_cols: usize,
    pub hop: usize,
    pub zero_cols: Vec<usize>,
}

impl MaskFile {
    pub fn from_mask(mask: &ColumnMask, hop: usize) -> Self {
        Self {
            n_cols: mask.n_cols(),
            hop,
            zero_cols: mask.zero_cols().to_vec(),
        }
    }

    pub fn to_mask(&self) -> Result<ColumnMask> {
        Ok(ColumnMask::new(self.n_cols, self.zero_cols.clone())?)
    }
}

pub fn read_mask(path: &Path) -> Result<MaskFile> {
    let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing mask {}", path.display()))
}

pub fn write_mask(path: &Path, mask: &MaskFile) -> Result<()> {
    let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, mask)?;
    writeln!(w)?;
    Ok(())
}

pub fn write_spectrogram(path: &Path, spec: &Spectrogram) -> Result<()> {
    let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    let mut w = BufWriter::new(file);
    encode_spectrogram(&mut w, spec)?;
    w.flush()?;
    Ok(())
}

pub fn encode_spectrogram(w: &mut impl Write, spec: &Spectrogram) -> Result<()> {
    let cfg = spec.config();
    w.write_all(SPGM_MAGIC)?;
    for v in [cfg.channels, spec.cols(), cfg.hop, cfg.window_len] {
        w.write_all(&u32::try_from(v)?.to_le_bytes())?;
    }
    // frequency-major: row by row
    for m in 0..spec.rows() {
        for n in 0..spec.cols() {
            let z = spec.data().get(m, n);
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_spectrogram(path: &Path) -> Result<Spectrogram> {
    let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    decode_spectrogram(&mut BufReader::new(file))
        .with_context(|| format!("parsing spectrogram {}", path.display()))
}

pub fn decode_spectrogram(r: &mut impl Read) -> Result<Spectrogram> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    ensure!(&magic == SPGM_MAGIC, "bad magic {magic:?}");
    let mut word = [0u8; 4];
    let mut header = [0usize; 4];
    for h in &mut header {
        r.read_exact(&mut word)?;
        *h = u32::from_le_bytes(word) as usize;
    }
    let [channels, cols, hop, window_len] = header;
    let cfg = StftConfig::new(window_len, hop, channels, cols * hop)?;
    let mut data = CMatrix::zeros(channels, cols);
    let mut pair = [0u8; 16];
    for m in 0..channels {
        for n in 0..cols {
            r.read_exact(&mut pair)?;
            let re = f64::from_le_bytes(pair[..8].try_into().unwrap());
            let im = f64::from_le_bytes(pair[8..].try_into().unwrap());
            data.set(m, n, Complex64::new(re, im));
        }
    }
    let mut rest = [0u8; 1];
    ensure!(
        r.read(&mut rest)? == 0,
        "trailing bytes after spectrogram data"
    );
    Ok(Spectrogram::new(data, cfg)?)
}

/// True when the file starts with the spectrogram magic.
pub fn is_spectrogram_file(path: &Path) -> Result<bool> {
    let mut magic = [0u8; 5];
    let mut f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(f.read(&mut magic)? == 5 && &magic == SPGM_MAGIC)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub gap_cols: usize,
    pub signal: String,
    pub snr_db: f64,
    pub runtime_s: f64,
    pub lambda: f64,
}

impl From<&EvalRecord> for ResultRow {
    fn from(r: &EvalRecord) -> Self {
        Self {
            method: r.method.clone(),
            gap_cols: r.mask_gap_cols,
            signal: r.signal_id.clone(),
            snr_db: r.snr_db,
            runtime_s: r.runtime_s,
            lambda: r.lambda,
        }
    }
}

/// CSV table plus a JSON array with the same rows. Infinite SNRs appear as
/// `inf` in CSV and `null` in JSON.
pub fn write_results(csv_path: &Path, json_path: Option<&Path>, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    if let Some(p) = json_path {
        let file = File::create(p).with_context(|| format!("writing {}", p.display()))?;
        let mut jw = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut jw, rows)?;
        writeln!(jw)?;
    }
    Ok(())
}

#[cfg(test)]
pub fn read_results(csv_path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(csv_path)
        .with_context(|| format!("reading {}", csv_path.display()))?;
    Ok(r.deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

/// `segment,gap_start,gap_end,outer,iteration,objective,feasibility_residual`
pub fn write_trace(path: &Path, segments: &[SegmentReport]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record([
        "segment",
        "gap_start",
        "gap_end",
        "outer",
        "iteration",
        "objective",
        "feasibility_residual",
    ])?;
    for (i, seg) in segments.iter().enumerate() {
        for e in &seg.trace {
            w.write_record([
                i.to_string(),
                seg.segment.gap.start.to_string(),
                seg.segment.gap.end.to_string(),
                e.outer.to_string(),
                e.iteration.to_string(),
                e.objective.to_string(),
                e.feasibility_residual.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
