//! WAV and JSON file helpers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use arraysep::{ArrayGeometry, Error, Result, TimeSignal};
use serde::Serialize;

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => Error::InvalidInput(format!("{}: {other}", path.display())),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Reads 16/24/32-bit integer or 32-bit float PCM, scaled to `[−1, 1)`.
pub fn read_wav(path: &Path) -> Result<TimeSignal> {
    let reader = hound::WavReader::new(BufReader::new(open(path)?)).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let n = spec.channels as usize;
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_error(path, e))?
        }
    };
    if n == 0 || samples.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no audio samples", path.display())));
    }
    let mut channels = vec![Vec::with_capacity(samples.len() / n); n];
    for (i, v) in samples.into_iter().enumerate() {
        channels[i % n].push(v);
    }
    TimeSignal::new(channels, spec.sample_rate as f64)
}

/// Reads several WAV files and stacks all their channels in order.
pub fn read_stack(paths: &[std::path::PathBuf]) -> Result<TimeSignal> {
    let mut channels = Vec::new();
    let mut rate = None;
    for p in paths {
        let sig = read_wav(p)?;
        if rate.is_some_and(|r| r != sig.sample_rate) {
            return Err(Error::InvalidInput(format!("{}: sample rate differs from the other files", p.display())));
        }
        rate = Some(sig.sample_rate);
        channels.extend(sig.channels);
    }
    let rate = rate.ok_or_else(|| Error::InvalidInput("no WAV files given".into()))?;
    if channels.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(Error::InvalidInput("files differ in length".into()));
    }
    TimeSignal::new(channels, rate)
}

/// Writes 32-bit float PCM.
pub fn write_wav(path: &Path, signal: &TimeSignal) -> Result<()> {
    let spec = hound::WavSpec {
        channels: signal.n_channels() as u16,
        sample_rate: signal.sample_rate.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for i in 0..signal.len() {
        for ch in &signal.channels {
            w.write_sample(ch[i] as f32).map_err(|e| wav_error(path, e))?;
        }
    }
    w.finalize().map_err(|e| wav_error(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_geometry(path: &Path) -> Result<ArrayGeometry> {
    ArrayGeometry::from_json(&read_text(path)?)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes `value` to `path`, or to stdout when no path is given.
pub fn emit<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    match path {
        Some(p) => write_json(p, value),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.into()))?;
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}").and_then(|_| out.flush()) {
                // A closed reader (`| head`) is not an error of ours.
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => r.map_err(Error::Io),
            }
        }
    }
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}
