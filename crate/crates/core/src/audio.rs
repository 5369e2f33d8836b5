//! PCM waveforms and WAV file I/O.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_RATE: u32 = 24_000;

/// Mono audio with samples clamped to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    rate: u32,
}

impl Waveform {
    pub fn new(mut samples: Vec<f32>, rate: u32) -> Self {
        for s in &mut samples {
            *s = if s.is_finite() { s.clamp(-1.0, 1.0) } else { 0.0 };
        }
        Self { samples, rate }
    }

    pub fn from_f64(samples: &[f64], rate: u32) -> Self {
        Self::new(samples.iter().map(|&s| s as f32).collect(), rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64).collect()
    }

    /// Linear-interpolation resampling.
    pub fn resampled(&self, rate: u32) -> Waveform {
        if rate == self.rate || self.samples.is_empty() {
            return Waveform { samples: self.samples.clone(), rate };
        }
        let ratio = self.rate as f64 / rate as f64;
        let n = ((self.samples.len() as f64) / ratio).floor().max(1.0) as usize;
        let last = self.samples.len() - 1;
        let out = (0..n)
            .map(|i| {
                let pos = i as f64 * ratio;
                let j = (pos.floor() as usize).min(last);
                let frac = (pos - j as f64) as f32;
                let a = self.samples[j];
                let b = self.samples[(j + 1).min(last)];
                a + (b - a) * frac
            })
            .collect();
        Waveform::new(out, rate)
    }

    pub fn to_wav_bytes(&self) -> Result<Vec<u8>> {
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(&mut cursor, wav_spec(self.rate))?;
            for &s in &self.samples {
                w.write_sample(quantize(s))?;
            }
            w.finalize()?;
        }
        Ok(cursor.into_inner())
    }

    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let bytes = self.to_wav_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn from_wav_bytes(bytes: &[u8]) -> Result<Waveform> {
        read_from(hound::WavReader::new(Cursor::new(bytes))?)
    }

    pub fn read_wav(path: &Path) -> Result<Waveform> {
        let reader = hound::WavReader::open(path).map_err(|e| match e {
            hound::Error::IoError(io) => Error::io(path, io),
            other => Error::Wav(other),
        })?;
        read_from(reader)
    }
}

fn wav_spec(rate: u32) -> hound::WavSpec {
    hound::WavSpec { channels: 1, sample_rate: rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int }
}

fn quantize(s: f32) -> i16 {
    (s.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

fn read_from<R: std::io::Read>(reader: hound::WavReader<R>) -> Result<Waveform> {
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::invalid(format!("expected mono audio, found {} channels", spec.channels)));
    }
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => {
            reader.into_samples::<i16>().map(|s| s.map(|v| v as f32 / 32768.0)).collect::<Result<_, _>>()?
        }
        (hound::SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<Result<_, _>>()?,
        (fmt, bits) => return Err(Error::invalid(format!("unsupported sample format {fmt:?}/{bits}"))),
    };
    Ok(Waveform::new(samples, spec.sample_rate))
}
