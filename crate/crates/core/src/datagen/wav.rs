use std::path::Path;

use hound::{SampleFormat, WavReader};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Framing of a recording into signal vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct WavOptions {
    pub frame_len: usize,
    pub downsample: usize,
    pub sample_rate_hz: u32,
}

impl Default for WavOptions {
    fn default() -> Self {
        Self {
            frame_len: 1000,
            downsample: 2,
            sample_rate_hz: 16_000,
        }
    }
}

/// Reads a mono WAV file, scales it to max-abs 1, cuts non-overlapping frames
/// of `frame_len` samples (dropping the remainder) and keeps every
/// `downsample`-th sample of each frame starting with the first.
///
/// Returns one frame per column.
pub fn ingest_wav(path: &Path, opts: &WavOptions) -> Result<DMatrix<f64>> {
    let fail = |reason: String| Error::Wav {
        path: path.to_path_buf(),
        reason,
    };
    if opts.frame_len == 0 || opts.downsample == 0 {
        return Err(fail("frame length and downsampling factor must be positive".into()));
    }
    let reader = WavReader::open(path).map_err(|e| fail(format!("cannot read WAV: {e}")))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(fail(format!("expected mono, found {} channels", spec.channels)));
    }
    if spec.sample_rate != opts.sample_rate_hz {
        return Err(fail(format!(
            "expected {} Hz, found {} Hz",
            opts.sample_rate_hz, spec.sample_rate
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (fmt, bits) => {
            return Err(fail(format!(
                "expected 16-bit PCM or 32-bit float, found {bits}-bit {fmt:?}"
            )))
        }
    }
    .map_err(|e| fail(format!("corrupt sample data: {e}")))?;

    let peak = samples.iter().fold(0.0f64, |a, &s| a.max(s.abs()));
    if !(peak > 0.0) {
        return Err(fail("recording is silent (max |s| = 0)".into()));
    }
    let n = opts.frame_len.div_ceil(opts.downsample);
    let frames = samples.len() / opts.frame_len;
    let mut out = DMatrix::zeros(n, frames);
    for (j, frame) in samples.chunks_exact(opts.frame_len).enumerate() {
        for (i, s) in frame.iter().step_by(opts.downsample).enumerate() {
            out[(i, j)] = s / peak;
        }
    }
    Ok(out)
}
