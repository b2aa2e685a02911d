use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const BASELINE: f64 = 0.2;

/// One raised-cosine burst of the amplitude envelope.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Burst {
    /// 1-based sample position of the peak.
    pub center: f64,
    /// Full support in samples.
    pub width: f64,
    /// Height above the baseline at the center.
    pub amplitude: f64,
}

/// Baseline 0.2 plus the given bursts, evaluated at `t = 1..len`.
pub fn envelope_from_bursts(len: usize, bursts: &[Burst]) -> DVector<f64> {
    DVector::from_fn(len, |i, _| {
        let t = (i + 1) as f64;
        BASELINE
            + bursts
                .iter()
                .map(|b| {
                    let d = t - b.center;
                    if d.abs() < b.width / 2.0 {
                        b.amplitude * 0.5 * (1.0 + (2.0 * PI * d / b.width).cos())
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
    })
}

/// 1 to 5 bursts with centers in `[1, len]`, widths in `[100, 400]` and
/// amplitudes in `[0.5, 1.5]`.
pub fn bursty_envelope<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<f64> {
    let count = rng.random_range(1..=5usize);
    let bursts: Vec<Burst> = (0..count)
        .map(|_| Burst {
            center: rng.random_range(1.0..=len.max(1) as f64),
            width: rng.random_range(100.0..=400.0),
            amplitude: rng.random_range(0.5..=1.5),
        })
        .collect();
    envelope_from_bursts(len, &bursts)
}

/// Intermediate signals of one wind-noise draw.
#[derive(Clone, Debug, PartialEq)]
pub struct WindStages {
    /// Brownian motion scaled to `max |b| = 1`.
    pub brownian: DVector<f64>,
    pub lowpass: DVector<f64>,
    pub envelope: DVector<f64>,
    pub noise: DVector<f64>,
}

/// Wind-noise generator for a fixed length; holds the FFT plans.
#[derive(Clone)]
pub struct WindNoise {
    len: usize,
    cutoff_hz: f64,
    sample_rate_hz: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for WindNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WindNoise")
            .field("len", &self.len)
            .field("cutoff_hz", &self.cutoff_hz)
            .field("sample_rate_hz", &self.sample_rate_hz)
            .finish()
    }
}

impl WindNoise {
    pub fn new(len: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidArgument(format!("wind noise needs length >= 2, got {len}")));
        }
        if !(cutoff_hz > 0.0 && sample_rate_hz > 0.0) {
            return Err(Error::InvalidArgument("wind noise frequencies must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            cutoff_hz,
            sample_rate_hz,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Whether DFT bin `k` lies above the cutoff.
    pub fn masked(&self, k: usize) -> bool {
        let folded = k.min(self.len - k) as f64;
        folded * self.sample_rate_hz / self.len as f64 > self.cutoff_hz
    }

    /// Zero-phase hard mask in the DFT domain.
    pub fn lowpass(&self, b: &[f64]) -> DVector<f64> {
        assert_eq!(b.len(), self.len, "lowpass input length");
        let mut buf: Vec<Complex<f64>> = b.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            if self.masked(k) {
                *c = Complex::new(0.0, 0.0);
            }
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        DVector::from_iterator(self.len, buf.iter().map(|c| c.re * scale))
    }

    pub fn stages<R: Rng + ?Sized>(&self, rng: &mut R) -> WindStages {
        let n = self.len;
        let mut beta = DVector::zeros(n);
        let mut acc = 0.0;
        for v in beta.iter_mut() {
            acc += rng.sample::<f64, _>(StandardNormal);
            *v = acc;
        }
        let peak = beta.amax();
        let brownian = if peak > 0.0 { beta / peak } else { beta };
        let lowpass = self.lowpass(brownian.as_slice());
        let envelope = bursty_envelope(rng, n);
        let mut noise = DVector::zeros(n);
        for t in 0..n {
            let f = rng.random_range(0.1..=0.5);
            let phi = rng.random_range(0.0..2.0 * PI);
            let eps: f64 = rng.sample(StandardNormal);
            let modulation = 1.0 + 0.1 * (2.0 * PI * f * t as f64 / self.sample_rate_hz + phi).sin();
            noise[t] = lowpass[t] * envelope[t] * modulation + eps / 1000.0;
        }
        WindStages {
            brownian,
            lowpass,
            envelope,
            noise,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.stages(rng).noise
    }
}
