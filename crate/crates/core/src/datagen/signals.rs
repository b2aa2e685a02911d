use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

/// Midpoint grid `t_j = (j − ½)/n`, `j = 1..n`.
pub fn plateau_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|j| (j as f64 - 0.5) / n as f64).collect()
}

/// Piecewise-constant nonnegative signal
/// `x(t) = Σᵢ (aᵢ² + 0.01) χ[cᵢ − bᵢ, cᵢ + bᵢ](t)` with `k ∈ {2..5}`,
/// `aᵢ ~ N(0,1)`, `bᵢ ~ U[0,1]`, `cᵢ ~ U[0,0.15]`, sampled on
/// [`plateau_grid`].
pub fn gen_plateau_signal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    let k = rng.random_range(2..=5usize);
    let parts: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b = rng.random_range(0.0..1.0);
            let c = rng.random_range(0.0..0.15);
            (a, b, c)
        })
        .collect();
    plateau_from_parts(n, &parts)
}

/// The plateau signal for explicit `(aᵢ, bᵢ, cᵢ)` triples.
pub fn plateau_from_parts(n: usize, parts: &[(f64, f64, f64)]) -> DVector<f64> {
    let grid = plateau_grid(n);
    let mut x = DVector::zeros(n);
    for &(a, b, c) in parts {
        let height = a * a + 0.01;
        let (lo, hi) = (c - b, c + b);
        for (xi, &t) in x.iter_mut().zip(&grid) {
            if t >= lo && t <= hi {
                *xi += height;
            }
        }
    }
    x
}

/// Parameters of the synthetic speech stand-in.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeechLikeParams {
    pub sample_rate_hz: f64,
    pub min_partials: usize,
    pub max_partials: usize,
    pub min_hz: f64,
    pub max_hz: f64,
}

impl Default for SpeechLikeParams {
    fn default() -> Self {
        Self {
            sample_rate_hz: 8000.0,
            min_partials: 3,
            max_partials: 8,
            min_hz: 80.0,
            max_hz: 3500.0,
        }
    }
}

/// Sum of amplitude-modulated sinusoids with Hann-shaped onsets, scaled to a
/// random peak in `[0.2, 1]`.
pub fn gen_speech_like<R: Rng + ?Sized>(rng: &mut R, n: usize, p: &SpeechLikeParams) -> DVector<f64> {
    let gain = rng.random_range(0.2..=1.0);
    let partials = rng.random_range(p.min_partials..=p.max_partials.max(p.min_partials));
    let mut x = DVector::zeros(n);
    for _ in 0..partials {
        let freq = rng.random_range(p.min_hz..=p.max_hz);
        // low partials carry more energy, as in voiced speech
        let amp = rng.random_range(0.1..=1.0) * (p.min_hz / freq).sqrt();
        let phase = rng.random_range(0.0..2.0 * PI);
        let am_hz = rng.random_range(1.0..=12.0);
        let am_depth = rng.random_range(0.0..=0.8);
        let am_phase = rng.random_range(0.0..2.0 * PI);
        let onset = rng.random_range(0.0..=0.6 * n as f64);
        let ramp = rng.random_range(16.0..=(n as f64 / 4.0).max(17.0));
        for (t, xi) in x.iter_mut().enumerate() {
            let tf = t as f64;
            let window = if tf < onset {
                0.0
            } else if tf < onset + ramp {
                0.5 * (1.0 - (PI * (tf - onset) / ramp).cos())
            } else {
                1.0
            };
            if window == 0.0 {
                continue;
            }
            let secs = tf / p.sample_rate_hz;
            let envelope = 1.0 + am_depth * (2.0 * PI * am_hz * secs + am_phase).sin();
            *xi += window * amp * envelope * (2.0 * PI * freq * secs + phase).sin();
        }
    }
    let peak = x.amax();
    if peak > 0.0 {
        x *= gain / peak;
    }
    x
}
