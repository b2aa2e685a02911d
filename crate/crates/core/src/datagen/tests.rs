use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::moments::noise_moments_from_pairs;

#[test]
fn hat_kernel_examples() {
    let k = hat_kernel(2).unwrap();
    let expect = [1.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0];
    for (a, b) in k.iter().zip(expect) {
        assert!((a - b).abs() < 1e-16);
    }
    let op = ConvolutionOperator::new(hat_kernel(30).unwrap(), 200).unwrap();
    assert_eq!(op.kernel().len(), 60);
    assert_eq!(op.m(), 259);
    assert_eq!(op.matrix().shape(), (259, 200));
    for h in 1..80 {
        let k = hat_kernel(h).unwrap();
        assert_eq!(k.len(), 2 * h);
        assert!((k.iter().sum::<f64>() - 1.0).abs() <= 1e-15, "halfwidth {h}");
        assert!(k.iter().all(|&v| v > 0.0));
    }
    assert!(hat_kernel(0).is_err());
}

#[test]
fn operator_columns_are_shifted_kernels() {
    for kernel in [hat_kernel(5).unwrap(), reverb_kernel(500).unwrap()] {
        let n = kernel.len().min(64);
        let op = ConvolutionOperator::new(kernel.clone(), n).unwrap();
        let a = op.matrix();
        for j in [0, n / 2, n - 1] {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            let col = &a * e;
            for i in 0..op.m() {
                let expect = if i >= j && i - j < kernel.len() { kernel[i - j] } else { 0.0 };
                assert_eq!(col[i], expect);
            }
        }
    }
    assert!(ConvolutionOperator::new(vec![], 3).is_err());
    assert!(ConvolutionOperator::new(vec![f64::NAN], 3).is_err());
}

#[test]
fn reverb_kernel_examples() {
    let v = reverb_kernel(500).unwrap();
    assert_eq!(v[0], 1.0);
    assert_eq!(v[49], 0.8);
    assert_eq!(v[1], 0.0);
    assert!((v[499] - 0.107_374_182_4).abs() < 1e-16);
    assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 11);
    assert_eq!(ConvolutionOperator::new(v, 500).unwrap().matrix().shape(), (999, 500));
    assert!(reverb_kernel(499).is_err());
}

#[test]
fn plateau_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        assert!(gen_plateau_signal(&mut rng, 200).min() >= 0.0);
    }
    let x = plateau_from_parts(10, &[(0.0, 0.2, 0.1)]);
    let grid = plateau_grid(10);
    for (v, t) in x.iter().zip(grid) {
        assert_eq!(*v, if t <= 0.3 { 0.01 } else { 0.0 });
    }
    assert_eq!(plateau_grid(4), vec![0.125, 0.375, 0.625, 0.875]);
}

#[test]
fn plateau_mean_is_left_weighted() {
    let x = gen_signals(&SignalModel::Plateau, 200, 50_000, Streams::new(5, Split::Train));
    let mean = x.column_mean();
    let bin = |lo: usize| mean.rows(lo, 20).sum() / 20.0;
    // decreasing away from the cluster of centers in [0, 0.15]
    for k in 2..9 {
        assert!(bin(20 * k) > bin(20 * (k + 1)), "bin {k}");
    }
    assert!(bin(0) > 3.0 * bin(180));
}

#[test]
fn generators_are_deterministic_and_order_free() {
    let streams = Streams::new(9, Split::Test);
    let a = gen_signals(&SignalModel::Plateau, 50, 300, streams);
    let b = gen_signals(&SignalModel::Plateau, 50, 300, streams);
    assert_eq!(a, b);
    for j in [0, 17, 299] {
        assert_eq!(a.column(j), gen_plateau_signal(&mut streams.signal(j), 50));
    }
    let other = gen_signals(&SignalModel::Plateau, 50, 300, Streams::new(9, Split::Train));
    assert_ne!(a, other);
    assert_ne!(streams.signal(0).random::<u64>(), streams.noise(0).random::<u64>());
}

#[test]
fn speech_like_signals() {
    let p = SpeechLikeParams::default();
    let x = gen_signals(&SignalModel::SpeechLike(p.clone()), 500, 100, Streams::new(3, Split::Train));
    for col in x.column_iter() {
        let peak = col.amax();
        assert!((0.2 - 1e-12..=1.0 + 1e-12).contains(&peak), "{peak}");
        assert!(col.iter().all(|v| v.is_finite()));
    }
    assert_eq!(x.column(4), gen_speech_like(&mut Streams::new(3, Split::Train).signal(4), 500, &p));
}

#[test]
fn linear_decay_examples() {
    let cov = linear_decay_noise_cov(259, 1e-2, 5e-4).unwrap();
    assert!((cov[(0, 0)] - 1e-4).abs() < 1e-18);
    assert!((cov[(258, 258)] - 2.5e-7).abs() < 1e-20);
    let s = linear_decay_sigmas(259, 1e-2, 5e-4).unwrap();
    assert!((s[129] - (1e-2 + 5e-4) / 2.0).abs() < 1e-16);
    assert_eq!(cov[(0, 1)], 0.0);
    assert!(linear_decay_sigmas(1, 1e-2, 5e-4).is_err());
}

// Step-by-step reference of the wind-noise recipe with a naive DFT.
fn wind_reference(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let gamma: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let mut beta = vec![0.0; len];
    let mut s = 0.0;
    for t in 0..len {
        s += gamma[t];
        beta[t] = s;
    }
    let inf = beta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let b: Vec<f64> = beta.iter().map(|v| v / inf).collect();

    let lf = len as f64;
    let mut re = vec![0.0; len];
    let mut im = vec![0.0; len];
    for k in 0..len {
        let freq = k.min(len - k) as f64 * 8000.0 / lf;
        if freq > 3000.0 {
            continue;
        }
        for t in 0..len {
            let ang = -2.0 * PI * (k * t % len) as f64 / lf;
            re[k] += b[t] * ang.cos();
            im[k] += b[t] * ang.sin();
        }
    }
    let mut blp = vec![0.0; len];
    for t in 0..len {
        for k in 0..len {
            let ang = 2.0 * PI * (k * t % len) as f64 / lf;
            blp[t] += re[k] * ang.cos() - im[k] * ang.sin();
        }
        blp[t] /= lf;
    }

    let bursts = rng.random_range(1..=5usize);
    let mut e = vec![0.2; len];
    for _ in 0..bursts {
        let c = rng.random_range(1.0..=lf);
        let w = rng.random_range(100.0..=400.0);
        let amp = rng.random_range(0.5..=1.5);
        for (t, et) in e.iter_mut().enumerate() {
            let d = (t + 1) as f64 - c;
            if d.abs() < w / 2.0 {
                *et += amp * 0.5 * (1.0 + (2.0 * PI * d / w).cos());
            }
        }
    }

    (0..len)
        .map(|t| {
            let f = rng.random_range(0.1..=0.5);
            let phi = rng.random_range(0.0..2.0 * PI);
            let eps: f64 = rng.sample(StandardNormal);
            blp[t] * e[t] * (1.0 + 0.1 * (2.0 * PI * f * t as f64 / 8000.0 + phi).sin()) + eps / 1000.0
        })
        .collect()
}

#[test]
fn wind_noise_matches_reference() {
    let gen = WindNoise::new(999, 3000.0, 8000.0).unwrap();
    let fast = gen.sample(&mut ChaCha8Rng::seed_from_u64(37));
    let slow = wind_reference(&mut ChaCha8Rng::seed_from_u64(37), 999);
    // FFT and naive DFT agree up to rounding only
    for (a, b) in fast.iter().zip(&slow) {
        assert!((a - b).abs() < 1e-11, "{a} vs {b}");
    }
}

#[test]
fn wind_stages() {
    let gen = WindNoise::new(999, 3000.0, 8000.0).unwrap();
    let st = gen.stages(&mut ChaCha8Rng::seed_from_u64(4));
    assert_eq!(st.brownian.amax(), 1.0);

    let mut spec: Vec<rustfft::num_complex::Complex<f64>> =
        st.lowpass.iter().map(|&v| rustfft::num_complex::Complex::new(v, 0.0)).collect();
    rustfft::FftPlanner::new().plan_fft_forward(999).process(&mut spec);
    let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
    let above: f64 = spec
        .iter()
        .enumerate()
        .filter(|(k, _)| gen.masked(*k))
        .map(|(_, c)| c.norm_sqr())
        .sum();
    assert!(above <= 1e-20 * total, "{}", above / total);
    assert!(gen.masked(499) && !gen.masked(0) && !gen.masked(374) && gen.masked(375));
    assert!(st.envelope.iter().all(|&e| e > 0.0 && e <= 8.0));
    assert!(WindNoise::new(1, 3000.0, 8000.0).is_err());
}

#[test]
fn envelope_examples() {
    assert!(envelope_from_bursts(50, &[]).iter().all(|&v| v == 0.2));
    let e = envelope_from_bursts(
        500,
        &[Burst {
            center: 200.0,
            width: 100.0,
            amplitude: 0.7,
        }],
    );
    assert!((e[199] - 0.9).abs() < 1e-15);
    assert!(e.max() <= e[199]);
    assert_eq!(e[100], 0.2);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut frac = 0.0;
    for _ in 0..1000 {
        let e = bursty_envelope(&mut rng, 999);
        assert!(e.iter().all(|&v| v > 0.0 && v <= 8.0));
        frac += e.iter().filter(|&&v| v > 0.4).count() as f64 / 999.0;
    }
    frac /= 1000.0;
    assert!((0.02..=0.8).contains(&frac), "{frac}");
}

fn noise_free(x: DMatrix<f64>, a: &DMatrix<f64>, noise: &NoiseModel) -> PairedDataset<f64> {
    make_dataset(x, "test", a, noise, Streams::new(1, Split::Train)).unwrap()
}

#[test]
fn zero_eta_is_noise_free() {
    let a = ConvolutionOperator::new(hat_kernel(3).unwrap(), 20).unwrap().matrix();
    let x = gen_signals(&SignalModel::Plateau, 20, 10, Streams::new(2, Split::Train));
    let wind = NoiseModel::WindNoise {
        eta: 0.0,
        cutoff_hz: 3000.0,
        sample_rate_hz: 8000.0,
    };
    let d = noise_free(x.clone(), &a, &wind);
    assert_eq!(d.y(), &(&a * &x));
    assert_eq!(d.meta.generator, "test+wind");
    assert_eq!(d.meta.noise_level, 0.0);
    assert!(make_dataset(x, "t", &DMatrix::zeros(3, 4), &wind, Streams::new(0, Split::Train)).is_err());
}

#[test]
fn linear_decay_dataset_matches_covariance() {
    let op = ConvolutionOperator::new(hat_kernel(30).unwrap(), 200).unwrap();
    let a = op.matrix();
    let x = gen_signals(&SignalModel::Plateau, 200, 50_000, Streams::new(11, Split::Train));
    let noise = NoiseModel::DiagonalLinearDecay {
        sigma_first: 1e-2,
        sigma_last: 5e-4,
    };
    let d = make_dataset(x, "plateau", &a, &noise, Streams::new(11, Split::Train)).unwrap();
    let est = noise_moments_from_pairs(&d, &a).unwrap();
    let truth = linear_decay_noise_cov(259, 1e-2, 5e-4).unwrap();
    let nf = d.len() as f64;
    let (mut within, mut worst) = (0usize, 0.0f64);
    for i in 0..259 {
        let se = truth[(i, i)] * (2.0 / (nf - 1.0)).sqrt();
        let z = (est.covariance[(i, i)] - truth[(i, i)]).abs() / se;
        within += (z < 3.0) as usize;
        worst = worst.max(z);
        for j in 0..i {
            let se_off = (truth[(i, i)] * truth[(j, j)] / nf).sqrt();
            assert!((est.covariance[(i, j)]).abs() < 6.0 * se_off);
        }
    }
    // 259 simultaneous 3-sigma checks: allow the expected handful of misses
    assert!(within >= 250 && worst < 5.0, "{within} within, worst {worst}");
}

#[test]
fn wind_second_moment_scales_with_eta_squared() {
    let a = ConvolutionOperator::new(reverb_kernel(500).unwrap(), 500).unwrap().matrix();
    let x = gen_signals(
        &SignalModel::SpeechLike(SpeechLikeParams::default()),
        500,
        40,
        Streams::new(3, Split::Train),
    );
    let clean = &a * &x;
    let second = |eta: f64| {
        let noise = NoiseModel::WindNoise {
            eta,
            cutoff_hz: 3000.0,
            sample_rate_hz: 8000.0,
        };
        let d = make_dataset(x.clone(), "speech", &a, &noise, Streams::new(3, Split::Train)).unwrap();
        (d.y() - &clean).norm_squared() / d.len() as f64
    };
    let base = second(0.1) / 0.01;
    for eta in [0.2, 0.3, 0.4, 0.5] {
        let r = second(eta) / (eta * eta);
        assert!((r / base - 1.0).abs() < 0.05, "eta {eta}");
    }
}

fn sample_dataset() -> PairedDataset<f64> {
    let a = ConvolutionOperator::new(hat_kernel(2).unwrap(), 6).unwrap().matrix();
    let x = gen_signals(&SignalModel::Plateau, 6, 7, Streams::new(4, Split::Train));
    let noise = NoiseModel::WhiteGaussian { sigma: 0.1 };
    make_dataset(x, "plateau", &a, &noise, Streams::new(4, Split::Train)).unwrap()
}

#[test]
fn dataset_file_round_trip() {
    let d = sample_dataset();
    let mut buf = Vec::new();
    write_dataset(&mut buf, &d).unwrap();
    assert_eq!(&buf[..8], DATASET_MAGIC);
    let back = read_dataset(buf.as_slice()).unwrap();
    assert_eq!(back.x(), d.x());
    assert_eq!(back.y(), d.y());
    assert_eq!(back.meta, d.meta);

    // rows of the payload are samples
    let header = 8 + 4 + 8 * 5 + 4 + d.meta.generator.len();
    let first = f64::from_le_bytes(buf[header + 8..header + 16].try_into().unwrap());
    assert_eq!(first, d.x()[(1, 0)]);

    let mut again = Vec::new();
    write_dataset(&mut again, &sample_dataset()).unwrap();
    assert_eq!(buf, again);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub/train.bin");
    save_dataset(&path, &d).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), buf);
    assert_eq!(load_dataset(&path).unwrap().x(), d.x());
}

#[test]
fn dataset_file_rejects_corruption() {
    let mut buf = Vec::new();
    write_dataset(&mut buf, &sample_dataset()).unwrap();
    assert!(read_dataset(&buf[..buf.len() - 3]).is_err());
    let mut longer = buf.clone();
    longer.push(0);
    assert!(read_dataset(longer.as_slice()).is_err());
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(read_dataset(bad.as_slice()), Err(crate::Error::Format(_))));
    let mut huge = buf;
    huge[28..36].copy_from_slice(&u64::MAX.to_le_bytes());
    assert!(read_dataset(huge.as_slice()).is_err());
    assert!(matches!(
        load_dataset(std::path::Path::new("/nonexistent/x.bin")),
        Err(crate::Error::File { .. })
    ));
}

fn write_wav(path: &std::path::Path, rate: u32, channels: u16, samples: &[i16]) {
    let spec = hound::WavSpec {
        channels,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for &s in samples {
        w.write_sample(s).unwrap();
    }
    w.finalize().unwrap();
}

#[test]
fn wav_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    let opts = WavOptions::default();

    let constant = dir.path().join("const.wav");
    write_wav(&constant, 16_000, 1, &vec![16384; 2000]);
    let frames = ingest_wav(&constant, &opts).unwrap();
    assert_eq!(frames.shape(), (500, 2));
    assert!(frames.iter().all(|&v| v == 1.0));

    let float = dir.path().join("float.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 16_000,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(&float, spec).unwrap();
    for _ in 0..1000 {
        w.write_sample(0.5f32).unwrap();
    }
    w.finalize().unwrap();
    assert!(ingest_wav(&float, &opts).unwrap().iter().all(|&v| v == 1.0));

    let ramp: Vec<i16> = (0..2999).map(|k| k as i16).collect();
    let path = dir.path().join("ramp.wav");
    write_wav(&path, 16_000, 1, &ramp);
    let frames = ingest_wav(&path, &opts).unwrap();
    assert_eq!(frames.shape(), (500, 2));
    for j in 0..2 {
        for i in 0..500 {
            assert_eq!(frames[(i, j)], (1000 * j + 2 * i) as f64 / 2998.0);
        }
    }

    let stereo = dir.path().join("stereo.wav");
    write_wav(&stereo, 16_000, 2, &[1, 2, 3, 4]);
    let err = ingest_wav(&stereo, &opts).unwrap_err().to_string();
    assert!(err.contains("stereo.wav") && err.contains("mono"), "{err}");

    let slow = dir.path().join("slow.wav");
    write_wav(&slow, 8000, 1, &[1; 10]);
    assert!(ingest_wav(&slow, &opts).unwrap_err().to_string().contains("16000 Hz"));

    let silent = dir.path().join("silent.wav");
    write_wav(&silent, 16_000, 1, &[0; 1000]);
    assert!(ingest_wav(&silent, &opts).is_err());
    assert!(ingest_wav(&dir.path().join("missing.wav"), &opts).is_err());
}
