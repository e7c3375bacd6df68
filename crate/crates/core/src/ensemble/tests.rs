use std::f64::consts::{E, PI};

use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::spectral::{EstimateParams, EstimatorConfig, EstimatorKind, MogdfParams, SpectralEstimate};
use crate::tapers::{dpss_tapers, Weighting};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Returns a fixed multiple of a stored spectrum, whatever the frame.
struct Fixed {
    values: Vec<f64>,
    scale: f64,
}

impl Estimator for Fixed {
    fn estimate(&self, _frame: &[f64]) -> crate::Result<SpectralEstimate> {
        SpectralEstimate::new(
            self.values.iter().map(|v| v * self.scale).collect(),
            EstimatorKind::MtMag,
            self.params(),
        )
    }

    fn bins(&self) -> usize {
        self.values.len()
    }

    fn kind(&self) -> EstimatorKind {
        EstimatorKind::MtMag
    }

    fn params(&self) -> EstimateParams {
        EstimateParams {
            nfft: 2 * (self.values.len() - 1),
            scaling: "unnormalized".into(),
            mogdf: None,
            taper_family: None,
            n_tapers: None,
            time_bandwidth: None,
        }
    }
}

fn noise_frames(seed: u64, count: usize, len: usize, sigma: f64) -> FrameSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    let data: Vec<f64> = (0..count * len).map(|_| normal.sample(&mut rng)).collect();
    FrameSet::from_frames(Array2::from_shape_vec((count, len), data).unwrap(), 16000, "noise").unwrap()
}

fn repeated(frame: &[f64], count: usize) -> FrameSet {
    let mut a = Array2::zeros((count, frame.len()));
    for mut row in a.rows_mut() {
        row.assign(&ndarray::ArrayView1::from(frame));
    }
    FrameSet::from_frames(a, 16000, "same").unwrap()
}

/// Power-of-two spectrum, so scaling by e and dividing back is exact.
fn dyadic_spectrum(bins: usize) -> Vec<f64> {
    (0..bins).map(|k| 2f64.powi(k as i32 % 7 - 3)).collect()
}

#[test]
fn identical_frames_give_their_periodogram() {
    let frames = noise_frames(21, 1, 160, 1.0);
    let f = frames.frame(0).to_vec();
    let ens = repeated(&f, 5);
    let p = periodogram(&f, 512).unwrap();
    let want = p.positive_floored(NegativeHandling::Floor).unwrap();
    for method in [ReferenceMethod::MeanLogSpectrum, ReferenceMethod::SpectrumOfMeanSignal] {
        let r = reference_spectrum(&ens, method, 512).unwrap();
        for (a, b) in r.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12 * b, "{method}: {a} vs {b}");
        }
    }
}

#[test]
fn opposite_frames_cancel_only_in_the_mean_signal() {
    let frames = noise_frames(22, 1, 160, 1.0);
    let f = frames.frame(0).to_vec();
    let neg: Vec<f64> = f.iter().map(|v| -v).collect();
    let mut a = Array2::zeros((2, 160));
    a.row_mut(0).assign(&ndarray::ArrayView1::from(&f[..]));
    a.row_mut(1).assign(&ndarray::ArrayView1::from(&neg[..]));
    let ens = FrameSet::from_frames(a, 16000, "pm").unwrap();
    let p = periodogram(&f, 512).unwrap().positive_floored(NegativeHandling::Floor).unwrap();
    let floor = MAGNITUDE_FLOOR * p.iter().copied().fold(0.0, f64::max);

    let mean_sig = reference_spectrum(&ens, ReferenceMethod::SpectrumOfMeanSignal, 512).unwrap();
    assert!(mean_sig.iter().all(|v| *v == floor));
    let mean_log = reference_spectrum(&ens, ReferenceMethod::MeanLogSpectrum, 512).unwrap();
    for (a, b) in mean_log.iter().zip(&p) {
        assert!((a - b).abs() <= 1e-12 * b);
    }
}

#[test]
fn reference_needs_two_frames() {
    let ens = noise_frames(23, 1, 160, 1.0);
    assert!(reference_spectrum(&ens, ReferenceMethod::MeanLogSpectrum, 512).is_err());
}

#[test]
fn white_noise_log_mean_reference() {
    // E ln of an exponential variate with mean M sigma^2 is ln(M sigma^2) - gamma.
    let (m, sigma) = (160, 0.5);
    let ens = noise_frames(24, 10_000, m, sigma);
    let r = reference_spectrum(&ens, ReferenceMethod::MeanLogSpectrum, 512).unwrap();
    let expected = (-EULER_GAMMA).exp() * m as f64 * sigma * sigma;
    // DC and Nyquist are chi-square with one degree of freedom, and the
    // lowest and highest bins have unequal real/imaginary variances
    for k in 16..=240 {
        assert!((r[k] / expected - 1.0).abs() < 0.05, "bin {k}: {} vs {expected}", r[k]);
    }

    // direct-DFT Monte Carlo oracle over a subset of frames and bins
    let sub = FrameSet::from_frames(ens.frames().slice(ndarray::s![..200, ..]).to_owned(), 16000, "sub").unwrap();
    let r_sub = reference_spectrum(&sub, ReferenceMethod::MeanLogSpectrum, 512).unwrap();
    for k in [20usize, 77, 128, 200] {
        let w = 2.0 * PI * k as f64 / 512.0;
        let mean_log: f64 = sub
            .rows()
            .map(|row| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, x) in row.iter().enumerate() {
                    re += x * (w * n as f64).cos();
                    im -= x * (w * n as f64).sin();
                }
                (re * re + im * im).ln()
            })
            .sum::<f64>()
            / 200.0;
        assert!((r_sub[k].ln() - mean_log).abs() < 1e-9, "bin {k}");
    }
}

#[test]
fn fixed_point_is_exactly_zero() {
    let reference = dyadic_spectrum(257);
    let est = Fixed {
        values: reference.clone(),
        scale: 1.0,
    };
    let frames = noise_frames(25, 7, 160, 1.0);
    for domain in Domain::ALL {
        let r = evaluate_estimator(&frames, &est, &reference, domain, &EvaluateOptions::default()).unwrap();
        assert!(r.bias().iter().all(|v| *v == 0.0));
        assert!(r.variance().iter().all(|v| *v == 0.0));
        assert!(r.mse().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn constant_offset_is_exactly_one() {
    assert_eq!(E.ln(), 1.0);
    let reference = dyadic_spectrum(257);
    let est = Fixed {
        values: reference.clone(),
        scale: E,
    };
    let frames = noise_frames(26, 7, 160, 1.0);
    let r = evaluate_estimator(&frames, &est, &reference, Domain::Spectral, &EvaluateOptions::default()).unwrap();
    assert!(r.bias().iter().all(|v| *v == 1.0));
    assert!(r.variance().iter().all(|v| *v == 0.0));
    assert!(r.mse().iter().all(|v| *v == 1.0));

    // cepstral image of a constant unit offset: sqrt(B) in c0 only
    let c = evaluate_estimator(&frames, &est, &reference, Domain::Cepstral, &EvaluateOptions::default()).unwrap();
    assert!((c.bias()[0] - 257f64.sqrt()).abs() < 1e-12);
    assert!(c.bias()[1..].iter().all(|v| v.abs() < 1e-12));
    assert!(c.variance().iter().all(|v| *v == 0.0));
}

#[test]
fn reference_mismatch_is_rejected() {
    let frames = noise_frames(27, 4, 160, 1.0);
    let est = EstimatorConfig::Periodogram { nfft: 512 };
    assert!(evaluate_estimator(&frames, &est, &[1.0; 129], Domain::Spectral, &EvaluateOptions::default()).is_err());
    let mut bad = vec![1.0; 257];
    bad[3] = 0.0;
    assert!(evaluate_estimator(&frames, &est, &bad, Domain::Spectral, &EvaluateOptions::default()).is_err());
}

#[test]
fn failing_frames_abort_or_skip() {
    let mut frames = noise_frames(28, 5, 160, 1.0).frames().clone();
    frames.row_mut(2).fill(0.0);
    let ens = FrameSet::from_frames(frames, 16000, "x").unwrap();
    let est = EstimatorConfig::Mogdf(MogdfParams::default());
    let reference = vec![1.0; 257];
    match evaluate_estimator(&ens, &est, &reference, Domain::Spectral, &EvaluateOptions::default()) {
        Err(Error::Frame { index: 2, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    let opts = EvaluateOptions {
        skip_failures: true,
        ..EvaluateOptions::default()
    };
    let r = evaluate_estimator(&ens, &est, &reference, Domain::Spectral, &opts).unwrap();
    assert_eq!(r.n_realizations(), 4);
    assert_eq!(r.meta().skipped, vec![2]);
}

#[test]
fn variance_falls_with_taper_count() {
    let frames = noise_frames(29, 3000, 160, 1.0);
    let reference = reference_spectrum(&frames, ReferenceMethod::MeanLogSpectrum, 512).unwrap();
    let full = dpss_tapers(160, 4.0, 8, Weighting::Uniform).unwrap();
    let mut last = f64::INFINITY;
    for n in 1..=8 {
        let est = EstimatorConfig::MtMag {
            tapers: std::sync::Arc::new(full.leading(n).unwrap()),
            nfft: 512,
        };
        let r = evaluate_estimator(&frames, &est, &reference, Domain::Spectral, &EvaluateOptions::default()).unwrap();
        let v = aggregate(&r, None).unwrap().mean_variance;
        assert!(v <= last, "N = {n}: {v} > {last}");
        last = v;
    }
}

#[test]
fn reports_are_bit_stable_across_thread_counts() {
    let frames = noise_frames(30, 300, 160, 1.0);
    let reference = reference_spectrum(&frames, ReferenceMethod::MeanLogSpectrum, 512).unwrap();
    let set = std::sync::Arc::new(dpss_tapers(160, 4.0, 4, Weighting::Uniform).unwrap());
    let est = EstimatorConfig::MtMogdf {
        tapers: set,
        params: MogdfParams::default(),
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| evaluate_estimator(&frames, &est, &reference, Domain::Cepstral, &EvaluateOptions::default()).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
}

#[test]
fn report_export() {
    let frames = noise_frames(31, 4, 16, 1.0);
    let est = EstimatorConfig::Periodogram { nfft: 16 };
    let reference = vec![16.0; 9];
    let r = evaluate_estimator(&frames, &est, &reference, Domain::Spectral, &EvaluateOptions::default())
        .unwrap()
        .with_reference_method(ReferenceMethod::MeanLogSpectrum);
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    r.write_csv(&csv).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,hz_or_quefrency,bias,variance,mse"));
    assert!(lines.next().unwrap().starts_with("0,0,"));
    assert!(lines.next().unwrap().starts_with("1,1000,"));
    let json = dir.path().join("r.json");
    r.write_sidecar(&json, &serde_json::json!({"seed": 1})).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["meta"]["reference_method"], "mean_log_spectrum");
    assert_eq!(doc["n_realizations"], 4);
    assert_eq!(doc["config"]["seed"], 1);
}

fn synthetic_report(bias: Vec<f64>, variance: Vec<f64>) -> EnsembleReport {
    let n = bias.len();
    let nfft = 2 * (n - 1);
    let meta = ReportMeta {
        estimator: EstimatorKind::MtMag,
        params: Fixed {
            values: vec![1.0; n],
            scale: 1.0,
        }
        .params(),
        reference_method: None,
        negative: NegativeHandling::Floor,
        sample_rate: 16000,
        frame_len: 160,
        source_id: "synthetic".into(),
        label: None,
        skipped: vec![],
    };
    let axis = crate::spectral::bin_frequencies(nfft, 16000);
    EnsembleReport::new(bias, variance, vec![1.0; n], axis, 10, Domain::Spectral, meta).unwrap()
}

#[test]
fn aggregate_single_bin_band() {
    let r = synthetic_report((0..17).map(|k| k as f64 - 8.0).collect(), (0..17).map(|k| k as f64).collect());
    // bin 3 sits at 1500 Hz
    let s = aggregate(&r, Some((1500.0, 1500.0))).unwrap();
    assert_eq!(s.n_indices, 1);
    assert_eq!(s.mean_abs_bias, 5.0);
    assert_eq!(s.mean_variance, 3.0);
    assert_eq!(s.mean_mse, 28.0);
}

#[test]
fn aggregate_of_zero_report() {
    let r = synthetic_report(vec![0.0; 17], vec![0.0; 17]);
    let s = aggregate(&r, None).unwrap();
    assert_eq!((s.mean_abs_bias, s.mean_variance, s.mean_mse, s.n_indices), (0.0, 0.0, 0.0, 17));
}

#[test]
fn aggregate_band_excludes_low_frequency_variance() {
    let variance: Vec<f64> = (0..17).map(|k| if k * 500 < 1000 { 10.0 } else { 0.1 }).collect();
    let r = synthetic_report(vec![0.0; 17], variance);
    let hi = aggregate(&r, Some((1000.0, 8000.0))).unwrap();
    let all = aggregate(&r, Some((0.0, 8000.0))).unwrap();
    assert!(hi.mean_variance < all.mean_variance);
}

#[test]
fn aggregate_errors() {
    let r = synthetic_report(vec![0.0; 17], vec![0.0; 17]);
    assert!(aggregate(&r, Some((100.0, 200.0))).is_err());
    assert!(aggregate(&r, Some((0.0, 9000.0))).is_err());
    assert!(aggregate(&r, Some((300.0, 200.0))).is_err());
    assert!(aggregate_range(&r, 0..18).is_err());
    assert!(aggregate_range(&r, 3..3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn permutation_leaves_report_unchanged(seed in any::<u64>(), shift in 0usize..40) {
        let frames = noise_frames(seed, 40, 32, 1.0);
        let mut rows: Vec<usize> = (0..40).collect();
        rows.rotate_left(shift);
        rows.swap(0, 39);
        let permuted = FrameSet::from_frames(frames.frames().select(ndarray::Axis(0), &rows), 16000, "p").unwrap();
        let est = EstimatorConfig::Periodogram { nfft: 32 };
        let reference = reference_spectrum(&frames, ReferenceMethod::MeanLogSpectrum, 32).unwrap();
        let r2 = reference_spectrum(&permuted, ReferenceMethod::MeanLogSpectrum, 32).unwrap();
        for (a, b) in reference.iter().zip(&r2) {
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
        for domain in Domain::ALL {
            let a = evaluate_estimator(&frames, &est, &reference, domain, &EvaluateOptions::default()).unwrap();
            let b = evaluate_estimator(&permuted, &est, &reference, domain, &EvaluateOptions::default()).unwrap();
            for k in 0..a.len() {
                prop_assert!((a.bias()[k] - b.bias()[k]).abs() < 1e-12);
                prop_assert!((a.variance()[k] - b.variance()[k]).abs() < 1e-12);
                prop_assert!((a.mse()[k] - b.mse()[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn scaling_shifts_bias_and_keeps_variance(seed in any::<u64>(), log_c in -5.0f64..5.0) {
        let frames = noise_frames(seed, 20, 32, 1.0);
        let scaled = FrameSet::from_frames(frames.frames() * (log_c / 2.0).exp(), 16000, "s").unwrap();
        let est = EstimatorConfig::Periodogram { nfft: 32 };
        let reference = vec![1.0; 17];
        let a = evaluate_estimator(&frames, &est, &reference, Domain::Spectral, &EvaluateOptions::default()).unwrap();
        let b = evaluate_estimator(&scaled, &est, &reference, Domain::Spectral, &EvaluateOptions::default()).unwrap();
        for k in 0..17 {
            prop_assert!((b.bias()[k] - a.bias()[k] - log_c).abs() < 1e-9);
            prop_assert!((b.variance()[k] - a.variance()[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn mse_decomposes(seed in any::<u64>(), kind in 0usize..3) {
        let frames = noise_frames(seed, 12, 64, 1.0);
        let set = std::sync::Arc::new(dpss_tapers(64, 2.5, 3, Weighting::Eigenvalue).unwrap());
        let p = MogdfParams { nfft: 128, lifter_length: 10, ..MogdfParams::default() };
        let est = match kind {
            0 => EstimatorConfig::Periodogram { nfft: 128 },
            1 => EstimatorConfig::MtMag { tapers: set, nfft: 128 },
            _ => EstimatorConfig::MtMogdf { tapers: set, params: p },
        };
        let reference = reference_spectrum(&frames, ReferenceMethod::MeanLogSpectrum, 128).unwrap();
        for domain in Domain::ALL {
            let r = evaluate_estimator(&frames, &est, &reference, domain, &EvaluateOptions::default()).unwrap();
            for k in 0..r.len() {
                prop_assert!((r.mse()[k] - r.bias()[k].powi(2) - r.variance()[k]).abs() < 1e-9);
                prop_assert!(r.variance()[k] >= 0.0);
            }
        }
    }
}
