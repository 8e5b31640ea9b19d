//! Welch's averaged-periodogram PSD estimate and band-power integration.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Canonical EEG frequency band. Edges are half-open `[lo, hi)` so the
/// shared 4, 8 and 13 Hz bins are never double counted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const DELTA: Band = Band { name: "delta", lo: 1.0, hi: 4.0 };
    pub const THETA: Band = Band { name: "theta", lo: 4.0, hi: 8.0 };
    pub const ALPHA: Band = Band { name: "alpha", lo: 8.0, hi: 13.0 };
    pub const BETA: Band = Band { name: "beta", lo: 13.0, hi: 30.0 };

    /// The four canonical bands in delta, theta, alpha, beta order.
    pub const CANONICAL: [Band; 4] = [Band::DELTA, Band::THETA, Band::ALPHA, Band::BETA];

    pub fn by_name(name: &str) -> Option<Band> {
        Band::CANONICAL.iter().find(|b| b.name == name).copied()
    }
}

/// One-sided power spectral density per channel, in signal-units²/Hz.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub power: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchParams {
    pub seg_len: usize,
    pub overlap: usize,
}

impl WelchParams {
    /// Single full-length Hann segment for 1 s epochs at 100 Hz: too short
    /// to average, and the 1 Hz resolution lands exactly on the band edges.
    pub fn single_segment(n_samples: usize) -> Self {
        WelchParams { seg_len: n_samples, overlap: 0 }
    }
}

/// Periodic Hann window.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Welch PSD of a multichannel epoch `[n_channels x n_samples]`:
/// Hann-windowed averaged periodograms with one-sided density scaling, so
/// the integral over frequency approximates the mean signal power.
pub fn welch_psd(epoch: ArrayView2<'_, f64>, fs: f64, params: WelchParams) -> Result<Spectrum> {
    let (n_ch, n_samples) = epoch.dim();
    let WelchParams { seg_len, overlap } = params;
    if seg_len == 0 || seg_len > n_samples {
        return Err(Error::InvalidArgument(format!(
            "segment length {seg_len} outside 1..={n_samples} samples"
        )));
    }
    if overlap >= seg_len {
        return Err(Error::InvalidArgument(format!(
            "overlap {overlap} must be smaller than the segment length {seg_len}"
        )));
    }
    let hop = seg_len - overlap;
    let n_segments = (n_samples - seg_len) / hop + 1;
    let window = hann(seg_len);
    let win_sumsq: f64 = window.iter().map(|w| w * w).sum();
    let scale = 1.0 / (fs * win_sumsq);

    let n_bins = seg_len / 2 + 1;
    let freqs: Vec<f64> = (0..n_bins).map(|k| k as f64 * fs / seg_len as f64).collect();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(seg_len);
    let mut power = Array2::zeros((n_ch, n_bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); seg_len];

    for (ch, row) in epoch.rows().into_iter().enumerate() {
        for seg in 0..n_segments {
            let start = seg * hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(row[start + i] * window[i], 0.0);
            }
            fft.process(&mut buf);
            for k in 0..n_bins {
                let mag2 = buf[k].norm_sqr();
                // One-sided: double everything except DC and (for even
                // segment lengths) the Nyquist bin.
                let one_sided = if k == 0 || (seg_len % 2 == 0 && k == n_bins - 1) {
                    1.0
                } else {
                    2.0
                };
                power[[ch, k]] += mag2 * scale * one_sided;
            }
        }
        power.row_mut(ch).mapv_inplace(|p| p / n_segments as f64);
    }

    Ok(Spectrum { freqs, power })
}

/// Band power per channel: the integral of the piecewise-linear PSD over
/// `[band.lo, band.hi)` by the trapezoidal rule with interpolated endpoints
/// (so powers are exactly additive over adjacent bands).
pub fn band_power(spec: &Spectrum, band: Band) -> Result<Vec<f64>> {
    let freqs = &spec.freqs;
    let (f_min, f_max) = (freqs[0], *freqs.last().unwrap());
    if band.lo < f_min || band.hi > f_max {
        return Err(Error::InvalidArgument(format!(
            "band [{}, {}) outside the spectral range [{f_min}, {f_max}]",
            band.lo, band.hi
        )));
    }

    let value_at = |row: ndarray::ArrayView1<'_, f64>, f: f64| -> f64 {
        // freqs are uniform and strictly increasing.
        let idx = freqs.partition_point(|&x| x <= f);
        if idx == 0 {
            return row[0];
        }
        if idx >= freqs.len() {
            return row[freqs.len() - 1];
        }
        let (f0, f1) = (freqs[idx - 1], freqs[idx]);
        let t = (f - f0) / (f1 - f0);
        row[idx - 1] * (1.0 - t) + row[idx] * t
    };

    Ok(spec
        .power
        .rows()
        .into_iter()
        .map(|row| {
            let mut xs = vec![band.lo];
            xs.extend(freqs.iter().copied().filter(|&f| f > band.lo && f < band.hi));
            xs.push(band.hi);
            let mut acc = 0.0;
            for pair in xs.windows(2) {
                let (x0, x1) = (pair[0], pair[1]);
                acc += 0.5 * (value_at(row, x0) + value_at(row, x1)) * (x1 - x0);
            }
            acc
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use std::f64::consts::PI;

    fn single_channel(x: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap()
    }

    /// Reference values computed offline with scipy.signal.welch
    /// (hann, nperseg=50, noverlap=25, detrend off, density scaling).
    #[test]
    fn matches_reference_psd() {
        let x: Vec<f64> = (0..200)
            .map(|i| {
                let t = i as f64 / 100.0;
                (2.0 * PI * 10.0 * t).sin() + 0.5 * (2.0 * PI * 23.0 * t + 1.0).sin() + 0.2
            })
            .collect();
        let spec = welch_psd(
            single_channel(&x).view(),
            100.0,
            WelchParams { seg_len: 50, overlap: 25 },
        )
        .unwrap();
        assert_eq!(spec.freqs.len(), 26);
        assert_relative_eq!(spec.freqs[1], 2.0);
        let want = [
            (0, 0.01333168110859674),
            (5, 0.16668115386419102),
            (10, 0.0012008210004954632),
            (11, 0.030021157219778032),
            (12, 0.03002107140919048),
        ];
        for (k, p) in want {
            assert_relative_eq!(spec.power[[0, k]], p, max_relative = 1e-10);
        }
        let df = spec.freqs[1] - spec.freqs[0];
        let total: f64 = spec.power.row(0).sum() * df;
        assert_relative_eq!(total, 0.6649954065575258, max_relative = 1e-10);
    }

    #[test]
    fn unit_sine_has_half_unit_power_in_alpha() {
        let fs = 100.0;
        let x: Vec<f64> = (0..100).map(|i| (2.0 * PI * 10.0 * i as f64 / fs).sin()).collect();
        let spec =
            welch_psd(single_channel(&x).view(), fs, WelchParams::single_segment(100)).unwrap();
        let df = spec.freqs[1] - spec.freqs[0];
        let total: f64 = spec.power.row(0).sum() * df;
        assert!((total - 0.5).abs() / 0.5 < 0.05, "total integrated power {total}");
        let alpha: f64 = spec
            .freqs
            .iter()
            .zip(spec.power.row(0))
            .filter(|(f, _)| **f >= 8.0 && **f < 13.0)
            .map(|(_, p)| p * df)
            .sum();
        assert!(alpha / total >= 0.95, "alpha fraction {}", alpha / total);
    }

    #[test]
    fn zero_signal_zero_power() {
        let spec = welch_psd(
            single_channel(&vec![0.0; 100]).view(),
            100.0,
            WelchParams::single_segment(100),
        )
        .unwrap();
        assert!(spec.power.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn white_noise_is_flat_with_unit_power() {
        // Deterministic pseudo-noise, variance ~1.
        let mut state = 0x243F6A8885A308D3u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let n = 16384;
        let x: Vec<f64> = (0..n).map(|_| next() * 3.0f64.sqrt()).collect();
        let mean_power = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let spec = welch_psd(
            single_channel(&x).view(),
            100.0,
            WelchParams { seg_len: 256, overlap: 128 },
        )
        .unwrap();
        let df = spec.freqs[1] - spec.freqs[0];
        let total: f64 = spec.power.row(0).sum() * df;
        assert!(
            (total - mean_power).abs() / mean_power < 0.1,
            "integrated {total} vs mean power {mean_power}"
        );
        // Flat within +/-3 dB away from the DC/Nyquist edges.
        let mid = &spec.power.row(0).to_vec()[4..124];
        let mean = mid.iter().sum::<f64>() / mid.len() as f64;
        for &p in mid {
            let db = 10.0 * (p / mean).log10();
            assert!(db.abs() < 3.0, "{db} dB off flat");
        }
    }

    #[test]
    fn parseval_holds_for_arbitrary_signal() {
        let n = 100;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / 100.0;
                0.7 * (2.0 * PI * 13.0 * t).sin() + 0.3 * (2.0 * PI * 31.0 * t).cos() + 0.5
            })
            .collect();
        let mean_power = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let spec =
            welch_psd(single_channel(&x).view(), 100.0, WelchParams::single_segment(n)).unwrap();
        let df = spec.freqs[1] - spec.freqs[0];
        let total: f64 = spec.power.row(0).sum() * df;
        assert!(
            (total - mean_power).abs() / mean_power < 0.1,
            "integrated {total} vs mean power {mean_power}"
        );
    }

    #[test]
    fn segment_longer_than_epoch_is_an_error() {
        let x = vec![0.0; 50];
        assert!(welch_psd(
            single_channel(&x).view(),
            100.0,
            WelchParams { seg_len: 100, overlap: 0 }
        )
        .is_err());
    }

    #[test]
    fn alpha_dominates_for_10hz_sine() {
        let fs = 100.0;
        let x: Vec<f64> = (0..100).map(|i| (2.0 * PI * 10.0 * i as f64 / fs).sin()).collect();
        let spec =
            welch_psd(single_channel(&x).view(), fs, WelchParams::single_segment(100)).unwrap();
        let alpha = band_power(&spec, Band::ALPHA).unwrap()[0];
        let theta = band_power(&spec, Band::THETA).unwrap()[0];
        assert!(alpha / theta.max(1e-300) > 20.0, "alpha/theta = {}", alpha / theta);
    }

    #[test]
    fn zero_spectrum_gives_zero_band_power() {
        let spec = welch_psd(
            single_channel(&vec![0.0; 100]).view(),
            100.0,
            WelchParams::single_segment(100),
        )
        .unwrap();
        for band in Band::CANONICAL {
            assert_eq!(band_power(&spec, band).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn band_powers_are_additive_and_bounded_by_total() {
        let x: Vec<f64> = (0..100)
            .map(|i| {
                let t = i as f64 / 100.0;
                (2.0 * PI * 3.0 * t).sin() + (2.0 * PI * 9.5 * t).sin() + (2.0 * PI * 20.0 * t).sin()
            })
            .collect();
        let spec =
            welch_psd(single_channel(&x).view(), 100.0, WelchParams::single_segment(100)).unwrap();
        let sum_bands: f64 =
            Band::CANONICAL.iter().map(|&b| band_power(&spec, b).unwrap()[0]).sum();
        let whole = band_power(&spec, Band { name: "all", lo: 1.0, hi: 30.0 }).unwrap()[0];
        assert!((sum_bands - whole).abs() < 1e-9, "{sum_bands} vs {whole}");

        // Adjacent sub-bands of theta add up to theta exactly.
        let lo = band_power(&spec, Band { name: "t1", lo: 4.0, hi: 6.0 }).unwrap()[0];
        let hi = band_power(&spec, Band { name: "t2", lo: 6.0, hi: 8.0 }).unwrap()[0];
        let theta = band_power(&spec, Band::THETA).unwrap()[0];
        assert_relative_eq!(lo + hi, theta, max_relative = 1e-12);
    }

    #[test]
    fn band_outside_range_is_an_error() {
        let spec = welch_psd(
            single_channel(&vec![1.0; 40]).view(),
            10.0, // Nyquist 5 Hz: beta is out of range
            WelchParams::single_segment(40),
        )
        .unwrap();
        assert!(band_power(&spec, Band::BETA).is_err());
    }

    #[test]
    fn canonical_band_table() {
        let t: Vec<(&str, f64, f64)> =
            Band::CANONICAL.iter().map(|b| (b.name, b.lo, b.hi)).collect();
        assert_eq!(
            t,
            vec![
                ("delta", 1.0, 4.0),
                ("theta", 4.0, 8.0),
                ("alpha", 8.0, 13.0),
                ("beta", 13.0, 30.0)
            ]
        );
    }
}
