//! Digital IIR filter design and zero-phase filtering.
//!
//! Band-pass and low-pass Butterworth filters are designed in the analog
//! domain (prototype poles on the unit half-circle), frequency-transformed,
//! and discretized by the bilinear transform with frequency pre-warping —
//! the classic `butter` recipe. The notch is the standard second-order
//! design with a unit-circle zero pair at the center frequency.
//!
//! `filtfilt` applies a filter forward and backward with odd-reflection
//! padding and steady-state initial conditions, so the net phase is zero and
//! the effective magnitude response is |H|².

use crate::error::{Error, Result};
use crate::signal::Recording;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Internal normalized sampling rate used during design (scipy convention:
/// critical frequencies are expressed as a fraction of Nyquist).
const DESIGN_FS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub enum FilterKind {
    BandPass { low_hz: f64, high_hz: f64, order: usize },
    LowPass { cutoff_hz: f64, order: usize },
    Notch { center_hz: f64, q: f64 },
}

/// Digital IIR filter: numerator `b`, denominator `a` (normalized so that
/// `a[0] == 1`), the sampling rate it was designed for, and design metadata
/// including the pole locations used for the stability check.
#[derive(Debug, Clone)]
pub struct FilterSpec {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    pub fs: f64,
    pub kind: FilterKind,
    poles: Vec<Complex64>,
}

impl FilterSpec {
    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn max_pole_magnitude(&self) -> f64 {
        self.poles.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    fn check_stability(self) -> Result<Self> {
        let max_pole = self.max_pole_magnitude();
        if !(max_pole < 1.0 - 1e-9) || !self.b.iter().chain(&self.a).all(|c| c.is_finite()) {
            return Err(Error::UnstableFilter { max_pole });
        }
        Ok(self)
    }
}

fn check_in_nyquist(freq: f64, fs: f64) -> Result<()> {
    let nyquist = fs / 2.0;
    if !(freq > 0.0 && freq < nyquist) {
        return Err(Error::FrequencyOutOfRange { freq, nyquist, fs });
    }
    Ok(())
}

/// Analog Butterworth prototype: `order` poles evenly spaced on the left
/// unit half-circle, no zeros, unit gain.
fn butter_prototype(order: usize) -> Vec<Complex64> {
    let n = order as i64;
    (1 - n..n)
        .step_by(2)
        .map(|m| -(Complex64::i() * PI * m as f64 / (2.0 * n as f64)).exp())
        .collect()
}

/// Expand a polynomial from its roots: prod (x - r_i), leading coefficient 1.
fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    coeffs
}

struct Zpk {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
    gain: f64,
}

impl Zpk {
    /// Bilinear transform s -> (2 fs) (z-1)/(z+1), evaluated as
    /// z = (2 fs + s) / (2 fs - s). Zeros at infinity move to z = -1.
    fn bilinear(self, fs: f64) -> Zpk {
        let fs2 = Complex64::new(2.0 * fs, 0.0);
        let degree = self.poles.len() - self.zeros.len();
        let mut zeros: Vec<Complex64> =
            self.zeros.iter().map(|z| (fs2 + z) / (fs2 - z)).collect();
        let poles: Vec<Complex64> = self.poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();
        zeros.extend(std::iter::repeat(Complex64::new(-1.0, 0.0)).take(degree));
        let num: Complex64 = self.zeros.iter().map(|z| fs2 - z).product();
        let den: Complex64 = self.poles.iter().map(|p| fs2 - p).product();
        let gain = self.gain * (num / den).re;
        Zpk { zeros, poles, gain }
    }

    fn to_tf(&self) -> (Vec<f64>, Vec<f64>) {
        let b: Vec<f64> = poly_from_roots(&self.zeros).iter().map(|c| (c * self.gain).re).collect();
        let a: Vec<f64> = poly_from_roots(&self.poles).iter().map(|c| c.re).collect();
        (b, a)
    }
}

/// Band-pass Butterworth of the given per-side order, discretized at `fs`.
///
/// The resulting digital section has order `2 * order` (the low-pass to
/// band-pass transform doubles the pole count).
pub fn design_bandpass(low_hz: f64, high_hz: f64, order: usize, fs: f64) -> Result<FilterSpec> {
    check_in_nyquist(low_hz, fs)?;
    check_in_nyquist(high_hz, fs)?;
    if low_hz >= high_hz {
        return Err(Error::InvalidArgument(format!(
            "band edges must satisfy low < high, got {low_hz} >= {high_hz}"
        )));
    }
    if order < 1 {
        return Err(Error::InvalidArgument("filter order must be >= 1".into()));
    }

    let warp = |f: f64| 2.0 * DESIGN_FS * (PI * (2.0 * f / fs) / DESIGN_FS).tan();
    let (w1, w2) = (warp(low_hz), warp(high_hz));
    let bw = w2 - w1;
    let wo = (w1 * w2).sqrt();

    let proto = butter_prototype(order);
    // Low-pass to band-pass: scale to the bandwidth, then split every pole
    // into a pair around +/- wo. The N prototype zeros at infinity become N
    // zeros at the origin.
    let mut poles = Vec::with_capacity(2 * order);
    for p in &proto {
        let pl = p * (bw / 2.0);
        let root = (pl * pl - wo * wo).sqrt();
        poles.push(pl + root);
        poles.push(pl - root);
    }
    let zeros = vec![Complex64::new(0.0, 0.0); order];
    let gain = bw.powi(order as i32);

    let digital = Zpk { zeros, poles, gain }.bilinear(DESIGN_FS);
    let (b, a) = digital.to_tf();
    FilterSpec {
        b,
        a,
        fs,
        kind: FilterKind::BandPass { low_hz, high_hz, order },
        poles: digital.poles,
    }
    .check_stability()
}

/// Low-pass Butterworth (used as an optional extra anti-alias stage before
/// decimation; off by default in the preprocessing chain).
pub fn design_lowpass(cutoff_hz: f64, order: usize, fs: f64) -> Result<FilterSpec> {
    check_in_nyquist(cutoff_hz, fs)?;
    if order < 1 {
        return Err(Error::InvalidArgument("filter order must be >= 1".into()));
    }
    let wo = 2.0 * DESIGN_FS * (PI * (2.0 * cutoff_hz / fs) / DESIGN_FS).tan();
    let proto = butter_prototype(order);
    let poles: Vec<Complex64> = proto.iter().map(|p| p * wo).collect();
    let gain = wo.powi(order as i32);
    let digital = Zpk { zeros: vec![], poles, gain }.bilinear(DESIGN_FS);
    let (b, a) = digital.to_tf();
    FilterSpec {
        b,
        a,
        fs,
        kind: FilterKind::LowPass { cutoff_hz, order },
        poles: digital.poles,
    }
    .check_stability()
}

/// Second-order IIR notch with a unit-circle zero pair at `center_hz`.
/// The -3 dB bandwidth is `center_hz / q`.
pub fn design_notch(center_hz: f64, fs: f64, q: f64) -> Result<FilterSpec> {
    check_in_nyquist(center_hz, fs)?;
    if !(q > 0.0) {
        return Err(Error::InvalidArgument(format!("notch Q must be positive, got {q}")));
    }
    let w0 = center_hz / (fs / 2.0);
    let bw = w0 / q;
    let beta = (bw * PI / 2.0).tan();
    let gain = 1.0 / (1.0 + beta);
    let cosw = (PI * w0).cos();

    let b = vec![gain, -2.0 * gain * cosw, gain];
    let a = vec![1.0, -2.0 * gain * cosw, 2.0 * gain - 1.0];

    // Quadratic roots of z^2 + a1 z + a2.
    let disc = Complex64::new(a[1] * a[1] - 4.0 * a[2], 0.0).sqrt();
    let a1 = Complex64::new(a[1], 0.0);
    let poles = vec![(-a1 + disc) / 2.0, (-a1 - disc) / 2.0];

    FilterSpec { b, a, fs, kind: FilterKind::Notch { center_hz, q }, poles }.check_stability()
}

/// Complex frequency response H(e^{j 2 pi f / fs}) at the given frequencies.
pub fn frequency_response(spec: &FilterSpec, freqs: &[f64]) -> Vec<Complex64> {
    freqs
        .iter()
        .map(|&f| {
            let w = 2.0 * PI * f / spec.fs;
            let z_inv = Complex64::new(0.0, -w).exp();
            let eval = |c: &[f64]| {
                // Horner in z^-1.
                c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &ck| acc * z_inv + ck)
            };
            eval(&spec.b) / eval(&spec.a)
        })
        .collect()
}

/// Steady-state initial filter state for a unit step input (direct form II
/// transposed). Scaling this by the first sample removes the start-up
/// transient of `lfilter`.
fn lfilter_zi(b: &[f64], a: &[f64]) -> Vec<f64> {
    let n = b.len().max(a.len());
    let bp = padded(b, n);
    let ap = padded(a, n);
    let m = n - 1;

    // Solve (I - companion(a)^T) zi = b[1:] - a[1:] * b[0].
    let mut mat = vec![vec![0.0; m]; m];
    for i in 0..m {
        mat[i][0] = if i == 0 { 1.0 } else { 0.0 } + ap[i + 1];
        if i + 1 < m {
            mat[i][i + 1] -= 1.0;
        }
        if i >= 1 {
            mat[i][i] += 1.0;
        }
    }
    let rhs: Vec<f64> = (0..m).map(|i| bp[i + 1] - ap[i + 1] * bp[0]).collect();
    solve_dense(mat, rhs)
}

fn padded(c: &[f64], n: usize) -> Vec<f64> {
    let mut v = c.to_vec();
    v.resize(n, 0.0);
    v
}

/// Gaussian elimination with partial pivoting; filters here are order <= 8.
fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let diag = m[col][col];
        for row in col + 1..n {
            let factor = m[row][col] / diag;
            for k in col..n {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for k in row + 1..n {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    x
}

/// Single-pass IIR filter, direct form II transposed, with initial state.
fn lfilter(b: &[f64], a: &[f64], x: &[f64], zi: &[f64]) -> Vec<f64> {
    let n = b.len().max(a.len());
    let bp = padded(b, n);
    let ap = padded(a, n);
    let mut z = padded(zi, n - 1);
    let mut y = Vec::with_capacity(x.len());
    for &xk in x {
        let yk = bp[0] * xk + z[0];
        for i in 0..n - 2 {
            z[i] = bp[i + 1] * xk + z[i + 1] - ap[i + 1] * yk;
        }
        z[n - 2] = bp[n - 1] * xk - ap[n - 1] * yk;
        y.push(yk);
    }
    y
}

/// Zero-phase forward-backward filtering of one channel. Edges are handled
/// by odd-reflection padding of length `3 * max(len(a), len(b))`, each pass
/// starting from the steady state of its first sample.
pub fn filtfilt_channel(spec: &FilterSpec, x: &[f64]) -> Result<Vec<f64>> {
    let padlen = 3 * spec.a.len().max(spec.b.len());
    if x.len() <= padlen {
        return Err(Error::SignalTooShort { len: x.len(), min: padlen });
    }
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * padlen);
    for i in 0..padlen {
        ext.push(2.0 * x[0] - x[padlen - i]);
    }
    ext.extend_from_slice(x);
    for i in 0..padlen {
        ext.push(2.0 * x[n - 1] - x[n - 2 - i]);
    }

    let zi = lfilter_zi(&spec.b, &spec.a);
    let scale = |z: &[f64], v: f64| -> Vec<f64> { z.iter().map(|&zi| zi * v).collect() };

    let mut y = lfilter(&spec.b, &spec.a, &ext, &scale(&zi, ext[0]));
    y.reverse();
    let mut y = lfilter(&spec.b, &spec.a, &y, &scale(&zi, y[0]));
    y.reverse();
    Ok(y[padlen..padlen + n].to_vec())
}

/// Zero-phase filtering of every channel of a recording.
pub fn filtfilt(spec: &FilterSpec, rec: &Recording) -> Result<Recording> {
    if (rec.fs() - spec.fs).abs() > f64::EPSILON * spec.fs.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "filter designed for fs = {} Hz applied to recording at {} Hz",
            spec.fs,
            rec.fs()
        )));
    }
    let mut out = rec.data().to_owned();
    for mut row in out.rows_mut() {
        let filtered = filtfilt_channel(spec, row.as_slice().expect("row-major recording"))?;
        row.iter_mut().zip(filtered).for_each(|(dst, v)| *dst = v);
    }
    Recording::new(out, rec.fs(), rec.layout().clone(), rec.markers().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{Channel, ChannelLayout, Recording};
    use approx::assert_relative_eq;
    use ndarray::Array2;

    // Reference coefficients computed offline with scipy.signal.butter /
    // iirnotch / lfilter_zi / filtfilt (see the matching values asserted
    // below); they pin the design path to the standard implementation.
    const SCIPY_BP_B: [f64; 5] = [
        0.019361565924138412,
        0.0,
        -0.038723131848276825,
        0.0,
        0.019361565924138412,
    ];
    const SCIPY_BP_A: [f64; 5] = [
        1.0,
        -3.5660720383415856,
        4.779918245459488,
        -2.860911912989749,
        0.6470688883464757,
    ];
    const SCIPY_NOTCH_B: [f64; 3] = [0.9937559649536571, -1.8479418578501994, 0.9937559649536571];
    const SCIPY_NOTCH_A: [f64; 3] = [1.0, -1.8479418578501994, 0.9875119299073143];

    fn bp_1_50() -> FilterSpec {
        design_bandpass(1.0, 50.0, 2, 1000.0).unwrap()
    }

    /// Analog Butterworth band-pass magnitude evaluated at the pre-warped
    /// frequency of a digital frequency f — the design is exact under the
    /// bilinear transform, so |H_digital(f)| must match this everywhere.
    fn analog_bandpass_mag(f: f64, low: f64, high: f64, order: usize, fs: f64) -> f64 {
        let warp = |f: f64| 4.0 * (PI * f / fs).tan();
        let (w1, w2) = (warp(low), warp(high));
        let (wo2, bw) = (w1 * w2, w2 - w1);
        let omega = warp(f);
        if omega == 0.0 {
            return 0.0;
        }
        let x = (omega * omega - wo2) / (omega * bw);
        1.0 / (1.0 + x.powi(2 * order as i32)).sqrt()
    }

    #[test]
    fn bandpass_matches_reference_coefficients() {
        let spec = bp_1_50();
        for (got, want) in spec.b.iter().zip(SCIPY_BP_B) {
            assert_relative_eq!(got, &want, max_relative = 1e-9, epsilon = 1e-15);
        }
        for (got, want) in spec.a.iter().zip(SCIPY_BP_A) {
            assert_relative_eq!(got, &want, max_relative = 1e-9);
        }
        assert_eq!(spec.a[0], 1.0);
    }

    #[test]
    fn bandpass_magnitude_matches_analog_oracle_everywhere() {
        let spec = bp_1_50();
        let freqs: Vec<f64> = vec![0.2, 0.5, 1.0, 2.0, 5.0, 7.0710678, 10.0, 20.0, 50.0, 120.0, 350.0];
        let h = frequency_response(&spec, &freqs);
        for (f, h) in freqs.iter().zip(h) {
            let want = analog_bandpass_mag(*f, 1.0, 50.0, 2, 1000.0);
            assert_relative_eq!(h.norm(), want, max_relative = 1e-8, epsilon = 1e-12);
        }
    }

    #[test]
    fn bandpass_unity_at_geometric_center_and_zero_at_dc() {
        let spec = bp_1_50();
        let h = frequency_response(&spec, &[(1.0f64 * 50.0).sqrt(), 0.0]);
        assert!((h[0].norm() - 1.0).abs() < 0.01, "|H| at center = {}", h[0].norm());
        assert!(h[1].norm() < 1e-6, "|H(0)| = {}", h[1].norm());
    }

    #[test]
    fn bandpass_rejects_edge_at_or_past_nyquist() {
        match design_bandpass(1.0, 50.0, 2, 100.0) {
            Err(Error::FrequencyOutOfRange { freq, nyquist, .. }) => {
                assert_eq!(freq, 50.0);
                assert_eq!(nyquist, 50.0);
            }
            other => panic!("expected FrequencyOutOfRange, got {other:?}"),
        }
        assert!(design_bandpass(0.0, 50.0, 2, 1000.0).is_err());
        assert!(design_bandpass(50.0, 1.0, 2, 1000.0).is_err());
        assert!(design_bandpass(1.0, 50.0, 0, 1000.0).is_err());
    }

    #[test]
    fn notch_matches_reference_coefficients() {
        let spec = design_notch(60.0, 1000.0, 30.0).unwrap();
        for (got, want) in spec.b.iter().zip(SCIPY_NOTCH_B) {
            assert_relative_eq!(got, &want, max_relative = 1e-12);
        }
        for (got, want) in spec.a.iter().zip(SCIPY_NOTCH_A) {
            assert_relative_eq!(got, &want, max_relative = 1e-12);
        }
    }

    #[test]
    fn notch_response_contract() {
        let spec = design_notch(60.0, 1000.0, 30.0).unwrap();
        let h = frequency_response(&spec, &[60.0, 10.0]);
        assert!(h[0].norm() < 0.01, "|H(60)| = {}", h[0].norm());
        assert!(h[1].norm() > 0.99, "|H(10)| = {}", h[1].norm());
        // Reference |H(10)| from the closed-form response: 0.9999832925549265.
        assert_relative_eq!(h[1].norm(), 0.9999832925549265, max_relative = 1e-10);
        // Away from the notch (> 3 * center / q = 6 Hz), magnitude stays high.
        let far: Vec<f64> = vec![10.0, 30.0, 54.0 - 0.1, 66.1, 100.0, 250.0];
        for h in frequency_response(&spec, &far) {
            assert!(h.norm() > 0.9, "|H| = {} in the pass region", h.norm());
        }
    }

    #[test]
    fn notch_rejects_center_at_nyquist() {
        assert!(matches!(
            design_notch(60.0, 100.0, 30.0),
            Err(Error::FrequencyOutOfRange { .. })
        ));
    }

    #[test]
    fn designed_filters_are_stable() {
        for spec in [
            bp_1_50(),
            design_notch(60.0, 1000.0, 30.0).unwrap(),
            design_lowpass(40.0, 2, 1000.0).unwrap(),
            design_bandpass(4.0, 8.0, 2, 100.0).unwrap(),
            design_bandpass(8.0, 13.0, 3, 100.0).unwrap(),
        ] {
            assert!(
                spec.max_pole_magnitude() < 1.0 - 1e-9,
                "{:?}: max pole {}",
                spec.kind,
                spec.max_pole_magnitude()
            );
        }
    }

    #[test]
    fn lfilter_zi_matches_reference() {
        let want = [
            -0.019361565928099046,
            -0.019361565913975143,
            0.01936156591537019,
            0.019361565926701216,
        ];
        let spec = bp_1_50();
        let zi = lfilter_zi(&spec.b, &spec.a);
        for (got, want) in zi.iter().zip(want) {
            assert_relative_eq!(got, &want, max_relative = 1e-6);
        }
    }

    /// Deterministic 60-sample signal used for the frozen filtfilt vector.
    fn filtfilt_fixture() -> Vec<f64> {
        (0..60)
            .map(|i| {
                let t = i as f64 / 1000.0;
                (2.0 * PI * 20.0 * t).sin() + 0.25 * (2.0 * PI * 45.0 * t + 0.3).cos() + 0.1
            })
            .collect()
    }

    #[test]
    fn filtfilt_matches_reference_vector() {
        let spec = bp_1_50();
        let y = filtfilt_channel(&spec, &filtfilt_fixture()).unwrap();
        let head = [
            -0.5118535816491494,
            -0.4625719427625004,
            -0.41434047471088675,
            -0.36820756369931984,
            -0.32480759678236226,
            -0.28433729813159986,
            -0.24663873191323382,
            -0.21135471755945448,
            -0.17812172897691952,
            -0.1467673842106714,
        ];
        let mid = [
            -1.026816088986543,
            -1.2058331145473824,
            -1.3853812164536623,
            -1.5601323267443186,
            -1.7248990367283523,
        ];
        let tail = [
            -1.189955353929783,
            -1.1002089990121997,
            -1.005659102960256,
            -0.9075732486531572,
            -0.8075107288330923,
        ];
        for (i, &want) in head.iter().enumerate() {
            assert_relative_eq!(y[i], want, max_relative = 1e-9, epsilon = 1e-12);
        }
        for (i, &want) in mid.iter().enumerate() {
            assert_relative_eq!(y[25 + i], want, max_relative = 1e-9);
        }
        for (i, &want) in tail.iter().enumerate() {
            assert_relative_eq!(y[55 + i], want, max_relative = 1e-9);
        }
        let energy: f64 = y.iter().map(|v| v * v).sum();
        assert_relative_eq!(energy, 112.13674522078827, max_relative = 1e-9);
    }

    fn single_channel_recording(x: Vec<f64>, fs: f64) -> Recording {
        let n = x.len();
        let layout = ChannelLayout::new(vec![Channel::eeg("Cz", 0.0, 0.0)]).unwrap();
        Recording::new(Array2::from_shape_vec((1, n), x).unwrap(), fs, layout, vec![]).unwrap()
    }

    #[test]
    fn filtfilt_is_zero_phase_on_passband_sine() {
        let fs = 1000.0;
        let x: Vec<f64> = (0..10_000).map(|i| (2.0 * PI * 20.0 * i as f64 / fs).sin()).collect();
        let rec = single_channel_recording(x.clone(), fs);
        let out = filtfilt(&bp_1_50(), &rec).unwrap();
        let y = out.channel_data(0).to_vec();

        // Cross-correlation peak must be at lag 0 (strictly, not +/-1).
        let max_lag = 50i64;
        let mut best = (i64::MIN, f64::MIN);
        for lag in -max_lag..=max_lag {
            let mut acc = 0.0;
            for i in 0..x.len() {
                let j = i as i64 + lag;
                if j >= 0 && (j as usize) < y.len() {
                    acc += x[i] * y[j as usize];
                }
            }
            if acc > best.1 {
                best = (lag, acc);
            }
        }
        assert_eq!(best.0, 0, "cross-correlation peak at lag {}", best.0);
    }

    #[test]
    fn filtfilt_rejects_dc() {
        let fs = 1000.0;
        let rec = single_channel_recording(vec![5.0; 5000], fs);
        let out = filtfilt(&bp_1_50(), &rec).unwrap();
        let y = out.channel_data(0);
        let edge = fs as usize;
        let max_abs = y
            .iter()
            .skip(edge)
            .take(y.len() - 2 * edge)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_abs < 1e-3, "max |y| = {max_abs} after discarding edges");
    }

    #[test]
    fn notch_kills_60hz_sine() {
        let fs = 1000.0;
        let x: Vec<f64> = (0..5000).map(|i| (2.0 * PI * 60.0 * i as f64 / fs).sin()).collect();
        let rec = single_channel_recording(x, fs);
        let spec = design_notch(60.0, 1000.0, 30.0).unwrap();
        let out = filtfilt(&spec, &rec).unwrap();
        let y = out.channel_data(0);
        let edge = fs as usize;
        let max_abs = y
            .iter()
            .skip(edge)
            .take(y.len() - 2 * edge)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_abs < 1e-3, "steady-state amplitude {max_abs}");
    }

    #[test]
    fn filtfilt_is_linear() {
        let spec = bp_1_50();
        let n = 400;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7919 + 13) % 101) as f64 / 50.0 - 1.0).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i * 104729 + 5) % 97) as f64 / 48.0 - 1.0).collect();
        let (ca, cb) = (1.7, -0.4);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(&xi, &yi)| ca * xi + cb * yi).collect();

        let fx = filtfilt_channel(&spec, &x).unwrap();
        let fy = filtfilt_channel(&spec, &y).unwrap();
        let fc = filtfilt_channel(&spec, &combo).unwrap();
        let scale = fc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            let want = ca * fx[i] + cb * fy[i];
            assert!(
                (fc[i] - want).abs() <= 1e-9 * scale.max(1.0),
                "nonlinearity at {i}: {} vs {want}",
                fc[i]
            );
        }
    }

    #[test]
    fn filtfilt_rejects_short_signal() {
        let spec = bp_1_50();
        let x = vec![0.0; 15]; // padlen = 3 * 5 = 15, need strictly more
        assert!(matches!(
            filtfilt_channel(&spec, &x),
            Err(Error::SignalTooShort { min: 15, .. })
        ));
        assert!(filtfilt_channel(&spec, &vec![0.0; 16]).is_ok());
    }

    #[test]
    fn filtfilt_rejects_fs_mismatch() {
        let rec = single_channel_recording(vec![0.0; 100], 500.0);
        assert!(filtfilt(&bp_1_50(), &rec).is_err());
    }
}
