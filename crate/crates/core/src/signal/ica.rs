//! Independent component analysis for artifact removal.
//!
//! FastICA with the tanh contrast and symmetric decorrelation, on top of PCA
//! whitening. Components whose time courses correlate with an EOG channel
//! beyond a threshold are treated as ocular artifacts and zeroed out before
//! reconstructing the EEG.

use crate::error::{Error, Result};
use crate::signal::Recording;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const MAX_ITER: usize = 500;
const TOL: f64 = 1e-6;

/// Fitted ICA decomposition of the EEG channels of a recording.
///
/// `unmixing` maps centered EEG data to component time courses; `mixing` is
/// its pseudo-inverse and maps components back to channel space, so
/// `unmixing . mixing == I_k` on the retained subspace.
#[derive(Debug, Clone)]
pub struct IcaModel {
    pub unmixing: Array2<f64>,
    pub mixing: Array2<f64>,
    pub channel_means: Array1<f64>,
    pub whitener: Array2<f64>,
    pub converged: bool,
    pub iterations: usize,
    fitted_channels: Vec<String>,
}

impl IcaModel {
    pub fn n_components(&self) -> usize {
        self.unmixing.nrows()
    }

    pub fn fitted_channels(&self) -> &[String] {
        &self.fitted_channels
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues in descending order with matching eigenvector columns.
fn symmetric_eig(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v: Array2<f64> = Array2::eye(n);
    let diag_scale: f64 = (0..n).map(|i| m[[i, i]] * m[[i, i]]).sum::<f64>().max(1e-300);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| m[[p, q]] * m[[p, q]])
            .sum();
        if off <= 1e-28 * diag_scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                let (app, aqq) = (m[[p, p]], m[[q, q]]);
                m[[p, p]] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
                m[[q, q]] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
                m[[p, q]] = 0.0;
                m[[q, p]] = 0.0;
                for i in 0..n {
                    if i != p && i != q {
                        let (aip, aiq) = (m[[i, p]], m[[i, q]]);
                        m[[i, p]] = c * aip - s * aiq;
                        m[[p, i]] = m[[i, p]];
                        m[[i, q]] = s * aip + c * aiq;
                        m[[q, i]] = m[[i, q]];
                    }
                }
                for i in 0..n {
                    let (vip, viq) = (v[[i, p]], v[[i, q]]);
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let eigvals: Vec<f64> = order.iter().map(|&i| m[[i, i]]).collect();
    let mut eigvecs = Array2::zeros((n, n));
    for (out_col, &in_col) in order.iter().enumerate() {
        eigvecs.column_mut(out_col).assign(&v.column(in_col));
    }
    (eigvals, eigvecs)
}

/// W <- (W W^T)^{-1/2} W.
fn sym_decorrelate(w: &Array2<f64>) -> Array2<f64> {
    let (vals, vecs) = symmetric_eig(&w.dot(&w.t()));
    let inv_sqrt: Vec<f64> = vals.iter().map(|&l| 1.0 / l.max(1e-14).sqrt()).collect();
    let mut scaled = vecs.clone();
    for (mut col, s) in scaled.columns_mut().into_iter().zip(&inv_sqrt) {
        col.mapv_inplace(|x| x * s);
    }
    scaled.dot(&vecs.t()).dot(w)
}

/// Fit FastICA (tanh contrast, symmetric decorrelation, PCA whitening) on
/// the EEG channels of `rec`. Deterministic for a given seed; convergence is
/// declared when the maximum weight change drops below 1e-6, with a hard cap
/// of 500 iterations (non-convergence is reported via the `converged` flag,
/// not an error).
pub fn fit_ica(rec: &Recording, n_components: usize, seed: u64) -> Result<IcaModel> {
    let eeg_idx = rec.layout().eeg_indices();
    let n_ch = eeg_idx.len();
    if n_components == 0 || n_components > n_ch {
        return Err(Error::InvalidArgument(format!(
            "n_components = {n_components} outside 1..={n_ch} EEG channels"
        )));
    }
    let m = rec.n_samples();
    let min_samples = 20 * rec.n_channels();
    if m < min_samples {
        return Err(Error::SignalTooShort { len: m, min: min_samples });
    }

    let mut x = Array2::zeros((n_ch, m));
    for (row, &ch) in eeg_idx.iter().enumerate() {
        x.row_mut(row).assign(&rec.channel_data(ch));
    }
    let means = x.mean_axis(Axis(1)).expect("non-empty rows");
    for (mut row, &mu) in x.rows_mut().into_iter().zip(&means) {
        row.mapv_inplace(|v| v - mu);
    }

    // PCA whitening: K = D^{-1/2} E^T restricted to the leading components.
    let cov = x.dot(&x.t()) / m as f64;
    let (eigvals, eigvecs) = symmetric_eig(&cov);
    let scale = eigvals[0].max(1e-300);
    if eigvals[n_components - 1] <= 1e-12 * scale {
        return Err(Error::RankDeficient {
            component: n_components - 1,
            eigenvalue: eigvals[n_components - 1],
        });
    }
    let mut whitener = Array2::zeros((n_components, n_ch));
    for k in 0..n_components {
        let norm = 1.0 / eigvals[k].sqrt();
        for i in 0..n_ch {
            whitener[[k, i]] = eigvecs[[i, k]] * norm;
        }
    }
    let xw = whitener.dot(&x);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::from_shape_fn((n_components, n_components), |_| {
        StandardNormal.sample(&mut rng)
    });
    w = sym_decorrelate(&w);

    let mut converged = false;
    let mut iterations = MAX_ITER;
    for iter in 0..MAX_ITER {
        let wx = w.dot(&xw);
        let g = wx.mapv(f64::tanh);
        let g_prime_mean: Array1<f64> =
            g.map_axis(Axis(1), |row| row.iter().map(|t| 1.0 - t * t).sum::<f64>() / m as f64);
        let mut w_new = g.dot(&xw.t()) / m as f64;
        for (mut row, (&gp, w_row)) in
            w_new.rows_mut().into_iter().zip(g_prime_mean.iter().zip(w.rows()))
        {
            row.zip_mut_with(&w_row, |out, &wij| *out -= gp * wij);
        }
        let w_new = sym_decorrelate(&w_new);

        let lim = w_new
            .rows()
            .into_iter()
            .zip(w.rows())
            .map(|(a, b)| (a.dot(&b).abs() - 1.0).abs())
            .fold(0.0f64, f64::max);
        w = w_new;
        if lim < TOL {
            converged = true;
            iterations = iter + 1;
            break;
        }
    }

    let unmixing = w.dot(&whitener);
    // Pseudo-inverse of the unmixing under the whitening construction:
    // A = E_k D^{1/2} W^T.
    let mut mixing = Array2::zeros((n_ch, n_components));
    for i in 0..n_ch {
        for k in 0..n_components {
            let mut acc = 0.0;
            for j in 0..n_components {
                acc += eigvecs[[i, j]] * eigvals[j].sqrt() * w[[k, j]];
            }
            mixing[[i, k]] = acc;
        }
    }

    let fitted_channels =
        eeg_idx.iter().map(|&i| rec.layout().channel(i).name.clone()).collect();
    Ok(IcaModel {
        unmixing,
        mixing,
        channel_means: means,
        whitener,
        converged,
        iterations,
        fitted_channels,
    })
}

/// Component time courses of the EEG channels of `rec` under a fitted model.
pub fn ica_sources(model: &IcaModel, rec: &Recording) -> Result<Array2<f64>> {
    let eeg_idx = rec.layout().eeg_indices();
    if eeg_idx.len() != model.unmixing.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "model fitted on {} channels, recording has {} EEG channels",
            model.unmixing.ncols(),
            eeg_idx.len()
        )));
    }
    let mut x = Array2::zeros((eeg_idx.len(), rec.n_samples()));
    for (row, &ch) in eeg_idx.iter().enumerate() {
        let mu = model.channel_means[row];
        x.row_mut(row).assign(&rec.channel_data(ch).mapv(|v| v - mu));
    }
    Ok(model.unmixing.dot(&x))
}

fn pearson(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.sum() / n, y.sum() / n);
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y.iter()) {
        let (da, db) = (a - mx, b - my);
        cov += da * db;
        vx += da * da;
        vy += db * db;
    }
    if vx <= 0.0 || vy <= 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Flag every component whose absolute Pearson correlation with any EOG
/// channel exceeds `corr_threshold`, reconstruct the EEG with those
/// components zeroed, and drop the EOG channels from the output.
pub fn clean_artifacts(
    model: &IcaModel,
    rec: &Recording,
    eog_names: &[String],
    corr_threshold: f64,
) -> Result<(Recording, Vec<usize>)> {
    let layout = rec.layout();
    let eog_idx: Vec<usize> = eog_names.iter().filter_map(|n| layout.index_of(n)).collect();
    if eog_idx.is_empty() {
        return Err(Error::NoEogChannels(eog_names.to_vec()));
    }

    let sources = ica_sources(model, rec)?;
    let mut flagged = Vec::new();
    for (comp, src) in sources.rows().into_iter().enumerate() {
        let max_corr = eog_idx
            .iter()
            .map(|&e| pearson(src, rec.channel_data(e)).abs())
            .fold(0.0f64, f64::max);
        if max_corr > corr_threshold {
            flagged.push(comp);
        }
    }

    let mut kept_sources = sources;
    for &comp in &flagged {
        kept_sources.row_mut(comp).fill(0.0);
    }
    let mut clean = model.mixing.dot(&kept_sources);
    for (mut row, &mu) in clean.rows_mut().into_iter().zip(&model.channel_means) {
        row.mapv_inplace(|v| v + mu);
    }

    let eeg_idx = layout.eeg_indices();
    let out_layout = layout.subset(&eeg_idx);
    let out = Recording::new(clean, rec.fs(), out_layout, rec.markers().to_vec())?;
    Ok((out, flagged))
}

/// Amari index of a square performance matrix `p` (typically
/// `unmixing . true_mixing`): 0 means perfect separation up to permutation
/// and scale, larger values mean residual mixing.
pub fn amari_index(p: &Array2<f64>) -> f64 {
    let k = p.nrows();
    assert_eq!(k, p.ncols(), "performance matrix must be square");
    let abs = p.mapv(f64::abs);
    let mut total = 0.0;
    for row in abs.rows() {
        let max = row.iter().fold(0.0f64, |m, &v| m.max(v)).max(1e-300);
        total += row.sum() / max - 1.0;
    }
    for col in abs.columns() {
        let max = col.iter().fold(0.0f64, |m, &v| m.max(v)).max(1e-300);
        total += col.sum() / max - 1.0;
    }
    total / (2.0 * k as f64 * (k as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{Channel, ChannelLayout};
    use ndarray::array;
    use rand::Rng;
    use std::f64::consts::PI;

    fn toy_sources(m: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Array2::zeros((3, m));
        for j in 0..m {
            let t = j as f64 / 200.0;
            s[[0, j]] = (2.0 * PI * 7.0 * t).sin();
            s[[1, j]] = if (2.0 * PI * 3.0 * t).sin() >= 0.0 { 1.0 } else { -1.0 };
            s[[2, j]] = rng.random_range(-1.0..1.0) * 3.0f64.sqrt();
        }
        // Unit variance per row.
        for mut row in s.rows_mut() {
            let mu = row.sum() / m as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m as f64;
            row.mapv_inplace(|v| (v - mu) / var.sqrt());
        }
        s
    }

    fn eeg_recording(data: Array2<f64>, fs: f64) -> Recording {
        let n = data.nrows();
        let channels: Vec<Channel> = (0..n)
            .map(|i| Channel::eeg(&format!("E{i}"), 0.1 * i as f64, 0.0))
            .collect();
        Recording::new(data, fs, ChannelLayout::new(channels).unwrap(), vec![]).unwrap()
    }

    #[test]
    fn recovers_planted_mixing() {
        let s = toy_sources(2000, 3);
        let a = array![[0.9, 0.4, 0.2], [0.3, 1.1, -0.3], [-0.2, 0.5, 0.8]];
        let rec = eeg_recording(a.dot(&s), 200.0);
        let model = fit_ica(&rec, 3, 7).unwrap();
        let perf = model.unmixing.dot(&a);
        let idx = amari_index(&perf);
        assert!(idx < 0.1, "Amari index {idx}");
    }

    #[test]
    fn identity_mixing_gives_signed_permutation() {
        let s = toy_sources(4000, 11);
        let rec = eeg_recording(s, 200.0);
        let model = fit_ica(&rec, 3, 5).unwrap();
        // unmixing . I should be a signed permutation of the identity.
        let u = &model.unmixing;
        let mut used_cols = [false; 3];
        for row in u.rows() {
            let (best, &val) = row
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
                .unwrap();
            assert!((val.abs() - 1.0).abs() < 0.05, "dominant entry {val}");
            for (j, &v) in row.iter().enumerate() {
                if j != best {
                    assert!(v.abs() < 0.05, "off-entry {v}");
                }
            }
            assert!(!used_cols[best], "column {best} claimed twice");
            used_cols[best] = true;
        }
    }

    #[test]
    fn thirty_components_on_thirty_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layout = crate::signal::standard_layout();
        let data = Array2::from_shape_fn((layout.len(), 20 * layout.len()), |_| {
            rng.random_range(-1.0..1.0)
        });
        let rec = Recording::new(data, 100.0, layout, vec![]).unwrap();
        let model = fit_ica(&rec, 30, 1).unwrap();
        assert_eq!(model.n_components(), 30);
        assert_eq!(model.unmixing.dim(), (30, 30));
    }

    #[test]
    fn unmixing_times_mixing_is_identity() {
        let s = toy_sources(2000, 3);
        let a = array![[0.9, 0.4, 0.2], [0.3, 1.1, -0.3], [-0.2, 0.5, 0.8]];
        let rec = eeg_recording(a.dot(&s), 200.0);
        let model = fit_ica(&rec, 3, 7).unwrap();
        let prod = model.unmixing.dot(&model.mixing);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (prod[[i, j]] - want).abs() < 1e-6,
                    "(UA)[{i},{j}] = {}",
                    prod[[i, j]]
                );
            }
        }
    }

    #[test]
    fn round_trip_reconstruction() {
        let s = toy_sources(2000, 9);
        let a = array![[1.0, 0.2, -0.1], [0.3, 0.9, 0.2], [-0.3, 0.4, 1.2]];
        let x = a.dot(&s);
        let rec = eeg_recording(x.clone(), 200.0);
        let model = fit_ica(&rec, 3, 4).unwrap();
        let sources = ica_sources(&model, &rec).unwrap();
        let mut recon = model.mixing.dot(&sources);
        for (mut row, &mu) in recon.rows_mut().into_iter().zip(&model.channel_means) {
            row.mapv_inplace(|v| v + mu);
        }
        let num: f64 = (&recon - &x).iter().map(|v| v * v).sum::<f64>().sqrt();
        let den: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(num / den < 1e-6, "relative reconstruction error {}", num / den);
    }

    #[test]
    fn deterministic_given_seed() {
        let s = toy_sources(1500, 6);
        let a = array![[0.9, 0.4, 0.2], [0.3, 1.1, -0.3], [-0.2, 0.5, 0.8]];
        let rec = eeg_recording(a.dot(&s), 200.0);
        let m1 = fit_ica(&rec, 3, 99).unwrap();
        let m2 = fit_ica(&rec, 3, 99).unwrap();
        assert_eq!(m1.unmixing, m2.unmixing);
        assert_eq!(m1.iterations, m2.iterations);
    }

    fn blink_recording(blink_gain_eeg: f64, seed: u64) -> (Recording, Vec<f64>) {
        let m = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Blink: periodic smooth pulses.
        let blink: Vec<f64> = (0..m)
            .map(|j| {
                let phase = (j % 500) as f64;
                if phase < 80.0 { (PI * phase / 80.0).sin().powi(2) * 120.0 } else { 0.0 }
            })
            .collect();
        let mut channels = Vec::new();
        let mut data = Array2::zeros((6, m));
        for ch in 0..5 {
            channels.push(Channel::eeg(&format!("E{ch}"), 0.1 * ch as f64, 0.2));
            let gain = if ch < 2 { blink_gain_eeg } else { 0.0 };
            for j in 0..m {
                let t = j as f64 / 200.0;
                let osc = (2.0 * PI * (5.0 + ch as f64) * t).sin();
                data[[ch, j]] = 10.0 * osc + rng.random_range(-2.0..2.0) + gain * blink[j];
            }
        }
        channels.push(Channel::eog("VEOG", -0.3, 0.95));
        for j in 0..m {
            data[[5, j]] = blink[j] + rng.random_range(-1.0..1.0);
        }
        let rec =
            Recording::new(data, 200.0, ChannelLayout::new(channels).unwrap(), vec![]).unwrap();
        (rec, blink)
    }

    #[test]
    fn flags_and_removes_planted_blink() {
        let (rec, blink) = blink_recording(1.0, 21);
        let model = fit_ica(&rec, 5, 13).unwrap();
        let (clean, flagged) =
            clean_artifacts(&model, &rec, &["VEOG".to_string()], 0.7).unwrap();
        assert!(!flagged.is_empty(), "no component flagged");
        assert_eq!(clean.n_channels(), 5, "EOG dropped from output");
        let blink_arr = Array1::from(blink);
        for ch in 0..clean.n_channels() {
            let r = pearson(clean.channel_data(ch), blink_arr.view()).abs();
            assert!(r < 0.2, "channel {ch} still carries blink (|r| = {r})");
        }
    }

    #[test]
    fn nothing_to_remove_is_a_round_trip() {
        let (rec, _) = blink_recording(0.0, 33);
        let model = fit_ica(&rec, 5, 13).unwrap();
        let (clean, flagged) =
            clean_artifacts(&model, &rec, &["VEOG".to_string()], 0.7).unwrap();
        assert!(flagged.is_empty(), "flagged {flagged:?}");
        let eeg_idx = rec.layout().eeg_indices();
        let mut max_rel = 0.0f64;
        let scale = rec.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (row, &ch) in eeg_idx.iter().enumerate() {
            for (a, b) in clean.channel_data(row).iter().zip(rec.channel_data(ch).iter()) {
                max_rel = max_rel.max((a - b).abs() / scale);
            }
        }
        assert!(max_rel < 1e-6, "round-trip deviation {max_rel}");
    }

    #[test]
    fn zero_threshold_flags_everything() {
        let (rec, _) = blink_recording(0.5, 8);
        let model = fit_ica(&rec, 5, 13).unwrap();
        let (clean, flagged) =
            clean_artifacts(&model, &rec, &["VEOG".to_string()], 0.0).unwrap();
        assert_eq!(flagged.len(), 5);
        for (row, mean) in clean.data().rows().into_iter().zip(&model.channel_means) {
            for v in row {
                assert!((v - mean).abs() < 1e-9, "expected channel mean, got {v}");
            }
        }
    }

    #[test]
    fn missing_eog_is_an_error() {
        let (rec, _) = blink_recording(0.5, 8);
        let model = fit_ica(&rec, 5, 13).unwrap();
        assert!(matches!(
            clean_artifacts(&model, &rec, &["NotAChannel".to_string()], 0.7),
            Err(Error::NoEogChannels(_))
        ));
    }

    #[test]
    fn precondition_violations() {
        let (rec, _) = blink_recording(0.5, 8);
        assert!(fit_ica(&rec, 6, 1).is_err(), "more components than EEG channels");
        let short = eeg_recording(Array2::zeros((3, 30)), 100.0);
        assert!(matches!(fit_ica(&short, 3, 1), Err(Error::SignalTooShort { .. })));
    }

    #[test]
    fn amari_index_of_permutation_is_zero() {
        let p = array![[0.0, 2.0, 0.0], [0.0, 0.0, -0.5], [3.0, 0.0, 0.0]];
        assert!(amari_index(&p) < 1e-12);
        let dense = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(amari_index(&dense) > 0.9);
    }
}
