//! Band-power feature matrices for the PSD-SVM baseline.

use crate::error::{Error, Result};
use crate::signal::{EpochSet, Label};
use crate::spectral::{band_power, welch_psd, Band, WelchParams};
use ndarray::Array2;

/// Floor applied before the log10 transform so silent epochs stay finite.
const LOG_FLOOR: f64 = 1e-15;

/// Per-column normalization statistics, fitted on a training subset only.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// One row per epoch; columns are log10 band powers in a frozen
/// channel-major, band-minor order (`CH_band`).
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub data: Array2<f64>,
    pub labels: Vec<Label>,
    pub col_names: Vec<String>,
    pub norm: Option<NormStats>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    /// Column statistics over the given rows (a training subset).
    pub fn fit_norm(&self, rows: &[usize]) -> NormStats {
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; self.n_cols()];
        let mut std = vec![0.0; self.n_cols()];
        for &r in rows {
            for (c, m) in mean.iter_mut().enumerate() {
                *m += self.data[[r, c]];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        for &r in rows {
            for (c, s) in std.iter_mut().enumerate() {
                let d = self.data[[r, c]] - mean[c];
                *s += d * d;
            }
        }
        for s in std.iter_mut() {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        NormStats { mean, std }
    }

    /// Z-scored copy using the given (training-only) statistics.
    pub fn normalized(&self, stats: &NormStats) -> FeatureMatrix {
        let mut data = self.data.clone();
        for mut row in data.rows_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - stats.mean[c]) / stats.std[c];
            }
        }
        FeatureMatrix {
            data,
            labels: self.labels.clone(),
            col_names: self.col_names.clone(),
            norm: Some(stats.clone()),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Array2::zeros((rows.len(), self.n_cols()));
        let mut labels = Vec::with_capacity(rows.len());
        for (out, &r) in rows.iter().enumerate() {
            data.row_mut(out).assign(&self.data.row(r));
            labels.push(self.labels[r]);
        }
        FeatureMatrix { data, labels, col_names: self.col_names.clone(), norm: self.norm.clone() }
    }

    /// CSV export: `label` column followed by one `CH_band` column per
    /// feature.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for name in &self.col_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (row, label) in self.data.rows().into_iter().zip(&self.labels) {
            out.push_str(&label.to_string());
            for v in row {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Per epoch: the four canonical band powers of every EEG channel,
/// channel-major band-minor, log10-transformed. Z-scoring is a separate,
/// training-subset-only step ([`FeatureMatrix::fit_norm`]).
pub fn psd_features(epochs: &EpochSet, params: WelchParams) -> Result<FeatureMatrix> {
    if epochs.n_epochs() == 0 {
        return Err(Error::EmptyInput("no epochs to featurize".into()));
    }
    let eeg = epochs.layout().eeg_indices();
    if eeg.is_empty() {
        return Err(Error::EmptyInput("no EEG channels in epoch set".into()));
    }

    let mut col_names = Vec::with_capacity(eeg.len() * Band::CANONICAL.len());
    for &ch in &eeg {
        for band in Band::CANONICAL {
            col_names.push(format!("{}_{}", epochs.layout().channel(ch).name, band.name));
        }
    }

    let mut data = Array2::zeros((epochs.n_epochs(), col_names.len()));
    for e in 0..epochs.n_epochs() {
        let epoch = epochs.data().index_axis(ndarray::Axis(0), e);
        let spec = welch_psd(epoch, epochs.fs(), params)?;
        for (ci, &ch) in eeg.iter().enumerate() {
            for (bi, band) in Band::CANONICAL.iter().enumerate() {
                let powers = band_power(&spec, *band)?;
                data[[e, ci * Band::CANONICAL.len() + bi]] = powers[ch].max(LOG_FLOOR).log10();
            }
        }
    }

    Ok(FeatureMatrix { data, labels: epochs.labels().to_vec(), col_names, norm: None })
}
