//! Welch power spectral density, canonical frequency bands, and band-power
//! features for the PSD-SVM baseline and the topography analysis.

mod features;
mod welch;

pub use features::{psd_features, FeatureMatrix, NormStats};
pub use welch::{band_power, welch_psd, Band, Spectrum, WelchParams};
