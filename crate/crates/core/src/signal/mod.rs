//! Continuous-signal data model and the preprocessing chain: IIR filtering,
//! decimation, ICA artifact removal, epoching, and class balancing.

mod decimate;
mod epoch;
mod filter;
mod ica;
pub mod io;
mod types;

pub use decimate::decimate;
pub use epoch::{balance_classes, segment_epochs, Segmented};
pub use filter::{
    design_bandpass, design_lowpass, design_notch, filtfilt, filtfilt_channel, frequency_response,
    FilterKind, FilterSpec,
};
pub use ica::{amari_index, clean_artifacts, fit_ica, ica_sources, IcaModel};
pub use types::{
    standard_layout, Channel, ChannelKind, ChannelLayout, Class, EpochSet, Event, Label, Recording,
};
