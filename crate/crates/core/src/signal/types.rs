//! Recording, channel layout, event markers, labels, and epoch sets.

use crate::error::{Error, Result};
use ndarray::{Array2, Array3, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    #[serde(rename = "EEG")]
    Eeg,
    #[serde(rename = "EOG")]
    Eog,
}

/// One electrode: name, kind, and a 2-D position for topography plots.
/// EEG positions live inside the unit disc (schematic top view of the scalp).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub kind: ChannelKind,
    pub pos: (f64, f64),
}

impl Channel {
    pub fn eeg(name: &str, x: f64, y: f64) -> Self {
        Channel { name: name.to_string(), kind: ChannelKind::Eeg, pos: (x, y) }
    }

    pub fn eog(name: &str, x: f64, y: f64) -> Self {
        Channel { name: name.to_string(), kind: ChannelKind::Eog, pos: (x, y) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelLayout {
    channels: Vec<Channel>,
}

impl ChannelLayout {
    pub fn new(channels: Vec<Channel>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for ch in &channels {
            if !seen.insert(ch.name.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate channel name {:?}",
                    ch.name
                )));
            }
            if ch.kind == ChannelKind::Eeg {
                let r2 = ch.pos.0 * ch.pos.0 + ch.pos.1 * ch.pos.1;
                if r2 > 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "EEG channel {:?} position {:?} lies outside the unit disc",
                        ch.name, ch.pos
                    )));
                }
            }
        }
        Ok(ChannelLayout { channels })
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn channel(&self, idx: usize) -> &Channel {
        &self.channels[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.name == name)
    }

    pub fn eeg_indices(&self) -> Vec<usize> {
        self.indices_of_kind(ChannelKind::Eeg)
    }

    pub fn eog_indices(&self) -> Vec<usize> {
        self.indices_of_kind(ChannelKind::Eog)
    }

    fn indices_of_kind(&self, kind: ChannelKind) -> Vec<usize> {
        self.channels
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    /// New layout restricted to the given channel indices (order preserved).
    pub fn subset(&self, indices: &[usize]) -> Self {
        ChannelLayout {
            channels: indices.iter().map(|&i| self.channels[i].clone()).collect(),
        }
    }
}

/// Default montage: 30 EEG channels on a 10/20-style grid plus 4 EOG
/// channels around the eyes. Positions are schematic unit-disc coordinates
/// (x to the right, y to the front).
pub fn standard_layout() -> ChannelLayout {
    let eeg: &[(&str, f64, f64)] = &[
        ("Fp1", -0.25, 0.76),
        ("Fp2", 0.25, 0.76),
        ("F7", -0.65, 0.47),
        ("F3", -0.34, 0.42),
        ("Fz", 0.00, 0.40),
        ("F4", 0.34, 0.42),
        ("F8", 0.65, 0.47),
        ("FC5", -0.62, 0.22),
        ("FC1", -0.20, 0.21),
        ("FC2", 0.20, 0.21),
        ("FC6", 0.62, 0.22),
        ("T7", -0.80, 0.00),
        ("C3", -0.40, 0.00),
        ("Cz", 0.00, 0.00),
        ("C4", 0.40, 0.00),
        ("T8", 0.80, 0.00),
        ("CP5", -0.62, -0.22),
        ("CP1", -0.20, -0.21),
        ("CPz", 0.00, -0.20),
        ("CP2", 0.20, -0.21),
        ("CP6", 0.62, -0.22),
        ("P7", -0.65, -0.47),
        ("P3", -0.34, -0.42),
        ("Pz", 0.00, -0.40),
        ("P4", 0.34, -0.42),
        ("P8", 0.65, -0.47),
        ("POz", 0.00, -0.60),
        ("O1", -0.25, -0.76),
        ("Oz", 0.00, -0.80),
        ("O2", 0.25, -0.76),
    ];
    let mut channels: Vec<Channel> =
        eeg.iter().map(|&(n, x, y)| Channel::eeg(n, x, y)).collect();
    channels.push(Channel::eog("HEOGL", -0.95, 0.80));
    channels.push(Channel::eog("HEOGR", 0.95, 0.80));
    channels.push(Channel::eog("VEOGU", -0.35, 0.95));
    channels.push(Channel::eog("VEOGL", -0.35, 1.05));
    ChannelLayout::new(channels).expect("standard layout is valid")
}

/// Raw event label as scripted in the session. `Level1` is the low-distraction
/// task, `Level2`/`Level3` the high-distraction tasks, and both rest kinds are
/// the normal state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Level1,
    Level2,
    Level3,
    RestPost,
    RestInterSession,
}

impl Label {
    pub fn class(self) -> Class {
        match self {
            Label::Level1 => Class::Ld,
            Label::Level2 | Label::Level3 => Class::Hd,
            Label::RestPost | Label::RestInterSession => Class::Ns,
        }
    }

    pub const ALL: [Label; 5] = [
        Label::Level1,
        Label::Level2,
        Label::Level3,
        Label::RestPost,
        Label::RestInterSession,
    ];
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Label::Level1 => "Level1",
            Label::Level2 => "Level2",
            Label::Level3 => "Level3",
            Label::RestPost => "RestPost",
            Label::RestInterSession => "RestInterSession",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Level1" => Ok(Label::Level1),
            "Level2" => Ok(Label::Level2),
            "Level3" => Ok(Label::Level3),
            "RestPost" => Ok(Label::RestPost),
            "RestInterSession" => Ok(Label::RestInterSession),
            other => Err(Error::InvalidArgument(format!("unknown label {other:?}"))),
        }
    }
}

/// Classification target. The class order NS < LD < HD is a frozen contract
/// (class indices 0, 1, 2 everywhere: models, reports, checkpoints).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    #[serde(rename = "NS")]
    Ns,
    #[serde(rename = "LD")]
    Ld,
    #[serde(rename = "HD")]
    Hd,
}

impl Class {
    pub const ALL: [Class; 3] = [Class::Ns, Class::Ld, Class::Hd];

    pub fn index(self) -> usize {
        match self {
            Class::Ns => 0,
            Class::Ld => 1,
            Class::Hd => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Class> {
        Class::ALL.get(i).copied()
    }
}

impl std::fmt::Display for Class {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Class::Ns => "NS",
            Class::Ld => "LD",
            Class::Hd => "HD",
        };
        f.write_str(s)
    }
}

/// A labeled span of samples within a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub onset: usize,
    pub duration: usize,
    pub label: Label,
}

impl Event {
    pub fn new(onset: usize, duration: usize, label: Label) -> Self {
        Event { onset, duration, label }
    }

    pub fn end(&self) -> usize {
        self.onset + self.duration
    }
}

/// Continuous multichannel recording in microvolts: `data` is
/// `[n_channels x n_samples]`, row per channel, plus sampling rate, layout,
/// and event markers.
#[derive(Debug, Clone)]
pub struct Recording {
    data: Array2<f64>,
    fs: f64,
    layout: ChannelLayout,
    markers: Vec<Event>,
}

impl Recording {
    pub fn new(
        data: Array2<f64>,
        fs: f64,
        layout: ChannelLayout,
        markers: Vec<Event>,
    ) -> Result<Self> {
        if data.nrows() != layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "data has {} rows but layout has {} channels",
                data.nrows(),
                layout.len()
            )));
        }
        if !(fs > 0.0) {
            return Err(Error::InvalidArgument(format!("fs must be positive, got {fs}")));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("recording contains non-finite samples".into()));
        }
        let n = data.ncols();
        let mut sorted: Vec<&Event> = markers.iter().collect();
        sorted.sort_by_key(|e| e.onset);
        let mut prev_end = 0usize;
        for (i, ev) in sorted.iter().enumerate() {
            if ev.end() > n {
                return Err(Error::InvalidArgument(format!(
                    "event {i} spans [{}, {}) past the recording end {n}",
                    ev.onset,
                    ev.end()
                )));
            }
            if i > 0 && ev.onset < prev_end {
                return Err(Error::InvalidArgument(format!(
                    "event {i} at {} overlaps the previous event ending at {prev_end}",
                    ev.onset
                )));
            }
            prev_end = ev.end();
        }
        Ok(Recording { data, fs, layout, markers })
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn data_mut(&mut self) -> &mut Array2<f64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn layout(&self) -> &ChannelLayout {
        &self.layout
    }

    pub fn markers(&self) -> &[Event] {
        &self.markers
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn channel_data(&self, idx: usize) -> ArrayView1<'_, f64> {
        self.data.row(idx)
    }
}

/// Stack of fixed-length labeled windows `[n_epochs x n_channels x n_samples]`.
#[derive(Debug, Clone)]
pub struct EpochSet {
    data: Array3<f64>,
    labels: Vec<Label>,
    fs: f64,
    layout: ChannelLayout,
}

impl EpochSet {
    pub fn new(
        data: Array3<f64>,
        labels: Vec<Label>,
        fs: f64,
        layout: ChannelLayout,
    ) -> Result<Self> {
        let (n_epochs, n_channels, _) = data.dim();
        if labels.len() != n_epochs {
            return Err(Error::LengthMismatch { left: labels.len(), right: n_epochs });
        }
        if n_channels != layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "epochs have {} channels but layout has {}",
                n_channels,
                layout.len()
            )));
        }
        Ok(EpochSet { data, labels, fs, layout })
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn classes(&self) -> Vec<Class> {
        self.labels.iter().map(|l| l.class()).collect()
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn layout(&self) -> &ChannelLayout {
        &self.layout
    }

    pub fn n_epochs(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_samples(&self) -> usize {
        self.data.dim().2
    }

    /// Epochs per raw label.
    pub fn label_counts(&self) -> Vec<(Label, usize)> {
        Label::ALL
            .iter()
            .map(|&l| (l, self.labels.iter().filter(|&&x| x == l).count()))
            .filter(|&(_, c)| c > 0)
            .collect()
    }

    /// Epochs per mapped class, in NS, LD, HD order.
    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for l in &self.labels {
            counts[l.class().index()] += 1;
        }
        counts
    }

    /// New set containing the given epochs, in the given order.
    pub fn select(&self, indices: &[usize]) -> EpochSet {
        let (_, c, s) = self.data.dim();
        let mut data = Array3::zeros((indices.len(), c, s));
        let mut labels = Vec::with_capacity(indices.len());
        for (out_i, &i) in indices.iter().enumerate() {
            data.index_axis_mut(ndarray::Axis(0), out_i)
                .assign(&self.data.index_axis(ndarray::Axis(0), i));
            labels.push(self.labels[i]);
        }
        EpochSet { data, labels, fs: self.fs, layout: self.layout.clone() }
    }
}
