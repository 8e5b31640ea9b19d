//! Segmentation of marked recordings into fixed-length epochs, and random
//! undersampling to balance the NS/LD/HD classes.

use crate::error::{Error, Result};
use crate::signal::{Class, EpochSet, Label, Recording};
use ndarray::{Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Segmentation result. `short_events` counts events too short for even a
/// single window; an entirely empty result is not an error, just a warning
/// the caller can act on.
#[derive(Debug)]
pub struct Segmented {
    pub epochs: EpochSet,
    pub short_events: usize,
}

impl Segmented {
    pub fn is_empty(&self) -> bool {
        self.epochs.n_epochs() == 0
    }
}

/// Cut each event into consecutive windows of `window_s` seconds advancing
/// by `window_s - overlap_s`. Windows lie fully inside their event span;
/// incomplete trailing windows are discarded. Epoch labels are the raw event
/// labels (the NS/LD/HD mapping is a property of [`Label::class`]).
pub fn segment_epochs(rec: &Recording, window_s: f64, overlap_s: f64) -> Result<Segmented> {
    if !(window_s > 0.0) {
        return Err(Error::InvalidArgument(format!("window must be positive, got {window_s} s")));
    }
    if !(0.0..window_s).contains(&overlap_s) {
        return Err(Error::InvalidArgument(format!(
            "overlap must satisfy 0 <= overlap < window, got {overlap_s} s"
        )));
    }
    if rec.markers().is_empty() {
        return Err(Error::InvalidArgument("recording has no event markers".into()));
    }

    let win = (window_s * rec.fs()).round() as usize;
    let hop = ((window_s - overlap_s) * rec.fs()).round() as usize;
    if win == 0 || hop == 0 {
        return Err(Error::InvalidArgument(format!(
            "window/hop of {window_s}/{overlap_s} s rounds to zero samples at fs = {}",
            rec.fs()
        )));
    }

    let mut starts: Vec<(usize, Label)> = Vec::new();
    let mut short_events = 0usize;
    for ev in rec.markers() {
        if ev.duration < win {
            short_events += 1;
            continue;
        }
        let n_win = (ev.duration - win) / hop + 1;
        for w in 0..n_win {
            starts.push((ev.onset + w * hop, ev.label));
        }
    }

    let n_ch = rec.n_channels();
    let mut data = Array3::zeros((starts.len(), n_ch, win));
    let mut labels = Vec::with_capacity(starts.len());
    let rec_data = rec.data();
    for (e, &(start, label)) in starts.iter().enumerate() {
        let slab = rec_data.slice(ndarray::s![.., start..start + win]);
        data.index_axis_mut(Axis(0), e).assign(&slab);
        labels.push(label);
    }

    let epochs = EpochSet::new(data, labels, rec.fs(), rec.layout().clone())?;
    Ok(Segmented { epochs, short_events })
}

/// Random undersampling without replacement of every class down to the
/// minimum class count. The relative order of retained epochs is preserved
/// and the selection is deterministic for a given seed.
pub fn balance_classes(epochs: &EpochSet, seed: u64) -> Result<EpochSet> {
    let classes = epochs.classes();
    let mut per_class: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (i, c) in classes.iter().enumerate() {
        per_class[c.index()].push(i);
    }
    for (ci, indices) in per_class.iter().enumerate() {
        if indices.is_empty() {
            return Err(Error::EmptyClass(Class::ALL[ci]));
        }
    }
    let target = per_class.iter().map(Vec::len).min().unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = Vec::with_capacity(3 * target);
    for indices in per_class.iter_mut() {
        // Partial Fisher-Yates: the first `target` slots are a uniform
        // sample without replacement.
        for i in 0..target {
            let j = i + rand::Rng::random_range(&mut rng, 0..indices.len() - i);
            indices.swap(i, j);
        }
        keep.extend_from_slice(&indices[..target]);
    }
    keep.sort_unstable();
    Ok(epochs.select(&keep))
}
