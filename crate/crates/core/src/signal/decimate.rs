//! Sample-rate reduction by plain subsampling.

use crate::error::{Error, Result};
use crate::signal::{Event, Recording};
use ndarray::Array2;

/// Keep every `factor`-th sample starting at index 0. The caller is expected
/// to have band-limited the signal below the new Nyquist first (the 1-50 Hz
/// band-pass in the standard chain). Marker onsets and durations are divided
/// by the factor (floor); the output length is `ceil(n / factor)`.
pub fn decimate(rec: &Recording, factor: usize) -> Result<Recording> {
    if factor == 0 {
        return Err(Error::InvalidArgument("decimation factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(rec.clone());
    }
    let n_in = rec.n_samples();
    let n_out = n_in.div_ceil(factor);
    let mut data = Array2::zeros((rec.n_channels(), n_out));
    for (mut out_row, in_row) in data.rows_mut().into_iter().zip(rec.data().rows()) {
        for (j, dst) in out_row.iter_mut().enumerate() {
            *dst = in_row[j * factor];
        }
    }
    let markers: Vec<Event> = rec
        .markers()
        .iter()
        .map(|e| Event::new(e.onset / factor, e.duration / factor, e.label))
        .collect();
    Recording::new(data, rec.fs() / factor as f64, rec.layout().clone(), markers)
}
