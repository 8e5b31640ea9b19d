//! On-disk formats for recordings and epoch sets: a JSON header next to a
//! raw little-endian f32 payload.
//!
//! A stem `out/subject0` names the pair `out/subject0.json` and
//! `out/subject0.bin`. Recordings are channel-major; epoch sets are
//! epoch-major `[n_epochs x n_channels x n_samples]` and carry a labels
//! array in the header.

use crate::error::{Error, Result};
use crate::signal::{Channel, ChannelKind, ChannelLayout, EpochSet, Event, Label, Recording};
use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize, Deserialize)]
struct ChannelEntry {
    name: String,
    kind: ChannelKind,
    x: f64,
    y: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct MarkerEntry {
    onset: usize,
    duration: usize,
    label: Label,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordingHeader {
    fs: f64,
    channels: Vec<ChannelEntry>,
    markers: Vec<MarkerEntry>,
    dtype: String,
    order: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct EpochsHeader {
    fs: f64,
    channels: Vec<ChannelEntry>,
    labels: Vec<Label>,
    dtype: String,
    order: String,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    let mut header = stem.as_os_str().to_owned();
    header.push(".json");
    let mut payload = stem.as_os_str().to_owned();
    payload.push(".bin");
    (PathBuf::from(header), PathBuf::from(payload))
}

fn channel_entries(layout: &ChannelLayout) -> Vec<ChannelEntry> {
    layout
        .channels()
        .iter()
        .map(|c| ChannelEntry { name: c.name.clone(), kind: c.kind, x: c.pos.0, y: c.pos.1 })
        .collect()
}

fn layout_from_entries(entries: &[ChannelEntry]) -> Result<ChannelLayout> {
    ChannelLayout::new(
        entries
            .iter()
            .map(|e| Channel { name: e.name.clone(), kind: e.kind, pos: (e.x, e.y) })
            .collect(),
    )
}

fn write_payload<'a>(path: &Path, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for &v in values {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_payload(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != expected * 4 {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: format!("payload is {} bytes, expected {}", bytes.len(), expected * 4),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub fn write_recording(rec: &Recording, stem: &Path) -> Result<()> {
    let (header_path, payload_path) = paths(stem);
    let header = RecordingHeader {
        fs: rec.fs(),
        channels: channel_entries(rec.layout()),
        markers: rec
            .markers()
            .iter()
            .map(|e| MarkerEntry { onset: e.onset, duration: e.duration, label: e.label })
            .collect(),
        dtype: "f32le".into(),
        order: "channel-major".into(),
    };
    std::fs::write(&header_path, serde_json::to_vec_pretty(&header)?)?;
    write_payload(&payload_path, rec.data().iter())
}

pub fn read_recording(stem: &Path) -> Result<Recording> {
    let (header_path, payload_path) = paths(stem);
    let header: RecordingHeader =
        serde_json::from_slice(&std::fs::read(&header_path)?)?;
    if header.dtype != "f32le" || header.order != "channel-major" {
        return Err(Error::MalformedFile {
            path: header_path.display().to_string(),
            reason: format!("unsupported dtype/order {}/{}", header.dtype, header.order),
        });
    }
    let layout = layout_from_entries(&header.channels)?;
    let n_ch = layout.len();
    if n_ch == 0 {
        return Err(Error::MalformedFile {
            path: header_path.display().to_string(),
            reason: "no channels".into(),
        });
    }
    let bytes = std::fs::metadata(&payload_path)?.len() as usize;
    let n_samples = bytes / 4 / n_ch;
    let values = read_payload(&payload_path, n_ch * n_samples)?;
    let data = Array2::from_shape_vec((n_ch, n_samples), values)
        .expect("shape follows from payload length");
    let markers: Vec<Event> = header
        .markers
        .iter()
        .map(|m| Event::new(m.onset, m.duration, m.label))
        .collect();
    Recording::new(data, header.fs, layout, markers)
}

pub fn write_epochs(epochs: &EpochSet, stem: &Path) -> Result<()> {
    let (header_path, payload_path) = paths(stem);
    let header = EpochsHeader {
        fs: epochs.fs(),
        channels: channel_entries(epochs.layout()),
        labels: epochs.labels().to_vec(),
        dtype: "f32le".into(),
        order: "epoch-major".into(),
    };
    std::fs::write(&header_path, serde_json::to_vec_pretty(&header)?)?;
    write_payload(&payload_path, epochs.data().iter())
}

pub fn read_epochs(stem: &Path) -> Result<EpochSet> {
    let (header_path, payload_path) = paths(stem);
    let header: EpochsHeader = serde_json::from_slice(&std::fs::read(&header_path)?)?;
    if header.dtype != "f32le" || header.order != "epoch-major" {
        return Err(Error::MalformedFile {
            path: header_path.display().to_string(),
            reason: format!("unsupported dtype/order {}/{}", header.dtype, header.order),
        });
    }
    let layout = layout_from_entries(&header.channels)?;
    let n_ch = layout.len();
    let n_epochs = header.labels.len();
    if n_ch == 0 || n_epochs == 0 {
        return Err(Error::MalformedFile {
            path: header_path.display().to_string(),
            reason: "empty channel list or labels".into(),
        });
    }
    let bytes = std::fs::metadata(&payload_path)?.len() as usize;
    let n_samples = bytes / 4 / n_ch / n_epochs;
    let values = read_payload(&payload_path, n_epochs * n_ch * n_samples)?;
    let data = Array3::from_shape_vec((n_epochs, n_ch, n_samples), values)
        .expect("shape follows from payload length");
    EpochSet::new(data, header.labels, header.fs, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::standard_layout;
    use ndarray::Array3;

    #[test]
    fn recording_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("rec");
        let layout = standard_layout();
        // f32-representable values survive the round trip exactly.
        let data = Array2::from_shape_fn((layout.len(), 50), |(c, j)| (c as f64) + (j as f64) * 0.5);
        let markers = vec![Event::new(0, 30, Label::Level1), Event::new(30, 20, Label::RestPost)];
        let rec = Recording::new(data, 1000.0, layout, markers).unwrap();
        write_recording(&rec, &stem).unwrap();
        let back = read_recording(&stem).unwrap();
        assert_eq!(back.fs(), 1000.0);
        assert_eq!(back.layout(), rec.layout());
        assert_eq!(back.markers(), rec.markers());
        assert_eq!(back.data(), rec.data());
    }

    #[test]
    fn epochs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("ep");
        let layout = standard_layout();
        let data = Array3::from_shape_fn((6, layout.len(), 10), |(e, c, j)| {
            (e * 1000 + c * 10 + j) as f64
        });
        let labels = vec![
            Label::Level1,
            Label::Level2,
            Label::Level3,
            Label::RestPost,
            Label::RestInterSession,
            Label::Level1,
        ];
        let epochs = EpochSet::new(data, labels, 100.0, layout).unwrap();
        write_epochs(&epochs, &stem).unwrap();
        let back = read_epochs(&stem).unwrap();
        assert_eq!(back.labels(), epochs.labels());
        assert_eq!(back.data(), epochs.data());
        assert_eq!(back.fs(), 100.0);
    }

    #[test]
    fn rewriting_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let layout = standard_layout();
        let data = Array2::from_shape_fn((layout.len(), 40), |(c, j)| ((c * 41 + j) % 17) as f64);
        let rec = Recording::new(data, 1000.0, layout, vec![]).unwrap();
        let (stem_a, stem_b) = (dir.path().join("a"), dir.path().join("b"));
        write_recording(&rec, &stem_a).unwrap();
        write_recording(&rec, &stem_b).unwrap();
        for ext in ["json", "bin"] {
            let a = std::fs::read(dir.path().join(format!("a.{ext}"))).unwrap();
            let b = std::fs::read(dir.path().join(format!("b.{ext}"))).unwrap();
            assert_eq!(a, b, "{ext} files differ");
        }
    }

    #[test]
    fn truncated_payload_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("bad");
        let layout = standard_layout();
        let data = Array2::zeros((layout.len(), 10));
        let rec = Recording::new(data, 1000.0, layout, vec![]).unwrap();
        write_recording(&rec, &stem).unwrap();
        let bin = dir.path().join("bad.bin");
        let bytes = std::fs::read(&bin).unwrap();
        std::fs::write(&bin, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_recording(&stem).is_err());
    }
}
