//! Parameter checkpoints: a JSON header describing the node list and
//! parameter shapes, plus a raw little-endian f32 payload in declaration
//! order.

use super::graph::{Graph, OpKind};
use super::tensor::Scalar;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct ParamInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct NodeInfo {
    name: String,
    kind: OpKind,
    out_shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    nodes: Vec<NodeInfo>,
    params: Vec<ParamInfo>,
    seed: u64,
    mode: String,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    let mut header = stem.as_os_str().to_owned();
    header.push(".json");
    let mut payload = stem.as_os_str().to_owned();
    payload.push(".bin");
    (PathBuf::from(header), PathBuf::from(payload))
}

fn describe<S: Scalar>(graph: &Graph<S>) -> (Vec<NodeInfo>, Vec<ParamInfo>) {
    let nodes = graph
        .nodes()
        .iter()
        .map(|n| NodeInfo {
            name: n.name.clone(),
            kind: n.op.kind(),
            out_shape: n.out_shape.clone(),
        })
        .collect();
    let params = graph
        .param_layout()
        .into_iter()
        .map(|(node, param, shape)| ParamInfo { name: format!("{node}.{param}"), shape })
        .collect();
    (nodes, params)
}

pub fn save<S: Scalar>(graph: &Graph<S>, stem: &Path) -> Result<()> {
    let (header_path, payload_path) = paths(stem);
    let (nodes, params) = describe(graph);
    let header = CheckpointHeader {
        nodes,
        params,
        seed: graph.init_seed(),
        mode: format!("f{}", S::BITS),
    };
    std::fs::write(&header_path, serde_json::to_vec_pretty(&header)?)?;
    let mut w = BufWriter::new(std::fs::File::create(&payload_path)?);
    for v in graph.params_flat() {
        w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Load parameters into a structurally identical graph.
pub fn load<S: Scalar>(graph: &mut Graph<S>, stem: &Path) -> Result<()> {
    let (header_path, payload_path) = paths(stem);
    let header: CheckpointHeader = serde_json::from_slice(&std::fs::read(&header_path)?)?;
    let (nodes, params) = describe(graph);
    if header.nodes != nodes || header.params != params {
        return Err(Error::MalformedFile {
            path: header_path.display().to_string(),
            reason: "checkpoint structure does not match the graph".into(),
        });
    }
    let mut bytes = Vec::new();
    std::fs::File::open(&payload_path)?.read_to_end(&mut bytes)?;
    let expected = graph.num_params() * 4;
    if bytes.len() != expected {
        return Err(Error::MalformedFile {
            path: payload_path.display().to_string(),
            reason: format!("payload is {} bytes, expected {expected}", bytes.len()),
        });
    }
    let values: Vec<S> = bytes
        .chunks_exact(4)
        .map(|c| S::from_f64(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    graph.set_params_flat(&values);
    Ok(())
}
